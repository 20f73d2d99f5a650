"""Machine-to-machine spectral calibration for ultrasound RF classifiers.

A classifier trained on one machine's RF patches collapses on another
machine's data; this package estimates the per-depth spectral transfer
function between two machines from calibration-phantom scans and applies it
(at train time or test time) to restore cross-machine performance.  It ships
a two-machine simulator, a small MLP classifier, and an experiment-matrix
CLI that demonstrates the effect end to end.
"""

from . import _kernels, calibrate, cli, dsp, experiment, learn, rf, simulate
from ._kernels import NUMBA_ENABLED, backend_name
from .calibrate import (
    Direction,
    TransferFunction,
    WienerConfig,
    amplitude_ratio,
    apply_transfer_function,
    apply_transfer_function_batch,
    build_transfer_function,
    load_tf,
    save_tf,
    transfer_from_psds,
    wiener_regularize,
)
from .dsp import (
    DEFAULT_FFT_SIZE,
    DepthSegmentedPSD,
    ResamplerSpec,
    Window,
    design_multirate_fir,
    inverse_real_fft,
    periodogram,
    real_fft,
    resample,
    resample_columns,
    welch_psd,
)
from .errors import M2MError
from .experiment import (
    CalibrationMode,
    ExperimentContext,
    ExperimentSpec,
    ResultRow,
    StatsRegime,
    matrix_specs,
    run_experiment,
    run_matrix,
)
from .learn import (
    AdamState,
    Metrics,
    MLPModel,
    RepetitionReport,
    TrainConfig,
    adam_step,
    auc_score,
    evaluate,
    forward,
    init_model,
    load_model,
    loss_and_grads,
    repeat_experiment,
    save_model,
    train,
)
from .rf import (
    COMMON_RATE_HZ,
    Acquisition,
    MachineId,
    NormStats,
    Patch,
    PatchGridSpec,
    PhantomId,
    RFFrame,
    StatsProvenance,
    compute_norm_stats,
    extract_patches,
    horizontal_flip,
    normalize,
    read_dataset,
    write_dataset,
)
from .simulate import (
    CALIB_PHANTOM_1,
    CALIB_PHANTOM_2,
    CLASS_A_PHANTOM,
    CLASS_B_PHANTOM,
    TEST_MACHINE,
    TRAIN_MACHINE,
    MachineProfile,
    PhantomProfile,
    SimConfig,
    acquire_freehand,
    acquire_stable,
    gen_reflectivity,
    pulse_waveform,
    scan,
)

__version__ = "0.1.0"
