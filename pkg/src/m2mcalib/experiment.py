"""Calibration-mode x normalization-statistics experiment matrix.

One experiment cell fixes a calibration mode (train-time, test-time, or
none), a normalization-statistics regime for inference, a calibration
phantom, an acquisition style, and an SNR, then trains the classifier over
several seeded repetitions and reports mean/std accuracy and AUC.

Training inputs depend only on the mode (and, for train-time, on the
transfer function), never on the statistics regime, so an
ExperimentContext memoizes trained models across cells that share them.
Repetition seeds are spec.seed .. spec.seed + n - 1 for every cell, which
keeps the whole matrix a pure function of (datasets, seed) and makes a
gains==1 transfer function reduce each calibrated mode bit-exactly to the
uncalibrated one.
"""

from __future__ import annotations

import enum
import struct
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

from . import calibrate, learn
from .calibrate import Direction, TransferFunction, WienerConfig
from .dsp import welch_psd
from .errors import IncompatibleDatasets, InvalidConfig, IoError
from .rf import (
    Acquisition,
    NormStats,
    PatchGridSpec,
    PhantomId,
    StatsProvenance,
    compute_norm_stats,
    extract_patches,
    read_dataset,
)


class CalibrationMode(enum.IntEnum):
    TRAIN_TIME = 0
    TEST_TIME = 1
    NONE = 2


# the inference-time statistics regime reuses the provenance enum: the
# regime names exactly the dataset whose mean/std patch is used
StatsRegime = StatsProvenance

MODE_NAMES = {
    CalibrationMode.TRAIN_TIME: "train_time",
    CalibrationMode.TEST_TIME: "test_time",
    CalibrationMode.NONE: "none",
}
STATS_NAMES = {
    StatsRegime.TRAIN_STATS: "train",
    StatsRegime.CALIBRATED_STATS: "calibrated",
    StatsRegime.TEST_STATS: "test",
}
PHANTOM_NAMES = {PhantomId.CALIB1: "calib1", PhantomId.CALIB2: "calib2"}
ACQ_NAMES = {Acquisition.STABLE: "stable", Acquisition.FREEHAND: "freehand"}

# dataset file layout produced by the simulate command
TRAIN_CLASS_A = "train_class_a.rf"
TRAIN_CLASS_B = "train_class_b.rf"
TEST_CLASS_A = "test_class_a.rf"
TEST_CLASS_B = "test_class_b.rf"


def calib_file(phantom: PhantomId, acquisition: Acquisition, side: str) -> str:
    return f"{PHANTOM_NAMES[phantom]}_{ACQ_NAMES[acquisition]}_{side}.rf"


@dataclass(frozen=True)
class ExperimentSpec:
    calibration_mode: CalibrationMode
    stats_regime: StatsRegime
    calib_phantom: PhantomId = PhantomId.CALIB1
    calib_acquisition: Acquisition = Acquisition.STABLE
    snr: float = 100.0
    n_repetitions: int = 10
    data_dir: str = "data"
    seed: int = 0

    def __post_init__(self):
        if self.n_repetitions < 1:
            raise InvalidConfig("n_repetitions must be >= 1")
        if self.snr <= 0:
            raise InvalidConfig("snr must be > 0")
        if self.calib_phantom not in (PhantomId.CALIB1, PhantomId.CALIB2):
            raise InvalidConfig("calibration phantom must be calib1 or calib2")


@dataclass(frozen=True)
class ResultRow:
    mode: str
    stats: str
    calib_phantom: str
    acquisition: str
    snr: float
    mean_acc: float
    std_acc: float
    mean_auc: float
    std_auc: float
    n_reps: int

    def __post_init__(self):
        for v in (self.mean_acc, self.std_acc, self.mean_auc, self.std_auc):
            if not (0.0 <= v <= 1.0):
                raise InvalidConfig("metrics must lie in [0, 1]")


CSV_HEADER = (
    "mode,stats,calib_phantom,acquisition,snr,"
    "mean_acc,std_acc,mean_auc,std_auc,n_reps"
)


def _snr_bits(snr: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", snr))[0]


def _read_frames(data_dir, name):
    path = Path(data_dir) / name
    if not path.exists():
        raise IoError(f"missing dataset file: {path}")
    return read_dataset(path)


class ExperimentContext:
    """Shared, memoized state for one or many experiment cells.

    Loads the classification patches once, and caches calibration PSDs,
    transfer functions, calibrated-patch statistics, and trained models so
    that matrix cells sharing training inputs reuse them.  All caches are
    keyed by values (phantom, acquisition, snr bits, seed), never by cell
    order, so results are independent of scheduling.
    """

    def __init__(
        self,
        data_dir,
        grid: PatchGridSpec | None = None,
        train_cfg: learn.TrainConfig | None = None,
    ):
        self.data_dir = Path(data_dir)
        self.grid = grid or PatchGridSpec()
        self.train_cfg = train_cfg
        self._train_patches = None
        self._test_patches = None
        self._raw_train_stats = None
        self._raw_test_stats = None
        self._psds = {}  # (phantom, acq) -> (psd_train, psd_test)
        self._tfs = {}  # (phantom, acq, direction, snr bits) -> TransferFunction
        self._cal_train_stats = {}  # (phantom, acq, snr bits) -> NormStats
        self._cal_test_stats = {}  # (phantom, acq, snr bits) -> NormStats
        self._cal_test = OrderedDict()  # (phantom, acq, snr bits) -> patches, LRU
        self._models = {}  # training identity -> list[MLPModel]
        self._matrices = OrderedDict()  # (data id, stats id) -> (x, y), LRU

    # -- classification data ------------------------------------------------

    def _load_classification(self):
        if self._train_patches is not None:
            return
        sets = {}
        rates = set()
        for name in (TRAIN_CLASS_A, TRAIN_CLASS_B, TEST_CLASS_A, TEST_CLASS_B):
            frames = _read_frames(self.data_dir, name)
            rates.add(frames[0].sample_rate_hz)
            patches = []
            for fr in frames:
                patches.extend(extract_patches(fr, self.grid))
            sets[name] = patches
        if len(rates) != 1:
            raise IncompatibleDatasets(f"mixed sample rates across datasets: {rates}")
        self._train_patches = sets[TRAIN_CLASS_A] + sets[TRAIN_CLASS_B]
        self._test_patches = sets[TEST_CLASS_A] + sets[TEST_CLASS_B]
        self._raw_train_stats = compute_norm_stats(
            self._train_patches, provenance=StatsProvenance.TRAIN_STATS
        )
        self._raw_test_stats = compute_norm_stats(
            self._test_patches, provenance=StatsProvenance.TEST_STATS
        )

    @property
    def train_patches(self):
        self._load_classification()
        return self._train_patches

    @property
    def test_patches(self):
        self._load_classification()
        return self._test_patches

    @property
    def raw_train_stats(self) -> NormStats:
        self._load_classification()
        return self._raw_train_stats

    @property
    def raw_test_stats(self) -> NormStats:
        self._load_classification()
        return self._raw_test_stats

    # -- calibration --------------------------------------------------------

    def calibration_psds(self, phantom: PhantomId, acquisition: Acquisition):
        key = (phantom, acquisition)
        if key not in self._psds:
            train_frames = _read_frames(self.data_dir, calib_file(phantom, acquisition, "train"))
            test_frames = _read_frames(self.data_dir, calib_file(phantom, acquisition, "test"))
            if train_frames[0].sample_rate_hz != test_frames[0].sample_rate_hz:
                raise IncompatibleDatasets("calibration pair disagrees on sample rate")
            psd_train = welch_psd(train_frames, self.grid)
            psd_test = welch_psd(test_frames, self.grid)
            self._psds[key] = (psd_train, psd_test, min(len(train_frames), len(test_frames)))
        return self._psds[key]

    def transfer(
        self,
        phantom: PhantomId,
        acquisition: Acquisition,
        direction: Direction,
        snr: float,
    ) -> TransferFunction:
        key = (phantom, acquisition, direction, _snr_bits(snr))
        if key not in self._tfs:
            psd_train, psd_test, n_frames = self.calibration_psds(phantom, acquisition)
            self._tfs[key] = calibrate.transfer_from_psds(
                psd_train, psd_test, WienerConfig(snr=snr), direction, n_frames
            )
        return self._tfs[key]

    def calibrated_train_stats(
        self, phantom: PhantomId, acquisition: Acquisition, snr: float
    ) -> NormStats:
        """Statistics of the forward-calibrated training set."""
        key = (phantom, acquisition, _snr_bits(snr))
        if key not in self._cal_train_stats:
            tf = self.transfer(phantom, acquisition, Direction.FORWARD, snr)
            calibrated = calibrate.apply_transfer_function_batch(self.train_patches, tf)
            self._cal_train_stats[key] = compute_norm_stats(
                calibrated, provenance=StatsProvenance.CALIBRATED_STATS
            )
        return self._cal_train_stats[key]

    def calibrated_test(self, phantom: PhantomId, acquisition: Acquisition, snr: float):
        """Inverse-calibrated test patches plus their statistics.

        Patch lists are large, so only the most recent few are kept; the
        statistics are small and cached indefinitely.
        """
        key = (phantom, acquisition, _snr_bits(snr))
        if key not in self._cal_test:
            tf = self.transfer(phantom, acquisition, Direction.INVERSE, snr)
            self._cal_test[key] = calibrate.apply_transfer_function_batch(self.test_patches, tf)
            while len(self._cal_test) > 2:
                self._cal_test.popitem(last=False)
        else:
            self._cal_test.move_to_end(key)
        patches = self._cal_test[key]
        if key not in self._cal_test_stats:
            self._cal_test_stats[key] = compute_norm_stats(
                patches, provenance=StatsProvenance.CALIBRATED_STATS
            )
        return patches, self._cal_test_stats[key]

    # -- design matrices ------------------------------------------------------

    def _matrix(self, data_key, patches, stats_key, stats):
        """Normalized (x, y) for (patches, stats), LRU-cached by identity.

        Eval matrices recur across matrix cells (the same raw test set under
        several statistics regimes); a small LRU covers one table's worth
        without holding every combination in memory.
        """
        key = (data_key, stats_key)
        if key not in self._matrices:
            self._matrices[key] = learn.design_matrix(patches, stats)
            while len(self._matrices) > 6:
                self._matrices.popitem(last=False)
        else:
            self._matrices.move_to_end(key)
        return self._matrices[key]

    # -- training -----------------------------------------------------------

    def _training_identity(self, spec: ExperimentSpec):
        if spec.calibration_mode == CalibrationMode.TRAIN_TIME:
            return (
                "train_time",
                spec.calib_phantom,
                spec.calib_acquisition,
                _snr_bits(spec.snr),
                spec.n_repetitions,
                spec.seed,
            )
        # test-time and uncalibrated modes both train on the raw training
        # set with its own statistics, so they share one model list
        return ("raw", spec.n_repetitions, spec.seed)

    def models_for(self, spec: ExperimentSpec):
        """Models for repetition seeds spec.seed .. spec.seed + n - 1."""
        key = self._training_identity(spec)
        if key not in self._models:
            cfg = self.train_cfg or learn.TrainConfig(seed=spec.seed)
            if spec.calibration_mode == CalibrationMode.TRAIN_TIME:
                where = (spec.calib_phantom, spec.calib_acquisition, _snr_bits(spec.snr))
                tf = self.transfer(
                    spec.calib_phantom, spec.calib_acquisition, Direction.FORWARD, spec.snr
                )
                data = calibrate.apply_transfer_function_batch(self.train_patches, tf)
                stats = compute_norm_stats(
                    data, provenance=StatsProvenance.CALIBRATED_STATS
                )
                self._cal_train_stats.setdefault(where, stats)
            else:
                data = self.train_patches
                stats = self.raw_train_stats
            # training matrices are only reused within this identity's
            # repetitions, so they stay local instead of entering the cache
            x, y = learn.design_matrix(data, stats)
            rows, cols = self.grid.axial_patch, self.grid.lateral_patch
            models = [
                learn._train_matrix(
                    spec.seed + i, x, y, cfg, learn.DEFAULT_HIDDEN, rows, cols
                )
                for i in range(spec.n_repetitions)
            ]
            self._models[key] = models
        return self._models[key]


def _eval_inputs(spec: ExperimentSpec, ctx: ExperimentContext):
    """The patch set and statistics the classifier sees at inference.

    Returns (data_key, patches, stats_key, stats); the keys name the
    inputs by value so contexts can cache the normalized matrices.
    """
    mode, regime = spec.calibration_mode, spec.stats_regime
    where = (spec.calib_phantom, spec.calib_acquisition, spec.snr)
    where_key = (spec.calib_phantom, spec.calib_acquisition, _snr_bits(spec.snr))
    if mode == CalibrationMode.TEST_TIME:
        patches, cal_stats = ctx.calibrated_test(*where)
        data_key = ("cal_test",) + where_key
    else:
        patches = ctx.test_patches
        cal_stats = None
        data_key = ("raw_test",)

    if regime == StatsRegime.TRAIN_STATS:
        stats, stats_key = ctx.raw_train_stats, ("raw_train",)
    elif regime == StatsRegime.TEST_STATS:
        stats, stats_key = ctx.raw_test_stats, ("raw_test",)
    elif mode == CalibrationMode.TEST_TIME:
        # statistics of the inverse-calibrated test set itself
        stats, stats_key = cal_stats, ("cal_test",) + where_key
    else:
        # calibrated statistics: the forward-calibrated training set
        stats, stats_key = ctx.calibrated_train_stats(*where), ("cal_train",) + where_key
    return data_key, patches, stats_key, stats


def run_experiment(spec: ExperimentSpec, ctx: ExperimentContext | None = None) -> ResultRow:
    """Run one cell: train (memoized) per repetition, evaluate, aggregate."""
    ctx = ctx or ExperimentContext(spec.data_dir)
    models = ctx.models_for(spec)
    x, y = ctx._matrix(*_eval_inputs(spec, ctx))

    def run_one(seed: int) -> learn.Metrics:
        return learn._evaluate_matrix(models[seed - spec.seed], x, y)

    report = learn.repeat_experiment(run_one, spec.n_repetitions, spec.seed)
    return ResultRow(
        mode=MODE_NAMES[spec.calibration_mode],
        stats=STATS_NAMES[spec.stats_regime],
        calib_phantom=PHANTOM_NAMES[spec.calib_phantom],
        acquisition=ACQ_NAMES[spec.calib_acquisition],
        snr=spec.snr,
        mean_acc=report.mean_accuracy,
        std_acc=report.std_accuracy,
        mean_auc=report.mean_auc,
        std_auc=report.std_auc,
        n_reps=report.n_repetitions,
    )


# best inference-statistics regime per calibrated mode, used by the
# phantom and acquisition ablation tables
BEST_REGIME = {
    CalibrationMode.TRAIN_TIME: StatsRegime.TEST_STATS,
    CalibrationMode.TEST_TIME: StatsRegime.CALIBRATED_STATS,
}


def matrix_specs(data_dir, seed: int = 0, snr: float = 100.0, n_repetitions: int = 10):
    """The three tables' cell lists: 9 mode x stats, 4 phantom, 4 acquisition."""
    base = dict(data_dir=str(data_dir), seed=seed, snr=snr, n_repetitions=n_repetitions)
    table_modes = (
        [
            ExperimentSpec(calibration_mode=m, stats_regime=s, **base)
            for m in (CalibrationMode.TRAIN_TIME, CalibrationMode.TEST_TIME, CalibrationMode.NONE)
            for s in (StatsRegime.TRAIN_STATS, StatsRegime.CALIBRATED_STATS, StatsRegime.TEST_STATS)
        ]
    )
    table_phantoms = [
        ExperimentSpec(
            calibration_mode=m, stats_regime=BEST_REGIME[m], calib_phantom=p, **base
        )
        for m in (CalibrationMode.TRAIN_TIME, CalibrationMode.TEST_TIME)
        for p in (PhantomId.CALIB1, PhantomId.CALIB2)
    ]
    table_acquisitions = [
        ExperimentSpec(
            calibration_mode=m, stats_regime=BEST_REGIME[m], calib_acquisition=a, **base
        )
        for m in (CalibrationMode.TRAIN_TIME, CalibrationMode.TEST_TIME)
        for a in (Acquisition.STABLE, Acquisition.FREEHAND)
    ]
    return table_modes, table_phantoms, table_acquisitions


def run_matrix(data_dir, seed: int = 0, snr: float = 100.0, n_repetitions: int = 10):
    """Run all three tables with full sharing; returns three ResultRow lists."""
    ctx = ExperimentContext(data_dir)
    cell_cache: dict[ExperimentSpec, ResultRow] = {}

    def cell(spec: ExperimentSpec) -> ResultRow:
        if spec not in cell_cache:
            cell_cache[spec] = run_experiment(spec, ctx)
        return cell_cache[spec]

    tables = matrix_specs(data_dir, seed=seed, snr=snr, n_repetitions=n_repetitions)
    return tuple([cell(s) for s in specs] for specs in tables)


def format_row(row: ResultRow) -> str:
    """One CSV line, dot-decimal, metrics at 4 decimals."""
    return (
        f"{row.mode},{row.stats},{row.calib_phantom},{row.acquisition},"
        f"{row.snr:.4f},{row.mean_acc:.4f},{row.std_acc:.4f},"
        f"{row.mean_auc:.4f},{row.std_auc:.4f},{row.n_reps}"
    )
