"""Synthetic two-machine RF acquisition.

Frames are built per lateral line as (attenuation envelope x reflectivity)
convolved with the machine's pulse at its native rate, focal-gain shaped,
noise-corrupted, and resampled to the common 40 MHz grid.  Everything is a
pure function of (profiles, dims, seed): stable acquisition shares one
tissue realization between machines, free-hand draws a fresh one per frame.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .dsp import ResamplerSpec, design_multirate_fir, resample_columns
from .errors import InvalidConfig
from .rf import COMMON_RATE_HZ, Acquisition, MachineId, PhantomId, RFFrame


@dataclass(frozen=True)
class MachineProfile:
    """Everything machine-dependent about the echo path."""

    center_freq_hz: float
    fractional_bandwidth: float  # -6 dB spectral FWHM / center frequency
    gain: float
    native_rate_hz: float
    focal_depth_samples: int  # at the 40 MHz grid
    focal_gain_width_samples: float
    focal_gain_db: float
    noise_std: float  # additive white noise, post-convolution
    ident: MachineId = MachineId.TRAIN

    def __post_init__(self):
        if not (0 < self.center_freq_hz < self.native_rate_hz / 2):
            raise InvalidConfig("center frequency must sit below native Nyquist")
        if not (0 < self.fractional_bandwidth < 2):
            raise InvalidConfig("fractional bandwidth must be in (0, 2)")
        if self.noise_std < 0:
            raise InvalidConfig("noise_std must be >= 0")


@dataclass(frozen=True)
class PhantomProfile:
    """Everything substrate-dependent about the echo path."""

    echogenicity: float  # reflectivity std
    spectral_tilt_db_per_mhz: float  # first-order reflectivity spectral slope
    attenuation_db_per_cm_per_mhz: float  # one-way
    sound_speed_m_per_s: float = 1540.0  # nominal, for depth conversion only
    ident: PhantomId = PhantomId.CLASS_A

    def __post_init__(self):
        if self.echogenicity < 0:
            raise InvalidConfig("echogenicity must be >= 0")
        if self.attenuation_db_per_cm_per_mhz < 0:
            raise InvalidConfig("attenuation must be >= 0")


@dataclass(frozen=True)
class SimConfig:
    frame_axial: int = 2080  # at 40 MHz
    frame_lateral: int = 256
    seed: int = 0
    n_frames: int = 1

    def __post_init__(self):
        if self.frame_axial < 1 or self.frame_lateral < 1:
            raise InvalidConfig("frame dims must be positive")


# Presets. The 9 MHz/40 MHz machine is the training side, the 5 MHz/50 MHz
# machine the testing side; both focus at 2 cm (sample 1040 at 40 MHz) with a
# +6 dB, 0.5 cm-wide gain bump.
TRAIN_MACHINE = MachineProfile(
    center_freq_hz=9e6,
    fractional_bandwidth=1.0,
    gain=1.0,
    native_rate_hz=40e6,
    focal_depth_samples=1040,
    focal_gain_width_samples=260.0,
    focal_gain_db=6.0,
    noise_std=1e-3,
    ident=MachineId.TRAIN,
)
TEST_MACHINE = MachineProfile(
    center_freq_hz=5e6,
    fractional_bandwidth=1.9,
    gain=0.13,
    native_rate_hz=50e6,
    focal_depth_samples=1040,
    focal_gain_width_samples=260.0,
    focal_gain_db=6.0,
    noise_std=5e-4,
    ident=MachineId.TEST,
)

CLASS_A_PHANTOM = PhantomProfile(
    echogenicity=1.0,
    spectral_tilt_db_per_mhz=0.0,
    attenuation_db_per_cm_per_mhz=0.4,
    ident=PhantomId.CLASS_A,
)
CLASS_B_PHANTOM = PhantomProfile(
    echogenicity=5.0,
    spectral_tilt_db_per_mhz=0.25,
    attenuation_db_per_cm_per_mhz=0.15,
    ident=PhantomId.CLASS_B,
)
CALIB_PHANTOM_1 = PhantomProfile(
    echogenicity=1.0,
    spectral_tilt_db_per_mhz=0.0,
    attenuation_db_per_cm_per_mhz=0.275,
    ident=PhantomId.CALIB1,
)
CALIB_PHANTOM_2 = PhantomProfile(
    echogenicity=1.0,
    spectral_tilt_db_per_mhz=0.75,
    attenuation_db_per_cm_per_mhz=0.45,
    ident=PhantomId.CALIB2,
)

MACHINE_PRESETS = {"train": TRAIN_MACHINE, "test": TEST_MACHINE}
PHANTOM_PRESETS = {
    "class_a": CLASS_A_PHANTOM,
    "class_b": CLASS_B_PHANTOM,
    "calib1": CALIB_PHANTOM_1,
    "calib2": CALIB_PHANTOM_2,
}


def pulse_waveform(machine: MachineProfile) -> np.ndarray:
    """Gaussian-modulated cosine at the native rate, even-symmetric.

    The Gaussian width is set so the -6 dB spectral FWHM equals
    fractional_bandwidth * center frequency; support is truncated at
    +/- 4 sigma, giving an odd tap count.
    """
    fc = machine.center_freq_hz
    fs = machine.native_rate_hz
    sigma_f = machine.fractional_bandwidth * fc / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    sigma_t = 1.0 / (2.0 * math.pi * sigma_f)
    half_n = int(math.ceil(4.0 * sigma_t * fs))
    t = np.arange(half_n + 1) / fs
    half = np.exp(-(t**2) / (2.0 * sigma_t**2)) * np.cos(2.0 * math.pi * fc * t)
    pulse = np.concatenate([half[:0:-1], half]) * machine.gain
    return pulse


def gen_reflectivity(
    phantom: PhantomProfile, axial: int, lateral: int, seed
) -> np.ndarray:
    """i.i.d. Gaussian scatterer field, optionally spectrally tilted.

    The tilt filter applies a 10^(tilt * f_MHz / 20) amplitude slope per
    column (frequencies on the 40 MHz grid), renormalized to preserve the
    expected total power so echogenicity keeps meaning field std.
    """
    if axial < 1 or lateral < 1:
        raise InvalidConfig("reflectivity dims must be positive")
    if phantom.echogenicity == 0:
        warnings.warn("echogenicity 0 produces an all-zero field", stacklevel=2)
    rng = np.random.default_rng(seed)
    field = rng.standard_normal((axial, lateral)) * phantom.echogenicity
    tilt = phantom.spectral_tilt_db_per_mhz
    if tilt != 0.0:
        freqs_mhz = np.fft.rfftfreq(axial, d=1.0 / COMMON_RATE_HZ) / 1e6
        g = 10.0 ** (tilt * freqs_mhz / 20.0)
        weights = np.full(len(g), 2.0)
        weights[0] = 1.0
        if axial % 2 == 0:
            weights[-1] = 1.0
        g /= math.sqrt(float(np.sum(weights * g**2)) / axial)  # unit power gain
        field = np.fft.irfft(np.fft.rfft(field, axis=0) * g[:, None], n=axial, axis=0)
    return field


@lru_cache(maxsize=8)
def _rate_converter(from_hz: int, to_hz: int) -> ResamplerSpec:
    g = math.gcd(from_hz, to_hz)
    return design_multirate_fir(to_hz // g, from_hz // g)


def _depth_cm(n_samples: int, rate_hz: float, sound_speed: float) -> np.ndarray:
    # two-way travel: depth = c * t / 2
    t = np.arange(n_samples) / rate_hz
    return sound_speed * t / 2.0 * 100.0


def scan(
    machine: MachineProfile,
    phantom: PhantomProfile,
    reflectivity: np.ndarray,
    seed,
    acquisition: Acquisition = Acquisition.FREEHAND,
    frame_index: int = 0,
) -> RFFrame:
    """Image one reflectivity realization (given on the 40 MHz grid).

    Pipeline per lateral line: attenuation envelope (at the machine center
    frequency), pulse convolution at the native rate, focal gain bump, white
    noise, then resampling back to 40 MHz when the native rate differs.
    """
    refl = np.asarray(reflectivity, dtype=np.float64)
    native = machine.native_rate_hz
    if native != COMMON_RATE_HZ:
        refl = resample_columns(
            refl, _rate_converter(int(round(COMMON_RATE_HZ)), int(round(native)))
        )
    n_native = refl.shape[0]
    depth = _depth_cm(n_native, native, phantom.sound_speed_m_per_s)

    att_db = (
        phantom.attenuation_db_per_cm_per_mhz
        * (machine.center_freq_hz / 1e6)
        * 2.0
        * depth
    )
    work = refl * (10.0 ** (-att_db / 20.0))[:, None]

    work = _kernels.conv_same_columns(work, pulse_waveform(machine))

    scale = native / COMMON_RATE_HZ
    nf = machine.focal_depth_samples * scale
    wf = machine.focal_gain_width_samples * scale
    idx = np.arange(n_native, dtype=np.float64)
    bump_db = machine.focal_gain_db * np.exp(-((idx - nf) ** 2) / (2.0 * wf**2))
    work *= (10.0 ** (bump_db / 20.0))[:, None]

    if machine.noise_std > 0:
        rng = np.random.default_rng(seed)
        work = work + rng.standard_normal(work.shape) * machine.noise_std

    if native != COMMON_RATE_HZ:
        work = resample_columns(
            work, _rate_converter(int(round(native)), int(round(COMMON_RATE_HZ)))
        )
    return RFFrame(
        samples=work,
        sample_rate_hz=COMMON_RATE_HZ,
        machine_id=machine.ident,
        phantom_id=phantom.ident,
        acquisition=acquisition,
        frame_index=frame_index,
    )


def acquire_stable(
    machine_a: MachineProfile,
    machine_b: MachineProfile,
    phantom: PhantomProfile,
    n_frames: int,
    seed,
    sim: SimConfig | None = None,
) -> tuple[list[RFFrame], list[RFFrame]]:
    """Clamped-transducer acquisition: one shared tissue realization.

    Both machines repeatedly image the same reflectivity; paired frames
    differ only in their (independent) noise draws.
    """
    if n_frames < 1:
        raise InvalidConfig("n_frames must be >= 1")
    sim = sim or SimConfig()
    root = np.random.SeedSequence(seed)
    refl_ss, noise_a_ss, noise_b_ss = root.spawn(3)
    refl = gen_reflectivity(phantom, sim.frame_axial, sim.frame_lateral, refl_ss)
    frames_a = [
        scan(machine_a, phantom, refl, s, Acquisition.STABLE, i)
        for i, s in enumerate(noise_a_ss.spawn(n_frames))
    ]
    frames_b = [
        scan(machine_b, phantom, refl, s, Acquisition.STABLE, i)
        for i, s in enumerate(noise_b_ss.spawn(n_frames))
    ]
    return frames_a, frames_b


def acquire_freehand(
    machine: MachineProfile,
    phantom: PhantomProfile,
    n_frames: int,
    seed,
    sim: SimConfig | None = None,
) -> list[RFFrame]:
    """Sweeping acquisition: an independent tissue realization per frame.

    Frame i's randomness comes from the counter-derived substream
    (seed, spawn_key=(i,)), so serial and parallel generation agree.
    """
    if n_frames < 1:
        raise InvalidConfig("n_frames must be >= 1")
    sim = sim or SimConfig()
    frames = []
    for i in range(n_frames):
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(i,))
        refl_ss, noise_ss = ss.spawn(2)
        refl = gen_reflectivity(phantom, sim.frame_axial, sim.frame_lateral, refl_ss)
        frames.append(scan(machine, phantom, refl, noise_ss, Acquisition.FREEHAND, i))
    return frames
