"""Machine-to-machine spectral transfer functions.

The spectral ratio between two machines' responses is estimated from
calibration-phantom scans on both, per depth segment, and regularized with a
noise-aware weighting before being applied to patches as a zero-phase filter.

With ``w(g) = g^-1 / (g^-2 + snr^-1)`` (so ``w(g) -> g`` as snr grows and
large ratios are suppressed once g exceeds sqrt(snr)):

* Forward gains are ``w(|ratio|)``   — a regularized test/train ratio; they
  move training-machine patches into the test machine's domain.
* Inverse gains are ``w(1/|ratio|)`` — a regularized train/test ratio; they
  move test-machine patches back into the training machine's domain.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .dsp import DEFAULT_FFT_SIZE, DepthSegmentedPSD, welch_psd
from .errors import (
    BadMagic,
    GridMismatch,
    InvalidConfig,
    MalformedHeader,
    NonFiniteInput,
    SegmentOutOfRange,
    ShapeMismatch,
    SizeMismatch,
    TruncatedFile,
)
from .rf import Patch, PatchGridSpec, RFFrame

TF_MAGIC = b"M2MTF1\x00\x00"
TF_VERSION = 1
_TF_HEADER = struct.Struct("<8sIIIdB7xdI")  # 48 bytes


class Direction(IntEnum):
    FORWARD = 0
    INVERSE = 1


@dataclass
class WienerConfig:
    snr: float = 100.0  # power SNR (100 = 20 dB)
    ratio_floor: float = 1e-12  # denominator floor, relative to segment max bin

    def __post_init__(self):
        if not (self.snr > 0):
            raise InvalidConfig(f"snr must be > 0, got {self.snr}")
        if not (self.ratio_floor > 0):
            raise InvalidConfig(f"ratio_floor must be > 0, got {self.ratio_floor}")


@dataclass
class TransferFunction:
    """Per-depth-segment real spectral gains (float32, nonnegative)."""

    gains: np.ndarray  # [n_segments][n_bins]
    fft_size: int
    sample_rate_hz: float
    direction: Direction
    snr: float
    n_calib_frames: int

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=np.float32)
        n_bins = self.fft_size // 2 + 1
        if self.gains.ndim != 2 or self.gains.shape[1] != n_bins:
            raise ShapeMismatch(
                f"gains shape {self.gains.shape} inconsistent with fft_size {self.fft_size}"
            )
        if self.gains.shape[0] < 1:
            raise MalformedHeader("transfer function needs at least one segment")
        if not np.all(np.isfinite(self.gains)) or np.any(self.gains < 0):
            raise NonFiniteInput("gains must be finite and nonnegative")
        if not (self.snr > 0):
            raise InvalidConfig(f"snr must be > 0, got {self.snr}")

    @property
    def n_segments(self) -> int:
        return self.gains.shape[0]

    def identity_rows(self) -> np.ndarray:
        """Boolean mask of segments whose gains are exactly all-ones."""
        return np.all(self.gains == 1.0, axis=1)


def amplitude_ratio(
    psd_test: DepthSegmentedPSD, psd_train: DepthSegmentedPSD, floor: float
) -> np.ndarray:
    """Per-bin amplitude ratio sqrt(test power / floored train power).

    The denominator floor is relative to each segment's strongest bin, so
    bins where the training machine has (near) zero power stay finite.
    """
    if (
        psd_test.fft_size != psd_train.fft_size
        or psd_test.sample_rate_hz != psd_train.sample_rate_hz
        or list(psd_test.segment_starts) != list(psd_train.segment_starts)
    ):
        raise GridMismatch("PSDs were computed on different spectral grids")
    num = psd_test.psd
    den = psd_train.psd
    if not (np.all(np.isfinite(num)) and np.all(np.isfinite(den))):
        raise NonFiniteInput("PSDs must be finite")
    seg_max = den.max(axis=1, keepdims=True)
    floor_val = np.maximum(floor * seg_max, np.finfo(np.float64).tiny)
    return np.sqrt(num / np.maximum(den, floor_val))


def wiener_regularize(
    gamma_mag: np.ndarray, cfg: WienerConfig, direction: Direction
) -> np.ndarray:
    """Noise-aware regularization of a measured amplitude-ratio array.

    Forward returns w(g) = g*snr/(snr + g^2)   (-> g     as snr -> inf);
    Inverse returns w(1/g) = g*snr/(1 + snr*g^2) (-> 1/g as snr -> inf).
    Both forms evaluate to 0 at g = 0 with no special casing and are
    bounded above by sqrt(snr)/2.
    """
    g = np.asarray(gamma_mag, dtype=np.float64)
    if not np.all(np.isfinite(g)) or np.any(g < 0):
        raise NonFiniteInput("gamma magnitudes must be finite and >= 0")
    snr = cfg.snr
    if direction == Direction.FORWARD:
        return g * snr / (snr + g**2)
    return g * snr / (1.0 + snr * g**2)


def transfer_from_psds(
    psd_train: DepthSegmentedPSD,
    psd_test: DepthSegmentedPSD,
    cfg: WienerConfig,
    direction: Direction,
    n_calib_frames: int,
) -> TransferFunction:
    """Turn a pair of already-estimated PSDs into a transfer function."""
    if psd_train.sample_rate_hz != psd_test.sample_rate_hz:
        raise GridMismatch("calibration sets disagree on sample rate")
    ratio = amplitude_ratio(psd_test, psd_train, cfg.ratio_floor)
    gains = wiener_regularize(ratio, cfg, direction)
    return TransferFunction(
        gains=gains,
        fft_size=psd_train.fft_size,
        sample_rate_hz=psd_train.sample_rate_hz,
        direction=direction,
        snr=cfg.snr,
        n_calib_frames=n_calib_frames,
    )


def build_transfer_function(
    calib_train: list[RFFrame],
    calib_test: list[RFFrame],
    grid: PatchGridSpec,
    cfg: WienerConfig,
    direction: Direction,
    fft_size: int = DEFAULT_FFT_SIZE,
) -> TransferFunction:
    """Estimate a transfer function from calibration scans on both machines."""
    psd_train = welch_psd(calib_train, grid, fft_size)
    psd_test = welch_psd(calib_test, grid, fft_size)
    return transfer_from_psds(
        psd_train, psd_test, cfg, direction, min(len(calib_train), len(calib_test))
    )


def apply_transfer_function(patch: Patch, tf: TransferFunction) -> Patch:
    """Filter one patch with the gain row of its depth segment (zero phase).

    Each lateral line is zero-padded axially to the FFT size, multiplied by
    the real nonnegative gains in the frequency domain, and truncated back.
    All-ones gain rows short-circuit to an exact copy.
    """
    if not (0 <= patch.depth_segment < tf.n_segments):
        raise SegmentOutOfRange(
            f"depth segment {patch.depth_segment} outside [0, {tf.n_segments})"
        )
    n = patch.samples.shape[0]
    if n > tf.fft_size:
        raise SizeMismatch(f"patch axial length {n} exceeds fft_size {tf.fft_size}")
    row = tf.gains[patch.depth_segment]
    if np.all(row == 1.0):
        filtered = patch.samples.copy()
    else:
        spec = np.fft.rfft(patch.samples.astype(np.float64), n=tf.fft_size, axis=0)
        spec *= row.astype(np.float64)[:, None]
        filtered = np.fft.irfft(spec, n=tf.fft_size, axis=0)[:n].astype(np.float32)
    return Patch(
        samples=filtered,
        depth_segment=patch.depth_segment,
        label=patch.label,
        source=patch.source,
    )


def apply_transfer_function_batch(
    patches: list[Patch], tf: TransferFunction
) -> list[Patch]:
    """Vectorized apply_transfer_function over a patch list (same results)."""
    if not patches:
        return []
    by_seg: dict[int, list[int]] = {}
    for idx, p in enumerate(patches):
        if not (0 <= p.depth_segment < tf.n_segments):
            raise SegmentOutOfRange(
                f"depth segment {p.depth_segment} outside [0, {tf.n_segments})"
            )
        if p.samples.shape[0] > tf.fft_size:
            raise SizeMismatch(
                f"patch axial length {p.samples.shape[0]} exceeds fft_size {tf.fft_size}"
            )
        by_seg.setdefault(p.depth_segment, []).append(idx)
    identity = tf.identity_rows()
    out: list[Patch | None] = [None] * len(patches)
    for seg, idxs in by_seg.items():
        if identity[seg]:
            for i in idxs:
                src = patches[i]
                out[i] = Patch(src.samples.copy(), seg, src.label, src.source)
            continue
        stack = np.stack([patches[i].samples for i in idxs]).astype(np.float64)
        n = stack.shape[1]
        spec = np.fft.rfft(stack, n=tf.fft_size, axis=1)
        spec *= tf.gains[seg].astype(np.float64)[None, :, None]
        filt = np.fft.irfft(spec, n=tf.fft_size, axis=1)[:, :n].astype(np.float32)
        for k, i in enumerate(idxs):
            src = patches[i]
            out[i] = Patch(filt[k], seg, src.label, src.source)
    return out  # type: ignore[return-value]


# ---- transfer-function files ----

def save_tf(tf: TransferFunction, path) -> None:
    header = _TF_HEADER.pack(
        TF_MAGIC,
        TF_VERSION,
        tf.n_segments,
        tf.fft_size,
        float(tf.sample_rate_hz),
        int(tf.direction),
        float(tf.snr),
        tf.n_calib_frames,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(tf.gains, dtype="<f4").tobytes())


def load_tf(path) -> TransferFunction:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _TF_HEADER.size:
        if blob[: len(TF_MAGIC)] != TF_MAGIC[: len(blob)]:
            raise BadMagic(f"{path}: not a transfer-function file")
        raise TruncatedFile(f"{path}: header truncated")
    magic, version, n_segments, fft_size, rate, direction_b, snr, n_calib = (
        _TF_HEADER.unpack_from(blob, 0)
    )
    if magic != TF_MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r}")
    if version != TF_VERSION:
        raise MalformedHeader(f"{path}: unsupported version {version}")
    if n_segments < 1 or fft_size < 2:
        raise MalformedHeader(f"{path}: bad geometry {n_segments} x fft {fft_size}")
    try:
        direction = Direction(direction_b)
    except ValueError as exc:
        raise MalformedHeader(f"{path}: {exc}") from exc
    n_bins = fft_size // 2 + 1
    need = _TF_HEADER.size + n_segments * n_bins * 4
    if len(blob) < need:
        raise TruncatedFile(f"{path}: need {need} bytes, file has {len(blob)}")
    gains = np.frombuffer(
        blob, dtype="<f4", count=n_segments * n_bins, offset=_TF_HEADER.size
    ).reshape(n_segments, n_bins)
    return TransferFunction(
        gains=gains.copy(),
        fft_size=fft_size,
        sample_rate_hz=rate,
        direction=direction,
        snr=snr,
        n_calib_frames=n_calib,
    )
