"""Spectral estimation and rate conversion.

Periodogram scaling convention: the one-sided spectrum is scaled so that for
a rectangular window the bin sum (with interior bins doubled) equals the mean
squared amplitude times the segment length.  Tapered windows are compensated
by their power so white noise yields the same expected band total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels
from .errors import (
    EmptyInput,
    InvalidFactors,
    LengthMismatch,
    ShapeMismatch,
)
from .rf import PatchGridSpec, RFFrame

DEFAULT_FFT_SIZE = 256

# Kaiser design point: 72 dB target stopband, transition band 40% of cutoff.
_KAISER_ATTEN_DB = 72.0
_KAISER_BETA = 0.1102 * (_KAISER_ATTEN_DB - 8.7)
_TRANSITION_FRAC = 0.4


class Window(Enum):
    HANN = "hann"
    RECT = "rect"


@dataclass
class DepthSegmentedPSD:
    """Per-depth-segment one-sided power spectra."""

    psd: np.ndarray  # [n_segments][n_bins]
    fft_size: int
    sample_rate_hz: float
    segment_starts: list[int]
    n_averaged: int

    def __post_init__(self):
        self.psd = np.asarray(self.psd, dtype=np.float64)
        n_bins = self.fft_size // 2 + 1
        if self.psd.ndim != 2 or self.psd.shape[1] != n_bins:
            raise ShapeMismatch(
                f"psd shape {self.psd.shape} inconsistent with fft_size {self.fft_size}"
            )
        if not np.all(np.isfinite(self.psd)) or np.any(self.psd < 0):
            raise ShapeMismatch("psd must be finite and nonnegative")
        starts = list(self.segment_starts)
        if len(starts) != self.psd.shape[0]:
            raise ShapeMismatch("segment_starts length != psd rows")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ShapeMismatch("segment_starts must be strictly increasing")

    @property
    def n_segments(self) -> int:
        return self.psd.shape[0]

    def bin_freqs_hz(self) -> np.ndarray:
        return np.fft.rfftfreq(self.fft_size, d=1.0 / self.sample_rate_hz)


@dataclass
class ResamplerSpec:
    """Rational-rate converter: upsample, lowpass FIR, downsample."""

    interp: int
    decim: int
    taps: np.ndarray

    def __post_init__(self):
        if self.interp < 1 or self.decim < 1:
            raise InvalidFactors(f"factors must be >= 1, got {self.interp}/{self.decim}")
        if math.gcd(self.interp, self.decim) != 1:
            raise InvalidFactors("interp and decim must be coprime")
        self.taps = np.asarray(self.taps, dtype=np.float64)
        if self.taps.ndim != 1 or len(self.taps) < 1:
            raise InvalidFactors("taps must be a non-empty 1-D array")
        if not np.array_equal(self.taps, self.taps[::-1]):
            raise InvalidFactors("taps must be exactly symmetric (linear phase)")
        if abs(self.taps.sum() - self.interp) > 1e-6 * max(1, self.interp):
            raise InvalidFactors("DC gain of taps must equal interp")


def _window_values(window: Window, n: int) -> np.ndarray:
    if window == Window.HANN:
        return np.hanning(n)
    return np.ones(n)


def _periodogram_scale(window_vals: np.ndarray, fft_size: int) -> float:
    n = len(window_vals)
    s_ww = float(np.sum(window_vals**2))
    return n / (fft_size * s_ww)


def _one_sided_doubling(fft_size: int) -> np.ndarray:
    d = np.full(fft_size // 2 + 1, 2.0)
    d[0] = 1.0
    if fft_size % 2 == 0:
        d[-1] = 1.0
    return d


def periodogram(
    segment: np.ndarray,
    fft_size: int = DEFAULT_FFT_SIZE,
    window: Window = Window.HANN,
) -> np.ndarray:
    """One-sided power spectrum of a short real segment.

    The segment is windowed, zero-padded to ``fft_size``, and transformed;
    see the module docstring for the scaling convention.
    """
    x = np.asarray(segment, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise EmptyInput("periodogram needs a non-empty 1-D segment")
    if len(x) > fft_size:
        raise LengthMismatch(f"segment length {len(x)} exceeds fft_size {fft_size}")
    w = _window_values(window, len(x))
    spec = np.fft.rfft(x * w, n=fft_size)
    scale = _periodogram_scale(w, fft_size)
    return _one_sided_doubling(fft_size) * np.abs(spec) ** 2 * scale


def welch_psd(
    frames: list[RFFrame],
    grid: PatchGridSpec,
    fft_size: int = DEFAULT_FFT_SIZE,
) -> DepthSegmentedPSD:
    """Average Hann periodograms per depth segment over all lateral lines.

    Depth segments are the patch grid's axial windows
    [start_i, start_i + axial_patch); every lateral line of every frame
    contributes one periodogram per segment.
    """
    if not frames:
        raise EmptyInput("welch_psd needs at least one frame")
    first = frames[0]
    for fr in frames:
        if fr.samples.shape != first.samples.shape:
            raise ShapeMismatch("frames must share a shape")
        if fr.sample_rate_hz != first.sample_rate_hz:
            raise ShapeMismatch("frames must share a sample rate")
    grid.check_fits(first.axial_len, first.lateral_len)
    if grid.axial_patch > fft_size:
        raise LengthMismatch(
            f"axial_patch {grid.axial_patch} exceeds fft_size {fft_size}"
        )

    n = grid.axial_patch
    starts = grid.segment_starts()
    w = _window_values(Window.HANN, n)
    scale = _periodogram_scale(w, fft_size)
    doubling = _one_sided_doubling(fft_size)
    rows = np.asarray(starts)[:, None] + np.arange(n)[None, :]

    acc = np.zeros((len(starts), fft_size // 2 + 1), dtype=np.float64)
    for fr in frames:
        blocks = fr.samples[rows, :].astype(np.float64)  # [seg, n, lateral]
        spec = np.fft.rfft(blocks * w[None, :, None], n=fft_size, axis=1)
        acc += (np.abs(spec) ** 2).sum(axis=2)
    n_avg = len(frames) * first.lateral_len
    psd = acc * (scale / n_avg) * doubling[None, :]
    return DepthSegmentedPSD(
        psd=psd,
        fft_size=fft_size,
        sample_rate_hz=first.sample_rate_hz,
        segment_starts=starts,
        n_averaged=n_avg,
    )


# ---- FIR design and resampling ----

def _kaiser_sinc(length: int, cutoff: float) -> np.ndarray:
    """Even-symmetric windowed sinc, built half+mirror so symmetry is exact."""
    center = (length - 1) // 2
    k = np.arange(center + 1)  # center..end offsets
    half = cutoff * np.sinc(cutoff * k)
    win = np.kaiser(length, _KAISER_BETA)[center:]
    half = half * win
    taps = np.concatenate([half[:0:-1], half])
    return taps


def design_multirate_fir(interp: int, decim: int) -> ResamplerSpec:
    """Kaiser windowed-sinc lowpass for up-by-interp / down-by-decim.

    Cutoff pi/max(interp, decim) at the upsampled rate, >= 60 dB stopband,
    exactly symmetric taps.  Each polyphase branch is normalized to unit DC
    gain (total DC gain = interp) so constants pass through unchanged.
    """
    if int(interp) != interp or int(decim) != decim or interp < 1 or decim < 1:
        raise InvalidFactors(f"factors must be positive integers, got {interp}/{decim}")
    interp, decim = int(interp), int(decim)
    g = math.gcd(interp, decim)
    interp //= g
    decim //= g
    if interp == 1 and decim == 1:
        return ResamplerSpec(interp=1, decim=1, taps=np.ones(1))

    m = max(interp, decim)
    cutoff = 1.0 / m  # fraction of the upsampled Nyquist
    width = _TRANSITION_FRAC * cutoff * np.pi  # rad/sample
    length = int(np.ceil((_KAISER_ATTEN_DB - 7.95) / (2.285 * width))) + 1
    step = 2 * interp if interp % 2 else interp  # lcm(2, interp)
    length += (-(length - 1)) % step  # (length-1) divisible by lcm(2, interp)

    taps = _kaiser_sinc(length, cutoff)
    for p in range(interp):  # unit DC per polyphase branch
        taps[p::interp] /= taps[p::interp].sum()
    taps = (taps + taps[::-1]) / 2.0
    return ResamplerSpec(interp=interp, decim=decim, taps=taps)


def resample(signal: np.ndarray, spec: ResamplerSpec) -> np.ndarray:
    """Rate-convert a 1-D signal; output length = ceil(len * interp / decim)."""
    x = np.asarray(signal)
    if x.ndim != 1 or x.size == 0:
        raise EmptyInput("resample needs a non-empty 1-D signal")
    if spec.interp == 1 and spec.decim == 1 and len(spec.taps) == 1:
        return (x * spec.taps[0]).astype(x.dtype, copy=False)
    out = _kernels.polyphase_columns(
        x.reshape(-1, 1), spec.taps, spec.interp, spec.decim
    )
    return out[:, 0]


def resample_columns(frame: np.ndarray, spec: ResamplerSpec) -> np.ndarray:
    """Rate-convert every column of a 2-D array (axial axis 0)."""
    if frame.ndim != 2 or frame.size == 0:
        raise EmptyInput("resample_columns needs a non-empty 2-D array")
    if spec.interp == 1 and spec.decim == 1 and len(spec.taps) == 1:
        return (frame * spec.taps[0]).astype(frame.dtype, copy=False)
    return _kernels.polyphase_columns(frame, spec.taps, spec.interp, spec.decim)


# ---- FFT plumbing ----

def real_fft(signal: np.ndarray) -> np.ndarray:
    """Forward real FFT (one-sided complex bins)."""
    x = np.asarray(signal)
    if x.ndim != 1 or x.size == 0:
        raise LengthMismatch("real_fft needs a non-empty 1-D signal")
    return np.fft.rfft(x)


def inverse_real_fft(bins: np.ndarray, n: int) -> np.ndarray:
    """Inverse of real_fft for a signal of known length n."""
    b = np.asarray(bins)
    if b.ndim != 1 or n < 1 or len(b) != n // 2 + 1:
        raise LengthMismatch(f"{len(b)} bins inconsistent with signal length {n}")
    return np.fft.irfft(b, n=n)
