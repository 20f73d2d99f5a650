"""RF frames, patch extraction, z-score statistics, and dataset files.

An RF frame is a 2-D array of echo amplitudes indexed [axial][lateral] on a
common 40 MHz axial grid.  Classifier inputs are fixed-size patches cut from
a regular grid; each patch remembers which axial grid row (depth segment) it
came from so depth-dependent spectral gains can be applied later.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional

import numpy as np

from .errors import (
    BadMagic,
    EmptyDataset,
    GridOverflow,
    MalformedHeader,
    ShapeMismatch,
    TruncatedFile,
    VersionMismatch,
)

COMMON_RATE_HZ = 40e6

# Variance floor for z-score statistics, in normalized amplitude units.
STD_FLOOR = 1e-8

DATASET_MAGIC = b"M2MRF1\x00\x00"
DATASET_VERSION = 1
_HEADER = struct.Struct("<8sIIIIdBBB5x")  # 40 bytes


class MachineId(IntEnum):
    TRAIN = 0
    TEST = 1


class PhantomId(IntEnum):
    CLASS_A = 0
    CLASS_B = 1
    CALIB1 = 2
    CALIB2 = 3


class Acquisition(IntEnum):
    FREEHAND = 0
    STABLE = 1


class StatsProvenance(IntEnum):
    TRAIN_STATS = 0
    TEST_STATS = 1
    CALIBRATED_STATS = 2


def label_for_phantom(phantom_id: PhantomId) -> Optional[int]:
    """Binary class label for classification phantoms, None for others."""
    if phantom_id == PhantomId.CLASS_A:
        return 0
    if phantom_id == PhantomId.CLASS_B:
        return 1
    return None


@dataclass
class RFFrame:
    """One post-beamformed RF frame, [axial][lateral], float32."""

    samples: np.ndarray
    sample_rate_hz: float
    machine_id: MachineId
    phantom_id: PhantomId
    acquisition: Acquisition
    frame_index: int = 0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 2 or min(self.samples.shape) < 1:
            raise ShapeMismatch(f"frame must be 2-D non-empty, got {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ShapeMismatch("frame contains non-finite samples")

    @property
    def axial_len(self) -> int:
        return self.samples.shape[0]

    @property
    def lateral_len(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class PatchGridSpec:
    """Regular patch grid; defaults give 9x9 = 81 patches of 200x26."""

    axial_offset: int = 540
    axial_patch: int = 200
    lateral_patch: int = 26
    axial_stride: int = 100
    lateral_stride: int = 26
    n_axial: int = 9
    n_lateral: int = 9

    def axial_extent(self) -> int:
        return self.axial_offset + (self.n_axial - 1) * self.axial_stride + self.axial_patch

    def lateral_extent(self) -> int:
        return (self.n_lateral - 1) * self.lateral_stride + self.lateral_patch

    def segment_starts(self) -> list[int]:
        return [self.axial_offset + i * self.axial_stride for i in range(self.n_axial)]

    def check_fits(self, axial_len: int, lateral_len: int) -> None:
        if self.axial_extent() > axial_len or self.lateral_extent() > lateral_len:
            raise GridOverflow(
                f"grid needs {self.axial_extent()}x{self.lateral_extent()} "
                f"but frame is {axial_len}x{lateral_len}"
            )


@dataclass
class Patch:
    """One classifier input window plus its provenance."""

    samples: np.ndarray
    depth_segment: int
    label: Optional[int] = None
    source: tuple[int, int, int] = (0, 0, 0)  # (frame_index, axial_start, lateral_start)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)


@dataclass
class NormStats:
    """Element-wise mean/std patch used for z-score normalization."""

    mean_patch: np.ndarray
    std_patch: np.ndarray
    provenance: StatsProvenance = StatsProvenance.TRAIN_STATS

    def __post_init__(self):
        self.mean_patch = np.asarray(self.mean_patch, dtype=np.float64)
        self.std_patch = np.asarray(self.std_patch, dtype=np.float64)


# ---- patch operations ----

def extract_patches(frame: RFFrame, grid: PatchGridSpec) -> list[Patch]:
    """Cut the grid's n_axial*n_lateral windows out of a frame.

    Patch (i, j) starts at axial ``axial_offset + i*axial_stride`` and
    lateral ``j*lateral_stride``; its depth segment is the row index i.
    Labels are filled in for the two classification phantoms.
    """
    grid.check_fits(frame.axial_len, frame.lateral_len)
    label = label_for_phantom(frame.phantom_id)
    out = []
    for i in range(grid.n_axial):
        a0 = grid.axial_offset + i * grid.axial_stride
        for j in range(grid.n_lateral):
            l0 = j * grid.lateral_stride
            window = frame.samples[a0 : a0 + grid.axial_patch, l0 : l0 + grid.lateral_patch]
            out.append(
                Patch(
                    samples=window.copy(),
                    depth_segment=i,
                    label=label,
                    source=(frame.frame_index, a0, l0),
                )
            )
    return out


def compute_norm_stats(
    patches: list[Patch],
    provenance: StatsProvenance = StatsProvenance.TRAIN_STATS,
) -> NormStats:
    """Element-wise mean and population std over a patch list.

    Std values below STD_FLOOR are clamped so normalization never divides
    by (near) zero on degenerate data.
    """
    if not patches:
        raise EmptyDataset("cannot compute statistics of an empty patch list")
    shape = patches[0].samples.shape
    for p in patches:
        if p.samples.shape != shape:
            raise ShapeMismatch(f"patch shape {p.samples.shape} != {shape}")
    stack = np.stack([p.samples for p in patches]).astype(np.float64)
    mean = stack.mean(axis=0)
    std = stack.std(axis=0)  # population (ddof=0)
    std = np.maximum(std, STD_FLOOR)
    return NormStats(mean_patch=mean, std_patch=std, provenance=provenance)


def normalize(patch: Patch, stats: NormStats) -> Patch:
    """(x - mean) / std, element-wise."""
    if patch.samples.shape != stats.mean_patch.shape:
        raise ShapeMismatch(
            f"patch {patch.samples.shape} vs stats {stats.mean_patch.shape}"
        )
    z = (patch.samples.astype(np.float64) - stats.mean_patch) / stats.std_patch
    return Patch(
        samples=z.astype(np.float32),
        depth_segment=patch.depth_segment,
        label=patch.label,
        source=patch.source,
    )


def horizontal_flip(patch: Patch) -> Patch:
    """Reverse the lateral axis; an involution."""
    return Patch(
        samples=patch.samples[:, ::-1].copy(),
        depth_segment=patch.depth_segment,
        label=patch.label,
        source=patch.source,
    )


# ---- dataset files ----

def write_dataset(frames: list[RFFrame], path) -> None:
    """Write frames to the little-endian dataset format.

    All frames in one file share shape, rate, machine, phantom, and
    acquisition (these live in the file header); frame order is preserved
    and the per-frame payload stores float32 samples, axial index fastest.
    """
    if not frames:
        raise EmptyDataset("refusing to write a dataset with zero frames")
    first = frames[0]
    for fr in frames:
        if fr.samples.shape != first.samples.shape:
            raise ShapeMismatch("all frames in a dataset must share a shape")
        if (
            fr.sample_rate_hz != first.sample_rate_hz
            or fr.machine_id != first.machine_id
            or fr.phantom_id != first.phantom_id
            or fr.acquisition != first.acquisition
        ):
            raise ShapeMismatch("all frames in a dataset must share header metadata")
    header = _HEADER.pack(
        DATASET_MAGIC,
        DATASET_VERSION,
        len(frames),
        first.axial_len,
        first.lateral_len,
        float(first.sample_rate_hz),
        int(first.machine_id),
        int(first.phantom_id),
        int(first.acquisition),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for fr in frames:
            fh.write(np.ascontiguousarray(fr.samples.T, dtype="<f4").tobytes())


def read_dataset(path) -> list[RFFrame]:
    """Read a dataset file back into RFFrame objects (bit-exact round trip)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        if blob[: len(DATASET_MAGIC)] != DATASET_MAGIC[: len(blob)]:
            raise BadMagic(f"{path}: not a dataset file")
        raise TruncatedFile(f"{path}: header truncated")
    (
        magic,
        version,
        n_frames,
        axial_len,
        lateral_len,
        rate,
        machine_b,
        phantom_b,
        acq_b,
    ) = _HEADER.unpack_from(blob, 0)
    if magic != DATASET_MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r}")
    if version != DATASET_VERSION:
        raise VersionMismatch(f"{path}: version {version}, expected {DATASET_VERSION}")
    if axial_len < 1 or lateral_len < 1:
        raise MalformedHeader(f"{path}: degenerate frame dims {axial_len}x{lateral_len}")
    try:
        machine = MachineId(machine_b)
        phantom = PhantomId(phantom_b)
        acq = Acquisition(acq_b)
    except ValueError as exc:
        raise MalformedHeader(f"{path}: {exc}") from exc
    frame_bytes = axial_len * lateral_len * 4
    need = _HEADER.size + n_frames * frame_bytes
    if len(blob) < need:
        raise TruncatedFile(f"{path}: need {need} bytes, file has {len(blob)}")
    frames = []
    for k in range(n_frames):
        off = _HEADER.size + k * frame_bytes
        flat = np.frombuffer(blob, dtype="<f4", count=axial_len * lateral_len, offset=off)
        # axial index fastest on disk -> [lateral][axial] rows, transpose back
        samples = flat.reshape(lateral_len, axial_len).T.copy()
        frames.append(
            RFFrame(
                samples=samples,
                sample_rate_hz=rate,
                machine_id=machine,
                phantom_id=phantom,
                acquisition=acq,
                frame_index=k,
            )
        )
    return frames
