"""Shared fixtures: one small simulated dataset suite per test session."""

import shutil
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from m2mcalib import cli
from m2mcalib import simulate as sim
from m2mcalib.rf import write_dataset

settings.register_profile(
    "suite",
    deadline=None,
    derandomize=True,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

SMALL_CFG = """
train_frames_per_class = 10
test_frames_per_class = 6
stable_calib_frames = 3
freehand_calib_frames = 6
seed = 7
"""


@pytest.fixture(scope="session")
def small_data(tmp_path_factory) -> Path:
    """A reduced but complete dataset suite (all ten files, fewer frames)."""
    root = tmp_path_factory.mktemp("smalldata")
    cfg = root / "sim.cfg"
    cfg.write_text(SMALL_CFG, encoding="utf-8")
    out = root / "data"
    cli.cmd_simulate(cfg, out)
    return out


@pytest.fixture(scope="session")
def identity_calib_data(small_data, tmp_path_factory) -> Path:
    """Dataset suite whose stable calibration pair is the same file twice.

    Identical calibration scans give a measured spectral ratio of exactly 1,
    so at very high snr the transfer function collapses to the identity.
    """
    out = tmp_path_factory.mktemp("identdata") / "data"
    shutil.copytree(small_data, out)
    shutil.copy(out / "calib1_stable_train.rf", out / "calib1_stable_test.rf")
    return out


@pytest.fixture(scope="session")
def swapped_test_data(small_data, tmp_path_factory) -> Path:
    """Same suite with the test-machine classification files regenerated.

    Everything a training run may legitimately read (training classes,
    calibration scans) is byte-identical to ``small_data``; only the
    held-out evaluation data differs.
    """
    out = tmp_path_factory.mktemp("swapdata") / "data"
    shutil.copytree(small_data, out)
    for name, phantom in (("test_class_a.rf", sim.CLASS_A_PHANTOM), ("test_class_b.rf", sim.CLASS_B_PHANTOM)):
        frames = sim.acquire_freehand(sim.TEST_MACHINE, phantom, 6, 987654 + phantom.ident)
        write_dataset(frames, out / name)
    return out


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
