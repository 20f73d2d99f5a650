"""End-to-end acceptance gate.

Nine criteria, one test each, run against the full-scale default dataset
suite.  Each test prints a single ``[PASS]``/``[FAIL]`` line with the measured
numbers next to the pinned tolerance, so the verbose pytest output doubles as
the acceptance report.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from m2mcalib import calibrate as cal
from m2mcalib import cli, rf
from m2mcalib import experiment as xp
from m2mcalib import simulate as sim
from m2mcalib.experiment import CalibrationMode, ExperimentSpec, StatsRegime

pytestmark = pytest.mark.acceptance

REPO_ROOT = Path(__file__).resolve().parents[1]
PROPERTY_SUITE_BUDGET_S = 120.0
ORACLE_BUDGET_S = 60.0
MATRIX_BUDGET_S = 900.0
TABLE_NAMES = ("table_modes.csv", "table_phantoms.csv", "table_acquisitions.csv")


def report(ok: bool, label: str, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    print(line)
    assert ok, line


def one_row(csv_path, **want) -> xp.ResultRow:
    hits = [row for row in cli.parse_report(csv_path)
            if all(getattr(row, key) == value for key, value in want.items())]
    assert len(hits) == 1, f"expected exactly one row matching {want}, got {len(hits)}"
    return hits[0]


@pytest.fixture(scope="session")
def default_suite(tmp_path_factory) -> Path:
    """The full-scale dataset suite from the default generation config."""
    out = tmp_path_factory.mktemp("acceptance") / "data"
    cli.cmd_simulate(None, out)
    return out


@pytest.fixture(scope="session")
def matrix_first(default_suite, tmp_path_factory):
    """First full matrix run, through the CLI; criteria 3-6 and 8 read its CSVs."""
    out = tmp_path_factory.mktemp("matrix_a")
    start = time.perf_counter()
    rc = cli.main(["matrix", "--data", str(default_suite), "--out", str(out)])
    elapsed = time.perf_counter() - start
    assert rc == 0
    return out, elapsed


def test_criterion_1_property_suite_green_within_budget():
    start = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-m", "properties", "-q",
         "-p", "no:cacheprovider"],
        cwd=REPO_ROOT, capture_output=True, text=True, timeout=600,
    )
    elapsed = time.perf_counter() - start
    lines = proc.stdout.strip().splitlines()
    tail = lines[-1] if lines else proc.stderr.strip().splitlines()[-1:]
    report(proc.returncode == 0 and elapsed <= PROPERTY_SUITE_BUDGET_S,
           "criterion 1 property suite",
           f"exit={proc.returncode}, wall={elapsed:.1f}s "
           f"(budget {PROPERTY_SUITE_BUDGET_S:.0f}s) -- {tail}")


def test_criterion_2_transfer_function_matches_analytic_oracle():
    start = time.perf_counter()
    grid = rf.PatchGridSpec()
    native_rate = 40e6
    freqs = np.fft.rfftfreq(256, 1.0 / native_rate)
    lo = sim.TRAIN_MACHINE.center_freq_hz * (1 - sim.TRAIN_MACHINE.fractional_bandwidth / 2)
    hi = sim.TEST_MACHINE.center_freq_hz * (1 + sim.TEST_MACHINE.fractional_bandwidth / 2)
    band = (freqs >= lo) & (freqs <= hi)

    def pulse_mag(machine):
        taps = sim.pulse_waveform(machine)
        n = np.arange(len(taps))
        return np.abs(np.asarray(
            [np.sum(taps * np.exp(-2j * np.pi * f * n / machine.native_rate_hz))
             for f in freqs]))

    # Machine-response ratio, times the mismatch in depth attenuation the two
    # machines apply at their own carrier frequencies.
    ratio = pulse_mag(sim.TEST_MACHINE) / np.maximum(pulse_mag(sim.TRAIN_MACHINE), 1e-30)
    alpha = sim.CALIB_PHANTOM_1.attenuation_db_per_cm_per_mhz
    dfc = (sim.TRAIN_MACHINE.center_freq_hz - sim.TEST_MACHINE.center_freq_hz) / 1e6
    oracle = np.empty((grid.n_axial, freqs.size))
    for d in range(grid.n_axial):
        center = grid.axial_offset + d * grid.axial_stride + grid.axial_patch // 2
        depth_cm = 1540.0 * (center / native_rate) / 2.0 * 100.0
        oracle[d] = ratio * 10.0 ** (alpha * dfc * 2.0 * depth_cm / 20.0)

    train_frames, test_frames = sim.acquire_stable(
        sim.TRAIN_MACHINE, sim.TEST_MACHINE, sim.CALIB_PHANTOM_1, 10, seed=99)
    worst = {}
    for n_frames in (1, 10):
        tf = cal.build_transfer_function(
            train_frames[:n_frames], test_frames[:n_frames], grid,
            cal.WienerConfig(snr=1e9), cal.Direction.FORWARD)
        rel = np.abs(tf.gains[:, band] - oracle[:, band]) / oracle[:, band]
        worst[n_frames] = float(rel.max())
    elapsed = time.perf_counter() - start
    report(worst[1] < 0.10 and worst[10] < 0.10 and elapsed <= ORACLE_BUDGET_S,
           "criterion 2 transfer-function oracle",
           f"max rel err 1-frame={worst[1]:.4f}, 10-frame={worst[10]:.4f} "
           f"(tol 0.10 over [{lo / 1e6:.2f}, {hi / 1e6:.2f}] MHz), "
           f"wall={elapsed:.1f}s (budget {ORACLE_BUDGET_S:.0f}s)")


def test_criterion_3_cross_machine_collapse(matrix_first):
    out, _ = matrix_first
    row = one_row(out / "table_modes.csv", mode="none", stats="train")
    report(0.35 <= row.mean_acc <= 0.65,
           "criterion 3 cross-machine collapse",
           f"none+train acc={row.mean_acc:.4f} (want within [0.35, 0.65])")


def test_criterion_4_calibration_recovery(matrix_first):
    out, _ = matrix_first
    modes = out / "table_modes.csv"
    train_time = one_row(modes, mode="train_time", stats="test")
    test_time = one_row(modes, mode="test_time", stats="train")
    collapse = one_row(modes, mode="none", stats="train")
    margin = train_time.mean_acc - collapse.mean_acc
    ok = (train_time.mean_acc >= 0.85 and train_time.mean_auc >= 0.95
          and test_time.mean_auc >= 0.95 and margin >= 0.20)
    report(ok, "criterion 4 calibration recovery",
           f"train_time+test acc={train_time.mean_acc:.4f} (>=0.85) "
           f"auc={train_time.mean_auc:.4f} (>=0.95); "
           f"test_time+train auc={test_time.mean_auc:.4f} (>=0.95); "
           f"margin over collapse={margin:.4f} (>=0.20)")


def test_criterion_5_train_time_needs_calibrated_stats(matrix_first):
    out, _ = matrix_first
    modes = out / "table_modes.csv"
    stale = one_row(modes, mode="train_time", stats="train")
    matched = one_row(modes, mode="train_time", stats="calibrated")
    gap = matched.mean_acc - stale.mean_acc
    report(gap >= 0.15, "criterion 5 statistics-shift sensitivity",
           f"train_time: calibrated-stats acc={matched.mean_acc:.4f} vs "
           f"train-stats acc={stale.mean_acc:.4f}, gap={gap:.4f} (>=0.15)")


def test_criterion_6_statistics_only_rescue(matrix_first):
    out, _ = matrix_first
    modes = out / "table_modes.csv"
    raw = one_row(modes, mode="none", stats="train")
    rescued = one_row(modes, mode="none", stats="calibrated")
    gap = rescued.mean_acc - raw.mean_acc
    report(gap >= 0.10, "criterion 6 statistics-only rescue",
           f"none: calibrated-stats acc={rescued.mean_acc:.4f} vs "
           f"train-stats acc={raw.mean_acc:.4f}, gap={gap:.4f} (>=0.10)")


def test_criterion_7_same_machine_control(default_suite, tmp_path_factory):
    control = tmp_path_factory.mktemp("control")
    for name in (xp.TRAIN_CLASS_A, xp.TRAIN_CLASS_B):
        (control / name).hardlink_to(default_suite / name)
    cfg = cli.parse_config(None, cli.SIM_CONFIG_SCHEMA)
    held_out = ((sim.CLASS_A_PHANTOM, xp.TEST_CLASS_A), (sim.CLASS_B_PHANTOM, xp.TEST_CLASS_B))
    for phantom, name in held_out:
        frames = sim.acquire_freehand(sim.TRAIN_MACHINE, phantom,
                                      cfg["test_frames_per_class"],
                                      seed=31337 + int(phantom.ident))
        rf.write_dataset(frames, control / name)
    spec = ExperimentSpec(CalibrationMode.NONE, StatsRegime.TRAIN_STATS,
                          data_dir=str(control), n_repetitions=10, seed=0)
    row = xp.run_experiment(spec)
    report(row.mean_acc >= 0.95, "criterion 7 same-machine control",
           f"none+train on matched machines acc={row.mean_acc:.4f} (>=0.95)")


def test_criterion_8_stable_vs_freehand_calibration(matrix_first):
    out, _ = matrix_first
    acq = out / "table_acquisitions.csv"
    stable = one_row(acq, mode="train_time", acquisition="stable")
    freehand = one_row(acq, mode="train_time", acquisition="freehand")
    gap = abs(stable.mean_acc - freehand.mean_acc)
    report(gap <= 0.05, "criterion 8 stable vs freehand",
           f"train_time acc stable={stable.mean_acc:.4f} vs "
           f"freehand={freehand.mean_acc:.4f}, |gap|={gap:.4f} (<=0.05)")


def test_criterion_9_matrix_determinism(default_suite, matrix_first, tmp_path_factory):
    out_a, elapsed_a = matrix_first
    out_b = tmp_path_factory.mktemp("matrix_b")
    start = time.perf_counter()
    rc = cli.main(["matrix", "--data", str(default_suite), "--out", str(out_b)])
    elapsed_b = time.perf_counter() - start
    assert rc == 0
    identical = all((out_a / name).read_bytes() == (out_b / name).read_bytes()
                    for name in TABLE_NAMES)
    ok = identical and elapsed_a <= MATRIX_BUDGET_S and elapsed_b <= MATRIX_BUDGET_S
    report(ok, "criterion 9 determinism",
           f"reruns byte-identical={identical}; wall={elapsed_a:.0f}s/{elapsed_b:.0f}s "
           f"(budget {MATRIX_BUDGET_S:.0f}s each)")
