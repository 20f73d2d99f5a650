"""Command-line front end.

Subcommands:

* ``simulate``   — generate the two-machine synthetic dataset suite
* ``calibrate``  — estimate a transfer function and save it
* ``experiment`` — run a single calibration-mode x statistics cell
* ``matrix``     — run all three result tables and write their CSVs
* ``report``     — merge/re-emit result CSVs

Config files are flat ``key=value`` text (UTF-8, ``#`` comments); flags
override config values.  Exit code 0 on success; any package error prints a
one-line diagnostic on stderr and exits nonzero.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import experiment as xp
from . import simulate as sim
from .calibrate import Direction, WienerConfig, build_transfer_function, save_tf
from .errors import BadConfig, EmptyInput, IoError, M2MError
from .experiment import (
    ACQ_NAMES,
    CSV_HEADER,
    CalibrationMode,
    ExperimentSpec,
    PHANTOM_NAMES,
    ResultRow,
    StatsRegime,
    format_row,
)
from .rf import Acquisition, PhantomId, write_dataset

_MODE_BY_NAME = {v: k for k, v in xp.MODE_NAMES.items()}
_STATS_BY_NAME = {v: k for k, v in xp.STATS_NAMES.items()}
_PHANTOM_BY_NAME = {v: k for k, v in PHANTOM_NAMES.items()}
_ACQ_BY_NAME = {v: k for k, v in ACQ_NAMES.items()}

SIM_CONFIG_SCHEMA = {
    "train_frames_per_class": (int, 100),
    "test_frames_per_class": (int, 50),
    "stable_calib_frames": (int, 10),
    "freehand_calib_frames": (int, 200),
    "frame_axial": (int, 2080),
    "frame_lateral": (int, 256),
    "seed": (int, 0),
}
RUN_CONFIG_SCHEMA = {
    "seed": (int, 0),
    "snr": (float, 100.0),
    "n_repetitions": (int, 10),
}


def parse_config(path, schema) -> dict:
    """Flat key=value config; unknown keys and bad values are errors."""
    values = {key: default for key, (_, default) in schema.items()}
    if path is None:
        return values
    p = Path(path)
    if not p.exists():
        raise IoError(f"config file not found: {p}")
    for lineno, raw in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BadConfig(f"{p}:{lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in schema:
            raise BadConfig(f"{p}:{lineno}: unknown key {key!r}")
        conv = schema[key][0]
        try:
            values[key] = conv(val)
        except ValueError as exc:
            raise BadConfig(f"{p}:{lineno}: bad value for {key!r}: {val!r}") from exc
    return values


def _subseed(seed: int, tag: int) -> int:
    """Stable derived stream id for one generated dataset."""
    return int(np.random.SeedSequence(entropy=[seed, tag]).generate_state(1, np.uint64)[0])


def dataset_manifest(cfg: dict) -> list[tuple[str, int]]:
    """(filename, frame count) for everything `simulate` writes."""
    return [
        (xp.TRAIN_CLASS_A, cfg["train_frames_per_class"]),
        (xp.TRAIN_CLASS_B, cfg["train_frames_per_class"]),
        (xp.TEST_CLASS_A, cfg["test_frames_per_class"]),
        (xp.TEST_CLASS_B, cfg["test_frames_per_class"]),
        (xp.calib_file(PhantomId.CALIB1, Acquisition.STABLE, "train"), cfg["stable_calib_frames"]),
        (xp.calib_file(PhantomId.CALIB1, Acquisition.STABLE, "test"), cfg["stable_calib_frames"]),
        (xp.calib_file(PhantomId.CALIB2, Acquisition.STABLE, "train"), cfg["stable_calib_frames"]),
        (xp.calib_file(PhantomId.CALIB2, Acquisition.STABLE, "test"), cfg["stable_calib_frames"]),
        (
            xp.calib_file(PhantomId.CALIB1, Acquisition.FREEHAND, "train"),
            cfg["freehand_calib_frames"],
        ),
        (
            xp.calib_file(PhantomId.CALIB1, Acquisition.FREEHAND, "test"),
            cfg["freehand_calib_frames"],
        ),
    ]


def _write_frames(out_dir: Path, name: str, frames) -> None:
    try:
        write_dataset(frames, out_dir / name)
    except OSError as exc:
        raise IoError(f"cannot write {out_dir / name}: {exc}") from exc


def cmd_simulate(config_path, out_dir, seed_override=None) -> None:
    """Generate the 10-file synthetic dataset suite into out_dir."""
    cfg = parse_config(config_path, SIM_CONFIG_SCHEMA)
    if seed_override is not None:
        cfg["seed"] = seed_override
    seed = cfg["seed"]
    simcfg = sim.SimConfig(frame_axial=cfg["frame_axial"], frame_lateral=cfg["frame_lateral"])
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output dir {out}: {exc}") from exc

    # classification data: independent sweeps per machine and class
    class_sets = [
        (xp.TRAIN_CLASS_A, sim.TRAIN_MACHINE, sim.CLASS_A_PHANTOM, cfg["train_frames_per_class"], 0),
        (xp.TRAIN_CLASS_B, sim.TRAIN_MACHINE, sim.CLASS_B_PHANTOM, cfg["train_frames_per_class"], 1),
        (xp.TEST_CLASS_A, sim.TEST_MACHINE, sim.CLASS_A_PHANTOM, cfg["test_frames_per_class"], 2),
        (xp.TEST_CLASS_B, sim.TEST_MACHINE, sim.CLASS_B_PHANTOM, cfg["test_frames_per_class"], 3),
    ]
    for name, machine, phantom, count, tag in class_sets:
        frames = sim.acquire_freehand(machine, phantom, count, _subseed(seed, tag), simcfg)
        _write_frames(out, name, frames)

    # stable calibration pairs: both machines image one shared realization
    for phantom, tag in ((sim.CALIB_PHANTOM_1, 4), (sim.CALIB_PHANTOM_2, 5)):
        frames_train, frames_test = sim.acquire_stable(
            sim.TRAIN_MACHINE,
            sim.TEST_MACHINE,
            phantom,
            cfg["stable_calib_frames"],
            _subseed(seed, tag),
            simcfg,
        )
        _write_frames(out, xp.calib_file(phantom.ident, Acquisition.STABLE, "train"), frames_train)
        _write_frames(out, xp.calib_file(phantom.ident, Acquisition.STABLE, "test"), frames_test)

    # free-hand calibration sweeps: independent realizations per frame
    for machine, side, tag in ((sim.TRAIN_MACHINE, "train", 6), (sim.TEST_MACHINE, "test", 7)):
        frames = sim.acquire_freehand(
            machine, sim.CALIB_PHANTOM_1, cfg["freehand_calib_frames"], _subseed(seed, tag), simcfg
        )
        _write_frames(out, xp.calib_file(PhantomId.CALIB1, Acquisition.FREEHAND, side), frames)


def write_report(rows: list[ResultRow], out_csv) -> None:
    """CSV with the canonical header; metrics at 4 decimals."""
    if not rows:
        raise EmptyInput("no result rows to report")
    path = Path(out_csv)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(CSV_HEADER + "\n")
            for row in rows:
                fh.write(format_row(row) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write report {path}: {exc}") from exc


def parse_report(path) -> list[ResultRow]:
    """Read back a report CSV produced by write_report."""
    p = Path(path)
    if not p.exists():
        raise IoError(f"report file not found: {p}")
    with open(p, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInput(f"empty report file: {p}") from None
        if ",".join(header) != CSV_HEADER:
            raise BadConfig(f"{p}: unexpected report header")
        rows = []
        for rec in reader:
            if len(rec) != len(header):
                raise BadConfig(f"{p}: malformed row {rec!r}")
            rows.append(
                ResultRow(
                    mode=rec[0],
                    stats=rec[1],
                    calib_phantom=rec[2],
                    acquisition=rec[3],
                    snr=float(rec[4]),
                    mean_acc=float(rec[5]),
                    std_acc=float(rec[6]),
                    mean_auc=float(rec[7]),
                    std_auc=float(rec[8]),
                    n_reps=int(rec[9]),
                )
            )
    if not rows:
        raise EmptyInput(f"report has a header but no rows: {p}")
    return rows


def _spec_from_args(args, cfg) -> ExperimentSpec:
    return ExperimentSpec(
        calibration_mode=_MODE_BY_NAME[args.mode],
        stats_regime=_STATS_BY_NAME[args.stats],
        calib_phantom=_PHANTOM_BY_NAME[args.phantom],
        calib_acquisition=_ACQ_BY_NAME[args.acquisition],
        snr=args.snr if args.snr is not None else cfg["snr"],
        n_repetitions=args.reps if args.reps is not None else cfg["n_repetitions"],
        data_dir=str(args.data),
        seed=args.seed if args.seed is not None else cfg["seed"],
    )


def cmd_experiment(args) -> None:
    spec = _spec_from_args(args, parse_config(args.config, RUN_CONFIG_SCHEMA))
    row = xp.run_experiment(spec)
    print(CSV_HEADER)
    print(format_row(row))
    if args.out is not None:
        write_report([row], args.out)


def cmd_matrix(args) -> None:
    cfg = parse_config(args.config, RUN_CONFIG_SCHEMA)
    seed = args.seed if args.seed is not None else cfg["seed"]
    snr = args.snr if args.snr is not None else cfg["snr"]
    reps = args.reps if args.reps is not None else cfg["n_repetitions"]
    modes, phantoms, acquisitions = xp.run_matrix(
        args.data, seed=seed, snr=snr, n_repetitions=reps
    )
    out = Path(args.out)
    write_report(modes, out / "table_modes.csv")
    write_report(phantoms, out / "table_phantoms.csv")
    write_report(acquisitions, out / "table_acquisitions.csv")
    for name, rows in (
        ("table_modes.csv", modes),
        ("table_phantoms.csv", phantoms),
        ("table_acquisitions.csv", acquisitions),
    ):
        print(f"# {out / name}")
        print(CSV_HEADER)
        for row in rows:
            print(format_row(row))


def cmd_calibrate(args) -> None:
    data = Path(args.data)
    phantom = _PHANTOM_BY_NAME[args.phantom]
    acq = _ACQ_BY_NAME[args.acquisition]
    direction = Direction.FORWARD if args.mode == "forward" else Direction.INVERSE
    snr = args.snr if args.snr is not None else 100.0
    from .experiment import _read_frames  # shared missing-file diagnostics

    frames_train = _read_frames(data, xp.calib_file(phantom, acq, "train"))
    frames_test = _read_frames(data, xp.calib_file(phantom, acq, "test"))
    from .rf import PatchGridSpec

    tf = build_transfer_function(
        frames_train, frames_test, PatchGridSpec(), WienerConfig(snr=snr), direction
    )
    try:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        save_tf(tf, args.out)
    except OSError as exc:
        raise IoError(f"cannot write transfer function {args.out}: {exc}") from exc
    print(f"wrote {args.out}: {tf.n_segments} segments, fft {tf.fft_size}, snr {tf.snr:g}")


def cmd_report(args) -> None:
    rows = []
    for path in args.inputs:
        rows.extend(parse_report(path))
    write_report(rows, args.out)
    print(f"wrote {args.out}: {len(rows)} rows")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="m2mcalib",
        description="machine-to-machine spectral calibration experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate the synthetic dataset suite")
    p_sim.add_argument("--config", default=None, help="key=value config file")
    p_sim.add_argument("--out", default="data", help="output dataset directory")
    p_sim.add_argument("--seed", type=int, default=None, help="override config seed")

    p_cal = sub.add_parser("calibrate", help="build and save a transfer function")
    p_cal.add_argument("--data", default="data", help="dataset directory")
    p_cal.add_argument("--out", required=True, help="output transfer-function file")
    p_cal.add_argument("--phantom", choices=sorted(_PHANTOM_BY_NAME), default="calib1")
    p_cal.add_argument("--acquisition", choices=sorted(_ACQ_BY_NAME), default="stable")
    p_cal.add_argument("--mode", choices=["forward", "inverse"], default="forward")
    p_cal.add_argument("--snr", type=float, default=None)

    p_exp = sub.add_parser("experiment", help="run one experiment cell")
    p_exp.add_argument("--config", default=None)
    p_exp.add_argument("--data", default="data")
    p_exp.add_argument("--out", default=None, help="optional CSV to write the row to")
    p_exp.add_argument("--mode", choices=sorted(_MODE_BY_NAME), required=True)
    p_exp.add_argument("--stats", choices=sorted(_STATS_BY_NAME), required=True)
    p_exp.add_argument("--phantom", choices=sorted(_PHANTOM_BY_NAME), default="calib1")
    p_exp.add_argument("--acquisition", choices=sorted(_ACQ_BY_NAME), default="stable")
    p_exp.add_argument("--snr", type=float, default=None)
    p_exp.add_argument("--reps", type=int, default=None)
    p_exp.add_argument("--seed", type=int, default=None)

    p_mat = sub.add_parser("matrix", help="run the full experiment matrix")
    p_mat.add_argument("--config", default=None)
    p_mat.add_argument("--data", default="data")
    p_mat.add_argument("--out", default="reports", help="directory for the three CSVs")
    p_mat.add_argument("--snr", type=float, default=None)
    p_mat.add_argument("--reps", type=int, default=None)
    p_mat.add_argument("--seed", type=int, default=None)

    p_rep = sub.add_parser("report", help="merge result CSVs")
    p_rep.add_argument("inputs", nargs="+", help="input report CSVs")
    p_rep.add_argument("--out", required=True, help="merged CSV path")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            cmd_simulate(args.config, args.out, args.seed)
        elif args.command == "calibrate":
            cmd_calibrate(args)
        elif args.command == "experiment":
            cmd_experiment(args)
        elif args.command == "matrix":
            cmd_matrix(args)
        elif args.command == "report":
            cmd_report(args)
    except M2MError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
