#!/usr/bin/env python3
"""Time both kernel backends (numba njit vs pure numpy) on production shapes.

The two hot kernels are the per-column pulse convolution and the polyphase
rate converter, exercised here exactly as the simulator uses them: one RF
frame at the test machine's native rate (2600 x 256 float32, i.e. a
2080-sample frame regridded from 40 to 50 MHz), that machine's pulse as the
convolution kernel, and the 50 -> 40 MHz (interp 4 / decim 5) resampler.

Run inside the installed package:

    python3 benchmarks/bench_kernels.py [--repeats N]

The numba side is skipped (with a note) when numba is unavailable or
disabled via M2MCALIB_NUMBA=0; both backends are checked to agree before
timing.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from m2mcalib import _kernels as kernels
from m2mcalib import dsp
from m2mcalib import simulate as sim


def best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_case(name, nb_fn, np_fn, repeats):
    out_nb = nb_fn() if kernels.NUMBA_ENABLED else None
    out_np = np_fn()
    if out_nb is not None:
        err = float(np.max(np.abs(out_nb.astype(np.float64) - out_np.astype(np.float64))))
        scale = float(np.max(np.abs(out_np))) or 1.0
        agree = f"max rel diff {err / scale:.2e}"
    else:
        agree = "numba unavailable"
    t_np = best_of(np_fn, repeats)
    t_nb = best_of(nb_fn, repeats) if kernels.NUMBA_ENABLED else float("nan")
    speed = t_np / t_nb if kernels.NUMBA_ENABLED else float("nan")
    print(
        f"{name:<28} numpy {t_np * 1e3:8.2f} ms   "
        f"numba {t_nb * 1e3:8.2f} ms   speedup {speed:5.2f}x   ({agree})"
    )


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5, help="timing repeats (best-of)")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    native = np.ascontiguousarray(rng.standard_normal((2600, 256)).astype(np.float32))
    pulse = sim.pulse_waveform(sim.TEST_MACHINE)
    spec = dsp.design_multirate_fir(4, 5)
    print(
        f"backend flag: {kernels.backend_name()}   "
        f"frame {native.shape}, pulse {len(pulse)} taps, "
        f"resampler {spec.interp}/{spec.decim} with {len(spec.taps)} taps"
    )
    if kernels.NUMBA_ENABLED:
        kernels.warmup()

    taps64 = np.asarray(pulse, dtype=np.float64)
    bench_case(
        "conv_same_columns",
        lambda: kernels._conv_same_columns_nb(native, taps64, np.empty_like(native)),
        lambda: kernels._conv_same_columns_np(native, taps64, np.empty_like(native)),
        args.repeats,
    )

    n_out = -(-native.shape[0] * spec.interp // spec.decim)
    delay = (len(spec.taps) - 1) // 2
    branches = kernels._branch_matrix(spec.taps, spec.interp)
    bench_case(
        "polyphase_columns (4/5)",
        lambda: kernels._polyphase_columns_nb(
            native, branches, spec.interp, spec.decim, delay,
            np.empty((n_out, native.shape[1]), dtype=native.dtype),
        ),
        lambda: kernels._polyphase_columns_np(
            native, spec.taps, spec.interp, spec.decim, delay,
            np.empty((n_out, native.shape[1]), dtype=native.dtype),
        ),
        args.repeats,
    )


if __name__ == "__main__":
    main()
