"""Hot numeric kernels: axial convolution and polyphase resampling.

Two interchangeable backends compute identical quantities:

* numba ``@njit`` kernels (default when numba imports cleanly), and
* pure-numpy fallbacks.

Set ``M2MCALIB_NUMBA=0`` in the environment to force the numpy path.
``benchmarks/bench_kernels.py`` times both on the production shapes.

Both backends accumulate in float64 and return the input dtype, so results
agree to roundoff (well inside the 1e-6 equivalence contract).
"""

import os

import numpy as np

_flag = os.environ.get("M2MCALIB_NUMBA", "1").strip().lower()
_want_numba = _flag not in ("0", "false", "no", "off")

try:
    if not _want_numba:
        raise ImportError("disabled via M2MCALIB_NUMBA")
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):  # no-op decorator stand-in
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


# ---- convolution, 'same' mode, along axis 0 of a 2-D array ----

@njit(cache=True)
def _conv_same_columns_nb(x, taps, out):
    n, m = x.shape
    L = taps.shape[0]
    half = (L - 1) // 2
    pad = L - 1
    buf = np.zeros(n + 2 * pad, dtype=np.float64)
    for j in range(m):
        for i in range(n):
            buf[pad + i] = x[i, j]
        for i in range(n):
            acc = 0.0
            base = i + half + pad
            for k in range(L):
                acc += taps[k] * buf[base - k]
            out[i, j] = acc
    return out


def _conv_same_columns_np(x, taps, out):
    xt = np.asarray(x, dtype=np.float64)
    t = np.asarray(taps, dtype=np.float64)
    for j in range(x.shape[1]):
        out[:, j] = np.convolve(xt[:, j], t, mode="same")
    return out


def conv_same_columns(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Per-column 'same' convolution of a 2-D array with a 1-D kernel."""
    out = np.empty_like(x)
    taps64 = np.asarray(taps, dtype=np.float64)
    if NUMBA_ENABLED:
        return _conv_same_columns_nb(x, taps64, out)
    return _conv_same_columns_np(x, taps64, out)


# ---- polyphase resampling along axis 0 ----

@njit(cache=True)
def _polyphase_columns_nb(x, branches, interp, decim, delay, out):
    n, m = x.shape
    bl = branches.shape[1]
    n_out = out.shape[0]
    pad = bl + 1
    buf = np.zeros(n + 2 * pad, dtype=np.float64)
    for j in range(m):
        for i in range(n):
            buf[pad + i] = x[i, j]
        for i in range(n_out):
            c = i * decim + delay
            p = c % interp
            base = c // interp + pad
            acc = 0.0
            for t in range(bl):
                acc += branches[p, t] * buf[base - t]
            out[i, j] = acc
    return out


def _polyphase_columns_np(x, taps, interp, decim, delay, out):
    n = x.shape[0]
    n_up = n * interp
    xt = np.asarray(x, dtype=np.float64)
    t = np.asarray(taps, dtype=np.float64)
    xs = np.zeros(n_up, dtype=np.float64)
    for j in range(x.shape[1]):
        xs[:] = 0.0
        xs[::interp] = xt[:, j]
        out[:, j] = np.convolve(xs, t)[delay : delay + n_up : decim]
    return out


def _branch_matrix(taps: np.ndarray, interp: int) -> np.ndarray:
    # branch p holds taps[p::interp], zero-padded to a common length
    L = len(taps)
    bl = -(-L // interp)
    br = np.zeros((interp, bl), dtype=np.float64)
    for p in range(interp):
        b = taps[p::interp]
        br[p, : len(b)] = b
    return br


def polyphase_columns(
    x: np.ndarray, taps: np.ndarray, interp: int, decim: int
) -> np.ndarray:
    """Rational-rate conversion (up ``interp``, FIR, down ``decim``) per column.

    Output row count is ceil(n * interp / decim); group delay of the
    (odd, symmetric) filter is compensated so content stays aligned.
    """
    n = x.shape[0]
    n_out = -(-n * interp // decim)
    delay = (len(taps) - 1) // 2
    out = np.empty((n_out, x.shape[1]), dtype=x.dtype)
    if NUMBA_ENABLED:
        br = _branch_matrix(np.asarray(taps, dtype=np.float64), interp)
        return _polyphase_columns_nb(x, br, interp, decim, delay, out)
    return _polyphase_columns_np(x, taps, interp, decim, delay, out)


def warmup() -> None:
    """Trigger JIT compilation on tiny inputs (no-op for the numpy path)."""
    x = np.zeros((8, 2), dtype=np.float32)
    conv_same_columns(x, np.asarray([0.25, 0.5, 0.25]))
    polyphase_columns(x, np.asarray([0.2, 0.6, 0.2]), 2, 3)
