"""Row-wise numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports and ``MIXUPE_NUMBA`` is not set
to ``0``/``false``/``off``. Both paths compute the same quantities; results
agree to rounding, not bitwise, so a single process should stick to one.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("MIXUPE_NUMBA", "1").strip().lower() in {"0", "false", "off", "no"}

try:
    if _DISABLED:
        raise ImportError("numba disabled by MIXUPE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------


def np_logsumexp_rows(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1, keepdims=True)
    return m + np.log(np.exp(a - m).sum(axis=1, keepdims=True))


def np_softmax_rows(a: np.ndarray) -> np.ndarray:
    e = np.exp(a - a.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def np_sigmoid(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def np_softplus(a: np.ndarray) -> np.ndarray:
    return np.maximum(a, 0.0) + np.log1p(np.exp(-np.abs(a)))


def np_mix_rows(x: np.ndarray, perm: np.ndarray, lam: float) -> np.ndarray:
    return lam * x + (1.0 - lam) * x[perm]


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def nb_logsumexp_rows(a):
        m, c = a.shape
        out = np.empty((m, 1))
        for i in range(m):
            mx = a[i, 0]
            for j in range(1, c):
                if a[i, j] > mx:
                    mx = a[i, j]
            s = 0.0
            for j in range(c):
                s += np.exp(a[i, j] - mx)
            out[i, 0] = mx + np.log(s)
        return out

    @njit(cache=True)
    def nb_softmax_rows(a):
        m, c = a.shape
        out = np.empty((m, c))
        for i in range(m):
            mx = a[i, 0]
            for j in range(1, c):
                if a[i, j] > mx:
                    mx = a[i, j]
            s = 0.0
            for j in range(c):
                e = np.exp(a[i, j] - mx)
                out[i, j] = e
                s += e
            for j in range(c):
                out[i, j] /= s
        return out

    @njit(cache=True)
    def _nb_sigmoid_flat(a):
        out = np.empty_like(a)
        for k in range(a.size):
            v = a[k]
            if v >= 0:
                out[k] = 1.0 / (1.0 + np.exp(-v))
            else:
                e = np.exp(v)
                out[k] = e / (1.0 + e)
        return out

    @njit(cache=True)
    def _nb_softplus_flat(a):
        out = np.empty_like(a)
        for k in range(a.size):
            v = a[k]
            out[k] = max(v, 0.0) + np.log1p(np.exp(-abs(v)))
        return out

    @njit(cache=True)
    def nb_mix_rows(x, perm, lam):
        m, d = x.shape
        out = np.empty((m, d))
        b = 1.0 - lam
        for i in range(m):
            p = perm[i]
            for j in range(d):
                out[i, j] = lam * x[i, j] + b * x[p, j]
        return out

    def nb_sigmoid(a):
        return _nb_sigmoid_flat(np.ascontiguousarray(a).ravel()).reshape(a.shape)

    def nb_softplus(a):
        return _nb_softplus_flat(np.ascontiguousarray(a).ravel()).reshape(a.shape)

    def _contig(fn):
        def wrapped(a, *args):
            return fn(np.ascontiguousarray(a, dtype=np.float64), *args)

        wrapped.__name__ = fn.__name__
        return wrapped

    logsumexp_rows = _contig(nb_logsumexp_rows)
    softmax_rows = _contig(nb_softmax_rows)
    sigmoid = nb_sigmoid
    # numpy's vectorised log1p/exp beats the scalar loop here at every size we
    # benchmarked, so softplus stays on numpy even with numba on.
    softplus = np_softplus

    def mix_rows(x, perm, lam):
        return nb_mix_rows(
            np.ascontiguousarray(x, dtype=np.float64), np.asarray(perm, dtype=np.int64), float(lam)
        )

    BACKEND = "numba"
else:
    logsumexp_rows = np_logsumexp_rows
    softmax_rows = np_softmax_rows
    sigmoid = np_sigmoid
    softplus = np_softplus
    mix_rows = np_mix_rows
    BACKEND = "numpy"


__all__ = [
    "BACKEND",
    "HAVE_NUMBA",
    "logsumexp_rows",
    "mix_rows",
    "np_logsumexp_rows",
    "np_mix_rows",
    "np_sigmoid",
    "np_softmax_rows",
    "np_softplus",
    "sigmoid",
    "softmax_rows",
    "softplus",
]
