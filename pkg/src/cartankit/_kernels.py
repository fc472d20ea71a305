"""Hot inner loops, compiled with numba when available.

Every kernel has a pure-numpy twin. The active backend is chosen once at
import time from ``CARTANKIT_BACKEND`` (``numba`` or ``numpy``); when the
variable is unset, numba is used if it imports cleanly. Both twins are always
importable as ``<name>_numpy`` / ``<name>_numba`` so benchmarks and tests can
compare them directly.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False


def _requested_backend() -> str:
    want = os.environ.get("CARTANKIT_BACKEND", "").strip().lower()
    if want in ("", "auto"):
        return "numba" if HAVE_NUMBA else "numpy"
    if want not in ("numba", "numpy"):
        raise ValueError(f"CARTANKIT_BACKEND must be 'numba' or 'numpy', got {want!r}")
    if want == "numba" and not HAVE_NUMBA:
        raise ImportError("CARTANKIT_BACKEND=numba but numba is not installed")
    return want


BACKEND = _requested_backend()

if HAVE_NUMBA:
    _threads = os.environ.get("CARTANKIT_THREADS")
    if _threads:
        numba.set_num_threads(max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS)))


# ---------------------------------------------------------------------------
# cocycle identity  sigma(x,y,z) sigma(x,z,w) = sigma(x,y,w) sigma(y,z,w)


def cocycle_defect_numpy(S):
    """Largest |lhs - rhs| of the cocycle identity over one block, with argmax."""
    lhs = S[:, :, :, None] * S[:, None, :, :]
    rhs = S[:, :, None, :] * S[None, :, :, :]
    d = np.abs(lhs - rhs)
    flat = int(np.argmax(d))
    x, y, z, w = np.unravel_index(flat, d.shape)
    return float(d.flat[flat]), int(x), int(y), int(z), int(w)


def _cocycle_defect_loop(S):
    m = S.shape[0]
    best = 0.0
    bx = by = bz = bw = 0
    for x in range(m):
        for y in range(m):
            for z in range(m):
                sxyz = S[x, y, z]
                for w in range(m):
                    d = abs(sxyz * S[x, z, w] - S[x, y, w] * S[y, z, w])
                    if d > best:
                        best = d
                        bx, by, bz, bw = x, y, z, w
    return best, bx, by, bz, bw


# ---------------------------------------------------------------------------
# twisted convolution on one block: c(x,z) = sum_y a(x,y) b(y,z) sigma(x,y,z)


def twisted_product_numpy(a, b, S):
    return np.einsum("xy,yz,xyz->xz", a, b, S, optimize=True)


def _twisted_product_loop(a, b, S):
    m = a.shape[0]
    out = np.zeros((m, m), dtype=np.complex128)
    for x in range(m):
        for z in range(m):
            acc = 0j
            for y in range(m):
                acc += a[x, y] * b[y, z] * S[x, y, z]
            out[x, z] = acc
    return out


# ---------------------------------------------------------------------------
# groupoid convolution on Z_n x Z_n: (f*g)(x,t) = sum_r f(x,r) g(x+r, t-r)


def groupoid_convolve_numpy(f, g):
    n = f.shape[0]
    idx = np.arange(n)
    x = idx[:, None, None]
    r = idx[None, :, None]
    t = idx[None, None, :]
    terms = f[x, r] * g[(x + r) % n, (t - r) % n]
    return terms.sum(axis=1)


def _groupoid_convolve_loop(f, g):
    n = f.shape[0]
    out = np.zeros((n, n), dtype=np.complex128)
    for x in range(n):
        for t in range(n):
            acc = 0j
            for r in range(n):
                acc += f[x, r] * g[(x + r) % n, (t - r) % n]
            out[x, t] = acc
    return out


# ---------------------------------------------------------------------------
# dyadic averaging along shifted diagonals.
# Cell k in [0, 2^N), level-n block i = k // m with m = 2^(N-n). The pair
# (k, l) belongs to Delta^n_{ij} iff k // m == i and l - k == (j - i) m.


def diagonal_average_numpy(a, m):
    size = a.shape[0]
    nb = size // m
    out = np.zeros_like(a)
    for i in range(nb):
        rows = np.arange(i * m, (i + 1) * m)
        for j in range(nb):
            cols = rows + (j - i) * m
            vals = a[rows, cols]
            out[rows, cols] = vals.mean()
    return out


def _diagonal_average_loop(a, m):
    size = a.shape[0]
    nb = size // m
    out = np.zeros_like(a)
    for i in range(nb):
        for j in range(nb):
            off = (j - i) * m
            acc = 0j
            for p in range(m):
                k = i * m + p
                acc += a[k, k + off]
            acc /= m
            for p in range(m):
                k = i * m + p
                out[k, k + off] = acc
    return out


if HAVE_NUMBA:
    _jit = njit(cache=True, nogil=True)
    cocycle_defect_numba = _jit(_cocycle_defect_loop)
    twisted_product_numba = _jit(_twisted_product_loop)
    groupoid_convolve_numba = _jit(_groupoid_convolve_loop)
    diagonal_average_numba = _jit(_diagonal_average_loop)
else:  # pragma: no cover
    cocycle_defect_numba = None
    twisted_product_numba = None
    groupoid_convolve_numba = None
    diagonal_average_numba = None


def _pick(name):
    return globals()[f"{name}_{BACKEND}"]


def cocycle_defect(S):
    S = np.ascontiguousarray(S, dtype=np.complex128)
    if S.shape[0] == 0:
        return 0.0, 0, 0, 0, 0
    best, x, y, z, w = _pick("cocycle_defect")(S)
    return float(best), int(x), int(y), int(z), int(w)


def twisted_product(a, b, S):
    return _pick("twisted_product")(
        np.ascontiguousarray(a, dtype=np.complex128),
        np.ascontiguousarray(b, dtype=np.complex128),
        np.ascontiguousarray(S, dtype=np.complex128),
    )


def groupoid_convolve(f, g):
    return _pick("groupoid_convolve")(
        np.ascontiguousarray(f, dtype=np.complex128),
        np.ascontiguousarray(g, dtype=np.complex128),
    )


def diagonal_average(a, m):
    return _pick("diagonal_average")(np.ascontiguousarray(a, dtype=np.complex128), int(m))
