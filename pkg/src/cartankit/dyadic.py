"""Dyadic tower at finite resolution.

Level ``N`` has ``2^N`` cells of ``[0, 1)`` with weight ``2^-N``, all in one
class, and the trivial cocycle. A symbol is a ``2^N x 2^N`` matrix ``a[k, l]``
indexed by 0-based cells; the pair ``(k, l)`` sits on the shifted diagonal
with shift ``(l - k) mod 2^N``. Twisted convolution is then matrix
multiplication and ``||L(a)||`` is the spectral norm of ``a``.

The level-``n`` matrix units are ``E_ij (x) I_m`` with ``m = 2^(N-n)``, and
``E_n`` averages a symbol over each such unit's support.

At level ``N`` the constant symbol 1 is the all-ones matrix, ``2^N`` times the
projection onto constants, so ``||L(1)|| = 2^N`` grows without bound. Only
as a multiplier (the identity map) does it survive the limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from .relation import Cocycle, FiniteSpace, FMRelation, Relation, inverse_counting_measure, right_counting_measure

MAX_LEVEL = 12


class LevelError(ValueError):
    pass


@dataclass(frozen=True)
class DyadicLevel:
    N: int

    def __post_init__(self):
        if not 0 <= self.N <= MAX_LEVEL:
            raise LevelError(f"level must lie in [0, {MAX_LEVEL}], got {self.N}")

    @property
    def size(self) -> int:
        return 1 << self.N

    @cached_property
    def fm(self) -> FMRelation:
        n = self.size
        space = FiniteSpace(tuple(f"c{k}" for k in range(n)), np.full(n, 1.0 / n))
        return FMRelation(space, Relation.full(n), Cocycle.trivial())

    def shift(self, k: int, l: int) -> int:
        return (l - k) % self.size

    def shift_matrix(self) -> np.ndarray:
        idx = np.arange(self.size)
        return (idx[None, :] - idx[:, None]) % self.size

    def block_width(self, n: int) -> int:
        _check_level(n, self.N)
        return 1 << (self.N - n)

    def random_symbol(self, rng: np.random.Generator) -> np.ndarray:
        s = (self.size, self.size)
        return rng.normal(size=s) + 1j * rng.normal(size=s)

    # symbols of the level as pair vectors on the full relation
    def to_pairs(self, a) -> np.ndarray:
        return np.asarray(a, dtype=complex).ravel()

    def from_pairs(self, v) -> np.ndarray:
        return np.asarray(v, dtype=complex).reshape(self.size, self.size)


def _check_level(n: int, N: int):
    if not 0 <= n <= N:
        raise LevelError(f"level {n} is outside 0..{N}")


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] & (a.shape[0] - 1):
        raise ValueError("a dyadic symbol is a square matrix of side 2^N")
    return a


def level_of(a) -> int:
    return int(_as_matrix(a).shape[0]).bit_length() - 1


def matrix_unit(i: int, j: int, n: int, N: int) -> np.ndarray:
    """``chi^n_ij``: indicator of ``{(k, k + (j - i) 2^(N-n)) : k in block i}``."""
    _check_level(n, N)
    if not (0 <= i < 1 << n and 0 <= j < 1 << n):
        raise LevelError(f"unit index ({i}, {j}) out of range at level {n}")
    m = 1 << (N - n)
    size = 1 << N
    out = np.zeros((size, size), dtype=complex)
    ks = np.arange(i * m, (i + 1) * m)
    out[ks, (ks + (j - i) * m) % size] = 1
    return out


def matrix_units(n: int, N: int) -> dict[tuple[int, int], np.ndarray]:
    return {(i, j): matrix_unit(i, j, n, N) for i in range(1 << n) for j in range(1 << n)}


def trace(a) -> complex:
    """``tau(L(a)) = 2^-N sum_k a(k, k)``."""
    a = _as_matrix(a)
    return complex(np.trace(a) / a.shape[0])


def convolve(a, b) -> np.ndarray:
    """``a *_1 b``; with the trivial cocycle this is the matrix product."""
    return _as_matrix(a) @ _as_matrix(b)


def involution(a) -> np.ndarray:
    return _as_matrix(a).conj().T


def schur_product(a, b) -> np.ndarray:
    """Pointwise product of symbols."""
    return _as_matrix(a) * _as_matrix(b)


def op_norm(a) -> float:
    """``||L(a)||``."""
    return float(np.linalg.norm(_as_matrix(a), 2))


def l2_norm(a) -> float:
    """``||a||_2`` for the right counting measure, i.e. ``tau(L(a)* L(a))^1/2``."""
    a = _as_matrix(a)
    return float(np.sqrt(np.sum(np.abs(a) ** 2) / a.shape[0]))


def expectation(a, n: int) -> np.ndarray:
    """``E_n``: replace ``a`` on each ``Delta^n_ij`` by its mean there."""
    a = _as_matrix(a)
    N = level_of(a)
    _check_level(n, N)
    return _kernels.diagonal_average(a, 1 << (N - n))


def in_level(a, n: int, tol: float = 0.0) -> bool:
    """Membership in ``Sigma_n``: supported on level-``n`` units and constant on each."""
    a = _as_matrix(a)
    return bool(np.max(np.abs(expectation(a, n) - a), initial=0.0) <= tol)


def iota(a, n: int, tol: float = 1e-12) -> np.ndarray:
    """``iota_n``: coefficients ``(alpha_ij)`` of ``a`` in the level-``n`` units."""
    a = _as_matrix(a)
    N = level_of(a)
    _check_level(n, N)
    if not in_level(a, n, tol * max(1.0, float(np.abs(a).max(initial=0.0)))):
        raise LevelError(f"symbol is not in Sigma_{n}")
    m = 1 << (N - n)
    return a[::m, ::m].copy()


def iota_inverse(alpha, N: int) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=complex)
    n = alpha.shape[0].bit_length() - 1
    _check_level(n, N)
    return np.kron(alpha, np.eye(1 << (N - n)))


@dataclass
class SchurReport:
    norm_product: float
    norm_a: float
    norm_b: float
    iota_level: int | None = None
    iota_defect: float = 0.0

    @property
    def slack(self) -> float:
        return self.norm_a * self.norm_b - self.norm_product

    def ok(self, tol: float = 1e-10) -> bool:
        return self.slack >= -tol and self.iota_defect <= tol


def schur_product_check(a, b, n: int | None = None) -> SchurReport:
    """``||L(a . b)|| <= ||L(a)|| ||L(b)||``, plus ``iota_n`` compatibility if ``a, b`` lie in ``Sigma_n``."""
    a, b = _as_matrix(a), _as_matrix(b)
    if a.shape != b.shape:
        raise ValueError("symbols must live at the same level")
    ab = schur_product(a, b)
    rep = SchurReport(op_norm(ab), op_norm(a), op_norm(b))
    if n is not None:
        rep.iota_level = n
        rep.iota_defect = float(np.max(np.abs(iota(ab, n) - iota(a, n) * iota(b, n))))
    return rep


# ---------------------------------------------------------------------------
# invariant suite


@dataclass
class Check:
    name: str
    passed: bool
    worst: float  # largest defect, or smallest slack for inequalities
    tol: float

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "worst": self.worst, "tol": self.tol}


@dataclass
class TowerReport:
    N: int
    checks: list[Check] = field(default_factory=list)
    norms: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add_defect(self, name, worst, tol):
        self.checks.append(Check(name, bool(worst <= tol), float(worst), tol))

    def add_slack(self, name, slack, tol):
        self.checks.append(Check(name, bool(slack >= -tol), float(slack), tol))

    def __getitem__(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _unit_symbol(rng, n, N):
    """Random element of ``Sigma_n`` at level ``N``."""
    k = 1 << n
    return iota_inverse(rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k)), N)


def tower_suite(N: int, seed: int = 0, samples: int = 20, schur_pairs: int = 200, l2_samples: int = 100) -> TowerReport:
    lvl = DyadicLevel(N)
    rng = np.random.default_rng(seed)
    rep = TowerReport(N)

    # matrix units: exhaustive products for small n, sampled quadruples above
    worst = 0.0
    for n in range(N + 1):
        units = matrix_units(n, N)
        k = 1 << n
        m = 1 << (N - n)
        for (i, j), e in units.items():
            if not np.array_equal(e, np.kron(np.outer(np.eye(k)[i], np.eye(k)[j]), np.eye(m))):
                worst = 1.0
            worst = max(worst, np.abs(involution(e) - units[(j, i)]).max())
        if k <= 8:
            quads = [(i, j, q, l) for i in range(k) for j in range(k) for q in range(k) for l in range(k)]
        else:
            quads = [tuple(int(v) for v in rng.integers(0, k, 4)) for _ in range(4000)]
            quads += [(i, j, j, l) for i, j, l in rng.integers(0, k, (2000, 3))]
        for i, j, q, l in quads:
            want = units[(i, l)] if j == q else 0.0
            worst = max(worst, np.abs(units[(i, j)] @ units[(q, l)] - want).max())
    rep.add_defect("matrix-units", worst, 0.0)

    worst_tau_units = max(
        abs(trace(e) - (2.0 ** -n if i == j else 0.0))
        for n in range(N + 1)
        for (i, j), e in matrix_units(n, N).items()
    )
    rep.add_defect("trace-of-units", worst_tau_units, 1e-15)

    worst = 0.0
    for _ in range(samples):
        a, b = lvl.random_symbol(rng), lvl.random_symbol(rng)
        worst = max(worst, abs(trace(a @ b) - trace(b @ a)))
    rep.add_defect("trace-property", worst, 1e-12)
    rep.add_defect("trace-unit", abs(trace(np.eye(lvl.size)) - 1), 0.0)

    idem = tau = bimod = pos = tower = 0.0
    norm_slack = np.inf
    for n in range(N + 1):
        for _ in range(samples):
            a = lvl.random_symbol(rng)
            Ea = expectation(a, n)
            idem = max(idem, np.abs(expectation(Ea, n) - Ea).max())
            tau = max(tau, abs(trace(Ea) - trace(a)))
            b, c = _unit_symbol(rng, n, N), _unit_symbol(rng, n, N)
            bimod = max(bimod, np.abs(expectation(b @ a @ c, n) - b @ Ea @ c).max() / max(1.0, op_norm(b) * op_norm(c) * np.abs(a).max()))
            norm_slack = min(norm_slack, op_norm(a) - op_norm(Ea))
            p = a.conj().T @ a
            pos = max(pos, -float(np.linalg.eigvalsh(expectation(p, n)).min()) / max(1.0, op_norm(p)))
            m = int(rng.integers(0, N + 1))
            tower = max(tower, np.abs(expectation(expectation(a, n), m) - expectation(a, min(m, n))).max())
    rep.add_defect("expectation-idempotent", idem, 1e-12)
    rep.add_defect("expectation-trace-preserving", tau, 1e-12)
    rep.add_defect("expectation-bimodular", bimod, 1e-12)
    rep.add_slack("expectation-norm-reducing", norm_slack, 1e-10)
    rep.add_defect("expectation-positive", max(pos, 0.0), 1e-12)
    rep.add_defect("tower-compatibility", tower, 1e-12)

    iso = 0.0
    for n in range(N + 1):
        for _ in range(max(1, samples // 4)):
            k = 1 << n
            alpha = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
            a = iota_inverse(alpha, N)
            iso = max(iso, abs(op_norm(a) - np.linalg.norm(alpha, 2)))
            iso = max(iso, np.abs(iota(a, n) - alpha).max())
    rep.add_defect("iota-isometric", iso, 1e-10)

    # monotone L2 approximation E_n(a) -> a
    worst = -np.inf
    dist = np.zeros(N + 1)
    for _ in range(l2_samples):
        a = lvl.random_symbol(rng)
        d = [l2_norm(expectation(a, n) - a) / l2_norm(a) for n in range(N + 1)]
        dist += np.asarray(d) / max(1, l2_samples)
        worst = max(worst, max((d[i + 1] - d[i] for i in range(N)), default=-np.inf))
    rep.add_defect("l2-approximation-monotone", max(worst, 0.0), 1e-12)

    slack = np.inf
    for _ in range(schur_pairs):
        a, b = lvl.random_symbol(rng), lvl.random_symbol(rng)
        slack = min(slack, schur_product_check(a, b).slack)
    rep.add_slack("schur-product-inequality", slack, 1e-10)

    iw = 0.0
    for n in range(N + 1):
        for _ in range(max(1, samples // 4)):
            r = schur_product_check(_unit_symbol(rng, n, N), _unit_symbol(rng, n, N), n)
            iw = max(iw, r.iota_defect)
    rep.add_defect("schur-iota-compatible", iw, 1e-12)

    # nu = nu^-1 on random subsets of pairs
    fm = lvl.fm
    worst = 0.0
    for _ in range(samples):
        mask = rng.random(fm.n_pairs) < 0.3
        E = [fm.rel.pairs[p] for p in np.flatnonzero(mask)]
        worst = max(worst, abs(right_counting_measure(fm.space, fm.rel, E) - inverse_counting_measure(fm.space, fm.rel, E)))
    rep.add_defect("measure-symmetric", worst, 1e-15)

    # empirical rate of E_n(a) -> a; only monotonicity is asserted
    rep.norms = {
        "identity": op_norm(np.eye(lvl.size)),
        "mean_relative_l2_error_by_level": [float(v) for v in dist],
        "schur_min_slack": float(slack),
    }
    return rep
