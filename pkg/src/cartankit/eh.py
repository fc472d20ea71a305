"""Finite-rank extended Haagerup tensors and the gamma_2 factorization norm.

The factorization norm of a pattern ``P`` is the semidefinite program

    minimise t  subject to  [[X, P], [P*, Y]] >= 0,  diag X <= t,  diag Y <= t.

Its optimum equals the Schur multiplier norm of ``P`` and also equals

    max over probability vectors lam, mu of || diag(lam)^1/2 P diag(mu)^1/2 ||_trace.

Each solve reports both an explicit factorization ``P = A B*`` (whose row
norms give the value) and dual weights ``lam, mu`` (whose trace norm gives a
rigorous lower bound), so the gap certifies the value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .relation import FMRelation
from .symbols import ConvOperator, sup_norm

GAP_TOL = 1e-6


class SolverError(RuntimeError):
    """The solver did not converge; carries the best known bracket."""

    def __init__(self, message, lower=float("nan"), upper=float("nan")):
        super().__init__(f"{message} (bracket [{lower!r}, {upper!r}])")
        self.lower = lower
        self.upper = upper


@dataclass
class Gamma2Result:
    value: float  # primal bound: max row norm x max column norm of the factorization
    lower: float  # certified dual bound
    left: np.ndarray  # rows are the vectors attached to pattern rows
    right: np.ndarray  # rows are the vectors attached to pattern columns
    lam: np.ndarray | None = None  # dual row weights, summing to 1
    mu: np.ndarray | None = None  # dual column weights, summing to 1
    iterations: int = 0
    method: str = "fixed-point"
    pattern: np.ndarray | None = field(default=None, repr=False)

    @property
    def gap(self) -> float:
        return max(0.0, self.value - self.lower)

    @property
    def rank(self) -> int:
        return int(self.left.shape[1])

    def witness(self) -> np.ndarray:
        """Dual matrix ``Z`` with ``[[diag lam/2, Z], [Z*, diag mu/2]] >= 0``."""
        if self.lam is None:
            raise ValueError("no dual weights recorded")
        K = np.sqrt(self.lam)[:, None] * self.pattern * np.sqrt(self.mu)[None, :]
        U, _, Vh = np.linalg.svd(K, full_matrices=False)
        return 0.5 * np.sqrt(self.lam)[:, None] * (U @ Vh) * np.sqrt(self.mu)[None, :]


def dual_lower_bound(P, lam, mu, Z) -> float:
    """Weak-duality bound ``2 |tr(Z* P)|`` after forcing ``(lam, mu, Z)`` feasible."""
    P = np.asarray(P, dtype=complex)
    lam = np.clip(np.real(np.asarray(lam, dtype=complex)), 0.0, None)
    mu = np.clip(np.real(np.asarray(mu, dtype=complex)), 0.0, None)
    Z = np.asarray(Z, dtype=complex)
    s = lam.sum() + mu.sum()
    if s <= 0:
        return 0.0
    lam, mu, Z = lam / s, mu / s, Z / s
    floor = 1e-300
    C = Z / np.sqrt(np.maximum(lam, floor))[:, None] / np.sqrt(np.maximum(mu, floor))[None, :]
    c = np.linalg.norm(C, 2) if C.size else 0.0
    if c > 1:
        Z = Z / c
    return float(2 * abs(np.vdot(Z, P)))


def gamma2(P, tol: float = 1e-10, max_iter: int = 20000, method: str = "auto") -> Gamma2Result:
    """Factorization (gamma_2) norm of a dense pattern, with both certificates.

    The default solver ascends the concave dual
    ``(lam, mu) -> || diag(lam)^1/2 P diag(mu)^1/2 ||_trace`` over pairs of
    probability vectors by the multiplicative update ``lam_i <- (|K*|)_ii``.
    Every iterate yields an exact factorization ``P = A B*`` (upper bound) and
    a dual witness (lower bound). If the bracket does not close to ``tol`` the
    interior-point SDP is used instead.
    """
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    n, m = P.shape
    if n == 0 or m == 0 or not np.any(P):
        return Gamma2Result(0.0, 0.0, np.zeros((n, 0)), np.zeros((m, 0)))
    if method not in ("auto", "fixed-point", "interior"):
        raise ValueError(f"unknown gamma2 method {method!r}")
    if method != "interior":
        res = _gamma2_fixed_point(P, tol, max_iter)
        if res.gap <= max(tol, GAP_TOL * 1e-2) or method == "fixed-point":
            res.pattern = P
            return res
    res = _gamma2_interior(P)
    res.pattern = P
    return res


def _gamma2_fixed_point(P, tol, max_iter, depth=0):
    n, m = P.shape
    lam = np.full(n, 1.0 / n)
    mu = np.full(m, 1.0 / m)
    up_best, state = np.inf, None
    low_best, dual = 0.0, None
    floor = 1e-30
    for it in range(max_iter + 1):
        sl, sm = np.sqrt(lam), np.sqrt(mu)
        K = sl[:, None] * P * sm[None, :]
        U, s, Vh = np.linalg.svd(K, full_matrices=False)
        low = float(s.sum())
        d = (np.abs(U) ** 2) @ s
        e = (np.abs(Vh.T) ** 2) @ s
        # row norms of the factorization diag(lam)^-1/2 U S^1/2, diag(mu)^-1/2 V S^1/2
        up = float(np.sqrt(np.max(d / lam) * np.max(e / mu)))
        if up < up_best:
            up_best, state = up, (U, s, Vh, lam.copy(), mu.copy())
        if low >= low_best:
            low_best, dual = low, (lam.copy(), mu.copy())
        if up_best - low_best <= tol:
            break
        lam = np.maximum(d / d.sum(), floor)
        lam /= lam.sum()
        mu = np.maximum(e / e.sum(), floor)
        mu /= mu.sum()
    value, A, B = min(
        (_materialize(P, *state, depth=depth, wtol=w, stol=w * 1e-4) for w in _SUPPORT_TOLS),
        key=lambda c: c[0],
    )
    lam_b, mu_b = dual
    return Gamma2Result(value, min(low_best, value), A, B, lam_b, mu_b, iterations=it, method="fixed-point")


def _row_sq(M):
    return np.sum(np.abs(M) ** 2, axis=1)


_SUPPORT_TOLS = (1e-9, 1e-7, 1e-5, 1e-3)


def _materialize(P, U, s, Vh, lam, mu, depth=0, wtol=1e-9, stol=1e-13):
    """An explicit ``P = A B*`` from dual weights, valued by its actual row norms.

    Rows and columns with non-negligible weight come straight from the SVD of
    ``K``; the others are solved for by least squares. Whatever the reduced rank
    cannot reach lives in the corner (zero-weight rows x zero-weight columns),
    which is a smaller factorization problem with per-row budgets.
    """
    n, m = P.shape
    keep = s > s[0] * stol
    root = np.sqrt(s[keep])
    V = Vh[keep].conj().T
    I = lam > wtol * lam.max()
    J = mu > wtol * mu.max()
    A = np.zeros((n, root.size), dtype=complex)
    B = np.zeros((m, root.size), dtype=complex)
    A[I] = U[I][:, keep] * root / np.sqrt(lam[I])[:, None]
    B[J] = V[J] * root / np.sqrt(mu[J])[:, None]
    if (~I).any():
        A[~I] = np.linalg.lstsq(B[J].conj(), P[np.ix_(~I, J)].T, rcond=None)[0].T
    if (~J).any():
        B[~J] = np.linalg.lstsq(A[I], P[np.ix_(I, ~J)], rcond=None)[0].conj().T
    A, B = _balance(A, B)
    R = np.zeros_like(P)
    R[np.ix_(~I, ~J)] = (P - A @ B.conj().T)[np.ix_(~I, ~J)]
    scale = max(1.0, float(np.abs(P).max()))
    if np.abs(R).max(initial=0.0) > 1e-14 * scale:
        cands = [_corner_svd(A, B, R)]
        t = _row_sq(A).max()
        alpha, beta = t - _row_sq(A), t - _row_sq(B)
        rows, cols = ~I, ~J
        if depth < 4 and alpha[rows].min() > 1e-12 * t and beta[cols].min() > 1e-12 * t:
            Rc = R[np.ix_(rows, cols)]
            sa, sb = np.sqrt(alpha[rows]), np.sqrt(beta[cols])
            sub = _gamma2_fixed_point(Rc / sa[:, None] / sb[None, :], 1e-12, 5000, depth + 1)
            Ar = np.zeros((n, sub.rank), dtype=complex)
            Br = np.zeros((m, sub.rank), dtype=complex)
            Ar[rows] = sa[:, None] * sub.left
            Br[cols] = sb[:, None] * sub.right
            cands.append((Ar, Br))
        best = None
        for Ar, Br in cands:
            A2, B2 = _balance(np.hstack([A, Ar]), np.hstack([B, Br]))
            v = float(np.sqrt(_row_sq(A2).max() * _row_sq(B2).max()))
            if best is None or v < best[0]:
                best = (v, A2, B2)
        _, A, B = best
    if np.abs(A @ B.conj().T - P).max() > 1e-9 * scale:
        return _factor_trivial(P)
    return float(np.sqrt(_row_sq(A).max() * _row_sq(B).max())), A, B


def _balance(A, B):
    # equal max row norms on both sides
    ra, rb = _row_sq(A).max(), _row_sq(B).max()
    if ra == 0 or rb == 0:
        return A, B
    c = (rb / ra) ** 0.25
    return A * c, B / c


def _corner_svd(A, B, R):
    """Corner factor ``R = Ar Br*`` from its SVD with a tuned scalar balance."""
    from scipy.optimize import minimize_scalar

    Ur, sr, Vrh = np.linalg.svd(R, full_matrices=False)
    k = sr > sr[0] * 1e-13
    Ar = Ur[:, k] * np.sqrt(sr[k])
    Br = Vrh[k].conj().T * np.sqrt(sr[k])
    a0, b0, a1, b1 = _row_sq(A), _row_sq(B), _row_sq(Ar), _row_sq(Br)

    def cost(lc):
        return np.max(a0 + np.exp(2 * lc) * a1) * np.max(b0 + np.exp(-2 * lc) * b1)

    lc = minimize_scalar(cost, bounds=(-30, 30), method="bounded", options={"xatol": 1e-12}).x
    return Ar * np.exp(lc), Br * np.exp(-lc)


def _factor_trivial(P):
    # P = I . P, so the value is the largest column norm
    return float(np.linalg.norm(P, axis=0).max()), np.eye(P.shape[0], dtype=complex), P.conj().T


_SOLVER_OPTS = dict(
    tol_gap_abs=1e-11,
    tol_gap_rel=1e-11,
    tol_feas=1e-11,
    tol_ktratio=1e-9,
    max_iter=400,
)


def _gamma2_interior(P) -> Gamma2Result:
    import cvxpy as cp

    n, m = P.shape
    is_real = not np.any(np.abs(P.imag) > 0)
    N = n + m
    if is_real:
        W = cp.Variable((N, N), symmetric=True)
        Pc = P.real
    else:
        W = cp.Variable((N, N), hermitian=True)
        Pc = P
    t = cp.Variable()
    link = W[:n, n:] == Pc
    re = (lambda e: e) if is_real else cp.real
    dX = re(cp.diag(W[:n, :n])) <= t
    dY = re(cp.diag(W[n:, n:])) <= t
    prob = cp.Problem(cp.Minimize(t), [W >> 0, link, dX, dY])
    try:
        prob.solve(solver=cp.CLARABEL, **_SOLVER_OPTS)
    except cp.error.SolverError as exc:
        raise SolverError(f"gamma2 SDP failed: {exc}", 0.0, _trivial_upper(P)) from exc
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or W.value is None:
        raise SolverError(f"gamma2 SDP status {prob.status}", 0.0, _trivial_upper(P))
    lower = dual_lower_bound(P, dX.dual_value, dY.dual_value, link.dual_value)
    Wv = np.asarray(W.value, dtype=complex)
    Wv = 0.5 * (Wv + Wv.conj().T)
    w, V = np.linalg.eigh(Wv)
    keep = w > 1e-9 * max(w.max(), 1.0)
    G = V[:, keep] * np.sqrt(w[keep])
    value = max(float(t.value), lower)
    lam = np.real(np.asarray(dX.dual_value, dtype=complex))
    mu = np.real(np.asarray(dY.dual_value, dtype=complex))
    tot = lam.sum() + mu.sum()
    if tot > 0:
        lam, mu = np.clip(lam, 0, None) / max(lam.sum(), 1e-300), np.clip(mu, 0, None) / max(mu.sum(), 1e-300)
    return Gamma2Result(value, lower, G[:n], G[n:], lam, mu, method="interior")


def _trivial_upper(P) -> float:
    # P = I . P: rows of P against the standard basis
    P = np.asarray(P)
    return float(max(np.linalg.norm(P, axis=1).max(), 1.0) if P.size else 0.0)


# ---------------------------------------------------------------------------
# tensors


@dataclass
class EhTensor:
    """``u = sum_i a_i (x) b_i`` with per-atom functions ``a_i``, ``b_i``."""

    left: np.ndarray  # (rank, n_atoms)
    right: np.ndarray  # (rank, n_atoms)

    def __post_init__(self):
        self.left = np.atleast_2d(np.asarray(self.left, dtype=complex))
        self.right = np.atleast_2d(np.asarray(self.right, dtype=complex))
        if self.left.shape != self.right.shape:
            raise ValueError("left and right factor lists must have the same shape")

    @classmethod
    def elementary(cls, a, b) -> "EhTensor":
        return cls(np.asarray(a)[None, :], np.asarray(b)[None, :])

    @classmethod
    def random(cls, rng: np.random.Generator, n_atoms: int, rank: int) -> "EhTensor":
        shape = (rank, n_atoms)
        return cls(
            rng.normal(size=shape) + 1j * rng.normal(size=shape),
            rng.normal(size=shape) + 1j * rng.normal(size=shape),
        )

    @property
    def rank(self) -> int:
        return self.left.shape[0]

    def row_bound(self) -> float:
        """``|| sum_i |a_i|^2 ||_inf``."""
        return float(np.max(np.sum(np.abs(self.left) ** 2, axis=0)))

    def col_bound(self) -> float:
        """``|| sum_i |b_i|^2 ||_inf``."""
        return float(np.max(np.sum(np.abs(self.right) ** 2, axis=0)))

    def representation_bound(self) -> float:
        """Norm bound carried by this particular representation."""
        return float(np.sqrt(self.row_bound() * self.col_bound()))

    def full_function(self) -> np.ndarray:
        """``f_u(x, y) = sum_i a_i(x) b_i(y)`` on all of X x X."""
        return self.left.T @ self.right


def multiplier_from_tensor(fm: FMRelation, u: EhTensor) -> np.ndarray:
    """``phi_u``: the restriction of ``f_u`` to the relation."""
    px, py = fm.rel.pair_x, fm.rel.pair_y
    return np.sum(u.left[:, px] * u.right[:, py], axis=0)


def psi_action(fm: FMRelation, u: EhTensor, T):
    """``Psi_u(T) = sum_i D(a_i) T D(b_i)`` for any matrix on L^2(R, nu)."""
    px = fm.rel.pair_x
    wrap = isinstance(T, ConvOperator)
    M = T.matrix if wrap else T
    acc = None
    for a, b in zip(u.left, u.right):
        term = sp.diags(a[px]) @ M @ sp.diags(b[px])
        acc = term if acc is None else acc + term
    if acc is None:
        acc = M * 0
    if wrap:
        return ConvOperator(fm, acc)
    return acc.toarray() if sp.issparse(acc) and not sp.issparse(T) else acc


@dataclass
class EhNorm:
    value: float
    lower: float
    blocks: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return max(0.0, self.value - self.lower)

    @property
    def rank(self) -> int:
        return max((r.rank for r in self.blocks), default=0)


def pattern_norm(patterns) -> EhNorm:
    """Max of gamma_2 over a list of block patterns."""
    res = [gamma2(P) for P in patterns]
    if not res:
        return EhNorm(0.0, 0.0, [])
    return EhNorm(max(r.value for r in res), max(r.lower for r in res), res)


def eh_norm(fm: FMRelation, u: EhTensor, restrict: bool = True) -> EhNorm:
    """Factorization norm of ``u``.

    With ``restrict`` the entries of ``f_u`` off the relation are left free,
    which splits the problem into one gamma_2 per block; otherwise the full
    function on X x X is used.
    """
    f = u.full_function()
    if not restrict:
        return pattern_norm([f])
    return pattern_norm([f[np.ix_(b, b)] for b in fm.rel.blocks])


def eh_norm_lower_bound(fm: FMRelation, phi) -> float:
    """``||M(phi)||``, a lower bound for the eh norm of any tensor representing phi."""
    from .schur import multiplier_norm

    return multiplier_norm(fm, phi).value


def tensor_from_pattern(fm: FMRelation, phi, restrict: bool = True) -> EhTensor:
    """A tensor representing ``phi`` whose rank-bound meets gamma_2 per block."""
    n = fm.n
    lefts, rights = [], []
    for b, block in enumerate(fm.rel.blocks):
        res = gamma2(fm.rel.block_matrix(phi, b))
        if res.rank == 0:
            continue
        A = np.zeros((res.rank, n), dtype=complex)
        B = np.zeros((res.rank, n), dtype=complex)
        A[:, list(block)] = res.left.T
        B[:, list(block)] = np.conj(res.right).T
        lefts.append(A)
        rights.append(B)
    if not lefts:
        return EhTensor(np.zeros((1, n)), np.zeros((1, n)))
    return EhTensor(np.vstack(lefts), np.vstack(rights))


def sup_norm_of_tensor(fm: FMRelation, u: EhTensor) -> float:
    return sup_norm(multiplier_from_tensor(fm, u))
