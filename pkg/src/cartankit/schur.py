"""Schur multipliers ``M(phi): L(a) -> L(phi a)`` and bimodule maps.

A linear map on ``M(R, sigma)`` is described by a :class:`BimoduleMapProbe`,
its matrix of coefficients against the canonical basis ``{L(chi_p)}``. The map
is a masa-bimodule map exactly when that matrix is diagonal, and then the
diagonal is the multiplier symbol.

Norms reduce to classical Schur multipliers: on a block ``B`` the operator
``L(a)`` restricted to any fibre is the matrix ``a_B`` twisted entrywise by a
unimodular pattern, so ``||M(phi)||`` is the maximum over blocks of the
factorization norm of ``phi_B``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .eh import Gamma2Result, gamma2
from .relation import Cocycle, FiniteSpace, FMRelation, Relation
from .symbols import (
    ConvOperator,
    as_symbol,
    build_operator,
    graph_partition,
    graph_symbol,
    operator_norm,
    symbol_of,
)

BIMODULE_TOL = 1e-12


class NotBimoduleError(ValueError):
    """A symbol was requested for a map that is not a bimodule map."""


def apply_multiplier(fm: FMRelation, phi, T: ConvOperator) -> ConvOperator:
    """``M(phi)(T) = L(phi s(T))``."""
    if T.fm is not fm and T.fm.rel != fm.rel:
        raise ValueError("multiplier and operator live on different relations")
    return build_operator(fm, as_symbol(fm, phi) * symbol_of(T))


# ---------------------------------------------------------------------------
# linear maps on the algebra


@dataclass
class BimoduleMapProbe:
    """``Phi(L(chi_p)) = sum_q coeffs[q, p] L(chi_q)``."""

    fm: FMRelation
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        n = self.fm.n_pairs
        if self.coeffs.shape != (n, n):
            raise ValueError(f"coefficient matrix must be {n}x{n}")

    @classmethod
    def from_function(cls, fm: FMRelation, func, tol: float = 1e-10) -> "BimoduleMapProbe":
        """Probe ``func`` on every basis operator; outputs must stay in the algebra."""
        n = fm.n_pairs
        C = np.empty((n, n), dtype=complex)
        for p in range(n):
            e = np.zeros(n, dtype=complex)
            e[p] = 1
            C[:, p] = symbol_of(func(build_operator(fm, e)), check=True, tol=tol)
        return cls(fm, C)

    @classmethod
    def identity(cls, fm: FMRelation) -> "BimoduleMapProbe":
        return cls(fm, np.eye(fm.n_pairs))

    @classmethod
    def multiplier(cls, fm: FMRelation, phi) -> "BimoduleMapProbe":
        return cls(fm, np.diag(as_symbol(fm, phi)))

    @classmethod
    def transpose(cls, fm: FMRelation) -> "BimoduleMapProbe":
        """Matrix transpose in the pair basis (stays in the algebra for uniform, untwisted blocks)."""
        return cls.from_function(fm, lambda T: ConvOperator(fm, T.matrix.T))

    def apply_symbol(self, a) -> np.ndarray:
        return self.coeffs @ as_symbol(self.fm, a)

    def __call__(self, T: ConvOperator) -> ConvOperator:
        return build_operator(self.fm, self.apply_symbol(symbol_of(T)))

    def norm(self) -> float:
        """``||Phi||``: exact for bimodule maps, otherwise a sampled lower bound."""
        if is_bimodule_map(self).ok:
            return multiplier_norm(self.fm, np.diag(self.coeffs)).value
        rng = np.random.default_rng(0)
        best = 0.0
        n = self.fm.n_pairs
        tests = [np.eye(n)[p] for p in range(n)]
        tests += [rng.normal(size=n) + 1j * rng.normal(size=n) for _ in range(32)]
        for a in tests:
            T = build_operator(self.fm, a)
            d = operator_norm(T)
            if d > 0:
                best = max(best, operator_norm(self(T)) / d)
        return best


@dataclass
class BimoduleCertificate:
    ok: bool
    side: str = ""  # "left" or "right"
    atom: int = -1  # the single-atom set delta = {atom}
    basis_pair: tuple = ()  # the pair p with Phi(P(delta) L(chi_p)) != P(delta) Phi(L(chi_p))
    defect: float = 0.0

    def __bool__(self):
        return self.ok


def is_bimodule_map(probe: BimoduleMapProbe, tol: float = BIMODULE_TOL) -> BimoduleCertificate:
    """Check commutation with ``P({w})`` on both sides for every atom ``w``.

    ``P({w}) L(chi_p)`` is ``L(chi_p)`` when ``p`` starts at ``w`` and 0 otherwise
    (the cocycle is normalised), and similarly on the right with the end point.
    """
    fm = probe.fm
    C = probe.coeffs
    px, py = fm.rel.pair_x, fm.rel.pair_y
    scale = max(1.0, float(np.abs(C).max(initial=0.0)))
    for side, ends in (("left", px), ("right", py)):
        for w in range(fm.n):
            m = (ends == w).astype(float)
            # Phi(P L(chi_p)) - P Phi(L(chi_p)) in coefficients, column p
            D = C * m[None, :] - m[:, None] * C
            k = int(np.argmax(np.abs(D)))
            q, p = divmod(k, C.shape[1])
            d = float(np.abs(D[q, p]))
            if d > tol * scale:
                return BimoduleCertificate(False, side, w, (int(px[p]), int(py[p])), d)
    return BimoduleCertificate(True)


def recover_symbol(probe: BimoduleMapProbe, strategy: str = "shift", seed: int = 0) -> np.ndarray:
    """``phi`` on ``Gr f_k`` read off from ``s(Phi(V(f_k)))`` over a graph partition."""
    cert = is_bimodule_map(probe)
    if not cert:
        raise NotBimoduleError(
            f"not a bimodule map: {cert.side} multiplication by P({{{cert.atom}}}) "
            f"fails on basis pair {cert.basis_pair}"
        )
    fm = probe.fm
    phi = np.zeros(fm.n_pairs, dtype=complex)
    seen = np.zeros(fm.n_pairs, dtype=bool)
    for f in graph_partition(fm.rel, strategy, seed):
        g = graph_symbol(fm, f)
        on = g != 0
        if np.any(seen & on):
            raise RuntimeError("graph partition overlaps")
        phi[on] = probe.apply_symbol(g)[on]
        seen |= on
    if not seen.all():
        raise RuntimeError("graph partition does not cover the relation")
    return phi


# ---------------------------------------------------------------------------
# norms


@dataclass
class MultiplierNorm:
    value: float
    lower: float
    blocks: list = field(default_factory=list)  # one Gamma2Result per block

    @property
    def gap(self) -> float:
        return max(0.0, self.value - self.lower)

    def __float__(self):
        return self.value


def multiplier_norm(fm: FMRelation, phi) -> MultiplierNorm:
    """``||M(phi)||`` as the maximum over blocks of ``gamma_2(phi_B)``."""
    phi = as_symbol(fm, phi)
    res: list[Gamma2Result] = [gamma2(fm.rel.block_matrix(phi, b)) for b in range(len(fm.rel.blocks))]
    if not res:
        return MultiplierNorm(0.0, 0.0, [])
    return MultiplierNorm(max(r.value for r in res), max(r.lower for r in res), res)


def witness_operator(fm: FMRelation, phi, block: int | None = None) -> ConvOperator:
    """A contraction ``T`` in the algebra with ``||M(phi) T||`` equal to the dual bound.

    With dual weights ``lam, mu`` and ``K = diag(lam)^1/2 phi_B diag(mu)^1/2 = U S V*``
    the fibre of ``T`` is ``conj(U V*)``, untwisted by the cocycle.
    """
    phi = as_symbol(fm, phi)
    nrm = multiplier_norm(fm, phi)
    if block is None:
        block = int(np.argmax([r.lower for r in nrm.blocks])) if nrm.blocks else 0
    r = nrm.blocks[block]
    a = np.zeros(fm.n_pairs, dtype=complex)
    if r.lam is None:
        return build_operator(fm, a)
    P = fm.rel.block_matrix(phi, block)
    K = np.sqrt(r.lam)[:, None] * P * np.sqrt(r.mu)[None, :]
    U, _, Vh = np.linalg.svd(K, full_matrices=False)
    W = np.conj(U @ Vh)
    # fibre at the first atom of the block carries sigma(x, y, z0)
    S0 = fm.sigma_block(block)[:, :, 0]
    a[fm.rel.block_slice(block)] = (W * np.conj(S0)).ravel()
    return build_operator(fm, a)


def multiplier_norm_ascent(fm: FMRelation, phi, restarts: int = 4, iters: int = 200, seed: int = 0) -> float:
    """Lower bound for ``||M(phi)||`` by direct ascent of ``||M(phi) T|| / ||T||``.

    Alternates between the top singular pair ``(u, v)`` of ``phi o T`` and the
    polar part of ``conj(phi) o u v*``; independent of the factorization solver.
    """
    phi = as_symbol(fm, phi)
    rng = np.random.default_rng(seed)
    best = 0.0
    for b in range(len(fm.rel.blocks)):
        P = fm.rel.block_matrix(phi, b)
        m = P.shape[0]
        for _ in range(restarts):
            T = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
            U, _, Vh = np.linalg.svd(T)
            T = U @ Vh
            prev = -1.0
            for _ in range(iters):
                Y = P * T
                U, s, Vh = np.linalg.svd(Y)
                val = s[0] / np.linalg.norm(T, 2)
                best = max(best, val)
                if val - prev < 1e-14:
                    break
                prev = val
                G = np.conj(P) * np.outer(U[:, 0], Vh[0])
                U2, _, Vh2 = np.linalg.svd(G)
                T = U2 @ Vh2
    return float(best)


def inflate(fm: FMRelation, k: int) -> tuple[FMRelation, np.ndarray]:
    """The ``k``-fold inflation ``X x [k]`` with blocks ``B x [k]`` and the lift map.

    ``M_k(M(R, sigma))`` is ``M`` of the inflation with the cocycle pulled back
    along the projection; the returned index array sends each inflated pair to
    its pair in ``R``.
    """
    if k < 1:
        raise ValueError("k must be positive")
    n = fm.n
    atoms = tuple(f"{a}#{i}" for a in fm.space.atoms for i in range(k))
    weights = np.repeat(fm.weights, k) / k
    blocks = [[x * k + i for x in blk for i in range(k)] for blk in fm.rel.blocks]
    rel_k = Relation(n * k, blocks)
    vals = {}
    for (x, y, z), v in fm.sigma.values.items():
        for i in range(k):
            for j in range(k):
                for l in range(k):
                    vals[(x * k + i, y * k + j, z * k + l)] = v
    fm_k = FMRelation(FiniteSpace(atoms, weights), rel_k, Cocycle(vals))
    lift = fm.rel.pair_index[rel_k.pair_x // k, rel_k.pair_y // k]
    return fm_k, lift


def cb_norm_estimate(fm: FMRelation, phi, k_max: int = 4) -> list[float]:
    """``||M(phi) (x) id_k||`` for ``k = 1..k_max`` on the inflated relations.

    Each entry is at least the previous one because ``M_{k-1}`` embeds in
    ``M_k`` as a corner, so the running maximum of the certified values is kept.
    """
    if not 1 <= k_max <= 4:
        raise ValueError("k_max must be between 1 and 4")
    phi = as_symbol(fm, phi)
    out: list[float] = []
    for k in range(1, k_max + 1):
        fm_k, lift = inflate(fm, k)
        v = multiplier_norm(fm_k, phi[lift]).value
        out.append(max(v, out[-1]) if out else v)
    return out
