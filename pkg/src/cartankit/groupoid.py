"""Groupoid picture of the dyadic relation and transfer between isomorphic relations.

At level ``N`` the groupoid is ``G_N = cells x shifts``, both indexed by
``Z_{2^N}``; the element ``(x, t)`` corresponds to the pair ``(x, x + t)``
through ``theta``. Functions on ``G_N`` are ``2^N x 2^N`` arrays ``f[x, t]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .dyadic import DyadicLevel
from .relation import Cocycle, DomainError, FiniteSpace, FMRelation, Relation
from .schur import multiplier_norm
from .symbols import ConvOperator, as_symbol, build_operator, masa_embed


class TransferError(RuntimeError):
    """A transfer identity failed beyond tolerance."""


def _as_gfun(f) -> np.ndarray:
    f = np.asarray(f, dtype=complex)
    if f.ndim != 2 or f.shape[0] != f.shape[1] or f.shape[0] & (f.shape[0] - 1):
        raise ValueError("a groupoid function is a 2^N x 2^N array indexed by (cell, shift)")
    return f


def unit(N: int) -> np.ndarray:
    """``sum_x delta_(x, 0)``."""
    n = 1 << N
    f = np.zeros((n, n), dtype=complex)
    f[:, 0] = 1
    return f


def delta(N: int, x: int, t: int) -> np.ndarray:
    n = 1 << N
    f = np.zeros((n, n), dtype=complex)
    f[x % n, t % n] = 1
    return f


def groupoid_convolution(f, g) -> np.ndarray:
    """``(f * g)(x, t) = sum_r f(x, r) g(x + r, t - r)``."""
    f, g = _as_gfun(f), _as_gfun(g)
    if f.shape != g.shape:
        raise ValueError("functions live at different levels")
    return _kernels.groupoid_convolve(f, g)


def involution(f) -> np.ndarray:
    """``f*(x, t) = conj f(x + t, -t)``."""
    f = _as_gfun(f)
    n = f.shape[0]
    x = np.arange(n)[:, None]
    t = np.arange(n)[None, :]
    return np.conj(f[(x + t) % n, (-t) % n])


def _gindex(n, x, s):
    return (x % n) * n + (s % n)


def reg_representation(f) -> sp.csr_matrix:
    """``(Reg(f) xi)(x, s) = sum_t f(x, t) xi(x + t, s - t)`` on ``L^2(G, nu_G)``.

    ``nu_G`` is uniform, so the matrix in the normalised point basis has the
    entry ``f(x, t)`` at row ``(x, s)``, column ``(x + t, s - t)``.
    """
    f = _as_gfun(f)
    n = f.shape[0]
    x, s, t = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    rows = _gindex(n, x, s).ravel()
    cols = _gindex(n, x + t, s - t).ravel()
    vals = f[x, t].ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(n * n, n * n))


def theta(N: int, x: int, y: int) -> tuple[int, int]:
    n = 1 << N
    return x % n, (y - x) % n


def theta_unitary(N: int) -> sp.csr_matrix:
    """``U: L^2(R, nu) -> L^2(G, nu_G)``, ``(U xi)(x, r) = xi(x, x + r)``; a permutation."""
    lvl = DyadicLevel(N)
    rel = lvl.fm.rel
    n = lvl.size
    rows = _gindex(n, rel.pair_x, rel.pair_y - rel.pair_x)
    cols = np.arange(rel.n_pairs)
    return sp.csr_matrix((np.ones(rel.n_pairs, dtype=complex), (rows, cols)), shape=(n * n, rel.n_pairs))


def pull_back(f) -> np.ndarray:
    """``f o theta`` as a pair symbol on the full relation at the same level."""
    f = _as_gfun(f)
    n = f.shape[0]
    x = np.arange(n)[:, None]
    y = np.arange(n)[None, :]
    return f[x, (y - x) % n].ravel()


def theta_transfer(f, check: bool = True, tol: float = 1e-12) -> ConvOperator:
    """``U* Reg(f) U`` as an operator on ``L^2(R, nu)``; checked against ``L(f o theta)``."""
    f = _as_gfun(f)
    N = f.shape[0].bit_length() - 1
    lvl = DyadicLevel(N)
    U = theta_unitary(N)
    T = ConvOperator(lvl.fm, (U.conj().T @ reg_representation(f) @ U).tocsr())
    if check:
        d = T.distance(build_operator(lvl.fm, pull_back(f)))
        if d > tol:
            raise TransferError(f"U* Reg(f) U differs from L(f o theta) by {d:.3e}")
    return T


def theta_measure_defect(N: int) -> float:
    """Largest ``|theta_* nu(E) - nu_G(E)|`` over singletons and the sets ``X x {r}``."""
    lvl = DyadicLevel(N)
    fm = lvl.fm
    n = lvl.size
    nu = fm.pair_measure()
    # nu_G is mu x counting measure on shifts
    nu_G = np.repeat(fm.weights, n)
    gidx = _gindex(n, fm.rel.pair_x, fm.rel.pair_y - fm.rel.pair_x)
    push = np.zeros(n * n)
    np.add.at(push, gidx, nu)
    worst = float(np.abs(push - nu_G).max())
    for r in range(n):
        col = _gindex(n, np.arange(n), r)
        worst = max(worst, abs(push[col].sum() - nu_G[col].sum()))
    return worst


def groupoid_measure_symmetry_defect(N: int) -> float:
    """``|nu_G(E^-1) - nu_G(E)|`` on singletons; inverse of ``(x, t)`` is ``(x + t, -t)``."""
    n = 1 << N
    w = np.full((n, n), 1.0 / n)
    x = np.arange(n)[:, None]
    t = np.arange(n)[None, :]
    return float(np.abs(w[(x + t) % n, (-t) % n] - w).max())


# ---------------------------------------------------------------------------
# isomorphic relations


@dataclass
class RelIsoData:
    """An isomorphism ``rho`` from ``fm1`` to ``fm2``: atom ``i`` goes to ``rho[i]``."""

    fm1: FMRelation
    fm2: FMRelation
    rho: np.ndarray
    h: np.ndarray = field(init=False)

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=np.int64)
        n = self.fm1.n
        if self.fm2.n != n or self.rho.shape != (n,) or sorted(self.rho.tolist()) != list(range(n)):
            raise DomainError("rho must be a bijection between the atom sets")
        blocks2 = {frozenset(b) for b in self.fm2.rel.blocks}
        for b in self.fm1.rel.blocks:
            image = frozenset(int(self.rho[x]) for x in b)
            if image not in blocks2:
                raise DomainError(f"rho does not map block {list(b)} onto a block")
        for b in range(len(self.fm1.rel.blocks)):
            blk = self.fm1.rel.blocks[b]
            S1 = self.fm1.sigma_block(b)
            img = [int(self.rho[x]) for x in blk]
            b2 = int(self.fm2.rel.block_of[img[0]])
            loc = self.fm2.rel.local_index[img]
            S2 = self.fm2.sigma_block(b2)[np.ix_(loc, loc, loc)]
            if np.abs(S1 - S2).max(initial=0.0) > 1e-12:
                raise DomainError("rho does not carry the first cocycle to the second")
        inv = self.rho_inverse
        self.h = self.fm1.weights[inv] / self.fm2.weights

    @property
    def rho_inverse(self) -> np.ndarray:
        inv = np.empty_like(self.rho)
        inv[self.rho] = np.arange(len(self.rho))
        return inv

    @classmethod
    def push_forward(cls, fm1: FMRelation, rho, weights2=None) -> "RelIsoData":
        """Build the image relation ``(rho(X), rho^2(R), sigma o rho^-3)``."""
        rho = np.asarray(rho, dtype=np.int64)
        n = fm1.n
        inv = np.empty_like(rho)
        inv[rho] = np.arange(n)
        atoms = tuple(fm1.space.atoms[i] for i in inv)
        w2 = fm1.weights[inv] if weights2 is None else np.asarray(weights2, dtype=float)
        blocks = [sorted(int(rho[x]) for x in b) for b in fm1.rel.blocks]
        sigma = Cocycle({(int(rho[x]), int(rho[y]), int(rho[z])): v for (x, y, z), v in fm1.sigma.values.items()})
        fm2 = FMRelation(FiniteSpace(atoms, w2), Relation(n, blocks), sigma)
        return cls(fm1, fm2, rho)

    @classmethod
    def from_json(cls, obj) -> "RelIsoData":
        """``{"rho": [...], "weights1": [...], "weights2": [...]}`` on full relations."""
        try:
            rho, w1, w2 = obj["rho"], obj["weights1"], obj["weights2"]
        except KeyError as exc:
            raise DomainError(f"missing field {exc.args[0]!r}") from None
        n = len(rho)
        if len(w1) != n or len(w2) != n:
            raise DomainError("weights must have one entry per atom")
        blocks = obj.get("blocks1")
        fm1 = FMRelation(
            FiniteSpace(tuple(f"x{i}" for i in range(n)), np.asarray(w1, dtype=float)),
            Relation(n, blocks if blocks is not None else [range(n)]),
        )
        return cls.push_forward(fm1, rho, w2)

    def pair_map(self) -> np.ndarray:
        """Position in ``R_2`` of ``rho^2(p)`` for each pair position ``p`` of ``R_1``."""
        r1 = self.fm1.rel
        return self.fm2.rel.pair_index[self.rho[r1.pair_x], self.rho[r1.pair_y]]

    def transport(self, a) -> np.ndarray:
        """``a o rho^-2``: a function on ``R_1`` carried to ``R_2``."""
        a = as_symbol(self.fm1, a)
        out = np.empty(self.fm2.n_pairs, dtype=complex)
        out[self.pair_map()] = a
        return out

    def transport_atoms(self, alpha) -> np.ndarray:
        """``alpha o rho^-1`` for a function on atoms."""
        return np.asarray(alpha, dtype=complex)[self.rho_inverse]


def transfer_unitary(iso: RelIsoData) -> sp.csr_matrix:
    """``U: L^2(R_2, nu_2) -> L^2(R_1, nu_1)``, ``(U f)(x, y) = h(rho y)^-1/2 f(rho x, rho y)``.

    In the normalised pair bases the density cancels against the change of
    weights and ``U`` is the permutation ``e2_q -> e1_{rho^-2 q}``.
    """
    fm1, fm2 = iso.fm1, iso.fm2
    q = iso.pair_map()  # q[p] = rho^2(p)
    y2 = fm2.rel.pair_y[q]
    nu1 = fm1.pair_measure()
    nu2 = fm2.pair_measure()[q]
    coeff = np.sqrt(nu1) / np.sqrt(iso.h[y2]) / np.sqrt(nu2)
    return sp.csr_matrix((coeff.astype(complex), (np.arange(fm1.n_pairs), q)), shape=(fm1.n_pairs, fm2.n_pairs))


def conjugate(iso: RelIsoData, T: ConvOperator) -> ConvOperator:
    """``U* T U`` for an operator on ``L^2(R_1, nu_1)``."""
    U = transfer_unitary(iso)
    return ConvOperator(iso.fm2, (U.conj().T @ T.matrix @ U).tocsr())


# ---------------------------------------------------------------------------
# suites


@dataclass
class BridgeReport:
    N: int
    checks: dict = field(default_factory=dict)  # name -> (worst, tol)

    def add(self, name, worst, tol):
        self.checks[name] = (float(worst), float(tol))

    @property
    def passed(self) -> bool:
        return all(w <= t for w, t in self.checks.values())


def _unitary_defect(U) -> float:
    U = U.toarray() if sp.issparse(U) else np.asarray(U)
    I1 = np.eye(U.shape[1])
    I0 = np.eye(U.shape[0])
    return float(max(np.abs(U.conj().T @ U - I1).max(), np.abs(U @ U.conj().T - I0).max()))


def random_gfun(rng, N):
    n = 1 << N
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def bridge_suite(N: int, seed: int = 0, samples: int = 100, iso_samples: int = 10) -> BridgeReport:
    rep = BridgeReport(N)
    rng = np.random.default_rng(seed)
    lvl = DyadicLevel(N)

    rep.add("theta-unitary", _unitary_defect(theta_unitary(N)), 1e-12)
    rep.add("theta-measure", theta_measure_defect(N), 0.0)
    rep.add("groupoid-measure-symmetric", groupoid_measure_symmetry_defect(N), 0.0)

    worst = hom = inv = assoc = 0.0
    U = theta_unitary(N)
    for _ in range(samples):
        f = random_gfun(rng, N)
        T = ConvOperator(lvl.fm, (U.conj().T @ reg_representation(f) @ U).tocsr())
        worst = max(worst, T.distance(build_operator(lvl.fm, pull_back(f))))
    for _ in range(max(1, samples // 10)):
        f, g, k = random_gfun(rng, N), random_gfun(rng, N), random_gfun(rng, N)
        fg = groupoid_convolution(f, g)
        hom = max(hom, np.abs((reg_representation(fg) - reg_representation(f) @ reg_representation(g)).toarray()).max())
        inv = max(inv, np.abs((reg_representation(involution(f)) - reg_representation(f).conj().T).toarray()).max())
        assoc = max(assoc, np.abs(groupoid_convolution(fg, k) - groupoid_convolution(f, groupoid_convolution(g, k))).max())
    rep.add("theta-transfer", worst, 1e-12)
    rep.add("reg-multiplicative", hom, 1e-10)
    rep.add("reg-involutive", inv, 1e-12)
    rep.add("convolution-associative", assoc, 1e-10)

    # rotation of the cells and random relabellings with new weights
    n = lvl.size
    isos = [RelIsoData.push_forward(lvl.fm, (np.arange(n) + 1) % n)]
    for _ in range(iso_samples):
        w2 = rng.uniform(0.2, 1.0, size=n)
        isos.append(RelIsoData.push_forward(lvl.fm, rng.permutation(n), w2 / w2.sum()))
    uni = act = masa = mult = 0.0
    for iso in isos:
        Ut = transfer_unitary(iso)
        uni = max(uni, _unitary_defect(Ut))
        a = rng.normal(size=iso.fm1.n_pairs) + 1j * rng.normal(size=iso.fm1.n_pairs)
        act = max(act, conjugate(iso, build_operator(iso.fm1, a)).distance(build_operator(iso.fm2, iso.transport(a))))
        alpha = rng.normal(size=n)
        masa = max(masa, conjugate(iso, masa_embed(iso.fm1, alpha)).distance(masa_embed(iso.fm2, iso.transport_atoms(alpha))))
        phi = rng.normal(size=iso.fm1.n_pairs) + 1j * rng.normal(size=iso.fm1.n_pairs)
        mult = max(mult, abs(multiplier_norm(iso.fm1, phi).value - multiplier_norm(iso.fm2, iso.transport(phi)).value))
    rep.add("transfer-unitary", uni, 1e-12)
    rep.add("transfer-action", act, 1e-10)
    rep.add("transfer-masa", masa, 1e-10)
    rep.add("transfer-multiplier-norm", mult, 1e-10)
    return rep
