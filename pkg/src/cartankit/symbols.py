"""Symbol calculus: convolution operators L(a) on L^2(R, nu) and their symbols.

Operators are stored as sparse matrices in the orthonormal basis
``e_p = chi_p / sqrt(nu(p))`` of ``L^2(R, nu)``, indexed by canonical pair
position. In that basis the matrix of ``L(a)`` has the entry
``a(x,y) sigma(x,y,z)`` at row ``(x,z)``, column ``(y,z)``; the weights cancel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .relation import DomainError, FMRelation, Relation

ALG_TOL = 1e-12


class NotInAlgebraError(ValueError):
    """The matrix is not the image of a symbol under L."""


# ---------------------------------------------------------------------------
# symbols as pair-indexed vectors


def as_symbol(fm: FMRelation, a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.shape != (fm.n_pairs,):
        raise ValueError(f"symbol must have shape ({fm.n_pairs},), got {a.shape}")
    return a


def involution(fm: FMRelation, a) -> np.ndarray:
    """``a*(x,y) = conj a(y,x)``."""
    return np.conj(as_symbol(fm, a)[fm.rel.transpose_perm()])


def diag_symbol(fm: FMRelation, alpha) -> np.ndarray:
    """``d(alpha)``: ``alpha(x)`` on the diagonal, 0 elsewhere."""
    out = np.zeros(fm.n_pairs, dtype=complex)
    out[fm.rel.diagonal()] = np.asarray(alpha, dtype=complex)
    return out


def column_symbol(fm: FMRelation, alpha) -> np.ndarray:
    """``c(alpha)(x,y) = alpha(x)``."""
    return np.asarray(alpha, dtype=complex)[fm.rel.pair_x]


def row_symbol(fm: FMRelation, alpha) -> np.ndarray:
    """``r(alpha)(x,y) = alpha(y)``."""
    return np.asarray(alpha, dtype=complex)[fm.rel.pair_y]


def indicator(fm: FMRelation, subset) -> np.ndarray:
    out = np.zeros(fm.n_pairs, dtype=complex)
    out[fm.rel.positions(subset)] = 1
    return out


def l2_norm(fm: FMRelation, a) -> float:
    return float(np.sqrt(np.sum(np.abs(as_symbol(fm, a)) ** 2 * fm.pair_measure())))


def to_vector(fm: FMRelation, a) -> np.ndarray:
    """Coordinates of a function on R in the orthonormal pair basis."""
    return as_symbol(fm, a) * np.sqrt(fm.pair_measure())


def from_vector(fm: FMRelation, v) -> np.ndarray:
    return np.asarray(v, dtype=complex) / np.sqrt(fm.pair_measure())


def star_product(fm: FMRelation, a, b) -> np.ndarray:
    """Twisted convolution ``(a *_sigma b)(x,z) = sum_y a(x,y) b(y,z) sigma(x,y,z)``."""
    a = as_symbol(fm, a)
    b = as_symbol(fm, b)
    out = np.empty(fm.n_pairs, dtype=complex)
    rel = fm.rel
    for k in range(len(rel.blocks)):
        sl = rel.block_slice(k)
        m = len(rel.blocks[k])
        c = _kernels.twisted_product(a[sl].reshape(m, m), b[sl].reshape(m, m), fm.sigma_block(k))
        out[sl] = c.ravel()
    return out


# ---------------------------------------------------------------------------
# operators


@dataclass(eq=False)
class ConvOperator:
    """A bounded operator on ``L^2(R, nu)`` in the orthonormal pair basis."""

    fm: FMRelation
    matrix: sp.csr_matrix

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix, dtype=complex)

    @property
    def shape(self):
        return self.matrix.shape

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def adjoint(self) -> "ConvOperator":
        return ConvOperator(self.fm, self.matrix.conj().T.tocsr())

    @property
    def H(self):
        return self.adjoint()

    def _wrap(self, m):
        return ConvOperator(self.fm, m)

    def __matmul__(self, other):
        if isinstance(other, ConvOperator):
            return self._wrap(self.matrix @ other.matrix)
        return self.matrix @ other

    def __add__(self, other):
        return self._wrap(self.matrix + other.matrix)

    def __sub__(self, other):
        return self._wrap(self.matrix - other.matrix)

    def __mul__(self, c):
        return self._wrap(self.matrix * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self._wrap(-self.matrix)

    def preserves_columns(self, tol: float = ALG_TOL) -> bool:
        """True if no entry links pairs with different second coordinates."""
        coo = self.matrix.tocoo()
        big = np.abs(coo.data) > tol
        py = self.fm.rel.pair_y
        return bool(np.all(py[coo.row[big]] == py[coo.col[big]]))

    def block(self, z: int) -> np.ndarray:
        """Dense compression to ``{(x, z) : x ~ z}``, rows in block order."""
        rel = self.fm.rel
        members = rel.blocks[rel.block_of[z]]
        idx = rel.pair_index[list(members), z]
        return self.matrix[idx][:, idx].toarray()

    def distance(self, other: "ConvOperator") -> float:
        d = (self.matrix - other.matrix).tocoo()
        return float(np.max(np.abs(d.data))) if d.nnz else 0.0


def identity_operator(fm: FMRelation) -> ConvOperator:
    return ConvOperator(fm, sp.identity(fm.n_pairs, dtype=complex, format="csr"))


def _block_coords(rel: Relation, b: int):
    block = rel.blocks[b]
    m = len(block)
    off = rel.block_slice(b).start
    i, j, k = np.meshgrid(np.arange(m), np.arange(m), np.arange(m), indexing="ij")
    rows = off + i * m + k  # (x_i, z_k)
    cols = off + j * m + k  # (y_j, z_k)
    return m, i, j, k, rows, cols


def build_operator(fm: FMRelation, a) -> ConvOperator:
    """The matrix of ``L(a): xi -> a *_sigma xi``."""
    a = as_symbol(fm, a)
    rel = fm.rel
    R, C, V = [], [], []
    for b in range(len(rel.blocks)):
        m, i, j, k, rows, cols = _block_coords(rel, b)
        ab = a[rel.block_slice(b)].reshape(m, m)
        vals = ab[i, j] * fm.sigma_block(b)
        nz = vals != 0
        R.append(rows[nz])
        C.append(cols[nz])
        V.append(vals[nz])
    n = fm.n_pairs
    mat = sp.csr_matrix(
        (np.concatenate(V) if V else [], (np.concatenate(R) if R else [], np.concatenate(C) if C else [])),
        shape=(n, n),
        dtype=complex,
    )
    return ConvOperator(fm, mat)


def apply_to_function(T: ConvOperator, xi) -> np.ndarray:
    """Apply T to a function on R (not to its coordinate vector)."""
    fm = T.fm
    return from_vector(fm, T.matrix @ to_vector(fm, xi))


def symbol_of(T: ConvOperator, check: bool = True, tol: float = 1e-10) -> np.ndarray:
    """``s(T) = T chi_Delta`` read as a function on R."""
    fm = T.fm
    a = apply_to_function(T, fm.chi_diagonal())
    if check:
        if not T.preserves_columns(tol):
            raise NotInAlgebraError("not in M(R,sigma): matrix mixes second coordinates")
        if build_operator(fm, a).distance(T) > tol * max(1.0, np.abs(T.matrix.data).max(initial=0.0)):
            raise NotInAlgebraError("not in M(R,sigma): matrix is not L of its symbol")
    return a


def masa_embed(fm: FMRelation, alpha) -> ConvOperator:
    """``D(alpha) = L(d(alpha))``, diagonal with entry ``alpha(x)`` at ``(x, y)``."""
    return build_operator(fm, diag_symbol(fm, alpha))


def projection(fm: FMRelation, delta) -> ConvOperator:
    """``P(delta) = D(chi_delta)`` for a set of atoms."""
    alpha = np.zeros(fm.n)
    alpha[list(delta)] = 1
    return masa_embed(fm, alpha)


def right_convolver(fm: FMRelation, b) -> ConvOperator:
    """``R_0(b): xi -> xi *_sigma b``, a member of the commutant of M(R, sigma)."""
    b = as_symbol(fm, b)
    rel = fm.rel
    w = fm.weights
    R, C, V = [], [], []
    for blk in range(len(rel.blocks)):
        block = np.asarray(rel.blocks[blk])
        m = len(block)
        off = rel.block_slice(blk).start
        # (xi *_sigma b)(x,z) = sum_y xi(x,y) b(y,z) sigma(x,y,z): row (x,z), column (x,y)
        i, j, k = np.meshgrid(np.arange(m), np.arange(m), np.arange(m), indexing="ij")
        bb = b[rel.block_slice(blk)].reshape(m, m)
        scale = np.sqrt(w[block[k]] / w[block[j]])
        vals = bb[j, k] * fm.sigma_block(blk) * scale
        R.append((off + i * m + k).ravel())
        C.append((off + i * m + j).ravel())
        V.append(vals.ravel())
    n = fm.n_pairs
    mat = sp.csr_matrix((np.concatenate(V), (np.concatenate(R), np.concatenate(C))), shape=(n, n))
    return ConvOperator(fm, mat)


# ---------------------------------------------------------------------------
# partial isometries


class PartialIso:
    """A partial injection ``f: delta -> rho`` of atom indices."""

    def __init__(self, mapping: Mapping[int, int]):
        self.mapping = {int(k): int(v) for k, v in mapping.items()}
        if len(set(self.mapping.values())) != len(self.mapping):
            raise ValueError("partial map is not injective")

    def __repr__(self):
        return f"PartialIso({self.mapping})"

    def __eq__(self, other):
        return isinstance(other, PartialIso) and self.mapping == other.mapping

    @classmethod
    def identity(cls, delta) -> "PartialIso":
        return cls({int(x): int(x) for x in delta})

    @property
    def domain(self) -> frozenset:
        return frozenset(self.mapping)

    @property
    def range(self) -> frozenset:
        return frozenset(self.mapping.values())

    def graph(self) -> list[tuple[int, int]]:
        return sorted(self.mapping.items())

    def inverse(self) -> "PartialIso":
        return PartialIso({v: k for k, v in self.mapping.items()})

    def then(self, g: "PartialIso") -> "PartialIso":
        """Partial composition ``g o self``."""
        return PartialIso({x: g.mapping[y] for x, y in self.mapping.items() if y in g.mapping})

    def restrict(self, delta) -> "PartialIso":
        """``self o id_delta``."""
        delta = set(delta)
        return PartialIso({x: y for x, y in self.mapping.items() if x in delta})

    def corestrict(self, rho) -> "PartialIso":
        """``id_rho o self``."""
        rho = set(rho)
        return PartialIso({x: y for x, y in self.mapping.items() if y in rho})

    def preimage(self, rho) -> frozenset:
        rho = set(rho)
        return frozenset(x for x, y in self.mapping.items() if y in rho)

    def in_relation(self, rel: Relation) -> bool:
        return all(rel.related(x, y) for x, y in self.mapping.items())


def graph_symbol(fm: FMRelation, f: PartialIso) -> np.ndarray:
    if not f.in_relation(fm.rel):
        raise DomainError(f"graph of {f} is not contained in the relation")
    return indicator(fm, f.graph())


def partial_iso_operator(fm: FMRelation, f: PartialIso) -> ConvOperator:
    """``V(f) = L(chi_{Gr f})``."""
    return build_operator(fm, graph_symbol(fm, f))


PARTITION_STRATEGIES = ("shift", "reflection", "random")


def graph_partition(rel: Relation, strategy: str = "shift", seed: int = 0) -> list[PartialIso]:
    """Partial injections whose graphs partition R, the first being the identity.

    ``shift`` maps ``z_i -> z_{(i+k) mod m}`` inside each block listed as
    ``[z_0..z_{m-1}]``, one map per k >= 1 shared by all blocks. ``reflection``
    uses ``z_i -> z_{(k-i) mod m}`` with fixed points moved to the identity, and
    ``random`` applies ``shift`` after a seeded relabelling of every block.
    """
    if strategy not in PARTITION_STRATEGIES:
        raise ValueError(f"unknown partition strategy {strategy!r}")
    parts = [PartialIso.identity(range(rel.n))]
    longest = max((len(b) for b in rel.blocks), default=0)
    rng = np.random.default_rng(seed)
    orders = []
    for block in rel.blocks:
        if strategy == "random":
            orders.append([block[i] for i in rng.permutation(len(block))])
        else:
            orders.append(list(block))
    ks = range(1, longest) if strategy != "reflection" else range(longest)
    for k in ks:
        mapping = {}
        for zs in orders:
            m = len(zs)
            if strategy == "reflection":
                if k >= m:
                    continue
                for i in range(m):
                    j = (k - i) % m
                    if j != i:
                        mapping[zs[i]] = zs[j]
            elif k < m:
                for i in range(m):
                    mapping[zs[i]] = zs[(i + k) % m]
        if mapping:
            parts.append(PartialIso(mapping))
    return parts


# ---------------------------------------------------------------------------
# norms


def operator_norm(T: ConvOperator, method: str = "blocks") -> float:
    """Spectral norm; ``blocks`` maximises over the compressions at each atom."""
    if method == "blocks":
        if not T.preserves_columns():
            raise NotInAlgebraError("block norm needs a second-coordinate preserving operator")
        return max((float(np.linalg.norm(T.block(z), 2)) for z in range(T.fm.n)), default=0.0)
    if method == "full":
        return spectral_norm(T.matrix)
    raise ValueError(f"unknown method {method!r}")


def spectral_norm(m) -> float:
    if sp.issparse(m):
        n = min(m.shape)
        if n == 0 or m.nnz == 0:
            return 0.0
        if n <= 1024:
            return float(np.linalg.norm(m.toarray(), 2))
        s = spla.svds(m, k=1, tol=0, return_singular_vectors=False, solver="arpack", random_state=0)
        return float(s[0])
    return float(np.linalg.norm(np.asarray(m), 2)) if np.size(m) else 0.0


def sup_norm(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


# ---------------------------------------------------------------------------
# serialisation


def symbol_to_json(fm: FMRelation, a) -> list:
    """``[re, im]`` per pair in canonical order."""
    return [[float(v.real), float(v.imag)] for v in as_symbol(fm, a)]


def symbol_from_json(fm: FMRelation, data) -> np.ndarray:
    vals = [complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v) for v in data]
    return as_symbol(fm, vals)


def operator_to_csv(T: ConvOperator) -> str:
    """Dense matrix, one row per line, entries written as ``re,im`` pairs."""
    lines = []
    for row in T.dense():
        lines.append(",".join(f"{v.real:.17g},{v.imag:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def operator_from_csv(fm: FMRelation, text: str) -> ConvOperator:
    rows = []
    for line in text.strip().splitlines():
        nums = [float(x) for x in line.split(",")]
        rows.append([complex(nums[i], nums[i + 1]) for i in range(0, len(nums), 2)])
    return ConvOperator(fm, np.array(rows))
