"""Finite Feldman-Moore relations: atoms, blocks, cocycles and the counting measure.

Atoms are addressed by dense 0-based indices. The canonical pair order lists
blocks in order and, inside a block ``B = [z_0, ..., z_{m-1}]``, the pairs
``(z_i, z_j)`` row-major, so the pairs of block ``b`` occupy the contiguous
slice ``rel.block_slice(b)`` and reshape to an ``m x m`` matrix.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _kernels

TOL = 1e-12


class DomainError(ValueError):
    """A pair or triple lies outside the relation."""


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    witness: tuple = ()


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    # Skew-symmetry is a consequence of the axioms, reported on its own.
    skew_violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def codes(self) -> set[str]:
        return {v.code for v in self.violations}

    def add(self, code, message, witness=()):
        self.violations.append(Violation(code, message, tuple(witness)))

    def __bool__(self):
        return self.ok


@dataclass(frozen=True)
class FiniteSpace:
    atoms: tuple
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "atoms", tuple(str(a) for a in self.atoms))
        if len(self.atoms) != len(w):
            raise ValueError("atoms and weights differ in length")

    @classmethod
    def uniform(cls, n: int, prefix: str = "x") -> "FiniteSpace":
        return cls(tuple(f"{prefix}{i}" for i in range(n)), np.full(n, 1.0 / n))

    @property
    def n(self) -> int:
        return len(self.atoms)

    def index(self, atom) -> int:
        try:
            return self.atoms.index(str(atom))
        except ValueError:
            raise DomainError(f"unknown atom {atom!r}") from None

    def check(self) -> ValidationReport:
        rep = ValidationReport()
        if np.any(self.weights <= 0):
            bad = [int(i) for i in np.flatnonzero(self.weights <= 0)]
            rep.add("weight-not-positive", "every atom must carry positive mass", bad)
        total = float(np.sum(self.weights))
        if abs(total - 1.0) > TOL:
            rep.add("weights-not-probability", f"weights sum to {total!r}, not 1", (total,))
        return rep


class Relation:
    """An equivalence relation on ``n`` atoms given by its blocks.

    Construction does not validate; ``validate_relation`` reports problems and
    the derived pair tables raise if the blocks are not a partition.
    """

    def __init__(self, n_atoms: int, blocks: Iterable[Sequence[int]]):
        self.n = int(n_atoms)
        self.blocks = tuple(tuple(int(v) for v in b) for b in blocks)
        self._tables = None

    def __repr__(self):
        return f"Relation(n_atoms={self.n}, blocks={self.blocks!r})"

    def __eq__(self, other):
        return isinstance(other, Relation) and self.n == other.n and self.blocks == other.blocks

    def __hash__(self):
        return hash((self.n, self.blocks))

    @classmethod
    def full(cls, n: int) -> "Relation":
        return cls(n, [range(n)])

    @classmethod
    def discrete(cls, n: int) -> "Relation":
        return cls(n, [[i] for i in range(n)])

    def _build(self):
        if self._tables is not None:
            return self._tables
        problems = _partition_problems(self.n, self.blocks)
        if problems:
            raise ValueError(f"blocks do not partition the atoms: {problems[0].message}")
        block_of = np.empty(self.n, dtype=np.int64)
        local = np.empty(self.n, dtype=np.int64)
        offsets = [0]
        px, py = [], []
        for b, block in enumerate(self.blocks):
            m = len(block)
            for i, z in enumerate(block):
                block_of[z] = b
                local[z] = i
            arr = np.asarray(block, dtype=np.int64)
            px.append(np.repeat(arr, m))
            py.append(np.tile(arr, m))
            offsets.append(offsets[-1] + m * m)
        px = np.concatenate(px) if px else np.zeros(0, dtype=np.int64)
        py = np.concatenate(py) if py else np.zeros(0, dtype=np.int64)
        index = np.full((self.n, self.n), -1, dtype=np.int64)
        index[px, py] = np.arange(len(px))
        for arr in (block_of, local, px, py, index):
            arr.setflags(write=False)
        self._tables = (block_of, local, np.asarray(offsets), px, py, index)
        return self._tables

    @property
    def block_of(self) -> np.ndarray:
        return self._build()[0]

    @property
    def local_index(self) -> np.ndarray:
        return self._build()[1]

    @property
    def pair_x(self) -> np.ndarray:
        return self._build()[3]

    @property
    def pair_y(self) -> np.ndarray:
        return self._build()[4]

    @property
    def pair_index(self) -> np.ndarray:
        """``n x n`` table of canonical pair positions, ``-1`` off the relation."""
        return self._build()[5]

    @property
    def n_pairs(self) -> int:
        return len(self.pair_x)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.pair_x.tolist(), self.pair_y.tolist()))

    def block_slice(self, b: int) -> slice:
        off = self._build()[2]
        return slice(int(off[b]), int(off[b + 1]))

    def related(self, x: int, y: int) -> bool:
        return 0 <= x < self.n and 0 <= y < self.n and self.pair_index[x, y] >= 0

    def diagonal(self) -> np.ndarray:
        """Canonical positions of the diagonal pairs ``(x, x)``, indexed by atom."""
        return self.pair_index[np.arange(self.n), np.arange(self.n)]

    def transpose_perm(self) -> np.ndarray:
        """Permutation sending pair position ``p = (x, y)`` to the position of ``(y, x)``."""
        return self.pair_index[self.pair_y, self.pair_x]

    def positions(self, subset) -> np.ndarray:
        """Canonical positions of an iterable of ``(x, y)`` pairs; DomainError off R."""
        out = []
        for x, y in subset:
            if not self.related(int(x), int(y)):
                raise DomainError(f"pair ({x}, {y}) is not in the relation")
            out.append(int(self.pair_index[x, y]))
        return np.asarray(out, dtype=np.int64)

    def to_matrix(self, values: np.ndarray, fill=0.0) -> np.ndarray:
        """Spread pair-indexed values over an ``n x n`` array."""
        out = np.full((self.n, self.n), fill, dtype=np.result_type(values, type(fill)))
        out[self.pair_x, self.pair_y] = values
        return out

    def from_matrix(self, mat: np.ndarray) -> np.ndarray:
        return np.asarray(mat)[self.pair_x, self.pair_y]

    def block_matrix(self, values: np.ndarray, b: int) -> np.ndarray:
        m = len(self.blocks[b])
        return np.asarray(values)[self.block_slice(b)].reshape(m, m)


def _partition_problems(n, blocks) -> list[Violation]:
    out = []
    seen = {}
    for b, block in enumerate(blocks):
        if len(block) == 0:
            out.append(Violation("empty-block", f"block {b} is empty", (b,)))
        for v in block:
            if not 0 <= v < n:
                out.append(Violation("unknown-atom", f"block {b} names atom {v} outside 0..{n - 1}", (b, v)))
            elif v in seen:
                out.append(
                    Violation("blocks-overlap", f"blocks not disjoint: atom {v} in blocks {seen[v]} and {b}", (v, seen[v], b))
                )
            else:
                seen[v] = b
    missing = [v for v in range(n) if v not in seen]
    if missing:
        out.append(Violation("blocks-not-covering", f"atoms {missing} belong to no block", tuple(missing)))
    return out


class Cocycle:
    """Unit-modulus values on composable triples, implicitly 1 where unlisted."""

    def __init__(self, values: Mapping[tuple[int, int, int], complex] | None = None):
        self.values = {tuple(int(v) for v in k): complex(c) for k, c in (values or {}).items()}
        self._blocks = {}

    def __repr__(self):
        return f"Cocycle({len(self.values)} stored values)"

    @classmethod
    def trivial(cls) -> "Cocycle":
        return cls()

    @classmethod
    def coboundary(cls, rel: Relation, c: np.ndarray) -> "Cocycle":
        """Cocycle ``c(x,y) c(y,z) / c(x,z)`` from a pair function ``c``.

        ``c`` must be unimodular with ``c(x,x) = 1`` and ``c(y,x) = conj c(x,y)``
        for the result to be normalised.
        """
        c = np.asarray(c, dtype=complex)
        vals = {}
        for b, block in enumerate(rel.blocks):
            cb = rel.block_matrix(c, b)
            S = cb[:, :, None] * cb[None, :, :] * np.conj(cb)[:, None, :]
            for (i, j, k) in itertools.product(range(len(block)), repeat=3):
                s = S[i, j, k]
                if abs(s - 1) > 1e-15:
                    vals[(block[i], block[j], block[k])] = s
        return cls(vals)

    def __call__(self, x, y, z) -> complex:
        return self.values.get((x, y, z), 1.0 + 0j)

    def is_trivial(self) -> bool:
        return all(v == 1 for v in self.values.values())

    def block_tensor(self, rel: Relation, b: int) -> np.ndarray:
        """Dense ``sigma`` on one block, indexed by local positions."""
        key = rel.blocks[b]
        if key in self._blocks:
            return self._blocks[key]
        block = rel.blocks[b]
        m = len(block)
        S = np.ones((m, m, m), dtype=np.complex128)
        if self.values:
            loc = {z: i for i, z in enumerate(block)}
            for (x, y, z), v in self.values.items():
                if x in loc and y in loc and z in loc:
                    S[loc[x], loc[y], loc[z]] = v
        S.setflags(write=False)
        self._blocks[key] = S
        return S

    def perturbed(self, triple, factor: complex) -> "Cocycle":
        vals = dict(self.values)
        t = tuple(int(v) for v in triple)
        vals[t] = self(*t) * factor
        return Cocycle(vals)


@dataclass(frozen=True, eq=False)
class FMRelation:
    """A finite Feldman-Moore relation ``(X, mu, R, sigma)``."""

    space: FiniteSpace
    rel: Relation
    sigma: Cocycle = field(default_factory=Cocycle)

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def n_pairs(self) -> int:
        return self.rel.n_pairs

    @property
    def weights(self) -> np.ndarray:
        return self.space.weights

    def pair_measure(self) -> np.ndarray:
        """Right counting measure of each singleton pair: ``nu{(x,y)} = mu{y}``."""
        return self.space.weights[self.rel.pair_y]

    def sigma_block(self, b: int) -> np.ndarray:
        return self.sigma.block_tensor(self.rel, b)

    def chi_diagonal(self) -> np.ndarray:
        a = np.zeros(self.n_pairs, dtype=complex)
        a[self.rel.diagonal()] = 1
        return a

    def validate(self) -> ValidationReport:
        rep = self.space.check()
        r2 = validate_relation(self.space, self.rel)
        rep.violations.extend(r2.violations)
        if rep.ok:
            r3 = validate_cocycle(self.rel, self.sigma)
            rep.violations.extend(r3.violations)
            rep.skew_violations.extend(r3.skew_violations)
        return rep


# ---------------------------------------------------------------------------


def validate_relation(space: FiniteSpace, rel: Relation) -> ValidationReport:
    rep = ValidationReport()
    if rel.n != space.n:
        rep.add("size-mismatch", f"relation has {rel.n} atoms, space has {space.n}")
    for v in _partition_problems(rel.n, rel.blocks):
        rep.violations.append(v)
    if rep.ok:
        expected = sum(len(b) ** 2 for b in rel.blocks)
        if rel.n_pairs != expected or np.unique(rel.pair_index[rel.pair_index >= 0]).size != expected:
            rep.add("pairs-mismatch", "pair table is not the union of B x B")
    return rep


_PERMS = {
    (0, 1, 2): +1, (1, 2, 0): +1, (2, 0, 1): +1,
    (1, 0, 2): -1, (0, 2, 1): -1, (2, 1, 0): -1,
}


def validate_cocycle(rel: Relation, sigma: Cocycle, tol: float = TOL) -> ValidationReport:
    """Exhaustively check modulus, normalisation, the cocycle identity and skew-symmetry."""
    rep = ValidationReport()
    for (x, y, z), v in sigma.values.items():
        if not (rel.related(x, y) and rel.related(y, z)):
            rep.add("cocycle-not-in-relation", f"triple ({x},{y},{z}) is not composable", (x, y, z))
            continue
        if abs(abs(v) - 1) > tol:
            rep.add("cocycle-not-unimodular", f"|sigma({x},{y},{z})| = {abs(v)!r}", (x, y, z))
        if (x == y or y == z or x == z) and abs(v - 1) > tol:
            rep.add("cocycle-not-normalised", f"sigma({x},{y},{z}) = {v!r} but two arguments coincide", (x, y, z))
    for b, block in enumerate(rel.blocks):
        S = sigma.block_tensor(rel, b)
        defect, i, j, k, l = _kernels.cocycle_defect(S)
        if defect > tol:
            q = (block[i], block[j], block[k], block[l])
            rep.add("cocycle-identity", f"cocycle identity fails at {q} by {defect:.3e}", q)
        inv = np.conj(S)
        for perm, sign in _PERMS.items():
            if perm == (0, 1, 2):
                continue
            P = S.transpose(np.argsort(perm))
            # P[x,y,z] = S evaluated at the permuted triple
            target = S if sign > 0 else inv
            d = np.abs(P - target)
            if d.max() > tol:
                i, j, k = np.unravel_index(int(np.argmax(d)), d.shape)
                t = (block[i], block[j], block[k])
                rep.skew_violations.append(
                    Violation("cocycle-not-skew", f"skew-symmetry fails for permutation {perm} at {t}", t + perm)
                )
                break
    return rep


def right_counting_measure(space: FiniteSpace, rel: Relation, subset) -> float:
    pos = rel.positions(subset)
    if pos.size == 0:
        return 0.0
    return float(np.sum(space.weights[rel.pair_y[pos]]))


def inverse_counting_measure(space: FiniteSpace, rel: Relation, subset) -> float:
    """``nu^{-1}(E) = nu(E^T)``."""
    return right_counting_measure(space, rel, [(y, x) for x, y in subset])


def band_limit(rel: Relation, subset) -> int:
    """``max_y |E_y| + max_x |E^x|`` for horizontal slices ``E_y`` and vertical slices ``E^x``."""
    pos = rel.positions(subset)
    if pos.size == 0:
        return 0
    pos = np.unique(pos)
    cols = np.bincount(rel.pair_y[pos], minlength=rel.n)
    rows = np.bincount(rel.pair_x[pos], minlength=rel.n)
    return int(cols.max() + rows.max())


# ---------------------------------------------------------------------------
# JSON relation specs


class SpecError(ValueError):
    """Schema problems, each as ``(code, json_pointer, message)``."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{c} at {p}: {m}" for c, p, m in self.errors))

    @property
    def codes(self):
        return [c for c, _, _ in self.errors]


def _parse_weight(w):
    if isinstance(w, str):
        return Fraction(w.strip())
    if isinstance(w, bool) or not isinstance(w, (int, float)):
        raise ValueError(f"weight {w!r} is neither a number nor a rational string")
    return Fraction(w) if isinstance(w, int) else w


def relation_from_json(obj: Mapping) -> FMRelation:
    """Build a validated FMRelation from the JSON relation schema."""
    errors = []
    for key in ("atoms", "weights", "blocks"):
        if key not in obj:
            errors.append(("missing-field", f"/{key}", f"required field {key!r} is absent"))
    if errors:
        raise SpecError(errors)
    atoms = [str(a) for a in obj["atoms"]]
    if len(set(atoms)) != len(atoms):
        errors.append(("duplicate-atom", "/atoms", "atom identifiers must be unique"))
    if len(obj["weights"]) != len(atoms):
        errors.append(("weights-length", "/weights", "one weight per atom is required"))
    weights = []
    for i, w in enumerate(obj["weights"]):
        try:
            weights.append(_parse_weight(w))
        except (ValueError, ZeroDivisionError) as exc:
            errors.append(("bad-weight", f"/weights/{i}", str(exc)))
    if errors:
        raise SpecError(errors)
    for i, w in enumerate(weights):
        if w <= 0:
            errors.append(("weight-not-positive", f"/weights/{i}", f"weight {w} is not positive"))
    total = sum(weights)
    exact = all(isinstance(w, Fraction) for w in weights)
    if (exact and total != 1) or (not exact and abs(float(total) - 1.0) > TOL):
        errors.append(("weights-not-probability", "/weights", f"weights sum to {float(total)!r}"))
    lookup = {a: i for i, a in enumerate(atoms)}
    blocks = []
    for b, block in enumerate(obj["blocks"]):
        idx = []
        for k, a in enumerate(block):
            if str(a) not in lookup:
                errors.append(("unknown-atom", f"/blocks/{b}/{k}", f"atom {a!r} is not declared"))
            else:
                idx.append(lookup[str(a)])
        blocks.append(idx)
    for v in _partition_problems(len(atoms), blocks):
        code = "block-overlap" if v.code == "blocks-overlap" else v.code
        errors.append((code, "/blocks", v.message))
    if errors:
        raise SpecError(errors)
    space = FiniteSpace(tuple(atoms), np.array([float(w) for w in weights]))
    rel = Relation(len(atoms), blocks)
    vals = {}
    for k, entry in enumerate(obj.get("cocycle", []) or []):
        ptr = f"/cocycle/{k}"
        try:
            t = (lookup[str(entry["x"])], lookup[str(entry["y"])], lookup[str(entry["z"])])
            v = complex(float(entry.get("re", 1.0)), float(entry.get("im", 0.0)))
        except KeyError as exc:
            errors.append(("bad-cocycle-entry", ptr, f"missing or unknown {exc}"))
            continue
        if not (rel.related(t[0], t[1]) and rel.related(t[1], t[2])):
            errors.append(("cocycle-not-in-relation", ptr, "triple is not composable"))
        elif abs(abs(v) - 1) > TOL:
            errors.append(("cocycle-not-unimodular", ptr, f"|value| = {abs(v)!r}"))
        vals[t] = v
    if errors:
        raise SpecError(errors)
    sigma = Cocycle(vals)
    rep = validate_cocycle(rel, sigma)
    for v in rep.violations:
        errors.append((v.code, "/cocycle", v.message))
    if errors:
        raise SpecError(errors)
    return FMRelation(space, rel, sigma)


def relation_to_json(fm: FMRelation) -> dict:
    atoms = list(fm.space.atoms)
    out = {
        "atoms": atoms,
        "weights": [float(w) for w in fm.space.weights],
        "blocks": [[atoms[i] for i in b] for b in fm.rel.blocks],
        "cocycle": [
            {"x": atoms[x], "y": atoms[y], "z": atoms[z], "re": v.real, "im": v.imag}
            for (x, y, z), v in sorted(fm.sigma.values.items())
        ],
    }
    return out


# ---------------------------------------------------------------------------
# random instances


def random_hermitian_phases(rel: Relation, rng: np.random.Generator) -> np.ndarray:
    """Unimodular pair function with ``c(x,x) = 1`` and ``c(y,x) = conj c(x,y)``."""
    theta = rng.uniform(-np.pi, np.pi, size=rel.n_pairs)
    theta = theta - theta[rel.transpose_perm()]
    return np.exp(0.5j * theta)


def random_fm_relation(
    rng: np.random.Generator,
    n_atoms: int | None = None,
    max_block: int = 5,
    twisted: bool = True,
    uniform: bool = False,
) -> FMRelation:
    """Random finite relation with positive weights and (optionally) a random cocycle."""
    if n_atoms is None:
        n_atoms = int(rng.integers(1, 3 * max_block + 1))
    perm = rng.permutation(n_atoms)
    blocks, i = [], 0
    while i < n_atoms:
        m = int(rng.integers(1, max_block + 1))
        blocks.append(sorted(int(v) for v in perm[i : i + m]))
        i += m
    if uniform:
        w = np.full(n_atoms, 1.0 / n_atoms)
    else:
        w = rng.uniform(0.2, 1.0, size=n_atoms)
        w /= w.sum()
    rel = Relation(n_atoms, blocks)
    sigma = Cocycle.coboundary(rel, random_hermitian_phases(rel, rng)) if twisted else Cocycle()
    return FMRelation(FiniteSpace.uniform(n_atoms) if uniform else FiniteSpace(
        tuple(f"x{k}" for k in range(n_atoms)), w), rel, sigma)
