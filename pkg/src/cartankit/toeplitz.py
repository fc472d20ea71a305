"""Toeplitz idempotents ``chi_Delta(D)`` over the dyadic rationals mod 1.

Sets ``D`` are boolean expressions::

    expr    := diff ('|' diff)*
    diff    := meet ('\\' meet)*
    meet    := unary ('&' unary)*
    unary   := '!' unary | atom
    atom    := 'G' '(' m ')' | 'G' | '{' r, ... '}' | r '+' 'G' '(' m ')'
             | 'Lvl' '(' q ',' p ')' | 'Odd' | '(' expr ')'
    r       := a '/' '2^' b | a '/' 2^b-as-integer | a

``G(m)`` is the subgroup of level ``m``, ``G`` the whole group, and
``Lvl(q, p)`` the rationals whose exact level is ``p`` mod ``q`` (``Odd`` is
``Lvl(2, 1)``). The exact level of ``a / 2^b`` in lowest terms is ``b``, and 0
is the only element of level 0.

Membership of any element whose exact level exceeds every level named in the
expression depends only on that level modulo the lcm of the ``q``'s, which
makes finiteness and cofiniteness decidable without sampling.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .dyadic import DyadicLevel
from .eh import gamma2


class ExprError(ValueError):
    """Malformed set expression."""


# ---------------------------------------------------------------------------
# dyadic rationals mod 1


def dyadic(value) -> Fraction:
    """Reduce mod 1; strings may write the denominator as ``2^b``."""
    if isinstance(value, str):
        m = re.fullmatch(r"\s*(-?\d+)\s*/\s*2\s*\^\s*(\d+)\s*", value)
        if m:
            value = Fraction(int(m.group(1)), 1 << int(m.group(2)))
    r = Fraction(value) % 1
    d = r.denominator
    if d & (d - 1):
        raise ExprError(f"{value} is not a dyadic rational")
    return r


def exact_level(r: Fraction) -> int:
    return Fraction(r).denominator.bit_length() - 1


def shift_levels(N: int) -> np.ndarray:
    """Exact level of ``s / 2^N`` for every shift index ``s``."""
    s = np.arange(1 << N)
    lv = np.zeros(1 << N, dtype=np.int64)
    nz = s > 0
    v2 = np.zeros_like(s)
    t = s.copy()
    while np.any(nz & (t % 2 == 0)):
        even = nz & (t % 2 == 0)
        v2[even] += 1
        t[even] //= 2
    lv[nz] = N - v2[nz]
    return lv


# ---------------------------------------------------------------------------
# syntax tree


class Node:
    def levels(self) -> list[int]:
        return []

    def moduli(self) -> list[int]:
        return []

    def children(self) -> tuple:
        return ()


@dataclass(frozen=True)
class Subgroup(Node):
    m: int

    def levels(self):
        return [self.m]

    def at_level(self, N):
        if self.m >= N:
            return np.ones(1 << N, dtype=bool)
        return np.arange(1 << N) % (1 << (N - self.m)) == 0

    def beyond(self, level):
        return False

    def __str__(self):
        return f"G({self.m})"


@dataclass(frozen=True)
class Whole(Node):
    def at_level(self, N):
        return np.ones(1 << N, dtype=bool)

    def beyond(self, level):
        return True

    def __str__(self):
        return "G"


@dataclass(frozen=True)
class Finite(Node):
    elements: frozenset

    def levels(self):
        return [exact_level(r) for r in self.elements]

    def at_level(self, N):
        out = np.zeros(1 << N, dtype=bool)
        for r in self.elements:
            if exact_level(r) <= N:
                out[int(r * (1 << N))] = True
        return out

    def beyond(self, level):
        return False

    def __str__(self):
        return "{" + ", ".join(_fmt(r) for r in sorted(self.elements)) + "}"


@dataclass(frozen=True)
class Coset(Node):
    t: Fraction
    m: int

    def levels(self):
        return [self.m, exact_level(self.t)]

    def at_level(self, N):
        # s / 2^N - t in G(m)  <=>  (s / 2^N - t) 2^m is an integer
        size = 1 << N
        return np.array(
            [((Fraction(s, size) - self.t) * (1 << self.m)).denominator == 1 for s in range(size)],
            dtype=bool,
        )

    def beyond(self, level):
        return False

    def __str__(self):
        return f"{_fmt(self.t)} + G({self.m})"


@dataclass(frozen=True)
class LevelClass(Node):
    q: int
    p: int

    def moduli(self):
        return [self.q]

    def at_level(self, N):
        return shift_levels(N) % self.q == self.p % self.q

    def beyond(self, level):
        return level % self.q == self.p % self.q

    def __str__(self):
        return f"Lvl({self.q}, {self.p})"


@dataclass(frozen=True)
class Not(Node):
    a: Node

    def children(self):
        return (self.a,)

    def at_level(self, N):
        return ~self.a.at_level(N)

    def beyond(self, level):
        return not self.a.beyond(level)

    def __str__(self):
        return f"!{_paren(self.a)}"


@dataclass(frozen=True)
class Binary(Node):
    op: str
    a: Node
    b: Node

    def children(self):
        return (self.a, self.b)

    def at_level(self, N):
        x, y = self.a.at_level(N), self.b.at_level(N)
        return {"|": x | y, "&": x & y, "\\": x & ~y}[self.op]

    def beyond(self, level):
        x, y = self.a.beyond(level), self.b.beyond(level)
        return {"|": x or y, "&": x and y, "\\": x and not y}[self.op]

    def __str__(self):
        return f"{_paren(self.a)} {self.op} {_paren(self.b)}"


def _paren(n: Node) -> str:
    return f"({n})" if isinstance(n, Binary) else str(n)


def _fmt(r: Fraction) -> str:
    if r == 0:
        return "0"
    return f"{r.numerator}/2^{exact_level(r)}"


def _collect(node: Node, attr: str) -> list[int]:
    out = list(getattr(node, attr)())
    for c in node.children():
        out += _collect(c, attr)
    return out


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(r"\s*(?:(Lvl|Odd|G)|(\d+)|(\^)|([(){},/|&!\\+]))")


def _tokenize(text: str) -> list[str]:
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ExprError(f"unexpected character {text[pos:].strip()[:1]!r} at offset {pos}")
        out.append(m.group(m.lastindex))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, want=None):
        tok = self.peek()
        if tok is None or (want is not None and tok != want):
            raise ExprError(f"expected {want or 'a token'}, found {tok or 'end of input'}")
        self.i += 1
        return tok

    def integer(self):
        tok = self.take()
        if not tok.isdigit():
            raise ExprError(f"expected an integer, found {tok}")
        return int(tok)

    def parse(self):
        if not self.toks:
            raise ExprError("empty expression")
        node = self.expr()
        if self.peek() is not None:
            raise ExprError(f"trailing input at {self.peek()}")
        return node

    def expr(self):
        node = self.diff()
        while self.peek() == "|":
            self.take()
            node = Binary("|", node, self.diff())
        return node

    def diff(self):
        node = self.meet()
        while self.peek() == "\\":
            self.take()
            node = Binary("\\", node, self.meet())
        return node

    def meet(self):
        node = self.unary()
        while self.peek() == "&":
            self.take()
            node = Binary("&", node, self.unary())
        return node

    def unary(self):
        if self.peek() == "!":
            self.take()
            return Not(self.unary())
        return self.atom()

    def rational(self):
        a = self.integer()
        if self.peek() != "/":
            return dyadic(a)
        self.take("/")
        b = self.integer()
        if self.peek() == "^":
            if b != 2:
                raise ExprError("only powers of 2 may appear in denominators")
            self.take("^")
            return dyadic(Fraction(a, 1 << self.integer()))
        if b == 0:
            raise ExprError("zero denominator")
        return dyadic(Fraction(a, b))

    def atom(self):
        tok = self.peek()
        if tok == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        if tok == "G":
            self.take()
            if self.peek() == "(":
                self.take()
                m = self.integer()
                self.take(")")
                return Subgroup(m)
            return Whole()
        if tok == "Odd":
            self.take()
            return LevelClass(2, 1)
        if tok == "Lvl":
            self.take()
            self.take("(")
            q = self.integer()
            self.take(",")
            p = self.integer()
            self.take(")")
            if q < 1:
                raise ExprError("Lvl modulus must be positive")
            return LevelClass(q, p % q)
        if tok == "{":
            self.take()
            elems = []
            if self.peek() != "}":
                elems.append(self.rational())
                while self.peek() == ",":
                    self.take()
                    elems.append(self.rational())
            self.take("}")
            return Finite(frozenset(elems))
        if tok is not None and tok.isdigit():
            t = self.rational()
            self.take("+")
            self.take("G")
            self.take("(")
            m = self.integer()
            self.take(")")
            return Coset(t, m)
        raise ExprError(f"unexpected token {tok or 'end of input'}")


def parse_set(text: str) -> Node:
    return _Parser(text).parse()


def _as_node(D) -> Node:
    return parse_set(D) if isinstance(D, str) else D


# ---------------------------------------------------------------------------
# decision


@dataclass
class Decision:
    member: bool
    kind: str  # "finite", "cofinite" or "neither"
    reason: str
    stable_level: int  # beyond this level membership is periodic in the level
    period: int
    count: int | None = None  # |D| when finite, |complement| when cofinite (if enumerated)
    witnesses: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return "member" if self.member else "non_member"

    def norm_bound(self) -> float | None:
        """Uniform bound on the Schur norms of the level patterns, for members."""
        if not self.member or self.count is None:
            return None
        return float(self.count) if self.kind == "finite" else 1.0 + self.count


ENUMERATION_LIMIT = 20


def coset_ring_decide(D) -> Decision:
    node = _as_node(D)
    M = max(_collect(node, "levels"), default=0)
    L = 1
    for q in _collect(node, "moduli"):
        L = L * q // math.gcd(L, q)
    residues = {lvl % L: node.beyond(lvl) for lvl in range(M + 1, M + 1 + L)}
    truth = set(residues.values())
    count = None
    if len(truth) == 1 and M <= ENUMERATION_LIMIT:
        inside = node.at_level(M)
        count = int(inside.sum()) if truth == {False} else int((~inside).sum())
    if truth == {False}:
        return Decision(
            True, "finite",
            f"every element of exact level > {M} is outside D, so D is contained in G({M})",
            M, L, count,
        )
    if truth == {True}:
        return Decision(
            True, "cofinite",
            f"every element of exact level > {M} lies in D, so the complement is contained in G({M})",
            M, L, count,
        )
    yes = min(lvl for lvl in range(M + 1, M + 1 + L) if node.beyond(lvl))
    no = min(lvl for lvl in range(M + 1, M + 1 + L) if not node.beyond(lvl))
    wit = {
        "level_in": yes,
        "level_out": no,
        "example_in": _fmt(Fraction(1, 1 << yes)),
        "example_out": _fmt(Fraction(1, 1 << no)),
    }
    reason = (
        f"beyond level {M} membership depends only on the exact level mod {L}; "
        f"levels congruent to {yes % L} lie in D and levels congruent to {no % L} do not, "
        "so D and its complement are both infinite"
    )
    return Decision(False, "neither", reason, M, L, None, wit)


# ---------------------------------------------------------------------------
# Toeplitz patterns


@dataclass
class ToeplitzPattern:
    level: int
    shifts: np.ndarray  # boolean mask over s = 0..2^N - 1

    @property
    def size(self) -> int:
        return 1 << self.level

    def shift_set(self) -> list[int]:
        return [int(s) for s in np.flatnonzero(self.shifts)]

    def matrix(self) -> np.ndarray:
        """``chi(k, l) = 1`` iff ``(l - k) mod 2^N`` is in the shift set."""
        lvl = DyadicLevel(self.level)
        return self.shifts[lvl.shift_matrix()].astype(complex)

    def symbol(self) -> np.ndarray:
        """The pattern as a pair vector on the level's relation."""
        return self.matrix().ravel()

    def fourier_norm(self) -> float:
        """Fourier-algebra norm of the shift indicator on ``Z_{2^N}``.

        For a circulant pattern this equals its Schur multiplier norm.
        """
        return float(np.sum(np.abs(np.fft.fft(self.shifts.astype(float)))) / self.size)


def toeplitz_multiplier(D, N: int) -> ToeplitzPattern:
    DyadicLevel(N)
    return ToeplitzPattern(N, _as_node(D).at_level(N))


@dataclass
class ScanRow:
    N: int
    norm: float  # Fourier-algebra value, exact for circulant patterns
    gamma2: float  # certified factorization norm from the solver
    gap: float
    decision: str


def norm_growth_scan(D, levels) -> list[ScanRow]:
    node = _as_node(D)
    levels = list(levels)
    if any(not 1 <= n <= 6 for n in levels):
        raise ValueError("scan levels must lie in 1..6")
    label = coset_ring_decide(node).label
    rows = []
    for N in levels:
        pat = toeplitz_multiplier(node, N)
        g = gamma2(pat.matrix())
        rows.append(ScanRow(N, pat.fourier_norm(), g.value, g.gap, label))
    return rows
