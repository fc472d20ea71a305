import numpy as np
import pytest
from hypothesis import given, strategies as st

from cartankit.relation import (
    DomainError,
    FiniteSpace,
    FMRelation,
    Relation,
    band_limit,
    random_fm_relation,
)
from cartankit.symbols import (
    ConvOperator,
    NotInAlgebraError,
    PartialIso,
    build_operator,
    column_symbol,
    diag_symbol,
    graph_partition,
    graph_symbol,
    identity_operator,
    involution,
    l2_norm,
    masa_embed,
    operator_from_csv,
    operator_norm,
    operator_to_csv,
    partial_iso_operator,
    projection,
    right_convolver,
    row_symbol,
    star_product,
    sup_norm,
    symbol_from_json,
    symbol_of,
    symbol_to_json,
)

seeds = st.integers(0, 100_000)


def setup(seed, **kw):
    rng = np.random.default_rng(seed)
    fm = random_fm_relation(rng, **kw)
    return rng, fm


def rand_symbol(rng, fm):
    return rng.normal(size=fm.n_pairs) + 1j * rng.normal(size=fm.n_pairs)


def close(A, B, tol=1e-10):
    A = A.dense() if isinstance(A, ConvOperator) else A
    B = B.dense() if isinstance(B, ConvOperator) else B
    return np.abs(A - B).max(initial=0.0) <= tol


def random_partial_iso(rng, rel):
    mapping = {}
    used = set()
    for block in rel.blocks:
        for x in block:
            if rng.random() < 0.7:
                choices = [y for y in block if y not in used]
                if choices:
                    y = int(rng.choice(choices))
                    mapping[x] = y
                    used.add(y)
    return PartialIso(mapping)


class TestAlgebra:
    @given(seeds)
    def test_homomorphism(self, seed):
        rng, fm = setup(seed)
        a, b = rand_symbol(rng, fm), rand_symbol(rng, fm)
        assert close(build_operator(fm, star_product(fm, a, b)), build_operator(fm, a) @ build_operator(fm, b))

    @given(seeds)
    def test_star_preserving(self, seed):
        rng, fm = setup(seed)
        a = rand_symbol(rng, fm)
        assert close(build_operator(fm, involution(fm, a)), build_operator(fm, a).H)

    @given(seeds)
    def test_associativity(self, seed):
        rng, fm = setup(seed)
        a, b, c = (rand_symbol(rng, fm) for _ in range(3))
        lhs = star_product(fm, star_product(fm, a, b), c)
        rhs = star_product(fm, a, star_product(fm, b, c))
        assert np.allclose(lhs, rhs, atol=1e-10)

    @given(seeds)
    def test_symbol_round_trip(self, seed):
        rng, fm = setup(seed)
        a = rand_symbol(rng, fm)
        assert np.allclose(symbol_of(build_operator(fm, a)), a, atol=1e-12)

    def test_identity_symbol(self, rng):
        fm = random_fm_relation(rng, n_atoms=6)
        assert close(build_operator(fm, fm.chi_diagonal()), identity_operator(fm))

    def test_column_mixing_rejected(self, rng):
        fm = FMRelation(FiniteSpace.uniform(2), Relation.full(2))
        # row (0,0), column (0,1): different second coordinates
        M = np.zeros((4, 4))
        M[fm.rel.pair_index[0, 0], fm.rel.pair_index[0, 1]] = 1
        with pytest.raises(NotInAlgebraError):
            symbol_of(ConvOperator(fm, M))

    def test_random_matrix_not_in_algebra(self, rng):
        fm = random_fm_relation(rng, n_atoms=5, max_block=3)
        with pytest.raises(NotInAlgebraError):
            symbol_of(ConvOperator(fm, rng.normal(size=(fm.n_pairs, fm.n_pairs))))

    @given(seeds)
    def test_commutant(self, seed):
        rng, fm = setup(seed)
        A = build_operator(fm, rand_symbol(rng, fm))
        Rb = right_convolver(fm, rand_symbol(rng, fm))
        assert close(A @ Rb, Rb @ A, 1e-9)


class TestNorms:
    @given(seeds)
    def test_norm_sandwich(self, seed):
        rng, fm = setup(seed)
        a = rand_symbol(rng, fm)
        T = build_operator(fm, a)
        nrm = operator_norm(T)
        assert nrm == pytest.approx(operator_norm(T, "full"), rel=1e-10)
        assert sup_norm(a) <= nrm * (1 + 1e-12)
        assert l2_norm(fm, a) <= nrm * (1 + 1e-12)
        assert nrm <= band_limit(fm.rel, fm.rel.pairs) * sup_norm(a) * (1 + 1e-12)

    @given(seeds)
    def test_band_limited_bound_on_sparse_support(self, seed):
        rng, fm = setup(seed, max_block=5)
        a = rand_symbol(rng, fm) * (rng.random(fm.n_pairs) < 0.3)
        supp = [p for p, v in zip(fm.rel.pairs, a) if v != 0]
        assert operator_norm(build_operator(fm, a)) <= band_limit(fm.rel, supp) * sup_norm(a) + 1e-12

    def test_matrix_units_have_norm_one(self, rng):
        fm = random_fm_relation(rng, n_atoms=6, max_block=4)
        for p in range(fm.n_pairs):
            e = np.zeros(fm.n_pairs)
            e[p] = 1
            assert operator_norm(build_operator(fm, e)) == pytest.approx(1.0)


class TestMasa:
    @given(seeds)
    def test_action(self, seed):
        rng, fm = setup(seed)
        a = rand_symbol(rng, fm)
        al = rng.normal(size=fm.n) + 1j * rng.normal(size=fm.n)
        be = rng.normal(size=fm.n) + 1j * rng.normal(size=fm.n)
        lhs = masa_embed(fm, al) @ build_operator(fm, a) @ masa_embed(fm, be)
        rhs = build_operator(fm, column_symbol(fm, al) * a * row_symbol(fm, be))
        assert close(lhs, rhs)

    def test_masa_is_multiplicative(self, rng):
        fm = random_fm_relation(rng, n_atoms=7)
        al, be = rng.normal(size=7), rng.normal(size=7)
        assert close(masa_embed(fm, al) @ masa_embed(fm, be), masa_embed(fm, al * be))
        assert np.allclose(star_product(fm, diag_symbol(fm, al), diag_symbol(fm, be)), diag_symbol(fm, al * be))


class TestPartialIsometries:
    """The five clauses relating V(f) and P(delta)."""

    @given(seeds)
    def test_adjoint_is_inverse(self, seed):
        rng, fm = setup(seed)
        f = random_partial_iso(rng, fm.rel)
        assert close(partial_iso_operator(fm, f).H, partial_iso_operator(fm, f.inverse()))

    @given(seeds)
    def test_compression(self, seed):
        rng, fm = setup(seed)
        f = random_partial_iso(rng, fm.rel)
        delta = {x for x in range(fm.n) if rng.random() < 0.5}
        rho = {x for x in range(fm.n) if rng.random() < 0.5}
        lhs = projection(fm, delta) @ partial_iso_operator(fm, f) @ projection(fm, rho)
        assert close(lhs, partial_iso_operator(fm, f.restrict(delta).corestrict(rho)))

    def test_projections(self, rng):
        fm = random_fm_relation(rng, n_atoms=6)
        for _ in range(10):
            delta = {x for x in range(6) if rng.random() < 0.5}
            P = projection(fm, delta)
            assert close(P @ P, P) and close(P.H, P)
            assert close(P, partial_iso_operator(fm, PartialIso.identity(delta)))

    def test_every_projection_is_masa(self, rng):
        # a projection L(a) has idempotent symbol under the twisted product; within D it is P(delta)
        fm = random_fm_relation(rng, n_atoms=5)
        for mask in range(1 << 5):
            delta = {x for x in range(5) if mask >> x & 1}
            a = diag_symbol(fm, [1.0 if x in delta else 0.0 for x in range(5)])
            assert np.allclose(star_product(fm, a, a), a)
            assert np.allclose(involution(fm, a), a)

    @given(seeds)
    def test_intertwining(self, seed):
        rng, fm = setup(seed)
        f = random_partial_iso(rng, fm.rel)
        rho = {x for x in range(fm.n) if rng.random() < 0.5}
        V = partial_iso_operator(fm, f)
        P1 = projection(fm, rho)
        P2 = projection(fm, f.preimage(rho))
        assert close(V @ P1, P2 @ V)

    @given(seeds)
    def test_partial_isometry(self, seed):
        rng, fm = setup(seed)
        f = random_partial_iso(rng, fm.rel)
        V = partial_iso_operator(fm, f)
        init, final = V.H @ V, V @ V.H
        assert close(V @ init, V)
        assert close(init, projection(fm, f.range))
        assert close(final, projection(fm, f.domain))

    def test_graph_outside_relation(self):
        fm = FMRelation(FiniteSpace.uniform(2), Relation.discrete(2))
        with pytest.raises(DomainError):
            graph_symbol(fm, PartialIso({0: 1}))

    @pytest.mark.parametrize("strategy", ["shift", "reflection", "random"])
    @given(seed=seeds)
    def test_partitions(self, strategy, seed):
        rng, fm = setup(seed, max_block=6)
        parts = graph_partition(fm.rel, strategy, seed)
        assert parts[0] == PartialIso.identity(range(fm.n))
        total = sum(graph_symbol(fm, f) for f in parts)
        assert np.array_equal(total, np.ones(fm.n_pairs))

    def test_unknown_strategy(self):
        with pytest.raises(ValueError):
            graph_partition(Relation.full(2), "spiral")


class TestSerialisation:
    def test_symbol_json(self, rng):
        fm = random_fm_relation(rng, n_atoms=5)
        a = rand_symbol(rng, fm)
        assert np.array_equal(symbol_from_json(fm, symbol_to_json(fm, a)), a)

    def test_operator_csv(self, rng):
        fm = random_fm_relation(rng, n_atoms=5, twisted=True)
        T = build_operator(fm, rand_symbol(rng, fm))
        assert np.array_equal(operator_from_csv(fm, operator_to_csv(T)).dense(), T.dense())

    def test_symbol_shape_checked(self, rng):
        fm = random_fm_relation(rng, n_atoms=3)
        with pytest.raises(ValueError):
            symbol_from_json(fm, [[0, 0]] * (fm.n_pairs + 1))


class TestWorkedExamples:
    def test_off_diagonal_unit_has_norm_one(self):
        fm = FMRelation(FiniteSpace.uniform(2), Relation.full(2))
        a = np.zeros(4)
        a[fm.rel.pair_index[0, 1]] = 1
        assert operator_norm(build_operator(fm, a)) == pytest.approx(1.0)

    @given(seeds)
    def test_involution_reverses_products(self, seed):
        rng, fm = setup(seed, twisted=True)
        a, b = rand_symbol(rng, fm), rand_symbol(rng, fm)
        lhs = involution(fm, star_product(fm, a, b))
        rhs = star_product(fm, involution(fm, b), involution(fm, a))
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_two_step_paths(self):
        fm = FMRelation(FiniteSpace.uniform(3), Relation.full(3))
        off = np.array([0.0 if x == y else 1.0 for x, y in fm.rel.pairs])
        c = star_product(fm, off, off)
        # x -> y -> z with y different from both: 2 paths back to x, 1 path to each other point
        for (x, z), v in zip(fm.rel.pairs, c):
            assert v == (2 if x == z else 1)

    @pytest.mark.parametrize("twisted", [False, True])
    def test_square_of_two_cycle(self, twisted, rng):
        fm = random_fm_relation(rng, n_atoms=2, max_block=2, twisted=twisted)
        if fm.n_pairs != 4:
            fm = FMRelation(FiniteSpace.uniform(2), Relation.full(2))
        V = partial_iso_operator(fm, PartialIso({0: 1, 1: 0}))
        sq = (V @ V).dense()
        # diagonal with unimodular entries from sigma(x, f(x), x); the identity when sigma is trivial
        assert np.allclose(sq, np.diag(np.diag(sq)))
        assert np.allclose(np.abs(np.diag(sq)), 1)
        beta = np.array([fm.sigma(x, 1 - x, x) for x in range(2)])
        assert np.allclose(sq, masa_embed(fm, beta).dense())
        if not twisted:
            assert np.allclose(sq, np.eye(4))

    def test_partition_of_two_blocks(self):
        rel = Relation(4, [[0, 1], [2, 3]])
        parts = graph_partition(rel)
        graphs = [set(f.graph()) for f in parts]
        assert sum(len(g) for g in graphs) == len(set().union(*graphs)) == 8

    @given(seeds)
    def test_right_convolver_on_unit(self, seed):
        rng, fm = setup(seed, twisted=True)
        b = rand_symbol(rng, fm)
        from cartankit.symbols import apply_to_function

        assert np.allclose(apply_to_function(right_convolver(fm, b), fm.chi_diagonal()), b, atol=1e-12)
