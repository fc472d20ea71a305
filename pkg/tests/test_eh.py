import numpy as np
import pytest
from hypothesis import given, strategies as st

from cartankit.eh import (
    EhTensor,
    SolverError,
    dual_lower_bound,
    eh_norm,
    eh_norm_lower_bound,
    gamma2,
    multiplier_from_tensor,
    psi_action,
    sup_norm_of_tensor,
    tensor_from_pattern,
)
from cartankit.relation import random_fm_relation
from cartankit.schur import multiplier_norm
from cartankit.symbols import build_operator, column_symbol, sup_norm

seeds = st.integers(0, 100_000)

# values from an independent Clarabel solve of the semidefinite program
FROZEN = [
    ([[1, 1], [0, 1]], 2 / np.sqrt(3)),
    (np.triu(np.ones((3, 3))), 1.2531972647),
    (np.triu(np.ones((4, 4))), 1.3261226665),
    (
        [[0.001, 0.299, -0.274, -0.891], [-0.455, -0.992, 0.06, 1.34], [-0.492, -0.62, 0.49, 0.357]],
        1.34,
    ),
    ([[1, -1, -1, 1], [-1, -1, -1, -1], [-1, -1, -1, 1], [1, -1, -1, -1]], np.sqrt(3)),
]


def sylvester(k):
    H = np.array([[1.0]])
    for _ in range(k):
        H = np.block([[H, H], [H, -H]])
    return H


def rand_c(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


class TestGamma2Values:
    @pytest.mark.parametrize("n", [1, 3, 8])
    def test_all_ones(self, n):
        r = gamma2(np.ones((n, n)))
        assert r.value == pytest.approx(1, abs=1e-6) and r.gap <= 1e-6

    @pytest.mark.parametrize("n", [1, 4, 9])
    def test_identity(self, n):
        r = gamma2(np.eye(n))
        assert r.value == pytest.approx(1, abs=1e-6) and r.gap <= 1e-6

    def test_sign_matrix(self):
        r = gamma2([[1, 1], [1, -1]])
        assert abs(r.value - np.sqrt(2)) <= 1e-6
        assert abs(r.lower - np.sqrt(2)) <= 1e-6
        assert r.gap <= 1e-6

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_hadamard(self, k):
        assert gamma2(sylvester(k)).value == pytest.approx(2 ** (k / 2), abs=1e-8)

    @pytest.mark.parametrize("P, expected", FROZEN)
    def test_frozen_oracle(self, P, expected):
        r = gamma2(P)
        assert r.value == pytest.approx(expected, abs=1e-8)
        assert r.gap <= 1e-9

    @pytest.mark.parametrize("n", [3, 5, 8])
    def test_circulant_equals_fourier_l1(self, n, rng):
        c = rand_c(rng, n)
        C = np.array([[c[(j - i) % n] for j in range(n)] for i in range(n)])
        assert gamma2(C).value == pytest.approx(np.abs(np.fft.fft(c)).sum() / n, abs=1e-8)

    def test_rank_one(self, rng):
        u, v = rand_c(rng, 5), rand_c(rng, 4)
        r = gamma2(np.outer(u, np.conj(v)))
        assert r.value == pytest.approx(np.abs(u).max() * np.abs(v).max(), rel=1e-9)

    def test_zero_and_empty(self):
        assert gamma2(np.zeros((3, 3))).value == 0
        assert gamma2(np.zeros((0, 0))).value == 0

    def test_interior_agrees(self):
        r = gamma2([[1, 1], [0, 1]], method="interior")
        assert r.method == "interior"
        assert r.value == pytest.approx(2 / np.sqrt(3), abs=1e-6)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            gamma2(np.eye(2), method="simplex")

    def test_solver_error_carries_bracket(self):
        err = SolverError("stalled", 1.0, 2.0)
        assert (err.lower, err.upper) == (1.0, 2.0)


class TestGamma2Certificates:
    @given(seeds, st.integers(1, 6), st.integers(1, 6))
    def test_factorization_and_dual(self, seed, n, m):
        rng = np.random.default_rng(seed)
        P = rand_c(rng, n, m)
        r = gamma2(P)
        assert np.abs(r.left @ np.conj(r.right).T - P).max() <= 1e-9 * max(1, np.abs(P).max())
        rows = np.linalg.norm(r.left, axis=1).max()
        cols = np.linalg.norm(r.right, axis=1).max()
        assert rows * cols == pytest.approx(r.value, rel=1e-9)
        assert r.lam.sum() == pytest.approx(1) and r.mu.sum() == pytest.approx(1)
        assert dual_lower_bound(P, r.lam / 2, r.mu / 2, r.witness()) == pytest.approx(r.lower, rel=1e-8)
        assert r.lower <= r.value + 1e-12
        assert r.gap <= 1e-8

    @given(seeds)
    def test_sandwich(self, seed):
        rng = np.random.default_rng(seed)
        P = rand_c(rng, 4, 5)
        v = gamma2(P).value
        assert np.abs(P).max() <= v + 1e-9
        assert v <= np.linalg.norm(P, 2) + 1e-9

    @given(seeds)
    def test_invariances(self, seed):
        rng = np.random.default_rng(seed)
        P = rand_c(rng, 4, 4)
        v = gamma2(P).value
        d1 = np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
        d2 = np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
        assert gamma2(d1[:, None] * P * d2[None, :]).value == pytest.approx(v, rel=1e-8)
        assert gamma2(P.T).value == pytest.approx(v, rel=1e-8)
        assert gamma2(np.conj(P)).value == pytest.approx(v, rel=1e-8)
        perm = rng.permutation(4)
        assert gamma2(P[perm][:, perm[::-1]]).value == pytest.approx(v, rel=1e-8)

    @given(seeds)
    def test_schur_submultiplicative(self, seed):
        rng = np.random.default_rng(seed)
        P, Q = rand_c(rng, 4, 4), rand_c(rng, 4, 4)
        assert gamma2(P * Q).value <= gamma2(P).value * gamma2(Q).value + 1e-8

    @given(seeds)
    def test_kron_multiplicative(self, seed):
        rng = np.random.default_rng(seed)
        P, Q = rand_c(rng, 2, 3), rand_c(rng, 3, 2)
        assert gamma2(np.kron(P, Q)).value == pytest.approx(gamma2(P).value * gamma2(Q).value, rel=1e-7)


class TestEhTensors:
    @given(seeds)
    def test_norm_dominates_multiplier_and_sup(self, seed):
        rng = np.random.default_rng(seed)
        fm = random_fm_relation(rng, n_atoms=int(rng.integers(2, 10)), max_block=6)
        u = EhTensor.random(rng, fm.n, int(rng.integers(1, 5)))
        e = eh_norm(fm, u)
        phi = multiplier_from_tensor(fm, u)
        assert multiplier_norm(fm, phi).value <= e.value + 1e-5
        assert sup_norm_of_tensor(fm, u) <= e.value + 1e-9
        assert e.value <= u.representation_bound() + 1e-9
        assert e.value <= eh_norm(fm, u, restrict=False).value + 1e-9

    @given(seeds)
    def test_psi_is_the_multiplier(self, seed):
        rng = np.random.default_rng(seed)
        fm = random_fm_relation(rng, n_atoms=6)
        u = EhTensor.random(rng, fm.n, 2)
        a = rng.normal(size=fm.n_pairs) + 0j
        T = build_operator(fm, a)
        lhs = psi_action(fm, u, T).dense()
        rhs = build_operator(fm, multiplier_from_tensor(fm, u) * a).dense()
        assert np.allclose(lhs, rhs, atol=1e-10)

    def test_elementary_tensor(self, rng):
        fm = random_fm_relation(rng, n_atoms=5)
        a, b = rand_c(rng, 5), rand_c(rng, 5)
        u = EhTensor.elementary(a, b)
        phi = multiplier_from_tensor(fm, u)
        assert np.allclose(phi, column_symbol(fm, a) * b[fm.rel.pair_y])

    def test_tensor_from_pattern_is_optimal(self, rng):
        fm = random_fm_relation(rng, n_atoms=7, max_block=5)
        phi = rng.normal(size=fm.n_pairs) + 1j * rng.normal(size=fm.n_pairs)
        u = tensor_from_pattern(fm, phi)
        assert np.allclose(multiplier_from_tensor(fm, u), phi, atol=1e-9)
        assert eh_norm(fm, u).value == pytest.approx(multiplier_norm(fm, phi).value, rel=1e-7)
        assert eh_norm_lower_bound(fm, phi) == pytest.approx(multiplier_norm(fm, phi).value)

    def test_zero_tensor(self, rng):
        fm = random_fm_relation(rng, n_atoms=3)
        u = tensor_from_pattern(fm, np.zeros(fm.n_pairs))
        assert eh_norm(fm, u).value == 0
        assert sup_norm(multiplier_from_tensor(fm, u)) == 0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            EhTensor(np.ones((2, 3)), np.ones((1, 3)))


class TestWorkedExamples:
    def test_indicator_tensor(self, rng):
        fm = random_fm_relation(rng, n_atoms=6, max_block=4)
        d = (rng.random(6) < 0.5).astype(float)
        r = (rng.random(6) < 0.5).astype(float)
        phi = multiplier_from_tensor(fm, EhTensor.elementary(d, r))
        expected = [float(d[x] and r[y]) for x, y in fm.rel.pairs]
        assert np.array_equal(phi.real, expected)

    def test_psi_on_operators_outside_the_algebra(self, rng):
        fm = random_fm_relation(rng, n_atoms=4, max_block=4)
        u = EhTensor.random(rng, fm.n, 3)
        M = rng.normal(size=(fm.n_pairs, fm.n_pairs))
        out = psi_action(fm, u, M)
        px = fm.rel.pair_x
        expected = sum(np.diag(a[px]) @ M @ np.diag(b[px]) for a, b in zip(u.left, u.right))
        assert np.allclose(out, expected)

    def test_sign_pattern_bound_is_tight(self):
        from cartankit.relation import FiniteSpace, FMRelation, Relation

        fm = FMRelation(FiniteSpace.uniform(2), Relation.full(2))
        phi = np.array([1, 1, 1, -1])
        u = tensor_from_pattern(fm, phi)
        assert eh_norm(fm, u).value == pytest.approx(np.sqrt(2), abs=1e-9)
        assert eh_norm_lower_bound(fm, phi) == pytest.approx(np.sqrt(2), abs=1e-9)
