"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line."""

import itertools

import numpy as np
import pytest

from cartankit.dyadic import tower_suite
from cartankit.eh import EhTensor, eh_norm, gamma2, multiplier_from_tensor
from cartankit.groupoid import (
    RelIsoData,
    conjugate,
    pull_back,
    random_gfun,
    reg_representation,
    theta_unitary,
    transfer_unitary,
)
from cartankit.dyadic import DyadicLevel
from cartankit.relation import band_limit, random_fm_relation, validate_cocycle
from cartankit.schur import (
    BimoduleMapProbe,
    apply_multiplier,
    cb_norm_estimate,
    is_bimodule_map,
    multiplier_norm,
    recover_symbol,
)
from cartankit.symbols import (
    ConvOperator,
    PartialIso,
    build_operator,
    column_symbol,
    involution,
    masa_embed,
    operator_norm,
    partial_iso_operator,
    projection,
    row_symbol,
    star_product,
    sup_norm,
    symbol_of,
)
from cartankit.toeplitz import coset_ring_decide, norm_growth_scan, toeplitz_multiplier

RESULTS: list[str] = []


def report(k, title, ok, detail):
    line = f"criterion {k} [{title}]: {'PASS' if ok else 'FAIL'} ({detail})"
    RESULTS.append(line)
    print(line)
    assert ok, line


def rc(rng, n):
    return rng.normal(size=n) + 1j * rng.normal(size=n)


def dense_gap(A, B):
    A = A.dense() if isinstance(A, ConvOperator) else A
    B = B.dense() if isinstance(B, ConvOperator) else B
    return float(np.abs(A - B).max(initial=0.0))


def test_criterion_1_axiom_suite():
    rng = np.random.default_rng(1)
    generated_ok = 0
    rejected = total = 0
    for _ in range(100):
        fm = random_fm_relation(rng, n_atoms=int(rng.integers(1, 9)), max_block=4, twisted=True)
        rep = validate_cocycle(fm.rel, fm.sigma, tol=1e-12)
        generated_ok += rep.ok and not rep.skew_violations
        for b in fm.rel.blocks:
            for t in itertools.product(b, repeat=3):
                total += 1
                bad = fm.sigma.perturbed(t, np.exp(1j * rng.uniform(0.5, 2 * np.pi - 0.5)))
                rejected += not validate_cocycle(fm.rel, bad, tol=1e-12).ok
    ok = generated_ok == 100 and rejected == total
    report(1, "axiom suite", ok, f"{generated_ok}/100 generated cocycles accepted, {rejected}/{total} perturbations rejected")


def test_criterion_2_symbol_calculus():
    rng = np.random.default_rng(2)
    alg = nrm = 0.0
    for _ in range(500):
        fm = random_fm_relation(rng, max_block=5, twisted=True)
        a = rc(rng, fm.n_pairs) * (rng.random(fm.n_pairs) < 0.6)
        b = rc(rng, fm.n_pairs)
        La, Lb = build_operator(fm, a), build_operator(fm, b)
        scale = 1 + np.abs(a).max() * (1 + np.abs(b).max()) * fm.n
        alg = max(alg, np.abs(symbol_of(La) - a).max() / scale)
        alg = max(alg, dense_gap(La.H, build_operator(fm, involution(fm, a))) / scale)
        alg = max(alg, dense_gap(La @ Lb, build_operator(fm, star_product(fm, a, b))) / scale)
        be, ga = rc(rng, fm.n), rc(rng, fm.n)
        lhs = masa_embed(fm, be) @ La @ masa_embed(fm, ga)
        rhs = build_operator(fm, column_symbol(fm, be) * a * row_symbol(fm, ga))
        alg = max(alg, dense_gap(lhs, rhs) / (scale * (1 + np.abs(be).max() * np.abs(ga).max())))
        supp = [p for p, v in zip(fm.rel.pairs, a) if v != 0]
        nrm = max(nrm, operator_norm(La) - band_limit(fm.rel, supp) * sup_norm(a))
    ok = alg <= 1e-12 and nrm <= 1e-10
    report(2, "symbol calculus", ok, f"worst scaled algebraic defect {alg:.1e}, worst norm-bound excess {nrm:.1e}")


def random_injection(rng, rel):
    mapping, used = {}, set()
    for block in rel.blocks:
        for x in block:
            if rng.random() < 0.75:
                free = [y for y in block if y not in used]
                if free:
                    y = int(rng.choice(free))
                    mapping[x] = y
                    used.add(y)
    return PartialIso(mapping)


def test_criterion_3_partial_isometries():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(200):
        fm = random_fm_relation(rng, max_block=5, twisted=True)
        f = random_injection(rng, fm.rel)
        V = partial_iso_operator(fm, f)
        delta = {x for x in range(fm.n) if rng.random() < 0.5}
        rho = {x for x in range(fm.n) if rng.random() < 0.5}
        Pd, Pr = projection(fm, delta), projection(fm, rho)
        worst = max(
            worst,
            dense_gap(V.H, partial_iso_operator(fm, f.inverse())),
            dense_gap(Pd @ V @ Pr, partial_iso_operator(fm, f.restrict(delta).corestrict(rho))),
            dense_gap(Pd @ Pd, Pd),
            dense_gap(Pd.H, Pd),
            dense_gap(V @ Pr, projection(fm, f.preimage(rho)) @ V),
            dense_gap(V.H @ V, projection(fm, f.range)),
            dense_gap(V @ V.H, projection(fm, f.domain)),
        )
        # a projection in the algebra is the symbol of a set of atoms: P = L(a) with a = d(chi_delta)
        worst = max(worst, np.abs(symbol_of(Pd) - symbol_of(masa_embed(fm, [x in delta for x in range(fm.n)]))).max())
    report(3, "partial isometries", worst <= 1e-12, f"worst defect over five clauses {worst:.1e}")


def test_criterion_4_bimodule_maps():
    rng = np.random.default_rng(4)
    rec = 0.0
    for _ in range(100):
        fm = random_fm_relation(rng, max_block=6, twisted=True)
        phi = rc(rng, fm.n_pairs)
        probe = BimoduleMapProbe.from_function(fm, lambda T: apply_multiplier(fm, phi, T))
        got = [recover_symbol(probe, s, seed=7) for s in ("shift", "reflection", "random")]
        rec = max([rec] + [float(np.abs(g - phi).max()) for g in got])
    detected = 0
    for _ in range(20):
        fm = random_fm_relation(rng, n_atoms=int(rng.integers(2, 9)), max_block=4, twisted=True)
        while fm.n_pairs == fm.n:
            fm = random_fm_relation(rng, n_atoms=6, max_block=4, twisted=True)
        C = np.diag(rc(rng, fm.n_pairs))
        p, q = rng.choice(fm.n_pairs, 2, replace=False)
        # mixing the coefficient of two pairs with different end points breaks bimodularity
        while fm.rel.pair_x[p] == fm.rel.pair_x[q] and fm.rel.pair_y[p] == fm.rel.pair_y[q]:
            p, q = rng.choice(fm.n_pairs, 2, replace=False)
        C[p, q] = 1 + rng.random()
        cert = is_bimodule_map(BimoduleMapProbe(fm, C))
        ends = fm.rel.pair_x if cert.side == "left" else fm.rel.pair_y
        col = fm.rel.pair_index[cert.basis_pair] if cert.basis_pair else -1
        mask = (ends == cert.atom).astype(float)
        replay = np.abs(C[:, col] * mask[col] - mask * C[:, col]).max() if col >= 0 else 0.0
        detected += (not cert.ok) and replay > 1e-12 and abs(replay - cert.defect) <= 1e-12
    ok = rec <= 1e-12 and detected == 20
    report(4, "bimodule maps", ok, f"worst recovery error {rec:.1e} over 3 strategies, {detected}/20 non-bimodule maps certified")


def test_criterion_5_cb_equals_norm():
    rng = np.random.default_rng(5)
    spread = 0.0
    for _ in range(50):
        fm = random_fm_relation(rng, n_atoms=int(rng.integers(2, 9)), max_block=8, twisted=True)
        vals = cb_norm_estimate(fm, rc(rng, fm.n_pairs), 4)
        spread = max(spread, max(vals) - min(vals))
    report(5, "cb norm equals norm", spread <= 1e-4, f"worst spread of the k = 1..4 list {spread:.1e}")


def test_criterion_6_eh_gamma2():
    ones, eye, sign = gamma2(np.ones((4, 4))), gamma2(np.eye(4)), gamma2([[1, 1], [1, -1]])
    fixed = abs(ones.value - 1) <= 1e-6 and abs(eye.value - 1) <= 1e-6
    fixed &= abs(sign.value - np.sqrt(2)) <= 1e-6 and sign.gap <= 1e-6
    rng = np.random.default_rng(6)
    excess_m = excess_s = -np.inf
    for _ in range(100):
        fm = random_fm_relation(rng, n_atoms=int(rng.integers(1, 11)), max_block=6, twisted=True)
        u = EhTensor.random(rng, fm.n, int(rng.integers(1, 5)))
        e = eh_norm(fm, u).value
        phi = multiplier_from_tensor(fm, u)
        excess_m = max(excess_m, multiplier_norm(fm, phi).value - e)
        excess_s = max(excess_s, sup_norm(phi) - e)
    ok = fixed and excess_m <= 1e-5 and excess_s <= 1e-9
    report(
        6, "eh and gamma2", ok,
        f"ones {ones.value:.9f}, identity {eye.value:.9f}, sign {sign.value:.9f} gap {sign.gap:.1e}; "
        f"max ||M(phi_u)|| - ||u||_eh {excess_m:.1e}, max ||phi_u||_inf - ||u||_eh {excess_s:.1e}",
    )


def test_criterion_7_dyadic_tower():
    rep = tower_suite(5, seed=7, samples=20, schur_pairs=200, l2_samples=100)
    failed = [c.name for c in rep.checks if not c.passed]
    slack = rep["schur-product-inequality"].worst
    report(7, "dyadic tower N=5", rep.passed and slack >= -1e-10, f"{len(rep.checks)} checks, failed {failed}, Schur slack {slack:.2e}")


GOLDEN = [
    ("{0}", "finite"), ("{1/2, 1/4}", "finite"), ("G(3)", "finite"), ("1/4 + G(1)", "finite"),
    ("G(2) | {1/8}", "finite"), ("Odd & G(5)", "finite"), ("Odd & !Odd", "finite"), ("Odd \\ Odd", "finite"),
    ("G", "cofinite"), ("!{0}", "cofinite"), ("G \\ G(2)", "cofinite"), ("!(G(2) | {1/8})", "cofinite"),
    ("Odd | !Odd", "cofinite"), ("Lvl(2, 0) | Odd", "cofinite"), ("Lvl(3,0) | Lvl(3,1) | Lvl(3,2)", "cofinite"),
    ("Odd", "neither"), ("!Odd", "neither"), ("Odd | G(4)", "neither"), ("Lvl(3, 0)", "neither"),
    ("Lvl(4,1) & Lvl(2,1)", "neither"),
]


def test_criterion_8_toeplitz_coset():
    correct = sum(coset_ring_decide(e).kind == k for e, k in GOLDEN)
    idem = all(
        np.array_equal(P * P, P) for e, _ in GOLDEN for P in (toeplitz_multiplier(e, N).matrix() for N in range(1, 7))
    )
    monotone = True
    for e, _ in GOLDEN:
        vals = [r.gamma2 for r in norm_growth_scan(e, range(1, 7))]
        monotone &= all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))
    ones = all(abs(r.gamma2 - 1) <= 1e-9 for e in ("{0}", "G") for r in norm_growth_scan(e, range(1, 7)))
    odd = {r.N: r.gamma2 for r in norm_growth_scan("Odd", range(1, 7))}
    growth = odd[6] > odd[2] + 0.1
    ok = correct == 20 and idem and monotone and ones and growth
    report(
        8, "Toeplitz and coset ring", ok,
        f"golden {correct}/20, idempotent {idem}, monotone {monotone}, trivial sets at 1 {ones}, "
        f"odd set {odd[2]:.6f} at N=2 and {odd[6]:.6f} at N=6",
    )


def test_criterion_9_groupoid_bridge():
    rng = np.random.default_rng(9)
    uni = tr = act = mult = 0.0
    for N in range(5):
        U = theta_unitary(N).toarray()
        uni = max(uni, np.abs(U.conj().T @ U - np.eye(U.shape[1])).max(), np.abs(U @ U.conj().T - np.eye(U.shape[0])).max())
        fm = DyadicLevel(N).fm
        for _ in range(100 // 5):
            f = random_gfun(rng, N)
            lhs = U.conj().T @ reg_representation(f).toarray() @ U
            tr = max(tr, np.abs(lhs - build_operator(fm, pull_back(f)).dense()).max())
        n = 1 << N
        for _ in range(4):
            w2 = rng.uniform(0.2, 1, n)
            iso = RelIsoData.push_forward(fm, rng.permutation(n), w2 / w2.sum())
            Ut = transfer_unitary(iso).toarray()
            uni = max(uni, np.abs(Ut.conj().T @ Ut - np.eye(Ut.shape[1])).max())
            a, phi = rc(rng, fm.n_pairs), rc(rng, fm.n_pairs)
            act = max(act, conjugate(iso, build_operator(fm, a)).distance(build_operator(iso.fm2, iso.transport(a))))
            mult = max(mult, abs(multiplier_norm(fm, phi).value - multiplier_norm(iso.fm2, iso.transport(phi)).value))
    ok = uni <= 1e-12 and tr <= 1e-12 and act <= 1e-10 and mult <= 1e-10
    report(
        9, "groupoid bridge N<=4", ok,
        f"unitary defect {uni:.1e}, U*Reg(f)U vs L(f o theta) {tr:.1e}, transfer action {act:.1e}, norm change {mult:.1e}",
    )
