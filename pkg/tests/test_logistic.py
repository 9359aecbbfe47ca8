import numpy as np
import pytest
from conftest import OASIS, UNIT_SQUARE, square_k1
from oracles.newton_oracle import laplacian_5pt, newton

from pucci_logistic.errors import LogisticError
from pucci_logistic.geometry import Disk, Grid2D
from pucci_logistic.logistic import (
    KKind,
    LogisticModel,
    MuClass,
    ReactionSpec,
    build_barriers,
    build_subsolution,
    build_supersolution_K1,
    build_supersolution_K2,
    classify_mu,
    monotone_iteration,
    monotone_solve,
    ordering_log,
    solve_annulus,
    solve_logistic,
)
from pucci_logistic.operators import OperatorSpec
from pucci_logistic.solver import check_discrete_comparison


def mid(model):
    return 0.5 * (model.eigen_omega.lambda_hi + model.eigen_oasis.lambda_lo)


def test_reaction_validation():
    for bad in (dict(p=1.0), dict(k1=0.0), dict(k0=2.0, k1=1.0), dict(k0=0.0), dict(k_kind="K2")):
        with pytest.raises(LogisticError) as e:
            ReactionSpec(mu=1.0, **bad)
        assert e.value.code == "BAD_REACTION"


def test_k2_coefficient(k2_33):
    m = k2_33
    assert np.all(m.k[m.oasis_nodes] == 0)
    assert np.all(m.k[~m.oasis_nodes] > 0)
    away = m.oasis_sd > 4 * m.h
    assert m.k[away].min() == pytest.approx(1.0)


def test_unresolved_oasis():
    with pytest.raises(LogisticError) as e:
        LogisticModel(Grid2D.unit_square(33), UNIT_SQUARE, OperatorSpec(),
                      ReactionSpec(mu=1.0, k_kind="K2", oasis=Disk(0.5, 0.5, 0.45)))
    assert e.value.code == "UNRESOLVED_OASIS"


def test_subsolution_examples(k1_65):
    lam_hi = k1_65.eigen_omega.lambda_hi
    w, alpha, worst = build_subsolution(k1_65, 25.0)
    assert alpha == pytest.approx(25.0 - lam_hi)
    assert alpha == pytest.approx(5.26, abs=0.01)
    assert worst >= -k1_65.tol_barrier(alpha)
    with pytest.raises(LogisticError) as e:
        build_subsolution(k1_65, lam_hi)
    assert e.value.code == "NO_SUBSOLUTION"
    doubled = square_k1(65, k1=2.0, k0=1.0)
    _, a2, _ = build_subsolution(doubled, 25.0, eig=k1_65.eigen_omega)
    assert a2 == pytest.approx(alpha / 2)


def test_supersolution_K1_examples():
    g = Grid2D.unit_square(17)
    m = LogisticModel(g, UNIT_SQUARE, OperatorSpec(), ReactionSpec(mu=2, k0=1, k1=1))
    assert build_supersolution_K1(m, 2.0)[1] == 2.0
    m3 = LogisticModel(g, UNIT_SQUARE, OperatorSpec(), ReactionSpec(mu=8, p=3, k0=2, k1=2))
    assert build_supersolution_K1(m3, 8.0)[1] == pytest.approx(2.0)
    mp = LogisticModel(g, UNIT_SQUARE, OperatorSpec("pucci_minus", 1, 3), ReactionSpec(mu=2))
    w, C = build_supersolution_K1(mp, 2.0)
    assert C == 2.0 and np.max(mp.residual(w, 2.0)) <= 0


def test_lemma_barrier_mid_window(k2_65):
    m = k2_65
    bs = build_supersolution_K2(m, mid(m), method="lemma")
    assert bs.method == "lemma"
    assert bs.super_residual <= m.tol_barrier(bs.C)
    assert np.max(m.residual(bs.w_plus, mid(m))) <= 0
    assert bs.w_plus.min() >= bs.C * (1 - 1e-12)
    outside = bs.omega1.sd(m.mask.xy[:, 0], m.mask.xy[:, 1]) > 1e-9
    assert np.all(bs.w_plus[outside] == bs.C)
    # phi~ stays >= C on Omega1, so the collar minimum never drops below C
    assert bs.alpha_cubic > 0 and bs.delta > 0


def test_k2_above_oasis_eigenvalue(k2_33):
    with pytest.raises(LogisticError) as e:
        build_supersolution_K2(k2_33, k2_33.eigen_oasis.lambda_est + 1.0)
    assert e.value.code == "NO_SUPERSOLUTION"


def test_k2_oasis_barrier_everywhere_in_window(k2_33):
    m = k2_33
    for mu in (25.0, mid(m), 80.0):
        bs = build_supersolution_K2(m, mu, method="oasis")
        assert np.max(m.residual(bs.w_plus, mu)) <= 1e-9 * bs.C**2


def test_k1_matches_newton_oracle(k1_33):
    m = k1_33
    mu = 2 * m.eigen_omega.lambda_est
    rep = solve_logistic(m, mu)
    assert rep.converged
    assert np.all(rep.u > 0) and rep.u.max() <= mu
    L, X, Y, _ = laplacian_5pt(33)
    order = np.lexsort((m.mask.ij[:, 1], m.mask.ij[:, 0]))
    ref, res = newton(L, mu, np.ones(L.shape[0]), 2.0, np.full(L.shape[0], mu))
    assert res < 1e-8
    assert np.abs(rep.u[order] - ref).max() < 1e-8


def test_history_nonincreasing(k1_33):
    rep = solve_logistic(k1_33, 60.0)
    h = rep.residual_history
    assert rep.converged and all(b <= a for a, b in zip(h, h[1:]))


def test_constant_shift_agrees(k1_33):
    a = solve_logistic(k1_33, 50.0)
    b = solve_logistic(k1_33, 50.0, shift="constant")
    assert b.converged and b.iterations > a.iterations
    assert np.abs(a.u - b.u).max() < 1e-7 * a.u.max()


def test_degenerates_below_threshold(k1_33):
    m = k1_33
    mu = 0.5 * m.eigen_omega.lambda_est
    w, _ = build_supersolution_K1(m, mu)
    rep = monotone_iteration(m.op, m.k, mu, m.p, w, tol_fix=1e-12, max_iter=5000)
    assert rep.converged and rep.u.max() < 1e-6


def test_uniqueness_probe(k2_33):
    m = k2_33
    mu = mid(m)
    bs = build_barriers(m, mu)
    a = monotone_solve(m, mu, bs)
    twice = type(bs)(bs.w_minus, 2 * bs.w_plus, bs.alpha, 2 * bs.C)
    b = monotone_solve(m, mu, twice)
    tol_fix = 1e-10 * (1 + 2 * bs.w_plus.max())
    assert a.converged and b.converged
    assert np.abs(a.u - b.u).max() <= 10 * tol_fix


def test_positivity_and_residual(k2_33):
    m = k2_33
    h = m.h
    for mu in (25.0, mid(m), 85.0):
        rep = solve_logistic(m, mu)
        bs = rep.info["barriers"]
        assert rep.converged
        assert np.all(rep.u >= (1 - 10 * h) * bs.w_minus)
        assert rep.info["residual_nl"] <= m.tol_res_nl(rep.u.max())


def test_mu_monotone(k2_33):
    prev = None
    for mu in (22.0, 30.0, 45.0, 60.0, 75.0):
        u = solve_logistic(k2_33, mu).u
        if prev is not None:
            assert check_discrete_comparison(prev, u, tol_cmp=1e-8)
        prev = u


def test_annulus_zero_data(k2_33):
    sol = solve_annulus(k2_33, 10.0, phi_inner=0.0)
    assert np.abs(sol.u).max() < 1e-8


def test_annulus_unit_data_bounded_by_extension():
    m = square_k1(33)
    sol = solve_annulus(m, 0.0, phi_inner=1.0, inner=OASIS)
    assert np.all(sol.u > 0)
    assert np.all(sol.u <= sol.psi + 1e-9)
    assert np.isfinite(sol.C_boundary_fit)


def test_annulus_delta_monotone(k2_33):
    sol = solve_annulus(k2_33, 50.0, phi_inner=5.0, delta_seq=(1e-1, 1e-2, 0.0))
    u1, u2, u0 = (sol.u_by_delta[d] for d in (1e-1, 1e-2, 0.0))
    assert np.all(u1 <= u2 + 1e-8) and np.all(u2 <= u0 + 1e-8)


def test_annulus_rejects_negative_data(k2_33):
    with pytest.raises(LogisticError) as e:
        solve_annulus(k2_33, 50.0, phi_inner=-1.0)
    assert e.value.code == "BAD_DATA"


def test_classify_examples(k1_33, k2_33):
    low = classify_mu(k1_33, 0.5 * k1_33.eigen_omega.lambda_lo)
    assert low.label is MuClass.NO_SOLUTION_LOW and low.agrees
    ex = classify_mu(k2_33, mid(k2_33))
    assert ex.label is MuClass.EXISTS and ex.agrees and ex.pipeline == "CONVERGED"
    high = classify_mu(k2_33, 1.1 * k2_33.eigen_oasis.lambda_hi)
    assert high.label is MuClass.NO_SOLUTION_HIGH and high.agrees
    assert high.pipeline == "NO_SUPERSOLUTION+DIVERGED"
    edge = classify_mu(k1_33, k1_33.eigen_omega.lambda_est)
    assert edge.label is MuClass.UNRESOLVED


def test_ordering_log_clean():
    assert ordering_log, "no monotone iteration ran in this session"
    assert all(e["rise"] <= e["tol"] and e["dip"] <= e["tol"] for e in ordering_log)


def test_k_kind_enum():
    assert ReactionSpec(mu=1.0, k_kind="K2", oasis=OASIS).k_kind is KKind.K2
