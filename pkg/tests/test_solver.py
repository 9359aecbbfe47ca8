import numpy as np
import pytest
from oracles.torsion_series import torsion

from pucci_logistic.errors import SolverError
from pucci_logistic.geometry import Difference, Disk, Grid2D, Rect, build_mask
from pucci_logistic.operators import OperatorSpec, discretize
from pucci_logistic.solver import (
    DirichletProblem,
    Status,
    check_discrete_comparison,
    solve_dirichlet,
    solve_linear_extension,
)

SQ = Rect.from_corners(0, 0, 1, 1)
PP = OperatorSpec("pucci_plus", 1, 2)


def setup(n, dom=SQ, spec=None, boundary=0.0):
    g = Grid2D.unit_square(n)
    m = build_mask(g, dom)
    return g, m, discretize(spec or OperatorSpec(), g, m, boundary)


def test_torsion_center():
    g, m, op = setup(65)
    rep = solve_dirichlet(DirichletProblem(op, 0.0, -1.0))
    assert rep.converged and rep.residual <= 1e-9
    centre = rep.u[m.index[32, 32]]
    ref = torsion(0.5, 0.5)
    assert ref == pytest.approx(0.07367, abs=5e-6)
    assert abs(centre / ref - 1) < 0.02
    # a rhs of -2 doubles the field (linearity)
    rep2 = solve_dirichlet(DirichletProblem(op, 0.0, -2.0))
    assert np.allclose(rep2.u, 2 * rep.u, rtol=1e-8)


@pytest.mark.parametrize("spec", [OperatorSpec(), PP, OperatorSpec("pucci_minus", 1, 2)], ids=str)
def test_zero_data_zero_solution(spec):
    _, _, op = setup(33, spec=spec)
    for c in (0.0, -3.0):
        rep = solve_dirichlet(DirichletProblem(op, c, 0.0))
        assert rep.converged and np.abs(rep.u).max() == 0.0


def test_disk_radial_symmetry():
    g, m, op = setup(65, Disk(0.5, 0.5, 0.5), PP)
    u = solve_dirichlet(DirichletProblem(op, 0.0, -1.0)).u
    r = np.hypot(m.xy[:, 0] - 0.5, m.xy[:, 1] - 0.5)
    ring = np.rint(r / g.h).astype(int)
    spread = max(np.ptp(u[ring == k]) for k in np.unique(ring))
    assert spread <= 3 * g.h


def test_policy_and_fixed_point_agree():
    _, m, op = setup(17, Disk(0.5, 0.5, 0.45), PP)
    p = DirichletProblem(op, -1.0, -1.0 + np.sin(3 * m.xy[:, 0]))
    a = solve_dirichlet(p, method="policy")
    b = solve_dirichlet(p, method="fixed_point")
    assert a.converged and b.converged
    # residuals are relative to p.scale(), here O(1)
    assert np.abs(a.u - b.u).max() <= 10 * 1e-9 * p.scale()


def test_fixed_point_residual_trend():
    _, _, op = setup(17, spec=PP)
    rep = solve_dirichlet(DirichletProblem(op, 0.0, -1.0), method="fixed_point")
    h = np.asarray(rep.residual_history[10:])
    ups = np.sum(h[1:] > h[:-1] * (1 + 1e-12))
    assert ups <= 0.01 * len(h)


def test_not_proper_rejected():
    _, _, op = setup(17)
    with pytest.raises(SolverError) as e:
        solve_dirichlet(DirichletProblem(op, 1.0, 0.0), method="policy")
    assert e.value.code == "NOT_PROPER"


def test_diverged_above_eigenvalue():
    _, m, op = setup(17)
    u0 = np.ones(m.n)
    rep = solve_dirichlet(DirichletProblem(op, 30.0, 0.0), u0=u0, method="fixed_point")
    assert rep.status is Status.DIVERGED


def test_bad_problem():
    _, m, op = setup(17)
    with pytest.raises(SolverError):
        DirichletProblem(op, 0.0, np.full(m.n, np.nan))


def test_maximum_principle_and_data_comparison():
    _, m, op = setup(17, Disk(0.5, 0.5, 0.45), OperatorSpec("pucci_minus", 1, 3), boundary=0.4)
    rng = np.random.default_rng(11)
    for _ in range(50):
        g1 = rng.normal(size=m.n)
        g2 = g1 + rng.uniform(0, 1, size=m.n)
        c = -rng.uniform(0, 5)
        u1 = solve_dirichlet(DirichletProblem(op, c, g1)).u
        u2 = solve_dirichlet(DirichletProblem(op, c, g2)).u
        assert check_discrete_comparison(u2, u1)
    pos = solve_dirichlet(DirichletProblem(op, -1.0, np.abs(rng.normal(size=m.n)))).u
    neg = solve_dirichlet(DirichletProblem(op, -1.0, -np.abs(rng.normal(size=m.n)))).u
    assert pos.max() <= 0.4 + 1e-9
    assert neg.min() >= -1e-9


def test_linear_extension_constant():
    dom = Difference(SQ, Disk(0.5, 0.5, 0.25))
    _, m, op = setup(33, dom, PP)
    psi = solve_linear_extension(op, 1.0)
    assert np.abs(psi - 1).max() < 1e-9
    psi = solve_linear_extension(op, {1: 3.0})
    assert psi.min() >= -1e-9 and psi.max() <= 3 + 1e-9


def test_linear_extension_annulus_converges():
    dom = Difference(SQ, Disk(0.5, 0.5, 0.25))
    vals = []
    for n in (129, 257):
        g, m, op = setup(n, dom)
        psi = solve_linear_extension(op, {1: 1.0})
        i = (n - 1) * 7 // 8  # x = 0.875, radius 0.375
        vals.append(psi[m.index[i, (n - 1) // 2]])
    assert abs(vals[0] / vals[1] - 1) < 0.05
    # the inscribed circular annulus gives a lower bound by comparison
    assert np.log(0.5 / 0.375) / np.log(2.0) < vals[1] < 1


def test_comparison_helper():
    u = np.linspace(0, 1, 10)
    assert check_discrete_comparison(u, u)
    assert check_discrete_comparison(u, u + np.abs(np.sin(u)))
    bad = check_discrete_comparison(u + 1, u)
    assert not bad and bad.violations.size == 10
    with pytest.raises(SolverError) as e:
        check_discrete_comparison(u, u[:5])
    assert e.value.code == "MASK_MISMATCH"
    g = Grid2D.unit_square(17)
    a, b = build_mask(g, SQ), build_mask(g, Disk(0.5, 0.5, 0.4))
    with pytest.raises(SolverError):
        check_discrete_comparison(np.zeros(a.n), np.zeros(a.n), a, b)
