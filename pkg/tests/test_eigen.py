import math

import numpy as np
import pytest
from oracles.radial_pucci import radial_eigenvalue

from pucci_logistic.errors import EigenError
from pucci_logistic.eigen import eigen_monotonicity_check, eigen_on_domain, principal_eigen
from pucci_logistic.geometry import Disk, Grid2D, Rect, build_mask
from pucci_logistic.operators import OperatorSpec, discretize
from pucci_logistic.solver import DirichletProblem, Status, solve_dirichlet

SQ = Rect.from_corners(0, 0, 1, 1)


def test_laplacian_square_anchor():
    r = eigen_on_domain(OperatorSpec(), Grid2D.unit_square(97), SQ)
    assert abs(r.lambda_est / (2 * math.pi**2) - 1) < 0.02
    assert r.lambda_lo <= r.lambda_est <= r.lambda_hi
    assert r.width / r.lambda_est < 1e-4
    assert r.phi.min() > 0 and r.phi.max() == 1.0
    assert r.residual <= 10 * 1e-4 * r.lambda_est


def test_radial_oracle():
    ref = radial_eigenvalue(0.5, 1.0, 2.0)
    assert ref == pytest.approx(22.9325, abs=1e-3)
    r = eigen_on_domain(OperatorSpec("pucci_plus", 1, 2), Grid2D.unit_square(65), Disk(0.5, 0.5, 0.5))
    assert abs(r.lambda_est / ref - 1) < 0.03


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_dilation(t):
    spec = OperatorSpec("pucci_minus", 1, 2)
    g, dom = Grid2D.unit_square(33), Disk(0.5, 0.5, 0.4)
    a = eigen_on_domain(spec, g, dom)
    b = eigen_on_domain(spec, g.scaled(t), dom.scaled(t))
    assert abs(a.lambda_est / t**2 - b.lambda_est) <= a.width / t**2 + b.width


def test_lambda_equals_Lambda_reduction():
    g = Grid2D.unit_square(33)
    a = eigen_on_domain(OperatorSpec("pucci_plus", 1, 1), g, SQ)
    b = eigen_on_domain(OperatorSpec(), g, SQ)
    assert abs(a.lambda_est / b.lambda_est - 1) < 1e-6


def test_bracket_history():
    r = eigen_on_domain(OperatorSpec("pucci_plus", 1, 2), Grid2D.unit_square(33), Disk(0.5, 0.5, 0.45))
    for lo, hi in r.history:
        assert lo <= hi
    tail = r.history[5:]
    for (lo0, hi0), (lo1, hi1) in zip(tail, tail[1:]):
        assert lo1 >= lo0 - 1e-9 * hi0 and hi1 <= hi0 + 1e-9 * hi0


def test_maximum_principle_threshold():
    g = Grid2D.unit_square(17)
    m = build_mask(g, SQ)
    op = discretize(OperatorSpec(), g, m)
    lam = principal_eigen(op).lambda_est
    u0 = np.random.default_rng(0).uniform(0.5, 1.0, m.n)
    below = solve_dirichlet(DirichletProblem(op, 0.9 * lam, 0.0), u0=u0, method="fixed_point", tol_res=1e-7)
    assert below.converged and np.abs(below.u).max() <= 1e-6
    above = solve_dirichlet(DirichletProblem(op, 1.1 * lam, 0.0), u0=u0, method="fixed_point",
                            tol_res=1e-7, max_iter=50_000)
    assert above.status is not Status.CONVERGED or np.abs(above.u).max() > 1e-6


def test_monotonicity_examples(k2_33):
    g = Grid2D.unit_square(33)
    spec = OperatorSpec("pucci_plus", 1, 2)
    half = Rect.from_corners(0.25, 0.25, 0.75, 0.75)
    chk = eigen_monotonicity_check(spec, g, half, SQ)
    assert chk and chk.gap > 0
    same = eigen_monotonicity_check(spec, g, SQ, SQ)
    assert same and abs(same.gap) <= same.small.width + same.big.width
    with pytest.raises(EigenError) as e:
        eigen_monotonicity_check(spec, g, SQ, half)
    assert e.value.code == "NOT_NESTED"
    gap = k2_33.eigen_oasis.lambda_lo - k2_33.eigen_omega.lambda_hi
    assert gap > 0


def test_disconnected_mask_rejected():
    from pucci_logistic.geometry import Difference
    g = Grid2D.unit_square(33)
    # a vertical slab removed from the square leaves two pieces
    dom = Difference(SQ, Rect.from_corners(0.45, -1, 0.55, 2))
    with pytest.raises(EigenError) as e:
        eigen_on_domain(OperatorSpec(), g, dom)
    assert e.value.code in ("NEGATIVE_ITERATE", "NOT_CONVERGED")
