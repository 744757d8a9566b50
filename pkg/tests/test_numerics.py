import math

import numpy as np
import pytest
from scipy import special

from vortexlab.errors import ConfigError
from vortexlab.numerics import AngularRule, RadialGrid, biharmonic_first_eigenvalue, \
    first_eigenpair_radial, lambda_of_degree, sphere_area


@pytest.mark.parametrize("N,k,lam", [(4, 1, 3), (4, 2, 8), (2, 0, 0), (5, 3, 18)])
def test_lambda_of_degree(N, k, lam):
    assert lambda_of_degree(N, k) == lam


def test_sphere_area():
    assert math.isclose(sphere_area(2), 2 * math.pi)
    assert math.isclose(sphere_area(3), 4 * math.pi)
    assert math.isclose(sphere_area(4), 2 * math.pi ** 2)


def test_bad_dimension():
    with pytest.raises(ConfigError):
        RadialGrid(1, 100)


@pytest.mark.parametrize("alpha", [0, 1, 2, 4])
def test_weighted_quadrature_exact_on_cubics(alpha):
    g = RadialGrid(5, 99, "uniform")
    x = g.x
    for deg in range(4):
        exact = 1.0 / (deg + alpha + 1)
        assert abs(g.integrate(x ** deg, alpha) - exact) <= 1e-10


def test_lumped_mass_sums_to_ball_measure():
    for N in (2, 3, 5):
        g = RadialGrid(N, 300)
        assert abs(g.mass.sum() - 1.0 / N) <= 1e-12


@pytest.mark.parametrize("N", [2, 3, 4, 6])
@pytest.mark.parametrize("K", [12])
def test_angular_orthonormality(N, K):
    rule = AngularRule(N, order=2 * K + 4, kmax=K)
    G = (rule.phi * rule.qw) @ rule.phi.T
    assert np.max(np.abs(G - np.eye(K + 1))) <= 1e-12
    # tangential parts integrate to lambda_k
    T = (rule.tangential * rule.qw) @ rule.tangential.T
    assert np.max(np.abs(T - np.diag(rule.lam))) <= 1e-10 * max(rule.lam)


def test_analyze_synthesize_round_trip():
    rule = AngularRule(5, order=20, kmax=6)
    c = np.random.default_rng(0).standard_normal(7)
    assert np.allclose(rule.analyze(rule.synthesize(c)), c, atol=1e-12)


def test_ball_eigenvalues():
    g3 = RadialGrid(3, 800)
    mu3 = first_eigenpair_radial(3, np.zeros(g3.M + 1), g3)
    assert abs(mu3.value - math.pi ** 2) <= 1e-4 * math.pi ** 2
    assert mu3.residual <= 1e-8
    assert np.all(mu3.vector[:-1] >= 0)
    g2 = RadialGrid(2, 800)
    j0 = special.jn_zeros(0, 1)[0]
    assert abs(first_eigenpair_radial(2, np.zeros(g2.M + 1), g2).value - j0 ** 2) <= 1e-3 * j0 ** 2


def test_constant_shift():
    g = RadialGrid(3, 600)
    a = first_eigenpair_radial(3, np.zeros(g.M + 1), g).value
    b = first_eigenpair_radial(3, np.full(g.M + 1, 2.5), g).value
    assert abs(b - a - 2.5) <= 1e-9


def test_biharmonic_disk_and_refinement():
    lam2, _ = biharmonic_first_eigenvalue(2, RadialGrid(2, 400))
    assert abs(lam2 - 104.363) <= 0.01 * 104.363
    a, _ = biharmonic_first_eigenvalue(3, RadialGrid(3, 300))
    b, _ = biharmonic_first_eigenvalue(3, RadialGrid(3, 600))
    assert abs(a - b) <= 1e-3 * b
    c, _ = biharmonic_first_eigenvalue(5, RadialGrid(5, 600))
    assert c > b
