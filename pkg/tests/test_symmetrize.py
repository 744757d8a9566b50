import math

import numpy as np
import pytest

from vortexlab.errors import ConvexityError, PreconditionError
from vortexlab.fields import CLAMPED, RADIAL_GRADIENT, ModeField, SampledSphereField, \
    random_mode_field, with_boundary_gradient
from vortexlab.forms import laplacian_l2
from vortexlab.numerics import AngularRule, RadialGrid, sphere_area
from vortexlab.symmetrize import as_function, check_convex_decrease, check_delta_decrease, \
    check_lp_decrease, check_lp_increase_low, gradient_lipschitz, idempotence_error, \
    s_coefficients, scalar_idempotence_error, scalar_lipschitz, scalar_slice_check, \
    scalar_sobolev_check, search_delta_increase, slice_gradient_check, symmetrize_gradient, \
    symmetrize_scalar


def _grid(N, points=300):
    return RadialGrid(N, points)


def _sampled(N, grid, rule, coeffs_fn):
    """Zonal samples of sum_k a_k(r) phi_k(t) with radial and t derivatives."""
    a, a1 = coeffs_fn(grid.x)
    vals = a @ rule.phi[:a.shape[1]]
    dr = a1 @ rule.phi[:a.shape[1]]
    dt = a @ rule.dphi[:a.shape[1]]
    return SampledSphereField(grid, rule, vals, dr, dt)


def _random_sampled(N, grid, rule, rng):
    v = random_mode_field(N, grid, rng, degrees=(0, 1, 2))
    return v.to_samples(rule)


def test_scalar_first_coordinate():
    N = 4
    grid = _grid(N)
    rule = AngularRule(N, 24, 4)
    g = SampledSphereField(grid, rule, np.tile(rule.t, (grid.M + 1, 1)))
    assert np.max(np.abs(symmetrize_scalar(g).values - 0.5)) <= 1e-12


def test_scalar_radial_and_sign():
    N = 4
    grid = _grid(N)
    rule = AngularRule(N, 24, 4)
    rad = np.exp(-grid.x)
    g = SampledSphereField(grid, rule, np.tile(rad[:, None], (1, len(rule.t))))
    for q in (1.0, 2.0, 3.5):
        assert np.max(np.abs(symmetrize_scalar(g, q).values - rad)) <= 1e-12
    rng = np.random.default_rng(0)
    h = _random_sampled(N, grid, rule, rng)
    neg = SampledSphereField(grid, rule, -h.values)
    assert np.array_equal(symmetrize_scalar(h).values, symmetrize_scalar(neg).values)


@pytest.mark.parametrize("q", [1.0, 2.0, 3.0])
def test_scalar_properties(q):
    N = 5
    grid = _grid(N)
    rule = AngularRule(N, 24, 4)
    rng = np.random.default_rng([1, int(q)])
    for _ in range(50):
        g, h = (_random_sampled(N, grid, rule, rng) for _ in range(2))
        assert scalar_slice_check(g, q) <= 1e-12
        a, b = scalar_lipschitz(g, h, q)
        assert a <= b * (1 + 1e-10)
    for _ in range(10):
        g = _random_sampled(N, grid, rule, rng)
        a, b = scalar_sobolev_check(g, q)
        assert a <= b * (1 + 1e-10)
        assert scalar_idempotence_error(g, q) <= 1e-10


def test_scalar_rejects_bad_exponent():
    from vortexlab.errors import ConfigError

    N = 4
    grid = _grid(N)
    rule = AngularRule(N, 8, 2)
    g = SampledSphereField(grid, rule, np.ones((grid.M + 1, 8)))
    with pytest.raises(ConfigError):
        symmetrize_scalar(g, 0.5)


def test_gradient_sym_degree_one_value():
    N = 5
    grid = _grid(N, 600)
    x = grid.x
    v = ModeField(grid, (1,), x * (1 - x), 1 - 2 * x, -2 * np.ones_like(x), CLAMPED)
    vc = symmetrize_gradient(v)
    i = int(np.argmin(np.abs(x - 0.5)))
    assert abs(x[i] - 0.5) < 1e-12
    # coefficient convention: the formula value, function value is that over sqrt|S|
    assert vc.d1[0, i] == pytest.approx(1.0, abs=1e-12)
    _, d1 = as_function(vc)
    assert d1[i] == pytest.approx(1.0 / math.sqrt(sphere_area(N)), abs=1e-12)


def test_gradient_sym_radial_fixed_point_and_scaling():
    N = 4
    grid = _grid(N, 600)
    x = grid.x
    v = ModeField(grid, (0,), x ** 3 - 1, 3 * x ** 2, 6 * x, CLAMPED)
    vc = symmetrize_gradient(v)
    assert np.max(np.abs(vc.d1[0] - v.d1[0])) <= 1e-12
    assert np.max(np.abs(vc.values[0] - v.values[0])) <= 1e-6
    rng = np.random.default_rng(2)
    w = random_mode_field(N, grid, rng)
    a, b = symmetrize_gradient(w), symmetrize_gradient(w.scaled(2.0))
    assert np.allclose(b.values, 2 * a.values, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("N", [2, 3, 4, 5, 6])
def test_gradient_sym_invariants(N):
    grid = _grid(N)
    rng = np.random.default_rng([3, N])
    for _ in range(100):
        v = random_mode_field(N, grid, rng, degrees=(0, 1, 2, 3))
        vc = symmetrize_gradient(v)
        assert np.all(vc.values[0] <= 1e-14) and vc.values[0, -1] == 0.0
        assert np.all(vc.d1[0] >= 0)
        assert slice_gradient_check(v)["max_error"] <= 1e-8
    for _ in range(20):
        a = random_mode_field(N, grid, rng)
        b = random_mode_field(N, grid, rng)
        lhs, rhs = gradient_lipschitz(a, b)
        assert lhs <= rhs * (1 + 1e-10)
        assert idempotence_error(a) <= 1e-10


def test_boundary_constant():
    N = 5
    grid = _grid(N)
    v = with_boundary_gradient(random_mode_field(N, grid, np.random.default_rng(4)), -0.7)
    vc = symmetrize_gradient(v)
    assert vc.boundary == RADIAL_GRADIENT
    # c is stored in the coefficient convention, as is d1
    assert vc.d1[0, -1] == pytest.approx(0.7, rel=1e-12)


def test_convex_decrease():
    N = 4
    grid = _grid(N)
    rng = np.random.default_rng(5)
    for _ in range(10):
        v = random_mode_field(N, grid, rng, degrees=(0, 1, 2))
        a, b = check_lp_decrease(v, 4.0)
        assert a <= b + 1e-8
        a, b = check_convex_decrease(v, lambda r, s: (1 + r) * s)
        assert abs(a - b) <= 1e-8 * (1 + abs(b))
    rad = random_mode_field(N, grid, rng, degrees=(0,))
    a, b = check_lp_decrease(rad, 3.0)
    assert abs(a - b) <= 1e-10 * b
    with pytest.raises(ConvexityError):
        check_convex_decrease(rad, lambda r, s: np.sqrt(s))
    with pytest.raises(PreconditionError):
        check_lp_decrease(rad, 1.5)


def test_lp_increase_low():
    N = 3
    grid = _grid(N)
    rng = np.random.default_rng(6)
    one = random_mode_field(N, grid, rng, degrees=(1,))
    assert check_lp_increase_low(one, 2.0)["min_margin"] >= -1e-8
    two = random_mode_field(N, grid, rng, degrees=(0, 2))
    assert check_lp_increase_low(two, 1.0)["min_margin"] >= -1e-8
    x = grid.x
    rad = ModeField(grid, (0,), x ** 2 - 1, 2 * x, 2 * np.ones_like(x), CLAMPED)
    rep = check_lp_increase_low(rad, 1.5)
    assert np.max(np.abs(rep["lhs"] - rep["rhs"])) <= 1e-10 * np.max(rep["rhs"])
    with pytest.raises(PreconditionError):
        check_lp_increase_low(with_boundary_gradient(rad, 1.0), 1.5)


def test_s_coefficients():
    assert s_coefficients(5, [1])[0] == pytest.approx(0.25)
    s = s_coefficients(3, [4, 5, 8])
    assert min(s) >= 20 * math.sqrt(5) - 44 - 1e-12
    assert s_coefficients(3, [1]) == [None]


def test_delta_decrease():
    N = 5
    grid = _grid(N, 400)
    rng = np.random.default_rng(7)
    for _ in range(20):
        assert check_delta_decrease(random_mode_field(N, grid, rng, degrees=(0, 1, 2)))["ok"]
    rad = random_mode_field(N, grid, rng, degrees=(0,))
    res = check_delta_decrease(rad)
    assert abs(res["gap"]) <= 1e-10 * (abs(res["rhs"]) + 1)
    g3 = _grid(3, 400)
    with pytest.raises(PreconditionError):
        check_delta_decrease(random_mode_field(3, g3, rng, degrees=(0, 1)))
    assert check_delta_decrease(random_mode_field(3, g3, rng, degrees=(0, 4, 5)))["ok"]


def test_low_dimension_increase_found():
    res = search_delta_increase(3, seed=0)
    assert res["found"]
    v = res["field"]
    assert laplacian_l2(symmetrize_gradient(v)) > laplacian_l2(v)
