import numpy as np
import pytest

from vortexlab.errors import PreconditionError
from vortexlab.fields import CLAMPED, COMPACT, ModeField, random_mode_field
from vortexlab.forms import build_counterexample, estimate_chain, f_eps_negativity, f_star, \
    find_counterexample, hardy_1d, hardy_decomposition_check, hardy_rellich_constant, \
    hardy_rellich_ratio, prop24_constants, quadratic_form_F, trial_coefficients, \
    zeta_weight_check
from vortexlab.numerics import RadialGrid, lambda_of_degree
from vortexlab.potentials import make_W
from vortexlab.profiles import solve_gl_profile

W = make_W("half-square")


@pytest.fixture(scope="module", params=[4, 5, 6])
def setting(request):
    N = request.param
    grid = RadialGrid(N, 400)
    return N, grid, solve_gl_profile(N, 0.1, W, grid)


def test_constants():
    assert prop24_constants(5) == (2.25, 2.5)
    assert prop24_constants(4) == (1.0, 0.0)
    assert hardy_rellich_constant(5) == 6.25
    assert hardy_rellich_constant(4) == 3.0
    assert hardy_rellich_constant(3) == 25.0 / 36.0
    assert hardy_rellich_constant(2) == 0.0


def test_split_identity_and_bound(setting):
    N, grid, prof = setting
    rng = np.random.default_rng([1, N])
    for _ in range(100):
        v = random_mode_field(N, grid, rng, degrees=(0, 1, 2, 3))
        F = quadratic_form_F(v, prof, 0.1, W)
        assert abs(F.total - F.split_sum) <= 1e-10 * F.scale
        assert F.margin >= -1e-8 * F.scale


def test_estimate_chain_per_mode(setting):
    N, grid, prof = setting
    rng = np.random.default_rng([2, N])
    for k in (0, 1, 2, 3):
        for _ in range(5):
            v = random_mode_field(N, grid, rng, degrees=(k,))
            for entry in estimate_chain(v, prof, 0.1, W):
                for key in ("I", "II", "III"):
                    lhs, rhs = entry[key]
                    assert lhs >= rhs - 1e-8 * (1.0 + abs(lhs)), (k, key, lhs, rhs)


def test_eigenvalue_square_dominates():
    for N in range(2, 8):
        for k in range(1, 51):
            lam = lambda_of_degree(N, k)
            assert lam * lam >= (N - 1) * lam


@pytest.mark.parametrize("N", [4, 5, 6])
def test_one_dimensional_hardy(N):
    grid = RadialGrid(N, 400)
    rng = np.random.default_rng([3, N])
    for _ in range(100):
        v = random_mode_field(N, grid, rng, degrees=(0,), boundary=COMPACT)
        lhs, rhs = hardy_1d(N, grid, v.values[0], v.d1[0])
        assert lhs >= rhs - 1e-10 * lhs


@pytest.mark.parametrize("N", [3, 4, 5, 6])
def test_hardy_rellich_ratio(N):
    grid = RadialGrid(N, 400)
    rng = np.random.default_rng([4, N])
    for _ in range(30):
        v = random_mode_field(N, grid, rng, degrees=(0, 1, 2))
        assert hardy_rellich_ratio(N, v)["ok"]
    with pytest.raises(PreconditionError):
        hardy_rellich_ratio(N, ModeField.zero(grid, (0,), CLAMPED))


def test_hardy_decomposition_constant_weight():
    N = 4
    grid = RadialGrid(N, 400)
    v = random_mode_field(N, grid, np.random.default_rng(5), degrees=(0,))
    one, zero = np.ones_like(grid.x), np.zeros_like(grid.x)
    lhs, rhs, gap = hardy_decomposition_check(N, grid, one, zero, zero, one, zero, zero,
                                              v.values[0], v.d1[0])
    assert abs(gap) <= 1e-12 * abs(lhs)
    assert lhs == pytest.approx(grid.integrate(v.d1[0] ** 2, N - 1), rel=1e-12)


def test_zeta_weight(setting):
    _, _, prof = setting
    assert zeta_weight_check(prof) >= -1e-8


def test_trial_numerators():
    assert build_counterexample(3, 100.0).info["numerator"] == -47
    assert build_counterexample(2, 100.0).info["numerator"] == -32
    assert trial_coefficients(2)[2] == -2.0


def test_guard_and_small_j():
    for N in (4, 5, 6):
        with pytest.raises(PreconditionError):
            build_counterexample(N, 1e4)
    with pytest.raises(PreconditionError):
        build_counterexample(3, 10.0)


def test_counterexample_field_matches_trial():
    cex = find_counterexample(3)
    assert cex.negative
    v = cex.field(cex.grid())
    assert f_star(v) < 0
    assert f_star(v) == pytest.approx(cex.info["F_star_from_trial"], rel=1e-2)
    with pytest.raises(PreconditionError):
        f_eps_negativity(5, cex)


def test_f_eps_converges_to_limit():
    cex = find_counterexample(3)
    res = f_eps_negativity(3, cex)
    assert res["negative"]
    assert res["relative_gap"][-1] <= 0.05
