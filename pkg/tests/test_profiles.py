import numpy as np
import pytest

from vortexlab.errors import PreconditionError
from vortexlab.numerics import RadialGrid
from vortexlab.potentials import make_W, make_Wt
from vortexlab.profiles import EQUATOR, ESCAPING, MM, NONESCAPING, equator_profile, h1_distance, \
    mm_limit_check, solve_extended_profile, solve_gl_profile, solve_mm_profile, \
    verify_lagrange_multiplier

W, Wt = make_W("half-square"), make_Wt("linear")


@pytest.mark.parametrize("N", range(2, 8))
def test_zero_potential_gives_identity(N):
    g = RadialGrid(N, 600)
    prof = solve_gl_profile(N, 0.37, make_W("zero"), g)
    assert np.max(np.abs(prof.f - g.x)) <= 1e-6


def test_large_eps_close_to_identity():
    g = RadialGrid(2, 400)
    prof = solve_gl_profile(2, 10.0, W, g)
    assert np.max(np.abs(prof.f - g.x)) <= 0.05


def test_gl_profile_invariants_and_refinement():
    a = solve_gl_profile(5, 0.1, W, RadialGrid(5, 300))
    b = solve_gl_profile(5, 0.1, W, RadialGrid(5, 600))
    assert a.max_residual() <= 1e-6
    assert np.min(np.diff(a.f)) > -1e-10 and -1e-10 <= a.f.min() and a.f.max() <= 1 + 1e-10
    i = np.argmin(np.abs(a.grid.x - 0.5))
    assert 0 < a.f[i] < 1
    # compare at the coarse nodes through interpolation of the fine profile
    assert np.max(np.abs(np.interp(a.grid.x, b.grid.x, b.f) - a.f)) <= 1e-3


def test_extended_escaping_branch():
    g = RadialGrid(4, 600)
    prof = solve_extended_profile(4, 0.1, 1.0, W, Wt, g)
    assert prof.branch == ESCAPING
    inner = slice(1, -1)
    assert np.all(prof.g[inner] > 0)
    assert np.all(prof.f[inner] ** 2 + prof.g[inner] ** 2 < 1)
    assert np.max(np.diff(prof.g)) <= 1e-10
    assert prof.f[-1] == 1.0 and prof.g[-1] == 0.0 and prof.f[0] == 0.0


def test_flat_potential_never_escapes():
    g = RadialGrid(4, 300)
    for eps, eta in ((0.05, 5.0), (0.3, 1.0)):
        prof = solve_extended_profile(4, eps, eta, make_W("zero"), Wt, g)
        assert prof.branch == NONESCAPING
        assert np.all(prof.g == 0)


def test_mm_profile():
    g = RadialGrid(4, 600)
    prof = solve_mm_profile(4, 1.0, Wt, g)
    assert prof.branch == MM
    assert 0 < prof.g[0] <= 1
    assert np.max(np.abs(prof.f ** 2 + prof.g ** 2 - 1)) <= 1e-10
    assert np.min(np.diff(prof.f)) > 0 and np.max(np.diff(prof.g)) < 0
    assert verify_lagrange_multiplier(prof)["max_residual"] <= 1e-5


def test_multiplier_detects_perturbation():
    g = RadialGrid(4, 600)
    prof = solve_mm_profile(4, 1.0, Wt, g)
    prof.f = prof.f + 0.01
    assert verify_lagrange_multiplier(prof)["max_residual"] > 1e-3


def test_equator_profile_exact():
    prof = equator_profile(4, 1.0, Wt, RadialGrid(4, 200))
    assert prof.branch == EQUATOR
    assert verify_lagrange_multiplier(prof)["max_residual"] <= 1e-14


def test_mm_limit():
    g = RadialGrid(4, 400)
    rep = mm_limit_check(4, 1.0, W, Wt, [0.1, 0.07, 0.05], g)
    assert rep["decreasing"]
    single = mm_limit_check(4, 1.0, W, Wt, [0.1], g)
    prof = solve_extended_profile(4, 0.1, 1.0, W, Wt, g)
    assert single["distances"][0] == h1_distance(prof, single["mm_profile"])
    with pytest.raises(PreconditionError):
        mm_limit_check(4, 1.0, W, Wt, [2.0], g)
