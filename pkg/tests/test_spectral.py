import math

import numpy as np
import pytest

from vortexlab.errors import PreconditionError
from vortexlab.numerics import RadialGrid
from vortexlab.potentials import make_W, make_Wt
from vortexlab.profiles import ESCAPING, solve_extended_profile, solve_gl_profile
from vortexlab.spectral import ESCAPING_TAG, NONESCAPING_TAG, classify, ell_of_eps, eta0_from_ell, \
    eta0_of_eps, find_eps0, mode_cross_check, phase_diagram, t_operator_spectrum, \
    t_quadratic_form

W, Wt = make_W("half-square"), make_Wt("linear")
G4 = RadialGrid(4, 600)


def test_ell_zero_potential_is_ball_eigenvalue():
    g = RadialGrid(3, 800)
    assert abs(ell_of_eps(3, 0.2, make_W("zero"), g) - math.pi ** 2) <= 1e-3 * math.pi ** 2


def test_ell_sign_changes_with_eps():
    assert ell_of_eps(4, 1.0, W, G4) > 0
    assert ell_of_eps(4, 0.05, W, G4) < 0


def test_find_eps0_brackets_a_sign_change():
    res = find_eps0(4, W, G4)
    assert res.found
    lo, hi = res.bracket
    assert hi - lo <= 1e-4 * res.eps0 * 1.0001
    assert res.ell_bracket[0] < 0 < res.ell_bracket[1]


def test_no_eps0_in_high_dimension_or_flat_potential():
    assert not find_eps0(7, W, RadialGrid(7, 300)).found
    assert not find_eps0(4, make_W("zero"), G4).found


def test_eta0_formula():
    assert eta0_from_ell(-4.0, Wt) == 0.5
    assert eta0_from_ell(-4.0, make_Wt("square")) == 0.0
    with pytest.raises(PreconditionError):
        eta0_from_ell(1.0, Wt)


def test_classify_limits():
    assert classify(4, 1.0, 1.0, W, Wt, G4) == NONESCAPING_TAG
    assert classify(4, 0.05, 1e6, W, Wt, G4) == ESCAPING_TAG
    for eps in (0.05, 0.3):
        assert classify(4, eps, 1e3, make_W("zero"), Wt, G4) == NONESCAPING_TAG


def test_zero_mode_on_escaping_branch():
    prof = solve_extended_profile(4, 0.1, 1.0, W, Wt, G4)
    assert prof.branch == ESCAPING
    sp = t_operator_spectrum(prof, W, Wt)
    assert abs(sp.value) <= 1e-6 and sp.zero_mode_residual <= 1e-5
    rng = np.random.default_rng(0)
    x = G4.x
    for _ in range(50):
        c = rng.standard_normal(4)
        p = (1 - x * x) * (c[0] + c[1] * x + c[2] * x ** 2 + c[3] * np.sin(7 * x))
        assert t_quadratic_form(prof, W, Wt, p) >= -1e-8


def test_nonescaping_first_eigenvalue():
    prof = solve_extended_profile(4, 0.3, 1.0, W, Wt, G4)
    sp = t_operator_spectrum(prof, W, Wt)
    expected = ell_of_eps(4, 0.3, W, G4) + 1.0
    assert expected > 0 and abs(sp.value - expected) <= 1e-6


def test_no_potentials_gives_dirichlet_eigenvalue():
    g = RadialGrid(3, 800)
    prof = solve_extended_profile(3, 0.5, 1.0, make_W("zero"), make_Wt("zero"), g)
    sp = t_operator_spectrum(prof, make_W("zero"), make_Wt("zero"))
    assert abs(sp.value - math.pi ** 2) <= 1e-3 * math.pi ** 2


def test_degree_one_above_degree_zero():
    prof = solve_gl_profile(4, 0.1, W, G4)
    q = -W.d1(1 - prof.f ** 2) / 0.1 ** 2
    assert mode_cross_check(4, q, G4)["ok"]


def test_onset_matches_bisection():
    from vortexlab.spectral import escape_onset_eta

    eps = find_eps0(4, W, G4).eps0 / 2
    a = eta0_of_eps(4, eps, W, Wt, G4)
    b = escape_onset_eta(4, eps, W, Wt, G4, lo=0.05, hi=5.0, rtol=1e-4)
    assert abs(a - b) <= 0.02 * a


def test_phase_diagram_topologies():
    eps = [0.05, 0.1, 0.2, 0.4]
    eta = [0.1, 0.3, 1.0, 3.0]
    pd = phase_diagram(4, W, Wt, eps, eta, G4)
    assert pd.check_invariants() == []
    rows = list(pd.rows())
    assert len(rows) == 16 and any(r[3] == ESCAPING_TAG for r in rows)
    # the onset height grows with eps on the escaping side
    curve = sorted(pd.curve)
    assert all(b[1] > a[1] for a, b in zip(curve, curve[1:]))
    flat = phase_diagram(4, make_W("zero"), Wt, eps, eta, G4)
    assert all(r[3] == NONESCAPING_TAG for r in flat.rows())
    # W~'(0) = 0: the boundary is the vertical line eps = eps0
    vert = phase_diagram(4, W, make_Wt("square"), eps, eta, G4)
    for e, h, ell, tag in vert.rows():
        assert (tag == ESCAPING_TAG) == (ell < 0)
