import math

import numpy as np
import pytest

from vortexlab.energy import ZonalDiscretization, config_from_profile, convexity_gap_check, \
    energy_extended, energy_mm, explore_minima, gradient_check, identity_config, \
    minimize_biharmonic_J, minimize_extended, minimize_mm, random_perturbation, \
    symmetrize_config, symmetrized_competitor, witness_init
from vortexlab.errors import PreconditionError
from vortexlab.numerics import RadialGrid, ball_volume
from vortexlab.potentials import make_W, make_Wt
from vortexlab.profiles import ESCAPING, NONESCAPING, equator_profile, radial_energy, \
    solve_extended_profile, solve_mm_profile

W, Wt = make_W("half-square"), make_Wt("linear")
Z, Zt = make_W("zero"), make_Wt("zero")


@pytest.fixture(scope="module")
def disc4():
    return ZonalDiscretization(4, RadialGrid(4, 120), kmax=3)


def test_identity_energy_is_pi_squared():
    errs = []
    for points in (150, 300, 600):
        disc = ZonalDiscretization(4, RadialGrid(4, points), kmax=2)
        e = energy_extended(identity_config(disc), 1.0, 1.0, Z, Zt)
        assert e.total == e.dirichlet + e.w_term + e.wt_term
        errs.append(abs(e.total - math.pi ** 2) / math.pi ** 2)
    assert math.pi ** 2 == pytest.approx(4 * ball_volume(4) / 2, rel=1e-14)
    # lumped angular term: first-order error, shrinking under refinement
    assert errs[1] <= 1e-4 and errs[0] > errs[1] > errs[2]


@pytest.mark.parametrize("eps,eta", [(0.1, 1.0), (0.3, 1.0)])
def test_radial_consistency(disc4, eps, eta):
    prof = solve_extended_profile(4, eps, eta, W, Wt, disc4.grid)
    cfg = config_from_profile(disc4, prof)
    e = energy_extended(cfg, eps, eta, W, Wt).total
    ref = sum(radial_energy(prof, W, Wt))
    assert abs(e - ref) <= 1e-6 * abs(ref)


def test_mm_energy_consistency(disc4):
    prof = solve_mm_profile(4, 1.0, Wt, disc4.grid)
    e = energy_mm(config_from_profile(disc4, prof), 1.0, Wt)
    assert abs(e.total - sum(radial_energy(prof, Z, Wt))) <= 1e-6 * e.total
    with pytest.raises(PreconditionError):
        energy_mm(identity_config(disc4).radial_part() + random_perturbation(
            disc4, np.random.default_rng(0), amplitude=0.3), 1.0, Wt)


def test_zero_perturbation_and_gradient(disc4):
    rng = np.random.default_rng(1)
    cfg = identity_config(disc4) + random_perturbation(disc4, rng, amplitude=0.2)
    zero = random_perturbation(disc4, rng, amplitude=0.0)
    assert energy_extended(cfg + zero, 0.2, 1.0, W, Wt).total == \
        energy_extended(cfg, 0.2, 1.0, W, Wt).total
    assert gradient_check(cfg, 0.2, 1.0, W, Wt, rng, directions=10) <= 1e-5


def test_convexity_gap(disc4):
    prof = solve_extended_profile(4, 0.1, 1.0, W, Wt, disc4.grid)
    assert prof.branch == ESCAPING
    rng = np.random.default_rng(2)
    zero = random_perturbation(disc4, rng, amplitude=0.0)
    r = convexity_gap_check(prof, zero, 0.1, 1.0, W, Wt)
    assert r["lhs"] == 0.0 and r["rhs"] == 0.0
    for _ in range(20):
        pert = random_perturbation(disc4, rng, degrees=(0, 1, 2, 3),
                                   amplitude=10 ** rng.uniform(-3, 0))
        r = convexity_gap_check(prof, pert, 0.1, 1.0, W, Wt)
        assert r["slack"] >= -1e-7 * r["scale"]
    # the escaping direction itself: T g = 0
    along = random_perturbation(disc4, rng, degrees=(0,), amplitude=0.0, with_p=True)
    along.p[0] = 0.05 * config_from_profile(disc4, prof).p[0]
    r = convexity_gap_check(prof, along, 0.1, 1.0, W, Wt)
    assert abs(r["T"]) <= 1e-4 * r["scale"]
    assert r["slack"] >= -1e-7 * r["scale"]


def test_symmetrization_dominance():
    disc = ZonalDiscretization(5, RadialGrid(5, 120), kmax=3)
    rng = np.random.default_rng(3)
    for _ in range(50):
        cfg = identity_config(disc) + random_perturbation(disc, rng, degrees=(0, 1, 2, 3),
                                                          amplitude=rng.uniform(0.05, 0.5))
        sym = symmetrize_config(cfg)
        assert sym.nonradial_mass() == 0.0
        a = energy_extended(sym, 0.1, 1.0, W, Wt).total
        b = energy_extended(cfg, 0.1, 1.0, W, Wt).total
        assert a <= b + 1e-7


def test_descent_witness_escaping(disc4):
    init = witness_init(disc4, 0.1, W)
    res = minimize_extended(init, 0.1, 1.0, W, Wt)
    e = [row[1] for row in res.history]
    assert all(b <= a + 1e-12 * abs(a) for a, b in zip(e, e[1:]))
    assert res.converged
    prof = solve_extended_profile(4, 0.1, 1.0, W, Wt, disc4.grid)
    ref = energy_extended(config_from_profile(disc4, prof), 0.1, 1.0, W, Wt).total
    assert abs(res.energy - ref) <= 1e-6 * abs(ref)
    assert res.info["nonradial_mass"] <= 1e-5


def test_radial_start_stays_radial(disc4):
    prof = solve_extended_profile(4, 0.1, 1.0, W, Wt, disc4.grid)
    cfg = config_from_profile(disc4, prof)
    cfg.p[0] *= 0.5
    res = minimize_extended(cfg, 0.1, 1.0, W, Wt)
    # higher modes only pick up round-off from the angular transform
    assert res.info["nonradial_mass"] <= 1e-12


def test_flat_potential_does_not_escape(disc4):
    found = explore_minima(disc4, 0.1, 1.0, Z, Wt, seeds=(0,))
    assert len(found) == 1
    assert found[0]["p_sign"] == 0
    prof = solve_extended_profile(4, 0.1, 1.0, Z, Wt, disc4.grid)
    assert prof.branch == NONESCAPING


def test_escaping_minima_pair(disc4):
    found = explore_minima(disc4, 0.1, 1.0, W, Wt, seeds=(0,))
    signs = sorted(f["p_sign"] for f in found[:2])
    assert signs == [-1, 1]
    assert found[0]["energy"] == pytest.approx(found[1]["energy"], rel=1e-8)


def test_mm_basins():
    disc = ZonalDiscretization(4, RadialGrid(4, 60), kmax=2)
    mm = solve_mm_profile(4, 1.0, Wt, disc.grid)
    for sign in (1, -1):
        start = config_from_profile(disc, mm)
        start.p[0] *= sign
        start = start + random_perturbation(disc, np.random.default_rng(5), degrees=(1,),
                                            amplitude=0.01, with_p=False)
        res = minimize_mm(start, 1.0, Wt)
        assert res.info["sign"] == sign
        assert res.info["nonradial_mass"] <= 1e-5
    eq = config_from_profile(disc, equator_profile(4, 1.0, Wt, disc.grid))
    eq.p[0] = eq.p[0] + 1e-3 * math.sqrt(disc.S) * (1 - disc.grid.x ** 2)
    assert minimize_mm(eq, 1.0, Wt).info["sign"] == 1


def test_biharmonic_ground_state():
    res = minimize_biharmonic_J(5, 1.5, 0.0, 1.0, grid=RadialGrid(5, 120))
    info = res.info
    assert info["J"] >= 0
    assert info["sign_definite"] and info["monotone"]
    assert info["nonradial_mass"] <= 1e-5
    assert info["el_residual"] <= 1e-4
    assert info["lp_norm"] == pytest.approx(1.0, rel=1e-8)
    comp = symmetrized_competitor(res.config, 1.5, 0.0)
    assert comp["mu"] <= 1 + 1e-10
    assert comp["J_rescaled"] <= comp["J"] + 1e-8 * abs(comp["J"])


def test_biharmonic_rejects_large_lambda():
    res = minimize_biharmonic_J(5, 1.5, 0.0, 1.0, grid=RadialGrid(5, 60))
    with pytest.raises(PreconditionError):
        minimize_biharmonic_J(5, 1.5, res.info["lambda1"] * 1.01, 1.0, grid=RadialGrid(5, 60))
