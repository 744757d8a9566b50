"""The acceptance suite: twelve numbered checks with frozen tolerances.

Every check returns a CriterionResult whose ``summary`` holds only
deterministic content (pass flag and rounded key numbers); wall-clock times
live in ``seconds`` so that two runs with the same seed compare equal.
"""

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import PreconditionError, VortexlabError
from .fields import CLAMPED, random_mode_field
from .numerics import RadialGrid, first_eigenpair_radial
from .potentials import make_W, make_Wt

DIGITS = 10


def _r(x):
    """Round for the summary: fixed significant digits, plain floats."""
    if x is None or isinstance(x, (bool, str, int)):
        return x
    x = float(x)
    if not math.isfinite(x) or x == 0.0:
        return x
    return float(f"{x:.{DIGITS}g}")


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    summary: dict
    seconds: float = 0.0
    detail: dict = field(default_factory=dict)

    def line(self):
        return f"criterion {self.number:2d} {'PASS' if self.passed else 'FAIL'}  {self.name}"

    def to_dict(self):
        return {"criterion": self.number, "name": self.name, "passed": self.passed,
                "summary": self.summary}


def _timed(number, name, fn, *args, **kw):
    t0 = time.perf_counter()
    try:
        passed, summary, detail = fn(*args, **kw)
    except VortexlabError as exc:
        passed, summary, detail = False, {"error": f"{type(exc).__name__}: {exc}"}, {}
    return CriterionResult(number, name, bool(passed), summary, time.perf_counter() - t0, detail)


# ---- 1: GL profile with W = 0 -------------------------------------------------------------


def _c1(seed):
    from .profiles import solve_gl_profile

    W0 = make_W("zero")
    errs, times = {}, {}
    for N in range(2, 8):
        grid = RadialGrid(N, 600)
        t0 = time.perf_counter()
        prof = solve_gl_profile(N, 1.0, W0, grid)
        times[N] = time.perf_counter() - t0
        errs[N] = float(np.max(np.abs(prof.f - grid.x)))
    ok = all(e <= 1e-6 for e in errs.values()) and all(t < 1.0 for t in times.values())
    return ok, {"max_error": _r(max(errs.values())),
                "all_under_1s": all(t < 1.0 for t in times.values())}, {"times": times}


def criterion_1(seed=0):
    return _timed(1, "W = 0 profile is f(r) = r, N = 2..7", _c1, seed)


# ---- 2: Dirichlet eigenvalues of the ball -------------------------------------------------


def _c2(seed):
    out = {}
    exact = {3: math.pi ** 2, 2: float(special.jn_zeros(0, 1)[0]) ** 2}
    for N, ref in exact.items():
        grid = RadialGrid(N, 800)
        mu = first_eigenpair_radial(N, np.zeros(grid.M + 1), grid).value
        out[N] = abs(mu - ref) / ref
    return all(v <= 1e-3 for v in out.values()), \
        {"rel_error_N3": _r(out[3]), "rel_error_N2": _r(out[2])}, {}


def criterion_2(seed=0):
    return _timed(2, "ball eigenvalues pi^2 (N=3) and j_{0,1}^2 (N=2)", _c2, seed)


# ---- 3: lower bound for the second variation --------------------------------------------------


def _c3(seed, fields=100):
    from .forms import quadratic_form_F
    from .profiles import solve_extended_profile

    W, Wt = make_W("half-square"), make_Wt("linear")
    worst = math.inf
    count = 0
    for N in (4, 5, 6):
        grid = RadialGrid(N, 600)
        profs = [solve_extended_profile(N, eps, 1.0, W, Wt, grid) for eps in (0.1, 0.3)]
        rng = np.random.default_rng([seed, 3, N])
        for _ in range(fields):
            v = random_mode_field(N, grid, rng, degrees=(0, 1, 2, 3))
            for prof in profs:
                F = quadratic_form_F(v, prof, W=W)
                worst = min(worst, F.margin / F.scale)
                count += 1
    return worst >= -1e-8, {"worst_relative_margin": _r(worst), "evaluations": count}, {}


def criterion_3(seed=0):
    return _timed(3, "second variation dominates the Hardy-type bound, N = 4, 5, 6", _c3, seed)


# ---- 4: Hardy-Rellich constants ---------------------------------------------------------------


def _c4(seed, fields=100):
    from .forms import hardy_rellich_ratio

    worst = {}
    for N in (3, 4, 5, 6):
        grid = RadialGrid(N, 600)
        rng = np.random.default_rng([seed, 4, N])
        m = math.inf
        for _ in range(fields):
            v = random_mode_field(N, grid, rng, degrees=(0, 1, 2, 3))
            m = min(m, hardy_rellich_ratio(N, v)["margin"])
        worst[N] = m
    return all(m >= -1e-6 for m in worst.values()), \
        {f"min_margin_N{N}": _r(m) for N, m in worst.items()}, {}


def criterion_4(seed=0):
    return _timed(4, "Hardy-Rellich ratio at least c_N, N = 3..6", _c4, seed)


# ---- 5: the low-dimensional counterexample -------------------------------------------------------


def _c5(seed):
    from .forms import build_counterexample, f_eps_negativity, find_counterexample

    out = {}
    ok = True
    for N in (2, 3):
        cex = find_counterexample(N)
        neg = f_eps_negativity(N, cex)
        out[f"N{N}_j"] = _r(cex.j)
        out[f"N{N}_trial"] = _r(cex.trial)
        out[f"N{N}_F_eps_smallest"] = _r(neg["F_eps"][-1])
        ok = ok and cex.negative and neg["negative"]
    refused = 0
    for N in (4, 5, 6):
        try:
            build_counterexample(N, 1e4)
        except PreconditionError:
            refused += 1
    out["guard_refusals"] = refused
    return ok and refused == 3, out, {}


def criterion_5(seed=0):
    return _timed(5, "negative direction for N = 2, 3; guard for N >= 4", _c5, seed)


# ---- 6: phase diagram ------------------------------------------------------------------------

PHASE_EPS = (0.05, 0.08, 0.12, 0.2, 0.4)
PHASE_ETA = (0.1, 0.2, 0.4, 0.8, 1.6)


def _c6(seed):
    from .profiles import ESCAPING, solve_extended_profile
    from .spectral import ESCAPING_TAG, classify, escape_onset_eta, eta0_of_eps, find_eps0

    N = 4
    W, Wt = make_W("half-square"), make_Wt("linear")
    grid = RadialGrid(N, 600)
    agree = 0
    for eps in PHASE_EPS:
        for eta in PHASE_ETA:
            tag = classify(N, eps, eta, W, Wt, grid)
            branch = solve_extended_profile(N, eps, eta, W, Wt, grid).branch
            agree += (tag == ESCAPING_TAG) == (branch == ESCAPING)
    e0 = find_eps0(N, W, grid)
    bracket_ok = bool(e0.found and e0.ell_bracket[0] < 0 < e0.ell_bracket[1])
    eps = 0.1
    formula = eta0_of_eps(N, eps, W, Wt, grid)
    bisect = escape_onset_eta(N, eps, W, Wt, grid, lo=0.1, hi=2.0, rtol=1e-4)
    rel = abs(formula - bisect) / formula
    ok = agree == 25 and bracket_ok and rel <= 0.02
    return ok, {"agreement": agree, "eps0": _r(e0.eps0), "bracket_sign_change": bracket_ok,
                "eta0_formula": _r(formula), "eta0_bisection": _r(bisect),
                "eta0_rel_diff": _r(rel)}, {}


def criterion_6(seed=0):
    return _timed(6, "phase diagram: classification, eps0 bracket, onset curve", _c6, seed)


# ---- 7: zero mode of T on the escaping branch ----------------------------------------------------


def _c7(seed):
    from .profiles import ESCAPING, solve_extended_profile
    from .spectral import t_operator_spectrum

    W, Wt = make_W("half-square"), make_Wt("linear")
    grid = RadialGrid(4, 600)
    prof = solve_extended_profile(4, 0.1, 1.0, W, Wt, grid)
    if prof.branch != ESCAPING:
        return False, {"branch": prof.branch}, {}
    sp = t_operator_spectrum(prof, W, Wt)
    ok = sp.zero_mode_residual <= 1e-5 and abs(sp.value) <= 1e-6
    return ok, {"zero_mode_residual": _r(sp.zero_mode_residual),
                "first_eigenvalue": _r(sp.value)}, {}


def criterion_7(seed=0):
    return _timed(7, "T g = 0 and first eigenvalue 0 on the escaping branch", _c7, seed)


# ---- 8: gradient symmetrization ---------------------------------------------------------------


def _c8(seed, fields=100):
    from .symmetrize import check_delta_decrease, check_lp_decrease, check_lp_increase_low, \
        slice_gradient_check

    out = {}
    ok = True
    for N in (3, 5):
        grid = RadialGrid(N, 400)
        rng = np.random.default_rng([seed, 8, N])
        slice_err, l4, low, dd = 0.0, math.inf, math.inf, math.inf
        for _ in range(fields):
            v = random_mode_field(N, grid, rng, degrees=(0, 1, 2, 3), boundary=CLAMPED)
            slice_err = max(slice_err, slice_gradient_check(v)["max_error"])
            a, b = check_lp_decrease(v, 4.0)
            l4 = min(l4, (b - a) / max(abs(b), 1e-300))
            for p in (1.0, 1.5, 2.0):
                low = min(low, check_lp_increase_low(v, p)["min_margin"])
            w = v.restrict(lambda k: k != 1) if N <= 4 else v
            res = check_delta_decrease(w)
            ok = ok and res["ok"]
            dd = min(dd, (res["gap"] - res["bound"]) / (abs(res["rhs"]) + 1.0))
        rad = 0.0
        for _ in range(10):
            v = random_mode_field(N, grid, rng, degrees=(0,), boundary=CLAMPED)
            res = check_delta_decrease(v)
            rad = max(rad, abs(res["gap"]) / (abs(res["rhs"]) + 1.0))
        ok = ok and slice_err <= 1e-8 and l4 >= -1e-12 and low >= -1e-8 and rad <= 1e-10
        out.update({f"N{N}_slice_error": _r(slice_err), f"N{N}_l4_rel_decrease": _r(l4),
                    f"N{N}_low_p_margin": _r(low), f"N{N}_delta_gap_minus_bound": _r(dd),
                    f"N{N}_radial_gap": _r(rad)})
    return ok, out, {}


def criterion_8(seed=0):
    return _timed(8, "gradient symmetrization: slices, L^p, Laplacian", _c8, seed)


# ---- 9: convexity gap ---------------------------------------------------------------------


def _c9(seed, samples=100):
    from .energy import ZonalDiscretization, convexity_gap_check, random_perturbation
    from .profiles import solve_extended_profile

    N = 4
    W, Wt = make_W("half-square"), make_Wt("linear")
    grid = RadialGrid(N, 240)
    disc = ZonalDiscretization(N, grid, kmax=3)
    out = {}
    ok = True
    for eps, eta in ((0.1, 1.0), (0.1, 0.3)):
        prof = solve_extended_profile(N, eps, eta, W, Wt, grid)
        rng = np.random.default_rng([seed, 9, int(100 * eta)])
        worst = math.inf
        for _ in range(samples):
            amp = 10.0 ** rng.uniform(-3.0, 0.5)
            pert = random_perturbation(disc, rng, degrees=(0, 1, 2, 3), amplitude=amp)
            r = convexity_gap_check(prof, pert, eps, eta, W, Wt)
            worst = min(worst, r["slack"] / r["scale"])
        ok = ok and worst >= -1e-7
        out[f"{prof.branch}_worst_relative_slack"] = _r(worst)
    return ok, out, {}


def criterion_9(seed=0):
    return _timed(9, "convexity gap on both branches, N = 4", _c9, seed)


# ---- 10: descent witness ---------------------------------------------------------------------


def _c10(seed):
    from .energy import ZonalDiscretization, minimize_extended, witness_init
    from .profiles import ESCAPING, solve_extended_profile
    from .spectral import ESCAPING_TAG, classify

    N = 4
    W, Wt = make_W("half-square"), make_Wt("linear")
    grid = RadialGrid(N, 200)
    disc = ZonalDiscretization(N, grid, kmax=3)
    out = {}
    ok = True
    for eps, eta in ((0.1, 1.0), (0.1, 0.3)):
        tag = classify(N, eps, eta, W, Wt, grid)
        prof = solve_extended_profile(N, eps, eta, W, Wt, grid)
        t0 = time.perf_counter()
        res = minimize_extended(witness_init(disc, eps, W, seed=seed), eps, eta, W, Wt)
        dt = time.perf_counter() - t0
        rel = abs(res.energy - prof.energy) / abs(prof.energy)
        hist = np.array([h[1] for h in res.history])
        mono = bool(np.all(np.diff(hist) <= 1e-12 * np.abs(hist[:-1])))
        match = (tag == ESCAPING_TAG) == (prof.branch == ESCAPING)
        good = match and rel <= 1e-6 and res.info["nonradial_mass"] <= 1e-5 and mono and dt < 300
        ok = ok and good
        out[tag] = {"energy_rel_diff": _r(rel), "nonradial_mass_le_1e-5":
                    res.info["nonradial_mass"] <= 1e-5, "monotone": mono, "branch": prof.branch,
                    "under_5_minutes": dt < 300}
    return ok, out, {}


def criterion_10(seed=0):
    return _timed(10, "descent from a perturbed vortex reaches the radial branch, N = 4",
                  _c10, seed)


# ---- 11: biharmonic ground state ----------------------------------------------------------------


def _c11(seed):
    from .energy import minimize_biharmonic_J

    res = minimize_biharmonic_J(5, 1.5, 0.0, 1.0, grid=RadialGrid(5, 240),
                                rng=np.random.default_rng([seed, 11]))
    i = res.info
    ok = (i["nonradial_mass"] <= 1e-5 and i["sign_definite"] and i["monotone"]
          and i["el_residual"] <= 1e-4 and i["J"] >= 0)
    return ok, {"J": _r(i["J"]), "el_residual_le_1e-4": i["el_residual"] <= 1e-4,
                "nonradial_mass_le_1e-5": i["nonradial_mass"] <= 1e-5,
                "sign_definite": i["sign_definite"], "monotone": i["monotone"]}, {}


def criterion_11(seed=0):
    return _timed(11, "biharmonic ground state is radial, one-signed, monotone", _c11, seed)


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
            11: criterion_11}


def run_report(seed=0, only=None, progress=None):
    """Run criteria 1-11 (or ``only``); returns (results, summary dict)."""
    results = []
    for n, fn in CRITERIA.items():
        if only and n not in only:
            continue
        res = fn(seed)
        if progress:
            progress(res)
        results.append(res)
    summary = {"seed": seed, "criteria": [r.to_dict() for r in results],
               "all_passed": all(r.passed for r in results)}
    return results, summary


def summary_json(summary):
    return json.dumps(summary, sort_keys=True, indent=2) + "\n"
