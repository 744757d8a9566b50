"""Linearized operators around vortex profiles and the escaping phase diagram.

L_eps = -Delta - eps^{-2} W'(1 - f_eps^2) and
T = -Delta - eps^{-2} W'(1 - f^2 - g^2) + eta^{-2} W~'(g^2)
are assembled with the same lumped P1 discretization that produced the
profiles, so the discrete onset of escape sits exactly where
ell(eps) + eta^{-2} W~'(0) changes sign.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, PreconditionError, VortexlabError
from .numerics import RadialGrid, first_eigenpair_radial, radial_operator
from .profiles import ESCAPING, solve_extended_profile, solve_gl_profile

ESCAPING_TAG = "escaping"
NONESCAPING_TAG = "non-escaping"

EPS_SCAN = (1e-3, 10.0)
SCAN_POINTS = 41
RESOLVE_CELLS = 10.0
DEFAULT_POINTS = 600


def _grid(N, grid):
    if grid is None:
        return RadialGrid(N, DEFAULT_POINTS)
    if grid.N != N:
        raise PreconditionError("grid dimension mismatch")
    return grid


def _gl_potential(prof, W):
    """-eps^{-2} W'(1 - f^2 - g^2) sampled on the grid, from the stored deficit."""
    d = prof.deficit if prof.deficit is not None else 1.0 - prof.f
    t = d * (2.0 - d) - prof.g ** 2
    return -W.d1(t) / prof.eps ** 2


def linearized_ground_state(N, eps, W, grid=None, degree=0):
    """Ground state of L_eps on the degree-``degree`` mode; also returns the profile."""
    grid = _grid(N, grid)
    prof = solve_gl_profile(N, eps, W, grid)
    res = first_eigenpair_radial(N, _gl_potential(prof, W), grid, degree=degree)
    return res, prof


def ell_of_eps(N, eps, W, grid=None):
    """First eigenvalue ell(eps) of L_eps."""
    res, _ = linearized_ground_state(N, eps, W, grid)
    if res.residual > 1e-8:
        raise ConvergenceError(f"eigenpair residual {res.residual:.2e} too large")
    return res.value


def ell_sweep(N, W, eps_values, grid=None):
    """ell on a sweep of eps; lists consecutive decreases larger than 1e-8."""
    grid = _grid(N, grid)
    eps_values = sorted(float(e) for e in eps_values)
    vals = [ell_of_eps(N, e, W, grid) for e in eps_values]
    drops = [(eps_values[i], eps_values[i + 1], vals[i] - vals[i + 1])
             for i in range(len(vals) - 1) if vals[i + 1] < vals[i] - 1e-8]
    return {"eps": eps_values, "ell": vals, "decreases": drops}


@dataclass
class Eps0Result:
    found: bool
    eps0: float = None
    bracket: tuple = None
    ell_bracket: tuple = None
    reason: str = ""
    evaluations: int = 0

    def to_dict(self):
        return {"found": self.found, "eps0": self.eps0,
                "bracket": list(self.bracket) if self.bracket else None,
                "ell_bracket": list(self.ell_bracket) if self.ell_bracket else None,
                "reason": self.reason, "evaluations": self.evaluations}


def find_eps0(N, W, grid=None, rtol=1e-4, scan=EPS_SCAN, points=SCAN_POINTS):
    """Critical core size: ell(eps) < 0 below it, > 0 above.

    A geometric scan from the top of ``scan`` downward locates the first sign
    change, then log-bisection shrinks it to relative width ``rtol``.
    """
    if W.slope_at_one <= 0:
        return Eps0Result(False, reason="W'(1) = 0: ell(eps) > 0 for every eps")
    grid = _grid(N, grid)
    n = 0

    def ell(e):
        nonlocal n
        n += 1
        return ell_of_eps(N, e, W, grid)

    lo_s, hi_s = scan
    # a core thinner than a few boundary cells is not resolved and ell flips sign spuriously
    lo_s = max(lo_s, RESOLVE_CELLS * float(grid.h[-1]))
    eps = np.geomspace(hi_s, lo_s, points)
    hi, l_hi = eps[0], ell(eps[0])
    if l_hi <= 0:
        return Eps0Result(False, reason=f"ell({hi:g}) = {l_hi:.4g} is not positive", evaluations=n)
    lo = l_lo = None
    for e in eps[1:]:
        le = ell(e)
        if le < 0:
            lo, l_lo = e, le
            break
        hi, l_hi = e, le
    if lo is None:
        return Eps0Result(False, reason=f"no sign change of ell on [{lo_s:g}, {hi_s:g}]"
                          + (" (expected for N >= 7)" if N >= 7 else ""), evaluations=n)
    while hi - lo > rtol * lo:
        mid = math.sqrt(lo * hi)
        lm = ell(mid)
        if lm < 0:
            lo, l_lo = mid, lm
        else:
            hi, l_hi = mid, lm
    return Eps0Result(True, eps0=math.sqrt(lo * hi), bracket=(float(lo), float(hi)),
                      ell_bracket=(float(l_lo), float(l_hi)), evaluations=n)


def eta0_from_ell(ell, Wt):
    """sqrt(W~'(0) / |ell|) for ell < 0."""
    if ell >= 0:
        raise PreconditionError(f"onset curve needs ell < 0, got {ell:.6g}")
    return math.sqrt(Wt.slope_at_zero / abs(ell))


def eta0_of_eps(N, eps, W, Wt, grid=None):
    return eta0_from_ell(ell_of_eps(N, eps, W, grid), Wt)


def onset_value(ell, eta, Wt):
    return ell + Wt.slope_at_zero / eta ** 2


def classify_from_ell(ell, eta, Wt):
    return ESCAPING_TAG if onset_value(ell, eta, Wt) < 0 else NONESCAPING_TAG


def classify(N, eps, eta, W, Wt, grid=None):
    """Escaping iff ell(eps) + eta^{-2} W~'(0) < 0."""
    if eta <= 0 or eps <= 0:
        raise PreconditionError("eps and eta must be positive")
    return classify_from_ell(ell_of_eps(N, eps, W, grid), eta, Wt)


def escape_onset_eta(N, eps, W, Wt, grid=None, lo=None, hi=None, rtol=1e-3, maxiter=60):
    """Bisection on eta for the smallest eta at which the profile solver escapes."""
    grid = _grid(N, grid)

    def escapes(eta):
        return solve_extended_profile(N, eps, eta, W, Wt, grid).branch == ESCAPING

    lo = lo or 1e-2
    hi = hi or 1e2
    if escapes(lo):
        return lo
    if not escapes(hi):
        raise PreconditionError(f"no escaping branch for eta <= {hi:g}")
    for _ in range(maxiter):
        if hi - lo <= rtol * lo:
            break
        mid = math.sqrt(lo * hi)
        if escapes(mid):
            hi = mid
        else:
            lo = mid
    return math.sqrt(lo * hi)


# ---- T operator ---------------------------------------------------------------


@dataclass
class TSpectrum:
    value: float
    eigenfunction: np.ndarray
    zero_mode_residual: float
    expected: float
    branch: str
    residual: float

    def to_dict(self):
        return {"value": self.value, "zero_mode_residual": self.zero_mode_residual,
                "expected": self.expected, "branch": self.branch, "residual": self.residual}


def t_potential(profile, W, Wt, eps=None, eta=None):
    eps = eps or profile.eps
    eta = eta or profile.eta
    d = profile.deficit if profile.deficit is not None else 1.0 - profile.f
    g2 = profile.g ** 2
    q = -W.d1(d * (2.0 - d) - g2) / eps ** 2
    if Wt is not None and not Wt.is_zero:
        q = q + Wt.d1(g2) / eta ** 2
    return q


def t_apply(grid, q, u):
    """Strong form of T u at the nodes 0..M-1 (u(1) = 0 assumed)."""
    d, e, V, free = radial_operator(grid, q, "regular")
    uf = u[free]
    z = d * uf
    z[:-1] += e * uf[1:]
    z[1:] += e * uf[:-1]
    return z / V, V, free


def t_quadratic_form(profile, W, Wt, p, eps=None, eta=None):
    """Discrete integral of T p * p over the ball divided by |S^{N-1}|."""
    q = t_potential(profile, W, Wt, eps, eta)
    Tp, V, free = t_apply(profile.grid, q, p)
    return float(np.sum(V * Tp * p[free]))


def t_operator_spectrum(profile, W, Wt, eps=None, eta=None):
    """Radial ground state of T on a solved branch.

    ``expected`` is 0 on the escaping branch and ell(eps) + eta^{-2} W~'(0)
    (computed from an independent GL solve) on the non-escaping one.
    """
    grid = profile.grid
    N = grid.N
    eps = eps or profile.eps
    eta = eta or profile.eta
    q = t_potential(profile, W, Wt, eps, eta)
    res = first_eigenpair_radial(N, q, grid)
    g = profile.g
    zres = 0.0
    if np.any(g != 0):
        Tg, V, free = t_apply(grid, q, g)
        zres = math.sqrt(np.sum(V * Tg ** 2) / np.sum(V * g[free] ** 2))
    if profile.branch == ESCAPING:
        expected = 0.0
    else:
        expected = onset_value(ell_of_eps(N, eps, W, grid), eta, Wt) if Wt is not None \
            else ell_of_eps(N, eps, W, grid)
    return TSpectrum(res.value, res.vector, zres, expected, profile.branch, res.residual)


def mode_cross_check(N, q, grid):
    """First eigenvalues of the degree-0 and degree-1 modes for the radial potential q."""
    mu0 = first_eigenpair_radial(N, q, grid, degree=0).value
    mu1 = first_eigenpair_radial(N, q, grid, degree=1).value
    return {"mu0": mu0, "mu1": mu1, "ok": mu1 > mu0}


# ---- phase diagram ----------------------------------------------------------------


@dataclass
class PhaseDiagram:
    N: int
    W: str
    Wt: str
    eps: list
    eta: list
    ell: dict
    tags: dict
    eps0: Eps0Result
    curve: list
    errors: dict = field(default_factory=dict)

    def rows(self):
        for e in self.eps:
            for h in self.eta:
                tag = self.tags.get((e, h), "error")
                yield (e, h, self.ell.get(e, float("nan")), tag)

    def check_invariants(self):
        """List of violations of the expected lattice geometry."""
        bad = []
        for e in self.eps:
            tags = [self.tags.get((e, h)) for h in sorted(self.eta)]
            if ESCAPING_TAG in tags:
                first = tags.index(ESCAPING_TAG)
                if any(t != ESCAPING_TAG for t in tags[first:]):
                    bad.append(f"eps={e:g}: escaping region not an upper set in eta")
            if self.eps0.found and e > self.eps0.bracket[1] and ESCAPING_TAG in tags:
                bad.append(f"eps={e:g} > eps0 has escaping points")
        return bad


def _workers():
    import os

    try:
        return max(1, int(os.environ.get("VORTEXLAB_THREADS", "1")))
    except ValueError:
        return 1


def phase_diagram(N, W, Wt, eps_values, eta_values, grid=None, workers=None):
    """Classify an (eps, eta) lattice and sample the onset curve."""
    eps_values = [float(e) for e in eps_values]
    eta_values = [float(h) for h in eta_values]
    if min(eps_values + eta_values) <= 0:
        raise PreconditionError("eps and eta ranges must be positive")
    grid = _grid(N, grid)

    def one(e):
        try:
            return e, ell_of_eps(N, e, W, grid), None
        except VortexlabError as exc:
            return e, None, str(exc)

    workers = workers or _workers()
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            out = list(ex.map(one, eps_values))
    else:
        out = [one(e) for e in eps_values]
    ell, tags, errors, curve = {}, {}, {}, []
    for e, l, err in out:
        if err is not None:
            errors[e] = err
            continue
        ell[e] = l
        for h in eta_values:
            tags[(e, h)] = classify_from_ell(l, h, Wt)
        if l < 0:
            curve.append((e, eta0_from_ell(l, Wt)))
    eps0 = find_eps0(N, W, grid)
    return PhaseDiagram(N, W.label, Wt.label, eps_values, eta_values, ell, tags, eps0, curve,
                        errors)
