"""Radial vortex profiles: Ginzburg-Landau, extended (f, g) and unit-constrained.

All three are computed by minimizing one discrete radial energy (lumped P1 on
``grid.x``) with a damped Newton iteration.  The in-plane amplitude is carried
internally as the deficit d = 1 - f so that 1 - f^2 = d(2 - d) keeps full
relative precision when the core radius is tiny.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import ConvergenceError, PreconditionError
from .numerics import RadialGrid, sphere_area

ESCAPE_THRESHOLD = 1e-4
STALL_TOL = 1e-7

GL = "gl"
ESCAPING = "extended-escaping"
NONESCAPING = "extended-nonescaping"
MM = "mm-escaping"
EQUATOR = "equator"


@dataclass
class RadialProfile:
    grid: RadialGrid
    f: np.ndarray
    g: np.ndarray
    branch: str
    eps: float = None
    eta: float = None
    deficit: np.ndarray = None
    residual_f: np.ndarray = None
    residual_g: np.ndarray = None
    energy: float = None
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.grid.N

    @property
    def r(self):
        return self.grid.x

    @property
    def escaping(self):
        return self.branch in (ESCAPING, MM)

    def max_residual(self, skip=2):
        out = 0.0
        for res in (self.residual_f, self.residual_g):
            if res is not None:
                out = max(out, float(np.max(np.abs(res[skip:-1]), initial=0.0)))
        return out

    def to_rows(self):
        rf = self.residual_f if self.residual_f is not None else np.zeros_like(self.f)
        rg = self.residual_g if self.residual_g is not None else np.zeros_like(self.f)
        return [(float(a), float(b), float(c), float(d), float(e))
                for a, b, c, d, e in zip(self.grid.x, self.f, self.g, rf, rg)]


# ---- the discrete radial energy ------------------------------------------------


class RadialEnergy:
    """E(f, g) per unit sphere area, with f = 1 - d.

    E = 1/2 sum stiff (dd^2 + dg^2) + 1/2 sum P f^2
        + sum V W(1 - f^2 - g^2)/(2 eps^2) + sum V W~(g^2)/(2 eta^2)
    """

    def __init__(self, grid, eps, W, eta=None, Wt=None):
        self.grid, self.W = grid, W
        self.eps = None if eps is None else float(eps)
        self.eta, self.Wt = eta, Wt
        # eps = None: unit-length profiles, the W term vanishes identically
        self.ie2 = 0.0 if self.eps is None else 1.0 / self.eps ** 2
        self.ih2 = 0.0 if (Wt is None or Wt.is_zero or eta is None) else 1.0 / float(eta) ** 2
        self.P = grid.angular.copy()
        self.P[0] = 0.0  # f(0) = 0 is always imposed for vortex amplitudes

    def parts(self, d, g):
        gr = self.grid
        f = 1.0 - d
        t = d * (2.0 - d) - g * g
        dirichlet = 0.5 * np.sum(gr.stiff * (np.diff(d) ** 2 + np.diff(g) ** 2))
        dirichlet += 0.5 * np.sum(self.P * f * f)
        wterm = 0.5 * self.ie2 * np.sum(gr.mass * self.W.value(t))
        wtterm = 0.5 * self.ih2 * np.sum(gr.mass * self.Wt.value(g * g)) if self.ih2 else 0.0
        return dirichlet, wterm, wtterm

    def value(self, d, g):
        return sum(self.parts(d, g))

    def gradient(self, d, g):
        """(dE/dd, dE/dg, scale_d, scale_g) on all nodes."""
        gr = self.grid
        f = 1.0 - d
        t = d * (2.0 - d) - g * g
        s = gr.stiff
        V = gr.mass
        w1 = self.W.d1(t) * self.ie2
        dd = np.diff(d)
        dgv = np.diff(g)
        Kd = np.zeros_like(d)
        Kd[:-1] -= s * dd
        Kd[1:] += s * dd
        Kg = np.zeros_like(g)
        Kg[:-1] -= s * dgv
        Kg[1:] += s * dgv
        sd = np.zeros_like(d)
        sd[:-1] += np.abs(s * dd)
        sd[1:] += np.abs(s * dd)
        sg = np.zeros_like(g)
        sg[:-1] += np.abs(s * dgv)
        sg[1:] += np.abs(s * dgv)
        grad_d = Kd - self.P * f + V * w1 * f
        grad_g = Kg - V * w1 * g
        scale_d = sd + np.abs(self.P * f) + np.abs(V * w1 * f)
        scale_g = sg + np.abs(V * w1 * g)
        if self.ih2:
            wt1 = self.Wt.d1(g * g) * self.ih2
            grad_g = grad_g + V * wt1 * g
            scale_g = scale_g + np.abs(V * wt1 * g)
        return grad_d, grad_g, scale_d, scale_g

    def hessian_blocks(self, d, g):
        """Diagonal blocks (hdd, hdg, hgg) and the off-diagonal stiffness coupling."""
        gr = self.grid
        f = 1.0 - d
        t = d * (2.0 - d) - g * g
        V = gr.mass
        w1 = self.W.d1(t) * self.ie2
        w2 = self.W.d2(t) * self.ie2
        kd, ke = gr.stiffness_tridiag()
        hdd = kd + self.P + V * (2.0 * w2 * f * f - w1)
        hdg = -2.0 * V * w2 * f * g
        hgg = kd + V * (2.0 * w2 * g * g - w1)
        if self.ih2:
            hgg = hgg + V * self.ih2 * (self.Wt.d1(g * g) + 2.0 * self.Wt.d2(g * g) * g * g)
        return hdd, hdg, hgg, ke


def _banded_upper(diag, off1, off2=None):
    u = 1 if off2 is None else 2
    n = len(diag)
    ab = np.zeros((u + 1, n))
    ab[u] = diag
    ab[u - 1, 1:] = off1
    if off2 is not None:
        ab[0, 2:] = off2
    return ab


def _newton_solve(ab, rhs):
    """Solve a symmetric banded system, adding a Marquardt shift until it is definite."""
    diag = ab[-1].copy()
    tau = 0.0
    for _ in range(40):
        abt = ab.copy()
        abt[-1] = diag * (1.0 + tau)
        try:
            return sla.solveh_banded(abt, rhs), tau
        except sla.LinAlgError:
            tau = 1e-8 if tau == 0.0 else tau * 10.0
    raise ConvergenceError("could not regularize the Newton system")


def _relax(energy, d, g, with_g, tol=1e-11, maxiter=300, project_g=True):
    """Damped Newton relaxation of the discrete Euler-Lagrange equations.

    Free unknowns: d_1..d_{M-1} and (when ``with_g``) g_0..g_{M-1}.
    Returns (d, g, iterations, converged).
    """
    M = energy.grid.M
    d, g = d.copy(), g.copy()
    fd = np.arange(1, M)
    fg = np.arange(0, M)

    def residual(d, g):
        gd, gg, sd, sg = energy.gradient(d, g)
        rd = np.abs(gd[fd]) / (sd[fd] + 1e-300)
        out = float(np.max(np.where(np.abs(gd[fd]) > 0, rd, 0.0)))
        if with_g:
            rg = np.abs(gg[fg]) / (sg[fg] + np.max(sg) * 1e-14 + 1e-300)
            out = max(out, float(np.max(rg)))
        return out, gd, gg

    E = energy.value(d, g)
    res, gd, gg = residual(d, g)
    best, stalled = res, 0
    for it in range(1, maxiter + 1):
        if res <= tol:
            return d, g, it - 1, True
        if res < best * 0.5:
            best, stalled = res, 0
        else:
            stalled += 1
        if stalled >= 3 and res <= STALL_TOL:
            # quadratic convergence has hit the rounding floor
            return d, g, it - 1, True
        hdd, hdg, hgg, ke = energy.hessian_blocks(d, g)
        if with_g:
            # interleaved unknowns: g_0, d_1, g_1, ..., d_{M-1}, g_{M-1}
            n = 2 * M - 1
            diag = np.empty(n)
            diag[0] = hgg[0]
            diag[1::2] = hdd[1:M]
            diag[2::2] = hgg[1:M]
            off1 = np.zeros(n - 1)
            off1[1::2] = hdg[1:M]
            off2 = np.zeros(n - 2)
            off2[0] = ke[0]
            off2[1::2] = ke[1:M - 1]  # d_i - d_{i+1}
            off2[2::2] = ke[1:M - 1]  # g_i - g_{i+1}
            rhs = np.empty(n)
            rhs[0] = -gg[0]
            rhs[1::2] = -gd[1:M]
            rhs[2::2] = -gg[1:M]
            step, _ = _newton_solve(_banded_upper(diag, off1, off2), rhs)
            sd = step[1::2]
            sg = np.concatenate([[step[0]], step[2::2]])
        else:
            step, _ = _newton_solve(_banded_upper(hdd[1:M], ke[1:M - 1]), -gd[1:M])
            sd, sg = step, None
        slope = -float(np.dot(gd[1:M], sd)) - (float(np.dot(gg[:M], sg)) if with_g else 0.0)
        alpha = 1.0
        for _ in range(60):
            dn = d.copy()
            dn[1:M] += alpha * sd
            gn = g.copy()
            if with_g:
                gn[:M] += alpha * sg
                if project_g:
                    gn = np.maximum(gn, 0.0)
            En = energy.value(dn, gn)
            resn, gdn, ggn = residual(dn, gn)
            if En <= E - 1e-4 * alpha * abs(slope) or (
                    En <= E + 1e-13 * (abs(E) + 1.0) and resn < res):
                break
            alpha *= 0.5
        else:
            return d, g, it, False
        d, g, E, res, gd, gg = dn, gn, En, resn, gdn, ggn
    return d, g, maxiter, res <= tol


def _strong_residuals(energy, d, g):
    gd, gg, _, _ = energy.gradient(d, g)
    V = energy.grid.mass
    rf = np.zeros_like(d)
    rg = np.zeros_like(d)
    rf[1:-1] = -gd[1:-1] / V[1:-1]
    rg[:-1] = gg[:-1] / V[:-1]
    return rf, rg


def _deficit_seed(grid, eps, W):
    """Initial deficit 1 - f: the polynomial seed f = r(2 - r), or a core-scaled seed
    f ~ r / sqrt(r^2 + c eps^2) when the core is much smaller than the ball."""
    r = grid.x
    if eps >= 0.05 or W.slope_at_one <= 0:
        return (1.0 - r) ** 2
    c = (grid.N - 1) / W.slope_at_one
    with np.errstate(divide="ignore"):
        u = c * eps * eps / r ** 2
        d = -np.expm1(-0.5 * np.log1p(u))
    d[0] = 1.0
    d[-1] = 0.0
    return d


def solve_gl_profile(N, eps, W, grid, tol=1e-11, maxiter=300):
    """Ginzburg-Landau vortex profile f_eps on ``grid``."""
    if grid.N != N:
        raise PreconditionError("grid dimension mismatch")
    if eps <= 0:
        raise PreconditionError("eps must be positive")
    energy = RadialEnergy(grid, eps, W)
    d0 = _deficit_seed(grid, eps, W)
    g0 = np.zeros_like(d0)
    d, g, its, ok = _relax(energy, d0, g0, with_g=False, tol=tol, maxiter=maxiter)
    if not ok:
        raise ConvergenceError(f"GL relaxation did not converge (N={N}, eps={eps})")
    rf, _ = _strong_residuals(energy, d, g)
    f = 1.0 - d
    prof = RadialProfile(grid, f, g, GL, eps=eps, deficit=d, residual_f=rf,
                         residual_g=None, energy=sphere_area(N) * energy.value(d, g), iterations=its,
                         info={"W": W})
    _check_vortex(prof)
    return prof


def _check_vortex(prof, tol=1e-10):
    f = prof.f
    if np.min(f) < -tol or np.max(f) > 1.0 + tol:
        i = int(np.argmin(f) if np.min(f) < -tol else np.argmax(f))
        raise ConvergenceError(f"profile leaves [0,1] at node {i} (r={prof.grid.x[i]:.3g})")
    df = np.diff(f)
    if np.min(df) < -tol:
        i = int(np.argmin(df))
        raise ConvergenceError(f"profile not increasing at node {i} (r={prof.grid.x[i]:.3g})")


def solve_extended_profile(N, eps, eta, W, Wt, grid, tol=1e-11, maxiter=300):
    """Critical point of the extended radial energy; escaping when it exists.

    The escaping seed (f_eps * sqrt(1 - g0^2), g0 = 0.3 (1 - r^2)) is relaxed
    with g kept non-negative; the run counts as escaping when max g exceeds
    ``ESCAPE_THRESHOLD``.  Otherwise the non-escaping pair (f_eps, 0) is
    returned.
    """
    if eta <= 0:
        raise PreconditionError("eta must be positive")
    gl = solve_gl_profile(N, eps, W, grid, tol=tol, maxiter=maxiter)
    energy = RadialEnergy(grid, eps, W, eta, Wt)
    info = {"escape_attempted": False, "W": W, "Wt": Wt}
    if 2 <= N <= 6:
        info["escape_attempted"] = True
        r = grid.x
        g0 = 0.3 * (1.0 - r ** 2)
        f0 = gl.f * np.sqrt(1.0 - g0 ** 2)
        d0 = 1.0 - f0
        d0[0], d0[-1] = 1.0, 0.0
        d, g, its, ok = _relax(energy, d0, g0, with_g=True, tol=tol, maxiter=maxiter)
        info["escape_converged"] = ok
        info["max_g"] = float(np.max(g)) if ok else None
        if ok and np.max(g) > ESCAPE_THRESHOLD:
            rf, rg = _strong_residuals(energy, d, g)
            prof = RadialProfile(grid, 1.0 - d, g, ESCAPING, eps=eps, eta=eta, deficit=d,
                                 residual_f=rf, residual_g=rg,
                                 energy=sphere_area(N) * energy.value(d, g), iterations=its,
                                 info=info)
            _check_vortex(prof)
            return prof
    d, g = gl.deficit, np.zeros_like(gl.f)
    rf, rg = _strong_residuals(energy, d, g)
    return RadialProfile(grid, gl.f, g, NONESCAPING, eps=eps, eta=eta, deficit=d,
                         residual_f=rf, residual_g=rg,
                         energy=sphere_area(N) * energy.value(d, g), iterations=gl.iterations,
                         info=info)


def radial_energy(prof, W, Wt=None):
    """(dirichlet, W-term, W~-term) of a profile, integrated over the ball."""
    e = RadialEnergy(prof.grid, prof.eps, W, prof.eta, Wt)
    d = prof.deficit if prof.deficit is not None else 1.0 - prof.f
    return tuple(sphere_area(prof.N) * v for v in e.parts(d, prof.g))


# ---- unit-constrained profile ---------------------------------------------------


class AngleEnergy:
    """Constrained radial energy in the angle psi, (f, g) = (sin psi, cos psi).

    The Dirichlet part is the P1 energy of (f, g), which for unit vectors at the
    nodes equals sum stiff * 2 (1 - cos(psi_{i+1} - psi_i)).
    """

    def __init__(self, grid, eta, Wt):
        self.grid, self.eta, self.Wt = grid, float(eta), Wt
        self.ih2 = 0.0 if Wt.is_zero else 1.0 / self.eta ** 2
        P = grid.angular.copy()
        if grid.N == 2:
            P[0] = 0.0  # psi(0) is pinned to 0 below
        self.P = P

    def value(self, psi):
        gr = self.grid
        dp = np.diff(psi)
        e = np.sum(gr.stiff * 2.0 * np.sin(dp / 2.0) ** 2 * 2.0) * 0.5
        e += 0.5 * np.sum(self.P * np.sin(psi) ** 2)
        if self.ih2:
            e += 0.5 * self.ih2 * np.sum(gr.mass * self.Wt.value(np.cos(psi) ** 2))
        return e

    def gradient_hessian(self, psi):
        gr = self.grid
        s = gr.stiff
        dp = np.diff(psi)
        flux = s * np.sin(dp)
        grad = np.zeros_like(psi)
        grad[:-1] -= flux
        grad[1:] += flux
        grad += 0.5 * self.P * np.sin(2 * psi)
        kc = s * np.cos(dp)
        hd = np.zeros_like(psi)
        hd[:-1] += kc
        hd[1:] += kc
        hd += self.P * np.cos(2 * psi)
        scale = np.zeros_like(psi)
        scale[:-1] += np.abs(flux)
        scale[1:] += np.abs(flux)
        scale += np.abs(0.5 * self.P * np.sin(2 * psi))
        if self.ih2:
            c2 = np.cos(psi) ** 2
            w1 = self.Wt.d1(c2)
            w2 = self.Wt.d2(c2)
            s2 = np.sin(2 * psi)
            # d/dpsi W~(cos^2 psi)/2 = -W~' sin(2psi)/2
            grad += 0.5 * self.ih2 * gr.mass * (-w1 * s2)
            scale += np.abs(0.5 * self.ih2 * gr.mass * w1 * s2)
            hd += 0.5 * self.ih2 * gr.mass * (w2 * s2 ** 2 - 2.0 * w1 * np.cos(2 * psi))
        return grad, hd, -kc, scale


def solve_mm_profile(N, eta, Wt, grid, tol=1e-11, maxiter=300):
    """Escaping profile of the unit-constrained model, or the equator map."""
    if grid.N != N:
        raise PreconditionError("grid dimension mismatch")
    energy = AngleEnergy(grid, eta, Wt)
    M = grid.M
    free = np.arange(1 if N == 2 else 0, M)
    psi = 0.5 * math.pi * grid.x
    E = energy.value(psi)
    ok = False
    its = 0
    for its in range(1, maxiter + 1):
        grad, hd, ho, scale = energy.gradient_hessian(psi)
        res = float(np.max(np.abs(grad[free]) / (scale[free] + np.max(scale) * 1e-14)))
        if res <= tol:
            ok = True
            break
        step, _ = _newton_solve(_banded_upper(hd[free], ho[free[:-1]]), -grad[free])
        slope = -float(grad[free] @ step)
        alpha = 1.0
        for _ in range(60):
            pn = psi.copy()
            pn[free] += alpha * step
            En = energy.value(pn)
            gn = energy.gradient_hessian(pn)
            resn = float(np.max(np.abs(gn[0][free]) / (gn[3][free] + np.max(gn[3]) * 1e-14)))
            if En <= E - 1e-4 * alpha * abs(slope) or (En <= E + 1e-13 * (abs(E) + 1) and resn < res):
                break
            alpha *= 0.5
        else:
            break
        psi, E = pn, En
    f, g = np.sin(psi), np.cos(psi)
    if ok and 2 <= N <= 6 and np.max(g) > ESCAPE_THRESHOLD:
        prof = RadialProfile(grid, f, g, MM, eta=eta, energy=sphere_area(N) * E, iterations=its,
                             info={"psi": psi})
        prof.info["Wt"] = Wt
        return prof
    if N < 3:
        raise ConvergenceError("unit-constrained profile did not converge to an escaping branch")
    warnings.warn("escaping profile not found; returning the equator map", RuntimeWarning)
    return equator_profile(N, eta, Wt, grid)


def equator_profile(N, eta, Wt, grid):
    f = np.ones(grid.M + 1)
    g = np.zeros(grid.M + 1)
    psi = np.full(grid.M + 1, 0.5 * math.pi)
    E = AngleEnergy(grid, eta, Wt).value(psi)
    return RadialProfile(grid, f, g, EQUATOR, eta=eta, energy=sphere_area(N) * E,
                         info={"psi": psi, "Wt": Wt})


def verify_lagrange_multiplier(prof, Wt=None, rmin=0.02, tol=1e-5):
    """Check the constrained profile equations with the reconstructed multiplier.

    lambda = f'^2 + (N-1) f^2/r^2 + g'^2 + eta^{-2} W~'(g^2) g^2, then
    -f'' - (N-1)/r f' + (N-1)/r^2 f = lambda f  and
    -g'' - (N-1)/r g' + eta^{-2} W~'(g^2) g = lambda g
    are evaluated with fourth-order spline derivatives on nodes r >= rmin.
    """
    from scipy.interpolate import CubicSpline

    if prof.branch not in (MM, EQUATOR):
        raise PreconditionError("multiplier check needs a unit-constrained profile")
    Wt = Wt or prof.info.get("Wt")
    N, x = prof.N, prof.grid.x
    ih2 = 0.0 if (Wt is None or Wt.is_zero) else 1.0 / prof.eta ** 2
    if prof.branch == EQUATOR:
        f1 = f2 = g1 = g2 = np.zeros_like(x)
    else:
        sf = CubicSpline(x, prof.f)
        sg = CubicSpline(x, prof.g, bc_type=((1, 0.0), "not-a-knot"))
        f1, f2, g1, g2 = sf(x, 1), sf(x, 2), sg(x, 1), sg(x, 2)
    f, g = prof.f, prof.g
    sel = (x >= rmin) & (x < 1.0)
    xr = x[sel]
    wt1 = Wt.d1(g[sel] ** 2) * ih2 if ih2 else 0.0
    lam = f1[sel] ** 2 + (N - 1) * f[sel] ** 2 / xr ** 2 + g1[sel] ** 2 + wt1 * g[sel] ** 2
    r5 = -f2[sel] - (N - 1) / xr * f1[sel] + (N - 1) / xr ** 2 * f[sel] - lam * f[sel]
    r6 = -g2[sel] - (N - 1) / xr * g1[sel] + wt1 * g[sel] - lam * g[sel]
    # residuals relative to the size of the terms in each equation
    s5 = np.abs(f2[sel]) + np.abs((N - 1) / xr * f1[sel]) + (N - 1) / xr ** 2 * np.abs(f[sel]) + \
        np.abs(lam * f[sel])
    s6 = np.abs(g2[sel]) + np.abs((N - 1) / xr * g1[sel]) + np.abs(lam * g[sel]) + 1.0
    out = {
        "r": xr, "lambda": lam, "res5": r5, "res6": r6,
        "max_res5": float(np.max(np.abs(r5) / s5)), "max_res6": float(np.max(np.abs(r6) / s6)),
    }
    out["max_residual"] = max(out["max_res5"], out["max_res6"])
    out["ok"] = out["max_residual"] <= tol
    return out


def h1_distance(a, b):
    """H^1-type distance between two (f, g) profiles on the same grid."""
    if not a.grid.same_as(b.grid):
        raise PreconditionError("profiles live on different grids")
    gr = a.grid
    df, dg = a.f - b.f, a.g - b.g
    P = gr.angular.copy()
    P[0] = 0.0
    val = np.sum(gr.stiff * (np.diff(df) ** 2 + np.diff(dg) ** 2)) + np.sum(P * df ** 2) + \
        np.sum(gr.mass * (df ** 2 + dg ** 2))
    return math.sqrt(sphere_area(gr.N) * val)


def mm_limit_check(N, eta, W, Wt, eps_sequence, grid, threshold=0.5):
    """Distances from extended escaping profiles to the constrained profile as eps decreases."""
    mm = solve_mm_profile(N, eta, Wt, grid)
    dists = []
    for eps in eps_sequence:
        prof = solve_extended_profile(N, eps, eta, W, Wt, grid)
        if prof.branch != ESCAPING:
            raise PreconditionError(f"eps={eps} is outside the escaping region")
        dists.append(h1_distance(prof, mm))
    decreasing = all(b <= a * (1 + 1e-12) for a, b in zip(dists, dists[1:]))
    return {"eps": list(map(float, eps_sequence)), "distances": dists, "decreasing": decreasing,
            "below_threshold": dists[-1] <= threshold, "mm_profile": mm}
