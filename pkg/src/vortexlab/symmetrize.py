"""Radial symmetrizations of gradient fields and of scalar fields.

For a field v on the ball with zonal modes v_k, the gradient symmetrization
keeps the L^2 mass of the gradient on every sphere:

    (v_check')^2 = sum_k [ (v_k')^2 + lambda_k v_k^2 / r^2 ],
    v_check(r) = -int_r^1 v_check'(s) ds,

stored as the coefficient of the degree-0 harmonic (the function itself is
that coefficient divided by sqrt|S^{N-1}|).  The scalar symmetrization of g
is the radial function whose q-th power has the same sphere average as |g|^q.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ConvexityError, PreconditionError
from .fields import (CLAMPED, COMPACT, FREE, RADIAL_GRADIENT, ModeField, SampledSphereField,
                     bump)
from .forms import laplacian_l2
from .numerics import AngularRule, RadialGrid, sphere_area

FLAT_TOL = 1e-13
SLICE_TOL = 1e-8


def _over_r(field, values, d1, k):
    """v_k / r with its limit at the origin (v_1'(0) for degree one, 0 above)."""
    x = field.grid.x
    out = np.zeros_like(values)
    out[1:] = values[1:] / x[1:]
    out[0] = d1[0] if k == 1 else 0.0
    return out


def gradient_slice_density(field):
    """(sum_k v_k'^2 + lambda_k v_k^2/r^2, and its derivative in r) per node."""
    x = field.grid.x
    dens = np.zeros(field.grid.M + 1)
    half_deriv = np.zeros_like(dens)
    for k, lam, v, v1, v2 in zip(field.degrees, field.lam, field.values, field.d1, field.d2):
        dens += v1 * v1
        half_deriv += v1 * v2
        if lam:
            u = _over_r(field, v, v1, k)
            du = np.zeros_like(u)
            du[1:] = (v1[1:] - u[1:]) / x[1:]
            dens += lam * u * u
            half_deriv += lam * u * du
    return dens, half_deriv


def _second_derivative_norm(field):
    """|d/dr (v_k', sqrt(lambda_k) v_k/r)_k|, the one-sided slope of v_check' where it vanishes."""
    x = field.grid.x
    tot = np.zeros(field.grid.M + 1)
    for k, lam, v, v1, v2 in zip(field.degrees, field.lam, field.values, field.d1, field.d2):
        tot += v2 * v2
        if lam:
            u = _over_r(field, v, v1, k)
            du = np.zeros_like(u)
            du[1:] = (v1[1:] - u[1:]) / x[1:]
            tot += lam * du * du
    return np.sqrt(tot)


_GX, _GW = np.polynomial.legendre.leggauss(8)


def _kink_split(h, D, dD):
    """Per interval, the interior minimum of the cubic Hermite interpolant of D (else 1/2)."""
    Da, Db = D[:-1], D[1:]
    pa, pb = h * dD[:-1], h * dD[1:]
    c = np.stack([Da, pa, 3.0 * (Db - Da) - 2.0 * pa - pb, 2.0 * (Da - Db) + pa + pb])

    def H(t):
        return c[0] + t * (c[1] + t * (c[2] + t * c[3]))

    A, B, C = 3.0 * c[3], 2.0 * c[2], c[1]
    disc = B * B - 4.0 * A * C
    root = np.sqrt(np.maximum(disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        big = np.abs(A) > 1e-14 * (np.abs(B) + np.abs(C) + 1e-300)
        t1 = np.where(big, (-B - root) / (2.0 * A), -C / np.where(B != 0, B, 1.0))
        t2 = np.where(big, (-B + root) / (2.0 * A), -1.0)
    split = np.full_like(h, 0.5)
    best = np.full_like(h, np.inf)
    for t in (t1, t2):
        ok = (disc >= 0) & (t > 0.0) & (t < 1.0)
        val = np.where(ok, H(np.clip(t, 0.0, 1.0)), np.inf)
        take = val < best
        split = np.where(take, t, split)
        best = np.where(take, val, best)
    return split


def _quintic(v, v1, v2, h, t):
    """Quintic Hermite interpolant of (v, v', v'') per interval: value and r-derivative at t."""
    va, vb = v[:-1, None], v[1:, None]
    sa, sb = (h * v1[:-1])[:, None], (h * v1[1:])[:, None]
    ca, cb = (h * h * v2[:-1])[:, None], (h * h * v2[1:])[:, None]
    t2, t3, t4, t5 = t * t, t ** 3, t ** 4, t ** 5
    val = (va * (1 - 10 * t3 + 15 * t4 - 6 * t5) + sa * (t - 6 * t3 + 8 * t4 - 3 * t5)
           + ca * (t2 - 3 * t3 + 3 * t4 - t5) / 2 + cb * (t3 - 2 * t4 + t5) / 2
           + sb * (-4 * t3 + 7 * t4 - 3 * t5) + vb * (10 * t3 - 15 * t4 + 6 * t5))
    der = (va * (-30 * t2 + 60 * t3 - 30 * t4) + sa * (1 - 18 * t2 + 32 * t3 - 15 * t4)
           + ca * (2 * t - 9 * t2 + 12 * t3 - 5 * t4) / 2 + cb * (3 * t2 - 8 * t3 + 5 * t4) / 2
           + sb * (-12 * t2 + 28 * t3 - 15 * t4) + vb * (30 * t2 - 60 * t3 + 30 * t4))
    return val, der / h[:, None]


def integrate_gradient_norm(field, D, dD):
    """Samples of -int_r^1 sqrt(sum_k v_k'^2 + lambda_k v_k^2/r^2).

    Every mode is replaced on each interval by its quintic Hermite interpolant
    (from v, v', v''), and the integrand is summed by Gauss-Legendre on two
    pieces split at the interior minimum of D, so that a double zero of D
    (where the square root has a corner) falls on a piece boundary.
    """
    grid = field.grid
    h = grid.h
    split = _kink_split(h, D, dD)
    n = len(_GX)
    lo = np.concatenate([np.zeros((len(h), n)), np.repeat(split[:, None], n, 1)], axis=1)
    half = np.concatenate([np.repeat(split[:, None] / 2.0, n, 1),
                           np.repeat((1.0 - split[:, None]) / 2.0, n, 1)], axis=1)
    t = lo + half * (1.0 + np.concatenate([_GX, _GX]))
    w = half * np.concatenate([_GW, _GW])
    r = grid.x[:-1, None] + h[:, None] * t
    dens = np.zeros_like(t)
    for lam, v, v1, v2 in zip(field.lam, field.values, field.d1, field.d2):
        val, der = _quintic(v, v1, v2, h, t)
        dens += der * der
        if lam:
            dens += lam * (val / r) ** 2
    seg = h * np.sum(w * np.sqrt(dens), axis=1)
    out = np.zeros(grid.M + 1)
    out[:-1] = -np.cumsum(seg[::-1])[::-1]
    return out


def symmetrize_gradient(field):
    """Radial v_check as a degree-0 ModeField (coefficient convention)."""
    dens, half = gradient_slice_density(field)
    d1 = np.sqrt(np.maximum(dens, 0.0))
    top = float(np.max(d1, initial=0.0))
    flat = d1 <= FLAT_TOL * max(top, 1e-300)
    d2 = np.where(flat, _second_derivative_norm(field), half / np.where(flat, 1.0, d1))
    values = integrate_gradient_norm(field, dens, 2.0 * half)
    if field.boundary == RADIAL_GRADIENT:
        bnd, c = RADIAL_GRADIENT, float(d1[-1])
    elif field.boundary in (CLAMPED, COMPACT):
        bnd, c = CLAMPED, 0.0
    else:
        bnd, c = FREE, 0.0
    return ModeField(field.grid, (0,), values[None, :], d1[None, :], d2[None, :], bnd, c,
                     {"symmetrized": True})


def as_function(radial_field):
    """Function values and radial derivative of a degree-0 field."""
    if radial_field.degrees != (0,):
        raise PreconditionError("expected a purely radial field")
    s = 1.0 / math.sqrt(sphere_area(radial_field.N))
    return radial_field.values[0] * s, radial_field.d1[0] * s


# ---- property checks for the gradient symmetrization -------------------------------


def _rule_for(field, rule):
    rule = rule or AngularRule(field.N, order=max(24, 2 * max(field.degrees) + 4),
                               kmax=max(max(field.degrees), 1))
    return rule


def slice_gradient_check(field, rule=None):
    """Max over nodes r > 0 of |int_S |grad v_check|^2 - int_S |grad v|^2| (relative to the peak)."""
    rule = _rule_for(field, rule)
    vc = symmetrize_gradient(field)
    lhs = rule.sphere_integral(vc.to_samples(rule).grad_sq())
    rhs = rule.sphere_integral(field.to_samples(rule).grad_sq())
    scale = max(float(np.max(np.abs(rhs))), 1e-300)
    err = float(np.max(np.abs(lhs[1:] - rhs[1:]))) / scale
    return {"max_error": err, "ok": err <= SLICE_TOL, "lhs": lhs, "rhs": rhs}


def _ball(grid, slice_values):
    return float(grid.integrate(slice_values, grid.N - 1))


def check_convex_decrease(field, G, rule=None, sweep=None):
    """(int G(r, |grad v_check|^2), int G(r, |grad v|^2)); G(r, s) must be convex in s."""
    rule = _rule_for(field, rule)
    x = field.grid.x
    s_test = np.linspace(0.0, 1.0, 64) if sweep is None else np.asarray(sweep)
    for r in (0.1, 0.5, 1.0):
        vals = np.array([G(r, s) for s in s_test])
        second = vals[2:] - 2 * vals[1:-1] + vals[:-2]
        if np.min(second) < -1e-12 * (1.0 + np.max(np.abs(vals))):
            i = int(np.argmin(second)) + 1
            raise ConvexityError(f"G(r={r}, .) is not convex near s={s_test[i]:.3g}",
                                 s_test[i], float(second[i - 1]))
    vc = symmetrize_gradient(field)
    gs_c = vc.to_samples(rule).grad_sq()
    gs = field.to_samples(rule).grad_sq()
    R = x[:, None]
    lhs = _ball(field.grid, rule.sphere_integral(G(R, gs_c)))
    rhs = _ball(field.grid, rule.sphere_integral(G(R, gs)))
    return lhs, rhs


def check_lp_decrease(field, p, rule=None):
    """(||grad v_check||_p^p, ||grad v||_p^p) for p >= 2."""
    if p < 2:
        raise PreconditionError("the gradient L^p decrease needs p >= 2")
    return check_convex_decrease(field, lambda r, s: np.maximum(s, 0.0) ** (p / 2.0), rule)


def check_lp_increase_low(field, p, rule=None):
    """Per-node slice masses int_S |v_check|^p and int_S |v|^p, 1 <= p <= 2."""
    if not 1.0 <= p <= 2.0:
        raise PreconditionError("slicewise increase is stated for 1 <= p <= 2")
    if field.boundary not in (CLAMPED, COMPACT):
        raise PreconditionError("field must vanish on the boundary sphere")
    rule = _rule_for(field, rule)
    vc = symmetrize_gradient(field)
    S = sphere_area(field.N)
    vfun, _ = as_function(vc)
    lhs = S * np.abs(vfun) ** p
    rhs = rule.sphere_integral(np.abs(field.to_samples(rule).values) ** p)
    margin = lhs - rhs
    return {"lhs": lhs, "rhs": rhs, "min_margin": float(np.min(margin)),
            "ok": bool(np.min(margin) >= -SLICE_TOL)}


def s_coefficients(N, degrees):
    """s_k for each degree (None where the estimate gives no gap)."""
    out = []
    for k in degrees:
        lam = k * (k + N - 2)
        if k == 0:
            out.append(0.0)
        elif N >= 5:
            out.append(lam + (N - 4) ** 2 / 4.0 - 4.0)
        elif k == 1:
            out.append(None)
        else:
            out.append((math.sqrt(5.0) - 2.0) * (4 * lam + (N - 4) ** 2) - 4.0)
    return out


def check_delta_decrease(field, tol=1e-8):
    """int (Delta v_check)^2 against int (Delta v)^2 with the mode-wise lower bound on the gap."""
    N = field.N
    if field.boundary not in (CLAMPED, COMPACT, RADIAL_GRADIENT):
        raise PreconditionError(f"boundary class {field.boundary!r} not supported")
    if N <= 4 and 1 in field.degrees:
        v1 = field.values[field.degrees.index(1)]
        if np.any(v1 != 0):
            raise PreconditionError(
                f"N={N}: the inequality needs the degree-one part of v to vanish")
    vc = symmetrize_gradient(field)
    lhs = laplacian_l2(vc)
    rhs = laplacian_l2(field)
    gr = field.grid
    terms = []
    for k, lam, s, v in zip(field.degrees, field.lam, s_coefficients(N, field.degrees),
                            field.values):
        if k == 0 or s is None:
            terms.append(0.0)
            continue
        terms.append(lam * s * float(gr.integrate(v * v, N - 5)))
    bound = float(sum(terms))
    gap = rhs - lhs
    scale = abs(lhs) + abs(rhs) + 1.0
    return {"lhs": lhs, "rhs": rhs, "gap": gap, "bound": bound, "per_mode": terms,
            "ok": bool(gap >= -tol * scale and gap >= bound - tol * scale)}


def gradient_lipschitz(a, b):
    """(||grad a_check - grad b_check||_2, ||grad a - grad b||_2) over the ball."""
    if not a.grid.same_as(b.grid):
        raise PreconditionError("fields on different grids")
    ca, cb = symmetrize_gradient(a), symmetrize_gradient(b)
    gr, N = a.grid, a.N
    lhs = gr.integrate((ca.d1[0] - cb.d1[0]) ** 2, N - 1)
    dens, _ = gradient_slice_density(a - b)
    rhs = gr.integrate(dens, N - 1)
    return math.sqrt(max(lhs, 0.0)), math.sqrt(max(rhs, 0.0))


def idempotence_error(field):
    once = symmetrize_gradient(field)
    twice = symmetrize_gradient(once)
    scale = max(float(np.max(np.abs(once.values))), float(np.max(np.abs(once.d1))), 1e-300)
    return max(float(np.max(np.abs(once.values - twice.values))),
               float(np.max(np.abs(once.d1 - twice.d1)))) / scale


# ---- scalar symmetrization ---------------------------------------------------------


@dataclass
class ScalarSymmetrization:
    """Radial g_check >= 0 (function values) with its radial derivative."""

    grid: RadialGrid
    q: float
    values: np.ndarray
    d1: np.ndarray = None

    def to_samples(self, rule):
        ones = np.ones(len(rule.t))
        d1 = None if self.d1 is None else self.d1[:, None] * ones
        return SampledSphereField(self.grid, rule, self.values[:, None] * ones, d1,
                                  np.zeros((self.grid.M + 1, len(rule.t))))

    def as_mode_field(self, boundary=FREE):
        s = math.sqrt(sphere_area(self.grid.N))
        vals = (s * self.values)[None, :]
        if self.d1 is None:
            return ModeField.from_values(self.grid, (0,), vals, boundary)
        d2 = self.grid.derivatives(self.d1)[0]
        return ModeField(self.grid, (0,), vals, (s * self.d1)[None, :], (s * d2)[None, :],
                         boundary)


def symmetrize_scalar(g, q=2.0):
    """g_check(r) = (sphere mean of |g(r .)|^q)^{1/q}."""
    if not q >= 1.0 or not math.isfinite(q):
        raise ConfigError("q must be a finite number >= 1")
    rule = g.rule
    S = rule.qw.sum()
    a = np.abs(g.values)
    mean = rule.sphere_integral(a ** q) / S
    val = mean ** (1.0 / q)
    d1 = None
    if g.dr is not None:
        if q == 1.0:
            w = np.sign(g.values)
        else:
            w = np.sign(g.values) * a ** (q - 1.0)
        dmean = rule.sphere_integral(w * g.dr) / S  # (1/q) d/dr of the mean of |g|^q
        pos = val > 0
        d1 = np.where(pos, dmean * np.where(pos, val, 1.0) ** (1.0 - q), 0.0)
    return ScalarSymmetrization(g.grid, float(q), val, d1)


def scalar_slice_check(g, q=2.0):
    """Max relative mismatch of slice L^q masses."""
    gc = symmetrize_scalar(g, q)
    rule = g.rule
    lhs = rule.qw.sum() * gc.values ** q
    rhs = rule.sphere_integral(np.abs(g.values) ** q)
    scale = max(float(np.max(np.abs(rhs))), 1e-300)
    return float(np.max(np.abs(lhs - rhs))) / scale


def scalar_lipschitz(g, h, q=2.0):
    """(||g_check - h_check||_q, ||g - h||_q) over the ball."""
    gc, hc = symmetrize_scalar(g, q), symmetrize_scalar(h, q)
    S = g.rule.qw.sum()
    gr = g.grid
    lhs = _ball(gr, S * np.abs(gc.values - hc.values) ** q)
    rhs = _ball(gr, g.rule.sphere_integral(np.abs(g.values - h.values) ** q))
    return lhs ** (1.0 / q), rhs ** (1.0 / q)


def scalar_sobolev_check(g, q=2.0):
    """(int |grad g_check|^q, int |grad g|^q)."""
    if g.dr is None or g.dt is None:
        raise PreconditionError("scalar field needs derivative samples")
    gc = symmetrize_scalar(g, q)
    S = g.rule.qw.sum()
    gr = g.grid
    lhs = _ball(gr, S * np.abs(gc.d1) ** q)
    rhs = _ball(gr, g.rule.sphere_integral(g.grad_sq() ** (q / 2.0)))
    return lhs, rhs


def scalar_idempotence_error(g, q=2.0):
    once = symmetrize_scalar(g, q)
    twice = symmetrize_scalar(once.to_samples(g.rule), q)
    scale = max(float(np.max(np.abs(once.values))), 1e-300)
    return float(np.max(np.abs(once.values - twice.values))) / scale


# ---- low-dimensional failure of the Delta decrease ---------------------------------


def log_bump_field(N, grid, center, width, amplitude=1.0):
    """Degree-one field a(r) phi_1 with a = r^{-(N-4)/2} B(ln r), B a bump in ln r."""
    x = grid.x
    al = -(N - 4) / 2.0
    r = x[1:]
    s = np.log(r)
    B, B1, B2 = bump(s, center - width / 2.0, center + width / 2.0)
    # d/dr of B(ln r): B1 / r ; second: (B2 - B1) / r^2
    b, b1, b2 = B, B1 / r, (B2 - B1) / r ** 2
    a = np.zeros_like(x)
    a1 = np.zeros_like(x)
    a2 = np.zeros_like(x)
    a[1:] = amplitude * r ** al * b
    a1[1:] = amplitude * (al * r ** (al - 1) * b + r ** al * b1)
    a2[1:] = amplitude * (al * (al - 1) * r ** (al - 2) * b + 2 * al * r ** (al - 1) * b1
                          + r ** al * b2)
    return ModeField(grid, (1,), a[None, :], a1[None, :], a2[None, :], boundary=COMPACT)


def search_delta_increase(N=3, seed=0, trials=200, points_per_unit=30.0, s_range=(-60.0, -2.0)):
    """Random search for a degree-one field with int (Delta v_check)^2 > int (Delta v)^2.

    Fields are bumps in ln r (random centre and width) so that they can spread
    over many scales near the origin.  Returns the first success with its seed.
    """
    rng = np.random.default_rng(seed)
    lo, hi = s_range
    r_min = math.exp(lo - 2.0)
    grid = RadialGrid(N, int(points_per_unit * (2.0 - lo)), "geometric", r_min=r_min)
    for t in range(1, trials + 1):
        width = rng.uniform(2.0, hi - lo)
        center = rng.uniform(lo + width / 2.0, hi - width / 2.0)
        v = log_bump_field(N, grid, center, width)
        vc = symmetrize_gradient(v)
        a, b = laplacian_l2(vc), laplacian_l2(v)
        if a > b:
            return {"found": True, "seed": seed, "trial": t, "center": center, "width": width,
                    "delta_check": a, "delta": b, "ratio": a / b, "field": v}
    return {"found": False, "seed": seed, "trial": trials}
