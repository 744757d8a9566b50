"""Second variation of the extended energy along gradient fields, and Hardy-type bounds.

For a field v = sum_k v_k phi_k the form

    F[grad v] = int (Delta v)^2 - eps^{-2} int W'(1 - f^2 - g^2) |grad v|^2

is split per degree into I_k (the (v_k'')^2 part tested against the profile
potential), II_k (the angular part, weight lambda_k) and III_k (the remaining
Hardy-type terms).  Integrals over the ball reduce to radial integrals of the
mode coefficients because the zonal harmonics are orthonormal.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import PreconditionError
from .fields import CLAMPED, COMPACT, RADIAL_GRADIENT, ModeField
from .numerics import AngularRule, RadialGrid, sphere_area
from .potentials import make_W
from .profiles import solve_gl_profile

HARDY_RELLICH = {3: 25.0 / 36.0, 4: 3.0}


def hardy_rellich_constant(N):
    """Sharp constant c_N for gradient fields (0 when N = 2)."""
    if N == 2:
        return 0.0
    return HARDY_RELLICH.get(N, N * N / 4.0)


def prop24_constants(N):
    return (N - 2) ** 2 / 4.0, N * N / 2.0 - 2.0 * N


def _I(grid, values, alpha):
    return float(grid.integrate(values, alpha))


def profile_weight(profile, W=None, eps=None):
    """eps^{-2} W'(1 - f^2 - g^2) on the profile's grid."""
    W = W or profile.info.get("W")
    if W is None:
        raise PreconditionError("profile does not record its potential W")
    eps = eps or profile.eps
    d = profile.deficit if profile.deficit is not None else 1.0 - profile.f
    return W.d1(d * (2.0 - d) - profile.g ** 2) / eps ** 2


def mode_laplacian(field):
    """Delta_k v_k = v_k'' + (N-1) v_k'/r - lambda_k v_k / r^2 per mode (origin by its limit)."""
    N, x = field.N, field.grid.x
    out = np.zeros_like(field.values)
    r = x[1:]
    for i, lam in enumerate(field.lam):
        v, v1, v2 = field.values[i], field.d1[i], field.d2[i]
        out[i, 1:] = v2[1:] + (N - 1) * v1[1:] / r - lam * v[1:] / r ** 2
        out[i, 0] = N * v2[0] if lam == 0 else 0.0
    return out


# ---- integrals of (Delta v)^2 ----------------------------------------------------------


def laplacian_l2(field):
    """Integral of (Delta v)^2 over the ball through the per-mode identity.

    int r^{N-1} v''^2 + (N-1+2 lambda) r^{N-3} v'^2 + lambda (lambda+2N-8) r^{N-5} v^2,
    plus (N-1) c^2 when v_0'(1) = c.
    """
    if field.boundary not in (CLAMPED, COMPACT, RADIAL_GRADIENT):
        raise PreconditionError(f"boundary class {field.boundary!r} has no closed form for "
                                "the integral of (Delta v)^2")
    gr, N = field.grid, field.N
    tot = 0.0
    for lam, v, v1, v2 in zip(field.lam, field.values, field.d1, field.d2):
        tot += _I(gr, v2 * v2, N - 1) + (N - 1 + 2 * lam) * _I(gr, v1 * v1, N - 3)
        if lam:
            tot += lam * (lam + 2 * N - 8) * _I(gr, v * v, N - 5)
    if field.boundary == RADIAL_GRADIENT:
        tot += (N - 1) * field.c ** 2
    return tot


def laplacian_l2_direct(field, rule=None):
    """Same integral by tensor quadrature of the sampled Laplacian."""
    rule = rule or AngularRule(field.N, kmax=max(max(field.degrees), 1))
    lap = mode_laplacian(field)
    samples = lap.T @ rule.phi[list(field.degrees)]
    return _I(field.grid, rule.sphere_integral(samples ** 2), field.N - 1)


def gradient_over_r2(field):
    """(int (d_r v)^2 / r^2, int (|grad v|^2 - (d_r v)^2) / r^2)."""
    gr, N = field.grid, field.N
    rad = sum(_I(gr, v1 * v1, N - 3) for v1 in field.d1)
    ang = sum(lam * _I(gr, v * v, N - 5) for lam, v in zip(field.lam, field.values) if lam)
    return rad, ang


# ---- the quadratic form ---------------------------------------------------------------


@dataclass
class FormBreakdown:
    degrees: tuple
    I: list
    II: list
    III: list
    total: float
    radial_term: float
    angular_term: float
    constants: tuple
    bound: float
    margin: float
    scale: float
    info: dict = field(default_factory=dict)

    @property
    def split_sum(self):
        return float(sum(self.I) + sum(self.II) + sum(self.III))

    def to_dict(self):
        return {
            "modes": [{"k": k, "I": a, "II": b, "III": c}
                      for k, a, b, c in zip(self.degrees, self.I, self.II, self.III)],
            "total": self.total, "split_sum": self.split_sum,
            "radial_term": self.radial_term, "angular_term": self.angular_term,
            "constants": list(self.constants), "bound": self.bound, "margin": self.margin,
            "scale": self.scale,
        }


def quadratic_form_F(field, profile, eps=None, W=None):
    """F[grad v] on ``profile`` with the per-mode split and the lower bound

        ((N-2)^2/4) int (d_r v)^2/r^2 + (N^2/2 - 2N) int (|grad v|^2 - (d_r v)^2)/r^2.

    The bound is proven only for N >= 4; it is reported in every dimension.
    """
    if not field.grid.same_as(profile.grid):
        raise PreconditionError("field and profile live on different grids")
    if field.boundary not in (CLAMPED, COMPACT):
        raise PreconditionError("the form is defined on clamped fields")
    gr, N = field.grid, field.N
    Q = profile_weight(profile, W, eps)
    I, II, III = [], [], []
    pot = 0.0
    scale = 0.0
    for lam, v, v1, v2 in zip(field.lam, field.values, field.d1, field.d2):
        a = _I(gr, v2 * v2, N - 1)
        qv1 = _I(gr, Q * v1 * v1, N - 1)
        b = _I(gr, v1 * v1, N - 3)
        qv = _I(gr, Q * v * v, N - 3) if lam else 0.0
        c = _I(gr, v * v, N - 5) if lam else 0.0
        I.append(a - qv1)
        II.append(lam * (b - qv))
        III.append((N - 1 + lam) * b + lam * (lam + 2 * N - 8) * c)
        pot += qv1 + lam * qv
        scale += a + abs(qv1) + (N - 1 + 2 * lam) * b + lam * abs(qv) + lam * abs(lam + 2 * N - 8) * c
    total = laplacian_l2(field) - pot
    rad, ang = gradient_over_r2(field)
    c1, c2 = prop24_constants(N)
    bound = c1 * rad + c2 * ang
    return FormBreakdown(field.degrees, I, II, III, total, rad, ang, (c1, c2), bound,
                         total - bound, scale, {"eps": eps or profile.eps})


def estimate_chain(field, profile, eps=None, W=None):
    """Per-mode lower estimates for I_k, II_k and III_k with their explicit remainders.

    zeta = r^{-(N-2)/2}; each entry gives (lhs, rhs) with lhs >= rhs expected.
    """
    gr, N = field.grid, field.N
    x = gr.x
    f = profile.f
    D1, _ = gr.fd
    f1 = D1 @ f
    form = quadratic_form_F(field, profile, eps, W)
    sel = np.zeros_like(x, dtype=bool)
    sel[1:] = True
    r = np.where(sel, x, 1.0)
    zeta = r ** (-(N - 2) / 2.0)
    dzeta = -(N - 2) / 2.0 * r ** (-N / 2.0)
    fz = np.where(sel, f * zeta, 1.0)
    dfz = f1 * zeta + f * dzeta
    out = []
    for i, (k, lam) in enumerate(zip(field.degrees, field.lam)):
        v, v1, v2 = field.values[i], field.d1[i], field.d2[i]
        w1 = np.where(sel, (v2 * fz - v1 * dfz) / fz ** 2, 0.0)  # (v'/(f zeta))'
        rhs_I = _I(gr, (f * zeta * w1) ** 2, N - 1) + \
            ((N - 2) ** 2 / 4.0 - (N - 1)) * _I(gr, v1 * v1, N - 3)
        entry = {"k": k, "I": (form.I[i], rhs_I)}
        if lam:
            u = np.where(sel, v / r, 0.0)  # v / r
            du = np.where(sel, v1 / r - v / r ** 2, 0.0)
            w2 = np.where(sel, (du * fz - u * dfz) / fz ** 2, 0.0)  # (v/(r f zeta))'
            rhs_II = lam * (_I(gr, (f * zeta * w2) ** 2, N - 1) +
                            ((N - 2) ** 2 / 4.0 - 2.0 * (N - 2)) * _I(gr, v * v, N - 5))
            rhs_III = (N - 1) * _I(gr, v1 * v1, N - 3) + \
                lam * (lam + 2 * N - 8 + (N - 4) ** 2 / 4.0) * _I(gr, v * v, N - 5)
        else:
            rhs_II = 0.0
            rhs_III = (N - 1) * _I(gr, v1 * v1, N - 3)
        entry["II"] = (form.II[i], rhs_II)
        entry["III"] = (form.III[i], rhs_III)
        out.append(entry)
    return out


def hardy_1d(N, grid, v, v1):
    """(int r^{N-3} v'^2, ((N-4)^2/4) int r^{N-5} v^2) for compactly supported v."""
    return _I(grid, v1 * v1, N - 3), (N - 4) ** 2 / 4.0 * _I(grid, v * v, N - 5)


def hardy_rellich_ratio(N, field):
    """int (Delta v)^2 / int |grad v|^2 / r^2, with the sharp constant for comparison."""
    if field.N != N:
        raise PreconditionError("field dimension mismatch")
    if field.boundary not in (COMPACT, CLAMPED):
        raise PreconditionError("ratio needs a compactly supported or clamped field")
    rad, ang = gradient_over_r2(field)
    den = rad + ang
    if not den > 0:
        raise PreconditionError("zero denominator: the field has no gradient")
    ratio = laplacian_l2(field) / den
    cN = hardy_rellich_constant(N)
    return {"ratio": ratio, "c_N": cN, "margin": ratio - cN, "ok": ratio >= cN - 1e-6}


# ---- Hardy decomposition ----------------------------------------------------------


def hardy_decomposition_check(N, grid, a, a1, V, psi, psi1, psi2, u, u1):
    """Both sides of the Hardy decomposition for L = -div(a grad) + V on radial functions.

    lhs = int r^{N-1} (a u'^2 + V u^2)
    rhs = int r^{N-1} psi^2 a ((u/psi)')^2 + int r^{N-1} (u^2/psi^2) psi L psi
    All arguments are samples on ``grid.x``; u must vanish near r = 1 and the
    origin.
    """
    x = grid.x
    if np.any(psi[1:] <= 0):
        i = int(np.argmin(psi[1:])) + 1
        raise PreconditionError(f"weight vanishes at r={x[i]:.3g}")
    r = np.where(x > 0, x, 1.0)
    Lpsi = -a * psi2 - (a1 + (N - 1) * a / r) * psi1 + V * psi
    ps = np.where(x > 0, psi, 1.0)
    q1 = (u1 * ps - u * psi1) / ps ** 2
    lhs = _I(grid, a * u1 * u1 + V * u * u, N - 1)
    rhs = _I(grid, ps ** 2 * a * q1 ** 2, N - 1) + _I(grid, np.where(x > 0, u * u / ps * Lpsi, 0.0),
                                                      N - 1)
    return lhs, rhs, lhs - rhs


def zeta_weight_check(profile):
    """min over interior nodes of  L zeta / zeta - (N-2)^2 f^2 / (4 r^2)  for L = -div(f^2 grad)."""
    gr, N = profile.grid, profile.N
    D1, _ = gr.fd
    f = profile.f
    f1 = D1 @ f
    r = gr.x[1:-1]
    # -div(f^2 grad zeta)/zeta = (N-2)^2 f^2/(4 r^2) - 2 f f' zeta'/zeta, zeta'/zeta = -(N-2)/(2r)
    val = (N - 2) ** 2 * f[1:-1] ** 2 / (4 * r ** 2) + (N - 2) * f[1:-1] * f1[1:-1] / r
    return float(np.min(val - (N - 2) ** 2 * f[1:-1] ** 2 / (4 * r ** 2)))


# ---- the low-dimensional counterexample ----------------------------------------------


def smoothstep_cutoff(t):
    """C^2 cutoff: 1 on t <= 1/4, 0 on t >= 1/2, quintic in between; with two derivatives."""
    t = np.asarray(t, dtype=float)
    x = np.clip(4.0 * t - 1.0, 0.0, 1.0)
    inside = (t > 0.25) & (t < 0.5)
    S = x ** 3 * (10.0 - 15.0 * x + 6.0 * x * x)
    S1 = 30.0 * x * x * (1.0 - x) ** 2
    S2 = 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x)
    return 1.0 - S, np.where(inside, -4.0 * S1, 0.0), np.where(inside, -16.0 * S2, 0.0)


def trial_coefficients(N):
    """(c2, c1, c0) of the b-integral: r^3 b''^2 + c1 r b'^2 + c0 b^2 / r."""
    return 1.0, (N * N - 2 * N + 4) / 2.0, (N - 4) * (N ** 3 + 12 * N - 16) / 16.0


@dataclass
class Counterexample:
    N: int
    j: float
    trial: float
    r_support: tuple
    info: dict = field(default_factory=dict)

    @property
    def negative(self):
        return self.trial < 0

    @property
    def L(self):
        return math.log(math.log(self.j))

    def profile_b(self, r):
        """b, b', b'' (derivatives in r) at radii r > 0."""
        r = np.asarray(r, dtype=float)
        b = np.zeros_like(r)
        b1 = np.zeros_like(r)
        b2 = np.zeros_like(r)
        outer = r >= 0.125
        if np.any(outer):
            b[outer], b1[outer], b2[outer] = smoothstep_cutoff(r[outer])
        inner = (r > 0) & ~outer
        if np.any(inner):
            s = np.log(r[inner])
            L4 = 4.0 * self.L
            psi = np.log(-s) / L4
            p, p1, p2 = smoothstep_cutoff(psi)
            ps = 1.0 / (L4 * s)
            pss = -1.0 / (L4 * s * s)
            bs = p1 * ps
            bss = p2 * ps * ps + p1 * pss
            ri = r[inner]
            b[inner], b1[inner], b2[inner] = p, bs / ri, (bss - bs) / ri ** 2
        return b, b1, b2

    def field(self, grid):
        """v = a(r) x_1/r with a = r^{-(N-4)/2} b, as a degree-one ModeField on ``grid``."""
        if grid.N != self.N:
            raise PreconditionError("grid dimension mismatch")
        x = grid.x
        al = -(self.N - 4) / 2.0
        a = np.zeros_like(x)
        a1 = np.zeros_like(x)
        a2 = np.zeros_like(x)
        r = x[1:]
        b, b1, b2 = self.profile_b(r)
        a[1:] = r ** al * b
        a1[1:] = al * r ** (al - 1) * b + r ** al * b1
        a2[1:] = al * (al - 1) * r ** (al - 2) * b + 2 * al * r ** (al - 1) * b1 + r ** al * b2
        # the coefficient on the normalized degree-one harmonic is |theta_1|_{L^2} a
        c = math.sqrt(sphere_area(self.N) / self.N)
        return ModeField(grid, (1,), c * a, c * a1, c * a2, boundary=COMPACT,
                         meta={"counterexample_j": self.j})

    def grid(self, points_per_unit=160.0, r_min=None):
        """Geometric grid reaching below the support of the field."""
        r_min = r_min or self.r_support[0] * 0.1
        pts = int(math.ceil(points_per_unit * math.log(1.0 / r_min)))
        return RadialGrid(self.N, pts, "geometric", r_min=r_min)

    def to_dict(self):
        return {"N": self.N, "j": self.j, "trial": self.trial, "negative": self.negative,
                "support": list(self.r_support), **{k: v for k, v in self.info.items()
                                                    if isinstance(v, (int, float, str))}}


def trial_integral(N, j):
    """The b-integral of the trial field, evaluated in log variables.

    With s = ln r: r^3 b''^2 dr = (b_ss - b_s)^2 ds, r b'^2 dr = b_s^2 ds and
    b^2/r dr = b^2 ds.  Pieces: the outer cutoff on [1/4, 1/2], the plateau
    b = 1 on [1/j, 1/4] and the log-log transition on
    [exp(-(ln j)^2), 1/j].
    """
    c2, c1, c0 = trial_coefficients(N)
    lj = math.log(j)
    L = math.log(lj)
    L4 = 4.0 * L

    def outer(r):
        b, b1, b2 = smoothstep_cutoff(r)
        return float(r ** 3 * b2 ** 2 + c1 * r * b1 ** 2 + c0 * b ** 2 / r)

    out_val, _ = integrate.quad(outer, 0.25, 0.5, epsabs=1e-13, epsrel=1e-12, limit=200)
    plateau = c0 * (math.log(0.25) + lj)

    def transition(u):
        # s = -exp(u), psi = u / (4L), ds = exp(u) du in absolute value
        s = -math.exp(u)
        p, p1, p2 = smoothstep_cutoff(u / L4)
        ps = 1.0 / (L4 * s)
        pss = -1.0 / (L4 * s * s)
        bs = p1 * ps
        bss = p2 * ps * ps + p1 * pss
        return float(((bss - bs) ** 2 + c1 * bs ** 2 + c0 * p ** 2) * math.exp(u))

    tr_val, _ = integrate.quad(transition, L, 2.0 * L, epsabs=1e-13, epsrel=1e-12, limit=400)
    return out_val + plateau + tr_val, {"outer": out_val, "plateau": plateau,
                                        "transition": tr_val}


def _guard(N):
    if N not in (2, 3):
        raise PreconditionError(
            f"N={N}: for N >= 4 the form is bounded below by a non-negative Hardy term, "
            "so no negative direction exists")


def build_counterexample(N, j):
    """Trial field with the log-log cutoff at parameter j; ``negative`` tells if it works."""
    _guard(N)
    if not j > 20:
        raise PreconditionError("the cutoff needs j > 20")
    val, parts = trial_integral(N, j)
    lo = math.exp(-math.log(j) ** 2)
    c2, c1, c0 = trial_coefficients(N)
    info = dict(parts)
    info["numerator"] = (N - 4) * (N ** 3 + 12 * N - 16)
    info["c0"] = c0
    info["F_star_from_trial"] = sphere_area(N) / N * val
    return Counterexample(N, float(j), val, (lo, 0.5), info)


def find_counterexample(N, j0=32.0, max_doublings=60):
    """Double j from ``j0`` until the trial integral is negative."""
    _guard(N)
    j = float(j0)
    for _ in range(max_doublings):
        cex = build_counterexample(N, j)
        if cex.negative:
            return cex
        j *= 2.0
    raise PreconditionError(f"trial integral still non-negative at j={j:g}")


def f_star(field):
    """int (Delta v)^2 - (N-1) int |grad v|^2 / r^2."""
    rad, ang = gradient_over_r2(field)
    return laplacian_l2(field) - (field.N - 1) * (rad + ang)


def default_eps_sequence(cex, decades=(1, 2, 3, 4)):
    """eps values below the inner edge of the trial field's support."""
    lo = cex.r_support[0]
    return [lo * 10.0 ** (-k) for k in decades]


def f_eps_negativity(N, cex, eps_sequence=None, W=None, points_per_unit=160.0):
    """F_eps[grad v] for decreasing eps on the trial field, next to its limit F_*.

    Each eps gets a geometric grid reaching three decades below eps so the
    vortex core is resolved; the GL profile is solved there and the trial field
    is sampled in closed form on the same nodes.
    """
    _guard(N)
    if cex.N != N:
        raise PreconditionError("counterexample built for another dimension")
    W = W or make_W("half-square")
    eps_sequence = sorted((float(e) for e in (eps_sequence or default_eps_sequence(cex))),
                          reverse=True)
    vals, stars = [], []
    for eps in eps_sequence:
        grid = cex.grid(points_per_unit, r_min=min(eps, cex.r_support[0]) * 1e-3)
        prof = solve_gl_profile(N, eps, W, grid)
        v = cex.field(grid)
        Q = profile_weight(prof, W, eps)
        gr = grid
        pot = sum(_I(gr, Q * v1 * v1, N - 1) + lam * _I(gr, Q * vv * vv, N - 3)
                  for lam, vv, v1 in zip(v.lam, v.values, v.d1))
        vals.append(laplacian_l2(v) - pot)
        stars.append(f_star(v))
    Fs = stars[-1]
    rel = [abs(a - Fs) / abs(Fs) for a in vals]
    return {"eps": eps_sequence, "F_eps": vals, "F_star": Fs,
            "F_star_trial": cex.info["F_star_from_trial"], "relative_gap": rel,
            "negative": vals[-1] < 0}
