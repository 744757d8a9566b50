"""Scalar fields on the unit ball in zonal harmonic form.

A ``ModeField`` stores v(r theta) = sum_k v_k(r) phi_k(t), t = theta_1, with
one normalized zonal harmonic per degree k.  Each radial coefficient is kept as
(values, first derivative, second derivative) on ``grid.x``; derivatives come
from closed forms when a field is built analytically and from finite
differences otherwise.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, PreconditionError
from .numerics import AngularRule, RadialGrid, lambda_of_degree, sphere_area

COMPACT = "compact-support"
CLAMPED = "clamped-zero"
RADIAL_GRADIENT = "radial-gradient-boundary"
FREE = "free"
BOUNDARY_CLASSES = (COMPACT, CLAMPED, RADIAL_GRADIENT, FREE)

BUMP_POWER = 6
BOUNDARY_TOL = 1e-8


def grid_to_dict(grid):
    d = {"N": grid.N, "points": grid.M, "grading": grid.grading}
    if grid.grading == "power":
        d["gamma"] = grid.gamma
    if grid.grading == "geometric":
        d["r_min"] = float(grid.r[0])
    return d


def grid_from_dict(d):
    return RadialGrid(d["N"], d["points"], d.get("grading", "auto"), gamma=d.get("gamma"),
                      r_min=d.get("r_min"))


@dataclass
class ModeField:
    grid: RadialGrid
    degrees: tuple
    values: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    boundary: str = FREE
    c: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.degrees = tuple(int(k) for k in self.degrees)
        if len(set(self.degrees)) != len(self.degrees):
            raise ConfigError("each degree may appear only once")
        if self.boundary not in BOUNDARY_CLASSES:
            raise ConfigError(f"unknown boundary class {self.boundary!r}")
        shape = (len(self.degrees), self.grid.M + 1)
        for name in ("values", "d1", "d2"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(shape)
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"non-finite {name} in mode field")
            setattr(self, name, arr)

    @classmethod
    def from_values(cls, grid, degrees, values, boundary=FREE, c=0.0):
        """Build from samples only; derivatives by finite differences."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        D1, D2 = grid.fd
        return cls(grid, degrees, values, (D1 @ values.T).T, (D2 @ values.T).T, boundary, c)

    @classmethod
    def zero(cls, grid, degrees=(0,), boundary=CLAMPED):
        z = np.zeros((len(degrees), grid.M + 1))
        return cls(grid, degrees, z, z.copy(), z.copy(), boundary)

    @property
    def N(self):
        return self.grid.N

    @property
    def lam(self):
        return np.array([lambda_of_degree(self.N, k) for k in self.degrees], dtype=float)

    def mode(self, k):
        """(values, d1, d2) of degree k, zeros when absent."""
        if k in self.degrees:
            i = self.degrees.index(k)
            return self.values[i], self.d1[i], self.d2[i]
        z = np.zeros(self.grid.M + 1)
        return z, z, z

    def _combine(self, other, a, b):
        if not self.grid.same_as(other.grid):
            raise PreconditionError("fields live on different grids")
        degs = tuple(sorted(set(self.degrees) | set(other.degrees)))
        out = [np.zeros((len(degs), self.grid.M + 1)) for _ in range(3)]
        for src, s in ((self, a), (other, b)):
            for i, k in enumerate(src.degrees):
                j = degs.index(k)
                out[0][j] += s * src.values[i]
                out[1][j] += s * src.d1[i]
                out[2][j] += s * src.d2[i]
        bnd = self.boundary if self.boundary == other.boundary else FREE
        return ModeField(self.grid, degs, *out, boundary=bnd, c=a * self.c + b * other.c)

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def scaled(self, s):
        bnd = self.boundary
        return ModeField(self.grid, self.degrees, s * self.values, s * self.d1, s * self.d2,
                         bnd, s * self.c, dict(self.meta))

    def restrict(self, keep):
        idx = [i for i, k in enumerate(self.degrees) if keep(k)]
        degs = tuple(self.degrees[i] for i in idx)
        if not degs:
            return ModeField.zero(self.grid, (0,), self.boundary)
        return ModeField(self.grid, degs, self.values[idx], self.d1[idx], self.d2[idx],
                         self.boundary, self.c if 0 in degs else 0.0)

    def radial_part(self):
        return self.restrict(lambda k: k == 0)

    def nonradial_part(self):
        return self.restrict(lambda k: k > 0)

    def norm_h1(self):
        """sqrt of the integral of v^2 + |grad v|^2 over the ball."""
        gr, N = self.grid, self.N
        tot = 0.0
        for lam, v, v1 in zip(self.lam, self.values, self.d1):
            tot += gr.integrate(v * v + v1 * v1, N - 1)
            if lam:
                tot += lam * gr.integrate(v * v, N - 3)
        return math.sqrt(max(tot, 0.0))

    # ---- boundary classes ------------------------------------------------------

    def boundary_report(self):
        """Largest end-node mismatch for the declared class (0 when it holds)."""
        r1 = self.grid.r[0]
        scale = max(1.0, float(np.max(np.abs(self.values), initial=0.0)),
                    float(np.max(np.abs(self.d1), initial=0.0)))
        worst = 0.0
        for k, v, v1 in zip(self.degrees, self.values, self.d1):
            if self.boundary == FREE:
                break
            worst = max(worst, abs(v[-1]))
            if k == 0 and self.boundary == RADIAL_GRADIENT:
                worst = max(worst, abs(v1[-1] - self.c))
            else:
                worst = max(worst, abs(v1[-1]))
            if self.boundary == COMPACT:
                worst = max(worst, abs(v[0]), abs(v[1]), abs(v1[1]))
            if k >= 1:
                vmax = float(np.max(np.abs(v)))
                # a degree-k mode behaves like r^k at the origin
                if abs(v[1]) > r1 ** min(k, 2) * vmax * 10.0 + 1e-300:
                    worst = max(worst, abs(v[1]))
        return worst / scale

    def check_boundary(self, tol=BOUNDARY_TOL):
        bad = self.boundary_report()
        if bad > tol:
            raise PreconditionError(f"field violates its {self.boundary} class by {bad:.3g}")
        return self

    # ---- angular samples ----------------------------------------------------------

    def to_samples(self, rule=None):
        rule = rule or AngularRule(self.N, kmax=max(max(self.degrees), 1))
        if rule.N != self.N or max(self.degrees) > rule.kmax:
            raise PreconditionError("angular rule does not cover the field's degrees")
        phi = rule.phi[list(self.degrees)]
        dphi = rule.dphi[list(self.degrees)]
        return SampledSphereField(self.grid, rule, self.values.T @ phi, self.d1.T @ phi,
                                  self.values.T @ dphi)

    # ---- serialization ---------------------------------------------------------------

    def to_dict(self):
        return {
            "N": self.N, "grid": grid_to_dict(self.grid), "boundary": self.boundary,
            "c": float(self.c),
            "modes": [{"k": k, "values": v.tolist(), "d1": a.tolist(), "d2": b.tolist()}
                      for k, v, a, b in zip(self.degrees, self.values, self.d1, self.d2)],
        }

    @classmethod
    def from_dict(cls, d):
        try:
            grid = grid_from_dict(d["grid"])
            modes = d["modes"]
            degs = [m["k"] for m in modes]
            vals = np.array([m["values"] for m in modes], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed field description: {exc}") from exc
        if vals.shape != (len(degs), grid.M + 1):
            raise ConfigError("mode samples do not match the grid")
        if all("d1" in m and "d2" in m for m in modes):
            d1 = np.array([m["d1"] for m in modes], dtype=float)
            d2 = np.array([m["d2"] for m in modes], dtype=float)
            return cls(grid, degs, vals, d1, d2, d.get("boundary", FREE), d.get("c", 0.0))
        return cls.from_values(grid, degs, vals, d.get("boundary", FREE), d.get("c", 0.0))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def identical(self, other):
        return (self.grid.same_as(other.grid) and self.degrees == other.degrees
                and self.boundary == other.boundary and self.c == other.c
                and all(np.array_equal(getattr(self, a), getattr(other, a))
                        for a in ("values", "d1", "d2")))


# ---- analytic building blocks ----------------------------------------------------


def bump(r, a, b, power=BUMP_POWER):
    """(1 - x^2)^power on (a, b), x the affine coordinate; with two derivatives."""
    kappa = 2.0 / (b - a)
    x = (2.0 * r - a - b) / (b - a)
    inside = np.abs(x) < 1.0
    u = np.where(inside, 1.0 - x * x, 0.0)
    p = power
    v = u ** p
    v1 = np.where(inside, p * u ** (p - 1) * (-2.0 * x) * kappa, 0.0)
    v2 = np.where(inside, kappa ** 2 * (4.0 * p * (p - 1) * x * x * u ** (p - 2) - 2.0 * p * u ** (p - 1)),
                  0.0)
    return v, v1, v2


def random_mode_field(N, grid, rng, degrees=(0, 1, 2), bumps=3, support=None, amplitude=1.0,
                      boundary=CLAMPED, min_width=0.15):
    """Each mode is a sum of ``bumps`` random bumps supported inside ``support``.

    The default support [2 r_1, 0.9] keeps every mode compactly supported away
    from both the origin and the sphere.  Bumps narrower than ``min_width``
    are not drawn: their derivatives would outrun the grid.
    """
    if grid.N != N:
        raise PreconditionError("grid dimension mismatch")
    lo, hi = support or (2.0 * grid.r[0], 0.9)
    x = grid.x
    K = len(degrees)
    out = [np.zeros((K, grid.M + 1)) for _ in range(3)]
    for i in range(K):
        for _ in range(bumps):
            width = rng.uniform(min(min_width, hi - lo), hi - lo)
            a = rng.uniform(lo, hi - width)
            b = a + width
            w = amplitude * rng.standard_normal()
            for arr, part in zip(out, bump(x, a, b)):
                arr[i] += w * part
    return ModeField(grid, tuple(degrees), *out, boundary=boundary)


def with_boundary_gradient(field, c):
    """Add c (r^2 - 1)/2 to the radial mode: v_0(1) = 0, v_0'(1) = c."""
    x = field.grid.x
    add = ModeField(field.grid, (0,), 0.5 * c * (x * x - 1.0), c * x, np.full_like(x, c),
                    boundary=RADIAL_GRADIENT, c=c)
    out = field + add
    out.boundary = RADIAL_GRADIENT
    out.c = c
    return out


# ---- angular samples ----------------------------------------------------------------


@dataclass
class SampledSphereField:
    """Samples on (grid.x) x (rule.t): values, radial derivative and d/dt."""

    grid: RadialGrid
    rule: AngularRule
    values: np.ndarray
    dr: np.ndarray = None
    dt: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.M + 1, len(self.rule.t)):
            raise ConfigError("sample array does not match grid x angular rule")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("non-finite samples")

    @property
    def N(self):
        return self.grid.N

    def slice_integral(self, F):
        """Integral over each sphere of radius r of F(r, theta), per node."""
        return self.rule.sphere_integral(F)

    def grad_sq(self):
        """|grad|^2 = u_r^2 + (1 - t^2) u_t^2 / r^2 at every sample (0 angular part at r = 0)."""
        if self.dr is None or self.dt is None:
            raise PreconditionError("sampled field carries no derivatives")
        x = self.grid.x[:, None]
        ang = np.where(x > 0, (1.0 - self.rule.t ** 2) * self.dt ** 2 / np.where(x > 0, x, 1.0) ** 2,
                       0.0)
        return self.dr ** 2 + ang

    def to_modes(self, kmax=None, boundary=FREE):
        K = self.rule.kmax if kmax is None else kmax
        coeffs = self.rule.analyze(self.values, K)  # (M+1, K+1)
        d1 = self.rule.analyze(self.dr, K) if self.dr is not None else None
        if d1 is None:
            return ModeField.from_values(self.grid, range(K + 1), coeffs.T, boundary)
        D1, D2 = self.grid.fd
        return ModeField(self.grid, tuple(range(K + 1)), coeffs.T, d1.T, (D1 @ d1).T, boundary)


def ball_integral(grid, slice_values):
    """Integral over the ball of a quantity given per sphere (already integrated in angle)."""
    return grid.integrate(slice_values, grid.N - 1)


def mean_over_sphere(field, F):
    return field.slice_integral(F) / sphere_area(field.N)
