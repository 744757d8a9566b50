"""Convex potentials W on (-inf, 1] and W~ on [0, inf).

Every potential is stored as a polynomial ``sum_n c[n] t**n``.  The builtin
kinds are shorthands for particular coefficient lists.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .errors import ConfigError, ConvexityError, DomainError

GL_DOMAIN = "gl"
MM_DOMAIN = "mm"

BUILTINS = {
    "zero": [0.0],
    "half-square": [0.0, 0.0, 0.5],
    "square": [0.0, 0.0, 1.0],
    "linear": [0.0, 1.0],
}

# how far into the unbounded side of the domain the certification sweep reaches
SWEEP_REACH = 10.0
SWEEP_POINTS = 1000
TOL_CONVEX = 1e-12
DOMAIN_SLACK = 1e-12


@dataclass(frozen=True)
class PotentialModel:
    kind: str
    domain: str
    coeffs: tuple
    _poly: Polynomial = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "_poly", Polynomial(np.asarray(self.coeffs, dtype=float)))

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if self.domain == GL_DOMAIN:
            if t.size and np.max(t) > 1.0 + DOMAIN_SLACK:
                raise DomainError(f"{self.kind} potential evaluated at t={np.max(t)!r} > 1")
        elif t.size and np.min(t) < -DOMAIN_SLACK:
            raise DomainError(f"{self.kind} potential evaluated at t={np.min(t)!r} < 0")
        return t

    def value(self, t):
        return self._poly(self._check(t))

    def d1(self, t):
        return self._poly.deriv(1)(self._check(t))

    def d2(self, t):
        return self._poly.deriv(2)(self._check(t))

    @property
    def slope_at_one(self):
        """W'(1); drives the existence of an escaping branch."""
        return float(self._poly.deriv(1)(1.0))

    @property
    def slope_at_zero(self):
        """W~'(0); sets the height of the onset curve."""
        return float(self._poly.deriv(1)(0.0))

    @property
    def is_zero(self):
        return not np.any(np.asarray(self.coeffs) != 0.0)

    def sweep(self, n=SWEEP_POINTS):
        if self.domain == GL_DOMAIN:
            return np.linspace(-SWEEP_REACH, 1.0, n)
        return np.linspace(0.0, SWEEP_REACH, n)

    def to_dict(self):
        return {"kind": self.kind, "domain": self.domain, "coeffs": list(map(float, self.coeffs))}

    @property
    def label(self):
        if self.kind in BUILTINS:
            return self.kind
        return "poly[" + ",".join(f"{c:g}" for c in self.coeffs) + "]"


def certify(model, tol_convex=TOL_CONVEX):
    """Raise unless ``model`` is a valid convex potential on its domain."""
    c = np.asarray(model.coeffs, dtype=float)
    if not np.all(np.isfinite(c)):
        raise ConfigError("potential coefficients must be finite")
    if c[0] != 0.0:
        raise ConvexityError("potential must vanish at t=0", t=0.0, value=float(c[0]))
    t = model.sweep()
    w = model._poly(t)
    if np.min(w) < 0.0:
        i = int(np.argmin(w))
        raise ConvexityError(f"potential negative at t={t[i]:.6g}", t=float(t[i]), value=float(w[i]))
    w2 = model._poly.deriv(2)(t)
    if np.min(w2) < -tol_convex:
        i = int(np.argmin(w2))
        raise ConvexityError(
            f"second derivative {w2[i]:.6g} < 0 at t={t[i]:.6g}", t=float(t[i]), value=float(w2[i])
        )
    if model.domain == GL_DOMAIN and abs(model._poly.deriv(1)(0.0)) > tol_convex:
        # a convex W >= 0 with W(0) = 0 on a neighbourhood of 0 must have W'(0) = 0
        raise ConvexityError("W'(0) must vanish for a potential on (-inf, 1]", t=0.0,
                             value=float(model._poly.deriv(1)(0.0)))
    return model


def make_potential(kind, coefficients=None, domain=GL_DOMAIN):
    """Build and certify a potential.

    ``kind`` is one of the builtin names or ``"polynomial"`` (then
    ``coefficients[n]`` multiplies ``t**n``).
    """
    if domain not in (GL_DOMAIN, MM_DOMAIN):
        raise ConfigError(f"unknown domain {domain!r}")
    if kind == "polynomial":
        if coefficients is None or len(coefficients) == 0:
            raise ConfigError("polynomial potential needs a coefficient list")
        coeffs = [float(c) for c in coefficients]
    elif kind in BUILTINS:
        if coefficients:
            raise ConfigError(f"builtin potential {kind!r} takes no coefficients")
        coeffs = BUILTINS[kind]
    else:
        raise ConfigError(f"unknown potential kind {kind!r}")
    while len(coeffs) > 1 and coeffs[-1] == 0.0:
        coeffs = coeffs[:-1]
    return certify(PotentialModel(kind, domain, tuple(coeffs)))


def make_W(kind="half-square", coefficients=None):
    return make_potential(kind, coefficients, GL_DOMAIN)


def make_Wt(kind="linear", coefficients=None):
    return make_potential(kind, coefficients, MM_DOMAIN)


def from_dict(d, domain):
    return make_potential(d.get("kind", "zero"), d.get("coeffs"), d.get("domain", domain))
