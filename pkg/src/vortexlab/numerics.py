"""Radial grids, weighted quadrature, zonal harmonics and radial eigensolvers.

Radial samples are stored on ``grid.x``, which is the node set r_1 < ... < r_M
with the origin prepended as ``x[0] = 0``.  The variational (lumped P1)
discretization used by the profile and energy solvers lives here too, so that
profiles, linearized operators and energies all share one discretization.
"""

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.special import gammaln, roots_jacobi

from .errors import ConfigError, ConvergenceError

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def sphere_area(N):
    """Surface measure of the unit sphere S^{N-1} in R^N."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


def ball_volume(N):
    return sphere_area(N) / N


def lambda_of_degree(N, k):
    """Eigenvalue k(k+N-2) of minus the Laplacian on S^{N-1}."""
    if N < 2 or k < 0:
        raise ConfigError("need N >= 2 and k >= 0")
    return k * (k + N - 2)


def fd_weights(z, x0, m):
    """Fornberg weights for the m-th derivative at x0 from nodes z."""
    n = len(z)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, z[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, z[i] - x0
        for j in range(i):
            c3 = z[i] - z[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def _lagrange_basis(nodes, pts):
    """Values of the Lagrange basis on ``nodes`` at ``pts``: shape (len(nodes), len(pts))."""
    n = len(nodes)
    out = np.ones((n, len(pts)))
    for j in range(n):
        for m in range(n):
            if m != j:
                out[j] *= (pts - nodes[m]) / (nodes[j] - nodes[m])
    return out


class RadialGrid:
    """Nodes on (0, 1] plus the origin, with the quadratures built on them.

    grading: ``"auto"`` (power law with exponent 1.5 for N <= 4, uniform
    otherwise), ``"uniform"``, ``"power"`` or ``"geometric"`` (log-uniform
    down to ``r_min``).  The interval count M is rounded up to a multiple of 3
    so that the cubic product-integration panels tile [0, 1].
    """

    def __init__(self, N, points=600, grading="auto", gamma=None, r_min=None):
        if int(N) != N or N < 2:
            raise ConfigError(f"dimension must be an integer >= 2, got {N!r}")
        if points < 6:
            raise ConfigError("need at least 6 grid points")
        self.N = int(N)
        M = int(math.ceil(points / 3.0) * 3)
        if grading == "auto":
            grading = "power" if self.N <= 4 else "uniform"
            gamma = gamma or 1.5
        self.grading = grading
        s = np.arange(1, M + 1) / M
        if grading == "uniform":
            r = s
            self.gamma = 1.0
        elif grading == "power":
            self.gamma = float(gamma or 1.5)
            r = s ** self.gamma
        elif grading == "geometric":
            if r_min is None or not 0 < r_min < 1:
                raise ConfigError("geometric grading needs 0 < r_min < 1")
            self.gamma = None
            r = np.exp(math.log(r_min) * (1.0 - (np.arange(M) / (M - 1.0))))
        else:
            raise ConfigError(f"unknown grading {grading!r}")
        r[-1] = 1.0
        if np.any(np.diff(r) <= 0) or r[0] <= 0:
            raise ConfigError("grid nodes must be strictly increasing in (0, 1]")
        self.M = M
        self.r = r
        self.x = np.concatenate([[0.0], r])
        self.h = np.diff(self.x)
        self._weights = {}

    def __repr__(self):
        return f"RadialGrid(N={self.N}, M={self.M}, grading={self.grading!r})"

    def same_as(self, other):
        return self.N == other.N and self.M == other.M and np.array_equal(self.x, other.x)

    def describe(self):
        return {"N": self.N, "points": self.M, "grading": self.grading, "r1": float(self.r[0])}

    # ---- lumped P1 pieces -------------------------------------------------

    @cached_property
    def mass(self):
        """Lumped mass: integral of each hat function against r^{N-1}."""
        a, b = self.x[:-1], self.x[1:]
        mid, half = (a + b) / 2.0, (b - a) / 2.0
        pts = mid[:, None] + half[:, None] * _GL_X[None, :]
        wr = half[:, None] * _GL_W[None, :] * pts ** (self.N - 1)
        left = np.sum(wr * (b[:, None] - pts), axis=1) / self.h
        right = np.sum(wr * (pts - a[:, None]), axis=1) / self.h
        V = np.zeros(self.M + 1)
        V[:-1] += left
        V[1:] += right
        return V

    @cached_property
    def interval_mean(self):
        """Mean of r^{N-1} over each interval."""
        a, b = self.x[:-1], self.x[1:]
        return (b ** self.N - a ** self.N) / (self.N * self.h)

    @cached_property
    def stiff(self):
        """Coefficient of (u_{i+1}-u_i)^2 in the integral of r^{N-1} u'^2."""
        return self.interval_mean / self.h

    @cached_property
    def angular(self):
        """Lumped weights for the integral of (N-1) r^{N-3} u^2.

        Interior weights are balanced so that u = r is an exact discrete
        solution of the degree-one radial equation.  The origin weight is the
        exact hat integral (infinite when N = 2).
        """
        N, m = self.N, self.interval_mean
        P = np.empty(self.M + 1)
        P[1:-1] = (m[1:] - m[:-1]) / self.x[1:-1]
        P[0] = np.inf if N == 2 else self.x[1] ** (N - 2) / (N - 2)
        a, b = self.x[-2], 1.0
        pts = (a + b) / 2.0 + (b - a) / 2.0 * _GL_X
        P[-1] = (N - 1) * np.sum((b - a) / 2.0 * _GL_W * pts ** (N - 3) * (pts - a) / (b - a))
        return P

    def stiffness_tridiag(self):
        """(diag, off) of the P1 stiffness matrix on all nodes x_0..x_M."""
        s = self.stiff
        d = np.zeros(self.M + 1)
        d[:-1] += s
        d[1:] += s
        return d, -s

    # ---- high-order weighted quadrature ------------------------------------

    def weights(self, alpha):
        """Weights w with sum(w * phi(x)) ~ integral_0^1 phi(r) r^alpha dr.

        Piecewise cubic interpolation on panels of three intervals, exact
        moments.  For alpha <= -1 the integrand phi * r^alpha is assumed to be
        r^m times a smooth function (m = ceil(-alpha)); the origin sample is
        then not used and its limit is extrapolated from the next four nodes.
        """
        alpha = int(alpha) if float(alpha).is_integer() else float(alpha)
        if alpha in self._weights:
            return self._weights[alpha]
        m = 0 if alpha > -1 else int(math.ceil(-alpha))
        beta = alpha + m
        x = self.x
        w = np.zeros(self.M + 1)
        for p in range(self.M // 3):
            nodes = x[3 * p:3 * p + 4]
            a, b = nodes[0], nodes[-1]
            pts = (a + b) / 2.0 + (b - a) / 2.0 * _GL_X
            gw = (b - a) / 2.0 * _GL_W * pts ** beta
            w[3 * p:3 * p + 4] += _lagrange_basis(nodes, pts) @ gw
        if m > 0:
            w0 = w[0]
            w[0] = 0.0
            w[1:5] += w0 * _lagrange_basis(x[1:5], np.array([0.0]))[:, 0]
            w[1:] *= x[1:] ** (-float(m))
        w.setflags(write=False)
        self._weights[alpha] = w
        return w

    def integrate(self, values, alpha):
        return np.asarray(values) @ self.weights(alpha)

    def cumulative_from_one(self, d1, d2=None):
        """Samples of -integral_r^1 F, given F = d1 (and optionally F' = d2)."""
        h = self.h
        seg = h * (d1[:-1] + d1[1:]) / 2.0
        if d2 is not None:
            seg = seg + h ** 2 * (d2[:-1] - d2[1:]) / 12.0
        out = np.zeros_like(d1)
        out[:-1] = -np.cumsum(seg[::-1])[::-1]
        return out

    # ---- finite differences --------------------------------------------------

    @cached_property
    def fd(self):
        """Sparse first and second derivative matrices on x (one-sided at the ends)."""
        x, n = self.x, self.M + 1
        rows = []
        for i in range(n):
            if i == 0:
                j1, j2 = [0, 1, 2], [0, 1, 2, 3]
            elif i == n - 1:
                j1, j2 = [n - 3, n - 2, n - 1], [n - 4, n - 3, n - 2, n - 1]
            else:
                j1 = j2 = [i - 1, i, i + 1]
            rows.append((i, j1, fd_weights(x[j1], x[i], 1), j2, fd_weights(x[j2], x[i], 2)))
        D1 = sp.lil_matrix((n, n))
        D2 = sp.lil_matrix((n, n))
        for i, j1, w1, j2, w2 in rows:
            D1[i, j1] = w1
            D2[i, j2] = w2
        return D1.tocsr(), D2.tocsr()

    def derivatives(self, values):
        D1, D2 = self.fd
        return D1 @ values, D2 @ values


def gegenbauer_normalized(N, kmax, t):
    """Zonal harmonics phi_k(t) and d/dt phi_k, orthonormal on S^{N-1}.

    Three-term recurrence for polynomials orthonormal against (1-t^2)^a,
    a = (N-3)/2, divided by sqrt(|S^{N-2}|).
    """
    a = (N - 3) / 2.0
    t = np.asarray(t, dtype=float)
    beta0 = math.exp(0.5 * math.log(math.pi) + gammaln(a + 1) - gammaln(a + 1.5))

    def beta(k):
        if k == 1:
            return 1.0 / (3.0 + 2.0 * a)
        return k * (k + 2 * a) / ((2 * k + 2 * a + 1) * (2 * k + 2 * a - 1))

    P = np.zeros((kmax + 1,) + t.shape)
    dP = np.zeros_like(P)
    P[0] = 1.0 / math.sqrt(beta0)
    if kmax >= 1:
        sb = math.sqrt(beta(1))
        P[1] = t * P[0] / sb
        dP[1] = P[0] / sb
    for k in range(1, kmax):
        sk, sk1 = math.sqrt(beta(k)), math.sqrt(beta(k + 1))
        P[k + 1] = (t * P[k] - sk * P[k - 1]) / sk1
        dP[k + 1] = (P[k] + t * dP[k] - sk * dP[k - 1]) / sk1
    scale = 1.0 / math.sqrt(sphere_area(N - 1))
    return P * scale, dP * scale


class AngularRule:
    """Gauss-Jacobi rule on t = cos(theta_1) for zonal integrals over S^{N-1}.

    ``sphere_integral(F)`` approximates the integral of a zonal function over
    the sphere as |S^{N-2}| * sum_j w_j F(t_j).
    """

    def __init__(self, N, order=24, kmax=8):
        if N < 2:
            raise ConfigError("dimension must be >= 2")
        self.N, self.order, self.kmax = int(N), int(order), int(kmax)
        a = (N - 3) / 2.0
        t, w = roots_jacobi(self.order, a, a)
        self.t, self.w = t, w
        self.area_factor = sphere_area(N - 1)
        self.qw = self.area_factor * w
        self.phi, self.dphi = gegenbauer_normalized(N, self.kmax, t)
        self.lam = np.array([lambda_of_degree(N, k) for k in range(self.kmax + 1)], dtype=float)
        # |grad_S phi_k|^2 = (1 - t^2) phi_k'(t)^2 ; tangential factor below carries the root
        self.tangential = np.sqrt(1.0 - t ** 2) * self.dphi

    def sphere_integral(self, F, axis=-1):
        return np.tensordot(F, self.qw, axes=([axis], [0]))

    def synthesize(self, coeffs):
        """Angular samples from mode coefficients (..., K+1) -> (..., order)."""
        K = coeffs.shape[-1]
        return coeffs @ self.phi[:K]

    def analyze(self, samples, kmax=None):
        """Mode coefficients from angular samples by exact quadrature."""
        K = self.kmax if kmax is None else kmax
        return (samples * self.qw) @ self.phi[:K + 1].T


# ---- radial eigenproblems ------------------------------------------------------


@dataclass
class EigenResult:
    value: float
    vector: np.ndarray
    residual: float
    iterations: int


def _solve_shifted(d, e, shift, rhs):
    n = len(d)
    ab = np.zeros((3, n))
    ab[0, 1:] = e
    ab[1] = d - shift
    ab[2, :-1] = e
    return sla.solve_banded((1, 1), ab, rhs)


def ground_state_tridiagonal(d, e, shift, tol=1e-13, maxiter=200, warmup=8):
    """Lowest eigenpair of the symmetric tridiagonal (d, e).

    A few steps of inverse iteration from ``shift`` (below the spectrum, so the
    shifted system is definite) pick out the ground-state direction; Rayleigh
    quotient shifts then converge it.  The result is certified against a
    bisection count of the two lowest eigenvalues.
    """
    n = len(d)

    def matvec(y):
        z = d * y
        z[:-1] += e * y[1:]
        z[1:] += e * y[:-1]
        return z

    def iterate(y, sigma, steps, rayleigh):
        mu_old, delta_old = np.inf, np.inf
        for k in range(steps):
            y = _solve_shifted(d, e, sigma, y)
            y /= np.linalg.norm(y)
            mu = float(y @ matvec(y))
            delta = abs(mu - mu_old)
            res = np.linalg.norm(matvec(y) - mu * y)
            if delta <= tol * (1.0 + abs(mu)) or res <= 1e-12 * (1.0 + abs(mu)):
                return y, mu, k + 1, True
            if rayleigh and k >= 3 and delta >= delta_old and delta <= 1e-9 * (1.0 + abs(mu)):
                # rounding floor reached
                return y, mu, k + 1, True
            mu_old, delta_old = mu, delta
            if rayleigh:
                sigma = mu - 1e-12 * (1.0 + abs(mu))
        return y, mu, steps, False

    y = np.ones(n) / math.sqrt(n)
    y, mu, k1, _ = iterate(y, shift, warmup, False)
    y, mu, k2, ok = iterate(y, mu - 1e-8 * (1.0 + abs(mu)), maxiter, True)
    its = k1 + k2
    low = sla.eigvalsh_tridiagonal(d, e, select="i", select_range=(0, 1))
    if not ok or mu > 0.5 * (low[0] + low[1]):
        # landed on an excited state: restart just below the certified lowest eigenvalue
        sigma = low[0] - 1e-6 * (low[1] - low[0])
        y, mu, k3, ok = iterate(np.ones(n) / math.sqrt(n), sigma, maxiter, False)
        its += k3
        if not ok or mu > 0.5 * (low[0] + low[1]):
            raise ConvergenceError("inverse iteration did not converge to the ground state")
    if np.sum(y) < 0:
        y = -y
    res = float(np.linalg.norm(matvec(y) - mu * y))
    return mu, y, res, its


def radial_operator(grid, q, bc="regular", degree=0):
    """Lumped P1 matrix of -Laplacian + lambda_k/r^2 + q on the free nodes.

    Returns (diag, off, mass, free-node index array).  ``bc="regular"`` keeps
    the origin as a free node (natural condition u'(0) = 0);
    ``bc="vanishing"`` pins u(0) = 0.  The outer node is always Dirichlet.
    """
    q = np.broadcast_to(np.asarray(q, dtype=float), grid.x.shape)
    d, e = grid.stiffness_tridiag()
    d = d + grid.mass * q
    if degree > 0:
        lam = lambda_of_degree(grid.N, degree)
        d = d + lam / (grid.N - 1) * grid.angular
        if bc == "regular":
            raise ConfigError("modes of positive degree vanish at the origin")
    if bc == "regular":
        free = np.arange(0, grid.M)
    elif bc == "vanishing":
        free = np.arange(1, grid.M)
    else:
        raise ConfigError(f"unknown boundary condition {bc!r}")
    return d[free], e[free[:-1]], grid.mass[free], free


def first_eigenpair_radial(N, q, grid, bc="regular", degree=0, maxiter=500):
    """Ground state of -u'' - (N-1)/r u' + (lambda_k/r^2 + q) u = mu u, u(1) = 0.

    ``q`` is sampled on ``grid.x``.  The eigenvector is returned on ``grid.x``,
    positive, normalized in the weighted L^2 norm (times |S^{N-1}|^0).
    """
    if grid.N != N:
        raise ConfigError("grid dimension mismatch")
    if degree > 0 and bc == "regular":
        bc = "vanishing"
    d, e, V, free = radial_operator(grid, q, bc, degree)
    s = 1.0 / np.sqrt(V)
    dd, ee = d * s * s, e * s[:-1] * s[1:]
    qmax = float(np.max(np.abs(np.asarray(q, dtype=float))))
    mu, y, res, it = ground_state_tridiagonal(dd, ee, -qmax - 1.0, maxiter=maxiter)
    u = np.zeros(grid.M + 1)
    u[free] = y * s
    return EigenResult(mu, u, res / (1.0 + abs(mu)), it)


def biharmonic_first_eigenvalue(N, grid, tol=1e-12, maxiter=500):
    """First eigenvalue of the clamped bi-Laplacian on the radial mode.

    With w = v', the radial form of the integral of (Delta v)^2 for v(1) =
    v'(1) = 0 is the integral of r^{N-1}(w'^2 + (N-1) w^2/r^2), so w is
    discretized like a degree-one vortex amplitude (w(0) = w(1) = 0) and
    v = -integral_r^1 w is recovered by the trapezoid rule.
    """
    if grid.N != N:
        raise ConfigError("grid dimension mismatch")
    d, e = grid.stiffness_tridiag()
    d = d + grid.angular
    d, e = d[1:-1], e[1:-1]
    h, V = grid.h, grid.mass

    def C(w):  # w on nodes 1..M-1 -> v on nodes 0..M
        full = np.concatenate([[0.0], w, [0.0]])
        seg = h * (full[:-1] + full[1:]) / 2.0
        v = np.zeros(grid.M + 1)
        v[:-1] = -np.cumsum(seg[::-1])[::-1]
        return v

    def Ct(v):  # adjoint of C
        g = -np.cumsum(v[:-1])  # g[j] = -sum_{i<=j} v_i, weight of seg j
        coef = g * h / 2.0
        return coef[:-1] + coef[1:]

    def A(w):
        z = d * w
        z[:-1] += e * w[1:]
        z[1:] += e * w[:-1]
        return z

    w = np.sin(np.pi * grid.x[1:-1]) * grid.x[1:-1]
    mu_old = np.inf
    for it in range(maxiter):
        w = _solve_shifted(d, e, 0.0, Ct(V * C(w)))
        w /= np.linalg.norm(w)
        v = C(w)
        mu = float(w @ A(w)) / float(v @ (V * v))
        if abs(mu - mu_old) <= tol * mu:
            break
        mu_old = mu
    else:
        raise ConvergenceError("biharmonic inverse iteration did not converge")
    v = C(w)
    if v[0] < 0:
        v = -v
    return mu, v
