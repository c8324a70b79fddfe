"""Riesz-kernel harmonic functions, shell equilibrium densities and the
named constants of the hitting asymptotics.

The kernel is |x-y|^(alpha-d).  ``sphere_harmonic`` integrates it over a
cap union against normalised surface measure, ``plane_harmonic`` over a
planar set against Lebesgue measure; both are the Doob weights used by
the conditioning experiments.  ``shell_potential`` evaluates the
potential of the candidate shell equilibrium measure and should approach
1 on the shell as the shell thins; its hyperplane counterpart is
``plane_shell_potential``.

Two normalisations are carried for every hitting-asymptotics constant.
The "raw" values follow the published closed forms verbatim.  The
"equilibrium" values renormalise the candidate measures so their
potential actually equals one on the thickened target, which direct
quadrature, the hypergeometric limit formulas and Monte Carlo hitting
frequencies all require (see the test suite; the experiment reports
print both and their ratio).  With the equilibrium normalisation one
coefficient serves both geometries and the sphere/plane limit constants
differ exactly by the sphere area 2 pi^{d/2} / Gamma(d/2), as local
flatness of the shell demands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special as sc
from scipy.integrate import quad

from . import geometry as geo
from .specfun import (ConvergenceError, gamma_ratio, gauss_2f1,
                      hyp2f1_near_one_parts, hyp2f1_series, ln_gamma)

SINGULARITY_CUTOFF = 1e-9


class SingularityError(ValueError):
    """Evaluation point is too close to the target set."""


@dataclass(frozen=True)
class StableParams:
    """Stability index alpha in (0, 2) and ambient dimension d >= 2."""

    alpha: float
    d: int

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"d must be an integer >= 2, got {self.d}")
        object.__setattr__(self, "d", int(self.d))

    @property
    def is_log_case(self) -> bool:
        return self.alpha == 1.0

    def require_conditioning(self):
        if self.alpha > 1.0:
            raise ValueError("conditioning experiments require alpha in (0, 1]")


@dataclass(frozen=True)
class ConstantTable:
    """Named constants of the hitting asymptotics for one (alpha, d).

    Fields belonging to the other alpha-branch (or to the hyperplane case
    at d = 2, where the raw closed forms lose meaning) are None; ``get``
    raises on access to an unpopulated field.
    """

    alpha: float
    d: int
    truncation_radius: float
    potential_const: float
    c_alpha_d: float | None = None
    C_alpha_d: float | None = None
    A_sphere: float | None = None
    c_1_d: float | None = None
    A_sphere_1: float | None = None
    k_alpha_d: float | None = None
    A_plane: float | None = None
    k_1_d_R: float | None = None
    A_plane_1: float | None = None
    k_equilibrium: float | None = None
    A_sphere_eq: float | None = None
    A_plane_eq: float | None = None
    A_plane_interval: float | None = None

    def get(self, name: str) -> float:
        val = getattr(self, name)
        if val is None:
            raise ValueError(
                f"constant {name!r} is not defined for alpha={self.alpha}, d={self.d}")
        return val

    def delta_rule(self, eps: float) -> float:
        """Shell-enlargement schedule delta(eps) used by the leakage bound."""
        if not 0.0 < eps < 1.0:
            raise ValueError("delta_rule requires eps in (0, 1)")
        if self.alpha < 1.0:
            return eps ** ((1.0 - self.alpha) / (2.0 * (self.d - self.alpha)))
        if self.alpha == 1.0:
            return abs(math.log(eps)) ** (-1.0 / (2.0 * (self.d - 1)))
        raise ValueError("delta_rule is defined for alpha in (0, 1]")


def constants(p: StableParams, R: float = 2.0) -> ConstantTable:
    """Populate every constant available for the branch of ``p``.

    R is the truncation radius of the alpha=1 hyperplane measure; the
    resulting constant does not depend on it, but it must be positive.
    """
    if R <= 0.0:
        raise ValueError("truncation radius R must be positive")
    a, d = p.alpha, p.d
    fields: dict = {
        "alpha": a, "d": d, "truncation_radius": float(R),
        "potential_const": gamma_ratio(((d - a) / 2.0,), (a / 2.0,))
        / (2.0 ** a * math.pi ** (d / 2.0)),
    }
    if a < 1.0:
        c_ad = math.exp(
            ln_gamma((d + a - 2.0) / 2.0) - a * math.log(2.0)
            - 0.5 * d * math.log(math.pi) - ln_gamma(1.0 - a) - ln_gamma((2.0 - a) / 2.0))
        fields["c_alpha_d"] = c_ad
        fields["C_alpha_d"] = c_ad * math.exp(
            (2.0 - a) * math.log(2.0) + 0.5 * (d - 1) * math.log(math.pi)
            + 2.0 * ln_gamma((2.0 - a) / 2.0) - ln_gamma(2.0 - a) - ln_gamma((d - 1) / 2.0))
        fields["A_sphere"] = math.exp(
            (1.0 - 2.0 * a) * math.log(2.0) + ln_gamma((d + a - 2.0) / 2.0)
            - 0.5 * d * math.log(math.pi) - ln_gamma(1.0 - a)
            + ln_gamma((2.0 - a) / 2.0) - ln_gamma(2.0 - a))
        if d >= 3:
            k_ad = math.exp(
                ln_gamma((d - 2.0) / 2.0) + ln_gamma((d - a) / 2.0)
                - 0.5 * (d - 2) * math.log(math.pi)
                - ln_gamma((1.0 - a) / 2.0) - ln_gamma((d - 1) / 2.0))
            fields["k_alpha_d"] = k_ad
            fields["A_plane"] = k_ad * _arcsine_mass_factor(a)
            fields["A_plane_interval"] = fields["A_plane"] * math.sin(math.pi * a / 2.0) / math.pi
        # unit-potential normalisation: the same coefficient serves the shell
        # and the slab (Legendre duplication makes the two closed forms equal)
        k_eq = math.exp(
            ln_gamma((d - a) / 2.0) - 0.5 * (d - 1) * math.log(math.pi)
            - ln_gamma((1.0 - a) / 2.0) - ln_gamma(a / 2.0) - ln_gamma(1.0 - a / 2.0))
        fields["k_equilibrium"] = k_eq
        fields["A_plane_eq"] = k_eq * _arcsine_mass_factor(a)
        fields["A_sphere_eq"] = sphere_area(d) * fields["A_plane_eq"]
    elif a == 1.0:
        fields["c_1_d"] = math.exp(
            ln_gamma((d - 1.0) / 2.0) - 0.5 * (d + 1) * math.log(math.pi))
        fields["A_sphere_1"] = math.exp(
            ln_gamma((d - 1.0) / 2.0) - 0.5 * (d - 1) * math.log(math.pi))
        if d >= 3:
            fields["k_1_d_R"] = math.exp(
                ln_gamma((d - 2.0) / 2.0) - math.log(2.0) - 0.5 * d * math.log(math.pi))
            fields["A_plane_1"] = math.exp(
                ln_gamma((d - 2.0) / 2.0) - 0.5 * (d - 2) * math.log(math.pi))
        fields["k_equilibrium"] = math.exp(
            ln_gamma((d - 1.0) / 2.0) - math.log(2.0) - 0.5 * (d + 1) * math.log(math.pi))
        fields["A_plane_eq"] = math.pi * fields["k_equilibrium"]
        fields["A_sphere_eq"] = sphere_area(d) * fields["A_plane_eq"]
    return ConstantTable(**fields)


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def _arcsine_mass_factor(alpha: float) -> float:
    # 2^{1-a} Gamma((2-a)/2)^2 / Gamma(2-a): the eps^{1-a}-scaled mass of the
    # endpoint-singular radial profile
    return math.exp((1.0 - alpha) * math.log(2.0)
                    + 2.0 * ln_gamma((2.0 - alpha) / 2.0) - ln_gamma(2.0 - alpha))


# -- harmonic functions ------------------------------------------------------

_DEFAULT_NODES = {2: 512, 3: 4096}
_MAX_DOUBLINGS = 6


@lru_cache(maxsize=128)
def _cached_nodes(S: geo.CapSet, n: int):
    return geo.quadrature_nodes(S, n)


def _kernel_sum(nodes, weights, X, power):
    # sum_j w_j |x - node_j|^power for every row x of X, chunked
    out = np.empty(len(X))
    step = max(1, 2_000_000 // max(len(nodes), 1))
    for i in range(0, len(X), step):
        diff = X[i:i + step, None, :] - nodes[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        out[i:i + step] = (d2 ** (power / 2.0)) @ weights
    return out


def sphere_harmonic_many(S: geo.CapSet, X, p: StableParams,
                         rtol: float = 1e-6) -> np.ndarray:
    """Integral of |x-theta|^(alpha-d) over S against sigma_1, vectorised.

    Node counts double until a Richardson check passes for every point;
    points too close to S for the product rule fall back to adaptive arc
    integration (d = 2 only).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    dist = geo.euclidean_distance_to_shell_many(S, X)
    if np.any(dist < SINGULARITY_CUTOFF):
        raise SingularityError("point within 1e-9 of the spherical target set")
    out = np.empty(len(X))
    # points close to the set need node spacing below their distance; send
    # them straight to the adaptive rule rather than up the doubling ladder
    near = dist < 0.02
    if np.any(near):
        if p.d != 2:
            raise ConvergenceError(
                "near-set harmonic evaluation is only supported for d = 2")
        for i in np.nonzero(near)[0]:
            out[i] = _sphere_harmonic_adaptive_d2(S, X[i], p)
        if near.all():
            return out
    todo = np.nonzero(~near)[0]
    n = _DEFAULT_NODES.get(p.d, 16384)
    nodes, weights = _cached_nodes(S, n)
    prev = _kernel_sum(nodes, weights, X[todo], p.alpha - p.d)
    for _ in range(_MAX_DOUBLINGS):
        n *= 2
        nodes, weights = _cached_nodes(S, n)
        cur = _kernel_sum(nodes, weights, X[todo], p.alpha - p.d)
        ok = np.abs(cur - prev) <= 0.5 * rtol * np.abs(cur)
        out[todo[ok]] = cur[ok]
        todo = todo[~ok]
        prev = cur[~ok]
        if todo.size == 0:
            return out
    if p.d == 2:
        for i in todo:
            out[i] = _sphere_harmonic_adaptive_d2(S, X[i], p)
        return out
    raise ConvergenceError(
        f"sphere harmonic quadrature did not converge for {todo.size} points")


def sphere_harmonic(S: geo.CapSet, x, p: StableParams, rtol: float = 1e-6) -> float:
    """Harmonic weight of the spherical set at one point x not in S."""
    return float(sphere_harmonic_many(S, np.array([x], dtype=float), p, rtol)[0])


def _sphere_harmonic_adaptive_d2(S: geo.CapSet, x, p: StableParams) -> float:
    arcs = geo._merge_arcs(S.caps)
    r = float(np.linalg.norm(x))
    psi = math.atan2(x[1], x[0])
    pw = (p.alpha - 2.0) / 2.0
    total = 0.0
    for lo, hi in arcs:
        def f(t):
            return (r * r + 1.0 - 2.0 * r * math.cos(t - psi)) ** pw
        pts = [t for t in (psi - 2 * math.pi, psi, psi + 2 * math.pi) if lo < t < hi]
        val, _ = quad(f, lo, hi, points=pts or None, limit=400,
                      epsabs=1e-13, epsrel=1e-9)
        total += val
    return total / (2.0 * math.pi)


def full_sphere_harmonic_closed(radius: float, p: StableParams) -> float:
    """Closed form of the full-sphere harmonic weight at |x| = radius != 1."""
    if radius < 0.0 or abs(radius - 1.0) < SINGULARITY_CUTOFF:
        raise SingularityError("closed form requires |x| != 1")
    hi = max(radius, 1.0)
    lo = min(radius, 1.0)
    z = (lo / hi) ** 2
    return hi ** (p.alpha - p.d) * gauss_2f1(
        (p.d - p.alpha) / 2.0, (2.0 - p.alpha) / 2.0, p.d / 2.0, z)


def plane_harmonic_many(D: geo.PlanarSet, X, p: StableParams,
                        rtol: float = 1e-6) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.array([plane_harmonic(D, x, p, rtol) for x in X])


def plane_harmonic(D: geo.PlanarSet, x, p: StableParams, rtol: float = 1e-6) -> float:
    """Integral of |x-y|^(alpha-d) over the planar set against Lebesgue measure."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(D.normal)
    eta = float(x @ v)
    u = geo.plane_frame(D.normal) @ x
    dist = math.hypot(eta, float(geo.plane_distance_many(D, u[None, :])[0]))
    if dist < SINGULARITY_CUTOFF:
        raise SingularityError("point within 1e-9 of the planar target set")
    if p.d == 2:
        return _plane_harmonic_d2(D, u, eta, p)
    if p.d == 3:
        return _plane_harmonic_d3(D, u, eta, p, rtol)
    if D.shape == "ball":
        return _plane_harmonic_ball(D, u, eta, p, rtol)
    raise NotImplementedError("box planar sets are supported for d <= 3 only")


def _plane_harmonic_d2(D, u, eta, p):
    if D.shape == "ball":
        (c0,), radius = D.params
        lo, hi = c0 - radius, c0 + radius
    else:
        (lo,), (hi,) = D.params
    pw = p.alpha - 2.0
    f = lambda s: (abs(s - u[0]) ** 2 + eta * eta) ** (pw / 2.0)
    pts = [u[0]] if lo < u[0] < hi else None
    val, _ = quad(f, lo, hi, points=pts, limit=400, epsabs=1e-13, epsrel=1e-10)
    return val


def _chord_ball(b, gam, radius):
    # entry/exit distances along a ray at angle gam from a point at distance b
    disc = radius ** 2 - (b * math.sin(gam)) ** 2
    if disc <= 0.0:
        return None
    root = math.sqrt(disc)
    t0, t1 = b * math.cos(gam) - root, b * math.cos(gam) + root
    if t1 <= 0.0:
        return None
    return max(t0, 0.0), t1


def _chord_box(u, direction, lo, hi):
    t0, t1 = 0.0, math.inf
    for k in range(len(u)):
        dk = direction[k]
        if abs(dk) < 1e-15:
            if not lo[k] <= u[k] <= hi[k]:
                return None
            continue
        s0, s1 = (lo[k] - u[k]) / dk, (hi[k] - u[k]) / dk
        if s0 > s1:
            s0, s1 = s1, s0
        t0, t1 = max(t0, s0), min(t1, s1)
    if t1 <= t0:
        return None
    return t0, t1


def _plane_harmonic_d3(D, u, eta, p, rtol):
    # exact radial antiderivative of (rho^2+eta^2)^{(a-3)/2} rho
    am1 = p.alpha - 1.0

    def radial(lohi):
        if lohi is None:
            return 0.0
        r0, r1 = lohi
        return ((r1 * r1 + eta * eta) ** (am1 / 2.0)
                - (r0 * r0 + eta * eta) ** (am1 / 2.0)) / am1

    if D.shape == "ball":
        center, radius = D.params
        cvec = np.asarray(center) - u
        b = float(np.linalg.norm(cvec))
        base = math.atan2(cvec[1], cvec[0]) if b > 1e-14 else 0.0
        inside = b < radius

        def g(phi):
            if b <= 1e-14:
                return radial((0.0, radius))
            return radial(_chord_ball(b, phi, radius))

        if inside:
            lo_a, hi_a = -math.pi, math.pi
        else:
            half = math.asin(min(radius / b, 1.0))
            lo_a, hi_a = -half, half
        breaks = None
    else:
        lo, hi = (np.asarray(q) for q in D.params)
        corners = [np.array([a, b2]) for a in (lo[0], hi[0]) for b2 in (lo[1], hi[1])]
        base = 0.0
        angles = sorted(math.atan2(*(c - u)[::-1]) for c in corners)
        lo_a, hi_a = -math.pi, math.pi
        breaks = angles

        def g(phi):
            direction = np.array([math.cos(phi), math.sin(phi)])
            return radial(_chord_box(u, direction, lo, hi))

    f = lambda phi: g(base + phi)
    pts = [a - base for a in breaks] if breaks else None
    if pts is not None:
        pts = [t for t in pts if lo_a < t < hi_a]
    val, _ = quad(f, lo_a, hi_a, points=pts, limit=400, epsabs=1e-13,
                  epsrel=max(rtol * 1e-2, 1e-11))
    return val


def _plane_harmonic_ball(D, u, eta, p, rtol):
    # two-center reduction in the (d-1)-dimensional frame, d >= 4
    center, radius = D.params
    k = p.d - 1
    b = float(np.linalg.norm(np.asarray(center) - u))
    pw = (p.alpha - p.d) / 2.0
    omega = 2.0 * math.pi ** ((k - 1) / 2.0) / math.gamma((k - 1) / 2.0)

    def inner(s):
        f = lambda psi: math.sin(psi) ** (k - 2) * \
            (b * b + s * s - 2.0 * b * s * math.cos(psi) + eta * eta) ** pw
        val, _ = quad(f, 0.0, math.pi, limit=200, epsabs=1e-13, epsrel=1e-10)
        return val * s ** (k - 1)

    val, _ = quad(inner, 0.0, radius, limit=200, epsabs=1e-13, epsrel=max(rtol * 1e-2, 1e-10))
    return omega * val


# -- interval potential and the log-kernel integral --------------------------

def quad_endpoint_singular(f, a: float, b: float, pa: float = 0.0, qb: float = 0.0,
                           epsrel: float = 1e-11) -> float:
    """int_a^b f(x) (x-a)^pa (b-x)^qb dx for pa, qb > -1.

    The substitution x = a + (b-a) sin^2 w absorbs both endpoint powers
    exactly; residual integrable singularities inside f (logs, small
    fractional powers) are left to the adaptive rule.  ``f`` is called as
    f(x, x - a, b - x) with the offsets computed in exact form so that
    integrands singular at the endpoints stay accurate there.
    """
    length = b - a
    if length <= 0.0:
        return 0.0
    ea, eb = 1.0 + 2.0 * pa, 1.0 + 2.0 * qb

    def g(w):
        s, c = math.sin(w), math.cos(w)
        dxa = length * s * s
        dxb = length * c * c
        return f(a + dxa, dxa, dxb) * s ** ea * c ** eb

    val, _ = quad(g, 0.0, math.pi / 2.0, limit=400, epsabs=1e-15, epsrel=epsrel)
    return 2.0 * length ** (1.0 + pa + qb) * val


def interval_potential(x: float, alpha: float) -> float:
    """int_{-1}^{1} |x-y|^(alpha-1) (1-y)^(-alpha/2) (1+y)^(-alpha/2) dy.

    Constant in x on [-1, 1]; the constant is B(alpha/2, 1 - alpha/2),
    not 1 as sometimes printed, and callers needing a unit-potential
    normalisation must divide by it.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("interval_potential requires alpha in (0, 1)")
    if abs(x) > 1.0:
        raise ValueError("interval_potential requires |x| <= 1")
    ml = -alpha / 2.0
    s = alpha - 1.0
    total = 0.0
    if x > -1.0 + 1e-14:
        # lower piece: kernel singular at the upper endpoint y = x
        at_one = x >= 1.0 - 1e-14
        f_lo = (lambda y, dya, dyb: 1.0) if at_one \
            else (lambda y, dya, dyb: (1.0 - y) ** ml)
        total += quad_endpoint_singular(f_lo, -1.0, x, pa=ml,
                                        qb=s + (ml if at_one else 0.0))
    if x < 1.0 - 1e-14:
        at_minus_one = x <= -1.0 + 1e-14
        f_hi = (lambda y, dya, dyb: 1.0) if at_minus_one \
            else (lambda y, dya, dyb: (1.0 + y) ** ml)
        total += quad_endpoint_singular(f_hi, x, 1.0,
                                        pa=s + (ml if at_minus_one else 0.0), qb=ml)
    return total


# -- shell equilibrium measure ----------------------------------------------

def _shell_coefficient(eps: float, p: StableParams, normalization: str) -> float:
    """Coefficient of the endpoint-singular radial shell profile.

    "raw" follows the published choice verbatim; "equilibrium" rescales so
    the measure's potential tends to 1 on the shell (quadrature- and
    Monte-Carlo-validated, see module docstring).
    """
    ct = constants(p)
    if normalization == "raw":
        c = ct.get("c_alpha_d") if p.alpha < 1.0 else ct.get("c_1_d")
    elif normalization == "equilibrium":
        c = ct.get("k_equilibrium")
    else:
        raise ValueError("normalization must be 'raw' or 'equilibrium'")
    if p.alpha == 1.0:
        c /= abs(math.log(eps))
    return c


def shell_density(r: float, eps: float, p: StableParams,
                  normalization: str = "raw") -> float:
    """Radial density of the candidate shell equilibrium measure at radius r."""
    p.require_conditioning()
    if not 1.0 - eps < r < 1.0 + eps:
        raise ValueError("shell_density requires 1-eps < r < 1+eps")
    c = _shell_coefficient(eps, p, normalization)
    return c * (r - (1.0 - eps)) ** (-p.alpha / 2.0) * (1.0 + eps - r) ** (-p.alpha / 2.0)


def shell_total_mass(eps: float, p: StableParams, normalization: str = "raw") -> float:
    """Closed-form radial mass of the shell density over (1-eps, 1+eps)."""
    p.require_conditioning()
    if not 0.0 < eps < 1.0:
        raise ValueError("shell_total_mass requires eps in (0, 1)")
    return _shell_coefficient(eps, p, normalization) * eps ** (1.0 - p.alpha) \
        * _arcsine_mass_factor(p.alpha)


def _log_series_sums(a: float, b: float, w: float):
    """(G_p, G_h) with G_p = 2F1(a,b;1;w) and G_h the digamma-weighted series
    sum_k (a)_k (b)_k / (k!)^2 (2 psi(k+1) - psi(a+k) - psi(b+k)) w^k."""
    pk = 1.0
    psi1 = float(sc.digamma(1.0))
    psia = float(sc.digamma(a))
    psib = float(sc.digamma(b))
    gp = pk
    gh = pk * (2.0 * psi1 - psia - psib)
    for k in range(10_000):
        pk *= (a + k) * (b + k) / ((k + 1.0) ** 2) * w
        psi1 += 1.0 / (k + 1.0)
        psia += 1.0 / (a + k)
        psib += 1.0 / (b + k)
        tp = pk
        th = pk * (2.0 * psi1 - psia - psib)
        gp += tp
        gh += th
        if abs(tp) <= 1e-17 * abs(gp) and abs(th) <= 1e-17 * max(abs(gh), 1e-300):
            break
    return gp, gh


def shell_potential(x, eps: float, p: StableParams,
                    normalization: str = "equilibrium") -> float:
    """Potential of the full-shell equilibrium candidate at a shell point.

    With the default normalisation it tends to 1 uniformly on the shell as
    eps -> 0 (for alpha = 1 the approach is logarithmically slow); with
    normalization="raw" it tends to the published coefficient's limit
    instead, which quadrature shows is not 1.  Accepts a point or a
    radius; only |x| matters.
    """
    p.require_conditioning()
    if not 0.0 < eps < 0.3:
        raise ValueError("shell_potential requires 0 < eps < 0.3")
    xr = float(np.linalg.norm(x)) if np.ndim(x) else float(x)
    if not 1.0 - eps <= xr <= 1.0 + eps:
        raise ValueError("shell_potential requires 1-eps <= |x| <= 1+eps")
    a, d = p.alpha, p.d
    rl, ru = (1.0 - eps) / xr, (1.0 + eps) / xr
    ha, hb, hc = (d - a) / 2.0, (2.0 - a) / 2.0, d / 2.0
    pref = 2.0 * _shell_coefficient(eps, p, normalization) \
        * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
    merge_hi = ru - 1.0 < 1e-13   # |x| at the outer edge
    merge_lo = 1.0 - rl < 1e-13   # |x| at the inner edge

    if a < 1.0:
        s = a - 1.0
        coef_sing, coef_reg = hyp2f1_near_one_parts(ha, hb, hc)
        fa = lambda w: hyp2f1_series(hc - ha, hc - hb, 1.0 + s, w)
        fb = lambda w: hyp2f1_series(ha, hb, 1.0 - s, w)
        total = 0.0
        if not merge_lo:
            out_hi = (lambda r, db: 1.0) if merge_hi else \
                (lambda r, db: ((ru - 1.0) + db) ** (-a / 2.0))
            q_extra = -a / 2.0 if merge_hi else 0.0
            # (1-r^2)^s split as (1-r)^s (1+r)^s, the first absorbed in qb
            f1 = lambda r, da, db: (1.0 + r) ** s * fa(db * (1.0 + r)) \
                * r ** (d - 1) * out_hi(r, db)
            f2 = lambda r, da, db: fb(db * (1.0 + r)) * r ** (d - 1) * out_hi(r, db)
            total += coef_sing * quad_endpoint_singular(f1, rl, 1.0, -a / 2.0, s + q_extra)
            total += coef_reg * quad_endpoint_singular(f2, rl, 1.0, -a / 2.0, q_extra)
        if not merge_hi:
            out_lo = (lambda r, da: 1.0) if merge_lo else \
                (lambda r, da: ((1.0 - rl) + da) ** (-a / 2.0))
            p_extra = -a / 2.0 if merge_lo else 0.0
            # (1-r^{-2})^s = (r-1)^s (r+1)^s r^{-2s}, the first absorbed in pa
            g1 = lambda r, da, db: (r + 1.0) ** s * r ** (-2.0 * s) \
                * fa(da * (r + 1.0) / (r * r)) * r ** (a - 1.0) * out_lo(r, da)
            g2 = lambda r, da, db: fb(da * (r + 1.0) / (r * r)) \
                * r ** (a - 1.0) * out_lo(r, da)
            total += coef_sing * quad_endpoint_singular(g1, 1.0, ru, s + p_extra, -a / 2.0)
            total += coef_reg * quad_endpoint_singular(g2, 1.0, ru, p_extra, -a / 2.0)
        return pref * total

    # logarithmic branch (alpha = 1): 2F1(a,b;a+b;z) decomposition with
    # log(1-r^2) = log(1-r) + log(1+r) handled through the exact offsets
    a1 = gamma_ratio((hc,), (ha, hb))
    total = 0.0
    if not merge_lo:
        out_hi = (lambda r, db: 1.0) if merge_hi else \
            (lambda r, db: ((ru - 1.0) + db) ** -0.5)
        q_extra = -0.5 if merge_hi else 0.0

        def f_all(r, da, db):
            w = db * (1.0 + r)
            gp, gh = _log_series_sums(ha, hb, w)
            return (gh - math.log(db if db > 0 else 5e-324) * gp
                    - math.log(1.0 + r) * gp) * r ** (d - 1) * out_hi(r, db)

        total += quad_endpoint_singular(f_all, rl, 1.0, -0.5, q_extra)
    if not merge_hi:
        out_lo = (lambda r, da: 1.0) if merge_lo else \
            (lambda r, da: ((1.0 - rl) + da) ** -0.5)
        p_extra = -0.5 if merge_lo else 0.0

        def g_all(r, da, db):
            w = da * (r + 1.0) / (r * r)
            gp, gh = _log_series_sums(ha, hb, w)
            return (gh - math.log(da if da > 0 else 5e-324) * gp
                    - (math.log(1.0 + r) - 2.0 * math.log(r)) * gp) * out_lo(r, da)

        total += quad_endpoint_singular(g_all, 1.0, ru, p_extra, -0.5)
    return pref * a1 * total


def riesz_ball_integral(b: float, radius: float, p: StableParams) -> float:
    """int_{B(0, radius)} |x - z|^(alpha-d) dz for a point at distance b.

    The angular integral collapses to a Gauss hypergeometric factor, so a
    single radial quadrature remains (singular at s = b when b < radius).
    """
    if radius <= 0.0 or b < 0.0:
        raise ValueError("riesz_ball_integral requires radius > 0 and b >= 0")
    a, d = p.alpha, p.d
    nu = (d - a) / 2.0
    area = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)

    def f(s):
        if s < 1e-300:
            return 0.0
        hi, lo = max(b, s), min(b, s)
        if hi - lo < 1e-14:
            hi = lo * (1.0 + 1e-14) + 1e-300
        return s ** (d - 1) * hi ** (a - d) * gauss_2f1(
            nu, 1.0 - a / 2.0, d / 2.0, (lo / hi) ** 2)

    pts = [b] if 0.0 < b < radius else None
    val, _ = quad(f, 0.0, radius, points=pts, limit=400, epsabs=1e-13, epsrel=1e-9)
    return area * val


def leakage_bound(eps: float, delta: float, p: StableParams,
                  set_measure: float | None = None, plane: bool = False) -> float:
    """Upper bound for the potential of the shell measure outside the
    delta-enlarged target, at points of the target."""
    p.require_conditioning()
    if eps <= 0.0 or delta <= 0.0:
        raise ValueError("leakage_bound requires eps > 0 and delta > 0")
    if plane:
        if p.alpha >= 1.0:
            raise ValueError("the planar leakage bound is defined for alpha < 1")
        if set_measure is None:
            raise ValueError("planar leakage bound needs the enlarged set measure")
        ct = constants(p)
        return ct.get("k_alpha_d") * set_measure * _arcsine_mass_factor(p.alpha) \
            * eps ** (1.0 - p.alpha) / delta ** (p.d - p.alpha)
    if p.alpha < 1.0:
        ct = constants(p)
        return ct.get("C_alpha_d") * eps ** (1.0 - p.alpha) / delta ** (p.d - p.alpha)
    return 2.0 / (abs(math.log(eps)) * delta ** (p.d - 1))


def plane_shell_potential(height: float, eps: float, p: StableParams,
                          normalization: str = "equilibrium") -> float:
    """Potential of the slab equilibrium candidate at signed height from the
    hyperplane (|height| <= eps), alpha < 1.

    normalization="raw" uses the published slab constant verbatim;
    "equilibrium" renormalises so the value tends to 1.
    """
    if not 0.0 < p.alpha < 1.0:
        raise ValueError("plane_shell_potential requires alpha in (0, 1)")
    if abs(height) > eps:
        raise ValueError("plane_shell_potential requires |height| <= eps")
    ct = constants(p)
    if normalization == "raw":
        k = ct.get("k_alpha_d")
    elif normalization == "equilibrium":
        k = ct.get("k_equilibrium")
    else:
        raise ValueError("normalization must be 'raw' or 'equilibrium'")
    # exact reduction over the parallel hyperplane at each height
    radial = math.pi ** ((p.d - 1) / 2.0) * gamma_ratio(
        ((1.0 - p.alpha) / 2.0,), ((p.d - p.alpha) / 2.0,))
    return k * radial * interval_potential(height / eps, p.alpha)
