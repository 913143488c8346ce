"""Rigid-damage softening traction-separation laws.

The interface is rigid until the strength is reached, then softens along an
envelope t(xi) = sigma_u - q(xi) that decays exponentially (or piecewise
exponentially for the zig-zag variant) with the cumulative softening variable
xi. Unloading is secant through the origin via a growing compliance Q. The
normal mode is unilateral (opening only, closure handled by the element
contact clamp), the tangential mode is symmetric in the sliding sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import NoConvergence


@dataclass(frozen=True)
class ExponentialSoftening:
    """Smooth envelope t(xi) = sigma_u * exp(-sigma_u * xi / g_f)."""

    sigma_u: float
    g_f: float

    def __post_init__(self):
        if self.sigma_u <= 0.0 or self.g_f <= 0.0:
            raise ValueError("strength and fracture energy must be positive")

    def envelope(self, xi: float) -> float:
        # clamped away from zero so compliance updates stay finite in the deep tail
        return self.sigma_u * max(math.exp(-self.sigma_u * xi / self.g_f), 1e-280)

    def segment_gf(self, xi: float) -> float:
        return self.g_f

    def compliance_increment(self, xi0: float, xi1: float) -> float:
        c = self.sigma_u / self.g_f
        return (xi1 - xi0) * (1.0 + c * xi1) / self.envelope(xi1)

    def compliance_rate(self, xi0: float, xi1: float) -> float:
        """Derivative of the compliance increment with respect to xi1."""
        c = self.sigma_u / self.g_f
        w = 1.0 + c * xi1
        return (w + (xi1 - xi0) * c * (2.0 + c * xi1)) / self.envelope(xi1)

    def consistency_terms(self, xi0: float, xi1: float):
        """(t_env, q_increment, q_rate, q_prime) at xi1, one exp per call."""
        c = self.sigma_u / self.g_f
        t_env = self.sigma_u * max(math.exp(-c * xi1), 1e-280)
        w = 1.0 + c * xi1
        inc = (xi1 - xi0) * w / t_env
        rate = (w + (xi1 - xi0) * c * (2.0 + c * xi1)) / t_env
        return t_env, inc, rate, c * t_env

    @property
    def first_gf(self) -> float:
        return self.g_f


@dataclass(frozen=True)
class ZigZagSoftening:
    """Piecewise-exponential envelope, continuous at the breakpoints.

    Segment j covers [xi_breaks[j-1], xi_breaks[j]) (the first starts at 0,
    the last extends to infinity) and decays with fracture energy
    gf_segments[j]. Energies must be non-increasing; the last one is the
    target fracture energy of the material.
    """

    sigma_u: float
    xi_breaks: tuple
    gf_segments: tuple

    def __post_init__(self):
        breaks = np.asarray(self.xi_breaks, dtype=float)
        gfs = np.asarray(self.gf_segments, dtype=float)
        if len(gfs) != len(breaks) + 1:
            raise ValueError("need one more segment energy than breakpoints")
        if np.any(np.diff(breaks) <= 0.0) or np.any(breaks <= 0.0):
            raise ValueError("breakpoints must be positive and strictly increasing")
        if np.any(gfs <= 0.0) or np.any(np.diff(gfs) > 1e-12):
            raise ValueError("segment energies must be positive and non-increasing")
        if self.sigma_u <= 0.0:
            raise ValueError("strength must be positive")
        # envelope values at the breakpoints, by continuity
        t_bp = [self.sigma_u]
        edges = np.concatenate([[0.0], breaks])
        for j in range(len(breaks)):
            t_bp.append(t_bp[-1] * math.exp(-self.sigma_u * (edges[j + 1] - edges[j]) / gfs[j]))
        object.__setattr__(self, "_edges", edges)
        object.__setattr__(self, "_t_bp", np.asarray(t_bp))
        object.__setattr__(self, "_gfs", gfs)

    def _segment(self, xi: float) -> int:
        return int(np.searchsorted(self._edges, xi, side="right") - 1)

    def envelope(self, xi: float) -> float:
        j = self._segment(xi)
        decay = math.exp(-self.sigma_u * (xi - self._edges[j]) / self._gfs[j])
        return max(self._t_bp[j] * decay, self.sigma_u * 1e-280)

    def segment_gf(self, xi: float) -> float:
        return float(self._gfs[self._segment(xi)])

    def compliance_increment(self, xi0: float, xi1: float) -> float:
        # exact integral of the compliance evolution; continuous across the
        # breakpoints, which keeps the return-map consistency equation solvable
        return xi1 / self.envelope(xi1) - xi0 / self.envelope(xi0)

    def compliance_rate(self, xi0: float, xi1: float) -> float:
        c = self.sigma_u / self.segment_gf(xi1)
        return (1.0 + c * xi1) / self.envelope(xi1)

    def consistency_terms(self, xi0: float, xi1: float):
        t_env = self.envelope(xi1)
        c = self.sigma_u / self.segment_gf(xi1)
        inc = xi1 / t_env - xi0 / self.envelope(xi0)
        rate = (1.0 + c * xi1) / t_env
        return t_env, inc, rate, c * t_env

    @property
    def first_gf(self) -> float:
        return float(self._gfs[0])


def q_of_xi(curve, xi: float) -> float:
    """Softening traction (the thermodynamic force driving damage)."""
    if xi < 0.0:
        raise ValueError("softening variable must be non-negative")
    return curve.sigma_u - curve.envelope(xi)


@dataclass(frozen=True)
class InterfaceState:
    """Committed internal variables of one mode: softening xi and compliance Q."""

    xi: float
    q_compliance: float


def initialize_crack_state(curve, kappa0: float) -> InterfaceState:
    """Small pre-damage state inserted at nucleation.

    The rigid law has infinite initial stiffness, so nucleation seeds the
    state with q = sigma_u * kappa0, placing it just inside the softening
    branch of the first envelope segment with a finite secant compliance.
    """
    if not 0.0 < kappa0 < 1.0:
        raise ValueError("kappa0 must be in (0, 1)")
    xi0 = -(curve.first_gf / curve.sigma_u) * math.log1p(-kappa0)
    q0 = curve.sigma_u * (1.0 - kappa0)
    return InterfaceState(xi=xi0, q_compliance=xi0 / q0)


@dataclass(frozen=True)
class CohesiveResult:
    traction: float
    tangent: float
    state: InterfaceState
    gamma: float
    inelastic: bool
    floored: bool = False


def _compliance_after(curve, state, gamma, xi_new, t_new):
    return state.q_compliance + curve.compliance_increment(state.xi, xi_new)


def _phi_and_derivative(curve, u, state, gamma):
    xi = state.xi + gamma
    t_env, inc, rate, q_prime = curve.consistency_terms(state.xi, xi)
    q_new = state.q_compliance + inc
    phi = u / q_new - t_env
    dphi = -u * rate / (q_new * q_new) + q_prime
    return phi, dphi, xi, t_env, q_new, rate


def _solve_gamma(curve, u, state, tol, max_iter):
    """Scalar consistency solve for the damage multiplier of one step.

    The mismatch is positive at zero and decays to zero from below in the
    deep tail, so the single sign change brackets the physical root; Newton
    runs inside the bracket with bisection as the safeguard. A plain
    tolerance on the mismatch alone would accept the tail asymptote.
    """
    lo = 0.0
    hi = max(u - state.xi, 1e-12)
    phi_hi = _phi_and_derivative(curve, u, state, hi)[0]
    grow = 0
    while phi_hi > 0.0:
        lo = hi
        hi *= 2.0
        phi_hi = _phi_and_derivative(curve, u, state, hi)[0]
        grow += 1
        if grow > 300:
            raise NoConvergence(grow, phi_hi)
    gamma = min(max(u - state.xi, lo + 0.25 * (hi - lo)), hi)
    phi = None
    for _ in range(max_iter + 200):
        phi, dphi, *_ = _phi_and_derivative(curve, u, state, gamma)
        if phi > 0.0:
            lo = gamma
        else:
            hi = gamma
        if hi - lo <= 1e-15 * max(hi, 1e-300):
            return 0.5 * (lo + hi)
        if phi == 0.0:
            return gamma
        gamma_new = gamma - phi / dphi if dphi != 0.0 else 0.5 * (lo + hi)
        if not lo < gamma_new < hi:
            gamma_new = 0.5 * (lo + hi)
        if abs(gamma_new - gamma) <= 5e-16 * max(abs(gamma_new), 1e-300):
            return gamma_new
        gamma = gamma_new
    raise NoConvergence(max_iter + 200, phi)


def _update_magnitude(curve, u, state, max_iter=50):
    """Return map for a non-negative opening magnitude."""
    tol = 1e-9 * curve.sigma_u
    t_trial = u / state.q_compliance
    t_env = curve.envelope(state.xi)
    if t_trial - t_env <= tol:
        return CohesiveResult(traction=t_trial, tangent=1.0 / state.q_compliance,
                              state=state, gamma=0.0, inelastic=False)
    gamma = _solve_gamma(curve, u, state, tol, max_iter)
    xi_new = state.xi + gamma
    t_new = curve.envelope(xi_new)
    q_new = _compliance_after(curve, state, gamma, xi_new, t_new)
    new_state = InterfaceState(xi=xi_new, q_compliance=q_new)
    tangent = consistent_tangent(curve, new_state, u, gamma, 1.0)
    return CohesiveResult(traction=u / q_new, tangent=tangent,
                          state=new_state, gamma=gamma, inelastic=True)


def consistent_tangent(curve, state, u, gamma, sign) -> float:
    """Algorithmic derivative of the updated traction with respect to the jump."""
    if gamma == 0.0:
        return 1.0 / state.q_compliance
    xi = state.xi
    t_env = curve.envelope(xi)
    c = curve.sigma_u / curve.segment_gf(xi)
    dq_dgamma = curve.compliance_rate(xi - gamma, xi)
    dqsoft_dgamma = c * t_env  # derivative of the softening traction q
    qc = state.q_compliance
    denom = 1.0 + sign * u * (-dq_dgamma / (qc * qc)) / dqsoft_dgamma
    return (1.0 / qc) / denom


def apply_traction_floor(traction, tangent, floor, loading):
    """Residual-traction regularization near complete softening.

    Under inelastic loading a traction whose magnitude fell below the floor is
    pinned at the floor (sign preserved) with a small negative tangent; under
    elastic unloading only the tangent is regularized.
    """
    if abs(traction) < floor:
        if loading:
            pinned = math.copysign(floor, traction) if traction != 0.0 else floor
            return pinned, -1e-6
        return traction, 1e-6
    return traction, tangent


def return_map_normal(curve, u_n, state, floor_k=0.0, max_iter=50) -> CohesiveResult:
    """Mode-I update for a converged-iterate opening u_n >= 0.

    Negative openings are the element contact regime and are clamped to zero
    here as a safety net.
    """
    res = _update_magnitude(curve, max(u_n, 0.0), state, max_iter)
    return _floored(curve, res, floor_k)


def return_map_tangential(curve, u_m, state, floor_k=0.0, max_iter=50) -> CohesiveResult:
    """Mode-II update; odd in the sliding sign, failure checked on |t|."""
    s = 1.0 if u_m >= 0.0 else -1.0
    res = _update_magnitude(curve, abs(u_m), state, max_iter)
    res = replace(res, traction=s * res.traction)
    return _floored(curve, res, floor_k)


def _floored(curve, res, floor_k):
    if floor_k <= 0.0:
        return res
    floor = floor_k * curve.sigma_u
    if curve.envelope(res.state.xi) <= floor:
        t, tg = apply_traction_floor(res.traction, res.tangent, floor, res.inelastic)
        return replace(res, traction=t, tangent=tg, floored=True)
    return res
