"""Local crack-nucleation criterion.

After a converged increment the major principal stress is evaluated at every
bulk Gauss point of every uncracked element. An element whose largest value
reaches its tensile strength receives an embedded discontinuity anchored at
the centroid of the triggering points, with the normal along the major
principal direction of their averaged stress.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PrincipalState:
    sigma_1: float   # major
    sigma_2: float   # minor
    angle: float     # direction of the major axis, in (-pi/2, pi/2]


def principal_stress(sigma) -> PrincipalState:
    """Closed-form in-plane eigendecomposition of (s_xx, s_yy, s_xy).

    The half-angle arctangent is evaluated with the two-argument form so the
    returned angle always points along the major axis; the explicit
    eigenvector check below guards the degenerate equal-eigenvalue case.
    """
    sxx, syy, sxy = (float(v) for v in sigma)
    mean = 0.5 * (sxx + syy)
    radius = math.hypot(0.5 * (sxx - syy), sxy)
    s1, s2 = mean + radius, mean - radius
    if radius < 1e-14 * max(abs(mean), 1.0):
        return PrincipalState(sigma_1=s1, sigma_2=s2, angle=0.0)
    angle = 0.5 * math.atan2(2.0 * sxy, sxx - syy)
    # verify against the explicit major eigenvector; rotate if it matched the minor one
    v = np.array([math.cos(angle), math.sin(angle)])
    tensor = np.array([[sxx, sxy], [sxy, syy]])
    if abs(v @ tensor @ v - s1) > abs(v @ tensor @ v - s2):
        angle += 0.5 * math.pi
    if angle > 0.5 * math.pi:
        angle -= math.pi
    if angle <= -0.5 * math.pi:
        angle += math.pi
    return PrincipalState(sigma_1=s1, sigma_2=s2, angle=angle)


@dataclass(frozen=True)
class NucleationDecision:
    element: int
    x_ed: np.ndarray
    alpha_ed: float
    gp_ids: tuple
    sigma_p: float


def check_element(gp_stresses, gp_xy, sigma_un, element=0,
                  tie_tol=1e-9, trigger_tol=1e-12) -> NucleationDecision | None:
    """Evaluate the criterion for one uncracked element.

    gp_stresses: (4, 3) converged bulk stresses, gp_xy: (4, 2) physical Gauss
    point positions. Returns None when the maximum principal stress over the
    points stays below sigma_un; trigger_tol is a relative grace so a state
    loaded exactly to the strength counts as reaching it.
    """
    p1 = np.array([principal_stress(s).sigma_1 for s in gp_stresses])
    sigma_p = float(p1.max())
    if sigma_p < sigma_un * (1.0 - trigger_tol):
        return None
    members = np.where(p1 >= sigma_p - tie_tol * abs(sigma_p))[0]
    x_ed = np.asarray(gp_xy)[members].mean(axis=0)
    sigma_ed = np.asarray(gp_stresses)[members].mean(axis=0)
    alpha_ed = principal_stress(sigma_ed).angle
    return NucleationDecision(element=element, x_ed=x_ed, alpha_ed=alpha_ed,
                              gp_ids=tuple(int(i) for i in members), sigma_p=sigma_p)


def nucleation_sweep(gp_stresses_all, gp_xy_all, sigma_un_all, cracked, can_crack):
    """Run the criterion over every eligible element, in element-id order.

    gp_stresses_all: (n_el, 4, 3); sigma_un_all: per-element strengths
    (perturbations and weakened elements included). Cracked or non-cracking
    elements are skipped. Returns a list of decisions.
    """
    decisions = []
    for e in range(len(gp_stresses_all)):
        if cracked[e] or not can_crack[e]:
            continue
        dec = check_element(gp_stresses_all[e], gp_xy_all[e], sigma_un_all[e], element=e)
        if dec is not None:
            decisions.append(dec)
    return decisions
