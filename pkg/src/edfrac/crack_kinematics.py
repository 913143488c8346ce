"""Geometry and strain operators of the embedded discontinuity.

A crack inside a quadrilateral is a straight segment through an anchor point,
with unit normal n at a given angle to the global x axis and tangent
m = (-n_y, n_x). The element domain splits into a positive side (nodes with
(x - anchor) . n > 0) and a negative side. Two separation modes describe
rigid opening (along n) and sliding (along m) of the positive side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CrackOutsideElement, DegenerateCut
from .quad4 import ElementOps, shape_functions

# 2-point Gauss rule on the crack segment (positions in [0, 1])
LINE_GAUSS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


@dataclass(frozen=True)
class CrackGeometry:
    x_ed: np.ndarray          # anchor point, mm
    alpha_ed: float           # angle of n versus global x, rad
    n: np.ndarray             # unit normal to the segment
    m: np.ndarray             # unit tangent, (-n_y, n_x)
    l_gamma: float            # segment length, mm
    endpoints: np.ndarray     # (2, 2), ordered along m
    omega_plus: np.ndarray    # (4,) bool, nodes on the positive side

    @property
    def line_weights(self) -> np.ndarray:
        return np.full(2, 0.5 * self.l_gamma)

    def side_of(self, point) -> float:
        return float((np.asarray(point) - self.x_ed) @ self.n)


def _point_in_quad(coords, point, tol):
    """Crossing-number test with a small inward tolerance."""
    inside = True
    for a in range(4):
        pa, pb = coords[a], coords[(a + 1) % 4]
        edge = pb - pa
        cross = edge[0] * (point[1] - pa[1]) - edge[1] * (point[0] - pa[0])
        if cross <= tol:  # CCW polygon: interior points have positive cross products
            inside = False
    return inside


def _try_cut(coords, x_ed, n, m, node_tol):
    hits = []
    for a in range(4):
        pa, pb = coords[a], coords[(a + 1) % 4]
        edge = pb - pa
        denom = edge[0] * m[1] - edge[1] * m[0]
        if abs(denom) < 1e-14 * max(np.linalg.norm(edge), 1.0):
            continue  # edge parallel to the cut
        # solve pa + t*edge = x_ed + s*m
        rhs = x_ed - pa
        t = (rhs[0] * m[1] - rhs[1] * m[0]) / denom
        if -1e-12 <= t <= 1.0 + 1e-12:
            hits.append((a, min(max(t, 0.0), 1.0), pa + min(max(t, 0.0), 1.0) * edge))
    # drop duplicates from adjacent edges meeting at a corner
    pts = []
    for _, _, p in hits:
        if all(np.linalg.norm(p - q) > node_tol for q in pts):
            pts.append(p)
    if len(pts) != 2:
        return None
    for p in pts:
        if any(np.linalg.norm(p - coords[a]) < node_tol for a in range(4)):
            return None
    s = np.array([(p - x_ed) @ m for p in pts])
    order = np.argsort(s)
    return np.asarray(pts)[order]


def embed_crack(coords: np.ndarray, x_ed, alpha_ed: float,
                node_tol_rel: float = 1e-8) -> CrackGeometry:
    """Cut an element by the line through x_ed with normal at angle alpha_ed.

    The cut must intersect the boundary in exactly two points away from the
    nodes; a near-node cut is retried once with the angle nudged by +-1e-6 rad
    and raises DegenerateCut if still degenerate. x_ed must lie strictly
    inside the element.
    """
    coords = np.asarray(coords, dtype=float)
    x_ed = np.asarray(x_ed, dtype=float)
    diam = max(np.linalg.norm(coords[a] - coords[b]) for a in range(4) for b in range(a + 1, 4))
    node_tol = node_tol_rel * diam
    if not _point_in_quad(coords, x_ed, tol=1e-12 * diam * diam):
        raise CrackOutsideElement(f"anchor {x_ed} not inside element")

    for trial in (alpha_ed, alpha_ed + 1e-6, alpha_ed - 1e-6):
        n = np.array([np.cos(trial), np.sin(trial)])
        m = np.array([-n[1], n[0]])
        side = (coords - x_ed) @ n
        if np.any(np.abs(side) < node_tol) or np.all(side > 0) or np.all(side < 0):
            continue
        endpoints = _try_cut(coords, x_ed, n, m, node_tol)
        if endpoints is None:
            continue
        l_gamma = float(np.linalg.norm(endpoints[1] - endpoints[0]))
        return CrackGeometry(x_ed=x_ed, alpha_ed=float(trial), n=n, m=m,
                             l_gamma=l_gamma, endpoints=endpoints,
                             omega_plus=side > 0)
    raise DegenerateCut(f"cut at angle {alpha_ed:g} through {x_ed} passes a node")


def heaviside(crack: CrackGeometry, point, side: int | None = None) -> float:
    """1 on the positive side, 0 on the negative; 'side' breaks ties on the line."""
    s = crack.side_of(point)
    if side is not None and abs(s) < 1e-12:
        return 1.0 if side > 0 else 0.0
    return 1.0 if s > 0.0 else 0.0


def separation_interpolation(crack: CrackGeometry, coords, xi, eta,
                             side: int | None = None):
    """Interpolation vectors of the two separation modes at one parent point.

    Returns (p1, p2): the common scalar factor is the Heaviside value minus
    the sum of positive-side shape functions, so both vanish at every node and
    jump by n (respectively m) across the crack.
    """
    n_vals, _ = shape_functions(xi, eta)
    point = n_vals @ np.asarray(coords, dtype=float)
    f = heaviside(crack, point, side) - n_vals[crack.omega_plus].sum()
    return f * crack.n, f * crack.m


def displacement_field(coords, crack, d, rho, alpha, xi, eta, side=None):
    """Total displacement at one parent point (nodal + bubble + separation parts)."""
    n_vals, _ = shape_functions(xi, eta)
    d = np.asarray(d, dtype=float).reshape(4, 2)
    u = n_vals @ d
    m1 = 1.0 - xi * xi
    m2 = 1.0 - eta * eta
    rho = np.asarray(rho, dtype=float).reshape(2, 2)
    u = u + m1 * rho[0] + m2 * rho[1]
    if crack is not None and alpha is not None:
        p1, p2 = separation_interpolation(crack, coords, xi, eta, side)
        u = u + alpha[0] * p1 + alpha[1] * p2
    return u


def normal_projector(n: np.ndarray) -> np.ndarray:
    """Matrix (3, 2) mapping a direction vector to its traction-projection row.

    Column layout matches the strain/stress Voigt ordering, so that
    (normal_projector(n) @ v) . sigma equals the (n, v) stress component.
    """
    return np.array([[n[0], 0.0], [0.0, n[1]], [n[1], n[0]]])


@dataclass(frozen=True)
class CrackOperators:
    """Per-Gauss-point strain operators of one embedded crack.

    g_bar:  (4, 3, 2) regular operators of the real separation strains
    g_hat:  (4, 3, 2) regular parts of the virtual operators
    bn_n, bn_m: (3,) traction projections of n and m
    """

    g_bar: np.ndarray
    g_hat: np.ndarray
    bn_n: np.ndarray
    bn_m: np.ndarray
    line_weights: np.ndarray


def crack_strain_operators(eops: ElementOps, crack: CrackGeometry) -> CrackOperators:
    """Build the bulk operators of the separation modes.

    The real regular part at each Gauss point is minus the sum of the
    positive-side B blocks projected on n (mode 1) or m (mode 2). The virtual
    regular part subtracts the quadrature mean and the line contribution so
    the full virtual operator integrates to zero against constant stresses.
    """
    bn = normal_projector(crack.n)
    bn_n = bn @ crack.n
    bn_m = bn @ crack.m
    plus = np.where(crack.omega_plus)[0]
    g_bar = np.zeros((4, 3, 2))
    for gp in range(4):
        acc_n = np.zeros(3)
        acc_m = np.zeros(3)
        for a in plus:
            block = eops.b[gp][:, 2 * a:2 * a + 2]
            acc_n += block @ crack.n
            acc_m += block @ crack.m
        g_bar[gp, :, 0] = -acc_n
        g_bar[gp, :, 1] = -acc_m
    mean = np.tensordot(eops.wdet, g_bar, axes=1) / eops.area
    corr = (crack.l_gamma / eops.area) * np.column_stack([bn_n, bn_m])
    g_hat = g_bar - mean[None, :, :] - corr[None, :, :]
    return CrackOperators(g_bar=g_bar, g_hat=g_hat, bn_n=bn_n, bn_m=bn_m,
                          line_weights=crack.line_weights)
