"""Bilinear quadrilateral machinery.

Shape functions, the fixed 2x2 Gauss rule, isoparametric Jacobian, the
strain-displacement operator and the incompatible-mode (bubble) operators.
Strain vectors are ordered (eps_xx, eps_yy, gamma_xy).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveJacobian

# parent-space node coordinates, counter-clockwise
NODE_XI = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])

_G = 1.0 / np.sqrt(3.0)
GAUSS_POINTS = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])
GAUSS_WEIGHTS = np.ones(4)


def shape_functions(xi: float, eta: float):
    """Values and parent-space gradients of the four bilinear shape functions.

    Returns (N, dN) with N shaped (4,) and dN shaped (4, 2), columns being
    d/dxi and d/deta.
    """
    n = 0.25 * (1.0 + NODE_XI[:, 0] * xi) * (1.0 + NODE_XI[:, 1] * eta)
    dn = np.empty((4, 2))
    dn[:, 0] = 0.25 * NODE_XI[:, 0] * (1.0 + NODE_XI[:, 1] * eta)
    dn[:, 1] = 0.25 * NODE_XI[:, 1] * (1.0 + NODE_XI[:, 0] * xi)
    return n, dn


def jacobian(coords: np.ndarray, xi: float, eta: float):
    """Jacobian of the bilinear map at one parent point.

    Returns (J, det, dN_phys): the 2x2 Jacobian, its determinant, and the
    shape-function gradients with respect to physical coordinates (4, 2).
    Raises NonPositiveJacobian when det <= 0.
    """
    _, dn = shape_functions(xi, eta)
    jac = coords.T @ dn  # J[i, j] = dx_i / dxi_j
    det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    if det <= 0.0:
        raise NonPositiveJacobian(f"det J = {det:g} at xi={xi:g}, eta={eta:g}")
    jinv = np.array([[jac[1, 1], -jac[0, 1]], [-jac[1, 0], jac[0, 0]]]) / det
    return jac, det, dn @ jinv


def b_matrix(dn_phys: np.ndarray) -> np.ndarray:
    """Strain-displacement matrix (3, 8) from physical shape gradients.

    DOF ordering is (u1x, u1y, u2x, u2y, ...). Column pair 2a, 2a+1 is the
    block for node a.
    """
    b = np.zeros((3, 8))
    b[0, 0::2] = dn_phys[:, 0]
    b[1, 1::2] = dn_phys[:, 1]
    b[2, 0::2] = dn_phys[:, 1]
    b[2, 1::2] = dn_phys[:, 0]
    return b


def incompatible_gradients(coords: np.ndarray, xi: float, eta: float) -> np.ndarray:
    """Raw bubble-mode strain operator (3, 4) at one parent point.

    Bubble functions are 1 - xi^2 and 1 - eta^2; column pairs (0, 1) and
    (2, 3) hold the x/y components of the first and second mode.
    """
    _, dn = shape_functions(xi, eta)
    jac = coords.T @ dn
    det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    if det <= 0.0:
        raise NonPositiveJacobian(f"det J = {det:g} at xi={xi:g}, eta={eta:g}")
    jinv = np.array([[jac[1, 1], -jac[0, 1]], [-jac[1, 0], jac[0, 0]]]) / det
    dm = np.array([[-2.0 * xi, 0.0], [0.0, -2.0 * eta]]) @ jinv  # (mode, phys dir)
    g = np.zeros((3, 4))
    for b in range(2):
        g[0, 2 * b] = dm[b, 0]
        g[1, 2 * b + 1] = dm[b, 1]
        g[2, 2 * b] = dm[b, 1]
        g[2, 2 * b + 1] = dm[b, 0]
    return g


@dataclass(frozen=True)
class ElementOps:
    """Per-element geometric cache at the four Gauss points.

    b:      (4, 3, 8) strain-displacement operators
    g_raw:  (4, 3, 4) bubble operators before orthogonalization
    g_tilde:(4, 3, 4) bubble operators with the quadrature mean removed
    wdet:   (4,) integration weights times Jacobian determinants
    gp_xy:  (4, 2) physical Gauss point positions
    shape:  (4, 4) shape-function values, row per Gauss point
    """

    coords: np.ndarray
    b: np.ndarray
    g_raw: np.ndarray
    g_tilde: np.ndarray
    wdet: np.ndarray
    gp_xy: np.ndarray
    shape: np.ndarray
    area: float

    @property
    def diameter(self) -> float:
        d = self.coords[:, None, :] - self.coords[None, :, :]
        return float(np.sqrt((d * d).sum(axis=2)).max())


def element_ops(coords: np.ndarray) -> ElementOps:
    """Evaluate all operators of one element at the 2x2 Gauss points.

    The bubble operators are orthogonalized against constant stresses with
    the same quadrature used everywhere else, so their quadrature sum
    vanishes to machine precision.
    """
    coords = np.asarray(coords, dtype=float)
    b = np.empty((4, 3, 8))
    g = np.empty((4, 3, 4))
    wdet = np.empty(4)
    gp_xy = np.empty((4, 2))
    shape = np.empty((4, 4))
    for i, (xi, eta) in enumerate(GAUSS_POINTS):
        n, _ = shape_functions(xi, eta)
        _, det, dn_phys = jacobian(coords, xi, eta)
        b[i] = b_matrix(dn_phys)
        g[i] = incompatible_gradients(coords, xi, eta)
        wdet[i] = GAUSS_WEIGHTS[i] * det
        gp_xy[i] = n @ coords
        shape[i] = n
    area = float(wdet.sum())
    mean = np.tensordot(wdet, g, axes=1) / area
    g_tilde = g - mean[None, :, :]
    return ElementOps(coords=coords, b=b, g_raw=g, g_tilde=g_tilde, wdet=wdet,
                      gp_xy=gp_xy, shape=shape, area=area)


def elasticity_matrix(e_mod: float, nu: float, plane: str) -> np.ndarray:
    """Plane-stress or plane-strain constitutive matrix (3, 3)."""
    if not -1.0 < nu < 0.5:
        raise ValueError(f"Poisson ratio {nu} outside (-1, 0.5)")
    if plane == "stress":
        f = e_mod / (1.0 - nu * nu)
        return f * np.array([[1.0, nu, 0.0],
                             [nu, 1.0, 0.0],
                             [0.0, 0.0, 0.5 * (1.0 - nu)]])
    if plane == "strain":
        f = e_mod / ((1.0 + nu) * (1.0 - 2.0 * nu))
        return f * np.array([[1.0 - nu, nu, 0.0],
                             [nu, 1.0 - nu, 0.0],
                             [0.0, 0.0, 0.5 * (1.0 - 2.0 * nu)]])
    raise ValueError(f"plane must be 'stress' or 'strain', got {plane!r}")
