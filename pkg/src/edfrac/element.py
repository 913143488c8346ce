"""Quadrilateral with incompatible modes and an optional embedded crack.

The element carries 8 nodal DOFs, 4 bubble parameters rho and, once cracked,
2 separation parameters alpha. The bulk is linear elastic, so all stiffness
blocks except the interface line term are constant and cached; residuals are
linear compositions of the cached blocks plus the interface traction terms.
Internal parameters are eliminated per element by static condensation and
recovered after each global solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .crack_kinematics import CrackGeometry, CrackOperators, crack_strain_operators
from .errors import SingularLocalBlock
from .quad4 import element_ops


@dataclass
class ElementState:
    """Mutable per-element unknowns and committed interface history."""

    crack: CrackGeometry | None = None
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(2))
    rho: np.ndarray = field(default_factory=lambda: np.zeros(4))
    iface_n: object = None          # committed InterfaceState, normal mode
    iface_m: object = None          # committed InterfaceState, sliding mode
    closed: bool = False            # mode-I contact clamp active


@dataclass
class CondensedElement:
    k_c: np.ndarray                 # (8, 8)
    r_c: np.ndarray                 # (8,)
    k_bb_inv: np.ndarray
    k_bd: np.ndarray
    r_b: np.ndarray
    n_rho: int = 4


class Q6EDElement:
    """One element: cached operators, residuals, tangent blocks, condensation."""

    def __init__(self, coords, c_matrix, thickness, incompatible_modes=True):
        self.eops = element_ops(coords)
        self.c = np.asarray(c_matrix, dtype=float)
        self.thickness = float(thickness)
        self.incompatible_modes = incompatible_modes
        e = self.eops
        w = e.wdet * self.thickness
        cb = np.einsum("ij,gjk->gik", self.c, e.b)      # (4, 3, 8)
        gt = e.g_tilde if incompatible_modes else np.zeros_like(e.g_tilde)
        cg = np.einsum("ij,gjk->gik", self.c, gt)
        self.k_dd = np.einsum("g,gji,gjk->ik", w, e.b, cb)
        self.k_dr = np.einsum("g,gji,gjk->ik", w, e.b, cg)
        self.k_rd = self.k_dr.T
        self.k_rr = np.einsum("g,gji,gjk->ik", w, gt, cg)
        if not incompatible_modes:
            self.k_rr = np.eye(4)  # constrains rho to zero through the local solve
        self.k_rr_inv = np.linalg.inv(self.k_rr)
        self._g_tilde = gt
        self.crack_ops: CrackOperators | None = None
        self.k_da = self.k_ra = self.k_ad = self.k_ar = self.k_aa_bulk = None

    # -- crack installation ------------------------------------------------

    def embed(self, crack: CrackGeometry) -> None:
        self.crack_ops = crack_strain_operators(self.eops, crack)
        e = self.eops
        w = e.wdet * self.thickness
        gbar = self.crack_ops.g_bar                      # (4, 3, 2)
        ghat = self.crack_ops.g_hat
        cb = np.einsum("ij,gjk->gik", self.c, e.b)
        cg = np.einsum("ij,gjk->gik", self.c, self._g_tilde)
        ca = np.einsum("ij,gjk->gik", self.c, gbar)
        self.k_da = np.einsum("g,gji,gjk->ik", w, e.b, ca)
        self.k_ra = np.einsum("g,gji,gjk->ik", w, self._g_tilde, ca)
        self.k_ad = np.einsum("g,gji,gjk->ik", w, ghat, cb)
        self.k_ar = np.einsum("g,gji,gjk->ik", w, ghat, cg)
        self.k_aa_bulk = np.einsum("g,gji,gjk->ik", w, ghat, ca)
        self._crack = crack

    # -- field evaluation ----------------------------------------------------

    def bulk_strain(self, d_e, state: ElementState, eps_t=None) -> np.ndarray:
        """Regular (bounded) strain at the Gauss points, thermal part removed."""
        e = self.eops
        eps = np.einsum("gij,j->gi", e.b, d_e)
        eps += np.einsum("gij,j->gi", self._g_tilde, state.rho)
        if self.crack_ops is not None:
            eps += np.einsum("gij,j->gi", self.crack_ops.g_bar, state.alpha)
        if eps_t is not None:
            eps = eps - eps_t
        return eps

    def bulk_stress(self, d_e, state: ElementState, eps_t=None) -> np.ndarray:
        return self.bulk_strain(d_e, state, eps_t) @ self.c.T

    # -- residuals and tangents ----------------------------------------------

    def thermal_forces(self, eps_t):
        """Equivalent forces of a prescribed strain field given at the GPs."""
        e = self.eops
        w = e.wdet * self.thickness
        ceps = eps_t @ self.c.T
        f_d = np.einsum("g,gji,gj->i", w, e.b, ceps)
        f_r = np.einsum("g,gji,gj->i", w, self._g_tilde, ceps)
        if self.crack_ops is None:
            return f_d, f_r, np.zeros(2)
        f_a = np.einsum("g,gji,gj->i", w, self.crack_ops.g_hat, ceps)
        return f_d, f_r, f_a

    def residuals(self, d_e, state: ElementState, tractions=None, f_ext=None,
                  eps_t=None, thermal_triple=None):
        """(R_d, R_rho, h) at the current iterate.

        tractions = (t_n, t_m) from the cohesive update at the current alpha;
        required for cracked elements. The h entries weakly project the bulk
        stress onto the interface traction, with the line integral exact for
        the constant separation modes. thermal_triple short-circuits the
        thermal force quadrature with precomputed (f_d, f_r, f_a).
        """
        r_d = self.k_dd @ d_e + self.k_dr @ state.rho
        r_r = self.k_rd @ d_e + self.k_rr @ state.rho
        if not self.incompatible_modes:
            r_r = state.rho.copy()
        h = np.zeros(2)
        if self.crack_ops is not None:
            r_d += self.k_da @ state.alpha
            if self.incompatible_modes:
                r_r += self.k_ra @ state.alpha
            h = self.k_ad @ d_e + self.k_ar @ state.rho + self.k_aa_bulk @ state.alpha
            h += self.thickness * self._crack.l_gamma * np.asarray(tractions)
        if thermal_triple is not None or eps_t is not None:
            f_d, f_r, f_a = (thermal_triple if thermal_triple is not None
                             else self.thermal_forces(eps_t))
            r_d -= f_d
            if self.incompatible_modes:
                r_r -= f_r
            if self.crack_ops is not None:
                h -= f_a
        if f_ext is not None:
            r_d = r_d - f_ext
        if state.closed and self.crack_ops is not None:
            h[0] = self._contact_scale(state) * state.alpha[0]
        return r_d, r_r, h

    def _contact_scale(self, state: ElementState) -> float:
        q = state.iface_n.q_compliance if state.iface_n is not None else 1.0
        return self.thickness * self._crack.l_gamma / max(q, 1e-16)

    def tangent_blocks(self, state: ElementState | None = None, dt_n=0.0, dt_m=0.0):
        """All stiffness blocks; interface tangents enter the alpha diagonal."""
        blocks = {"dd": self.k_dd, "dr": self.k_dr, "rd": self.k_rd, "rr": self.k_rr}
        if self.crack_ops is not None:
            line = self.thickness * self._crack.l_gamma
            k_aa = self.k_aa_bulk + line * np.diag([dt_n, dt_m])
            k_ad = self.k_ad.copy()
            k_ar = self.k_ar.copy()
            if state is not None and state.closed:
                scale = self._contact_scale(state)
                k_aa = k_aa.copy()
                k_aa[0, :] = 0.0
                k_aa[0, 0] = scale
                k_ad[0, :] = 0.0
                k_ar[0, :] = 0.0
            blocks.update({"da": self.k_da, "ra": self.k_ra, "ad": k_ad,
                           "ar": k_ar, "aa": k_aa})
        return blocks

    # -- condensation ----------------------------------------------------------

    def condense(self, blocks, residuals) -> CondensedElement:
        r_d, r_r, h = residuals
        if "aa" in blocks:
            k_bb = np.block([[blocks["rr"], blocks["ra"]],
                             [blocks["ar"], blocks["aa"]]])
            k_db = np.hstack([blocks["dr"], blocks["da"]])
            k_bd = np.vstack([blocks["rd"], blocks["ad"]])
            r_b = np.concatenate([r_r, h])
        else:
            k_bb = blocks["rr"]
            k_db = blocks["dr"]
            k_bd = blocks["rd"]
            r_b = r_r
        k_bb_inv = _guarded_inverse(k_bb)
        k_c = blocks["dd"] - k_db @ k_bb_inv @ k_bd
        r_c = r_d - k_db @ (k_bb_inv @ r_b)
        return CondensedElement(k_c=k_c, r_c=r_c, k_bb_inv=k_bb_inv,
                                k_bd=k_bd, r_b=r_b, n_rho=4)

    def recover_local(self, condensed: CondensedElement, delta_d):
        """Internal-parameter increments consistent with a nodal increment."""
        delta_b = -condensed.k_bb_inv @ (condensed.r_b + condensed.k_bd @ delta_d)
        n = condensed.n_rho
        return delta_b[:n], delta_b[n:]

    # -- inertia ---------------------------------------------------------------

    def mass_matrix(self, density: float) -> np.ndarray:
        """Consistent mass (8, 8); the internal parameters carry no inertia."""
        if density <= 0.0:
            raise ValueError("density must be positive")
        e = self.eops
        m = np.zeros((8, 8))
        for gp in range(4):
            n = e.shape[gp]
            w = e.wdet[gp] * self.thickness * density
            for a in range(4):
                for c in range(4):
                    m[2 * a, 2 * c] += w * n[a] * n[c]
                    m[2 * a + 1, 2 * c + 1] += w * n[a] * n[c]
        return m


def _guarded_inverse(k_bb: np.ndarray) -> np.ndarray:
    try:
        inv = np.linalg.inv(k_bb)
    except np.linalg.LinAlgError as exc:
        raise SingularLocalBlock(str(exc)) from None
    # 1-norm condition estimate, cheap compared to an SVD
    cond = np.abs(k_bb).sum(axis=0).max() * np.abs(inv).sum(axis=0).max()
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularLocalBlock(f"internal block condition estimate {cond:g}")
    return inv
