"""Incremental solution drivers on the condensed global system.

The bulk is linear elastic, so uncracked elements contribute constant
condensed matrices and their residuals are cached matrix-vector products;
only cracked elements are re-condensed each iteration (their interface
tangent changes), in one batched pass. The sparsity pattern is fixed, so
assembly just refills the data vector of a prebuilt matrix. The system is
non-symmetric and solved with a sparse direct factorization. After every
converged increment the interface history is committed and the nucleation
sweep may embed new discontinuities.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cohesive import initialize_crack_state, return_map_normal, return_map_tangential
from .crack_kinematics import embed_crack
from .element import ElementState, Q6EDElement
from .errors import (DegenerateCut, IncrementDiverged, SingularGlobalMatrix,
                     SingularLocalBlock)
from .nucleation import nucleation_sweep
from .postproc import EnergyLedger


@dataclass
class NewmarkParams:
    """Trapezoidal-rule time stepping (unconditionally stable)."""

    dt: float
    dt_max: float
    t_end: float
    gamma: float = 0.5
    beta: float = 0.25
    adaptive: bool = True

    def __post_init__(self):
        if not (2.0 * self.beta >= self.gamma >= 0.5):
            raise ValueError("stability requires 2*beta >= gamma >= 1/2")


@dataclass
class CrackRecord:
    elem: int
    idx: int                 # row in the batched crack arrays
    geom: object
    curve_n: object
    curve_m: object
    state_n: object          # committed interface history
    state_m: object
    alpha: np.ndarray = None             # view into the batch array
    alpha_committed: np.ndarray = None
    closed: bool = False
    res_n: object = None     # pending cohesive results at the current iterate
    res_m: object = None
    spec_diss: np.ndarray = field(default_factory=lambda: np.zeros(2))


@dataclass
class Dirichlet:
    dofs: np.ndarray
    value_fn: object         # t -> prescribed value


@dataclass
class PointLoad:
    vector: np.ndarray       # unit force pattern over all dofs
    value_fn: object         # t -> scale; None marks load-factor scaling


def dof_indices(nodes, dof):
    nodes = np.asarray(nodes, dtype=int)
    if dof == "ux":
        return 2 * nodes
    if dof == "uy":
        return 2 * nodes + 1
    if dof == "both":
        return np.sort(np.concatenate([2 * nodes, 2 * nodes + 1]))
    raise ValueError(f"dof must be 'ux', 'uy' or 'both', got {dof!r}")


class Model:
    """Mesh-level state: element caches, unknowns, cracks and bookkeeping."""

    def __init__(self, mesh, c_mats, densities, sigma_un, sigma_um,
                 curve_factory_n, curve_factory_m, can_crack=None,
                 kappa0=1e-5, k_full_soft=0.0, incompatible_modes=True):
        self.mesh = mesh
        nel = mesh.n_elements
        self.ndof = 2 * mesh.n_nodes
        self.c_mats = np.asarray(c_mats, dtype=float)
        self.densities = np.asarray(densities, dtype=float)
        self.sigma_un = np.asarray(sigma_un, dtype=float)
        self.sigma_um = np.asarray(sigma_um, dtype=float)
        self.curve_factory_n = curve_factory_n
        self.curve_factory_m = curve_factory_m
        self.can_crack = (np.ones(nel, dtype=bool) if can_crack is None
                          else np.asarray(can_crack, dtype=bool))
        self.kappa0 = kappa0
        self.k_full_soft = k_full_soft

        self.elements = [Q6EDElement(mesh.coords(e), self.c_mats[e], mesh.thickness,
                                     incompatible_modes) for e in range(nel)]
        conn = mesh.elements
        self.dofmap = np.empty((nel, 8), dtype=int)
        self.dofmap[:, 0::2] = 2 * conn
        self.dofmap[:, 1::2] = 2 * conn + 1

        self.kdd = np.stack([el.k_dd for el in self.elements])
        self.kdr = np.stack([el.k_dr for el in self.elements])
        self.krr = np.stack([el.k_rr for el in self.elements])
        self.kc0 = np.stack([el.k_dd - el.k_dr @ el.k_rr_inv @ el.k_rd
                             for el in self.elements])
        self.kdr_krrinv = np.stack([el.k_dr @ el.k_rr_inv for el in self.elements])
        self.krr_inv = np.stack([el.k_rr_inv for el in self.elements])
        self.krd = np.stack([el.k_rd for el in self.elements])
        self.b_ops = np.stack([el.eops.b for el in self.elements])
        self.gt_ops = np.stack([el._g_tilde for el in self.elements])
        self.wdet = np.stack([el.eops.wdet for el in self.elements])
        self.gp_xy = np.stack([el.eops.gp_xy for el in self.elements])

        self._build_assembly_pattern(nel)

        self.d = np.zeros(self.ndof)
        self.rho = np.zeros((nel, 4))
        self.v = np.zeros(self.ndof)
        self.a = np.zeros(self.ndof)
        self.d_committed = self.d.copy()
        self.rho_committed = self.rho.copy()
        self.v_committed = self.v.copy()
        self.a_committed = self.a.copy()

        self.cracks: dict[int, CrackRecord] = {}
        self.cracked = np.zeros(nel, dtype=bool)
        self._empty_cracks()
        self.ledger = EnergyLedger()
        self.last_residual = np.zeros(self.ndof)
        self._mass = None
        self._mass_aligned = None
        self.eps_t = None        # (nel, 4, 3) while a thermal field is active
        self._f_th_d = None
        self._f_th_r = None
        self._f_th_a = None      # per-crack batch, cleared with the field
        self._free_prepared = None

    # -- fixed-pattern sparse assembly ---------------------------------------

    def _build_assembly_pattern(self, nel):
        rows = np.broadcast_to(self.dofmap[:, :, None], (nel, 8, 8)).reshape(-1)
        cols = np.broadcast_to(self.dofmap[:, None, :], (nel, 8, 8)).reshape(-1)
        order = np.lexsort((cols, rows))
        rs, cs = rows[order], cols[order]
        new_entry = np.empty(len(rs), dtype=bool)
        new_entry[0] = True
        new_entry[1:] = (rs[1:] != rs[:-1]) | (cs[1:] != cs[:-1])
        seg = np.cumsum(new_entry) - 1
        nnz = int(seg[-1]) + 1
        starts = np.where(new_entry)[0]
        indices = cs[starts].astype(np.int32)
        indptr = np.zeros(self.ndof + 1, dtype=np.int32)
        np.add.at(indptr, rs[starts] + 1, 1)
        indptr = np.cumsum(indptr, dtype=np.int32)
        self._asm_order = order
        self._asm_seg = seg
        self._nnz = nnz
        self._k = sp.csr_matrix((np.zeros(nnz), indices, indptr),
                                shape=(self.ndof, self.ndof))
        self._entry_rows = np.repeat(np.arange(self.ndof, dtype=np.int32),
                                     np.diff(indptr))
        self._kff = None
        self._diag_pos = None

    def _assemble_data(self, vals):
        return np.bincount(self._asm_seg, weights=vals[self._asm_order],
                           minlength=self._nnz)

    def prepare_reduction(self, free):
        free = np.asarray(free, dtype=int)
        mask = np.zeros(self.ndof, dtype=bool)
        mask[free] = True
        keep = mask[self._entry_rows] & mask[self._k.indices]
        self._keep_idx = np.where(keep)[0]
        renumber = -np.ones(self.ndof, dtype=np.int32)
        renumber[free] = np.arange(len(free), dtype=np.int32)
        sub_indices = renumber[self._k.indices[self._keep_idx]]
        counts = np.bincount(renumber[self._entry_rows[self._keep_idx]],
                             minlength=len(free))
        sub_indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self._kff = sp.csr_matrix((np.zeros(len(self._keep_idx)), sub_indices,
                                   sub_indptr), shape=(len(free), len(free)))
        self._free_prepared = free

    def submatrix(self, k, free):
        """Constrained-DOF-eliminated view of an assembled matrix."""
        if self._free_prepared is None or len(free) != len(self._free_prepared) \
                or not np.array_equal(free, self._free_prepared):
            self.prepare_reduction(free)
        self._kff.data[:] = k.data[self._keep_idx]
        return self._kff

    def with_scaled_mass(self, k, c_a):
        """k + c_a * M on the shared sparsity pattern (no sparse addition)."""
        return sp.csr_matrix((k.data + c_a * self.mass_aligned(), self._k.indices,
                              self._k.indptr), shape=k.shape)

    def with_diagonal(self, k, value):
        """k + value * identity through the cached diagonal positions."""
        if self._diag_pos is None:
            idx = []
            indptr, indices = self._k.indptr, self._k.indices
            for i in range(self.ndof):
                row = indices[indptr[i]:indptr[i + 1]]
                idx.append(indptr[i] + int(np.searchsorted(row, i)))
            self._diag_pos = np.asarray(idx)
        data = k.data.copy()
        data[self._diag_pos] += value
        return sp.csr_matrix((data, self._k.indices, self._k.indptr), shape=k.shape)

    def mass(self):
        if self._mass is None:
            self._mass = sp.csr_matrix(
                (self.mass_aligned().copy(), self._k.indices, self._k.indptr),
                shape=(self.ndof, self.ndof))
        return self._mass

    def mass_aligned(self):
        if self._mass_aligned is None:
            vals = np.stack([el.mass_matrix(self.densities[e])
                             for e, el in enumerate(self.elements)]).reshape(-1)
            self._mass_aligned = self._assemble_data(vals)
        return self._mass_aligned

    # -- element state helpers ------------------------------------------------

    def element_state(self, e) -> ElementState:
        rec = self.cracks.get(e)
        if rec is None:
            return ElementState(rho=self.rho[e])
        return ElementState(crack=rec.geom, alpha=rec.alpha, rho=self.rho[e],
                            iface_n=rec.state_n, iface_m=rec.state_m,
                            closed=rec.closed)

    def bulk_stresses(self) -> np.ndarray:
        """Gauss point stresses of every element (nel, 4, 3)."""
        d_e = self.d[self.dofmap]
        eps = np.einsum("egij,ej->egi", self.b_ops, d_e)
        eps += np.einsum("egij,ej->egi", self.gt_ops, self.rho)
        if len(self._ck_ids):
            eps[self._ck_ids] += np.einsum("egij,ej->egi", self._ck_gbar,
                                           self._ck_alpha)
        if self.eps_t is not None:
            eps = eps - self.eps_t
        return np.einsum("eij,egj->egi", self.c_mats, eps)

    # -- thermal field ---------------------------------------------------------

    def set_thermal_field(self, eps_t):
        """Install the prescribed strain field and cache its force vectors."""
        self.eps_t = eps_t
        if eps_t is None:
            self._f_th_d = self._f_th_r = self._f_th_a = None
            return
        t = self.mesh.thickness
        ceps = np.einsum("eij,egj->egi", self.c_mats, eps_t)
        self._f_th_d = t * np.einsum("eg,egji,egj->ei", self.wdet, self.b_ops, ceps)
        self._f_th_r = t * np.einsum("eg,egji,egj->ei", self.wdet, self.gt_ops, ceps)
        self._refresh_crack_thermal()

    def _refresh_crack_thermal(self):
        if self.eps_t is None or not len(self._ck_ids):
            self._f_th_a = None if self.eps_t is None else np.zeros((0, 2))
            return
        ids = self._ck_ids
        t = self.mesh.thickness
        ceps = np.einsum("eij,egj->egi", self.c_mats[ids], self.eps_t[ids])
        ghat = np.stack([self.elements[e].crack_ops.g_hat for e in ids])
        self._f_th_a = t * np.einsum("eg,egji,egj->ei", self.wdet[ids], ghat, ceps)

    # -- cracked-element batch --------------------------------------------------

    def _empty_cracks(self):
        self._ck_ids = np.zeros(0, dtype=int)
        self._ck_alpha = np.zeros((0, 2))
        self._ck_alpha_committed = np.zeros((0, 2))
        self._ck_closed = np.zeros(0, dtype=bool)
        self._ck_line = np.zeros(0)
        self._ck_gbar = np.zeros((0, 4, 3, 2))
        self._ck_payload = None

    def _rebuild_crack_arrays(self):
        recs = list(self.cracks.values())
        if not recs:
            self._empty_cracks()
            return
        ids = np.array([rec.elem for rec in recs], dtype=int)
        ncr = len(recs)
        alpha = np.zeros((ncr, 2))
        alpha_c = np.zeros((ncr, 2))
        for i, rec in enumerate(recs):
            if rec.alpha is not None:
                alpha[i] = rec.alpha
                alpha_c[i] = rec.alpha_committed
        self._ck_ids = ids
        self._ck_alpha = alpha
        self._ck_alpha_committed = alpha_c
        self._ck_closed = np.zeros(ncr, dtype=bool)
        self._ck_line = self.mesh.thickness * np.array([rec.geom.l_gamma for rec in recs])
        self._ck_gbar = np.stack([self.elements[e].crack_ops.g_bar for e in ids])
        self._ck_kda = np.stack([self.elements[e].k_da for e in ids])
        self._ck_kra = np.stack([self.elements[e].k_ra for e in ids])
        self._ck_kad = np.stack([self.elements[e].k_ad for e in ids])
        self._ck_kar = np.stack([self.elements[e].k_ar for e in ids])
        self._ck_kaa = np.stack([self.elements[e].k_aa_bulk for e in ids])
        self._ck_payload = None
        for i, rec in enumerate(recs):
            rec.idx = i
            rec.alpha = self._ck_alpha[i]
            rec.alpha_committed = self._ck_alpha_committed[i]
        self._refresh_crack_thermal()

    def _cracked_batch(self, d_full):
        """Residuals and condensed matrices of all cracked elements at once."""
        ids = self._ck_ids
        recs = list(self.cracks.values())
        ncr = len(ids)
        d_e = d_full[self.dofmap[ids]]
        rho_e = self.rho[ids]
        alpha = self._ck_alpha
        line = self._ck_line

        # contact: negative openings are rejected and resolved at zero, where
        # the sign of the bulk traction demand decides open versus closed
        touch = alpha[:, 0] <= 0.0
        alpha[touch, 0] = 0.0
        h_bulk = np.einsum("eij,ej->ei", self._ck_kad, d_e)
        h_bulk += np.einsum("eij,ej->ei", self._ck_kar, rho_e)
        h_bulk += np.einsum("eij,ej->ei", self._ck_kaa, alpha)
        if self._f_th_a is not None:
            h_bulk -= self._f_th_a
        closed = touch & (-h_bulk[:, 0] / line <= 0.0)
        self._ck_closed = closed

        tractions = np.empty((ncr, 2))
        tangents = np.empty((ncr, 2))
        q_scale = np.empty(ncr)
        for i, rec in enumerate(recs):
            rec.closed = bool(closed[i])
            rec.res_n = return_map_normal(rec.curve_n, alpha[i, 0], rec.state_n,
                                          self.k_full_soft)
            rec.res_m = return_map_tangential(rec.curve_m, alpha[i, 1], rec.state_m,
                                              self.k_full_soft)
            tractions[i] = rec.res_n.traction, rec.res_m.traction
            tangents[i] = rec.res_n.tangent, rec.res_m.tangent
            q_scale[i] = rec.state_n.q_compliance

        r_d = np.einsum("eij,ej->ei", self.kdd[ids], d_e)
        r_d += np.einsum("eij,ej->ei", self.kdr[ids], rho_e)
        r_d += np.einsum("eij,ej->ei", self._ck_kda, alpha)
        r_r = np.einsum("eij,ej->ei", self.krd[ids], d_e)
        r_r += np.einsum("eij,ej->ei", self.krr[ids], rho_e)
        r_r += np.einsum("eij,ej->ei", self._ck_kra, alpha)
        h = h_bulk + line[:, None] * tractions
        if self._f_th_d is not None:
            r_d -= self._f_th_d[ids]
            r_r -= self._f_th_r[ids]
        cscale = line / np.maximum(q_scale, 1e-16)
        h[closed, 0] = cscale[closed] * alpha[closed, 0]

        kad = self._ck_kad.copy()
        kar = self._ck_kar.copy()
        kaa = self._ck_kaa + line[:, None, None] * _diag2(tangents)
        kad[closed, 0, :] = 0.0
        kar[closed, 0, :] = 0.0
        kaa[closed, 0, :] = 0.0
        kaa[closed, 0, 0] = cscale[closed]

        k_bb = np.zeros((ncr, 6, 6))
        k_bb[:, :4, :4] = self.krr[ids]
        k_bb[:, :4, 4:] = self._ck_kra
        k_bb[:, 4:, :4] = kar
        k_bb[:, 4:, 4:] = kaa
        try:
            k_bb_inv = np.linalg.inv(k_bb)
        except np.linalg.LinAlgError as exc:
            raise SingularLocalBlock(str(exc)) from None
        cond = (np.abs(k_bb).sum(axis=1).max(axis=1)
                * np.abs(k_bb_inv).sum(axis=1).max(axis=1))
        if np.any(~np.isfinite(cond)) or np.any(cond > 1e14):
            bad = ids[np.argmax(cond)]
            raise SingularLocalBlock(f"element {bad}: condition estimate {cond.max():g}")

        k_db = np.concatenate([self.kdr[ids], self._ck_kda], axis=2)   # (ncr, 8, 6)
        k_bd = np.concatenate([self.krd[ids], kad], axis=1)            # (ncr, 6, 8)
        r_b = np.concatenate([r_r, h], axis=1)                         # (ncr, 6)
        inv_kbd = np.einsum("eij,ejk->eik", k_bb_inv, k_bd)
        k_c = self.kdd[ids] - np.einsum("eij,ejk->eik", k_db, inv_kbd)
        r_c = r_d - np.einsum("eij,ej->ei", k_db,
                              np.einsum("eij,ej->ei", k_bb_inv, r_b))
        self._ck_payload = (k_bb_inv, k_bd, r_b)
        return r_c, k_c

    def compute_system(self, f_ext):
        """Assemble the condensed tangent and residual at the current iterate."""
        d_e = self.d[self.dofmap]
        r_all = np.einsum("eij,ej->ei", self.kc0, d_e)
        if self.eps_t is not None:
            r_all -= self._f_th_d - np.einsum("eij,ej->ei", self.kdr_krrinv,
                                              self._f_th_r)
        vals = self.kc0
        if len(self._ck_ids):
            r_c, k_c = self._cracked_batch(self.d)
            r_all[self._ck_ids] = r_c
            vals = self.kc0.copy()
            vals[self._ck_ids] = k_c
        resid = np.bincount(self.dofmap.ravel(), weights=r_all.ravel(),
                            minlength=self.ndof)
        resid -= f_ext
        self._k.data[:] = self._assemble_data(vals.reshape(-1))
        self.last_residual = resid
        return self._k, resid

    def update_solution(self, delta_d):
        self.d += delta_d
        d_e = self.d[self.dofmap]
        if len(self._ck_ids):
            k_bb_inv, k_bd, r_b = self._ck_payload
            dd = delta_d[self.dofmap[self._ck_ids]]
            rhs = r_b + np.einsum("eij,ej->ei", k_bd, dd)
            delta_b = -np.einsum("eij,ej->ei", k_bb_inv, rhs)
            self.rho[self._ck_ids] += delta_b[:, :4]
            self._ck_alpha += delta_b[:, 4:]
        # uncracked bubble parameters solve their linear local equation exactly
        free = ~self.cracked
        rhs = -np.einsum("eij,ej->ei", self.krd[free], d_e[free])
        if self._f_th_r is not None:
            rhs += self._f_th_r[free]
        self.rho[free] = np.einsum("eij,ej->ei", self.krr_inv[free], rhs)

    # -- increments: commit / rollback ----------------------------------------

    def rollback(self):
        self.d[:] = self.d_committed
        self.rho[:] = self.rho_committed
        self.v[:] = self.v_committed
        self.a[:] = self.a_committed
        self._ck_alpha[:] = self._ck_alpha_committed

    def commit(self, time):
        self.d_committed[:] = self.d
        self.rho_committed[:] = self.rho
        self.v_committed[:] = self.v
        self.a_committed[:] = self.a
        contribs = []
        t_thick = self.mesh.thickness
        for e, rec in self.cracks.items():
            area = t_thick * rec.geom.l_gamma
            dxi_n = rec.res_n.state.xi - rec.state_n.xi if rec.res_n else 0.0
            dxi_m = rec.res_m.state.xi - rec.state_m.xi if rec.res_m else 0.0
            t_n = rec.res_n.traction if rec.res_n else 0.0
            t_m = rec.res_m.traction if rec.res_m else 0.0
            contribs.append((e, area, dxi_n, t_n, dxi_m, t_m))
            rec.spec_diss[0] += dxi_n * abs(t_n)
            rec.spec_diss[1] += dxi_m * abs(t_m)
            if rec.res_n:
                rec.state_n = rec.res_n.state
            if rec.res_m:
                rec.state_m = rec.res_m.state
            rec.alpha_committed[:] = rec.alpha
        return self.ledger.add_step(time, contribs)

    def run_nucleation(self):
        """Embed discontinuities where the converged stresses demand them."""
        stresses = self.bulk_stresses()
        decisions = nucleation_sweep(stresses, self.gp_xy, self.sigma_un,
                                     self.cracked, self.can_crack)
        accepted = []
        for dec in decisions:
            e = dec.element
            try:
                geom = embed_crack(self.mesh.coords(e), dec.x_ed, dec.alpha_ed)
            except DegenerateCut as exc:
                warnings.warn(f"element {e}: {exc}; nucleation postponed")
                continue
            self.elements[e].embed(geom)
            curve_n = self.curve_factory_n(self.sigma_un[e])
            curve_m = self.curve_factory_m(self.sigma_um[e])
            rec = CrackRecord(elem=e, idx=-1, geom=geom, curve_n=curve_n,
                              curve_m=curve_m,
                              state_n=initialize_crack_state(curve_n, self.kappa0),
                              state_m=initialize_crack_state(curve_m, self.kappa0))
            self.cracks[e] = rec
            self.cracked[e] = True
            accepted.append(dec)
        if accepted:
            self._rebuild_crack_arrays()
        return accepted

    def save_iterate(self):
        """Snapshot for line-search trials: unknowns plus the batched
        condensation payload (recovery must use the base-state linearization)."""
        return (self.d.copy(), self.rho.copy(), self._ck_alpha.copy(),
                self._ck_closed.copy(), self._ck_payload)

    def restore_iterate(self, snap):
        d, rho, alpha, closed, payload = snap
        self.d[:] = d
        self.rho[:] = rho
        self._ck_alpha[:] = alpha
        self._ck_closed[:] = closed
        self._ck_payload = payload

    def n_active(self):
        return sum(1 for rec in self.cracks.values() if rec.spec_diss.sum() > 1e-12)

    def reaction(self, dofs):
        return float(self.last_residual[np.asarray(dofs, dtype=int)].sum())


def _diag2(pairs):
    out = np.zeros((len(pairs), 2, 2))
    out[:, 0, 0] = pairs[:, 0]
    out[:, 1, 1] = pairs[:, 1]
    return out


# -- boundary conditions and solving helpers ---------------------------------


def constant_fn(value):
    return lambda t: value


def program_fn(value, knots):
    knots = np.asarray(knots, dtype=float)
    return lambda t: value * float(np.interp(t, knots[:, 0], knots[:, 1]))


def velocity_fn(v0, t_ramp=0.0, t_off=np.inf):
    """Displacement history of a ramped, later frozen, imposed velocity."""

    def disp(t):
        t_eff = min(t, t_off)
        if t_ramp <= 0.0:
            return v0 * t_eff
        if t_eff <= t_ramp:
            return 0.5 * v0 * t_eff * t_eff / t_ramp
        return v0 * (t_eff - 0.5 * t_ramp)

    return disp


def _free_dofs(ndof, dirichlet):
    fixed = np.unique(np.concatenate([bc.dofs for bc in dirichlet])) if dirichlet else \
        np.array([], dtype=int)
    mask = np.ones(ndof, dtype=bool)
    mask[fixed] = False
    if mask.all():
        warnings.warn("no constrained DOFs: system may be singular in statics")
    return np.where(mask)[0], fixed


def _apply_prescribed(model, dirichlet, t):
    for bc in dirichlet:
        model.d[bc.dofs] = bc.value_fn(t)


def _external_vector(ndof, loads, t, load_factor=None):
    f = np.zeros(ndof)
    for ld in loads:
        if ld.value_fn is None:
            if load_factor is not None:
                f += load_factor * ld.vector
        else:
            f += ld.value_fn(t) * ld.vector
    return f


def _factorize(k_ff):
    try:
        lu = spla.splu(k_ff.tocsc())
    except RuntimeError as exc:
        raise SingularGlobalMatrix(str(exc)) from None
    u_diag = np.abs(lu.U.diagonal())
    if u_diag.size and (u_diag.min() <= 1e-13 * max(u_diag.max(), 1e-300)):
        raise SingularGlobalMatrix("factor is numerically singular "
                                   "(missing constraints or total failure)")
    return lu


@dataclass
class ToleranceSettings:
    rel: float = 1e-8
    abs_floor: float = 0.0
    max_iter: int = 25


def _line_search(free, assemble, apply_scaled, rn_old, tol_value=0.0,
                 n_backtracks=8):
    """Backtracking on the residual norm.

    apply_scaled(s) must reset the iterate to the pre-step state and apply
    the step scaled by s. Any trial below the convergence tolerance is
    accepted outright (the pre-step residual may already sit at round-off
    when only an auxiliary constraint drives the step). When no trial
    achieves a sufficient decrease the best trial is taken anyway and
    reported as a stall; near local snap-throughs the residual cannot
    descend on the current branch and the caller then leaps with an
    unguarded full step to cross the fold.
    """
    s = 1.0
    best = None
    for _ in range(n_backtracks):
        apply_scaled(s)
        k, resid = assemble()
        rn = float(np.linalg.norm(resid[free]))
        if np.isfinite(rn):
            if rn <= tol_value or rn < rn_old * (1.0 - 1e-4 * s):
                return k, resid, rn, True
            if best is None or rn < best[2]:
                best = (s, None, rn)
        s *= 0.5
    if best is None:
        raise IncrementDiverged(0, float("nan"))
    apply_scaled(best[0])
    k, resid = assemble()
    return k, resid, best[2], False


def _newton_static(model, free, f_ext, tol: ToleranceSettings):
    def assemble():
        return model.compute_system(f_ext)

    k, resid = assemble()
    rn = float(np.linalg.norm(resid[free]))
    history = [rn]
    ref = np.linalg.norm(f_ext) or rn
    tol_value = tol.abs_floor + tol.rel * ref
    stalls = 0
    for it in range(tol.max_iter + 1):
        if rn <= tol_value:
            return it, history
        if it == tol.max_iter:
            raise IncrementDiverged(it, rn)
        lu = _factorize(model.submatrix(k, free))
        delta = np.zeros(model.ndof)
        delta[free] = lu.solve(-resid[free])
        if not np.all(np.isfinite(delta)):
            raise IncrementDiverged(it, rn)
        if stalls >= 2:
            model.update_solution(delta)
            k, resid = assemble()
            rn = float(np.linalg.norm(resid[free]))
            stalls = 0
        else:
            snap = model.save_iterate()

            def apply_scaled(s):
                model.restore_iterate(snap)
                model.update_solution(s * delta)

            k, resid, rn, improved = _line_search(free, assemble, apply_scaled, rn,
                                                  tol_value)
            stalls = 0 if improved else stalls + 1
        history.append(rn)
    raise IncrementDiverged(tol.max_iter, history[-1])


def _dynamic_relaxation(model, free, f_ext, tol_value, mass_factor=0.05,
                        max_steps=1500, max_escalations=5):
    """Traverse a static snap-through with artificial inertia.

    Kinetically damped pseudo-dynamics: an artificial lumped mass rides the
    unstable branch and velocities are zeroed at every kinetic-energy peak.
    Succeeds when the static residual drops below the increment tolerance,
    which makes the accepted state a true equilibrium. When the inner solve
    cannot follow the flow the mass is escalated (heavier inertia means
    stronger regularization and smaller state changes per pseudo-step).
    """
    k0, _ = model.compute_system(f_ext)
    diag_base = np.maximum(np.abs(k0.diagonal()),
                           1e-8 * np.abs(k0.diagonal()[free]).mean())
    beta, gamma = 0.25, 0.5
    c_a = 1.0 / beta
    start = model.save_iterate()
    for escalation in range(max_escalations):
        m_vec = mass_factor * (4.0 ** escalation) * diag_base * beta
        model.restore_iterate(start)
        v = np.zeros(model.ndof)
        a = np.zeros(model.ndof)
        d_n = model.d.copy()
        ke_prev = 0.0
        static_rn = np.inf
        best_rn = np.inf
        best_age = 0
        failed = False
        for step in range(max_steps):
            d_prev, v_prev, a_prev = d_n, v, a

            def assemble():
                accel = c_a * (model.d - d_prev) - v_prev / beta \
                    - (1.0 - 2.0 * beta) / (2.0 * beta) * a_prev
                k, resid = model.compute_system(f_ext)
                return (model.with_diagonal(k, c_a * m_vec),
                        resid + m_vec * accel)

            k_dyn, r_dyn = assemble()
            rn = float(np.linalg.norm(r_dyn[free]))
            converged_inner = rn <= tol_value
            for _ in range(25):
                if converged_inner:
                    break
                lu = _factorize(model.submatrix(k_dyn, free))
                delta = np.zeros(model.ndof)
                delta[free] = lu.solve(-r_dyn[free])
                if not np.all(np.isfinite(delta)):
                    break
                snap = model.save_iterate()

                def apply_scaled(s):
                    model.restore_iterate(snap)
                    model.update_solution(s * delta)

                try:
                    k_dyn, r_dyn, rn, _ = _line_search(free, assemble, apply_scaled,
                                                       rn, tol_value)
                except IncrementDiverged:
                    break
                if rn <= tol_value:
                    converged_inner = True
            if not converged_inner:
                failed = True
                break
            _, resid = model.compute_system(f_ext)
            static_rn = float(np.linalg.norm(resid[free]))
            if static_rn <= tol_value:
                return step + 1
            if static_rn < 0.98 * best_rn:
                best_rn = static_rn
                best_age = 0
            else:
                best_age += 1
                if best_age > 150:   # flowing without approaching an equilibrium
                    failed = True
                    break
            v = gamma / beta * (model.d - d_prev) - (gamma - beta) / beta * v_prev \
                - (gamma - 2.0 * beta) / (2.0 * beta) * a_prev
            a = c_a * (model.d - d_prev) - v_prev / beta \
                - (1.0 - 2.0 * beta) / (2.0 * beta) * a_prev
            d_n = model.d.copy()
            ke = 0.5 * float(v[free] @ (m_vec[free] * v[free]))
            if ke < ke_prev:
                v = np.zeros(model.ndof)
                a = np.zeros(model.ndof)
                ke = 0.0
            ke_prev = ke
        if not failed:
            raise IncrementDiverged(max_steps, static_rn)
    raise IncrementDiverged(max_steps, static_rn)


def _relax_bordered(model, free, f_fixed, f_ref, lam0, ctrl_idx, ctrl_w, target,
                    tol_value, g_tol, mass_factor=0.05, max_steps=1500,
                    max_escalations=4):
    """Dynamic relaxation with the load factor slaved to a held control value.

    The softening branch is unstable under held force, so a snap along a
    path-following run is ridden out with the control combination pinned at
    its target while the load factor floats (bordered dynamic system with
    kinetic damping). Returns (pseudo-steps, load factor) on settling.
    """
    k0, _ = model.compute_system(f_fixed + lam0 * f_ref)
    diag_base = np.maximum(np.abs(k0.diagonal()),
                           1e-8 * np.abs(k0.diagonal()[free]).mean())
    beta, gamma = 0.25, 0.5
    c_a = 1.0 / beta
    ctrl_pos = np.searchsorted(free, ctrl_idx)
    start = model.save_iterate()
    lam = lam0
    for escalation in range(max_escalations):
        m_vec = mass_factor * (4.0 ** escalation) * diag_base * beta
        model.restore_iterate(start)
        lam = lam0
        v = np.zeros(model.ndof)
        a = np.zeros(model.ndof)
        d_n = model.d.copy()
        ke_prev = 0.0
        static_rn = np.inf
        best_rn = np.inf
        best_age = 0
        failed = False
        for step in range(max_steps):
            d_prev, v_prev, a_prev = d_n, v, a

            def assemble():
                accel = c_a * (model.d - d_prev) - v_prev / beta \
                    - (1.0 - 2.0 * beta) / (2.0 * beta) * a_prev
                k, resid = model.compute_system(f_fixed + lam * f_ref)
                return (model.with_diagonal(k, c_a * m_vec),
                        resid + m_vec * accel)

            k_dyn, r_dyn = assemble()
            rn = float(np.linalg.norm(r_dyn[free]))
            converged_inner = False
            for _ in range(25):
                g = float(ctrl_w @ model.d[ctrl_idx]) - target
                if rn <= tol_value and abs(g) <= g_tol:
                    converged_inner = True
                    break
                lu = _factorize(model.submatrix(k_dyn, free))
                x1 = lu.solve(-r_dyn[free])
                x2 = lu.solve(f_ref[free])
                denom = float(ctrl_w @ x2[ctrl_pos])
                if abs(denom) < 1e-30 or not np.all(np.isfinite(x1)):
                    break
                d_lam = (-g - float(ctrl_w @ x1[ctrl_pos])) / denom
                delta = np.zeros(model.ndof)
                delta[free] = x1 + d_lam * x2
                snap = model.save_iterate()
                lam_s = lam

                def apply_scaled(s):
                    nonlocal lam
                    model.restore_iterate(snap)
                    model.update_solution(s * delta)
                    lam = lam_s + s * d_lam

                try:
                    k_dyn, r_dyn, rn, _ = _line_search(free, assemble, apply_scaled,
                                                       rn, tol_value)
                except IncrementDiverged:
                    break
            if not converged_inner:
                failed = True
                break
            _, resid = model.compute_system(f_fixed + lam * f_ref)
            static_rn = float(np.linalg.norm(resid[free]))
            g_now = float(ctrl_w @ model.d[ctrl_idx]) - target
            if static_rn <= tol_value and abs(g_now) <= g_tol:
                return step + 1, lam
            if static_rn < 0.98 * best_rn:
                best_rn = static_rn
                best_age = 0
            else:
                best_age += 1
                if best_age > 150:
                    failed = True
                    break
            v = gamma / beta * (model.d - d_prev) - (gamma - beta) / beta * v_prev \
                - (gamma - 2.0 * beta) / (2.0 * beta) * a_prev
            a = c_a * (model.d - d_prev) - v_prev / beta \
                - (1.0 - 2.0 * beta) / (2.0 * beta) * a_prev
            d_n = model.d.copy()
            ke = 0.5 * float(v[free] @ (m_vec[free] * v[free]))
            if ke < ke_prev:
                v = np.zeros(model.ndof)
                a = np.zeros(model.ndof)
                ke = 0.0
            ke_prev = ke
        if not failed:
            raise IncrementDiverged(max_steps, static_rn)
    raise IncrementDiverged(max_steps, static_rn)


@dataclass
class StepRecord:
    step: int
    time: float
    iterations: int
    residual_history: list
    dw_i: float
    dw_ii: float
    new_cracks: list
    relaxed: bool = False


def run_static(model, times, dirichlet, loads, tol=None, thermal=None,
               on_step=None, max_bisection=10, relax_depth=2):
    """Load-controlled statics over an increasing pseudo-time program.

    thermal: optional callable tau -> (nel, 4, 3) prescribed strain field.
    Diverged increments are bisected; once relax_depth bisections have not
    helped, the increment is traversed by kinetically damped relaxation
    (local snap-throughs have no equilibrium path for Newton to follow).
    """
    tol = tol or ToleranceSettings()
    free, _ = _free_dofs(model.ndof, dirichlet)
    records = []
    step = 0

    def advance(t0, t1, depth):
        nonlocal step
        if thermal is not None:
            model.set_thermal_field(thermal(t1))
        _apply_prescribed(model, dirichlet, t1)
        f_ext = _external_vector(model.ndof, loads, t1)
        relaxed = False
        try:
            iters, hist = _newton_static(model, free, f_ext, tol)
        except IncrementDiverged:
            model.rollback()
            if depth >= relax_depth:
                _apply_prescribed(model, dirichlet, t1)
                ref = np.linalg.norm(f_ext)
                if ref == 0.0:
                    _, r0 = model.compute_system(f_ext)
                    ref = float(np.linalg.norm(r0[free]))
                try:
                    iters = _dynamic_relaxation(model, free, f_ext,
                                                tol.abs_floor + tol.rel * ref)
                    hist = []
                    relaxed = True
                except IncrementDiverged:
                    model.rollback()
                    if depth >= max_bisection:
                        raise
                    tm = 0.5 * (t0 + t1)
                    advance(t0, tm, depth + 1)
                    advance(tm, t1, depth + 1)
                    return
            else:
                tm = 0.5 * (t0 + t1)
                advance(t0, tm, depth + 1)
                advance(tm, t1, depth + 1)
                return
        dw_i, dw_ii = model.commit(t1)
        new = model.run_nucleation()
        step += 1
        rec = StepRecord(step=step, time=t1, iterations=iters,
                         residual_history=hist, dw_i=dw_i, dw_ii=dw_ii,
                         new_cracks=new, relaxed=relaxed)
        records.append(rec)
        if on_step:
            on_step(model, rec)

    times = np.asarray(times, dtype=float)
    for i in range(1, len(times)):
        advance(times[i - 1], times[i], 0)
    return records


def run_path_following(model, control, du_ctrl, n_steps, dirichlet, loads,
                       tol=None, on_step=None, max_bisection=10, relax_depth=2):
    """Continuation on one controlled displacement with the load factor unknown.

    control is either a single DOF index or (indices, weights) for a weighted
    combination such as a relative opening across a notch.
    """
    tol = tol or ToleranceSettings()
    free, _ = _free_dofs(model.ndof, dirichlet)
    if np.isscalar(control) or isinstance(control, (int, np.integer)):
        ctrl_idx = np.array([int(control)])
        ctrl_w = np.array([1.0])
    else:
        ctrl_idx = np.asarray(control[0], dtype=int)
        ctrl_w = np.asarray(control[1], dtype=float)
    if not np.all(np.isin(ctrl_idx, free)):
        raise ValueError("control DOFs must be unconstrained")
    ctrl_pos = np.searchsorted(free, ctrl_idx)

    def ctrl_value():
        return float(ctrl_w @ model.d[ctrl_idx])

    f_ref = np.zeros(model.ndof)
    for ld in loads:
        if ld.value_fn is None:
            f_ref += ld.vector
    f_fixed = _external_vector(model.ndof, loads, 0.0)
    lam = 0.0
    lam_committed = 0.0
    target = ctrl_value()
    records = []
    step = 0

    def solve_increment(tgt):
        nonlocal lam
        _apply_prescribed(model, dirichlet, 0.0)

        def assemble():
            return model.compute_system(f_fixed + lam * f_ref)

        k, resid = assemble()
        rn = float(np.linalg.norm(resid[free]))
        history = [rn]
        stalls = 0
        for it in range(tol.max_iter + 1):
            g = ctrl_value() - tgt
            ref = max(abs(lam) * np.linalg.norm(f_ref), history[0], 1.0)
            if rn <= tol.abs_floor + tol.rel * ref and abs(g) <= 1e-3 * abs(du_ctrl):
                return it, history
            if it == tol.max_iter:
                raise IncrementDiverged(it, rn)
            lu = _factorize(model.submatrix(k, free))
            x1 = lu.solve(-resid[free])
            x2 = lu.solve(f_ref[free])
            denom = float(ctrl_w @ x2[ctrl_pos])
            if abs(denom) < 1e-30:
                raise IncrementDiverged(it, rn)
            d_lam = (-g - float(ctrl_w @ x1[ctrl_pos])) / denom
            delta = np.zeros(model.ndof)
            delta[free] = x1 + d_lam * x2
            if not np.all(np.isfinite(delta)):
                raise IncrementDiverged(it, rn)
            if stalls >= 2:
                model.update_solution(delta)
                lam += d_lam
                k, resid = assemble()
                rn = float(np.linalg.norm(resid[free]))
                stalls = 0
            else:
                snap = model.save_iterate()
                lam0 = lam

                def apply_scaled(s):
                    nonlocal lam
                    model.restore_iterate(snap)
                    model.update_solution(s * delta)
                    lam = lam0 + s * d_lam

                tol_ls = tol.abs_floor + tol.rel * max(abs(lam) * np.linalg.norm(f_ref),
                                                       history[0], 1.0)
                k, resid, rn, improved = _line_search(free, assemble, apply_scaled,
                                                      rn, tol_ls)
                stalls = 0 if improved else stalls + 1
            history.append(rn)
        raise IncrementDiverged(tol.max_iter, history[-1])

    def advance(tgt0, tgt1, depth):
        nonlocal step, lam, lam_committed, target
        relaxed = False
        try:
            iters, hist = solve_increment(tgt1)
        except IncrementDiverged:
            if depth >= relax_depth:
                # crack-path snap: ride it out with the control held at the
                # target and the load factor floating (the softening branch
                # is unstable under held force), starting from the failed
                # iterate as the kick out of the current basin
                ref = max(abs(lam) * np.linalg.norm(f_ref), 1.0)
                try:
                    iters, lam = _relax_bordered(
                        model, free, f_fixed, f_ref, lam_committed, ctrl_idx,
                        ctrl_w, tgt1, tol.abs_floor + tol.rel * ref,
                        1e-3 * abs(du_ctrl))
                    hist = []
                    relaxed = True
                except IncrementDiverged:
                    model.rollback()
                    lam = lam_committed
                    if depth >= max_bisection:
                        raise
                    mid = 0.5 * (tgt0 + tgt1)
                    advance(tgt0, mid, depth + 1)
                    advance(mid, tgt1, depth + 1)
                    return
            else:
                model.rollback()
                lam = lam_committed
                mid = 0.5 * (tgt0 + tgt1)
                advance(tgt0, mid, depth + 1)
                advance(mid, tgt1, depth + 1)
                return
        dw_i, dw_ii = model.commit(lam)
        lam_committed = lam
        new = model.run_nucleation()
        step += 1
        rec = StepRecord(step=step, time=lam, iterations=iters,
                         residual_history=hist, dw_i=dw_i, dw_ii=dw_ii,
                         new_cracks=new, relaxed=relaxed)
        records.append(rec)
        if on_step:
            on_step(model, rec)

    for _ in range(n_steps):
        new_target = target + du_ctrl
        advance(target, new_target, 0)
        target = new_target
    return records, lam


def run_dynamic(model, params: NewmarkParams, dirichlet, loads, tol=None,
                thermal=None, on_step=None):
    """Implicit dynamics with the trapezoidal rule and an adjustable step."""
    tol = tol or ToleranceSettings()
    free, _ = _free_dofs(model.ndof, dirichlet)
    mass = model.mass()
    beta, gamma = params.beta, params.gamma

    # consistent initial accelerations from the initial imbalance
    _apply_prescribed(model, dirichlet, 0.0)
    f_ext0 = _external_vector(model.ndof, loads, 0.0)
    _, resid0 = model.compute_system(f_ext0)
    m_ff = mass[free][:, free]
    model.a[free] = _factorize(m_ff).solve(-resid0[free])
    model.a_committed[:] = model.a

    records = []
    step = 0
    tau = 0.0
    dt = min(params.dt, params.dt_max)
    easy_streak = 0

    def increment(tau1, dt_cur):
        d_n = model.d_committed
        v_n = model.v_committed
        a_n = model.a_committed
        c_a = 1.0 / (beta * dt_cur * dt_cur)
        _apply_prescribed(model, dirichlet, tau1)
        if thermal is not None:
            model.set_thermal_field(thermal(tau1))
        f_ext = _external_vector(model.ndof, loads, tau1)

        def assemble():
            accel = c_a * (model.d - d_n) - v_n / (beta * dt_cur) \
                - (1.0 - 2.0 * beta) / (2.0 * beta) * a_n
            k, resid = model.compute_system(f_ext)
            resid = resid + mass @ accel
            model.last_residual = resid
            return k, resid

        k, resid = assemble()
        rn = float(np.linalg.norm(resid[free]))
        history = [rn]
        ref = np.linalg.norm(f_ext) or rn
        tol_value = tol.abs_floor + tol.rel * ref
        stalls = 0
        for it in range(tol.max_iter + 1):
            if rn <= tol_value:
                model.v = gamma / (beta * dt_cur) * (model.d - d_n) \
                    - (gamma - beta) / beta * v_n \
                    - (gamma - 2.0 * beta) / (2.0 * beta) * dt_cur * a_n
                model.a = c_a * (model.d - d_n) - v_n / (beta * dt_cur) \
                    - (1.0 - 2.0 * beta) / (2.0 * beta) * a_n
                return it, history
            if it == tol.max_iter:
                raise IncrementDiverged(it, rn)
            k_dyn = model.with_scaled_mass(k, c_a)
            lu = _factorize(model.submatrix(k_dyn, free))
            delta = np.zeros(model.ndof)
            delta[free] = lu.solve(-resid[free])
            if not np.all(np.isfinite(delta)):
                raise IncrementDiverged(it, rn)
            if stalls >= 2:
                model.update_solution(delta)
                k, resid = assemble()
                rn = float(np.linalg.norm(resid[free]))
                stalls = 0
            else:
                snap = model.save_iterate()

                def apply_scaled(s):
                    model.restore_iterate(snap)
                    model.update_solution(s * delta)

                k, resid, rn, improved = _line_search(free, assemble, apply_scaled,
                                                      rn, tol_value)
                stalls = 0 if improved else stalls + 1
            history.append(rn)
        raise IncrementDiverged(tol.max_iter, history[-1])

    while tau < params.t_end - 1e-15 * params.t_end:
        dt_try = min(dt, params.t_end - tau)
        try:
            iters, hist = increment(tau + dt_try, dt_try)
        except IncrementDiverged:
            model.rollback()
            dt *= 0.5
            easy_streak = 0
            if dt < params.dt_max / 2 ** 10:
                raise
            continue
        tau += dt_try
        dw_i, dw_ii = model.commit(tau)
        new = model.run_nucleation()
        step += 1
        rec = StepRecord(step=step, time=tau, iterations=iters,
                         residual_history=hist, dw_i=dw_i, dw_ii=dw_ii,
                         new_cracks=new)
        records.append(rec)
        if on_step:
            on_step(model, rec)
        if params.adaptive:
            easy_streak = easy_streak + 1 if iters <= 5 else 0
            if easy_streak >= 3 and dt < params.dt_max:
                dt = min(dt * 1.2, params.dt_max)
                easy_streak = 0
    return records
