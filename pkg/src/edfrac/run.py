"""Top-level runner: config in, history/frames/logs out."""

from __future__ import annotations

import os
import time as _time
from dataclasses import dataclass

import numpy as np

from . import mesh as meshmod
from .cohesive import ExponentialSoftening, ZigZagSoftening
from .config import RunConfig
from .postproc import (HistoryWriter, NucleationLog, crack_frame_path, frame_path,
                       write_crack_segments_vtk, write_vtk_frame)
from .quad4 import elasticity_matrix
from .solver import (Dirichlet, Model, NewmarkParams, PointLoad, ToleranceSettings,
                     constant_fn, dof_indices, program_fn, run_dynamic,
                     run_path_following, run_static, velocity_fn)
from .thermal import ThermalShockCase, perturb_strength


@dataclass
class RunResult:
    config: RunConfig
    mesh: object
    model: Model
    records: list
    out_dir: str | None
    elapsed: float
    load_factor: float | None = None

    @property
    def history_path(self):
        return os.path.join(self.out_dir, "history.csv") if self.out_dir else None


def build_mesh(cfg: RunConfig):
    spec = dict(cfg.mesh)
    if "file" in spec:
        return meshmod.Mesh.load(spec["file"])
    return meshmod.generate(spec)


def make_curve_factories(cfg: RunConfig):
    law = cfg.law
    gfn, gfm = cfg.material.gfn, cfg.material.gfm
    if law.kind == "exponential":
        return (lambda s: ExponentialSoftening(s, gfn),
                lambda s: ExponentialSoftening(s, gfm))
    if law.kind == "zigzag":
        breaks = tuple(law.xi_breaks)
        segs_n = tuple(law.gfn_segments)
        scale = gfm / gfn
        segs_m = tuple(g * scale for g in segs_n)
        return (lambda s: ZigZagSoftening(s, breaks, segs_n),
                lambda s: ZigZagSoftening(s, breaks, segs_m))
    raise ValueError(f"unknown law kind {law.kind!r}")


def build_model(cfg: RunConfig, seed=None) -> tuple:
    mesh = build_mesh(cfg)
    nel = mesh.n_elements
    base = cfg.material
    c_base = elasticity_matrix(base.e_mod, base.nu, base.plane)
    c_mats = np.broadcast_to(c_base, (nel, 3, 3)).copy()
    dens = np.full(nel, base.density)
    sig_n = np.full(nel, base.sigma_un)
    sig_m = np.full(nel, base.sigma_um)
    can = np.full(nel, base.can_crack, dtype=bool)
    for region in cfg.regions:
        els = mesh.element_set(region.element_set)
        m = region.material
        c_mats[els] = elasticity_matrix(m.e_mod, m.nu, m.plane)
        dens[els] = m.density
        sig_n[els] = m.sigma_un
        sig_m[els] = m.sigma_um
        can[els] = m.can_crack

    thermal_case = None
    if cfg.thermal is not None:
        th = cfg.thermal
        use_seed = cfg.seed if seed is None else seed
        thermal_case = ThermalShockCase(beta_th=th.beta_th, k_c=th.k_c,
                                        intensity=th.intensity,
                                        perturb_amplitude=th.perturb_amplitude,
                                        seed=use_seed)
        if th.perturb_amplitude > 0.0:
            els = mesh.element_set(th.perturb_set)
            sig_n[els] = perturb_strength(len(els), base.sigma_un,
                                          th.perturb_amplitude, use_seed)

    fac_n, fac_m = make_curve_factories(cfg)
    model = Model(mesh, c_mats, dens, sig_n, sig_m, fac_n, fac_m, can_crack=can,
                  kappa0=cfg.kappa0, k_full_soft=cfg.k_full_soft,
                  incompatible_modes=cfg.incompatible_modes)
    return mesh, model, thermal_case


def resolve_bcs(mesh, cfg: RunConfig):
    out = []
    for bc in cfg.bcs:
        dofs = dof_indices(mesh.node_set(bc.node_set), bc.dof)
        if bc.kind == "velocity":
            fn = velocity_fn(bc.v0, bc.t_ramp, bc.t_off)
        elif bc.program is not None:
            fn = program_fn(bc.value, bc.program)
        else:
            fn = constant_fn(bc.value)
        out.append(Dirichlet(dofs=dofs, value_fn=fn))
    return out


def resolve_loads(mesh, cfg: RunConfig, ndof):
    out = []
    for ld in cfg.loads:
        vec = np.zeros(ndof)
        vec[dof_indices(mesh.node_set(ld.node_set), ld.dof)] = ld.value
        if ld.lambda_scaled:
            fn = None
        elif ld.program is not None:
            fn = program_fn(1.0, ld.program)
        else:
            fn = constant_fn(1.0)
        out.append(PointLoad(vector=vec, value_fn=fn))
    return out


def static_times(segments):
    times = [0.0]
    for t_to, n in segments:
        times.extend(np.linspace(times[-1], t_to, int(n) + 1)[1:])
    return np.asarray(times)


def _element_sigma_p(model):
    sig = model.bulk_stresses()
    mean = 0.5 * (sig[..., 0] + sig[..., 1])
    radius = np.sqrt((0.5 * (sig[..., 0] - sig[..., 1])) ** 2 + sig[..., 2] ** 2)
    return (mean + radius).max(axis=1)


def write_frame(out_dir, frame, mesh, model):
    nel = mesh.n_elements
    flags = np.zeros(nel, dtype=int)
    a1 = np.zeros(nel)
    a2 = np.zeros(nel)
    eta_i = np.zeros(nel)
    eta_ii = np.zeros(nel)
    for e, rec in model.cracks.items():
        flags[e] = 1
        a1[e], a2[e] = rec.alpha_committed
        gfn = rec.curve_n.first_gf if hasattr(rec.curve_n, "first_gf") else 1.0
        eta_i[e] = 100.0 * rec.spec_diss[0] / gfn
        eta_ii[e] = 100.0 * rec.spec_diss[1] / gfn
    cell_data = {
        "crack_flag": ("int", flags),
        "alpha_1": ("float", a1),
        "alpha_2": ("float", a2),
        "eta_gf_mode_i": ("float", eta_i),
        "eta_gf_mode_ii": ("float", eta_ii),
        "sigma_p": ("float", _element_sigma_p(model)),
    }
    write_vtk_frame(frame_path(out_dir, frame), mesh, model.d, cell_data)
    if model.cracks:
        vals = {
            "alpha_1": [rec.alpha_committed[0] for _, rec in sorted(model.cracks.items())],
            "alpha_2": [rec.alpha_committed[1] for _, rec in sorted(model.cracks.items())],
        }
        write_crack_segments_vtk(crack_frame_path(out_dir, frame), model.cracks, vals)


def run(cfg: RunConfig, out_dir=None, seed=None, on_step_extra=None) -> RunResult:
    """Execute one benchmark configuration.

    out_dir, when given, receives history.csv, nucleation_log.csv and
    (if enabled) VTK frames. The seed argument overrides the config seed for
    the strength perturbation.
    """
    t0 = _time.perf_counter()
    mesh, model, thermal_case = build_model(cfg, seed=seed)
    dirichlet = resolve_bcs(mesh, cfg)
    loads = resolve_loads(mesh, cfg, model.ndof)

    thermal_fn = None
    if thermal_case is not None:
        gp_y = model.gp_xy[..., 1]

        def thermal_fn(tau):
            t_field = thermal_case.beta_th * thermal_case.temperature_change(tau, gp_y)
            eps = np.zeros(gp_y.shape + (3,))
            eps[..., 0] = t_field
            eps[..., 1] = t_field
            return eps

    history = None
    nuclog = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        history = HistoryWriter(os.path.join(out_dir, "history.csv"))
        nuclog = NucleationLog(os.path.join(out_dir, "nucleation_log.csv"))

    mon = cfg.monitor
    reaction_dofs = (dof_indices(mesh.node_set(mon.reaction_set), mon.reaction_dof)
                     if mon.reaction_set else np.array([], dtype=int))
    disp_dof = (dof_indices(mesh.node_set(mon.disp_set), mon.disp_dof)[0]
                if mon.disp_set else None)

    frame_counter = [0]

    def on_step(model_, rec):
        dt_step = rec.time - (model_.ledger.steps[-2][0] if len(model_.ledger.steps) > 1
                              else rec.time)
        d_i = rec.dw_i / dt_step if dt_step > 0 else 0.0
        d_ii = rec.dw_ii / dt_step if dt_step > 0 else 0.0
        if history:
            history.write_row(rec.step, rec.time,
                              model_.d[disp_dof] if disp_dof is not None else 0.0,
                              model_.reaction(reaction_dofs) if len(reaction_dofs) else 0.0,
                              model_.ledger.w_mode_i, model_.ledger.w_mode_ii,
                              d_i, d_ii, len(model_.cracks), model_.n_active())
        if nuclog:
            for dec in rec.new_cracks:
                nuclog.write(rec.step, rec.time, dec)
        if out_dir and cfg.output.every and rec.step % cfg.output.every == 0 \
                and cfg.output.vtk:
            write_frame(out_dir, frame_counter[0], mesh, model_)
            frame_counter[0] += 1
        if on_step_extra:
            on_step_extra(model_, rec)

    ana = cfg.analysis
    tol = ToleranceSettings(
        rel=1e-8,
        abs_floor=1e-10 * cfg.material.sigma_un * mesh.thickness
        * float(np.linalg.norm(mesh.nodes.max(axis=0) - mesh.nodes.min(axis=0))),
        max_iter=ana.max_iter,
    )
    load_factor = None
    try:
        if ana.kind == "static":
            times = (np.asarray(ana.times, dtype=float) if ana.times is not None
                     else static_times(ana.segments))
            records = run_static(model, times, dirichlet, loads, tol=tol,
                                 thermal=thermal_fn, on_step=on_step)
        elif ana.kind == "path_following":
            ctrl = dof_indices(mesh.node_set(ana.control_set), ana.control_dof)[0]
            control = int(ctrl)
            if ana.control_set_b:
                other = dof_indices(mesh.node_set(ana.control_set_b),
                                    ana.control_dof)[0]
                control = (np.array([ctrl, other]), np.array([1.0, -1.0]))
            records, load_factor = run_path_following(
                model, control, ana.du, ana.n_steps, dirichlet, loads, tol=tol,
                on_step=on_step)
        elif ana.kind == "dynamic":
            params = NewmarkParams(dt=ana.dt, dt_max=ana.dt_max, t_end=ana.t_end,
                                   adaptive=ana.adaptive)
            records = run_dynamic(model, params, dirichlet, loads, tol=tol,
                                  thermal=thermal_fn, on_step=on_step)
        else:
            raise ValueError(f"unknown analysis kind {ana.kind!r}")
    finally:
        if history:
            history.close()
        if nuclog:
            nuclog.close()
    return RunResult(config=cfg, mesh=mesh, model=model, records=records,
                     out_dir=out_dir, elapsed=_time.perf_counter() - t0,
                     load_factor=load_factor)
