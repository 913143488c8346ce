"""Built-in benchmark configurations.

Each builder returns a RunConfig; the CLI accepts ``builtin:<name>`` and the
scripts in scripts/ call these directly. Geometry, material constants and the
per-case regularization constants (initial-damage seed kappa0 and the
traction floor factor) are fixed here per benchmark.
"""

from __future__ import annotations

import numpy as np

from .config import (AnalysisConfig, BCConfig, LawConfig, LoadConfig,
                     MaterialConfig, MonitorConfig, OutputConfig, RegionConfig,
                     RunConfig, ThermalConfig)

CONCRETE_TENSION = MaterialConfig(e_mod=30000.0, nu=0.2, plane="stress",
                                  sigma_un=3.0, sigma_um=1.0, gfn=0.2, gfm=0.2)


def uniaxial_cyclic() -> RunConfig:
    """Single 200 x 200 x 10 mm element, two tension-compression cycles, then
    pulled until the crack fully softens past the traction floor."""
    program = [[0.0, 0.0], [1.0, 0.5], [2.0, -0.25], [3.0, 1.5], [4.0, -0.25], [5.0, 8.0]]
    segments = [[1.0, 150], [2.0, 40], [3.0, 500], [4.0, 40], [5.0, 800]]
    return RunConfig(
        name="uniaxial_cyclic",
        mesh={"generator": "rectangle", "length": 200.0, "height": 200.0,
              "nx": 1, "ny": 1, "thickness": 10.0},
        material=CONCRETE_TENSION,
        kappa0=1e-5, k_full_soft=1e-5,
        analysis=AnalysisConfig(kind="static", segments=segments),
        bcs=[
            BCConfig(node_set="left", dof="ux", value=0.0),
            BCConfig(node_set="left_mid", dof="uy", value=0.0),
            BCConfig(node_set="right", dof="ux", value=0.1, program=program),
        ],
        monitor=MonitorConfig(reaction_set="right", reaction_dof="ux",
                              disp_set="right", disp_dof="ux"),
        output=OutputConfig(every=0),
    )


def tension_test(mesh_kind="structured", density_level=0, distort_seed=3) -> RunConfig:
    """400 x 200 x 10 mm strip pulled horizontally, two weakened elements.

    mesh_kind "structured" with density_level 0/1/2, or "distorted" with
    density_level 0 (54 elements) / 1 (288 elements, the fine jittered grid).
    """
    if mesh_kind == "structured":
        nx, ny = [(9, 4), (17, 8), (25, 12)][density_level]
        distort = 0.0
    else:
        nx, ny = [(9, 6), (24, 12)][density_level]
        distort = 0.22
    weak = MaterialConfig(**{**CONCRETE_TENSION.__dict__, "sigma_un": 0.95 * 3.0})
    # the nucleation window needs one increment per advancing crack-tip row,
    # so its resolution scales with the row count
    window_steps = max(150, 60 * ny)
    return RunConfig(
        name=f"tension_{mesh_kind}_{density_level}",
        mesh={"generator": "rectangle", "length": 400.0, "height": 200.0,
              "nx": nx, "ny": ny, "thickness": 10.0, "distort": distort,
              "seed": distort_seed, "weak_pair": True},
        material=CONCRETE_TENSION,
        regions=[RegionConfig(element_set="weak", material=weak)],
        kappa0=1e-5, k_full_soft=1e-5,
        analysis=AnalysisConfig(kind="static",
                                segments=[[0.25, 25], [0.8, window_steps], [5.0, 140]],
                                max_iter=30),
        bcs=[
            BCConfig(node_set="left", dof="ux", value=0.0),
            BCConfig(node_set="left_mid", dof="uy", value=0.0),
            BCConfig(node_set="right", dof="ux", value=0.1,
                     program=[[0.0, 0.0], [5.0, 5.0]]),
        ],
        monitor=MonitorConfig(reaction_set="right", reaction_dof="ux",
                              disp_set="right", disp_dof="ux"),
        output=OutputConfig(every=0),
    )


def thermal_shock(intensity=2.0, nx=80, ny=20, seed=11) -> RunConfig:
    """Dimensionless cooled-strip benchmark with the zig-zag softening law.

    The first-segment fracture energy is 5x the target value, dropping in
    five jumps over uniformly spaced breakpoints up to gfn / sigma_un (the
    breakpoint placement is a calibration knob).
    """
    mat = MaterialConfig(e_mod=1.0, nu=0.3, plane="stress", sigma_un=0.61,
                         sigma_um=0.61, gfn=1.0, gfm=1.0)
    xi_e = mat.gfn / mat.sigma_un
    breaks = list(np.linspace(xi_e / 5.0, xi_e, 5))
    energies = list(np.geomspace(5.0, 1.0, 6))
    t0, t_end, n = 2e-3, 5.0, 120
    times = list(np.geomspace(t0, t_end, n))
    return RunConfig(
        name=f"thermal_shock_a{intensity:g}",
        mesh={"generator": "rectangle", "length": 40.0, "height": 10.0,
              "nx": nx, "ny": ny, "thickness": 1.0},
        material=mat,
        law=LawConfig(kind="zigzag", xi_breaks=breaks, gfn_segments=energies),
        kappa0=1e-5, k_full_soft=1e-4,
        analysis=AnalysisConfig(kind="static", times=times, max_iter=30),
        bcs=[
            BCConfig(node_set="left", dof="ux", value=0.0),
            BCConfig(node_set="right", dof="ux", value=0.0),
            BCConfig(node_set="top", dof="uy", value=0.0),
        ],
        thermal=ThermalConfig(intensity=intensity, perturb_amplitude=0.02,
                              perturb_set="bottom_row", t_start=t0),
        monitor=MonitorConfig(reaction_set="top", reaction_dof="uy"),
        output=OutputConfig(every=0),
        seed=seed,
    )


def four_point_bending(refine=1.0, n_steps=700, du=-0.00025) -> RunConfig:
    """Notched beam under proportional two-point loading, path following on
    the vertical displacement of the notch mouth."""
    concrete = MaterialConfig(e_mod=32000.0, nu=0.2, plane="stress",
                              sigma_un=2.8, sigma_um=1.0, gfn=0.09, gfm=0.09)
    caps = MaterialConfig(e_mod=3.2e9, nu=0.2, plane="stress", can_crack=False)
    return RunConfig(
        name="four_point_bending",
        mesh={"generator": "four_point_bending", "refine": refine, "thickness": 156.0},
        material=concrete,
        regions=[RegionConfig(element_set="caps", material=caps)],
        kappa0=1e-5, k_full_soft=5e-6,
        analysis=AnalysisConfig(kind="path_following", control_set="notch_mouth",
                                control_set_b="notch_mouth_left", control_dof="uy",
                                du=du, n_steps=n_steps, max_iter=30),
        bcs=[
            BCConfig(node_set="support_left", dof="both", value=0.0),
            BCConfig(node_set="support_right", dof="uy", value=0.0),
        ],
        loads=[
            LoadConfig(node_set="load_small", dof="uy", value=-0.13, lambda_scaled=True),
            LoadConfig(node_set="load_main", dof="uy", value=-1.0, lambda_scaled=True),
        ],
        monitor=MonitorConfig(reaction_set="support_left", reaction_dof="uy",
                              disp_set="notch_mouth", disp_dof="uy"),
        output=OutputConfig(every=0),
    )


def dens(model="B", n_steps_shear=10, n_steps_pull=120, u_y_max=0.12) -> RunConfig:
    """Double-edge-notched block: constant shear force, then vertical pull.

    Phase 1 ramps the horizontal force to 10 kN with the top edge held;
    phase 2 raises the imposed vertical top displacement. Zig-zag softening
    with the published breakpoints and segment energies.
    """
    concrete = MaterialConfig(e_mod=30000.0, nu=0.2, plane="stress",
                              sigma_un=3.0, sigma_um=2.4, gfn=0.07, gfm=0.10)
    steel = MaterialConfig(e_mod=210000.0, nu=0.3, plane="stress", can_crack=False)
    soft = MaterialConfig(e_mod=200.0, nu=0.3, plane="stress", can_crack=False)
    regions = [RegionConfig(element_set="frame", material=steel)]
    if model == "B":
        regions.append(RegionConfig(element_set="soft_layer", material=soft))
    breaks = [0.003, 0.006, 0.009, 0.016, 0.023]
    energies = [0.100, 0.094, 0.085, 0.076, 0.073, 0.070]
    return RunConfig(
        name=f"dens_model_{model}",
        mesh={"generator": "dens", "model": model, "thickness": 50.0},
        material=concrete,
        regions=regions,
        law=LawConfig(kind="zigzag", xi_breaks=breaks, gfn_segments=energies),
        kappa0=1e-6, k_full_soft=1e-5,
        analysis=AnalysisConfig(kind="static",
                                segments=[[1.0, n_steps_shear], [2.0, n_steps_pull]],
                                max_iter=30),
        bcs=[
            BCConfig(node_set="bottom_frame", dof="both", value=0.0),
            BCConfig(node_set="top_frame", dof="uy", value=u_y_max,
                     program=[[0.0, 0.0], [1.0, 0.0], [2.0, 1.0]]),
        ],
        loads=[
            LoadConfig(node_set="shear_point", dof="ux", value=10000.0,
                       program=[[0.0, 0.0], [1.0, 1.0], [2.0, 1.0]]),
        ],
        monitor=MonitorConfig(reaction_set="top_frame", reaction_dof="uy",
                              disp_set="top_frame", disp_dof="uy"),
        output=OutputConfig(every=0),
    )


def kalthoff(plane="strain", mesh_level=0, t_end=1e-4) -> RunConfig:
    """Twin-notched plate under edge impact, implicit dynamics.

    Impact is an imposed constant 16.5 m/s on the strip between the notches.
    Units are N, mm, s: the steel density 8000 kg/m^3 becomes 8e-9 t/mm^3.
    """
    steel = MaterialConfig(e_mod=190e3, nu=0.3, plane=plane, density=8.0e-9,
                           sigma_un=844.0, sigma_um=400.0, gfn=22.17, gfm=12.0)
    nx, rows = [(40, (30, 22, 30)), (60, (45, 33, 45)), (99, (74, 54, 74))][mesh_level]
    return RunConfig(
        name=f"kalthoff_{plane}_{mesh_level}",
        mesh={"generator": "kalthoff", "nx": nx, "rows": list(rows), "thickness": 9.0},
        material=steel,
        kappa0=1e-6, k_full_soft=5e-5,
        analysis=AnalysisConfig(kind="dynamic", dt=5e-8, dt_max=5e-8, t_end=t_end,
                                adaptive=True, max_iter=15),
        bcs=[
            BCConfig(node_set="impact", dof="ux", kind="velocity", v0=16.5e3,
                     t_off=1e-4),
        ],
        monitor=MonitorConfig(reaction_set="impact", reaction_dof="ux"),
        output=OutputConfig(every=0),
    )


def sens(nx=120, ny=49, t_end=1e-5, v0=10.0e3) -> RunConfig:
    """Edge-notched half plate under symmetric velocity extraction.

    Velocity on the top edge ramps linearly over 0.1 us and stays constant;
    the symmetry plane ahead of the notch is held vertically.
    """
    pmma = MaterialConfig(e_mod=3240.0, nu=0.35, plane="strain", density=1.19e-9,
                          sigma_un=129.6, sigma_um=129.6, gfn=0.35, gfm=0.35)
    return RunConfig(
        name="sens",
        mesh={"generator": "sens", "nx": nx, "ny": ny, "thickness": 1.0},
        material=pmma,
        kappa0=1e-8, k_full_soft=1e-3,
        analysis=AnalysisConfig(kind="dynamic", dt=5e-9, dt_max=1e-8, t_end=t_end,
                                adaptive=True, max_iter=15),
        bcs=[
            BCConfig(node_set="symmetry", dof="uy", value=0.0),
            BCConfig(node_set="top", dof="uy", kind="velocity", v0=v0, t_ramp=1e-7),
        ],
        monitor=MonitorConfig(reaction_set="top", reaction_dof="uy"),
        output=OutputConfig(every=0),
    )


BUILTINS = {
    "uniaxial_cyclic": uniaxial_cyclic,
    "tension_structured_0": lambda: tension_test("structured", 0),
    "tension_structured_1": lambda: tension_test("structured", 1),
    "tension_structured_2": lambda: tension_test("structured", 2),
    "tension_distorted_54": lambda: tension_test("distorted", 0),
    "tension_distorted_fine": lambda: tension_test("distorted", 1),
    "thermal_shock_a0.9": lambda: thermal_shock(0.9),
    "thermal_shock_a2": lambda: thermal_shock(2.0),
    "thermal_shock_a4": lambda: thermal_shock(4.0),
    "thermal_shock_a8": lambda: thermal_shock(8.0),
    "four_point_bending": four_point_bending,
    "dens_model_A": lambda: dens("A"),
    "dens_model_B": lambda: dens("B"),
    "kalthoff_strain_coarse": lambda: kalthoff("strain", 0),
    "kalthoff_stress_coarse": lambda: kalthoff("stress", 0),
    "sens": sens,
}


def get(name: str) -> RunConfig:
    if name not in BUILTINS:
        raise KeyError(f"unknown builtin benchmark {name!r}; "
                       f"choices: {', '.join(sorted(BUILTINS))}")
    return BUILTINS[name]()
