"""Benchmark configuration dataclasses with a JSON round trip."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field


@dataclass
class MaterialConfig:
    e_mod: float
    nu: float
    plane: str = "stress"
    density: float = 0.0
    sigma_un: float = 1.0
    sigma_um: float = 1.0
    gfn: float = 1.0
    gfm: float = 1.0
    can_crack: bool = True


@dataclass
class RegionConfig:
    element_set: str
    material: MaterialConfig


@dataclass
class LawConfig:
    kind: str = "exponential"               # or "zigzag"
    xi_breaks: list | None = None           # mode-I breakpoints
    gfn_segments: list | None = None        # per-segment mode-I energies


@dataclass
class BCConfig:
    node_set: str
    dof: str                                # "ux", "uy", "both"
    value: float = 0.0
    program: list | None = None             # [[t, factor], ...]
    kind: str = "displacement"              # or "velocity"
    v0: float = 0.0
    t_ramp: float = 0.0
    t_off: float = math.inf


@dataclass
class LoadConfig:
    node_set: str
    dof: str
    value: float = 0.0                      # per node of the set
    program: list | None = None
    lambda_scaled: bool = False             # scaled by the path-following factor


@dataclass
class AnalysisConfig:
    kind: str = "static"
    segments: list | None = None            # [(t_to, n_steps)] for statics
    times: list | None = None               # explicit schedule, overrides segments
    control_set: str | None = None
    control_set_b: str | None = None        # optional: control the difference
    control_dof: str = "uy"
    du: float = 0.0
    n_steps: int = 0
    dt: float = 0.0
    dt_max: float = 0.0
    t_end: float = 0.0
    adaptive: bool = True
    max_iter: int = 25


@dataclass
class ThermalConfig:
    beta_th: float = 1.0
    k_c: float = 1.0
    intensity: float = 1.0
    perturb_amplitude: float = 0.02
    perturb_set: str = "bottom_row"
    t_start: float = 1e-3


@dataclass
class MonitorConfig:
    reaction_set: str | None = None
    reaction_dof: str = "ux"
    disp_set: str | None = None
    disp_dof: str = "ux"


@dataclass
class OutputConfig:
    every: int = 0                          # 0 disables frame output
    vtk: bool = True


@dataclass
class RunConfig:
    name: str
    mesh: dict                              # generator spec or {"file": path}
    material: MaterialConfig
    law: LawConfig = field(default_factory=LawConfig)
    regions: list = field(default_factory=list)
    kappa0: float = 1e-5
    k_full_soft: float = 1e-5
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    bcs: list = field(default_factory=list)
    loads: list = field(default_factory=list)
    thermal: ThermalConfig | None = None
    monitor: MonitorConfig = field(default_factory=MonitorConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    incompatible_modes: bool = True
    seed: int = 0

    def to_json(self, path=None) -> str:
        def default(o):
            if o == math.inf:
                return "inf"
            raise TypeError(o)

        text = json.dumps(dataclasses.asdict(self), indent=2, default=default)
        text = text.replace("Infinity", '"inf"')
        if path:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _mat(d: dict) -> MaterialConfig:
    return MaterialConfig(**d)


def from_dict(data: dict) -> RunConfig:
    data = dict(data)
    data["material"] = _mat(data["material"])
    data["law"] = LawConfig(**data.get("law", {}))
    data["regions"] = [RegionConfig(element_set=r["element_set"], material=_mat(r["material"]))
                       for r in data.get("regions", [])]
    bcs = []
    for b in data.get("bcs", []):
        b = dict(b)
        if b.get("t_off") in ("inf", None):
            b["t_off"] = math.inf
        bcs.append(BCConfig(**b))
    data["bcs"] = bcs
    data["loads"] = [LoadConfig(**l) for l in data.get("loads", [])]
    data["analysis"] = AnalysisConfig(**data.get("analysis", {}))
    th = data.get("thermal")
    data["thermal"] = ThermalConfig(**th) if th else None
    data["monitor"] = MonitorConfig(**data.get("monitor", {}))
    data["output"] = OutputConfig(**data.get("output", {}))
    return RunConfig(**data)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return from_dict(json.load(fh))
