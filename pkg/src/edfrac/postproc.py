"""Dissipation bookkeeping, crack statistics and output writers."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np


@dataclass
class EnergyLedger:
    """Cumulative dissipated fracture energies, split by separation mode.

    Per converged step the increment of each cracked element is
    thickness * crack length * delta(xi) * |traction|, accumulated globally
    and per element (per unit crack area, for the specific-dissipation maps).
    """

    w_mode_i: float = 0.0
    w_mode_ii: float = 0.0
    steps: list = field(default_factory=list)   # (time, dW_I, dW_II, elems, dW_I_per_elem)

    def add_step(self, time, contributions):
        """contributions: list of (elem, area, dxi_n, t_n, dxi_m, t_m)."""
        dw_i = 0.0
        dw_ii = 0.0
        elems = []
        per_elem = []
        for elem, area, dxi_n, t_n, dxi_m, t_m in contributions:
            wi = area * dxi_n * abs(t_n)
            wii = area * dxi_m * abs(t_m)
            dw_i += wi
            dw_ii += wii
            if wi or wii:
                elems.append(elem)
                per_elem.append(wi)
        self.w_mode_i += dw_i
        self.w_mode_ii += dw_ii
        self.steps.append((time, dw_i, dw_ii, np.asarray(elems, dtype=int),
                           np.asarray(per_elem)))
        return dw_i, dw_ii


def dissipation_rate(ledger: EnergyLedger, groups=None, d_lim=None):
    """Mode-I dissipation rate per step, optionally split into element groups.

    Returns a dict with times, total rate, per-group rates and, when a limit
    rate is given, boolean exceedance flags per group. Static runs pass
    pseudo-time; the limit check only makes sense for dynamics.
    """
    times = np.array([s[0] for s in ledger.steps])
    if len(times) < 2:
        return {"times": times, "rate": np.zeros_like(times), "groups": {}}
    dts = np.diff(times, prepend=times[0] - (times[1] - times[0]))
    dts[dts <= 0] = np.inf
    rate = np.array([s[1] for s in ledger.steps]) / dts
    out = {"times": times, "rate": rate, "groups": {}}
    if groups:
        for name, members in groups.items():
            mset = set(int(m) for m in members)
            series = np.zeros(len(times))
            for k, (_, _, _, elems, per_elem) in enumerate(ledger.steps):
                if len(elems):
                    mask = np.array([e in mset for e in elems])
                    series[k] = per_elem[mask].sum() / dts[k] if mask.any() else 0.0
            entry = {"rate": series}
            if d_lim is not None:
                entry["exceeds"] = series > d_lim
            out["groups"][name] = entry
    return out


def crack_groups(mesh, cracked_elems, active_mask):
    """Connected components of active cracked elements sharing an edge."""
    active = [e for e, a in zip(cracked_elems, active_mask) if a]
    if not active:
        return []
    edge_map = {}
    comp = {e: e for e in active}

    def find(x):
        while comp[x] != x:
            comp[x] = comp[comp[x]]
            x = comp[x]
        return x

    for e in active:
        conn = mesh.elements[e]
        for k in range(4):
            edge = tuple(sorted((int(conn[k]), int(conn[(k + 1) % 4]))))
            if edge in edge_map:
                other = edge_map[edge]
                comp[find(e)] = find(other)
            else:
                edge_map[edge] = e
    clusters = {}
    for e in active:
        clusters.setdefault(find(e), []).append(e)
    return sorted(clusters.values(), key=lambda c: min(c))


def crack_statistics(mesh, cracks, g_fn_of=None, softened_fraction=0.9):
    """Counts, crack lengths and specific dissipation per element.

    cracks: mapping elem -> record with attributes geom.l_gamma and
    spec_diss (2,) in energy per unit crack area. "Active" means the element
    has dissipated anything beyond round-off; the traction-free length counts
    only cracks that have released at least softened_fraction of the mode-I
    fracture energy (no cohesion left to speak of).
    """
    n_nucleated = len(cracks)
    active = []
    total_len = 0.0
    free_len = 0.0
    eta = {}
    for e, rec in cracks.items():
        diss = float(rec.spec_diss[0] + rec.spec_diss[1])
        if diss > 1e-12:
            active.append(e)
            total_len += rec.geom.l_gamma
        if g_fn_of is not None:
            gfn = g_fn_of(e)
            eta[e] = (100.0 * rec.spec_diss[0] / gfn,
                      100.0 * rec.spec_diss[1] / gfn)
            if rec.spec_diss[0] >= softened_fraction * gfn:
                free_len += rec.geom.l_gamma
    return {
        "n_nucleated": n_nucleated,
        "n_active": len(active),
        "active_elements": active,
        "active_length": total_len,
        "traction_free_length": free_len if g_fn_of is not None else None,
        "eta_gf": eta,
    }


def _fmt(x) -> str:
    return f"{x:.17g}"


class HistoryWriter:
    """Streaming CSV of the global response, one row per converged step."""

    HEADER = ("step,t,u_ctrl,reaction,W_D_I,W_D_II,D_mode_I,D_mode_II,"
              "n_cracked,n_active")

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w")
        self._fh.write(self.HEADER + "\n")

    def write_row(self, step, t, u_ctrl, reaction, w_i, w_ii, d_i, d_ii,
                  n_cracked, n_active):
        vals = [str(step)] + [_fmt(v) for v in (t, u_ctrl, reaction, w_i, w_ii, d_i, d_ii)]
        vals += [str(n_cracked), str(n_active)]
        self._fh.write(",".join(vals) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()


class NucleationLog:
    HEADER = "step,t,element,x_ed,y_ed,alpha_ed,sigma_p"

    def __init__(self, path):
        self._fh = open(path, "w")
        self._fh.write(self.HEADER + "\n")

    def write(self, step, t, decision):
        row = [str(step), _fmt(t), str(decision.element), _fmt(decision.x_ed[0]),
               _fmt(decision.x_ed[1]), _fmt(decision.alpha_ed), _fmt(decision.sigma_p)]
        self._fh.write(",".join(row) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()


def write_vtk_frame(path, mesh, displacements, cell_data=None, title="edfrac frame"):
    """Legacy ASCII unstructured-grid file with point displacements.

    cell_data: ordered mapping name -> (kind, values) with kind "int" or
    "float"; one value per element.
    """
    n = mesh.n_nodes
    m = mesh.n_elements
    disp = np.asarray(displacements, dtype=float).reshape(n, 2)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {n} float"]
    for i in range(n):
        lines.append(f"{_fmt(mesh.nodes[i, 0])} {_fmt(mesh.nodes[i, 1])} 0")
    lines.append(f"CELLS {m} {5 * m}")
    for e in range(m):
        c = mesh.elements[e]
        lines.append(f"4 {c[0]} {c[1]} {c[2]} {c[3]}")
    lines.append(f"CELL_TYPES {m}")
    lines.extend(["9"] * m)
    lines.append(f"POINT_DATA {n}")
    lines.append("VECTORS displacement float")
    for i in range(n):
        lines.append(f"{_fmt(disp[i, 0])} {_fmt(disp[i, 1])} 0")
    if cell_data:
        lines.append(f"CELL_DATA {m}")
        for name, (kind, values) in cell_data.items():
            lines.append(f"SCALARS {name} {kind} 1")
            lines.append("LOOKUP_TABLE default")
            if kind == "int":
                lines.extend(str(int(v)) for v in values)
            else:
                lines.extend(_fmt(float(v)) for v in values)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_crack_segments_vtk(path, cracks, values=None, title="crack segments"):
    """Companion polyline file with one line cell per embedded discontinuity."""
    items = sorted(cracks.items())
    npts = 2 * len(items)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {npts} float"]
    for _, rec in items:
        for p in rec.geom.endpoints:
            lines.append(f"{_fmt(p[0])} {_fmt(p[1])} 0")
    lines.append(f"CELLS {len(items)} {3 * len(items)}")
    for k in range(len(items)):
        lines.append(f"2 {2 * k} {2 * k + 1}")
    lines.append(f"CELL_TYPES {len(items)}")
    lines.extend(["3"] * len(items))  # VTK_LINE
    if values:
        lines.append(f"CELL_DATA {len(items)}")
        for name, vals in values.items():
            lines.append(f"SCALARS {name} float 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(float(v)) for v in vals)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk_points_cells(path):
    """Minimal reader for round-trip checks of the legacy writers."""
    with open(path) as fh:
        tokens = fh.read().split()
    if tokens[1] != "vtk":
        raise ValueError("not a vtk file")
    i = tokens.index("POINTS")
    n = int(tokens[i + 1])
    pts = np.array(tokens[i + 3:i + 3 + 3 * n], dtype=float).reshape(n, 3)
    j = tokens.index("CELLS")
    m = int(tokens[j + 1])
    raw = tokens[j + 3:]
    cells = []
    k = 0
    for _ in range(m):
        sz = int(raw[k])
        cells.append([int(v) for v in raw[k + 1:k + 1 + sz]])
        k += sz + 1
    return pts, cells


def frame_path(out_dir, frame):
    return os.path.join(out_dir, f"frame_{frame:05d}.vtk")


def crack_frame_path(out_dir, frame):
    return os.path.join(out_dir, f"cracks_{frame:05d}.vtk")
