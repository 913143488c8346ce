"""Mesh container, JSON file format and parametric generators.

The mesh file is JSON with ``nodes`` (list of [x, y], mm), ``elements``
(lists of 4 counter-clockwise node ids), ``thickness`` (mm) and named
``node_sets`` / ``edge_sets`` / ``element_sets``. Generators cover structured
and jittered rectangles plus the notched benchmark geometries.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveJacobian
from .quad4 import GAUSS_POINTS, jacobian


@dataclass
class Mesh:
    nodes: np.ndarray                      # (n_nodes, 2) float, mm
    elements: np.ndarray                   # (n_elems, 4) int, CCW
    thickness: float
    node_sets: dict = field(default_factory=dict)
    edge_sets: dict = field(default_factory=dict)      # name -> list of (a, b)
    element_sets: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def coords(self, elem: int) -> np.ndarray:
        return self.nodes[self.elements[elem]]

    def validate(self) -> None:
        """Check connectivity and orientation; clockwise elements are reversed."""
        if self.thickness <= 0.0:
            raise ValueError("thickness must be positive")
        if self.elements.size and self.elements.max() >= self.n_nodes:
            raise ValueError("element connectivity references a missing node")
        for e in range(self.n_elements):
            if len(set(self.elements[e].tolist())) != 4:
                raise ValueError(f"element {e} repeats a node")
        flipped = 0
        for e in range(self.n_elements):
            quad = self.nodes[self.elements[e]]
            area2 = 0.0
            for a in range(4):
                xa, ya = quad[a]
                xb, yb = quad[(a + 1) % 4]
                area2 += xa * yb - xb * ya
            if area2 < 0.0:
                self.elements[e] = self.elements[e][::-1]
                flipped += 1
        if flipped:
            warnings.warn(f"reversed {flipped} clockwise element(s) to counter-clockwise")
        for e in range(self.n_elements):
            quad = self.nodes[self.elements[e]]
            for xi, eta in GAUSS_POINTS:
                jacobian(quad, xi, eta)  # raises NonPositiveJacobian if degenerate

    def node_set(self, name: str) -> np.ndarray:
        from .errors import UnknownSetName

        if name in self.node_sets:
            return np.asarray(self.node_sets[name], dtype=int)
        if name in self.edge_sets:
            ids = sorted({n for pair in self.edge_sets[name] for n in pair})
            return np.asarray(ids, dtype=int)
        raise UnknownSetName(name)

    def element_set(self, name: str) -> np.ndarray:
        from .errors import UnknownSetName

        if name not in self.element_sets:
            raise UnknownSetName(name)
        return np.asarray(self.element_sets[name], dtype=int)

    def nearest_node(self, x: float, y: float) -> int:
        d = self.nodes - np.array([x, y])
        return int(np.argmin((d * d).sum(axis=1)))

    def element_centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    def to_dict(self) -> dict:
        return {
            "nodes": self.nodes.tolist(),
            "elements": self.elements.tolist(),
            "thickness": self.thickness,
            "node_sets": {k: np.asarray(v).tolist() for k, v in self.node_sets.items()},
            "edge_sets": {k: [list(p) for p in v] for k, v in self.edge_sets.items()},
            "element_sets": {k: np.asarray(v).tolist() for k, v in self.element_sets.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Mesh":
        mesh = cls(
            nodes=np.asarray(data["nodes"], dtype=float),
            elements=np.asarray(data["elements"], dtype=int),
            thickness=float(data.get("thickness", 1.0)),
            node_sets=dict(data.get("node_sets", {})),
            edge_sets={k: [tuple(p) for p in v] for k, v in data.get("edge_sets", {}).items()},
            element_sets=dict(data.get("element_sets", {})),
        )
        mesh.validate()
        return mesh

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "Mesh":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _grid(x_coords, y_coords, thickness):
    """Structured grid from explicit coordinate break arrays."""
    xs = np.asarray(x_coords, dtype=float)
    ys = np.asarray(y_coords, dtype=float)
    nx, ny = len(xs) - 1, len(ys) - 1
    xv, yv = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([xv.ravel(), yv.ravel()])

    def nid(i, j):  # column i, row j
        return j * (nx + 1) + i

    elems = []
    for j in range(ny):
        for i in range(nx):
            elems.append([nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)])
    mesh = Mesh(nodes=nodes, elements=np.asarray(elems, dtype=int), thickness=thickness)
    mesh.node_sets = {
        "left": [nid(0, j) for j in range(ny + 1)],
        "right": [nid(nx, j) for j in range(ny + 1)],
        "bottom": [nid(i, 0) for i in range(nx + 1)],
        "top": [nid(i, ny) for i in range(nx + 1)],
    }
    mesh.element_sets = {
        "bottom_row": list(range(nx)),
        "top_row": list(range((ny - 1) * nx, ny * nx)),
    }
    return mesh, nx, ny, nid


def rectangle_mesh(length, height, nx, ny, thickness, distort=0.0, seed=0,
                   weak_pair=False, x0=0.0, y0=0.0):
    """Structured or jittered rectangle.

    distort > 0 moves interior nodes by uniform offsets up to that fraction of
    the local element size (seeded, reproducible). weak_pair adds an element
    set "weak" holding the bottom and top element of the centre column, which
    benchmark configs use for a reduced tensile strength.
    """
    xs = x0 + np.linspace(0.0, length, nx + 1)
    ys = y0 + np.linspace(0.0, height, ny + 1)
    mesh, nx, ny, nid = _grid(xs, ys, thickness)
    if distort > 0.0:
        rng = np.random.default_rng(seed)
        hx, hy = length / nx, height / ny
        jitter = rng.uniform(-distort, distort, size=(mesh.n_nodes, 2)) * np.array([hx, hy])
        interior = ((mesh.nodes[:, 0] > x0 + 1e-12) & (mesh.nodes[:, 0] < x0 + length - 1e-12)
                    & (mesh.nodes[:, 1] > y0 + 1e-12) & (mesh.nodes[:, 1] < y0 + height - 1e-12))
        mesh.nodes[interior] += jitter[interior]
    if weak_pair:
        col = (nx - 1) // 2
        mesh.element_sets["weak"] = [col, (ny - 1) * nx + col]
    mid = mesh.nearest_node(x0, y0 + height / 2.0)
    mesh.node_sets["left_mid"] = [mid]
    mesh.validate()
    return mesh


def _cut_slit(mesh, nid, nx, ny, row_y, x_max, xs, ys):
    """Duplicate nodes on grid line y = ys[row_y] for x < x_max.

    Elements above the line reattach to the copies, producing a zero-width
    horizontal slit with its tip at the first grid vertex >= x_max.
    """
    split_cols = [i for i in range(nx + 1) if xs[i] < x_max - 1e-9]
    new_ids = {}
    nodes = mesh.nodes.tolist()
    for i in split_cols:
        old = nid(i, row_y)
        new_ids[old] = len(nodes)
        nodes.append(list(mesh.nodes[old]))
    elems = mesh.elements.copy()
    for i in range(nx):  # only the element row sitting on the line touches split nodes
        e = row_y * nx + i
        for k in range(4):
            if elems[e, k] in new_ids:
                elems[e, k] = new_ids[elems[e, k]]
    mesh.nodes = np.asarray(nodes)
    mesh.elements = elems
    return new_ids


def kalthoff_mesh(width=100.0, height=200.0, notch_length=50.0, notch_spacing=50.0,
                  nx=40, thickness=9.0, rows=(30, 22, 30)):
    """Twin-notched impact plate.

    Two horizontal zero-width slits run from the left edge, symmetric about
    mid-height and notch_spacing apart. Node set "impact" covers the left-edge
    strip between the notches (inner slit copies included).
    """
    y_lo = (height - notch_spacing) / 2.0
    y_hi = (height + notch_spacing) / 2.0
    n1, n2, n3 = rows
    ys = np.concatenate([
        np.linspace(0.0, y_lo, n1 + 1),
        np.linspace(y_lo, y_hi, n2 + 1)[1:],
        np.linspace(y_hi, height, n3 + 1)[1:],
    ])
    xs = np.linspace(0.0, width, nx + 1)
    mesh, nx_, ny_, nid = _grid(xs, ys, thickness)
    row_lo = n1
    row_hi = n1 + n2
    dup_lo = _cut_slit(mesh, nid, nx_, ny_, row_lo, notch_length, xs, ys)
    dup_hi = _cut_slit(mesh, nid, nx_, ny_, row_hi, notch_length, xs, ys)
    impact = [dup_lo[nid(0, row_lo)]]  # upper copy of lower-notch corner
    impact += [nid(0, j) for j in range(row_lo + 1, row_hi)]
    impact.append(nid(0, row_hi))  # lower (original) copy of upper-notch corner
    mesh.node_sets["impact"] = impact
    mesh.node_sets["notch_tips"] = [nid(int(round(notch_length / (width / nx))), row_lo),
                                    nid(int(round(notch_length / (width / nx))), row_hi)]
    mesh.validate()
    return mesh


def sens_mesh(width=100.0, half_height=20.0, notch_length=50.0, nx=100, ny=41,
              thickness=1.0):
    """Half model of the edge-notched tension plate (symmetric about y = 0).

    The notch is represented by leaving the bottom edge free for x < notch
    length; node set "symmetry" holds the constrained remainder.
    """
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, half_height, ny + 1)
    mesh, nx_, ny_, nid = _grid(xs, ys, thickness)
    sym = [nid(i, 0) for i in range(nx_ + 1) if xs[i] >= notch_length - 1e-9]
    mesh.node_sets["symmetry"] = sym
    mesh.node_sets["tip"] = [mesh.nearest_node(notch_length, 0.0)]
    mesh.validate()
    return mesh


def four_point_bending_mesh(refine=1.0, thickness=156.0):
    """Single-notched shear beam, 1322 x 306 mm.

    Supports sit 61 mm from the ends; the two top load points are 203 mm left
    and right of the notch, which is 5 mm wide and 82 mm deep at midspan. One
    element column forms the notch slot (elements below the notch depth are
    removed). Element set "caps" marks stiffened patches at the four contact
    points.
    """
    span_l, load_l, load_r, span_r = 61.0, 458.0, 864.0, 1261.0
    notch_l, notch_r, notch_depth = 658.5, 663.5, 82.0
    length, depth = 1322.0, 306.0

    def seg(a, b, h):
        n = max(1, int(round((b - a) / h)))
        return np.linspace(a, b, n + 1)

    h_coarse = 52.0 / refine
    h_fine = 17.0 / refine
    xs = np.unique(np.concatenate([
        seg(0.0, span_l, h_coarse), seg(span_l, load_l, h_coarse),
        seg(load_l, notch_l, h_fine), [notch_r],
        seg(notch_r, load_r, h_fine), seg(load_r, span_r, h_coarse),
        seg(span_r, length, h_coarse),
    ]))
    ys = np.unique(np.concatenate([
        seg(0.0, notch_depth, h_fine), seg(notch_depth, depth, h_fine * 1.6),
    ]))
    mesh, nx, ny, nid = _grid(xs, ys, thickness)

    cent = mesh.element_centroids()
    in_notch = ((cent[:, 0] > notch_l) & (cent[:, 0] < notch_r) & (cent[:, 1] < notch_depth))
    keep = np.where(~in_notch)[0]
    mesh.elements = mesh.elements[keep]
    cent = cent[keep]

    cap_w = 40.0
    caps = []
    for cx, cy in [(span_l, 0.0), (span_r, 0.0), (load_l, depth), (load_r, depth)]:
        band = (np.abs(cent[:, 0] - cx) < cap_w) & (np.abs(cent[:, 1] - cy) < h_fine * 1.7)
        caps.extend(np.where(band)[0].tolist())
    mesh.element_sets = {"caps": sorted(set(caps))}
    mesh.node_sets = {
        "support_left": [mesh.nearest_node(span_l, 0.0)],
        "support_right": [mesh.nearest_node(span_r, 0.0)],
        "load_small": [mesh.nearest_node(load_l, depth)],
        "load_main": [mesh.nearest_node(load_r, depth)],
        "notch_mouth": [mesh.nearest_node(notch_r, 0.0)],
        "notch_mouth_left": [mesh.nearest_node(notch_l, 0.0)],
    }
    mesh.validate()
    return mesh


def dens_mesh(model="B", h=12.5, thickness=50.0):
    """Double-edge-notched block in a surrounding loading frame.

    200 x 200 mm specimen, 25 x 5 mm notches at mid-height on both sides,
    10 mm frame strips on all four sides. The frame is interrupted at the
    notch band so its upper and lower parts are only coupled through the
    specimen. Model "B" inserts a 5 mm soft layer between specimen and top
    frame. Element sets: "frame", "soft_layer".
    """
    frame = 10.0
    soft = 5.0 if model == "B" else 0.0
    top_frame_lo = 200.0 + soft
    xs = np.unique(np.concatenate([
        [-frame, 0.0], np.arange(0.0, 200.0 + 1e-9, h), [25.0, 175.0, 200.0, 200.0 + frame],
    ]))
    ys_core = np.arange(0.0, 200.0 + 1e-9, h)
    ys = np.unique(np.concatenate([
        [-frame, 0.0], ys_core, [97.5, 102.5, 151.25, 200.0],
        [top_frame_lo, top_frame_lo + frame],
    ]))
    mesh, nx, ny, nid = _grid(xs, ys, thickness)

    cent = mesh.element_centroids()
    cx, cy = cent[:, 0], cent[:, 1]
    notch = (((cx > 0.0) & (cx < 25.0)) | ((cx > 175.0) & (cx < 200.0))) \
        & (cy > 97.5) & (cy < 102.5)
    frame_gap = ((cx < 0.0) | (cx > 200.0)) & (cy > 97.5) & (cy < 102.5)
    keep = np.where(~(notch | frame_gap))[0]
    mesh.elements = mesh.elements[keep]
    cent = cent[keep]
    cx, cy = cent[:, 0], cent[:, 1]

    frame_els = np.where((cx < 0.0) | (cx > 200.0) | (cy < 0.0) | (cy > top_frame_lo))[0]
    soft_els = np.where((cy > 200.0) & (cy < top_frame_lo))[0] if soft else np.array([], dtype=int)
    mesh.element_sets = {"frame": frame_els.tolist(), "soft_layer": soft_els.tolist()}

    top_y = top_frame_lo + frame
    mesh.node_sets = {
        "bottom_frame": [i for i in range(mesh.n_nodes) if abs(mesh.nodes[i, 1] + frame) < 1e-9],
        "top_frame": [i for i in range(mesh.n_nodes) if abs(mesh.nodes[i, 1] - top_y) < 1e-9],
        "shear_point": [mesh.nearest_node(-frame, 151.25)],
        "p1": [mesh.nearest_node(30.0, 132.5)],
        "p2": [mesh.nearest_node(30.0, 67.5)],
    }
    mesh.validate()
    return mesh


GENERATORS = {
    "rectangle": rectangle_mesh,
    "kalthoff": kalthoff_mesh,
    "sens": sens_mesh,
    "four_point_bending": four_point_bending_mesh,
    "dens": dens_mesh,
}


def generate(spec: dict) -> Mesh:
    """Build a mesh from a generator spec: {"generator": name, ...params}."""
    spec = dict(spec)
    name = spec.pop("generator")
    if name not in GENERATORS:
        raise ValueError(f"unknown mesh generator {name!r}")
    return GENERATORS[name](**spec)
