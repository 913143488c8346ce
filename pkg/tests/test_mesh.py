import json

import numpy as np
import pytest

from edfrac.errors import NonPositiveJacobian, UnknownSetName
from edfrac.mesh import (Mesh, dens_mesh, four_point_bending_mesh, generate,
                         kalthoff_mesh, rectangle_mesh, sens_mesh)


def test_rectangle_mesh_counts_and_sets():
    m = rectangle_mesh(400.0, 200.0, 4, 2, thickness=10.0)
    assert m.n_elements == 8
    assert m.n_nodes == 15
    assert len(m.node_set("left")) == 3
    assert len(m.node_set("bottom")) == 5
    assert set(m.element_set("bottom_row")) == {0, 1, 2, 3}


def test_rectangle_weak_pair():
    m = rectangle_mesh(400.0, 200.0, 9, 4, thickness=10.0, weak_pair=True)
    weak = m.element_set("weak")
    cents = m.element_centroids()[weak]
    assert len(weak) == 2
    assert np.allclose(cents[:, 0], 200.0, atol=25.0)
    assert cents[:, 1].min() < 50.0 and cents[:, 1].max() > 150.0


def test_distorted_mesh_keeps_boundary_and_validity():
    m = rectangle_mesh(400.0, 200.0, 9, 6, thickness=10.0, distort=0.22, seed=3)
    on_left = np.isclose(m.nodes[:, 0], 0.0)
    assert on_left.sum() == 7
    m.validate()  # no inverted elements


def test_distortion_reproducible():
    a = rectangle_mesh(10, 5, 4, 2, 1.0, distort=0.2, seed=7)
    b = rectangle_mesh(10, 5, 4, 2, 1.0, distort=0.2, seed=7)
    assert np.array_equal(a.nodes, b.nodes)


def test_clockwise_elements_reversed_with_warning():
    nodes = [[0, 0], [1, 0], [1, 1], [0, 1]]
    elems = [[0, 3, 2, 1]]  # clockwise
    with pytest.warns(UserWarning):
        m = Mesh.from_dict({"nodes": nodes, "elements": elems, "thickness": 1.0})
    assert list(m.elements[0]) == [1, 2, 3, 0]


def test_degenerate_element_rejected():
    nodes = [[0, 0], [1, 0], [1, 1], [0, 1], [2, 0]]
    elems = [[0, 1, 1, 3]]
    with pytest.raises((NonPositiveJacobian, ValueError)):
        Mesh.from_dict({"nodes": nodes, "elements": elems, "thickness": 1.0})


def test_mesh_json_round_trip(tmp_path):
    m = rectangle_mesh(10, 5, 2, 2, thickness=2.5, weak_pair=True)
    path = tmp_path / "mesh.json"
    m.save(path)
    m2 = Mesh.load(path)
    assert np.allclose(m.nodes, m2.nodes)
    assert np.array_equal(m.elements, m2.elements)
    assert m2.thickness == 2.5
    assert set(m2.element_set("weak")) == set(m.element_set("weak"))
    raw = json.loads(path.read_text())
    assert {"nodes", "elements", "thickness", "node_sets", "edge_sets"} <= set(raw)


def test_unknown_set_raises():
    m = rectangle_mesh(10, 5, 2, 2, thickness=1.0)
    with pytest.raises(UnknownSetName):
        m.node_set("nope")
    with pytest.raises(UnknownSetName):
        m.element_set("nope")


def test_kalthoff_mesh_geometry():
    m = kalthoff_mesh()
    assert m.n_elements == 3280
    # twin slits: duplicated nodes along y=75 and y=125 for x<50
    ys = m.nodes[:, 1]
    xs = m.nodes[:, 0]
    dup75 = np.sum(np.isclose(ys, 75.0) & (xs < 50.0 - 1e-9))
    assert dup75 == 2 * 20  # 20 split columns, two copies each
    impact = m.node_set("impact")
    assert np.allclose(m.nodes[impact, 0], 0.0)
    assert ys[impact].min() == pytest.approx(75.0)
    assert ys[impact].max() == pytest.approx(125.0)
    tips = m.node_set("notch_tips")
    assert np.allclose(m.nodes[tips, 0], 50.0)
    m.validate()


def test_kalthoff_slits_disconnect():
    # displacing the upper lip of a slit must not strain elements below it
    m = kalthoff_mesh()
    upper = [e for e in range(m.n_elements)
             if np.all(m.coords(e)[:, 1] >= 74.9) and np.all(m.coords(e)[:, 1] <= 77.6)
             and m.coords(e)[:, 0].max() < 50.0]
    lower = [e for e in range(m.n_elements)
             if np.all(m.coords(e)[:, 1] <= 75.1) and np.all(m.coords(e)[:, 1] >= 72.4)
             and m.coords(e)[:, 0].max() < 50.0]
    up_nodes = set(int(n) for e in upper for n in m.elements[e])
    lo_nodes = set(int(n) for e in lower for n in m.elements[e])
    shared = up_nodes & lo_nodes
    assert all(m.nodes[n, 0] >= 50.0 - 1e-9 for n in shared)


def test_four_point_bending_mesh():
    m = four_point_bending_mesh()
    assert m.thickness == 156.0
    # notch slot removed below depth 82 at midspan
    cents = m.element_centroids()
    in_slot = ((cents[:, 0] > 658.5) & (cents[:, 0] < 663.5) & (cents[:, 1] < 82.0))
    assert not in_slot.any()
    for name in ("support_left", "support_right", "load_small", "load_main",
                 "notch_mouth"):
        assert len(m.node_set(name)) == 1
    assert len(m.element_set("caps")) > 0
    m.validate()


def test_dens_mesh_models():
    ma = dens_mesh(model="A")
    mb = dens_mesh(model="B")
    assert len(ma.element_set("soft_layer")) == 0
    assert len(mb.element_set("soft_layer")) > 0
    for m in (ma, mb):
        cents = m.element_centroids()
        notch = (((cents[:, 0] > 0) & (cents[:, 0] < 25)) |
                 ((cents[:, 0] > 175) & (cents[:, 0] < 200))) \
            & (cents[:, 1] > 97.5) & (cents[:, 1] < 102.5)
        assert not notch.any()
        assert len(m.element_set("frame")) > 0
        m.validate()


def test_sens_mesh_symmetry_set():
    m = sens_mesh(nx=20, ny=8)
    sym = m.node_set("symmetry")
    assert np.allclose(m.nodes[sym, 1], 0.0)
    assert m.nodes[sym, 0].min() >= 50.0 - 1e-9


def test_generate_dispatch():
    m = generate({"generator": "rectangle", "length": 10, "height": 5,
                  "nx": 2, "ny": 1, "thickness": 1.0})
    assert m.n_elements == 2
    with pytest.raises(ValueError):
        generate({"generator": "hexagons"})
