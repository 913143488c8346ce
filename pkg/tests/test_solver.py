import math

import numpy as np
import pytest

from edfrac.cohesive import ExponentialSoftening
from edfrac.errors import SingularGlobalMatrix, UnknownSetName
from edfrac.mesh import rectangle_mesh
from edfrac.quad4 import elasticity_matrix
from edfrac.solver import (Dirichlet, Model, NewmarkParams, PointLoad,
                           ToleranceSettings, constant_fn, dof_indices,
                           program_fn, run_dynamic, run_path_following,
                           run_static, velocity_fn, _factorize)


def simple_model(nx=2, ny=1, length=2.0, height=1.0, thickness=1.0,
                 e_mod=1000.0, nu=0.2, density=1.0, sigma_un=1e9):
    mesh = rectangle_mesh(length, height, nx, ny, thickness=thickness)
    nel = mesh.n_elements
    c = np.broadcast_to(elasticity_matrix(e_mod, nu, "stress"), (nel, 3, 3)).copy()
    fac = lambda s: ExponentialSoftening(s, 0.2)
    return mesh, Model(mesh, c, np.full(nel, density), np.full(nel, sigma_un),
                       np.full(nel, sigma_un), fac, fac)


def test_dof_indices():
    assert dof_indices([2, 5], "ux").tolist() == [4, 10]
    assert dof_indices([2], "uy").tolist() == [5]
    assert dof_indices([1, 2], "both").tolist() == [2, 3, 4, 5]
    with pytest.raises(ValueError):
        dof_indices([0], "uz")


def test_value_functions():
    assert constant_fn(3.0)(17.5) == 3.0
    fn = program_fn(2.0, [[0.0, 0.0], [1.0, 1.0], [2.0, -0.5]])
    assert fn(0.5) == pytest.approx(1.0)
    assert fn(1.5) == pytest.approx(0.5)
    v = velocity_fn(10.0, t_ramp=1.0, t_off=4.0)
    assert v(0.5) == pytest.approx(1.25)        # quadratic ramp
    assert v(2.0) == pytest.approx(15.0)        # 10*(2 - 0.5)
    assert v(6.0) == v(4.0)                     # frozen after cut-off


def test_assembled_matrix_matches_dense_oracle():
    mesh, model = simple_model(nx=2, ny=1)
    k, _ = model.compute_system(np.zeros(model.ndof))
    dense = np.zeros((model.ndof, model.ndof))
    for e in range(mesh.n_elements):
        el = model.elements[e]
        kc = el.k_dd - el.k_dr @ el.k_rr_inv @ el.k_rd
        dofs = model.dofmap[e]
        dense[np.ix_(dofs, dofs)] += kc
    assert np.allclose(k.toarray(), dense, rtol=1e-12, atol=1e-9)


def test_submatrix_extraction_matches_slicing():
    mesh, model = simple_model(nx=3, ny=2)
    k, _ = model.compute_system(np.zeros(model.ndof))
    free = np.array(sorted(set(range(model.ndof)) - {0, 1, 7}))
    sub = model.submatrix(k, free)
    assert np.allclose(sub.toarray(), k.toarray()[np.ix_(free, free)])


def test_with_scaled_mass_matches_sparse_add():
    mesh, model = simple_model(nx=2, ny=2)
    k, _ = model.compute_system(np.zeros(model.ndof))
    combo = model.with_scaled_mass(k, 3.5)
    expect = k.toarray() + 3.5 * model.mass().toarray()
    assert np.allclose(combo.toarray(), expect)


def test_free_floating_mesh_is_singular():
    mesh, model = simple_model()
    k, _ = model.compute_system(np.zeros(model.ndof))
    with pytest.raises(SingularGlobalMatrix):
        with pytest.warns(UserWarning):
            from edfrac.solver import _free_dofs
            free, _ = _free_dofs(model.ndof, [])
            _factorize(model.submatrix(k, free))


def test_linear_problem_converges_in_one_iteration():
    mesh, model = simple_model(nx=4, ny=2, length=4.0, height=2.0)
    left = dof_indices(mesh.node_set("left"), "ux")
    pin = dof_indices(mesh.node_set("left_mid"), "uy")
    right = dof_indices(mesh.node_set("right"), "ux")
    bcs = [Dirichlet(left, constant_fn(0.0)), Dirichlet(pin, constant_fn(0.0)),
           Dirichlet(right, program_fn(0.01, [[0.0, 0.0], [1.0, 1.0]]))]
    records = run_static(model, [0.0, 1.0], bcs, [])
    assert len(records) == 1
    assert records[0].iterations == 1
    # uniform strain state
    sig = model.bulk_stresses()
    assert np.allclose(sig[:, :, 0], 1000.0 * 0.01 / 4.0, rtol=1e-9)


def test_reactions_balance_applied_load():
    mesh, model = simple_model(nx=3, ny=2, length=3.0, height=2.0)
    left = dof_indices(mesh.node_set("left"), "both")
    tip = mesh.node_set("right")[0]
    load = np.zeros(model.ndof)
    load[2 * tip + 1] = -7.5
    bcs = [Dirichlet(left, constant_fn(0.0))]
    run_static(model, [0.0, 1.0], bcs, [PointLoad(load, constant_fn(1.0))])
    reaction = model.reaction(left)
    # vertical components balance the applied force
    ys = left[1::2]
    assert model.last_residual[ys].sum() == pytest.approx(7.5, rel=1e-9)
    assert abs(model.last_residual[left[0::2]].sum()) < 1e-9 * 7.5


def test_subincrement_invariance_for_linear_problem():
    results = []
    for steps in ([0.0, 1.0], [0.0, 0.25, 0.5, 1.0]):
        mesh, model = simple_model(nx=2, ny=2)
        left = dof_indices(mesh.node_set("left"), "both")
        right = dof_indices(mesh.node_set("right"), "ux")
        bcs = [Dirichlet(left, constant_fn(0.0)),
               Dirichlet(right, program_fn(0.02, [[0.0, 0.0], [1.0, 1.0]]))]
        run_static(model, steps, bcs, [])
        results.append(model.d.copy())
    assert np.allclose(results[0], results[1], atol=1e-14)


def test_path_following_linear_compliance():
    mesh, model = simple_model(nx=4, ny=2, length=4.0, height=2.0, e_mod=500.0)
    left = dof_indices(mesh.node_set("left"), "both")
    bcs = [Dirichlet(left, constant_fn(0.0))]
    tip = mesh.node_set("right")[-1]
    unit = np.zeros(model.ndof)
    unit[2 * tip + 1] = -1.0
    loads = [PointLoad(unit, None)]  # load-factor scaled
    ctrl = 2 * tip + 1
    # linear prediction of the load factor for the final control displacement
    from edfrac.solver import _free_dofs
    free, _ = _free_dofs(model.ndof, bcs)
    k0, _ = model.compute_system(np.zeros(model.ndof))
    x = _factorize(model.submatrix(k0, free)).solve(unit[free])
    compliance = x[np.searchsorted(free, ctrl)]
    records, lam = run_path_following(model, ctrl, -0.01, 4, bcs, loads)
    assert len(records) == 4
    assert model.d[ctrl] == pytest.approx(-0.04, rel=1e-9)
    assert records[0].iterations <= 2
    assert lam == pytest.approx(-0.04 / compliance, rel=1e-9)
    # reversing the control direction mirrors the factor
    mesh2, model2 = simple_model(nx=4, ny=2, length=4.0, height=2.0, e_mod=500.0)
    left2 = dof_indices(mesh2.node_set("left"), "both")
    records2, lam2 = run_path_following(model2, ctrl, +0.01, 4,
                                        [Dirichlet(left2, constant_fn(0.0))], loads)
    assert lam2 == pytest.approx(-lam, rel=1e-9)


def test_newmark_params_validation():
    NewmarkParams(dt=0.1, dt_max=0.1, t_end=1.0)
    with pytest.raises(ValueError):
        NewmarkParams(dt=0.1, dt_max=0.1, t_end=1.0, gamma=0.4)
    with pytest.raises(ValueError):
        NewmarkParams(dt=0.1, dt_max=0.1, t_end=1.0, gamma=0.5, beta=0.2)


def test_newmark_oscillator_period_and_energy():
    """One element, one free axial DOF pair: the trapezoidal rule must show
    the analytic period elongation and conserve energy."""
    mesh, model = simple_model(nx=1, ny=1, length=1.0, height=1.0,
                               e_mod=100.0, density=10.0)
    left = dof_indices(mesh.node_set("left"), "both")
    right_y = dof_indices(mesh.node_set("right"), "uy")
    bcs = [Dirichlet(left, constant_fn(0.0)), Dirichlet(right_y, constant_fn(0.0))]
    from edfrac.solver import _free_dofs
    free, _ = _free_dofs(model.ndof, bcs)
    k, _ = model.compute_system(np.zeros(model.ndof))
    k_ff = model.submatrix(k, free).toarray()
    m_ff = model.mass()[free][:, free].toarray()
    evals = np.linalg.eigvals(np.linalg.solve(m_ff, k_ff))
    omega = math.sqrt(min(e.real for e in evals))

    # initial displacement in the fundamental mode shape (symmetric stretch)
    model.d[free] = 1e-3
    model.d_committed[:] = model.d
    dt = 0.35 / omega
    params = NewmarkParams(dt=dt, dt_max=dt, t_end=60.0 / omega, adaptive=False)
    trace = []
    run_dynamic(model, params, bcs, [],
                on_step=lambda m, rec: trace.append((rec.time, m.d[free][0])))
    trace = np.array(trace)
    # zero crossings give the numerical period
    sign_change = np.where(np.diff(np.sign(trace[:, 1])) != 0)[0]
    crossings = []
    for i in sign_change:
        t0, u0 = trace[i]
        t1, u1 = trace[i + 1]
        crossings.append(t0 - u0 * (t1 - t0) / (u1 - u0))
    periods = 2.0 * np.diff(crossings)
    omega_num = 2.0 * math.pi / periods.mean()
    omega_expected = (2.0 / dt) * math.atan(omega * dt / 2.0)
    assert omega_num == pytest.approx(omega_expected, rel=0.05)
    # amplitude conservation (trapezoidal rule does not damp)
    peaks = np.abs(trace[:, 1])
    assert peaks.max() <= 1e-3 * (1.0 + 1e-6)
    assert np.abs(trace[-20:, 1]).max() > 0.9e-3


def test_dynamic_zero_state_stays_zero():
    mesh, model = simple_model(nx=2, ny=1, density=2.0)
    left = dof_indices(mesh.node_set("left"), "both")
    bcs = [Dirichlet(left, constant_fn(0.0))]
    params = NewmarkParams(dt=0.1, dt_max=0.1, t_end=1.0, adaptive=False)
    run_dynamic(model, params, bcs, [])
    assert np.allclose(model.d, 0.0) and np.allclose(model.v, 0.0)


def test_quadratic_convergence_on_smooth_softening_increment():
    """Residual ratios over the last iterations of a smooth cracked increment
    show at least superlinear contraction (consistent tangents)."""
    from edfrac import benchmarks
    from edfrac.run import build_model, resolve_bcs, resolve_loads, static_times
    from edfrac.solver import _newton_static, _apply_prescribed, _free_dofs

    cfg = benchmarks.uniaxial_cyclic()
    mesh, model, _ = build_model(cfg)
    bcs = resolve_bcs(mesh, cfg)
    free, _ = _free_dofs(model.ndof, bcs)
    times = static_times([(0.45, 68)])  # past nucleation, into smooth softening
    run_static(model, times, bcs, [])
    assert model.cracked.sum() == 1
    _apply_prescribed(model, bcs, 0.47)
    iters, hist = _newton_static(model, free, np.zeros(model.ndof),
                                 ToleranceSettings(max_iter=20, abs_floor=1e-12))
    hist = [h for h in hist if h > 0]
    rates = []
    for k in range(len(hist) - 2):
        if hist[k] < 1e-16 or hist[k + 1] < 1e-16:
            continue
        rates.append(math.log(hist[k + 2] / hist[k + 1])
                     / math.log(hist[k + 1] / hist[k]))
    assert max(rates[-2:]) >= 1.8


def test_static_dynamic_consistency():
    """Slow dynamics with small inertia reproduces the static solution."""
    mesh, model_s = simple_model(nx=2, ny=2, e_mod=200.0)
    left = dof_indices(mesh.node_set("left"), "both")
    right = dof_indices(mesh.node_set("right"), "ux")
    bcs = [Dirichlet(left, constant_fn(0.0)),
           Dirichlet(right, program_fn(0.01, [[0.0, 0.0], [1.0, 1.0]]))]
    run_static(model_s, [0.0, 1.0], bcs, [])

    mesh2, model_d = simple_model(nx=2, ny=2, e_mod=200.0, density=1e-8)
    left2 = dof_indices(mesh2.node_set("left"), "both")
    right2 = dof_indices(mesh2.node_set("right"), "ux")
    bcs2 = [Dirichlet(left2, constant_fn(0.0)),
            Dirichlet(right2, program_fn(0.01, [[0.0, 0.0], [1.0, 1.0]]))]
    params = NewmarkParams(dt=0.05, dt_max=0.05, t_end=1.0, adaptive=False)
    run_dynamic(model_d, params, bcs2, [])
    assert np.allclose(model_d.d, model_s.d, rtol=0.01, atol=1e-9)


def test_unknown_set_raises_in_resolution():
    from edfrac import benchmarks
    from edfrac.run import build_model, resolve_bcs
    cfg = benchmarks.uniaxial_cyclic()
    cfg.bcs[0].node_set = "missing"
    mesh, model, _ = build_model(cfg)
    with pytest.raises(UnknownSetName):
        resolve_bcs(mesh, cfg)


def test_batched_cracked_path_matches_element_api(rng):
    """The solver's batched residual/tangent for cracked elements must agree
    with the per-element reference implementation."""
    from edfrac import benchmarks
    from edfrac.run import build_model, resolve_bcs, resolve_loads, static_times
    from edfrac.element import ElementState
    from edfrac.cohesive import return_map_normal, return_map_tangential

    cfg = benchmarks.tension_test("structured", 0)
    mesh, model, _ = build_model(cfg)
    bcs = resolve_bcs(mesh, cfg)
    loads = resolve_loads(mesh, cfg, model.ndof)
    times = static_times([(0.40, 60)])
    run_static(model, times, bcs, loads)
    assert model.cracked.sum() >= 2
    # random iterate on top of the converged state
    model.d += rng.normal(scale=1e-5, size=model.ndof)
    model._ck_alpha[:, 0] += rng.uniform(0.0, 1e-4, size=len(model._ck_ids))
    k, resid = model.compute_system(np.zeros(model.ndof))

    expect = np.zeros(model.ndof)
    for e in range(mesh.n_elements):
        el = model.elements[e]
        d_e = model.d[model.dofmap[e]]
        state = model.element_state(e)
        if model.cracked[e]:
            rec = model.cracks[e]
            rn = return_map_normal(rec.curve_n, state.alpha[0], rec.state_n,
                                   model.k_full_soft)
            rm = return_map_tangential(rec.curve_m, state.alpha[1], rec.state_m,
                                       model.k_full_soft)
            res = el.residuals(d_e, state, tractions=(rn.traction, rm.traction))
            blocks = el.tangent_blocks(state, rn.tangent, rm.tangent)
            cond = el.condense(blocks, res)
            expect[model.dofmap[e]] += cond.r_c
        else:
            r_d, r_r, _ = el.residuals(d_e, state)
            cond = el.condense(el.tangent_blocks(), (r_d, r_r, np.zeros(2)))
            expect[model.dofmap[e]] += cond.r_c
    assert np.allclose(resid, expect, rtol=1e-9, atol=1e-9)
