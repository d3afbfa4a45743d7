import numpy as np
import pytest

from test_reach import H, linear_setup
from nzpc.config import ExperimentConfig
from nzpc.control import (
    AffinePredictor,
    InfeasibleStep,
    NzpcConfig,
    assemble_qp,
    build_predictor,
    nzpc_step,
    run_closed_loop,
)
from nzpc.data import PlantDimensions
from nzpc.experiments import run_nzpc
from nzpc.qp import OPTIMAL, solve_qp
from nzpc.reach import LinearizationPoint, LinearizedModel, ReachConfig, learn, reach_horizon
from nzpc.sets import Zonotope, contains_point

INF = np.inf


def scalar_cfg(**kw):
    z = Zonotope.point([0.0])
    reach = ReachConfig(z, z, Zonotope.box([0.0], [100.0]), Lf=[1.0])
    base = dict(N=1, Q=[[1.0]], R=[[1.0]], y_ref=[0.0], u_ref=[0.0],
                input_constraint=Zonotope.box([0.0], [50.0]),
                output_lower=[-INF], output_upper=[INF], steps=1, reach=reach)
    base.update(kw)
    return NzpcConfig(**base)


def linear_cfg(reach, N=3, steps=20, **kw):
    base = dict(N=N, Q=5 * np.eye(2), R=0.02 * np.eye(2), y_ref=[0.0, 0.0], u_ref=[0.2, 0.1],
                input_constraint=reach.Zu, output_lower=[-5.0, -5.0], output_upper=[5.0, 5.0],
                steps=steps, reach=reach)
    base.update(kw)
    return NzpcConfig(**base)


# -- config -----------------------------------------------------------------------

def test_config_rejects_bad_weights():
    with pytest.raises(ValueError):
        scalar_cfg(Q=[[0.0]])
    with pytest.raises(ValueError):
        scalar_cfg(R=[[-1.0]])
    with pytest.raises(ValueError):
        scalar_cfg(N=0)


def test_config_rejects_input_set_outside_domain():
    with pytest.raises(ValueError):
        scalar_cfg(input_constraint=Zonotope.box([0.0], [200.0]))


def test_schedules_hold_last_entry():
    U1, U2 = Zonotope.box([0.0], [1.0]), Zonotope.box([0.0], [2.0])
    cfg = scalar_cfg(input_schedule=[U1, U2], output_schedule=[([-1.0], [1.0]), ([-2.0], [2.0])])
    assert cfg.input_set(0) is U1 and cfg.input_set(7) is U2
    np.testing.assert_array_equal(cfg.output_bounds(9)[1], [2.0])


# -- predictor ---------------------------------------------------------------------

def test_single_step_gain_is_input_matrix():
    dims, _, X0, _, w, cfg = linear_setup(noise=0.01)
    model, ZL, Zeps = learn(w, H @ X0.center, cfg, dims)
    pred = build_predictor(model, ZL, Zeps, H @ X0 + cfg.Zv, 1, cfg, dims)
    np.testing.assert_array_equal(pred.block_gain(0, 0), model.B)


def test_gain_is_causal():
    dims, _, X0, _, w, cfg = linear_setup(noise=0.01)
    model, ZL, Zeps = learn(w, H @ X0.center, cfg, dims)
    pred = build_predictor(model, ZL, Zeps, Zonotope.point(H @ X0.center), 4, cfg, dims)
    for k in range(4):
        for j in range(k + 1, 4):
            assert not np.any(pred.block_gain(k, j))
        np.testing.assert_allclose(pred.block_gain(k, k), model.B, atol=1e-15)


def random_reach_case(seed):
    rng = np.random.default_rng(seed)
    noise = rng.uniform(0.0, 0.05)
    dims, _, X0, Zu, w, cfg0 = linear_setup(noise=noise, seed=seed, n_traj=10, length=6)
    cfg = ReachConfig(cfg0.Zw, cfg0.Zv, cfg0.Zu, rng.uniform(0.1, 2.0, 2), rng.uniform(0, 0.5))
    N = int(rng.integers(1, 7))
    Ry0 = Zonotope(rng.normal(size=2), rng.normal(size=(2, 2)) * 0.2)
    return dims, w, cfg, N, Ry0


def predictor_center_gap(seed):
    dims, w, cfg, N, Ry0 = random_reach_case(seed)
    res = reach_horizon(w, Ry0, N, cfg, dims)
    pred = build_predictor(res.model, res.ZL, res.Zeps, Ry0, N, cfg, dims)
    c = pred.centers(np.tile(cfg.Zu.center, N))
    gap = max(np.max(np.abs(c[k] - z.center)) for k, z in enumerate(res.output_sets))
    # the set recursion carries the Zu generators, the point-input one does not
    extra = [z.num_generators - g.shape[1] for z, g in zip(res.output_sets, pred.generators)]
    return gap, extra, cfg.Zu.num_generators


def test_predictor_matches_reach_horizon():
    for seed in range(10):
        gap, extra, n_zu = predictor_center_gap(seed)
        assert gap <= 1e-12
        assert extra == [n_zu * (k + 1) for k in range(len(extra))]


def test_zero_model_gives_input_independent_centers(cstr_dims):
    p = LinearizationPoint.from_centers([0.0, 0.0], [0.0, 0.0], [0.0, 0.0], cstr_dims)
    model = LinearizedModel(np.zeros((2, 5)), p)
    z = Zonotope.point([0.0, 0.0])
    cfg = ReachConfig(z, z, Zonotope.box([0.0, 0.0], [1.0, 1.0]), Lf=[1.0, 1.0])
    pred = build_predictor(model, z, z, Zonotope.point([1.0, 2.0]), 3, cfg, cstr_dims)
    rng = np.random.default_rng(0)
    c0 = pred.centers(np.zeros(6))
    for _ in range(5):
        np.testing.assert_array_equal(pred.centers(rng.normal(size=6)), c0)


# -- QP assembly -------------------------------------------------------------------

def test_scalar_problem_matches_hand_solution():
    # y = o + u, cost (o + u)^2 + u^2 -> u* = -o / 2
    for o in (-3.0, 0.5, 7.25):
        pred = AffinePredictor(np.array([[o]]), np.array([[[1.0]]]), (np.zeros((1, 0)),))
        prob, layout = assemble_qp(pred, scalar_cfg())
        s = solve_qp(prob, tol=1e-10)
        assert s.status == OPTIMAL
        assert layout.inputs(s.x)[0, 0] == pytest.approx(-o / 2, abs=1e-8)
        assert s.objective + layout.const == pytest.approx(o * o / 2, abs=1e-8)


def test_unconstrained_outputs_reduce_to_weighted_least_squares():
    dims, _, X0, _, w, reach = linear_setup(noise=0.01)
    wide = Zonotope.box([0.0, 0.0], [1e3, 1e3])
    reach = ReachConfig(reach.Zw, reach.Zv, wide, reach.Lf)
    cfg = linear_cfg(reach, N=2, output_lower=[-INF, -INF], output_upper=[INF, INF])
    model, ZL, Zeps = learn(w, H @ X0.center, reach, dims)
    pred = build_predictor(model, ZL, Zeps, Zonotope.point(H @ X0.center), 2, reach, dims)
    prob, layout = assemble_qp(pred, cfg)
    s = solve_qp(prob, tol=1e-9)
    u = layout.inputs(s.x).reshape(-1)
    # with beta free in the box the optimum pulls every y toward y_ref; compare the
    # u block against least squares on the stacked centers with beta eliminated
    ys = pred.centers(u)
    betas = [layout.beta(s.x, k) for k in range(2)]
    target = [np.zeros(2) - pred.offset[k] - pred.generators[k] @ betas[k] for k in range(2)]
    sq5, sqr = np.sqrt(5.0), np.sqrt(0.02)
    M = np.vstack([sq5 * pred.gain[0], sq5 * pred.gain[1], sqr * np.eye(4)])
    b = np.concatenate([sq5 * target[0], sq5 * target[1], sqr * np.tile(cfg.u_ref, 2)])
    np.testing.assert_allclose(u, np.linalg.lstsq(M, b, rcond=None)[0], atol=1e-6)
    assert ys.shape == (2, 2)


def test_encoding_is_exact_and_rows_hold():
    dims, _, X0, _, w, reach = linear_setup(noise=0.01)
    cfg = linear_cfg(reach, output_lower=[-1.0, -1.6], output_upper=[0.95, 0.5])
    res = nzpc_step(w, H @ X0.center, cfg, dims)
    for k, z in enumerate(res.sets):
        assert contains_point(z, res.predicted[k], 1e-8)
        hull = z.interval()
        assert np.all(hull.upper <= cfg.output_upper + 1e-8)
        assert np.all(hull.lower >= cfg.output_lower - 1e-8)
    assert contains_point(cfg.input_constraint, res.u, 1e-9)


def test_non_box_input_set():
    dims, _, X0, _, w, reach = linear_setup(noise=0.01)
    U = Zonotope([0.2, 0.1], [[0.4, 0.3], [-0.3, 0.4]])
    cfg = linear_cfg(reach, input_constraint=U, y_ref=[3.0, -3.0])
    res = nzpc_step(w, H @ X0.center, cfg, dims)
    assert res.layout.alpha_slices[0] is not None
    for u in res.inputs:
        assert contains_point(U, u, 1e-7)
    # the reference is far away, so the optimum sits on the boundary of U
    from nzpc.sets import containment_margin
    assert min(containment_margin(U, u) for u in res.inputs) < 1e-4


def test_impossible_bounds_raise_with_diagnostics():
    dims, _, X0, _, w, reach = linear_setup(noise=0.01)
    cfg = linear_cfg(reach, output_lower=[0.0, 0.0], output_upper=[0.0, 0.0])
    with pytest.raises(InfeasibleStep) as exc:
        nzpc_step(w, H @ X0.center, cfg, dims)
    assert exc.value.diagnostics["width"]


# -- closed loop ---------------------------------------------------------------------

def test_zero_steps_gives_empty_log():
    dims, sim, X0, _, w, reach = linear_setup()
    log = run_closed_loop(sim, linear_cfg(reach, steps=0), w, X0.center)
    assert log.records == [] and log.ok
    assert log.outputs.shape == (0, 2)


def test_noise_free_loop_converges():
    dims, sim, X0, _, w, reach = linear_setup()
    wide = dict(output_lower=[-50.0, -50.0], output_upper=[50.0, 50.0])
    log = run_closed_loop(sim, linear_cfg(reach, steps=30, **wide), w, X0.center, seed=0)
    assert log.ok
    err = np.linalg.norm(log.outputs, axis=1)
    assert err[-1] < 0.1 * err[0]
    assert np.all(np.diff(err[5:]) <= 1e-9)


def test_noisy_loop_respects_constraints():
    dims, sim, X0, _, w, reach = linear_setup(noise=0.01)
    cfg = linear_cfg(reach, steps=25, output_lower=[-1.0, -1.5], output_upper=[1.5, 1.0])
    log = run_closed_loop(sim, cfg, w, X0.center, seed=4, keep_sets=True)
    assert log.ok, log.violations
    assert all(len(r.sets) == cfg.N for r in log.records)


def test_infeasible_step_aborts():
    dims, sim, X0, _, w, reach = linear_setup(noise=0.01)
    cfg = linear_cfg(reach, output_lower=[0.0, 0.0], output_upper=[0.0, 0.0])
    log = run_closed_loop(sim, cfg, w, X0.center, seed=0)
    assert log.aborted and len(log.records) == 1
    assert log.violations["infeasible"] == 1 and not log.ok
    assert 0 in log.diagnostics


def test_fallback_holds_previous_input():
    dims, sim, X0, _, w, reach = linear_setup(noise=0.01)
    wide = ([-5.0, -5.0], [5.0, 5.0])
    shut = ([0.0, 0.0], [0.0, 0.0])
    cfg = linear_cfg(reach, N=1, steps=5, output_schedule=[wide, wide, wide, shut],
                     fallback_hold=True)
    log = run_closed_loop(sim, cfg, w, X0.center, seed=0)
    assert log.aborted is None and len(log.records) == 5
    statuses = [r.status for r in log.records]
    assert statuses[:2] == [OPTIMAL, OPTIMAL] and OPTIMAL not in statuses[2:]
    for r in log.records[2:]:
        np.testing.assert_array_equal(r.u, log.records[1].u)


def test_log_csv_layout(tmp_path):
    dims, sim, X0, _, w, reach = linear_setup(noise=0.01)
    log = run_closed_loop(sim, linear_cfg(reach, N=2, steps=3), w, X0.center, seed=0)
    path = tmp_path / "log.csv"
    log.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",")[:9] == ["step", "y_1", "y_2", "u_1", "u_2", "qp_status",
                                       "qp_iters", "solve_ms", "R1_lo_1"]
    assert len(lines) == 4 and len(lines[1].split(",")) == len(lines[0].split(","))


def test_benchmark_first_steps_feasible():
    log = run_nzpc(ExperimentConfig(), seed=1, steps=5)
    assert log.ok, (log.aborted, log.violations)
    cfg_U = Zonotope([0.0, 0.007], np.diag([5.0, 3.0]))
    for r in log.records:
        assert contains_point(cfg_U, r.u)


def test_dims_mismatch_rejected():
    dims, sim, X0, _, w, reach = linear_setup()
    sim3 = type(sim)(sim.dynamics, PlantDimensions(2, 2, 1, H[:1], 50.0),
                     sim.Zw, Zonotope.point([0.0]))
    with pytest.raises(ValueError):
        run_closed_loop(sim3, linear_cfg(reach), w, X0.center)
