import numpy as np
import pytest

from nzpc.data import PlantDimensions, RankError, Trajectory, build_window
from nzpc.plant import PlantSimulator, generate_dataset, linear_dynamics, verify_containment
from nzpc.reach import (
    LinearizationPoint,
    ReachConfig,
    compute_Zeps,
    estimate_model,
    learn,
    reach_horizon,
    reach_step,
)
from nzpc.sets import Zonotope, contains_point, to_interval

A = np.array([[0.9, 0.2], [-0.1, 0.8]])
B = np.array([[0.5, 0.0], [0.1, 1.0]])
OFF = np.array([0.3, -0.2])
H = np.array([[1.0, 0.001], [-0.01, 1.0]])


def linear_setup(noise=0.0, seed=0, n_traj=20, length=8):
    dims = PlantDimensions(2, 2, 2, H, 50.0)
    Zw = Zonotope([0.0, 0.0], noise * np.eye(2))
    Zv = Zonotope([0.0, 0.0], noise * np.eye(2))
    sim = PlantSimulator(linear_dynamics(A, B, OFF), dims, Zw, Zv, seed=seed)
    X0 = Zonotope.box([1.0, -1.0], [0.5, 0.5])
    Zu = Zonotope.box([0.2, 0.1], [1.0, 1.0])
    trajs = generate_dataset(sim, X0, Zu, n_traj, length)
    cfg = ReachConfig(Zw, Zv, Zu, Lf=[1.0, 1.0])
    return dims, sim, X0, Zu, build_window(trajs), cfg


def test_noise_free_lti_recovery():
    dims, _, _, Zu, w, cfg = linear_setup()
    y_star = np.array([0.7, -0.4])
    point = LinearizationPoint.from_centers(y_star, cfg.Zv.center, Zu.center, dims)
    model = estimate_model(w, point, cfg, dims)
    x_star, u_star = point.x_star, point.u_star
    expected = np.hstack([(H @ (A @ x_star + B @ u_star + OFF))[:, None], H @ A, H @ B])
    assert np.linalg.norm(model.Mhat - expected) < 1e-8
    assert model.Mhat.shape == (2, 5)


def test_noise_free_lti_mismatch_vanishes():
    dims, _, _, _, w, cfg = linear_setup()
    _, ZL, Zeps = learn(w, [0.7, -0.4], cfg, dims)
    hull = to_interval(ZL)
    assert np.max(np.abs(hull.lower)) < 1e-8 and np.max(np.abs(hull.upper)) < 1e-8
    assert not np.any(Zeps.generators)


def test_linearization_point_invariant():
    dims = PlantDimensions(2, 1, 2, H, 1.0)
    p = LinearizationPoint.from_centers([1.0, 2.0], [0.1, -0.1], [3.0], dims)
    np.testing.assert_allclose(p.x_star, dims.H_pinv @ np.array([0.9, 2.1]))
    np.testing.assert_array_equal(p.xi_star, np.concatenate([p.x_star, [3.0]]))


def test_poorly_exciting_data_rejected():
    dims = PlantDimensions(2, 2, 2, H, 50.0)
    cfg = ReachConfig(Zonotope.point([0.0, 0.0]), Zonotope.point([0.0, 0.0]),
                      Zonotope.box([0.0, 0.0], [1.0, 1.0]), Lf=[1.0, 1.0])
    # constant input: the input block of the regressor has rank 0
    t = Trajectory(np.ones((20, 2)), np.random.default_rng(0).normal(size=(20, 2)))
    with pytest.raises(RankError):
        learn(build_window([t]), [0.0, 0.0], cfg, dims)


def test_zeps_formula_and_override():
    dims = PlantDimensions(2, 2, 2, H, 50.0)
    base = dict(Zw=Zonotope.point([0.0, 0.0]), Zv=Zonotope.point([0.0, 0.0]),
                Zu=Zonotope.box([0.0, 0.0], [1.0, 1.0]))
    cfg = ReachConfig(**base, Lf=[2.0, 3.0], delta=0.5)
    np.testing.assert_allclose(compute_Zeps(cfg, dims).generators,
                               np.diag(np.abs(H) @ np.array([2.0, 3.0]) * 0.25))
    assert not np.any(compute_Zeps(ReachConfig(**base, Lf=[2.0, 3.0]), dims).generators)
    over = Zonotope([0.0, 0.0], np.diag([0.08, 0.71]))
    assert compute_Zeps(ReachConfig(**base, Lf=[2.0, 3.0], z_eps_override=over), dims) is over


def test_config_validation():
    z = Zonotope.point([0.0, 0.0])
    with pytest.raises(ValueError):
        ReachConfig(z, z, z, Lf=[1.0, 0.0])
    with pytest.raises(ValueError):
        ReachConfig(z, z, z, Lf=[1.0, 1.0], delta=-1.0)


def test_generator_count_law():
    dims, _, X0, Zu, w, cfg = linear_setup(noise=0.01)
    Ry0 = H @ X0 + cfg.Zv
    res = reach_horizon(w, Ry0, 4, cfg, dims)
    per_step = (cfg.Zv.num_generators + dims.n_x              # state set extras
                + Zu.num_generators + cfg.Zv.num_generators + cfg.Zw.num_generators
                + res.ZL.num_generators + res.Zeps.num_generators)
    counts = [Ry0.num_generators] + [z.num_generators for z in res.output_sets]
    assert np.all(np.diff(counts) == per_step)


def test_reduction_caps_generators():
    dims, _, X0, _, w, cfg0 = linear_setup(noise=0.01)
    cfg = ReachConfig(cfg0.Zw, cfg0.Zv, cfg0.Zu, cfg0.Lf, max_generators=10)
    res = reach_horizon(w, H @ X0 + cfg.Zv, 5, cfg, dims)
    assert all(z.num_generators <= 10 for z in res.output_sets)


def test_larger_delta_gives_larger_sets():
    dims, _, X0, _, w, cfg = linear_setup(noise=0.01)
    Ry0 = H @ X0 + cfg.Zv
    small = reach_horizon(w, Ry0, 3, ReachConfig(cfg.Zw, cfg.Zv, cfg.Zu, [1.0, 1.0], 0.1), dims)
    big = reach_horizon(w, Ry0, 3, ReachConfig(cfg.Zw, cfg.Zv, cfg.Zu, [1.0, 1.0], 0.5), dims)
    for a, b in zip(small.output_sets, big.output_sets):
        ha, hb = to_interval(a), to_interval(b)
        assert np.all(hb.lower <= ha.lower + 1e-12) and np.all(hb.upper >= ha.upper - 1e-12)
        np.testing.assert_allclose(a.center, b.center, atol=1e-12)


def test_delta_to_zero_removes_zeps():
    dims, _, _, _, _, cfg = linear_setup()
    widths = [np.abs(compute_Zeps(ReachConfig(cfg.Zw, cfg.Zv, cfg.Zu, [1.0, 2.0], d), dims)
                     .generators).sum() for d in (1.0, 0.1, 0.01, 0.0)]
    assert widths == sorted(widths, reverse=True) and widths[-1] == 0.0


def test_step_with_point_input_adds_no_input_generators():
    dims, _, X0, Zu, w, cfg = linear_setup(noise=0.01)
    model, ZL, Zeps = learn(w, (H @ X0.center), cfg, dims)
    Ry0 = H @ X0 + cfg.Zv
    _, with_set = reach_step(Ry0, Zu, model, ZL, Zeps, cfg, dims)
    _, with_point = reach_step(Ry0, Zonotope.point(Zu.center), model, ZL, Zeps, cfg, dims)
    np.testing.assert_allclose(with_set.center, with_point.center, atol=1e-12)
    assert with_set.num_generators - with_point.num_generators == Zu.num_generators


def test_horizon_must_be_positive():
    dims, _, X0, _, w, cfg = linear_setup()
    with pytest.raises(ValueError):
        reach_horizon(w, H @ X0, 0, cfg, dims)


def test_noisy_linear_plant_containment():
    dims, sim, X0, Zu, w, cfg = linear_setup(noise=0.01, n_traj=30)
    res = reach_horizon(w, H @ X0 + cfg.Zv, 4, cfg, dims)
    rep = verify_containment(sim, res, X0, Zu, 200, seed=9)
    assert rep.all_contained, rep.to_dict()


def test_one_step_contains_true_successor_from_observed_output():
    # a single measured output as the initial set: the next output must be inside
    dims, sim, X0, Zu, w, cfg = linear_setup(noise=0.01, n_traj=30)
    rng = np.random.default_rng(1)
    for _ in range(50):
        x = X0.center + X0.generators @ rng.uniform(-1, 1, 2)
        y = sim.measure(x)
        u = Zu.center + Zu.generators @ rng.uniform(-1, 1, 2)
        model, ZL, Zeps = learn(w, y, cfg, dims)
        _, Ry1 = reach_step(Zonotope.point(y), Zonotope.point(u), model, ZL, Zeps, cfg, dims)
        assert contains_point(Ry1, sim.measure(sim.step(x, u)))


def test_more_noise_never_shrinks_sets():
    dims, _, X0, _, w, cfg = linear_setup(noise=0.01)
    Ry0 = H @ X0 + cfg.Zv
    base = reach_horizon(w, Ry0, 4, cfg, dims)
    wider_w = ReachConfig(Zonotope(cfg.Zw.center, 2 * cfg.Zw.generators), cfg.Zv, cfg.Zu, cfg.Lf)
    wider_v = ReachConfig(cfg.Zw, Zonotope(cfg.Zv.center, 2 * cfg.Zv.generators), cfg.Zu, cfg.Lf)
    for c in (wider_w, wider_v):
        res = reach_horizon(w, Ry0, 4, c, dims)
        for a, b in zip(base.output_sets, res.output_sets):
            ha, hb = to_interval(a), to_interval(b)
            assert np.all(hb.lower <= ha.lower + 1e-12) and np.all(hb.upper >= ha.upper - 1e-12)
