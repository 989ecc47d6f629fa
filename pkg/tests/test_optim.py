"""Optimizer loops: extragradient, single-call with negative momentum, the
descent-ascent baseline, averaging, counters, divergence guards, and the
theory-safe step-size gates.

Oracle strategy: the scalar coupling f = xy has closed-form one-step maps
(hand-simulated below), the descent-ascent norm growth on it is exactly
(1 + gamma^2) per step, and a 20-line reference extragradient loop written
directly against the field oracle cross-checks the production loop.
"""

import numpy as np
import pytest

from saddle_scale.errors import DivergenceError, InvalidParameterError
from saddle_scale.optim import (
    DIVERGENCE_RADIUS,
    OptimizerConfig,
    RunStreams,
    Trajectory,
    average_ema,
    average_uniform,
    resolve_gamma,
    run,
    step_extragrad,
    step_sgda,
    step_single_call,
    warm_start_single_call,
)
from saddle_scale.precond import scaling_preset
from saddle_scale.problems import (
    PointPair,
    SaddleProblem,
    field,
    make_bilinear,
    make_quadratic,
)


def xy_game():
    """f(x, y) = x*y: field F = (y, -x), solution at the origin."""
    return SaddleProblem.bilinear_from_matrix(np.array([[1.0]]))


def identity(d_x=1, d_y=1):
    return scaling_preset("identity", d_x, d_y)


def eg_reference(p, z0, gamma, T):
    """Textbook extragradient on the deterministic field, no scaling."""
    z = z0.as_vector().copy()
    for _ in range(T):
        g = field(p, PointPair(z[: p.d_x], z[p.d_x :]))
        zh = z - gamma * g
        gh = field(p, PointPair(zh[: p.d_x], zh[p.d_x :]))
        z = z - gamma * gh
    return z


# ---------------------------------------------------------------------------
# single steps, hand-simulated


def test_extragrad_step_hand_simulation():
    p = xy_game()
    streams = RunStreams.from_seed(0)
    z = PointPair([1.0], [1.0])
    z1, zh, _ = step_extragrad(p, z, identity(), 0.1, streams)
    np.testing.assert_allclose(zh.as_vector(), [0.9, 1.1], atol=1e-15)
    np.testing.assert_allclose(z1.as_vector(), [0.89, 1.09], atol=1e-15)


def test_extragrad_zero_step_is_fixed_point():
    p = xy_game()
    streams = RunStreams.from_seed(0)
    z = PointPair([1.0], [1.0])
    z1, zh, _ = step_extragrad(p, z, identity(), 0.0, streams)
    np.testing.assert_array_equal(z1.as_vector(), z.as_vector())
    np.testing.assert_array_equal(zh.as_vector(), z.as_vector())


def test_single_call_step_hand_simulation():
    p = xy_game()
    streams = RunStreams.from_seed(0)
    z0 = PointPair([1.0], [1.0])
    cache = warm_start_single_call(p, z0, streams)
    np.testing.assert_array_equal(cache.g_prev.as_vector(), [1.0, -1.0])
    s = identity()
    z1, zh0, w1, cache, s = step_single_call(
        p, z0, z0, cache, s, gamma=0.1, eta=0.0, anchor_prob=1.0,
        streams=streams)
    np.testing.assert_allclose(zh0.as_vector(), [0.9, 1.1], atol=1e-15)
    np.testing.assert_allclose(z1.as_vector(), [0.89, 1.09], atol=1e-15)
    np.testing.assert_array_equal(w1.as_vector(), z0.as_vector())
    z2, zh1, w2, cache, s = step_single_call(
        p, z1, w1, cache, s, gamma=0.1, eta=0.0, anchor_prob=1.0,
        streams=streams)
    np.testing.assert_allclose(zh1.as_vector(), [0.78, 1.18], atol=1e-14)
    np.testing.assert_array_equal(w2.as_vector(), z1.as_vector())


def test_sgda_step_norm_growth_identity():
    p = xy_game()
    streams = RunStreams.from_seed(0)
    z = PointPair([1.0], [1.0])
    z1, _ = step_sgda(p, z, identity(), 0.1, streams)
    n0 = z.as_vector() @ z.as_vector()
    n1 = z1.as_vector() @ z1.as_vector()
    assert n1 == pytest.approx((1 + 0.01) * n0, rel=1e-14)


def test_sgda_scalar_sc_linear_convergence():
    from saddle_scale.problems import quadratic_from_matrices

    q = quadratic_from_matrices([[1.0]], [[0.0]], [[1.0]], [0.0], [0.0])
    streams = RunStreams.from_seed(0)
    z = PointPair([1.0], [-2.0])
    s = identity()
    for _ in range(20):
        z, s = step_sgda(q, z, s, 0.25, streams)
    assert z.x[0] == pytest.approx(0.75**20, rel=1e-12)
    assert z.y[0] == pytest.approx(-2.0 * 0.75**20, rel=1e-12)


# ---------------------------------------------------------------------------
# full runs: counters, records, averaging


def test_run_extragrad_call_accounting():
    p = make_quadratic(3, 3, mu=0.5, L=2.0, seed=0)
    cfg = OptimizerConfig(method="extragrad", gamma=0.01,
                          scaling=scaling_preset("rmsprop", 3, 3), T=100, seed=1)
    traj = run(p, cfg)
    assert traj.grad_calls == 200
    assert traj.hvp_calls == 0
    assert len(traj.records) == 100
    assert traj.records[-1].grad_calls == 200


def test_run_single_call_accounting():
    p = make_quadratic(3, 3, mu=0.5, L=2.0, seed=0)
    cfg = OptimizerConfig(method="single-call-momentum", gamma=0.001,
                          scaling=scaling_preset("oasis", 3, 3), T=100, seed=1)
    traj = run(p, cfg)
    assert traj.grad_calls == 101
    assert traj.hvp_calls == 100


def test_run_sgda_accounting():
    p = make_quadratic(3, 3, mu=0.5, L=2.0, seed=0)
    cfg = OptimizerConfig(method="sgda", gamma=0.001,
                          scaling=scaling_preset("adam", 3, 3), T=77, seed=1)
    traj = run(p, cfg)
    assert traj.grad_calls == 77


def test_run_t_zero_convention():
    p = make_quadratic(2, 2, mu=0.5, L=2.0, seed=0)
    z0 = PointPair([1.0, 0.0], [0.0, 1.0])
    for method, calls in (("extragrad", 0), ("sgda", 0),
                          ("single-call-momentum", 1)):
        cfg = OptimizerConfig(method=method, gamma=0.01,
                              scaling=identity(2, 2), T=0, seed=0, z0=z0)
        traj = run(p, cfg)
        assert traj.records == []
        assert traj.grad_calls == calls
        np.testing.assert_array_equal(traj.final_z.as_vector(), z0.as_vector())
        np.testing.assert_array_equal(
            traj.final_avg_uniform.as_vector(), z0.as_vector())


def test_run_records_describe_prestep_iterates():
    p = xy_game()
    z0 = PointPair([1.0], [1.0])
    cfg = OptimizerConfig(method="extragrad", gamma=0.1, scaling=identity(),
                          T=2, seed=0, z0=z0)
    traj = run(p, cfg)
    assert traj.records[0].dist2 == pytest.approx(2.0, rel=1e-15)
    assert traj.records[1].dist2 == pytest.approx(0.89**2 + 1.09**2, rel=1e-14)
    # grad_norm2 is the deterministic field norm at the recorded iterate
    assert traj.records[0].grad_norm2 == pytest.approx(2.0, rel=1e-15)


def test_run_half_iterates_and_uniform_average():
    p = xy_game()
    z0 = PointPair([1.0], [1.0])
    cfg = OptimizerConfig(method="extragrad", gamma=0.1, scaling=identity(),
                          T=2, seed=0, z0=z0)
    traj = run(p, cfg)
    np.testing.assert_allclose(traj.half_z[0], [0.9, 1.1], atol=1e-15)
    avg = average_uniform(traj)
    np.testing.assert_allclose(avg.as_vector(), traj.half_z.mean(axis=0),
                               atol=1e-15)
    np.testing.assert_allclose(traj.final_avg_uniform.as_vector(),
                               avg.as_vector(), atol=1e-15)


def test_average_ema_limits():
    p = xy_game()
    cfg = OptimizerConfig(method="extragrad", gamma=0.1, scaling=identity(),
                          T=5, seed=0, z0=PointPair([1.0], [1.0]))
    traj = run(p, cfg)
    # lambda = 0 keeps only the newest half-iterate
    np.testing.assert_array_equal(average_ema(traj, 0.0).as_vector(),
                                  traj.half_z[-1])
    # hand recursion for lambda = 0.5
    a = traj.half_z[0].copy()
    for row in traj.half_z[1:]:
        a = 0.5 * a + 0.5 * row
    np.testing.assert_allclose(average_ema(traj, 0.5).as_vector(), a,
                               rtol=1e-12)


def test_average_of_empty_trajectory_rejected():
    p = xy_game()
    cfg = OptimizerConfig(method="extragrad", gamma=0.1, scaling=identity(),
                          T=0, seed=0, z0=PointPair([1.0], [1.0]))
    traj = run(p, cfg)
    with pytest.raises(InvalidParameterError):
        average_ema(traj, 0.5)


def test_run_matches_reference_extragradient():
    p = make_quadratic(4, 4, mu=0.5, L=2.0, seed=2)
    z0 = PointPair(np.ones(4), np.ones(4))
    cfg = OptimizerConfig(method="extragrad", gamma=0.05,
                          scaling=identity(4, 4), T=300, seed=0, z0=z0)
    traj = run(p, cfg)
    ref = eg_reference(p, z0, 0.05, 300)
    np.testing.assert_allclose(traj.final_z.as_vector(), ref, atol=1e-14)


def test_run_seed_stability_and_sensitivity():
    p = make_quadratic(3, 3, mu=0.5, L=2.0, seed=0, sigma=0.3)
    mk = lambda seed: OptimizerConfig(
        method="extragrad", gamma=0.003, scaling=scaling_preset("oasis", 3, 3),
        T=50, seed=seed)
    a, b = run(p, mk(7)), run(p, mk(7))
    np.testing.assert_array_equal(a.final_z.as_vector(), b.final_z.as_vector())
    assert [r.r2_weighted for r in a.records] == [r.r2_weighted for r in b.records]
    c = run(p, mk(8))
    assert not np.array_equal(a.final_z.as_vector(), c.final_z.as_vector())


def test_anchor_stream_is_isolated():
    # with eta = 0 the anchor never touches the iterates, so changing
    # anchor_prob must not move anything else (named rng streams)
    p = make_quadratic(2, 2, mu=0.5, L=2.0, seed=0, sigma=0.2)
    mk = lambda ap: OptimizerConfig(
        method="single-call-momentum", gamma=0.001, eta=0.0, anchor_prob=ap,
        scaling=scaling_preset("oasis", 2, 2), T=40, seed=3)
    a, b = run(p, mk(1.0)), run(p, mk(0.05))
    np.testing.assert_array_equal(a.final_z.as_vector(), b.final_z.as_vector())


def test_negative_momentum_changes_iterates():
    p = make_quadratic(2, 2, mu=0.5, L=2.0, seed=0)
    mk = lambda eta: OptimizerConfig(
        method="single-call-momentum", gamma=0.001, eta=eta, anchor_prob=0.25,
        scaling=scaling_preset("oasis", 2, 2), T=40, seed=3)
    a, b = run(p, mk(0.0)), run(p, mk(0.002))
    assert not np.array_equal(a.final_z.as_vector(), b.final_z.as_vector())


def test_sgda_exact_growth_on_xy():
    p = xy_game()
    cfg = OptimizerConfig(method="sgda", gamma=0.1, scaling=identity(),
                          T=100, seed=0, z0=PointPair([1.0], [1.0]))
    traj = run(p, cfg)
    n100 = traj.final_z.as_vector() @ traj.final_z.as_vector()
    assert n100 == pytest.approx(1.01**100 * 2.0, rel=1e-10)


def test_extragrad_shrinks_xy_monotonically():
    p = xy_game()
    cfg = OptimizerConfig(method="extragrad", gamma=0.1, scaling=identity(),
                          T=100, seed=0, z0=PointPair([1.0], [1.0]))
    traj = run(p, cfg)
    d = [r.dist2 for r in traj.records]
    assert all(b < a for a, b in zip(d, d[1:]))


# ---------------------------------------------------------------------------
# scaling trace and record invariants


def test_trace_scaling_captures_fires_and_vectors():
    p = make_quadratic(3, 2, mu=0.5, L=2.0, seed=0)
    scaling = scaling_preset("oasis", 3, 2, update_prob=0.5)
    cfg = OptimizerConfig(method="extragrad", gamma=0.001, scaling=scaling,
                          T=60, seed=5, trace_scaling=True)
    traj = run(p, cfg)
    assert len(traj.scaling_trace) == 60
    fired = [e.fired for e in traj.scaling_trace]
    assert any(fired) and not all(fired)
    for prev, cur in zip(traj.scaling_trace, traj.scaling_trace[1:]):
        if not cur.fired:
            assert np.all(cur.clipped_x <= prev.clipped_x)
            assert np.all(cur.clipped_y <= prev.clipped_y)
    no_trace = run(p, OptimizerConfig(method="extragrad", gamma=0.001,
                                      scaling=scaling, T=3, seed=5))
    assert no_trace.scaling_trace is None


def test_record_weighted_distance_sandwich():
    p = make_quadratic(4, 4, mu=0.5, L=2.0, seed=1)
    scaling = scaling_preset("oasis", 4, 4)
    cfg = OptimizerConfig(method="extragrad", gamma=0.001, scaling=scaling,
                          T=200, seed=2)
    traj = run(p, cfg)
    cap = np.sqrt(8) * p.L
    for r in traj.records:
        assert scaling.floor_e * r.dist2 * (1 - 1e-12) <= r.r2_weighted
        assert r.r2_weighted <= cap * r.dist2 * (1 + 1e-12)
        assert scaling.floor_e <= r.dhat_min <= r.dhat_max <= cap


def test_batch_shrinks_noise():
    p = make_quadratic(2, 2, mu=0.5, L=2.0, seed=0, sigma=1.0)
    z = PointPair([0.3, -0.1], [0.2, 0.5])
    from saddle_scale.problems import OracleSample, gradient

    det = field(p, z)
    noisy = gradient(p, z, OracleSample(seed=1, batch=10_000)).as_vector()
    assert np.linalg.norm(noisy - det) <= p.noise_bound / 100.0 + 1e-12


# ---------------------------------------------------------------------------
# streaming, divergence, validation


def test_on_records_streams_in_chunks():
    p = make_quadratic(2, 2, mu=0.5, L=2.0, seed=0)
    cfg = OptimizerConfig(method="sgda", gamma=0.01, scaling=identity(2, 2),
                          T=2500, seed=0)
    chunks = []
    traj = run(p, cfg, on_records=lambda rs: chunks.append(list(rs)))
    assert [len(c) for c in chunks] == [1000, 1000, 500]
    flat = [r for c in chunks for r in c]
    assert flat == traj.records


def test_sgda_diverges_on_bilinear_with_partial_trajectory():
    p = xy_game()
    cfg = OptimizerConfig(method="sgda", gamma=0.5, scaling=identity(),
                          T=10_000, seed=0, z0=PointPair([1.0], [1.0]))
    with pytest.raises(DivergenceError) as info:
        run(p, cfg)
    err = info.value
    assert err.t is not None and 0 < err.t < 1000
    assert err.trajectory is not None
    assert len(err.trajectory.records) == err.t
    assert err.trajectory.records[-1].dist2 <= DIVERGENCE_RADIUS**2 * 4


def test_config_validation():
    s = identity()
    with pytest.raises(InvalidParameterError):
        OptimizerConfig(method="newton", gamma=0.1, scaling=s, T=1, seed=0)
    with pytest.raises(InvalidParameterError):
        OptimizerConfig(method="sgda", gamma=-0.1, scaling=s, T=1, seed=0)
    with pytest.raises(InvalidParameterError):
        OptimizerConfig(method="sgda", gamma=0.1, scaling=s, T=-1, seed=0)
    with pytest.raises(InvalidParameterError):
        OptimizerConfig(method="sgda", gamma=0.1, scaling=s, T=1, seed=0,
                        batch=0)
    with pytest.raises(InvalidParameterError):
        OptimizerConfig(method="single-call-momentum", gamma=0.1, scaling=s,
                        T=1, seed=0, eta=-1.0)
    with pytest.raises(InvalidParameterError):
        OptimizerConfig(method="single-call-momentum", gamma=0.1, scaling=s,
                        T=1, seed=0, anchor_prob=0.0)
    with pytest.raises(InvalidParameterError):
        OptimizerConfig(method="sgda", gamma=0.1, scaling=s, T=1, seed=0,
                        averaging="harmonic")


def test_theory_safe_gates():
    p = make_quadratic(2, 2, mu=0.5, L=2.0, seed=0)  # SC: gamma <= e/(4L)
    s = scaling_preset("oasis", 2, 2)
    e = s.floor_e
    ok = OptimizerConfig(method="extragrad", gamma=e / (4 * p.L) * 0.99,
                         scaling=s, T=1, seed=0, theory_safe=True)
    run(p, ok)
    bad = OptimizerConfig(method="extragrad", gamma=e / (4 * p.L) * 1.01,
                          scaling=s, T=1, seed=0, theory_safe=True)
    with pytest.raises(InvalidParameterError):
        run(p, bad)
    # monotone-not-SC case allows up to e/(2L)
    b = make_bilinear(2, L=2.0, seed=0)
    mid = OptimizerConfig(method="extragrad", gamma=e / (3.9 * b.L),
                          scaling=s, T=1, seed=0, theory_safe=True)
    run(b, mid)
    # single-call gates: gamma <= e/(10L), eta <= e*p, p <= 1/4
    with pytest.raises(InvalidParameterError):
        run(p, OptimizerConfig(method="single-call-momentum",
                               gamma=e / (9 * p.L), scaling=s, T=1, seed=0,
                               anchor_prob=0.25, theory_safe=True))
    with pytest.raises(InvalidParameterError):
        run(p, OptimizerConfig(method="single-call-momentum",
                               gamma=e / (11 * p.L), scaling=s, T=1, seed=0,
                               anchor_prob=0.25, eta=e, theory_safe=True))
    with pytest.raises(InvalidParameterError):
        run(p, OptimizerConfig(method="single-call-momentum",
                               gamma=e / (11 * p.L), scaling=s, T=1, seed=0,
                               anchor_prob=0.3, theory_safe=True))
    run(p, OptimizerConfig(method="single-call-momentum",
                           gamma=e / (11 * p.L), scaling=s, T=1, seed=0,
                           anchor_prob=0.25, eta=e * 0.25, theory_safe=True))


def test_resolve_gamma_default_is_conservative():
    p = make_quadratic(2, 2, mu=0.5, L=2.0, seed=0)
    s = scaling_preset("oasis", 2, 2)
    cfg = OptimizerConfig(method="extragrad", gamma=None, scaling=s, T=1,
                          seed=0)
    assert resolve_gamma(p, cfg) == pytest.approx(s.floor_e / (10 * p.L))
    explicit = OptimizerConfig(method="extragrad", gamma=0.123, scaling=s,
                               T=1, seed=0)
    assert resolve_gamma(p, explicit) == 0.123


def test_anchor_prob_one_pins_anchor_to_previous_iterate():
    p = make_quadratic(2, 2, mu=0.5, L=2.0, seed=0)
    streams = RunStreams.from_seed(0)
    z = PointPair([1.0, 1.0], [1.0, 1.0])
    w = PointPair([9.0, 9.0], [9.0, 9.0])
    cache = warm_start_single_call(p, z, streams)
    s = scaling_preset("oasis", 2, 2)
    z1, _, w1, cache, s = step_single_call(
        p, z, w, cache, s, gamma=1e-3, eta=0.0, anchor_prob=1.0,
        streams=streams)
    np.testing.assert_array_equal(w1.as_vector(), z.as_vector())
    z2, _, w2, cache, s = step_single_call(
        p, z1, w1, cache, s, gamma=1e-3, eta=0.0, anchor_prob=1.0,
        streams=streams)
    np.testing.assert_array_equal(w2.as_vector(), z1.as_vector())
