import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from segbeam.errors import DataError, ParameterError, ShapeError
from segbeam.mvdr import batch_mvdr_weights, default_loading
from segbeam.segmenter import (SegmenterConfig, SegmenterState, calibrate_penalty,
                               fixed_window_mpdr, offline_dp_segment, resolve_parameters,
                               run_online, segment_power, step)
from scenes import complex_normal, rotation_scene, stationary_scene


def brute_force_segmentation(x, nu, c, delta, tau=0):
    """Exhaustive minimum of sum(E(i, j) + C) over all 2^(T-1) partitions."""
    T = len(x)
    min_len = tau + 1 if tau > 0 else 1
    best = (math.inf, None)
    for mask in itertools.product((0, 1), repeat=T - 1):
        starts = [0] + [k + 1 for k, m in enumerate(mask) if m]
        bounds = starts + [T]
        lengths = np.diff(bounds)
        if len(starts) > 1 and lengths.min() < min_len:
            continue
        cost = sum(segment_power(x[a:b], nu, delta) + c for a, b in zip(bounds[:-1], bounds[1:]))
        if cost < best[0] - 1e-12 * abs(cost):
            best = (cost, starts)
    return best[1], best[0]


def huge_penalty(x):
    return 1e6 * float(np.sum(np.abs(x) ** 2)) + 1.0


# ---------------------------------------------------------------- config

@pytest.mark.parametrize("kw", [dict(tau=-1), dict(tau=1.5), dict(max_window=0),
                                dict(tau=8, max_window=8), dict(penalty_c=-1.0),
                                dict(delta=0.0), dict(c_rel=-1.0)])
def test_config_rejects(kw):
    with pytest.raises(ParameterError):
        SegmenterConfig(**kw)


def test_config_defaults():
    cfg = SegmenterConfig()
    assert cfg.tau == 8 and cfg.max_window is None and cfg.c_rel == 2.0


# ---------------------------------------------------------------- step / run_online

def test_infinite_penalty_never_switches():
    x, nu = rotation_scene(0, n_frames=300, change=150)
    _, part = run_online(x, nu, SegmenterConfig(penalty_c=huge_penalty(x), tau=0))
    assert part == [0]


def test_tau_at_least_T_never_switches():
    x, nu = rotation_scene(1, n_frames=120, change=60)
    _, part = run_online(x, nu, SegmenterConfig(penalty_c=0.0, tau=120))
    assert part == [0]


def test_single_snapshot_and_empty_input():
    rng = np.random.default_rng(0)
    nu = complex_normal(rng, 3)
    y, part = run_online(complex_normal(rng, (1, 3)), nu, SegmenterConfig())
    assert y.shape == (1,) and part == [0]
    y, part = run_online(np.zeros((0, 3)), nu, SegmenterConfig())
    assert y.shape == (0,) and part == [0]


def test_step_output_is_a_priori_and_new_start_iff_switched():
    x, nu = rotation_scene(2, n_frames=200, change=100)
    c, delta = resolve_parameters(x, nu, SegmenterConfig())
    state = SegmenterState(nu, c, delta=delta, tau=4)
    for t in range(len(x)):
        w_active = state.active_weights()[0].copy() if t else nu / np.vdot(nu, nu)
        out = step(state, x[t])
        assert out.y == pytest.approx(np.vdot(w_active, x[t]), rel=1e-12, abs=1e-12)
        assert (out.new_start is not None) == out.switched
        if out.switched:
            assert out.new_start == state.partition[0][-1]


def test_state_invariants_along_run():
    x, nu = rotation_scene(3, n_frames=400, change=200)
    c, delta = resolve_parameters(x, nu, SegmenterConfig())
    state = SegmenterState(nu, c, delta=delta, tau=8)
    for t in range(len(x)):
        state.step(x[t])
        starts = state.candidate_starts()
        cur = int(state.cur[0])
        assert cur in state.partition[0]
        assert all(cur <= s <= t for s in starts)
        part = state.partition[0]
        assert part[0] == 0 and all(a < b for a, b in zip(part, part[1:]))
    e = state.cost_history()
    assert np.all(np.isfinite(e))
    assert np.all(np.diff(e) >= -1e-9 * np.abs(e[1:]))
    assert state.max_constraint_error <= 1e-9


def test_e_history_increment_bounded_by_energy():
    x, nu = rotation_scene(4, n_frames=300, change=150)
    c, delta = resolve_parameters(x, nu, SegmenterConfig())
    _, _, state = run_online(x, nu, SegmenterConfig(penalty_c=c, delta=delta), return_state=True)
    e = state.cost_history()
    energy = np.sum(np.abs(x) ** 2, axis=1)
    # E[n] - E[m] grows by at most C plus the energy that arrived in between
    # (the active chain's a-posteriori output never exceeds the input power
    # times ||w||^2, bounded for this loading); check the weaker sanity bound
    assert np.all(np.diff(e) <= c + energy[1:] * 10)


def test_zero_data_ties_keep_oldest_start():
    nu = np.array([1.0, 1j])
    _, part = run_online(np.zeros((50, 2)), nu, SegmenterConfig(penalty_c=0.0, delta=1.0, tau=0))
    assert part == [0]


def test_reduction_to_growing_window_mpdr():
    x, nu = stationary_scene(5, n_frames=300)
    c_inf = huge_penalty(x)
    cfg = SegmenterConfig(penalty_c=c_inf)
    y, part = run_online(x, nu, cfg)
    _, delta = resolve_parameters(x, nu, cfg)
    ref = fixed_window_mpdr(x, nu, len(x), delta)
    assert part == [0]
    rel = np.abs(y - ref)[10:] / np.abs(ref)[10:]
    assert rel.max() <= 1e-6


def test_growing_window_reduction_after_transient():
    x, nu = stationary_scene(6, n_frames=200)
    _, delta = resolve_parameters(x, nu, SegmenterConfig())
    y, part = run_online(x, nu, SegmenterConfig(penalty_c=huge_penalty(x), delta=delta))
    growing = np.array([np.vdot(batch_mvdr_weights(x[:t], nu, delta), x[t]) for t in range(len(x))])
    assert np.max(np.abs(y - growing)[20:] / np.abs(growing)[20:]) <= 1e-6


def test_detects_orthogonal_rotation_p2():
    # interferer energy rotates to the orthogonal direction; both are off the look direction
    nu = np.array([1.0, 1.0], dtype=complex)
    d1 = np.array([1.0, 1j]) * 10.0
    d2 = np.array([1.0, -1j]) * 10.0
    tau = 8
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = complex_normal(rng, (200, 2))
        d = np.where(np.arange(200)[:, None] < 100, d1, d2)
        x += complex_normal(rng, 200)[:, None] * d
        _, part = run_online(x, nu, SegmenterConfig(tau=tau))
        if len(part) == 2 and 100 <= part[1] <= 100 + tau + 10:
            hits += 1
    assert hits >= 95


def test_three_planted_changes():
    # interferer alternates between a direction 30 degrees off the look
    # direction and one orthogonal to both; observed rate is 23 of 30 seeds,
    # the misses being one extra switch shortly after a true change
    p, T, tau = 4, 800, 8
    nu = np.ones(p, dtype=complex)
    truth = [200, 400, 600]
    q, _ = np.linalg.qr(np.column_stack([nu, [1, -1, 1, -1], [1, 1j, -1, -1j], [1, -1j, -1, 1j]]))
    n_hat, f, h, _ = q.T
    d1 = np.cos(np.pi / 6) * n_hat + np.sin(np.pi / 6) * f
    dirs = [d1, h, d1, h]
    bounds = [0] + truth + [T]
    good = 0
    for seed in range(30):
        rng = np.random.default_rng(seed)
        x = complex_normal(rng, (T, p))
        for k, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
            x[a:b] += complex_normal(rng, b - a, 20.0)[:, None] * dirs[k]
        _, part = run_online(x, nu, SegmenterConfig(tau=tau))
        if len(part) - 1 == 3 and all(abs(a - b) <= tau + 10 for a, b in zip(part[1:], truth)):
            good += 1
    assert good >= 20


def test_multi_stream_matches_independent_runs():
    xs, nus = [], []
    for seed in range(3):
        x, nu = rotation_scene(seed, n_frames=250, change=120)
        xs.append(x)
        nus.append(nu * np.exp(1j * seed))
    cfg = SegmenterConfig(tau=4, max_window=32)
    y, parts = run_online(np.stack(xs), np.stack(nus), cfg)
    for b in range(3):
        yb, pb = run_online(xs[b], nus[b], cfg)
        assert pb == parts[b]
        assert np.allclose(y[b], yb, rtol=1e-12, atol=1e-14)


def test_bounded_window_respects_cap_and_keeps_active():
    x, nu = rotation_scene(7, n_frames=400, change=200)
    cfg = SegmenterConfig(tau=2, max_window=6)
    c, delta = resolve_parameters(x, nu, cfg)
    state = SegmenterState.from_config(nu, cfg, penalty_c=c, delta=delta)
    for t in range(len(x)):
        state.step(x[t])
        starts = state.candidate_starts()
        assert len(starts) <= 6
        assert int(state.cur[0]) in starts
    assert state.max_constraint_error <= 1e-9


def test_window_of_one_keeps_single_candidate():
    x, nu = rotation_scene(8, n_frames=100, change=50)
    y, part = run_online(x, nu, SegmenterConfig(tau=0, max_window=1))
    assert part == [0]
    _, delta = resolve_parameters(x, nu, SegmenterConfig())
    assert np.allclose(y, fixed_window_mpdr(x, nu, 1000, delta), rtol=1e-8)


def test_step_errors():
    state = SegmenterState(np.ones(3), 1.0, delta=1.0)
    with pytest.raises(ShapeError):
        state.step(np.ones(2))
    with pytest.raises(DataError):
        state.step(np.array([1.0, np.inf, 0.0]))
    with pytest.raises(ShapeError):
        run_online(np.ones((4, 2)), np.ones(3), SegmenterConfig())


def test_unbounded_bank_grows():
    x, nu = stationary_scene(9, n_frames=100)
    _, _, state = run_online(x, nu, SegmenterConfig(penalty_c=huge_penalty(x)), return_state=True)
    assert state.candidate_starts() == list(range(100))


# ---------------------------------------------------------------- defaults

def test_penalty_rule_matches_definition():
    x, nu = stationary_scene(10, n_frames=120)
    delta = float(default_loading(x[0]))
    y = np.array([np.vdot(batch_mvdr_weights(x[:t], nu, delta), x[t]) for t in range(50)])
    expected = 2.0 * np.median(np.abs(y) ** 2) * 50
    assert calibrate_penalty(x, nu, delta) == pytest.approx(expected, rel=1e-9)
    c, d = resolve_parameters(x, nu, SegmenterConfig())
    assert d == pytest.approx(delta) and c == pytest.approx(expected, rel=1e-9)


# ---------------------------------------------------------------- offline DP

@given(st.integers(0, 100_000), st.sampled_from([0.0, 0.5, 3.0]), st.sampled_from([0, 2]))
@settings(max_examples=40, deadline=None)
def test_dp_matches_brute_force(seed, c, tau):
    rng = np.random.default_rng(seed)
    T, p = 10, 2
    nu = complex_normal(rng, p)
    x = complex_normal(rng, (T, p)) * rng.uniform(0.1, 3.0, (T, 1))
    delta = 0.1
    part, cost = offline_dp_segment(x, nu, SegmenterConfig(penalty_c=c, delta=delta, tau=tau))
    bpart, bcost = brute_force_segmentation(x, nu, c, delta, tau)
    assert part == bpart
    assert cost == pytest.approx(bcost, rel=1e-9)


def test_dp_huge_penalty_single_segment():
    x, nu = rotation_scene(12, n_frames=60, change=30)
    c = huge_penalty(x)
    part, cost = offline_dp_segment(x, nu, SegmenterConfig(penalty_c=c, delta=0.5, tau=0))
    assert part == [0]
    assert cost == pytest.approx(segment_power(x, nu, 0.5) + c, rel=1e-12)


def test_dp_identical_halves_single_segment():
    rng = np.random.default_rng(13)
    nu = np.ones(2, dtype=complex)
    half = complex_normal(rng, (6, 2))
    x = np.concatenate([half, half])
    c = 0.05 * float(np.sum(np.abs(x) ** 2))
    part, _ = offline_dp_segment(x, nu, SegmenterConfig(penalty_c=c, delta=0.1, tau=0))
    bpart, _ = brute_force_segmentation(x, nu, c, 0.1)
    assert part == bpart == [0]


def test_dp_rejects_empty_and_batches():
    with pytest.raises(ShapeError):
        offline_dp_segment(np.zeros((0, 2)), np.ones(2), SegmenterConfig(penalty_c=1.0, delta=1.0))
    with pytest.raises(ShapeError):
        offline_dp_segment(np.zeros((2, 5, 2)), np.ones(2), SegmenterConfig(penalty_c=1.0, delta=1.0))


def test_online_agrees_with_oracle_on_separated_changes():
    tau = 8
    agree = 0
    for seed in range(20):
        x, nu = rotation_scene(seed, n_frames=300, change=150)
        cfg = SegmenterConfig(tau=tau)
        _, online = run_online(x, nu, cfg)
        oracle, _ = offline_dp_segment(x, nu, cfg)
        if len(online) == len(oracle) and all(abs(a - b) <= tau + 10 for a, b in zip(online, oracle)):
            agree += 1
    assert agree >= 19


# ---------------------------------------------------------------- fixed windows

def test_fixed_window_matches_batch_definition():
    rng = np.random.default_rng(14)
    nu = complex_normal(rng, 3)
    x = complex_normal(rng, (60, 3))
    for k in (1, 5, 20):
        y = fixed_window_mpdr(x, nu, k, 0.2)
        for t in (0, 1, 4, 5, 30, 59):
            w = batch_mvdr_weights(x[max(0, t - k):t], nu, 0.2)
            assert y[t] == pytest.approx(np.vdot(w, x[t]), rel=1e-9, abs=1e-12)


def test_fixed_window_long_run_rebuild_is_accurate():
    rng = np.random.default_rng(15)
    nu = complex_normal(rng, 2)
    x = complex_normal(rng, (2100, 2)) * np.repeat(rng.uniform(0.01, 100, 21), 100)[:, None]
    y = fixed_window_mpdr(x, nu, 70, 1e-3)
    for t in (1023, 1024, 1500, 2099):
        w = batch_mvdr_weights(x[t - 70:t], nu, 1e-3)
        assert y[t] == pytest.approx(np.vdot(w, x[t]), rel=1e-6)


def test_fixed_window_rejects_bad_k():
    with pytest.raises(ParameterError):
        fixed_window_mpdr(np.zeros((3, 2)), np.ones(2), 0, 1.0)
