import itertools
from collections import Counter

import numpy as np
import pytest

from coupled_superposition.density_evolution import Schedule, run_block_de
from coupled_superposition.mc_sim import (SINR_CAP, build_system, count_four_cycles, demodulate,
                                          draw_data, group_sum_rate, measure_sinr, run_trials,
                                          transmit)
from coupled_superposition.mse import MseFunction
from coupled_superposition.params import SystemParams


def brute_four_cycles(system):
    """Pairs of symbols from different streams sharing k slots close C(k, 2) cycles."""
    M2 = system.params.M2
    shared = Counter()
    by_slot = {}
    for l in range(system.n_streams):
        for k in range(0, system.pos.shape[1], M2):
            by_slot.setdefault(system.pos[l, k] // M2, []).append((l, system.sym[l, k]))
    for nodes in by_slot.values():
        for u, v in itertools.combinations(nodes, 2):
            if u[0] != v[0]:
                shared[tuple(sorted((u, v)))] += 1
    return sum(k * (k - 1) // 2 for k in shared.values())


def test_block_structure():
    p = SystemParams(L=6, M1=4, M2=2, N=10, sigma2=0.1)
    s = build_system(p, 1)
    assert s.n_streams == 6 and s.n_chips == p.M * p.N
    assert np.all(s.occupancy() == p.L)
    for l in range(p.L):
        T = s.replica_sets(l)
        assert T.shape == (p.N, p.M)
        assert len(np.unique(T)) == p.M * p.N
        counts = np.bincount(s.sym[l], minlength=p.N)
        assert np.all(counts == p.M)


def test_tiny_system():
    p = SystemParams(L=1, M1=2, M2=1, N=4, sigma2=0.0)
    s = build_system(p, 5)
    assert sorted(s.sym[0]) == [0, 0, 1, 1, 2, 2, 3, 3]
    assert s.amplitude == 1.0
    data = draw_data(s)
    y = transmit(s, data)
    assert np.allclose(y[s.pos[0]], s.sign[0] * data[0, s.sym[0]])


def test_coupled_ramp():
    p = SystemParams(L=6, M1=6, M2=1, N=5, sigma2=0.1, W=1)
    s = build_system(p, 2, n_groups=7)
    assert p.N_w == 10 and p.L_w == 2
    occ = s.occupancy()
    assert s.n_chips == 6 * 10 + 30
    for k in range(s.n_chips // p.N_w):
        seg = occ[k * p.N_w:(k + 1) * p.N_w]
        expect = p.L_w * min(k + 1, p.span, s.n_chips // p.N_w - k)
        assert np.all(seg == expect)


def test_four_cycle_count_matches_brute_force():
    p = SystemParams(L=4, M1=3, M2=2, N=4, sigma2=0.1)
    s = build_system(p, 11)
    assert count_four_cycles(s) == brute_four_cycles(s)
    pc = SystemParams(L=3, M1=3, M2=1, N=4, sigma2=0.1, W=1)
    sc = build_system(pc, 4, n_groups=5)
    assert count_four_cycles(sc) == brute_four_cycles(sc)


def test_expurgation_reduces_cycles():
    p = SystemParams(L=8, M1=3, M2=1, N=60, sigma2=0.1)
    plain = count_four_cycles(build_system(p, 3))
    exp = build_system(p, 3, expurgate=True, retries=8)
    assert exp.four_cycles == count_four_cycles(exp)
    assert exp.four_cycles <= plain


def test_expurgation_needs_aligned_slots():
    p = SystemParams(L=3, M1=1, M2=3, N=5, sigma2=0.1, W=1)
    with pytest.raises(ValueError):
        build_system(p, 0, expurgate=True)


def test_received_power():
    p = SystemParams(L=20, M1=20, M2=1, N=500, sigma2=0.3)
    power = []
    for seed in range(8):
        s = build_system(p, seed)
        power.append(np.mean(transmit(s, draw_data(s)) ** 2))
    assert np.mean(power) == pytest.approx(1 + p.sigma2, rel=0.02)


def test_seed_determinism():
    p = SystemParams(L=5, M1=4, M2=1, N=20, sigma2=0.1)
    a, b = build_system(p, 9), build_system(p, 9)
    assert np.array_equal(a.sym, b.sym) and np.array_equal(a.sign, b.sign)
    da, db = draw_data(a), draw_data(b)
    assert np.array_equal(transmit(a, da), transmit(b, db))
    c = build_system(p, 10)
    assert not np.array_equal(a.sym, c.sym)
    with pytest.raises(ValueError):
        transmit(a, da[:, :3])


def test_messages_are_extrinsic():
    p = SystemParams(L=4, M1=4, M2=1, N=50, sigma2=0.1)
    s = build_system(p, 1)
    data = draw_data(s)
    y = transmit(s, data)
    base = demodulate(s, y, 1).extra["messages"]
    c = 17
    y2 = y.copy()
    y2[c] += 1e-3
    moved = demodulate(s, y2, 1).extra["messages"] - base
    l, k = 0, int(np.nonzero(s.pos[0] == c)[0][0])
    same_sym = np.nonzero(s.sym[l] == s.sym[l, k])[0]
    others = same_sym[same_sym != k]
    assert np.max(np.abs(moved[l, others])) > 1e-5
    assert abs(moved[l, k]) < 1e-2 * np.max(np.abs(moved[l, others]))


def test_first_iteration_statistics():
    p = SystemParams(L=20, M1=20, M2=1, N=400, sigma2=0.1)
    res_power, sinr = [], []
    for seed in range(8):
        s = build_system(p, seed)
        data = draw_data(s)
        res = demodulate(s, transmit(s, data), 1, truth=data)
        res_power.append(res.residual_power[0])
        sinr.append(res.sinr[0])
        assert res.variance_est[0][0] == pytest.approx(res.residual_power[0], rel=0.05)
    # with zero messages each chip sees the other L-1 streams plus noise
    assert np.mean(res_power) == pytest.approx((p.L - 1) / p.L + p.sigma2, rel=0.02)
    assert np.mean(sinr) == pytest.approx(1 / (p.alpha_eff * (1 + p.sigma2_eff)), rel=0.05)


def test_measure_sinr():
    p = SystemParams(L=2, M1=2, M2=1, N=10, sigma2=0.1)
    s = build_system(p, 0)
    v = draw_data(s)
    assert np.all(measure_sinr(s, v, v) == SINR_CAP)
    assert np.allclose(measure_sinr(s, v, np.zeros_like(v)), 1.0)


def test_hard_feedback_decodes_everything():
    p = SystemParams(L=10, M1=20, M2=1, N=200, sigma2=0.01)
    s = build_system(p, 0)
    data = draw_data(s)
    res = demodulate(s, transmit(s, data), 8, Schedule.hard_feedback(10.0), truth=data)
    assert res.decoded[-1].all()
    assert res.mse_post[-1] == 0.0
    with pytest.raises(ValueError):
        demodulate(s, transmit(s, data), 2, Schedule.hard_feedback(10.0))


def test_no_truth_returns_nan():
    p = SystemParams(L=4, M1=4, M2=1, N=20, sigma2=0.1)
    s = build_system(p, 0)
    res = demodulate(s, transmit(s, draw_data(s)), 2)
    assert np.all(np.isnan(res.sinr))
    with pytest.raises(ValueError):
        demodulate(s, transmit(s, draw_data(s)), 0)


def test_small_block_matches_de(f1):
    p = SystemParams(L=30, M1=20, M2=1, N=300, sigma2=0.1)
    ts = run_trials(p, range(4), 10)
    de = run_block_de(f1, p.alpha_eff, p.sigma2_eff, max_iters=10, stop_tol=0)
    g_de = 1 / (p.alpha_eff * de.x[:10])
    assert np.max(np.abs(10 * np.log10(ts.mean_sinr() / g_de))) < 0.5
    assert ts.sinr_db_std().shape == (10,)


def test_coupled_trial_outputs(tmp_path):
    p = SystemParams(L=9, M1=9, M2=1, N=6, sigma2=0.05, W=1)
    ts = run_trials(p, [0, 1], 4)
    r = ts.results[0]
    assert r.sinr_sub.shape[1] == ts.systems_info[0]["n_chips"] // p.N_w
    rate, term = r.extra["sum_rate"], r.extra["sum_rate_terminated"]
    n = ts.systems_info[0]["n_groups"]
    assert term == pytest.approx(rate * n / (n + 2))
    path = tmp_path / "mc.csv"
    ts.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "trial,iter,t_or_stream,mse,sinr_db"
    ts.write_manifest(tmp_path / "m.json")


def test_group_sum_rate_pools_error_power():
    p = SystemParams(L=4, M1=4, M2=1, N=8, sigma2=0.1)
    s = build_system(p, 0)
    f = MseFunction(1)
    rate, term = group_sum_rate(s, np.array([1.0, 1.0, 4.0, 4.0]), f)
    pooled = 1 / np.mean([1.0, 1.0, 0.25, 0.25])
    assert rate == pytest.approx(p.alpha * f.capacity(pooled))
    assert term == rate
