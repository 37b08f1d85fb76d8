import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmux.core import InfeasibleError, OutOfRangeError
from qmux.multiserver import (
    Composition,
    HubConfig,
    HubGrid,
    HubPreset,
    SamplerConfig,
    Strategy,
    _chunk_rng,
    analytic_gain_s2,
    analytic_rate_s2,
    baseline_rate,
    draw_rounds,
    expected_decay,
    intrinsic_fidelities,
    load_preset,
    max_cutoff_for_fidelity,
    optimize_hub,
    round_exposures,
    run_sampler,
    simulate,
    single_qubit_hub_gain,
    storage_fidelity,
    storage_fidelity_expected,
    worst_case_exposures,
    worst_case_fidelity,
)

HUB = HubConfig(M=2, s=2, P_sc=1e-3, P_ss=0.3, n_e=1000, n_o=100)


def test_single_qubit_gain_examples():
    assert single_qubit_hub_gain(1e-9, 6).gain == pytest.approx(6, rel=1e-7)
    assert single_qubit_hub_gain(0.3, 1).gain == 1.0
    assert single_qubit_hub_gain(0.5, 2).gain == pytest.approx(1.0)


def test_try_and_commit_without_cutoff():
    for p in (0.5, 1e-2, 1e-4):
        hub = HubConfig(M=1, s=2, P_sc=p, P_ss=0.5, n_e=10**9, n_o=10**9)
        rate = analytic_rate_s2(hub, "try_and_commit")
        assert rate == pytest.approx(p / (2 - p), rel=1e-9)
    assert rate * 2 / 1e-4 == pytest.approx(1, rel=1e-4)


def test_strategies_coincide_at_one_server():
    hub = HUB.replace(M=1)
    assert analytic_rate_s2(hub, "multiplex") == analytic_rate_s2(hub, "try_and_commit")
    assert analytic_gain_s2(hub, "multiplex").gain == pytest.approx(1.0)


def test_try_and_commit_gain_tends_to_M():
    for M in (2, 5, 10):
        hub = HubConfig(M=M, s=2, P_sc=1e-7, P_ss=0.3, n_e=1000, n_o=1000)
        g = analytic_gain_s2(hub, "try_and_commit")
        assert g.gain / M == pytest.approx(1, rel=1e-3)


@pytest.mark.parametrize("M", [2, 4, 8])
def test_multiplex_gain_below_limit(M):
    hub = HubConfig(M=M, s=2, P_sc=1e-7, P_ss=0.5, n_e=200, n_o=50)
    g = analytic_gain_s2(hub, "multiplex", n_e_baseline=150)
    assert g.gain <= g.details["asymptotic_bound"] * 1.05
    assert g.details["asymptotic_bound"] == M * (M - 1) * 50 * 200 / 150


def test_analytic_rate_needs_two_qubits():
    with pytest.raises(OutOfRangeError):
        analytic_rate_s2(HUB.replace(s=3, M=3), "multiplex")


def test_underflow_flag():
    hub = HubConfig(M=3, s=2, P_sc=0.5, P_ss=0.9, n_e=5000, n_o=5000)
    _, flags = analytic_rate_s2(hub, "multiplex", return_flags=True)
    assert flags["underflow"]


def test_storage_fidelity_examples():
    assert storage_fidelity(3, [(0, 0)] * 3, HUB) == 1.0
    n = 700
    expected = 0.5 * (1 + math.exp(-n * HUB.tau_e / HUB.tau_ce))
    assert storage_fidelity(1, [(n, 0)], HUB) == pytest.approx(expected, rel=1e-15)
    with pytest.raises(OutOfRangeError):
        storage_fidelity(2, [(0, 0)], HUB)


def test_composition_rules():
    F = storage_fidelity(1, [(0, 0)], HUB, [0.9], Composition.PRODUCT)
    assert F == pytest.approx(0.9)
    d = math.exp(-1000 * HUB.tau_e / HUB.tau_ce)
    deph = storage_fidelity(1, [(1000, 0)], HUB, [0.9], "dephasing")
    assert deph == pytest.approx(0.5 * (1 + 0.8 * d))


@pytest.mark.parametrize("P, n_cut, tau", [(1e-3, 1000, 20e-3), (0.3, 7, 1e-6), (0.9, 50, 2.8), (1.0, 10, 1e-3)])
def test_expected_decay_matches_direct_sum(P, n_cut, tau):
    x = math.exp(-300e-9 / tau)
    q = 1 - P
    weights = [P * q ** (n - 1) for n in range(1, n_cut + 1)]
    direct = math.fsum(w * x**n for n, w in zip(range(1, n_cut + 1), weights)) / math.fsum(weights)
    assert expected_decay(P, n_cut, 300e-9, tau) == pytest.approx(direct, rel=1e-12)


def test_expectation_form_at_unit_cutoff():
    det = storage_fidelity(2, [(1, 0), (0, 1)], HUB)
    exp = storage_fidelity_expected([[(0.2, 1, "e")], [(0.7, 1, "o")]], HUB)
    assert exp == pytest.approx(det, rel=1e-15)


def test_intrinsic_fidelities():
    hub = HUB.replace(F0_sc=0.99, F0_ss=0.97, s=3, M=3)
    assert intrinsic_fidelities(hub, "try_and_commit") == [0.99] * 3
    first, *moved = intrinsic_fidelities(hub, "multiplex")
    assert first == 0.99 and len(moved) == 2
    f_tel = (2 * 0.97 + 1) / 3
    assert moved[0] == pytest.approx(0.5 * (1 + 0.98 * (2 * f_tel - 1)))


def test_worst_case_exposures():
    hub = HubConfig(M=4, s=3, P_sc=1e-3, P_ss=0.3, n_e=100, n_o=500)
    assert worst_case_exposures(hub, "multiplex") == [(200, 400), (200, 400), (100, 0)]
    assert worst_case_exposures(hub, "try_and_commit") == [(100, 0), (100, 0), (0, 0)]
    assert worst_case_exposures(hub.replace(s=1), "multiplex") == [(0, 0)]


@settings(max_examples=100, deadline=None)
@given(
    s=st.integers(1, 4),
    n_e=st.integers(1, 10**5),
    n_o=st.integers(1, 10**5),
    d_e=st.integers(0, 10**4),
    d_o=st.integers(0, 10**4),
    strategy=st.sampled_from(list(Strategy)),
)
def test_worst_case_fidelity_monotone(s, n_e, n_o, d_e, d_o, strategy):
    hub = HubConfig(M=4, s=s, P_sc=1e-3, P_ss=0.3, n_e=n_e, n_o=n_o, F0_sc=0.99, F0_ss=0.98)
    more = hub.replace(n_e=n_e + d_e, n_o=n_o + d_o)
    assert worst_case_fidelity(more, strategy) <= worst_case_fidelity(hub, strategy) + 1e-15


def test_round_exposures_example():
    assert round_exposures([0, 5], [3]) == [(3, 5), (3, 0)]
    # overlapping transfers keep server 1 active over their union
    assert round_exposures([0, 2, 4], [5, 1]) == [(5, 2), (5, 0), (3, 0)]


def test_degenerate_geometrics():
    hub = HubConfig(M=2, s=2, P_sc=1.0, P_ss=1.0, n_e=10, n_o=10)
    res = run_sampler(SamplerConfig(hub, 1000, 1, 0.0))
    assert res.p_succ == 1.0 and res.rate == 0.5
    for s in (1, 2, 3, 5):
        base = HubConfig(M=1, s=s, P_sc=1.0, P_ss=1.0, n_e=10, n_o=10)
        res = run_sampler(SamplerConfig(base, 500, 1, 0.0, "try_and_commit"))
        assert res.rate == pytest.approx(1 / s, rel=1e-15)


def test_sampler_matches_closed_form():
    for strategy, hub in (("multiplex", HUB), ("try_and_commit", HUB.replace(n_o=1000))):
        res = run_sampler(SamplerConfig(hub, 100_000, 99, 0.0, strategy), threads=2)
        assert abs(res.rate - analytic_rate_s2(hub, strategy)) < 3 * res.stderr_rate


def test_sampler_gate():
    res = run_sampler(SamplerConfig(HUB, 1000, 1, 0.999))
    assert res.gated and res.rate == 0.0
    assert res.worst_case_fidelity == pytest.approx(worst_case_fidelity(HUB))


def test_sampler_config_errors():
    with pytest.raises(OutOfRangeError):
        SamplerConfig(HUB.replace(s=3), 100, 1, 0.0)
    for bad in (-1, 2**64, 1.5, True):
        with pytest.raises(OutOfRangeError):
            SamplerConfig(HUB, 100, bad, 0.0)


def test_determinism_across_threads():
    cfg = SamplerConfig(HUB.replace(M=3, s=3), 50_000, 2**63 + 5, 0.0, chunk_size=4096)
    results = [simulate(cfg, t) for t in (1, 1, 3, 8)]
    assert all(r == results[0] for r in results)


def test_sorting_selects_minimal_spread():
    cfg = SamplerConfig(HubConfig(M=5, s=3, P_sc=0.05, P_ss=0.3, n_e=50, n_o=50), 300, 11, 0.0)
    d = draw_rounds(cfg, 0)
    r = _chunk_rng(11, 0).geometric(0.05, size=(300, 5))
    assert np.array_equal(d["a"], np.sort(r, axis=1)[:, :3])
    assert np.all(np.diff(d["a"], axis=1) >= 0)
    for row, a in zip(r, d["a"]):
        # minimal among the sets that contain the first completion
        anchored = [c for c in itertools.combinations(row, 3) if min(c) == row.min()]
        assert a[-1] - a[0] == min(max(c) - min(c) for c in anchored)


def test_earliest_set_need_not_have_globally_minimal_spread():
    r = np.array([1, 50, 51, 52])
    first = np.sort(r)[:3]
    best = min(max(c) - min(c) for c in itertools.combinations(r, 3))
    assert first[-1] - first[0] == 50 and best == 2


def test_geometric_draws_have_mean_one_over_p():
    P = 0.02
    cfg = SamplerConfig(HubConfig(M=1, s=6, P_sc=P, P_ss=0.5, n_e=10, n_o=10), 20_000, 5, 0.0, "try_and_commit")
    n = np.concatenate([draw_rounds(cfg, c)["n"].ravel() for c in range(2)])
    sigma = math.sqrt((1 - P) / P**2 / n.size)
    assert abs(n.mean() - 1 / P) < 3 * sigma


@pytest.mark.parametrize("s", [2, 3])
def test_accepted_rounds_beat_worst_case(s):
    hub = HubConfig(M=4, s=s, P_sc=0.01, P_ss=0.05, n_e=40, n_o=60, tau_ce=1e-5, tau_co=1e-4, F0_sc=0.99, F0_ss=0.98)
    F_star = worst_case_fidelity(hub)
    cfg = SamplerConfig(hub, 5000, 3, F_star)
    d = draw_rounds(cfg, 0)
    intrinsic = intrinsic_fidelities(hub, "multiplex")
    worst = min(
        storage_fidelity(s, round_exposures(a, n), hub, intrinsic)
        for a, n, ok in zip(d["a"], d["n"], d["success"])
        if ok
    )
    assert worst >= F_star


def test_estimates_converge():
    hits = 0
    trials = 40
    for seed in range(trials):
        small = simulate(SamplerConfig(HUB, 4000, seed, 0.0))
        big = simulate(SamplerConfig(HUB, 16_000, 10_000 + seed, 0.0))
        hits += abs(small.rate - big.rate) < 3 * small.stderr_rate
    assert hits >= 0.95 * trials


def test_standard_hub_preset():
    p = load_preset("standard_hub")
    assert (p.eta_s, p.eta_c, p.tau_e, p.tau_co, p.tau_ce, p.n_e, p.F_min) == (0.1, 1e-3, 300e-9, 2.8, 20e-3, 1000, 0.9)
    hub = p.hub(2, 2, 0.5, None, 1000)
    assert hub.P_sc == pytest.approx(1e-3)
    assert hub.P_ss == 0.44 and hub.F0_ss == pytest.approx(0.999)


def test_single_click_preset_uses_bright_state():
    p = HubPreset(ss_model="single_click_eg")
    hub = p.hub(2, 2, 0.5, 0.05, 1000)
    assert hub.P_ss == pytest.approx(2 * 0.1 * 0.1 * 0.05)
    assert hub.F0_ss == pytest.approx(0.95)
    with pytest.raises(OutOfRangeError):
        p.hub(2, 2, 0.5, None, 1000)


def test_max_cutoff_is_tight():
    hub = load_preset().hub(1, 2, 0.3, None, 1000)
    cut = max_cutoff_for_fidelity(hub, 0.9)
    ok = lambda n: worst_case_fidelity(hub.replace(n_e=n, n_o=n), "try_and_commit") >= 0.9
    assert ok(cut) and not ok(cut + 1)
    assert max_cutoff_for_fidelity(hub, 0.9999999) == 0


GRID = HubGrid((0.1, 0.5), (100, 10_000))


def test_optimizer_is_deterministic_and_feasible():
    a = optimize_hub(2, 2, 0.9, GRID, 5000, 7)
    b = optimize_hub(2, 2, 0.9, GRID, 5000, 7, threads=4)
    assert a.best == b.best and a.params == b.params
    assert a.params["F_star"] >= 0.9
    assert a.n_feasible == sum(r["F_star"] >= 0.9 for r in a.evaluated)


def test_optimizer_infeasible():
    with pytest.raises(InfeasibleError) as err:
        optimize_hub(2, 2, 0.99999, GRID, 1000, 7)
    assert "F*" in str(err.value)


def test_baseline_below_multiplexed():
    for M, s in ((2, 2), (3, 3)):
        mux = optimize_hub(M, s, 0.9, GRID, 20_000, 3)
        base = baseline_rate(s, 0.9, GRID, 20_000, 3)
        assert base.best.rate <= mux.best.rate


def test_baseline_fixed_cutoff_option():
    base = baseline_rate(2, 0.9, HubGrid((0.5,), (100,)), 5000, 3, recompute_cutoff=False)
    assert base.params["cutoff"] == 100
