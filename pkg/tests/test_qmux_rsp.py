import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from qmux.core import InfeasibleError, OutOfRangeError
from qmux.qmux_rsp import (
    DemandModel,
    RspConfig,
    channel_probability_gamma,
    fidelity_full_gamma,
    fidelity_gamma,
    gain_limit,
    harmonic_number,
    high_fidelity_gain,
    optimal_xi2_gamma,
    rate_gamma,
    require_feasible,
    rsp_channel_probability,
    rsp_fidelity,
    rsp_gain,
    rsp_optimal_xi2,
    rsp_rate,
    rsp_rate_at_fidelity,
    rsp_rate_fidelity_sweep,
    small_alpha_infidelity_slope,
)

from _oracles import maximize_scalar, rsp_full_fidelity, rsp_full_fidelity_slope


def test_optimal_xi2_examples():
    assert rsp_optimal_xi2(3, 1e-3, 0.1, 0.0) == 0.0
    for M, ec, es in ((1, 1e-3, 0.1), (5, 1e-2, 0.9)):
        a = 1e-6
        assert rsp_optimal_xi2(M, ec, es, a) / (M * ec * a / es) == pytest.approx(1, rel=1e-5)


def test_optimal_xi2_stationary_example():
    g = 1e-3 * 0.5
    x = optimal_xi2_gamma(1, 0.1, g)
    assert abs(rsp_full_fidelity_slope(1, 0.1, g, x)) < 1e-6
    f = lambda t: fidelity_full_gamma(1, 0.1, g, t)
    assert f(x) >= max(f(x * (1 - 1e-5)), f(x * (1 + 1e-5)))


@settings(max_examples=300, deadline=None)
@given(M=st.integers(1, 100), es=st.floats(0.01, 0.99), g=st.floats(1e-6, 0.5))
@example(M=1, es=0.5, g=1e-6)
def test_optimal_xi2_is_stationary(M, es, g):
    x = optimal_xi2_gamma(M, es, g)
    assert abs(rsp_full_fidelity_slope(M, es, g, x)) < 1e-6


@pytest.mark.parametrize("M, es, g", [(1, 0.1, 5e-4), (5, 0.9, 1e-2), (30, 0.5, 0.2), (2, 0.05, 1.5)])
def test_closed_form_fidelity_is_numerical_maximum(M, es, g):
    x, fmax = maximize_scalar(lambda t: rsp_full_fidelity(M, es, g, t), 1e-12, 1 - 1e-12)
    assert fidelity_gamma(M, es, g) == pytest.approx(fmax, abs=1e-12)
    assert optimal_xi2_gamma(M, es, g) == pytest.approx(x, rel=1e-4)


def test_fidelity_examples():
    assert rsp_fidelity(RspConfig(3, 1e-3, 0.1, 0.0)) == 1.0
    # the gap to the first-order form is second order in gamma
    slope = small_alpha_infidelity_slope(5, 0.1)
    gaps = [(rsp_fidelity(RspConfig(5, 1e-3, 0.1, g / 1e-3)) - (1 - slope * g)) / g**2 for g in (1e-3, 1e-4, 1e-5)]
    assert gaps[0] > 0
    assert gaps[1] == pytest.approx(gaps[2], rel=0.02)
    assert gaps[0] == pytest.approx(gaps[2], rel=0.1)


@pytest.mark.parametrize("M", [1, 5])
@pytest.mark.parametrize("es", [0.1, 0.9])
def test_small_alpha_laws(M, es):
    g = 1e-5
    slope = (1 - fidelity_gamma(M, es, g)) / g
    assert slope == pytest.approx((M * (1 - es) + es / 4) / (4 * es), rel=1e-2)
    assert rate_gamma(M, es, g) / (2 * M * g) == pytest.approx(1, rel=1e-2)


@settings(max_examples=200, deadline=None)
@given(M=st.integers(1, 200), es=st.floats(1e-3, 1.0), g=st.floats(1e-9, 5.0))
def test_fidelity_range(M, es, g):
    assert 0.5 < fidelity_gamma(M, es, g) <= 1.0


@settings(max_examples=200, deadline=None)
@given(M=st.integers(1, 200), es=st.floats(1e-3, 1.0), g=st.floats(1e-9, 5.0), xi=st.one_of(st.none(), st.floats(0.0, 1.0)))
def test_total_is_sum_of_channels(M, es, g, xi):
    total = rate_gamma(M, es, g, xi)
    assert total == pytest.approx(M * channel_probability_gamma(M, es, g, xi), rel=1e-12)


def test_rate_config_wrappers():
    cfg = RspConfig(4, 1e-3, 0.2, 0.3, tau_e=2.0)
    assert rsp_rate(cfg) * 2.0 == pytest.approx(4 * rsp_channel_probability(cfg), rel=1e-12)
    assert rsp_rate(RspConfig(4, 1e-3, 0.2, 0.0)) == 0.0


def test_fidelity_improves_with_M_at_fixed_total_light():
    # the multi-photon error shrinks as the same total light is spread over more clients
    total = 1e-3
    F = [fidelity_gamma(M, 0.5, total / M) for M in range(1, 20)]
    assert np.all(np.diff(F) > 0)


def test_curve_has_rate_maximum_for_M_above_one():
    grid = np.geomspace(1e-4, 5.0, 200)
    rates = np.array([p.rate for p in rsp_rate_fidelity_sweep(5, 1.0, 0.1, grid, alpha2_max=None)])
    k = int(np.argmax(rates))
    assert 0 < k < len(grid) - 1
    small = np.array([p.rate for p in rsp_rate_fidelity_sweep(1, 1.0, 0.1, np.geomspace(1e-6, 1e-2, 30))])
    assert np.all(np.diff(small) > 0)


def test_curve_endpoint():
    pt = rsp_rate_fidelity_sweep(3, 1e-3, 0.1, [1e-12])[0]
    assert pt.rate < 1e-10 and pt.fidelity > 1 - 1e-9


def test_sweep_respects_amplitude_cap():
    with pytest.raises(OutOfRangeError):
        rsp_rate_fidelity_sweep(2, 1e-3, 0.1, [1e-3], alpha2_max=0.5)


def test_single_use_sweep_flags_large_drop():
    pts = rsp_rate_fidelity_sweep(4, 1e-3, 0.5, [1e-4, 5e-4], "single_use_multi_user")
    assert all("large_drop" in p.params for p in pts)
    dropped = [p for p in pts if p.params["large_drop"]]
    for p in dropped:
        with pytest.raises(InfeasibleError):
            require_feasible(p)
    kept = [p for p in pts if not p.params["large_drop"]]
    assert kept and all(len(p.params["stage_gammas"]) == 4 for p in kept)


def test_rate_at_fidelity_meets_floor():
    pt = rsp_rate_at_fidelity(3, 1e-3, 0.1, 0.999)
    assert pt.fidelity >= 0.999 - 1e-12
    assert pt.params["alpha2"] <= 0.5


def test_rate_at_fidelity_cap_and_range():
    # a loose floor leaves the amplitude cap as the binding constraint
    pt = rsp_rate_at_fidelity(1, 1e-3, 0.9, 0.6)
    assert pt.params["alpha2"] == pytest.approx(0.5)
    with pytest.raises(OutOfRangeError):
        rsp_rate_at_fidelity(1, 1e-3, 0.9, 1.0)


@pytest.mark.parametrize("demand", list(DemandModel))
def test_gain_is_one_at_M_one(demand):
    assert rsp_gain(1, 1e-3, 0.5, 0.999, demand).gain == pytest.approx(1.0, rel=1e-9)


def test_gain_limits_and_ordering():
    assert gain_limit(0.9) == pytest.approx(3.25)
    assert gain_limit(1.0) == math.inf
    F = 1 - 1e-6
    for demand in DemandModel:
        assert rsp_gain(1000, 1e-3, 0.9, F, demand).gain == pytest.approx(3.25, rel=0.02)
    single_use = rsp_gain(5, 1e-3, 0.5, 0.999, "single_use_multi_user").gain
    continuous = rsp_gain(5, 1e-3, 0.5, 0.999, "continuous_multi_user").gain
    assert single_use < continuous


def test_high_fidelity_gain_matches_optimizer():
    for demand in DemandModel:
        numeric = rsp_gain(6, 1e-3, 0.4, 1 - 1e-7, demand).gain
        assert numeric == pytest.approx(high_fidelity_gain(6, 0.4, demand), rel=1e-3)


@pytest.mark.parametrize("M", [2, 7, 40])
def test_lossless_server_limits(M):
    es = 1 - 1e-9
    assert high_fidelity_gain(M, es, "single_user_all_devices") == pytest.approx(M, rel=1e-6)
    assert high_fidelity_gain(M, es, "single_use_multi_user") == pytest.approx(M / harmonic_number(M), rel=1e-6)


def test_harmonic_number():
    assert harmonic_number(1) == 1.0
    assert harmonic_number(4) == pytest.approx(25 / 12)
