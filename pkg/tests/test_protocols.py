import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmux.core import MissingParameterError, OutOfRangeError
from qmux.protocols import (
    ProtocolKind,
    single_click_bell_fidelity,
    single_click_probability,
    single_click_probability_high_loss,
    table_stats,
    teleport_fidelity,
)

unit = st.floats(0.0, 1.0)


def test_single_click_rsp_row():
    st_ = table_stats("single_click_rsp", eta_c=1e-3, eta_s=0.1, alpha2=0.5)
    assert st_.p_success == pytest.approx(1e-3, rel=1e-12)
    assert 1 - st_.fidelity == pytest.approx(1.15625e-3, rel=1e-12)
    assert not st_.clamped and not st_.outside_validity


def test_single_click_eg_dark():
    st_ = table_stats(ProtocolKind.SINGLE_CLICK_EG, eta_A=0.3, eta_B=0.4, xi2=0.0)
    assert (st_.p_success, st_.fidelity) == (0.0, 1.0)


def test_measurement_only_row():
    st_ = table_stats("measurement_only_rsp", eta_c=0.5, eta_s=0.5)
    assert (st_.p_success, st_.fidelity) == (0.25, 1.0)


def test_double_click_rows():
    dc = table_stats("double_click_rsp", eta_c=1e-2, eta_s=0.5, alpha2=0.2)
    dsc = table_stats("double_single_click_rsp", eta_c=1e-2, eta_s=0.5, alpha2=0.2)
    assert dc.p_success == pytest.approx(0.5 * 1e-2 * 0.5 * 0.2)
    assert dsc.p_success == pytest.approx(4 / 3 * 1e-2 * 0.2)
    # the double single-click variant pays twice the infidelity
    assert 1 - dsc.fidelity == pytest.approx(2 * (1 - dc.fidelity))


def test_missing_parameter_names_field():
    with pytest.raises(MissingParameterError) as err:
        table_stats("single_click_rsp", eta_c=0.1, alpha2=0.1)
    assert "eta_s" in str(err.value)


def test_validity_and_clamping_flags():
    far = table_stats("single_click_eg", eta_A=0.5, eta_B=0.5, xi2=0.5)
    assert far.outside_validity
    big = table_stats("single_click_rsp", eta_c=0.9, eta_s=0.01, alpha2=3.0)
    assert big.clamped and big.outside_validity
    assert 0.0 <= big.p_success <= 1.0 and 0.0 <= big.fidelity <= 1.0


def test_zero_server_efficiency_is_finite():
    st_ = table_stats("single_click_rsp", eta_c=0.0, eta_s=0.0, alpha2=0.1)
    assert st_.fidelity == 1.0


@given(kind=st.sampled_from(list(ProtocolKind)), a=unit, b=unit, c=unit, d=unit, alpha2=st.floats(0, 10), xi2=unit)
def test_outputs_stay_in_unit_interval(kind, a, b, c, d, alpha2, xi2):
    out = table_stats(kind, eta_c=a, eta_s=b, eta_A=c, eta_B=d, alpha2=alpha2, xi2=xi2)
    assert 0.0 <= out.p_success <= 1.0
    assert 0.0 <= out.fidelity <= 1.0


@pytest.mark.parametrize("bad", [math.nan, math.inf, -0.1, 1.5])
def test_rejects_invalid_efficiency(bad):
    with pytest.raises(OutOfRangeError):
        table_stats("measurement_only_rsp", eta_c=bad, eta_s=0.5)


def test_bell_fidelity_examples():
    assert single_click_bell_fidelity(0.0) == 1.0
    assert single_click_bell_fidelity(0.1) == pytest.approx(0.9)
    assert single_click_bell_fidelity(0.0, V=0.0) == 0.5


def test_teleport_examples():
    assert teleport_fidelity(1.0) == 1.0
    assert teleport_fidelity(0.25) == pytest.approx(0.5)
    xi2 = 0.03
    assert teleport_fidelity(1 - xi2) == pytest.approx(1 - 2 * xi2 / 3)


@given(a=unit, b=unit)
def test_teleport_is_order_preserving(a, b):
    lo, hi = sorted((a, b))
    assert teleport_fidelity(lo) <= teleport_fidelity(hi)


def test_single_click_probability_examples():
    assert single_click_probability(0.5, 0.5) == pytest.approx(0.125)
    assert single_click_probability(0.3, 0.0) == 0.0
    exact = single_click_probability(0.01, 0.1)
    approx = single_click_probability_high_loss(0.01, 0.1)
    assert exact == pytest.approx(2 * 0.01 * 0.99 * 0.9 * 0.1)
    assert abs(exact - approx) / approx < 0.11


@given(eta=unit, xi2=unit)
def test_single_click_probability_symmetries(eta, xi2):
    p = single_click_probability(eta, xi2)
    assert single_click_probability(1 - eta, xi2) == pytest.approx(p, abs=1e-15)
    assert single_click_probability(eta, 1 - xi2) == pytest.approx(p, abs=1e-15)
