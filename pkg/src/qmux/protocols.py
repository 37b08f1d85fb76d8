"""Per-attempt success probabilities and fidelities of the elementary protocols.

The closed forms are leading order in the weak-coherent-pulse amplitude and
the bright-state probability, and assume high loss.  Outside the declared
validity budget they are still evaluated, but the result is flagged.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .core import (
    BrightState,
    Efficiency,
    MeanPhotonNumber,
    MissingParameterError,
    validate_probability,
)

ALPHA2_VALID_MAX = 0.5
XI2_VALID_MAX = 0.2


class ProtocolKind(str, enum.Enum):
    SINGLE_CLICK_RSP = "single_click_rsp"
    SINGLE_CLICK_EG = "single_click_eg"
    DOUBLE_CLICK_RSP = "double_click_rsp"
    DOUBLE_SINGLE_CLICK_RSP = "double_single_click_rsp"
    MEASUREMENT_ONLY_RSP = "measurement_only_rsp"


_REQUIRED = {
    ProtocolKind.SINGLE_CLICK_RSP: ("eta_c", "eta_s", "alpha2"),
    ProtocolKind.SINGLE_CLICK_EG: ("eta_A", "eta_B", "xi2"),
    ProtocolKind.DOUBLE_CLICK_RSP: ("eta_c", "eta_s", "alpha2"),
    ProtocolKind.DOUBLE_SINGLE_CLICK_RSP: ("eta_c", "eta_s", "alpha2"),
    ProtocolKind.MEASUREMENT_ONLY_RSP: ("eta_c", "eta_s"),
}


@dataclass(frozen=True)
class AttemptStats:
    """Success probability and fidelity of one attempt.

    ``clamped`` is set when a linearized formula left [0, 1] and was pulled
    back; ``outside_validity`` when the inputs exceed the leading-order
    budget (``|alpha|^2 <= 0.5``, ``xi^2 <= 0.2``).
    """

    p_success: float
    fidelity: float
    clamped: bool = False
    outside_validity: bool = False


def _value(x):
    if x is None:
        return None
    return float(x)


def _over(num: float, den: float) -> float:
    # eta_s = 0 makes the RSP infidelity coefficient diverge
    if den == 0.0:
        return math.inf if num > 0 else 0.0
    return num / den


def _clamp(x: float) -> tuple[float, bool]:
    if x < 0.0:
        return 0.0, True
    if x > 1.0:
        return 1.0, True
    return x, False


def table_stats(
    kind: ProtocolKind | str,
    eta_c: Efficiency | float | None = None,
    eta_s: Efficiency | float | None = None,
    eta_A: Efficiency | float | None = None,
    eta_B: Efficiency | float | None = None,
    alpha2: MeanPhotonNumber | float | None = None,
    xi2: BrightState | float | None = None,
) -> AttemptStats:
    """Optimized (P, F) pair of one protocol in the weak-pulse, high-loss limit.

    Examples
    --------
    >>> st = table_stats("single_click_rsp", eta_c=1e-3, eta_s=0.1, alpha2=0.5)
    >>> round(st.p_success, 12), round(1 - st.fidelity, 12)
    (0.001, 0.00115625)
    """
    kind = ProtocolKind(kind)
    supplied = {
        "eta_c": eta_c,
        "eta_s": eta_s,
        "eta_A": eta_A,
        "eta_B": eta_B,
        "alpha2": alpha2,
        "xi2": xi2,
    }
    for name in _REQUIRED[kind]:
        if supplied[name] is None:
            raise MissingParameterError(name, kind.value)
    v = {}
    for name in _REQUIRED[kind]:
        x = supplied[name]
        if name == "alpha2":
            v[name] = MeanPhotonNumber(_value(x)).alpha_squared
        elif name == "xi2":
            v[name] = BrightState(_value(x)).xi_squared
        else:
            v[name] = Efficiency(_value(x)).value

    outside = False
    if kind is ProtocolKind.SINGLE_CLICK_RSP:
        a, ec, es = v["alpha2"], v["eta_c"], v["eta_s"]
        p = 2.0 * ec * a
        f = 1.0 - _over(ec * (4.0 - 3.0 * es), 16.0 * es) * a
        outside = a > ALPHA2_VALID_MAX
    elif kind is ProtocolKind.SINGLE_CLICK_EG:
        x = v["xi2"]
        p = 2.0 * v["eta_A"] * v["eta_B"] * x
        f = 1.0 - x
        outside = x > XI2_VALID_MAX
    elif kind is ProtocolKind.DOUBLE_CLICK_RSP:
        a, ec, es = v["alpha2"], v["eta_c"], v["eta_s"]
        p = 0.5 * ec * es * a
        f = 1.0 - _over(ec * (4.0 - 3.0 * es), 16.0 * es) * a
        outside = a > ALPHA2_VALID_MAX
    elif kind is ProtocolKind.DOUBLE_SINGLE_CLICK_RSP:
        a, ec, es = v["alpha2"], v["eta_c"], v["eta_s"]
        p = 4.0 / 3.0 * ec * a
        f = 1.0 - _over(ec * (4.0 - 3.0 * es), 8.0 * es) * a
        outside = a > ALPHA2_VALID_MAX
    else:
        # fidelity is approximately one; taken as exactly one
        p = v["eta_s"] * v["eta_c"]
        f = 1.0
    if math.isnan(f):
        # 0 * inf: no client light at eta_s = 0
        f = 1.0
    p, cp = _clamp(p)
    f, cf = _clamp(f)
    return AttemptStats(p, f, cp or cf, outside)


def single_click_bell_fidelity(xi2: float, V: float = 1.0, p_ph: float = 0.0) -> float:
    """Bell-state fidelity of single-click EG with visibility ``V`` and dephasing ``p_ph``."""
    xi2 = BrightState(xi2).xi_squared
    V = validate_probability(V, "V")
    p_ph = validate_probability(p_ph, "p_ph")
    return 0.5 * (1.0 - xi2) * (1.0 + math.sqrt(V)) * (1.0 - p_ph)


def teleport_fidelity(F_SC: float) -> float:
    """Average teleportation fidelity (2F + 1) / 3 of a resource with Bell fidelity F."""
    F_SC = validate_probability(F_SC, "F_SC")
    return (2.0 * F_SC + 1.0) / 3.0


def single_click_probability(eta: float, xi2: float) -> float:
    """Exact single-click EG success probability 2 eta (1-eta) (1-xi^2) xi^2."""
    eta = Efficiency(eta).value
    xi2 = BrightState(xi2).xi_squared
    return 2.0 * eta * (1.0 - eta) * (1.0 - xi2) * xi2


def single_click_probability_high_loss(eta: float, xi2: float) -> float:
    """High-loss approximation 2 eta xi^2 of :func:`single_click_probability`."""
    eta = Efficiency(eta).value
    xi2 = BrightState(xi2).xi_squared
    return 2.0 * eta * xi2
