"""M-to-1 quantum-multiplexed heralded entanglement generation.

Node A holds ``M`` memories and node B a single one.  B's emission is split
over the ``M`` temporal modes of A, so one attempt can herald a pair with any
of A's memories.  The herald is a single click among the ``2M`` detectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from ._optimize import maximize_with_floor
from .core import (
    BrightState,
    Efficiency,
    GainReport,
    OutOfRangeError,
    QmuxError,
    RatePoint,
    validate_count,
    validate_positive,
    validate_probability,
)

SATURATION_THRESHOLD = 0.99
XI_A2_BRACKET = (1e-12, 1.0 - 1e-9)


class DegenerateError(QmuxError, ZeroDivisionError):
    """A formula reduced to 0/0 (no light from either node)."""


def _eta(x) -> float:
    return x.value if isinstance(x, Efficiency) else Efficiency(x).value


def _xi(x) -> float:
    return x.xi_squared if isinstance(x, BrightState) else BrightState(x).xi_squared


@dataclass(frozen=True)
class EgConfig:
    """Parameters of one M-to-1 attempt.

    ``xi_B2=None`` selects the fidelity-optimal bright state at B for the
    given ``xi_A2``.
    """

    M: int
    eta_A: float
    eta_B: float
    xi_A2: float
    xi_B2: float | None = None
    tau_e: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "M", validate_count(self.M, "M"))
        object.__setattr__(self, "eta_A", _eta(self.eta_A))
        object.__setattr__(self, "eta_B", _eta(self.eta_B))
        object.__setattr__(self, "xi_A2", _xi(self.xi_A2))
        if self.xi_B2 is not None:
            object.__setattr__(self, "xi_B2", _xi(self.xi_B2))
        validate_positive(self.tau_e, "tau_e")

    def resolved_xi_B2(self) -> float:
        if self.xi_B2 is not None:
            return self.xi_B2
        return optimal_xi_B2(self.M, self.eta_A, self.eta_B, self.xi_A2)


def optimal_xi_B2(M: int, eta_A: float, eta_B: float, xi_A2: float) -> float:
    """Bright-state probability at B that maximizes the heralded fidelity.

    The result never exceeds one because the denominator is at least
    ``eta_A * xi_A2``.
    """
    M = validate_count(M, "M")
    eta_A, eta_B, xi_A2 = _eta(eta_A), _eta(eta_B), _xi(xi_A2)
    num = eta_A * xi_A2
    den = eta_B / M + (eta_A - eta_B / M) * xi_A2
    if den == 0.0:
        raise DegenerateError("optimal xi_B^2 is 0/0 (eta_B = 0 and eta_A xi_A^2 = 0)")
    return min(num / den, 1.0)


def exact_optimal_xi_B2(M: int, eta_A: float, eta_B: float, xi_A2: float) -> float:
    """Exact maximizer of :func:`eg_fidelity` over ``xi_B^2``.

    With ``xi_B = sin(theta)`` the fidelity is a Rayleigh quotient
    ``(w . z)^2 / z^T D z`` with ``w = (sqrt(eta_B (1 - xi_A^2)), sqrt(M eta_A xi_A^2))``
    and ``D = diag(click weight at xi_B^2 = 1, click weight at xi_B^2 = 0)``,
    maximized at ``z ~ D^-1 w``.  It agrees with :func:`optimal_xi_B2` in the
    lossless case and to leading order in ``xi_A^2``.
    """
    M = validate_count(M, "M")
    eta_A, eta_B, a = _eta(eta_A), _eta(eta_B), _xi(xi_A2)
    u2 = eta_B * (1.0 - a)
    v2 = M * eta_A * a
    d0 = M * eta_A * a
    d1 = eta_B * (1.0 - eta_A * a) + d0 * (1.0 - eta_B)
    if d0 == 0.0 or d1 == 0.0:
        return optimal_xi_B2(M, eta_A, eta_B, a)
    num = u2 * d0 * d0
    return num / (num + v2 * d1 * d1)


def eg_fidelity(cfg: EgConfig) -> float:
    """Fidelity of the heralded state to the target Bell state."""
    M, ea, eb, xa = cfg.M, cfg.eta_A, cfg.eta_B, cfg.xi_A2
    xb = cfg.resolved_xi_B2()
    amp = math.sqrt(xb * eb * (1.0 - xa)) + math.sqrt(xa * M * ea * (1.0 - xb))
    den = xb * eb * (1.0 - ea * xa) + xa * M * ea * (1.0 - eb * xb)
    if den == 0.0:
        raise DegenerateError("fidelity undefined: no photon can reach the station")
    return min(0.5 * amp * amp / den, 1.0)


def eg_click_probability(cfg: EgConfig) -> float:
    """Probability that exactly one photon reaches the detectors."""
    M, ea, eb, xa = cfg.M, cfg.eta_A, cfg.eta_B, cfg.xi_A2
    xb = cfg.resolved_xi_B2()
    qa = 1.0 - ea * xa
    return M * ea * xa * qa ** (M - 1) * (1.0 - eb * xb) + eb * xb * qa**M


def eg_rate_point(cfg: EgConfig) -> RatePoint:
    """Rate (click probability per ``tau_e``) and fidelity of one configuration."""
    xb = cfg.resolved_xi_B2()
    rate = eg_click_probability(cfg) / cfg.tau_e
    fid = eg_fidelity(cfg) if rate > 0.0 else 1.0
    return RatePoint(
        rate,
        fid,
        {
            "M": cfg.M,
            "eta_A": cfg.eta_A,
            "eta_B": cfg.eta_B,
            "xi_A2": cfg.xi_A2,
            "xi_B2": xb,
            "xi_B2_saturated": xb > SATURATION_THRESHOLD,
        },
    )


def eg_curve(M: int, eta_A: float, eta_B: float, xi_A2_grid) -> list[RatePoint]:
    """Rate-fidelity curve parameterized by ``xi_A^2`` with B optimized."""
    return [eg_rate_point(EgConfig(M, eta_A, eta_B, x)) for x in xi_A2_grid]


def eg_rate_small_eta(M: int, eta_A: float, eta_B: float, F: float) -> float:
    """Leading-order rate at fidelity ``F``: 4(1-F) / [(1-eta_B)/eta_B + (1-eta_A)/(M eta_A)]."""
    M = validate_count(M, "M")
    eta_A = validate_positive(_eta(eta_A), "eta_A")
    eta_B = validate_positive(_eta(eta_B), "eta_B")
    F = validate_probability(F, "F")
    return 4.0 * (1.0 - F) / ((1.0 - eta_B) / eta_B + (1.0 - eta_A) / (M * eta_A))


def eg_rate_at_fidelity(M: int, eta_A: float, eta_B: float, F_min: float) -> RatePoint:
    """Largest rate over ``xi_A^2`` whose (B-optimized) fidelity is at least ``F_min``.

    Raises
    ------
    InfeasibleError
        If no bright state reaches ``F_min``.
    """
    M = validate_count(M, "M")
    eta_A = validate_positive(_eta(eta_A), "eta_A")
    eta_B = validate_positive(_eta(eta_B), "eta_B")
    F_min = validate_probability(F_min, "F_min")
    if not 0.5 < F_min < 1.0:
        raise OutOfRangeError("F_min", F_min, "1/2 < F_min < 1")

    def cfg(x):
        return EgConfig(M, eta_A, eta_B, x)

    best = maximize_with_floor(
        lambda x: eg_click_probability(cfg(x)),
        lambda x: eg_fidelity(cfg(x)),
        F_min,
        *XI_A2_BRACKET,
        name="xi_A2",
    )
    point = eg_rate_point(cfg(best.x))
    params = dict(point.params, F_min=F_min, at_fidelity_boundary=best.at_boundary)
    return RatePoint(point.rate, point.fidelity, params)


def eg_gain(M: int, eta_A: float, eta_B: float, F_min: float) -> GainReport:
    """Multiplexing gain against the M = 1 protocol at the same fidelity floor.

    The classical bound is 1: with a single memory at B no semiclassical
    scheme improves the rate.
    """
    mux = eg_rate_at_fidelity(M, eta_A, eta_B, F_min)
    base = eg_rate_at_fidelity(1, eta_A, eta_B, F_min)
    return GainReport.from_rates(
        mux.rate,
        base.rate,
        1.0,
        xi_A2=mux.params["xi_A2"],
        xi_B2=mux.params["xi_B2"],
        xi_B2_saturated=mux.params["xi_B2_saturated"],
    )


def symmetric_gain_limit(M: int) -> float:
    """High-loss symmetric gain 2M / (M + 1)."""
    M = validate_count(M, "M")
    return 2.0 * M / (M + 1)


def asymmetric_gain_limit(eta_A: float, eta_B: float) -> float:
    """Large-M, high-loss gain 1 + eta_B / eta_A."""
    return 1.0 + _eta(eta_B) / validate_positive(_eta(eta_A), "eta_A")
