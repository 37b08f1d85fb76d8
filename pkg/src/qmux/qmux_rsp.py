"""M-client quantum-multiplexed single-click remote state preparation.

``M`` client devices send weak coherent pulses with independent phases to a
single server whose emission is split over the ``M`` channels.  A herald is a
click in one and only one channel.  Throughout, ``gamma = eta_c |alpha|^2`` is
the mean photon number reaching the station per client.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from ._optimize import maximize_with_floor
from .core import (
    Efficiency,
    GainReport,
    InfeasibleError,
    MeanPhotonNumber,
    OutOfRangeError,
    RatePoint,
    validate_count,
    validate_nonnegative,
    validate_positive,
    validate_probability,
)
from ._optimize import bisect_boundary

ALPHA2_MAX = 0.5
GAMMA_FLOOR = 1e-14


class DemandModel(str, enum.Enum):
    SINGLE_USER_ALL_DEVICES = "single_user_all_devices"
    CONTINUOUS_MULTI_USER = "continuous_multi_user"
    SINGLE_USE_MULTI_USER = "single_use_multi_user"


def _eta(x) -> float:
    return x.value if isinstance(x, Efficiency) else Efficiency(x).value


@dataclass(frozen=True)
class RspConfig:
    """One multiplexed RSP attempt; ``xi2=None`` selects the optimal bright state."""

    M: int
    eta_c: float
    eta_s: float
    alpha2: float
    xi2: float | None = None
    tau_e: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "M", validate_count(self.M, "M"))
        object.__setattr__(self, "eta_c", _eta(self.eta_c))
        object.__setattr__(self, "eta_s", _eta(self.eta_s))
        a = self.alpha2
        a = a.alpha_squared if isinstance(a, MeanPhotonNumber) else MeanPhotonNumber(a).alpha_squared
        object.__setattr__(self, "alpha2", a)
        if self.xi2 is not None:
            object.__setattr__(self, "xi2", validate_probability(self.xi2, "xi2"))
        validate_positive(self.tau_e, "tau_e")

    @property
    def gamma(self) -> float:
        return self.eta_c * self.alpha2

    def resolved_xi2(self) -> float:
        if self.xi2 is not None:
            return self.xi2
        return rsp_optimal_xi2(self.M, self.eta_c, self.eta_s, self.alpha2)


def _half_loss(gamma: float) -> float:
    # 1 - exp(-gamma/2) without cancellation
    return -math.expm1(-0.5 * gamma)


def optimal_xi2_gamma(M: int, eta_s: float, gamma: float) -> float:
    if gamma == 0.0:
        return 0.0
    E = _half_loss(gamma)
    return E / (2.0 * E + eta_s * ((1.0 + 0.5 * gamma) / (2.0 * M) - E))


def rsp_optimal_xi2(M: int, eta_c: float, eta_s: float, alpha2: float) -> float:
    """Bright-state probability maximizing the heralded fidelity.

    Small-``alpha`` behaviour is ``M eta_c |alpha|^2 / eta_s``.
    """
    M = validate_count(M, "M")
    eta_c, eta_s = _eta(eta_c), _eta(eta_s)
    alpha2 = validate_nonnegative(alpha2, "alpha2")
    return optimal_xi2_gamma(M, eta_s, eta_c * alpha2)


def fidelity_full_gamma(M: int, eta_s: float, gamma: float, xi2: float) -> float:
    """Fidelity to the target equatorial state at an arbitrary bright state."""
    if gamma == 0.0:
        # no client light: only the server photon can click, phase is lost
        return 0.5 if xi2 > 0.0 else 1.0
    E = _half_loss(gamma)
    num = math.sqrt(gamma * eta_s * (1.0 - xi2) / M) * math.sqrt(xi2)
    den = E * (1.0 - eta_s * xi2) + xi2 * eta_s / (2.0 * M) * (1.0 + 0.5 * gamma)
    return 0.5 * (1.0 + num / den)


def fidelity_gamma(M: int, eta_s: float, gamma: float) -> float:
    """Fidelity with the bright state already optimized (closed form)."""
    if gamma == 0.0:
        return 1.0
    E = _half_loss(gamma)
    inner = gamma * eta_s / (4.0 * M * E * (E + eta_s * ((2.0 + gamma) / (4.0 * M) - E)))
    return min(0.5 * (1.0 + math.sqrt(inner)), 1.0)


def rsp_fidelity(cfg: RspConfig) -> float:
    """Heralded fidelity; the optimized closed form when ``cfg.xi2`` is None."""
    if cfg.xi2 is None:
        return fidelity_gamma(cfg.M, cfg.eta_s, cfg.gamma)
    return min(fidelity_full_gamma(cfg.M, cfg.eta_s, cfg.gamma, cfg.xi2), 1.0)


def channel_probability_gamma(M: int, eta_s: float, gamma: float, xi2: float | None = None) -> float:
    """Herald probability for one particular client channel."""
    if gamma == 0.0:
        return 0.0
    E = _half_loss(gamma)
    lead = math.exp(-(M - 0.5) * gamma)
    if xi2 is None:
        num = 4.0 * lead * E * (4.0 * M * (1.0 - eta_s) * E + eta_s * (2.0 + gamma))
        den = 4.0 * M * (2.0 - eta_s) * E + eta_s * (2.0 + gamma)
        return num / den
    return 2.0 * lead * (E * (1.0 - eta_s * xi2) + xi2 * eta_s * (2.0 + gamma) / (4.0 * M))


def rate_gamma(M: int, eta_s: float, gamma: float, xi2: float | None = None) -> float:
    """Herald probability in any channel, per attempt."""
    if gamma == 0.0:
        return 0.0
    if xi2 is not None:
        return M * channel_probability_gamma(M, eta_s, gamma, xi2)
    E = _half_loss(gamma)
    lead = math.exp(-(M - 0.5) * gamma)
    num = 4.0 * lead * E * (4.0 * M * (1.0 - eta_s) * E + eta_s * (2.0 + gamma))
    den = 4.0 * (2.0 - eta_s) * E + eta_s * (2.0 + gamma) / M
    return num / den


def rsp_rate(cfg: RspConfig) -> float:
    """Success probability per ``tau_e`` for any of the ``M`` clients."""
    return rate_gamma(cfg.M, cfg.eta_s, cfg.gamma, cfg.xi2) / cfg.tau_e


def rsp_channel_probability(cfg: RspConfig) -> float:
    """Per-client herald probability; ``rsp_rate * tau_e == M * this``."""
    return channel_probability_gamma(cfg.M, cfg.eta_s, cfg.gamma, cfg.xi2)


def small_alpha_infidelity_slope(M: int, eta_s: float) -> float:
    """Limit of (1 - F) / gamma as gamma -> 0."""
    return (M * (1.0 - eta_s) + 0.25 * eta_s) / (4.0 * eta_s)


def _gamma_cap(eta_c: float, alpha2_max: float | None) -> float:
    if alpha2_max is None:
        return math.inf
    return eta_c * validate_positive(alpha2_max, "alpha2_max")


def rsp_rate_at_fidelity(
    M: int, eta_c: float, eta_s: float, F_min: float, alpha2_max: float | None = ALPHA2_MAX
) -> RatePoint:
    """Best rate over ``|alpha|^2 <= alpha2_max`` with the fidelity at least ``F_min``.

    Raises
    ------
    InfeasibleError
        If ``F_min`` is unreachable inside the amplitude budget.
    """
    M = validate_count(M, "M")
    eta_c = validate_positive(_eta(eta_c), "eta_c")
    eta_s = validate_positive(_eta(eta_s), "eta_s")
    F_min = validate_probability(F_min, "F_min")
    if not 0.5 < F_min < 1.0:
        raise OutOfRangeError("F_min", F_min, "1/2 < F_min < 1")
    cap = _gamma_cap(eta_c, alpha2_max)
    if not math.isfinite(cap):
        # past the rate maximum the rate only falls, so bound the search there
        cap = 50.0 / max(M - 0.5, 0.5)
    best = maximize_with_floor(
        lambda g: rate_gamma(M, eta_s, g),
        lambda g: fidelity_gamma(M, eta_s, g),
        F_min,
        GAMMA_FLOOR,
        cap,
        name="gamma",
    )
    g = best.x
    return RatePoint(
        rate_gamma(M, eta_s, g),
        fidelity_gamma(M, eta_s, g),
        {
            "M": M,
            "gamma": g,
            "alpha2": g / eta_c,
            "xi2": optimal_xi2_gamma(M, eta_s, g),
            "F_min": F_min,
            "at_fidelity_boundary": best.at_boundary,
        },
    )


def harmonic_number(M: int) -> float:
    return math.fsum(1.0 / m for m in range(1, validate_count(M, "M") + 1))


def high_fidelity_gain(M: int, eta_s: float, demand: DemandModel | str) -> float:
    """Leading-order gain as F -> 1 for each demand model."""
    M = validate_count(M, "M")
    eta_s = _eta(eta_s)
    demand = DemandModel(demand)
    if demand is DemandModel.SINGLE_USE_MULTI_USER:
        return M * (1.0 - 0.75 * eta_s) / (M * (1.0 - eta_s) + harmonic_number(M) * 0.25 * eta_s)
    return M * (1.0 - eta_s + 0.25 * eta_s) / (M * (1.0 - eta_s) + 0.25 * eta_s)


def gain_limit(eta_s: float) -> float:
    """Common M -> infinity gain 1 + eta_s / (4 (1 - eta_s))."""
    eta_s = _eta(eta_s)
    if eta_s == 1.0:
        return math.inf
    return 1.0 + eta_s / (4.0 * (1.0 - eta_s))


def rsp_gain(
    M: int,
    eta_c: float,
    eta_s: float,
    F_min: float,
    demand: DemandModel | str = DemandModel.SINGLE_USER_ALL_DEVICES,
    alpha2_max: float | None = ALPHA2_MAX,
) -> GainReport:
    """Multiplexing gain at a fidelity floor under one of three demand models.

    single_user_all_devices
        total multiplexed rate against the same protocol at ``M = 1``.
    continuous_multi_user
        per-user rate ``R(M) / M`` against time sharing ``R(1) / M``.
    single_use_multi_user
        every client leaves after one qubit, the amplitude is re-optimized
        for each remaining population ``m``; the multiplexed rate is
        ``[sum_m 1 / R(m)]^-1`` against ``R(1) / M``.

    The classical bound is 1 (a single server memory admits no
    semiclassical multiplexing).
    """
    M = validate_count(M, "M")
    demand = DemandModel(demand)
    base = rsp_rate_at_fidelity(1, eta_c, eta_s, F_min, alpha2_max)
    if demand is DemandModel.SINGLE_USER_ALL_DEVICES:
        mux = rsp_rate_at_fidelity(M, eta_c, eta_s, F_min, alpha2_max)
        return GainReport.from_rates(
            mux.rate, base.rate, 1.0, demand=demand.value, gamma=mux.params["gamma"]
        )
    if demand is DemandModel.CONTINUOUS_MULTI_USER:
        mux = rsp_rate_at_fidelity(M, eta_c, eta_s, F_min, alpha2_max)
        return GainReport.from_rates(
            mux.rate / M, base.rate / M, 1.0, demand=demand.value, gamma=mux.params["gamma"]
        )
    stages = [base] + [
        rsp_rate_at_fidelity(m, eta_c, eta_s, F_min, alpha2_max) for m in range(2, M + 1)
    ]
    mux_rate = 1.0 / math.fsum(1.0 / st.rate for st in stages)
    return GainReport.from_rates(
        mux_rate,
        base.rate / M,
        1.0,
        demand=demand.value,
        gammas=[st.params["gamma"] for st in stages],
    )


def _solve_gamma_for_fidelity(m: int, eta_s: float, target: float, cap: float) -> float | None:
    """Largest gamma in (0, cap] with F(m, gamma) >= target, or None."""
    if fidelity_gamma(m, eta_s, cap) >= target:
        return cap
    if fidelity_gamma(m, eta_s, GAMMA_FLOOR) < target:
        return None
    return bisect_boundary(
        lambda g: fidelity_gamma(m, eta_s, g) >= target, GAMMA_FLOOR, cap, tol=1e-13
    )


def rsp_rate_fidelity_sweep(
    M: int,
    eta_c: float,
    eta_s: float,
    gamma_grid,
    demand: DemandModel | str = DemandModel.SINGLE_USER_ALL_DEVICES,
    alpha2_max: float | None = ALPHA2_MAX,
) -> list[RatePoint]:
    """Rate-fidelity curve parameterized by ``gamma = eta_c |alpha|^2``.

    The bright state is optimized at every point.  ``params['baseline_rate']``
    carries the matching time-shared or un-multiplexed rate at the same
    ``gamma``.  For single-use demand each remaining population ``m < M``
    re-solves ``gamma_m`` so its fidelity equals the fidelity at the grid
    point; when some stage cannot reach it within the budget the point is
    returned with rate 0 and ``params['large_drop'] = True``.
    """
    M = validate_count(M, "M")
    eta_c = validate_positive(_eta(eta_c), "eta_c")
    eta_s = validate_positive(_eta(eta_s), "eta_s")
    demand = DemandModel(demand)
    grid = [float(g) for g in gamma_grid]
    if not grid:
        raise OutOfRangeError("gamma_grid", grid, "a non-empty grid")
    cap = _gamma_cap(eta_c, alpha2_max)
    for g in grid:
        validate_positive(g, "gamma")
        if g > cap:
            raise OutOfRangeError("gamma", g, f"gamma <= eta_c * alpha2_max = {cap}")
    out = []
    for g in grid:
        F = fidelity_gamma(M, eta_s, g)
        params = {"M": M, "gamma": g, "alpha2": g / eta_c, "xi2": optimal_xi2_gamma(M, eta_s, g)}
        if demand is DemandModel.SINGLE_USER_ALL_DEVICES:
            rate = rate_gamma(M, eta_s, g)
            params["baseline_rate"] = rate_gamma(1, eta_s, g)
            params["baseline_fidelity"] = fidelity_gamma(1, eta_s, g)
        elif demand is DemandModel.CONTINUOUS_MULTI_USER:
            rate = rate_gamma(M, eta_s, g) / M
            params["baseline_rate"] = rate_gamma(1, eta_s, g) / M
            params["baseline_fidelity"] = fidelity_gamma(1, eta_s, g)
        else:
            gammas = [g]
            stage_cap = cap if math.isfinite(cap) else 50.0
            for m in range(M - 1, 0, -1):
                gm = _solve_gamma_for_fidelity(m, eta_s, F, stage_cap)
                if gm is None:
                    break
                gammas.append(gm)
            params["baseline_rate"] = rate_gamma(1, eta_s, g) / M
            params["baseline_fidelity"] = fidelity_gamma(1, eta_s, g)
            if len(gammas) < M:
                params["large_drop"] = True
                out.append(RatePoint(0.0, F, params))
                continue
            # stage fidelities sit at or above F; report the weakest
            stage_F = [fidelity_gamma(M - i, eta_s, gm) for i, gm in enumerate(gammas)]
            inv = math.fsum(1.0 / rate_gamma(M - i, eta_s, gm) for i, gm in enumerate(gammas))
            rate = 1.0 / inv
            params["stage_gammas"] = gammas
            params["large_drop"] = False
            F = min(stage_F)
        out.append(RatePoint(rate, F, params))
    return out


def require_feasible(point: RatePoint) -> RatePoint:
    """Raise when a single-use sweep point failed at some stage."""
    if point.params.get("large_drop"):
        raise InfeasibleError(
            f"single-use demand cannot hold fidelity {point.fidelity:.12g} for every stage",
            constraint="per-stage fidelity within the amplitude budget",
        )
    return point
