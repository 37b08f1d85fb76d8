"""Window problem and semiclassical multiplexing limits.

The window problem asks for the expected number of i.i.d. Bernoulli(p)
attempts until some run of ``w`` consecutive attempts holds at least ``s``
successes.  The exact solver treats this as an absorbing Markov chain whose
state is the set of success ages within the last ``w - 1`` attempts, stored
as a bitmask (bit ``k`` set = success ``k`` attempts ago).
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .core import (
    GainReport,
    InfeasibleError,
    OutOfRangeError,
    QmuxError,
    validate_count,
    validate_positive,
    validate_probability,
)

INFINITE_WINDOW = math.inf
"""Sentinel for an unbounded window (perfect memory)."""

DEFAULT_MAX_STATES = 50_000


class StateSpaceTooLarge(QmuxError):
    def __init__(self, n_states: int, limit: int):
        self.n_states = n_states
        self.limit = limit
        super().__init__(f"window chain needs {n_states} states (limit {limit})")


class ChannelCapacityExceeded(QmuxError, ValueError):
    pass


class Method(str, enum.Enum):
    EXACT_MARKOV = "exact_markov"
    ASYMPTOTIC_LOW_P = "asymptotic_low_p"
    INFINITE_WINDOW = "infinite_window"


def _check_window(w) -> float | int:
    if w == INFINITE_WINDOW:
        return INFINITE_WINDOW
    return validate_count(w, "w")


@dataclass(frozen=True)
class WindowSpec:
    w: int | float
    s: int
    p: float

    def __post_init__(self):
        object.__setattr__(self, "w", _check_window(self.w))
        object.__setattr__(self, "s", validate_count(self.s, "s"))
        p = validate_probability(self.p, "p")
        if p == 0.0:
            raise OutOfRangeError("p", p, "0 < p <= 1")
        object.__setattr__(self, "p", p)
        if self.s > self.w:
            raise OutOfRangeError("s", self.s, f"s <= w={self.w}")


@dataclass(frozen=True)
class WindowExpectation:
    expected_attempts: float
    method: Method
    n_states: int = 0
    details: dict = field(default_factory=dict)


def n_window_states(w: int, s: int) -> int:
    """Number of transient states of the exact chain."""
    return sum(math.comb(w - 1, k) for k in range(min(s, w)))


@functools.lru_cache(maxsize=64)
def _window_chain(w: int, s: int):
    """Transient states and successor indices for the (w, s) chain.

    Returns ``(states, fail_next, succ_next)``; successor index ``-1`` means
    absorption.
    """
    nbits = w - 1
    full = (1 << nbits) - 1
    # enumerate all masks of nbits bits with popcount <= s - 1, level by level
    masks = [np.zeros(1, dtype=np.uint64)]
    tops = [np.full(1, -1, dtype=np.int64)]
    counts = [np.zeros(1, dtype=np.int64)]
    for k in range(1, min(s, w)):
        prev, prev_top = masks[-1], tops[-1]
        new_masks, new_tops = [], []
        # extend each mask by one bit above its highest set bit
        for bit in range(nbits):
            sel = prev[prev_top < bit]
            if sel.size:
                new_masks.append(sel | np.uint64(1 << bit))
                new_tops.append(np.full(sel.size, bit, dtype=np.int64))
        masks.append(np.concatenate(new_masks))
        tops.append(np.concatenate(new_tops))
        counts.append(np.full(masks[-1].size, k, dtype=np.int64))
    states = np.concatenate(masks)
    order = np.argsort(states)
    states = states[order]
    popcount = np.concatenate(counts)[order]
    shifted = (states << np.uint64(1)) & np.uint64(full)
    fail_next = np.searchsorted(states, shifted)
    succ_mask = shifted | np.uint64(1 if nbits > 0 else 0)
    succ_next = np.searchsorted(states, succ_mask)
    absorbed = popcount + 1 >= s
    succ_next[absorbed] = -1
    return states, fail_next, succ_next


def expected_attempts_exact(
    spec: WindowSpec, max_states: int = DEFAULT_MAX_STATES
) -> WindowExpectation:
    """Exact E[attempts] until ``s`` successes fall inside a window of ``w``."""
    w, s, p = spec.w, spec.s, spec.p
    if w == INFINITE_WINDOW:
        return WindowExpectation(s / p, Method.INFINITE_WINDOW)
    if p == 1.0:
        return WindowExpectation(float(s), Method.EXACT_MARKOV, n_window_states(w, s))
    if s == 1:
        return WindowExpectation(1.0 / p, Method.EXACT_MARKOV, 1)
    n = n_window_states(w, s)
    if n > max_states:
        raise StateSpaceTooLarge(n, max_states)
    states, fail_next, succ_next = _window_chain(w, s)
    size = states.size
    rows = np.arange(size)
    keep = succ_next >= 0
    data = np.concatenate([np.full(size, 1.0 - p), np.full(int(keep.sum()), p)])
    r = np.concatenate([rows, rows[keep]])
    c = np.concatenate([fail_next, succ_next[keep]])
    transient = sp.csc_matrix((data, (r, c)), shape=(size, size))
    system = (sp.identity(size, format="csc") - transient).tocsc()
    expected = splu(system).solve(np.ones(size))
    # state 0 (empty history) is the first entry after sorting
    return WindowExpectation(float(expected[0]), Method.EXACT_MARKOV, size)


def expected_attempts_low_p(spec: WindowSpec) -> WindowExpectation:
    """Small-p asymptote 1 / (C(w-1, s-1) p^s)."""
    w, s, p = spec.w, spec.s, spec.p
    if w == INFINITE_WINDOW:
        raise OutOfRangeError("w", w, "a finite window")
    log_value = -(math.log(math.comb(w - 1, s - 1)) + s * math.log(p))
    if log_value > math.log(np.finfo(float).max):
        raise OverflowError(f"expected attempts exp({log_value:.1f}) exceeds double range")
    return WindowExpectation(math.exp(log_value), Method.ASYMPTOTIC_LOW_P)


def temporal_gain_single(p: float, M: int) -> GainReport:
    """Batching M attempts per time slot: gain (1 - (1-p)^M) / p <= M."""
    p = validate_probability(p, "p")
    if p == 0.0:
        raise OutOfRangeError("p", p, "0 < p <= 1")
    M = validate_count(M, "M")
    batch = 1.0 if p == 1.0 else -math.expm1(M * math.log1p(-p))
    return GainReport.from_rates(batch, p, float(M))


def window_gain_limit(w: int, M: int, s: int) -> float:
    """p -> 0 limit of the windowed gain, M C(Mw-1, s-1) / C(w-1, s-1)."""
    return M * math.comb(M * w - 1, s - 1) / math.comb(w - 1, s - 1)


def temporal_gain_s(
    p: float, w: int, M: int, s: int, max_states: int = DEFAULT_MAX_STATES
) -> GainReport:
    """Upper bound M E[tau_w] / E[tau_Mw] on the s-qubit temporal gain.

    The reported gain is itself an upper bound on the true multiplexed gain;
    ``details['upper_bound']`` records this.
    """
    M = validate_count(M, "M")
    base = expected_attempts_exact(WindowSpec(w, s, p), max_states)
    mux = expected_attempts_exact(WindowSpec(M * w, s, p), max_states)
    return GainReport.from_rates(
        M / mux.expected_attempts,
        1.0 / base.expected_attempts,
        window_gain_limit(w, M, s),
        upper_bound=True,
        expected_attempts_base=base.expected_attempts,
        expected_attempts_mux=mux.expected_attempts,
    )


def classical_bound_single(M: int, M_c: int) -> float:
    M = validate_count(M, "M")
    M_c = validate_count(M_c, "M_c")
    if M > M_c:
        raise ChannelCapacityExceeded(f"M={M} exceeds the channel capacity M_c={M_c}")
    return float(M)


def classical_bound_s(M: int, s: int, large_window: bool = False) -> float:
    """Semiclassical s-qubit bound M C(Ms-1, s-1), or M^s when w >> s."""
    M = validate_count(M, "M")
    s = validate_count(s, "s")
    if large_window:
        return float(M**s)
    return float(M * math.comb(M * s - 1, s - 1))


def window_bound_for_fidelity(
    F_min: float, F_0: float, s: int, T2: float, tau_e: float
) -> int | float:
    """Largest window keeping s depolarizing qubits above ``F_min``.

    Returns :data:`INFINITE_WINDOW` when ``F_min <= 2**-s`` (any window
    works).
    """
    F_min = validate_probability(F_min, "F_min")
    F_0 = validate_probability(F_0, "F_0")
    s = validate_count(s, "s")
    validate_positive(T2, "T2")
    validate_positive(tau_e, "tau_e")
    if F_0 <= 0.5:
        raise OutOfRangeError("F_0", F_0, "F_0 > 1/2")
    floor = 2.0**-s
    if F_min <= floor:
        return INFINITE_WINDOW
    if F_min > F_0:
        raise InfeasibleError(
            f"F_min={F_min} exceeds the undecayed fidelity F_0={F_0}", constraint="F_min <= F_0"
        )
    arg = (2 * F_0 - 1) * (1 - floor) / (F_min - floor)
    w = math.floor(T2 / tau_e * math.log(arg))
    return max(w, 1)


def _central_step(p: float) -> float:
    return max(1e-4, p * 1e-3)


def _derivative(fn, p: float) -> float:
    h = _central_step(p)
    lo, hi = p - h, p + h
    if lo <= 0.0:
        lo = p
    if hi > 1.0:
        hi = p
    return (fn(hi) - fn(lo)) / (hi - lo)


@dataclass(frozen=True)
class MonotonicityReport:
    w: int
    s: int
    M: int
    p_grid: np.ndarray
    d_small: np.ndarray
    d_large: np.ndarray
    gain: np.ndarray
    derivative_ok: np.ndarray
    gain_decreasing: bool

    @property
    def violations(self) -> int:
        return int((~self.derivative_ok).sum()) + (0 if self.gain_decreasing else 1)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def check_monotonicity_assumption(
    w: int, s: int, M: int, p_grid, rtol: float = 1e-7
) -> MonotonicityReport:
    """Numerically test 0 >= dE_Mw/dp >= dE_w/dp and that m_s*(p) decreases.

    ``rtol`` absorbs finite-difference noise when the two derivatives
    coincide (for instance ``s = 1``).
    """
    p_grid = np.asarray(p_grid, dtype=float)
    if p_grid.ndim != 1 or p_grid.size == 0:
        raise OutOfRangeError("p_grid", p_grid, "a non-empty 1-D grid")
    if np.any(np.diff(p_grid) <= 0) or p_grid[0] <= 0 or p_grid[-1] >= 1:
        raise OutOfRangeError("p_grid", p_grid, "strictly ascending values in (0, 1)")
    M = validate_count(M, "M")

    def e_small(p):
        return expected_attempts_exact(WindowSpec(w, s, p)).expected_attempts

    def e_large(p):
        return expected_attempts_exact(WindowSpec(M * w, s, p)).expected_attempts

    d_small = np.array([_derivative(e_small, p) for p in p_grid])
    d_large = np.array([_derivative(e_large, p) for p in p_grid])
    gain = np.array([M * e_small(p) / e_large(p) for p in p_grid])
    slack = rtol * np.maximum(np.abs(d_small), np.abs(d_large))
    ok = (d_large <= slack) & (d_large >= d_small - slack)
    gdiff = np.diff(gain)
    decreasing = bool(np.all(gdiff <= rtol * gain[1:]))
    return MonotonicityReport(w, s, M, p_grid, d_small, d_large, gain, ok, decreasing)
