"""Shared value types, validation and serialization.

Rates are expressed per attempt duration ``tau_e`` throughout the package,
so every formula stays dimensionless; conversion to Hz happens only at the
CLI boundary.
"""
from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib


class QmuxError(Exception):
    """Base class for all errors raised by this package."""


class OutOfRangeError(QmuxError, ValueError):
    def __init__(self, field_name: str, value: Any, allowed: str):
        self.field = field_name
        self.value = value
        super().__init__(f"{field_name}={value!r} is out of range (expected {allowed})")


class InfeasibleError(QmuxError):
    """No parameter choice satisfies a constraint.

    ``constraint`` names the constraint that could not be met.
    """

    def __init__(self, message: str, constraint: str = ""):
        self.constraint = constraint
        super().__init__(message)


class MissingParameterError(QmuxError, ValueError):
    def __init__(self, field_name: str, context: str = ""):
        self.field = field_name
        msg = f"missing required parameter {field_name!r}"
        if context:
            msg += f" for {context}"
        super().__init__(msg)


def _check_finite(name: str, value: float) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float, np.number)):
        raise OutOfRangeError(name, value, "a real number")
    value = float(value)
    if not math.isfinite(value):
        raise OutOfRangeError(name, value, "a finite real number")
    return value


def validate_probability(p: float, name: str = "p") -> float:
    """Return ``p`` unchanged when it lies in [0, 1], else raise."""
    p = _check_finite(name, p)
    if not 0.0 <= p <= 1.0:
        raise OutOfRangeError(name, p, "0 <= value <= 1")
    return p


def validate_positive(x: float, name: str) -> float:
    x = _check_finite(name, x)
    if x <= 0.0:
        raise OutOfRangeError(name, x, "value > 0")
    return x


def validate_nonnegative(x: float, name: str) -> float:
    x = _check_finite(name, x)
    if x < 0.0:
        raise OutOfRangeError(name, x, "value >= 0")
    return x


def validate_count(n: int, name: str, minimum: int = 1) -> int:
    integral = isinstance(n, (int, np.integer)) or (isinstance(n, float) and n.is_integer())
    if isinstance(n, bool) or not integral:
        raise OutOfRangeError(name, n, f"an integer >= {minimum}")
    n = int(n)
    if n < minimum:
        raise OutOfRangeError(name, n, f"an integer >= {minimum}")
    return n


@dataclass(frozen=True)
class Efficiency:
    """Channel transmission efficiency in [0, 1]."""

    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", validate_probability(self.value, "efficiency"))

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class BrightState:
    """Probability that an emitter is in its bright (photon-emitting) state."""

    xi_squared: float

    def __post_init__(self):
        object.__setattr__(
            self, "xi_squared", validate_probability(self.xi_squared, "xi_squared")
        )

    def __float__(self) -> float:
        return self.xi_squared


@dataclass(frozen=True)
class MeanPhotonNumber:
    """Mean photon number of a weak coherent pulse."""

    alpha_squared: float

    def __post_init__(self):
        object.__setattr__(
            self, "alpha_squared", validate_nonnegative(self.alpha_squared, "alpha_squared")
        )

    def __float__(self) -> float:
        return self.alpha_squared


@dataclass(frozen=True)
class LinkParams:
    """One client-server or server-server link.

    ``tau_ce`` is the memory coherence time while the node is running
    EG/RSP attempts, ``tau_co`` while it is idle; times in seconds.
    """

    eta: Efficiency
    tau_e: float
    tau_ce: float
    tau_co: float

    def __post_init__(self):
        if not isinstance(self.eta, Efficiency):
            object.__setattr__(self, "eta", Efficiency(self.eta))
        validate_positive(self.tau_e, "tau_e")
        validate_positive(self.tau_ce, "tau_ce")
        validate_positive(self.tau_co, "tau_co")
        if self.tau_co < self.tau_ce:
            raise OutOfRangeError("tau_co", self.tau_co, f"tau_co >= tau_ce={self.tau_ce}")


@dataclass(frozen=True)
class RatePoint:
    """A (rate, fidelity) pair plus the parameters that produced it."""

    rate: float
    fidelity: float
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        validate_nonnegative(self.rate, "rate")
        validate_probability(self.fidelity, "fidelity")
        object.__setattr__(self, "params", dict(self.params))


@dataclass(frozen=True)
class GainReport:
    """Multiplexed vs baseline rate and the classical bound for comparison.

    ``details`` carries method-specific metadata (for instance whether the
    reported gain is itself an upper bound).
    """

    rate_multiplexed: float
    rate_baseline: float
    gain: float
    classical_bound: float
    details: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        validate_nonnegative(self.rate_multiplexed, "rate_multiplexed")
        validate_positive(self.rate_baseline, "rate_baseline")
        _check_finite("gain", self.gain)
        _check_finite("classical_bound", self.classical_bound)
        expected = self.rate_multiplexed / self.rate_baseline
        if not math.isclose(self.gain, expected, rel_tol=1e-12, abs_tol=0.0):
            raise OutOfRangeError("gain", self.gain, f"rate_multiplexed/rate_baseline={expected}")
        object.__setattr__(self, "details", dict(self.details))

    @classmethod
    def from_rates(cls, multiplexed: float, baseline: float, classical_bound: float, **details):
        return cls(multiplexed, baseline, multiplexed / baseline, classical_bound, details)


_CORE_TYPES = {
    cls.__name__: cls
    for cls in (Efficiency, BrightState, MeanPhotonNumber, LinkParams, RatePoint, GainReport)
}


def _encode(value):
    if dataclasses.is_dataclass(value):
        out = {"type": type(value).__name__}
        for f in dataclasses.fields(value):
            out[f.name] = _encode(getattr(value, f.name))
        return out
    if isinstance(value, Mapping):
        return {str(k): _encode(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_encode(v) for v in value]
    return value


def _decode(value):
    if isinstance(value, dict):
        if "type" in value and value["type"] in _CORE_TYPES:
            cls = _CORE_TYPES[value["type"]]
            names = {f.name for f in dataclasses.fields(cls)}
            unknown = set(value) - names - {"type"}
            if unknown:
                raise QmuxError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
            kwargs = {k: _decode(v) for k, v in value.items() if k != "type"}
            return cls(**kwargs)
        return {k: _decode(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_decode(v) for v in value]
    return value


def dumps(obj) -> str:
    """Serialize a core value type to TOML text."""
    return tomli_w.dumps({"value": _encode(obj)})


def loads(text: str):
    """Inverse of :func:`dumps`."""
    return _decode(tomllib.loads(text)["value"])
