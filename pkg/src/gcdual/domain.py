"""Small value types shared across modules: parameters, constraints, boxes."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DomainError


def _vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class ThermoParams:
    """Grand-canonical parameters (mu, lambda, beta); beta < 0 is the domain."""

    mu: float
    lam: np.ndarray = field(default_factory=lambda: np.zeros(3))
    beta: float = -1.0

    def __post_init__(self):
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "lam", _vec3(self.lam))
        object.__setattr__(self, "beta", float(self.beta))

    @classmethod
    def from_vector(cls, v) -> "ThermoParams":
        v = np.asarray(v, dtype=float)
        return cls(v[0], v[1:4], v[4])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.mu], self.lam, [self.beta]])

    def check(self) -> "ThermoParams":
        if not self.beta < 0:
            raise DomainError(f"beta must be negative (partition function is infinite), got {self.beta}")
        return self

    def to_dict(self) -> dict:
        return {"mu": self.mu, "lambda": self.lam.tolist(), "beta": self.beta}

    @classmethod
    def from_dict(cls, d) -> "ThermoParams":
        return cls(d["mu"], d["lambda"], d["beta"])


@dataclass(frozen=True)
class MacroState:
    """Macroscopic constraints per unit volume: density, momentum density, energy density."""

    rho: float
    u: np.ndarray = field(default_factory=lambda: np.zeros(3))
    E: float = 0.0
    error: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "u", _vec3(self.u))
        object.__setattr__(self, "E", float(self.E))
        if self.error is not None:
            object.__setattr__(self, "error", np.asarray(self.error, dtype=float).reshape(5))

    @classmethod
    def from_vector(cls, v) -> "MacroState":
        v = np.asarray(v, dtype=float)
        return cls(v[0], v[1:4], v[4])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.rho], self.u, [self.E]])

    def to_dict(self) -> dict:
        d = {"rho": self.rho, "u": self.u.tolist(), "E": self.E}
        if self.error is not None:
            d["error"] = self.error.tolist()
        return d

    @classmethod
    def from_dict(cls, d) -> "MacroState":
        return cls(d["rho"], d["u"], d["E"], d.get("error"))


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box [0, s1] x [0, s2] x [0, s3], optionally with a shrink margin."""

    sides: tuple
    margin: float = 0.0

    def __post_init__(self):
        s = tuple(float(x) for x in np.broadcast_to(np.asarray(self.sides, dtype=float), (3,)))
        if min(s) <= 0:
            raise ConfigError(f"box sides must be positive, got {s}")
        object.__setattr__(self, "sides", s)
        object.__setattr__(self, "margin", float(self.margin))
        if self.margin < 0 or min(s) - 2 * self.margin <= 0:
            raise ConfigError(f"shrink margin {self.margin} leaves a nonpositive side in {s}")

    @classmethod
    def cube(cls, side: float, margin: float = 0.0) -> "BoxDomain":
        return cls((side, side, side), margin)

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def diameter(self) -> float:
        return float(np.sqrt(np.sum(np.square(self.sides))))

    def shrunk(self) -> "BoxDomain":
        """The inner box with every side reduced by twice the margin."""
        return BoxDomain(tuple(s - 2 * self.margin for s in self.sides))

    def to_dict(self) -> dict:
        return {"sides": list(self.sides), "margin": self.margin, "volume": self.volume}

    @classmethod
    def from_dict(cls, d) -> "BoxDomain":
        return cls(tuple(d["sides"]), d.get("margin", 0.0))
