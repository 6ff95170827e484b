"""Problem abstraction, tolerance constants and integration statistics."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numba
from numba.core.registry import CPUDispatcher

from .errors import InvalidShape


class SolverChoice(enum.Enum):
    RKCK = "rkck"
    RKC = "rkc"

    @classmethod
    def parse(cls, value) -> "SolverChoice":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


class ToleranceSettings(NamedTuple):
    """Tolerances and controller constants shared by both drivers.

    Kept as a flat tuple of floats so it can be handed to compiled kernels
    unchanged.
    """

    eps: float = 1.0e-10
    abs_tol: float = 1.0e-10
    rel_tol: float = 1.0e-6
    uround: float = 2.22e-16
    tiny: float = 1.0e-30
    safety: float = 0.9
    p1: float = 0.1
    errcon: float = 1.89e-4
    pgrow: float = -0.2
    pshrnk: float = -0.25
    h_min_floor: float = 1.0e-20
    kappa: float = 2.0 / 13.0

    def validate(self) -> "ToleranceSettings":
        for name in ("eps", "abs_tol", "rel_tol", "uround", "tiny", "h_min_floor"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if not 0 < self.safety < 1:
            raise ValueError(f"safety must lie in (0, 1), got {self.safety!r}")
        if not 0 < self.p1 < 1:
            raise ValueError(f"p1 must lie in (0, 1), got {self.p1!r}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be nonnegative, got {self.kappa!r}")
        return self


def _compile(fn: Callable) -> CPUDispatcher:
    if isinstance(fn, CPUDispatcher):
        return fn
    return numba.njit(nogil=True)(fn)


@dataclass(frozen=True)
class OdeProblem:
    """A system dy/dt = rhs(t, y, g) of ``dim`` equations.

    ``rhs`` must return a new float64 array of length ``dim`` and be
    compilable in numba nopython mode; plain Python functions are compiled
    on construction. ``spec_rad_hint`` is an optional analytic spectral
    radius used only for verification.
    """

    dim: int
    rhs: Callable
    param_dim: int = 0
    spec_rad_hint: Optional[Callable] = None
    name: str = "ode"

    def __post_init__(self):
        if int(self.dim) < 1:
            raise InvalidShape(f"dim must be positive, got {self.dim}")
        if int(self.param_dim) < 0:
            raise InvalidShape(f"param_dim must be nonnegative, got {self.param_dim}")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "param_dim", int(self.param_dim))
        object.__setattr__(self, "rhs", _compile(self.rhs))


@dataclass
class IntegrationStats:
    steps_accepted: int = 0
    steps_rejected: int = 0
    rhs_evals: int = 0
    spec_rad_evals: int = 0
    h_min_seen: float = math.inf
    h_max_seen: float = 0.0
    underflow: bool = False

    def merge(self, other: "IntegrationStats") -> "IntegrationStats":
        return IntegrationStats(
            steps_accepted=self.steps_accepted + other.steps_accepted,
            steps_rejected=self.steps_rejected + other.steps_rejected,
            rhs_evals=self.rhs_evals + other.rhs_evals,
            spec_rad_evals=self.spec_rad_evals + other.spec_rad_evals,
            h_min_seen=min(self.h_min_seen, other.h_min_seen),
            h_max_seen=max(self.h_max_seen, other.h_max_seen),
            underflow=self.underflow or other.underflow,
        )

    def as_dict(self) -> dict:
        return {
            "steps_accepted": int(self.steps_accepted),
            "steps_rejected": int(self.steps_rejected),
            "rhs_evals": int(self.rhs_evals),
            "spec_rad_evals": int(self.spec_rad_evals),
            "h_min_seen": float(self.h_min_seen) if math.isfinite(self.h_min_seen) else None,
            "h_max_seen": float(self.h_max_seen) if self.h_max_seen > 0 else None,
            "underflow": bool(self.underflow),
        }
