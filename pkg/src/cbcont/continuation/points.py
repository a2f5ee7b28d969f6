"""Accepted solution points, branches and step-size control."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..signal import FourierVector, Measures


class CorrectorFailure(RuntimeError):
    """The corrector did not reach its tolerance within the iteration budget."""


class DegenerateSecantError(ValueError):
    """The two points spanning a secant coincide."""


@dataclass(frozen=True)
class EqPoint:
    p: float
    x: float

    def __post_init__(self):
        if not (math.isfinite(self.p) and math.isfinite(self.x)):
            raise ValueError("equilibrium point must be finite")


@dataclass(frozen=True)
class BranchPoint:
    """One accepted periodic orbit.

    ``a, b`` are the fundamental coefficients of the total plant input, so
    ``measures.F == hypot(a, b)``. ``xstar``/``pstar`` record the reference and
    feed-forward that produced the point and ``plant_state`` the plant state at
    the end of the accepted period (a period boundary on the absolute clock).
    """

    omega: float
    a: float
    b: float
    X: FourierVector
    U: FourierVector
    measures: Measures
    stable: bool | None = None
    settle_cycles: int = 0
    iterations: int = 0
    xstar: FourierVector | None = None
    pstar: tuple = (0.0, 0.0)
    plant_state: object = None

    @property
    def F(self):
        return self.measures.F

    @property
    def R(self):
        return self.measures.R


@dataclass
class StepControl:
    """Secant step multiplier and stopping bounds.

    ``h`` multiplies the last secant; ``max_step`` caps the resulting step
    length in the norm of the predicted coefficient vector.
    """

    h: float = 1.0
    h_min: float = 1.0 / 16.0
    h_max: float = 2.0
    shrink: float = 0.5
    grow: float = 1.5
    max_step: float = math.inf
    max_points: int = 60
    max_amplitude: float = math.inf
    max_forcing: float = math.inf

    def __post_init__(self):
        if not 0.0 < self.h_min <= self.h <= self.h_max:
            raise ValueError("need 0 < h_min <= h <= h_max")
        if not 0.0 < self.shrink < 1.0 or self.grow < 1.0:
            raise ValueError("shrink must lie in (0, 1) and grow must be >= 1")
        if self.max_points < 2:
            raise ValueError("max_points must be >= 2")


@dataclass
class Branch:
    """Points accepted at one forcing frequency, in continuation order."""

    omega: float
    points: list = field(default_factory=list)
    status: str = "open"
    diagnostic: str = ""
    n_seeds: int = 2

    def __len__(self):
        return len(self.points)

    @property
    def F(self):
        return np.array([p.F for p in self.points])

    @property
    def R(self):
        return np.array([p.R for p in self.points])

    @property
    def settle_cycles(self):
        return int(sum(p.settle_cycles for p in self.points))


@dataclass
class EquilibriumBranch:
    points: list = field(default_factory=list)
    status: str = "open"
    diagnostic: str = ""

    @property
    def p(self):
        return np.array([q.p for q in self.points])

    @property
    def x(self):
        return np.array([q.x for q in self.points])
