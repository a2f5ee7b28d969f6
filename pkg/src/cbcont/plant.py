"""Simulated black-box experiments.

Two models stand in for a physical rig:

* ``duffing``: ``x'' + 2 zeta omega0 x' + omega0^2 x + gamma x^3 = input_gain * u``
* ``fold``: the scalar normal form ``x' = p - x^2`` with ``p`` as the input,
  or any scalar ``x' = f(x, p)`` passed to :class:`ScalarPlant`.

Both advance with one classical RK4 step per sample, input held constant
over the step, and report displacement plus optional Gaussian sensor noise.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

MODELS = ("duffing", "fold")


class PlantFault(RuntimeError):
    """Non-finite input or state: the experiment has tripped and must be aborted."""


@dataclass(frozen=True)
class PlantConfig:
    """Plant constants. ``input_gain`` and ``sample_rate`` default per model.

    The default ``input_gain = -omega0**2`` makes the displacement respond with
    inverted polarity to positive forcing. With that polarity the default PD
    gains add damping and soften the closed loop, which is what keeps the
    unstable middle branch stabilised.
    """

    model: str = "duffing"
    omega0: float = 2.0 * math.pi * 20.0
    zeta: float = 0.03
    gamma: float = 9267.0
    input_gain: float | None = None
    sample_rate: float | None = None
    noise_std: float = 0.0
    rng_seed: int = 0
    divergence_bound: float = 1e3

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.input_gain is None:
            object.__setattr__(self, "input_gain", -self.omega0**2 if self.model == "duffing" else 1.0)
        if self.sample_rate is None:
            object.__setattr__(self, "sample_rate", 5000.0 if self.model == "duffing" else 100.0)
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if self.zeta < 0:
            raise ValueError("zeta must be non-negative")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if not self.divergence_bound > 0:
            raise ValueError("divergence_bound must be positive")


@dataclass(frozen=True)
class PlantState:
    state: tuple
    t: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.state) or not math.isfinite(self.t):
            raise ValueError("plant state must be finite")


@dataclass
class UncontrolledRun:
    t: np.ndarray
    x: np.ndarray
    diverged: bool = False


class Plant:
    """Stateful sampled experiment. Subclasses implement ``_rk4(u)``."""

    dim = 1

    def __init__(self, config: PlantConfig):
        self.config = config
        self.dt = 1.0 / config.sample_rate
        self.n = 0
        self._rng = np.random.default_rng(config.rng_seed)
        self._noise = np.empty(0)
        self._noise_pos = 0
        self._x = [0.0] * self.dim

    @property
    def sample_rate(self):
        return self.config.sample_rate

    @property
    def t(self):
        return self.n * self.dt

    def snapshot(self):
        return PlantState(tuple(self._x), self.t)

    def restore(self, state: PlantState):
        if len(state.state) != self.dim:
            raise ValueError(f"state has dimension {len(state.state)}, plant has {self.dim}")
        self._x = [float(v) for v in state.state]
        self.n = int(round(state.t / self.dt))

    def clone(self):
        return copy.deepcopy(self)

    def _next_noise(self):
        if self._noise_pos >= self._noise.size:
            self._noise = self._rng.normal(0.0, self.config.noise_std, 4096)
            self._noise_pos = 0
        v = self._noise[self._noise_pos]
        self._noise_pos += 1
        return v

    def output(self):
        """Current displacement sample (no state advance)."""
        x = self._x[0]
        if self.config.noise_std > 0.0:
            x += self._next_noise()
        return x

    def step(self, u_total):
        """Advance one sample under constant input; return the new output sample."""
        if not math.isfinite(u_total):
            raise PlantFault(f"non-finite input {u_total!r} at t={self.t:.6f}")
        self._rk4(u_total)
        self.n += 1
        if not all(math.isfinite(v) for v in self._x):
            raise PlantFault(f"non-finite state at t={self.t:.6f}")
        return self.output()

    def run_uncontrolled(self, forcing, duration, initial: PlantState | None = None):
        """Open-loop run under ``a cos(wt) + b sin(wt)`` for ``duration`` seconds.

        The forcing uses the absolute plant clock. Growth beyond
        ``divergence_bound`` stops the run and is reported, not raised.
        """
        a, b, omega = forcing
        if initial is not None:
            self.restore(initial)
        steps = int(round(duration / self.dt))
        ts = np.empty(steps)
        xs = np.empty(steps)
        bound = self.config.divergence_bound
        sample = self.output()
        for i in range(steps):
            wt = omega * self.t
            ts[i] = self.t
            xs[i] = sample
            try:
                sample = self.step(a * math.cos(wt) + b * math.sin(wt))
            except PlantFault:
                return UncontrolledRun(ts[: i + 1], xs[: i + 1], diverged=True)
            if abs(self._x[0]) > bound:
                return UncontrolledRun(ts[: i + 1], xs[: i + 1], diverged=True)
        return UncontrolledRun(ts, xs)


class DuffingPlant(Plant):
    dim = 2

    def __init__(self, config: PlantConfig):
        super().__init__(config)
        c = config
        self._c = 2.0 * c.zeta * c.omega0
        self._k = c.omega0**2
        self._g = c.gamma
        self._b = c.input_gain

    def _rk4(self, u):
        x, v = self._x
        h = self.dt
        c, k, g = self._c, self._k, self._g
        f = self._b * u
        a1 = f - c * v - k * x - g * x * x * x
        x2 = x + 0.5 * h * v
        v2 = v + 0.5 * h * a1
        a2 = f - c * v2 - k * x2 - g * x2 * x2 * x2
        x3 = x + 0.5 * h * v2
        v3 = v + 0.5 * h * a2
        a3 = f - c * v3 - k * x3 - g * x3 * x3 * x3
        x4 = x + h * v3
        v4 = v + h * a3
        a4 = f - c * v4 - k * x4 - g * x4 * x4 * x4
        self._x = [x + h / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4),
                   v + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)]


def fold_normal_form(x, p):
    return p - x * x


def parameter_independent(x, p):
    """``x' = -x + 0 p``: the equilibrium ``x = 0`` does not move with ``p``."""
    return -x + 0.0 * p


SCALAR_SYSTEMS = {"fold_normal_form": fold_normal_form, "parameter_independent": parameter_independent}


class ScalarPlant(Plant):
    """``x' = rhs(x, input)``; the input plays the role of the system parameter."""

    def __init__(self, config: PlantConfig, rhs=fold_normal_form, x0=0.0):
        super().__init__(config)
        self.rhs = rhs
        self._x = [float(x0)]

    def _rk4(self, p):
        x = self._x[0]
        h = self.dt
        f = self.rhs
        k1 = f(x, p)
        k2 = f(x + 0.5 * h * k1, p)
        k3 = f(x + 0.5 * h * k2, p)
        k4 = f(x + h * k3, p)
        self._x = [x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)]


def make_plant(config: PlantConfig, initial=None, rhs=fold_normal_form):
    """Plant for ``config``; ``rhs`` selects the scalar system of the ``fold`` model."""
    if config.model == "duffing":
        plant = DuffingPlant(config)
    else:
        plant = ScalarPlant(config, rhs)
    if initial is not None:
        plant.restore(initial if isinstance(initial, PlantState) else PlantState(tuple(initial), 0.0))
    return plant
