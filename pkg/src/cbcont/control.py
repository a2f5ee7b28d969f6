"""Sampled PD control loop with a Butterworth-filtered measurement path."""
from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .plant import Plant
from .signal import (
    FourierVector,
    is_stationary,
    recursive_update,
    samples_per_period,
    snap_omega,
    synthesize,
    synthesize_derivative,
)

logger = logging.getLogger(__name__)

REFERENCE_PATHS = ("matched", "analytic")


class FilterDesignError(ValueError):
    pass


class SettleTimeout(RuntimeError):
    """The loop did not become stationary within ``max_periods``.

    ``partial`` holds the :class:`SettleResult` of the last period run.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class PDGains:
    kp: float = 0.2
    kd: float = -0.004

    def __post_init__(self):
        if not (math.isfinite(self.kp) and math.isfinite(self.kd)):
            raise ValueError("gains must be finite")


@dataclass(frozen=True)
class FilterSpec:
    order: int = 4
    cutoff_hz: float = 75.0
    sample_rate_hz: float = 5000.0

    def __post_init__(self):
        if self.order < 2 or self.order % 2:
            raise FilterDesignError(f"order must be even and >= 2, got {self.order}")
        if not 0.0 < self.cutoff_hz < 0.5 * self.sample_rate_hz:
            raise FilterDesignError(
                f"cutoff {self.cutoff_hz} Hz must lie in (0, {0.5 * self.sample_rate_hz}) Hz")


@dataclass(frozen=True)
class LoopSettings:
    """Stopping rules for :meth:`ControlLoop.run_until_settled`.

    Stationarity tolerances are ``rel_tol * max(R, amplitude_floor)`` on the
    output coefficients and ``rel_tol * max(F, forcing_floor)`` on the input
    coefficients. ``reference_path`` chooses how the reference enters the PD
    law: ``"matched"`` passes it through a filter and finite difference
    identical to the measurement path, ``"analytic"`` uses the raw series and
    its exact derivative.
    """

    max_periods: int = 200
    stationarity_count: int = 5
    rel_tol: float = 1e-3
    amplitude_floor: float = 1e-6
    forcing_floor: float = 1e-6
    transient_skip_periods: int = 3
    reference_path: str = "matched"

    def __post_init__(self):
        if self.max_periods < self.stationarity_count:
            raise ValueError("max_periods must be >= stationarity_count")
        if self.stationarity_count < 2:
            raise ValueError("stationarity_count must be >= 2")
        if self.reference_path not in REFERENCE_PATHS:
            raise ValueError(f"reference_path must be one of {REFERENCE_PATHS}")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")


def design_butterworth(spec: FilterSpec):
    """Low-pass Butterworth as cascaded biquads, ``(order/2, 6)`` rows ``[b0 b1 b2 1 a1 a2]``.

    Bilinear transform with the cutoff pre-warped so the digital response is
    exactly -3 dB there; each section is scaled to unit DC gain.
    """
    n = spec.order
    fs = spec.sample_rate_hz
    K = 2.0 * fs
    wa = K * math.tan(math.pi * spec.cutoff_hz / fs)
    sos = np.zeros((n // 2, 6))
    for k in range(n // 2):
        pole = wa * cmath.exp(1j * math.pi * (2 * (k + 1) + n - 1) / (2 * n))
        re = pole.real
        a0 = K * K - 2.0 * re * K + wa * wa
        a1 = (-2.0 * K * K + 2.0 * wa * wa) / a0
        a2 = (K * K + 2.0 * re * K + wa * wa) / a0
        g = (1.0 + a1 + a2) / 4.0
        sos[k] = [g, 2.0 * g, g, 1.0, a1, a2]
    return sos


def frequency_response(sos, f, sample_rate):
    """Complex response of a biquad cascade at ``f`` Hz."""
    z1 = cmath.exp(-2j * math.pi * f / sample_rate)
    h = 1.0 + 0.0j
    for b0, b1, b2, _, a1, a2 in sos:
        h *= (b0 + b1 * z1 + b2 * z1 * z1) / (1.0 + a1 * z1 + a2 * z1 * z1)
    return h


class ButterworthFilter:
    """Stateful transposed direct-form II cascade."""

    def __init__(self, spec: FilterSpec):
        self.spec = spec
        self.sos = design_butterworth(spec)
        self._coef = [tuple(float(v) for v in row) for row in self.sos]
        self.reset()

    def reset(self):
        self._z = [[0.0, 0.0] for _ in self._coef]

    def step(self, sample):
        y = sample
        for (b0, b1, b2, _, a1, a2), z in zip(self._coef, self._z):
            out = b0 * y + z[0]
            z[0] = b1 * y - a1 * out + z[1]
            z[1] = b2 * y - a2 * out
            y = out
        return y

    def response(self, f):
        return frequency_response(self.sos, f, self.spec.sample_rate_hz)


def filter_step(filt: ButterworthFilter, sample):
    return filt.step(sample)


def derivative_estimate(prev_filtered, curr_filtered, dt):
    return (curr_filtered - prev_filtered) / dt


def pd_control(xstar, dxstar, x_filt, dx_est, gains: PDGains):
    return gains.kp * (xstar - x_filt) + gains.kd * (dxstar - dx_est)


def _mean(history):
    return FourierVector(history[-1].omega, np.mean([fv.coeffs for fv in history], axis=0))


@dataclass
class SettleResult:
    """Coefficients and traces of a settled run.

    ``X`` and ``U`` average the per-period estimates over the stationary
    window, which is what makes sensor noise tolerable; ``U`` is the Fourier
    vector of the total plant input (harmonic feed-forward plus feedback).
    The traces are the last period; ``start`` is its absolute sample index.
    """

    X: FourierVector
    U: FourierVector
    x_trace: np.ndarray
    u_trace: np.ndarray
    periods_used: int
    start: int
    plant_state: object = None
    settled: bool = True


@dataclass
class _Trace:
    t: list = field(default_factory=list)
    x_raw: list = field(default_factory=list)
    x_filt: list = field(default_factory=list)
    u: list = field(default_factory=list)
    cycle: list = field(default_factory=list)


class ControlLoop:
    """One continuously running experiment at a fixed forcing frequency.

    The plant, filter states and derivative memory persist between calls to
    :meth:`run_until_settled`, so successive runs continue from where the
    previous one stopped. ``omega`` is snapped to the nearest frequency with a
    whole number of samples per period.

    Parameters
    ----------
    plant : Plant
        Experiment, stepped once per sample.
    omega : float
        Forcing frequency in rad/s.
    gains : PDGains
    filter_spec : FilterSpec or None
        ``None`` bypasses the measurement filter.
    settings : LoopSettings
    m : int
        Number of harmonics estimated.
    """

    def __init__(self, plant: Plant, omega, gains=None, filter_spec=None, settings=None, m=7,
                 record_traces=False):
        self.plant = plant
        self.omega = snap_omega(omega, plant.sample_rate)
        self.n_period = samples_per_period(self.omega, plant.sample_rate)
        self.gains = gains or PDGains()
        self.settings = settings or LoopSettings()
        self.m = m
        self.filter_spec = filter_spec
        if filter_spec is not None and abs(filter_spec.sample_rate_hz - plant.sample_rate) > 1e-9:
            raise FilterDesignError("filter sample rate differs from plant sample rate")
        self._fx = ButterworthFilter(filter_spec) if filter_spec else None
        self._fr = ButterworthFilter(filter_spec) if filter_spec else None
        self._sample = plant.output()
        self._prev_xf = None
        self._prev_rf = None
        self._last = None
        self.settle_cycles = 0
        self.periods = 0
        self.trace = _Trace() if record_traces else None

    def _reference_samples(self, xstar, start):
        k = (start + np.arange(self.n_period)) % self.n_period
        t = k / self.plant.sample_rate
        return synthesize(xstar, t), synthesize_derivative(xstar, t), t

    def _align(self):
        # start every run on a period boundary of the absolute sample clock,
        # holding the previous reference meanwhile
        rem = self.plant.n % self.n_period
        if not rem:
            return
        count = self.n_period - rem
        if self._last is None:
            self._run_samples(count, None, None, None, (0.0, 0.0))
        else:
            xstar, pstar = self._last
            ref, dref, t = self._reference_samples(xstar, self.plant.n)
            self._run_samples(count, ref, dref, t, pstar)

    def _run_samples(self, count, ref, dref, t, pstar, x_out=None, u_out=None):
        plant = self.plant
        dt = plant.dt
        kp, kd = self.gains.kp, self.gains.kd
        fx = self._fx.step if self._fx else None
        fr = self._fr.step if self._fr else None
        matched = self.settings.reference_path == "matched"
        a_s, b_s = pstar
        w = self.omega
        prev_xf, prev_rf = self._prev_xf, self._prev_rf
        sample = self._sample
        tr = self.trace
        n0 = plant.n
        cyc = self.settle_cycles
        for i in range(count):
            if ref is None:
                r = 0.0
                dr_exact = 0.0
                ff = 0.0
            else:
                r = ref[i]
                dr_exact = dref[i]
                ff = a_s * math.cos(w * t[i]) + b_s * math.sin(w * t[i]) if (a_s or b_s) else 0.0
            xf = fx(sample) if fx else sample
            if prev_xf is None:
                prev_xf = xf
            dx = (xf - prev_xf) / dt
            if matched:
                rf = fr(r) if fr else r
                if prev_rf is None:
                    prev_rf = rf
                dr = (rf - prev_rf) / dt
            else:
                rf = r
                dr = dr_exact
            u = kp * (rf - xf) + kd * (dr - dx) if ref is not None else 0.0
            prev_xf, prev_rf = xf, rf
            u_total = ff + u
            if x_out is not None:
                x_out[i] = sample
                u_out[i] = u_total
            if tr is not None:
                tr.t.append((n0 + i) * dt)
                tr.x_raw.append(sample)
                tr.x_filt.append(xf)
                tr.u.append(u_total)
                tr.cycle.append(cyc)
            sample = plant.step(u_total)
        self._prev_xf, self._prev_rf = prev_xf, prev_rf
        self._sample = sample

    def run_until_settled(self, xstar: FourierVector, pstar=None):
        """Run whole forcing periods until X and U are stationary.

        Parameters
        ----------
        xstar : FourierVector
            Control reference.
        pstar : tuple (a, b) or None
            Harmonic feed-forward ``a cos(wt) + b sin(wt)`` added to the
            feedback. ``None`` is the PD-only protocol.

        Raises
        ------
        SettleTimeout
            If ``max_periods`` elapse first; carries the partial result.
        """
        if abs(xstar.omega - self.omega) > 1e-9 * self.omega:
            xstar = FourierVector(self.omega, xstar.coeffs)
        pstar = (0.0, 0.0) if pstar is None else (float(pstar[0]), float(pstar[1]))
        s = self.settings
        fs = self.plant.sample_rate
        N = self.n_period
        self._align()
        self._last = (xstar, pstar)
        self.settle_cycles += 1
        start = self.plant.n
        ref, dref, t = self._reference_samples(xstar, start)
        X = FourierVector.zeros(self.omega, self.m)
        U = FourierVector.zeros(self.omega, self.m)
        X_hist, U_hist = [], []
        x_win = np.empty(N)
        u_win = np.empty(N)
        for period in range(1, s.max_periods + 1):
            start = self.plant.n
            self._run_samples(N, ref, dref, t, pstar, x_win, u_win)
            self.periods += 1
            X = recursive_update(X, x_win, fs, start)
            U = recursive_update(U, u_win, fs, start)
            X_hist.append(X)
            U_hist.append(U)
            if period <= s.transient_skip_periods:
                continue
            tol_x = s.rel_tol * max(X.amplitude, s.amplitude_floor)
            tol_u = s.rel_tol * max(U.amplitude, s.forcing_floor)
            if (is_stationary(X_hist[s.transient_skip_periods:], tol_x, s.stationarity_count)
                    and is_stationary(U_hist[s.transient_skip_periods:], tol_u, s.stationarity_count)):
                k = s.stationarity_count
                return SettleResult(_mean(X_hist[-k:]), _mean(U_hist[-k:]), x_win.copy(),
                                    u_win.copy(), period, start, self.plant.snapshot())
        partial = SettleResult(X, U, x_win.copy(), u_win.copy(), s.max_periods, start,
                               self.plant.snapshot(), settled=False)
        raise SettleTimeout(f"not stationary after {s.max_periods} periods", partial)
