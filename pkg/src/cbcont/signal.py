"""Truncated Fourier series: synthesis, estimation and the invasiveness measures.

Coefficient vectors use the flat layout ``[A0, A1, B1, ..., Am, Bm]`` and the
DC convention ``x(t) = A0/2 + sum_j Aj cos(j w t) + Bj sin(j w t)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

MIN_SAMPLES_PER_PERIOD = 16


class InvalidWindowError(ValueError):
    """Sample window does not cover one fundamental period at usable resolution."""


class InvasivenessUndefinedError(ValueError):
    """Relative invasiveness requested for a zero forcing amplitude."""


@dataclass(frozen=True)
class FourierVector:
    """Immutable set of Fourier coefficients at fundamental frequency ``omega``."""

    omega: float
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size < 3 or c.size % 2 == 0:
            raise ValueError(f"expected flat [A0, A1, B1, ...] of odd length >= 3, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("Fourier coefficients must be finite")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "omega", float(self.omega))

    @classmethod
    def zeros(cls, omega, m=7):
        return cls(omega, np.zeros(2 * m + 1))

    @classmethod
    def harmonic(cls, omega, a, b=0.0, m=7):
        """Pure tone ``a cos(wt) + b sin(wt)``."""
        c = np.zeros(2 * m + 1)
        c[1], c[2] = a, b
        return cls(omega, c)

    @property
    def m(self):
        return (self.coeffs.size - 1) // 2

    @property
    def A0(self):
        return self.coeffs[0]

    @property
    def pairs(self):
        """(m, 2) view of ``(Aj, Bj)`` for j = 1..m."""
        return self.coeffs[1:].reshape(-1, 2)

    @property
    def fundamental(self):
        return self.coeffs[1], self.coeffs[2]

    @property
    def amplitude(self):
        """Fundamental amplitude ``sqrt(A1^2 + B1^2)``."""
        return math.hypot(self.coeffs[1], self.coeffs[2])

    def with_coeffs(self, coeffs):
        return FourierVector(self.omega, coeffs)

    def shifted(self, phase):
        """Same signal delayed by ``phase / omega``: harmonic j is rotated by ``j*phase``."""
        c = self.coeffs.copy()
        for j in range(1, self.m + 1):
            A, B = c[2 * j - 1], c[2 * j]
            cj, sj = math.cos(j * phase), math.sin(j * phase)
            c[2 * j - 1] = A * cj - B * sj
            c[2 * j] = A * sj + B * cj
        return FourierVector(self.omega, c)

    def __add__(self, other):
        return FourierVector(self.omega, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return FourierVector(self.omega, self.coeffs - other.coeffs)


def _basis(omega, m, t):
    t = np.asarray(t, dtype=float)
    j = np.arange(1, m + 1)
    phase = np.multiply.outer(t, j * omega)
    return np.cos(phase), np.sin(phase)


def synthesize(fv, t):
    """Evaluate the series at time(s) ``t``."""
    c, s = _basis(fv.omega, fv.m, t)
    pairs = fv.pairs
    out = 0.5 * fv.A0 + c @ pairs[:, 0] + s @ pairs[:, 1]
    return float(out) if np.ndim(out) == 0 else out


def synthesize_derivative(fv, t):
    """Time derivative of the series, differentiated term by term."""
    c, s = _basis(fv.omega, fv.m, t)
    jw = np.arange(1, fv.m + 1) * fv.omega
    pairs = fv.pairs
    out = s @ (-jw * pairs[:, 0]) + c @ (jw * pairs[:, 1])
    return float(out) if np.ndim(out) == 0 else out


def samples_per_period(omega, sample_rate):
    return int(round(sample_rate * 2.0 * math.pi / omega))


def snap_omega(omega, sample_rate):
    """Nearest frequency whose period is a whole number of samples."""
    n = samples_per_period(omega, sample_rate)
    return 2.0 * math.pi * sample_rate / n


@lru_cache(maxsize=64)
def _projection_matrix(n, omega, m, dt, start):
    # start: index of the first sample on the absolute grid, reduced mod n
    k = (start + np.arange(n)) % n
    t = k * dt
    rows = [np.full(n, 1.0)]
    c, s = _basis(omega, m, t)
    for j in range(m):
        rows.append(c[:, j])
        rows.append(s[:, j])
    mat = 2.0 / n * np.array(rows)
    mat.flags.writeable = False
    return mat


def _check_window(n, omega, sample_rate):
    expected = samples_per_period(omega, sample_rate)
    if expected < MIN_SAMPLES_PER_PERIOD:
        raise InvalidWindowError(
            f"{expected} samples per period at omega={omega:g}; need at least {MIN_SAMPLES_PER_PERIOD}")
    if n != expected:
        raise InvalidWindowError(f"window has {n} samples, one period is {expected}")


def project(trace, omega, m, sample_rate, start=0):
    """Fourier coefficients of a one-period window.

    Trapezoidal quadrature on the periodic grid (all weights equal). ``start``
    is the index of the first sample on the absolute sample grid ``t = n/fs``,
    which fixes the phase reference.
    """
    x = np.asarray(trace, dtype=float)
    _check_window(x.size, omega, sample_rate)
    n = x.size
    mat = _projection_matrix(n, float(omega), int(m), 1.0 / sample_rate, int(start) % n)
    return FourierVector(omega, mat @ x)


def recursive_update(fv, window, sample_rate, start=0):
    """One pass of the recursive coefficient estimator over the last period.

    Each pair is moved by ``(omega/pi) * integral([cos, sin] * residual)``
    where the residual removes that pair's current estimate; the DC term uses
    the same gain on ``x - A0/2``. One pass is exact for band-limited windows.
    """
    x = np.asarray(window, dtype=float)
    _check_window(x.size, fv.omega, sample_rate)
    n = x.size
    mat = _projection_matrix(n, fv.omega, fv.m, 1.0 / sample_rate, int(start) % n)
    c = fv.coeffs.copy()
    # the quadrature of cos*cos over the period is n/2 samples; mat carries the 2/n
    dc_model = np.full(n, 0.5 * c[0])
    c[0] += mat[0] @ (x - dc_model)
    for j in range(1, fv.m + 1):
        cos_row, sin_row = mat[2 * j - 1], mat[2 * j]
        # basis values recovered from the scaled projection rows
        own = (c[2 * j - 1] * cos_row + c[2 * j] * sin_row) * (n / 2.0)
        resid = x - own
        c[2 * j - 1] += cos_row @ resid
        c[2 * j] += sin_row @ resid
    return FourierVector(fv.omega, c)


@dataclass(frozen=True)
class Measures:
    """Forcing amplitude, response amplitude and invasiveness of one settled period."""

    F: float
    R: float
    e_rms: float
    e_rel: float


def measures(u_trace, x_fv, u_fv, sample_rate, start=0):
    """``F[u]``, ``R[x]`` and the RMS of the non-fundamental part of ``u``.

    Raises
    ------
    InvasivenessUndefinedError
        If the fundamental forcing amplitude is exactly zero.
    """
    u = np.asarray(u_trace, dtype=float)
    _check_window(u.size, u_fv.omega, sample_rate)
    F = u_fv.amplitude
    R = x_fv.amplitude
    if F == 0.0:
        raise InvasivenessUndefinedError("forcing amplitude is zero")
    n = u.size
    k = (int(start) % n + np.arange(n)) % n
    wt = u_fv.omega * k / sample_rate
    a, b = u_fv.fundamental
    e = u - a * np.cos(wt) - b * np.sin(wt)
    e_rms = float(np.sqrt(np.mean(e * e)))
    return Measures(F=F, R=R, e_rms=e_rms, e_rel=100.0 * e_rms / F)


def is_stationary(history: Sequence[FourierVector], tol, count=5):
    """True if the last ``count`` snapshots agree pairwise to ``tol`` in max-norm."""
    if len(history) < count:
        return False
    block = np.array([fv.coeffs for fv in history[-count:]])
    spread = block.max(axis=0) - block.min(axis=0)
    return bool(np.max(spread) < tol)


def nonharmonic_part(fv):
    """``[A0, A2, B2, ..., Am, Bm]``: everything except the fundamental pair."""
    return np.concatenate([fv.coeffs[:1], fv.coeffs[3:]])


def with_nonharmonic(fv, reduced):
    """Inverse of :func:`nonharmonic_part`, keeping the fundamental of ``fv``."""
    reduced = np.asarray(reduced, dtype=float)
    if reduced.size != fv.coeffs.size - 2:
        raise ValueError(f"expected {fv.coeffs.size - 2} non-fundamental coefficients, got {reduced.size}")
    c = fv.coeffs.copy()
    c[0] = reduced[0]
    c[3:] = reduced[1:]
    return FourierVector(fv.omega, c)
