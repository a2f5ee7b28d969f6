"""Periodic-orbit continuation: secant prediction plus fixed-point correction.

The fundamental of the reference is frozen during correction and acts as the
continuation parameter through the control gains; only the non-fundamental
reference coefficients are iterated until the output reproduces them, at
which point the control input is a pure harmonic forcing.
"""
from __future__ import annotations

import logging
import math
from dataclasses import replace

import numpy as np

from ..control import ControlLoop, SettleTimeout
from ..plant import PlantFault
from ..signal import FourierVector, measures, nonharmonic_part, project, with_nonharmonic
from .points import Branch, BranchPoint, CorrectorFailure, StepControl

logger = logging.getLogger(__name__)


def update_fundamental_forcing(astar, bstar, A1star, B1star, A1, B1, gains, omega):
    """Fundamental forcing ``(a, b)`` produced by an ideal PD law around ``(a*, b*)``."""
    a = astar + gains.kp * (A1star - A1) + omega * gains.kd * (B1star - B1)
    b = bstar + gains.kp * (B1star - B1) + omega * gains.kd * (A1 - A1star)
    return a, b


def _accept(loop, res, xstar, pstar, iterations, cycles, invasive_tol):
    U = res.U
    a, b = U.fundamental
    meas = measures(res.u_trace, res.X, U, loop.plant.sample_rate, res.start)
    residual = nonharmonic_part(U)
    limit = invasive_tol * max(meas.F, loop.settings.forcing_floor)
    if np.sqrt(np.sum(residual**2)) > limit:
        raise CorrectorFailure(
            f"control input not harmonic after convergence: non-fundamental RMS "
            f"{np.sqrt(np.sum(residual**2)):.3g} > {limit:.3g}")
    return BranchPoint(omega=loop.omega, a=a, b=b, X=res.X, U=U, measures=meas,
                       settle_cycles=cycles, iterations=iterations, xstar=xstar,
                       pstar=pstar, plant_state=res.plant_state)


def correct_fixed_point(loop: ControlLoop, prediction: FourierVector, tol=1e-3, max_iter=8,
                        relax=1.0, pstar=None, invasive_tol=0.05, min_iter=1):
    """Picard iteration on the non-fundamental reference coefficients.

    Each pass runs the loop to stationarity and compares reference and output
    over every coefficient except the fundamental pair. Converged when that
    root-sum-square difference is below ``tol * max(R, amplitude_floor)``;
    otherwise the reference moves a fraction ``relax`` of the way to the
    output. At least ``min_iter`` updates are made before convergence is
    tested, so predictions that carry no higher harmonics (seeds, points
    near the linear regime) still pick up the plant's own. On acceptance the
    forcing ``(a, b)`` is read off the measured input and its non-fundamental
    part must be below ``invasive_tol * F``.

    Raises
    ------
    CorrectorFailure
        ``max_iter`` updates without convergence, or residual invasiveness.
    SettleTimeout, PlantFault
        Propagated from the loop.
    """
    if not 0.0 < relax <= 1.0:
        raise ValueError("relax must lie in (0, 1]")
    if not 0 <= min_iter <= max_iter:
        raise ValueError("need 0 <= min_iter <= max_iter")
    xs = FourierVector(loop.omega, prediction.coeffs)
    c0 = loop.settle_cycles
    floor = loop.settings.amplitude_floor
    for it in range(max_iter + 1):
        res = loop.run_until_settled(xs, pstar)
        want = nonharmonic_part(res.X)
        have = nonharmonic_part(xs)
        err = math.sqrt(float(np.sum((have - want) ** 2)))
        if it >= min_iter and err < tol * max(res.X.amplitude, floor):
            return _accept(loop, res, xs, pstar or (0.0, 0.0), it, loop.settle_cycles - c0,
                           invasive_tol)
        if it == max_iter:
            break
        xs = with_nonharmonic(xs, (1.0 - relax) * have + relax * want)
    raise CorrectorFailure(f"fixed-point iteration not converged after {max_iter} updates "
                           f"(residual {err:.3g})")


def seed_points(loop, amplitudes, **corrector_kw):
    """Corrected points for small harmonic references of the given amplitudes."""
    return [correct_fixed_point(loop, FourierVector.harmonic(loop.omega, r, 0.0, loop.m), **corrector_kw)
            for r in amplitudes]


def canonical_phase(fv: FourierVector):
    """``fv`` shifted in time so its fundamental is a pure cosine.

    Orbits of the harmonically forced system come in families related by a
    time shift; predicting in this frame keeps the secant from drifting
    along that family.
    """
    if fv.amplitude == 0.0:
        return fv
    return fv.shifted(-math.atan2(fv.coeffs[2], fv.coeffs[1]))


def _reference(point):
    return point.xstar if point.xstar is not None else point.X


def _monitor(pred, pstar):
    a, b = pstar if pstar is not None else (0.0, 0.0)
    A1, B1 = pred.fundamental
    return math.sqrt(a * a + b * b + A1 * A1 + B1 * B1)


def track_branch(loop: ControlLoop, seed_amplitudes=(0.02, 0.024), step: StepControl | None = None,
                 seeds=None, classify_plant=None, **corrector_kw):
    """Trace the branch of periodic orbits at the loop's frequency.

    Predictions extrapolate the accepted references along the secant of the
    last two points, both taken in the frame of :func:`canonical_phase`. At
    an accepted point the reference equals the output in every
    non-fundamental coefficient; its fundamental is the continuation
    parameter. ``h`` halves on corrector failure and grows by
    ``step.grow`` after two consecutive points accepted with at most one
    update; the step length is capped by ``step.max_step``. Tracking stops at
    ``max_points``, when the monitored amplitude of the prediction exceeds
    ``max_amplitude``, or once an accepted forcing exceeds ``max_forcing``.

    ``classify_plant``, if given, is a plant used to classify each accepted
    point with :func:`classify_stability` (the running experiment is not
    disturbed).
    """
    step = step or StepControl()
    branch = Branch(omega=loop.omega)
    try:
        pts = list(seeds) if seeds is not None else seed_points(loop, seed_amplitudes, **corrector_kw)
    except (CorrectorFailure, SettleTimeout, PlantFault) as exc:
        branch.status = "failed"
        branch.diagnostic = f"seeding failed: {exc}"
        return branch
    for p in pts:
        branch.points.append(_classified(p, classify_plant))
    branch.n_seeds = len(pts)
    h = step.h
    streak = 0
    while len(branch.points) < step.max_points:
        prev, cur = (canonical_phase(_reference(p)) for p in branch.points[-2:])
        sec = cur.coeffs - prev.coeffs
        length = float(np.linalg.norm(sec))
        if length == 0.0:
            branch.status = "failed"
            branch.diagnostic = "degenerate secant: last two points coincide"
            return branch
        h_eff = min(h, step.max_step / length)
        pred = FourierVector(loop.omega, cur.coeffs + h_eff * sec)
        if _monitor(pred, corrector_kw.get("pstar")) > step.max_amplitude:
            branch.status = "bound"
            return branch
        try:
            new = correct_fixed_point(loop, pred, **corrector_kw)
        except (CorrectorFailure, SettleTimeout) as exc:
            h *= step.shrink
            streak = 0
            logger.info("omega=%.4f: corrector failed (%s); h -> %g", loop.omega, exc, h)
            if h < step.h_min:
                branch.status = "failed"
                branch.diagnostic = f"corrector failed at h_min after {len(branch.points)} points: {exc}"
                return branch
            continue
        except PlantFault as exc:
            branch.status = "failed"
            branch.diagnostic = f"plant fault: {exc}"
            return branch
        branch.points.append(_classified(new, classify_plant))
        if new.F > step.max_forcing:
            branch.status = "bound"
            return branch
        streak = streak + 1 if new.iterations <= 1 else 0
        if streak >= 2:
            h = min(h * step.grow, step.h_max)
            streak = 0
    branch.status = "max_points"
    return branch


def _classified(point, plant):
    if plant is None:
        return point
    return replace(point, stable=classify_stability(plant, point))


def period_amplitudes(trace, omega, sample_rate, start, m=1):
    """Fundamental amplitude of each whole period in ``trace``."""
    n = int(round(sample_rate * 2 * math.pi / omega))
    out = []
    for k in range(len(trace) // n):
        fv = project(trace[k * n:(k + 1) * n], omega, m, sample_rate, start + k * n)
        out.append(fv.amplitude)
    return np.array(out)


def classify_stability(plant, point: BranchPoint, periods=30, perturbation=1e-3, threshold=0.05):
    """Replay the orbit without control and watch whether it stays.

    A copy of ``plant`` is put into the accepted state, the displacement is
    nudged by ``perturbation * R`` and the frozen harmonic forcing ``(a, b)``
    applied for ``periods`` periods. Stable means every period's fundamental
    amplitude stays within ``threshold`` of ``R``; divergence counts as
    unstable.
    """
    if point.plant_state is None:
        raise ValueError("branch point carries no plant state")
    sim = plant.clone()
    state = list(point.plant_state.state)
    state[0] += perturbation * point.R
    sim.restore(type(point.plant_state)(tuple(state), point.plant_state.t))
    start = sim.n
    T = 2 * math.pi / point.omega
    run = sim.run_uncontrolled((point.a, point.b, point.omega), periods * T)
    if run.diverged:
        return False
    amps = period_amplitudes(run.x, point.omega, sim.sample_rate, start)
    if point.R == 0.0:
        return bool(np.all(amps < threshold))
    return bool(np.all(np.abs(amps - point.R) <= threshold * point.R))
