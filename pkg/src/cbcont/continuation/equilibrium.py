"""Tracking equilibria through folds with proportional feedback on the parameter.

The feedback ``p + u(t) = p~ + k (x~ - x(t))`` confines the experiment to a
line through the predicted point; wherever that line crosses the branch the
controlled equilibrium is also an equilibrium of the free system.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from ..plant import PlantFault
from .points import DegenerateSecantError, EqPoint, EquilibriumBranch

logger = logging.getLogger(__name__)


@dataclass
class EqStepControl:
    h: float = 1.0
    h_min: float = 1.0 / 16.0
    h_max: float = 1.0
    shrink: float = 0.5
    grow: float = 1.5
    max_points: int = 200
    p_bounds: tuple = (-math.inf, math.inf)
    x_bounds: tuple = (-math.inf, math.inf)
    authority_tol: float = 1e-3

    def __post_init__(self):
        if not 0.0 < self.h_min <= self.h <= self.h_max:
            raise ValueError("need 0 < h_min <= h <= h_max")


class NotSettledError(RuntimeError):
    pass


def secant_predict_eq(pA: EqPoint, pB: EqPoint, h):
    """``pB + h (pB - pA)``."""
    if pA.p == pB.p and pA.x == pB.x:
        raise DegenerateSecantError("secant through coincident points")
    return EqPoint(pB.p + h * (pB.p - pA.p), pB.x + h * (pB.x - pA.x))


def settle_controlled(plant, k, p_tilde, x_tilde, rate_tol=1e-8, max_time=200.0, hold=20):
    """Run with ``p + u = p~ + k (x~ - x)`` until ``|dx/dt|`` stays below ``rate_tol``.

    Returns the settled output. ``hold`` consecutive samples must satisfy the
    rate test. Leaving ``divergence_bound`` aborts the settle.
    """
    dt = plant.dt
    steps = int(max_time / dt)
    bound = plant.config.divergence_bound
    x = plant.output()
    quiet = 0
    for _ in range(steps):
        x_new = plant.step(p_tilde + k * (x_tilde - x))
        if abs(x_new) > bound:
            raise NotSettledError(f"output left the divergence bound ({x_new:.3g}) at t={plant.t:.3f}")
        if abs(x_new - x) / dt < rate_tol:
            quiet += 1
            if quiet >= hold:
                return x_new
        else:
            quiet = 0
        x = x_new
    raise NotSettledError(f"no equilibrium within {max_time} s (|dx/dt| = {abs(x_new - x) / dt:.3g})")


def correct_equilibrium(plant, k, prediction: EqPoint, **settle_kw):
    """Settle on the control line through ``prediction`` and return the equilibrium found."""
    x_asy = settle_controlled(plant, k, prediction.p, prediction.x, **settle_kw)
    return EqPoint(prediction.p + k * (prediction.x - x_asy), x_asy)


def _authority(k, a: EqPoint, b: EqPoint):
    # k |dx| / |dp|: vanishes on branches where x does not depend on p
    dp = abs(b.p - a.p)
    dx = abs(b.x - a.x)
    if dp == 0.0:
        return math.inf
    return k * dx / dp


def track_equilibrium_branch(plant, k, seeds, step: EqStepControl | None = None, **settle_kw):
    """Trace a branch of equilibria from two seed points.

    Steps whose settle fails are retried with a smaller ``h`` from the plant
    state of the last accepted point. A secant along
    which the settled output does not move with the parameter means the
    feedback has lost authority (horizontal branch, transcritical point); the
    tracker rejects such steps and stops with ``status == "degenerate"``
    rather than emitting points it cannot verify.
    """
    if k <= 0:
        raise ValueError("gain k must be positive")
    step = step or EqStepControl()
    branch = EquilibriumBranch(points=list(seeds))
    if len(branch.points) != 2:
        raise ValueError("need exactly two seed points")
    if _authority(k, *branch.points) < step.authority_tol:
        branch.status = "degenerate"
        branch.diagnostic = ("seed secant is horizontal: output does not depend on the parameter, "
                             "feedback through the parameter has no authority")
        logger.warning(branch.diagnostic)
        return branch
    h = step.h
    streak = 0
    while len(branch.points) < step.max_points:
        prev, cur = branch.points[-2], branch.points[-1]
        pred = secant_predict_eq(prev, cur, h)
        state = plant.snapshot()
        try:
            new = correct_equilibrium(plant, k, pred, **settle_kw)
            failure = None
            if _authority(k, cur, new) < step.authority_tol:
                failure = ("settled output independent of the parameter along the step: "
                           "feedback has no authority (horizontal branch)")
        except (NotSettledError, PlantFault) as exc:
            failure = str(exc)
        if failure:
            # a rejected step must not leave the experiment in a diverged state
            plant.restore(state)
            h *= step.shrink
            streak = 0
            logger.info("step rejected (%s); h -> %g", failure, h)
            if h < step.h_min:
                branch.status = "degenerate" if "authority" in failure else "failed"
                branch.diagnostic = failure
                logger.warning("equilibrium tracking stopped: %s", failure)
                return branch
            continue
        if not (step.p_bounds[0] <= new.p <= step.p_bounds[1]
                and step.x_bounds[0] <= new.x <= step.x_bounds[1]):
            branch.status = "bound"
            return branch
        branch.points.append(new)
        streak += 1
        if streak >= 2 and h < step.h_max:
            h = min(h * step.grow, step.h_max)
            streak = 0
    branch.status = "max_points"
    return branch
