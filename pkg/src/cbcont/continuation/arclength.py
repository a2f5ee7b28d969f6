"""Newton pseudo-arclength corrector, the baseline the fixed-point scheme is compared with.

Unknowns are the feed-forward amplitude ``a*`` (phase fixed by ``b* = 0``)
and the full reference ``X*``. The equations are ``X* = X(a*, X*)`` for every
coefficient plus orthogonality of the correction to the secant. Every
residual evaluation is one settle of the experiment and the Jacobian is
built from forward differences, one settle per column.
"""
from __future__ import annotations

import logging
import math

import numpy as np

from ..control import ControlLoop, SettleTimeout
from ..plant import PlantFault
from ..signal import FourierVector, measures
from .points import Branch, BranchPoint, CorrectorFailure, StepControl

logger = logging.getLogger(__name__)


def to_forcing_frame(point: BranchPoint):
    """Coordinates ``[a*, X*]`` of ``point`` rotated so its forcing is ``F cos(wt)``."""
    phase = math.atan2(point.b, point.a)
    X = point.X.shifted(-phase)
    return np.concatenate([[point.F], X.coeffs])


class _Evaluator:
    def __init__(self, loop: ControlLoop):
        self.loop = loop

    def __call__(self, y):
        xs = FourierVector(self.loop.omega, y[1:])
        res = self.loop.run_until_settled(xs, (y[0], 0.0))
        return res, y[1:] - res.X.coeffs


def correct_pseudo_arclength(loop: ControlLoop, prediction, secant, tol=1e-3, max_iter=8,
                             fd_rel=1e-3, max_halvings=4):
    """Damped Newton solve of the non-invasiveness plus arclength system.

    Parameters
    ----------
    prediction, secant : array
        ``[a*, X*...]`` predicted point and the secant through the last two points.
    tol : float
        Converged when the root-sum-square of ``X* - X`` over all coefficients
        is below ``tol * max(R, amplitude_floor)``.
    fd_rel : float
        Forward-difference step relative to ``max(|y_i|, R)``.
    """
    ev = _Evaluator(loop)
    y_pred = np.asarray(prediction, float)
    s = np.asarray(secant, float)
    s = s / np.linalg.norm(s)
    floor = loop.settings.amplitude_floor
    c0 = loop.settle_cycles
    y = y_pred.copy()
    res, r = ev(y)
    for it in range(max_iter + 1):
        scale = max(res.X.amplitude, floor)
        if math.sqrt(float(r @ r)) < tol * scale:
            pt = _point(loop, res, y, it, loop.settle_cycles - c0)
            return pt
        if it == max_iter:
            break
        J = np.empty((y.size, y.size))
        for i in range(y.size):
            d = fd_rel * max(abs(y[i]), scale)
            yp = y.copy()
            yp[i] += d
            _, rp = ev(yp)
            J[:-1, i] = (rp - r) / d
        J[-1, :] = s
        full = np.concatenate([r, [(y - y_pred) @ s]])
        dy = np.linalg.solve(J, -full)
        lam = 1.0
        norm0 = math.sqrt(float(r @ r))
        for _ in range(max_halvings + 1):
            y_try = y + lam * dy
            res_try, r_try = ev(y_try)
            if math.sqrt(float(r_try @ r_try)) < norm0 or lam < 2.0**-max_halvings:
                break
            lam *= 0.5
        y, res, r = y_try, res_try, r_try
    raise CorrectorFailure(f"Newton not converged after {max_iter} iterations "
                           f"(residual {math.sqrt(float(r @ r)):.3g})")


def _point(loop, res, y, iterations, cycles):
    a, b = res.U.fundamental
    meas = measures(res.u_trace, res.X, res.U, loop.plant.sample_rate, res.start)
    return BranchPoint(omega=loop.omega, a=a, b=b, X=res.X, U=res.U, measures=meas,
                       settle_cycles=cycles, iterations=iterations,
                       xstar=FourierVector(loop.omega, y[1:]), pstar=(float(y[0]), 0.0),
                       plant_state=res.plant_state)


def track_branch_arclength(loop: ControlLoop, seeds, step: StepControl | None = None, **corrector_kw):
    """Branch from two shared seed points using the Newton corrector.

    Seeds (e.g. from :func:`~cbcont.continuation.periodic.seed_points`) are
    rotated into the frame where the forcing is a pure cosine; their settle
    cycles belong to the seeding, not to this tracker. Step adaptation and
    stopping rules are those of :func:`~cbcont.continuation.periodic.track_branch`.
    """
    step = step or StepControl()
    branch = Branch(omega=loop.omega, points=list(seeds), n_seeds=len(seeds))
    ys = [to_forcing_frame(p) for p in seeds]
    h = step.h
    streak = 0
    while len(branch.points) < step.max_points:
        sec = ys[-1] - ys[-2]
        length = float(np.linalg.norm(sec[1:]))
        if length == 0.0:
            branch.status = "failed"
            branch.diagnostic = "degenerate secant"
            return branch
        h_eff = min(h, step.max_step / length)
        pred = ys[-1] + h_eff * sec
        if math.sqrt(pred[0] ** 2 + pred[1] ** 2 + pred[2] ** 2) > step.max_amplitude:
            branch.status = "bound"
            return branch
        try:
            new = correct_pseudo_arclength(loop, pred, sec, **corrector_kw)
        except (CorrectorFailure, SettleTimeout) as exc:
            h *= step.shrink
            streak = 0
            logger.info("omega=%.4f: Newton corrector failed (%s); h -> %g", loop.omega, exc, h)
            if h < step.h_min:
                branch.status = "failed"
                branch.diagnostic = f"Newton corrector failed at h_min: {exc}"
                return branch
            continue
        except PlantFault as exc:
            branch.status = "failed"
            branch.diagnostic = f"plant fault: {exc}"
            return branch
        branch.points.append(new)
        ys.append(np.concatenate([[new.pstar[0]], new.xstar.coeffs]))
        if new.F > step.max_forcing:
            branch.status = "bound"
            return branch
        streak = streak + 1 if new.iterations <= 1 else 0
        if streak >= 2:
            h = min(h * step.grow, step.h_max)
            streak = 0
    branch.status = "max_points"
    return branch


def _point_to_polyline(P, Q):
    # distance from each row of P to the polyline through the rows of Q
    if len(Q) == 1:
        return np.linalg.norm(P - Q[0], axis=1)
    A, B = Q[:-1], Q[1:]
    d = B - A
    L2 = np.maximum(np.sum(d * d, axis=1), 1e-300)
    t = np.clip(np.einsum("pk,sk->ps", P, d) - np.sum(A * d, axis=1), 0.0, None) / L2
    t = np.minimum(t, 1.0)
    proj = A[None, :, :] + t[:, :, None] * d[None, :, :]
    return np.min(np.linalg.norm(P[:, None, :] - proj, axis=2), axis=1)


def branch_distance(branch_a, branch_b, overlap=True):
    """Symmetric Hausdorff distance between two branches as curves in ``(F, R)``.

    Both axes are scaled by their range over the two branches, so the result
    is a fraction of the amplitude range. Each point is measured against the
    other branch's polyline, not its samples, so differing step sizes do not
    count as disagreement. With ``overlap`` only the common ``R`` range is
    compared.
    """
    A = np.column_stack([branch_a.F, branch_a.R])
    B = np.column_stack([branch_b.F, branch_b.R])
    if not len(A) or not len(B):
        return math.inf
    both = np.vstack([A, B])
    scale = np.where(np.ptp(both, axis=0) > 0, np.ptp(both, axis=0), 1.0)
    A, B = A / scale, B / scale
    pa, pb = A, B
    if overlap:
        top = min(A[:, 1].max(), B[:, 1].max())
        bot = max(A[:, 1].min(), B[:, 1].min())
        pa = A[(A[:, 1] <= top) & (A[:, 1] >= bot)]
        pb = B[(B[:, 1] <= top) & (B[:, 1] >= bot)]
    # points in the common range against the other branch's full polyline
    da = _point_to_polyline(pa, B).max() if len(pa) else 0.0
    db = _point_to_polyline(pb, A).max() if len(pb) else 0.0
    return float(max(da, db))
