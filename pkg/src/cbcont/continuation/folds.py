"""Fold (saddle-node) points on a traced branch."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .points import Branch, EquilibriumBranch


@dataclass(frozen=True)
class Fold:
    omega: float
    F: float
    R: float
    index: int


def _parameter_output(branch):
    if isinstance(branch, EquilibriumBranch):
        return branch.p, branch.x, float("nan")
    if isinstance(branch, Branch):
        return branch.F, branch.R, branch.omega
    p, x = branch
    return np.asarray(p, float), np.asarray(x, float), float("nan")


def fold_extremum(s, F, R):
    """Vertex of the parabola through three ``(s, F)`` samples, with ``R`` interpolated at it."""
    cF = np.polyfit(s, F, 2)
    cR = np.polyfit(s, R, 2)
    if cF[0] == 0.0:
        k = int(np.argmax(np.abs(F - F.mean())))
        return float(F[k]), float(R[k])
    s0 = -cF[1] / (2.0 * cF[0])
    s0 = min(max(s0, s[0]), s[-1])
    return float(np.polyval(cF, s0)), float(np.polyval(cR, s0))


def detect_folds(branch):
    """Folds of a branch as a list of :class:`Fold`.

    ``branch`` is a periodic :class:`Branch` (parameter ``F``, output ``R``),
    an :class:`EquilibriumBranch` (``p``, ``x``) or a pair of arrays. Every
    sign change of the parameter increment marks a fold; it is refined by a
    quadratic in arclength through the three points around the turning point.
    """
    F, R, omega = _parameter_output(branch)
    if F.size < 3:
        return []
    dF = np.diff(F)
    ds = np.hypot(dF, np.diff(R))
    s = np.concatenate([[0.0], np.cumsum(ds)])
    nz = np.flatnonzero(dF != 0.0)
    folds = []
    for i, j in zip(nz[:-1], nz[1:]):
        if np.sign(dF[i]) == np.sign(dF[j]):
            continue
        # turning vertex at j (or the plateau between i+1 and j)
        k = j
        lo = max(k - 1, 0)
        idx = np.arange(lo, lo + 3)
        if idx[-1] >= F.size:
            idx = idx - (idx[-1] - F.size + 1)
        Ff, Rf = fold_extremum(s[idx], F[idx], R[idx])
        folds.append(Fold(omega, Ff, Rf, int(k)))
    return folds
