"""Resonance surface: branches over a frequency grid, Wendland interpolation, folds and cusp.

The surface is ``F(omega, R)``: for a hardening oscillator the forcing is a
single-valued function of frequency and response amplitude, while ``R`` over
``(omega, F)`` is not.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import MatrixRankWarning, spsolve
from scipy.spatial import Delaunay, QhullError, cKDTree
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .continuation import Branch, StepControl, detect_folds, track_branch
from .control import ControlLoop, FilterSpec, LoopSettings, PDGains
from .plant import PlantConfig, make_plant

logger = logging.getLogger(__name__)


class RBFConditioningError(np.linalg.LinAlgError):
    """Interpolation system singular or numerically unusable."""


class InsufficientDataError(ValueError):
    pass


def wendland_c2(r):
    """``(1 - r)^4_+ (4 r + 1)``: positive definite in up to three dimensions."""
    r = np.asarray(r, dtype=float)
    q = np.clip(1.0 - r, 0.0, None)
    return q**4 * (4.0 * r + 1.0)


def _wendland_c2_grad_factor(r):
    # d/dr phi(r) / r = -20 (1 - r)^3, smooth through r = 0
    q = np.clip(1.0 - np.asarray(r, dtype=float), 0.0, None)
    return -20.0 * q**3


class WendlandInterpolator(RegressorMixin, BaseEstimator):
    """Compactly supported RBF interpolant with a linear polynomial tail.

    Sites are mapped to the unit box before the kernel is applied. The
    interpolation system is sparse and symmetric; it is solved directly.

    Parameters
    ----------
    rho : float or None
        Support radius in normalized coordinates. ``None`` picks
        ``rho_factor`` times the median nearest-neighbour spacing, raised if
        necessary to exceed the largest nearest-neighbour spacing.
    rho_factor : float
    polynomial_tail : bool
        Append ``1, s1, s2`` with the usual orthogonality side conditions, so
        constants and planes are reproduced exactly.
    merge_tol : float
        Sites closer than this (normalized) are merged and their values averaged.
    """

    def __init__(self, rho=None, rho_factor=4.0, polynomial_tail=True, merge_tol=1e-9):
        self.rho = rho
        self.rho_factor = rho_factor
        self.polynomial_tail = polynomial_tail
        self.merge_tol = merge_tol

    def _normalize(self, X):
        return (X - self.offset_) / self.scale_

    def _merge(self, S, y):
        tree = cKDTree(S)
        pairs = tree.query_pairs(self.merge_tol, output_type="ndarray")
        if not len(pairs):
            return S, y
        n = S.shape[0]
        g = sp.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        k, labels = connected_components(g, directed=False)
        counts = np.bincount(labels, minlength=k)
        S_m = np.zeros((k, S.shape[1]))
        np.add.at(S_m, labels, S)
        y_m = np.bincount(labels, weights=y, minlength=k)
        logger.info("merged %d duplicate sites", n - k)
        return S_m / counts[:, None], y_m / counts

    def _tail(self, S):
        return np.hstack([np.ones((S.shape[0], 1)), S])

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if X.shape[1] != 2:
            raise ValueError(f"expected 2 features (omega, R), got {X.shape[1]}")
        self.n_features_in_ = 2
        lo, hi = X.min(axis=0), X.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        self.offset_, self.scale_ = lo, span
        S, y = self._merge(self._normalize(X), y)
        n = S.shape[0]
        tree = cKDTree(S)
        nn = tree.query(S, k=2)[0][:, 1] if n > 1 else np.array([1.0])
        if self.rho is None:
            rho = max(self.rho_factor * float(np.median(nn)), 1.5 * float(nn.max()))
        else:
            rho = float(self.rho)
            if not rho > 0:
                raise ValueError("rho must be positive")
        self.rho_ = rho
        pairs = tree.query_pairs(rho, output_type="ndarray")
        i, j = (pairs[:, 0], pairs[:, 1]) if len(pairs) else (np.zeros(0, int), np.zeros(0, int))
        r = np.linalg.norm(S[i] - S[j], axis=1) / rho
        v = wendland_c2(r)
        rows = np.concatenate([i, j, np.arange(n)])
        cols = np.concatenate([j, i, np.arange(n)])
        vals = np.concatenate([v, v, np.ones(n)])
        A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n))
        if self.polynomial_tail:
            P = sp.csr_matrix(self._tail(S))
            M = sp.bmat([[A, P], [P.T, None]], format="csc")
            rhs = np.concatenate([y, np.zeros(P.shape[1])])
        else:
            M = A.tocsc()
            rhs = y
        with warnings.catch_warnings():
            warnings.simplefilter("error", MatrixRankWarning)
            try:
                sol = spsolve(M, rhs)
            except (MatrixRankWarning, RuntimeError) as exc:
                raise RBFConditioningError(
                    f"interpolation system is singular ({exc}); try a larger rho than {rho:.4g}") from exc
        if not np.all(np.isfinite(sol)):
            raise RBFConditioningError(f"interpolation system is singular; try a larger rho than {rho:.4g}")
        self.system_ = M
        self.centers_ = S
        self.values_ = y
        self.weights_ = sol[:n]
        self.poly_ = sol[n:] if self.polynomial_tail else np.zeros(0)
        self._tree = tree
        try:
            self._hull = Delaunay(S) if n >= 3 else None
        except QhullError:
            self._hull = None
        resid = np.max(np.abs(self._eval_normalized(S) - y)) if n else 0.0
        if resid > 1e-8 * max(np.max(np.abs(y)), 1e-300):
            raise RBFConditioningError(
                f"interpolation residual {resid:.3g} at the centres; try a larger rho than {rho:.4g}")
        return self

    def _neighbours(self, S):
        lists = self._tree.query_ball_point(S, self.rho_)
        q = np.repeat(np.arange(S.shape[0]), [len(l) for l in lists])
        c = np.fromiter((k for l in lists for k in l), dtype=int, count=q.size)
        return q, c

    def _eval_normalized(self, S):
        q, c = self._neighbours(S)
        r = np.linalg.norm(S[q] - self.centers_[c], axis=1) / self.rho_
        out = np.bincount(q, weights=wendland_c2(r) * self.weights_[c], minlength=S.shape[0])
        if self.polynomial_tail:
            out = out + self._tail(S) @ self.poly_
        return out

    def predict(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X, dtype=float)
        if X.shape[1] != 2:
            raise ValueError(f"expected 2 features, got {X.shape[1]}")
        return self._eval_normalized(self._normalize(X))

    def gradient(self, X):
        """``(dF/domega, dF/dR)`` at each row of ``X``, in data units."""
        check_is_fitted(self, "weights_")
        X = check_array(X, dtype=float)
        S = self._normalize(X)
        q, c = self._neighbours(S)
        d = S[q] - self.centers_[c]
        r = np.linalg.norm(d, axis=1) / self.rho_
        w = _wendland_c2_grad_factor(r) * self.weights_[c] / self.rho_**2
        g = np.zeros_like(S)
        for k in range(2):
            g[:, k] = np.bincount(q, weights=w * d[:, k], minlength=S.shape[0])
        if self.polynomial_tail:
            g += self.poly_[1:]
        return g / self.scale_

    def in_hull(self, X):
        """True where ``X`` lies inside the convex hull of the sites."""
        check_is_fitted(self, "weights_")
        S = self._normalize(check_array(X, dtype=float))
        if self._hull is None:
            return np.zeros(S.shape[0], dtype=bool)
        return self._hull.find_simplex(S, tol=1e-12) >= 0

    def loo_residuals(self):
        """Leave-one-out errors at every centre by Rippa's formula ``w_k / (M^-1)_kk``."""
        check_is_fitted(self, "weights_")
        Minv_diag = np.diag(np.linalg.inv(self.system_.toarray()))[: self.weights_.size]
        return self.weights_ / Minv_diag


@dataclass
class SurfaceData:
    """Accepted points of all branches of a frequency sweep.

    ``anchor`` marks the zero-amplitude sites ``(omega, R=0, F=0)`` added once
    per frequency: the zero solution belongs to every forced-response branch
    and pins the surface where continuation cannot start.
    """

    omega: np.ndarray
    F: np.ndarray
    R: np.ndarray
    e_rel: np.ndarray
    stable: np.ndarray
    anchor: np.ndarray
    branches: list = field(default_factory=list)

    def __post_init__(self):
        if np.unique(self.omega).size < 2:
            raise ValueError("surface data needs at least two distinct frequencies")

    @classmethod
    def from_branches(cls, branches, anchors=True):
        rows = []
        for br in sorted(branches, key=lambda b: b.omega):
            if anchors:
                rows.append((br.omega, 0.0, 0.0, np.nan, 1.0, True))
            for p in br.points:
                st = np.nan if p.stable is None else float(p.stable)
                rows.append((br.omega, p.F, p.R, p.measures.e_rel, st, False))
        if not rows:
            raise ValueError("no branch points")
        a = np.array(rows, dtype=float)
        return cls(omega=a[:, 0], F=a[:, 1], R=a[:, 2], e_rel=a[:, 3], stable=a[:, 4],
                   anchor=a[:, 5].astype(bool), branches=sorted(branches, key=lambda b: b.omega))

    @property
    def frequencies(self):
        return np.unique(self.omega)

    @property
    def ranges(self):
        """Normalization ranges ``((omega_min, omega_max), (R_min, R_max))``."""
        return (float(self.omega.min()), float(self.omega.max())), (float(self.R.min()), float(self.R.max()))

    @property
    def sites(self):
        return np.column_stack([self.omega, self.R])


def build_interpolant(data: SurfaceData, rho=None, rho_factor=4.0):
    return WendlandInterpolator(rho=rho, rho_factor=rho_factor).fit(data.sites, data.F)


def eval_surface(model: WendlandInterpolator, omega, R):
    """``(F, extrapolated)`` at the given points; ``extrapolated`` flags out-of-hull queries."""
    omega, R = np.broadcast_arrays(np.asarray(omega, float), np.asarray(R, float))
    X = np.column_stack([omega.ravel(), R.ravel()])
    F = model.predict(X).reshape(omega.shape)
    outside = ~model.in_hull(X).reshape(omega.shape)
    if np.any(outside):
        logger.debug("%d surface queries outside the data hull", int(outside.sum()))
    if F.ndim == 0:
        return float(F), bool(outside)
    return F, outside


@dataclass
class FoldCurve:
    """Fold points ``(omega, F, R)`` split by the order met along each branch.

    ``lower`` holds the first fold of each branch (smaller ``R``, larger ``F``),
    ``upper`` the second; both ascend in ``omega``.
    """

    lower: np.ndarray
    upper: np.ndarray

    def as_array(self):
        """One curve: lower fold up in frequency, then upper fold back down."""
        return np.vstack([self.lower, self.upper[::-1]]) if self.upper.size else self.lower

    def pairs(self):
        """Frequencies carrying both folds, as ``(omega, lower_row, upper_row)``."""
        up = {round(float(r[0]), 9): r for r in self.upper}
        return [(float(r[0]), r, up[round(float(r[0]), 9)]) for r in self.lower
                if round(float(r[0]), 9) in up]


def _refine_fold(model, omega, R0, dR):
    def dFdR(R):
        return float(model.gradient([[omega, R]])[0, 1])

    lo, hi = max(R0 - dR, 0.0), R0 + dR
    try:
        flo, fhi = dFdR(lo), dFdR(hi)
    except ValueError:
        return None
    if flo * fhi > 0:
        return None
    R = brentq(dFdR, lo, hi, xtol=1e-12)
    return R, float(model.predict([[omega, R]])[0])


def extract_fold_curve(data: SurfaceData, model: WendlandInterpolator):
    """Fold curve from per-branch fold detection refined on the interpolant.

    Each detected fold is moved to the root of ``dF/dR`` along its
    constant-frequency slice, searched within the local point spacing; if the
    interpolant shows no sign change there the branch estimate is kept.
    """
    lower, upper = [], []
    for br in data.branches:
        folds = detect_folds(br)
        if not folds:
            continue
        R = br.R
        spacing = float(np.median(np.abs(np.diff(R)))) if len(R) > 1 else 0.05
        rows = []
        for f in folds[:2]:
            ref = _refine_fold(model, br.omega, f.R, 1.5 * spacing)
            Rf, Ff = ref if ref is not None else (f.R, f.F)
            rows.append((br.omega, Ff, Rf))
        if len(folds) > 2:
            logger.warning("omega=%.4f: %d folds detected, keeping the first two", br.omega, len(folds))
        lower.append(rows[0])
        if len(rows) > 1:
            upper.append(rows[1])
    return FoldCurve(np.array(lower).reshape(-1, 3), np.array(upper).reshape(-1, 3))


def locate_cusp(fold_curve: FoldCurve, n_fit=4):
    """``(omega_c, F_c, R_c)`` where the two fold branches merge.

    Near a cusp the squared ``R``-separation of the two folds vanishes
    linearly in frequency. It is fitted over the ``n_fit`` pairs closest to
    the merge point (quadratic if at least four, else linear) and its root
    nearest to them is the cusp frequency; ``F_c`` and ``R_c`` come from the
    same fit of the pair means.

    Raises
    ------
    InsufficientDataError
        Fewer than three frequencies carry both folds.
    """
    pairs = fold_curve.pairs()
    if len(pairs) < 3:
        raise InsufficientDataError(f"need at least 3 fold pairs to locate a cusp, got {len(pairs)}")
    w = np.array([p[0] for p in pairs])
    sep2 = np.array([(p[2][2] - p[1][2]) ** 2 for p in pairs])
    Fm = np.array([0.5 * (p[1][1] + p[2][1]) for p in pairs])
    Rm = np.array([0.5 * (p[1][2] + p[2][2]) for p in pairs])
    idx = np.argsort(sep2)[: max(3, min(n_fit, len(pairs)))]
    idx = np.sort(idx)
    deg = 2 if idx.size >= 4 else 1
    c = np.polyfit(w[idx], sep2[idx], deg)
    roots = np.roots(c)
    roots = roots[np.isreal(roots)].real
    w_near = w[idx][np.argmin(sep2[idx])]
    if roots.size == 0:
        c = np.polyfit(w[idx], sep2[idx], 1)
        roots = np.roots(c).real
    wc = float(roots[np.argmin(np.abs(roots - w_near))])
    Fc = float(np.polyval(np.polyfit(w[idx], Fm[idx], deg), wc))
    Rc = float(np.polyval(np.polyfit(w[idx], Rm[idx], deg), wc))
    return wc, Fc, Rc


@dataclass
class Slice:
    level: float
    points: np.ndarray


def _start_root(model, omega, level, R_lo, R_hi, n=400):
    Rs = np.linspace(R_lo, R_hi, n)
    g = model.predict(np.column_stack([np.full(n, omega), Rs])) - level
    if abs(g[0]) <= 1e-12 * max(abs(level), 1e-300) or g[0] == 0.0:
        return Rs[0]
    k = np.flatnonzero(np.sign(g[:-1]) != np.sign(g[1:]))
    if not k.size:
        return None
    k = k[0]
    return brentq(lambda R: float(model.predict([[omega, R]])[0]) - level, Rs[k], Rs[k + 1], xtol=1e-14)


def constant_amplitude_slices(model: WendlandInterpolator, levels, omega_range=None, ds=0.005,
                              max_steps=5000, newton_iter=8):
    """Contours ``F(omega, R) = level``: the resonance curves of the swept system.

    Each contour starts at the smallest ``R`` root on the low-frequency edge
    and is followed by pseudo-arclength marching in normalized coordinates
    (tangent prediction, Newton correction along the gradient), so segments
    where ``R`` is multi-valued in ``omega`` are traced without special
    cases. Levels outside the data range are skipped with a warning.
    """
    check_is_fitted(model, "weights_")
    off, scale = model.offset_, model.scale_
    w_lo, w_hi = omega_range if omega_range is not None else (off[0], off[0] + scale[0])
    R_lo, R_hi = off[1], off[1] + scale[1]
    F_min, F_max = float(model.values_.min()), float(model.values_.max())
    out = []
    for level in levels:
        level = float(level)
        if not F_min <= level <= F_max:
            warnings.warn(f"level {level:g} outside data range [{F_min:g}, {F_max:g}]; skipped")
            continue
        R0 = _start_root(model, w_lo, level, R_lo, R_hi)
        if R0 is None:
            warnings.warn(f"level {level:g}: no contour on the low-frequency edge; skipped")
            continue
        s = (np.array([w_lo, R0]) - off) / scale
        pts = [s.copy()]
        t_prev = np.array([1.0, 0.0])
        for _ in range(max_steps):
            g = model.gradient([s * scale + off])[0] * scale
            gn = np.linalg.norm(g)
            if gn == 0.0:
                break
            t = np.array([-g[1], g[0]]) / gn
            if t @ t_prev < 0:
                t = -t
            x = s + ds * t
            for _ in range(newton_iter):
                X = x * scale + off
                r = float(model.predict([X])[0]) - level
                gx = model.gradient([X])[0] * scale
                x = x - r * gx / (gx @ gx)
                if abs(r) < 1e-12 * max(abs(level), 1.0):
                    break
            t_prev = t
            s = x
            if s[0] > (w_hi - off[0]) / scale[0] or not -1e-9 <= s[1] <= 1.0 + 1e-9:
                break
            pts.append(s.copy())
        P = np.array(pts) * scale + off
        out.append(Slice(level, P))
    return out


def _branch_job(args):
    (plant_cfg, omega, gains, filter_spec, settings, m, step, seed_amplitudes, corrector_kw,
     classify) = args
    plant = make_plant(plant_cfg)
    loop = ControlLoop(plant, omega, gains, filter_spec, settings, m)
    return track_branch(loop, seed_amplitudes, step, classify_plant=plant if classify else None,
                        **corrector_kw)


def sweep_branches(plant_config: PlantConfig, omegas, gains: PDGains | None = None,
                   filter_spec: FilterSpec | None = None, settings: LoopSettings | None = None, m=7,
                   step: StepControl | None = None, seed_amplitudes=(0.02, 0.024), corrector_kw=None,
                   classify=True, workers=1, seed=None):
    """Trace one branch per frequency, each on its own plant.

    Noise streams are seeded ``seed + index`` (default the plant's
    ``rng_seed``) so results are independent of worker count and completion
    order. Returns branches ordered by frequency.
    """
    base = plant_config.rng_seed if seed is None else int(seed)
    jobs = []
    for i, w in enumerate(omegas):
        cfg = replace(plant_config, rng_seed=base + i)
        jobs.append((cfg, float(w), gains, filter_spec, settings, m, step, tuple(seed_amplitudes),
                     dict(corrector_kw or {}), classify))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            branches = list(pool.map(_branch_job, jobs))
    else:
        branches = [_branch_job(j) for j in jobs]
    return sorted(branches, key=lambda b: b.omega)


def loo_rms(model: WendlandInterpolator):
    """Root-mean-square leave-one-out error."""
    e = model.loo_residuals()
    return float(math.sqrt(np.mean(e * e)))
