import math
import warnings

import numpy as np
import pytest
from oracles import hb_cusp, hb_folds, linear_gain
from scipy.spatial import cKDTree
from sklearn.base import clone

from cbcont.surface import (FoldCurve, InsufficientDataError, RBFConditioningError, SurfaceData,
                            WendlandInterpolator, build_interpolant, constant_amplitude_slices, eval_surface,
                            extract_fold_curve, locate_cusp, loo_rms, wendland_c2)

RHO_FACTOR = 30.0


def scattered(n=300, seed=0):
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(110, 150, n), rng.uniform(0, 1.2, n)])


def test_kernel_shape():
    assert wendland_c2(0.0) == 1.0
    assert wendland_c2(1.0) == 0.0 and wendland_c2(1.5) == 0.0
    r = np.linspace(0, 1, 50)
    assert np.all(np.diff(wendland_c2(r)) <= 0)


def test_constant_is_reproduced():
    X = scattered()
    m = WendlandInterpolator().fit(X, np.full(len(X), 2.0))
    Q = scattered(200, seed=1)
    inside = m.in_hull(Q)
    assert inside.sum() > 150
    assert np.max(np.abs(m.predict(Q[inside]) - 2.0)) < 1e-6


def test_plane_is_reproduced():
    X = scattered()
    f = lambda P: 0.3 + 0.01 * P[:, 0] - 2.0 * P[:, 1]  # noqa: E731
    m = WendlandInterpolator().fit(X, f(X))
    Q = scattered(200, seed=2)
    Q = Q[m.in_hull(Q)]
    assert np.max(np.abs(m.predict(Q) - f(Q))) < 1e-4


def test_exact_at_centres():
    X = scattered()
    y = np.sin(X[:, 0] / 7) * X[:, 1] ** 2
    m = WendlandInterpolator().fit(X, y)
    assert np.max(np.abs(m.predict(X) - y)) < 1e-8 * np.max(np.abs(y))
    nn = cKDTree(m.centers_).query(m.centers_, k=2)[0][:, 1]
    assert m.rho_ > nn.max()


def test_gradient_matches_finite_differences():
    X = scattered()
    y = np.cos(X[:, 0] / 9) + X[:, 1] ** 3
    m = WendlandInterpolator(rho_factor=6).fit(X, y)
    Q = np.array([[125.0, 0.4], [140.0, 0.9]])
    h = np.array([1e-4, 1e-6])
    g = m.gradient(Q)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h[k]
        fd = (m.predict(Q + e) - m.predict(Q - e)) / (2 * h[k])
        assert np.allclose(g[:, k], fd, rtol=1e-5, atol=1e-8)


def test_duplicates_are_averaged():
    X = scattered(50)
    X2 = np.vstack([X, X[:1]])
    y = np.arange(51.0)
    y[-1] = 10.0  # the duplicate of site 0 (value 0.0)
    m = WendlandInterpolator().fit(X2, y)
    assert m.centers_.shape[0] == 50
    assert m.predict(X[:1])[0] == pytest.approx(5.0, abs=1e-8)


def test_singular_system_is_reported():
    X = np.column_stack([np.linspace(0, 1, 10), np.linspace(0, 2, 10)])  # collinear: tail is rank deficient
    with pytest.raises(RBFConditioningError, match="larger rho"):
        WendlandInterpolator(rho=0.05).fit(X, np.arange(10.0))


def test_sklearn_estimator_protocol():
    m = WendlandInterpolator(rho_factor=7.0)
    assert m.get_params()["rho_factor"] == 7.0
    c = clone(m).set_params(rho=0.3)
    assert c.rho == 0.3 and m.rho is None
    X = scattered()
    y = X[:, 1] ** 2
    assert c.fit(X, y).score(X, y) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        WendlandInterpolator().fit(np.zeros((5, 3)), np.zeros(5))


def test_loo_matches_refitting():
    rng = np.random.default_rng(4)
    # corners first, so removing an interior site leaves the normalization unchanged
    X = np.vstack([[[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]], rng.uniform(0.05, 0.95, (56, 2))])
    y = np.sin(3 * X[:, 0]) + X[:, 1] ** 2
    m = WendlandInterpolator(rho=0.4).fit(X, y)
    loo = m.loo_residuals()
    for k in (4, 17, 42):
        keep = np.arange(len(X)) != k
        mk = WendlandInterpolator(rho=0.4).fit(X[keep], y[keep])
        assert loo[k] == pytest.approx(y[k] - mk.predict(X[k:k + 1])[0], rel=1e-6, abs=1e-12)


def test_eval_surface_flags_extrapolation():
    X = scattered()
    m = WendlandInterpolator().fit(X, X[:, 1])
    F, out = eval_surface(m, 130.0, 0.5)
    assert isinstance(F, float) and not out
    F, out = eval_surface(m, np.array([130.0, 200.0]), np.array([0.5, 0.5]))
    assert list(out) == [False, True]


def test_surface_data_needs_two_frequencies():
    with pytest.raises(ValueError):
        SurfaceData(*(np.zeros(3) for _ in range(5)), anchor=np.zeros(3, bool))


# cusp on synthetic fold curves

def synthetic_folds(wc=130.0, Fc=0.03, Rc=0.4, ws=None):
    ws = np.arange(wc + 0.6, wc + 8, 1.2) if ws is None else ws
    d = ws - wc
    lower = np.column_stack([ws, Fc + 0.002 * d**1.5, Rc - 0.05 * np.sqrt(d)])
    upper = np.column_stack([ws, Fc - 0.002 * d**1.5, Rc + 0.05 * np.sqrt(d)])
    return FoldCurve(lower, upper)


def test_cusp_of_synthetic_curve():
    wc, Fc, Rc = locate_cusp(synthetic_folds())
    assert wc == pytest.approx(130.0, abs=1e-3)
    assert Fc == pytest.approx(0.03, abs=1e-3)
    assert Rc == pytest.approx(0.4, abs=1e-3)


def test_cusp_needs_three_pairs():
    with pytest.raises(InsufficientDataError):
        locate_cusp(synthetic_folds(ws=np.array([131.0, 132.0])))
    with pytest.raises(InsufficientDataError):
        locate_cusp(FoldCurve(np.zeros((0, 3)), np.zeros((0, 3))))


# contours on a closed-form linear surface

@pytest.fixture(scope="module")
def linear_surface():
    omega0, zeta, g = 2 * math.pi * 20, 0.03, -(2 * math.pi * 20) ** 2
    # the density of the acceptance sweep: 31 frequencies, 48 amplitudes per branch
    W, R = np.meshgrid(np.linspace(2 * math.pi * 18, 2 * math.pi * 24, 31), np.linspace(0, 1.3, 48))
    F = R / np.vectorize(linear_gain)(W, omega0, zeta, g)
    m = WendlandInterpolator(rho_factor=RHO_FACTOR).fit(np.column_stack([W.ravel(), R.ravel()]), F.ravel())
    return m, (omega0, zeta, g)


def test_linear_slices_follow_transfer_function(linear_surface):
    m, (omega0, zeta, g) = linear_surface
    # levels whose contour stays several grid cells above R = 0
    for sl in constant_amplitude_slices(m, [0.02, 0.05]):
        w, R = sl.points[:, 0], sl.points[:, 1]
        want = sl.level * np.vectorize(linear_gain)(w, omega0, zeta, g)
        assert np.max(np.abs(R / want - 1)) < 0.01
        assert w[-1] > 2 * math.pi * 23.9


def test_zero_level_slice_is_flat(linear_surface):
    m, _ = linear_surface
    (sl,) = constant_amplitude_slices(m, [1e-7])
    assert np.max(sl.points[:, 1]) < 1e-4


def test_out_of_range_level_is_skipped(linear_surface):
    m, _ = linear_surface
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = constant_amplitude_slices(m, [5.0, 0.01])
    assert [s.level for s in out] == [0.01]
    assert any("outside data range" in str(w.message) for w in caught)


# the Duffing sweep

@pytest.fixture(scope="module")
def duffing_surface(sweep):
    branches, _ = sweep
    data = SurfaceData.from_branches(branches)
    return data, build_interpolant(data, rho_factor=RHO_FACTOR)


def test_duffing_leave_one_out(duffing_surface):
    data, m = duffing_surface
    assert loo_rms(m) < 0.01 * np.ptp(data.F)


def test_fold_curve_matches_amplitude_equation(duffing_surface, duffing_config):
    data, m = duffing_surface
    c = duffing_config
    folds = extract_fold_curve(data, m)
    for (w, lo, up) in folds.pairs():
        (F1, _), (F2, _) = hb_folds(w, c.omega0, c.zeta, c.gamma, c.input_gain)
        assert lo[1] == pytest.approx(F1, rel=0.02) and up[1] == pytest.approx(F2, rel=0.02)


def test_fold_curve_is_continuous(duffing_surface, duffing_config):
    data, m = duffing_surface
    c = duffing_config
    folds = extract_fold_curve(data, m)
    spacing = np.max(np.diff(data.frequencies))
    for k, arr in enumerate((folds.lower, folds.upper)):
        assert np.all(np.diff(arr[:, 0]) < 2 * spacing)
        # near the cusp the true fold forcing moves by >5% per grid step, so each
        # increment is compared with the amplitude-equation increment instead
        F_hb = np.array([hb_folds(w, c.omega0, c.zeta, c.gamma, c.input_gain)[k][0] for w in arr[:, 0]])
        jump = np.abs(np.diff(arr[:, 1]) - np.diff(F_hb)) / arr[:-1, 1]
        assert np.all(jump < 0.05)


def test_no_folds_below_cusp(duffing_surface, duffing_config):
    data, m = duffing_surface
    c = duffing_config
    wc = hb_cusp(c.omega0, c.zeta, c.gamma, c.input_gain)[0]
    folds = extract_fold_curve(data, m)
    assert folds.lower.size and np.all(folds.lower[:, 0] > wc - np.max(np.diff(data.frequencies)))


def test_slice_above_cusp_is_s_shaped(duffing_surface):
    _, m = duffing_surface
    (sl,) = constant_amplitude_slices(m, [0.05])
    assert np.any(np.diff(sl.points[:, 0]) < 0)
    (low,) = constant_amplitude_slices(m, [0.02])
    assert np.all(np.diff(low.points[:, 0]) > 0)
