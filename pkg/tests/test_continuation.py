import math
import time

import numpy as np
import pytest
from oracles import hb_folds, linear_gain

from cbcont import ControlLoop, FilterSpec, LoopSettings, PDGains, PlantConfig, make_plant
from cbcont.continuation import (Branch, CorrectorFailure, DegenerateSecantError, EqPoint, EqStepControl,
                                 StepControl, branch_distance, canonical_phase, classify_stability,
                                 correct_equilibrium, correct_fixed_point, correct_pseudo_arclength,
                                 detect_folds, period_amplitudes, secant_predict_eq, seed_points, to_forcing_frame,
                                 track_branch, track_branch_arclength, track_equilibrium_branch,
                                 update_fundamental_forcing)
from cbcont.plant import SCALAR_SYSTEMS
from cbcont.signal import FourierVector

FOLD_SEEDS = [(1.0, 1.0), (0.9801, 0.99)]


def fold_plant(system="fold_normal_form", x0=0.0):
    return make_plant(PlantConfig(model="fold"), initial=(x0,), rhs=SCALAR_SYSTEMS[system])


def trace_fold_branch(system="fold_normal_form", seeds=FOLD_SEEDS, x0=0.0):
    plant = fold_plant(system, x0)
    pts = [correct_equilibrium(plant, 1.0, EqPoint(*s)) for s in seeds]
    return track_equilibrium_branch(plant, 1.0, pts, EqStepControl(x_bounds=(-0.4, math.inf)))


# equilibria

@pytest.mark.parametrize("a, b, h, want", [((0, 0), (1, 1), 1.0, (2, 2)), ((0, 0), (1, 1), 0.0, (1, 1)),
                                           ((1, 4), (2, 3), 0.5, (2.5, 2.5))])
def test_secant_predict_eq(a, b, h, want):
    got = secant_predict_eq(EqPoint(*a), EqPoint(*b), h)
    assert (got.p, got.x) == pytest.approx(want)


def test_secant_predict_eq_degenerate():
    with pytest.raises(DegenerateSecantError):
        secant_predict_eq(EqPoint(1, 1), EqPoint(1, 1), 1.0)


def test_single_equilibrium_correction():
    got = correct_equilibrium(fold_plant(), 1.0, EqPoint(1.0, 1.0))
    assert got.x == pytest.approx(1.0, abs=1e-7) and got.p == pytest.approx(1.0, abs=1e-7)


def test_equilibrium_branch_through_fold():
    t0 = time.perf_counter()
    br = trace_fold_branch()
    elapsed = time.perf_counter() - t0
    p, x = br.p, br.x
    assert br.status == "bound"
    assert np.max(np.abs(p - x * x)) < 1e-6
    assert x.max() > 0.9 and x.min() < -0.3
    folds = detect_folds(br)
    assert len(folds) == 1
    assert abs(folds[0].F) < 1e-3 and abs(folds[0].R) < 1e-3
    assert elapsed < 5.0


def test_equilibrium_gain_must_be_positive():
    with pytest.raises(ValueError):
        track_equilibrium_branch(fold_plant(), 0.0, [EqPoint(1, 1), EqPoint(0.98, 0.99)])


def test_parameter_independent_branch_is_rejected():
    br = trace_fold_branch("parameter_independent", seeds=[(1.0, 1.0), (0.9, 0.99)])
    assert br.status == "degenerate"
    assert "authority" in br.diagnostic
    assert len(br.points) == 2


# periodic orbits: pieces

def test_update_fundamental_forcing_examples():
    g = PDGains()
    assert update_fundamental_forcing(0.1, 0.2, 0.5, 0.6, 0.5, 0.6, g, 100.0) == (0.1, 0.2)
    a, b = update_fundamental_forcing(0.1, 0.2, 1.0, 0.0, 0.0, 0.0, PDGains(0.2, 0.0), 100.0)
    assert (a, b) == pytest.approx((0.3, 0.2))
    w = 2 * math.pi * 22
    a, b = update_fundamental_forcing(0.1, 0.2, 0.0, 1.0, 0.0, 0.0, PDGains(0.0, -0.004), w)
    assert (a, b) == pytest.approx((0.1 - 0.004 * w, 0.2))


def test_canonical_phase():
    fv = FourierVector(3.0, [0.1, 0.0, 2.0, 0.3, 0.4])
    c = canonical_phase(fv)
    assert c.coeffs[1] == pytest.approx(2.0) and abs(c.coeffs[2]) < 1e-12
    zero = FourierVector.zeros(3.0, 2)
    assert canonical_phase(zero) is zero


def test_step_control_validation():
    with pytest.raises(ValueError):
        StepControl(h=0.01)
    with pytest.raises(ValueError):
        StepControl(shrink=1.0)


def linear_loop(rel_tol=1e-3):
    plant = make_plant(PlantConfig(gamma=0.0))
    return ControlLoop(plant, 2 * math.pi * 21.0, filter_spec=FilterSpec(), settings=LoopSettings(rel_tol=rel_tol))


def test_fixed_point_on_linear_plant():
    loop = linear_loop(rel_tol=1e-8)
    pt = correct_fixed_point(loop, FourierVector.harmonic(loop.omega, 0.05, 0.0))
    assert pt.iterations == 1
    assert pt.measures.e_rel < 1e-6
    assert pt.F == pytest.approx(math.hypot(pt.a, pt.b), rel=1e-9)


def test_fixed_point_argument_checks():
    loop = linear_loop()
    pred = FourierVector.harmonic(loop.omega, 0.05, 0.0)
    with pytest.raises(ValueError):
        correct_fixed_point(loop, pred, relax=0.0)
    with pytest.raises(ValueError):
        correct_fixed_point(loop, pred, min_iter=3, max_iter=2)
    with pytest.raises(CorrectorFailure):
        correct_fixed_point(loop, pred, tol=1e-14, max_iter=1)


def test_relaxed_iteration_converges(duffing_config):
    loop = ControlLoop(make_plant(duffing_config), 2 * math.pi * 22.0, filter_spec=FilterSpec())
    pt = correct_fixed_point(loop, FourierVector.harmonic(loop.omega, 0.3, 0.0), relax=0.7, max_iter=20)
    assert pt.measures.e_rel < 0.5


def test_linear_branch_is_proportional():
    loop = linear_loop(rel_tol=1e-7)
    br = track_branch(loop, step=StepControl(max_points=8), classify_plant=loop.plant, tol=1e-6)
    ratio = br.R / br.F
    assert len(br) == 8
    assert np.max(np.abs(ratio / ratio.mean() - 1)) < 1e-4
    assert all(p.stable for p in br.points)
    assert detect_folds(br) == []


def test_newton_on_linear_plant_takes_one_step():
    loop = linear_loop(rel_tol=1e-7)
    seeds = seed_points(loop, (0.02, 0.024), tol=1e-6)
    ys = [to_forcing_frame(p) for p in seeds]
    sec = ys[1] - ys[0]
    pred = ys[1] + sec
    pred[3:] += 1e-3  # off the branch in every non-fundamental coefficient
    pt = correct_pseudo_arclength(loop, pred, sec, tol=1e-5)
    assert pt.iterations == 1
    c = loop.plant.config
    assert pt.R / pt.F == pytest.approx(linear_gain(loop.omega, c.omega0, c.zeta, c.input_gain), rel=1e-4)


# periodic orbits: Duffing branches

def test_branch_above_cusp_has_two_folds(branch24, duffing_config):
    br, loop, _ = branch24
    dF = np.diff(br.F)
    assert np.count_nonzero(np.diff(np.sign(dF[dF != 0])) != 0) == 2
    folds = detect_folds(br)
    c = duffing_config
    want = hb_folds(loop.omega, c.omega0, c.zeta, c.gamma, c.input_gain)
    assert len(folds) == 2
    for f, (F, R) in zip(sorted(folds, key=lambda f: f.R), want):
        assert f.F == pytest.approx(F, rel=0.02)


def test_branch_below_cusp_is_monotone(branch20):
    br, _, _ = branch20
    assert np.all(np.diff(br.F) > 0)
    assert detect_folds(br) == []


def test_corrector_iterations_are_few(branch24):
    br, _, _ = branch24
    assert max(p.iterations for p in br.points) <= 5


def test_accepted_points_are_non_invasive(branch24):
    br, _, _ = branch24
    for p in br.points:
        assert p.measures.e_rel < 2.0
        assert p.X.omega == p.omega
        assert p.F == pytest.approx(math.hypot(p.a, p.b), abs=1e-9)


def test_stability_flags_along_branch(branch24):
    br, _, _ = branch24
    assert br.points[0].stable and br.points[-1].stable
    assert any(p.stable is False for p in br.points)


def test_stable_point_replays_without_control(branch24):
    br, loop, _ = branch24
    p = br.points[5]
    sim = loop.plant.clone()
    sim.restore(p.plant_state)
    start = sim.n
    run = sim.run_uncontrolled((p.a, p.b, p.omega), 20 * 2 * math.pi / p.omega)
    amps = period_amplitudes(run.x, p.omega, sim.sample_rate, start)
    assert np.max(np.abs(amps - p.R)) < 0.01 * p.R


def test_classify_linear_point_is_stable():
    loop = linear_loop()
    pt = correct_fixed_point(loop, FourierVector.harmonic(loop.omega, 0.05, 0.0))
    assert classify_stability(loop.plant, pt)


def test_branch_export_order(branch24):
    br, _, _ = branch24
    assert isinstance(br, Branch)
    assert br.n_seeds == 2 and br.settle_cycles == sum(p.settle_cycles for p in br.points)


# fold detection and branch distance on synthetic data

def test_detect_folds_on_parabola():
    x = np.linspace(1, -1, 41)
    folds = detect_folds((x * x, x))
    assert len(folds) == 1 and abs(folds[0].F) < 1e-3 and abs(folds[0].R) < 1e-3


def test_detect_folds_monotone_and_short():
    assert detect_folds((np.arange(5.0), np.arange(5.0))) == []
    assert detect_folds((np.array([0.0, 1.0]), np.array([0.0, 1.0]))) == []


class _Pts:
    def __init__(self, F, R):
        self.F, self.R = np.asarray(F), np.asarray(R)


def test_branch_distance():
    s = np.linspace(0, 1, 30)
    a = _Pts(s, s**2)
    assert branch_distance(a, a) == 0.0
    b = _Pts(s[::3], s[::3] ** 2)
    assert branch_distance(a, b) < 0.01
    c = _Pts(s + 0.1, s**2)
    assert branch_distance(a, c) == pytest.approx(0.1 / 1.1, rel=0.5)
