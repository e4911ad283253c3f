import math

import numpy as np
import pytest
import sympy as sp

from tensegrity.continuation import (
    BISECT_TOL,
    EventKind,
    InsufficientData,
    branches_to_csv,
    classify_endpoint,
    jump_target,
    refine_fold,
    stable_segments,
    trace_branches,
)
from tensegrity.mechanism import Configuration, MechanismParams, Tolerances, hessian
from tensegrity.polysolve import solve_equilibria
from tensegrity.reproduction import CONTINUATION_BASELINES

LOADED = MechanismParams(1.0, 1.0, 100.0, 5.0, 5.0)
DETUNED = MechanismParams(1.0, 1.05, 100.0, 5.0, 5.0)


@pytest.fixture(scope="module")
def loaded():
    return trace_branches(LOADED, (0.01, 2.0), 400)


@pytest.fixture(scope="module")
def detuned():
    return trace_branches(DETUNED, (0.01, 2.0), 400)


@pytest.fixture(scope="module")
def oracle_points():
    """Critical points of the negative equal-angle branch from the symmetric closed form."""
    t, r = sp.symbols("t rho")
    f, k, l = 5, 100, 1
    quartic = f + 4 * k * (l - r) * t - 4 * k * (l + r) * t**3 - f * t**4
    # fold: the equal-angle quartic has a double root
    disc = sp.Poly(sp.discriminant(quartic, t), r)
    folds = [float(x) for x in disc.nroots() if x.is_real and 0 < x < 2]
    # branch point: an equal-angle root also lies on the distinct-angle factor
    rho_t = -f * t / (k * (1 - t**2))
    meet = sp.Poly(sp.numer(sp.together(quartic.subs(r, rho_t))), t)
    branch = [(float(rho_t.subs(t, x)), float(x)) for x in meet.nroots() if x.is_real]
    branch = [(rho, x) for rho, x in branch if 0.01 < rho < 2 and x < 0]
    return folds, branch


def negative_stable_segment(branches):
    segs = [s for s in stable_segments(branches) if s.mean_theta[0] < -0.1 and s.mean_theta[1] < -0.1]
    assert len(segs) == 1
    return segs[0]


def segment_events(branches):
    seg = negative_stable_segment(branches)
    br = branches[seg.branch_id]
    lo = [e for e in br.events if abs(e.rho - seg.rho_lo) < 1e-9]
    hi = [e for e in br.events if abs(e.rho - seg.rho_hi) < 1e-9]
    return seg, lo, hi


def test_loaded_segment_kinds(loaded):
    seg = negative_stable_segment(loaded)
    assert (seg.kind_lo, seg.kind_hi) == (EventKind.BRANCH_POINT, EventKind.FOLD)


def test_detuned_segment_kinds(detuned):
    seg = negative_stable_segment(detuned)
    assert (seg.kind_lo, seg.kind_hi) == (EventKind.FOLD, EventKind.FOLD)


def test_loaded_matches_closed_form(loaded, oracle_points):
    folds, branch = oracle_points
    assert len(folds) == 1 and len(branch) == 1
    seg, lo, hi = segment_events(loaded)
    bp = next(e for e in lo if e.kind is EventKind.BRANCH_POINT)
    fold = next(e for e in hi if e.kind is EventKind.FOLD)
    assert bp.bracket[0] <= branch[0][0] <= bp.bracket[1]
    assert fold.bracket[0] <= folds[0] <= fold.bracket[1]
    assert bp.bracket[1] - bp.bracket[0] <= BISECT_TOL
    # the branch point sits on the equal-angle branch at theta = 2 atan(t)
    assert bp.config.theta1 == pytest.approx(2 * math.atan(branch[0][1]), abs=1e-3)


@pytest.mark.parametrize("l2", sorted(CONTINUATION_BASELINES))
def test_regression_baselines(l2, loaded, detuned):
    branches = loaded if l2 == 1.0 else detuned
    seg = negative_stable_segment(branches)
    lo, hi = CONTINUATION_BASELINES[l2]
    assert seg.rho_lo == pytest.approx(lo, abs=5e-6)
    assert seg.rho_hi == pytest.approx(hi, abs=5e-6)


def test_fold_hessian_degenerates(loaded, oracle_points):
    seg, _, hi = segment_events(loaded)
    fold = next(e for e in hi if e.kind is EventKind.FOLD)
    h = hessian(LOADED, fold.rho, fold.config)
    # the same absolute threshold the classifier applies to det H
    assert abs(np.linalg.det(h)) < Tolerances().eps_h * LOADED.scale(fold.rho)
    assert fold.rho == pytest.approx(oracle_points[0][0], abs=1e-9)


def test_refine_fold_rejects_far_bracket():
    config = Configuration(-0.3, -0.3)
    assert refine_fold(LOADED, 0.5, config, (0.5, 0.5 + 1e-6)) is None


def test_fold_jump_lands_on_positive_branch(loaded):
    seg, _, hi = segment_events(loaded)
    fold = next(e for e in hi if e.kind is EventKind.FOLD)
    assert fold.jump is not None
    target = fold.jump.config
    assert target.theta1 > 0 and target.theta2 > 0
    assert fold.jump.target_branch is not None


def test_jump_target_from_fold_configuration(loaded):
    seg, _, hi = segment_events(loaded)
    fold = next(e for e in hi if e.kind is EventKind.FOLD)
    jump = jump_target(LOADED, fold.rho, fold.config, +1, loaded)
    stable = [e for e in solve_equilibria(LOADED, jump.rho) if e.is_stable]
    assert len(stable) == 1
    assert jump.config.distance(stable[0].config) < 1e-6


def test_every_sample_is_on_one_branch(loaded):
    rhos = np.linspace(0.01, 2.0, 400)
    for rho in rhos[::37]:
        on_branches = sum(1 for br in loaded for r, _ in br.points if r == rho)
        assert on_branches == len(solve_equilibria(LOADED, rho))


def test_branches_are_continuous(loaded):
    for br in loaded:
        a = br.angles()
        if len(a) < 2:
            continue
        jumps = np.abs(np.angle(np.exp(1j * np.diff(a, axis=0))))
        assert jumps.max() < 0.6


def test_trace_is_deterministic():
    a = trace_branches(LOADED, (0.3, 1.0), 60)
    b = trace_branches(LOADED, (0.3, 1.0), 60, jobs=2)
    assert branches_to_csv(LOADED, a) == branches_to_csv(LOADED, b)


def test_unloaded_stable_branches_are_mirrors():
    params = MechanismParams(1.0, 1.5, 100.0)
    branches = trace_branches(params, (0.01, 2.0), 200)
    segs = [s for s in stable_segments(branches) if abs(math.sin(s.mean_theta[0])) > 0.1]
    assert len(segs) == 2
    a, b = (branches[s.branch_id] for s in segs)
    assert np.array_equal(a.rhos, b.rhos)
    assert a.angles() == pytest.approx(-b.angles(), abs=1e-12)
    # the pair lives on the existence window (|l1 - l2| / 2, (l1 + l2) / 2)
    for s in segs:
        assert s.rho_lo == pytest.approx(0.25, abs=1e-5)
        assert s.rho_hi == pytest.approx(1.25, abs=1e-5)


def test_unloaded_pair_meets_flat_branch():
    params = MechanismParams(1.0, 1.5, 100.0)
    branches = trace_branches(params, (0.01, 2.0), 200)
    ends = [e for br in branches for e in br.events if e.note in ("start", "end")]
    assert ends
    for e in ends:
        # the parallelogram pair closes onto a flat configuration
        assert abs(math.sin(e.config.theta1)) < 1e-2 and abs(math.sin(e.config.theta2)) < 1e-2


def test_isolated_branch_has_only_range_ends():
    params = MechanismParams(1.0, 1.0, 100.0, 50.0, 50.0)
    branches = trace_branches(params, (1.0, 2.0), 50)
    for br in branches:
        kinds = {e.kind for e in br.events}
        assert kinds <= {EventKind.TERMINATED}
        assert all(e.note == "range end" for e in br.events)


def test_classify_needs_samples():
    with pytest.raises(InsufficientData):
        classify_endpoint([], 0.5, 0.01, Configuration(0.0, 0.0))


def test_trace_rejects_bad_range():
    with pytest.raises(ValueError):
        trace_branches(LOADED, (1.0, 1.0), 10)
    with pytest.raises(ValueError):
        trace_branches(LOADED, (0.1, 1.0), 1)


def test_csv_has_event_rows(loaded):
    text = branches_to_csv(LOADED, loaded)
    header, *rows = text.splitlines()
    assert header == "rho,branch_id,theta1,theta2,energy,h11,detH,stability,event"
    events = [r for r in rows if not r.endswith(",")]
    assert any("BranchPoint" in r for r in events)
    assert any("Fold" in r for r in events)
