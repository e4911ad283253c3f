import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from tensegrity.mechanism import Configuration, StabilityClass, gradient
from tensegrity.polysolve import solve_equilibria
from tensegrity.special_cases import (
    SymmetricInstance,
    UnloadedInstance,
    distinct_angle_polynomial,
    equal_angle_quartic,
    is_distinct_angle,
    parallelogram_angles,
    sextic_coefficients,
    solve_symmetric,
    solve_unloaded,
    symmetric_boundary_distance,
    symmetric_boundary_residual,
)


def same_sets(a, b, tol=1e-8):
    if len(a) != len(b):
        return False
    for e in a:
        match = [o for o in b if e.config.distance(o.config) < tol]
        if len(match) != 1 or match[0].stability is not e.stability:
            return False
    return True


symmetric = st.builds(
    SymmetricInstance,
    l=st.floats(0.3, 2.0),
    k=st.floats(1.0, 200.0),
    f=st.floats(-20.0, 20.0),
    rho=st.floats(0.02, 2.5),
)
unloaded = st.builds(
    UnloadedInstance,
    l1=st.floats(0.2, 2.0),
    l2=st.floats(0.2, 2.0),
    k=st.floats(1.0, 200.0),
    rho=st.floats(0.02, 2.5),
)


# --- symmetric --------------------------------------------------------------------------


def test_equal_angle_quartic_roots_are_equilibria():
    inst = SymmetricInstance(1.0, 100.0, 5.0, 0.6)
    for t in np.polynomial.polynomial.polyroots(equal_angle_quartic(inst).coeffs):
        if abs(t.imag) < 1e-12:
            th = 2 * math.atan(t.real)
            g = gradient(inst.params, inst.rho, Configuration(th, th))
            assert max(map(abs, g)) < 1e-9 * inst.params.scale(inst.rho)


def test_distinct_polynomial_carries_one_plus_t_squared():
    inst = SymmetricInstance(1.0, 100.0, 5.0, 0.6)
    poly = distinct_angle_polynomial(inst)
    assert abs(poly(1j)) < 1e-9 * np.max(np.abs(poly.coeffs))


@given(symmetric)
def test_symmetric_solver_matches_general(inst):
    general = solve_equilibria(inst.params, inst.rho)
    # instances sitting on a degenerate point are flagged, not compared
    assume(all(e.stability is not StabilityClass.DEGENERATE for e in general))
    assert same_sets(solve_symmetric(inst), general)


@given(symmetric)
def test_distinct_angle_solutions_are_saddles(inst):
    for e in solve_symmetric(inst):
        if is_distinct_angle(e):
            assert e.det_h < 0
            assert not e.is_stable


@given(symmetric)
def test_distinct_angle_solutions_come_in_swapped_pairs(inst):
    eqs = solve_symmetric(inst)
    for e in eqs:
        if is_distinct_angle(e):
            assert any(Configuration(e.theta2, e.theta1).distance(o.config) < 1e-8 for o in eqs)


def test_symmetric_zero_force_uses_unloaded_solution():
    eqs = solve_symmetric(SymmetricInstance(1.0, 100.0, 0.0, 0.4))
    assert sum(e.is_stable for e in eqs) == 2
    assert len(eqs) == 6


def test_instance_validation():
    with pytest.raises(ValueError):
        SymmetricInstance(rho=0.0)
    with pytest.raises(ValueError):
        UnloadedInstance(l1=-1.0)


# --- unloaded ---------------------------------------------------------------------------


def test_unloaded_mirrored_pair():
    eqs = solve_unloaded(UnloadedInstance(1.0, 1.5, 100.0, 1.0))
    stable = [e for e in eqs if e.is_stable]
    assert len(stable) == 2
    assert sorted(e.theta1 for e in stable) == pytest.approx([-math.acos(0.6875), math.acos(0.6875)], abs=1e-15)
    assert math.acos(0.6875) == pytest.approx(0.812756, abs=1e-6)


@pytest.mark.parametrize("rho", [1.0, 1.2, 2.0])
def test_unloaded_no_pair_beyond_window(rho):
    inst = UnloadedInstance(1.0, 1.0, 100.0, rho)
    assert parallelogram_angles(inst) is None
    assert len(solve_unloaded(inst)) == 4


@given(unloaded)
def test_unloaded_solver_matches_general(inst):
    general = solve_equilibria(inst.params, inst.rho)
    assume(all(e.stability is not StabilityClass.DEGENERATE for e in general))
    assert same_sets(solve_unloaded(inst), general)


@given(unloaded)
def test_parallelogram_geometry(inst):
    angles = parallelogram_angles(inst)
    if angles is None:
        return
    a, b = angles
    # opposite sides parallel: A3A4 is parallel to A1A2, and the rods have equal heights
    assert inst.l1 * math.sin(a) == pytest.approx(inst.l2 * math.sin(b), abs=1e-12)
    x4 = inst.rho - inst.l2 * math.cos(b)
    assert inst.l1 * math.cos(a) - x4 == pytest.approx(inst.rho, abs=1e-12)


@given(st.floats(0.2, 2.0), st.floats(0.2, 2.0))
def test_window_edges(l1, l2):
    lo = abs(l1 - l2) / 2
    hi = (l1 + l2) / 2
    margin = 1e-3
    if hi - lo <= 2 * margin:
        return
    assert UnloadedInstance(l1, l2, 100.0, lo + margin).has_parallelogram()
    assert UnloadedInstance(l1, l2, 100.0, hi - margin).has_parallelogram()
    assert not UnloadedInstance(l1, l2, 100.0, hi + margin).has_parallelogram()
    if lo > margin:
        assert not UnloadedInstance(l1, l2, 100.0, lo - margin).has_parallelogram()


@given(unloaded)
def test_unloaded_pair_is_stable_mirror(inst):
    eqs = [e for e in solve_unloaded(inst) if abs(math.sin(e.theta1)) > 1e-9]
    if not eqs:
        return
    a, b = eqs
    assert a.theta1 == -b.theta1 and a.theta2 == -b.theta2
    assert a.is_stable and b.is_stable


# --- symmetric boundary sextics ---------------------------------------------------------


def test_lower_sextic_vanishes_at_origin():
    low, _ = symmetric_boundary_residual(0.0, 0.0)
    assert low == 0.0


def test_upper_sextic_vanishes_at_unit_rho():
    _, up = symmetric_boundary_residual(0.0, 1.0)
    assert up == 0.0


def test_sextic_coefficients_k100_match_printed_values():
    low, up = sextic_coefficients(100.0)
    # C[i, j] multiplies rho**i * f**j
    shared = {(0, 6): 1.0, (2, 4): 12e4, (4, 2): 48e8, (6, 0): 64e12}
    low_expected = {**shared, (2, 2): -16e8}
    up_expected = {**shared, (0, 4): -12e4, (2, 2): 336e8, (4, 0): -192e12, (0, 2): 48e8, (2, 0): 192e12, (0, 0): -64e12}
    for grid, expected in ((low, low_expected), (up, up_expected)):
        table = np.zeros((7, 7))
        for ij, v in expected.items():
            table[ij] = v
        assert grid == pytest.approx(table, rel=1e-15)


@pytest.mark.parametrize("f, rho_lo, rho_hi", [(10.0, 0.21493, 0.80349), (30.0, 0.33859, 0.608), (60.0, 0.38202, 0.40996)])
def test_sextics_bound_the_two_stable_interval(f, rho_lo, rho_hi):
    for sign in (1, -1):
        for rho, which in ((rho_lo, 0), (rho_hi, 1)):
            dist = symmetric_boundary_distance(sign * f, rho, cell=(1e-5, 1e-5))[which]
            assert dist < 200
            inside = SymmetricInstance(1.0, 100.0, sign * f, rho + (1e-3 if which == 0 else -1e-3))
            outside = SymmetricInstance(1.0, 100.0, sign * f, rho - (1e-3 if which == 0 else -1e-3))
            assert sum(e.is_stable for e in solve_symmetric(inside)) == 2
            assert sum(e.is_stable for e in solve_symmetric(outside)) == 1
