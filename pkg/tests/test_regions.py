import math

import numpy as np
import pytest
from numpy.polynomial import polynomial as P
from scipy.optimize import minimize_scalar

from tensegrity.mechanism import MechanismParams
from tensegrity.regions import (
    PlaneSpec,
    RegionMap,
    UnknownFamily,
    count_stable,
    interval_widths,
    map_region,
    map_stack,
    transition_point,
    unloaded_line_distance,
    validate_boundaries,
)
from tensegrity.special_cases import sextic_coefficients, symmetric_boundary_distance


@pytest.fixture(scope="module")
def unloaded_map():
    spec = PlaneSpec("rho", "l2", (0.01, 2.0), (0.01, 2.0), 60)
    return map_region(spec, depth=4)


@pytest.fixture(scope="module")
def symmetric_map():
    spec = PlaneSpec("rho", "f4", (0.01, 2.0), (-10.0, 0.0), 60, symmetric=True)
    return map_region(spec, depth=4)


# --- point counts -----------------------------------------------------------------------


@pytest.mark.parametrize(
    "params, rho, expected",
    [
        (MechanismParams(1, 1.5, 100), 1.0, 2),
        (MechanismParams(1, 1.5, 100), 1.4, 1),
        (MechanismParams(1, 1, 100, 10, 10), 0.75, 2),
        (MechanismParams(1, 1, 100, -10, -10), 0.75, 2),
    ],
)
def test_count_stable_examples(params, rho, expected):
    assert count_stable(params, rho) == (expected, False)


def test_count_stable_rejects_bad_rho():
    with pytest.raises(ValueError):
        count_stable(MechanismParams(), -1.0)


# --- plane specs ------------------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(axis_x="rho", axis_y="rho", range_x=(0.1, 1), range_y=(0.1, 1)),
        dict(axis_x="rho", axis_y="l2", range_x=(1, 1), range_y=(0.1, 1)),
        dict(axis_x="rho", axis_y="l2", range_x=(0, 1), range_y=(0.1, 1)),
        dict(axis_x="rho", axis_y="k", range_x=(0.1, 1), range_y=(0.1, 1)),
        dict(axis_x="rho", axis_y="l2", range_x=(0.1, 1), range_y=(0.1, 1), resolution=1),
    ],
)
def test_plane_spec_validation(kwargs):
    with pytest.raises(ValueError):
        PlaneSpec(**kwargs)


def test_minimal_map():
    region = map_region(PlaneSpec("rho", "f4", (0.01, 2.0), (0.0, 10.0), 2), depth=0)
    assert region.counts.shape == (2, 2)
    assert region.counts.tolist() == [[2, 1], [1, 1]]


# --- unloaded plane ---------------------------------------------------------------------


def test_unloaded_boundaries_on_lines(unloaded_map):
    report = validate_boundaries(unloaded_map, "unloaded_lines")
    assert report.n_points > 0
    assert report.max_distance < 2.0
    assert report.passes()


def test_unloaded_counts_match_window(unloaded_map):
    spec = unloaded_map.spec
    X, Y = np.meshgrid(spec.xs, spec.ys)
    inside = (np.abs(1 - Y) < 2 * X) & (2 * X < 1 + Y)
    margin = unloaded_line_distance(X, Y, cell=spec.cell) > 1.0
    expected = np.where(inside, 2, 1)
    assert np.array_equal(unloaded_map.counts[margin], expected[margin])


def test_unloaded_width_is_constant(unloaded_map):
    rows = [(y, w) for y, w in interval_widths(unloaded_map) if y >= 1.05]
    assert rows
    for _, w in rows:
        assert w == pytest.approx(1.0, abs=2 * unloaded_map.spec.cell[0] / 2**4)


def test_line_distance_zero_on_lines():
    rho = np.array([1.0, 0.25, 0.3])
    l2 = np.array([1.0, 1.5, 0.4])
    assert unloaded_line_distance(rho, l2) == pytest.approx([0, 0, 0], abs=1e-15)


# --- symmetric plane --------------------------------------------------------------------


def test_symmetric_boundaries_on_sextics(symmetric_map):
    report = validate_boundaries(symmetric_map, "symmetric_sextics")
    assert report.n_points > 0
    assert report.max_distance < 2.0


def test_symmetric_plane_region_structure(symmetric_map):
    counts = symmetric_map.counts
    # one connected two-stable region flanked by one-stable regions on each row
    for row in counts:
        runs = np.diff(np.concatenate([[0], (row == 2).astype(int), [0]]))
        assert (runs == 1).sum() <= 1
    assert set(np.unique(counts)) == {1, 2}


def test_symmetric_operation_range_shrinks_with_load(symmetric_map):
    widths = dict(interval_widths(symmetric_map))
    assert widths[-10.0] < widths[0.0]
    assert widths[0.0] == pytest.approx(1.0 - 0.01, abs=0.01)


def test_unknown_family(unloaded_map):
    with pytest.raises(UnknownFamily):
        validate_boundaries(unloaded_map, "cubics")


def test_none_family_reports_counts_only(unloaded_map):
    report = validate_boundaries(unloaded_map, "none")
    assert report.max_distance is None and report.distances is None
    assert sum(report.count_histogram.values()) == unloaded_map.counts.size
    assert report.passes()


# --- serialization and determinism ------------------------------------------------------


def test_csv_layout(unloaded_map):
    lines = unloaded_map.to_csv().splitlines()
    header = [line for line in lines if not line.startswith("#")][0]
    assert header == "rho,l2,count,degenerate"
    body = [line for line in lines if line and not line.startswith("#")][1:]
    assert len(body) == unloaded_map.counts.size


def test_json_round_trip(unloaded_map):
    again = RegionMap.from_json(unloaded_map.to_json())
    assert again.spec == unloaded_map.spec
    assert np.array_equal(again.counts, unloaded_map.counts)
    assert np.array_equal(again.boundary.x, unloaded_map.boundary.x)
    assert again.to_json() == unloaded_map.to_json()


def test_map_is_deterministic_and_job_independent():
    spec = PlaneSpec("rho", "f3", (0.05, 1.5), (-5.0, 5.0), 24, {"f4": 2.0, "l2": 1.2})
    a = map_region(spec, depth=3)
    b = map_region(spec, depth=3, jobs=2)
    assert a.to_csv() == b.to_csv()
    assert a.to_json() == b.to_json()


def test_refinement_keeps_coarse_counts():
    spec = PlaneSpec("rho", "l2", (0.01, 2.0), (0.01, 2.0), 30)
    shallow = map_region(spec, depth=0)
    deep = map_region(spec, depth=5)
    assert np.array_equal(shallow.counts, deep.counts)
    d0 = validate_boundaries(shallow, "unloaded_lines").max_distance
    d5 = validate_boundaries(deep, "unloaded_lines").max_distance
    assert d5 < d0


def test_stack_diagonal_matches_symmetric_plane():
    spec = PlaneSpec("rho", "f4", (0.05, 2.0), (-6.0, 6.0), 13)
    stack = map_stack(spec, "f3", spec.ys)
    sym = map_region(PlaneSpec("rho", "f4", (0.05, 2.0), (-6.0, 6.0), 13, symmetric=True), depth=0)
    assert np.array_equal(stack.diagonal(), sym.marked_counts)


# --- transition point -------------------------------------------------------------------


def sextic_tangency():
    """Force where the two symmetric boundary curves touch (independent of the solver)."""
    low, up = sextic_coefficients(100.0)

    def top_root(grid, f):
        c = np.array([P.polyval(f, grid[i]) for i in range(7)])
        r = np.roots(c[::-1])
        r = r[np.abs(r.imag) < 1e-9].real
        return r[r > 0.05].max()

    res = minimize_scalar(lambda f: top_root(up, f) - top_root(low, f), bounds=(70.0, 71.5), method="bounded", options={"xatol": 1e-10})
    return res.x, top_root(up, res.x)


def test_sextic_tangency_closed_form():
    f, rho = sextic_tangency()
    assert f == pytest.approx(50 * math.sqrt(2), abs=1e-6)
    assert rho == pytest.approx(1 / (2 * math.sqrt(2)), abs=1e-6)


def test_transition_point_symmetric_load():
    tp = transition_point()
    f_star, rho_star = sextic_tangency()
    f3, f4 = tp.forces
    assert f3 == pytest.approx(f4)
    assert f4 == pytest.approx(f_star, abs=1e-3)
    assert tp.rho == pytest.approx(rho_star, abs=1e-4)
    assert tp.magnitude_bracket[0] <= tp.magnitude_bracket[1]
    low, up = symmetric_boundary_distance(f4, tp.rho, cell=(1e-3, 1e-3))
    assert min(low, up) < 1.0
