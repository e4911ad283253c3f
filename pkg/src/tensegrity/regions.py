"""Stable-solution counts over 2-D parameter planes, with adaptive boundary refinement.

Samples sit on the nodes of a regular grid.  Every pair of 4-neighbours with
different counts is a boundary edge; each edge is bisected ``depth`` times,
always keeping the half whose end counts still differ, which localises the
boundary crossing to ``cell / 2**depth``.  Detected crossings can be checked
against the analytic boundaries known for the unloaded and symmetric cases.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .batch import count_stable_batch
from .mechanism import MechanismParams, Tolerances, check_rho
from .polysolve import DegenerateResultant, solve_equilibria, stable_count
from .special_cases import symmetric_boundary_distance

AXES = ("rho", "l2", "f3", "f4")
FIXED_DEFAULTS = {"rho": 1.0, "l1": 1.0, "l2": 1.0, "k": 100.0, "f3": 0.0, "f4": 0.0, "f3x": 0.0, "f4x": 0.0}
FAMILIES = ("unloaded_lines", "symmetric_sextics", "none")
DEGENERATE_MARKER = -1
CHUNK = 8192
MAX_PROBE_SAMPLES = 20000


class UnknownFamily(ValueError):
    pass


@dataclass(frozen=True)
class PlaneSpec:
    axis_x: str
    axis_y: str
    range_x: Tuple[float, float]
    range_y: Tuple[float, float]
    resolution: int = 400
    fixed: Dict[str, float] = field(default_factory=dict)
    symmetric: bool = False  # f3 and f4 move together along a force axis

    def __post_init__(self) -> None:
        for axis in (self.axis_x, self.axis_y):
            if axis not in AXES:
                raise ValueError(f"unknown axis {axis!r}; choose from {AXES}")
        if self.axis_x == self.axis_y:
            raise ValueError("axes must be distinct")
        if self.resolution < 2:
            raise ValueError("resolution must be at least 2")
        for axis, (lo, hi) in ((self.axis_x, self.range_x), (self.axis_y, self.range_y)):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"empty or invalid range for {axis}: {(lo, hi)}")
            if axis in ("rho", "l2") and lo <= 0:
                raise ValueError(f"{axis} range must be strictly positive")
        unknown = set(self.fixed) - set(FIXED_DEFAULTS)
        if unknown:
            raise ValueError(f"unknown fixed parameters {sorted(unknown)}")
        object.__setattr__(self, "range_x", (float(self.range_x[0]), float(self.range_x[1])))
        object.__setattr__(self, "range_y", (float(self.range_y[0]), float(self.range_y[1])))

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(*self.range_x, self.resolution)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(*self.range_y, self.resolution)

    @property
    def cell(self) -> Tuple[float, float]:
        n = self.resolution - 1
        return (self.range_x[1] - self.range_x[0]) / n, (self.range_y[1] - self.range_y[0]) / n

    def fixed_values(self) -> Dict[str, float]:
        values = dict(FIXED_DEFAULTS)
        values.update({key: float(v) for key, v in self.fixed.items()})
        return values

    def parameters(self, x, y) -> Dict[str, np.ndarray]:
        """Broadcast parameter arrays for sample coordinates ``x``, ``y``."""
        values = {key: np.asarray(v, dtype=float) for key, v in self.fixed_values().items()}
        values[self.axis_x] = np.asarray(x, dtype=float)
        values[self.axis_y] = np.asarray(y, dtype=float)
        if self.symmetric:
            for axis in (self.axis_x, self.axis_y):
                if axis in ("f3", "f4"):
                    values["f4" if axis == "f3" else "f3"] = values[axis]
        return values

    def to_dict(self) -> dict:
        out = asdict(self)
        out["range_x"] = list(self.range_x)
        out["range_y"] = list(self.range_y)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PlaneSpec":
        data = dict(data)
        data["range_x"] = tuple(data["range_x"])
        data["range_y"] = tuple(data["range_y"])
        return cls(**data)


@dataclass
class BoundaryPoints:
    """Refined crossings; ``edge`` is 0 for edges along x and 1 along y."""

    x: np.ndarray
    y: np.ndarray
    edge: np.ndarray
    count_lo: np.ndarray
    count_hi: np.ndarray

    def __len__(self) -> int:
        return int(self.x.size)


@dataclass
class RegionMap:
    spec: PlaneSpec
    counts: np.ndarray  # (ny, nx) stable counts
    degenerate: np.ndarray  # (ny, nx) flags
    boundary_cells: List[Tuple[int, int]]
    boundary: BoundaryPoints
    refinement_depth: int

    @property
    def marked_counts(self) -> np.ndarray:
        return np.where(self.degenerate, DEGENERATE_MARKER, self.counts)

    def region_fraction(self, count: int) -> float:
        return float(np.mean(self.marked_counts == count))

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key, value in sorted(self.spec.fixed_values().items()):
            if key not in (self.spec.axis_x, self.spec.axis_y):
                buf.write(f"# {key}={value:.12g}\n")
        if self.spec.symmetric:
            buf.write("# symmetric=1\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([self.spec.axis_x, self.spec.axis_y, "count", "degenerate"])
        xs, ys = self.spec.xs, self.spec.ys
        for j, y in enumerate(ys):
            for i, x in enumerate(xs):
                writer.writerow([f"{x:.12g}", f"{y:.12g}", int(self.counts[j, i]), int(self.degenerate[j, i])])
        return buf.getvalue()

    def to_json(self) -> str:
        b = self.boundary
        data = {
            "spec": self.spec.to_dict(),
            "refinement_depth": self.refinement_depth,
            "counts": self.marked_counts.tolist(),
            "stable_counts": self.counts.tolist(),
            "boundary_cells": [list(c) for c in self.boundary_cells],
            "boundary_points": {
                "x": b.x.tolist(),
                "y": b.y.tolist(),
                "edge": b.edge.tolist(),
                "count_lo": b.count_lo.tolist(),
                "count_hi": b.count_hi.tolist(),
            },
        }
        return json.dumps(data, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RegionMap":
        data = json.loads(text)
        marked = np.array(data["counts"], dtype=int)
        bp = data["boundary_points"]
        return cls(
            spec=PlaneSpec.from_dict(data["spec"]),
            counts=np.array(data["stable_counts"], dtype=int),
            degenerate=marked == DEGENERATE_MARKER,
            boundary_cells=[tuple(c) for c in data["boundary_cells"]],
            boundary=BoundaryPoints(
                np.array(bp["x"], dtype=float),
                np.array(bp["y"], dtype=float),
                np.array(bp["edge"], dtype=int),
                np.array(bp["count_lo"], dtype=int),
                np.array(bp["count_hi"], dtype=int),
            ),
            refinement_depth=int(data["refinement_depth"]),
        )


def count_stable(params: MechanismParams, rho: float, tol: Optional[Tolerances] = None) -> Tuple[int, bool]:
    """``(n_stable, any_degenerate)``; a degenerate resultant yields ``(0, True)``."""
    check_rho(rho)
    try:
        eqs = solve_equilibria(params, rho, tol)
    except DegenerateResultant:
        return 0, True
    degenerate = any(e.stability.name == "DEGENERATE" for e in eqs)
    return stable_count(eqs), degenerate


def _count_chunk(args) -> Tuple[np.ndarray, np.ndarray]:
    values, tol = args
    keys = ("l1", "l2", "k", "f3", "f4", "rho", "f3x", "f4x")
    return count_stable_batch(*(values[key] for key in keys), tol=tol)


def _evaluate(spec: PlaneSpec, x: np.ndarray, y: np.ndarray, tol: Tolerances, jobs: int = 1):
    """Counts and degeneracy flags at flat coordinate arrays, chunked and optionally parallel."""
    x = np.ravel(x)
    y = np.ravel(y)
    n = x.size
    if n == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=bool)
    tasks = []
    for start in range(0, n, CHUNK):
        sl = slice(start, start + CHUNK)
        values = spec.parameters(x[sl], y[sl])
        values = {key: np.broadcast_to(v, x[sl].shape).copy() for key, v in values.items()}
        tasks.append((values, tol))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_count_chunk, tasks))
    else:
        results = [_count_chunk(t) for t in tasks]
    counts = np.concatenate([r[0] for r in results]).astype(int)
    flags = np.concatenate([r[1] for r in results]).astype(bool)
    return counts, flags


def _key(counts: np.ndarray, flags: np.ndarray) -> np.ndarray:
    return np.where(flags, DEGENERATE_MARKER, counts)


def _refine_edges(spec, ax, ay, bx, by, ka, kb, depth, tol, jobs):
    """Bisect segments ``a -> b`` whose end keys differ; return crossing midpoints."""
    ax, ay, bx, by = (np.array(v, dtype=float) for v in (ax, ay, bx, by))
    ka, kb = ka.copy(), kb.copy()
    for _ in range(depth):
        mx, my = 0.5 * (ax + bx), 0.5 * (ay + by)
        c, f = _evaluate(spec, mx, my, tol, jobs)
        km = _key(c, f)
        left = km != ka  # crossing persists in [a, m]
        bx, by, kb = np.where(left, mx, bx), np.where(left, my, by), np.where(left, km, kb)
        ax, ay, ka = np.where(left, ax, mx), np.where(left, ay, my), np.where(left, ka, km)
    return 0.5 * (ax + bx), 0.5 * (ay + by)


def map_region(spec: PlaneSpec, depth: int = 4, jobs: int = 1, tol: Optional[Tolerances] = None) -> RegionMap:
    """Classify every grid node and refine all count changes between neighbours."""
    if depth < 0:
        raise ValueError("depth must be non-negative")
    tol = tol or Tolerances.from_env()
    xs, ys = spec.xs, spec.ys
    X, Y = np.meshgrid(xs, ys)
    c, f = _evaluate(spec, X, Y, tol, jobs)
    counts = c.reshape(X.shape)
    flags = f.reshape(X.shape)
    key = _key(counts, flags)

    diff_x = key[:, 1:] != key[:, :-1]
    diff_y = key[1:, :] != key[:-1, :]
    on_boundary = np.zeros(key.shape, dtype=bool)
    on_boundary[:, 1:] |= diff_x
    on_boundary[:, :-1] |= diff_x
    on_boundary[1:, :] |= diff_y
    on_boundary[:-1, :] |= diff_y
    cells = [(int(i), int(j)) for j, i in zip(*np.nonzero(on_boundary))]

    jx, ix = np.nonzero(diff_x)
    jy, iy = np.nonzero(diff_y)
    ax = np.concatenate([xs[ix], xs[iy]])
    ay = np.concatenate([ys[jx], ys[jy]])
    bx = np.concatenate([xs[ix + 1], xs[iy]])
    by = np.concatenate([ys[jx], ys[jy + 1]])
    ka = np.concatenate([key[jx, ix], key[jy, iy]])
    kb = np.concatenate([key[jx, ix + 1], key[jy + 1, iy]])
    px, py = _refine_edges(spec, ax, ay, bx, by, ka, kb, depth, tol, jobs)
    edge = np.concatenate([np.zeros(ix.size, dtype=int), np.ones(iy.size, dtype=int)])
    boundary = BoundaryPoints(px, py, edge, ka.astype(int), kb.astype(int))
    return RegionMap(spec, counts, flags, cells, boundary, depth)


# --- validation against analytic boundaries -----------------------------------


@dataclass
class ValidationReport:
    family: str
    n_points: int
    max_distance: Optional[float]
    median_distance: Optional[float]
    distances: Optional[np.ndarray]
    count_histogram: Dict[int, int]

    def passes(self, threshold: float = 2.0) -> bool:
        if self.max_distance is None:
            return True
        return self.n_points > 0 and self.max_distance < threshold

    def summary(self) -> str:
        hist = ", ".join(f"{k}:{v}" for k, v in sorted(self.count_histogram.items()))
        if self.max_distance is None:
            return f"family={self.family} boundary_points={self.n_points} counts={{{hist}}}"
        return (
            f"family={self.family} boundary_points={self.n_points} "
            f"max_distance_cells={self.max_distance:.6g} median_distance_cells={self.median_distance:.6g} "
            f"counts={{{hist}}}"
        )


def unloaded_line_distance(rho, l2, l1: float = 1.0, cell: Tuple[float, float] = (1.0, 1.0)) -> np.ndarray:
    """Distance to the nearest of the three unloaded existence lines, in cell widths."""
    rho = np.asarray(rho, dtype=float)
    l2 = np.asarray(l2, dtype=float)
    lines = ((2.0, -1.0, -l1), (2.0, -1.0, l1), (2.0, 1.0, -l1))  # a rho + b l2 + c = 0
    dists = [np.abs(a * rho + b * l2 + c) / math.hypot(a * cell[0], b * cell[1]) for a, b, c in lines]
    return np.min(dists, axis=0)


def validate_boundaries(region: RegionMap, family: str) -> ValidationReport:
    """Distance (in base-grid cell widths) from refined crossings to the named analytic boundary."""
    if family not in FAMILIES:
        raise UnknownFamily(f"unknown boundary family {family!r}; choose from {FAMILIES}")
    spec = region.spec
    values, hist = np.unique(region.marked_counts, return_counts=True)
    histogram = {int(v): int(h) for v, h in zip(values, hist)}
    b = region.boundary
    if family == "none":
        return ValidationReport(family, len(b), None, None, None, histogram)
    axes = (spec.axis_x, spec.axis_y)
    fixed = spec.fixed_values()
    if family == "unloaded_lines":
        if set(axes) != {"rho", "l2"}:
            raise ValueError("unloaded_lines needs a (rho, l2) plane")
        rho, l2 = (b.x, b.y) if axes[0] == "rho" else (b.y, b.x)
        cell = spec.cell if axes[0] == "rho" else spec.cell[::-1]
        dist = unloaded_line_distance(rho, l2, fixed["l1"], cell)
    else:
        force = [a for a in axes if a in ("f3", "f4")]
        if "rho" not in axes or not force:
            raise ValueError("symmetric_sextics needs a (rho, f3|f4) plane")
        rho, f = (b.x, b.y) if axes[0] == "rho" else (b.y, b.x)
        cell = spec.cell if axes[0] == "rho" else spec.cell[::-1]
        low, up = symmetric_boundary_distance(f, rho, fixed["k"], cell)
        dist = np.minimum(low, up)
    if dist.size == 0:
        return ValidationReport(family, 0, float("inf"), float("inf"), dist, histogram)
    return ValidationReport(family, int(dist.size), float(dist.max()), float(np.median(dist)), dist, histogram)


# --- derived measurements -------------------------------------------------------


def interval_widths(region: RegionMap, count: int = 2) -> List[Tuple[float, float]]:
    """Per row, the total x-extent of ``count`` cells measured between refined crossings.

    Returns ``(y, width)`` for rows holding at least one region of that count.
    Each run of ``count`` nodes contributes the distance between the crossings
    that bound it (or the range end when it touches the edge of the plane).
    """
    spec = region.spec
    xs, ys = spec.xs, spec.ys
    key = region.marked_counts
    b = region.boundary
    along_x = b.edge == 0
    out = []
    for j, y in enumerate(ys):
        row = key[j] == count
        if not np.any(row):
            continue
        sel = along_x & (b.y == y)
        cross = np.sort(b.x[sel])
        width = 0.0
        padded = np.concatenate([[False], row, [False]])
        starts = np.nonzero(~padded[:-1] & padded[1:])[0]
        ends = np.nonzero(padded[:-1] & ~padded[1:])[0] - 1
        for s, e in zip(starts, ends):
            lo = spec.range_x[0] if s == 0 else cross[np.searchsorted(cross, xs[s]) - 1]
            hi = spec.range_x[1] if e == xs.size - 1 else cross[np.searchsorted(cross, xs[e])]
            width += hi - lo
        out.append((float(y), float(width)))
    return out


@dataclass
class RegionStack:
    """2-D maps stacked along a third axis."""

    axis_z: str
    z_values: np.ndarray
    maps: List[RegionMap]

    def counts(self) -> np.ndarray:
        return np.stack([m.marked_counts for m in self.maps])

    def volume_fraction(self, count: int = 2) -> float:
        return float(np.mean(self.counts() == count))

    def volume(self, count: int = 2) -> float:
        spec = self.maps[0].spec
        box = (spec.range_x[1] - spec.range_x[0]) * (spec.range_y[1] - spec.range_y[0])
        box *= float(self.z_values[-1] - self.z_values[0])
        return self.volume_fraction(count) * box

    def diagonal(self) -> np.ndarray:
        """Rows where the stack coordinate equals the map's y coordinate (stack index == row index)."""
        ys = self.maps[0].spec.ys
        if self.z_values.size != ys.size or not np.allclose(self.z_values, ys, rtol=0, atol=1e-12):
            raise ValueError("diagonal needs z values equal to the y grid")
        return np.stack([m.marked_counts[i] for i, m in enumerate(self.maps)])


def map_stack(
    spec: PlaneSpec,
    axis_z: str,
    z_values: Sequence[float],
    depth: int = 0,
    jobs: int = 1,
    tol: Optional[Tolerances] = None,
) -> RegionStack:
    """One 2-D map per value of ``axis_z`` (held in ``fixed``)."""
    if axis_z not in AXES or axis_z in (spec.axis_x, spec.axis_y):
        raise ValueError(f"invalid stack axis {axis_z!r}")
    maps = []
    for z in z_values:
        fixed = dict(spec.fixed)
        fixed[axis_z] = float(z)
        sub = PlaneSpec(spec.axis_x, spec.axis_y, spec.range_x, spec.range_y, spec.resolution, fixed, spec.symmetric)
        maps.append(map_region(sub, depth=depth, jobs=jobs, tol=tol))
    return RegionStack(axis_z, np.asarray(z_values, dtype=float), maps)


def count_volume(
    l2: float,
    rho_range: Tuple[float, float] = (0.01, 2.0),
    f3_range: Tuple[float, float] = (0.0, 10.0),
    f4_range: Tuple[float, float] = (0.0, 10.0),
    resolution: int = 50,
    count: int = 2,
    fixed: Optional[Dict[str, float]] = None,
    jobs: int = 1,
    tol: Optional[Tolerances] = None,
) -> float:
    """Fraction of a ``resolution**3`` (rho, f3, f4) grid with ``count`` stable solutions."""
    tol = tol or Tolerances.from_env()
    base = dict(fixed or {})
    base["l2"] = l2
    keys = []
    for f3 in np.linspace(*f3_range, resolution):
        slab = PlaneSpec("rho", "f4", rho_range, f4_range, resolution, dict(base, f3=float(f3)))
        X, Y = np.meshgrid(slab.xs, slab.ys)
        c, f = _evaluate(slab, X, Y, tol, jobs)
        keys.append(_key(c, f))
    return float(np.mean(np.concatenate(keys) == count))


# --- transition point of the two-stable region ------------------------------------


@dataclass
class TransitionPoint:
    """Where the two-stable interval closes along a force direction.

    ``magnitude_bracket`` runs from the last magnitude with a measured interval
    to the closure estimate; ``rho_interval`` is the interval measured at the
    lower end.  Near a tangential closure the estimate is good to about 1e-5
    relative, limited by the Hessian degeneracy tolerance.
    """

    direction: Tuple[float, float]
    magnitude_bracket: Tuple[float, float]
    rho_interval: Tuple[float, float]
    rho: float  # interval centre extrapolated to the closure estimate

    @property
    def magnitude(self) -> float:
        return float(self.magnitude_bracket[1])

    @property
    def forces(self) -> Tuple[float, float]:
        s = self.magnitude
        return s * self.direction[0], s * self.direction[1]


def _two_mask(base, d, s, rho, tol) -> np.ndarray:
    n, flag = count_stable_batch(base.l1, base.l2, base.k, s * d[0], s * d[1], rho, base.f3x, base.f4x, tol)
    return (n == 2) & ~flag


def _edge(base, d, s, inside, outside, tol, rel: float = 1e-13) -> float:
    """Multisection between a two-stable ``inside`` point and an ``outside`` point."""
    a, b = inside, outside
    while abs(b - a) > rel * max(1.0, abs(a)):
        grid = np.linspace(a, b, 34)[1:-1]
        ok = _two_mask(base, d, s, grid, tol)
        j = int(np.argmin(ok)) if not ok.all() else len(grid)
        # last inside sample before the first outside one
        a_new = grid[j - 1] if j > 0 else a
        b_new = grid[j] if j < len(grid) else b
        if (a_new, b_new) == (a, b):
            break
        a, b = a_new, b_new
    return float(a)


def _interval(base, d, s, lo, hi, samples, tol) -> Optional[Tuple[float, float]]:
    """Refined edges of the two-stable interval scanned on ``[lo, hi]``, or None."""
    rho = np.linspace(lo, hi, samples)
    hit = np.nonzero(_two_mask(base, d, s, rho, tol))[0]
    if hit.size == 0:
        return None
    i0, i1 = hit[0], hit[-1]
    left = _edge(base, d, s, rho[i0], rho[i0 - 1], tol) if i0 > 0 else float(lo)
    right = _edge(base, d, s, rho[i1], rho[i1 + 1], tol) if i1 + 1 < samples else float(hi)
    return left, right


def transition_point(
    base: Optional[MechanismParams] = None,
    direction: Tuple[float, float] = (1.0, 1.0),
    s_max: float = 200.0,
    rho_range: Tuple[float, float] = (1e-3, 2.0),
    samples: int = 400,
    s_tol: float = 1e-6,
    tol: Optional[Tolerances] = None,
    min_width: float = 1e-6,
) -> Optional[TransitionPoint]:
    """Force magnitude along ``direction`` (``f3, f4 = s * direction``) where the two-stable interval closes.

    A coarse sweep finds the last magnitude with a visible interval.  The
    interval then closes so fast (tangentially, width ~ (s* - s)**2 in the
    symmetric case) that plain rescans lose it, so the search follows its
    edges: each probe scans a window around the extrapolated centre and refines
    both edges, and the next magnitude comes from a safeguarded secant step on
    sqrt(width), which is exact for a tangential closure.  Stops when the
    bracket is below ``s_tol`` or the width below ``min_width`` (narrower
    intervals are distorted by the Hessian degeneracy band); the upper end is
    then the secant estimate.  Returns None if the region persists up to
    ``s_max`` or never appears.
    """
    base = base or MechanismParams()
    tol = tol or Tolerances.from_env()
    norm = math.hypot(*direction)
    d = (direction[0] / norm, direction[1] / norm)
    coarse = np.linspace(0.0, s_max, 101)
    history: List[Tuple[float, float, float]] = []  # (s, lo, hi)
    for s in coarse:
        found = _interval(base, d, float(s), rho_range[0], rho_range[1], samples, tol)
        if found is None:
            if history:
                break
            continue
        history.append((float(s), *found))
    else:
        return None
    if not history:
        return None
    # a coarse miss only means the interval got narrower than the scan; emptiness
    # is decided by the windowed probes below
    s_empty = s_max
    step = coarse[1] - coarse[0]

    def estimate() -> float:
        s1, lo1, hi1 = history[-1]
        guess = s1 + step
        if len(history) >= 2:
            s0, lo0, hi0 = history[-2]
            r0, r1 = math.sqrt(max(hi0 - lo0, 0.0)), math.sqrt(max(hi1 - lo1, 0.0))
            if r0 > r1:
                guess = s1 + r1 * (s1 - s0) / (r0 - r1)
        return min(s_empty, guess)

    for _ in range(400):
        s1, lo1, hi1 = history[-1]
        s_star = estimate()
        if s_star - s1 <= s_tol or hi1 - lo1 <= min_width:
            break
        probe = s1 + 0.5 * (s_star - s1)
        width = hi1 - lo1
        centre = 0.5 * (lo1 + hi1)
        drift = 0.0
        if len(history) >= 2:
            s0, lo0, hi0 = history[-2]
            drift = (centre - 0.5 * (lo0 + hi0)) / (s1 - s0) * (probe - s1)
        # window around the extrapolated centre, sampled finer than the expected width
        centre += drift
        half = 4.0 * width + 0.5 * abs(drift) + min_width
        n = int(min(MAX_PROBE_SAMPLES, max(samples, math.ceil(64.0 * half / width))))
        found = _interval(base, d, probe, max(rho_range[0], centre - half), min(rho_range[1], centre + half), n, tol)
        if found is None:
            s_empty = probe
        else:
            history.append((probe, *found))
    s1, lo1, hi1 = history[-1]
    s_star = max(s1, estimate())
    rho_star = 0.5 * (lo1 + hi1)
    if len(history) >= 2:
        s0, lo0, hi0 = history[-2]
        rho_star += (rho_star - 0.5 * (lo0 + hi0)) / (s1 - s0) * (s_star - s1)
    return TransitionPoint(d, (s1, s_star), (lo1, hi1), rho_star)
