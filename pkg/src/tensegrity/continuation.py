"""Equilibrium branches over a sweep of the actuator input.

Every sample of rho is solved from scratch and the solution sets of
consecutive samples are matched by a minimum-cost assignment on wrapped angle
distance.  Solutions left unmatched end or start a branch.  Where the solution
count changes, the location is refined by bisection on the count; stability
changes along a branch are refined by bisection on the class of the
nearest solution.  Each located point is then classified by the number of
branch arms meeting there.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment, minimize, root

from .mechanism import (
    Configuration,
    Equilibrium,
    MechanismParams,
    StabilityClass,
    Tolerances,
    angle_distance,
    energy_kernel,
    gradient_kernel,
    hessian,
    make_equilibrium,
    wrap_angle,
)
from .polysolve import DegenerateResultant, solve_equilibria

BISECT_TOL = 1e-6
ARM_RADIUS = 0.05
ARM_RHO_TOL = 1e-4
JUMP_OFFSET = 1e-4


class EventKind(enum.Enum):
    FOLD = "Fold"
    BRANCH_POINT = "BranchPoint"
    STABILITY_CHANGE = "StabilityChange"
    TERMINATED = "Terminated"


class InsufficientData(RuntimeError):
    pass


@dataclass(frozen=True)
class Jump:
    rho: float
    config: Configuration
    target_branch: Optional[int]


@dataclass
class Event:
    rho: float
    kind: EventKind
    bracket: Tuple[float, float]
    config: Optional[Configuration] = None
    jump: Optional[Jump] = None
    note: str = ""


@dataclass
class Endpoint:
    """Where a branch starts or stops: refined location and the configuration there."""

    rho: float
    bracket: Tuple[float, float]
    config: Optional[Configuration]
    at_range_end: bool = False


@dataclass
class Branch:
    branch_id: int
    points: List[Tuple[float, Equilibrium]] = field(default_factory=list)
    events: List[Event] = field(default_factory=list)
    start: Optional[Endpoint] = None
    end: Optional[Endpoint] = None

    @property
    def rhos(self) -> np.ndarray:
        return np.array([r for r, _ in self.points])

    def angles(self) -> np.ndarray:
        return np.array([(e.theta1, e.theta2) for _, e in self.points])

    def config_at(self, rho: float) -> Optional[Configuration]:
        """Linear interpolation (on unwrapped angles) between the samples straddling ``rho``."""
        rhos = self.rhos
        if rhos.size == 0 or rho < rhos[0] or rho > rhos[-1]:
            return None
        i = int(np.searchsorted(rhos, rho))
        if i < rhos.size and rhos[i] == rho:
            e = self.points[i][1]
            return e.config
        a, b = self.points[i - 1][1], self.points[i][1]
        w = (rho - rhos[i - 1]) / (rhos[i] - rhos[i - 1])
        d1 = wrap_angle(b.theta1 - a.theta1)
        d2 = wrap_angle(b.theta2 - a.theta2)
        return Configuration(a.theta1 + w * d1, a.theta2 + w * d2)


@dataclass(frozen=True)
class EndpointReport:
    kind: EventKind
    arms_left: int
    arms_right: int


@dataclass(frozen=True)
class StableSegment:
    branch_id: int
    rho_lo: float
    rho_hi: float
    kind_lo: Optional[EventKind]
    kind_hi: Optional[EventKind]
    mean_theta: Tuple[float, float]


# --- sweep ------------------------------------------------------------------------


def _solve_chunk(args):
    params, rhos, tol = args
    out = []
    for rho in rhos:
        try:
            out.append(solve_equilibria(params, float(rho), tol))
        except DegenerateResultant:
            out.append(None)
    return out


def _solve_all(params, rhos, tol, jobs) -> List[Optional[List[Equilibrium]]]:
    if jobs > 1 and len(rhos) > 1:
        chunks = [(params, part, tol) for part in np.array_split(np.asarray(rhos), jobs) if part.size]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_solve_chunk, chunks))
        return [s for part in parts for s in part]
    return _solve_chunk((params, rhos, tol))


def _distance_matrix(a: Sequence[Tuple[float, float]], b: Sequence[Tuple[float, float]]) -> np.ndarray:
    A = np.asarray(a, dtype=float).reshape(-1, 2)
    B = np.asarray(b, dtype=float).reshape(-1, 2)
    d1 = angle_distance(A[:, None, 0], B[None, :, 0])
    d2 = angle_distance(A[:, None, 1], B[None, :, 1])
    return np.maximum(d1, d2)


def _tangent(params: MechanismParams, e: Equilibrium) -> np.ndarray:
    """``d(theta)/d(rho)`` along the branch through ``e`` by the implicit function theorem."""
    h = hessian(params, e.rho, e.config)
    # only the spring terms of the gradient depend on rho
    dg = np.array([2 * params.k * params.l1 * math.sin(e.theta1), 2 * params.k * params.l2 * math.sin(e.theta2)])
    try:
        t = -np.linalg.solve(h, dg)
    except np.linalg.LinAlgError:
        return np.full(2, np.inf)
    return t if np.all(np.isfinite(t)) else np.full(2, np.inf)


def _predict(params: MechanismParams, e: Equilibrium, rho: float, step: float) -> Tuple[Tuple[float, float], float]:
    """Predicted angles at ``rho`` and the matching radius ``5 * step * max(|tangent|, 1)``."""
    t = _tangent(params, e)
    slope = float(np.max(np.abs(t)))
    radius = min(math.pi, 5.0 * step * max(slope, 1.0))
    dr = rho - e.rho
    if slope * abs(dr) <= 0.1:
        return (e.theta1 + t[0] * dr, e.theta2 + t[1] * dr), radius
    return (e.theta1, e.theta2), radius


def _nearest(eqs: Sequence[Equilibrium], config: Configuration) -> Optional[Equilibrium]:
    if not eqs:
        return None
    return min(eqs, key=lambda e: e.config.distance(config))


def _bisect(pred, lo: float, hi: float, tol: float = BISECT_TOL) -> Tuple[float, float]:
    """Shrink ``[lo, hi]`` keeping ``pred(lo)`` true and ``pred(hi)`` false."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi


def _safe_solve(params, rho, tol) -> List[Equilibrium]:
    try:
        return solve_equilibria(params, rho, tol)
    except DegenerateResultant:
        return []


def trace_branches(
    params: MechanismParams,
    rho_range: Tuple[float, float],
    steps: int,
    tol: Optional[Tolerances] = None,
    jobs: int = 1,
    window_steps: int = 10,
    jumps: bool = True,
) -> List[Branch]:
    """Sweep ``steps`` samples over ``rho_range`` and return matched branches with events."""
    lo, hi = float(rho_range[0]), float(rho_range[1])
    if steps < 2:
        raise ValueError("steps must be at least 2")
    if not (0.0 < lo < hi and math.isfinite(hi)):
        raise ValueError(f"invalid rho range {rho_range!r}")
    tol = tol or Tolerances.from_env()
    rhos = np.linspace(lo, hi, steps)
    step = float(rhos[1] - rhos[0])
    sols = _solve_all(params, rhos, tol, jobs)

    branches: List[Branch] = []
    live: List[int] = []
    # interval index -> (ending branch ids, starting branch ids)
    changes: Dict[int, Tuple[List[int], List[int]]] = {}
    for i, eqs in enumerate(sols):
        rho = float(rhos[i])
        if eqs is None:
            for b in live:
                branches[b].end = Endpoint(float(rhos[i - 1]), (float(rhos[i - 1]), rho), None)
                branches[b].events.append(Event(float(rhos[i - 1]), EventKind.TERMINATED, (float(rhos[i - 1]), rho), note="solver gap"))
            live = []
            continue
        assigned: Dict[int, int] = {}
        if live and eqs:
            predicted = [_predict(params, branches[b].points[-1][1], rho, step) for b in live]
            cost = _distance_matrix([p for p, _ in predicted], [(e.theta1, e.theta2) for e in eqs])
            rows, cols = linear_sum_assignment(cost)
            for r, c in zip(rows, cols):
                if cost[r, c] <= predicted[r][1]:
                    assigned[c] = live[r]
        ended = [b for b in live if b not in assigned.values()]
        started = []
        new_live = []
        for c, e in enumerate(eqs):
            if c in assigned:
                bid = assigned[c]
            else:
                bid = len(branches)
                branches.append(Branch(bid))
                started.append(bid)
            branches[bid].points.append((rho, _tag(e, bid)))
            new_live.append(bid)
        if i > 0 and (ended or started) and sols[i - 1] is not None:
            changes[i] = (ended, started)
        elif i == 0 or sols[i - 1] is None:
            for bid in started:
                branches[bid].start = Endpoint(rho, (rho, rho), branches[bid].points[0][1].config, at_range_end=(i == 0))
        live = new_live
    for b in live:
        branches[b].end = Endpoint(hi, (hi, hi), branches[b].points[-1][1].config, at_range_end=True)

    _locate_endpoints(params, rhos, sols, branches, changes, tol)
    _locate_stability_changes(params, branches, tol)
    _classify_events(params, branches, window_steps * step, tol, jumps)
    return branches


def _tag(e: Equilibrium, bid: int) -> Equilibrium:
    return Equilibrium(e.rho, e.config, e.energy, e.grad_residual, e.h11, e.det_h, e.stability, bid)


def _locate_endpoints(params, rhos, sols, branches, changes, tol) -> None:
    for i, (ended, started) in sorted(changes.items()):
        a, b = float(rhos[i - 1]), float(rhos[i])
        n_a, n_b = len(sols[i - 1]), len(sols[i])
        if n_a != n_b:
            lo, hi = _bisect(lambda r: len(_safe_solve(params, r, tol)) == n_a, a, b)
            resolved = True
        else:
            lo, hi, resolved = a, b, False
        rho_star = 0.5 * (lo + hi)
        eqs_lo = _safe_solve(params, lo, tol) if resolved else sols[i - 1]
        eqs_hi = _safe_solve(params, hi, tol) if resolved else sols[i]
        for bid in ended:
            last = branches[bid].points[-1][1]
            near = _nearest(eqs_lo, last.config) if resolved else None
            branches[bid].end = Endpoint(rho_star, (lo, hi), near.config if near else last.config)
            if not resolved:
                branches[bid].events.append(Event(rho_star, EventKind.TERMINATED, (lo, hi), last.config, note="unresolved"))
        for bid in started:
            first = branches[bid].points[0][1]
            near = _nearest(eqs_hi, first.config) if resolved else None
            branches[bid].start = Endpoint(rho_star, (lo, hi), near.config if near else first.config)
            if not resolved:
                branches[bid].events.append(Event(rho_star, EventKind.TERMINATED, (lo, hi), first.config, note="unresolved"))


def _locate_stability_changes(params, branches, tol) -> None:
    for br in branches:
        for (ra, ea), (rb, eb) in zip(br.points[:-1], br.points[1:]):
            if ea.stability is eb.stability:
                continue

            def same_as_a(r, ra=ra, rb=rb, ea=ea, eb=eb):
                guess = _interp(ea, eb, (r - ra) / (rb - ra))
                near = _nearest(_safe_solve(params, r, tol), guess)
                return near is not None and near.stability is ea.stability

            lo, hi = _bisect(same_as_a, ra, rb)
            rho_star = 0.5 * (lo + hi)
            config = _interp(ea, eb, (rho_star - ra) / (rb - ra))
            near = _nearest(_safe_solve(params, rho_star, tol), config)
            if near is not None:
                config = near.config
            br.events.append(Event(rho_star, EventKind.STABILITY_CHANGE, (lo, hi), config))


def _interp(a: Equilibrium, b: Equilibrium, w: float) -> Configuration:
    return Configuration(
        a.theta1 + w * wrap_angle(b.theta1 - a.theta1),
        a.theta2 + w * wrap_angle(b.theta2 - a.theta2),
    )


# --- classification ------------------------------------------------------------------


def classify_endpoint(
    branches: Sequence[Branch],
    rho_star: float,
    window: float,
    config: Configuration,
    radius: float = ARM_RADIUS,
    rho_tol: float = ARM_RHO_TOL,
) -> EndpointReport:
    """Count the branch arms meeting at ``(rho_star, config)``.

    An arm is a branch that ends or starts there (one arm on the side where
    it lives) or passes through within ``radius`` (one arm each side).  Two
    arms on one side and none on the other is a fold; three or more arms in
    total is a branch point; one arm each side is a plain stability change.
    """
    left_samples = set()
    right_samples = set()
    for br in branches:
        for r, _ in br.points:
            if rho_star - window <= r < rho_star:
                left_samples.add(r)
            elif rho_star < r <= rho_star + window:
                right_samples.add(r)
    if len(left_samples) < 2 and len(right_samples) < 2:
        raise InsufficientData(f"fewer than two samples within {window:g} of rho={rho_star:g}")
    left = right = 0
    for br in branches:
        if not br.points:
            continue
        ends_here = (
            br.end is not None
            and not br.end.at_range_end
            and abs(br.end.rho - rho_star) <= rho_tol
            and br.end.config is not None
            and br.end.config.distance(config) <= radius
        )
        starts_here = (
            br.start is not None
            and not br.start.at_range_end
            and abs(br.start.rho - rho_star) <= rho_tol
            and br.start.config is not None
            and br.start.config.distance(config) <= radius
        )
        if ends_here:
            left += 1
        if starts_here:
            right += 1
        if not ends_here and not starts_here:
            through = br.config_at(rho_star)
            if through is not None and through.distance(config) <= radius:
                left += 1
                right += 1
    if left + right >= 3:
        kind = EventKind.BRANCH_POINT
    elif (left, right) in ((2, 0), (0, 2)):
        kind = EventKind.FOLD
    elif (left, right) == (1, 1):
        kind = EventKind.STABILITY_CHANGE
    else:
        kind = EventKind.TERMINATED
    return EndpointReport(kind, left, right)


def _lowest_mode(params, rho, config) -> np.ndarray:
    w, v = np.linalg.eigh(hessian(params, rho, config))
    mode = v[:, 0]
    if mode[np.argmax(np.abs(mode))] < 0:
        mode = -mode
    return mode


def jump_target(
    params: MechanismParams,
    rho_star: float,
    config: Configuration,
    direction: int,
    branches: Sequence[Branch] = (),
    tol: Optional[Tolerances] = None,
    offset: float = JUMP_OFFSET,
) -> Optional[Jump]:
    """Stable configuration reached by energy descent just past ``rho_star`` in the sweep ``direction``.

    Descent starts at ``config`` nudged along the softest Hessian mode, so it
    also leaves saddles.  The minimum is snapped to the solver's stable
    solution at that rho and attributed to the branch passing closest to it.
    """
    tol = tol or Tolerances.from_env()
    rho = rho_star + direction * offset
    if rho <= 0:
        return None
    args = (params.l1, params.l2, params.k, params.f3, params.f4, params.f3x, params.f4x, rho)
    start = np.array([config.theta1, config.theta2]) + 1e-3 * _lowest_mode(params, rho, config)
    res = minimize(
        lambda x: float(energy_kernel(*args, x[0], x[1])),
        start,
        jac=lambda x: np.array(gradient_kernel(*args, x[0], x[1]), dtype=float),
        method="BFGS",
        options={"gtol": 1e-10 * params.scale(rho)},
    )
    landed = Configuration(*res.x)
    stable = [e for e in _safe_solve(params, rho, tol) if e.is_stable]
    near = _nearest(stable, landed)
    if near is None or near.config.distance(landed) > 1e-3:
        return Jump(rho, landed, None)
    target = None
    best = math.inf
    for br in branches:
        c = br.config_at(rho)
        if c is not None and c.distance(near.config) < best:
            best, target = c.distance(near.config), br.branch_id
    return Jump(rho, near.config, target if best <= ARM_RADIUS else None)


def refine_fold(
    params: MechanismParams,
    rho: float,
    config: Configuration,
    bracket: Tuple[float, float],
) -> Optional[Tuple[float, Configuration]]:
    """Newton on ``grad U = 0, det H = 0`` in ``(theta1, theta2, rho)``.

    Bisection on the solution count only pins a fold to the bracket width,
    and det H grows like the square root of the distance to it.  Returns
    None unless the system converges near ``bracket``.
    """
    s = params.scale(rho)

    def system(x):
        th1, th2, r = x
        g = gradient_kernel(params.l1, params.l2, params.k, params.f3, params.f4, params.f3x, params.f4x, r, th1, th2)
        det = np.linalg.det(hessian(params, r, Configuration(th1, th2)))
        return [g[0] / s, g[1] / s, det / s**2]

    res = root(system, [config.theta1, config.theta2, rho], method="hybr", options={"xtol": 1e-14})
    if not res.success:
        return None
    th1, th2, r = res.x
    slack = max(bracket[1] - bracket[0], BISECT_TOL)
    if not bracket[0] - slack <= r <= bracket[1] + slack:
        return None
    refined = Configuration(wrap_angle(th1), wrap_angle(th2))
    if refined.distance(config) > ARM_RADIUS:
        return None
    return float(r), refined


def _classify_events(params, branches, window, tol, jumps: bool) -> None:
    for br in branches:
        for which, endpoint, direction in (("start", br.start, -1), ("end", br.end, 1)):
            if endpoint is None or endpoint.at_range_end:
                if endpoint is not None:
                    br.events.append(Event(endpoint.rho, EventKind.TERMINATED, endpoint.bracket, endpoint.config, note="range end"))
                continue
            if any(e.note in ("unresolved", "solver gap") and abs(e.rho - endpoint.rho) <= ARM_RHO_TOL for e in br.events):
                continue
            try:
                kind = classify_endpoint(branches, endpoint.rho, window, endpoint.config).kind
            except InsufficientData:
                kind = EventKind.TERMINATED
            if kind is EventKind.STABILITY_CHANGE:
                kind = EventKind.TERMINATED
            event = Event(endpoint.rho, kind, endpoint.bracket, endpoint.config, note=which)
            if kind is EventKind.FOLD:
                refined = refine_fold(params, endpoint.rho, endpoint.config, endpoint.bracket)
                if refined is not None:
                    event.rho, event.config = refined
            edge = br.points[0][1] if which == "start" else br.points[-1][1]
            if jumps and edge.is_stable:
                event.jump = jump_target(params, endpoint.rho, endpoint.config, direction, branches, tol)
            br.events.append(event)
        extra = []
        for ev in br.events:
            if ev.kind is not EventKind.STABILITY_CHANGE:
                continue
            try:
                report = classify_endpoint(branches, ev.rho, window, ev.config)
            except InsufficientData:
                continue
            if jumps:
                before = _side_class(br, ev.rho, -1)
                direction = 1 if before is StabilityClass.STABLE else -1
                ev.jump = jump_target(params, ev.rho, ev.config, direction, branches, tol)
            if report.kind is EventKind.BRANCH_POINT:
                extra.append(Event(ev.rho, EventKind.BRANCH_POINT, ev.bracket, ev.config, note="through"))
        br.events.extend(extra)
        br.events.sort(key=lambda e: (e.rho, e.kind.value))


def _side_class(br: Branch, rho: float, side: int) -> Optional[StabilityClass]:
    pts = [(r, e) for r, e in br.points if (r < rho if side < 0 else r > rho)]
    if not pts:
        return None
    r, e = pts[-1] if side < 0 else pts[0]
    return e.stability


# --- summaries and export -------------------------------------------------------------

_PRIORITY = {
    EventKind.BRANCH_POINT: 0,
    EventKind.FOLD: 1,
    EventKind.STABILITY_CHANGE: 2,
    EventKind.TERMINATED: 3,
}


def _event_near(br: Branch, lo: float, hi: float) -> Optional[Event]:
    hits = [e for e in br.events if lo - ARM_RHO_TOL <= e.rho <= hi + ARM_RHO_TOL]
    if not hits:
        return None
    return min(hits, key=lambda e: _PRIORITY[e.kind])


def stable_segments(branches: Sequence[Branch]) -> List[StableSegment]:
    """Maximal runs of stable samples on each branch, with the events bounding them."""
    out = []
    for br in branches:
        pts = br.points
        i = 0
        while i < len(pts):
            if not pts[i][1].is_stable:
                i += 1
                continue
            j = i
            while j + 1 < len(pts) and pts[j + 1][1].is_stable:
                j += 1
            lo_prev = pts[i - 1][0] if i > 0 else (br.start.bracket[0] if br.start else pts[i][0])
            hi_next = pts[j + 1][0] if j + 1 < len(pts) else (br.end.bracket[1] if br.end else pts[j][0])
            ev_lo = _event_near(br, lo_prev, pts[i][0])
            ev_hi = _event_near(br, pts[j][0], hi_next)
            run = np.array([(e.theta1, e.theta2) for _, e in pts[i : j + 1]])
            out.append(
                StableSegment(
                    br.branch_id,
                    ev_lo.rho if ev_lo else pts[i][0],
                    ev_hi.rho if ev_hi else pts[j][0],
                    ev_lo.kind if ev_lo else None,
                    ev_hi.kind if ev_hi else None,
                    (float(run[:, 0].mean()), float(run[:, 1].mean())),
                )
            )
            i = j + 1
    return out


CSV_COLUMNS = ["rho", "branch_id", "theta1", "theta2", "energy", "h11", "detH", "stability", "event"]


def branches_to_csv(params: MechanismParams, branches: Sequence[Branch], tol: Optional[Tolerances] = None) -> str:
    """Point rows per branch followed by one row per event (``event`` column set)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)

    def fmt(x: float) -> str:
        return f"{x:.12g}"

    for br in branches:
        for rho, e in br.points:
            writer.writerow(
                [fmt(rho), br.branch_id, fmt(e.theta1), fmt(e.theta2), fmt(e.energy), fmt(e.h11), fmt(e.det_h), e.stability.value, ""]
            )
    for br in branches:
        for ev in br.events:
            if ev.config is None:
                writer.writerow([fmt(ev.rho), br.branch_id, "", "", "", "", "", "", ev.kind.value])
                continue
            e = make_equilibrium(params, ev.rho, ev.config.theta1, ev.config.theta2, tol)
            writer.writerow(
                [fmt(ev.rho), br.branch_id, fmt(e.theta1), fmt(e.theta2), fmt(e.energy), fmt(e.h11), fmt(e.det_h), e.stability.value, ev.kind.value]
            )
    return buf.getvalue()
