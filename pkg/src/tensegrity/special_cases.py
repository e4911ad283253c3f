"""Closed-form solvers for the symmetric and the unloaded mechanism.

Symmetric case (``l1 = l2 = l``, ``f3 = f4 = f``): the difference of the two
tan-half equations factors as

    2 (t1 - t2) (f (t1 + t2) + 2 k rho (1 - t1 t2)),

so solutions either have equal angles (a quartic in ``t``) or lie on the
second factor, which gives ``t1`` as a rational function of ``t2``.

Unloaded case (``f3 = f4 = 0``): the four flat configurations plus, inside
``|l1 - l2| < 2 rho < l1 + l2``, a mirrored pair of parallelograms.

Both are used as fast paths and as independent oracles for the general solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as P

from .mechanism import (
    Equilibrium,
    MechanismParams,
    Tolerances,
    check_rho,
    make_equilibrium,
    newton_polish,
)
from .polysolve import CANDIDATE_IMAG, UnivariatePoly, dedupe_configurations, halfangle_system, real_roots


@dataclass(frozen=True)
class SymmetricInstance:
    l: float = 1.0
    k: float = 100.0
    f: float = 0.0
    rho: float = 1.0

    def __post_init__(self) -> None:
        if not (self.l > 0 and self.k > 0):
            raise ValueError("l and k must be positive")
        check_rho(self.rho)

    @property
    def params(self) -> MechanismParams:
        return MechanismParams(self.l, self.l, self.k, self.f, self.f)


@dataclass(frozen=True)
class UnloadedInstance:
    l1: float = 1.0
    l2: float = 1.0
    k: float = 100.0
    rho: float = 1.0

    def __post_init__(self) -> None:
        if not (self.l1 > 0 and self.l2 > 0 and self.k > 0):
            raise ValueError("l1, l2 and k must be positive")
        check_rho(self.rho)

    @property
    def params(self) -> MechanismParams:
        return MechanismParams(self.l1, self.l2, self.k)

    def has_parallelogram(self) -> bool:
        return abs(self.l1 - self.l2) < 2 * self.rho < self.l1 + self.l2


def _finish(params: MechanismParams, rho: float, raw, tol: Tolerances) -> List[Equilibrium]:
    tol_abs = tol.tol_eq * params.scale(rho)
    polished = []
    for th1, th2 in raw:
        th1, th2, res = newton_polish(params, rho, th1, th2)
        if res <= tol_abs:
            polished.append((th1, th2, res))
    unique = dedupe_configurations(polished, tol.dedupe_tol)
    eqs = [make_equilibrium(params, rho, th1, th2, tol) for th1, th2, _ in unique]
    eqs.sort(key=lambda e: (round(e.theta1, 9), round(e.theta2, 9)))
    return eqs


def equal_angle_quartic(inst: SymmetricInstance) -> UnivariatePoly:
    """Ascending coefficients of the quartic satisfied by ``t = tan(theta/2)`` when ``theta1 = theta2``."""
    k, l, f, rho = inst.k, inst.l, inst.f, inst.rho
    return UnivariatePoly([f, 4 * k * (l - rho), 0.0, -4 * k * (l + rho), -f])


def distinct_angle_polynomial(inst: SymmetricInstance) -> UnivariatePoly:
    """Polynomial in ``t2`` left after substituting the second factor into the rod-1 equation.

    The factor gives ``t1 = N / D`` with ``N = -(f t2 + 2 k rho)`` and
    ``D = f - 2 k rho t2``; multiplying the rod-1 equation by ``D**2`` clears the
    denominator.  The result carries the extraneous factor ``1 + t2**2``.
    """
    k, f, rho = inst.k, inst.f, inst.rho
    p, _ = halfangle_system(inst.params, rho)
    num = np.array([-2 * k * rho, -f])
    den = np.array([f, -2 * k * rho])
    total = np.zeros(5)
    for i in range(3):
        base = P.polymul(P.polypow(num, i), P.polypow(den, 2 - i))
        for j in range(3):
            term = P.polymul(base, [0.0] * j + [p.c[i, j]])
            total[: len(term)] += term
    return UnivariatePoly(total)


def _second_factor_t1(inst: SymmetricInstance, t2: float) -> Optional[float]:
    den = inst.f - 2 * inst.k * inst.rho * t2
    if den == 0.0:
        return None
    return -(inst.f * t2 + 2 * inst.k * inst.rho) / den


def solve_symmetric(inst: SymmetricInstance, tol: Optional[Tolerances] = None) -> List[Equilibrium]:
    """All equilibria of a symmetric instance, sorted like the general solver."""
    tol = tol or Tolerances.from_env()
    params = inst.params
    if abs(inst.f) <= 1e-12 * inst.k * max(inst.l, inst.rho):
        # the quartic loses its leading term; the angle-pi solutions are flat
        return solve_unloaded(UnloadedInstance(inst.l, inst.l, inst.k, inst.rho), tol)
    raw: List[Tuple[float, float]] = []
    for t, _ in real_roots(equal_angle_quartic(inst), imag_tol=CANDIDATE_IMAG):
        theta = 2.0 * math.atan(t)
        raw.append((theta, theta))
    for t2, _ in real_roots(distinct_angle_polynomial(inst), imag_tol=CANDIDATE_IMAG):
        t1 = _second_factor_t1(inst, t2)
        if t1 is None or abs(t1 - t2) <= 1e-9 * max(1.0, abs(t2)):
            continue
        raw.append((2.0 * math.atan(t1), 2.0 * math.atan(t2)))
    return _finish(params, inst.rho, raw, tol)


def is_distinct_angle(eq: Equilibrium, tol: float = 1e-6) -> bool:
    return abs(eq.theta1 - eq.theta2) > tol


def parallelogram_angles(inst: UnloadedInstance) -> Optional[Tuple[float, float]]:
    """Positive-sine parallelogram ``(theta1, theta2)``, or None outside the existence window."""
    if not inst.has_parallelogram():
        return None
    l1, l2, rho = inst.l1, inst.l2, inst.rho
    c1 = (l1 * l1 + 4 * rho * rho - l2 * l2) / (4 * rho * l1)
    c2 = (l2 * l2 + 4 * rho * rho - l1 * l1) / (4 * rho * l2)
    return math.acos(min(1.0, max(-1.0, c1))), math.acos(min(1.0, max(-1.0, c2)))


def solve_unloaded(inst: UnloadedInstance, tol: Optional[Tolerances] = None) -> List[Equilibrium]:
    """Flat configurations and, where it exists, the mirrored parallelogram pair."""
    tol = tol or Tolerances.from_env()
    params = inst.params
    eqs = [make_equilibrium(params, inst.rho, a, b, tol) for a in (0.0, math.pi) for b in (0.0, math.pi)]
    angles = parallelogram_angles(inst)
    if angles is not None:
        a, b = angles
        eqs.append(make_equilibrium(params, inst.rho, a, b, tol))
        eqs.append(make_equilibrium(params, inst.rho, -a, -b, tol))
    eqs.sort(key=lambda e: (round(e.theta1, 9), round(e.theta2, 9)))
    return eqs


def sextic_coefficients(k: float = 100.0) -> Tuple[np.ndarray, np.ndarray]:
    """Coefficient grids ``C[i, j]`` of ``rho**i * f**j`` for the lower and upper symmetric boundaries.

    Both curves bound the two-stable region of the unit symmetric mechanism
    in the (rho, f) plane; the printed forms embed ``k = 100``.
    """
    low = np.zeros((7, 7))
    up = np.zeros((7, 7))
    # shared part (f**2 + 4 k**2 rho**2)**3
    for grid in (low, up):
        grid[0, 6] = 1.0
        grid[2, 4] = 12 * k**2
        grid[4, 2] = 48 * k**4
        grid[6, 0] = 64 * k**6
    low[2, 2] += -16 * k**4
    up[0, 4] += -12 * k**2
    up[2, 2] += 336 * k**4
    up[4, 0] += -192 * k**6
    up[0, 2] += 48 * k**4
    up[2, 0] += 192 * k**6
    up[0, 0] += -64 * k**6
    return low, up


def symmetric_boundary_residual(f4, rho, k: float = 100.0):
    """Values ``(r_lower, r_upper)`` of the two symmetric boundary sextics."""
    low, up = sextic_coefficients(k)
    return P.polyval2d(rho, f4, low), P.polyval2d(rho, f4, up)


def symmetric_boundary_distance(f4, rho, k: float = 100.0, cell: Tuple[float, float] = (1.0, 1.0)):
    """First-order distance ``|r| / |grad r|`` to each sextic.

    With ``cell = (d_rho, d_f)`` the distance is measured in cell widths.
    """
    out = []
    for grid in sextic_coefficients(k):
        val = P.polyval2d(rho, f4, grid)
        d_rho = P.polyval2d(rho, f4, P.polyder(grid, axis=0))
        d_f = P.polyval2d(rho, f4, P.polyder(grid, axis=1))
        out.append(np.abs(val) / np.maximum(np.hypot(d_rho * cell[0], d_f * cell[1]), 1e-300))
    return tuple(out)
