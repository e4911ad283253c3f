"""Direct kinetostatic solver: tan-half-angle polynomials, resultant, real roots.

The two equilibrium equations become biquadratic polynomials ``p`` and ``q``
in ``t1 = tan(theta1/2)`` and ``t2 = tan(theta2/2)``.  Their resultant with
respect to one variable carries a ``(1 + t**2)`` factor; the cofactor is the
degree-6 eliminant.

The tan-half chart cannot represent ``theta = pi``.  :func:`solve_equilibria`
therefore runs the pipeline in four charts, ``theta_i = shift_i + phi_i`` with
``shift_i`` in ``{0, pi}``, and keeps from each chart only the solutions with
``|phi_i| <= pi/2``.  Every configuration lands in at least one window, where
both tan-half values are bounded by one and the eliminant is well conditioned.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .mechanism import (
    Equilibrium,
    MechanismParams,
    Tolerances,
    angle_distance,
    check_rho,
    make_equilibrium,
    newton_polish,
    wrap_angle,
)

log = logging.getLogger(__name__)

CHARTS: Tuple[Tuple[int, int], ...] = ((0, 0), (0, 1), (1, 0), (1, 1))
WINDOW_SLACK = 1e-6
TRIM_REL = 1e-12
DEGENERATE_REL = 1e-12
# near-multiple roots scatter into the complex plane by ~eps**(1/m); candidates
# this close to the real axis are kept and settled by Newton on the gradient
CANDIDATE_IMAG = 1e-3


class DegenerateResultant(ArithmeticError):
    """The resultant vanishes identically: ``p`` and ``q`` share a component.

    Perturb the parameters slightly or use the closed-form solvers in
    :mod:`tensegrity.special_cases`.
    """


class NoConsistentRoot(ArithmeticError):
    """A root of the eliminant has no matching value of the other variable."""


class ZeroPolynomial(ValueError):
    pass


@dataclass(frozen=True)
class UnivariatePoly:
    """Dense polynomial, coefficients in ascending degree."""

    coeffs: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", np.atleast_1d(np.asarray(self.coeffs, dtype=float)))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, t):
        return np.polynomial.polynomial.polyval(t, self.coeffs)

    def trimmed(self, rel: float = TRIM_REL) -> "UnivariatePoly":
        c = self.coeffs
        scale = np.max(np.abs(c)) if c.size else 0.0
        if scale == 0.0:
            return UnivariatePoly(np.zeros(1))
        n = len(c)
        while n > 1 and abs(c[n - 1]) <= rel * scale:
            n -= 1
        return UnivariatePoly(c[:n].copy())


@dataclass(frozen=True)
class BivariatePoly:
    """Polynomial ``sum c[i, j] * t1**i * t2**j`` with ``0 <= i, j <= 2``."""

    c: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.c, dtype=float)
        if c.shape != (3, 3):
            raise ValueError("BivariatePoly needs a 3x3 coefficient table")
        object.__setattr__(self, "c", c)
        rows = c.tolist()
        object.__setattr__(self, "_rows", rows)
        object.__setattr__(self, "_d1", [rows[1], [2 * x for x in rows[2]], [0.0] * 3])
        object.__setattr__(self, "_d2", [[r[1], 2 * r[2], 0.0] for r in rows])

    def __call__(self, t1, t2):
        if isinstance(t1, float) and isinstance(t2, float):
            return _eval33(self._rows, t1, t2)
        return np.polynomial.polynomial.polyval2d(t1, t2, self.c)

    def d_t1(self, t1: float, t2: float) -> float:
        return _eval33(self._d1, t1, t2)

    def d_t2(self, t1: float, t2: float) -> float:
        return _eval33(self._d2, t1, t2)

    def transpose(self) -> "BivariatePoly":
        return BivariatePoly(self.c.T.copy())

    def magnitude(self, t1: float, t2: float) -> float:
        """Residual scale at a point: ``max|c| * (1 + t1^2) * (1 + t2^2)``."""
        return self.norm() * (1.0 + t1 * t1) * (1.0 + t2 * t2)

    def norm(self) -> float:
        return float(np.max(np.abs(self.c)))


def _eval33(c, t1: float, t2: float) -> float:
    r0, r1, r2 = c
    return (
        ((r2[2] * t2 + r2[1]) * t2 + r2[0]) * t1 * t1
        + ((r1[2] * t2 + r1[1]) * t2 + r1[0]) * t1
        + ((r0[2] * t2 + r0[1]) * t2 + r0[0])
    )


def _trig_table(a: float, b: float, c: float) -> np.ndarray:
    """Table of ``-(1+x^2)(1+y^2) * (a sin(x'+y') + b sin x' + c cos x')`` in tan-half form.

    Rows index the power of the "own" angle ``x``, columns the other angle ``y``.
    """
    table = np.zeros((3, 3))
    table[0, 0] = -c
    table[1, 0] = -2 * a - 2 * b
    table[0, 1] = -2 * a
    table[2, 0] = c
    table[0, 2] = -c
    table[1, 2] = 2 * a - 2 * b
    table[2, 1] = 2 * a
    table[2, 2] = c
    return table


def halfangle_system(
    params: MechanismParams, rho: float, chart: Tuple[int, int] = (0, 0)
) -> Tuple[BivariatePoly, BivariatePoly]:
    """Polynomial forms of the two equilibrium equations.

    ``p`` is the rod-1 equation (zero derivative of the energy in theta1) and
    ``q`` the rod-2 equation.  In the default chart ``p`` reproduces the
    classical tan-half form

        f3 t1^2 t2^2 + 2 k l2 t1^2 t2 + (2 k l2 + 4 k rho) t1 t2^2 + f3 t1^2
        - f3 t2^2 + (4 k rho - 2 k l2) t1 - 2 k l2 t2 - f3

    and ``q`` is its mirror with rods swapped.  ``chart = (s1, s2)`` shifts the
    angles by ``s_i * pi`` first.
    """
    rho = check_rho(rho)
    e1 = -1.0 if chart[0] else 1.0
    e2 = -1.0 if chart[1] else 1.0
    k = params.k
    p = _trig_table(k * params.l2 * e1 * e2, -e1 * (2 * k * rho + params.f3x), e1 * params.f3)
    q = _trig_table(k * params.l1 * e1 * e2, -e2 * (2 * k * rho + params.f4x), e2 * params.f4)
    return BivariatePoly(p), BivariatePoly(q.T.copy())


def _quadratic_in_t2(poly: BivariatePoly) -> List[np.ndarray]:
    """Coefficients ``a_j(t1)`` (ascending arrays in t1) of ``t2**j``."""
    return [poly.c[:, j] for j in range(3)]


def resultant_t2(p: BivariatePoly, q: BivariatePoly) -> np.ndarray:
    """Sylvester resultant of ``p``, ``q`` viewed as quadratics in ``t2``.

    Expanded form of the 4x4 Sylvester determinant:
    ``(a2 b0 - a0 b2)^2 - (a2 b1 - a1 b2)(a1 b0 - a0 b1)``.
    """
    conv = np.convolve
    a0, a1, a2 = _quadratic_in_t2(p)
    b0, b1, b2 = _quadratic_in_t2(q)
    u = conv(a2, b0) - conv(a0, b2)
    v = conv(a2, b1) - conv(a1, b2)
    w = conv(a1, b0) - conv(a0, b1)
    return conv(u, u) - conv(v, w)


def divide_one_plus_t2(coeffs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Quotient and remainder of an ascending polynomial divided by ``1 + t**2``."""
    r = np.asarray(coeffs, dtype=float)
    n = len(r)
    if n < 3:
        return np.zeros(1), r.copy()
    quot = np.zeros(n - 2)
    for m in range(n - 1, 1, -1):
        quot[m - 2] = r[m] - (quot[m] if m < n - 2 else 0.0)
    rem = np.array([r[0] - quot[0], r[1] - (quot[1] if n - 2 > 1 else 0.0)])
    return quot, rem


def eliminate(p: BivariatePoly, q: BivariatePoly, eliminate_var: str = "t2") -> UnivariatePoly:
    """Eliminate ``eliminate_var`` and return the cleared eliminant in the other variable."""
    if eliminate_var == "t1":
        p, q = p.transpose(), q.transpose()
    elif eliminate_var != "t2":
        raise ValueError(f"eliminate_var must be 't1' or 't2', got {eliminate_var!r}")
    res = resultant_t2(p, q)
    scale = (p.norm() * q.norm()) ** 2
    peak = float(np.max(np.abs(res)))
    if scale == 0.0 or peak <= DEGENERATE_REL * scale:
        raise DegenerateResultant(
            "resultant vanishes identically; perturb the parameters or use the special-case solvers"
        )
    quot, rem = divide_one_plus_t2(res)
    if np.max(np.abs(rem)) > 1e-10 * peak:
        raise ArithmeticError("resultant is not divisible by (1 + t^2)")
    return UnivariatePoly(quot).trimmed()


def _companion_eigenvalues(coeffs: np.ndarray) -> np.ndarray:
    c = coeffs / coeffs[-1]
    n = len(c) - 1
    comp = np.zeros((n, n))
    comp[1:, :-1] = np.eye(n - 1)
    comp[:, -1] = -c[:-1]
    return np.linalg.eigvals(comp)


def _backward_error(coeffs: np.ndarray, x: float) -> float:
    """``|p(x)|`` relative to the coefficient scale ``max|c| * max(1, |x|)**deg``."""
    scale = np.max(np.abs(coeffs))
    if abs(x) <= 1.0:
        return abs(np.polynomial.polynomial.polyval(x, coeffs)) / scale
    # p(x) / x**deg through the reversed polynomial; no overflow for huge x
    return abs(np.polynomial.polynomial.polyval(1.0 / x, coeffs[::-1])) / scale


def real_roots(
    poly: UnivariatePoly,
    tol: float = 1e-10,
    cluster_tol: float = 1e-7,
    imag_tol: float = 1e-6,
) -> List[Tuple[float, int]]:
    """Real roots with multiplicities, ascending.

    Eigenvalues of the companion matrix (LAPACK balances it) with imaginary
    part below ``imag_tol * max(1, |z|)`` are real candidates.  Candidates
    closer than ``cluster_tol`` merge into one root of summed multiplicity,
    which is then polished by multiplicity-aware Newton iteration.  ``tol``
    bounds the relative backward error of each returned root.
    """
    poly = poly.trimmed()
    c = poly.coeffs
    if not np.any(c):
        raise ZeroPolynomial("real_roots of the zero polynomial")
    if poly.degree == 0:
        return []
    # zero roots are exact factors; strip them to keep the companion well posed
    nzero = int(np.argmax(c != 0.0))
    c = c[nzero:]
    cand: List[float] = [0.0] * nzero
    if len(c) > 1:
        eig = _companion_eigenvalues(c)
        for z in eig:
            if abs(z.imag) <= imag_tol * max(1.0, abs(z)):
                cand.append(float(z.real))
    cand.sort()
    clusters: List[List[float]] = []
    for x in cand:
        if clusters and abs(x - clusters[-1][-1]) <= cluster_tol * max(1.0, abs(x)):
            clusters[-1].append(x)
        else:
            clusters.append([x])
    full = poly.coeffs
    dfull = np.polynomial.polynomial.polyder(full)
    out: List[Tuple[float, int]] = []
    for cl in clusters:
        m = len(cl)
        x = float(np.mean(cl))
        best, best_err = x, _backward_error(full, x)
        for _ in range(50):
            if best_err <= 1e-16:
                break
            with np.errstate(over="ignore", invalid="ignore"):
                d = np.polynomial.polynomial.polyval(x, dfull)
                step = m * np.polynomial.polynomial.polyval(x, full) / d if d != 0.0 else math.nan
            if not math.isfinite(step):
                break
            x = x - step
            err = _backward_error(full, x)
            if err < best_err:
                best, best_err = x, err
            else:
                break
        if best_err <= tol:
            out.append((float(best), m))
        else:
            log.debug("dropping near-real candidate %.6g (backward error %.3g)", best, best_err)
    return out


def _polish_pair(p: BivariatePoly, q: BivariatePoly, t1: float, t2: float, iters: int = 8):
    for _ in range(iters):
        f = p(t1, t2)
        g = q(t1, t2)
        j11, j12 = p.d_t1(t1, t2), p.d_t2(t1, t2)
        j21, j22 = q.d_t1(t1, t2), q.d_t2(t1, t2)
        det = j11 * j22 - j12 * j21
        if det == 0.0 or not math.isfinite(det):
            break
        d1 = (j22 * f - j12 * g) / det
        d2 = (j11 * g - j21 * f) / det
        if not (math.isfinite(d1) and math.isfinite(d2)):
            break
        n1, n2 = t1 - d1, t2 - d2
        if abs(p(n1, n2)) + abs(q(n1, n2)) > abs(f) + abs(g):
            break
        t1, t2 = n1, n2
        if max(abs(d1), abs(d2)) < 1e-16 * max(1.0, abs(t1), abs(t2)):
            break
    return float(t1), float(t2)


def _quadratic_real_roots(a0: float, a1: float, a2: float) -> List[float]:
    scale = max(abs(a0), abs(a1), abs(a2))
    if scale == 0.0:
        return []
    c = UnivariatePoly([a0, a1, a2]).trimmed()
    if c.degree == 0:
        return []
    if c.degree == 1:
        return [-c.coeffs[0] / c.coeffs[1]]
    roots = np.roots(c.coeffs[::-1])
    return [float(r.real) for r in roots if abs(r.imag) <= 1e-6 * max(1.0, abs(r))]


def back_substitute(
    t1: float, p: BivariatePoly, q: BivariatePoly, tol: float = 1e-9
) -> List[Tuple[float, float]]:
    """Recover ``t2`` for an eliminant root ``t1``.

    Combining ``b2 * p - a2 * q`` cancels the ``t2**2`` terms and leaves a
    linear equation.  When that combination degenerates, both quadratics are
    solved and intersected.  Each pair is Newton-polished jointly on
    ``(p, q)`` and kept when both relative residuals are below ``tol``.

    Returns polished ``(t1, t2)`` pairs; raises :class:`NoConsistentRoot` when
    ``t1`` is extraneous.
    """
    a = [(ai[2] * t1 + ai[1]) * t1 + ai[0] for ai in p.c.T.tolist()]
    b = [(bi[2] * t1 + bi[1]) * t1 + bi[0] for bi in q.c.T.tolist()]
    den = b[2] * a[1] - a[2] * b[1]
    num = b[2] * a[0] - a[2] * b[0]
    scale = max(map(abs, a)) * max(map(abs, b))
    if scale > 0.0 and abs(den) > 1e-8 * scale:
        candidates = [-num / den]
    else:
        candidates = _quadratic_real_roots(*a) + _quadratic_real_roots(*b)
    pairs: List[Tuple[float, float]] = []
    for t2 in candidates:
        s1, s2 = _polish_pair(p, q, t1, t2)
        rp = abs(p(s1, s2)) / max(p.magnitude(s1, s2), 1e-300)
        rq = abs(q(s1, s2)) / max(q.magnitude(s1, s2), 1e-300)
        if rp <= tol and rq <= tol:
            if not any(abs(s2 - o2) <= 1e-9 * max(1.0, abs(s2)) for _, o2 in pairs):
                pairs.append((s1, s2))
    if not pairs:
        raise NoConsistentRoot(f"no t2 consistent with t1={t1!r}")
    return pairs


def _chart_candidates(params: MechanismParams, rho: float, chart: Tuple[int, int]) -> List[Tuple[float, float]]:
    p, q = halfangle_system(params, rho, chart)
    transposed = False
    try:
        poly = eliminate(p, q, "t2")
    except DegenerateResultant:
        poly = eliminate(p, q, "t1")
        p, q = p.transpose(), q.transpose()
        transposed = True
    limit = 1.0 + WINDOW_SLACK
    found: List[Tuple[float, float]] = []
    for root, _mult in real_roots(poly, imag_tol=CANDIDATE_IMAG):
        if abs(root) > limit:
            continue
        try:
            pairs = back_substitute(root, p, q)
        except NoConsistentRoot:
            log.debug("chart %s: spurious eliminant root %.6g", chart, root)
            continue
        for u, v in pairs:
            if abs(u) > limit or abs(v) > limit:
                continue
            found.append((v, u) if transposed else (u, v))
    shift1 = math.pi * chart[0]
    shift2 = math.pi * chart[1]
    return [(shift1 + 2.0 * math.atan(t1), shift2 + 2.0 * math.atan(t2)) for t1, t2 in found]


def _in_window(theta: float, shift: float) -> bool:
    return abs(wrap_angle(theta - shift)) <= 0.5 * math.pi + 1e-9


def dedupe_configurations(items: Iterable[Tuple[float, float, float]], tol: float) -> List[Tuple[float, float, float]]:
    """Merge ``(theta1, theta2, residual)`` triples closer than ``tol``; keep the best residual."""
    kept: List[Tuple[float, float, float]] = []
    for th1, th2, res in sorted(items, key=lambda x: x[2]):
        if all(max(angle_distance(th1, o1), angle_distance(th2, o2)) > tol for o1, o2, _ in kept):
            kept.append((th1, th2, res))
    return kept


def solve_equilibria(
    params: MechanismParams, rho: float, tol: Tolerances | None = None
) -> List[Equilibrium]:
    """All isolated equilibria at actuator input ``rho``, sorted by ``theta1``."""
    rho = check_rho(rho)
    tol = tol or Tolerances.from_env()
    tol_abs = tol.tol_eq * params.scale(rho)
    polished = []
    for chart in CHARTS:
        shift1, shift2 = math.pi * chart[0], math.pi * chart[1]
        for th1, th2 in _chart_candidates(params, rho, chart):
            th1, th2, res = newton_polish(params, rho, th1, th2)
            if res > tol_abs:
                log.debug("rejecting candidate (%.6g, %.6g): residual %.3g", th1, th2, res)
                continue
            if _in_window(th1, shift1) and _in_window(th2, shift2):
                polished.append((th1, th2, res))
    unique = dedupe_configurations(polished, tol.dedupe_tol)
    eqs = [make_equilibrium(params, rho, th1, th2, tol) for th1, th2, _ in unique]
    eqs.sort(key=lambda e: (round(e.theta1, 9), round(e.theta2, 9)))
    return eqs


def stable_count(equilibria: Sequence[Equilibrium]) -> int:
    return sum(1 for e in equilibria if e.is_stable)
