"""Geometry, potential energy and stability of the crossed-rod tensegrity mechanism.

Node placement::

    A1 = (0, 0)             A2 = (rho, 0)
    A3 = A1 + l1 (cos t1, sin t1)
    A4 = A2 + l2 (-cos t2, sin t2)

Springs (zero free length, stiffness ``k``) join A1A4, A2A3 and A3A4.  Vertical
loads ``f3``/``f4`` act at A3/A4 (positive pulls upward).  The optional
horizontal loads use mirrored conventions so that swapping the two rods keeps
the energy invariant: ``f3x`` acts along +x at A3, ``f4x`` along -x at A4.

All array-level helpers broadcast over numpy arrays; the public functions take
the dataclasses below.
"""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class MechanismParams:
    l1: float = 1.0
    l2: float = 1.0
    k: float = 100.0
    f3: float = 0.0
    f4: float = 0.0
    f3x: float = 0.0
    f4x: float = 0.0

    def __post_init__(self) -> None:
        for name in ("l1", "l2", "k"):
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        for name in ("f3", "f4", "f3x", "f4x"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def scale(self, rho: float) -> float:
        """Energy scale ``k * max(l1, l2, rho)**2`` used by all tolerances."""
        return self.k * max(self.l1, self.l2, rho) ** 2

    def swapped(self) -> "MechanismParams":
        return MechanismParams(self.l2, self.l1, self.k, self.f4, self.f3, self.f4x, self.f3x)

    def mirrored(self) -> "MechanismParams":
        return MechanismParams(self.l1, self.l2, self.k, -self.f3, -self.f4, self.f3x, self.f4x)

    def scaled(self, lam: float) -> "MechanismParams":
        return MechanismParams(
            self.l1, self.l2, lam * self.k, lam * self.f3, lam * self.f4, lam * self.f3x, lam * self.f4x
        )


def check_rho(rho: float) -> float:
    rho = float(rho)
    if not (rho > 0.0 and math.isfinite(rho)):
        raise ValueError(f"actuator input rho must be positive, got {rho!r}")
    return rho


def wrap_angle(theta):
    """Map angles to (-pi, pi]; values within 1e-12 of -pi snap to pi."""
    theta = np.asarray(theta, dtype=float)
    wrapped = np.pi - np.mod(np.pi - theta, TWO_PI)
    wrapped = np.where(wrapped <= -np.pi + 1e-12, np.pi, wrapped)
    # values already in range pass through bit-exact
    wrapped = np.where((theta > -np.pi + 1e-12) & (theta <= np.pi), theta, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def angle_distance(a, b):
    """Absolute wrapped difference between two angles (or arrays of angles)."""
    d = np.abs(np.mod(np.asarray(a) - np.asarray(b) + np.pi, TWO_PI) - np.pi)
    if np.ndim(d) == 0:
        return float(d)
    return d


@dataclass(frozen=True)
class Configuration:
    theta1: float
    theta2: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta1", wrap_angle(self.theta1))
        object.__setattr__(self, "theta2", wrap_angle(self.theta2))

    def distance(self, other: "Configuration") -> float:
        return max(angle_distance(self.theta1, other.theta1), angle_distance(self.theta2, other.theta2))

    def nodes(self, params: MechanismParams, rho: float) -> dict:
        x3, y3, x4, y4 = node_coordinates(params.l1, params.l2, rho, self.theta1, self.theta2)
        return {"A1": (0.0, 0.0), "A2": (float(rho), 0.0), "A3": (x3, y3), "A4": (x4, y4)}


class StabilityClass(enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class Tolerances:
    """Relative tolerances; absolute values are these times ``params.scale(rho)``."""

    tol_eq: float = 1e-9
    eps_h: float = 1e-8
    cluster_tol: float = 1e-7
    dedupe_tol: float = 1e-6

    @classmethod
    def from_env(cls) -> "Tolerances":
        """Defaults, overridable via ``TENSEGRITY_TOL_EQ`` / ``TENSEGRITY_EPS_H``."""
        kwargs = {}
        for key, env in (("tol_eq", "TENSEGRITY_TOL_EQ"), ("eps_h", "TENSEGRITY_EPS_H")):
            raw = os.environ.get(env)
            if raw:
                kwargs[key] = float(raw)
        return cls(**kwargs)


@dataclass(frozen=True)
class Equilibrium:
    rho: float
    config: Configuration
    energy: float
    grad_residual: float
    h11: float
    det_h: float
    stability: StabilityClass
    branch_tag: Optional[int] = field(default=None, compare=False)

    @property
    def theta1(self) -> float:
        return self.config.theta1

    @property
    def theta2(self) -> float:
        return self.config.theta2

    @property
    def is_stable(self) -> bool:
        return self.stability is StabilityClass.STABLE


# --- array-level kernels ---------------------------------------------------


def node_coordinates(l1, l2, rho, th1, th2):
    x3 = l1 * np.cos(th1)
    y3 = l1 * np.sin(th1)
    x4 = rho - l2 * np.cos(th2)
    y4 = l2 * np.sin(th2)
    return x3, y3, x4, y4


def energy_kernel(l1, l2, k, f3, f4, f3x, f4x, rho, th1, th2):
    c1, s1, c2, s2 = np.cos(th1), np.sin(th1), np.cos(th2), np.sin(th2)
    springs = 3 * rho**2 - 4 * l1 * rho * c1 - 4 * l2 * rho * c2 + 2 * (l1**2 + l2**2 + l1 * l2 * np.cos(th1 + th2))
    # horizontal terms: -f3x * x3 - f4x * (rho - x4); A4 measured from the moving A2
    return 0.5 * k * springs - f3 * l1 * s1 - f4 * l2 * s2 - f3x * l1 * c1 - f4x * l2 * c2


def gradient_kernel(l1, l2, k, f3, f4, f3x, f4x, rho, th1, th2):
    s12 = np.sin(th1 + th2)
    g1 = 2 * k * rho * l1 * np.sin(th1) - k * l1 * l2 * s12 - f3 * l1 * np.cos(th1) + f3x * l1 * np.sin(th1)
    g2 = 2 * k * rho * l2 * np.sin(th2) - k * l1 * l2 * s12 - f4 * l2 * np.cos(th2) + f4x * l2 * np.sin(th2)
    return g1, g2


def hessian_kernel(l1, l2, k, f3, f4, f3x, f4x, rho, th1, th2):
    c12 = np.cos(th1 + th2)
    h12 = -k * l1 * l2 * c12
    h11 = 2 * k * rho * l1 * np.cos(th1) + h12 + f3 * l1 * np.sin(th1) + f3x * l1 * np.cos(th1)
    h22 = 2 * k * rho * l2 * np.cos(th2) + h12 + f4 * l2 * np.sin(th2) + f4x * l2 * np.cos(th2)
    return h11, h12, h22


def _unpack(params: MechanismParams):
    return params.l1, params.l2, params.k, params.f3, params.f4, params.f3x, params.f4x


# --- public operations -------------------------------------------------------


def potential_energy(params: MechanismParams, rho: float, config: Configuration) -> float:
    return float(energy_kernel(*_unpack(params), rho, config.theta1, config.theta2))


def spring_lengths(params: MechanismParams, rho: float, config: Configuration) -> Tuple[float, float, float]:
    """Euclidean lengths of springs A1A4, A2A3 and A3A4."""
    x3, y3, x4, y4 = node_coordinates(params.l1, params.l2, rho, config.theta1, config.theta2)
    return (
        float(math.hypot(x4, y4)),
        float(math.hypot(x3 - rho, y3)),
        float(math.hypot(x3 - x4, y3 - y4)),
    )


def gradient(params: MechanismParams, rho: float, config: Configuration) -> Tuple[float, float]:
    g1, g2 = gradient_kernel(*_unpack(params), rho, config.theta1, config.theta2)
    return float(g1), float(g2)


def hessian(params: MechanismParams, rho: float, config: Configuration) -> np.ndarray:
    h11, h12, h22 = hessian_kernel(*_unpack(params), rho, config.theta1, config.theta2)
    return np.array([[h11, h12], [h12, h22]], dtype=float)


def stability_codes(h11, det, eps_h):
    """Vectorised classification: 0 stable, 1 unstable, 2 degenerate."""
    h11 = np.asarray(h11)
    det = np.asarray(det)
    unstable = (h11 < -eps_h) | (det < -eps_h)
    stable = (h11 > eps_h) & (det > eps_h)
    return np.where(unstable, 1, np.where(stable, 0, 2))


_CODE_TO_CLASS = (StabilityClass.STABLE, StabilityClass.UNSTABLE, StabilityClass.DEGENERATE)


def classify_stability(h, eps_h: float) -> StabilityClass:
    """Classify a symmetric 2x2 Hessian by its leading principal minors."""
    h = np.asarray(h, dtype=float)
    det = h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]
    return _CODE_TO_CLASS[int(stability_codes(h[0, 0], det, eps_h))]


def make_equilibrium(
    params: MechanismParams,
    rho: float,
    theta1: float,
    theta2: float,
    tol: Optional[Tolerances] = None,
    branch_tag: Optional[int] = None,
) -> Equilibrium:
    """Build an :class:`Equilibrium` record with energy, minors and class."""
    tol = tol or Tolerances.from_env()
    config = Configuration(theta1, theta2)
    g1, g2 = gradient(params, rho, config)
    h = hessian(params, rho, config)
    det = float(h[0, 0] * h[1, 1] - h[0, 1] ** 2)
    eps_h = tol.eps_h * params.scale(rho)
    return Equilibrium(
        rho=float(rho),
        config=config,
        energy=potential_energy(params, rho, config),
        grad_residual=max(abs(g1), abs(g2)),
        h11=float(h[0, 0]),
        det_h=det,
        stability=classify_stability(h, eps_h),
        branch_tag=branch_tag,
    )


def newton_polish(params: MechanismParams, rho: float, theta1: float, theta2: float, max_iter: int = 60):
    """Newton iteration on the energy gradient; returns ``(theta1, theta2, residual)``.

    The Hessian is the Jacobian.  Iteration stops when the step falls below
    ``1e-15`` or stops decreasing the residual; at singular Hessians (folds)
    convergence degrades to linear, which is acceptable for polishing.
    """
    args = _unpack(params)
    t1, t2 = float(theta1), float(theta2)
    g1, g2 = gradient_kernel(*args, rho, t1, t2)
    res = max(abs(g1), abs(g2))
    for _ in range(max_iter):
        if res == 0.0:
            break
        h11, h12, h22 = hessian_kernel(*args, rho, t1, t2)
        det = h11 * h22 - h12 * h12
        if det == 0.0:
            break
        d1 = (h22 * g1 - h12 * g2) / det
        d2 = (h11 * g2 - h12 * g1) / det
        n1, n2 = t1 - d1, t2 - d2
        ng1, ng2 = gradient_kernel(*args, rho, n1, n2)
        nres = max(abs(ng1), abs(ng2))
        if nres > res:
            break
        t1, t2, g1, g2, res = n1, n2, ng1, ng2, nres
        if max(abs(d1), abs(d2)) < 1e-15:
            break
    return wrap_angle(t1), wrap_angle(t2), float(res)
