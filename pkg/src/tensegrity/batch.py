"""Vectorised equilibrium solver for many parameter points at once.

Same pipeline as :func:`tensegrity.polysolve.solve_equilibria` (four charts,
resultant eliminant, companion eigenvalues, back-substitution, Newton polish
on the energy gradient) with every step expressed over numpy arrays.  Region
maps call this with tens of thousands of points per batch.  Instances whose
resultant vanishes identically are re-solved one by one with the scalar path.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mechanism import (
    MechanismParams,
    Tolerances,
    gradient_kernel,
    hessian_kernel,
    stability_codes,
    wrap_angle,
)
from .polysolve import CANDIDATE_IMAG, CHARTS, DEGENERATE_REL, WINDOW_SLACK, DegenerateResultant, solve_equilibria

log = logging.getLogger(__name__)

STABLE, UNSTABLE, DEGENERATE = 0, 1, 2


@dataclass
class BatchSolutions:
    """Flat arrays of equilibria; ``index`` maps each row to its input point."""

    n_points: int
    index: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    residual: np.ndarray
    h11: np.ndarray
    det_h: np.ndarray
    code: np.ndarray
    failed: np.ndarray  # per input point: resultant degenerate in every chart

    def n_stable(self) -> np.ndarray:
        return np.bincount(self.index[self.code == STABLE], minlength=self.n_points)

    def any_degenerate(self) -> np.ndarray:
        flag = np.bincount(self.index[self.code == DEGENERATE], minlength=self.n_points) > 0
        return flag | self.failed

    def n_solutions(self) -> np.ndarray:
        return np.bincount(self.index, minlength=self.n_points)


def _bconv(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    n, m = x.shape[1], y.shape[1]
    out = np.zeros((x.shape[0], n + m - 1))
    for i in range(n):
        out[:, i : i + m] += x[:, i : i + 1] * y
    return out


def _tables(a, b, c) -> np.ndarray:
    t = np.zeros(a.shape + (3, 3))
    t[:, 0, 0] = -c
    t[:, 1, 0] = -2 * a - 2 * b
    t[:, 0, 1] = -2 * a
    t[:, 2, 0] = c
    t[:, 0, 2] = -c
    t[:, 1, 2] = 2 * a - 2 * b
    t[:, 2, 1] = 2 * a
    t[:, 2, 2] = c
    return t


def _horner(coef: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Evaluate rows of ascending ``coef`` (K, d+1) at ``t`` (K,)."""
    out = coef[:, -1].copy()
    for j in range(coef.shape[1] - 2, -1, -1):
        out = out * t + coef[:, j]
    return out


def _chart_candidates(P: dict, chart, tol_imag: float = CANDIDATE_IMAG):
    """Candidate ``(index, theta1, theta2)`` arrays from one chart plus a degeneracy mask."""
    e1 = -1.0 if chart[0] else 1.0
    e2 = -1.0 if chart[1] else 1.0
    k, rho = P["k"], P["rho"]
    p = _tables(k * P["l2"] * e1 * e2, -e1 * (2 * k * rho + P["f3x"]), e1 * P["f3"])
    q = np.swapaxes(_tables(k * P["l1"] * e1 * e2, -e2 * (2 * k * rho + P["f4x"]), e2 * P["f4"]), 1, 2)
    a0, a1, a2 = p[:, :, 0], p[:, :, 1], p[:, :, 2]
    b0, b1, b2 = q[:, :, 0], q[:, :, 1], q[:, :, 2]
    u = _bconv(a2, b0) - _bconv(a0, b2)
    v = _bconv(a2, b1) - _bconv(a1, b2)
    w = _bconv(a1, b0) - _bconv(a0, b1)
    res = _bconv(u, u) - _bconv(v, w)
    scale = (np.abs(p).max(axis=(1, 2)) * np.abs(q).max(axis=(1, 2))) ** 2
    peak = np.abs(res).max(axis=1)
    degenerate = peak <= DEGENERATE_REL * scale

    # divide by (1 + t^2)
    quot = np.zeros((res.shape[0], 7))
    quot[:, 6] = res[:, 8]
    quot[:, 5] = res[:, 7]
    for m in range(6, 1, -1):
        quot[:, m - 2] = res[:, m] - quot[:, m]
    norm = np.abs(quot).max(axis=1)
    norm[norm == 0.0] = 1.0
    quot = quot / norm[:, None]
    # tiny leading coefficients only push roots far outside the |t| <= 1 window
    lead = quot[:, 6]
    tiny = np.abs(lead) < 1e-13
    quot[tiny, 6] = np.where(lead[tiny] < 0, -1e-13, 1e-13)
    comp = np.zeros((res.shape[0], 6, 6))
    comp[:, np.arange(1, 6), np.arange(0, 5)] = 1.0
    comp[:, :, 5] = -quot[:, :6] / quot[:, 6:7]
    ok = ~degenerate
    eig = np.full((res.shape[0], 6), np.nan + 0j)
    if np.any(ok):
        eig[ok] = np.linalg.eigvals(comp[ok])
    real = eig.real
    mask = (np.abs(eig.imag) <= tol_imag * np.maximum(1.0, np.abs(eig))) & (np.abs(real) <= 1.0 + WINDOW_SLACK) & ok[:, None]
    idx, col = np.nonzero(mask)
    t1 = real[idx, col]

    # back substitution: b2*p - a2*q is linear in t2
    A = [_horner(a[idx], t1) for a in (a0, a1, a2)]
    B = [_horner(b[idx], t1) for b in (b0, b1, b2)]
    den = B[2] * A[1] - A[2] * B[1]
    num = B[2] * A[0] - A[2] * B[0]
    sc = np.maximum.reduce([np.abs(x) for x in A]) * np.maximum.reduce([np.abs(x) for x in B])
    linear = np.abs(den) > 1e-8 * sc
    out_idx = [idx[linear]]
    out_t1 = [t1[linear]]
    out_t2 = [-num[linear] / den[linear]]
    # degenerate combination: roots of both quadratics, Newton sorts them out
    if np.any(~linear):
        for C in (A, B):
            c0, c1, c2 = (x[~linear] for x in C)
            disc = c1 * c1 - 4 * c2 * c0
            sq = np.sqrt(np.maximum(disc, 0.0))
            with np.errstate(divide="ignore", invalid="ignore"):
                quad = np.abs(c2) > 1e-12 * np.maximum(np.abs(c1), np.abs(c0))
                r1 = np.where(quad, (-c1 + sq) / (2 * c2), -c0 / c1)
                r2 = np.where(quad, (-c1 - sq) / (2 * c2), np.nan)
            for r in (r1, r2):
                out_idx.append(idx[~linear])
                out_t1.append(t1[~linear])
                out_t2.append(r)
    idx = np.concatenate(out_idx)
    t1 = np.concatenate(out_t1)
    t2 = np.concatenate(out_t2)
    keep = np.isfinite(t2) & (np.abs(t2) <= 1.0 + WINDOW_SLACK)
    idx, t1, t2 = idx[keep], t1[keep], t2[keep]
    th1 = math.pi * chart[0] + 2.0 * np.arctan(t1)
    th2 = math.pi * chart[1] + 2.0 * np.arctan(t2)
    return idx, th1, th2, degenerate


def _newton(P: dict, idx: np.ndarray, th1: np.ndarray, th2: np.ndarray, iters: int = 40):
    args = [P[key][idx] for key in ("l1", "l2", "k", "f3", "f4", "f3x", "f4x", "rho")]
    g1, g2 = gradient_kernel(*args, th1, th2)
    res = np.maximum(np.abs(g1), np.abs(g2))
    active = np.ones(th1.shape, dtype=bool)
    for _ in range(iters):
        if not np.any(active):
            break
        h11, h12, h22 = hessian_kernel(*args, th1, th2)
        det = h11 * h22 - h12 * h12
        with np.errstate(divide="ignore", invalid="ignore"):
            d1 = (h22 * g1 - h12 * g2) / det
            d2 = (h11 * g2 - h12 * g1) / det
            n1, n2 = th1 - d1, th2 - d2
            # non-finite trial steps (singular Hessian) are rejected below
            ng1, ng2 = gradient_kernel(*args, n1, n2)
            nres = np.maximum(np.abs(ng1), np.abs(ng2))
        better = active & np.isfinite(nres) & (nres <= res) & (det != 0.0)
        th1 = np.where(better, n1, th1)
        th2 = np.where(better, n2, th2)
        g1 = np.where(better, ng1, g1)
        g2 = np.where(better, ng2, g2)
        small = np.maximum(np.abs(d1), np.abs(d2)) < 1e-15
        active = better & ~small & (nres > 0.0)
        res = np.where(better, nres, res)
    return th1, th2, res


def _dedupe(idx: np.ndarray, th1: np.ndarray, th2: np.ndarray, res: np.ndarray, tol: float) -> np.ndarray:
    """Boolean keep-mask removing near-identical solutions within each point."""
    n = idx.size
    if n == 0:
        return np.zeros(0, dtype=bool)
    order = np.lexsort((res, idx))
    sidx = idx[order]
    starts = np.r_[0, np.nonzero(np.diff(sidx))[0] + 1]
    counts = np.diff(np.r_[starts, n])
    rank = np.arange(n) - np.repeat(starts, counts)
    width = int(counts.max())
    groups = np.repeat(np.arange(starts.size), counts)
    T1 = np.full((starts.size, width), np.nan)
    T2 = np.full((starts.size, width), np.nan)
    T1[groups, rank] = th1[order]
    T2[groups, rank] = th2[order]
    d1 = np.abs(np.mod(T1[:, :, None] - T1[:, None, :] + np.pi, 2 * np.pi) - np.pi)
    d2 = np.abs(np.mod(T2[:, :, None] - T2[:, None, :] + np.pi, 2 * np.pi) - np.pi)
    close = np.maximum(d1, d2) <= tol
    earlier = np.tril(np.ones((width, width), dtype=bool), -1)  # [j, i] with i < j
    dup = np.any(close & earlier[None, :, :], axis=2)
    keep_sorted = ~dup[groups, rank]
    keep = np.empty(n, dtype=bool)
    keep[order] = keep_sorted
    return keep


def solve_batch(
    l1=1.0,
    l2=1.0,
    k=100.0,
    f3=0.0,
    f4=0.0,
    rho=1.0,
    f3x=0.0,
    f4x=0.0,
    tol: Optional[Tolerances] = None,
) -> BatchSolutions:
    """Solve every broadcast parameter point; see :class:`BatchSolutions`."""
    tol = tol or Tolerances.from_env()
    arrays = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (l1, l2, k, f3, f4, rho, f3x, f4x)))
    keys = ("l1", "l2", "k", "f3", "f4", "rho", "f3x", "f4x")
    P = {key: np.ravel(a).astype(float) for key, a in zip(keys, arrays)}
    n = P["rho"].size
    if np.any(P["rho"] <= 0) or np.any(P["l1"] <= 0) or np.any(P["l2"] <= 0) or np.any(P["k"] <= 0):
        raise ValueError("rho, l1, l2 and k must be positive")
    scale = P["k"] * np.maximum(np.maximum(P["l1"], P["l2"]), P["rho"]) ** 2

    parts = []
    degenerate_any = np.zeros(n, dtype=bool)
    for chart in CHARTS:
        idx, th1, th2, degenerate = _chart_candidates(P, chart)
        degenerate_any |= degenerate
        th1, th2, res = _newton(P, idx, th1, th2)
        ok = res <= tol.tol_eq * scale[idx]
        half = 0.5 * math.pi + 1e-9
        ok &= np.abs(wrap_angle(th1 - math.pi * chart[0])) <= half
        ok &= np.abs(wrap_angle(th2 - math.pi * chart[1])) <= half
        parts.append((idx[ok], th1[ok], th2[ok], res[ok]))

    # a degenerate chart invalidates the whole point; redo those with the scalar solver
    redo = np.nonzero(degenerate_any)[0]
    idx = np.concatenate([p[0] for p in parts])
    th1 = np.concatenate([p[1] for p in parts])
    th2 = np.concatenate([p[2] for p in parts])
    res = np.concatenate([p[3] for p in parts])
    drop = np.isin(idx, redo)
    idx, th1, th2, res = idx[~drop], th1[~drop], th2[~drop], res[~drop]
    failed = np.zeros(n, dtype=bool)
    extra = []
    for i in redo:
        params = MechanismParams(*(float(P[key][i]) for key in ("l1", "l2", "k", "f3", "f4", "f3x", "f4x")))
        try:
            for e in solve_equilibria(params, float(P["rho"][i]), tol):
                extra.append((i, e.theta1, e.theta2, e.grad_residual))
        except DegenerateResultant:
            log.debug("point %d: resultant degenerate in all eliminations", i)
            failed[i] = True
    if extra:
        ex = np.array(extra, dtype=float)
        idx = np.concatenate([idx, ex[:, 0].astype(int)])
        th1 = np.concatenate([th1, ex[:, 1]])
        th2 = np.concatenate([th2, ex[:, 2]])
        res = np.concatenate([res, ex[:, 3]])

    th1 = wrap_angle(th1) if th1.size else th1
    th2 = wrap_angle(th2) if th2.size else th2
    keep = _dedupe(idx, th1, th2, res, tol.dedupe_tol)
    idx, th1, th2, res = idx[keep], th1[keep], th2[keep], res[keep]
    order = np.lexsort((np.round(th2, 9), np.round(th1, 9), idx))
    idx, th1, th2, res = idx[order], th1[order], th2[order], res[order]

    args = [P[key][idx] for key in ("l1", "l2", "k", "f3", "f4", "f3x", "f4x", "rho")]
    h11, h12, h22 = hessian_kernel(*args, th1, th2)
    det = h11 * h22 - h12 * h12
    code = stability_codes(h11, det, tol.eps_h * scale[idx])
    return BatchSolutions(n, idx, np.atleast_1d(th1), np.atleast_1d(th2), res, h11, det, np.asarray(code), failed)


def count_stable_batch(l1=1.0, l2=1.0, k=100.0, f3=0.0, f4=0.0, rho=1.0, f3x=0.0, f4x=0.0, tol=None):
    """``(n_stable, any_degenerate)`` arrays for every broadcast parameter point."""
    sol = solve_batch(l1, l2, k, f3, f4, rho, f3x, f4x, tol)
    return sol.n_stable(), sol.any_degenerate()
