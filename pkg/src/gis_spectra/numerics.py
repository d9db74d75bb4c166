"""Adaptive quadrature and root-search plumbing shared by the other modules.

Quadrature uses fixed-order Gauss-Legendre panels (order 15) refined
worst-first by halving; no randomized nodes, so every result is reproducible
bit-for-bit.  Semi-infinite integrals are truncated at a point K chosen so
that a fitted logarithmic envelope ``(c0 + c1 log k) / k^4`` bounds the tail
below tolerance; the target integrands decay at least that fast.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "QuadratureResult",
    "QuadratureError",
    "RootRecord",
    "BracketScan",
    "DipReport",
    "adaptive_integrate",
    "bracket_roots",
    "refine_root",
]

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(15)


class QuadratureError(RuntimeError):
    """Quadrature failed to converge within the panel budget."""


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error_estimate: float
    panels: int
    truncation_K: float
    tail_bound: float


@dataclass(frozen=True)
class RootRecord:
    location: float
    bracket: tuple[float, float]
    residual: float
    refinement_iterations: int


@dataclass(frozen=True)
class DipReport:
    """Grid-local |g| minimum without a sign change (possible even-order zero)."""

    location: float
    value: float


@dataclass(frozen=True)
class BracketScan:
    brackets: tuple[tuple[float, float], ...]
    dips: tuple[DipReport, ...]


def _gauss_panel(f, lo: float, hi: float):
    nodes = 0.5 * (hi - lo) * _GAUSS_NODES + 0.5 * (hi + lo)
    vals = np.asarray(f(nodes), dtype=float)
    if vals.ndim == 1:
        return 0.5 * (hi - lo) * float(np.dot(_GAUSS_WEIGHTS, vals))
    return 0.5 * (hi - lo) * (_GAUSS_WEIGHTS @ vals)


def _err_mag(x) -> float:
    return float(np.max(np.abs(np.atleast_1d(x))))


def _adaptive_finite(f, lo: float, hi: float, abs_tol: float, max_panels: int):
    """Worst-first interval halving; a panel's value is the sum over its two
    halves and its error estimate the whole-vs-halves discrepancy."""
    min_width = 1e-13 * (abs(hi - lo) + abs(lo) + 1.0)

    def make(a, b, coarse):
        mid = 0.5 * (a + b)
        left = _gauss_panel(f, a, mid)
        right = _gauss_panel(f, mid, b)
        return [a, b, left + right, _err_mag(left + right - coarse), left, right]

    panels = {0: make(lo, hi, _gauss_panel(f, lo, hi))}
    heap = [(-panels[0][3], lo, 0)]
    next_id = 1
    total_err = panels[0][3]
    while total_err > abs_tol and heap:
        _, _, pid = heapq.heappop(heap)
        rec = panels.get(pid)
        if rec is None:
            continue
        a, b, _, err, left_val, right_val = rec
        if b - a <= min_width:
            continue  # pinned at resolution floor; its error stays counted
        if len(panels) + 1 > max_panels:
            raise QuadratureError(f"no convergence to {abs_tol:g} within {max_panels} panels")
        del panels[pid]
        total_err -= err
        mid = 0.5 * (a + b)
        for aa, bb, coarse in ((a, mid, left_val), (mid, b, right_val)):
            child = make(aa, bb, coarse)
            panels[next_id] = child
            total_err += child[3]
            heapq.heappush(heap, (-child[3], aa, next_id))
            next_id += 1
    ordered = sorted(panels.values(), key=lambda p: p[0])
    value = ordered[0][2]
    for p in ordered[1:]:
        value = value + p[2]
    err = float(sum(p[3] for p in ordered))
    return value, err, len(ordered)


def _tail_envelope_bound(f, K: float) -> float:
    """Bound ``integral_K^inf f`` assuming ``f(k) <= (c0 + c1 log k)/k^4``.

    The envelope is fitted to ``f * k^4`` on the last decade and inflated so
    it majorizes every sample.
    """
    ks = np.geomspace(max(K / 10.0, 1e-3), K, 12)
    vals = np.asarray(f(ks), dtype=float)
    if vals.ndim > 1:
        vals = np.max(np.abs(vals), axis=-1)
    y = np.abs(vals) * ks**4
    if not np.any(y > 0):
        return 0.0
    basis = np.column_stack([np.ones_like(ks), np.log(ks)])
    c, *_ = np.linalg.lstsq(basis, y, rcond=None)
    fit = basis @ c
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(fit > 0, y / fit, np.inf)
    scale = float(np.max(ratios))
    if not math.isfinite(scale) or scale <= 0:
        # Fit unusable (sign changes): fall back to the largest sample.
        c0, c1 = float(np.max(y)), 0.0
    else:
        c0 = max(c[0] * scale, 0.0)
        c1 = max(c[1] * scale, 0.0)
        if c0 == 0.0 and c1 == 0.0:
            c0 = float(np.max(y))
    logK = math.log(K)
    return c0 / (3.0 * K**3) + c1 * (logK / (3.0 * K**3) + 1.0 / (9.0 * K**3))


def adaptive_integrate(
    f: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    abs_tol: float,
    max_panels: int = 40000,
) -> QuadratureResult:
    """Integrate a vectorized real integrand over ``[lo, hi]``, ``hi = inf`` allowed.

    The integrand may return one value per node or a vector per node (the
    tolerance is then enforced on every component at once).  Deterministic for
    fixed inputs: panels are combined in position order.
    """
    if abs_tol <= 0:
        raise ValueError("abs_tol must be > 0")
    if not math.isinf(hi):
        value, err, n = _adaptive_finite(f, float(lo), float(hi), abs_tol, max_panels)
        value = float(value) if np.ndim(value) == 0 else value
        return QuadratureResult(value, err, n, float(hi), 0.0)

    tail_tol = 0.5 * abs_tol
    K = max(16.0, 2.0 * abs(lo) + 16.0)
    value, err, n = _adaptive_finite(f, float(lo), K, 0.25 * abs_tol, max_panels)
    ext_tol = abs_tol / 8.0
    for _ in range(40):
        tail = _tail_envelope_bound(f, K)
        if tail <= tail_tol:
            val = float(value) if np.ndim(value) == 0 else value
            return QuadratureResult(val, err, n, K, tail)
        piece, perr, pn = _adaptive_finite(f, K, 2.0 * K, ext_tol, max_panels)
        value = value + piece
        err += perr
        n += pn
        K *= 2.0
        ext_tol *= 0.5
    raise QuadratureError("tail bound did not fall below tolerance while extending K")


def bracket_roots(
    g: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    grid: int,
    dip_tol: float = 1e-3,
) -> BracketScan:
    """Scan a uniform grid for sign changes of ``g``.

    Every sign change yields one bracket.  Grid-local minima of |g| that dip
    below ``dip_tol`` times the neighbour magnitude without a sign change are
    reported separately as possible even-order zeros.
    """
    if grid < 2:
        raise ValueError("grid must have at least 2 points")
    xs = np.linspace(float(lo), float(hi), int(grid))
    ys = np.asarray(g(xs), dtype=float)
    return _scan_values(xs, ys, dip_tol)


def _scan_values(xs: np.ndarray, ys: np.ndarray, dip_tol: float) -> BracketScan:
    brackets: list[tuple[float, float]] = []
    dips: list[DipReport] = []
    n = len(xs)
    signs = np.sign(ys)
    for i in range(n - 1):
        if signs[i] != 0 and signs[i + 1] != 0 and signs[i] != signs[i + 1]:
            brackets.append((float(xs[i]), float(xs[i + 1])))
    for i in range(1, n - 1):
        if signs[i] == 0:
            if signs[i - 1] != 0 and signs[i - 1] == -signs[i + 1]:
                brackets.append((float(xs[i - 1]), float(xs[i + 1])))
            else:
                dips.append(DipReport(float(xs[i]), 0.0))
    if signs[0] == 0:
        dips.append(DipReport(float(xs[0]), 0.0))
    if signs[-1] == 0:
        dips.append(DipReport(float(xs[-1]), 0.0))
    ay = np.abs(ys)
    for i in range(1, n - 1):
        if signs[i] == 0:
            continue
        if ay[i] < ay[i - 1] and ay[i] <= ay[i + 1] and signs[i - 1] == signs[i + 1] != 0:
            if ay[i] <= dip_tol * max(ay[i - 1], ay[i + 1]):
                dips.append(DipReport(float(xs[i]), float(ys[i])))
    brackets.sort()
    return BracketScan(tuple(brackets), tuple(dips))


def refine_root(g: Callable[[float], float], bracket: Sequence[float], tol: float) -> RootRecord:
    """Refine a sign-change bracket to a root (Brent: secant/IQI with a
    guaranteed bisection fallback, never leaves the bracket)."""
    a, b = float(bracket[0]), float(bracket[1])
    ga, gb = float(g(a)), float(g(b))
    if ga == 0.0:
        return RootRecord(a, (a, b), 0.0, 0)
    if gb == 0.0:
        return RootRecord(b, (a, b), 0.0, 0)
    if ga * gb > 0:
        raise ValueError("bracket endpoints must have opposite signs")
    xtol = max(tol * max(1.0, abs(a), abs(b)), 5e-16 * max(1.0, abs(a), abs(b)))
    root, info = brentq(lambda x: float(g(x)), a, b, xtol=xtol, rtol=1e-15, full_output=True)
    return RootRecord(float(root), (a, b), abs(float(g(root))), int(info.iterations))
