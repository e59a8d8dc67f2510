"""Maximizers for piecewise-constant score objectives.

Every objective handled here is a weighted count of indicator terms,
``sum_j w_j * 1[z_j(theta) > 0]``, optionally plus a smooth quadratic. The
breakpoint structure depends only on the terms, never on the weights, so
the sweeps below sort once and then answer any number of reweighted queries
(bootstrap draws) with a single cumulative sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass
class SweepResult:
    point: float  # angle (circle) or scalar argument (line)
    value: float  # sweep value of the maximizing piece (incl. penalty)
    left: float
    right: float
    constant: bool  # every piece has the same value


class CircleSweep:
    """Exact maximization of ``sum_j w_j 1[x_j'b > 0]`` over the unit circle.

    Term j is active on the open half-circle of angles within pi/2 of
    ``atan2(x_j)``. Pieces are the open arcs between consecutive distinct
    breakpoints; ties go to the arc with the smallest left endpoint.
    """

    def __init__(self, X: np.ndarray):
        X = np.asarray(X, dtype=np.float64).reshape(-1, 2)
        keep = (X[:, 0] != 0.0) | (X[:, 1] != 0.0)
        self.keep = keep
        self.m = int(keep.sum())
        if self.m == 0:
            return
        phi = np.arctan2(X[keep, 1], X[keep, 0])
        on = np.mod(phi - np.pi / 2, TWO_PI)
        off = np.mod(phi + np.pi / 2, TWO_PI)
        bps = np.concatenate([on, off])
        order = np.argsort(bps, kind="stable")
        m = self.m
        self._sign = np.where(order < m, 1.0, -1.0)
        self._term = np.where(order < m, order, order - m)
        bps = bps[order]
        rank = np.empty(2 * m, dtype=np.intp)
        rank[order] = np.arange(2 * m)
        # active on the wrap-around arc iff the term switches on after it switches off
        self._active_wrap = rank[:m] > rank[m:]
        last = np.r_[bps[1:] > bps[:-1], True]
        self._last = np.flatnonzero(last)
        self.left = bps[last]
        self.right = np.r_[self.left[1:], self.left[0] + TWO_PI]

    def values(self, w: np.ndarray) -> np.ndarray:
        """Objective value on every arc for term weights ``w`` (full length)."""
        w = np.asarray(w, dtype=np.float64)[self.keep]
        base = w[self._active_wrap].sum()
        return base + np.cumsum(self._sign * w[self._term])[self._last]

    def argmax(self, w: np.ndarray, quad: tuple[np.ndarray, np.ndarray] | None = None) -> SweepResult:
        """Maximize the weighted count, optionally plus ``0.5 (b-c)'V(b-c)``.

        ``quad=(V, c)`` adds the quadratic; it is continuous in the angle so
        each arc's supremum is found among its endpoints and the stationary
        angles of the trigonometric polynomial.
        """
        if self.m == 0:
            raise ValueError("no informative terms")
        vals = self.values(w)
        if quad is None:
            j = int(np.argmax(vals))
            mid = 0.5 * (self.left[j] + self.right[j])
            return SweepResult(float(np.mod(mid, TWO_PI)), float(vals[j]), float(self.left[j]),
                               float(self.right[j]), bool(vals.max() == vals.min()))
        V, c = quad
        pen_l = _circle_quad(self.left, V, c)
        pen_r = _circle_quad(self.right, V, c)
        width = self.right - self.left
        use_left = pen_l >= pen_r
        pen = np.where(use_left, pen_l, pen_r)
        nudge = 1e-6 * width
        theta = np.where(use_left, self.left + nudge, self.right - nudge)
        for ang in _circle_quad_critical(V, c):
            j = np.searchsorted(self.left, ang, side="right") - 1
            if j < 0:
                j = len(self.left) - 1
                ang = ang + TWO_PI
            if self.left[j] < ang < self.right[j]:
                p = _circle_quad(np.array([ang]), V, c)[0]
                if p > pen[j]:
                    pen[j] = p
                    theta[j] = ang
        tot = vals + pen
        j = int(np.argmax(tot))
        return SweepResult(float(np.mod(theta[j], TWO_PI)), float(tot[j]), float(self.left[j]),
                           float(self.right[j]), bool(tot.max() == tot.min()))


def _circle_quad(theta: np.ndarray, V: np.ndarray, c: np.ndarray) -> np.ndarray:
    b = np.stack([np.cos(theta), np.sin(theta)], axis=-1) - c
    return 0.5 * np.einsum("...i,ij,...j->...", b, V, b)


def _circle_quad_critical(V: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Angles where d/dtheta of 0.5 (b-c)'V(b-c), b=(cos,sin), vanishes."""
    g = V @ c
    A = -(V[0, 0] - V[1, 1]) / 2.0
    Bc = V[0, 1]
    # derivative: A sin2t + Bc cos2t + g1 sin t - g2 cos t; multiplied by z^2, z = e^{it}
    coeffs = np.array([
        -0.5j * A + 0.5 * Bc,
        -0.5j * g[0] - 0.5 * g[1],
        0.0,
        0.5j * g[0] - 0.5 * g[1],
        0.5j * A + 0.5 * Bc,
    ])
    if np.all(np.abs(coeffs) < 1e-300):
        return np.empty(0)
    roots = np.roots(coeffs)
    on_circle = roots[np.abs(np.abs(roots) - 1.0) < 1e-6]
    return np.mod(np.angle(on_circle), TWO_PI)


class LineSweep:
    """Exact maximization of ``sum_j w_j 1[a_j + r d_j > 0]`` over ``r in [lo, hi]``.

    ``d_j`` takes values in {-1, 0, 1}; terms with ``d_j = 0`` are constant
    in r. Pieces are the open intervals between distinct breakpoints that
    lie strictly inside the bounds.
    """

    def __init__(self, a: np.ndarray, d: np.ndarray, lo: float, hi: float):
        if not lo < hi:
            raise ValueError("need lo < hi")
        a = np.asarray(a, dtype=np.float64)
        d = np.asarray(d, dtype=np.float64)
        self.lo, self.hi = float(lo), float(hi)
        r0 = np.where(d != 0, -a * d, np.nan)
        inside = (d != 0) & (r0 > lo) & (r0 < hi)
        # state on the first piece; d>0 terms switch on at r0, d<0 terms switch off
        self._start_active = np.where(d > 0, r0 <= lo, np.where(d < 0, r0 > lo, a > 0))
        idx = np.flatnonzero(inside)
        order = np.argsort(r0[idx], kind="stable")
        self._bp_term = idx[order]
        self._bp_sign = d[idx][order]
        bps = r0[idx][order]
        last = np.r_[bps[1:] > bps[:-1], True] if bps.size else np.zeros(0, dtype=bool)
        self._last = np.flatnonzero(last)
        edges = np.r_[lo, bps[last], hi]
        self.left = edges[:-1]
        self.right = edges[1:]
        self.n_breakpoints = int(self._last.size)

    def values(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        base = w[self._start_active].sum()
        steps = np.cumsum(self._bp_sign * w[self._bp_term])[self._last]
        return np.r_[base, base + steps]

    def argmax(self, w: np.ndarray, quad: tuple[float, float] | None = None) -> SweepResult:
        """Maximize the weighted count, optionally plus ``0.5 v (r-c)^2`` with ``quad=(v, c)``."""
        vals = self.values(w)
        if quad is None:
            j = int(np.argmax(vals))
            return SweepResult(0.5 * (self.left[j] + self.right[j]), float(vals[j]),
                               float(self.left[j]), float(self.right[j]),
                               bool(vals.max() == vals.min()))
        v, c = quad
        L, R = self.left, self.right
        nudge = 1e-6 * (R - L)
        if v < 0:
            r = np.clip(c, L + nudge, R - nudge)
        elif v > 0:
            r = np.where(np.abs(L - c) >= np.abs(R - c), L + nudge, R - nudge)
        else:
            r = 0.5 * (L + R)
        tot = vals + 0.5 * v * (r - c) ** 2
        j = int(np.argmax(tot))
        return SweepResult(float(r[j]), float(tot[j]), float(L[j]), float(R[j]),
                           bool(tot.max() == tot.min()))


# ---------------------------------------------------------------------------
# K >= 3: hierarchical grids on the sphere followed by pattern search
# ---------------------------------------------------------------------------


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    rho = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


def sphere_points(k: int, n: int, rng: np.random.Generator) -> np.ndarray:
    if k == 3:
        return fibonacci_sphere(n)
    g = rng.standard_normal((n, k))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def tangent_basis(c: np.ndarray) -> np.ndarray:
    """Orthonormal basis (rows) of the complement of unit vector ``c``."""
    k = c.size
    q, _ = np.linalg.qr(np.column_stack([c, np.eye(k)]))
    return q[:, 1:k].T


def exp_map(c: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Geodesic step from ``c`` along tangent vectors ``v`` (rows)."""
    v = np.atleast_2d(v)
    r = np.linalg.norm(v, axis=1, keepdims=True)
    safe = np.where(r > 0, r, 1.0)
    out = np.cos(r) * c + np.sin(r) * v / safe
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def _disk_points(dim: int, n: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    if dim == 2:
        i = np.arange(n) + 0.5
        rr = radius * np.sqrt(i / n)
        phi = np.pi * (3.0 - np.sqrt(5.0)) * i
        return np.stack([rr * np.cos(phi), rr * np.sin(phi)], axis=1)
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * radius * rng.random((n, 1)) ** (1.0 / dim)


@dataclass
class SphereSearchResult:
    point: np.ndarray
    value: float
    evaluations: int
    constant: bool


def sphere_search(evaluate, k: int, points_per_level: int = 720, levels: int = 3,
                  top: int = 5, seed: int = 0, tol: float = 1e-7,
                  max_pattern_iter: int = 500) -> SphereSearchResult:
    """Coarse-to-fine grid search for the maximum of ``evaluate`` on S^{k-1}.

    ``evaluate`` maps an (M, k) array of unit vectors to M values. The search
    can miss a narrow global maximum; the returned value is at least the best
    value among all probed points.
    """
    rng = np.random.default_rng(seed)
    pts = sphere_points(k, points_per_level, rng)
    vals = np.asarray(evaluate(pts), dtype=float)
    n_eval = len(pts)
    lo_seen, hi_seen = vals.min(), vals.max()
    j = int(np.argmax(vals))
    best_b, best_v = pts[j], vals[j]
    area = 2 * np.pi ** (k / 2) / math.gamma(k / 2)
    spacing = (area / points_per_level) ** (1.0 / (k - 1))
    centers = pts[np.argsort(-vals, kind="stable")[:top]]
    for _ in range(1, levels):
        radius = 2.0 * spacing
        disk = _disk_points(k - 1, points_per_level, radius, rng)
        batch = np.concatenate([exp_map(c, disk @ tangent_basis(c)) for c in centers])
        bv = np.asarray(evaluate(batch), dtype=float)
        n_eval += len(batch)
        lo_seen, hi_seen = min(lo_seen, bv.min()), max(hi_seen, bv.max())
        j = int(np.argmax(bv))
        if bv[j] > best_v:
            best_b, best_v = batch[j], bv[j]
        centers = batch[np.argsort(-bv, kind="stable")[:top]]
        spacing = radius * (1.0 / points_per_level) ** (1.0 / (k - 1))

    step = spacing
    it = 0
    while step > tol and it < max_pattern_iter:
        it += 1
        basis = tangent_basis(best_b)
        moves = np.concatenate([basis, -basis]) * step
        cand = exp_map(best_b, moves)
        cv = np.asarray(evaluate(cand), dtype=float)
        n_eval += len(cand)
        j = int(np.argmax(cv))
        if cv[j] > best_v:
            best_b, best_v = cand[j], cv[j]
        else:
            step *= 0.5
    return SphereSearchResult(best_b, float(best_v), n_eval, bool(lo_seen == hi_seen))
