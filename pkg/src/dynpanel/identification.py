"""Large-sample checks of the identification argument on simulated designs.

Both checks use the true coefficients of the design, so they probe the
population claims rather than estimator precision.

* ``check_identifying_inequality``: among individuals with y0 = y2 = y4, the
  frequency of y3 = 1 should exceed that of y1 = 1 exactly when the index
  difference d = (x3 - x1)'beta is positive.
* ``check_population_maximizers``: the sample objectives evaluated on grids
  should peak near the true beta and gamma.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dgp import DgpSpec, simulate
from .errors import InsufficientMass, InvalidSpec
from .estimator import bandwidth, beta_terms, gamma_terms
from .optim import sphere_points

MIN_CONDITIONING = 100


@dataclass
class InequalityReport:
    edges: np.ndarray  # (bins + 1,)
    p3: np.ndarray  # frequency of y3 = 1 per bin
    p1: np.ndarray  # frequency of y1 = 1 per bin
    counts: np.ndarray
    agree: np.ndarray  # bool per bin; meaningful only where ``eligible``
    eligible: np.ndarray  # enough mass and not straddling zero
    straddles_zero: np.ndarray
    agreement_rate: float
    n_conditioning: int

    @property
    def disagreeing_bins(self) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.eligible & ~self.agree)]

    def to_dict(self) -> dict:
        return {
            "edges": self.edges.tolist(),
            "p3": self.p3.tolist(),
            "p1": self.p1.tolist(),
            "counts": self.counts.tolist(),
            "agree": self.agree.tolist(),
            "eligible": self.eligible.tolist(),
            "straddles_zero": self.straddles_zero.tolist(),
            "agreement_rate": self.agreement_rate,
            "n_conditioning": self.n_conditioning,
            "disagreeing_bins": self.disagreeing_bins,
        }

    def render(self) -> str:
        lines = [f"{'bin':>4} {'d_lo':>9} {'d_hi':>9} {'count':>8} {'p3':>7} {'p1':>7}  status"]
        for j in range(self.counts.size):
            if self.straddles_zero[j]:
                status = "exempt (straddles 0)"
            elif not self.eligible[j]:
                status = "too few"
            else:
                status = "agree" if self.agree[j] else "DISAGREE"
            lines.append(
                f"{j:>4} {self.edges[j]:>9.3f} {self.edges[j + 1]:>9.3f} {self.counts[j]:>8d} "
                f"{self.p3[j]:>7.4f} {self.p1[j]:>7.4f}  {status}"
            )
        lines.append(f"conditioning observations: {self.n_conditioning}")
        lines.append(f"agreement rate: {self.agreement_rate:.4f} over {int(self.eligible.sum())} bins")
        return "\n".join(lines) + "\n"


def inequality_report(d: np.ndarray, y3: np.ndarray, y1: np.ndarray, bins: int, min_bin: int) -> InequalityReport:
    """Quantile-binned comparison of the two conditional frequencies."""
    if bins < 1:
        raise InvalidSpec("bins must be >= 1")
    d = np.asarray(d, dtype=np.float64)
    if d.size < MIN_CONDITIONING:
        raise InsufficientMass(
            f"InsufficientMass: {d.size} observations with y0=y2=y4 (need >= {MIN_CONDITIONING})"
        )
    edges = np.quantile(d, np.linspace(0.0, 1.0, bins + 1))
    which = np.clip(np.searchsorted(edges, d, side="right") - 1, 0, bins - 1)
    counts = np.bincount(which, minlength=bins)
    safe = np.maximum(counts, 1)
    p3 = np.bincount(which, weights=y3, minlength=bins) / safe
    p1 = np.bincount(which, weights=y1, minlength=bins) / safe
    straddle = (edges[:-1] < 0.0) & (edges[1:] > 0.0)
    mid = 0.5 * (edges[:-1] + edges[1:])
    agree = np.sign(p3 - p1) == np.sign(mid)
    eligible = (counts >= min_bin) & ~straddle & (mid != 0.0)
    rate = float(agree[eligible].mean()) if eligible.any() else float("nan")
    return InequalityReport(edges, p3, p1, counts, agree, eligible, straddle, rate, int(d.size))


def check_identifying_inequality(spec: DgpSpec, n_large: int, bins: int = 20, min_bin: int = 500,
                                 seed: int = 0, workers: int = 1) -> InequalityReport:
    data, truth = simulate(spec, n_large, seed, workers)
    if data.t_max < 4:
        raise InvalidSpec("the inequality check uses periods 0..4")
    y = data.y
    cond = (y[:, 0] == y[:, 2]) & (y[:, 2] == y[:, 4])
    d = data.xdiff(3, 1)[cond] @ truth.beta_normalized
    return inequality_report(d, y[cond, 3].astype(float), y[cond, 1].astype(float), bins, min_bin)


@dataclass
class MaximizerReport:
    beta_grid: np.ndarray  # (G, K)
    q1_values: np.ndarray
    beta_argmax: np.ndarray
    beta_distance: float  # angle (radians) between the grid argmax and the truth
    gamma_grid: np.ndarray
    q2_values: np.ndarray
    gamma_argmax: float
    gamma_distance: float
    h: float
    beta_true: np.ndarray
    gamma_true: float

    def to_dict(self) -> dict:
        return {
            "beta_argmax": self.beta_argmax.tolist(),
            "beta_distance_rad": self.beta_distance,
            "gamma_argmax": self.gamma_argmax,
            "gamma_distance": self.gamma_distance,
            "h": self.h,
            "beta_true": self.beta_true.tolist(),
            "gamma_true": self.gamma_true,
            "grid_sizes": [len(self.q1_values), len(self.q2_values)],
        }


def angular_grid(points: int, k: int = 2) -> np.ndarray:
    """Evenly spaced directions on the unit circle (K=2); sphere point sets for K>=3."""
    if k == 2:
        theta = 2.0 * np.pi * np.arange(points) / points
        return np.column_stack([np.cos(theta), np.sin(theta)])
    return sphere_points(k, points, np.random.default_rng(0))


def _plateau_center(grid: np.ndarray, values: np.ndarray) -> int:
    """Middle index of the first run of grid points attaining the maximum."""
    top = values.max()
    start = int(np.argmax(values == top))
    stop = start
    while stop + 1 < values.size and values[stop + 1] == top:
        stop += 1
    return (start + stop) // 2


def check_population_maximizers(spec: DgpSpec, n_large: int, beta_grid=360, gamma_grid=None,
                                seed: int = 0, h: float | None = None, workers: int = 1) -> MaximizerReport:
    """Grid maxima of the beta objective and of the gamma objective at the true beta.

    ``beta_grid`` is either a point count or a (G, K) array of directions;
    ``gamma_grid`` defaults to [-3, 3] in steps of 0.01.
    """
    data, truth = simulate(spec, n_large, seed, workers)
    data.require_periods(4)
    k = data.k
    grid_b = angular_grid(beta_grid, k) if np.isscalar(beta_grid) else np.asarray(beta_grid, float)
    grid_b = grid_b / np.linalg.norm(grid_b, axis=1, keepdims=True)
    grid_g = np.round(np.arange(-300, 301) * 0.01, 10) if gamma_grid is None else np.asarray(gamma_grid, float)

    bt = beta_terms(data)
    if bt.w.size == 0:
        raise InsufficientMass("InsufficientMass: no individual with y0=y2=y4 and y1 != y3")
    q1 = (np.sign(bt.X @ grid_b.T).T @ bt.w) / data.n
    jb = int(np.argmax(q1))
    b_star = grid_b[jb]
    beta_dist = float(np.arccos(np.clip(b_star @ truth.beta_normalized, -1.0, 1.0)))

    h_used = bandwidth(data.n) if h is None else float(h)
    gt = gamma_terms(data, truth.beta_normalized, h_used)
    if gt.w.size == 0 or not np.any(gt.w):
        raise InsufficientMass("InsufficientMass: no gamma-step term carries kernel weight")
    q2 = (np.sign(gt.a[None, :] + grid_g[:, None] * gt.d[None, :]) @ gt.w) / data.n
    jg = _plateau_center(grid_g, q2)
    g_star = float(grid_g[jg])
    return MaximizerReport(
        beta_grid=grid_b, q1_values=q1, beta_argmax=b_star, beta_distance=beta_dist,
        gamma_grid=grid_g, q2_values=q2, gamma_argmax=g_star,
        gamma_distance=float(abs(g_star - truth.gamma_normalized)), h=h_used,
        beta_true=truth.beta_normalized, gamma_true=truth.gamma_normalized,
    )
