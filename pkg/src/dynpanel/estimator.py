"""Two-step maximum score estimation of (beta, gamma).

Both sample objectives are sums of per-individual "terms" of the form
``weight * sgn(index)``. The helpers ``beta_terms`` and ``gamma_terms``
extract those terms once; objectives, maximizers and the bootstrap all work
from them, which keeps every route through the code on the same definitions.

Objective variants:

``adjacent``
    four-period window (periods 0..4): the beta objective over the (1, 3)
    pair and the gamma objective over adjacent periods t = 2, 3.
``combined``
    ``adjacent`` plus the non-adjacent gamma term over the (1, 3) pair.
``general``
    every admissible period pair of a panel with T >= 4; equal to
    ``combined`` when T = 4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AllWeightsZero, InvalidSpec, NoGammaSwitchers, NoSwitchers
from .optim import CircleSweep, LineSweep, sphere_search
from .panel_data import ModelParams, PanelDataset, switcher_counts

VARIANTS = ("adjacent", "combined", "general")


def epanechnikov(u):
    """(3/4)(1 - u^2) on [-1, 1], zero outside."""
    u = np.asarray(u, dtype=np.float64)
    out = np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    return out if out.ndim else float(out)


def kernel_h(v, h: float):
    """Scaled kernel weight K(v/h)/h."""
    return epanechnikov(np.asarray(v, dtype=np.float64) / h) / h


def bandwidth(n: int) -> float:
    """Default bandwidth n^(-1/4) / log(n)."""
    if n < 3:
        raise ValueError("bandwidth rule needs n >= 3")
    return n ** -0.25 / math.log(n)


@dataclass(frozen=True)
class EstimationConfig:
    kernel: str = "epanechnikov"
    h: float | None = None  # None selects the default bandwidth rule
    gamma_bounds: tuple[float, float] = (-3.0, 3.0)
    grid_points: int = 720
    grid_levels: int = 3
    grid_top: int = 5
    variant: str = "adjacent"
    seed: int = 0

    def __post_init__(self):
        if self.kernel != "epanechnikov":
            raise InvalidSpec(f"unsupported kernel {self.kernel!r}")
        if self.h is not None and not self.h > 0:
            raise InvalidSpec("bandwidth h must be > 0")
        lo, hi = self.gamma_bounds
        if not lo < hi:
            raise InvalidSpec("gamma bounds need lo < hi")
        if self.grid_points < 8 or self.grid_levels < 1:
            raise InvalidSpec("grid resolution must be >= 8 points and >= 1 level")
        if self.variant not in VARIANTS:
            raise InvalidSpec(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    def bandwidth_for(self, n: int) -> float:
        return self.h if self.h is not None else bandwidth(n)


@dataclass
class EstimateResult:
    params: ModelParams
    q1_value: float
    q2_value: float
    beta_effective: int
    gamma_effective: int
    h_used: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "beta": self.params.beta.tolist(),
            "gamma": self.params.gamma,
            "q1_value": self.q1_value,
            "q2_value": self.q2_value,
            "beta_effective": self.beta_effective,
            "gamma_effective": self.gamma_effective,
            "h_used": self.h_used,
            "diagnostics": self.diagnostics,
        }


# ---------------------------------------------------------------------------
# term extraction
# ---------------------------------------------------------------------------


@dataclass
class BetaTerms:
    """Terms ``w * sgn(X b)`` of the beta objective; ``ind`` maps terms to individuals."""

    ind: np.ndarray
    X: np.ndarray
    w: np.ndarray


@dataclass
class GammaTerms:
    """Terms ``w * sgn(a + r d)`` of the gamma objective at a fixed b."""

    ind: np.ndarray
    a: np.ndarray
    d: np.ndarray
    w: np.ndarray
    n_switch: int  # terms that switch and move with r, counted before kernel weighting


def _beta_pairs(t_max: int, variant: str) -> list[tuple[int, int]]:
    if variant == "general":
        return [(s, t) for s in range(1, t_max) for t in range(s + 2, t_max)]
    return [(1, 3)]


def beta_terms(data: PanelDataset, variant: str = "adjacent") -> BetaTerms:
    data.require_periods(4)
    y = data.y.astype(np.int64)
    inds, Xs, ws = [], [], []
    for s, t in _beta_pairs(data.t_max, variant):
        match = (y[:, s - 1] == y[:, t - 1]) & (y[:, s + 1] == y[:, t + 1])
        w = match * (y[:, t] - y[:, s])
        nz = np.flatnonzero(w)
        inds.append(nz)
        Xs.append(data.xdiff(t, s)[nz])
        ws.append(w[nz].astype(np.float64))
    ind = np.concatenate(inds)
    order = np.argsort(ind, kind="stable")
    return BetaTerms(ind[order], np.concatenate(Xs)[order], np.concatenate(ws)[order])


def _gamma_specs(t_max: int, variant: str):
    """(kernel pair, sign pair, switch pair, lag pair, match pair) per term family."""
    specs = []
    adj_t = range(2, t_max) if variant == "general" else (2, 3)
    for t in adj_t:
        # K((x_{t+1}-x_t)'b)(y_t - y_{t-1}) sgn((x_t - x_{t-1})'b + r(y_{t+1} - y_{t-2}))
        specs.append(((t + 1, t), (t, t - 1), (t, t - 1), (t + 1, t - 2), None))
    if variant == "general":
        nonadj = [(s, t) for s in range(1, t_max - 2) for t in range(s + 2, t_max)]
    elif variant == "combined":
        nonadj = [(1, 3)]
    else:
        nonadj = []
    for s, t in nonadj:
        # 1[y_{s+1}=y_{t+1}] K((x_{t+1}-x_{s+1})'b)(y_t - y_s) sgn((x_t-x_s)'b + r(y_{t-1}-y_{s-1}))
        specs.append(((t + 1, s + 1), (t, s), (t, s), (t - 1, s - 1), (s + 1, t + 1)))
    return specs


def gamma_terms(data: PanelDataset, b: np.ndarray, h: float, variant: str = "adjacent") -> GammaTerms:
    data.require_periods(4)
    b = np.asarray(b, dtype=np.float64)
    y = data.y.astype(np.int64)
    inds, As, Ds, Ws = [], [], [], []
    n_switch = 0
    for kp, sp, wp, lp, mp in _gamma_specs(data.t_max, variant):
        sw = y[:, wp[0]] - y[:, wp[1]]
        if mp is not None:
            sw = sw * (y[:, mp[0]] == y[:, mp[1]])
        nz = np.flatnonzero(sw)
        n_switch += int(np.count_nonzero(y[nz, lp[0]] != y[nz, lp[1]]))
        kw = kernel_h(data.xdiff(*kp)[nz] @ b, h)
        w = sw[nz] * kw
        keep = w != 0
        nz = nz[keep]
        inds.append(nz)
        Ws.append(w[keep])
        As.append(data.xdiff(*sp)[nz] @ b)
        Ds.append((y[nz, lp[0]] - y[nz, lp[1]]).astype(np.float64))
    ind = np.concatenate(inds)
    order = np.argsort(ind, kind="stable")
    return GammaTerms(ind[order], np.concatenate(As)[order], np.concatenate(Ds)[order],
                      np.concatenate(Ws)[order], n_switch)


# ---------------------------------------------------------------------------
# objectives
# ---------------------------------------------------------------------------


def q1_objective(data: PanelDataset, b, variant: str = "adjacent") -> float:
    """Sample beta objective: mean over individuals of weighted sgn((x_t - x_s)'b)."""
    b = np.asarray(b, dtype=np.float64)
    if not np.any(b != 0):
        raise ValueError("b must be nonzero")
    terms = beta_terms(data, variant)
    return float(np.sum(terms.w * np.sign(terms.X @ b)) / data.n)


def q2_kernel_objective(data: PanelDataset, r: float, b, h: float, variant: str = "adjacent") -> float:
    """Kernel-weighted gamma objective at (r, b) with bandwidth h."""
    terms = gamma_terms(data, b, h, variant)
    return float(np.sum(terms.w * np.sign(terms.a + r * terms.d)) / data.n)


def _per_individual(n: int, ind: np.ndarray, vals: np.ndarray) -> np.ndarray:
    return np.bincount(ind, weights=vals, minlength=n)


def xi_all(data: PanelDataset, b, variant: str = "adjacent") -> np.ndarray:
    """Per-individual indicator-form beta terms, with the truth-dependent part dropped."""
    terms = beta_terms(data, variant)
    return _per_individual(data.n, terms.ind, terms.w * (terms.X @ np.asarray(b, float) > 0))


def xi(data: PanelDataset, i: int, b, variant: str = "adjacent") -> float:
    return float(xi_all(data, b, variant)[i])


def varsigma_all(data: PanelDataset, r: float, b, h: float, variant: str = "adjacent") -> np.ndarray:
    """Per-individual indicator-form gamma terms at (r, b), truth-dependent part dropped."""
    terms = gamma_terms(data, b, h, variant)
    return _per_individual(data.n, terms.ind, terms.w * (terms.a + r * terms.d > 0))


def varsigma(data: PanelDataset, i: int, r: float, b, h: float, variant: str = "adjacent") -> float:
    return float(varsigma_all(data, r, b, h, variant)[i])


# ---------------------------------------------------------------------------
# maximization
# ---------------------------------------------------------------------------


def angle_to_unit(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


def maximize_beta_terms(terms: BetaTerms, weights: np.ndarray, k: int, cfg: EstimationConfig,
                        quad=None, sweep: CircleSweep | None = None) -> tuple[np.ndarray, dict]:
    """Maximize ``sum_j weights_j 1[X_j b > 0] (+ quadratic)`` over the unit sphere.

    K = 2 is exact (arc enumeration); K >= 3 uses the grid/pattern search.
    """
    if k == 1:
        cand = np.array([[1.0], [-1.0]])
        vals = (terms.X @ cand.T > 0).T @ weights
        if quad is not None:
            V, c = quad
            vals = vals + 0.5 * V[0, 0] * (cand[:, 0] - c[0]) ** 2
        j = int(np.argmax(vals))
        return cand[j], {"method": "enumeration", "constant": bool(vals[0] == vals[1])}
    if k == 2:
        sweep = sweep if sweep is not None else CircleSweep(terms.X)
        res = sweep.argmax(weights, quad)
        if res.constant:
            return np.array([1.0, 0.0]), {"method": "arc-sweep", "constant": True}
        return angle_to_unit(res.point), {
            "method": "arc-sweep", "constant": False, "arcs": int(len(sweep.left)),
            "arc": [res.left, res.right],
        }

    def evaluate(B):
        vals = (terms.X @ B.T > 0).T @ weights
        if quad is not None:
            V, c = quad
            D = B - c
            vals = vals + 0.5 * np.einsum("mi,ij,mj->m", D, V, D)
        return vals

    res = sphere_search(evaluate, k, cfg.grid_points, cfg.grid_levels, cfg.grid_top, cfg.seed)
    if res.constant:
        e1 = np.zeros(k)
        e1[0] = 1.0
        return e1, {"method": "sphere-grid", "constant": True, "evaluations": res.evaluations}
    return res.point, {"method": "sphere-grid", "constant": False, "evaluations": res.evaluations}


def estimate_beta(data: PanelDataset, cfg: EstimationConfig | None = None) -> tuple[np.ndarray, float, dict]:
    """First step: unit-norm maximizer of the beta objective."""
    cfg = cfg or EstimationConfig()
    terms = beta_terms(data, cfg.variant)
    if terms.w.size == 0 or not np.any(terms.X != 0):
        raise NoSwitchers("NoSwitchers: no individual contributes to the beta objective")
    b, diag = maximize_beta_terms(terms, terms.w, data.k, cfg)
    b = b / np.linalg.norm(b)
    q1 = float(np.sum(terms.w * np.sign(terms.X @ b)) / data.n)
    if diag.get("constant"):
        diag["degenerate"] = "DegenerateObjective: beta objective constant over the sphere"
    return b, q1, diag


def maximize_gamma_terms(terms: GammaTerms, weights: np.ndarray, bounds, quad=None,
                         sweep: LineSweep | None = None):
    sweep = sweep if sweep is not None else LineSweep(terms.a, terms.d, *bounds)
    return sweep.argmax(weights, quad), sweep


def estimate_gamma(data: PanelDataset, beta_hat, cfg: EstimationConfig | None = None) -> tuple[float, float, dict]:
    """Second step: exact 1-D maximization of the kernel-weighted gamma objective."""
    cfg = cfg or EstimationConfig()
    h = cfg.bandwidth_for(data.n)
    terms = gamma_terms(data, beta_hat, h, cfg.variant)
    if terms.n_switch == 0:
        raise NoGammaSwitchers("NoGammaSwitchers: no individual contributes to the gamma objective")
    if terms.w.size == 0:
        raise AllWeightsZero(f"AllWeightsZero: every kernel weight vanished at h={h:g}")
    res, sweep = maximize_gamma_terms(terms, terms.w, cfg.gamma_bounds)
    r = res.point
    q2 = float(np.sum(terms.w * np.sign(terms.a + r * terms.d)) / data.n)
    diag = {"breakpoints": sweep.n_breakpoints, "interval": [res.left, res.right],
            "constant": res.constant}
    return r, q2, diag


def estimate(data: PanelDataset, cfg: EstimationConfig | None = None) -> EstimateResult:
    """Run both steps and collect the result."""
    cfg = cfg or EstimationConfig()
    data.require_periods(4)
    beta_hat, q1, diag_b = estimate_beta(data, cfg)
    gamma_hat, q2, diag_g = estimate_gamma(data, beta_hat, cfg)
    be, ge = switcher_counts(data)
    return EstimateResult(
        params=ModelParams(beta_hat, gamma_hat),
        q1_value=q1,
        q2_value=q2,
        beta_effective=be,
        gamma_effective=ge,
        h_used=cfg.bandwidth_for(data.n),
        diagnostics={"beta": diag_b, "gamma": diag_g, "variant": cfg.variant},
    )
