"""Bootstrap inference for the two-step estimator.

All four procedures resample individuals with replacement. A resample is
represented by its count vector ``N`` (how often each individual was drawn),
so every draw objective is the original term set reweighted:

* numerical:  w * (1 + sqrt(n eps) (N - 1)) / n
* modified:   w * (N - 1) / n  plus a quadratic curvature penalty
* classic:    w * N / n
* m-out-of-n: w * N / m      (N sums to m)

Draw j uses its own Philox stream keyed by ``(seed, j)``, so results do not
depend on the number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EmptySample, InvalidSpec, ResampleDegenerate
from .estimator import (
    EstimateResult,
    EstimationConfig,
    bandwidth,
    beta_terms,
    gamma_terms,
    maximize_beta_terms,
)
from .optim import CircleSweep, LineSweep
from .panel_data import PanelDataset

METHODS = ("numerical", "modified", "mn", "classic")
MAX_MISSING_SHARE = 0.10


def epsilon_rule(n: int, c: float = 1.0) -> float:
    return c * n ** (-2.0 / 3.0) * math.log(n)


def omega_beta_rule(n: int, c: float = 1.0, cap: float | None = 0.5) -> float:
    w = c * n ** (-1.0 / 7.0) * math.log(n)
    return min(w, cap) if cap is not None else w


def omega_gamma_rule(n: int, c: float = 1.0) -> float:
    return c * n ** (-3.0 / 28.0) * math.log(n) ** (1.0 / 7.0)


def default_m(n: int) -> int:
    return math.ceil(n ** (2.0 / 3.0))


def quantile(samples, tau: float) -> float:
    """Order statistic at 1-based index ceil(tau * B), clamped to [1, B]."""
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    if x.size == 0:
        raise EmptySample("quantile of an empty sample")
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    idx = min(max(math.ceil(tau * x.size), 1), x.size)
    return float(x[idx - 1])


def quantile_index(b: int, tau: float) -> int:
    return min(max(math.ceil(tau * b), 1), b)


@dataclass(frozen=True)
class BootstrapConfig:
    method: str = "numerical"
    b_draws: int = 199
    c: float = 1.0
    alpha: float = 0.05
    seed: int = 0
    m: int | None = None  # m-out-of-n resample size; default ceil(n^(2/3))
    epsilon: float | None = None  # overrides the epsilon rule when set
    omega_beta_cap: float | None = 0.5
    # m-out-of-n gamma step: "resample" uses h_m and the draw's own beta; "original" keeps h_n and beta_hat
    mn_bandwidth: str = "resample"
    workers: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidSpec(f"bootstrap method must be one of {METHODS}")
        if self.b_draws < 2:
            raise InvalidSpec("need at least 2 bootstrap draws")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidSpec("alpha must lie in (0, 1)")
        if self.mn_bandwidth not in ("original", "resample"):
            raise InvalidSpec("mn_bandwidth must be 'original' or 'resample'")


@dataclass
class CurvatureEstimates:
    v1_hat: np.ndarray
    v2_hat: float
    omega_beta: float
    omega_gamma: float


@dataclass
class BootstrapResult:
    method: str
    beta_hat: np.ndarray
    gamma_hat: float
    beta_lower: np.ndarray
    beta_upper: np.ndarray
    gamma_lower: float
    gamma_upper: float
    beta_draws: np.ndarray  # (B, K); rows of missing draws are NaN
    gamma_draws: np.ndarray  # (B,)
    tuning: dict
    quantile_indices: tuple[int, int]
    n_missing: int = 0
    flags: list = field(default_factory=list)

    def covers(self, beta_true, gamma_true) -> tuple[np.ndarray, bool]:
        bt = np.asarray(beta_true, dtype=float)
        return ((self.beta_lower <= bt) & (bt <= self.beta_upper),
                bool(self.gamma_lower <= gamma_true <= self.gamma_upper))

    def to_dict(self, draws: bool = False) -> dict:
        out = {
            "method": self.method,
            "beta_hat": self.beta_hat.tolist(),
            "gamma_hat": self.gamma_hat,
            "beta_ci": [[float(lo), float(hi)] for lo, hi in zip(self.beta_lower, self.beta_upper)],
            "gamma_ci": [self.gamma_lower, self.gamma_upper],
            "tuning": self.tuning,
            "quantile_indices": list(self.quantile_indices),
            "n_missing": self.n_missing,
            "flags": list(self.flags),
        }
        if draws:
            out["beta_draws"] = np.where(np.isnan(self.beta_draws), None, self.beta_draws).tolist()
            out["gamma_draws"] = [None if np.isnan(g) else float(g) for g in self.gamma_draws]
        return out


# ---------------------------------------------------------------------------
# curvature
# ---------------------------------------------------------------------------


def _xi_mean(terms, n: int, B: np.ndarray) -> np.ndarray:
    return (terms.X @ np.atleast_2d(B).T > 0).T @ terms.w / n


def estimate_v1(data: PanelDataset, beta_hat, omega: float, variant: str = "adjacent") -> np.ndarray:
    """Numerical-derivative estimate of the beta-objective curvature."""
    if not omega > 0:
        raise ValueError("omega must be > 0")
    beta_hat = np.asarray(beta_hat, dtype=float)
    k = beta_hat.size
    terms = beta_terms(data, variant)
    V = np.zeros((k, k))
    if terms.w.size == 0:
        return V
    E = np.eye(k) * omega
    for a in range(k):
        for b in range(a, k):
            pts = np.stack([beta_hat + E[a] + E[b], beta_hat + E[a] - E[b],
                            beta_hat - E[a] + E[b], beta_hat - E[a] - E[b]])
            f = _xi_mean(terms, data.n, pts)
            V[a, b] = V[b, a] = (f[0] - f[1] - f[2] + f[3]) / (4.0 * omega**2)
    return V


def estimate_v2(data: PanelDataset, beta_hat, gamma_hat: float, omega: float, h: float,
                variant: str = "adjacent") -> float:
    """Numerical second derivative of the gamma objective in r at gamma_hat."""
    if not omega > 0 or not h > 0:
        raise ValueError("omega and h must be > 0")
    terms = gamma_terms(data, beta_hat, h, variant)
    if terms.w.size == 0:
        return 0.0
    f = [np.sum(terms.w * (terms.a + r * terms.d > 0)) / data.n
         for r in (gamma_hat + 2 * omega, gamma_hat, gamma_hat - 2 * omega)]
    return float((f[0] - 2 * f[1] + f[2]) / (4.0 * omega**2))


def estimate_curvature(data: PanelDataset, est: EstimateResult, c: float = 1.0,
                       cap: float | None = 0.5, variant: str = "adjacent") -> CurvatureEstimates:
    ob = omega_beta_rule(data.n, c, cap)
    og = omega_gamma_rule(data.n, c)
    v1 = estimate_v1(data, est.params.beta, ob, variant)
    v2 = estimate_v2(data, est.params.beta, est.params.gamma, og, est.h_used, variant)
    return CurvatureEstimates(v1, v2, ob, og)


# ---------------------------------------------------------------------------
# draws
# ---------------------------------------------------------------------------


def draw_counts(n: int, size: int, seed: int, draw: int) -> np.ndarray:
    """Multiplicities of a with-replacement resample of ``size`` out of ``n``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(draw)])
    rng = np.random.Generator(np.random.Philox(ss))
    return np.bincount(rng.integers(0, n, size=size), minlength=n).astype(np.float64)


class _Problem:
    """Terms and presorted sweeps shared by all draws of one bootstrap run."""

    def __init__(self, data: PanelDataset, est: EstimateResult, ecfg: EstimationConfig):
        self.data = data
        self.n = data.n
        self.k = data.k
        self.ecfg = ecfg
        self.beta_hat = est.params.beta
        self.gamma_hat = est.params.gamma
        self.h = est.h_used
        self.bt = beta_terms(data, ecfg.variant)
        self.gt = gamma_terms(data, self.beta_hat, self.h, ecfg.variant)
        self.csweep = CircleSweep(self.bt.X) if self.k == 2 else None
        self.lsweep = LineSweep(self.gt.a, self.gt.d, *ecfg.gamma_bounds)

    def beta_star(self, mult: np.ndarray, quad=None) -> np.ndarray:
        w = self.bt.w * mult[self.bt.ind]
        b, _ = maximize_beta_terms(self.bt, w, self.k, self.ecfg, quad, self.csweep)
        return b / np.linalg.norm(b)

    def gamma_star(self, mult: np.ndarray, quad=None) -> float:
        return self.lsweep.argmax(self.gt.w * mult[self.gt.ind], quad).point


def _ci(theta_hat: float, draws: np.ndarray, alpha: float, scale: float | None):
    """Reflected interval with rate ``scale``; ``scale=None`` gives the plain percentile interval."""
    q_hi = quantile(draws, 1 - alpha / 2)
    q_lo = quantile(draws, alpha / 2)
    if scale is None:
        return q_lo, q_hi
    return theta_hat - scale * (q_hi - theta_hat), theta_hat - scale * (q_lo - theta_hat)


def run_bootstrap(data: PanelDataset, est: EstimateResult, cfg: BootstrapConfig,
                  ecfg: EstimationConfig | None = None,
                  curvature: CurvatureEstimates | None = None) -> BootstrapResult:
    """Dispatch to the configured procedure and build the confidence intervals."""
    if ecfg is None:
        # keep the default bandwidth rule when the estimate used it (m-out-of-n rescales h)
        ecfg = EstimationConfig() if est.h_used == bandwidth(data.n) else EstimationConfig(h=est.h_used)
    prob = _Problem(data, est, ecfg)
    n, k = prob.n, prob.k
    flags: list[str] = []
    tuning: dict = {"h": prob.h, "c": cfg.c, "B": cfg.b_draws}
    size = n
    quad_b = quad_g = None
    mn_terms = None

    if cfg.method in ("numerical", "classic"):
        eps = cfg.epsilon if cfg.epsilon is not None else (
            epsilon_rule(n, cfg.c) if cfg.method == "numerical" else 1.0 / n)
        if cfg.method == "numerical" and not (1.0 / n <= eps < 1.0):
            raise InvalidSpec(f"epsilon_n={eps} outside [1/n, 1)")
        root = 1.0 if abs(n * eps - 1.0) < 1e-12 else math.sqrt(n * eps)
        tuning["epsilon"] = eps

        def mult_of(N):
            return (1.0 + root * (N - 1.0)) / n

    elif cfg.method == "modified":
        cv = curvature or estimate_curvature(data, est, cfg.c, cfg.omega_beta_cap, ecfg.variant)
        tuning.update(omega_beta=cv.omega_beta, omega_gamma=cv.omega_gamma,
                      v1_hat=cv.v1_hat.tolist(), v2_hat=cv.v2_hat)
        if cv.v2_hat > 0:
            flags.append("CurvatureUnusable: V2 estimate is positive")
        quad_b = (cv.v1_hat, prob.beta_hat)
        quad_g = (cv.v2_hat, prob.gamma_hat)

        def mult_of(N):
            return (N - 1.0) / n

    else:  # mn
        size = cfg.m if cfg.m is not None else default_m(n)
        if not 1 <= size <= n:
            raise InvalidSpec(f"m={size} must lie in [1, n]")
        tuning["m"] = size
        if cfg.mn_bandwidth == "resample":
            tuning["h_m"] = bandwidth(size) if ecfg.h is None else ecfg.h
            mn_terms = tuning["h_m"]

        def mult_of(N):
            return N / size

    # only purely resample-based objectives can lose every switcher
    can_degenerate = cfg.method in ("classic", "mn")

    def one_draw(j):
        N = draw_counts(n, size, cfg.seed, j)
        if can_degenerate and not np.any(N[prob.bt.ind]):
            return None, None
        if can_degenerate and mn_terms is None and not np.any(N[prob.gt.ind]):
            return None, None
        mult = mult_of(N)
        b = prob.beta_star(mult, quad_b)
        if mn_terms is not None:
            gt = gamma_terms(data, b, mn_terms, ecfg.variant)
            w = gt.w * mult[gt.ind]
            if not np.any(w):
                return None, None
            g = LineSweep(gt.a, gt.d, *ecfg.gamma_bounds).argmax(w).point
        else:
            g = prob.gamma_star(mult, quad_g)
        return b, g

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            out = list(pool.map(one_draw, range(cfg.b_draws)))
    else:
        out = [one_draw(j) for j in range(cfg.b_draws)]

    beta_draws = np.full((cfg.b_draws, k), np.nan)
    gamma_draws = np.full(cfg.b_draws, np.nan)
    for j, (b, g) in enumerate(out):
        if b is not None:
            beta_draws[j] = b
            gamma_draws[j] = g
    ok = ~np.isnan(gamma_draws)
    n_missing = int((~ok).sum())
    if n_missing > MAX_MISSING_SHARE * cfg.b_draws:
        raise ResampleDegenerate(
            f"ResampleDegenerate: {n_missing} of {cfg.b_draws} draws had no usable switchers"
        )

    if cfg.method == "numerical":
        s_beta = s_gamma = (n * tuning["epsilon"]) ** (-1.0 / 3.0)
    elif cfg.method == "modified":
        s_beta = s_gamma = 1.0
    elif cfg.method == "mn":
        s_beta = (size / n) ** (1.0 / 3.0)
        if cfg.mn_bandwidth == "resample":
            s_gamma = ((size * tuning["h_m"]) / (n * prob.h)) ** (1.0 / 3.0)
        else:
            s_gamma = s_beta
    else:
        s_beta = s_gamma = None
        flags.append("inconsistent_method: the classic bootstrap is not consistent for this estimator")
    tuning["scale_beta"] = s_beta
    tuning["scale_gamma"] = s_gamma

    bd, gd = beta_draws[ok], gamma_draws[ok]
    lo = np.empty(k)
    hi = np.empty(k)
    for c in range(k):
        lo[c], hi[c] = _ci(prob.beta_hat[c], bd[:, c], cfg.alpha, s_beta)
    g_lo, g_hi = _ci(prob.gamma_hat, gd, cfg.alpha, s_gamma)
    b_eff = int(ok.sum())
    return BootstrapResult(
        method=cfg.method,
        beta_hat=prob.beta_hat,
        gamma_hat=prob.gamma_hat,
        beta_lower=lo,
        beta_upper=hi,
        gamma_lower=float(g_lo),
        gamma_upper=float(g_hi),
        beta_draws=beta_draws,
        gamma_draws=gamma_draws,
        tuning=tuning,
        quantile_indices=(quantile_index(b_eff, cfg.alpha / 2), quantile_index(b_eff, 1 - cfg.alpha / 2)),
        n_missing=n_missing,
        flags=flags,
    )


def numerical_bootstrap(data, est, cfg: BootstrapConfig, ecfg=None) -> BootstrapResult:
    return run_bootstrap(data, est, _with_method(cfg, "numerical"), ecfg)


def modified_objective_bootstrap(data, est, cfg: BootstrapConfig, ecfg=None, curvature=None) -> BootstrapResult:
    return run_bootstrap(data, est, _with_method(cfg, "modified"), ecfg, curvature)


def m_out_of_n_bootstrap(data, est, cfg: BootstrapConfig, ecfg=None) -> BootstrapResult:
    return run_bootstrap(data, est, _with_method(cfg, "mn"), ecfg)


def classic_bootstrap(data, est, cfg: BootstrapConfig, ecfg=None) -> BootstrapResult:
    return run_bootstrap(data, est, _with_method(cfg, "classic"), ecfg)


def _with_method(cfg: BootstrapConfig, method: str) -> BootstrapConfig:
    return cfg if cfg.method == method else replace(cfg, method=method)
