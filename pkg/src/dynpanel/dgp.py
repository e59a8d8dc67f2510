"""Simulated dynamic binary-choice panels (the three Monte Carlo designs).

Draws are produced block-wise: individuals are grouped in fixed blocks of
``BLOCK`` and every block gets its own Philox stream keyed by ``(seed, block)``.
A dataset is therefore a pure function of ``(spec, n, seed)``, independent of
how many workers fill it, and the first m individuals of an n-sample equal
the m-sample.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidSpec
from .panel_data import PanelDataset

BLOCK = 4096
LOGISTIC_SCALE = (math.pi**2 / 3.0) ** -0.5
_U53 = 2.0**-53


class Design(str, Enum):
    DESIGN1 = "Design1"
    DESIGN2 = "Design2"
    DESIGN3 = "Design3"
    CUSTOM = "Custom"


@dataclass(frozen=True)
class DgpSpec:
    design_id: Design
    beta_raw: tuple
    gamma_raw: float
    t_max: int = 4
    ar_coefficient: float = 0.0
    error_law: str = "UnitVarianceLogistic"
    fixed_effect_rule: str = "MeanOfX2AcrossPeriods"

    def validate(self) -> None:
        beta = np.asarray(self.beta_raw, dtype=float)
        if beta.ndim != 1 or beta.size < 1 or not np.all(np.isfinite(beta)):
            raise InvalidSpec("beta_raw must be a finite vector")
        if not np.any(beta != 0):
            raise InvalidSpec("beta_raw needs at least one nonzero entry")
        if not math.isfinite(self.gamma_raw):
            raise InvalidSpec("gamma_raw must be finite")
        if not -1.0 < self.ar_coefficient < 1.0:
            raise InvalidSpec(f"AR coefficient must lie in (-1, 1), got {self.ar_coefficient}")
        if self.t_max < 1:
            raise InvalidSpec("t_max must be >= 1")
        if self.error_law != "UnitVarianceLogistic":
            raise InvalidSpec(f"unsupported error law {self.error_law!r}")
        if self.fixed_effect_rule != "MeanOfX2AcrossPeriods":
            raise InvalidSpec(f"unsupported fixed-effect rule {self.fixed_effect_rule!r}")
        if beta.size < 2:
            raise InvalidSpec("the MeanOfX2AcrossPeriods fixed effect needs K >= 2")

    @property
    def k(self) -> int:
        return len(self.beta_raw)


@dataclass(frozen=True)
class TrueParams:
    beta_normalized: np.ndarray
    gamma_normalized: float


def design(number: int | str, t_max: int = 4) -> DgpSpec:
    """The benchmark designs: 1 (iid normal), 2 (AR(1) second regressor), 3 (K=3)."""
    key = str(number).lower().removeprefix("design")
    if key == "1":
        return DgpSpec(Design.DESIGN1, (1.0, 1.0), -1.0, t_max)
    if key == "2":
        return DgpSpec(Design.DESIGN2, (1.0, 1.0), -1.0, t_max, ar_coefficient=0.5)
    if key == "3":
        return DgpSpec(Design.DESIGN3, (1.0, 1.0, 1.0), -1.0, t_max)
    raise InvalidSpec(f"unknown design {number!r}; expected 1, 2 or 3")


def true_params(spec: DgpSpec) -> TrueParams:
    beta = np.asarray(spec.beta_raw, dtype=float)
    scale = np.linalg.norm(beta)
    return TrueParams(beta / scale, spec.gamma_raw / scale)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, block])
    return np.random.Generator(np.random.Philox(ss))


def logistic_from_uniform(u: np.ndarray) -> np.ndarray:
    """Unit-variance logistic draws by inverse CDF."""
    return LOGISTIC_SCALE * np.log(u / (1.0 - u))


def _simulate_block(spec: DgpSpec, seed: int, block: int, size: int):
    rng = _block_rng(seed, block)
    T, K = spec.t_max, spec.k
    z = rng.standard_normal((BLOCK, T + 1, K))[:size]
    # open-interval uniforms: (j + 1/2) / 2^53
    u = (rng.integers(0, 2**53, size=(BLOCK, T + 1), dtype=np.int64)[:size] + 0.5) * _U53
    x = z
    if spec.ar_coefficient != 0.0:
        rho = spec.ar_coefficient
        x = z.copy()
        for t in range(1, T + 1):
            x[:, t, 1] = rho * x[:, t - 1, 1] + z[:, t, 1]
    eps = logistic_from_uniform(u)
    alpha = x[:, :, 1].mean(axis=1)
    beta = np.asarray(spec.beta_raw, dtype=float)
    index = x @ beta + alpha[:, None]
    y = np.empty((size, T + 1), dtype=np.int8)
    y[:, 0] = index[:, 0] - eps[:, 0] > 0
    for t in range(1, T + 1):
        y[:, t] = index[:, t] + spec.gamma_raw * y[:, t - 1] - eps[:, t] > 0
    return y, x[:, 1:, :], eps


def simulate(spec: DgpSpec, n: int, seed: int, workers: int = 1) -> tuple[PanelDataset, TrueParams]:
    """Draw an n-individual panel from ``spec``.

    Period-0 regressors feed the initial condition and the fixed effect but
    are not stored in the returned dataset.
    """
    spec.validate()
    if n < 1:
        raise InvalidSpec("n must be >= 1")
    blocks = [(b, min(BLOCK, n - b * BLOCK)) for b in range(-(-n // BLOCK))]
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda bs: _simulate_block(spec, seed, *bs), blocks))
    else:
        parts = [_simulate_block(spec, seed, *bs) for bs in blocks]
    y = np.concatenate([p[0] for p in parts])
    x = np.concatenate([p[1] for p in parts])
    return PanelDataset(y, x), true_params(spec)


def simulate_errors(n: int, seed: int) -> np.ndarray:
    """Standalone unit-variance logistic draws from the same uniform construction."""
    rng = _block_rng(seed, 0)
    u = (rng.integers(0, 2**53, size=n, dtype=np.int64) + 0.5) * _U53
    return logistic_from_uniform(u)
