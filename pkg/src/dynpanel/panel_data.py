"""Balanced binary-choice panels: container, validation and CSV I/O.

Outcomes are stored for periods ``0..T`` and regressors for periods ``1..T``;
the model says nothing about period 0 beyond the initial condition, so
period-0 regressors are never kept.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    InvalidSpec,
    MissingPeriod,
    NonBinaryOutcome,
    PanelTooShort,
    ParseError,
    RaggedPanel,
)


@dataclass(frozen=True)
class PanelDataset:
    """Immutable balanced panel.

    Attributes
    ----------
    y : (n, T+1) int8 array, ``y[i, t]`` is the choice of individual i in period t.
    x : (n, T, K) float64 array, ``x[i, t-1]`` is the regressor row of period t.
    ids : identifiers in first-appearance order (kept for CSV round-trips).
    """

    y: np.ndarray
    x: np.ndarray
    ids: tuple = field(default=())

    def __post_init__(self):
        y = np.ascontiguousarray(self.y)
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        if y.ndim != 2 or x.ndim != 3:
            raise RaggedPanel("y must be (n, T+1) and x must be (n, T, K)")
        if y.shape[0] != x.shape[0] or y.shape[1] != x.shape[1] + 1:
            raise RaggedPanel(
                f"shape mismatch: y {y.shape} vs x {x.shape} (need T+1 outcome periods)"
            )
        if x.shape[2] < 1:
            raise RaggedPanel("regressor dimension K must be >= 1")
        if not np.all((y == 0) | (y == 1)):
            raise NonBinaryOutcome("every outcome must be exactly 0 or 1")
        if not np.all(np.isfinite(x)):
            raise ParseError("regressors must be finite")
        y = y.astype(np.int8)
        y.flags.writeable = False
        x.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        ids = tuple(self.ids) if self.ids else tuple(str(i + 1) for i in range(y.shape[0]))
        if len(ids) != y.shape[0]:
            raise RaggedPanel("ids length does not match the number of individuals")
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def t_max(self) -> int:
        return self.y.shape[1] - 1

    @property
    def k(self) -> int:
        return self.x.shape[2]

    def xt(self, t: int) -> np.ndarray:
        """Regressor rows of period ``t`` (1-based, as in the model)."""
        if not 1 <= t <= self.t_max:
            raise IndexError(f"regressor period {t} outside 1..{self.t_max}")
        return self.x[:, t - 1, :]

    def xdiff(self, t: int, s: int) -> np.ndarray:
        """``x_t - x_s`` for every individual, shape (n, K)."""
        return self.xt(t) - self.xt(s)

    def subset(self, idx: Sequence[int] | np.ndarray) -> "PanelDataset":
        idx = np.asarray(idx, dtype=np.intp)
        return PanelDataset(self.y[idx], self.x[idx], tuple(self.ids[i] for i in idx))

    def require_periods(self, t_min: int = 4) -> None:
        if self.t_max < t_min:
            raise PanelTooShort(f"need T >= {t_min} post-initial periods, got T={self.t_max}")


@dataclass(frozen=True)
class ModelParams:
    """Preference parameters with ``beta`` on the unit sphere."""

    beta: np.ndarray
    gamma: float

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64).reshape(-1)
        if abs(np.linalg.norm(beta) - 1.0) > 1e-12:
            raise InvalidSpec(f"beta must have unit Euclidean norm, got {np.linalg.norm(beta)!r}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", float(self.gamma))

    def check_gamma_bounds(self, lo: float, hi: float) -> None:
        if not lo <= self.gamma <= hi:
            raise InvalidSpec(f"gamma={self.gamma} outside parameter interval [{lo}, {hi}]")


def _parse_float(text: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{where}: cannot parse {text!r} as a number") from None
    return value


def load_csv(path: str | Path) -> PanelDataset:
    """Read a long-format ``id,t,y,x1,...,xK`` file into a validated panel."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if len(header) < 4 or header[:3] != ["id", "t", "y"]:
            raise ParseError(f"{path}: header must be id,t,y,x1,...,xK; got {','.join(header)}")
        xcols = header[3:]
        if xcols != [f"x{j + 1}" for j in range(len(xcols))]:
            raise ParseError(f"{path}: regressor columns must be named x1..xK in order")
        k = len(xcols)

        records: dict[str, dict[int, tuple[int, list[float] | None]]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3 + k:
                raise ParseError(f"{path}:{lineno}: expected {3 + k} fields, got {len(row)}")
            pid = row[0].strip()
            t_val = _parse_float(row[1], f"{path}:{lineno} t")
            if t_val != int(t_val) or t_val < 0:
                raise ParseError(f"{path}:{lineno}: period t must be a non-negative integer")
            t = int(t_val)
            y_val = _parse_float(row[2], f"{path}:{lineno} y")
            if y_val not in (0.0, 1.0):
                raise NonBinaryOutcome(f"{path}:{lineno}: id {pid} has y={row[2].strip()} at t={t}")
            cells = [c.strip() for c in row[3:]]
            if all(not c for c in cells):
                xrow = None
            else:
                xrow = [_parse_float(c, f"{path}:{lineno} x") for c in cells]
                if not all(math.isfinite(v) for v in xrow):
                    raise ParseError(f"{path}:{lineno}: non-finite regressor value")
            periods = records.setdefault(pid, {})
            if t in periods:
                raise ParseError(f"{path}:{lineno}: duplicate row for id {pid}, t={t}")
            periods[t] = (int(y_val), xrow)

    if not records:
        raise ParseError(f"{path}: no data rows")

    horizons = {}
    for pid, periods in records.items():
        t_hi = max(periods)
        missing = sorted(set(range(t_hi + 1)) - set(periods))
        if missing:
            raise MissingPeriod(f"id {pid} lacks periods {missing}")
        horizons[pid] = t_hi
    distinct = sorted(set(horizons.values()))
    if len(distinct) > 1:
        raise RaggedPanel(f"inconsistent number of periods across ids: T in {distinct}")
    t_max = distinct[0]
    if t_max < 1:
        raise PanelTooShort("panel needs at least one post-initial period")

    ids = tuple(records)
    y = np.empty((len(ids), t_max + 1), dtype=np.int8)
    x = np.empty((len(ids), t_max, k), dtype=np.float64)
    for i, pid in enumerate(ids):
        periods = records[pid]
        for t in range(t_max + 1):
            yv, xv = periods[t]
            y[i, t] = yv
            if t >= 1:
                if xv is None:
                    raise ParseError(f"id {pid} has blank regressors at t={t}")
                x[i, t - 1] = xv
    return PanelDataset(y, x, ids)


def save_csv(data: PanelDataset, path: str | Path) -> None:
    """Write ``data`` in long format; period-0 regressor cells are left blank."""
    path = Path(path)
    header = ["id", "t", "y"] + [f"x{j + 1}" for j in range(data.k)]
    blank = [""] * data.k
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, pid in enumerate(data.ids):
            w.writerow([pid, 0, int(data.y[i, 0])] + blank)
            for t in range(1, data.t_max + 1):
                w.writerow([pid, t, int(data.y[i, t])] + ["%.17g" % v for v in data.x[i, t - 1]])


def beta_switchers(y: np.ndarray) -> np.ndarray:
    """Mask of individuals with y0 = y2 = y4 and y1 != y3."""
    return (y[:, 0] == y[:, 2]) & (y[:, 2] == y[:, 4]) & (y[:, 1] != y[:, 3])


def gamma_switchers(y: np.ndarray) -> np.ndarray:
    """Mask of individuals with {y1 != y2, y0 != y3} or {y2 != y3, y1 != y4}."""
    first = (y[:, 1] != y[:, 2]) & (y[:, 0] != y[:, 3])
    second = (y[:, 2] != y[:, 3]) & (y[:, 1] != y[:, 4])
    return first | second


def switcher_counts(data: PanelDataset) -> tuple[int, int]:
    """Counts of individuals informative for the beta step and the gamma step.

    Uses the four-period membership rules on periods 0..4.
    """
    data.require_periods(4)
    return int(beta_switchers(data.y).sum()), int(gamma_switchers(data.y).sum())
