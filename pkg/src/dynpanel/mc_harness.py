"""Replicated Monte Carlo experiments and summary tables.

Replication ``r`` (1-based) draws its dataset and its bootstrap streams from
``SeedSequence([plan.seed, r])``, so a summary does not depend on how
replications are spread over worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dgp import DgpSpec, simulate, true_params
from .errors import DynPanelError, InvalidSpec, TooManyFailures
from .estimator import EstimationConfig, estimate
from .inference import METHODS, BootstrapConfig, run_bootstrap

log = logging.getLogger(__name__)

MAX_FAILURE_SHARE = 0.05
STATS = ("MEAN", "BIAS", "MAD", "RMSE")
C_SWEEP_TABLES = (0.8, 0.9, 1.0, 1.1, 1.2)
# c only enters the numerical (epsilon) and modified (omega) tuning rules
C_METHODS = ("numerical", "modified")


@dataclass(frozen=True)
class McPlan:
    design: DgpSpec
    n: int
    replications: int
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    bootstrap: BootstrapConfig | None = None  # template for B, alpha, m, ...
    methods: tuple = ()
    c_sweep: tuple = (1.0,)
    seed: int = 0
    workers: int = 1
    mad_center: str = "truth"  # "truth" or "median"

    def validate(self) -> None:
        self.design.validate()
        if self.replications < 1:
            raise InvalidSpec("replications must be >= 1")
        if self.n < 3:
            raise InvalidSpec("n must be >= 3")
        if self.workers < 1:
            raise InvalidSpec("workers must be >= 1")
        for m in self.methods:
            if m not in METHODS:
                raise InvalidSpec(f"unknown bootstrap method {m!r}")
        if self.methods and not self.c_sweep:
            raise InvalidSpec("c_sweep must not be empty")
        if any(c <= 0 for c in self.c_sweep):
            raise InvalidSpec("c values must be positive")
        if self.mad_center not in ("truth", "median"):
            raise InvalidSpec("mad_center must be 'truth' or 'median'")

    def cells(self) -> list[tuple[str, float | None]]:
        out = []
        for m in self.methods:
            out += [(m, float(c)) for c in self.c_sweep] if m in C_METHODS else [(m, None)]
        return out


@dataclass
class ParamStats:
    name: str
    truth: float
    mean: float
    bias: float
    mad: float
    rmse: float

    def stat(self, key: str) -> float:
        return getattr(self, key.lower())


@dataclass
class CellStats:
    method: str
    c: float | None
    param: str
    coverage: float
    length: float
    completed: int
    failures: int


@dataclass
class McSummary:
    design: str
    n: int
    replications: int
    completed: int
    failures: int
    params: list[ParamStats]
    inference: list[CellStats]
    estimates: np.ndarray  # (completed, n_free) free coordinates per replication
    seconds: float = 0.0

    def param(self, name: str) -> ParamStats:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    def cell(self, method: str, c: float | None, param: str) -> CellStats:
        for s in self.inference:
            if s.method == method and s.c == c and s.param == param:
                return s
        raise KeyError((method, c, param))


def free_names(k: int) -> list[str]:
    """Reported coordinates: beta_2..beta_K and gamma (beta_1 is pinned by the norm)."""
    return [f"beta{j + 1}" for j in range(1, k)] + ["gamma"]


def replication_seeds(seed: int, r: int) -> tuple[int, int]:
    state = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, r]).generate_state(2, np.uint64)
    return int(state[0]), int(state[1])


def _replicate(plan: McPlan, r: int) -> dict:
    sim_seed, boot_seed = replication_seeds(plan.seed, r)
    out: dict = {"r": r, "theta": None, "error": None, "cells": {}}
    try:
        data, _ = simulate(plan.design, plan.n, sim_seed)
        est = estimate(data, plan.estimation)
    except DynPanelError as exc:
        out["error"] = f"{type(exc).__name__}: {exc}"
        return out
    out["theta"] = np.append(est.params.beta[1:], est.params.gamma)
    base = plan.bootstrap or BootstrapConfig()
    for method, c in plan.cells():
        cfg = replace(base, method=method, c=c if c is not None else base.c,
                      seed=boot_seed, workers=1)
        try:
            res = run_bootstrap(data, est, cfg, plan.estimation)
        except DynPanelError as exc:
            out["cells"][(method, c)] = f"{type(exc).__name__}: {exc}"
            continue
        lo = np.append(res.beta_lower[1:], res.gamma_lower)
        hi = np.append(res.beta_upper[1:], res.gamma_upper)
        out["cells"][(method, c)] = (lo, hi)
    return out


def _param_stats(names, truth, theta, mad_center) -> list[ParamStats]:
    stats = []
    for j, name in enumerate(names):
        col = theta[:, j]
        dev = col - truth[j]
        center = truth[j] if mad_center == "truth" else np.median(col)
        mean = float(col.mean())
        stats.append(ParamStats(
            name=name,
            truth=float(truth[j]),
            mean=mean,
            bias=mean - float(truth[j]),
            mad=float(np.median(np.abs(col - center))),
            rmse=float(np.sqrt(np.mean(dev * dev))),
        ))
    return stats


def run_monte_carlo(plan: McPlan) -> McSummary:
    """Simulate, estimate and (optionally) bootstrap ``plan.replications`` times."""
    plan.validate()
    t0 = time.perf_counter()
    reps = range(1, plan.replications + 1)
    if plan.workers > 1 and plan.replications > 1:
        chunk = max(1, plan.replications // (4 * plan.workers))
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            results = list(pool.map(_replicate, [plan] * plan.replications, reps, chunksize=chunk))
    else:
        results = [_replicate(plan, r) for r in reps]

    truth_p = true_params(plan.design)
    truth = np.append(truth_p.beta_normalized[1:], truth_p.gamma_normalized)
    names = free_names(plan.design.k)
    limit = MAX_FAILURE_SHARE * plan.replications

    done = [res for res in results if res["error"] is None]
    failures = len(results) - len(done)
    for res in results:
        if res["error"] is not None:
            log.warning("replication %d excluded: %s", res["r"], res["error"])
    if failures > limit:
        raise TooManyFailures(
            f"TooManyFailures: {failures} of {plan.replications} replications failed "
            f"(limit {MAX_FAILURE_SHARE:.0%})"
        )
    theta = np.array([res["theta"] for res in done]).reshape(len(done), len(names))

    inference = []
    for cell in plan.cells():
        ok = [res["cells"][cell] for res in done if not isinstance(res["cells"][cell], str)]
        cell_fail = len(done) - len(ok)
        for res in done:
            if isinstance(res["cells"][cell], str):
                log.warning("replication %d, %s c=%s excluded: %s", res["r"], cell[0], cell[1], res["cells"][cell])
        if cell_fail > limit:
            raise TooManyFailures(
                f"TooManyFailures: bootstrap {cell[0]} (c={cell[1]}) failed in {cell_fail} of "
                f"{plan.replications} replications (limit {MAX_FAILURE_SHARE:.0%})"
            )
        lo = np.array([a for a, _ in ok]).reshape(len(ok), len(names))
        hi = np.array([b for _, b in ok]).reshape(len(ok), len(names))
        for j, name in enumerate(names):
            hit = (lo[:, j] <= truth[j]) & (truth[j] <= hi[:, j])
            inference.append(CellStats(
                method=cell[0], c=cell[1], param=name,
                coverage=float(hit.mean()) if ok else float("nan"),
                length=float((hi[:, j] - lo[:, j]).mean()) if ok else float("nan"),
                completed=len(ok), failures=cell_fail,
            ))

    return McSummary(
        design=plan.design.design_id.value,
        n=plan.n,
        replications=plan.replications,
        completed=len(done),
        failures=failures,
        params=_param_stats(names, truth, theta, plan.mad_center),
        inference=inference,
        estimates=theta,
        seconds=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def table_rows(summaries) -> list[dict]:
    """Flat long-format records shared by the csv and json renders."""
    rows = []
    for s in summaries:
        meta = {"design": s.design, "n": s.n, "replications": s.replications,
                "completed": s.completed, "failures": s.failures}
        for p in s.params:
            for key in STATS:
                rows.append({**meta, "param": p.name, "method": "", "c": None,
                             "stat": key, "value": p.stat(key)})
        for cs in s.inference:
            for key, val in (("COVERAGE", cs.coverage), ("LENGTH", cs.length)):
                rows.append({**meta, "param": cs.param, "method": cs.method, "c": cs.c,
                             "stat": key, "value": val})
    return rows


_CSV_FIELDS = ("design", "n", "replications", "completed", "failures",
               "param", "method", "c", "stat", "value")


def _text(summaries) -> str:
    names = list(dict.fromkeys(p.name for s in summaries for p in s.params))
    ns = list(dict.fromkeys(s.n for s in summaries))
    by_n = {s.n: s for s in summaries}
    cols = [(p, n) for p in names for n in ns]
    label_w = 24
    col_w = 16
    head = " " * label_w + "".join(f"{p} n={n}".rjust(col_w) for p, n in cols)
    designs = ", ".join(dict.fromkeys(s.design for s in summaries))
    reps = ", ".join(f"n={s.n}: {s.completed}/{s.replications}" for s in summaries)
    lines = [f"{designs}  replications completed ({reps})", head]

    def fmt(v):
        return f"{v:.3f}".rjust(col_w) if v is not None and np.isfinite(v) else "-".rjust(col_w)

    for key in STATS:
        vals = []
        for p, n in cols:
            s = by_n[n]
            vals.append(next((ps.stat(key) for ps in s.params if ps.name == p), None))
        lines.append(key.ljust(label_w) + "".join(fmt(v) for v in vals))

    cells = list(dict.fromkeys((cs.method, cs.c) for s in summaries for cs in s.inference))
    if cells:
        lines.append("")
        for method, c in cells:
            tag = method if c is None else f"{method} c={c:g}"
            for key in ("COVERAGE", "LENGTH"):
                vals = []
                for p, n in cols:
                    hit = [cs for cs in by_n[n].inference
                           if cs.method == method and cs.c == c and cs.param == p]
                    vals.append(None if not hit else (hit[0].coverage if key == "COVERAGE" else hit[0].length))
                lines.append(f"{tag} {key}".ljust(label_w) + "".join(fmt(v) for v in vals))
    return "\n".join(lines) + "\n"


def emit_table(summaries, fmt: str = "text") -> str:
    """Render one summary or a list of summaries (e.g. one per sample size)."""
    if isinstance(summaries, McSummary):
        summaries = [summaries]
    summaries = list(summaries)
    if fmt == "text":
        return _text(summaries)
    rows = table_rows(summaries)
    if fmt == "json":
        return json.dumps({"rows": rows}, indent=1) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=_CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({**row, "c": "" if row["c"] is None else row["c"], "value": repr(row["value"])})
        return buf.getvalue()
    raise InvalidSpec(f"unknown table format {fmt!r}; expected text, csv or json")


def parse_csv_table(text: str) -> list[dict]:
    """Inverse of the csv render (numbers back to floats/ints)."""
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        out.append({
            **row,
            "n": int(row["n"]),
            "replications": int(row["replications"]),
            "completed": int(row["completed"]),
            "failures": int(row["failures"]),
            "c": None if row["c"] == "" else float(row["c"]),
            "value": float(row["value"]),
        })
    return out
