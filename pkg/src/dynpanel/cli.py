"""Command-line entry point: ``dynpanel <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 invalid data or configuration,
3 numerical failure of the estimator (no switchers, degenerate resamples, ...).

Every subcommand accepts ``--config FILE`` with ``key = value`` lines whose
keys are option names (``gamma-lo = -2`` or ``gamma_lo = -2``); options given
on the command line take precedence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .dgp import design, simulate
from .errors import DataError, DynPanelError, InvalidSpec, NumericalError
from .estimator import VARIANTS, EstimationConfig, estimate
from .identification import check_identifying_inequality, check_population_maximizers
from .inference import METHODS, BootstrapConfig, run_bootstrap
from .mc_harness import McPlan, emit_table, run_monte_carlo
from .panel_data import load_csv, save_csv, switcher_counts


class UsageError(Exception):
    def __init__(self, message: str, usage: str):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, self.format_usage())


def default_workers() -> int:
    env = os.environ.get("DYNPANEL_WORKERS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise InvalidSpec(f"DYNPANEL_WORKERS must be a positive integer, got {env!r}") from None
        if value < 1:
            raise InvalidSpec(f"DYNPANEL_WORKERS must be a positive integer, got {env!r}")
        return value
    return os.cpu_count() or 1


def _csv_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _csv_ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--config", help="key = value file; command-line options win")
    p.add_argument("--out-json", help="also write the full result as JSON")
    p.add_argument("--workers", type=_positive_int, default=None,
                   help="worker bound (default: $DYNPANEL_WORKERS or the core count)")
    p.add_argument("-v", "--verbose", action="store_true")


def _estimation_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--variant", choices=VARIANTS, default="adjacent")
    p.add_argument("--gamma-lo", type=float, default=-3.0)
    p.add_argument("--gamma-hi", type=float, default=3.0)
    p.add_argument("--h", type=float, default=None, help="fixed bandwidth")
    p.add_argument("--bandwidth-rule", choices=("paper",), default=None,
                   help="n^(-1/4)/log n (the default when --h is absent)")
    p.add_argument("--grid-points", type=int, default=720, help="sphere grid size per level (K >= 3)")
    p.add_argument("--grid-levels", type=int, default=3)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dynpanel", description="Two-step maximum score estimation for dynamic binary panels.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", help="draw a panel from a benchmark design")
    p.add_argument("--design", default="1", choices=("1", "2", "3"))
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--t-max", type=int, default=4)
    p.add_argument("--out", required=True, help="output CSV path")
    _common(p)

    p = sub.add_parser("estimate", help="point estimates of (beta, gamma)")
    p.add_argument("--data", required=True)
    _estimation_opts(p)
    _common(p)

    p = sub.add_parser("bootstrap", help="bootstrap confidence intervals")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=METHODS, default="numerical")
    p.add_argument("--B", dest="b_draws", type=_positive_int, default=199)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--m", type=_positive_int, default=None, help="m-out-of-n resample size")
    p.add_argument("--epsilon", type=float, default=None, help="override the epsilon rule")
    p.add_argument("--mn-bandwidth", choices=("resample", "original"), default="resample")
    p.add_argument("--dump-draws", action="store_true", help="include every draw in the JSON output")
    _estimation_opts(p)
    _common(p)

    p = sub.add_parser("montecarlo", help="replicated simulation study")
    p.add_argument("--design", default="1", choices=("1", "2", "3"))
    p.add_argument("--n", type=_csv_ints, default=[5000], help="sample size(s), comma-separated")
    p.add_argument("--reps", type=_positive_int, default=200)
    p.add_argument("--bootstrap", default="", help="comma-separated methods, e.g. numerical,modified")
    p.add_argument("--c-sweep", type=_csv_floats, default=[1.0])
    p.add_argument("--B", dest="b_draws", type=_positive_int, default=199)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--mad-center", choices=("truth", "median"), default="truth")
    p.add_argument("--out", help="table output path")
    p.add_argument("--format", choices=("text", "csv", "json"), default=None,
                   help="table format (default: from the --out suffix, else text)")
    _estimation_opts(p)
    _common(p)

    p = sub.add_parser("identify-check", help="large-sample check of the identifying inequality")
    p.add_argument("--design", default="1", choices=("1", "2", "3"))
    p.add_argument("--n", type=_positive_int, default=500000)
    p.add_argument("--bins", type=_positive_int, default=20)
    p.add_argument("--min-bin", type=int, default=500)
    p.add_argument("--maximizers", action="store_true",
                   help="also locate the grid maxima of both objectives")
    p.add_argument("--beta-grid", type=_positive_int, default=360)
    p.add_argument("--h", type=float, default=None)
    _common(p)
    return parser


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------


def read_config(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidSpec(f"cannot read config file {path}: {exc}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidSpec(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _apply_config(sub: argparse.ArgumentParser, values: dict[str, str]) -> None:
    actions = {a.dest: a for a in sub._actions}
    aliases = {"b": "b_draws"}
    defaults = {}
    for key, value in values.items():
        dest = aliases.get(key.lower(), key) if key not in actions else key
        if dest in ("config", "help") or dest not in actions:
            raise InvalidSpec(f"config key {key!r} is not an option of this command")
        action = actions[dest]
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() not in _TRUE | _FALSE:
                raise InvalidSpec(f"config key {key!r} needs a boolean, got {value!r}")
            defaults[dest] = value.lower() in _TRUE
        else:
            defaults[dest] = value  # string defaults go through the option's type
    sub.set_defaults(**defaults)


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(sub, read_config(args.config))
        args = parser.parse_args(argv)
    if getattr(args, "h", None) is not None and getattr(args, "bandwidth_rule", None) == "paper":
        raise UsageError("--h cannot be combined with --bandwidth-rule paper",
                         parser.format_usage())
    if args.workers is None:
        args.workers = default_workers()
    return args


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _ecfg(args) -> EstimationConfig:
    return EstimationConfig(
        h=args.h,
        gamma_bounds=(args.gamma_lo, args.gamma_hi),
        grid_points=args.grid_points,
        grid_levels=args.grid_levels,
        variant=args.variant,
        seed=args.seed,
    )


def _fmt_vec(v) -> str:
    return "(" + ", ".join(f"{x:.6f}" for x in v) + ")"


def cmd_simulate(args) -> tuple[str, dict]:
    spec = design(args.design, t_max=args.t_max)
    data, truth = simulate(spec, args.n, args.seed, args.workers)
    try:
        save_csv(data, args.out)
    except OSError as exc:
        raise InvalidSpec(f"cannot write {args.out}: {exc}") from None
    result = {
        "design": spec.design_id.value, "n": data.n, "t_max": data.t_max, "k": data.k,
        "seed": args.seed, "out": args.out,
        "beta_true": truth.beta_normalized.tolist(), "gamma_true": truth.gamma_normalized,
    }
    text = f"wrote {data.n} individuals x {data.t_max + 1} periods to {args.out}\n"
    if data.t_max >= 4:
        nb, ng = switcher_counts(data)
        result["switchers"] = {"beta": nb, "gamma": ng}
        text += f"switchers: beta {nb} ({nb / data.n:.1%}), gamma {ng} ({ng / data.n:.1%})\n"
    return text, result


def cmd_estimate(args) -> tuple[str, dict]:
    data = load_csv(args.data)
    est = estimate(data, _ecfg(args))
    result = est.to_dict()
    result["n"] = data.n
    lines = [
        f"n = {data.n}, T = {data.t_max}, K = {data.k}, h = {est.h_used:.6g}",
        f"beta_hat  = {_fmt_vec(est.params.beta)}",
        f"gamma_hat = {est.params.gamma:.6f}",
        f"Q1n = {est.q1_value:.6g}, Q2n = {est.q2_value:.6g}",
        f"effective observations: beta {est.beta_effective}, gamma {est.gamma_effective}",
    ]
    beta_diag = est.diagnostics.get("beta", est.diagnostics)
    if isinstance(beta_diag, dict) and beta_diag.get("degenerate"):
        lines.append("flag: " + beta_diag["degenerate"])
    return "\n".join(lines) + "\n", result


def cmd_bootstrap(args) -> tuple[str, dict]:
    data = load_csv(args.data)
    ecfg = _ecfg(args)
    est = estimate(data, ecfg)
    bcfg = BootstrapConfig(method=args.method, b_draws=args.b_draws, c=args.c, alpha=args.alpha,
                           seed=args.seed, m=args.m, epsilon=args.epsilon,
                           mn_bandwidth=args.mn_bandwidth, workers=args.workers)
    res = run_bootstrap(data, est, bcfg, ecfg)
    level = 100 * (1 - args.alpha)
    lines = [f"{args.method} bootstrap, B = {args.b_draws}, n = {data.n}, {level:g}% intervals"]
    for j in range(data.k):
        lines.append(f"beta{j + 1}: {res.beta_hat[j]: .6f}  [{res.beta_lower[j]: .6f}, {res.beta_upper[j]: .6f}]")
    lines.append(f"gamma: {res.gamma_hat: .6f}  [{res.gamma_lower: .6f}, {res.gamma_upper: .6f}]")
    if res.n_missing:
        lines.append(f"missing draws: {res.n_missing}")
    for flag in res.flags:
        lines.append(f"flag: {flag}")
    out = res.to_dict(draws=args.dump_draws)
    out["estimate"] = est.to_dict()
    return "\n".join(lines) + "\n", out


def cmd_montecarlo(args) -> tuple[str, dict]:
    methods = tuple(m.strip() for m in args.bootstrap.split(",") if m.strip() and m.strip() != "none")
    for m in methods:
        if m not in METHODS:
            raise InvalidSpec(f"unknown bootstrap method {m!r}; choose from {', '.join(METHODS)}")
    spec = design(args.design)
    ecfg = _ecfg(args)
    bcfg = BootstrapConfig(b_draws=args.b_draws, alpha=args.alpha) if methods else None
    summaries = []
    for n in args.n:
        plan = McPlan(design=spec, n=n, replications=args.reps, estimation=ecfg, bootstrap=bcfg,
                      methods=methods, c_sweep=tuple(args.c_sweep), seed=args.seed,
                      workers=args.workers, mad_center=args.mad_center)
        summaries.append(run_monte_carlo(plan))
    fmt = args.format
    if fmt is None:
        suffix = Path(args.out).suffix.lower().lstrip(".") if args.out else ""
        fmt = suffix if suffix in ("csv", "json") else "text"
    if args.out:
        try:
            Path(args.out).write_text(emit_table(summaries, fmt), encoding="utf-8")
        except OSError as exc:
            raise InvalidSpec(f"cannot write {args.out}: {exc}") from None
    result = json.loads(emit_table(summaries, "json"))
    result["seconds"] = [s.seconds for s in summaries]
    return emit_table(summaries, "text"), result


def cmd_identify(args) -> tuple[str, dict]:
    spec = design(args.design)
    rep = check_identifying_inequality(spec, args.n, args.bins, args.min_bin, args.seed, args.workers)
    text = rep.render()
    result = {"inequality": rep.to_dict()}
    if args.maximizers:
        mx = check_population_maximizers(spec, args.n, args.beta_grid, None, args.seed, args.h, args.workers)
        text += (f"beta grid argmax {_fmt_vec(mx.beta_argmax)}, {mx.beta_distance:.4f} rad from truth\n"
                 f"gamma grid argmax {mx.gamma_argmax:.4f}, {mx.gamma_distance:.4f} from truth (h = {mx.h:.4g})\n")
        result["maximizers"] = mx.to_dict()
    return text, result


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "bootstrap": cmd_bootstrap,
    "montecarlo": cmd_montecarlo,
    "identify-check": cmd_identify,
}


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _error_text(exc: Exception) -> str:
    name = type(exc).__name__
    msg = str(exc)
    return msg if msg.startswith(name) else f"{name}: {msg}"


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(exc.usage)
        sys.stderr.write(f"dynpanel: error: {exc}\n")
        return 1
    except DataError as exc:
        sys.stderr.write(f"dynpanel: error: {_error_text(exc)}\n")
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text, result = COMMANDS[args.command](args)
        if args.out_json:
            try:
                Path(args.out_json).write_text(
                    json.dumps(result, indent=1, default=_json_default) + "\n", encoding="utf-8")
            except OSError as exc:
                raise InvalidSpec(f"cannot write {args.out_json}: {exc}") from None
    except (DataError, ValueError) as exc:
        sys.stderr.write(f"dynpanel: error: {_error_text(exc)}\n")
        return 2
    except NumericalError as exc:
        sys.stderr.write(f"dynpanel: error: {_error_text(exc)}\n")
        return 3
    except DynPanelError as exc:
        sys.stderr.write(f"dynpanel: error: {_error_text(exc)}\n")
        return 3
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
