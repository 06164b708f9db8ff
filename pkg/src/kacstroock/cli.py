"""Command-line surface: verification workflows with CSV/JSON output.

Subcommands map one-to-one onto the library layers: kernel-check drives
the quadrature oracle against closed-form covariances, simulate /
independence / convergence / decompose drive the Monte Carlo ensemble.
Every run prints its master seed, and the JSON summary a run writes can
be fed back via --config to reproduce it bit for bit.

Exit codes: 0 pass, 1 invalid configuration, 2 tolerance failure,
3 runtime guard (horizon, budgets, degenerate numerics).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import re
import sys
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ensemble, oracle
from .errors import (
    BudgetExceededError,
    DegenerateSampleError,
    InvalidArgumentError,
    KacStroockError,
    OracleConvergenceError,
    OutOfHorizonError,
    SingularPointError,
)
from .kernels import (
    Fbm,
    FbmVolterra,
    LeiNualart,
    LeiNualartX,
    SubFbm,
    Tabulated,
    cov,
    cov_matrix,
    decomposition_constant,
)
from .transform import ApproxParams, truncation_radius_for

DEFAULT_SEED = 20260816
SCHEMA_VERSION = 1

_KERNELS = ("fbm", "ln", "tabulated")
_MODELS = ("fbm", "subfbm", "ln-x")


class _CliConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for tolerance
    # failures here, so route parse errors through the config-error path
    def error(self, message):
        raise _CliConfigError(message)


def _error_slug(exc: Exception) -> str:
    name = type(exc).__name__
    if name.endswith("Error"):
        name = name[: -len("Error")]
    return re.sub(r"(?<!^)(?=[A-Z])", "-", name).lower()


def _exit_code_for(exc: Exception) -> int:
    if isinstance(exc, (OutOfHorizonError, BudgetExceededError,
                        DegenerateSampleError, OracleConvergenceError,
                        SingularPointError)):
        return 3
    if isinstance(exc, (InvalidArgumentError, KacStroockError)):
        return 1
    raise exc


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _parse_floats(text: str):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip() != "")
    except ValueError as exc:
        raise _CliConfigError(f"expected a comma-separated list of numbers, got {text!r}") from exc


# ---------------------------------------------------------------------------
# configuration resolution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    command: str
    kernel: Optional[str]
    model: Optional[str]
    H: Optional[float]
    theta: float
    epsilon: tuple
    grid: tuple
    replicas: int
    seed: int
    seed_was_auto: bool
    threads: int
    out: Optional[str]
    format: str
    tol: float
    quad_tol: Optional[float]
    tail_tol: Optional[float]
    truncation_radius: Optional[float]
    table_grid: Optional[tuple]
    table_values: Optional[tuple]


def _load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise _CliConfigError(f"cannot read config {path!r}: {exc}") from exc
    if not isinstance(doc, dict):
        raise _CliConfigError("config file must hold a JSON object")
    # a previously written summary round-trips: reuse its config echo
    if "config" in doc and isinstance(doc["config"], dict) and "schema_version" in doc:
        doc = doc["config"]
    return doc


def _resolve(args, command: str) -> RunConfig:
    conf = _load_config_file(args.config) if args.config else {}

    def pick(flag_value, key, default=None):
        if flag_value is not None:
            return flag_value
        return conf.get(key, default)

    seed_raw = pick(args.seed, "seed", DEFAULT_SEED)
    seed_was_auto = False
    if isinstance(seed_raw, str):
        if seed_raw == "auto":
            seed_raw = int.from_bytes(os.urandom(8), "little")
            seed_was_auto = True
        else:
            try:
                seed_raw = int(seed_raw)
            except ValueError as exc:
                raise _CliConfigError(f"--seed must be an integer or 'auto', got {seed_raw!r}") from exc

    eps_raw = pick(getattr(args, "epsilon", None), "epsilon")
    if eps_raw is None:
        epsilon = ()
    elif isinstance(eps_raw, (int, float)):
        epsilon = (float(eps_raw),)
    else:
        epsilon = tuple(float(e) for e in eps_raw)

    grid_raw = pick(getattr(args, "grid", None), "grid", (0.25, 0.5, 0.75, 1.0))
    grid = _parse_floats(grid_raw) if isinstance(grid_raw, str) else tuple(float(g) for g in grid_raw)

    def floats_or_none(flag, key):
        raw = pick(flag, key)
        if raw is None:
            return None
        return _parse_floats(raw) if isinstance(raw, str) else tuple(float(v) for v in raw)

    fmt = pick(getattr(args, "format", None), "format", "csv")
    if fmt not in ("csv", "json"):
        raise _CliConfigError(f"--format must be csv or json, got {fmt!r}")
    kernel = pick(getattr(args, "kernel", None), "kernel")
    if kernel is not None and kernel not in _KERNELS:
        raise _CliConfigError(f"--kernel must be one of {_KERNELS}, got {kernel!r}")
    model = pick(getattr(args, "model", None), "model")
    if model is not None and model not in _MODELS:
        raise _CliConfigError(f"--model must be one of {_MODELS}, got {model!r}")

    H = pick(getattr(args, "H", None), "H")
    return RunConfig(
        command=command,
        kernel=kernel,
        model=model,
        H=None if H is None else float(H),
        theta=float(pick(getattr(args, "theta", None), "theta", math.pi / 2)),
        epsilon=epsilon,
        grid=grid,
        replicas=int(pick(getattr(args, "replicas", None), "replicas", 1000)),
        seed=int(seed_raw),
        seed_was_auto=seed_was_auto,
        threads=int(pick(getattr(args, "threads", None), "threads", 1)),
        out=pick(getattr(args, "out", None), "out"),
        format=fmt,
        tol=float(pick(getattr(args, "tol", None), "tol", 1e-4)),
        quad_tol=(lambda v: None if v is None else float(v))(
            pick(getattr(args, "quad_tol", None), "quad_tol")),
        tail_tol=(lambda v: None if v is None else float(v))(
            pick(getattr(args, "tail_tol", None), "tail_tol")),
        truncation_radius=(lambda v: None if v is None else float(v))(
            pick(getattr(args, "truncation_radius", None), "truncation_radius")),
        table_grid=floats_or_none(getattr(args, "table_grid", None), "table_grid"),
        table_values=floats_or_none(getattr(args, "table_values", None), "table_values"),
    )


def _config_echo(rc: RunConfig) -> dict:
    echo = {
        "command": rc.command,
        "kernel": rc.kernel,
        "model": rc.model,
        "H": rc.H,
        "theta": rc.theta,
        "epsilon": list(rc.epsilon),
        "grid": list(rc.grid),
        "replicas": rc.replicas,
        "seed": rc.seed,
        "threads": rc.threads,
        "format": rc.format,
        "tol": rc.tol,
        "quad_tol": rc.quad_tol,
        "tail_tol": rc.tail_tol,
        "truncation_radius": rc.truncation_radius,
        "table_grid": None if rc.table_grid is None else list(rc.table_grid),
        "table_values": None if rc.table_values is None else list(rc.table_values),
    }
    return {k: v for k, v in echo.items() if v is not None}


def _build_kernel(rc: RunConfig):
    if rc.kernel is None:
        raise InvalidArgumentError("this command needs --kernel (fbm, ln or tabulated)")
    if rc.kernel == "tabulated":
        if rc.table_grid is None or rc.table_values is None:
            raise InvalidArgumentError(
                "--kernel tabulated needs --table-grid and --table-values"
            )
        return Tabulated(grid=np.asarray(rc.table_grid), values=np.asarray(rc.table_values))
    if rc.H is None:
        raise InvalidArgumentError(f"--kernel {rc.kernel} needs --H")
    return FbmVolterra(H=rc.H) if rc.kernel == "fbm" else LeiNualart(H=rc.H)


def _build_params(rc: RunConfig, kernel) -> ApproxParams:
    if len(rc.epsilon) != 1:
        raise InvalidArgumentError(
            f"this command needs exactly one --epsilon, got {len(rc.epsilon)}"
        )
    trunc = rc.truncation_radius
    if trunc is None and rc.tail_tol is not None:
        T = max(rc.grid) if rc.grid else None
        trunc = truncation_radius_for(kernel, rc.theta, rc.tail_tol, T=T)
    extra = {} if rc.quad_tol is None else {"quad_tol": rc.quad_tol}
    return ApproxParams(
        epsilon=rc.epsilon[0],
        theta=rc.theta,
        truncation_radius=trunc,
        **extra,
    )


# ---------------------------------------------------------------------------
# output writers
# ---------------------------------------------------------------------------

def _write_table(rc: RunConfig, name: str, header, rows):
    if rc.out is None:
        return None
    os.makedirs(rc.out, exist_ok=True)
    if rc.format == "json":
        path = os.path.join(rc.out, f"{name}.json")
        payload = [dict(zip(header, row)) for row in rows]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(_jsonable(payload), fh, indent=2, allow_nan=False)
            fh.write("\n")
        return path
    path = os.path.join(rc.out, f"{name}.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [_fmt(v) if isinstance(v, (int, float, np.floating)) and not isinstance(v, bool)
                 else ("" if v is None else str(v)) for v in row]
            )
    return path


def _write_summary(rc: RunConfig, results: dict, wall: float):
    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": rc.command,
        "master_seed": rc.seed,
        "seed_was_auto": rc.seed_was_auto,
        "wall_time_s": wall,
        "config": _config_echo(rc),
        "results": _jsonable(results),
    }
    if rc.out is None:
        return None
    os.makedirs(rc.out, exist_ok=True)
    path = os.path.join(rc.out, f"{rc.command}_summary.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, allow_nan=False)
        fh.write("\n")
    return path


def _stats_rows(stats: ensemble.EnsembleStats):
    rows = []
    g = stats.grid
    for ch in stats.channels:
        for i, t in enumerate(g):
            rows.append((t, None, ch, "mean", stats.mean[ch][i], stats.se_mean[ch][i]))
        for i, t in enumerate(g):
            rows.append((t, None, ch, "m2", stats.m2[ch][i], stats.se_m2[ch][i]))
        for i, t in enumerate(g):
            rows.append((t, None, ch, "m4", stats.m4[ch][i], stats.se_m4[ch][i]))
        for i, ti in enumerate(g):
            for j, tj in enumerate(g):
                rows.append((ti, tj, ch, "cov", stats.cov[ch][i, j], stats.se_cov[ch][i, j]))
    if stats.cross_cov is not None:
        for i, ti in enumerate(g):
            for j, tj in enumerate(g):
                rows.append((ti, tj, "cross", "cross_cov",
                             stats.cross_cov[i, j], stats.se_cross[i, j]))
    return rows


def _stats_results(stats: ensemble.EnsembleStats) -> dict:
    per = {}
    for field in ("mean", "se_mean", "cov", "se_cov", "m2", "se_m2", "m4",
                  "se_m4", "skewness", "excess_kurtosis", "jb"):
        per[field] = {ch: getattr(stats, field)[ch] for ch in stats.channels}
    return {
        "grid": stats.grid,
        "channels": list(stats.channels),
        "replicas": stats.replicas,
        "epsilon": stats.epsilon,
        "theta": stats.theta,
        "cross_cov": stats.cross_cov,
        "se_cross": stats.se_cross,
        **per,
    }


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cov_model_for(model: str, H: float):
    if model == "fbm":
        return Fbm(H=H), FbmVolterra(H=H)
    if model == "ln-x":
        return LeiNualartX(H=H), LeiNualart(H=H)
    return SubFbm(H=H), None


def cmd_kernel_check(rc: RunConfig) -> int:
    if rc.model is None:
        raise InvalidArgumentError("kernel-check needs --model (fbm, subfbm or ln-x)")
    if rc.H is None:
        raise InvalidArgumentError("kernel-check needs --H")
    t0 = time.perf_counter()
    model, kernel = _cov_model_for(rc.model, rc.H)
    grid = np.asarray(rc.grid, dtype=np.float64)
    target = cov_matrix(model, grid)
    rows = []
    worst = 0.0
    # most of the check budget goes to the oracle; the float-resolution
    # floor at near-singular kernel sections forbids certifying much
    # tighter than this anyway
    oracle_tol = rc.quad_tol if rc.quad_tol is not None else 0.75 * rc.tol
    for i, t in enumerate(grid):
        for j, s in enumerate(grid):
            if j > i:
                continue
            if rc.model == "subfbm":
                c1 = decomposition_constant(rc.H, "sub_from_fbm")
                val = c1 * c1 * oracle.kernel_inner_product(
                    LeiNualart(H=rc.H), float(t), float(s), tol=oracle_tol
                ) + oracle.kernel_inner_product(
                    FbmVolterra(H=rc.H), float(t), float(s), tol=oracle_tol
                )
            else:
                val = oracle.kernel_inner_product(kernel, float(t), float(s), tol=oracle_tol)
            err = abs(val - target[i, j])
            worst = max(worst, err)
            rows.append((float(t), float(s), val, float(target[i, j]), err))
    ok = worst <= rc.tol
    wall = time.perf_counter() - t0
    _write_table(rc, "kernel_check", ("t_i", "t_j", "oracle", "model", "abs_err"), rows)
    _write_summary(rc, {"pairs": len(rows), "max_abs_err": worst, "tol": rc.tol,
                        "pass": ok}, wall)
    print(f"kernel-check[{rc.model}, H={rc.H}]: {len(rows)} pairs, "
          f"max |err| = {worst:.3e} (tol {rc.tol:.3e}) "
          f"master_seed={rc.seed} -> {'pass' if ok else 'FAIL'}")
    return 0 if ok else 2


def _run_single(rc: RunConfig) -> ensemble.EnsembleStats:
    kernel = _build_kernel(rc)
    params = _build_params(rc, kernel)
    config = ensemble.EnsembleConfig(
        kernel=kernel,
        grid=rc.grid,
        params=params,
        replicas=rc.replicas,
        master_seed=rc.seed,
        mode="single_channel",
        threads=rc.threads,
    )
    return ensemble.run(config)


def cmd_simulate(rc: RunConfig) -> int:
    t0 = time.perf_counter()
    stats = _run_single(rc)
    wall = time.perf_counter() - t0
    print(f"simulate: kernel={rc.kernel} replicas={stats.replicas} "
          f"epsilon={stats.epsilon} master_seed={rc.seed}")
    _write_table(rc, "simulate_stats",
                 ("t_i", "t_j", "channel", "statistic", "estimate", "se"),
                 _stats_rows(stats))
    _write_summary(rc, _stats_results(stats), wall)
    return 0


def cmd_independence(rc: RunConfig) -> int:
    t0 = time.perf_counter()
    stats = _run_single(rc)
    wall = time.perf_counter() - t0
    g = stats.grid
    rows = []
    worst_ratio = 0.0
    for i, ti in enumerate(g):
        for j, tj in enumerate(g):
            c = stats.cross_cov[i, j]
            se = stats.se_cross[i, j]
            ratio = abs(c) / se if se > 0 else (0.0 if c == 0 else math.inf)
            worst_ratio = max(worst_ratio, ratio)
            rows.append((ti, tj, c, se, ratio))
    ok = worst_ratio <= 4.0
    print(f"independence: max |cross_cov|/se = {worst_ratio:.3f} "
          f"(threshold 4) master_seed={rc.seed} -> {'pass' if ok else 'FAIL'}")
    _write_table(rc, "independence", ("t_i", "t_j", "cross_cov", "se_cross", "ratio"), rows)
    _write_summary(rc, {"max_ratio": worst_ratio, "threshold": 4.0, "pass": ok,
                        "stats": _stats_results(stats)}, wall)
    return 0 if ok else 2


def cmd_convergence(rc: RunConfig) -> int:
    kernel = _build_kernel(rc)
    if len(rc.epsilon) < 1:
        raise InvalidArgumentError("convergence needs at least one --epsilon")
    model_name = rc.model
    if model_name is None:
        model_name = {"fbm": "fbm", "ln": "ln-x"}.get(rc.kernel)
        if model_name is None:
            raise InvalidArgumentError("convergence with a tabulated kernel needs --model")
    target, _ = _cov_model_for(model_name, rc.H)
    extra = {} if rc.quad_tol is None else {"quad_tol": rc.quad_tol}
    params = ApproxParams(
        epsilon=rc.epsilon[0],
        theta=rc.theta,
        truncation_radius=rc.truncation_radius,
        **extra,
    )
    config = ensemble.EnsembleConfig(
        kernel=kernel,
        grid=rc.grid,
        params=params,
        replicas=rc.replicas,
        master_seed=rc.seed,
        mode="single_channel",
        threads=rc.threads,
    )
    t0 = time.perf_counter()
    report = ensemble.convergence_study(config, rc.epsilon, target)
    wall = time.perf_counter() - t0
    rows = [(r.epsilon, r.max_cov_err, r.se_at_max, r.max_cross, r.se_at_max_cross)
            for r in report.rows]
    print(f"convergence: {len(rows)} epsilon(s), trend_ok={report.trend_ok} "
          f"master_seed={rc.seed}")
    for r in report.rows:
        print(f"  epsilon={r.epsilon:g}: max_cov_err={r.max_cov_err:.5f} "
              f"(se {r.se_at_max:.5f}) max|cross|={r.max_cross:.5f}")
    _write_table(rc, "convergence",
                 ("epsilon", "max_cov_err", "se_at_max", "max_cross", "se_at_max_cross"),
                 rows)
    _write_summary(rc, {
        "trend_ok": report.trend_ok,
        "rows": [{"epsilon": r.epsilon, "max_cov_err": r.max_cov_err,
                  "se_at_max": r.se_at_max, "max_cross": r.max_cross,
                  "se_at_max_cross": r.se_at_max_cross} for r in report.rows],
    }, wall)
    return 0 if report.trend_ok else 2


def cmd_decompose(rc: RunConfig) -> int:
    if rc.H is None:
        raise InvalidArgumentError("decompose needs --H in (0, 1)")
    x_kernel = LeiNualart(H=rc.H)
    b_kernel = FbmVolterra(H=rc.H)
    params = _build_params(rc, x_kernel)
    config = ensemble.EnsembleConfig(
        kernel=x_kernel,
        grid=rc.grid,
        params=params,
        replicas=rc.replicas,
        master_seed=rc.seed,
        mode="decomposition",
        second_kernel=b_kernel,
        threads=rc.threads,
    )
    t0 = time.perf_counter()
    stats = ensemble.run(config)
    wall = time.perf_counter() - t0
    grid = stats.grid
    target = cov_matrix(SubFbm(H=rc.H), grid)
    emp = stats.cov["combined"]
    se = stats.se_cov["combined"]
    gap = np.abs(emp - target)
    idx = np.unravel_index(np.argmax(gap), gap.shape)
    worst = float(gap[idx])
    # acceptance-style budget: 5% of the target variance at the horizon
    # plus three standard errors at the worst pair
    budget = 0.05 * float(cov(SubFbm(H=rc.H), grid[-1], grid[-1])) + 3.0 * float(se[idx])
    ok = worst <= budget
    rows = [(grid[i], grid[j], emp[i, j], target[i, j], gap[i, j], se[i, j])
            for i in range(grid.size) for j in range(grid.size)]
    print(f"decompose[H={rc.H}]: max |emp_cov - cov_sub| = {worst:.5f} "
          f"(budget {budget:.5f}) master_seed={rc.seed} -> {'pass' if ok else 'FAIL'}")
    _write_table(rc, "decompose",
                 ("t_i", "t_j", "emp_cov", "target_cov", "abs_err", "se"), rows)
    _write_summary(rc, {"max_err": worst, "budget": budget, "pass": ok,
                        "stats": _stats_results(stats)}, wall)
    return 0 if ok else 2


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, *, eps: bool = True):
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--H", type=float, default=None)
    p.add_argument("--theta", type=float, default=None)
    if eps:
        p.add_argument("--epsilon", action="append", type=float, default=None,
                       help="repeatable for sweeps")
    p.add_argument("--grid", default=None, help='comma list, e.g. "0.25,0.5,0.75,1"')
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--seed", default=None, help="64-bit integer or 'auto'")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None, help="directory for CSV/JSON output")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--quad-tol", dest="quad_tol", type=float, default=None)
    p.add_argument("--tail-tol", dest="tail_tol", type=float, default=None)
    p.add_argument("--truncation-radius", dest="truncation_radius", type=float,
                   default=None)


def _add_kernel_flags(p: argparse.ArgumentParser):
    p.add_argument("--kernel", choices=_KERNELS, default=None)
    p.add_argument("--table-grid", dest="table_grid", default=None,
                   help="comma list of abscissae for --kernel tabulated")
    p.add_argument("--table-values", dest="table_values", default=None,
                   help="comma list of kernel values for --kernel tabulated")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kacstroock",
                     description="Kac-Stroock approximation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kernel-check",
                       help="quadrature oracle vs closed-form covariance")
    p.add_argument("--model", choices=_MODELS, default=None)
    _add_common(p, eps=False)

    p = sub.add_parser("simulate", help="ensemble statistics for one kernel")
    _add_kernel_flags(p)
    _add_common(p)

    p = sub.add_parser("independence", help="cross-channel covariance null check")
    _add_kernel_flags(p)
    _add_common(p)

    p = sub.add_parser("convergence", help="epsilon sweep against a target covariance")
    _add_kernel_flags(p)
    p.add_argument("--model", choices=_MODELS, default=None,
                   help="target covariance (defaults to the kernel's own)")
    _add_common(p)

    p = sub.add_parser("decompose", help="sub-fBm decomposition at process level")
    _add_common(p)

    return parser


_DISPATCH = {
    "kernel-check": cmd_kernel_check,
    "simulate": cmd_simulate,
    "independence": cmd_independence,
    "convergence": cmd_convergence,
    "decompose": cmd_decompose,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        rc = _resolve(args, args.command)
        return _DISPATCH[args.command](rc)
    except _CliConfigError as exc:
        print(f"error[invalid-config]: {exc}", file=sys.stderr)
        return 1
    except KacStroockError as exc:
        print(f"error[{_error_slug(exc)}]: {exc}", file=sys.stderr)
        return _exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
