"""Experiment driver: config-based runs with CSV/JSON artifacts.

Commands
--------
run        two-scale solve; writes error_history.csv, coarse_final.csv,
           fine_final.csv (the patched fine field) and diagnostics.json
reference  whole-domain fine fast-sweeping solve; writes reference.csv
model      strip-problem error curves and weight/bounds dumps
speedup    print the flop-model table and iteration threshold

All numeric matrices are written as CSV with one row per grid line and
17-significant-digit decimals, so identical configs and seeds reproduce
identical bytes.  Error-history rows carry a wall-clock column which is
inherently nondeterministic; the field CSVs are the determinism contract.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError
from .grid import GridSpec
from .metrics import FlopModel, speedup_threshold
from .slowness import make_catalog_field
from .sweep import INF
from .theta import ThetaParams, model_run, oracle_bounds
from .twoscale import DomainBoundary, PointSources, reference_solution, run

_SOLVER_DEFAULTS = {"max_iters": 60, "conv_tol": 1e-10,
                    "sweep_max_rounds": 50, "update_rounds": 1}
_THETA_DEFAULTS = {"mode": "estimated", "x0": 0.9, "gamma": 0.75,
                   "delta": 0.01, "omega": [4.0, 2.0, 1.0],
                   "bootstrap": 0.01, "denom_guard": None}
_OUTPUT_DEFAULTS = {"dir": "out", "snapshot_every": 0}


# --------------------------------------------------------------------------
# Config handling
# --------------------------------------------------------------------------

def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc


def resolve_config(cfg: dict) -> dict:
    """Fill defaults and validate; the result round-trips a rerun."""
    out = dict(cfg)
    problem = dict(cfg.get("problem") or {})
    if problem:
        for key in ("d", "N", "M"):
            if key not in problem:
                raise ConfigurationError(f"problem.{key}: required")
        slow = dict(problem.get("slowness") or {})
        if "kind" not in slow:
            raise ConfigurationError("problem.slowness.kind: required")
        slow.setdefault("params", {})
        problem["slowness"] = slow
        gamma = dict(problem.get("gamma") or {})
        if gamma.get("kind") not in ("points", "boundary"):
            raise ConfigurationError(
                "problem.gamma.kind: must be 'points' or 'boundary'")
        if gamma["kind"] == "points":
            pts = gamma.get("points")
            if not pts:
                raise ConfigurationError("problem.gamma.points: required")
            gamma.setdefault("values", [0.0] * len(pts))
        else:
            gamma.setdefault("value", 0.0)
        problem["gamma"] = gamma
        out["problem"] = problem
    solver = dict(_SOLVER_DEFAULTS)
    solver.update(cfg.get("solver") or {})
    out["solver"] = solver
    theta = dict(_THETA_DEFAULTS)
    theta.update(cfg.get("theta") or {})
    if theta["mode"] not in ("estimated", "fixed", "oracle"):
        raise ConfigurationError(
            "theta.mode: must be 'estimated', 'fixed' or 'oracle'")
    if theta["mode"] == "fixed" and "value" not in theta:
        raise ConfigurationError("theta.value: required for fixed mode")
    if theta["mode"] == "oracle":
        theta.setdefault("frac", 0.5)
    out["theta"] = theta
    outputs = dict(_OUTPUT_DEFAULTS)
    outputs.update(cfg.get("outputs") or {})
    out["outputs"] = outputs
    out.setdefault("seed", 0)
    out.setdefault("trials", 1)
    out.setdefault("reference", True)
    out.setdefault("memory_budget_mb", 4096)
    out.setdefault("workers", None)
    if "model" in cfg:
        model = dict(cfg["model"])
        for key in ("N", "M"):
            if key not in model:
                raise ConfigurationError(f"model.{key}: required")
        model.setdefault("max_k", 15)
        out["model"] = model
    return out


def build_problem(cfg: dict, seed: int):
    problem = cfg.get("problem")
    if not problem:
        raise ConfigurationError("problem: section required for this command")
    spec = GridSpec(d=int(problem["d"]), N=int(problem["N"]),
                    M=int(problem["M"]))
    _check_memory(spec, cfg["memory_budget_mb"])
    slow_cfg = problem["slowness"]
    params = dict(slow_cfg["params"])
    if slow_cfg["kind"] == "squares" and "line_tol" not in params:
        params["line_tol"] = spec.h / 2.0
    slowness = make_catalog_field(slow_cfg["kind"], params, seed=seed)
    gcfg = problem["gamma"]
    if gcfg["kind"] == "points":
        pts = tuple(tuple(p) if isinstance(p, (list, tuple)) else (p,)
                    for p in gcfg["points"])
        gamma = PointSources(points=pts, values=tuple(gcfg["values"]))
    else:
        gamma = DomainBoundary(value=float(gcfg["value"]))
    return spec, slowness, gamma


def _check_memory(spec: GridSpec, budget_mb: float) -> None:
    g1 = spec.fine_cells + 1
    if spec.d == 1:
        need = g1 * 8 * 12 + spec.N * (spec.M + 1) * 10
    else:
        need = g1 * g1 * 8 * 12 + spec.N ** 2 * (spec.M + 1) ** 2 * 10
    if need > budget_mb * 2 ** 20:
        raise ConfigurationError(
            f"problem needs about {need / 2**20:.0f} MiB, over the "
            f"memory_budget_mb of {budget_mb}")


def theta_policy(cfg: dict):
    tcfg = cfg["theta"]
    if tcfg["mode"] == "fixed":
        return float(tcfg["value"])
    if tcfg["mode"] == "oracle":
        return ("oracle", float(tcfg["frac"]))
    return ThetaParams(x0=float(tcfg["x0"]), gamma=float(tcfg["gamma"]),
                       delta=float(tcfg["delta"]),
                       omega=tuple(float(w) for w in tcfg["omega"]),
                       bootstrap=float(tcfg["bootstrap"]),
                       denom_guard=tcfg["denom_guard"])


# --------------------------------------------------------------------------
# Artifact writers
# --------------------------------------------------------------------------

def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if x >= INF:
        return "inf"
    if x <= -INF:
        return "-inf"
    return f"{x:.17g}"


def write_field_csv(path: Path, arr: np.ndarray, spacing: float) -> None:
    arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# shape={arr.shape[0]}x{arr.shape[1]} "
                 f"spacing={_fmt(spacing)}\n")
        for row in arr:
            fh.write(",".join(_fmt(v) for v in row))
            fh.write("\n")


def write_history_csv(path: Path, history, converged: bool) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("k,l1_rel,l1_abs,linf,wall_ms,converged\n")
        last = history[-1].k if history else -1
        for rec in history:
            flag = 1 if (converged and rec.k == last) else 0
            fh.write(f"{rec.k},{_fmt(rec.l1_rel)},{_fmt(rec.l1_abs)},"
                     f"{_fmt(rec.linf)},{rec.wall_ms:.3f},{flag}\n")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_run(cfg: dict) -> int:
    if cfg["theta"]["mode"] == "oracle":
        raise ConfigurationError(
            "theta.mode 'oracle' needs the known fine solution and is "
            "only available for the model command")
    outdir = Path(cfg["outputs"]["dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    trials = int(cfg["trials"])
    workers = cfg["workers"]
    snap_every = int(cfg["outputs"]["snapshot_every"])
    mean_rows: list[list[float]] = []
    diagnostics = {"command": "run", "config": cfg, "trials": [],
                   "package_version": __version__}
    for trial in range(trials):
        seed = int(cfg["seed"]) + trial
        spec, slowness, gamma = build_problem(cfg, seed)
        reference = (reference_solution(spec, slowness, gamma,
                                        cfg["solver"]["sweep_max_rounds"])
                     if cfg["reference"] else None)
        suffix = f"_trial{trial}" if trials > 1 else ""

        def snapshot(k, patched, _suffix=suffix):
            if snap_every and k % snap_every == 0:
                write_field_csv(outdir / f"patched{_suffix}_k{k:04d}.csv",
                                patched, spec.h)

        result = run(spec, slowness, gamma, theta=theta_policy(cfg),
                     max_iters=cfg["solver"]["max_iters"],
                     conv_tol=cfg["solver"]["conv_tol"],
                     workers=workers,
                     sweep_max_rounds=cfg["solver"]["sweep_max_rounds"],
                     update_rounds=cfg["solver"]["update_rounds"],
                     reference=reference,
                     snapshot_cb=snapshot if snap_every else None)
        write_history_csv(outdir / f"error_history{suffix}.csv",
                          result.history, result.converged)
        if spec.d == 1:
            coarse = result.coarse.U
        else:
            coarse = result.coarse.U[::spec.M, ::spec.M]
        write_field_csv(outdir / f"coarse_final{suffix}.csv", coarse, spec.H)
        write_field_csv(outdir / f"fine_final{suffix}.csv", result.patched,
                        spec.h)
        diagnostics["trials"].append({
            "trial": trial,
            "seed": seed,
            "converged": result.converged,
            "iterations": result.iterations,
            "final_l1_rel": result.history[-1].l1_rel,
            "final_linf": result.history[-1].linf,
            "max_theta_bar": [r.max_theta_bar for r in result.history],
            "max_theta_used": [r.max_theta_used for r in result.history],
        })
        rows = [[r.l1_rel, r.l1_abs, r.linf] for r in result.history]
        mean_rows.append(rows)
    if trials > 1:
        depth = max(len(rows) for rows in mean_rows)
        with open(outdir / "error_history_mean.csv", "w",
                  encoding="utf-8", newline="\n") as fh:
            fh.write("k,l1_rel,l1_abs,linf\n")
            for k in range(depth):
                # trials that stopped earlier carry their last row forward
                cols = np.array([rows[min(k, len(rows) - 1)]
                                 for rows in mean_rows])
                fh.write(f"{k}," + ",".join(_fmt(v)
                                            for v in cols.mean(axis=0)) + "\n")
    diagnostics["status"] = ("converged" if all(
        t["converged"] for t in diagnostics["trials"]) else "not_converged")
    _write_json(outdir / "diagnostics.json", diagnostics)
    return 0


def cmd_reference(cfg: dict) -> int:
    outdir = Path(cfg["outputs"]["dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    seed = int(cfg["seed"])
    spec, slowness, gamma = build_problem(cfg, seed)
    t0 = time.perf_counter()
    ref = reference_solution(spec, slowness, gamma,
                             cfg["solver"]["sweep_max_rounds"])
    write_field_csv(outdir / "reference.csv", ref, spec.h)
    _write_json(outdir / "diagnostics.json", {
        "command": "reference", "config": cfg, "seed": seed,
        "wall_ms": (time.perf_counter() - t0) * 1e3,
        "package_version": __version__})
    return 0


def cmd_model(cfg: dict) -> int:
    if "model" not in cfg:
        raise ConfigurationError("model: section required for this command")
    outdir = Path(cfg["outputs"]["dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    mcfg = cfg["model"]
    N, M, max_k = int(mcfg["N"]), int(mcfg["M"]), int(mcfg["max_k"])
    result = model_run(N, M, theta_policy(cfg), max_k, record_solutions=True)
    mp = result.problem
    with open(outdir / "model_history.csv", "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("k,linf,l1_abs,min_Mbar,max_theta_used\n")
        for rec in result.records:
            fh.write(f"{rec.k},{_fmt(rec.linf)},{_fmt(rec.l1_abs)},"
                     f"{_fmt(rec.min_Mbar)},{_fmt(rec.max_theta_used)}\n")
    # admissible-window dump for the first weighted update
    if len(result.U_history) >= 2:
        u0 = mp.solve_subdomains(result.U_history[0])
        mt, mb = oracle_bounds(mp, result.U_history[1], result.U_history[0],
                               u0)
        write_field_csv(outdir / "bounds_k1_mtilde.csv", mt, mp.H)
        write_field_csv(outdir / "bounds_k1_Mbar.csv", mb, mp.H)
    _write_json(outdir / "diagnostics.json", {
        "command": "model", "config": cfg,
        "fine_solution_errors": mp.fine_solution_errors(),
        "package_version": __version__})
    return 0


def cmd_speedup(cfg: dict, args) -> int:
    model = FlopModel(N=args.N, M=args.M, d=args.d, C=args.C, k=args.k)
    est = speedup_threshold(model)
    print(f"flop model: N={model.N} M={model.M} d={model.d} C={model.C}")
    print(f"  serial whole-grid solve:      {est.serial_flops:16.0f} flops")
    print(f"  coarse phase per iteration:   {est.coarse_flops_per_iter:16.0f} flops")
    print(f"  fine phase per iteration:     {est.fine_flops_per_iter:16.0f} flops")
    print(f"  parallel cost per iteration:  {est.parallel_flops_per_iter:16.0f} flops")
    print(f"  speedup iteration threshold:  {est.threshold:16.2f}")
    return 0


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="twoscale-eikonal",
        description="Two-scale domain-decomposition Eikonal solver")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "reference", "model"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--workers", type=int, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None)
        sp.add_argument("--snapshot-every", type=int, default=None)
    sp = sub.add_parser("speedup")
    sp.add_argument("--config", default=None)
    sp.add_argument("--N", type=int, default=20)
    sp.add_argument("--M", type=int, default=100)
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--C", type=int, default=10)
    sp.add_argument("--k", type=int, default=1)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "speedup":
            cfg = resolve_config(load_config(args.config)) if args.config else {}
            return cmd_speedup(cfg, args)
        cfg = resolve_config(load_config(args.config))
        if args.workers is not None:
            cfg["workers"] = args.workers
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.out is not None:
            cfg["outputs"]["dir"] = args.out
        if args.snapshot_every is not None:
            cfg["outputs"]["snapshot_every"] = args.snapshot_every
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "reference":
            return cmd_reference(cfg)
        return cmd_model(cfg)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
