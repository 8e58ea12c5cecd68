"""Command-line front end.

    etdse run       --preset desk --out results/
    etdse sweep     --preset desk --set sweep.rates=[0.3] --out sweep/
    etdse calibrate --preset desk --set sweep.rates=[0.5] --out cal/
    etdse check     --preset paper-linear

Exit codes: 0 success, 1 failed check or I/O error, 2 config error,
3 numeric failure, 4 calibration failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .errors import (
    AsymmetricGraph,
    CalibrationFailed,
    CannotConnect,
    ConfigInvalid,
    EstimationError,
    IoFailure,
    NonPositiveInput,
    OddSensorCount,
    RateOutOfRange,
)
from .network import check_collective_observability, is_primitive, is_strongly_connected
from .sim.config import PRESETS, ScenarioConfig, apply_overrides, from_dict, preset_dict
from .sim.engine import resolve_calibration
from .sim.montecarlo import MonteCarloResult, calibrate_tau, run_monte_carlo
from .sim.output import summarize, write_json, write_series_csv, write_table_csv
from .sim.scenario import build_scenario
from .trigger import calibrate

log = logging.getLogger("etdse")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CALIBRATION = 0, 1, 2, 3, 4
A_DET_MIN = 1e-9

COMPARISON_COLUMNS = (
    "realized_rate",
    "strategy",
    "target_rate",
    "tau",
    "delta",
    "time_avg_amse",
    "time_avg_mse",
    "final_amse",
    "payload_bytes",
    "trials",
)


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_manifest_config(args) -> ScenarioConfig:
    d = preset_dict(args.preset) if args.preset else {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"{args.config}: not valid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ConfigInvalid(f"{args.config}: top level must be an object")
        d = _merge(d, doc)
    d = apply_overrides(d, args.set or [])
    if args.seed is not None:
        d["rng_seed"] = args.seed
    return from_dict(d)


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create output directory {out}: {exc}") from exc
    return out


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def _calibration_doc(cal) -> dict:
    return {
        "tau": cal.tau,
        "lambda_lo": cal.lambda_lo,
        "lambda_hi": cal.lambda_hi,
        "alpha_star": cal.alpha_star,
        "beta_star": cal.beta_star,
        "delta_star": cal.delta_star,
        "delta": cal.delta,
    }


def cmd_run(args) -> int:
    cfg = load_manifest_config(args)
    out = _out_dir(args)
    scn = build_scenario(cfg)
    res = run_monte_carlo(scn, jobs=args.jobs)
    write_series_csv(out / "results.csv", res)
    scn.graph.dump(out / "graph.json")
    doc = {
        "config": cfg.to_dict(),
        "calibration": _calibration_doc(resolve_calibration(cfg.strategy)),
        "results": summarize(res),
    }
    write_json(out / "summary.json", _json_safe(doc))
    print(
        f"{cfg.strategy.kind}: trials={res.trials} realized_rate={res.realized_rate:.4f} "
        f"time_avg_amse={res.time_avg_amse:.4f} payload_bytes={res.payload_bytes}"
    )
    print(f"wrote {out / 'results.csv'}, {out / 'summary.json'}, {out / 'graph.json'}")
    return EXIT_OK


def _cell_name(kind: str, rate: float | None) -> str:
    return kind if rate is None else f"{kind}_r{rate:.2f}"


def cmd_sweep(args) -> int:
    cfg = load_manifest_config(args)
    sw = cfg.sweep
    if not sw.strategies:
        raise ConfigInvalid("sweep.strategies: empty strategy list, nothing to run")
    if not sw.rates and any(s != "full_rate" for s in sw.strategies):
        raise ConfigInvalid("sweep.rates: empty rate list")
    out = _out_dir(args)
    scn = build_scenario(cfg)
    scn.graph.dump(out / "graph.json")
    rows, cells = [], {}

    def run_cell(name: str, kind: str, target: float, cell_cfg: ScenarioConfig, extra: dict) -> MonteCarloResult:
        res = run_monte_carlo(build_scenario(cell_cfg, graph=scn.graph), jobs=args.jobs)
        write_series_csv(out / f"{name}.csv", res)
        cal = resolve_calibration(cell_cfg.strategy)
        cells[name] = {"strategy": _calibration_doc(cal), "results": summarize(res), **extra}
        cells[name]["strategy"]["kind"] = kind
        s = summarize(res)
        rows.append(
            {
                "realized_rate": res.realized_rate,
                "strategy": kind,
                "target_rate": float(target),
                "tau": cal.tau,
                "delta": cal.delta,
                "time_avg_amse": s["time_avg_amse"],
                "time_avg_mse": s["time_avg_mse"],
                "final_amse": s["final_amse"],
                "payload_bytes": res.payload_bytes,
                "trials": res.trials,
            }
        )
        print(f"{name}: realized_rate={res.realized_rate:.4f} time_avg_amse={res.time_avg_amse:.4f}")
        return res

    if "full_rate" in sw.strategies:
        run_cell("full_rate", "full_rate", 1.0, cfg.with_strategy(kind="full_rate", tau=None), {})
    for rate in sw.rates:
        matched_delta = cfg.strategy.delta
        if "event_triggered" in sw.strategies:
            if rate >= 1.0:
                log.warning("rate 1.0 with event_triggered: running full_rate instead")
                run_cell(_cell_name("full_rate", rate), "full_rate", rate, cfg.with_strategy(kind="full_rate", tau=None), {})
            else:
                c = calibrate_tau(cfg, rate, sw.tolerance, sw.calibration_trials, args.jobs)
                et_cfg = cfg.with_strategy(
                    kind="event_triggered", tau=c.tau, delta_margin=cfg.strategy.delta_margin
                )
                extra = {"calibration": {"iterations": c.iterations, "pilot_rate": c.realized_rate, "history": c.history}}
                run_cell(_cell_name("event_triggered", rate), "event_triggered", rate, et_cfg, extra)
                if matched_delta is None:
                    matched_delta = resolve_calibration(et_cfg.strategy).delta
        for kind in ("random", "periodic"):
            if kind in sw.strategies:
                st_cfg = cfg.with_strategy(kind=kind, tau=None, rate=rate, delta=matched_delta)
                run_cell(_cell_name(kind, rate), kind, rate, st_cfg, {})

    write_table_csv(out / "comparison.csv", rows, COMPARISON_COLUMNS)
    write_json(out / "sweep.json", _json_safe({"config": cfg.to_dict(), "cells": cells}))
    print(f"wrote {len(rows)} cell CSVs and {out / 'comparison.csv'}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = load_manifest_config(args)
    sw = cfg.sweep
    if not sw.rates:
        raise ConfigInvalid("sweep.rates: empty rate list")
    out = _out_dir(args)
    entries = []
    for rate in sw.rates:
        if rate >= 1.0:
            log.warning("rate 1.0: full_rate needs no threshold, reporting tau = 0")
            entries.append({"target_rate": rate, "tau": 0.0, "realized_rate": 1.0, "iterations": 0, "history": []})
            print(f"target {rate:.2f}: tau=0 (full rate)")
            continue
        c = calibrate_tau(cfg, rate, sw.tolerance, sw.calibration_trials, args.jobs)
        entries.append(
            {
                "target_rate": rate,
                "tau": c.tau,
                "realized_rate": c.realized_rate,
                "iterations": c.iterations,
                "history": c.history,
                "calibration": _calibration_doc(calibrate(c.tau, cfg.strategy.delta_margin)),
            }
        )
        print(f"target {rate:.2f}: tau={c.tau:.6g} realized_rate={c.realized_rate:.4f} pilot_runs={c.iterations}")
    write_json(out / "calibration.json", _json_safe({"config": cfg.to_dict(), "targets": entries}))
    return EXIT_OK


def cmd_check(args) -> int:
    cfg = load_manifest_config(args)
    scn = build_scenario(cfg)
    d = scn.dynamics
    det = float(np.linalg.det(d.A))
    centre = [cfg.area[0] / 2, 0.0, cfg.area[1] / 2, 0.0]
    n = scn.graph.node_count
    checks = {
        "A1_invertible_dynamics": abs(det) > A_DET_MIN,
        "A2_collective_observability": check_collective_observability(d, scn.sensors, centre),
        "A3_strong_connectivity": is_strongly_connected(scn.graph),
        # Wielandt's bound: a primitive n x n pattern is positive by power (n-1)^2 + 1.
        "consensus_primitive": is_primitive(scn.weights, (n - 1) ** 2 + 1),
    }
    for name, ok in checks.items():
        print(f"{name}: {'PASS' if ok else 'FAIL'}")
    print(f"det(A) = {det:.6g}; sensors = {len(scn.sensors)} of {n} nodes")
    doc = {"checks": checks, "det_A": det}
    st = cfg.strategy
    if st.kind == "event_triggered" and st.tau > 0:
        cal = calibrate(st.tau, st.delta_margin)
        doc["calibration"] = _calibration_doc(cal)
        print(
            f"tau = {cal.tau:.6g}: alpha* = {cal.alpha_star:.10g}, "
            f"beta* = {cal.beta_star:.10g}, delta* = {cal.delta_star:.10g}"
        )
    if args.out:
        write_json(_out_dir(args) / "check.json", _json_safe(doc))
    return EXIT_OK if all(checks.values()) else EXIT_FAIL


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "calibrate": cmd_calibrate, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON scenario configuration")
    common.add_argument("--preset", choices=sorted(PRESETS), help="start from a named configuration")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", type=int, help="override rng_seed")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override, dotted keys, repeatable")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes for Monte Carlo trials")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="etdse", description="Event-triggered distributed state estimation experiments")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="Monte Carlo run of one configuration")
    sub.add_parser("sweep", parents=[common], help="strategies x target rates comparison")
    sub.add_parser("calibrate", parents=[common], help="threshold for each target rate")
    sub.add_parser("check", parents=[common], help="verify model and network assumptions")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    if args.command != "check" and not args.out:
        print(f"error: {args.command} needs --out DIR", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except (ConfigInvalid, OddSensorCount, CannotConnect, AsymmetricGraph, NonPositiveInput) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CalibrationFailed, RateOutOfRange) as exc:
        print(f"calibration error: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except IoFailure as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except EstimationError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
