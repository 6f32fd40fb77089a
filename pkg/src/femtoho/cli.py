"""``femtoho`` command line.

Exit status: 0 success, 1 a validation failed (DES disagrees with the closed
form, a flow trace diverged or broke an ordering rule, an optimization target
was infeasible), 2 bad configuration.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence, TextIO

from .config import COMMANDS, ConfigError, RunConfig, parse_config, validate, with_overrides
from .queuing import blocking_report, optimize_k, sweep_guard_threshold, utilization_tradeoff
from .signaling import (
    FlowKind,
    build_flow_script,
    execute_flow,
    format_trace,
    precedence_check,
    validate_trace,
)
from .sim import compare_des, run_blocking_des, sweep_threshold_time

SWEEP_K_HEADER = "K,P_B,P_D,utilization,carried_load"
SWEEP_T_HEADER = "T,entries,handovers,unnecessary,fraction,ci95"
DES_HEADER = "metric,closed_form,empirical,std_error,z,pass"


def num(x: float | None) -> str:
    """CSV cell for a number; undefined values become ``NA``."""
    if x is None:
        return "NA"
    return format(x, ".12g")


def _blocking_rows(rows) -> list[str]:
    return [
        ",".join((str(k), num(r.new_call_blocking), num(r.handover_blocking), num(r.utilization), num(r.carried_load)))
        for k, r in rows
    ]


def _cmd_blocking(cfg: RunConfig, out: TextIO, err: TextIO) -> int:
    params = cfg.queuing.params()
    rep = blocking_report(params)
    if cfg.format == "csv":
        out.write("\n".join([SWEEP_K_HEADER] + _blocking_rows([(params.guard_threshold, rep)])) + "\n")
    else:
        out.write(
            f"N={params.num_channels} K={params.guard_threshold} offered={params.offered_load:.6g} Erl\n"
            f"new-call blocking P_B   {rep.new_call_blocking:.6g}\n"
            f"handover blocking P_D   {rep.handover_blocking:.6g}\n"
            f"utilization             {rep.utilization:.6g}\n"
            f"carried load (Erl)      {rep.carried_load:.6g}\n"
        )
    return 0


def _cmd_sweep_k(cfg: RunConfig, out: TextIO, err: TextIO) -> int:
    table = sweep_guard_threshold(cfg.queuing.params())
    if cfg.format == "csv":
        out.write("\n".join([SWEEP_K_HEADER] + _blocking_rows(table)) + "\n")
    else:
        out.write(f"{'K':>4} {'P_B':>10} {'P_D':>10} {'U':>8} {'carried':>8}\n")
        for k, r in table:
            out.write(
                f"{k:>4} {r.new_call_blocking:>10.6f} {r.handover_blocking:>10.6f} "
                f"{r.utilization:>8.4f} {r.carried_load:>8.4f}\n"
            )
    return 0


def _cmd_optimize_k(cfg: RunConfig, out: TextIO, err: TextIO) -> int:
    q = cfg.queuing
    table = sweep_guard_threshold(q.params())
    result = optimize_k(table, q.criterion)
    if cfg.format == "csv":
        out.write("K,feasible,criterion\n")
        out.write(f"{result.k if result.k is not None else 'NA'},{str(result.feasible).lower()},{q.criterion.kind}\n")
        for line in result.trace:
            err.write(line + "\n")
    else:
        for line in result.trace:
            out.write(line + "\n")
        if result.feasible:
            out.write(f"chosen K = {result.k}\n")
            d = utilization_tradeoff(table, q.num_channels, result.k)
            out.write(
                f"vs K={q.num_channels}: P_D reduced {100 * d['handover_blocking_reduction']:.2f}%, "
                f"utilization down {100 * d['utilization_loss_abs']:.2f} pp "
                f"({100 * d['utilization_loss_rel']:.2f}% relative)\n"
            )
        else:
            out.write("infeasible: no K satisfies the criterion\n")
    return 0 if result.feasible else 1


def _sweep_t_rows(rows) -> list[str]:
    return [
        ",".join(
            (num(t), str(s.entries), str(s.handovers), str(s.unnecessary), num(s.unnecessary_fraction), num(s.ci95_halfwidth))
        )
        for t, s in rows
    ]


def _cmd_sweep_t(cfg: RunConfig, out: TextIO, err: TextIO, t_values: Sequence[float]) -> int:
    rows = sweep_threshold_time(cfg.scenario, t_values)
    if cfg.format == "csv":
        out.write("\n".join([SWEEP_T_HEADER] + _sweep_t_rows(rows)) + "\n")
        return 0
    for t, s in rows:
        frac = "NA" if s.unnecessary_fraction is None else f"{s.unnecessary_fraction:.4f} +/- {s.ci95_halfwidth:.4f}"
        out.write(
            f"T={t:g} s: entries {s.entries}, handovers {s.handovers} "
            f"(round trip {s.round_trip_handovers}), rejected {s.rejected}\n"
            f"  necessary {s.necessary}, unnecessary return {s.unnecessary_return}, "
            f"unnecessary termination {s.unnecessary_termination}\n"
            f"  unnecessary fraction {frac}\n"
        )
    return 0


def _cmd_des_validate(cfg: RunConfig, out: TextIO, err: TextIO) -> int:
    params = cfg.queuing.params()
    result = run_blocking_des(params, cfg.queuing.horizon, seed=cfg.seed)
    rows = compare_des(params, result)
    ok = all(r.passed for r in rows)
    if cfg.format == "csv":
        out.write(DES_HEADER + "\n")
        for r in rows:
            out.write(f"{r.metric},{num(r.closed_form)},{num(r.empirical)},{num(r.std_error)},{num(r.z)},{str(r.passed).lower()}\n")
    else:
        out.write(
            f"arrivals: {result.new_arrivals} new ({result.blocked_new} blocked), "
            f"{result.handover_arrivals} handover ({result.blocked_handover} blocked)\n"
        )
        for r in rows:
            out.write(
                f"{r.metric:<12} closed {num(r.closed_form):<14} sim {num(r.empirical):<14} "
                f"se {num(r.std_error):<12} {'ok' if r.passed else 'FAIL'}\n"
            )
        out.write("verdict: " + ("pass" if ok else "FAIL") + " at 3 sigma\n")
    return 0 if ok else 1


def _cmd_flow(cfg: RunConfig, out: TextIO, err: TextIO) -> int:
    script = build_flow_script(cfg.flow_kind)
    try:
        trace = execute_flow(script, cfg.topology, drop_step=cfg.drop_step)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out.write(format_trace(trace))
    check = validate_trace(trace, script)
    violations = precedence_check(trace)
    err.write(f"{script.flow_kind.value}: {len(trace.entries)}/{len(script)} steps, {trace.outcome}\n")
    err.write("validate_trace: " + ("ok" if check.ok else f"first divergence at step {check.first_divergence}") + "\n")
    for v in violations:
        err.write(f"{v.rule}: {v.detail}\n")
    if not violations:
        err.write("precedence: no violations\n")
    return 0 if check.ok and not violations and trace.completed else 1


def run(cfg: RunConfig, out: TextIO | None = None, err: TextIO | None = None) -> int:
    """Execute a validated config, writing to ``cfg.output`` or ``out``."""
    err = err or sys.stderr
    validate(cfg)
    handle = None
    if cfg.output is not None:
        handle = open(cfg.output, "w", encoding="utf-8", newline="\n")
        out = handle
    out = out or sys.stdout
    try:
        if cfg.command == "blocking":
            return _cmd_blocking(cfg, out, err)
        if cfg.command == "sweep-k":
            return _cmd_sweep_k(cfg, out, err)
        if cfg.command == "optimize-k":
            return _cmd_optimize_k(cfg, out, err)
        if cfg.command == "cac-sim":
            return _cmd_sweep_t(cfg, out, err, [cfg.scenario.thresholds.min_dwell])
        if cfg.command == "sweep-t":
            return _cmd_sweep_t(cfg, out, err, cfg.t_values)
        if cfg.command == "des-validate":
            return _cmd_des_validate(cfg, out, err)
        return _cmd_flow(cfg, out, err)
    finally:
        if handle is not None:
            handle.close()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="femtoho",
        description="Guard-channel analysis, handover CAC simulation and handover call flows.",
    )
    p.add_argument("command", nargs="?", choices=COMMANDS, help="defaults to [run] command in the config")
    p.add_argument("target", nargs="?", help="flow kind for the flow command, e.g. SMALL_MACRO_TO_FEMTO")
    p.add_argument("--config", type=Path, help="scenario file")
    p.add_argument("--seed", type=int, help="master seed for randomized commands")
    p.add_argument("--out", help="write results here instead of stdout")
    p.add_argument("--format", choices=("csv", "summary"))
    p.add_argument("--trials", type=int, help="entry events per FAP for cac-sim/sweep-t")
    p.add_argument("--drop-step", type=int, help="flow: lose this message on the bus")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else ""
    except OSError as exc:
        print(f"femtoho: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text, check_command=False)
        flow_kind = None
        if args.target is not None:
            if args.command not in (None, "flow") and cfg.command != "flow":
                raise ConfigError(f"unexpected argument {args.target!r}")
            if args.target not in FlowKind.__members__:
                raise ConfigError(f"unknown flow kind {args.target!r}")
            flow_kind = args.target
        cfg = with_overrides(
            cfg,
            command=args.command,
            seed=args.seed,
            output=args.out,
            format=args.format,
            trials=args.trials,
            flow_kind=flow_kind,
            drop_step=args.drop_step,
        )
        if cfg.command is None:
            raise ConfigError("no command given (argument or [run] command)")
        validate(cfg)
        return run(cfg)
    except ConfigError as exc:
        print(f"femtoho: config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
