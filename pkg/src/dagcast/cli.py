"""Command-line entry point: ``dagcast <subcommand> [flags]``.

Every subcommand writes ``<out>/<name>.csv``, ``<name>.json`` and
``<name>.txt`` and prints the text table.  A JSON file given with
``--config`` overrides any flag it names.  The exit status is 1 when a
check fails, 2 on bad configuration.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import harness, netsim, ordering
from .harness import ConfigError, ExperimentConfig


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file; its keys override flags")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--n", type=_ints, default=[4, 8, 12, 16, 20], help="comma list of n")
    common.add_argument("--f", type=int, default=None, help="fixed f (default floor((n-1)/3))")
    common.add_argument("--seeds", type=int, default=20)
    common.add_argument("--base-seed", type=int, default=0)
    common.add_argument("--rho-lo", type=float, default=0.0)
    common.add_argument("--rho-hi", type=float, default=1.0)
    common.add_argument("--resolution", type=float, default=0.01)
    common.add_argument("--threshold", type=float, default=0.95, help="success threshold")
    common.add_argument("--t-slot", type=float, default=None,
                        help="fixed slot length in ms (default n * airtime)")
    common.add_argument("--airtime", type=float, default=6.25)
    common.add_argument("--r-max", type=int, default=12)

    p = argparse.ArgumentParser(prog="dagcast", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("sweep", parents=[common], help="success rate over a rho grid")
    s.add_argument("--rhos", type=_floats, default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    sub.add_parser("max-loss", parents=[common], help="tolerable loss and latency per n")
    r = sub.add_parser("replay", parents=[common], help="scripted scenario replays")
    r.add_argument("--scenario", choices=("fig2", "fig3", "all"), default="all")
    o = sub.add_parser("order", parents=[common], help="randomised ordering agreement runs")
    o.add_argument("--runs", type=int, default=100)
    o.add_argument("--rho-max", type=float, default=0.31, help="loss is drawn up to half this")
    a = sub.add_parser("anchor-mc", parents=[common], help="anchor commit Monte Carlo")
    a.add_argument("--trials", type=int, default=10_000)
    a.add_argument("--min-frequency", type=float, default=1 / 3 - 0.02)
    return p


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    if args.config is None:
        return args
    data = json.loads(args.config.read_text())
    for key, value in data.items():
        attr = key.replace("-", "_")
        if attr == "out":
            value = Path(value)
        setattr(args, attr, value)
    return args


def _experiment(args) -> ExperimentConfig:
    return ExperimentConfig(
        n_values=list(args.n), f_rule="floor" if args.f is None else str(args.f),
        seeds=args.seeds, base_seed=args.base_seed, success_threshold=args.threshold,
        rho_lo=args.rho_lo, rho_hi=args.rho_hi, resolution=args.resolution,
        t_slot=args.t_slot, airtime=args.airtime, r_max=args.r_max)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _emit(out: Path, name: str, csv_text: str, payload: dict, table: str):
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.csv").write_text(csv_text)
    (out / f"{name}.json").write_text(json.dumps(payload, indent=1, sort_keys=True, default=str) + "\n")
    (out / f"{name}.txt").write_text(table + "\n")
    print(table)


def _check_lines(checks: list[tuple[str, bool]]) -> str:
    return "\n".join(f"[{'PASS' if ok else 'FAIL'}] {name}" for name, ok in checks)


def cmd_sweep(args) -> bool:
    cfg = _experiment(args)
    rows = harness.loss_sweep(cfg, list(args.rhos))
    header = ["n", "rho", "success_rate", "latency_last_ms"]
    body = [[r["n"], f"{r['rho']:.2f}", f"{r['success_rate']:.3f}",
             "" if r["latency_last_ms"] is None else f"{r['latency_last_ms']:.3f}"] for r in rows]
    table = "\n".join("  ".join(str(c).rjust(14) for c in line) for line in [header] + body)
    _emit(args.out, "sweep", _csv(header, body), {"config": cfg.to_dict(), "rows": rows}, table)
    lossless = [r for r in rows if r["rho"] == 0]
    return all(r["success_rate"] == 1.0 for r in lossless)


def cmd_max_loss(args) -> bool:
    cfg = _experiment(args)
    res = harness.table1(cfg)
    rows = sorted(res.rows, key=lambda r: r.n)
    rho = [r.tolerable_loss for r in rows]
    lat = [r.latency_last_ms for r in rows]
    checks = [
        ("tolerable loss non-decreasing in n", all(a <= b for a, b in zip(rho, rho[1:]))),
        ("latency strictly increasing in n", all(a < b for a, b in zip(lat, lat[1:]))),
    ]
    table = res.table() + "\n" + _check_lines(checks)
    payload = json.loads(res.to_json())
    payload["checks"] = dict(checks)
    _emit(args.out, "max_loss", res.to_csv(), payload, table)
    return all(ok for _, ok in checks)


def cmd_replay(args) -> bool:
    todo = ["fig2", "fig3"] if args.scenario == "all" else [args.scenario]
    reports, traces = [], {}
    for name in todo:
        fn, cfg_fn = {"fig2": (harness.replay_fig2, harness.fig2_config),
                      "fig3": (harness.replay_fig3, harness.fig3_config)}[name]
        reports.append(fn(args.base_seed))
        traces[name] = netsim.run(cfg_fn(args.base_seed)).trace_csv()
    body = [[r.scenario, name, int(ok), detail] for r in reports for name, ok, detail in r.checks]
    table = "\n".join(line for r in reports for line in [r.scenario] + r.lines())
    args.out.mkdir(parents=True, exist_ok=True)
    for name, text in traces.items():
        (args.out / f"{name}_trace.csv").write_text(text)
    _emit(args.out, "replay", _csv(["scenario", "check", "passed", "detail"], body),
          {"reports": [{"scenario": r.scenario, "passed": r.passed,
                        "checks": [list(c) for c in r.checks]} for r in reports]}, table)
    return all(r.passed for r in reports)


def cmd_order(args) -> bool:
    rep = harness.ordering_agreement(args.runs, args.base_seed, args.rho_max)
    body = [[r["seed"], r["n"], r["f"], int(r["agreement"]), r["committed"], r["log_sha256"]]
            for r in rep.records]
    first = ordering.run_ordering(ordering.random_ordering_config(args.base_seed, args.rho_max))
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "commit_log.jsonl").write_text(first.logs[first.honest[0]])
    avg = sum(rep.committed) / max(1, len(rep.committed))
    table = (f"runs={rep.runs} divergent={len(rep.divergent)} mean_committed_anchors={avg:.2f}\n"
             + _check_lines([("identical commit logs across honest participants", rep.passed)]))
    _emit(args.out, "order", _csv(["seed", "n", "f", "agreement", "committed", "log_sha256"], body),
          {"runs": rep.runs, "divergent": rep.divergent, "records": rep.records}, table)
    return rep.passed


def cmd_anchor_mc(args) -> bool:
    res = ordering.anchor_monte_carlo(4, 1, args.trials, args.base_seed)
    ok = res.frequency >= args.min_frequency
    table = (f"n={res.n} f={res.f} trials={res.trials} commits={res.commits} "
             f"frequency={res.frequency:.4f}\n"
             + _check_lines([(f"frequency >= {args.min_frequency:.4f}", ok)]))
    _emit(args.out, "anchor_mc", _csv(["n", "f", "trials", "commits", "frequency"],
                                      [[res.n, res.f, res.trials, res.commits, f"{res.frequency:.6f}"]]),
          res.to_dict(), table)
    return ok


COMMANDS = {"sweep": cmd_sweep, "max-loss": cmd_max_loss, "replay": cmd_replay,
            "order": cmd_order, "anchor-mc": cmd_anchor_mc}


def main(argv: list[str] | None = None) -> int:
    args = _merge_config(_parser().parse_args(argv))
    try:
        ok = COMMANDS[args.command](args)
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
