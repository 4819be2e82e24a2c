"""Command-line front end: ``hetnetsim simulate|sweep|oracle-check|dump-topology``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import oracle, simkit
from .assoc import POLICIES
from .config import ConfigError, parse_config, parse_override

log = logging.getLogger("hetnetsim")


def _densities(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("densities must be a nonempty list of non-negative integers")
    return vals


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON config file (defaults apply to missing keys)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted override, e.g. topology.users_per_sector=10 (repeatable)")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--small-per-sector", type=int, help="small cells per macro sector")
    p.add_argument("--out-dir", type=Path, help="output directory")


def _sim_flags(p: argparse.ArgumentParser):
    p.add_argument("--policy", action="append", choices=POLICIES,
                   help="association policy (repeatable; default: all)")
    p.add_argument("--drops", type=_positive, help="Monte Carlo drops")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hetnetsim", description="Two-tier uplink HetNet association simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run Monte Carlo drops and write KPI reports")
    _common(p)
    _sim_flags(p)

    p = sub.add_parser("sweep", help="repeat the simulation over small-cell densities")
    _common(p)
    _sim_flags(p)
    p.add_argument("--densities", type=_densities, default=[1, 4], help="comma-separated, e.g. 1,4")

    p = sub.add_parser("oracle-check", help="compare heuristics with the exhaustive optimum")
    p.add_argument("--instances", type=_positive, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path)

    p = sub.add_parser("dump-topology", help="write the topology of one drop as JSON")
    _common(p)
    return ap


def _load(args) -> "simkit.SimConfig":
    overrides = dict(parse_override(o) for o in args.overrides)
    if args.seed is not None:
        overrides["simulation.seed"] = args.seed
    if args.small_per_sector is not None:
        overrides["topology.small_per_sector"] = args.small_per_sector
    if getattr(args, "drops", None) is not None:
        overrides["simulation.drops"] = args.drops
    if getattr(args, "policy", None):
        overrides["simulation.policies"] = list(dict.fromkeys(args.policy))
    if args.out_dir is not None:
        overrides["output.out_dir"] = str(args.out_dir)
    return parse_config(args.config, overrides)


def _summary(report: simkit.KpiReport, out=None):
    out = out or sys.stdout
    for name, k in report.policies.items():
        small = "n/a" if k.mean_users_per_small_bs is None else f"{k.mean_users_per_small_bs:.2f}"
        print(f"{name:18s} power {k.mean_tx_power_dbm:8.2f} dBm  median SINR {k.median_sinr_db:6.1f} dB  "
              f"load macro/small {k.mean_users_per_macro_bs:.2f}/{small}  SE {k.spectrum_efficiency:.3f}  "
              f"blocked {100 * k.blocking_rate:.1f}%", file=out)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    report = simkit.run_monte_carlo(cfg)
    paths = simkit.write_report(report, cfg.output.out_dir)
    _summary(report)
    print(f"wrote {len(paths)} files to {cfg.output.out_dir}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    base = Path(cfg.output.out_dir)
    for d, report in zip(args.densities, simkit.sensitivity_sweep(cfg, args.densities)):
        out = base / f"small_{d}"
        simkit.write_report(report, out)
        print(f"-- {d} small cell(s) per sector -> {out}")
        _summary(report)
    return 0


def cmd_oracle_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    violations = 0
    exact = single = 0
    rows = []
    for i in range(args.instances):
        inst = oracle.random_micro_instance(rng)
        opt = oracle.brute_force_min_power(inst)
        row = {"instance": i, "n_bs": inst.n_bs, "n_users": inst.n_users, "oracle_total_w": opt.total_power}
        for policy in POLICIES:
            h = oracle.run_heuristic(inst, policy)
            row[policy] = h.total_power
            if h.total_power < opt.total_power:
                violations += 1
                print(f"instance {i}: {policy} total {h.total_power:.6g} W below optimum {opt.total_power:.6g} W")
            if policy == "semi_distributive" and inst.n_bs == 1:
                single += 1
                exact += h.total_power == opt.total_power
        rows.append(row)
    ok = args.instances * len(POLICIES) - violations
    print(f"{ok}/{args.instances * len(POLICIES)} heuristic runs >= oracle over {args.instances} instances; "
          f"semi_distributive exact on {exact}/{single} single-BS instances")
    if args.out_dir is not None:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        (args.out_dir / "oracle_check.json").write_text(json.dumps(simkit._clean(rows), indent=2) + "\n")
    return 0 if violations == 0 and exact == single else 1


def cmd_dump_topology(args) -> int:
    cfg = _load(args)
    seed = cfg.simulation.seed
    topo = simkit.build_topology(cfg, seed)
    out = Path(cfg.output.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"topology_{seed}.json"
    doc = topo.to_dict()
    doc["seed"] = seed
    doc["config"] = cfg.resolved()
    path.write_text(json.dumps(doc, indent=2) + "\n")
    print(f"wrote {path}: {len(topo.base_stations)} BS, {len(topo.users)} users")
    return 0


_COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "oracle-check": cmd_oracle_check,
             "dump-topology": cmd_dump_topology}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"hetnetsim: configuration error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"hetnetsim: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
