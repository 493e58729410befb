"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 infeasible input or validation
failure, 3 a bound-violation defect was detected.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .demand import load_demands, save_demands
from .errors import CollabCacheError
from .harness import ExperimentConfig
from .instance import load_instance, save_instance, validate_instance
from .offline import offline_collaborative_exact, offline_noncollaborative, reassign, verify_plan, write_plan_csv
from .online import probe_invariants, run_stream, write_trace_csv
from .workload import POLICIES, demands_to_stream, gen_demands, load_stream, save_stream, write_stream_csv

log = logging.getLogger("collabcache")

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_DEFECT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(args):
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "error_model", None) is not None:
        harness.parse_error_model(args.error_model)
        cfg.error_model = args.error_model
    if getattr(args, "runs", None) is not None:
        cfg.runs = args.runs
    if getattr(args, "scheme", None):
        cfg.schemes = tuple(args.scheme)
        cfg.__post_init__()
    return cfg


def _out(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(out, command, **payload):
    harness.write_manifest(out / "manifest.json", {"command": command, **payload})


def _checked_instance(path):
    inst = load_instance(path)
    report = validate_instance(inst)
    if not report.ok:
        for v in report.violations[:20]:
            log.error("invalid instance: %s", v.detail)
        raise _Infeasible(f"{path}: {len(report.violations)} validation violations")
    return inst


class _Infeasible(Exception):
    pass


def cmd_gen_instance(args):
    cfg = _load_config(args)
    seeds = harness._run_seeds(cfg, 0)
    inst = harness.build_run_instance(cfg, seeds)
    out = _out(args)
    save_instance(inst, out / "instance.json")
    _manifest(out, "gen-instance", config=cfg.to_dict(), seeds=seeds)
    print(out / "instance.json")
    return EXIT_OK


def cmd_gen_demands(args):
    cfg = _load_config(args)
    seeds = harness._run_seeds(cfg, 0)
    actual = gen_demands(cfg.num_stations, cfg.num_contents, cfg.users_per_station, cfg.zeta,
                         seeds["demands"], poisson=cfg.poisson_users)
    out = _out(args)
    save_demands(actual, out / "demands.json")
    if cfg.error_model != "none":
        save_demands(harness.estimate_demands(cfg, actual, seeds["estimate"]), out / "demands_estimated.json")
    _manifest(out, "gen-demands", config=cfg.to_dict(), seeds=seeds)
    print(out / "demands.json")
    return EXIT_OK


def cmd_gen_stream(args):
    demands = load_demands(args.demands)
    seed = 0 if args.seed is None else args.seed
    stream = demands_to_stream(demands, seed, args.policy)
    out = _out(args)
    save_stream(stream, out / "stream.json", demands.num_stations, demands.num_contents)
    write_stream_csv(stream, out / "stream.csv")
    _manifest(out, "gen-stream", demands=str(args.demands), seed=seed, policy=args.policy)
    print(out / "stream.csv")
    return EXIT_OK


def _write_ledger(ledger, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["content", "size", "ua", "caching", "total"])
        for j, s in enumerate(ledger.content_sizes):
            w.writerow([j, repr(float(s)), repr(float(ledger.per_content_ua[j])),
                        repr(float(ledger.per_content_caching[j])), repr(ledger.content_total(j))])
        w.writerow(["all", "", "", "", repr(ledger.total())])


def cmd_run_online(args):
    inst = _checked_instance(args.instance)
    stream = load_stream(args.stream)
    result = run_stream(inst, stream, probe=args.probe)
    out = _out(args)
    write_trace_csv(result.trace, out / "trace.csv")
    _write_ledger(result.ledger, out / "ledger.csv")
    _manifest(out, "run-online", instance=str(args.instance), stream=str(args.stream))
    print(f"online total cost {result.ledger.total()!r}")
    defects = list(result.probe_failures)
    for j, state in result.states.items():
        if not probe_invariants(state, inst).ok:
            defects.append((j, None))
    if defects:
        log.error("%d invariant probe failures", len(defects))
        return EXIT_DEFECT
    return EXIT_OK


def _run_offline(args, solver, collaborative, command):
    inst = _checked_instance(args.instance)
    demands = load_demands(args.demands)
    if demands.gamma.shape != (inst.num_stations, inst.num_contents):
        raise _Infeasible("demand matrix shape does not match the instance")
    plan, _ = solver(inst, demands)
    actual = load_demands(args.actual) if args.actual else demands
    plan = reassign(inst, plan, actual, collaborative=collaborative)
    cost, report = verify_plan(inst, actual, plan)
    out = _out(args)
    write_plan_csv(plan, out / "plan.csv")
    with open(out / "cost.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "total_cost", "feasible"])
        w.writerow([command, repr(cost), int(report.feasible)])
    _manifest(out, command, instance=str(args.instance), demands=str(args.demands),
              actual=str(args.actual) if args.actual else None)
    print(f"{command} total cost {cost!r}")
    if not report.feasible:
        for v in report.violations:
            log.error("%s", v)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_run_offline(args):
    return _run_offline(args, offline_collaborative_exact, True, "run-offline")


def cmd_run_noncollab(args):
    return _run_offline(args, offline_noncollaborative, False, "run-noncollab")


def cmd_adversary(args):
    heights = [int(h) for h in args.heights.split(",")]
    base = 0 if args.seed is None else args.seed
    seeds = list(range(base, base + args.runs))
    rows = harness.adversary_sweep(heights, seeds, m=args.m, D=args.D, f=args.f)
    out = _out(args)
    harness.write_adversary_csv(rows, out / "adversary.csv")
    means = harness.adversary_means(rows)
    with open(out / "adversary_means.dat", "w", encoding="utf-8") as fh:
        fh.write("# H mean_ratio\n")
        for H, v in means.items():
            fh.write(f"{H} {v!r}\n")
    _manifest(out, "adversary", heights=heights, seeds=[seeds[0], seeds[-1]] if seeds else [],
              m=args.m, D=args.D, f=args.f)
    for H, v in means.items():
        print(f"H={H} mean online/offline ratio {v:.4f}")
    over = [r for r in rows if r["offline_cost"] > r["offline_bound"] * (1 + 1e-9)]
    if over:
        log.error("%d runs exceed the optimal-cost upper bound", len(over))
        return EXIT_DEFECT
    return EXIT_OK


def cmd_experiment(args):
    cfg = _load_config(args)
    cfg.output_dir = str(_out(args))
    table = harness.run_experiment(cfg)
    for k, v in table.summary().items():
        print(f"{k}: {v}")
    if table.summary().get("bound_violations", 0):
        return EXIT_DEFECT
    return EXIT_OK


def cmd_report(args):
    src = Path(args.results)
    with open(src / "runs.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise _Infeasible(f"{src / 'runs.csv'} has no runs")
    out = _out(args) if args.out else src
    pairs = [("online", "noncollab"), ("offline_collab", "noncollab"), ("online", "offline_collab")]
    lines = []
    for scheme, base in pairs:
        a, b = f"cost_{scheme}", f"cost_{base}"
        if a in rows[0] and b in rows[0]:
            cdf = harness.cost_savings_cdf([float(r[a]) for r in rows], [float(r[b]) for r in rows])
            cdf.write_dat(out / f"cdf_{scheme}_vs_{base}.dat")
            s = cdf.savings
            lines.append([f"{scheme}_vs_{base}", repr(float(s.min())), repr(float(np.median(s))),
                          repr(float(s.max())), repr(float(np.mean(s > 0)))])
    with open(out / "report.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["comparison", "savings_min", "savings_median", "savings_max", "fraction_positive"])
        w.writerows(lines)
    for line in lines:
        print(" ".join(line))
    violations = sum(int(r.get("bound_violations") or 0) for r in rows)
    return EXIT_DEFECT if violations else EXIT_OK


def build_parser():
    p = _Parser(prog="collabcache", description="Collaborative edge-caching simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True, seed=True):
        if config:
            sp.add_argument("--config", help="YAML/JSON experiment config")
        if seed:
            sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("gen-instance", help="generate a random topology instance")
    common(sp)
    sp.set_defaults(func=cmd_gen_instance)

    sp = sub.add_parser("gen-demands", help="generate Zipf demands")
    common(sp)
    sp.add_argument("--error-model", help="none | uniform:<margin> | rank-shuffle")
    sp.set_defaults(func=cmd_gen_demands)

    sp = sub.add_parser("gen-stream", help="turn demands into a request stream")
    common(sp, config=False)
    sp.add_argument("--demands", required=True)
    sp.add_argument("--policy", choices=POLICIES, default="random-interleave")
    sp.set_defaults(func=cmd_gen_stream)

    sp = sub.add_parser("run-online", help="run the online algorithm on a stream")
    common(sp, config=False, seed=False)
    sp.add_argument("--instance", required=True)
    sp.add_argument("--stream", required=True)
    sp.add_argument("--probe", action="store_true", help="check invariants after every request")
    sp.set_defaults(func=cmd_run_online)

    for name, func in (("run-offline", cmd_run_offline), ("run-noncollab", cmd_run_noncollab)):
        sp = sub.add_parser(name, help=f"{name.split('-', 1)[1]} offline optimum")
        common(sp, config=False, seed=False)
        sp.add_argument("--instance", required=True)
        sp.add_argument("--demands", required=True, help="demands the plan is optimized on")
        sp.add_argument("--actual", help="demands the plan is costed on (default: --demands)")
        sp.set_defaults(func=func)

    sp = sub.add_parser("adversary", help="lower-bound tree sweep")
    common(sp, config=False)
    sp.add_argument("--heights", default="2,3,4,5")
    sp.add_argument("--runs", type=int, default=200, help="seeds per height")
    sp.add_argument("--m", type=float, default=None, help="decay factor (default: H)")
    sp.add_argument("--D", type=float, default=1.0)
    sp.add_argument("--f", type=float, default=None, help="leaf fee (default: H*D)")
    sp.set_defaults(func=cmd_adversary)

    sp = sub.add_parser("experiment", help="compare schemes over seeded runs")
    common(sp)
    sp.add_argument("--error-model", help="none | uniform:<margin> | rank-shuffle")
    sp.add_argument("--scheme", action="append", choices=harness.SCHEMES)
    sp.add_argument("--runs", type=int)
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("report", help="savings CDFs from an experiment directory")
    sp.add_argument("--results", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, UsageError, FileNotFoundError) as exc:
        print(f"collabcache: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (_Infeasible, CollabCacheError) as exc:
        print(f"collabcache: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
