"""Experiment orchestration: scheme comparison runs, savings CDFs, ratio reports."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .adversary import build_tree_instance, gen_adversary_stream, offline_upper_bound
from .demand import DemandMatrix
from .errors import DimensionMismatch, ExperimentError, ZeroBaseline
from .instance import build_topology, instance_from_topology
from .offline import (
    internet_only_cost,
    offline_collaborative_exact,
    offline_noncollaborative,
    reassign,
    verify_plan,
)
from .online import run_stream
from .workload import demands_to_stream, gen_demands, perturb_uniform, shuffle_ranks

SCHEMES = ("offline-collab", "online", "noncollab")


def parse_error_model(spec):
    """``"none"``, ``"rank-shuffle"`` or ``"uniform:<margin>"`` -> (name, margin)."""
    if spec in (None, "none"):
        return "none", None
    if spec == "rank-shuffle":
        return "rank-shuffle", None
    if isinstance(spec, str) and spec.startswith("uniform:"):
        margin = float(spec.split(":", 1)[1])
        if not 0 <= margin <= 1:
            raise ValueError("uniform margin must lie in [0, 1]")
        return "uniform", margin
    raise ValueError(f"unknown error model {spec!r}")


@dataclass
class ExperimentConfig:
    # instance
    num_stations: int = 10
    area_side: float = 50.0
    link_threshold: float = 15.0
    edge_cost_scale: float = 1.0
    internet_cost: Optional[float] = None  # None: twice the topology diameter
    caching_cost_mean: float = 200.0
    caching_cost_spread: float = 0.5  # fees uniform in mean * (1 +/- spread)
    # workload
    num_contents: int = 20
    size_min: int = 10
    size_max: int = 20
    zeta: float = 1.1
    users_per_station: float = 100.0
    poisson_users: bool = False
    stream_policy: str = "random-interleave"
    # experiment
    runs: int = 20
    seed: int = 0
    error_model: str = "none"
    schemes: tuple = SCHEMES
    workers: int = 1
    output_dir: Optional[str] = None

    def __post_init__(self):
        self.schemes = tuple(self.schemes)
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes {sorted(unknown)}")
        parse_error_model(self.error_model)
        if not 0 <= self.caching_cost_spread <= 1:
            raise ValueError("caching_cost_spread must lie in [0, 1]")
        if not 1 <= self.size_min <= self.size_max:
            raise ValueError("need 1 <= size_min <= size_max")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["schemes"] = list(self.schemes)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path):
        import yaml

        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        return cls.from_dict(data)


def _run_seeds(config, r):
    ss = np.random.SeedSequence([config.seed, r])
    names = ("topology", "fees", "sizes", "demands", "estimate", "stream")
    return dict(zip(names, (int(x) for x in ss.generate_state(len(names)))))


def build_run_instance(config, seeds):
    topo = build_topology(config.num_stations, config.area_side, config.link_threshold, seeds["topology"],
                          cost_scale=config.edge_cost_scale, internet_cost=config.internet_cost)
    K, M = config.num_stations, config.num_contents
    rng = np.random.default_rng(seeds["fees"])
    lo = config.caching_cost_mean * (1 - config.caching_cost_spread)
    hi = config.caching_cost_mean * (1 + config.caching_cost_spread)
    fees = rng.uniform(lo, hi, size=(K, M))
    sizes = np.random.default_rng(seeds["sizes"]).integers(config.size_min, config.size_max + 1, size=M)
    return instance_from_topology(topo, fees, sizes.astype(float))


def estimate_demands(config, actual, seed):
    name, margin = parse_error_model(config.error_model)
    if name == "uniform":
        return perturb_uniform(actual, margin, seed)
    if name == "rank-shuffle":
        return shuffle_ranks(actual, seed)
    return actual


def run_single(config, r):
    """One run: instance, demands, optional estimate, and every configured scheme."""
    seeds = _run_seeds(config, r)
    inst = build_run_instance(config, seeds)
    actual = gen_demands(config.num_stations, config.num_contents, config.users_per_station, config.zeta,
                         seeds["demands"], poisson=config.poisson_users)
    estimated = estimate_demands(config, actual, seeds["estimate"])
    row = {
        "run": r,
        "seed_topology": seeds["topology"],
        "seed_demands": seeds["demands"],
        "num_stations": inst.num_stations,
        "num_contents": inst.num_contents,
        "total_requests": actual.total(),
        "topology_repaired": int(inst.topology.repaired),
        "cost_internet_only": internet_only_cost(inst, actual),
    }
    opt_plan, opt_actual = offline_collaborative_exact(inst, actual)
    row["cost_optimal_actual"] = opt_actual
    if "offline-collab" in config.schemes:
        plan = opt_plan if estimated is actual else offline_collaborative_exact(inst, estimated)[0]
        cost, rep = verify_plan(inst, actual, reassign(inst, plan, actual, collaborative=True))
        row["cost_offline_collab"] = cost
        row["offline_collab_feasible"] = int(rep.feasible)
    if "noncollab" in config.schemes:
        plan, _ = offline_noncollaborative(inst, estimated)
        cost, rep = verify_plan(inst, actual, reassign(inst, plan, actual, collaborative=False))
        row["cost_noncollab"] = cost
        row["noncollab_feasible"] = int(rep.feasible)
    if "online" in config.schemes:
        stream = demands_to_stream(actual, seeds["stream"], config.stream_policy)
        result = run_stream(inst, stream)
        row["cost_online"] = result.ledger.total()
        row["online_caching"] = float(np.dot(inst.content_sizes, result.ledger.per_content_caching))
        row["online_ua"] = float(np.dot(inst.content_sizes, result.ledger.per_content_ua))
        n = result.non_hit_counts(inst.num_contents)
        report = competitive_ratio_report(result.ledger.content_totals(),
                                          opt_plan.content_costs * inst.content_sizes, n)
        row["non_hit_requests"] = int(n.sum())
        row["update_ops"] = int(sum(s.update_ops for s in result.states.values()))
        row["recomputations_max"] = int(max(s.recomputations for s in result.states.values()))
        row["ratio_online_optimal"] = report.aggregate_ratio
        row["bound_violations"] = len(report.violations)
    return row


RUN_COLUMNS = [
    "run", "seed_topology", "seed_demands", "num_stations", "num_contents", "total_requests",
    "topology_repaired", "cost_internet_only", "cost_optimal_actual",
    "cost_offline_collab", "offline_collab_feasible", "cost_noncollab", "noncollab_feasible",
    "cost_online", "online_caching", "online_ua", "non_hit_requests", "update_ops",
    "recomputations_max", "ratio_online_optimal", "bound_violations",
]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


@dataclass
class ResultsTable:
    config: ExperimentConfig
    rows: list = field(default_factory=list)

    @property
    def columns(self):
        present = set().union(*(r.keys() for r in self.rows)) if self.rows else set()
        return [c for c in RUN_COLUMNS if c in present]

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    def means(self):
        return {c: float(self.column(c).mean()) for c in self.columns if c.startswith("cost_")}

    def summary(self):
        out = {f"mean_{k}": v for k, v in self.means().items()}
        out["runs"] = len(self.rows)
        m = self.means()
        if "cost_noncollab" in m and "cost_offline_collab" in m:
            out["ratio_noncollab_to_offline_collab"] = m["cost_noncollab"] / m["cost_offline_collab"]
        if "cost_noncollab" in m and "cost_online" in m:
            out["ratio_noncollab_to_online"] = m["cost_noncollab"] / m["cost_online"]
        if "cost_online" in m and "cost_offline_collab" in m:
            out["fraction_online_beats_offline"] = float(
                np.mean(self.column("cost_online") < self.column("cost_offline_collab")))
        if self.rows and "bound_violations" in self.rows[0]:
            out["bound_violations"] = int(self.column("bound_violations").sum())
        return out

    def cdfs(self):
        """Savings CDFs for every available (scheme, baseline) pair."""
        pairs = [("online", "noncollab"), ("offline_collab", "noncollab"), ("online", "offline_collab")]
        out = {}
        for scheme, base in pairs:
            a, b = f"cost_{scheme}", f"cost_{base}"
            if self.rows and a in self.rows[0] and b in self.rows[0]:
                out[f"{scheme}_vs_{base}"] = cost_savings_cdf(self.column(a), self.column(b))
        return out

    def write_csv(self, path):
        cols = self.columns
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.rows:
                w.writerow([_fmt(r.get(c)) for c in cols])

    def write_outputs(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.write_csv(out / "runs.csv")
        with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "value"])
            for k, v in self.summary().items():
                w.writerow([k, _fmt(v)])
        for name, cdf in self.cdfs().items():
            cdf.write_dat(out / f"cdf_{name}.dat")
        write_manifest(out / "manifest.json", {"command": "experiment", "config": self.config.to_dict()})
        return out


def write_manifest(path, payload):
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def run_experiment(config):
    """Run every configured scheme over ``config.runs`` seeded runs.

    Offline schemes optimize on the estimated demands and are costed on the
    actual ones; the online scheme only ever sees the actual stream.
    """
    table = ResultsTable(config)
    try:
        if config.workers > 1:
            with ProcessPoolExecutor(config.workers) as pool:
                futures = [pool.submit(run_single, config, r) for r in range(config.runs)]
                for r, fut in enumerate(futures):
                    try:
                        table.rows.append(fut.result())
                    except Exception as exc:
                        raise ExperimentError(r, exc) from exc
        else:
            for r in range(config.runs):
                try:
                    table.rows.append(run_single(config, r))
                except Exception as exc:
                    raise ExperimentError(r, exc) from exc
    finally:
        if config.output_dir is not None and table.rows:
            table.write_outputs(config.output_dir)
    return table


@dataclass
class SavingsCDF:
    savings: np.ndarray  # sorted percentages
    fractions: np.ndarray

    def points(self):
        return list(zip(self.savings.tolist(), self.fractions.tolist()))

    def write_dat(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# savings_percent cumulative_fraction\n")
            for s, p in self.points():
                fh.write(f"{s!r} {p!r}\n")


def cost_savings_cdf(costs_scheme, costs_baseline):
    """Empirical CDF of per-run savings ``(1 - scheme / baseline) * 100``."""
    a = np.asarray(costs_scheme, dtype=float).reshape(-1)
    b = np.asarray(costs_baseline, dtype=float).reshape(-1)
    if len(a) != len(b) or len(a) == 0:
        raise DimensionMismatch(f"need equal nonzero lengths, got {len(a)} and {len(b)}")
    if (b <= 0).any():
        raise ZeroBaseline("baseline costs must be positive")
    savings = np.sort((1.0 - a / b) * 100.0)
    return SavingsCDF(savings, np.arange(1, len(a) + 1) / len(a))


def ln_bound(n):
    return 4.0 * math.log(n + 1) + 2.0


def log2_bound(n):
    return 4.0 * math.log2(n + 1) + 2.0


def conservative_bound(n):
    return 4.0 * math.log(n + 1) + 6.0


@dataclass
class CompetitiveReport:
    rows: list  # per-content dicts
    aggregate_ratio: float
    violations: list  # contents exceeding the conservative bound

    @property
    def ok(self):
        return not self.violations

    def tight_bound_holds(self):
        return all(r["within_ln"] for r in self.rows)


def competitive_ratio_report(online_cost, offline_cost, n_per_content):
    """Measured online/offline ratio per content against the logarithmic bounds.

    Contents whose optimum is zero count as within bound only if the online
    cost is zero too.
    """
    on = np.atleast_1d(np.asarray(online_cost, dtype=float))
    off = np.atleast_1d(np.asarray(offline_cost, dtype=float))
    n = np.atleast_1d(np.asarray(n_per_content))
    if not len(on) == len(off) == len(n):
        raise DimensionMismatch("online, offline and n must have equal lengths")
    rows, violations = [], []
    for j in range(len(on)):
        if off[j] > 0:
            ratio = on[j] / off[j]
        else:
            ratio = math.nan if on[j] == 0 else math.inf
        cons = conservative_bound(int(n[j]))
        ok = math.isnan(ratio) or ratio <= cons
        rows.append({
            "content": j,
            "n": int(n[j]),
            "online": float(on[j]),
            "offline": float(off[j]),
            "ratio": ratio,
            "bound_ln": ln_bound(int(n[j])),
            "bound_log2": log2_bound(int(n[j])),
            "bound_conservative": cons,
            "within_conservative": ok,
            "within_ln": math.isnan(ratio) or ratio <= ln_bound(int(n[j])),
        })
        if not ok:
            violations.append(j)
    total_off = float(off.sum())
    agg = float(on.sum()) / total_off if total_off > 0 else math.nan
    return CompetitiveReport(rows, agg, violations)


ADVERSARY_COLUMNS = ["H", "m", "D", "f", "seed", "path", "online_cost", "offline_cost", "ratio"]


def adversary_sweep(heights, seeds, m=None, D=1.0, f=None):
    """Online vs optimal cost on realized lower-bound runs.

    ``m`` and ``f`` default to ``H`` and ``H * D`` for each height.
    """
    rows = []
    for H in heights:
        mm = float(H if m is None else m)
        ff = float(H * D if f is None else f)
        inst = build_tree_instance(H, mm, D, ff)
        for seed in seeds:
            run = gen_adversary_stream(H, mm, seed)
            online = run_stream(inst, run.stream).ledger.total()
            demands = DemandMatrix(run.stream.counts(inst.num_stations, 1))
            _, offline = offline_collaborative_exact(inst, demands, prune="always")
            rows.append({
                "H": H, "m": mm, "D": float(D), "f": ff, "seed": seed,
                "path": ";".join(str(z) for z in run.path),
                "online_cost": online, "offline_cost": offline, "ratio": online / offline,
                "offline_bound": offline_upper_bound(H, mm, D, ff),
            })
    return rows


def adversary_means(rows):
    out = {}
    for r in rows:
        out.setdefault(r["H"], []).append(r["ratio"])
    return {H: float(np.mean(v)) for H, v in sorted(out.items())}


def write_adversary_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ADVERSARY_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in ADVERSARY_COLUMNS])
