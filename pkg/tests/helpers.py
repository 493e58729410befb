"""Random instance and stream factories shared by the test modules."""

import numpy as np

from collabcache.cli import main
from collabcache.instance import INFINITE, build_topology, instance_from_topology
from collabcache.workload import RequestStream


def random_instance(rng, K=None, M=None, max_K=12, max_M=5, infinite_fraction=0.1, fee_scale=None):
    K = int(rng.integers(1, max_K + 1)) if K is None else K
    M = int(rng.integers(1, max_M + 1)) if M is None else M
    threshold, seed = float(rng.uniform(10, 30)), int(rng.integers(2**31))
    topo = build_topology(K, 50.0, threshold, seed)
    if topo.internet_cost[0] == 0:  # a single station has zero diameter
        topo = build_topology(K, 50.0, threshold, seed, internet_cost=20.0)
    scale = float(topo.internet_cost[0]) * (float(rng.uniform(0.5, 20)) if fee_scale is None else fee_scale)
    fees = rng.uniform(0.2, 1.8, size=(K, M)) * scale
    fees[rng.random((K, M)) < infinite_fraction] = INFINITE
    sizes = rng.integers(1, 5, size=M).astype(float)
    return instance_from_topology(topo, fees, sizes)


def random_stream(rng, K, M, max_per_content=500):
    """Skewed station choice per content, random interleaving across contents."""
    events = []
    for j in range(M):
        n = int(rng.integers(1, max_per_content + 1))
        weights = rng.dirichlet(np.full(K, 0.5))
        stations = rng.choice(K, size=n, p=weights)
        events.extend((int(i), j) for i in stations)
    events = np.array(events, dtype=np.int64).reshape(-1, 2)
    return RequestStream(events[rng.permutation(len(events))])


def line_instance(ua, fees, sizes=None, kind="general"):
    """Instance straight from a UA matrix (K x K+1) and fee matrix (K x M)."""
    from collabcache.instance import Instance

    ua = np.asarray(ua, dtype=float)
    fees = np.asarray(fees, dtype=float)
    if fees.ndim == 1:
        fees = fees[:, None]
    sizes = np.ones(fees.shape[1]) if sizes is None else np.asarray(sizes, dtype=float)
    return Instance(num_stations=ua.shape[0], ua=ua, caching_cost=fees, content_sizes=sizes, kind=kind)


def hand_trace_instance():
    """Two stations one hop apart (cost 1), Internet at 5, both fees 10."""
    return line_instance([[0, 1, 5], [1, 0, 5]], [10, 10])


def cli_pipeline(out, seed=3):
    """Every subcommand once, writing under ``out``; returns the exit codes."""
    cfg = out / "cfg.yaml"
    cfg.write_text("num_stations: 6\nnum_contents: 5\nusers_per_station: 40\nruns: 3\n")
    codes = [
        main(["gen-instance", "--config", str(cfg), "--seed", str(seed), "--out", str(out / "w")]),
        main(["gen-demands", "--config", str(cfg), "--seed", str(seed), "--error-model", "uniform:0.5",
              "--out", str(out / "w")]),
        main(["gen-stream", "--demands", str(out / "w/demands.json"), "--seed", str(seed), "--out", str(out / "w")]),
        main(["run-online", "--instance", str(out / "w/instance.json"), "--stream", str(out / "w/stream.json"),
              "--probe", "--out", str(out / "online")]),
        main(["run-offline", "--instance", str(out / "w/instance.json"),
              "--demands", str(out / "w/demands_estimated.json"), "--actual", str(out / "w/demands.json"),
              "--out", str(out / "offline")]),
        main(["run-noncollab", "--instance", str(out / "w/instance.json"), "--demands", str(out / "w/demands.json"),
              "--out", str(out / "noncollab")]),
        main(["adversary", "--heights", "2,3", "--runs", "4", "--seed", str(seed), "--out", str(out / "adv")]),
        main(["experiment", "--config", str(cfg), "--seed", str(seed), "--error-model", "rank-shuffle",
              "--out", str(out / "exp")]),
        main(["report", "--results", str(out / "exp"), "--out", str(out / "rep")]),
    ]
    return codes


def cli_outputs(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.suffix in (".csv", ".dat", ".json") and p.name != "cfg.yaml"}
