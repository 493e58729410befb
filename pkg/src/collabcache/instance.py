"""Problem instances: stations, the Internet node, UA costs and caching costs.

Indexing is zero-based throughout the package.  Stations are ``0..K-1`` and
the Internet is node ``K``, so ``ua`` has shape ``(K, K+1)`` and
``ua[i, k]`` is the per-request, per-MB user-attrition cost paid when station
``i`` is served from node ``k``.  ``caching_cost[k, j]`` is the one-time
per-MB fee for caching content ``j`` at station ``k``; ``INFINITE`` marks a
station that may never cache that content.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _io
from .errors import DisconnectedTopology, SchemaError

INFINITE = math.inf
TOL = 1e-9

INSTANCE_FORMAT = "collabcache/instance"


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Topology:
    positions: np.ndarray  # (K, 2), km
    edges: list  # (i, k, cost) with i < k
    internet_cost: np.ndarray  # (K,)
    area_side: Optional[float] = None
    link_threshold: Optional[float] = None
    cost_scale: float = 1.0
    seed: Optional[int] = None
    bridges: list = field(default_factory=list)  # edges added by connectivity repair

    @property
    def num_stations(self):
        return len(self.positions)

    @property
    def repaired(self):
        return bool(self.bridges)

    def to_dict(self):
        return {
            "positions": [[float(x), float(y)] for x, y in self.positions],
            "edges": [[int(i), int(k), float(c)] for i, k, c in self.edges],
            "bridges": [[int(i), int(k), float(c)] for i, k, c in self.bridges],
            "internet_cost": [_io.encode_real(c) for c in self.internet_cost],
            "area_side": self.area_side,
            "link_threshold": self.link_threshold,
            "cost_scale": self.cost_scale,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        def edge_list(name):
            return [(int(i), int(k), float(c)) for i, k, c in d.get(name, [])]

        K = len(d["positions"])
        return cls(
            positions=_frozen(np.reshape(np.array(d["positions"], dtype=float), (K, 2))),
            edges=edge_list("edges"),
            internet_cost=_frozen(
                [_io.decode_real(c, f"topology.internet_cost[{n}]") for n, c in enumerate(d["internet_cost"])]
            ),
            area_side=d.get("area_side"),
            link_threshold=d.get("link_threshold"),
            cost_scale=d.get("cost_scale", 1.0),
            seed=d.get("seed"),
            bridges=edge_list("bridges"),
        )


def _components(K, edges):
    parent = list(range(K))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, k, _ in edges:
        ri, rk = find(i), find(k)
        if ri != rk:
            parent[ri] = rk
    return [find(x) for x in range(K)]


def _repair_connectivity(dist, edges, cost_scale):
    """Greedily join components with the globally shortest inter-component pair."""
    K = len(dist)
    bridges = []
    while True:
        comp = np.array(_components(K, edges + bridges))
        if len(set(comp.tolist())) <= 1:
            return bridges
        cross = comp[:, None] != comp[None, :]
        masked = np.where(cross, dist, np.inf)
        i, k = np.unravel_index(int(np.argmin(masked)), masked.shape)
        i, k = (int(i), int(k)) if i < k else (int(k), int(i))
        bridges.append((i, k, float(dist[i, k]) * cost_scale))


def topology_from_positions(positions, link_threshold, cost_scale=1.0, internet_cost=None,
                            area_side=None, seed=None):
    """Build a topology over fixed coordinates.

    Pairs closer than ``link_threshold`` get an edge costing ``distance * cost_scale``.
    A disconnected graph is repaired with bridging edges (recorded in ``bridges``).
    ``internet_cost`` defaults to twice the shortest-path diameter.
    """
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    K = len(pos)
    dist = np.sqrt(((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=-1))
    edges = [
        (i, k, float(dist[i, k]) * cost_scale)
        for i in range(K)
        for k in range(i + 1, K)
        if dist[i, k] < link_threshold
    ]
    bridges = _repair_connectivity(dist, edges, cost_scale)
    if internet_cost is None:
        sp = shortest_paths(K, edges + bridges)
        internet = np.full(K, 2.0 * float(sp.max()) if K else 0.0)
    else:
        internet = np.broadcast_to(np.asarray(internet_cost, dtype=float), (K,)).copy()
    return Topology(
        positions=_frozen(pos),
        edges=edges,
        internet_cost=_frozen(internet),
        area_side=area_side,
        link_threshold=link_threshold,
        cost_scale=cost_scale,
        seed=seed,
        bridges=bridges,
    )


def build_topology(num_stations, area_side, link_threshold, seed, cost_scale=1.0, internet_cost=None):
    """Place ``num_stations`` uniformly at random in an ``area_side`` km square."""
    if num_stations < 1 or area_side <= 0 or link_threshold <= 0:
        raise ValueError("num_stations >= 1, area_side > 0 and link_threshold > 0 required")
    rng = np.random.default_rng(seed)
    positions = rng.uniform(0.0, area_side, size=(num_stations, 2))
    return topology_from_positions(positions, link_threshold, cost_scale, internet_cost,
                                   area_side=area_side, seed=seed)


def shortest_paths(K, edges):
    """Dense Floyd-Warshall over an undirected edge list; unreachable pairs stay inf."""
    d = np.full((K, K), np.inf)
    np.fill_diagonal(d, 0.0)
    for i, k, c in edges:
        if c < d[i, k]:
            d[i, k] = d[k, i] = c
    for m in range(K):
        np.minimum(d, d[:, m:m + 1] + d[m:m + 1, :], out=d)
    return d


def all_pairs_ua(topology):
    """UA matrix ``(K, K+1)``: min-cost paths between stations, then the Internet column."""
    K = topology.num_stations
    d = shortest_paths(K, list(topology.edges) + list(topology.bridges))
    if np.isinf(d).any():
        i, k = (int(x) for x in np.argwhere(np.isinf(d))[0])
        raise DisconnectedTopology(f"stations {i} and {k} are not connected")
    return np.hstack([d, np.asarray(topology.internet_cost, dtype=float).reshape(K, 1)])


@dataclass(frozen=True, eq=False)
class Instance:
    """Immutable problem instance. See the module docstring for index conventions.

    ``kind`` is ``"general"``, ``"topology"``, ``"tree"`` or ``"reduction"``;
    reduction instances carry a directly supplied UA matrix and are exempt from
    the triangle-inequality check.
    """

    num_stations: int
    ua: np.ndarray
    caching_cost: np.ndarray
    content_sizes: np.ndarray
    kind: str = "general"
    topology: Optional[Topology] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        K = int(self.num_stations)
        ua = _frozen(self.ua)
        f = _frozen(self.caching_cost)
        s = _frozen(self.content_sizes).reshape(-1)
        if f.size == 0:
            f = _frozen(np.empty((K, len(s))))
        if ua.shape != (K, K + 1):
            raise ValueError(f"ua must have shape {(K, K + 1)}, got {ua.shape}")
        if f.ndim != 2 or f.shape[0] != K:
            raise ValueError(f"caching_cost must have shape (K, M), got {f.shape}")
        if f.shape[1] != len(s):
            raise ValueError("caching_cost columns must match content_sizes")
        s.setflags(write=False)
        object.__setattr__(self, "num_stations", K)
        object.__setattr__(self, "ua", ua)
        object.__setattr__(self, "caching_cost", f)
        object.__setattr__(self, "content_sizes", s)

    @property
    def num_contents(self):
        return len(self.content_sizes)

    @property
    def internet(self):
        """Index of the Internet node."""
        return self.num_stations

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def instance_from_topology(topology, caching_cost, content_sizes):
    return Instance(
        num_stations=topology.num_stations,
        ua=all_pairs_ua(topology),
        caching_cost=caching_cost,
        content_sizes=content_sizes,
        kind="topology",
        topology=topology,
    )


@dataclass(frozen=True)
class Violation:
    rule: str
    detail: str
    where: tuple = ()


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def rules(self):
        return {v.rule for v in self.violations}

    def __bool__(self):
        return self.ok


def validate_instance(instance, tol=TOL):
    """Report every violated invariant; never raises."""
    report = ValidationReport()
    add = report.violations.append
    K = instance.num_stations
    ua = np.asarray(instance.ua, dtype=float)
    f = np.asarray(instance.caching_cost, dtype=float)
    s = np.asarray(instance.content_sizes, dtype=float)

    for i, k in np.argwhere(np.isnan(ua)):
        add(Violation("ua-nan", f"ua[{i}][{k}] is NaN", (int(i), int(k))))
    for i, k in np.argwhere(ua < 0):
        add(Violation("ua-negative", f"ua[{i}][{k}] = {ua[i, k]!r} < 0", (int(i), int(k))))
    for i in range(K):
        if ua[i, i] != 0:
            add(Violation("ua-diagonal", f"ua[{i}][{i}] = {ua[i, i]!r}, expected 0", (i, i)))
    for k, j in np.argwhere(np.isnan(f) | (f < 0)):
        add(Violation("caching-cost-negative", f"caching_cost[{k}][{j}] = {f[k, j]!r}", (int(k), int(j))))
    for j in np.flatnonzero(~(s > 0) | ~np.isfinite(s)):
        add(Violation("content-size", f"content_sizes[{j}] = {s[j]!r} must be positive and finite", (int(j),)))

    if instance.kind == "reduction":
        report.notes.append("triangle-inequality check skipped for a reduction instance")
    elif K:
        st = ua[:, :K]
        # via[i, k', k] = ua[i, k'] + ua[k', k]
        via = st[:, :, None] + st[None, :, :]
        best = via.min(axis=1)
        witness = via.argmin(axis=1)
        with np.errstate(invalid="ignore"):
            bad = st - best > tol
        for i, k in np.argwhere(bad):
            kp = int(witness[i, k])
            add(Violation(
                "triangle",
                f"ua[{i}][{k}] = {st[i, k]!r} > ua[{i}][{kp}] + ua[{kp}][{k}] = {best[i, k]!r}",
                (int(i), int(k), kp),
            ))
    return report


def save_instance(instance, path):
    body = {
        "num_stations": instance.num_stations,
        "num_contents": instance.num_contents,
        "kind": instance.kind,
        "ua": [[_io.encode_real(x) for x in row] for row in instance.ua],
        "caching_cost": [[_io.encode_real(x) for x in row] for row in instance.caching_cost],
        "content_sizes": [_io.encode_real(x) for x in instance.content_sizes],
    }
    if instance.topology is not None:
        body["topology"] = instance.topology.to_dict()
    if instance.metadata:
        body["metadata"] = instance.metadata
    return _io.dump_document(path, INSTANCE_FORMAT, body)


def load_instance(path):
    doc = _io.load_document(path, INSTANCE_FORMAT)
    K = _io.require(doc, "num_stations")
    if not isinstance(K, int) or K < 1:
        raise SchemaError("must be a positive integer", field="num_stations")
    sizes_raw = _io.require(doc, "content_sizes")
    if not isinstance(sizes_raw, list):
        raise SchemaError("expected a list", field="content_sizes")
    sizes = [_io.decode_real(v, f"content_sizes[{j}]") for j, v in enumerate(sizes_raw)]
    ua = _io.decode_matrix(doc, "ua", K, K + 1)
    f = _io.decode_matrix(doc, "caching_cost", K, len(sizes))
    topo = None
    if "topology" in doc:
        try:
            topo = Topology.from_dict(doc["topology"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad topology block: {exc}", field="topology") from exc
    return Instance(
        num_stations=K,
        ua=ua,
        caching_cost=np.array(f, dtype=float).reshape(K, len(sizes)),
        content_sizes=sizes,
        kind=doc.get("kind", "general"),
        topology=topo,
        metadata=doc.get("metadata", {}),
    )
