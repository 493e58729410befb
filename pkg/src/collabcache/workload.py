"""Zipf demand generation, request streams and popularity-estimation error models."""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _io
from .demand import DemandMatrix, DemandProvenance
from .errors import MissingProvenance, SchemaError

STREAM_FORMAT = "collabcache/stream"
POLICIES = ("random-interleave", "round-robin", "grouped-by-content")


def zipf_popularity(M, zeta):
    """Probability of each rank ``1..M`` under a Zipf law with exponent ``zeta``."""
    if M < 1 or zeta < 0:
        raise ValueError("M >= 1 and zeta >= 0 required")
    w = 1.0 / np.arange(1, M + 1, dtype=float) ** zeta
    return w / w.sum()


def round_count(x):
    """Round half up and clamp at zero."""
    return np.maximum(np.floor(np.asarray(x, dtype=float) + 0.5), 0).astype(np.int64)


def _demands_from_ranks(users, zeta, ranks):
    pop = zipf_popularity(ranks.shape[1], zeta)
    return round_count(users[:, None] * pop[ranks - 1])


def gen_demands(K, M, users_per_station, zeta, seed, poisson=False):
    """Draw Zipf demands with an independent random content ranking per station.

    Each station issues ``users_per_station`` requests (or a Poisson draw with
    that mean when ``poisson`` is set), split over contents by popularity rank.
    """
    if K < 1 or M < 1 or users_per_station <= 0:
        raise ValueError("K, M and users_per_station must be positive")
    rng = np.random.default_rng(seed)
    ranks = np.stack([rng.permutation(M) + 1 for _ in range(K)]).astype(np.int64)
    if poisson:
        users = rng.poisson(users_per_station, size=K).astype(float)
    else:
        users = np.full(K, float(users_per_station))
    prov = DemandProvenance(users=users, zeta=float(zeta), seed=seed, ranks=ranks, poisson=poisson)
    return DemandMatrix(_demands_from_ranks(users, zeta, ranks), prov)


def perturb_uniform(demands, margin, seed):
    """Estimated demands drawn uniformly from ``[(1-margin)g, (1+margin)g]`` and rounded."""
    if not 0 <= margin <= 1:
        raise ValueError("margin must lie in [0, 1]")
    g = demands.gamma.astype(float)
    rng = np.random.default_rng(seed)
    draw = rng.uniform((1 - margin) * g, (1 + margin) * g)
    est = np.where(demands.gamma == 0, 0, round_count(draw))
    return DemandMatrix(est)


def shuffle_ranks(demands, seed):
    """Estimated demands under completely wrong rankings: fresh permutations, same volumes."""
    prov = demands.provenance
    if prov is None:
        raise MissingProvenance("rank shuffling needs demands produced by gen_demands")
    K, M = prov.ranks.shape
    rng = np.random.default_rng(seed)
    ranks = np.stack([rng.permutation(M) + 1 for _ in range(K)]).astype(np.int64)
    new_prov = DemandProvenance(prov.users, prov.zeta, seed, ranks, prov.poisson)
    return DemandMatrix(_demands_from_ranks(prov.users, prov.zeta, ranks), new_prov)


@dataclass(frozen=True, eq=False)
class RequestStream:
    events: np.ndarray  # (n, 2) rows of (station, content)
    seed: Optional[int] = None
    policy: Optional[str] = None

    def __post_init__(self):
        ev = np.asarray(self.events, dtype=np.int64).reshape(-1, 2)
        ev.setflags(write=False)
        object.__setattr__(self, "events", ev)

    def __len__(self):
        return len(self.events)

    def counts(self, K, M):
        out = np.zeros((K, M), dtype=np.int64)
        np.add.at(out, (self.events[:, 0], self.events[:, 1]), 1)
        return out

    def for_content(self, j):
        return self.events[self.events[:, 1] == j]


def demands_to_stream(demands, seed, policy="random-interleave"):
    """Emit exactly ``gamma[i, j]`` events per pair in the order ``policy`` dictates.

    ``random-interleave`` shuffles the whole multiset; ``round-robin`` takes one
    pending event per station in turn; ``grouped-by-content`` emits contents in
    index order with a shuffled order inside each content.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; choose from {POLICIES}")
    g = demands.gamma
    K, M = g.shape
    rng = np.random.default_rng(seed)
    pairs = np.argwhere(g > 0)
    flat = np.repeat(pairs, g[pairs[:, 0], pairs[:, 1]], axis=0) if len(pairs) else np.zeros((0, 2), np.int64)

    if policy == "random-interleave":
        events = flat[rng.permutation(len(flat))]
    elif policy == "grouped-by-content":
        chunks = []
        for j in range(M):
            part = flat[flat[:, 1] == j]
            chunks.append(part[rng.permutation(len(part))])
        events = np.concatenate(chunks) if chunks else flat
    else:
        queues = [deque(flat[flat[:, 0] == i].tolist()) for i in range(K)]
        events = []
        while any(queues):
            for q in queues:
                if q:
                    events.append(q.popleft())
        events = np.array(events, dtype=np.int64).reshape(-1, 2)
    return RequestStream(events, seed=seed, policy=policy)


def stream_from_events(events):
    return RequestStream(np.asarray(events, dtype=np.int64).reshape(-1, 2))


def save_stream(stream, path, num_stations=None, num_contents=None):
    body = {
        "num_events": len(stream),
        "seed": stream.seed,
        "policy": stream.policy,
        "events": stream.events.tolist(),
    }
    if num_stations is not None:
        body["num_stations"] = num_stations
    if num_contents is not None:
        body["num_contents"] = num_contents
    return _io.dump_document(path, STREAM_FORMAT, body)


def load_stream(path):
    doc = _io.load_document(path, STREAM_FORMAT)
    raw = _io.require(doc, "events")
    if not isinstance(raw, list):
        raise SchemaError("expected a list", field="events")
    for n, ev in enumerate(raw):
        if not (isinstance(ev, list) and len(ev) == 2 and all(isinstance(x, int) and x >= 0 for x in ev)):
            raise SchemaError("expected [station, content]", field=f"events[{n}]")
    return RequestStream(np.array(raw, dtype=np.int64).reshape(-1, 2), seed=doc.get("seed"), policy=doc.get("policy"))


STREAM_HEADER = ["index", "station", "content"]


def write_stream_csv(stream, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STREAM_HEADER)
        for n, (i, j) in enumerate(stream.events.tolist()):
            w.writerow([n, i, j])
