"""Lower-bound construction: a complete binary tree and a phased random-walk request sequence.

Nodes are numbered in level order (root 0, children of ``v`` are ``2v+1`` and
``2v+2``).  The edge from a vertex at height ``h`` to either child costs
``D / m**h``; only leaves may cache, at fee ``f``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetViolated, SizeLimit
from .instance import INFINITE, Instance
from .workload import RequestStream

STATION_LIMIT = 1023


def node_height(v):
    return (v + 1).bit_length() - 1


def _segment_costs(H, m, D):
    """``seg[a][b]``: cost of a vertical path between heights ``a <= b``."""
    seg = np.zeros((H + 1, H + 1))
    for a in range(H + 1):
        for b in range(a + 1, H + 1):
            seg[a, b] = math.fsum(D / m ** h for h in range(a, b))
    return seg


def tree_distance(a, b, seg):
    ha, hb = node_height(a), node_height(b)
    x, y = a, b
    while x != y:
        if node_height(x) >= node_height(y):
            x = (x - 1) // 2
        else:
            y = (y - 1) // 2
    hl = node_height(x)
    return seg[hl, ha] + seg[hl, hb]


def build_tree_instance(H, m, D, f, limit=STATION_LIMIT):
    """Instance over the height-``H`` tree; the Internet is priced out of every optimum."""
    if H < 1 or not m > 1 or not D > 0 or not f > 0:
        raise ValueError("H >= 1, m > 1, D > 0 and f > 0 required")
    n = 2 ** (H + 1) - 1
    if n > limit:
        raise SizeLimit(f"tree of height {H} has {n} nodes, limit is {limit}")
    seg = _segment_costs(H, m, D)
    ua = np.zeros((n, n + 1))
    for a in range(n):
        for b in range(a + 1, n):
            ua[a, b] = ua[b, a] = tree_distance(a, b, seg)
    internet = 2.0 * (ua[:, :n].max() + f)
    ua[:, n] = internet
    first_leaf = 2 ** H - 1
    fees = np.full((n, 1), INFINITE)
    fees[first_leaf:, 0] = f
    return Instance(
        num_stations=n,
        ua=ua,
        caching_cost=fees,
        content_sizes=[1.0],
        kind="tree",
        metadata={"H": H, "m": m, "D": D, "f": f},
    )


def phase_sizes(H, m):
    return [max(1, int(math.floor(m ** h + 0.5))) for h in range(H + 1)]


@dataclass(frozen=True)
class AdversaryRun:
    stream: RequestStream
    path: tuple  # z_0 .. z_H


def gen_adversary_stream(H, m, seed):
    """Phase ``h`` sends ``round(m**h)`` requests to ``z_h``; ``z_{h+1}`` is a uniform child of ``z_h``."""
    rng = np.random.default_rng(seed)
    path = [0]
    for _ in range(H):
        path.append(2 * path[-1] + 1 + int(rng.integers(2)))
    events = []
    for z, size in zip(path, phase_sizes(H, m)):
        events.extend([(z, 0)] * size)
    return AdversaryRun(RequestStream(events, seed=seed, policy="adversary"), tuple(path))


def offline_upper_bound(H, m, D, f):
    """Cost of caching at the final leaf, the bound any realized run's optimum respects."""
    return f + H * m * D / (m - 1)


def h_for_n(n):
    """Tree height affordable with ``n`` requests: ``floor(ln n / ln ln n)``."""
    if n < 16:
        raise ValueError("n >= 16 required")
    H = int(math.floor(math.log(n) / math.log(math.log(n))))
    if not H >= 2 or H ** (H + 1) / (H - 1) > n:
        raise BudgetViolated(f"H = {H} needs more than n = {n} requests")
    return H
