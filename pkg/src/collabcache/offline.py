"""Exact offline solutions and plan checking.

With unlimited caches the placement problem splits into one subproblem per
content.  Given the set ``S`` of stations caching content ``j``, the best
assignment sends every demanded station to its UA-nearest node in
``S + {Internet}``, so the optimum is found by enumerating ``S``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .demand import DemandMatrix
from .errors import EnumerationLimitExceeded, NoCover, UncoveredElement
from .instance import INFINITE, TOL, Instance

ENUMERATION_LIMIT = 20
_CHUNK = 1 << 12


@dataclass
class OfflinePlan:
    """Per-content cached station sets and a source for every demanded (station, content)."""

    cached: list  # content -> sorted tuple of stations
    assignment: dict  # (station, content) -> source node
    content_costs: Optional[np.ndarray] = None  # unscaled by content size

    @property
    def num_contents(self):
        return len(self.cached)


def nearest_source(row, cached, internet):
    """UA-nearest node among ``cached`` and the Internet; ties go to the lowest index."""
    best = internet
    best_cost = row[internet]
    for k in cached:
        if row[k] < best_cost or (row[k] == best_cost and k < best):
            best, best_cost = k, row[k]
    return best


def _content_cost(instance, j, cached, assignment, gamma_j):
    """Unscaled objective of content ``j``: caching fees first, then UA in station order."""
    total = 0.0
    for k in cached:
        total += instance.caching_cost[k, j]
    for i in np.flatnonzero(gamma_j):
        src = assignment.get((int(i), j))
        if src is not None:
            total += gamma_j[i] * instance.ua[i, src]
    return float(total)


def prune_dominated(instance, j, candidates, demanded):
    """Drop candidates another candidate matches or beats on fee and on every demanded UA.

    Exact: any plan using a dropped station can swap to its dominator at no
    extra cost.  Among equivalent stations the lowest index survives.
    """
    f = instance.caching_cost[:, j]
    T = instance.ua[np.ix_(demanded, candidates)] if len(demanded) else np.zeros((0, len(candidates)))
    keep = []
    for a, k in enumerate(candidates):
        dominated = False
        for b, kk in enumerate(candidates):
            if b == a or f[kk] > f[k] or (T[:, b] > T[:, a]).any():
                continue
            if kk < k or f[kk] < f[k] or (T[:, b] < T[:, a]).any():
                dominated = True
                break
        if not dominated:
            keep.append(k)
    return keep


def best_cache_set(instance, j, gamma_j, limit=ENUMERATION_LIMIT, prune="auto"):
    """Minimum-cost cache set for content ``j`` and its unscaled cost.

    Enumerates every subset of finite-fee stations (lexicographically smallest
    among ties).  Dominated stations are pruned first when there are more than
    ``limit`` candidates (``prune="auto"``) or always (``"always"``); pruning
    keeps the optimum cost but may pick a different tied subset.
    EnumerationLimitExceeded if the candidates still exceed ``limit``.
    """
    K = instance.num_stations
    gamma_j = np.asarray(gamma_j)
    demanded = np.flatnonzero(gamma_j > 0)
    if demanded.size == 0:
        return (), 0.0
    f = instance.caching_cost[:, j]
    candidates = [k for k in range(K) if math.isfinite(f[k])]
    if prune == "always" or (prune == "auto" and len(candidates) > limit):
        candidates = prune_dominated(instance, j, candidates, demanded)
    L = len(candidates)
    if L > limit:
        raise EnumerationLimitExceeded(f"content {j}: {L} candidate stations exceed the limit of {limit}")

    g = gamma_j[demanded].astype(float)
    T = instance.ua[np.ix_(demanded, candidates)]  # (D, L)
    inet = instance.ua[demanded, K]  # (D,)
    fc = f[candidates]
    shifts = np.arange(L, dtype=np.int64)

    best = math.inf
    ties = []  # (cost, mask)
    for start in range(0, 1 << L, _CHUNK):
        masks = np.arange(start, min(start + _CHUNK, 1 << L), dtype=np.int64)
        bits = ((masks[:, None] >> shifts) & 1).astype(bool)  # (C, L)
        fee = bits.astype(float) @ fc if L else np.zeros(len(masks))
        reach = np.where(bits[:, None, :], T[None, :, :], np.inf).min(axis=2) if L else np.full((len(masks), len(g)), np.inf)
        ua = np.minimum(reach, inet[None, :]) @ g
        cost = fee + ua
        lo = float(cost.min())
        if lo > best + TOL * max(1.0, abs(best)):
            continue
        best = min(best, lo)
        cut = best + TOL * max(1.0, abs(best))
        ties = [t for t in ties if t[0] <= cut]
        for m in np.flatnonzero(cost <= cut):
            ties.append((float(cost[m]), int(masks[m])))

    cut = best + TOL * max(1.0, abs(best))
    subsets = [tuple(candidates[b] for b in range(L) if (mask >> b) & 1) for c, mask in ties if c <= cut]
    chosen = min(subsets)
    assignment = {(int(i), j): nearest_source(instance.ua[i], chosen, K) for i in demanded}
    return chosen, _content_cost(instance, j, chosen, assignment, gamma_j)


def offline_collaborative_exact(instance, demands, limit=ENUMERATION_LIMIT, prune="auto"):
    """Global optimum of the collaborative placement problem.

    Returns ``(plan, total)`` where ``total`` is scaled by content sizes.
    """
    gamma = demands.gamma
    cached = []
    assignment = {}
    costs = np.zeros(instance.num_contents)
    for j in range(instance.num_contents):
        chosen, c = best_cache_set(instance, j, gamma[:, j], limit, prune)
        cached.append(chosen)
        for i in np.flatnonzero(gamma[:, j]):
            assignment[(int(i), j)] = nearest_source(instance.ua[i], chosen, instance.internet)
        costs[j] = c
    plan = OfflinePlan(cached, assignment, costs)
    return plan, _scaled_total(instance, costs)


def _scaled_total(instance, costs):
    total = 0.0
    for j, c in enumerate(costs):
        total += instance.content_sizes[j] * c
    return float(total)


def offline_noncollaborative(instance, demands):
    """Each station either caches locally or fetches from the Internet; ties cache."""
    K = instance.num_stations
    gamma = demands.gamma
    cached = []
    assignment = {}
    costs = np.zeros(instance.num_contents)
    for j in range(instance.num_contents):
        here = []
        for i in np.flatnonzero(gamma[:, j]):
            i = int(i)
            fee = instance.caching_cost[i, j]
            fetch = gamma[i, j] * instance.ua[i, K]
            if math.isfinite(fee) and fee <= fetch:
                here.append(i)
                assignment[(i, j)] = i
            else:
                assignment[(i, j)] = K
        cached.append(tuple(here))
        costs[j] = _content_cost(instance, j, cached[j], assignment, gamma[:, j])
    plan = OfflinePlan(cached, assignment, costs)
    return plan, _scaled_total(instance, costs)


def internet_only_cost(instance, demands):
    K = instance.num_stations
    per = (demands.gamma * instance.ua[:, K:K + 1]).sum(axis=0)
    return _scaled_total(instance, per)


def reassign(instance, plan, demands, collaborative=True):
    """Keep the plan's cache sets and give every demanded pair its cheapest allowed source.

    Collaborative plans may use any cached station; non-collaborative plans only
    the local cache or the Internet.
    """
    K = instance.num_stations
    assignment = {}
    for j, cached in enumerate(plan.cached):
        for i in np.flatnonzero(demands.gamma[:, j]):
            i = int(i)
            if collaborative:
                assignment[(i, j)] = nearest_source(instance.ua[i], cached, K)
            else:
                assignment[(i, j)] = i if i in cached else K
    return OfflinePlan(list(plan.cached), assignment)


@dataclass
class FeasibilityReport:
    violations: list = field(default_factory=list)

    @property
    def feasible(self):
        return not self.violations

    def __bool__(self):
        return self.feasible


def verify_plan(instance, demands, plan):
    """Objective value of ``plan`` and every constraint it breaks; never raises."""
    report = FeasibilityReport()
    add = report.violations.append
    K = instance.num_stations
    gamma = demands.gamma
    M = instance.num_contents
    if len(plan.cached) != M:
        add(f"plan covers {len(plan.cached)} contents, instance has {M}")
    costs = np.zeros(M)
    for j in range(M):
        cached = tuple(plan.cached[j]) if j < len(plan.cached) else ()
        for k in cached:
            if not 0 <= k < K:
                add(f"cached station {k} out of range for content {j}")
            elif not math.isfinite(instance.caching_cost[k, j]):
                add(f"infinite-caching-cost: content {j} cached at station {k}")
        usable = set(cached) | {K}
        for i in range(K):
            src = plan.assignment.get((i, j))
            if src is not None and src not in usable:
                add(f"constraint-1: (i={i}, j={j}, k={src}) serves from a node not caching the content")
            if gamma[i, j] > 0 and src is None:
                add(f"constraint-2: (i={i}, j={j}) has demand {gamma[i, j]} but no source")
        valid = tuple(k for k in cached if 0 <= k < K)
        costs[j] = _content_cost(instance, j, valid, plan.assignment, gamma[:, j])
    return _scaled_total(instance, costs), report


PLAN_HEADER = ["content", "cached_set", "station", "source"]


def write_plan_csv(plan, path):
    """One row per assigned (station, content); contents without demand get one blank row."""
    by_content = {}
    for (i, j), src in plan.assignment.items():
        by_content.setdefault(j, []).append((i, src))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLAN_HEADER)
        for j, cached in enumerate(plan.cached):
            label = ";".join(str(k) for k in cached)
            rows = sorted(by_content.get(j, []))
            if not rows:
                w.writerow([j, label, "", ""])
            for i, src in rows:
                w.writerow([j, label, i, src])


def _check_cover(num_elements, subsets):
    covered = set()
    for b in subsets:
        covered |= set(b)
    missing = sorted(set(range(num_elements)) - covered)
    return missing


def set_cover_to_instance(num_elements, subsets, costs, miss_cost="max"):
    """Encode a weighted set-cover problem as a one-content caching instance.

    Stations ``0..N-1`` are the elements (demand 1, never cacheable) and
    stations ``N..N+L-1`` the subsets (fee ``a_k``, no demand).  An element
    reaches a subset containing it at zero UA.  Reaching a subset that does not
    contain it costs ``2 * max(a)`` with ``miss_cost="max"``; ``"per-subset"``
    uses ``2 * a_k`` of the serving subset instead, which can make a partial
    cover cheaper than any full cover when subset costs differ.  All other
    station pairs and the Internet cost ``4 * sum(a)``.
    """
    subsets = [frozenset(int(u) for u in b) for b in subsets]
    costs = [float(a) for a in costs]
    if len(subsets) != len(costs):
        raise ValueError("one cost per subset required")
    if any(not b for b in subsets):
        raise ValueError("subsets must be nonempty")
    if any(not a > 0 for a in costs):
        raise ValueError("subset costs must be positive")
    if any(u < 0 or u >= num_elements for b in subsets for u in b):
        raise ValueError("subset element out of range")
    missing = _check_cover(num_elements, subsets)
    if missing:
        raise UncoveredElement(f"elements {missing} are not in any subset")
    if miss_cost not in ("max", "per-subset"):
        raise ValueError(f"unknown miss_cost {miss_cost!r}")

    N, L = num_elements, len(subsets)
    K = N + L
    far = 4.0 * sum(costs)
    ua = np.full((K, K + 1), far)
    np.fill_diagonal(ua, 0.0)
    for k, (b, a) in enumerate(zip(subsets, costs)):
        miss = 2.0 * max(costs) if miss_cost == "max" else 2.0 * a
        for u in range(N):
            ua[u, N + k] = ua[N + k, u] = 0.0 if u in b else miss
    f = np.full((K, 1), INFINITE)
    f[N:, 0] = costs
    gamma = np.zeros((K, 1), dtype=np.int64)
    gamma[:N, 0] = 1
    inst = Instance(
        num_stations=K,
        ua=ua,
        caching_cost=f,
        content_sizes=[1.0],
        kind="reduction",
        metadata={"elements": N, "subsets": L, "miss_cost": miss_cost},
    )
    return inst, DemandMatrix(gamma)


def set_cover_exact(num_elements, subsets, costs, limit=ENUMERATION_LIMIT):
    """Minimum total cost of a sub-collection covering ``0..num_elements-1``."""
    L = len(subsets)
    if L > limit:
        raise EnumerationLimitExceeded(f"{L} subsets exceed the limit of {limit}")
    if num_elements == 0:
        return 0.0
    if _check_cover(num_elements, subsets):
        raise NoCover("the subsets do not cover the universe")
    dtype = np.int64 if num_elements < 63 else object
    union = np.zeros(1, dtype=dtype)
    total = np.zeros(1)
    for b, a in zip(subsets, costs):
        bm = sum(1 << int(u) for u in set(b))
        union = np.concatenate([union, union | bm])
        total = np.concatenate([total, total + float(a)])
    full = (1 << num_elements) - 1
    return float(total[union == full].min())
