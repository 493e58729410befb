"""Online potential-function caching, one independent state per content.

For a request ``v`` at station ``i`` the engine uses ``d(k, v) = ua[i, k]`` and
``d(W, v) = min_{k in W} ua[i, k]``.  Each station keeps a potential

    p(k) = sum over processed requests v of max(d(W, v) - d(k, v), 0)

and the content is cached at ``w = argmax_k p(k) - f_k`` as soon as that
difference becomes strictly positive.  Processed requests are stored as
per-station counts, which is lossless because every request arriving at the
same station contributes the same bracket term.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidContent, InvalidStation
from .instance import TOL


def within(a, b, tol=TOL):
    """``a <= b`` up to ``tol`` scaled by the magnitude of ``b`` (never below ``tol``)."""
    return a <= b + tol * max(1.0, abs(b))


class DecisionKind(str, enum.Enum):
    LOCAL_HIT = "LocalHit"
    FETCH = "Fetch"
    OPEN_AND_FETCH = "OpenAndFetch"


@dataclass(frozen=True)
class Decision:
    kind: DecisionKind
    station: int
    source: int
    opened: Optional[int]
    ua_cost_delta: float
    caching_cost_delta: float
    credit: Optional[float] = None  # undefined for local hits


@dataclass
class ContentCacheState:
    content_id: int
    open_caches: set
    request_counts: np.ndarray
    potentials: np.ndarray
    credits: list = field(default_factory=list)
    opened_cost: float = 0.0
    update_ops: int = 0
    recomputations: int = 0
    local_hits: int = 0

    @property
    def num_stations(self):
        return len(self.request_counts)

    @property
    def processed(self):
        """Number of requests in V (local hits excluded)."""
        return int(self.request_counts.sum())

    def copy(self):
        return ContentCacheState(
            content_id=self.content_id,
            open_caches=set(self.open_caches),
            request_counts=self.request_counts.copy(),
            potentials=self.potentials.copy(),
            credits=list(self.credits),
            opened_cost=self.opened_cost,
            update_ops=self.update_ops,
            recomputations=self.recomputations,
            local_hits=self.local_hits,
        )


def init_state(instance, content):
    if not 0 <= content < instance.num_contents:
        raise InvalidContent(f"content {content} out of range 0..{instance.num_contents - 1}")
    K = instance.num_stations
    return ContentCacheState(
        content_id=int(content),
        open_caches={K},
        request_counts=np.zeros(K, dtype=np.int64),
        potentials=np.zeros(K + 1),
    )


def _recomputed_potentials(instance, open_caches, request_counts):
    ua = instance.ua
    d_open = ua[:, sorted(open_caches)].min(axis=1)
    gains = np.maximum(d_open[:, None] - ua, 0.0)
    return request_counts.astype(float) @ gains


def process_request(state, instance, station):
    """Serve one request for ``state.content_id`` arriving at ``station``; mutates ``state``."""
    K = instance.num_stations
    if not 0 <= station < K:
        raise InvalidStation(f"station {station} out of range 0..{K - 1}")
    station = int(station)
    if station in state.open_caches:
        state.local_hits += 1
        return Decision(DecisionKind.LOCAL_HIT, station, station, None, 0.0, 0.0)

    row = instance.ua[station]
    f = instance.caching_cost[:, state.content_id]
    p = state.potentials
    open_sorted = sorted(state.open_caches)
    d_open = min(row[k] for k in open_sorted)

    p_before = p.copy()
    state.request_counts[station] += 1
    p += np.maximum(d_open - row, 0.0)
    state.update_ops += K + 1

    score = p[:K] - f  # INFINITE caching cost gives -inf and is never selected
    w = int(np.argmax(score))
    opened = None
    caching_delta = 0.0
    if score[w] > 0:
        opened = w
        caching_delta = float(f[w])
        earned = float(f[w] - p_before[w] + row[w])
        state.open_caches.add(w)
        open_sorted = sorted(state.open_caches)
        state.potentials = _recomputed_potentials(instance, state.open_caches, state.request_counts)
        state.recomputations += 1
        state.opened_cost += caching_delta
    else:
        earned = float(d_open)
    state.credits.append(earned)

    source = min(open_sorted, key=lambda k: (row[k], k))
    kind = DecisionKind.OPEN_AND_FETCH if opened is not None else DecisionKind.FETCH
    return Decision(kind, station, source, opened, float(row[source]), caching_delta, earned)


def credit(state_before, instance, station, decision):
    """Credit of a request given the state just before it was processed.

    ``f_w - p(w) + d(w, v)`` when the request opened ``w``, otherwise ``d(W, v)``.
    Local hits carry no credit and return ``None``.
    """
    if decision.kind is DecisionKind.LOCAL_HIT:
        return None
    row = instance.ua[station]
    if decision.opened is not None:
        w = decision.opened
        return float(instance.caching_cost[w, state_before.content_id] - state_before.potentials[w] + row[w])
    return float(min(row[k] for k in state_before.open_caches))


def credit_lower_envelope(state_before, instance, station):
    """``min{d(W, v), min_k f_k - p(k) + d(k, v)}`` over finite-cost stations."""
    K = instance.num_stations
    row = instance.ua[station]
    f = instance.caching_cost[:, state_before.content_id]
    d_open = min(row[k] for k in state_before.open_caches)
    alt = f - state_before.potentials[:K] + row[:K]
    alt = alt[np.isfinite(f)]
    return float(min(d_open, alt.min())) if alt.size else float(d_open)


@dataclass
class ProbeReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return self.ok


def probe_invariants(state, instance, tol=TOL):
    """Check the potential invariants and the caching-cost/credit bound; never raises."""
    report = ProbeReport()
    add = report.violations.append
    K = instance.num_stations
    p = state.potentials
    f = instance.caching_cost[:, state.content_id]

    for k in range(K):
        if math.isfinite(f[k]) and not within(p[k], f[k], tol):
            add(f"potential-bound: p({k}) = {p[k]!r} > f = {f[k]!r}")
    if p[K] != 0.0:
        add(f"internet-potential: p({K}) = {p[K]!r} != 0")
    for k in np.flatnonzero(p < 0):
        add(f"potential-negative: p({k}) = {p[k]!r}")
    if K not in state.open_caches:
        add("internet-not-open")

    fresh = _recomputed_potentials(instance, state.open_caches, state.request_counts)
    for k in range(K + 1):
        if abs(p[k] - fresh[k]) > tol * max(1.0, abs(fresh[k])):
            add(f"recompute-mismatch: p({k}) = {p[k]!r}, recomputed {fresh[k]!r}")

    spent = sum(float(f[w]) for w in state.open_caches if w != K)
    earned = math.fsum(state.credits)
    if not within(spent, earned, tol):
        add(f"credit-bound: caching spend {spent!r} > total credit {earned!r}")
    return report


@dataclass
class CostLedger:
    """Unscaled per-content sums of decision deltas; ``total`` applies content sizes."""

    content_sizes: np.ndarray
    per_content_ua: np.ndarray = None
    per_content_caching: np.ndarray = None

    def __post_init__(self):
        M = len(self.content_sizes)
        if self.per_content_ua is None:
            self.per_content_ua = np.zeros(M)
        if self.per_content_caching is None:
            self.per_content_caching = np.zeros(M)

    def record(self, content, decision):
        self.per_content_ua[content] += decision.ua_cost_delta
        self.per_content_caching[content] += decision.caching_cost_delta

    def content_total(self, content):
        return float(self.content_sizes[content] * (self.per_content_ua[content] + self.per_content_caching[content]))

    def content_totals(self):
        return np.asarray(self.content_sizes) * (self.per_content_ua + self.per_content_caching)

    def total(self):
        return float(sum(self.content_total(j) for j in range(len(self.content_sizes))))

    @classmethod
    def merge(cls, content_sizes, parts):
        """Combine ledgers that each own a disjoint set of contents."""
        out = cls(np.asarray(content_sizes))
        for part in parts:
            out.per_content_ua += part.per_content_ua
            out.per_content_caching += part.per_content_caching
        return out


@dataclass(frozen=True)
class TraceRow:
    event_index: int
    content: int
    decision: Decision


TRACE_HEADER = ["event_index", "content", "station", "kind", "source", "opened", "ua_delta", "caching_delta"]


def write_trace_csv(trace, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for row in trace:
            d = row.decision
            w.writerow([
                row.event_index, row.content, d.station, d.kind.value, d.source,
                "" if d.opened is None else d.opened, repr(d.ua_cost_delta), repr(d.caching_cost_delta),
            ])


def replay_ledger(trace, content_sizes):
    ledger = CostLedger(np.asarray(content_sizes))
    for row in trace:
        ledger.record(row.content, row.decision)
    return ledger


@dataclass
class RunResult:
    ledger: CostLedger
    trace: list
    states: dict  # content -> ContentCacheState
    probe_failures: list = field(default_factory=list)  # (event_index, ProbeReport)

    def non_hit_counts(self, num_contents):
        return np.array([self.states[j].processed if j in self.states else 0 for j in range(num_contents)])


def _events(stream):
    return stream.events if hasattr(stream, "events") else stream


def run_stream(instance, stream, probe=False):
    """Process a request stream in order.

    Each content is handled by its own state; with ``probe=True`` the
    invariants are checked after every request and failures collected.
    """
    M = instance.num_contents
    states = {}
    ledger = CostLedger(np.asarray(instance.content_sizes))
    trace = []
    failures = []
    for idx, (station, content) in enumerate(_events(stream)):
        station, content = int(station), int(content)
        try:
            if not 0 <= content < M:
                raise InvalidContent(f"content {content} out of range 0..{M - 1}")
            state = states.get(content)
            if state is None:
                state = states[content] = init_state(instance, content)
            decision = process_request(state, instance, station)
        except (InvalidStation, InvalidContent) as exc:
            err = type(exc)(f"event {idx}: {exc}")
            err.event_index = idx
            raise err from exc
        ledger.record(content, decision)
        trace.append(TraceRow(idx, content, decision))
        if probe:
            report = probe_invariants(state, instance)
            if not report.ok:
                failures.append((idx, report))
    for j in range(M):
        if j not in states:
            states[j] = init_state(instance, j)
    return RunResult(ledger, trace, states, failures)
