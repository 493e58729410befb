"""Demand matrices and their files."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _io
from .errors import SchemaError

DEMANDS_FORMAT = "collabcache/demands"


@dataclass(frozen=True, eq=False)
class DemandProvenance:
    """How a Zipf demand matrix was drawn, enough to redraw it with other rankings.

    ``ranks[i, j]`` is the 1-based popularity rank of content ``j`` at station ``i``.
    """

    users: np.ndarray  # (K,) request volume per station
    zeta: float
    seed: Optional[int]
    ranks: np.ndarray  # (K, M)
    poisson: bool = False

    def to_dict(self):
        return {
            "users": [float(u) for u in self.users],
            "zeta": float(self.zeta),
            "seed": self.seed,
            "ranks": self.ranks.tolist(),
            "poisson": self.poisson,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            users=np.asarray(d["users"], dtype=float),
            zeta=float(d["zeta"]),
            seed=d.get("seed"),
            ranks=np.asarray(d["ranks"], dtype=np.int64),
            poisson=bool(d.get("poisson", False)),
        )


@dataclass(frozen=True, eq=False)
class DemandMatrix:
    """``gamma[i, j]`` requests for content ``j`` at station ``i``."""

    gamma: np.ndarray
    provenance: Optional[DemandProvenance] = None

    def __post_init__(self):
        g = np.array(self.gamma, dtype=np.int64)
        if g.ndim != 2:
            raise ValueError(f"gamma must be 2-D, got shape {g.shape}")
        if (g < 0).any():
            raise ValueError("demands must be nonnegative")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)

    @property
    def num_stations(self):
        return self.gamma.shape[0]

    @property
    def num_contents(self):
        return self.gamma.shape[1]

    def total(self):
        return int(self.gamma.sum())


def save_demands(demands, path):
    body = {
        "num_stations": demands.num_stations,
        "num_contents": demands.num_contents,
        "gamma": demands.gamma.tolist(),
    }
    if demands.provenance is not None:
        body["provenance"] = demands.provenance.to_dict()
    return _io.dump_document(path, DEMANDS_FORMAT, body)


def load_demands(path):
    doc = _io.load_document(path, DEMANDS_FORMAT)
    K = _io.require(doc, "num_stations")
    M = _io.require(doc, "num_contents")
    raw = _io.require(doc, "gamma")
    if not isinstance(raw, list) or len(raw) != K:
        raise SchemaError(f"expected {K} rows", field="gamma")
    for i, row in enumerate(raw):
        if not isinstance(row, list) or len(row) != M:
            raise SchemaError(f"expected {M} columns", field=f"gamma[{i}]")
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                raise SchemaError("expected a nonnegative integer", field=f"gamma[{i}][{j}]")
    prov = None
    if "provenance" in doc:
        try:
            prov = DemandProvenance.from_dict(doc["provenance"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad provenance block: {exc}", field="provenance") from exc
    return DemandMatrix(np.array(raw, dtype=np.int64).reshape(K, M), prov)
