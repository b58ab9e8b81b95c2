"""Check identified estimands against the enumeration oracle."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .engine import IdResult
from .estimand import evaluate
from .expr import Query
from .graph import CausalDiagram
from .regime import RegimeSpec
from .scm import DiscreteSCM, l3_valuation, random_scm, regime_distribution

__all__ = ["Check", "oracle_value", "regime_data", "verify_identification"]


@dataclass(frozen=True)
class Check:
    seed: int
    estimate: float
    truth: float

    @property
    def error(self) -> float:
        return abs(self.estimate - self.truth)


def oracle_value(M: DiscreteSCM, query: Query) -> float:
    if query.given is None:
        return l3_valuation(M, query.joint.events)
    return l3_valuation(M, query.all_events) / l3_valuation(M, query.given.events)


def regime_data(M: DiscreteSCM, regimes: Sequence[RegimeSpec], G: CausalDiagram) -> dict:
    out = {}
    for spec in regimes:
        t = regime_distribution(M, spec, G)
        out[t.id] = t
    return out


def verify_identification(G: CausalDiagram, query: Query, regimes: Sequence[RegimeSpec],
                          result: IdResult, n: int = 20, seed: int = 0, **scm_kw) -> list:
    """Evaluate ``result`` on ``n`` random SCMs inducing ``G`` (seeds ``seed..seed+n-1``)."""
    if not result.identified:
        raise ValueError("nothing to verify: the query was not identified")
    out = []
    for s in range(seed, seed + n):
        M = random_scm(G, s, **scm_kw)
        est = float(evaluate(result.estimand, regime_data(M, regimes, G)))
        out.append(Check(s, est, oracle_value(M, query)))
    return out
