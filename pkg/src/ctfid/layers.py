"""Realizability and layer classification of counterfactual queries."""
from __future__ import annotations

from typing import Iterable

from .expr import (Conflict, CtfEvent, Fresh, PotentialResponse, Query,
                   ctf_ancestors, exclusion, exclusion_set, merge_events,
                   unnest)
from .graph import CausalDiagram

__all__ = ["realizable_check", "classify_layer", "LAYERS", "conflicting_ancestors"]

LAYERS = ("L1", "L2", "L2.25", "L2.5", "L3-not-L2.5")


def _flatten(G: CausalDiagram, events: Iterable[CtfEvent]) -> tuple:
    flat, sums = unnest(list(events), G, Fresh("n"))
    flat = exclusion_set(flat, G)
    try:
        flat, _ = merge_events(flat, sums)
    except Conflict:
        pass  # an impossible event is still an event of some regime set
    return flat


def conflicting_ancestors(G: CausalDiagram, events: Iterable[CtfEvent]) -> list:
    """Pairs of counterfactual ancestors of one variable under different regimes."""
    anc = ctf_ancestors(_flatten(G, events), G)
    seen: dict = {}
    out = []
    for r in anc:
        for other in seen.get(r.variable, []):
            out.append((other, r))
        seen.setdefault(r.variable, []).append(r)
    return out


def realizable_check(G: CausalDiagram, events: Iterable[CtfEvent]) -> bool:
    """True iff no variable appears among the ancestors under two regimes."""
    return not conflicting_ancestors(G, events)


def _events(query) -> list:
    if isinstance(query, Query):
        return list(query.all_events)
    return list(query)


def classify_layer(G: CausalDiagram, query) -> str:
    """Lowest layer whose definition the query's events satisfy.

    A conditional query is classified by the joint of its two parts.
    """
    flat = _flatten(G, _events(query))
    if all(not e.response.subscript for e in flat):
        return "L1"
    # one shared intervention: every response is V_x with x common to all
    shared: dict = {}
    ok = True
    for e in flat:
        for k, t in e.response.subscript:
            if shared.setdefault(k, t) != t:
                ok = False
    if ok:
        ok = all(e.var not in shared and e.response == exclusion(PotentialResponse.make(e.var, shared), G)
                 for e in flat)
    if ok:
        return "L2"
    if not realizable_check(G, flat):
        return "L3-not-L2.5"
    vals: dict = {}
    for r in ctf_ancestors(flat, G):
        for k, t in r.subscript:
            vals.setdefault(k, set()).add(t)
    if all(len(s) == 1 for s in vals.values()):
        return "L2.25"
    return "L2.5"
