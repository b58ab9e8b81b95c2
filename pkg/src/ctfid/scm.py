"""Discrete structural causal models and the brute-force Layer-3 oracle.

Everything is vectorized over the enumerated exogenous space: a "world" is a
dict mapping each endogenous variable to an integer array with one entry per
exogenous state, and probabilities are weighted sums over those entries.
"""
from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .expr import CtfEvent, PotentialResponse, Sym, event_syms, render_response
from .graph import CausalDiagram
from .regime import CtfRand, Rand, RegimeSpec, Template, regime_regex

__all__ = [
    "DiscreteSCM", "Mechanism", "OracleError", "CapExceeded", "RegimeTable",
    "enumeration_cap", "l3_valuation", "l3_valuation_mc", "event_table",
    "regime_distribution", "sample_regime", "random_scm",
    "scm_to_json", "scm_from_json",
]

DEFAULT_CAP = 2 ** 24


class OracleError(ValueError):
    pass


class CapExceeded(OracleError):
    pass


def enumeration_cap() -> int:
    raw = os.environ.get("CTFID_CAP")
    return int(raw) if raw else DEFAULT_CAP


@dataclass
class Mechanism:
    """Lookup table for one endogenous variable.

    ``table`` is flat and row-major over (exogenous parents, endogenous
    parents), each group in the listed order, last input fastest.
    """
    exo_parents: tuple
    endo_parents: tuple
    table: np.ndarray


@dataclass
class DiscreteSCM:
    endogenous: list            # [(name, card)]
    exogenous: list             # [(name, card, probs)]
    mechanisms: dict            # name -> Mechanism
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.endogenous = [(v, int(k)) for v, k in self.endogenous]
        self.exogenous = [(u, int(k), np.asarray(p, dtype=float)) for u, k, p in self.exogenous]
        self.cards = dict(self.endogenous)
        self.exo_cards = {u: k for u, k, _ in self.exogenous}
        for u, k, p in self.exogenous:
            if p.shape != (k,) or (p < 0).any() or abs(p.sum() - 1) > 1e-12:
                raise OracleError(f"exogenous {u} probabilities are not a distribution")
        for v, _ in self.endogenous:
            m = self.mechanisms.get(v)
            if m is None:
                raise OracleError(f"no mechanism for {v}")
            m.table = np.asarray(m.table, dtype=np.int16)
            size = 1
            for u in m.exo_parents:
                size *= self.exo_cards[u]
            for p in m.endo_parents:
                size *= self.cards[p]
            if m.table.shape != (size,):
                raise OracleError(f"mechanism table of {v} has {m.table.size} rows, expected {size}")
            if m.table.min() < 0 or m.table.max() >= self.cards[v]:
                raise OracleError(f"mechanism of {v} leaves its domain")
        self.diagram = self.induced_diagram()
        self.order = self.diagram.topological_order()

    # -- structure -----------------------------------------------------
    def induced_diagram(self) -> CausalDiagram:
        names = [v for v, _ in self.endogenous]
        directed = [(p, v) for v in names for p in self.mechanisms[v].endo_parents]
        feeds: dict = {}
        for v in names:
            for u in self.mechanisms[v].exo_parents:
                feeds.setdefault(u, []).append(v)
        bidirected = set()
        for vs in feeds.values():
            for a, b in itertools.combinations(vs, 2):
                bidirected.add((a, b))
        return CausalDiagram(names, directed, sorted(bidirected), dict(self.endogenous))

    @property
    def n_states(self) -> int:
        return math.prod(k for _, k, _ in self.exogenous)

    # -- unit enumeration ------------------------------------------------
    def units(self, approx: int | None = None, seed: int = 0):
        """Exogenous states as ``(dict name -> int array, weights)``.

        With ``approx`` set, ``approx`` iid draws with equal weights replace
        full enumeration.
        """
        key = ("units", approx, seed if approx else None)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if approx:
            rng = np.random.default_rng(seed)
            U = {u: rng.choice(k, size=approx, p=p).astype(np.int16) for u, k, p in self.exogenous}
            w = np.full(approx, 1.0 / approx)
        else:
            n = self.n_states
            if n > enumeration_cap():
                raise CapExceeded(f"exogenous space has {n} states, cap is {enumeration_cap()}; "
                                  "raise CTFID_CAP or use approximation")
            cards = [k for _, k, _ in self.exogenous]
            grids = np.indices(cards, dtype=np.int16).reshape(len(cards), -1) if cards else np.zeros((0, 1), np.int16)
            U = {u: grids[i] for i, (u, _, _) in enumerate(self.exogenous)}
            w = np.ones(grids.shape[1])
            for i, (_, _, p) in enumerate(self.exogenous):
                w = w * p[grids[i]]
        self._cache[key] = (U, w)
        return U, w

    def evaluate(self, U: Mapping, do: Mapping | None = None, ei: Mapping | None = None) -> dict:
        """Solve every endogenous variable on the units in ``U``.

        ``do`` maps variables to ints or per-unit arrays; ``ei`` maps
        (source, child) edges to the value the child perceives.
        """
        do = do or {}
        ei = ei or {}
        n = len(next(iter(U.values()))) if U else 1
        vals: dict = {}
        for v in self.order:
            if v in do:
                vals[v] = np.broadcast_to(np.asarray(do[v], dtype=np.int16), (n,))
                continue
            m = self.mechanisms[v]
            idx = np.zeros(n, dtype=np.int64)
            for u in m.exo_parents:
                idx = idx * self.exo_cards[u] + U[u]
            for p in m.endo_parents:
                x = ei[(p, v)] if (p, v) in ei else vals[p]
                idx = idx * self.cards[p] + np.asarray(x, dtype=np.int64)
            vals[v] = m.table[idx]
        return vals

    def eval_unit(self, u: Mapping, ei: Mapping | None = None, do: Mapping | None = None) -> dict:
        U = {k: np.array([int(x)], dtype=np.int16) for k, x in u.items()}
        out = self.evaluate(U, do, ei)
        return {v: int(a[0]) for v, a in out.items()}

    def response(self, r: PotentialResponse, U: Mapping, memo: dict) -> np.ndarray:
        """Per-unit values of a (possibly nested) potential response."""
        do = {}
        key = []
        for k, t in r.subscript:
            if isinstance(t, PotentialResponse):
                do[k] = self.response(t, U, memo)
                key.append((k, ("r", t)))
            elif isinstance(t, Sym):
                raise OracleError(f"symbolic subscript {t} in oracle query")
            else:
                if not 0 <= int(t) < self.cards[k]:
                    raise OracleError(f"value {t} out of domain for {k}")
                do[k] = int(t)
                key.append((k, int(t)))
        key = tuple(key)
        world = memo.get(key)
        if world is None:
            world = self.evaluate(U, do)
            memo[key] = world
        return world[r.variable]


def _mask(M: DiscreteSCM, events: Iterable[CtfEvent], U, memo) -> np.ndarray | None:
    mask = None
    for e in events:
        if isinstance(e.value, Sym):
            raise OracleError(f"symbolic value {e.value} in oracle query")
        hit = M.response(e.response, U, memo) == int(e.value)
        mask = hit if mask is None else mask & hit
    return mask


def l3_valuation(M: DiscreteSCM, events: Iterable[CtfEvent]) -> float:
    """Exact probability of a counterfactual conjunction by enumeration."""
    U, w = M.units()
    mask = _mask(M, list(events), U, {})
    if mask is None:
        return 1.0
    return float(w[mask].sum())


def l3_valuation_mc(M: DiscreteSCM, events: Iterable[CtfEvent], n: int, seed: int = 0):
    """Monte Carlo estimate ``(p, standard error)`` from ``n`` sampled units."""
    U, w = M.units(approx=n, seed=seed)
    mask = _mask(M, list(events), U, {})
    p = 1.0 if mask is None else float(w[mask].sum())
    return p, math.sqrt(max(p * (1 - p), 0.0) / n)


def event_table(M: DiscreteSCM, events: Sequence[CtfEvent], syms: Sequence[Sym],
                approx: int | None = None, seed: int = 0) -> np.ndarray:
    """Probability of ``events`` for every assignment of ``syms`` (one axis each)."""
    events = list(events)
    syms = list(syms)
    missing = [s for s in event_syms(events) if s not in syms]
    if missing:
        raise OracleError(f"symbols {missing} have no axis")
    U, w = M.units(approx=approx, seed=seed)
    in_sub = []
    for e in events:
        for s in event_syms([CtfEvent(e.response, 0)]):
            if s not in in_sub:
                in_sub.append(s)
    pure = [s for s in syms if s not in in_sub]
    shape = [s.card for s in syms]
    out = np.zeros(shape)
    sub_idx = [syms.index(s) for s in in_sub]
    for combo in itertools.product(*(range(s.card) for s in in_sub)):
        env = dict(zip(in_sub, combo))
        memo: dict = {}
        keep = np.ones(len(w), dtype=bool)
        pure_val: dict = {}
        for e in events:
            r = _bind_response(e.response, env)
            vals = M.response(r, U, memo)
            if isinstance(e.value, Sym) and e.value not in env:
                if e.value in pure_val:
                    keep &= vals == pure_val[e.value]
                else:
                    pure_val[e.value] = vals
            else:
                keep &= vals == int(env.get(e.value, e.value))
        used = [s for s in pure if s in pure_val]
        flat = np.zeros(len(w), dtype=np.int64)
        for s in used:
            flat = flat * s.card + pure_val[s]
        size = math.prod(s.card for s in used)
        block = np.bincount(flat[keep], weights=w[keep], minlength=size)
        block = block.reshape([s.card for s in used])
        # symbols the events never mention leave the probability unchanged
        for ax, s in enumerate(pure):
            if s not in pure_val:
                block = np.expand_dims(block, ax)
        block = np.broadcast_to(block, [s.card for s in pure])
        index = [slice(None)] * len(syms)
        for i, c in zip(sub_idx, combo):
            index[i] = c
        out[tuple(index)] = block
    return out


def _bind_response(r: PotentialResponse, env: Mapping) -> PotentialResponse:
    sub = []
    for k, t in r.subscript:
        if isinstance(t, PotentialResponse):
            t = _bind_response(t, env)
        elif isinstance(t, Sym):
            t = int(env[t])
        sub.append((k, t))
    return PotentialResponse(r.variable, tuple(sub))


# -- regimes -----------------------------------------------------------

@dataclass
class RegimeTable:
    """Numeric table of one regime, one axis per ``template.axes`` symbol."""
    template: Template
    array: np.ndarray

    @property
    def id(self) -> str:
        return self.template.id


def _regime_interventions(template: Template, assign: Mapping):
    do, ei = {}, {}
    for a, s in template.assigned:
        val = assign[s]
        if isinstance(a, Rand):
            do[a.var] = val
        elif isinstance(a, CtfRand):
            for c in a.targets:
                ei.setdefault((a.var, c), val)
    return do, ei


def regime_distribution(M: DiscreteSCM, spec: RegimeSpec | None = None,
                        G: CausalDiagram | None = None) -> RegimeTable:
    """Simulate the regime for every combination of assigned values."""
    G = G or M.diagram
    template = regime_regex(G, spec)
    U, w = M.units()
    assigned = [s for _, s in template.assigned]
    naturals = [template.natural[v] for v in G.topological_order() if v in template.natural]
    out = np.zeros([s.card for s in template.axes])
    size = math.prod(s.card for s in naturals)
    for combo in itertools.product(*(range(s.card) for s in assigned)):
        do, ei = _regime_interventions(template, dict(zip(assigned, combo)))
        vals = M.evaluate(U, do, ei)
        flat = np.zeros(len(w), dtype=np.int64)
        for s in naturals:
            flat = flat * s.card + vals[s.var]
        hist = np.bincount(flat, weights=w, minlength=size)
        out[combo] = hist.reshape([s.card for s in naturals])
    return RegimeTable(template, out)


def sample_regime(M: DiscreteSCM, spec: RegimeSpec | None, n: int, seed: int = 0,
                  G: CausalDiagram | None = None):
    """Draw ``n`` units under the regime, randomizing assigned values uniformly.

    Returns ``(header, rows)``; ``rows`` is an ``(n, len(header))`` int array.
    """
    if n < 1:
        raise OracleError("sample size must be at least 1")
    G = G or M.diagram
    template = regime_regex(G, spec)
    rng = np.random.default_rng(seed)
    U = {u: rng.choice(k, size=n, p=p).astype(np.int16) for u, k, p in M.exogenous}
    assigned = [s for _, s in template.assigned]
    cols, header = [], []
    picks = {s: rng.integers(0, s.card, size=n).astype(np.int16) for s in assigned}
    do, ei = _regime_interventions(template, picks)
    vals = M.evaluate(U, do, ei)
    for a, s in template.assigned:
        header.append(f"{s.name}:{a.label}")
        cols.append(picks[s])
    for e in template.events:
        header.append(render_response(e.response))
        cols.append(vals[e.var])
    return header, np.stack(cols, axis=1).astype(np.int64)


# -- random models -----------------------------------------------------

def random_scm(G: CausalDiagram, seed: int = 0, exo_card: int = 2,
               endo_card: int | None = None, private_extra: int = 1) -> DiscreteSCM:
    """A random positive SCM inducing exactly ``G``.

    Each variable has a private exogenous of size ``card + private_extra``
    mapped onto its domain surjectively in every context, so every value has
    positive probability given any parents.  Each bidirected edge gets one
    shared exogenous of size ``exo_card``.
    """
    if exo_card < 2 or (endo_card is not None and endo_card < 2):
        raise OracleError("cardinalities must be at least 2")
    rng = np.random.default_rng(seed)
    cards = {v: (endo_card or G.card(v)) for v in G.variables}

    def weights(k):
        p = rng.dirichlet(np.ones(k))
        p = np.maximum(p, 1e-3)
        return p / p.sum()

    exo = []
    shared: dict = {v: [] for v in G.variables}
    for a, b in sorted(G.bidirected, key=lambda e: (G.index(e[0]), G.index(e[1]))):
        name = f"U_{a}_{b}"
        exo.append((name, exo_card, weights(exo_card)))
        shared[a].append(name)
        shared[b].append(name)
    mech = {}
    for v in G.variables:
        k = cards[v]
        priv = f"U_{v}"
        pk = k + private_extra
        exo.append((priv, pk, weights(pk)))
        exo_pa = tuple(shared[v]) + (priv,)
        endo_pa = G.parents(v)
        contexts = math.prod([exo_card] * len(shared[v]) + [cards[p] for p in endo_pa])
        rows = []
        for _ in range(contexts):
            f = np.concatenate([rng.permutation(k), rng.integers(0, k, size=pk - k)])
            rows.append(f)
        # row-major: shared exogenous, then private, then endogenous parents
        table = np.zeros(contexts * pk, dtype=np.int16)
        n_sh = exo_card ** len(shared[v])
        n_en = math.prod(cards[p] for p in endo_pa)
        for s in range(n_sh):
            for q in range(pk):
                for e in range(n_en):
                    table[(s * pk + q) * n_en + e] = rows[s * n_en + e][q]
        mech[v] = Mechanism(exo_pa, endo_pa, table)
    return DiscreteSCM([(v, cards[v]) for v in G.variables], exo, mech)


# -- JSON --------------------------------------------------------------

def scm_to_json(M: DiscreteSCM) -> str:
    doc = {
        "endogenous": [
            {"name": v, "card": k,
             "exo_parents": list(M.mechanisms[v].exo_parents),
             "endo_parents": list(M.mechanisms[v].endo_parents),
             "table": [int(x) for x in M.mechanisms[v].table]}
            for v, k in M.endogenous
        ],
        "exogenous": [{"name": u, "card": k, "probs": [float(x) for x in p]}
                      for u, k, p in M.exogenous],
        "table_order": "row-major over exo_parents then endo_parents, last fastest",
    }
    return json.dumps(doc, indent=1)


def scm_from_json(text: str) -> DiscreteSCM:
    doc = json.loads(text)
    try:
        endo = [(d["name"], d["card"]) for d in doc["endogenous"]]
        exo = [(d["name"], d["card"], d["probs"]) for d in doc["exogenous"]]
        mech = {d["name"]: Mechanism(tuple(d["exo_parents"]), tuple(d["endo_parents"]),
                                     np.asarray(d["table"])) for d in doc["endogenous"]}
    except (KeyError, TypeError) as exc:
        raise OracleError(f"malformed SCM file: {exc}") from exc
    return DiscreteSCM(endo, exo, mech)
