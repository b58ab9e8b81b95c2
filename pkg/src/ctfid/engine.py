"""Counterfactual identification from a collection of realizable input regimes.

The engine is symbolic.  Query constants become :class:`Sym` objects of kind
``"q"`` (one per distinct variable/value pair) and every summation index is
a fresh symbol, so equality of values is decided by symbol identity.  Only
at the end are query symbols replaced by their integers.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .estimand import (ONE, ZERO, Estimand, EstimandError, InputRef, free_syms,
                       make_product, make_quotient, make_sum, render,
                       substitute, to_json)
from .expr import (Conflict, CtfEvent, Fresh, PotentialResponse,
                   Query, Sym, ancestral_set_transform, ctf_ancestors,
                   exclusion_set, merge_events, render_events, subst_event,
                   unnest)
from .graph import CausalDiagram
from .regime import RegimeSpec, Template, factor_template, regime_regex

__all__ = [
    "Hedge", "FailCertificate", "IdResult", "EngineError",
    "detect_ctf_forest", "detect_ctf_hedge", "identify_plus", "ctfidu_plus",
    "identify", "classic_identify",
]

log = logging.getLogger(__name__)


class EngineError(ValueError):
    """Misuse of the engine (as opposed to a FAIL result)."""


# -- certificates ------------------------------------------------------

@dataclass
class Hedge:
    T: tuple
    C: tuple
    subgraph: CausalDiagram

    def to_json(self) -> dict:
        G = self.subgraph
        return {
            "T": [repr(e) for e in self.T],
            "C": [repr(e) for e in self.C],
            "variables": list(G.variables),
            "directed": sorted([list(e) for e in G.directed]),
            "bidirected": sorted([list(e) for e in G.bidirected]),
        }


@dataclass
class FailCertificate:
    block: tuple
    hedge: Hedge | None = None
    regime: str | None = None
    reason: str = ""

    @property
    def validated(self) -> bool:
        return self.hedge is not None and detect_ctf_hedge(self.hedge.T, self.hedge.C, self.hedge.subgraph)

    def to_json(self) -> dict:
        return {
            "status": "FAIL",
            "block": [repr(e) for e in self.block],
            "regime": self.regime,
            "reason": self.reason,
            "hedge": self.hedge.to_json() if self.hedge else None,
            "hedge_valid": self.validated if self.hedge else None,
        }


@dataclass
class IdResult:
    estimand: Estimand | None
    certificate: FailCertificate | None = None
    log: list = field(default_factory=list)
    leaves: list = field(default_factory=list)

    @property
    def identified(self) -> bool:
        return self.estimand is not None

    def text(self) -> str:
        return render(self.estimand) if self.estimand is not None else "FAIL"

    def to_json(self) -> dict:
        if self.estimand is None:
            return self.certificate.to_json()
        return {"status": "identified", "estimand": to_json(self.estimand),
                "text": render(self.estimand),
                "leaves": [[repr(e) for e in b] for b in self.leaves]}


# -- forest / hedge detection -------------------------------------------

def detect_ctf_forest(T: Sequence[CtfEvent], C: Sequence[CtfEvent], G: CausalDiagram) -> bool:
    T, C = list(T), list(C)
    if not T or not set(C) <= set(T) or not C:
        return False
    vs = [e.var for e in T]
    if len(set(vs)) != len(vs):
        return False
    Tv = set(vs)
    if not G.bidirected_spanning_tree_check(Tv):
        return False
    sub = G.induced_subgraph(Tv)
    if sub.ancestors({e.var for e in C}) != frozenset(Tv):
        return False
    return all(len(sub.children(v)) <= 1 for v in Tv)


def detect_ctf_hedge(T: Sequence[CtfEvent], C: Sequence[CtfEvent], G: CausalDiagram) -> bool:
    if not detect_ctf_forest(T, C, G) or set(T) == set(C):
        return False
    sub = G.induced_subgraph({e.var for e in T})
    by_var = {e.var: e for e in T}
    for e in T:
        if e in C:
            continue
        kids = sub.children(e.var)
        if len(kids) != 1:
            return False
        if by_var[kids[0]].sub.get(e.var, object()) != e.value:
            return False
    return True


# -- identify+ ---------------------------------------------------------

def _closure(C, T):
    """Smallest H with C in H such that no H subscript names a T minus H value."""
    H = list(C)
    rest = [e for e in T if e not in C]
    child: dict = {}
    grew = True
    while grew:
        grew = False
        for e in list(rest):
            for h in H:
                if h.sub.get(e.var, _MISSING) == e.value:
                    H.append(e)
                    rest.remove(e)
                    child[e.var] = h.var
                    grew = True
                    break
    return H, child


_MISSING = object()


def _spanning_tree(G: CausalDiagram, vs) -> list:
    vs = G.sort(vs)
    if not vs:
        return []
    seen = {vs[0]}
    todo = deque([vs[0]])
    edges = []
    while todo:
        v = todo.popleft()
        for s in G.siblings(v):
            if s in vs and s not in seen:
                seen.add(s)
                todo.append(s)
                edges.append((v, s))
    return edges


def _marginal(q: Estimand, drop: Sequence[CtfEvent], fresh: Fresh) -> Estimand:
    """Sum ``q`` over the values of ``drop``."""
    if not drop:
        return q
    if isinstance(q, InputRef):
        dvars = {e.var for e in drop}
        nat = q.template.natural
        dropped = {nat[v] for v in dvars}
        keep = tuple((k, t) for k, t in q.binding if k not in dropped)
        gone = {e.value for e in drop}
        # shrinking is only a marginal when no remaining slot reads a summed value
        if not any(t in gone for _, t in keep):
            try:
                return InputRef(q.template, q.retained - dvars, keep)
            except EstimandError:
                pass
    ren = {}
    for e in drop:
        if not isinstance(e.value, Sym):
            raise EngineError(f"cannot marginalize fixed value in {e!r}")
        ren[e.value] = fresh(e.var, e.value.card)
    return make_sum(list(ren.values()), substitute(q, ren))


def _factor_block(G: CausalDiagram, H: Sequence[CtfEvent], q: Estimand, block, fresh: Fresh) -> Estimand:
    """Q[block] from Q[H] by the telescoping quotient of prefix marginals."""
    order = G.topo_sort({e.var for e in H})
    block = set(block)
    if block >= set(order):
        return q
    ev = {e.var: e for e in H}

    def prefix(k):  # marginal over the first k variables
        return _marginal(q, [ev[v] for v in order[k:]], fresh) if k else ONE

    parts = []
    j = 0
    while j < len(order):
        if order[j] in block:
            k = j
            while k + 1 < len(order) and order[k + 1] in block:
                k += 1
            parts.append(make_quotient(prefix(k + 1), prefix(j)))
            j = k + 1
        else:
            j += 1
    return make_product(parts)


@dataclass
class _Fail:
    T: tuple
    C: tuple
    child: dict


def _identify_plus(G, C, T, q, fresh, trace, depth=0):
    H, child = _closure(C, T)
    trace.append(f"{'  ' * depth}identify+: target P({render_events(C)}) from P({render_events(T)})")
    if set(H) == set(C):
        rest = [e for e in T if e not in H]
        if rest:
            trace.append(f"{'  ' * depth}  marginalize {', '.join(e.var for e in rest)}")
        return _marginal(q, rest, fresh)
    if len(H) == len(T):
        trace.append(f"{'  ' * depth}  FAIL: closure is the whole input")
        return _Fail(tuple(T), tuple(C), child)
    rest = [e for e in T if e not in H]
    trace.append(f"{'  ' * depth}  marginalize {', '.join(e.var for e in rest)}")
    qH = _marginal(q, rest, fresh)
    cvars = {e.var for e in C}
    comp = next(b for b in G.components_within({e.var for e in H}) if cvars <= b)
    Hi = tuple(e for e in H if e.var in comp)
    trace.append(f"{'  ' * depth}  factorize, keep block {{{', '.join(G.sort(comp))}}}")
    qHi = _factor_block(G, H, qH, comp, fresh)
    return _identify_plus(G, C, Hi, qHi, fresh, trace, depth + 1)


def _hedge_of(G: CausalDiagram, fail: _Fail) -> Hedge:
    vs = [e.var for e in fail.T]
    directed = [(v, c) for v, c in fail.child.items()]
    tree = _spanning_tree(G, vs)
    sub = CausalDiagram(G.sort(vs), directed, tree, {v: G.card(v) for v in vs})
    return Hedge(tuple(fail.T), tuple(fail.C), sub)


class _Symbols:
    """Map (variable, int) pairs to query symbols and back."""

    def __init__(self, G: CausalDiagram, kind: str = "q"):
        self.G = G
        self.kind = kind
        self.fwd: dict = {}
        self.back: dict = {}

    def sym(self, var, value):
        if isinstance(value, Sym):
            return value
        key = (var, int(value))
        s = self.fwd.get(key)
        if s is None:
            if not 0 <= key[1] < self.G.card(var):
                raise EngineError(f"value {value} out of domain for {var}")
            s = Sym(str(key[1]) if self.kind == "q" else f"{var.lower()}={key[1]}", var, self.G.card(var), self.kind)
            self.fwd[key] = s
            self.back[s] = key[1]
        return s

    def response(self, r: PotentialResponse) -> PotentialResponse:
        sub = []
        for k, t in r.subscript:
            if isinstance(t, PotentialResponse):
                sub.append((k, self.response(t)))
            else:
                sub.append((k, self.sym(k, t)))
        return PotentialResponse(r.variable, tuple(sub))

    def event(self, e: CtfEvent) -> CtfEvent:
        return CtfEvent(self.response(e.response), self.sym(e.var, e.value))

    def concrete(self, e: CtfEvent) -> CtfEvent:
        return subst_event(e, self.back)


def identify_plus(G: CausalDiagram, C: Sequence[CtfEvent], T: Sequence[CtfEvent]):
    """Identify ctf-factor ``C`` from input ctf-factor ``T``.

    Values are ints; equal (variable, value) pairs denote the same slot.
    Returns ``(estimand, trace)`` with the estimand written over a single
    input table labelled ``Q[T]`` (axes: ``template.axes`` of the returned
    ``InputRef``), or ``(FailCertificate, trace)``.
    """
    C, T = list(C), list(T)
    if not set(C) <= set(T):
        raise EngineError("target events must be a subset of the input events")
    vs = [e.var for e in T]
    if len(set(vs)) != len(vs):
        raise EngineError("each variable may appear at most once in the input")
    if len(G.components_within(set(vs))) != 1:
        raise EngineError("input variables must form a single c-component")
    used = set()
    for e in C:
        used.add((e.var, e.value))
        used.update(e.response.subscript)
    qs = _Symbols(G, "q")
    ss = _Symbols(G, "sum")

    def sym(var, val):
        return (qs if (var, val) in used else ss).sym(var, val)

    def conv(e):
        return CtfEvent(PotentialResponse(e.var, tuple((k, sym(k, t)) for k, t in e.response.subscript)),
                        sym(e.var, e.value))

    Ts = [conv(e) for e in T]
    Cs = [conv(e) for e in C]
    tpl = factor_template(G, Ts)
    q = InputRef(tpl, frozenset(vs), tuple((s, s) for s in tpl.axes))
    trace: list = []
    out = _identify_plus(G, Cs, Ts, q, Fresh("s"), trace)
    if isinstance(out, _Fail):
        hedge = _hedge_of(G, out)
        back = {**qs.back, **ss.back}
        hedge = Hedge(tuple(subst_event(e, back) for e in hedge.T),
                      tuple(subst_event(e, back) for e in hedge.C), hedge.subgraph)
        return FailCertificate(tuple(C), hedge, "Q[T]", "ctf-hedge"), trace
    return substitute(out, {**qs.back, **ss.back}), trace


# -- ctfIDu+ -----------------------------------------------------------

def _unify(block: Sequence[CtfEvent], tpl: Template):
    """Bind template symbols so each block event matches its template event."""
    sigma: dict = {}

    def bind(s, t):
        if s in sigma:
            return sigma[s] == t
        sigma[s] = t
        return True

    for c in block:
        try:
            t = tpl.factor_event(c.var)
        except KeyError:
            return None
        if t.response.keys != c.response.keys:
            return None
        csub = c.sub
        for k, s in t.response.subscript:
            if not bind(s, csub[k]):
                return None
        if not bind(t.value, c.value):
            return None
    return sigma


def ctfidu_plus(G: CausalDiagram, events: Sequence[CtfEvent], regimes: Sequence[RegimeSpec],
                bound: Iterable[Sym] = (), fresh: Fresh | None = None) -> IdResult:
    """Identify the un-nested symbolic conjunction ``events``.

    ``bound`` lists summation symbols already owned by the caller (from
    un-nesting); they are summed over in the returned estimand.
    """
    fresh = fresh or Fresh()
    trace: list = []
    bound = list(bound)
    Y = exclusion_set(events, G)
    trace.append(f"exclusion: P({render_events(Y)})")
    try:
        Y, sub = merge_events(Y, bound)
    except Conflict as exc:
        trace.append(f"trivially impossible: {exc}")
        return IdResult(ZERO, log=trace)
    bound = [s for s in bound if s not in sub]

    have = {e.response: e.value for e in Y}
    W = list(Y)
    anc_syms = []
    for r in ctf_ancestors(Y, G):
        if r not in have:
            s = fresh(r.variable, G.card(r.variable))
            anc_syms.append(s)
            have[r] = s
            W.append(CtfEvent(r, s))
    trace.append(f"ctf-ancestors: P({render_events(W)})")
    W = ancestral_set_transform(W, G)
    try:
        W, sub = merge_events(W, bound + anc_syms)
    except Conflict as exc:
        trace.append(f"trivially impossible after AST: {exc}")
        return IdResult(ZERO, log=trace)
    bound = [s for s in bound if s not in sub]
    anc_syms = [s for s in anc_syms if s not in sub]
    trace.append(f"AST: P({render_events(W)})")

    blocks = []
    for comp in G.components_within({e.var for e in W}):
        blocks.append(tuple(e for e in W if e.var in comp))
    trace.append("blocks: " + " | ".join(f"P({render_events(b)})" for b in blocks))

    parts = []
    first_fail = None
    leaves = []
    for b in blocks:
        found = None
        leaves.append(b)
        trace.append(f"leaf: P({render_events(b)})")
        bvars = {e.var for e in b}
        for spec in regimes:
            tpl = regime_regex(G, spec)
            comps = G.components_within(set(tpl.variables))
            comp = next((c for c in comps if bvars <= c), None)
            if comp is None:
                continue
            sigma = _unify(b, tpl)
            if sigma is None:
                trace.append(f"  regime {tpl.id}: no matching row")
                continue
            for s in tpl.axes:
                if s not in sigma:
                    sigma[s] = fresh(s.var, s.card)
            Tall = [subst_event(e, sigma) for e in tpl.factor]
            q_full = InputRef(tpl, frozenset(tpl.variables), tuple(sigma.items()))
            q_T = _factor_block(G, Tall, q_full, comp, fresh)
            Ti = tuple(e for e in Tall if e.var in comp)
            trace.append(f"  regime {tpl.id}: input block P({render_events(Ti)})")
            sub_trace: list = []
            out = _identify_plus(G, b, Ti, q_T, fresh, sub_trace, 2)
            trace.extend(sub_trace)
            if isinstance(out, _Fail):
                if first_fail is None:
                    first_fail = (b, _hedge_of(G, out), tpl.id)
                continue
            found = out
            break
        if found is None:
            if first_fail is not None and first_fail[0] is b:
                cert = FailCertificate(b, first_fail[1], first_fail[2], "ctf-hedge")
            else:
                cert = FailCertificate(b, None, None, "no input block contains this ctf-factor")
            trace.append(f"FAIL on P({render_events(b)})")
            return IdResult(None, cert, trace, leaves)
        parts.append(found)
    est = make_sum(bound + anc_syms, make_product(parts))
    return IdResult(est, None, trace, leaves)


# -- driver ------------------------------------------------------------

def _concretize(res: IdResult, syms: _Symbols) -> IdResult:
    back = syms.back
    if res.estimand is not None:
        est = substitute(res.estimand, back)
        loose = [s for s in free_syms(est) if s.kind != "q"]
        if loose:
            res.log.append("unconstrained slots set to 0: " + ", ".join(s.name for s in loose))
            est = substitute(est, {s: 0 for s in loose})
        res.estimand = est
    if res.certificate is not None:
        c = res.certificate
        h = c.hedge
        if h is not None:
            h = Hedge(tuple(subst_event(e, back) for e in h.T),
                      tuple(subst_event(e, back) for e in h.C), h.subgraph)
        res.certificate = FailCertificate(tuple(subst_event(e, back) for e in c.block), h, c.regime, c.reason)
    res.leaves = [tuple(subst_event(e, back) for e in b) for b in res.leaves]
    return res


def _identify_joint(G, events, regimes, syms: _Symbols, fresh: Fresh) -> IdResult:
    events = [syms.event(e) for e in events]
    flat, sums = unnest(events, G, fresh)
    return ctfidu_plus(G, flat, regimes, bound=sums, fresh=fresh)


def identify(G: CausalDiagram, query: Query, regimes: Sequence[RegimeSpec]) -> IdResult:
    """Identify a (possibly nested, possibly conditional) query from the regimes.

    A conditional query is the quotient of two joint identifications.
    """
    regimes = [r if isinstance(r, RegimeSpec) else RegimeSpec(tuple(r)) for r in regimes]
    for r in regimes:
        r.validate(G)
    syms = _Symbols(G)
    fresh = Fresh()
    if query.given is None:
        return _concretize(_identify_joint(G, query.joint.events, regimes, syms, fresh), syms)
    num = _identify_joint(G, query.joint.events + query.given.events, regimes, syms, fresh)
    if not num.identified:
        return _concretize(num, syms)
    den = _identify_joint(G, query.given.events, regimes, syms, fresh)
    logs = ["numerator:"] + num.log + ["denominator:"] + den.log
    if not den.identified:
        den.log = logs
        return _concretize(den, syms)
    res = IdResult(make_quotient(num.estimand, den.estimand), None, logs, num.leaves + den.leaves)
    return _concretize(res, syms)


# -- classic identify (Layer-2 baseline) -------------------------------

def classic_identify(G: CausalDiagram, C: Iterable[str], T: Iterable[str]):
    """Tian's c-factor identification of ``Q[C]`` from ``Q[T]``.

    Works on variable sets with one value per variable.  Returns
    ``(estimand, template)`` where the estimand reads the input table of
    ``template`` (the consistent ctf-factor of ``T``), or ``(None, template)``
    on FAIL.
    """
    C, T = set(C), set(T)
    if not C <= T:
        raise EngineError("C must be a subset of T")
    if len(G.components_within(T)) != 1:
        raise EngineError("T must be a single c-component")
    vals = {v: Sym(v.lower(), v, G.card(v), "q") for v in G.variables}
    events = [CtfEvent(PotentialResponse.make(v, {p: vals[p] for p in G.parents(v)}), vals[v])
              for v in G.topo_sort(T)]
    tpl = factor_template(G, events)
    q = InputRef(tpl, frozenset(T), tuple((s, s) for s in tpl.axes))
    fresh = Fresh("t")
    cur_T, cur_q = set(T), q
    while True:
        A = G.induced_subgraph(cur_T).ancestors(C)
        ev = [e for e in events if e.var in cur_T]
        if A == C:
            out = _marginal(cur_q, [e for e in ev if e.var not in C], fresh)
            return out, tpl
        if A == frozenset(cur_T):
            return None, tpl
        qA = _marginal(cur_q, [e for e in ev if e.var not in A], fresh)
        comp = next(b for b in G.components_within(A) if C <= b)
        cur_q = _factor_block(G, [e for e in ev if e.var in A], qA, comp, fresh)
        cur_T = set(comp)
