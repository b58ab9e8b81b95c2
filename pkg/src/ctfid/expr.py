"""Counterfactual expressions and the rewrites used by the identification engine.

Values inside expressions are either plain integers or :class:`Sym` objects.
A ``Sym`` is a named value index ranging over one variable's domain; the
engine reasons about symbols, never about which integers they happen to
take, so two different symbols are treated as two different values.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .graph import CausalDiagram

__all__ = [
    "Sym", "PotentialResponse", "CtfEvent", "CtfConjunction", "Query",
    "Fresh", "ExprError", "pr", "ev",
    "subst_term", "subst_event", "event_syms",
    "exclusion", "exclusion_set", "unnest", "ctf_ancestors",
    "ancestral_set_transform", "is_ctf_factor", "ctf_factorize",
    "ctf_component_table", "is_consistent", "collapse", "trivial_conflict",
    "merge_events", "Conflict", "render_event", "render_events",
]


class ExprError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Sym:
    """A symbolic value of variable ``var``.

    ``kind`` is ``"q"`` for a query constant, ``"sum"`` for a summation index
    and ``"tpl"`` for a slot in a regime template.
    """
    name: str
    var: str
    card: int
    kind: str = "sum"

    def __repr__(self) -> str:
        return self.name


Value = Union[int, Sym]


@dataclass(frozen=True)
class PotentialResponse:
    variable: str
    subscript: tuple = ()

    @staticmethod
    def make(variable: str, sub: Mapping | Iterable = ()) -> "PotentialResponse":
        items = sub.items() if isinstance(sub, Mapping) else sub
        items = tuple(sorted(items, key=lambda kv: kv[0]))
        keys = [k for k, _ in items]
        if len(set(keys)) != len(keys):
            raise ExprError(f"repeated subscript variable in {variable}")
        return PotentialResponse(variable, items)

    @property
    def sub(self) -> dict:
        return dict(self.subscript)

    @property
    def keys(self) -> frozenset:
        return frozenset(k for k, _ in self.subscript)

    @property
    def nested(self) -> bool:
        return any(isinstance(t, PotentialResponse) for _, t in self.subscript)

    def restrict(self, keep: Iterable[str]) -> "PotentialResponse":
        keep = set(keep)
        return PotentialResponse(self.variable, tuple(kv for kv in self.subscript if kv[0] in keep))

    def __repr__(self) -> str:
        return render_response(self)


@dataclass(frozen=True)
class CtfEvent:
    response: PotentialResponse
    value: object

    @property
    def var(self) -> str:
        return self.response.variable

    @property
    def sub(self) -> dict:
        return self.response.sub

    def __repr__(self) -> str:
        return render_event(self)


def pr(variable: str, **sub) -> PotentialResponse:
    return PotentialResponse.make(variable, sub)


def ev(variable: str, value, **sub) -> CtfEvent:
    return CtfEvent(PotentialResponse.make(variable, sub), value)


def _dedup(events: Iterable[CtfEvent]) -> tuple:
    seen, out = set(), []
    for e in events:
        if e not in seen:
            seen.add(e)
            out.append(e)
    return tuple(out)


class CtfConjunction:
    """A joint counterfactual event; equality is set equality of events."""

    __slots__ = ("events",)

    def __init__(self, events: Iterable[CtfEvent] = ()):
        object.__setattr__(self, "events", _dedup(events))

    def __setattr__(self, k, v):
        raise AttributeError("immutable")

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def __eq__(self, other):
        if isinstance(other, CtfConjunction):
            return frozenset(self.events) == frozenset(other.events)
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self.events))

    def __repr__(self):
        return "P(" + render_events(self.events) + ")"

    @property
    def variables(self) -> list:
        out = []
        for e in self.events:
            if e.var not in out:
                out.append(e.var)
        return out


@dataclass(frozen=True)
class Query:
    joint: CtfConjunction
    given: CtfConjunction | None = None

    def __post_init__(self):
        if not len(self.joint):
            raise ExprError("query needs at least one event")

    @property
    def all_events(self) -> tuple:
        return self.joint.events + (self.given.events if self.given else ())


class Fresh:
    """Deterministic generator of summation indices z0, z1, ..."""

    def __init__(self, prefix: str = "z"):
        self.prefix = prefix
        self.n = 0

    def __call__(self, var: str, card: int, kind: str = "sum") -> Sym:
        s = Sym(f"{self.prefix}{self.n}", var, card, kind)
        self.n += 1
        return s


# -- rendering ---------------------------------------------------------

def _name(v, namer=None) -> str:
    if isinstance(v, Sym):
        return namer(v) if namer else v.name
    if isinstance(v, PotentialResponse):
        return render_response(v, namer)
    return str(v)


def render_response(r: PotentialResponse, namer=None) -> str:
    if not r.subscript:
        return r.variable
    inner = ", ".join(f"{k}={_name(t, namer)}" for k, t in r.subscript)
    return f"{r.variable}[{inner}]"


def render_event(e: CtfEvent, namer=None) -> str:
    return f"{render_response(e.response, namer)}={_name(e.value, namer)}"


def render_events(events: Iterable[CtfEvent], namer=None) -> str:
    return ", ".join(render_event(e, namer) for e in events)


# -- substitution ------------------------------------------------------

def subst_term(t, m: Mapping):
    if isinstance(t, Sym):
        return m.get(t, t)
    if isinstance(t, PotentialResponse):
        return subst_response(t, m)
    return t


def subst_response(r: PotentialResponse, m: Mapping) -> PotentialResponse:
    if not r.subscript:
        return r
    return PotentialResponse(r.variable, tuple((k, subst_term(t, m)) for k, t in r.subscript))


def subst_event(e: CtfEvent, m: Mapping) -> CtfEvent:
    return CtfEvent(subst_response(e.response, m), subst_term(e.value, m))


def event_syms(events: Iterable[CtfEvent]) -> list:
    """Symbols used anywhere in ``events``, in first-appearance order."""
    out: list = []

    def walk(t):
        if isinstance(t, Sym):
            if t not in out:
                out.append(t)
        elif isinstance(t, PotentialResponse):
            for _, s in t.subscript:
                walk(s)

    for e in events:
        walk(e.response)
        walk(e.value)
    return out


# -- exclusion ---------------------------------------------------------

def exclusion(r: PotentialResponse, G: CausalDiagram) -> PotentialResponse:
    """Drop subscript variables that cannot reach ``r.variable`` once they are fixed."""
    if r.nested:
        raise ExprError("exclusion expects an un-nested response")
    if not r.subscript:
        return r
    X = r.keys
    keep = X & G.ancestors_cut([r.variable], cut_into=X)
    return r if keep == X else r.restrict(keep)


def exclusion_set(events: Iterable[CtfEvent], G: CausalDiagram) -> tuple:
    return _dedup(CtfEvent(exclusion(e.response, G), e.value) for e in events)


# -- un-nesting --------------------------------------------------------

def unnest(events: Iterable[CtfEvent], G: CausalDiagram, fresh: Fresh | None = None):
    """Rewrite nested responses as a sum over fresh value indices.

    Returns ``(events, sums)`` where ``events`` is un-nested and ``sums`` lists
    the new summation symbols.  A nested response that already carries a
    value in the conjunction reuses that value instead of a new index.
    """
    fresh = fresh or Fresh()
    events = list(events)
    known: dict = {}
    out: list = []
    sums: list = []

    def flat(r: PotentialResponse) -> PotentialResponse:
        if not r.nested:
            return r
        sub = []
        for k, t in r.subscript:
            if isinstance(t, PotentialResponse):
                inner = flat(t)
                if inner.variable != k:
                    raise ExprError(f"subscript {k} is assigned a response of {inner.variable}")
                if inner in known:
                    val = known[inner]
                else:
                    val = fresh(inner.variable, G.card(inner.variable))
                    known[inner] = val
                    sums.append(val)
                    out.append(CtfEvent(inner, val))
                sub.append((k, val))
            else:
                sub.append((k, t))
        return PotentialResponse(r.variable, tuple(sub))

    # top-level un-nested events first so nested copies can reuse their values
    for e in events:
        if not e.response.nested and e.response not in known:
            known[e.response] = e.value
    for e in events:
        out.append(CtfEvent(flat(e.response), e.value))
    return _dedup(out), sums


# -- merging and conflicts ---------------------------------------------

class Conflict(Exception):
    """The conjunction is trivially impossible."""


def merge_events(events: Iterable[CtfEvent], bound: Iterable[Sym] = ()):
    """Collapse events that share a response.

    ``bound`` symbols are summation indices owned by the caller; when such a
    symbol meets another value on the same response the indicator forces them
    equal, so the index is substituted away.  Effectiveness (``Y[Y=y]``) is
    applied the same way.  Returns ``(events, substitution)`` or raises
    :class:`Conflict` when two distinct fixed values collide.
    """
    bound = set(bound)
    sub: dict = {}
    events = list(events)
    while True:
        events = [subst_event(e, sub) for e in events]
        changed = False
        by_resp: dict = {}
        keep: list = []
        for e in events:
            own = e.response.sub.get(e.var)
            if own is not None:
                if own == e.value:
                    continue
                if e.value in bound:
                    sub[e.value] = own
                    changed = True
                    break
                if own in bound:
                    sub[own] = e.value
                    changed = True
                    break
                raise Conflict(f"{render_event(e)} contradicts effectiveness")
            prev = by_resp.get(e.response)
            if prev is None:
                by_resp[e.response] = e.value
                keep.append(e)
            elif prev != e.value:
                if e.value in bound:
                    sub[e.value] = prev
                elif prev in bound:
                    sub[prev] = e.value
                else:
                    raise Conflict(f"{render_response(e.response)} takes two values")
                changed = True
                break
        if not changed:
            return _dedup(keep), sub
        # re-resolve chains such as a -> b -> c
        for k in list(sub):
            v = sub[k]
            while v in sub:
                v = sub[v]
            sub[k] = v


def trivial_conflict(events: Iterable[CtfEvent]) -> bool:
    """True iff the conjunction assigns one response two values or violates effectiveness."""
    try:
        merge_events(events)
    except Conflict:
        return True
    return False


# -- counterfactual ancestors ------------------------------------------

def ctf_ancestors(events: Iterable, G: CausalDiagram) -> tuple:
    """Ancestors of a counterfactual conjunction, as potential responses."""
    out: list = []
    seen: set = set()
    for e in events:
        r = e.response if isinstance(e, CtfEvent) else e
        if r.nested:
            raise ExprError("ctf_ancestors expects un-nested input")
        X = r.keys
        sub = r.sub
        for W in G.topo_sort(G.ancestors_cut([r.variable], cut_outof=X)):
            if W in X and W != r.variable:
                continue
            anc_w = G.ancestors_cut([W], cut_into=X)
            a = PotentialResponse.make(W, {k: sub[k] for k in X if k in anc_w})
            if a not in seen:
                seen.add(a)
                out.append(a)
    return tuple(out)


def ancestral_set_transform(events: Sequence[CtfEvent], G: CausalDiagram) -> tuple:
    """Re-subscript every event by its full parent set (ancestral input only)."""
    events = list(events)
    value_of = {e.response: e.value for e in events}
    out = []
    for e in events:
        if e.response.nested:
            raise ExprError("AST expects un-nested input")
        T = e.response.keys
        sub = e.response.sub
        new = {}
        for p in G.parents(e.var):
            if p in sub:
                new[p] = sub[p]
                continue
            anc_p = G.ancestors_cut([p], cut_into=T)
            rp = PotentialResponse.make(p, {k: sub[k] for k in T if k in anc_p})
            if rp not in value_of:
                raise ExprError(f"input not ancestral: {render_response(rp)} missing")
            new[p] = value_of[rp]
        out.append(CtfEvent(PotentialResponse.make(e.var, new), e.value))
    return _dedup(out)


def is_ctf_factor(events: Iterable[CtfEvent], G: CausalDiagram) -> bool:
    return all(e.response.keys == frozenset(G.parents(e.var)) and not e.response.nested
               for e in events)


# -- factorization -----------------------------------------------------

def ctf_factorize(events: Sequence[CtfEvent], G: CausalDiagram) -> list:
    """Split a ctf-factor into blocks following the c-components of G[V(events)]."""
    vs = {e.var for e in events}
    blocks = []
    for comp in G.components_within(vs):
        blocks.append(tuple(e for e in events if e.var in comp))
    return blocks


def ctf_component_table(joint: np.ndarray, order: Sequence[str], block: Iterable[str]) -> np.ndarray:
    """Numeric c-factor of ``block`` from a joint table.

    ``joint`` has one axis per variable in ``order`` (a topological order).
    The result has the same shape: entry ``h`` is the product over block
    members ``H_j`` of ``P(h_{<=j}) / P(h_{<j})``.
    """
    block = set(block)
    n = len(order)
    out = np.ones_like(joint, dtype=float)
    for j, v in enumerate(order):
        if v not in block:
            continue
        upto = joint.sum(axis=tuple(range(j + 1, n)), keepdims=True)
        below = joint.sum(axis=tuple(range(j, n)), keepdims=True)
        with np.errstate(divide="raise", invalid="raise"):
            try:
                out = out * (upto / below)
            except FloatingPointError as exc:
                raise ZeroDivisionError("zero marginal in ctf-factor quotient") from exc
    return out


# -- consistency -------------------------------------------------------

def _assignments(events: Iterable[CtfEvent]) -> dict:
    vals: dict = {}
    for e in events:
        vals.setdefault(e.var, set()).add(e.value)
        for k, t in e.response.subscript:
            vals.setdefault(k, set()).add(t)
    return vals


def is_consistent(events: Iterable[CtfEvent]) -> bool:
    """No variable receives two different values across values and subscripts."""
    return all(len(s) == 1 for s in _assignments(events).values())


def collapse(events: Sequence[CtfEvent]) -> tuple:
    """Map a consistent ctf-factor to ``(C, v)`` meaning ``Q[C](v) = P(c; do(v minus c))``."""
    if not is_consistent(events):
        raise ExprError("collapse needs a consistent ctf-factor")
    C = tuple(e.var for e in events)
    v = {k: next(iter(s)) for k, s in _assignments(events).items()}
    return C, v
