"""Data-collection regimes and the un-nested expression each one yields.

A regime is a set of physical actions: ``observe``, ``rand(X)`` or
``ctf-rand(X -> {C, ...})``.  :func:`regime_regex` maps it to a
:class:`Template`, a conjunction with one event per measured variable whose
values are template symbols.  Assigned symbols (one per action) are the
values an experimenter fixes; natural symbols are what gets measured.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

from .expr import (CtfEvent, ExprError, PotentialResponse, Sym,
                   ancestral_set_transform, exclusion, render_events)
from .graph import CausalDiagram

__all__ = ["Action", "Rand", "CtfRand", "RegimeSpec", "RegimeError",
           "Template", "regime_regex", "factor_template", "OBSERVE"]


class RegimeError(ValueError):
    pass


@dataclass(frozen=True)
class Rand:
    var: str

    @property
    def label(self) -> str:
        return f"rand({self.var})"


@dataclass(frozen=True)
class CtfRand:
    var: str
    targets: frozenset

    def __init__(self, var: str, targets: Iterable[str]):
        object.__setattr__(self, "var", var)
        object.__setattr__(self, "targets", frozenset(targets))
        if not self.targets:
            raise RegimeError(f"ctf-rand({var}) needs at least one target child")

    @property
    def label(self) -> str:
        return f"ctf-rand({self.var} -> {{{','.join(sorted(self.targets))}}})"


Action = Rand | CtfRand


@dataclass(frozen=True)
class RegimeSpec:
    """An ordered, de-duplicated action set.  The empty set is ``observe``."""
    actions: tuple = ()

    def __post_init__(self):
        out, seen = [], set()
        for a in self.actions:
            if a not in seen:
                seen.add(a)
                out.append(a)
        object.__setattr__(self, "actions", tuple(out))

    @property
    def id(self) -> str:
        return "; ".join(a.label for a in self.actions) or "observe"

    def __str__(self) -> str:
        return self.id

    def validate(self, G: CausalDiagram) -> None:
        rand = {a.var for a in self.actions if isinstance(a, Rand)}
        for a in self.actions:
            G._check([a.var])
            if isinstance(a, CtfRand):
                if a.var in rand:
                    raise RegimeError(f"rand({a.var}) and ctf-rand({a.var} -> ...) conflict")
                bad = a.targets - set(G.children(a.var))
                if bad:
                    raise RegimeError(f"ctf-rand targets {sorted(bad)} are not children of {a.var}")


OBSERVE = RegimeSpec()


@dataclass(frozen=True, eq=False)
class Template:
    """The expression indexing one input distribution.

    ``events`` is the compact regex form, ``factor`` the same conjunction
    after the ancestral set transformation (every variable subscripted by
    its parents).  ``axes`` fixes the layout of numeric regime tables:
    assigned symbols first, then natural symbols in topological order.
    """
    spec: RegimeSpec
    graph: CausalDiagram
    events: tuple
    factor: tuple
    natural: dict
    assigned: tuple
    axes: tuple = field(default=())
    label: str | None = None

    @property
    def id(self) -> str:
        return self.label or self.spec.id

    @property
    def variables(self) -> tuple:
        return tuple(e.var for e in self.factor)

    def factor_event(self, var: str) -> CtfEvent:
        for e in self.factor:
            if e.var == var:
                return e
        raise KeyError(var)

    def __repr__(self) -> str:
        return f"Template[{self.id}]: P({render_events(self.events)})"


def _assigned_name(var: str, k: int) -> str:
    return var.lower() + "*" * (k + 1)


@lru_cache(maxsize=256)
def _regime_regex(G: CausalDiagram, spec: RegimeSpec) -> Template:
    spec.validate(G)
    order = G.topological_order()
    rand = {a.var: a for a in spec.actions if isinstance(a, Rand)}
    per_var: dict = {}
    assigned = []
    for a in spec.actions:
        k = per_var.get(a.var, 0)
        per_var[a.var] = k + 1
        assigned.append((a, Sym(_assigned_name(a.var, k), a.var, G.card(a.var), "tpl")))
    natural = {v: Sym(v.lower(), v, G.card(v), "tpl") for v in order if v not in rand}

    # measured value of each variable; a rand'ed one reads its assigned value
    measured = dict(natural)
    for a, s in assigned:
        if isinstance(a, Rand):
            measured[a.var] = s

    # first action affecting each (source, child) edge wins
    affect: dict = {}
    for a, s in assigned:
        kids = G.children(a.var) if isinstance(a, Rand) else a.targets
        for c in kids:
            affect.setdefault((a.var, c), s)
    sources = []
    for a, _ in assigned:
        if a.var not in sources:
            sources.append(a.var)

    def build(prune: bool) -> tuple:
        events: dict = {}
        for V in order:
            if V in rand:
                continue
            anc = G.ancestors([V])
            sub: dict = {}
            pins: list = []
            for X in sources:
                for C in G.children(X):
                    if C not in anc:
                        continue
                    if C == V:
                        if (X, V) in affect:
                            sub[X] = affect[(X, V)]
                    elif C not in pins:
                        pins.append(C)
            for C in pins:
                sub.setdefault(C, measured[C])
            pins = [C for C in pins if sub[C] is measured[C] and C not in rand]
            # drop a pin when it cannot change the pinned variable's response
            changed = prune
            while changed:
                changed = False
                for P in G.topo_sort(pins):
                    if P not in sub:
                        continue
                    rest = {k: t for k, t in sub.items() if k != P}
                    if exclusion(PotentialResponse.make(P, rest), G) == events[P].response:
                        del sub[P]
                        changed = True
                        break
            events[V] = CtfEvent(exclusion(PotentialResponse.make(V, sub), G), natural[V])
        regex = tuple(events[V] for V in order if V in events)
        return regex, ancestral_set_transform(regex, G)

    try:
        regex, factor = build(True)
    except ExprError:
        # the shorter subscripts can hide an ancestor the AST needs verbatim
        try:
            regex, factor = build(False)
        except ExprError as exc:  # pragma: no cover - templates are ancestral by construction
            raise RegimeError(f"template for {spec.id} is not ancestral: {exc}") from exc
    axes = tuple(s for _, s in assigned) + tuple(natural[v] for v in order if v in natural)
    return Template(spec, G, regex, factor, natural, tuple(assigned), axes)


def factor_template(G: CausalDiagram, events: Sequence[CtfEvent], label: str = "Q[T]") -> Template:
    """Treat a symbolic ctf-factor itself as an input table.

    Each event's value must be a distinct symbol per variable; subscript
    symbols that are not some event's value become fixed (assigned) axes.
    """
    events = tuple(events)
    natural = {}
    for e in events:
        if not isinstance(e.value, Sym) or e.var in natural:
            raise RegimeError("factor template needs one symbolic value per variable")
        natural[e.var] = e.value
    values = set(natural.values())
    extra = []
    for e in events:
        for _, t in e.response.subscript:
            if not isinstance(t, Sym):
                raise RegimeError("factor template needs symbolic subscripts")
            if t not in values and t not in extra:
                extra.append(t)
    order = G.topo_sort(natural)
    axes = tuple(extra) + tuple(natural[v] for v in order)
    return Template(OBSERVE, G, events, events, natural, tuple((None, s) for s in extra), axes, label)


def regime_regex(G: CausalDiagram, spec: RegimeSpec | Sequence | None = None) -> Template:
    if spec is None:
        spec = OBSERVE
    elif not isinstance(spec, RegimeSpec):
        spec = RegimeSpec(tuple(spec))
    return _regime_regex(G, spec)
