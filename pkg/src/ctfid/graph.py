"""Causal diagrams: directed edges plus bidirected (confounding) edges.

A :class:`CausalDiagram` is immutable.  Every operation returns a new diagram
or a plain ``frozenset``/``tuple`` so results can be hashed and cached.
Orderings are deterministic: ties are always broken by declaration order.
"""
from __future__ import annotations

import re
from collections import deque
from typing import Iterable, Mapping

__all__ = [
    "CausalDiagram",
    "GraphError",
    "parse_graph",
    "format_graph",
]


class GraphError(ValueError):
    """Raised for malformed diagrams or unknown variables."""


def _pair(a: str, b: str, order: Mapping[str, int]) -> tuple[str, str]:
    return (a, b) if order[a] <= order[b] else (b, a)


class CausalDiagram:
    """Variables with directed and bidirected edges and finite domains."""

    def __init__(self, variables, directed=(), bidirected=(), domains=None):
        variables = tuple(variables)
        if len(set(variables)) != len(variables):
            raise GraphError("duplicate variable declaration")
        order = {v: i for i, v in enumerate(variables)}
        dedges = set()
        for a, b in directed:
            if a not in order or b not in order:
                raise GraphError(f"edge {a} -> {b} uses an undeclared variable")
            if a == b:
                raise GraphError(f"self-loop on {a}")
            dedges.add((a, b))
        bedges = set()
        for a, b in bidirected:
            if a not in order or b not in order:
                raise GraphError(f"edge {a} <-> {b} uses an undeclared variable")
            if a == b:
                raise GraphError(f"bidirected self-loop on {a}")
            bedges.add(_pair(a, b, order))
        doms = {v: 2 for v in variables}
        for v, k in (domains or {}).items():
            if v not in order:
                raise GraphError(f"domain given for undeclared variable {v}")
            if int(k) < 2:
                raise GraphError(f"domain of {v} must have at least 2 values")
            doms[v] = int(k)
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "directed", frozenset(dedges))
        object.__setattr__(self, "bidirected", frozenset(bedges))
        object.__setattr__(self, "domains", doms)
        object.__setattr__(self, "_order", order)
        object.__setattr__(self, "_memo", {})
        pa = {v: [] for v in variables}
        ch = {v: [] for v in variables}
        for a, b in sorted(dedges, key=lambda e: (order[e[0]], order[e[1]])):
            pa[b].append(a)
            ch[a].append(b)
        sib = {v: [] for v in variables}
        for a, b in sorted(bedges, key=lambda e: (order[e[0]], order[e[1]])):
            sib[a].append(b)
            sib[b].append(a)
        object.__setattr__(self, "_pa", {v: tuple(sorted(p, key=order.get)) for v, p in pa.items()})
        object.__setattr__(self, "_ch", {v: tuple(sorted(c, key=order.get)) for v, c in ch.items()})
        object.__setattr__(self, "_sib", {v: tuple(sorted(s, key=order.get)) for v, s in sib.items()})
        # fail early on cycles
        object.__setattr__(self, "_topo", self._kahn())

    def __setattr__(self, name, value):
        raise AttributeError("CausalDiagram is immutable")

    def __eq__(self, other):
        if not isinstance(other, CausalDiagram):
            return NotImplemented
        return (self.variables, self.directed, self.bidirected, self.domains) == (
            other.variables, other.directed, other.bidirected, other.domains)

    def __hash__(self):
        return hash((self.variables, self.directed, self.bidirected))

    # -- basic queries -------------------------------------------------
    def _check(self, vs: Iterable[str]) -> None:
        for v in vs:
            if v not in self._order:
                raise GraphError(f"unknown variable {v!r}")

    def index(self, v: str) -> int:
        self._check([v])
        return self._order[v]

    def sort(self, vs: Iterable[str]) -> tuple[str, ...]:
        """Return ``vs`` in declaration order."""
        vs = set(vs)
        self._check(vs)
        return tuple(v for v in self.variables if v in vs)

    def card(self, v: str) -> int:
        self._check([v])
        return self.domains[v]

    def parents(self, v: str) -> tuple[str, ...]:
        self._check([v])
        return self._pa[v]

    def children(self, v: str) -> tuple[str, ...]:
        self._check([v])
        return self._ch[v]

    def siblings(self, v: str) -> tuple[str, ...]:
        """Variables joined to ``v`` by a bidirected edge."""
        self._check([v])
        return self._sib[v]

    def ancestors(self, S: Iterable[str]) -> frozenset:
        """Reflexive ancestors of ``S``."""
        return self._closure(S, self._pa)

    def descendants(self, S: Iterable[str]) -> frozenset:
        """Reflexive descendants of ``S``."""
        return self._closure(S, self._ch)

    def ancestors_cut(self, S: Iterable[str], cut_into: Iterable[str] = (),
                      cut_outof: Iterable[str] = ()) -> frozenset:
        """Ancestors of ``S`` in ``mutilate(cut_into, cut_outof)``, without building it."""
        key = (frozenset(S), frozenset(cut_into), frozenset(cut_outof))
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        S, cin, cout = key
        self._check(S | cin | cout)
        seen = set(S)
        todo = deque(S)
        while todo:
            v = todo.popleft()
            if v in cin:
                continue
            for p in self._pa[v]:
                if p not in cout and p not in seen:
                    seen.add(p)
                    todo.append(p)
        out = frozenset(seen)
        self._memo[key] = out
        return out

    def _closure(self, S, nbrs) -> frozenset:
        S = list(S)
        self._check(S)
        seen = set(S)
        todo = deque(S)
        while todo:
            v = todo.popleft()
            for w in nbrs[v]:
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        return frozenset(seen)

    def c_components(self) -> tuple[frozenset, ...]:
        """Partition into blocks connected by bidirected paths."""
        seen: set[str] = set()
        blocks = []
        for v in self.variables:
            if v in seen:
                continue
            block = set()
            todo = deque([v])
            seen.add(v)
            while todo:
                w = todo.popleft()
                block.add(w)
                for s in self._sib[w]:
                    if s not in seen:
                        seen.add(s)
                        todo.append(s)
            blocks.append(frozenset(block))
        return tuple(blocks)

    def components_within(self, W: Iterable[str]) -> tuple[frozenset, ...]:
        """c-components of G[W], ordered by first member's declaration index."""
        key = ("cc", frozenset(W))
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        W = key[1]
        self._check(W)
        seen: set[str] = set()
        blocks = []
        for v in self.variables:
            if v not in W or v in seen:
                continue
            block = set()
            todo = deque([v])
            seen.add(v)
            while todo:
                w = todo.popleft()
                block.add(w)
                for s in self._sib[w]:
                    if s in W and s not in seen:
                        seen.add(s)
                        todo.append(s)
            blocks.append(frozenset(block))
        out = tuple(blocks)
        self._memo[key] = out
        return out

    def component_of(self, v: str) -> frozenset:
        for block in self.c_components():
            if v in block:
                return block
        raise GraphError(f"unknown variable {v!r}")

    def induced_subgraph(self, W: Iterable[str]) -> "CausalDiagram":
        W = set(W)
        self._check(W)
        return CausalDiagram(
            [v for v in self.variables if v in W],
            [(a, b) for a, b in self.directed if a in W and b in W],
            [(a, b) for a, b in self.bidirected if a in W and b in W],
            {v: self.domains[v] for v in W},
        )

    def mutilate(self, cut_into: Iterable[str] = (), cut_outof: Iterable[str] = ()) -> "CausalDiagram":
        """Delete edges into ``cut_into`` (bidirected ones too) and out of ``cut_outof``."""
        cin, cout = set(cut_into), set(cut_outof)
        self._check(cin | cout)
        return CausalDiagram(
            self.variables,
            [(a, b) for a, b in self.directed if b not in cin and a not in cout],
            [(a, b) for a, b in self.bidirected if a not in cin and b not in cin],
            self.domains,
        )

    def _kahn(self) -> tuple[str, ...]:
        indeg = {v: len(self._pa[v]) for v in self.variables}
        out = []
        ready = [v for v in self.variables if indeg[v] == 0]
        while ready:
            # smallest declaration index first
            ready.sort(key=self._order.get)
            v = ready.pop(0)
            out.append(v)
            for c in self._ch[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        if len(out) != len(self.variables):
            raise GraphError("directed cycle detected")
        return tuple(out)

    def topological_order(self) -> tuple[str, ...]:
        return self._topo

    def topo_sort(self, vs: Iterable[str]) -> tuple[str, ...]:
        """Return ``vs`` ordered by this diagram's topological order."""
        vs = set(vs)
        self._check(vs)
        return tuple(v for v in self._topo if v in vs)

    def bidirected_spanning_tree_check(self, T: Iterable[str]) -> bool:
        """True iff the bidirected edges of G[T] form a spanning tree of T."""
        T = set(T)
        self._check(T)
        if not T:
            return False
        sub = self.induced_subgraph(T)
        return len(sub.bidirected) == len(T) - 1 and len(sub.c_components()) == 1

    def __repr__(self) -> str:
        return f"CausalDiagram({format_graph(self)!r})"


_LINE = re.compile(
    r"^\s*(?:var\s+(?P<var>\w+)(?:\s+card\s+(?P<card>\d+))?"
    r"|edge\s+(?P<a>\w+)\s*(?P<arrow><->|->)\s*(?P<b>\w+))\s*$"
)


def parse_graph(text: str) -> CausalDiagram:
    """Parse the line-oriented graph format.

    Lines are ``var X card 2``, ``edge X -> Y`` or ``edge X <-> Y``; ``#``
    starts a comment.  Variables used by an edge before being declared are
    an error.
    """
    variables, domains, directed, bidirected = [], {}, [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if not m:
            raise GraphError(f"line {lineno}: cannot parse {raw.strip()!r}")
        if m.group("var"):
            v = m.group("var")
            if v in domains:
                raise GraphError(f"line {lineno}: {v} declared twice")
            variables.append(v)
            domains[v] = int(m.group("card") or 2)
        else:
            a, b = m.group("a"), m.group("b")
            for v in (a, b):
                if v not in domains:
                    raise GraphError(f"line {lineno}: undeclared variable {v}")
            (directed if m.group("arrow") == "->" else bidirected).append((a, b))
    return CausalDiagram(variables, directed, bidirected, domains)


def format_graph(G: CausalDiagram) -> str:
    lines = [f"var {v} card {G.domains[v]}" for v in G.variables]
    o = G.index
    lines += [f"edge {a} -> {b}" for a, b in sorted(G.directed, key=lambda e: (o(e[0]), o(e[1])))]
    lines += [f"edge {a} <-> {b}" for a, b in sorted(G.bidirected, key=lambda e: (o(e[0]), o(e[1])))]
    return "\n".join(lines) + "\n"
