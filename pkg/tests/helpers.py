"""Shared graphs and generators for the test suite."""
from __future__ import annotations

import itertools
import random

from ctfid.expr import CtfEvent, PotentialResponse, Query, CtfConjunction, Sym
from ctfid.graph import CausalDiagram
from ctfid.regime import CtfRand, Rand, RegimeSpec


def mediation():
    return CausalDiagram(["X", "Z", "Y"], [("X", "Z"), ("X", "Y"), ("Z", "Y")], [("Z", "Y")])


def limit_graph():
    return CausalDiagram(["X", "A", "Z", "Y"], [("X", "A"), ("A", "Z"), ("A", "Y")],
                         [("A", "Y"), ("X", "Z")])


def frontdoor():
    return CausalDiagram(["X", "Z", "Y"], [("X", "Z"), ("Z", "Y")], [("X", "Y")])


def bow(m=2, k=2):
    return CausalDiagram(["X", "Y"], [("X", "Y")], [("X", "Y")], {"X": m, "Y": k})


def hedge_graph():
    return CausalDiagram("S C B D E F G H".split(),
                         [("C", "B"), ("S", "B"), ("B", "D"), ("D", "F"), ("G", "E"), ("H", "E")],
                         [("C", "S"), ("C", "B"), ("B", "F"), ("D", "E"), ("E", "F")])


def ctf_data_graph():
    return CausalDiagram("D X A B W C E Y".split(),
                         [("X", "B"), ("B", "Y"), ("D", "A"), ("D", "W"), ("A", "B"), ("W", "Y"),
                          ("X", "C"), ("B", "C"), ("C", "E")],
                         [("X", "Y"), ("D", "X"), ("W", "Y"), ("A", "B"), ("X", "C"), ("C", "E"),
                          ("E", "B")])


def two_action_graph():
    return CausalDiagram("X T W Z Y".split(),
                         [("X", "Y"), ("X", "T"), ("T", "Y"), ("X", "W"), ("W", "Z"), ("Z", "Y")])


def chain(n):
    vs = [f"V{i}" for i in range(n)]
    return CausalDiagram(vs, list(zip(vs, vs[1:])), [(vs[0], vs[-1])])


def ev(var, value, **sub):
    return CtfEvent(PotentialResponse.make(var, sub), value)


def same_up_to_renaming(a, b) -> bool:
    """Event lists equal after a bijective renaming of symbols (integers fixed)."""
    a, b = list(a), list(b)
    if len(a) != len(b):
        return False
    fwd: dict = {}
    bwd: dict = {}

    def match(x, y):
        if isinstance(x, Sym) or isinstance(y, Sym):
            if not (isinstance(x, Sym) and isinstance(y, Sym)) or x.var != y.var:
                return False
            if fwd.setdefault(x, y) != y or bwd.setdefault(y, x) != x:
                return False
            return True
        return x == y

    by_var = {e.var: e for e in b}
    for e in a:
        f = by_var.get(e.var)
        if f is None or e.response.keys != f.response.keys:
            return False
        if not match(e.value, f.value):
            return False
        fs = f.response.sub
        for k, t in e.response.subscript:
            if not match(t, fs[k]):
                return False
    return True


# -- random instances for the soundness fuzz ----------------------------

def random_graph(rng: random.Random, n_max=6) -> CausalDiagram:
    n = rng.randint(2, n_max)
    vs = [f"V{i}" for i in range(n)]
    directed = [(a, b) for i, a in enumerate(vs) for b in vs[i + 1:] if rng.random() < 0.4]
    bidirected = [(a, b) for i, a in enumerate(vs) for b in vs[i + 1:] if rng.random() < 0.25]
    return CausalDiagram(vs, directed, bidirected)


def _random_response(rng, G, var, depth=0):
    others = [v for v in G.ancestors([var]) if v != var]
    sub = {}
    for v in rng.sample(others, k=min(len(others), rng.randint(0, 2))):
        if depth == 0 and rng.random() < 0.15:
            sub[v] = _random_response(rng, G, v, depth + 1)
        else:
            sub[v] = rng.randint(0, G.card(v) - 1)
    return PotentialResponse.make(var, sub)


def random_query(rng: random.Random, G: CausalDiagram) -> Query:
    n = rng.randint(1, min(3, len(G.variables)))
    events = [CtfEvent(_random_response(rng, G, v), rng.randint(0, G.card(v) - 1))
              for v in rng.choices(G.variables, k=n)]
    given = None
    if len(events) > 1 and rng.random() < 0.3:
        given = CtfConjunction(events[-1:])
        events = events[:-1]
    return Query(CtfConjunction(events), given)


def all_actions(G: CausalDiagram) -> list:
    out = []
    for v in G.variables:
        kids = G.children(v)
        if not kids:
            continue
        out.append(Rand(v))
        for r in range(1, len(kids) + 1):
            for c in itertools.combinations(kids, r):
                out.append(CtfRand(v, c))
    return out


def valid(spec: RegimeSpec, G: CausalDiagram) -> bool:
    try:
        spec.validate(G)
    except ValueError:
        return False
    return True


def random_regimes(rng: random.Random, G: CausalDiagram) -> list:
    acts = all_actions(G)
    out = []
    for _ in range(rng.randint(1, 3)):
        if not acts or rng.random() < 0.3:
            spec = RegimeSpec()
        else:
            spec = RegimeSpec(tuple(rng.sample(acts, k=min(len(acts), rng.randint(1, 2)))))
        if valid(spec, G) and spec not in out:
            out.append(spec)
    return out or [RegimeSpec()]


def regime_sets_upto_two(G: CausalDiagram) -> list:
    """Every regime made of one or two actions, plus observe."""
    acts = all_actions(G)
    specs = [RegimeSpec()] + [RegimeSpec((a,)) for a in acts]
    specs += [RegimeSpec(p) for p in itertools.combinations(acts, 2)]
    return [s for s in specs if valid(s, G)]


# -- bundled examples ----------------------------------------------------

def fixture_text(name: str, fname: str) -> str:
    from ctfid.cli import FIXTURES
    return (FIXTURES / name / fname).read_text()


def fixture_graph(name: str, fname: str = "graph.cg") -> CausalDiagram:
    from ctfid.graph import parse_graph
    return parse_graph(fixture_text(name, fname))
