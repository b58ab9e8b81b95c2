"""Pairs of SCMs witnessing non-identifiability of a ctf-hedge or ctf-thicket.

Both models are parity machines: every latent is a fair bit shared along one
edge of a bidirected spanning tree, and every observed bit is the XOR of its
kept observed parents and latents.  In the second model the root variables
drop everything coming from outside the root set, which keeps the input
table intact but changes the root distribution under intervention.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .engine import _spanning_tree, detect_ctf_hedge
from .expr import CtfEvent, PotentialResponse, Sym
from .graph import CausalDiagram
from .scm import DiscreteSCM, Mechanism, event_table, l3_valuation

__all__ = ["WitnessError", "Witness", "hedge_witness", "thicket_witness",
           "symbolic_table_events", "EPSILON"]

EPSILON = 1e-3
AGREE_TOL = 1e-12
GAP_MIN = 0.05


class WitnessError(ValueError):
    pass


@dataclass
class Witness:
    M1: DiscreteSCM
    M2: DiscreteSCM
    agreement: float                # max |P1 - P2| over the input tables
    gap: float                      # |P1(C=c) - P2(C=c)|
    parity_gap: float | None = None
    smoothed: bool = False
    transcript: list = field(default_factory=list)
    valid: bool = True
    raw: tuple | None = None        # (agreement, gap) before smoothing


def symbolic_table_events(T: Sequence[CtfEvent], G: CausalDiagram, card=None):
    """Generalize a chained conjunction to the table over its own values.

    Each value becomes a symbol; a subscript that repeats the value of a
    variable in ``T`` reuses that variable's symbol, other subscripts stay
    fixed.  Returns ``(events, syms)``.
    """
    card = card or G.card
    val = {e.var: e.value for e in T}
    sym = {v: Sym(v.lower(), v, card(v), "q") for v in val}
    out = []
    for e in T:
        sub = tuple((k, sym[k] if k in val and t == val[k] else t) for k, t in e.response.subscript)
        out.append(CtfEvent(PotentialResponse(e.var, sub), sym[e.var]))
    return out, [sym[e.var] for e in T]


def _hedge_structure(G: CausalDiagram, T, C):
    vs = [e.var for e in T]
    cvars = {e.var for e in C}
    sub = G.induced_subgraph(vs)
    # chain edges only: directed edges inside the root set are dropped
    parents = {v: [p for p in sub.parents(v) if not (v in cvars and p in cvars)] for v in vs}
    tree = _spanning_tree(G, vs)
    return vs, cvars, parents, tree


def _xor_table(in_cards, fn):
    rows = [fn(combo) for combo in itertools.product(*(range(k) for k in in_cards))]
    return np.array(rows, dtype=np.int64)


def _build(G: CausalDiagram, hedges, C, nbits: int, drop_cross: bool, eps: float):
    """Assemble one a-bit parity SCM over all variables of ``G``.

    ``hedges`` is a list of ``(vars, parents, tree)``; bit ``i`` follows
    hedge ``i``.  With ``drop_cross`` the roots ignore inputs from outside
    the roots (the second model).
    """
    cvals = {e.var: int(e.value) for e in C}
    cvars = set(cvals)
    card = 2 ** nbits
    names = list(G.variables)
    # latent per tree edge; bit i used iff the edge is in hedge i's tree
    edge_bits: dict = {}
    for i, (_, _, tree) in enumerate(hedges):
        for a, b in tree:
            key = tuple(sorted((a, b), key=G.index))
            edge_bits.setdefault(key, []).append(i)
    exo = []
    lat_of: dict = {v: [] for v in names}
    for (a, b), bits in edge_bits.items():
        u = f"U_{a}_{b}"
        k = 2 ** len(bits)
        exo.append((u, k, np.full(k, 1.0 / k)))
        lat_of[a].append((u, bits, b))
        lat_of[b].append((u, bits, a))
    # private fair bits for hedges a variable is not part of
    priv: dict = {}
    for v in names:
        missing = [i for i, (vs, _, _) in enumerate(hedges) if v not in vs]
        if missing:
            u = f"R_{v}"
            k = 2 ** len(missing)
            exo.append((u, k, np.full(k, 1.0 / k)))
            priv[v] = (u, missing)
    noise: dict = {}
    if eps > 0:
        for v in G.sort(cvars):
            u = f"N_{v}"
            p = np.zeros(card)
            p[0] = 1 - eps
            p[1:] = eps / (card - 1)
            exo.append((u, card, p))
            noise[v] = u
    exo_cards = {u: k for u, k, _ in exo}

    mechs = {}
    for v in names:
        obs_par: list = []
        for i, (vs, parents, _) in enumerate(hedges):
            if v not in vs:
                continue
            for p in parents[v]:
                if drop_cross and v in cvars and p not in cvars:
                    continue
                if p not in obs_par:
                    obs_par.append(p)
        lats = [(u, bits) for u, bits, other in lat_of[v]
                if not (drop_cross and v in cvars and other not in cvars)]
        exo_par = [u for u, _ in lats]
        if v in priv:
            exo_par.append(priv[v][0])
        if v in noise:
            exo_par.append(noise[v])
        in_cards = [exo_cards[u] for u in exo_par] + [card] * len(obs_par)
        hedge_par = {i: set(parents[v]) for i, (vs, parents, _) in enumerate(hedges) if v in vs}

        def fn(combo, v=v, exo_par=exo_par, obs_par=obs_par, lats=lats, hedge_par=hedge_par):
            env = dict(zip(exo_par + obs_par, combo))
            out = 0
            for i in range(nbits):
                if i in hedge_par:
                    bit = 0
                    for u, bits in lats:
                        if i in bits:
                            bit ^= (env[u] >> bits.index(i)) & 1
                    for p in obs_par:
                        if p in hedge_par[i]:
                            bit ^= (env[p] >> i) & 1
                else:
                    u, miss = priv[v]
                    bit = (env[u] >> miss.index(i)) & 1
                out |= bit << i
            if v in cvals:
                out ^= cvals[v]
            if v in noise:
                out ^= env[noise[v]]
            return out

        mechs[v] = Mechanism(tuple(exo_par), tuple(obs_par), _xor_table(in_cards, fn))
    # reading a variable in the table makes it a graph parent even if only some
    # bits matter; fine for a witness, whose diagram need only be a subgraph of G
    return DiscreteSCM([(v, card) for v in names], exo, mechs)


def _check_inputs(G, hedges_TC):
    for T, C in hedges_TC:
        if not detect_ctf_hedge(T, C, G):
            raise WitnessError("input is not a ctf-hedge: " + ", ".join(map(repr, T)))


def _compare(M1, M2, tables, C, cvars, transcript):
    agree = 0.0
    for events, syms in tables:
        t1 = event_table(M1, events, syms)
        t2 = event_table(M2, events, syms)
        agree = max(agree, float(np.abs(t1 - t2).max()))
    p1 = l3_valuation(M1, C)
    p2 = l3_valuation(M2, C)
    transcript.append(f"input tables: max |P1 - P2| = {agree:.3e}")
    transcript.append(f"target P(C=c): P1 = {p1:.6f}, P2 = {p2:.6f}, gap = {abs(p1 - p2):.6f}")
    return agree, abs(p1 - p2)


def _parity_gap(M1, M2, C, nbits):
    """Gap on the event 'every root bit sums to even' (values relative to c)."""
    vals = [range(M1.cards[e.var]) for e in C]
    out = []
    for M in (M1, M2):
        tot = 0.0
        for combo in itertools.product(*vals):
            x = 0
            for e, c in zip(C, combo):
                x ^= c ^ int(e.value)
            if all(((x >> i) & 1) == 0 for i in range(nbits)):
                tot += l3_valuation(M, [CtfEvent(e.response, c) for e, c in zip(C, combo)])
        out.append(tot)
    return abs(out[0] - out[1])


def _witness(G, hedges_TC, C, smooth: bool, eps: float, strict: bool = True):
    _check_inputs(G, hedges_TC)
    nbits = len(hedges_TC)
    if any(int(e.value) >= 2 ** nbits or int(e.value) < 0 for T, _ in hedges_TC for e in T):
        raise WitnessError(f"values must fit in {nbits} bit(s)")
    structs = []
    for T, Ci in hedges_TC:
        vs, _, parents, tree = _hedge_structure(G, T, Ci)
        structs.append((set(vs), parents, tree))
    cvars = {e.var for e in C}
    card = lambda v: 2 ** nbits  # noqa: E731
    tables = [symbolic_table_events(T, G, card) for T, _ in hedges_TC]
    transcript = [f"{nbits}-bit parity witness over {len(G.variables)} variables"]
    M1 = _build(G, structs, C, nbits, False, 0.0)
    M2 = _build(G, structs, C, nbits, True, 0.0)
    agree, gap = _compare(M1, M2, tables, C, cvars, transcript)
    pgap = _parity_gap(M1, M2, C, nbits)
    transcript.append(f"root parity event gap = {pgap:.6f}")
    ok = agree <= AGREE_TOL and gap >= GAP_MIN
    if not ok and strict:
        raise WitnessError("construction failed its own checks:\n" + "\n".join(transcript))
    w = Witness(M1, M2, agree, gap, pgap, False, transcript, ok)
    if smooth and ok:
        transcript.append(f"smoothing roots with flip noise eps={eps}")
        S1 = _build(G, structs, C, nbits, False, eps)
        S2 = _build(G, structs, C, nbits, True, eps)
        s_agree, s_gap = _compare(S1, S2, tables, C, cvars, transcript)
        s_ok = s_agree <= 1e-9 and s_gap >= GAP_MIN
        if not s_ok and strict:
            raise WitnessError("smoothed witness failed its checks:\n" + "\n".join(transcript))
        w = Witness(S1, S2, s_agree, s_gap, pgap, True, transcript, s_ok, (agree, gap))
    return w


def hedge_witness(G: CausalDiagram, T: Sequence[CtfEvent], C: Sequence[CtfEvent],
                  smooth: bool = False, eps: float = EPSILON, strict: bool = True) -> Witness:
    """Two binary SCMs agreeing on the table of ``T`` but not on ``P(C)``.

    With ``strict`` (the default) a pair failing its own checks raises.
    """
    return _witness(G, [(list(T), list(C))], list(C), smooth, eps, strict)


def thicket_witness(G: CausalDiagram, hedges: Sequence[Sequence[CtfEvent]], C: Sequence[CtfEvent],
                    smooth: bool = False, eps: float = EPSILON, strict: bool = True) -> Witness:
    """Multi-bit witness for several hedges sharing the root ``C``.

    Bit ``i`` of every variable carries the construction for hedge ``i``;
    variables outside hedge ``i`` get a fair private bit there.  The bits
    do not interact, so when some input observes the roots under the
    target's own intervention on another hedge's parents, that hedge's bit
    of the target shows through and the pair can disagree on the inputs;
    ``strict=False`` returns the pair with ``valid`` False in that case.
    """
    C = list(C)
    return _witness(G, [(list(T), C) for T in hedges], C, smooth, eps, strict)
