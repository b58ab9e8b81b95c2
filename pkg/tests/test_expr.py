import itertools

import numpy as np
import pytest

from ctfid.dsl import DSLError, parse_conjunction, parse_query, render_query
from ctfid.expr import (CtfConjunction, ExprError, Fresh, PotentialResponse, Query,
                        ancestral_set_transform, collapse, ctf_ancestors, ctf_component_table,
                        ctf_factorize, exclusion, is_consistent, is_ctf_factor, subst_event,
                        trivial_conflict, unnest)
from ctfid.graph import CausalDiagram
from ctfid.scm import l3_valuation, random_scm

from helpers import ev, mediation, limit_graph, ctf_data_graph, frontdoor

pr = PotentialResponse.make


def _sum_over(M, events, syms):
    total = 0.0
    for combo in itertools.product(*(range(s.card) for s in syms)):
        env = dict(zip(syms, combo))
        total += l3_valuation(M, [subst_event(e, env) for e in events])
    return total


# -- conjunctions --------------------------------------------------------

def test_conjunction_dedup_and_set_equality():
    a, b = ev("Y", 1, X=1), ev("X", 0)
    assert len(CtfConjunction([a, b, a])) == 2
    assert CtfConjunction([a, b]) == CtfConjunction([b, a])


def test_value_sensitive_terms_are_distinct():
    assert ev("Y", 1, X=1) != ev("Y", 1, X=0)


def test_query_needs_events():
    with pytest.raises(ExprError):
        Query(CtfConjunction([]))


# -- DSL -------------------------------------------------------------------

def test_parse_simple_conditional():
    q = parse_query("P(Y[X=1] = 1 | X = 0)", mediation())
    assert list(q.joint) == [ev("Y", 1, X=1)]
    assert list(q.given) == [ev("X", 0)]


def test_parse_nested_subscript():
    q = parse_query("P(Y[X=1, Z=Z[X=0]] = 1)", mediation())
    (e,) = q.joint
    assert e.response.sub["Z"] == pr("Z", {"X": 0})
    assert e.response.sub["X"] == 1


def test_parse_conflicting_events_is_legal():
    q = parse_query("P(Y[X=1] = 1, Y[X=1] = 0)", mediation())
    assert len(q.joint) == 2


def test_value_names_bind_to_distinct_integers():
    G = CausalDiagram(["X", "Y"], [("X", "Y")], [], {"X": 3})
    q = parse_query("P(Y[X=x]=y | X=x', Y=y)", G)
    assert q.joint.events[0].response.sub["X"] == 0
    assert q.given.events[0].value == 1
    assert q.joint.events[0].value == q.given.events[1].value == 0


def test_value_names_avoid_explicit_integers():
    q = parse_query("P(Y[X=x]=1 | X=0)", mediation())
    assert q.joint.events[0].response.sub["X"] == 1


@pytest.mark.parametrize("text", [
    "P(Y[X=1]=1 | X=0)",
    "P(Y[X=1, Z=Z[X=0]]=1)",
    "P(Y[X=1]=1, Y[X=1]=0)",
    "P(Z=1, Y[Z=0]=1 | X=1)",
])
def test_render_round_trip(text):
    q = parse_query(text, mediation())
    assert parse_query(render_query(q), mediation()) == q


@pytest.mark.parametrize("text, fragment", [
    ("P(Q=1)", "unknown variable"),
    ("P(Y[X=2]=1)", "out of domain"),
    ("P(Y[X=1]=1", "expected ')'"),
    ("P(Y[X=1]=1) extra", "trailing"),
    ("Q(Y=1)", "starts with"),
    ("P(Y[Y=0]=1)", "own subscript"),
    ("P(Y[X=x, Z=z]=y, X=x', X=x'')", "out of domain"),
])
def test_parse_errors_report_position(text, fragment):
    with pytest.raises(DSLError) as err:
        parse_query(text, mediation())
    assert fragment in str(err.value)
    assert "column" in str(err.value) or fragment == "unknown variable"


def test_parse_conjunction():
    assert parse_conjunction("X=0, Y[X=1]=1", mediation()) == [ev("X", 0), ev("Y", 1, X=1)]


# -- unnest ----------------------------------------------------------------

def test_unnest_single_level():
    G = mediation()
    e = parse_query("P(Y[X=1, Z=Z[X=0]]=1)", G).joint.events
    flat, sums = unnest(e, G, Fresh())
    (z,) = sums
    assert set(flat) == {ev("Z", z, X=0), ev("Y", 1, X=1, Z=z)}


def test_unnest_already_flat_is_identity():
    G = mediation()
    e = (ev("Y", 1, X=1), ev("X", 0))
    assert unnest(e, G) == (e, [])


def test_unnest_double_nesting_preserves_valuation():
    G = CausalDiagram(["X", "W", "Z", "Y"], [("X", "W"), ("W", "Z"), ("Z", "Y")], [("W", "Y")])
    inner = pr("W", {"X": 1})
    mid = pr("Z", {"W": inner})
    e = [ev("Y", 0, Z=mid)]
    flat, sums = unnest(e, G, Fresh())
    assert len(sums) == 2
    assert {x.var for x in flat} == {"Y", "Z", "W"}
    for seed in range(3):
        M = random_scm(G, seed)
        assert abs(l3_valuation(M, e) - _sum_over(M, flat, sums)) < 1e-9


def test_unnest_preserves_valuation_on_mediation_graph():
    G = mediation()
    e = parse_query("P(Y[X=1, Z=Z[X=0]]=1, X=0)", G).joint.events
    flat, sums = unnest(e, G, Fresh())
    for seed in range(3):
        M = random_scm(G, seed)
        assert abs(l3_valuation(M, e) - _sum_over(M, flat, sums)) < 1e-9


# -- exclusion ---------------------------------------------------------------

def test_exclusion_limit_graph_drops_non_ancestor():
    G = limit_graph()
    r = pr("Y", {"X": 0, "Z": 1})
    assert exclusion(r, G) == pr("Y", {"X": 0})
    for seed in range(3):
        M = random_scm(G, seed)
        for y in (0, 1):
            assert abs(l3_valuation(M, [ev("Y", y, X=0, Z=1)]) - l3_valuation(M, [ev("Y", y, X=0)])) < 1e-12


def test_exclusion_minimal_is_identity():
    G = mediation()
    r = pr("Y", {"X": 0, "Z": 1})
    assert exclusion(r, G) == r


def test_exclusion_non_ancestor_gives_natural():
    G = CausalDiagram(["W", "Y"], [], [])
    assert exclusion(pr("Y", {"W": 1}), G) == pr("Y")


def test_exclusion_through_intercepted_path():
    G = limit_graph()
    assert exclusion(pr("Y", {"X": 0, "A": 1}), G) == pr("Y", {"A": 1})


# -- counterfactual ancestors -------------------------------------------------

def test_ctf_ancestors_of_intervened_outcome():
    G = mediation()
    assert set(ctf_ancestors([pr("Y", {"X": 0})], G)) == {pr("Y", {"X": 0}), pr("Z", {"X": 0})}


def test_ctf_ancestors_under_mediator_intervention():
    G = mediation()
    assert set(ctf_ancestors([pr("Y", {"Z": 0})], G)) == {pr("Y", {"Z": 0}), pr("X")}


def test_ctf_ancestors_of_root():
    assert ctf_ancestors([pr("X")], mediation()) == (pr("X"),)


# -- ancestral set transformation ------------------------------------------------

def test_ast_mediation_example():
    G = mediation()
    events = [ev("Y", 1, X=1), ev("Z", 0, X=1), ev("X", 0)]
    out = ancestral_set_transform(events, G)
    assert set(out) == {ev("Y", 1, X=1, Z=0), ev("Z", 0, X=1), ev("X", 0)}
    for seed in range(3):
        M = random_scm(G, seed)
        assert abs(l3_valuation(M, events) - l3_valuation(M, out)) < 1e-12


def test_ast_roots_unchanged():
    G = CausalDiagram(["A", "B"], [], [])
    events = (ev("A", 0), ev("B", 1))
    assert ancestral_set_transform(events, G) == events


def test_ast_frontdoor_chain():
    G = frontdoor()
    out = ancestral_set_transform([ev("X", 0), ev("Z", 1), ev("Y", 1)], G)
    assert set(out) == {ev("X", 0), ev("Z", 1, X=0), ev("Y", 1, Z=1)}
    assert is_ctf_factor(out, G)


def test_ast_rejects_non_ancestral():
    with pytest.raises(ExprError):
        ancestral_set_transform([ev("Y", 1, X=1)], mediation())


# -- factorization ---------------------------------------------------------------

def test_ctf_factorize_frontdoor():
    G = frontdoor()
    f = [ev("X", 0), ev("Z", 1, X=0), ev("Y", 1, Z=1)]
    blocks = [set(b) for b in ctf_factorize(f, G)]
    assert {ev("X", 0), ev("Y", 1, Z=1)} in blocks
    assert {ev("Z", 1, X=0)} in blocks and len(blocks) == 2


def test_ctf_factorize_single_block():
    G = CausalDiagram(["X", "Y"], [("X", "Y")], [("X", "Y")])
    f = [ev("X", 0), ev("Y", 1, X=0)]
    assert ctf_factorize(f, G) == [tuple(f)]


def test_component_tables_recompose_joint():
    G = mediation()
    M = random_scm(G, 4)
    order = ["X", "Z", "Y"]
    joint = np.zeros((2, 2, 2))
    for x, z, y in itertools.product(range(2), repeat=3):
        joint[x, z, y] = l3_valuation(M, [ev("X", x), ev("Z", z), ev("Y", y)])
    tables = [ctf_component_table(joint, order, b) for b in G.c_components()]
    assert np.allclose(np.prod(tables, axis=0), joint, atol=1e-9)
    for t in tables:
        assert (t >= 0).all()


def test_component_table_zero_marginal():
    joint = np.array([[0.5, 0.5], [0.0, 0.0]])
    with pytest.raises(ZeroDivisionError):
        ctf_component_table(joint, ["A", "B"], ["B"])


# -- consistency and conflicts ---------------------------------------------------

def test_inconsistent_factor():
    # the outcome reads W=0 while the factor measures W=1
    assert not is_consistent([ev("Y", 0, B=0, W=0), ev("W", 1, D=0)])


def test_consistent_factor_and_collapse():
    f = [ev("A", 0, D=1), ev("B", 0, A=0, X=1)]
    assert is_consistent(f)
    C, v = collapse(f)
    assert C == ("A", "B") and v == {"A": 0, "D": 1, "B": 0, "X": 1}


def test_singleton_consistent_and_collapse_rejects_inconsistent():
    assert is_consistent([ev("Y", 1, X=0)])
    with pytest.raises(ExprError):
        collapse([ev("Y", 0, W=0), ev("W", 1)])


def test_trivial_conflicts():
    assert trivial_conflict([ev("Y", 1, X=1), ev("Y", 0, X=1)])
    assert trivial_conflict([ev("Y", 0, Y=1)])
    assert not trivial_conflict([ev("Y", 1, X=1), ev("Y", 0, X=0)])


def test_ctf_data_graph_is_acyclic():
    assert len(ctf_data_graph().topological_order()) == 8
