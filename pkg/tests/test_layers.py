import pytest

from ctfid.dsl import parse_conjunction, parse_query
from ctfid.layers import LAYERS, classify_layer, conflicting_ancestors, realizable_check

from helpers import bow, mediation, limit_graph, fixture_graph, fixture_text


def _layer_cases():
    out = []
    for line in fixture_text("layer-limit", "queries.txt").splitlines():
        if line.strip() and not line.startswith("#"):
            q, layer = (s.strip() for s in line.split(";"))
            out.append((q, layer))
    return out


@pytest.mark.parametrize("text, layer", _layer_cases())
def test_limit_graph_hierarchy(text, layer):
    G = fixture_graph("layer-limit")
    assert classify_layer(G, parse_query(text, G)) == layer


def test_fixture_covers_every_layer():
    assert {layer for _, layer in _layer_cases()} == set(LAYERS)


def test_realizability_depends_on_the_graph():
    q = fixture_text("realizability", "query.txt")
    G1 = fixture_graph("realizability", "g1.cg")
    G2 = fixture_graph("realizability", "g2.cg")
    assert realizable_check(G1, parse_query(q, G1).all_events)
    assert not realizable_check(G2, parse_query(q, G2).all_events)
    pairs = conflicting_ancestors(G2, parse_query(q, G2).all_events)
    assert {r.variable for pair in pairs for r in pair} == {"A"}


def test_ett_is_realizable_but_two_worlds_of_y_are_not():
    G = bow()
    assert realizable_check(G, parse_conjunction("Y[X=1]=1, X=0", G))
    assert classify_layer(G, parse_query("P(Y[X=1]=1 | X=0)", G)) == "L2.25"
    assert not realizable_check(G, parse_conjunction("Y[X=1]=1, Y[X=0]=0", G))
    assert classify_layer(G, parse_query("P(Y[X=1]=1, Y[X=0]=0)", G)) == "L3-not-L2.5"


def test_interventional_query_is_l2():
    G = mediation()
    assert classify_layer(G, parse_query("P(Y[X=1]=1, Z[X=1]=0)", G)) == "L2"
    # the Z subscript is dropped by exclusion once Y is intervened on X only
    assert classify_layer(G, parse_query("P(Y[X=1]=1)", G)) == "L2"


def test_nested_natural_direct_effect_is_realizable():
    G = mediation()
    assert classify_layer(G, parse_query("P(Y[X=1, Z=Z[X=0]]=1)", G)) == "L2.5"


def test_classification_accepts_event_lists():
    G = limit_graph()
    assert classify_layer(G, parse_conjunction("Y=1, Z=0", G)) == "L1"
