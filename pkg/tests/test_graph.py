import random

import pytest

from ctfid.graph import CausalDiagram, GraphError, format_graph, parse_graph

from helpers import mediation, limit_graph, random_graph


def test_parents_of_outcome_in_mediation_graph():
    assert set(mediation().parents("Y")) == {"X", "Z"}


def test_parents_of_root_is_empty():
    assert mediation().parents("X") == ()


def test_parents_in_limit_graph():
    assert limit_graph().parents("Z") == ("A",)


def test_unknown_variable_raises():
    with pytest.raises(GraphError):
        mediation().parents("Q")


def test_ancestors_reflexive_and_transitive():
    G = limit_graph()
    assert G.ancestors(["Y"]) == {"X", "A", "Y"}
    assert G.ancestors(["X"]) == {"X"}


def test_descendants():
    assert limit_graph().descendants(["A"]) == {"A", "Z", "Y"}


def test_ancestors_cut_matches_mutilated_graph():
    G = limit_graph()
    assert G.ancestors_cut(["Y"], cut_into=["A"]) == G.mutilate(["A"]).ancestors(["Y"]) == {"A", "Y"}
    assert G.ancestors_cut(["Y"], cut_outof=["X"]) == {"A", "Y"}


def test_c_components_partition():
    G = limit_graph()
    blocks = G.c_components()
    assert sorted(map(sorted, blocks)) == [["A", "Y"], ["X", "Z"]]
    assert frozenset().union(*blocks) == set(G.variables)


def test_components_within_subset():
    G = limit_graph()
    assert sorted(map(sorted, G.components_within(["A", "Y", "Z"]))) == [["A", "Y"], ["Z"]]


def test_mutilate_drops_bidirected_into_cut_and_is_idempotent():
    G = limit_graph()
    M = G.mutilate(["A"], ["X"])
    assert ("A", "Y") not in M.bidirected and ("X", "Z") in M.bidirected
    assert ("X", "A") not in M.directed
    assert M.mutilate(["A"], ["X"]) == M


def test_cycle_and_self_loop_rejected():
    with pytest.raises(GraphError):
        CausalDiagram(["A", "B"], [("A", "B"), ("B", "A")])
    with pytest.raises(GraphError):
        CausalDiagram(["A"], [("A", "A")])
    with pytest.raises(GraphError):
        CausalDiagram(["A"], [], [("A", "B")])


def test_bidirected_stored_canonically():
    G = CausalDiagram(["A", "B"], [], [("B", "A"), ("A", "B")])
    assert G.bidirected == {("A", "B")}


def test_parse_and_format_round_trip():
    text = "# comment\nvar X card 3\nvar Y\nedge X -> Y\nedge X <-> Y\n"
    G = parse_graph(text)
    assert G.card("X") == 3 and G.card("Y") == 2
    assert parse_graph(format_graph(G)) == G


def test_parse_errors():
    with pytest.raises(GraphError):
        parse_graph("var X\nedge X -> Y\n")
    with pytest.raises(GraphError):
        parse_graph("var X\nvar X\n")
    with pytest.raises(GraphError):
        parse_graph("vertex X\n")


def test_random_graph_properties():
    rng = random.Random(5)
    for _ in range(30):
        G = random_graph(rng)
        order = G.topological_order()
        assert sorted(order) == sorted(G.variables)
        pos = {v: i for i, v in enumerate(order)}
        assert all(pos[a] < pos[b] for a, b in G.directed)
        S = set(rng.sample(G.variables, 2))
        A = G.ancestors(S)
        assert S <= A and G.ancestors(A) == A
        assert G.ancestors(S | {G.variables[0]}) >= A


def test_spanning_tree_check():
    G = CausalDiagram(["A", "B", "C"], [], [("A", "B"), ("B", "C")])
    assert G.bidirected_spanning_tree_check(["A", "B", "C"])
    G2 = CausalDiagram(["A", "B", "C"], [], [("A", "B"), ("B", "C"), ("A", "C")])
    assert not G2.bidirected_spanning_tree_check(["A", "B", "C"])
