import itertools
import json
import random

import pytest

from qmflab.errors import BudgetExceeded, ValidationError
from qmflab.netgraph import (
    Edge,
    IDENTITY,
    TensorNetworkGraph,
    load_network,
    make_cut,
    min_cut,
    random_connected_network,
)
from qmflab.wick import (
    IDENTICAL,
    INDEPENDENT,
    Pairing,
    build_closed_network,
    build_cut_pairing,
    build_product_closed_network,
    coefficient_c,
    count_loops,
    direct_reduction,
    enumerate_closed,
    enumerate_moment,
    enumerate_polynomial,
    find_extremes,
    is_direct_pairing,
    reduce_one_step,
    verify_cmax_formula,
)

FIGCONN_SAME = Pairing(((0, 1), (2, 3)))      # (v;1)-(v;2) on both vertices
FIGCONN_CROSSED = Pairing(((0, 3), (2, 1)))


def with_identity_edge(g):
    return TensorNetworkGraph(
        g.name + "+wire", dict(g.degrees), g.edges + (Edge(IDENTITY),)
    ).validate()


def all_pairings(n):
    plain, conj = n.plain_nodes, n.conjugated_nodes
    for perm in itertools.permutations(conj):
        yield Pairing(tuple(zip(plain, perm)))


# ------------------------------------------------------------ construction

def test_closed_network_figconn_k1(figconn):
    n = build_closed_network(figconn, 1)
    assert n.num_nodes == 2 * figconn.num_vertices == 4
    # |E'| = 2|E| - |S| - |T|
    assert n.num_edges == 2 * 6 - 3 - 3 == 6


def test_closed_network_chain_k2(chain_d2):
    n = build_closed_network(chain_d2, 2)
    assert n.num_nodes == 4
    assert n.num_edges == 4


@pytest.mark.parametrize(
    "name", ["figconn", "fignocut", "figSlessT", "chain_d2", "fignum_candidate"]
)
def test_closed_network_node_count_k1(name, request):
    from qmflab import load_fixture

    g = load_fixture(name)
    assert build_closed_network(g, 1).num_nodes == 2 * g.num_vertices


def test_closed_network_rejects_k0(figconn):
    with pytest.raises(ValidationError):
        build_closed_network(figconn, 0)


def test_closed_network_identity_edges_become_free_loops(figconn):
    g = with_identity_edge(figconn)
    for k in (1, 2):
        n = build_closed_network(g, k)
        assert n.free_loops == 1


# ------------------------------------------------------------ loop counting

def test_count_loops_figconn_pairings(figconn):
    n = build_closed_network(figconn, 1)
    assert count_loops(n, FIGCONN_SAME) == 6
    assert count_loops(n, FIGCONN_CROSSED) == 3


def test_count_loops_chain_k2_both_pairings(chain_d2):
    n = build_closed_network(chain_d2, 2)
    for p in all_pairings(n):
        assert count_loops(n, p) == 3


def test_count_loops_rejects_partial_matching(figconn):
    n = build_closed_network(figconn, 1)
    with pytest.raises(ValidationError):
        count_loops(n, Pairing(((0, 1),)))


# -------------------------------------------------------------- enumeration

def test_figconn_first_moment_polynomials(figconn):
    ident = enumerate_moment(figconn, 1, IDENTICAL)
    assert ident.coefficients == {6: 1, 3: 1}
    indep = enumerate_moment(figconn, 1, INDEPENDENT)
    assert indep.coefficients == {6: 1}
    assert ident.evaluate(3) == 756 and indep.evaluate(3) == 729


def test_chain_moment_polynomials(chain_d2):
    assert enumerate_moment(chain_d2, 2, IDENTICAL).coefficients == {3: 2}
    assert enumerate_moment(chain_d2, 3, IDENTICAL).coefficients == {4: 5, 2: 1}


def test_figslesst_k2_polynomial(figslesst):
    poly = enumerate_moment(figslesst, 2, IDENTICAL)
    assert poly.coefficients == {9: 1, 6: 1}


def test_coefficient_sum_counts_pairings(figconn, fignocut):
    for g, k in ((figconn, 2), (fignocut, 2)):
        poly = enumerate_moment(g, k, IDENTICAL)
        assert poly.num_pairings == 24  # (k |V|)! = 4!


def test_first_moment_law_on_fixtures(figconn, fignocut, figslesst, chain_d2,
                                      fignum_candidate):
    for g in (figconn, fignocut, figslesst, chain_d2, fignum_candidate):
        poly = enumerate_moment(g, 1, IDENTICAL)
        assert poly.c_max == g.num_edges
        assert poly.n_max == 1


@pytest.mark.parametrize("seed", range(8))
def test_first_moment_law_on_random_networks(seed):
    rng = random.Random(3000 + seed)
    try:
        g = random_connected_network(rng.randint(1, 4), 3, 2, 1, rng)
    except ValidationError:
        return
    n = build_closed_network(g, 1)
    rep = find_extremes(n, IDENTICAL)
    assert rep.c_max == g.num_edges and rep.n_max == 1
    # the unique maximal pairing matches each vertex copy with its conjugate
    expected = tuple((i, i + 1) for i in range(0, n.num_nodes, 2))
    assert rep.maximal[0].matches == expected


def test_enumeration_is_partition_mergeable(figconn):
    n = build_closed_network(figconn, 2)
    whole = enumerate_closed(n, IDENTICAL)
    parts = [
        enumerate_closed(n, IDENTICAL, first_match=(n.plain_nodes[0], c))
        for c in n.conjugated_nodes
    ]
    merged = {}
    for m in parts:
        for e, c in m.items():
            merged[e] = merged.get(e, 0) + c
    assert merged == whole


def test_parallel_jobs_agree(figconn):
    n = build_closed_network(figconn, 2)
    assert enumerate_polynomial(n, IDENTICAL, jobs=2) == enumerate_closed(n, IDENTICAL)


def test_budget_exceeded(figconn):
    with pytest.raises(BudgetExceeded, match="Monte Carlo"):
        enumerate_moment(figconn, 2, IDENTICAL, budget=10)


# -------------------------------------------------------------- cut pairing

def test_cut_pairing_fignocut_k2(fignocut):
    cut = min_cut(fignocut).cut
    p = build_cut_pairing(fignocut, cut, 2)
    assert p.loop_count == 2 * 5 - 2 == 8
    n = build_closed_network(fignocut, 2)
    assert count_loops(n, p) == 8


def test_cut_pairing_k1_is_the_unique_maximum(figconn):
    cut = min_cut(figconn).cut
    p = build_cut_pairing(figconn, cut, 1)
    assert p.loop_count == figconn.num_edges
    assert p.matches == FIGCONN_SAME.matches


def test_cut_pairing_figslesst_k2(figslesst):
    cut = min_cut(figslesst).cut
    p = build_cut_pairing(figslesst, cut, 2)
    assert p.loop_count == 2 * figslesst.num_edges - min_cut(figslesst).mc == 9


def test_cut_pairing_rejects_non_minimal_cut(figconn):
    trivial = make_cut(figconn, [])  # size 3 > mc = 2
    with pytest.raises(ValidationError, match="not minimal"):
        build_cut_pairing(figconn, trivial, 2)


def test_cut_pairing_with_identity_edges(fignocut):
    g = with_identity_edge(fignocut)
    cut = min_cut(g).cut
    p = build_cut_pairing(g, cut, 2)
    assert p.loop_count == 2 * g.num_edges - (2 - 1) * min_cut(g).mc


# ---------------------------------------------------------------- products

def test_product_closed_network_union(figconn):
    n = build_closed_network(figconn, 1)
    prod = build_product_closed_network([n, n])
    assert prod.num_nodes == 8
    parts = {nd.part for nd in prod.nodes}
    assert parts == {0, 1}


def test_product_polynomial_dominates_product_of_polynomials(figconn):
    n = build_closed_network(figconn, 1)
    single = enumerate_closed(n, IDENTICAL)
    prod = enumerate_closed(build_product_closed_network([n, n]), IDENTICAL)
    square = {}
    for e1, c1 in single.items():
        for e2, c2 in single.items():
            square[e1 + e2] = square.get(e1 + e2, 0) + c1 * c2
    for e, c in square.items():
        assert prod.get(e, 0) >= c
    # leading term is additive with multiplying coefficients
    assert max(prod) == 2 * max(single)
    assert prod[max(prod)] == single[max(single)] ** 2


def test_variance_product_leading_term(chain_d2):
    # tr((L^dag L)^2)^2 realized as a two-factor product network
    n = build_closed_network(chain_d2, 2)
    prod = build_product_closed_network([n, n])
    rep_single = find_extremes(n, IDENTICAL)
    rep_prod = find_extremes(prod, IDENTICAL)
    assert rep_prod.c_max == 2 * rep_single.c_max
    assert rep_prod.n_max == rep_single.n_max**2


# -------------------------------------------------------------- reductions

def test_reduce_figconn_same_vertex(figconn):
    n = build_closed_network(figconn, 1)
    reduced, created = reduce_one_step(n, 0, 1)
    assert created == 3
    assert reduced.num_nodes == 2


def test_reduce_chain_to_empty(chain_d2):
    n = build_closed_network(chain_d2, 1)
    reduced, created = reduce_one_step(n, 0, 1)
    assert created == n.num_edges == 2
    assert reduced.num_nodes == 0 and reduced.num_edges == 0


def test_reduce_requires_slot_matched_edge(figconn):
    n = build_closed_network(figconn, 1)
    with pytest.raises(ValidationError, match="no slot-matched edge"):
        reduce_one_step(n, 0, 3)  # (v1;1) with (v2;2): no shared edge


def test_reduce_splices_slots(fignocut):
    n = build_closed_network(fignocut, 1)
    # nodes: (v1;1)=0, (v1;2)=1, (v2;1)=2, (v2;2)=3
    reduced, created = reduce_one_step(n, 0, 1)
    # v1 wires: its input and output copies; the closed-edge copies splice
    # into a single (v2;1)-(v2;2) edge at slot 3
    assert created == 2
    assert reduced.num_nodes == 2
    assert sorted(e[1] for e in reduced.edges) == [1, 2, 3]


def _random_pairing(n, rng):
    conj = list(n.conjugated_nodes)
    rng.shuffle(conj)
    return Pairing(tuple(zip(n.plain_nodes, conj)))


@pytest.mark.parametrize("seed", range(20))
def test_created_loops_additivity(seed, figconn, fignocut, chain_d2):
    rng = random.Random(4000 + seed)
    g = rng.choice([figconn, fignocut, chain_d2])
    k = rng.choice([1, 2])
    n = build_closed_network(g, k)
    p = _random_pairing(n, rng)
    total = count_loops(n, p)
    pairs = {a: b for a, b in p.matches}
    reducible = [
        (a, b) for a, b in p.matches
        if any(
            {e[0], e[2]} == {a, b} and e[1] == e[3] and e[0] != e[2]
            for e in n.edges
        )
    ]
    if not reducible:
        return
    a, b = rng.choice(reducible)
    keep = [i for i in range(n.num_nodes) if i not in (a, b)]
    remap = {old: new for new, old in enumerate(keep)}
    reduced, created = reduce_one_step(n, a, b)
    inner = Pairing(
        tuple(
            sorted(
                (remap[x], remap[y]) for x, y in p.matches if x != a
            )
        )
    )
    assert count_loops(reduced, inner) + created == total


def test_ndsp_bound_exhaustively(figconn, chain_d2, fignocut):
    # pairings admitting no one-step reduction have at most |E'|/2 loops
    for g, k in ((figconn, 1), (figconn, 2), (chain_d2, 2), (chain_d2, 3),
                 (fignocut, 2)):
        n = build_closed_network(g, k)
        for p in all_pairings(n):
            reducible = any(
                {e[0], e[2]} == {a, b} and e[1] == e[3] and e[0] != e[2]
                for a, b in p.matches
                for e in n.edges
            )
            if not reducible:
                assert count_loops(n, p) <= n.num_edges / 2


# ---------------------------------------------------------- direct pairings

def test_crossed_pairing_is_not_direct(figconn):
    n = build_closed_network(figconn, 1)
    assert is_direct_pairing(n, FIGCONN_SAME)
    assert not is_direct_pairing(n, FIGCONN_CROSSED)


def test_maximal_pairings_are_direct(figconn, fignocut, chain_d2):
    for g in (figconn, fignocut, chain_d2):
        for k in (1, 2, 3):
            n = build_closed_network(g, k)
            rep = find_extremes(n, IDENTICAL)
            for p in rep.maximal:
                assert is_direct_pairing(n, p)


def test_cut_pairings_are_direct(fignocut, figslesst):
    for g, k in ((fignocut, 2), (figslesst, 2), (fignocut, 3)):
        p = build_cut_pairing(g, min_cut(g).cut, k)
        assert is_direct_pairing(build_closed_network(g, k), p)


def test_direct_reduction_reports_created_total(chain_d2):
    n = build_closed_network(chain_d2, 2)
    rep = find_extremes(n, IDENTICAL)
    p = rep.maximal[0]
    stuck, partial = direct_reduction(n, p)
    assert stuck.num_nodes == 0
    assert partial.created_loops + stuck.free_loops == count_loops(n, p)


# ------------------------------------------------- leading-order structure

def test_cmax_formula_fixtures(figconn, fignocut, figslesst, chain_d2):
    for g in (figconn, fignocut, figslesst, chain_d2):
        report = verify_cmax_formula(g, 3)
        mc = min_cut(g).mc
        for row in report.rows:
            assert row.c_max == row.k * g.num_edges - (row.k - 1) * mc
            assert row.all_maximal_direct
        assert report.envelope_ok


def test_cmax_fignum_candidate(fignum_candidate):
    report = verify_cmax_formula(fignum_candidate, 3)
    assert [r.c_max for r in report.rows] == [8, 14, 20]


def test_coefficients_case_i(figslesst):
    assert [coefficient_c(figslesst, k) for k in (1, 2, 3)] == [1, 1, 1]


def test_coefficients_case_iii_match_catalan(chain_d2, fignocut):
    assert [coefficient_c(chain_d2, k) for k in (1, 2, 3)] == [1, 2, 5]
    assert [coefficient_c(fignocut, k) for k in (1, 2, 3)] == [1, 2, 5]


def test_ensemble_agreement(figconn, fignocut, figslesst, chain_d2):
    for g in (figconn, fignocut, figslesst, chain_d2):
        for k in (1, 2):
            n = build_closed_network(g, k)
            ident = find_extremes(n, IDENTICAL)
            indep = find_extremes(n, INDEPENDENT)
            assert (ident.c_max, ident.n_max) == (indep.c_max, indep.n_max)


def test_lower_order_coefficients_may_differ(figconn):
    ident = enumerate_moment(figconn, 1, IDENTICAL).coefficients
    indep = enumerate_moment(figconn, 1, INDEPENDENT).coefficients
    assert ident != indep
    assert max(ident) == max(indep) and ident[max(ident)] == indep[max(indep)]


def test_identity_edge_scaling(figconn, chain_d2):
    for g in (figconn, chain_d2):
        extended = with_identity_edge(g)
        assert extended.num_edges == g.num_edges + 1
        assert min_cut(extended).mc == min_cut(g).mc + 1
        for k in (1, 2):
            base = enumerate_moment(g, k, IDENTICAL)
            lifted = enumerate_moment(extended, k, IDENTICAL)
            assert lifted.coefficients == base.shifted(1).coefficients


def test_identical_ensemble_needs_uniform_degree():
    g = load_network(json.dumps({
        "name": "mixed",
        "vertices": [{"id": "a", "degree": 2}, {"id": "b", "degree": 4}],
        "edges": [
            {"kind": "input", "end": {"vertex": "a", "slot": 1}},
            {"kind": "closed", "ends": [{"vertex": "a", "slot": 2}, {"vertex": "b", "slot": 1}]},
            {"kind": "closed", "ends": [{"vertex": "b", "slot": 2}, {"vertex": "b", "slot": 3}]},
            {"kind": "output", "end": {"vertex": "b", "slot": 4}},
        ],
    }))
    with pytest.raises(ValidationError, match="degree"):
        enumerate_moment(g, 1, IDENTICAL)
    poly = enumerate_moment(g, 1, INDEPENDENT)
    assert poly.c_max == g.num_edges


def test_moment_polynomial_serialization(figconn):
    doc = enumerate_moment(figconn, 1, IDENTICAL).to_jsonable()
    assert doc["coefficients"] == {"3": 1, "6": 1}
    assert doc["c_max"] == 6 and doc["n_max"] == 1
    assert doc["ensemble"] == IDENTICAL and doc["network"] == "figconn"
