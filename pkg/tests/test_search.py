import numpy as np
import pytest

from genmrp.graph import dual_from_adjacency
from genmrp.oracles import (
    brute_pareto_vectors,
    brute_shortest,
    pairwise_nondominated,
    random_dual,
)
from genmrp.search import (
    SearchError,
    bidirectional_cost,
    bidirectional_dijkstra,
    dijkstra_path,
    dominance_filter,
    mosp,
    penalty_alternatives,
)


def diamond(branch_a=(2.0,), branch_b=(4.0,)):
    # 0 -> {1 | 2} -> 3
    g = dual_from_adjacency(4, [(0, 1), (0, 2), (1, 3), (2, 3)])
    costs = np.array([1.0, branch_a[0], branch_b[0], 1.0])
    return g, costs


def chain(n):
    return dual_from_adjacency(n, [(i, i + 1) for i in range(n - 1)])


def test_origin_equals_destination():
    g, c = diamond()
    r = bidirectional_dijkstra(g, c, 2, 2)
    assert r.links == (2,)
    assert bidirectional_cost(g, c, 2, 2)[0] == c[2]


def test_diamond_prefers_cheaper_branch():
    g, c = diamond()
    assert bidirectional_dijkstra(g, c, 0, 3).links == (0, 1, 3)
    g, c = diamond((5.0,), (4.0,))
    assert bidirectional_dijkstra(g, c, 0, 3).links == (0, 2, 3)


def test_tie_breaks_to_lexicographically_smallest():
    g, c = diamond((3.0,), (3.0,))
    assert bidirectional_dijkstra(g, c, 0, 3).links == (0, 1, 3)
    assert dijkstra_path(g, c, 0, 3)[1] == [0, 1, 3]


def test_unreachable_returns_none():
    g = dual_from_adjacency(3, [(0, 1)])
    assert bidirectional_dijkstra(g, np.ones(3), 0, 2) is None
    assert dijkstra_path(g, np.ones(3), 0, 2) is None


def test_negative_cost_rejected():
    g, c = diamond()
    c[1] = -1
    with pytest.raises(SearchError):
        bidirectional_dijkstra(g, c, 0, 3)


@pytest.mark.parametrize("seed", range(40))
def test_random_graphs_match_oracles(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 13))
    g = random_dual(rng, n, p_edge=rng.uniform(0.15, 0.45))
    c = rng.integers(1, 10, size=n).astype(float)
    o, t = (int(x) for x in rng.integers(0, n, size=2))
    ref = brute_shortest(g, c, o, t)
    bi = bidirectional_cost(g, c, o, t)
    uni = dijkstra_path(g, c, o, t)
    if ref is None:
        assert bi is None and uni is None
        return
    assert bi[0] == uni[0] == ref[0]
    assert tuple(bi[1]) == tuple(uni[1]) == ref[1]


def test_penalty_k1_is_shortest():
    g, c = diamond()
    alts = penalty_alternatives(g, c, 0, 3, k=1)
    assert [r.links for r in alts] == [bidirectional_dijkstra(g, c, 0, 3).links]


def test_penalty_diamond_two_branches():
    g, c = diamond((2.0,), (2.5,))
    alts = penalty_alternatives(g, c, 0, 3, k=2, penalty_factor=1.5)
    assert {r.links for r in alts} == {(0, 1, 3), (0, 2, 3)}
    assert c.tolist() == [1.0, 2.0, 2.5, 1.0]


def test_penalty_single_path():
    g = chain(4)
    alts = penalty_alternatives(g, np.ones(4), 0, 3, k=3)
    assert [r.links for r in alts] == [(0, 1, 2, 3)]


def test_penalty_unreachable_empty():
    g = dual_from_adjacency(3, [(0, 1)])
    assert penalty_alternatives(g, np.ones(3), 0, 2, k=3) == []


@pytest.mark.parametrize("seed", range(15))
def test_penalty_routes_distinct(seed):
    rng = np.random.default_rng(100 + seed)
    g = random_dual(rng, 12, 0.35)
    c = rng.uniform(1, 5, 12)
    alts = penalty_alternatives(g, c, 0, 11, k=4)
    seqs = [r.links for r in alts]
    assert len(seqs) == len(set(seqs))
    for s in seqs:
        assert g.is_valid_path(s) and s[0] == 0 and s[-1] == 11


def test_dominance_examples():
    assert dominance_filter([(1, 2), (2, 1), (2, 2)]) == [0, 1]
    assert dominance_filter([(3, 3)]) == [0]
    assert dominance_filter([(1, 1), (1, 1), (1, 1)]) == [0]
    assert dominance_filter([]) == []
    assert dominance_filter([(1, 2), (2, 1), (2, 2)], sense="max") == [2]


@pytest.mark.parametrize("seed", range(25))
def test_dominance_matches_pairwise(seed):
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, 4, size=(int(rng.integers(1, 30)), int(rng.integers(1, 5))))
    assert dominance_filter(pts) == pairwise_nondominated(pts.tolist())


def test_mosp_collinear_single_route():
    g, c = diamond()
    mc = np.stack([c, 2 * c], axis=1)
    res = mosp(g, mc, 0, 3)
    assert [r.links for r in res.routes] == [(0, 1, 3)]
    assert not res.approximate


def test_mosp_diamond_tradeoff():
    g = dual_from_adjacency(4, [(0, 1), (0, 2), (1, 3), (2, 3)])
    mc = np.array([[0, 0], [1, 3], [3, 1], [0, 0]], dtype=float)
    res = mosp(g, mc, 0, 3)
    assert {r.links for r in res.routes} == {(0, 1, 3), (0, 2, 3)}


@pytest.mark.parametrize("seed", range(25))
def test_mosp_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    g = random_dual(rng, 10, 0.3)
    mc = rng.integers(1, 6, size=(10, 2)).astype(float)
    res = mosp(g, mc, 0, 9)
    assert set(res.vectors) == brute_pareto_vectors(g, mc, 0, 9)
    for r, v in zip(res.routes, res.vectors):
        assert g.is_valid_path(r.links)
        assert tuple(mc[list(r.links)].sum(axis=0)) == v


def test_mosp_cap_flags_approximate():
    # a ladder with many incomparable paths
    n = 14
    pairs = []
    for i in range(0, n - 2, 2):
        for a in (i, i + 1):
            for b in (i + 2, i + 3):
                pairs.append((a, b))
    g = dual_from_adjacency(n, pairs)
    rng = np.random.default_rng(0)
    mc = rng.uniform(1, 2, size=(n, 2))
    full = mosp(g, mc, 0, n - 1)
    capped = mosp(g, mc, 0, n - 1, max_labels=1)
    assert capped.approximate and not full.approximate
    assert len(capped.routes) <= len(full.routes)
