import pytest
from hypothesis import given, strategies as st

from genmrp.metrics import cov_k, cov_net, coverage, n_pareto, similarity
from genmrp.oracles import set_jaccard

LENGTHS = [100.0, 200.0, 50.0, 75.0, 10.0]


def test_coverage_examples():
    assert coverage([0, 1], [0, 1], LENGTHS) == 1.0
    assert coverage([0, 1], [2, 3], LENGTHS) == 0.0
    assert coverage([0, 1], [0, 2], LENGTHS) == pytest.approx(100 / 350, abs=1e-12)


def test_coverage_rejects_unknown_link():
    with pytest.raises(ValueError):
        coverage([0, 9], [0], LENGTHS)


def test_cov_k_examples():
    assert cov_k([[0, 2], [0, 1]], [0, 1], LENGTHS) == 1.0
    assert cov_k([[0, 2]], [0, 1], LENGTHS) == coverage([0, 1], [0, 2], LENGTHS)
    assert cov_k([], [0, 1], LENGTHS) == 0.0


def test_cov_k_is_max_of_members():
    ru = [0, 1, 2, 3, 4]
    routes = [[4], [0, 1, 2], [1, 3]]
    covs = [coverage(ru, r, LENGTHS) for r in routes]
    assert cov_k(routes, ru, LENGTHS) == max(covs)


def test_similarity_examples():
    assert similarity([[0, 1], [1, 0]], LENGTHS) == 1.0
    assert similarity([[0], [1]], LENGTHS) == 0.0
    assert similarity([[0], [0], [1]], LENGTHS) == pytest.approx(1 / 3, abs=1e-12)
    assert similarity([[0]], LENGTHS) is None
    assert similarity([[0], [1]], LENGTHS, include_self=True) == pytest.approx(0.5)


def test_n_pareto_examples():
    assert n_pareto([(1, 1)]) == 1
    assert n_pareto([(1, 1), (2, 2), (3, 1)]) == 1
    assert n_pareto([(1, 3), (2, 2), (3, 1)]) == 3


def test_cov_net_examples():
    assert cov_net([[0, 1]], [0, 1], LENGTHS) == 1.0
    assert cov_net([[2, 3]], [0, 1], LENGTHS) == 0.0
    assert cov_net([[0, 1], [2]], [0, 4], LENGTHS) == pytest.approx(100 / 350, abs=1e-12)


route = st.lists(st.integers(0, 4), min_size=1, max_size=6)


@given(route, route)
def test_coverage_symmetric_and_order_free(a, b):
    assert coverage(a, b, LENGTHS) == coverage(b, a, LENGTHS)
    assert coverage(a[::-1], b, LENGTHS) == coverage(a, b, LENGTHS)
    assert abs(coverage(a, b, LENGTHS) - set_jaccard(a, b, LENGTHS)) < 1e-12


@given(st.lists(route, min_size=1, max_size=4), route, route)
def test_adding_route_never_hurts(routes, extra, ru):
    assert cov_k(routes + [extra], ru, LENGTHS) >= cov_k(routes, ru, LENGTHS)


@given(st.lists(route, min_size=2, max_size=5))
def test_similarity_one_iff_identical(routes):
    sim = similarity(routes, LENGTHS)
    identical = len({frozenset(r) for r in routes}) == 1
    assert (sim == 1.0) == identical
