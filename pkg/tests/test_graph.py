import json

import numpy as np
import pytest

from genmrp.city import HIGHWAY, CityConfig, generate_city
from genmrp.graph import (
    LEFT, RIGHT, STRAIGHT, U_TURN, GraphError, build_primal, dual_from_adjacency, load_primal, make_route,
    save_primal, to_dual, turn_maneuver,
)


def _plus():
    # four arms around a centre node 0; two-way segments
    nodes = [{"id": 0, "x": 0, "y": 0}, {"id": 1, "x": -100, "y": 0}, {"id": 2, "x": 100, "y": 0},
             {"id": 3, "x": 0, "y": 100}, {"id": 4, "x": 0, "y": -100}]
    edges = []
    for arm in (1, 2, 3, 4):
        edges.append({"id": len(edges), "from": arm, "to": 0, "length_m": 100.0})
        edges.append({"id": len(edges), "from": 0, "to": arm, "length_m": 100.0})
    return build_primal(nodes, edges)


def test_turn_classification():
    assert turn_maneuver((0, 0), (1, 0), (2, 0)) == STRAIGHT
    assert turn_maneuver((0, 0), (1, 0), (1, 1)) == LEFT
    assert turn_maneuver((0, 0), (1, 0), (1, -1)) == RIGHT
    assert turn_maneuver((0, 0), (1, 0), (0, 0.01)) == U_TURN


def test_dual_of_plus_intersection():
    g = to_dual(_plus())
    assert g.n_links == 8
    # entering from the west arm (edge 0: 1 -> 0) reaches east, north and south but not back west
    assert sorted(g.succ[0]) == [3, 5, 7]
    codes = {b: int(m) for (a, b), m in zip(g.edges, g.maneuver) if a == 0}
    assert codes == {3: STRAIGHT, 5: LEFT, 7: RIGHT}


def test_u_turn_flag():
    g = to_dual(_plus(), allow_u_turn=True)
    assert 1 in g.succ[0]
    assert int(g.maneuver[g.edge_index()[(0, 1)]]) == U_TURN


def test_dual_edges_sorted_and_pred_consistent():
    g = to_dual(_plus())
    e = [tuple(x) for x in g.edges.tolist()]
    assert e == sorted(e)
    for a in range(g.n_links):
        for b in g.succ[a]:
            assert a in g.pred[b]


@pytest.mark.parametrize("bad", [
    {"nodes": [{"id": 1, "x": 0, "y": 0}], "edges": []},
    {"nodes": [{"id": 0, "x": 0, "y": 0}, {"id": 1, "x": 1, "y": 0}],
     "edges": [{"id": 0, "from": 0, "to": 0, "length_m": 1}]},
    {"nodes": [{"id": 0, "x": 0, "y": 0}, {"id": 1, "x": 1, "y": 0}],
     "edges": [{"id": 0, "from": 0, "to": 1, "length_m": -1}]},
    {"nodes": [{"id": 0, "x": 0, "y": 0}, {"id": 1, "x": 1, "y": 0}],
     "edges": [{"id": 0, "from": 0, "to": 5, "length_m": 1}]},
])
def test_build_primal_rejects(bad):
    with pytest.raises(GraphError):
        build_primal(bad["nodes"], bad["edges"])


def test_primal_round_trip(tmp_path):
    p = _plus()
    path = tmp_path / "g.jsonl"
    save_primal(p, path)
    q = load_primal(path)
    assert np.array_equal(p.src, q.src) and np.array_equal(p.length_m, q.length_m)
    assert np.array_equal(p.xy, q.xy)


def test_loader_rejects_unknown_keys(tmp_path):
    path = tmp_path / "g.jsonl"
    path.write_text(json.dumps({"id": 0, "x": 0, "y": 0, "z": 1}) + "\n")
    with pytest.raises(GraphError):
        load_primal(path)


def test_subgraph_maps_ids():
    g = dual_from_adjacency(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)], length_m=[1, 2, 3, 4, 5])
    sub, keep = g.subgraph([4, 0, 1])
    assert keep.tolist() == [0, 1, 4]
    assert [tuple(e) for e in sub.edges.tolist()] == [(0, 1), (0, 2)]
    assert sub.length_m.tolist() == [1, 2, 5]


def test_subgraph_rejects_bad_ids():
    g = dual_from_adjacency(3, [(0, 1)])
    with pytest.raises(IndexError):
        g.subgraph([0, 3])


def test_make_route_checks_adjacency():
    g = dual_from_adjacency(3, [(0, 1), (1, 2)], length_m=[1, 2, 4])
    r = make_route(g, [0, 1, 2])
    assert r.length == 7 and r.origin == 0 and r.destination == 2
    with pytest.raises(GraphError):
        make_route(g, [0, 2])


def test_dual_from_adjacency_validates():
    with pytest.raises(GraphError):
        dual_from_adjacency(2, [(0, 2)])
    with pytest.raises(GraphError):
        dual_from_adjacency(2, [(1, 1)])


def test_city_generator():
    a = generate_city(CityConfig(width=8, height=8), np.random.default_rng(0))
    b = generate_city(CityConfig(width=8, height=8), np.random.default_rng(0))
    assert np.array_equal(a.dual.edges, b.dual.edges)
    assert np.array_equal(a.dual.fftime_s, b.dual.fftime_s)
    g = a.dual
    assert np.all(g.fftime_s > 0) and np.all(g.length_m > 0)
    assert (g.road_class == HIGHWAY).any()
    assert all(len(s) > 0 for s in g.succ)  # no dead ends
