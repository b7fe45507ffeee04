import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adnres.case import load_case
from adnres.radiality import (Topology, UnionFind, bridges, check_radial, consistent_with_x,
                              directed_x, enumerate_radial_configs, max_weight_tree, simple_cycles)


def _ieee33():
    case = load_case("ieee33")
    return case, [b.id for b in case.buses], [(ln.from_bus, ln.to_bus) for ln in case.lines]


def test_reported_c1_topology_is_radial():
    case, buses, _ = _ieee33()
    open_ids = {9, 33, 34, 36, 37}  # main 9-10 open, tie 12-22 closed
    closed = [(ln.from_bus, ln.to_bus) for ln in case.lines if ln.id not in open_ids]
    topo = Topology.from_lines(buses, closed)
    assert len(topo.closed) == 32
    assert check_radial(topo).radial


def test_default_topology_is_radial():
    case, buses, _ = _ieee33()
    closed = [(ln.from_bus, ln.to_bus) for ln in case.lines if ln.kind == "main"]
    assert check_radial(Topology.from_lines(buses, closed)).radial


def test_triangle_has_cycle():
    v = check_radial(Topology.from_lines([1, 2, 3], [(1, 2), (2, 3), (1, 3)]))
    assert v.verdict == "has_cycle"
    assert v.witness == (2, 3)  # the edge that closes the loop in sorted order


def test_disconnected_witness():
    v = check_radial(Topology.from_lines([1, 2, 3], [(1, 2)]))
    assert v.verdict == "disconnected"
    assert v.witness == (3,)


def test_unknown_bus_rejected():
    with pytest.raises(ValueError):
        Topology.from_lines([1, 2], [(1, 3)])


def test_consistent_with_x():
    _, buses, lines = _ieee33()
    case = load_case("ieee33")
    closed = [(ln.from_bus, ln.to_bus) for ln in case.lines if ln.kind == "main"]
    topo = Topology.from_lines(buses, closed)
    x = directed_x(topo, lines)
    ok, problems = consistent_with_x(topo, x)
    assert ok and not problems
    assert sum(x.values()) == 64

    asym = dict(x)
    asym[(2, 1)] = 0
    ok, problems = consistent_with_x(topo, asym)
    assert not ok
    assert any("differs" in p for p in problems)
    assert any("63" in p for p in problems)


@pytest.mark.parametrize("lines,count", [
    ([(1, 2), (2, 3), (1, 3)], 3),
    ([(1, 2), (2, 3), (3, 4), (4, 1)], 4),
    (list(itertools.combinations([1, 2, 3, 4], 2)), 16),
])
def test_tree_counts(lines, count):
    buses = sorted({b for ln in lines for b in ln})
    assert len(enumerate_radial_configs(buses, lines)) == count


def _kirchhoff(buses, lines) -> int:
    idx = {b: k for k, b in enumerate(buses)}
    L = np.zeros((len(buses), len(buses)))
    for a, b in lines:
        i, j = idx[a], idx[b]
        L[i, i] += 1
        L[j, j] += 1
        L[i, j] -= 1
        L[j, i] -= 1
    return round(np.linalg.det(L[1:, 1:]))


def test_k4_matches_matrix_tree():
    lines = list(itertools.combinations([1, 2, 3, 4], 2))
    assert len(enumerate_radial_configs([1, 2, 3, 4], lines)) == _kirchhoff([1, 2, 3, 4], lines) == 16


def test_enumeration_guard():
    buses = list(range(1, 12))
    with pytest.raises(ValueError):
        enumerate_radial_configs(buses, [(b, b + 1) for b in buses[:-1]])


def test_toy6_has_eight_trees():
    case = load_case("toy6")
    buses = [b.id for b in case.buses]
    lines = [(ln.from_bus, ln.to_bus) for ln in case.lines]
    fixed = [k for k, ln in enumerate(case.lines) if not ln.switchable and ln.kind == "main"]
    assert len(enumerate_radial_configs(buses, lines, fixed_closed=fixed)) == 8


def test_simple_cycles_and_bridges():
    _, buses, lines = _ieee33()
    cycles = simple_cycles(buses, lines)
    g = nx.Graph()
    g.add_edges_from(lines)
    assert len(cycles) == len(nx.cycle_basis(g)) + 21  # 26 simple loops from 5 independent ones
    assert bridges(buses, lines) == [0]


def test_max_weight_tree():
    lines = [(1, 2), (2, 3), (1, 3)]
    assert max_weight_tree([1, 2, 3], lines, [0.1, 0.9, 0.5]) == [1, 2]
    assert max_weight_tree([1, 2, 3], lines, [0.1, 0.9, 0.5], forced=[0]) == [0, 1]
    assert max_weight_tree([1, 2, 3], lines, [0.1, 0.9, 0.5], banned=[1, 2]) is None


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 8).flatmap(lambda n: st.tuples(
    st.just(n), st.lists(st.tuples(st.integers(1, n), st.integers(1, n)), max_size=12))))
def test_verdict_matches_networkx(data):
    n, raw = data
    buses = list(range(1, n + 1))
    edges = sorted({(min(a, b), max(a, b)) for a, b in raw if a != b})
    g = nx.Graph()
    g.add_nodes_from(buses)
    g.add_edges_from(edges)
    assert check_radial(Topology.from_lines(buses, edges)).radial == nx.is_tree(g)


def test_union_find_components():
    uf = UnionFind([1, 2, 3, 4])
    assert uf.union(1, 2)
    assert not uf.union(2, 1)
    assert uf.components() == [[1, 2], [3], [4]]
