from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasiloc.metric_space import (
    CoarseMap,
    SpaceError,
    build_space,
    coarse_profile,
    diameter,
    first_violation,
    graph,
    identity_closeness,
    is_r_disjoint,
    neighborhood,
    path_graph,
    set_distance,
    uniformly_bounded_check,
    zd_box,
)


def bfs_distances(n, edges):
    """Independent all-pairs hop distances, one BFS per source."""
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    out = np.full((n, n), -1)
    for s in range(n):
        out[s, s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if out[s, v] < 0:
                    out[s, v] = out[s, u] + 1
                    queue.append(v)
    return out


def test_line_distance():
    assert zd_box([4]).dist[0, 3] == 3


def test_linf_diagonal_step():
    space = zd_box([2, 2])
    assert space.dist[space.index_of((0, 0)), space.index_of((1, 1))] == 1


def test_l1_diagonal_step():
    space = zd_box([2, 2], "l1")
    assert space.dist[space.index_of((0, 0)), space.index_of((1, 1))] == 2


def test_path_graph_distance():
    assert path_graph(5).dist[0, 4] == 4


def test_bad_specs_rejected():
    with pytest.raises(SpaceError):
        zd_box([0, 3])
    with pytest.raises(SpaceError):
        zd_box([3], "l2")
    with pytest.raises(SpaceError):
        graph(4, [(0, 1), (2, 3)])  # disconnected
    with pytest.raises(SpaceError):
        graph(3, [(0, 5)])


def test_descriptor_round_trip():
    for space in (zd_box([3, 5], "l1"), path_graph(6)):
        again = build_space(space.descriptor())
        assert np.array_equal(again.dist, space.dist)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 14), st.lists(st.tuples(st.integers(0, 13), st.integers(0, 13)), max_size=25))
def test_graph_metric_matches_bfs(n, extra):
    # a spanning path keeps the graph connected; extra edges add shortcuts
    edges = [(i, i + 1) for i in range(n - 1)] + [(u % n, v % n) for u, v in extra]
    assert np.array_equal(graph(n, edges).dist, bfs_distances(n, edges))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=1, max_size=3), st.sampled_from(["linf", "l1"]))
def test_box_metric_axioms(dims, norm):
    d = zd_box(dims, norm).dist
    assert np.array_equal(d, d.T)
    assert (np.diag(d) == 0).all()
    off = ~np.eye(len(d), dtype=bool)
    assert (d[off] >= 1).all()
    # triangle inequality over all triples
    assert (d[:, None, :] <= d[:, :, None] + d[None, :, :]).all()


def test_neighborhood_examples():
    line = zd_box([8])
    assert neighborhood(line.subset([0]), 2).points.tolist() == [0, 1, 2]
    path = path_graph(8)
    assert neighborhood(path.subset([3, 4]), 1).points.tolist() == [2, 3, 4, 5]
    assert not neighborhood(line.empty(), 3)


def test_set_distance_and_disjointness():
    line = zd_box([8])
    a, b = line.subset([0, 1]), line.subset([5, 6])
    assert set_distance(a, b) == 4
    assert set_distance(a, line.empty()) == float("inf")
    fam = [line.subset([0, 1]), line.subset([4, 5])]
    assert is_r_disjoint(fam, 2)
    assert not is_r_disjoint(fam, 3)
    assert first_violation(fam, 3) == (0, 1, 3.0)


def test_cross_space_rejected():
    with pytest.raises(SpaceError):
        set_distance(zd_box([4]).subset([0]), zd_box([5]).subset([1]))


def test_subset_diameter():
    line = zd_box([10])
    assert diameter(line.subset([2, 7, 4])) == 5
    with pytest.raises(SpaceError):
        diameter(line.empty())


def test_coarse_profiles():
    dom = zd_box([10])
    ident = CoarseMap(dom, dom, np.arange(10))
    prof = coarse_profile(ident, [0, 1, 3, 20])
    assert prof.moduli == (0.0, 1.0, 3.0, 9.0)
    big = zd_box([19])
    doubling = CoarseMap(dom, big, 2 * np.arange(10))
    assert coarse_profile(doubling, [1, 2, 9]).moduli == (2.0, 4.0, 18.0)
    fold = CoarseMap(dom, dom, np.arange(10) // 2)
    assert coarse_profile(fold, [0]).max_fiber_diameter == 1.0


def test_uniform_bounds():
    line = zd_box([10])
    assert uniformly_bounded_check(line, [(0, 5)]) == 5
    assert uniformly_bounded_check(line, []) == 0
    shift = np.minimum(np.arange(10) + 1, 9)
    assert identity_closeness(line, shift) == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 20), st.data())
def test_neighborhood_matches_scan(n, data):
    space = path_graph(n)
    pts = data.draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=4))
    r = data.draw(st.integers(0, n))
    got = set(neighborhood(space.subset(pts), r).points.tolist())
    want = {x for x in range(n) if min(abs(x - p) for p in pts) <= r}
    assert got == want
