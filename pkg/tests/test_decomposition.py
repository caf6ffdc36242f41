import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasiloc.decomposition import (
    ColoredCover,
    DecompositionError,
    MetricFamily,
    bump_field,
    build_chain,
    decompose_zd,
    dimnuc_cover_extract,
    dimnuc_factorization,
    indicator_partition,
    thicken,
    verify_chain,
    verify_r_decomposition,
)
from quasiloc.metric_space import is_r_disjoint, path_graph, zd_box


def blocks(cover, color):
    return [m.points.tolist() for m in cover.colors[color]]


def test_line_cover_example():
    cover = decompose_zd(zd_box([16]), 2)
    assert blocks(cover, 0) == [[0, 1], [4, 5], [8, 9], [12, 13]]
    assert blocks(cover, 1) == [[2, 3], [6, 7], [10, 11], [14, 15]]
    assert verify_r_decomposition(cover.space.full(), cover, 2)
    assert not verify_r_decomposition(cover.space.full(), cover, 3)


def test_short_line_single_block():
    cover = decompose_zd(zd_box([4]), 4)
    assert blocks(cover, 0) == [[0, 1, 2, 3]]
    assert blocks(cover, 1) == []


def test_square_cover_has_four_colors():
    cover = decompose_zd(zd_box([4, 4]), 2)
    assert cover.k == 4
    assert cover.bound == 1
    assert all(len(c) == 1 for c in cover.colors)
    assert verify_r_decomposition(cover.space.full(), cover, 2)


def test_cover_rejections():
    with pytest.raises(DecompositionError):
        decompose_zd(zd_box([4], "l1"), 2)
    with pytest.raises(DecompositionError):
        decompose_zd(path_graph(4), 2)
    with pytest.raises(DecompositionError):
        decompose_zd(zd_box([4]), 0)


def test_uncovered_point_reported():
    space = zd_box([6])
    cover = ColoredCover(space, ((space.subset([0, 1]),), (space.subset([3, 4]),)), 2.0)
    report = verify_r_decomposition(space.full(), cover, 2)
    assert not report
    assert "point 2" in report.failures[0]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 9), min_size=1, max_size=2), st.integers(1, 6))
def test_box_cover_invariants(dims, r):
    space = zd_box(dims)
    cover = decompose_zd(space, r)
    assert cover.k == 2 ** len(dims)
    assert verify_r_decomposition(space.full(), cover, r)
    assert cover.bound <= r - 1
    owned = sum(m.mask.astype(int) for _, _, m in cover.members())
    assert (owned == 1).all()


def test_thicken_example():
    space = zd_box([8])
    fam = MetricFamily(space, (space.subset([0]), space.subset([6])))
    thick = thicken(fam, 1)
    assert [m.points.tolist() for m in thick] == [[0, 1], [5, 6, 7]]
    with pytest.raises(DecompositionError):
        thicken(fam, -1)


def test_thickening_preserves_gap():
    # r-disjoint members thickened by S stay (r - 2S)-disjoint
    cover = decompose_zd(zd_box([40]), 8)
    fam = thicken(cover.family(0), 3)
    assert is_r_disjoint(list(fam), 8 - 6)
    assert not is_r_disjoint(list(fam), 8 - 6 + 1)


def test_chain_terminal_bound():
    chain = build_chain(zd_box([64]), [4])
    assert chain.depth == 1
    assert chain.terminal_bound == 3
    assert verify_chain(chain)


def test_two_stage_line_chain():
    chain = build_chain(zd_box([64]), [3, 5])
    assert chain.radii() == [3.0, 5.0]
    assert verify_chain(chain)
    # every stage-2 member sits inside its parent
    for m, p in zip(chain.stages[1].members, chain.stages[1].parents):
        assert m.issubset(chain.members(1)[p])


def test_chain_schedule_must_increase():
    with pytest.raises(DecompositionError):
        build_chain(zd_box([16]), [4, 4])


def test_graph_chain_is_trivial():
    chain = build_chain(path_graph(6), [1, 2])
    assert chain.depth == 2
    assert chain.terminal_bound == 5


def test_bump_example():
    space = zd_box([4])
    f = bump_field(space, space.subset([0]), 0.5)
    assert f.values.tolist() == [1.0, 0.5, 0.0, 0.0]
    with pytest.raises(DecompositionError):
        bump_field(space, space.empty(), 0.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(4, 30), st.integers(1, 5), st.floats(0.05, 1.0))
def test_bump_is_lipschitz(n, r, lip):
    space = zd_box([n])
    f = bump_field(space, decompose_zd(space, r).colors[0][0], lip)
    assert f.lipschitz <= lip + 1e-12
    assert f.values.max() == 1.0


def test_indicator_partition_sums_to_one():
    cover = decompose_zd(zd_box([6, 6]), 2)
    part = indicator_partition(cover)
    assert np.array_equal(part.total(), np.ones(36))


def test_dimnuc_composite_error_oscillation():
    space = zd_box([32])
    cover = decompose_zd(space, 4)
    fac = dimnuc_factorization(space, cover)
    values = np.sin(np.arange(32) / 3.0)
    # on each block the composite is constant, so the error is the block oscillation
    expected = max(np.abs(values[m.points] - values[m.points[0]]).max() for _, _, m in cover.members())
    assert fac.composite_error(values) == pytest.approx(expected, abs=1e-15)
    assert fac.scale_bound == 3


def test_cover_extraction():
    e = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]])
    lam = np.array([[1.0, 0.0], [0.25, 0.75]])
    f = lam.T @ e
    out = dimnuc_cover_extract(f, e, lam, 0.0)
    assert out.assignment == (0, 1)
    assert out.certified
    with pytest.raises(DecompositionError, match="sum to"):
        dimnuc_cover_extract(f, e, np.array([[1.0, 0.0], [0.5, 0.4]]), 0.0)
    with pytest.raises(DecompositionError, match="differs"):
        dimnuc_cover_extract(f + 0.5, e, lam, 0.1)
