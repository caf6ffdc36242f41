import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasiloc.approximation import (
    ApproximationError,
    approximate,
    approximate_multicolor,
    build_schedule,
    check_block_diagonal,
    error_constant,
    induction_step,
    nearest_band,
    operator_digest,
    stage_eps,
    verify_commute_cutdown,
)
from quasiloc.decomposition import ColoredCover, build_chain, decompose_zd
from quasiloc.metric_space import path_graph, zd_box
from quasiloc.operators import (
    Operator,
    ScalarField,
    as_contraction,
    random_decay_operator,
    schur_commut_bound,
)


def svd_norm(m):
    return np.linalg.svd(m, compute_uv=False)[0]


def contraction(dims, profile, seed):
    return as_contraction(random_decay_operator(zd_box(dims), profile, seed))


def test_error_constants():
    assert error_constant(2) == 8
    assert error_constant(4) == 40
    assert stage_eps(1.0, 1, 2) == 1 / 16
    assert stage_eps(1.0, 2, 2) == 1 / 128


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 10.0), st.integers(1, 6), st.sampled_from([2, 4, 8]))
def test_stage_errors_telescope(eps, m, k):
    total = sum(error_constant(k) * stage_eps(eps, n, k) * (k * k) ** (n - 1) for n in range(1, m + 1))
    assert total == pytest.approx(eps * (1 - 2.0 ** -m), rel=1e-12)


def test_schedule_radii():
    a = contraction([64], "exp:40", 1)
    sched = build_schedule(a, 0.1, 3)
    lips = [s.lip for s in sched.stages]
    want, spent = [], 0.0
    for lip in lips:
        want.append(4 * (1 / lip + 1) + 2 * spent)
        spent += 1 / lip + 1
    assert [s.radius for s in sched.stages] == want
    assert sched.telescoped() == pytest.approx(0.1 * (1 - 2 ** -3), rel=1e-12)


# one induction step


@pytest.mark.parametrize("seed", range(4))
def test_induction_step_bound_and_masks(seed):
    a = contraction([96], "exp:3", seed)
    lip = 0.25
    cover = decompose_zd(a.space, math.floor(4 / lip + 4) + 1)
    # the Schur bound controls every L-Lipschitz commutator, so it is a valid eps
    eps = schur_commut_bound(a, lip)
    res = induction_step(a, cover, lip, eps)
    assert res.k == 2 and len(res.pieces) == 4
    assert res.realized_error == pytest.approx(svd_norm(a.matrix - res.total.matrix), abs=1e-10)
    assert res.realized_error <= error_constant(2) * eps + 1e-12
    for piece, blocks in zip(res.pieces, res.blocks):
        check = check_block_diagonal(piece, blocks, cover, lip)
        assert check.passed, check.message


def test_induction_step_rejects_close_members():
    a = contraction([64], "exp:3", 0)
    cover = decompose_zd(a.space, 8)
    with pytest.raises(ApproximationError, match="color 0"):
        induction_step(a, cover, 0.25, 0.1)


def test_mask_check_catches_cross_block_entries():
    space = zd_box([40])
    cover = decompose_zd(space, 20)
    blocks = [space.subset(range(0, 10)), space.subset(range(10, 20))]
    m = np.zeros((40, 40))
    m[0, 15] = 1.0
    check = check_block_diagonal(Operator(space, m), blocks, cover, 0.5)
    assert not check.passed
    assert "between different blocks" in check.message


def test_commuting_cutdown():
    a = contraction([64], "exp:3", 2)
    lip = 0.25
    eps = schur_commut_bound(a, lip)
    space = a.space
    parts = [ScalarField(space, np.clip(1 - lip * np.abs(np.arange(64) - c), 0, 1)) for c in (5, 30, 55)]
    out = verify_commute_cutdown(a, parts, lip, eps)
    assert out.passed and out.lhs <= eps + 1e-8
    close = parts[:1] + [ScalarField(space, np.clip(1 - lip * np.abs(np.arange(64) - 14), 0, 1))]
    with pytest.raises(ApproximationError, match="disjoint"):
        verify_commute_cutdown(a, close, lip, eps)


# full pipeline


@pytest.mark.parametrize("stages", [1, 2])
def test_pipeline_on_line(stages):
    a = contraction([64], "exp:40", 1)
    b, report = approximate(a, 0.1, stages=stages)
    assert not report.trivial
    assert report.realized_error == pytest.approx(svd_norm(a.matrix - b.matrix), abs=1e-12)
    assert report.realized_error <= report.certified_bound <= 0.1
    assert report.output_propagation <= report.propagation_bound
    assert report.certified_bound == pytest.approx(0.1 * (1 - 2.0 ** -stages))
    assert report.stage_piece_counts == tuple(4 ** n for n in range(1, stages + 1))


def test_pipeline_frozen_chain():
    a = contraction([64], "exp:40", 1)
    _, report = approximate(a, 0.1, stages=2)
    assert report.chain_radii == (8.0, 12.0)
    assert report.output_propagation == 13
    assert report.propagation_bound == 19


def test_pipeline_on_square():
    a = contraction([16, 16], "exp:40", 1)
    b, report = approximate_multicolor(a, 0.2)
    assert report.k == 4
    assert report.realized_error <= 0.2
    assert report.output_propagation <= report.propagation_bound
    with pytest.raises(ApproximationError, match="product colors"):
        approximate_multicolor(a, 0.2, k=3)


def test_zero_shortcut():
    a = contraction([32], "exp:1", 0).scaled(0.05)
    b, report = approximate(a, 0.1)
    assert report.trivial and not b.matrix.any()
    assert report.realized_error < 0.1
    with pytest.raises(ApproximationError):
        approximate(a, 0.1, allow_zero=False, stages=2, chain=build_chain(a.space, [1.0]))


def test_chain_too_shallow():
    a = contraction([64], "exp:40", 1)
    with pytest.raises(ApproximationError, match="chain too shallow") as err:
        approximate(a, 0.1, chain=build_chain(a.space, [3.0]))
    assert "required" in str(err.value)
    square = contraction([8, 8], "exp:40", 1)
    with pytest.raises(ApproximationError, match="chain too shallow"):
        approximate(square, 0.1, stages=2)


def test_graph_chain_gives_exact_copy():
    # trivial {X} stages keep everything in one block
    space = path_graph(12)
    a = as_contraction(random_decay_operator(space, "exp:40", 0))
    b, report = approximate(a, 0.1, chain=build_chain(space, [8.0]))
    assert report.realized_error == 0.0
    assert np.array_equal(b.matrix, a.matrix)


def test_pipeline_is_deterministic():
    a = contraction([64], "exp:40", 3)
    b1, r1 = approximate(a, 0.2, stages=2)
    b2, r2 = approximate(a, 0.2, stages=2)
    assert np.array_equal(b1.matrix, b2.matrix)
    assert r1.to_dict() == r2.to_dict()
    assert r1.input_digest == operator_digest(a)


def test_nearest_band():
    a = random_decay_operator(zd_box([16]), "exp:1", 0)
    band = nearest_band(a, 2)
    i, j = np.indices((16, 16))
    assert np.array_equal(band.matrix, np.where(np.abs(i - j) <= 2, a.matrix, 0))


def test_custom_cover_disjointness_message():
    space = zd_box([30])
    cover = ColoredCover(space, ((space.subset(range(0, 10)), space.subset(range(12, 30))), ()), 2.0)
    with pytest.raises(ApproximationError, match="members 0 and 1"):
        induction_step(contraction([30], "exp:3", 0), cover, 0.5, 0.1)
