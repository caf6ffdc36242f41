import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasiloc import io as qio
from quasiloc.decomposition import build_chain, decompose_zd
from quasiloc.metric_space import path_graph, zd_box
from quasiloc.operators import random_decay_operator


def test_space_round_trip(tmp_path):
    for space in (zd_box([4, 3], "l1"), path_graph(7)):
        path = tmp_path / "space.json"
        qio.atomic_write(path, qio.dump_json(qio.space_to_json(space)))
        assert np.array_equal(qio.load_space(path).dist, space.dist)


def test_bad_space_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(qio.FormatError):
        qio.load_space(path)
    path.write_text("[1, 2]")
    with pytest.raises(qio.FormatError):
        qio.load_space(path)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12))
def test_operator_formats_round_trip(seed, n):
    space = zd_box([n])
    a = random_decay_operator(space, "exp:1", seed)
    assert np.array_equal(qio.operator_from_bytes(space, qio.operator_to_bytes(a)).matrix, a.matrix)
    assert np.array_equal(qio.operator_from_json(space, qio.operator_to_json(a)).matrix, a.matrix)


def test_binary_layout():
    space = zd_box([2])
    a = random_decay_operator(space, "exp:1", 0)
    raw = qio.operator_to_bytes(a)
    assert raw[:8] == b"COARSEOP"
    assert struct.unpack("<I", raw[8:12]) == (2,)
    assert len(raw) == 12 + 16 * 4
    assert complex(*struct.unpack("<dd", raw[12:28])) == a.matrix[0, 0]


def test_operator_file_autodetect(tmp_path):
    space = zd_box([5])
    a = random_decay_operator(space, "gauss:2", 1)
    for name in ("op.bin", "op.json"):
        qio.save_operator(a, tmp_path / name)
        assert np.array_equal(qio.load_operator(space, tmp_path / name).matrix, a.matrix)


def test_operator_size_mismatch():
    a = random_decay_operator(zd_box([4]), "exp:1", 0)
    with pytest.raises(qio.FormatError, match="5 points"):
        qio.operator_from_bytes(zd_box([5]), qio.operator_to_bytes(a))
    with pytest.raises(qio.FormatError):
        qio.operator_from_bytes(zd_box([4]), qio.operator_to_bytes(a)[:-3])
    obj = qio.operator_to_json(a)
    obj["re"] = obj["re"][:-1]
    with pytest.raises(qio.FormatError):
        qio.operator_from_json(zd_box([4]), obj)


def test_profile_csv_round_trip():
    rows = [(0.0, 0.5, 0.25), (1.0, 0.1234567890123, 0.0)]
    text = qio.profile_csv(rows)
    assert text.splitlines()[0] == "R,nu_upper,nu_lower"
    assert qio.parse_profile_csv(text) == rows
    with pytest.raises(qio.FormatError):
        qio.parse_profile_csv("r,a,b\n")


def test_cover_round_trip():
    cover = decompose_zd(zd_box([12]), 3)
    obj = json.loads(qio.dump_json(qio.cover_to_json(cover)))
    again = qio.cover_from_json(cover.space, obj)
    assert again.scale == 3
    assert [[m.points.tolist() for m in c] for c in again.colors] == obj["colors"]


def parent_pairs(chain, n):
    """(member points, parent points) for every stage-n member, order-free."""
    st_ = chain.stages[n - 1]
    prev = chain.members(n - 1)
    return sorted((tuple(m.points.tolist()), tuple(prev[p].points.tolist()))
                  for m, p in zip(st_.members, st_.parents))


def test_chain_round_trip_and_inferred_parents():
    space = zd_box([32])
    chain = build_chain(space, [3, 5])
    obj = json.loads(qio.dump_json(qio.chain_to_json(chain)))
    again = qio.chain_from_json(space, obj)
    assert again.radii() == chain.radii()
    for n in (1, 2):
        assert parent_pairs(again, n) == parent_pairs(chain, n)
    for st_ in obj:
        del st_["parents"]
    inferred = qio.chain_from_json(space, obj)
    assert parent_pairs(inferred, 2) == parent_pairs(chain, 2)


def test_chain_member_outside_parent():
    space = zd_box([8])
    obj = [{"R": 1, "families": [[[0, 1, 2, 3]], [[4, 5, 6, 7]]]},
           {"R": 2, "families": [[[2, 3, 4]], []]}]
    with pytest.raises(qio.FormatError, match="no previous member"):
        qio.chain_from_json(space, obj)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    qio.atomic_write(tmp_path / "a.txt", "one")
    qio.atomic_write(tmp_path / "a.txt", "two")
    assert (tmp_path / "a.txt").read_text() == "two"
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]
