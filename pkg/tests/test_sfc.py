import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dgbalance.errors import DomainError
from dgbalance.sfc import (
    DEFAULT_LEVEL, GridCoord, decode_array, encode_array, hilbert_decode, hilbert_encode, quantize,
    sfc_sort_permutation,
)

# level-1 visiting order of the chosen Hilbert variant
LEVEL1_ORDER = [(0, 0, 0), (0, 0, 1), (0, 1, 1), (0, 1, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1), (1, 0, 0)]


def test_origin_is_zero():
    assert hilbert_encode(GridCoord(0, 0, 0, 1)) == 0
    assert hilbert_decode(0, 1) == GridCoord(0, 0, 0, 1)


def test_level1_bijection_and_order():
    idx = [hilbert_encode(GridCoord(*c, 1)) for c in itertools.product(range(2), repeat=3)]
    assert sorted(idx) == list(range(8))
    assert [tuple(c) for c in decode_array(np.arange(8), 1)] == LEVEL1_ORDER


@pytest.mark.parametrize("level", [1, 2, 3, 4])
def test_bijection_and_locality(level):
    side = 1 << level
    coords = np.array(list(itertools.product(range(side), repeat=3)))
    h = encode_array(coords, level)
    assert np.array_equal(np.sort(h), np.arange(side ** 3, dtype=np.uint64))
    cells = decode_array(np.arange(side ** 3), level)
    steps = np.abs(np.diff(cells, axis=0)).sum(axis=1)
    assert np.all(steps == 1)


def test_level3_roundtrip_scalar():
    for c in itertools.product(range(8), repeat=3):
        g = GridCoord(*c, 3)
        assert hilbert_decode(hilbert_encode(g), 3) == g


def test_level2_decode_roundtrip():
    for h in range(64):
        assert hilbert_encode(hilbert_decode(h, 2)) == h


@given(st.integers(1, 21), st.data())
def test_roundtrip_any_level(level, data):
    side = 1 << level
    c = [data.draw(st.integers(0, side - 1)) for _ in range(3)]
    h = encode_array([c], level)
    assert 0 <= int(h[0]) < 8 ** level
    assert decode_array(h, level)[0].tolist() == c


@pytest.mark.parametrize("bad", [(2, 0, 0), (0, -1, 0), (0, 0, 4)])
def test_encode_out_of_range(bad):
    level = 1 if bad != (0, 0, 4) else 2
    with pytest.raises(DomainError):
        GridCoord(*bad, level)
    with pytest.raises(DomainError):
        encode_array([bad], level)


def test_decode_out_of_range():
    with pytest.raises(DomainError):
        hilbert_decode(8, 1)
    with pytest.raises(DomainError):
        hilbert_decode(-1, 1)
    with pytest.raises(DomainError):
        decode_array([64], 2)


def test_sort_single_element():
    assert sfc_sort_permutation([[0.3, 0.2, 0.1]], ((0, 0, 0), (1, 1, 1))).tolist() == [0]


def test_sort_two_cubed_cells_follows_level1():
    centers = np.array([[(i + 0.5) / 2, (j + 0.5) / 2, (k + 0.5) / 2]
                        for i in range(2) for j in range(2) for k in range(2)])
    perm = sfc_sort_permutation(centers, ((0, 0, 0), (1, 1, 1)), level=1)
    visited = [tuple(int(v) for v in np.floor(centers[p] * 2)) for p in perm]
    assert visited == LEVEL1_ORDER


@given(st.lists(st.tuples(*[st.floats(0, 1, allow_nan=False)] * 3), min_size=1, max_size=40))
def test_sort_idempotent(points):
    pts = np.array(points)
    box = ((0, 0, 0), (1, 1, 1))
    perm = sfc_sort_permutation(pts, box)
    again = sfc_sort_permutation(pts[perm], box)
    assert np.array_equal(again, np.arange(len(pts)))


def test_sort_ties_keep_input_order():
    pts = np.array([[0.5, 0.5, 0.5]] * 4)
    assert sfc_sort_permutation(pts, ((0, 0, 0), (1, 1, 1)), level=2).tolist() == [0, 1, 2, 3]


def test_point_outside_box():
    with pytest.raises(DomainError):
        sfc_sort_permutation([[1.5, 0, 0]], ((0, 0, 0), (1, 1, 1)))


def test_degenerate_axis_quantizes_to_zero():
    q = quantize([[0.25, 3.0, 0.75]], (0, 3, 0), (1, 3, 1), level=2)
    assert q.tolist() == [[1, 0, 3]]


def test_default_level():
    assert DEFAULT_LEVEL == 10
