import math
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bermcub.cubature import gauss_1d_degree5, product_rule, victoir_degree5
from bermcub.errors import ResourceError
from bermcub.lattice import KeyCodec, build_levels, node_bound, successors
from bermcub.oracle import naive_tree

from frozen import D7_DISTINCT_SUMS


def test_successors_1d():
    f = gauss_1d_degree5()
    got = sorted((int(c[0]), w) for c, w in successors(np.zeros(1, int), f))
    assert got == [(-1, pytest.approx(1 / 6)), (0, pytest.approx(2 / 3)), (1, pytest.approx(1 / 6))]
    assert f.scale == pytest.approx(math.sqrt(3))


def test_successors_d7():
    succ = successors(np.zeros(7, int), victoir_degree5(7))
    assert len(succ) == 57
    assert math.fsum(w for _, w in succ) == pytest.approx(1.0, abs=1e-14)


def test_level_counts_1d():
    levels = build_levels([0.0], gauss_1d_degree5(), 8, 0.1)
    assert [len(lv) for lv in levels] == [2 * k + 1 for k in range(9)]
    # naive path count grows like 3^k
    assert 3 ** 3 == 27 and len(levels[3]) == 7


def test_zero_steps_single_node():
    levels = build_levels([0.0, 0.0], product_rule(gauss_1d_degree5(), 2), 0, 0.1)
    assert len(levels) == 1 and len(levels[0]) == 1


def test_d7_counts_match_enumeration():
    levels = build_levels(np.zeros(7), victoir_degree5(7), 3, 0.5 / 3)
    for k, n in D7_DISTINCT_SUMS.items():
        assert len(levels[k]) == n
    assert len(levels[3]) <= 7 ** 7


def test_node_budget_names_level():
    with pytest.raises(ResourceError, match="level 3"):
        build_levels(np.zeros(7), victoir_degree5(7), 3, 0.1, node_budget=5000)


@given(d=st.integers(1, 4), bound=st.integers(1, 30), data=st.data())
def test_codec_roundtrip_and_additivity(d, bound, data):
    codec = KeyCodec(d, bound)
    c = np.array(data.draw(st.lists(st.integers(-bound, bound), min_size=d, max_size=d)))
    assert np.array_equal(codec.decode(codec.encode(c)), c)
    step = np.array(data.draw(st.lists(st.integers(-1, 1), min_size=d, max_size=d)))
    if np.all(np.abs(c + step) <= bound):
        assert codec.encode(c + step) == codec.encode(c) + codec.delta(step)


def test_codec_rejects_out_of_range():
    with pytest.raises(ValueError):
        KeyCodec(2, 3).encode([4, 0])


@pytest.mark.parametrize("d,N", [(1, 4), (2, 3), (3, 2)])
def test_lattice_weights_match_naive_tree(d, N):
    f = gauss_1d_degree5() if d == 1 else product_rule(gauss_1d_degree5(), d)
    levels = build_levels(np.zeros(d), f, N, 0.1)
    # forward-propagate path weights through the recombined lattice
    w = {tuple(levels[0].coords[0]): 1.0}
    for _ in range(N):
        nxt = defaultdict(float)
        for c, wc in w.items():
            for p, a in zip(f.int_points, f.weights):
                nxt[tuple(np.add(c, p))] += wc * a
        w = nxt
    tree = naive_tree(f, N)
    grouped = defaultdict(float)
    for s, a in zip(map(tuple, tree.int_sums), tree.weights):
        grouped[s] += a
    assert set(grouped) == set(map(tuple, levels[N].coords))
    for key, val in grouped.items():
        assert w[key] == pytest.approx(val, abs=1e-12)
    assert tree.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_node_bound_holds():
    f = product_rule(gauss_1d_degree5(), 2)
    levels = build_levels(np.zeros(2), f, 5, 0.1)
    for k, lv in enumerate(levels):
        assert len(lv) <= node_bound(f, k)
        assert np.abs(lv.coords).max() <= k


def test_positions_decoder():
    f = gauss_1d_degree5()
    levels = build_levels([1.0], f, 2, 0.04, drift=np.array([0.5]), vol=np.array([0.2]))
    x = np.sort(levels[2].positions()[:, 0])
    expect = 1.0 + 2 * 0.5 * 0.04 + 0.2 * math.sqrt(0.04) * math.sqrt(3) * np.arange(-2, 3)
    assert np.allclose(x, expect)


def test_lookup_missing_key_raises():
    levels = build_levels([0.0], gauss_1d_degree5(), 1, 0.1)
    with pytest.raises(KeyError):
        levels[0].index(levels[1].codec.encode(np.array([[1]])))
