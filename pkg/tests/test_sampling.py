from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from qexec.sampling import CandidatePool, PoolItem, blended_distance, build_pool, gsx_select, plan_budget


def item(i, g, h=(0.0,)):
    return PoolItem(i, np.asarray(g, dtype=float), np.asarray(h, dtype=float))


def random_pool(rng, n, dg=3, dh=4, alpha=None, grid=False):
    G = rng.uniform(size=(n, dg))
    H = rng.uniform(size=(n, dh))
    if grid:  # coarse values make exact ties likely
        G = np.round(G * 2) / 2
        H = np.round(H * 2) / 2
    a = float(rng.uniform()) if alpha is None else alpha
    ids = [f"s{j:03d}" for j in rng.permutation(n)]
    return CandidatePool([PoolItem(i, g, h) for i, g, h in zip(ids, G, H)], a), ids, G, H


def test_blended_distance_examples():
    a = item("a", [0.0, 0.0], [0.0, 0.0])
    assert blended_distance(a, a) == 0.0
    assert blended_distance(a, item("b", [1.0, 0.0], [5.0, 5.0]), alpha=1.0) == 1.0
    assert blended_distance(a, item("b", [2.0, 0.0], [0.0, 4.0]), alpha=0.5) == 3.0
    with pytest.raises(ValueError):
        blended_distance(a, item("b", [0.0], [0.0, 0.0]))


def test_one_dimensional_example():
    pool = CandidatePool([item("a", [0.0]), item("b", [1.0]), item("c", [10.0])], alpha=1.0)
    res = gsx_select(pool, 2)
    assert res.selected_ids == ["b", "c"]
    assert res.distances_at_selection == pytest.approx([11 / 3 - 1, 9.0], rel=1e-15)


def test_all_items_start_from_centroid_pick():
    pool = CandidatePool([item("a", [0.0]), item("b", [1.0]), item("c", [10.0])], alpha=1.0)
    assert gsx_select(pool, 3).selected_ids == ["b", "c", "a"]


def test_duplicate_points_pick_lower_id():
    pool = CandidatePool([item("z", [1.0]), item("m", [1.0]), item("q", [0.0]), item("r", [2.0])], alpha=1.0)
    res = gsx_select(pool, 3)
    assert res.selected_ids[0] == "m"
    assert res.selected_ids[1:] == ["q", "r"]


def test_k_out_of_range():
    pool = CandidatePool([item("a", [0.0]), item("b", [1.0])])
    for k in (0, 3, -1):
        with pytest.raises(ValueError):
            gsx_select(pool, k)


def test_pool_validation():
    with pytest.raises(ValueError):
        CandidatePool([item("a", [0.0]), item("a", [1.0])])
    with pytest.raises(ValueError):
        CandidatePool([item("a", [0.0])], alpha=1.5)


def test_matches_reference_on_200_pools():
    rng = np.random.default_rng(2024)
    for trial in range(200):
        n = int(rng.integers(1, 61))
        k = int(rng.integers(1, n + 1))
        pool, ids, G, H = random_pool(rng, n, grid=trial % 4 == 0)
        got = gsx_select(pool, k).selected_ids
        assert got == oracles.gsx_reference(ids, G, H, k, pool.alpha), trial


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**31))
def test_distances_nonincreasing_after_first(n, seed):
    rng = np.random.default_rng(seed)
    pool, *_ = random_pool(rng, n)
    d = gsx_select(pool, n).distances_at_selection
    assert all(b <= a for a, b in zip(d[1:], d[2:]))
    assert len(set(gsx_select(pool, n).selected_ids)) == n


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**31))
def test_input_order_does_not_matter(n, seed):
    rng = np.random.default_rng(seed)
    pool, *_ = random_pool(rng, n, grid=seed % 2 == 0)
    shuffled = CandidatePool([pool.items[i] for i in rng.permutation(n)], pool.alpha)
    k = int(rng.integers(1, n + 1))
    assert gsx_select(pool, k) == gsx_select(shuffled, k)
    assert pool.digest() == shuffled.digest()


def test_build_pool_normalises():
    rng = np.random.default_rng(1)
    mats = [rng.uniform(0, 5, size=(int(rng.integers(2, 6)), 178)) for _ in range(4)]
    pool = build_pool(list("abcd"), rng.uniform(0, 9, (4, 41)), mats)
    for it in pool.items:
        assert it.global_vec.shape == (41,) and it.graph_vec.shape == (178,)
        assert it.global_vec.min() >= 0 and it.global_vec.max() <= 1
        assert it.graph_vec.min() >= 0 and it.graph_vec.max() <= 1


def test_plan_budget_values():
    assert plan_budget(3020, 95, 5) == 341
    assert 339 <= plan_budget(3020, 95, 5) <= 342
    assert plan_budget(10**12, 95, 5) == 385
    # n0 = 1.96^2 * 0.25 / 0.25 = 3.84; 3.84 / (1 + 2.84 / 10) -> 2.99 -> 3
    assert plan_budget(10, 95, 50) == 3
    assert plan_budget(1) == 1


def test_plan_budget_matches_direct_formula():
    from statistics import NormalDist

    for n, c, m in [(50, 90, 10), (3020, 99, 2), (700, 80, 7.5)]:
        z = NormalDist().inv_cdf(1 - (1 - c / 100) / 2)
        n0 = z * z * 0.25 / (m / 100) ** 2
        assert plan_budget(n, c, m) == min(n, math.ceil(n0 / (1 + (n0 - 1) / n)))


@pytest.mark.parametrize("args", [(0,), (10, 95, 0), (10, 95, -1), (10, 100, 5), (10, 0, 5)])
def test_plan_budget_errors(args):
    with pytest.raises(ValueError):
        plan_budget(*args)
