import numpy as np
import pytest
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import squareform

from gravnet.cluster import DistanceMatrix, agglomerate, build_distance, cluster_regions, cut
from gravnet.core import SCIMatrix
from gravnet.errors import ValidationError

from helpers import random_distances, region_codes
from oracles import naive_agglomerate, naive_cut

FOUR = ["AA01", "AA02", "BB01", "BB02"]
FOUR_D = np.array(
    [[0, 1, 10, 10], [1, 0, 10, 10], [10, 10, 0, 1], [10, 10, 1, 0]], dtype=float
)


def _steps(tree):
    return [(s.left, s.right, s.height, s.new_id) for s in tree.steps]


def assert_same_tree(tree, oracle, atol=1e-12):
    assert len(tree.steps) == len(oracle)
    for s, (a, b, h, new) in zip(tree.steps, oracle):
        assert (s.left, s.right, s.new_id) == (a, b, new)
        assert s.height == pytest.approx(h, rel=0, abs=atol * max(1.0, abs(h)))


@pytest.mark.parametrize("sci, dist", [(4.0, 0.25), (1.0, 1.0), (0.5, 2.0)])
def test_build_distance_reciprocal(sci, dist):
    m = SCIMatrix(["AA1", "BB1"], [[7.0, sci], [sci, 3.0]])
    dm = build_distance(m)
    assert dm.d[0, 1] == dist and dm.d[1, 0] == dist
    assert dm.d[0, 0] == 0 and dm.d[1, 1] == 0


def test_build_distance_uniform():
    n = 5
    m = SCIMatrix(region_codes(n), np.full((n, n), 8.0))
    d = build_distance(m).d
    assert np.all(d[~np.eye(n, dtype=bool)] == 0.125)


def test_distance_matrix_rejects_bad_input():
    with pytest.raises(ValidationError, match="AA1-BB1"):
        DistanceMatrix(("AA1", "BB1"), [[0.0, 0.0], [0.0, 0.0]])
    with pytest.raises(ValidationError):
        DistanceMatrix(("AA1", "BB1"), [[0.0, 1.0], [2.0, 0.0]])
    with pytest.raises(ValidationError):
        DistanceMatrix(("AA1", "BB1"), [[1.0, 1.0], [1.0, 0.0]])


def test_agglomerate_needs_two_regions():
    with pytest.raises(ValidationError):
        agglomerate(DistanceMatrix(("AA1",), [[0.0]]))


def test_two_regions_single_merge():
    tree = agglomerate(DistanceMatrix(("AA1", "BB1"), [[0.0, 3.5], [3.5, 0.0]]))
    assert _steps(tree) == [(0, 1, 3.5, 2)]


def test_four_point_fixture():
    tree = agglomerate(DistanceMatrix(tuple(FOUR), FOUR_D))
    assert tree.heights.tolist() == [1.0, 1.0, 10.0]
    assert_same_tree(tree, naive_agglomerate(FOUR, FOUR_D.tolist()))
    assert cut(tree, 2).communities() == [["AA01", "AA02"], ["BB01", "BB02"]]
    assert cut(tree, 2).labels == {"AA01": 1, "AA02": 1, "BB01": 2, "BB02": 2}


def test_eight_point_matches_oracle():
    rng = np.random.default_rng(8)
    regions = region_codes(8, country_size=3)
    d = random_distances(rng, 8)
    tree = agglomerate(DistanceMatrix(tuple(regions), d))
    assert_same_tree(tree, naive_agglomerate(regions, d.tolist()))


@pytest.mark.parametrize("seed", range(25))
def test_random_trees_match_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 25))
    regions = region_codes(n, country_size=4)
    d = random_distances(rng, n)
    tree = agglomerate(DistanceMatrix(tuple(regions), d))
    oracle = naive_agglomerate(regions, d.tolist())
    assert_same_tree(tree, oracle)
    for k in range(1, n + 1):
        assert cut(tree, k).communities() == [sorted(g) for g in naive_cut(regions, oracle, k)]


def test_ties_follow_canonical_pair_order():
    # all distances equal: every merge is a tie, broken by smallest canonical pair
    regions = ["CC1", "AA1", "BB1", "AA2"]
    d = np.ones((4, 4)) - np.eye(4)
    tree = agglomerate(DistanceMatrix(tuple(regions), d))
    assert_same_tree(tree, naive_agglomerate(regions, d.tolist()))
    # AA1 (index 1) with AA2 (index 3) first
    assert (tree.steps[0].left, tree.steps[0].right) == (1, 3)


def test_heights_match_scipy_average_linkage():
    rng = np.random.default_rng(11)
    n = 30
    d = random_distances(rng, n)
    tree = agglomerate(DistanceMatrix(tuple(region_codes(n)), d))
    ref = linkage(squareform(d), method="average")
    np.testing.assert_allclose(np.sort(tree.heights), np.sort(ref[:, 2]), rtol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_refinement_and_extremes(seed):
    rng = np.random.default_rng(100 + seed)
    n = 15
    regions = region_codes(n, country_size=5)
    tree = agglomerate(DistanceMatrix(tuple(regions), random_distances(rng, n)))
    assert len(cut(tree, n).communities()) == n
    assert cut(tree, 1).communities() == [sorted(regions)]
    for k in range(2, n + 1):
        fine = cut(tree, k).communities()
        coarse = [set(g) for g in cut(tree, k - 1).communities()]
        assert len(fine) == k
        for g in fine:
            assert sum(set(g) <= c for c in coarse) == 1


def test_scale_invariance():
    rng = np.random.default_rng(5)
    n = 12
    regions = region_codes(n)
    d = random_distances(rng, n)
    t1 = agglomerate(DistanceMatrix(tuple(regions), d))
    t2 = agglomerate(DistanceMatrix(tuple(regions), d * 4.0))
    assert [(s.left, s.right) for s in t1.steps] == [(s.left, s.right) for s in t2.steps]
    np.testing.assert_allclose(t2.heights, 4.0 * t1.heights, rtol=1e-13)
    for k in (2, 5, 9):
        assert cut(t1, k).labels == cut(t2, k).labels


def test_permutation_invariance():
    rng = np.random.default_rng(6)
    n = 14
    regions = region_codes(n, country_size=3)
    d = random_distances(rng, n)
    perm = rng.permutation(n)
    t1 = agglomerate(DistanceMatrix(tuple(regions), d))
    t2 = agglomerate(DistanceMatrix(tuple(regions[p] for p in perm), d[np.ix_(perm, perm)]))
    for k in range(1, n + 1):
        assert cut(t1, k).labels == cut(t2, k).labels


@pytest.mark.parametrize("k", [0, 5, -1, 2.0])
def test_cut_k_out_of_range(k):
    tree = agglomerate(DistanceMatrix(tuple(FOUR), FOUR_D))
    with pytest.raises(ValidationError):
        cut(tree, k)


def test_merge_tree_csv_and_cluster_regions():
    sci = SCIMatrix(FOUR, np.where(FOUR_D == 0, 0.0, 1.0 / np.where(FOUR_D == 0, 1, FOUR_D)))
    tree, cuts = cluster_regions(sci, [1, 2, 4])
    lines = tree.to_csv_text().splitlines()
    assert lines[0] == "step,left,right,height,new_id"
    assert len(lines) == 4
    assert cuts[2].to_csv_text() == "region,community\nAA01,1\nAA02,1\nBB01,2\nBB02,2\n"
    assert len(cuts[4].communities()) == 4
