import numpy as np
import pytest

from dcflowgen.degseq import RackLayout
from dcflowgen.dist import StepDistribution, empirical_cdf, ks_distance
from dcflowgen.tm import TrafficMatrix, TrafficProfile, build_graph, build_tm, read_tm_csv, sample_degrees, write_tm_csv

ZERO = StepDistribution.point_mass(0.0, "count")


def profile(n_intra=ZERO, n_inter=ZERO, b=StepDistribution.point_mass(1e6)):
    iat = StepDistribution.point_mass(1e-3, "seconds")
    return TrafficProfile(n_intra, n_inter, b, b, StepDistribution.point_mass(1e3), iat)


def test_matrix_validation():
    lay = RackLayout(4, 2)
    with pytest.raises(ValueError):
        TrafficMatrix(lay, np.array([[1, 1]]), np.array([5.0]))
    with pytest.raises(ValueError):
        TrafficMatrix(lay, np.array([[0, 4]]), np.array([5.0]))
    with pytest.raises(ValueError):
        TrafficMatrix(lay, np.array([[0, 1]]), np.array([-1.0]))


def test_accumulate_and_dense():
    lay = RackLayout(4, 2)
    tm = TrafficMatrix.accumulate(lay, [0, 0, 3, 2], [1, 1, 0, 1], [1.0, 2.0, 5.0, 0.0])
    assert tm.nnz == 2 and tm.get(0, 1) == 3.0 and tm.get(3, 0) == 5.0
    dense = tm.dense()
    assert dense.sum() == 8.0 and dense[0, 1] == 3.0
    assert TrafficMatrix.from_dense(dense, lay).nnz == 2
    assert tm.is_intra().tolist() == [True, False]
    assert tm.undirected_degrees("inter").tolist() == [1, 0, 0, 1]


def test_pair_fractions():
    lay = RackLayout(4, 2)
    tm = TrafficMatrix.accumulate(lay, [0, 1, 2], [1, 0, 3], [1.0, 1.0, 1.0])
    assert tm.pair_fractions() == (1.0, 0.0)


def test_zero_degrees_give_empty_tm():
    lay = RackLayout.uniform(3, 4)
    d_int, d_ext = sample_degrees(profile(), lay, np.random.default_rng(0))
    assert not d_int.degrees.any() and not d_ext.degrees.any()
    assert build_tm(profile(), lay, np.random.default_rng(0)).nnz == 0


def test_intra_degrees_clipped_to_rack():
    big = StepDistribution.point_mass(50.0, "count")
    lay = RackLayout.uniform(4, 20)
    d_int, d_ext = sample_degrees(profile(big, big), lay, np.random.default_rng(1))
    assert d_int.degrees.max() == 19 and d_ext.degrees.max() == 50


def test_forced_single_edge_one_direction():
    one = StepDistribution.point_mass(1.0, "count")
    lay = RackLayout.uniform(2, 2)
    # intra demand 0, inter demand 1 on every node: 2 disjoint cross-rack edges
    tm = build_tm(profile(n_inter=one), lay, np.random.default_rng(2), directions="one")
    assert tm.nnz == 2
    assert np.all(tm.volumes == 1e6)
    assert not tm.is_intra().any()
    # exactly one direction per undirected edge
    und = {tuple(sorted(p)) for p in tm.pairs.tolist()}
    assert len(und) == 2
    both = build_tm(profile(n_inter=one), lay, np.random.default_rng(2))
    assert both.nnz == 4


def test_single_forced_edge_two_singleton_racks():
    one = StepDistribution.point_mass(1.0, "count")
    lay = RackLayout(2, 1)
    dirs = set()
    for seed in range(20):
        tm = build_tm(profile(n_inter=one), lay, np.random.default_rng(seed), directions="one")
        assert tm.nnz == 1 and tm.total == 1e6
        dirs.add(tuple(tm.pairs[0]))
    assert dirs == {(0, 1), (1, 0)}


def test_sampled_inter_degrees_match_distribution():
    n_inter = StepDistribution.from_points([(0, 0.0), (1, 0.3), (5, 0.8), (40, 1.0)], "count")
    lay = RackLayout(10**5, 10**5 // 2)
    _, d_ext = sample_degrees(profile(n_inter=n_inter), lay, np.random.default_rng(3))
    assert ks_distance(empirical_cdf(d_ext.degrees, "count"), n_inter) < 0.02


def test_determinism_and_volume_distribution():
    n = StepDistribution.from_pmf([1, 2, 3, 4], [0.4, 0.3, 0.2, 0.1], "count")
    b = StepDistribution.from_points([(1e3, 0.0), (1e5, 0.5), (1e7, 1.0)])
    prof = profile(n, n, b)
    lay = RackLayout.uniform(10, 10)
    a = build_tm(prof, lay, np.random.default_rng(4))
    assert np.array_equal(a.pairs, build_tm(prof, lay, np.random.default_rng(4)).pairs)
    vols = np.concatenate([build_tm(prof, lay, np.random.default_rng(s)).volumes for s in range(30)])
    assert vols.size > 10**4
    assert ks_distance(empirical_cdf(vols), b) < 0.05


def test_graph_degrees_within_demand():
    n = StepDistribution.from_pmf([0, 1, 2, 3], [0.2, 0.3, 0.3, 0.2], "count")
    lay = RackLayout.uniform(6, 8)
    g_int, g_ext, d_int, d_ext = build_graph(profile(n, n), lay, np.random.default_rng(5))
    assert np.all(lay.same_rack(g_int.edges[:, 0], g_int.edges[:, 1]))
    assert not np.any(lay.same_rack(g_ext.edges[:, 0], g_ext.edges[:, 1]))
    assert np.all(g_ext.degrees() <= d_ext.degrees)


def test_csv_round_trip(tmp_path):
    lay = RackLayout(5, 2)
    tm = TrafficMatrix.accumulate(lay, [0, 4, 3], [1, 0, 2], [10.0, 2.5, 7.0])
    path = write_tm_csv(tm, tmp_path / "tm.csv", seed=7, epoch=1)
    back = read_tm_csv(path)
    assert np.array_equal(back.pairs, tm.pairs) and np.array_equal(back.volumes, tm.volumes)
    assert (tmp_path / "tm.json").exists()
