import itertools

import numpy as np
import pytest

from sbm_config import topology_parameters
from sbm_core import (MISSING, PRESENT, BlockAssignment, FitResult, ObservedNetwork, SbmParameters,
                      adjusted_rand_index, connectivity, frobenius_rel_error, init_clustering,
                      sample_sbm_network)
from sbm_errors import InputError


def pair_counting_ari(a, b):
    """Hubert-Arabie ARI from an explicit loop over node pairs"""
    n = len(a)
    pairs = list(itertools.combinations(range(n), 2))
    same_a = np.array([a[i] == a[j] for i, j in pairs])
    same_b = np.array([b[i] == b[j] for i, j in pairs])
    both = np.sum(same_a & same_b)
    index_a, index_b, total = same_a.sum(), same_b.sum(), len(pairs)
    expected = index_a * index_b / total
    max_index = (index_a + index_b) / 2
    return (both - expected) / (max_index - expected)


def test_generated_network_is_symmetric_and_loop_free():
    rng = np.random.default_rng(0)
    params = topology_parameters('star', 0.15)
    for _ in range(5):
        net, z = sample_sbm_network(params, 40, rng)
        assert np.array_equal(net.adjacency, net.adjacency.T)
        assert np.all(np.diag(net.adjacency) == 0)
        assert not net.has_missing
        assert z.n == 40


def test_affiliation_within_block_frequency():
    rng = np.random.default_rng(1)
    net, z = sample_sbm_network(topology_parameters('affiliation', 0.05), 100, rng)
    same = (z.labels[:, None] == z.labels[None, :]) & net.off_diagonal
    assert abs(net.adjacency[same].mean() - 0.95) <= 0.05
    assert abs(net.adjacency[~same & net.off_diagonal].mean() - 0.05) <= 0.05


def test_zero_connectivity_gives_empty_graph():
    rng = np.random.default_rng(2)
    net, _ = sample_sbm_network(SbmParameters([0.5, 0.5], np.zeros((2, 2))), 30, rng)
    assert net.adjacency.sum() == 0


def test_single_block_density_converges():
    rng = np.random.default_rng(3)
    net, _ = sample_sbm_network(SbmParameters([1.0], [[0.3]]), 200, rng)
    assert abs(net.observed_density() - 0.3) < 0.03


def test_invalid_parameters_are_rejected():
    with pytest.raises(InputError):
        SbmParameters([0.5, 0.5], [[0.2, 0.3], [0.1, 0.2]])
    with pytest.raises(InputError):
        SbmParameters([0.6, 0.6], [[0.2, 0.1], [0.1, 0.2]])
    with pytest.raises(InputError):
        SbmParameters([0.5, 0.5], [[1.2, 0.1], [0.1, 0.2]])
    with pytest.raises(InputError):
        sample_sbm_network(SbmParameters([1.0], [[0.3]]), 0, np.random.default_rng(0))


def test_connectivity_of_mar_affiliation():
    params = topology_parameters('mar-affiliation', 0.3)
    assert connectivity(params) == pytest.approx(0.3 / 3 + 0.03 * 2 / 3)


def test_ari_reference_values():
    a = BlockAssignment([0, 0, 1, 1, 2, 2], 3)
    b = BlockAssignment([0, 0, 1, 2, 2, 2], 3)
    assert adjusted_rand_index(a, a) == pytest.approx(1.0)
    one_block = BlockAssignment(np.zeros(6, dtype=int), 1)
    halves = BlockAssignment([0, 0, 0, 1, 1, 1], 2)
    assert adjusted_rand_index(one_block, halves) == pytest.approx(0.0)
    assert adjusted_rand_index(a, b) == pytest.approx(pair_counting_ari(a.labels, b.labels))


def test_ari_is_invariant_to_relabeling():
    rng = np.random.default_rng(4)
    for _ in range(10):
        a = BlockAssignment(rng.integers(0, 3, 20), 3)
        b = BlockAssignment(rng.integers(0, 3, 20), 3)
        perm = rng.permutation(3)
        relabeled = BlockAssignment(perm[b.labels], 3)
        assert adjusted_rand_index(a, b) == pytest.approx(adjusted_rand_index(a, relabeled))


def test_ari_length_mismatch():
    with pytest.raises(InputError):
        adjusted_rand_index(BlockAssignment([0, 1], 2), BlockAssignment([0, 1, 1], 2))


def test_frobenius_error_alignment():
    pi = topology_parameters('star', 0.15).pi
    assert frobenius_rel_error(pi, pi) == 0.0
    perm = np.array([2, 0, 3, 1])
    assert frobenius_rel_error(pi[np.ix_(perm, perm)], pi) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(InputError):
        frobenius_rel_error(pi[:3, :3], pi)


def test_frobenius_error_matches_exhaustive_search():
    rng = np.random.default_rng(5)
    for _ in range(10):
        a = rng.random((3, 3))
        a = (a + a.T) / 2
        b = rng.random((3, 3))
        b = (b + b.T) / 2
        best = min(np.linalg.norm(a[np.ix_(p, p)] - b) for p in map(list, itertools.permutations(range(3))))
        assert frobenius_rel_error(a, b) == pytest.approx(best / np.linalg.norm(b))


def test_observed_network_sets():
    net = ObservedNetwork.from_dyads(4, {(0, 1): PRESENT, (0, 2): 0, (1, 2): 0})
    assert net.n_observed_dyads == 3
    assert net.n_missing_dyads == 3
    rows, cols = net.missing_dyads
    assert list(zip(rows.tolist(), cols.tolist())) == [(0, 3), (1, 3), (2, 3)]
    assert net.observed_nodes.tolist() == [True, True, True, False]
    assert not net.sampled_nodes.any()
    assert net.sampling_rate == pytest.approx(0.5)
    assert net.state(3, 0) == MISSING
    with pytest.raises(InputError):
        net.state(1, 1)


def test_hardening_ties_go_to_lowest_block():
    z = BlockAssignment.from_tau(np.array([[0.5, 0.5], [0.2, 0.8]]))
    assert z.labels.tolist() == [0, 1]
    z = BlockAssignment.from_tau(np.full((3, 3), 1 / 3))
    assert z.labels.tolist() == [0, 0, 0]


def test_init_clustering_shapes():
    rng = np.random.default_rng(6)
    net, _ = sample_sbm_network(topology_parameters('affiliation', 0.1), 30, rng)
    assert np.array_equal(init_clustering(net, 1, 'random', rng), np.ones((30, 1)))
    tau = init_clustering(net, 3, 'random', rng)
    np.testing.assert_allclose(tau.sum(axis=1), 1.0, atol=1e-12)
    with pytest.raises(InputError):
        init_clustering(net, 31, 'random', rng)
    with pytest.raises(InputError):
        init_clustering(net, 2, 'louvain', rng)


def test_spectral_init_separates_two_cliques():
    adjacency = np.zeros((10, 10))
    adjacency[:5, :5] = 1
    adjacency[5:, 5:] = 1
    np.fill_diagonal(adjacency, 0)
    net = ObservedNetwork.from_adjacency(adjacency)
    tau = init_clustering(net, 2, 'spectral', np.random.default_rng(7))
    truth = BlockAssignment([0] * 5 + [1] * 5, 2)
    assert adjusted_rand_index(BlockAssignment.from_tau(tau), truth) == pytest.approx(1.0)
    assert tau.min() >= 0.05 - 1e-12


def test_imputed_adjacency_fills_missing_dyads():
    adjacency = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    missing = np.zeros((3, 3), dtype=bool)
    missing[0, 2] = missing[2, 0] = True
    net = ObservedNetwork.from_adjacency(adjacency, missing)
    params = SbmParameters([1.0], [[0.4]])
    fit = FitResult('double-standard', 1, params, np.ones((3, 1)), [0.0], nu=np.array([0.7]))
    filled = fit.imputed_adjacency(net)
    assert filled[0, 2] == filled[2, 0] == 0.7
    assert filled[0, 1] == 1
    no_nu = FitResult('mar', 1, params, np.ones((3, 1)), [0.0])
    assert no_nu.imputed_adjacency(net)[0, 2] == pytest.approx(0.4)
    assert fit.to_record()['nu']['count'] == 1
