import numpy as np
import pytest

from model_selection import (SelectionEntry, SelectionTable, fit_command, fit_once, init_rng,
                             restart_inits, select_command, warm_start)
from sampling_designs import DoubleStandard, RandomDyad, apply_design
from sbm_config import topology_parameters
from sbm_core import FitResult, SbmParameters, adjusted_rand_index, init_clustering, sample_sbm_network
from sbm_errors import InputError


def affiliation_network(n=60, seed=0, rho=None):
    rng = np.random.default_rng(seed)
    net, z = sample_sbm_network(topology_parameters('affiliation', 0.05), n, rng)
    if rho is not None:
        net = apply_design(net, z, RandomDyad(rho), rng)
    return net, z


def entry(q, method, icl):
    fit = FitResult(method, q, SbmParameters([1.0], [[0.5]]), np.ones((2, 1)), [0.0])
    return SelectionEntry(q, method, icl, icl, fit)


def test_restart_inits_layout():
    net, _ = affiliation_network(30)
    inits = restart_inits(net, 3, 7, init_rng(0, 3))
    assert len(inits) == 7
    spectral = init_clustering(net, 3, 'spectral', init_rng(0, 3))
    np.testing.assert_allclose(inits[0], spectral)
    for tau in inits:
        assert tau.shape == (30, 3)
        np.testing.assert_allclose(tau.sum(axis=1), 1.0, atol=1e-12)
    with pytest.raises(InputError):
        restart_inits(net, 3, 0, init_rng(0, 3))


def test_fit_command_is_deterministic():
    net, _ = affiliation_network(40, seed=1, rho=0.7)
    a = fit_command(net, 3, 'mar', restarts=3, seed=11)
    b = fit_command(net, 3, 'mar', restarts=3, seed=11)
    assert np.array_equal(a.theta_hat.pi, b.theta_hat.pi)
    assert a.labels.labels.tolist() == b.labels.labels.tolist()
    assert a.icl == b.icl


def test_more_restarts_never_lower_the_bound():
    net, _ = affiliation_network(40, seed=2, rho=0.6)
    single = fit_command(net, 3, 'mar', restarts=1, seed=3)
    many = fit_command(net, 3, 'mar', restarts=10, seed=3)
    assert many.final_bound >= single.final_bound


def test_fit_once_rejects_unknown_method():
    net, _ = affiliation_network(20)
    with pytest.raises(InputError):
        fit_once(net, 2, 'snowball', init_clustering(net, 2, 'random', np.random.default_rng(0)))


def test_single_candidate_selection():
    net, _ = affiliation_network(30, seed=4)
    table = select_command(net, [2], ['mar'], restarts=2, seed=0)
    assert table.criterion == 'icl'
    assert table.best.q == 2
    assert table.best_q() == {'mar': 2}
    assert table.to_record()['best'] == {'q': 2, 'method': 'mar'}


def test_selection_icl_matches_fit_command():
    net, _ = affiliation_network(40, seed=5, rho=0.8)
    table = select_command(net, [2], ['mar'], restarts=3, seed=5)
    fit = fit_command(net, 2, 'mar', restarts=3, seed=5)
    assert table.entries[0].icl == pytest.approx(fit.icl)


def test_planted_block_count_is_selected():
    net, z = affiliation_network(90, seed=6)
    table = select_command(net, [1, 2, 3, 4, 5], ['mar'], restarts=3, seed=6)
    assert table.best.q == 3
    assert adjusted_rand_index(table.best.fit.labels, z) >= 0.95


def test_joint_criterion_with_nmar_candidates():
    rng = np.random.default_rng(7)
    full, z = sample_sbm_network(topology_parameters('affiliation', 0.05), 40, rng)
    net = apply_design(full, z, DoubleStandard(0.3, 0.8), rng)
    table = select_command(net, [2, 3], ['mar', 'double-standard'], restarts=2, seed=7)
    assert table.criterion == 'icl_joint'
    assert len(table.entries) == 4
    mar_entries = [e for e in table.entries if e.method == 'mar']
    assert all(e.icl_joint != e.icl for e in mar_entries)
    assert set(table.best_q()) == {'mar', 'double-standard'}


def test_ties_go_to_smaller_q_then_mar():
    table = SelectionTable([entry(3, 'mar', 10.0), entry(2, 'double-standard', 10.0),
                            entry(2, 'mar', 10.0), entry(4, 'class', 12.0)], 'icl_joint')
    assert (table.best.q, table.best.method) == (2, 'mar')
    assert table.best_q() == {'mar': 2, 'double-standard': 2, 'class': 4}


def test_invalid_selection_requests():
    net, _ = affiliation_network(20)
    with pytest.raises(InputError):
        select_command(net, [], ['mar'])
    with pytest.raises(InputError):
        select_command(net, [2], ['snowball'])


def test_nmar_restarts_include_the_mar_solution():
    rng = np.random.default_rng(8)
    full, z = sample_sbm_network(topology_parameters('affiliation', 0.05), 40, rng)
    net = apply_design(full, z, DoubleStandard(0.3, 0.8), rng)
    first = restart_inits(net, 2, 1, init_rng(8, 2))[0]
    warm = fit_once(net, 2, 'double-standard', warm_start(net, 2, first))
    fit = fit_command(net, 2, 'double-standard', restarts=1, seed=8)
    assert fit.final_bound >= warm.final_bound


def design_selections(design, seeds, q_grid):
    params = topology_parameters('affiliation', 0.05)
    tables = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        full, z = sample_sbm_network(params, 100, rng)
        net = apply_design(full, z, design, rng)
        tables.append(select_command(net, q_grid, ['mar', 'double-standard'], restarts=2, seed=seed))
    return tables


def test_double_standard_data_select_the_nmar_design_and_q():
    tables = design_selections(DoubleStandard(0.9, 0.3), range(80, 86), [2, 3, 4])
    assert sum(t.best.method == 'double-standard' for t in tables) >= 5
    assert sum(t.best_q()['double-standard'] == 3 for t in tables) >= 5


def test_random_dyad_data_select_mar():
    tables = design_selections(RandomDyad(0.75), range(90, 96), [3])
    assert sum(t.best.method == 'mar' for t in tables) >= 4
