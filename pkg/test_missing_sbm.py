import json

import numpy as np
import pytest

from missing_sbm import main
from network_io import load_network, load_weighted_csv
from sbm_errors import EXIT_DEGENERATE, EXIT_INPUT_ERROR, EXIT_OK


def test_simulate_sample_fit(tmp_path):
    full = str(tmp_path / 'full.csv')
    labels = str(tmp_path / 'labels.json')
    sampled = str(tmp_path / 'sampled.csv')
    fit_out = str(tmp_path / 'fit.json')
    imputed = str(tmp_path / 'imputed.csv')
    assert main(['simulate', '--n', '30', '--seed', '1', '--out', full, '--labels', labels]) == EXIT_OK
    assert main(['sample', '--network', full, '--labels', labels, '--design', 'double-standard',
                 '--psi', '0.3', '0.8', '--seed', '2', '--out', sampled]) == EXIT_OK
    assert load_network(sampled).has_missing
    assert main(['fit', '--network', sampled, '--q', '3', '--method', 'double-standard',
                 '--restarts', '2', '--out', fit_out, '--imputed', imputed]) == EXIT_OK
    with open(fit_out) as f:
        record = json.load(f)
    assert record['method'] == 'double-standard'
    assert record['psi']['type'] == 'double-standard'
    assert len(record['labels']) == 30
    net = load_network(sampled)
    filled = load_weighted_csv(imputed)
    assert filled.shape == (30, 30)
    np.testing.assert_allclose(filled[net.observed_mask], net.adjacency[net.observed_mask])
    rows, cols = net.missing_dyads
    np.testing.assert_allclose(filled[rows, cols], filled[cols, rows])
    assert filled[rows, cols].mean() == pytest.approx(record['nu']['mean'])
    assert np.all((filled[rows, cols] > 0) & (filled[rows, cols] < 1))


def test_select_writes_table(tmp_path, capsys):
    full = str(tmp_path / 'full.csv')
    out = str(tmp_path / 'select.json')
    assert main(['simulate', '--n', '30', '--seed', '3', '--out', full]) == EXIT_OK
    assert main(['select', '--network', full, '--q', '1', '2', '3', '--methods', 'mar',
                 '--restarts', '2', '--out', out]) == EXIT_OK
    with open(out) as f:
        record = json.load(f)
    assert record['criterion'] == 'icl'
    assert len(record['table']) == 3
    assert 'Selected Q=' in capsys.readouterr().out


def test_oracle_recovers_parameters(tmp_path):
    params = tmp_path / 'params.json'
    params.write_text(json.dumps({'alpha': [0.4, 0.6], 'pi': [[0.8, 0.1], [0.1, 0.5]]}))
    out = str(tmp_path / 'oracle.json')
    assert main(['oracle', '--params', str(params), '--design', 'random-dyad', '--psi', '0.7',
                 '--out', out]) == EXIT_OK
    with open(out) as f:
        record = json.load(f)
    # blocks come back ordered by their atoms 0.7 * pi alpha = (0.266, 0.238)
    assert record['recovered']['alpha'] == pytest.approx([0.6, 0.4])
    assert record['recovered']['pi'][0][0] == pytest.approx(0.5)


def test_oracle_on_symmetric_affiliation_is_degenerate():
    assert main(['oracle', '--topology', 'affiliation', '--epsilon', '0.05',
                 '--design', 'random-dyad', '--psi', '0.7']) == EXIT_DEGENERATE


def test_input_errors(tmp_path):
    assert main(['fit', '--q', '2']) == EXIT_INPUT_ERROR
    assert main(['fit', '--network', str(tmp_path / 'absent.csv')]) == EXIT_INPUT_ERROR
    ragged = tmp_path / 'ragged.csv'
    ragged.write_text("0,1\n1,0,0\n")
    assert main(['fit', '--network', str(ragged)]) == EXIT_INPUT_ERROR
    assert main(['sample', '--network', str(ragged), '--design', 'random-dyad']) == EXIT_INPUT_ERROR
    assert main(['experiment']) == EXIT_INPUT_ERROR
    full = str(tmp_path / 'full.csv')
    assert main(['simulate', '--n', '12', '--seed', '4', '--out', full]) == EXIT_OK
    assert main(['fit', '--network', full, '--q', '2', '3']) == EXIT_INPUT_ERROR


def test_experiment_command(tmp_path):
    config = tmp_path / 'config.json'
    config.write_text(json.dumps({'n': 15, 'design': 'random-dyad', 'psi_grid': [[0.7]], 'q_grid': [2],
                                  'methods': ['mar'], 'replications': 1, 'restarts': 1, 'max_iter': 10}))
    out = tmp_path / 'results.csv'
    assert main(['experiment', '--config', str(config), '--out', str(out)]) == EXIT_OK
    assert len(out.read_text().splitlines()) == 2
