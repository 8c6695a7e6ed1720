import glob
import json
import os

import numpy as np
import pytest

from sbm_config import TOPOLOGIES, ExperimentConfig, load_settings, topology_parameters
from sbm_errors import InputError

CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'configs')


def test_shipped_configs_load():
    paths = sorted(glob.glob(os.path.join(CONFIG_DIR, '*.json')))
    assert paths
    for path in paths:
        config = ExperimentConfig.from_json(path)
        assert config.output.endswith('.csv')
        assert config.true_parameters().q >= 1


def test_topology_presets():
    for topology in TOPOLOGIES:
        params = topology_parameters(topology, 0.15)
        np.testing.assert_allclose(params.alpha.sum(), 1.0)
    star = topology_parameters('star', 0.1)
    assert star.q == 4
    assert star.pi[1, 1] == 0 and star.pi[0, 1] == pytest.approx(0.9)
    assert topology_parameters('mar-affiliation', 0.4).pi[0, 1] == pytest.approx(0.04)
    with pytest.raises(InputError):
        topology_parameters('ring', 0.1)
    with pytest.raises(InputError):
        topology_parameters('affiliation', 1.5)


def test_experiment_validation():
    with pytest.raises(InputError):
        ExperimentConfig(topology='ring')
    with pytest.raises(InputError):
        ExperimentConfig(methods=['mar', 'louvain'])
    with pytest.raises(InputError):
        ExperimentConfig(design='double-standard', psi_grid=[[0.5]])
    with pytest.raises(InputError):
        ExperimentConfig(design='class', psi_grid=[[0.5, 0.5]], methods=['class'])
    with pytest.raises(InputError):
        ExperimentConfig(q_grid=[0])
    with pytest.raises(InputError):
        ExperimentConfig(replications=0)


def test_row_based_methods_need_node_centered_designs():
    with pytest.raises(InputError):
        ExperimentConfig(design='double-standard', psi_grid=[[0.3, 0.8]], methods=['mar', 'star-degree'])
    with pytest.raises(InputError):
        ExperimentConfig(design='random-dyad', psi_grid=[[0.5]], methods=['class'])
    config = ExperimentConfig(design='star-degree', psi_grid=[[-2.0, 0.1]], methods=['mar', 'star-degree'])
    assert config.methods == ['mar', 'star-degree']


def test_psi_grid_is_normalized():
    config = ExperimentConfig(design='random-dyad', psi_grid=[0.3, [0.6]], methods=['mar'])
    assert config.psi_grid == [[0.3], [0.6]]


def test_overrides_replace_the_preset():
    config = ExperimentConfig(alpha=[0.5, 0.5], pi=[[0.9, 0.1], [0.1, 0.9]],
                              design='random-dyad', psi_grid=[[0.5]], methods=['mar'])
    truth = config.true_parameters()
    assert truth.q == 2
    assert truth.pi[0, 1] == pytest.approx(0.1)
    assert config.to_record()['alpha'] == [0.5, 0.5]


def test_from_json_errors(tmp_path):
    unknown = tmp_path / 'unknown.json'
    unknown.write_text(json.dumps({'topology': 'affiliation', 'budget': 3}))
    with pytest.raises(InputError):
        ExperimentConfig.from_json(str(unknown))
    broken = tmp_path / 'broken.json'
    broken.write_text('{"topology": ')
    with pytest.raises(InputError):
        ExperimentConfig.from_json(str(broken))
    with pytest.raises(InputError):
        ExperimentConfig.from_json(str(tmp_path / 'missing.json'))


def test_load_settings_from_environment(monkeypatch):
    monkeypatch.setenv('SBM_SEED', '7')
    monkeypatch.setenv('SBM_RESTARTS', '4')
    monkeypatch.setenv('SBM_VERBOSE', 'yes')
    settings = load_settings()
    assert settings.seed == 7
    assert settings.restarts == 4
    assert settings.verbose
    monkeypatch.setenv('SBM_TOLERANCE', 'tiny')
    with pytest.raises(InputError):
        load_settings()
    monkeypatch.setenv('SBM_TOLERANCE', '1e-6')
    monkeypatch.setenv('SBM_WORKERS', '0')
    with pytest.raises(InputError):
        load_settings()
