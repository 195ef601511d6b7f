# Copyright (C) 2018 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""Tests for experiment configs."""

from pathlib import Path

import pytest

import monolab.config as mconfig
from monolab.fixtures import Chafee, Tanh2, get_fixture
from monolab.models import ODEModel
from monolab.semiflow import Scheme

CONFIGS = Path(__file__).parents[1] / 'configs'


def test_minimal() -> None:
    config = mconfig.from_dict({'model': {'fixture': 'tanh2'},
                                'experiment': {'kind': 'line'}})
    assert isinstance(config.model.fixture, Tanh2)
    assert config.experiment.n == 100
    assert config.seed == 0
    assert config.integrator.rel_tol == 1e-8
    assert config.classifier.t_burn == 50.0
    assert config.order.build(2).signs == (1, 1)


def test_unknown_fixture() -> None:
    with pytest.raises(mconfig.ConfigError) as excinfo:
        mconfig.from_dict({'model': {'fixture': 'foo'},
                           'experiment': {'kind': 'line'}})
    assert excinfo.value.reason is mconfig.ConfigError.Reason.UNKNOWN_FIXTURE
    assert excinfo.value.path == 'model.fixture'
    assert 'model.fixture' in str(excinfo.value)


@pytest.mark.parametrize('data,reason,path', (
    ({'model': {'fixture': 'tanh2'}}, 'MISSING_KEY', 'experiment'),
    ({'model': {'fixture': 'tanh2'}, 'experiment': {'kind': 'spiral'}},
     'UNKNOWN_EXPERIMENT', 'experiment.kind'),
    ({'model': {'fixture': 'tanh2'},
      'experiment': {'kind': 'line', 'm': 3}},
     'UNKNOWN_KEY', 'experiment.m'),
    ({'model': {'fixture': 'tanh2'},
      'experiment': {'kind': 'line', 'n': 'many'}},
     'WRONG_TYPE', 'experiment.n'),
    ({'model': {'fixture': 'tanh2', 'nodes': 3},
      'experiment': {'kind': 'line'}},
     'UNKNOWN_KEY', 'model'),
    ({'model': {'fixture': 'tanh2'}, 'experiment': {'kind': 'line'},
      'integrator': {'rel_tol': -1}},
     'INVALID_VALUE', 'integrator'),
    ({'model': {'fixture': 'tanh2'}, 'experiment': {'kind': 'line'},
      'order': {'signs': [1]}},
     'INVALID_VALUE', 'order.signs'),
    ({'model': {'arity': 1}, 'experiment': {'kind': 'line'}},
     'MISSING_KEY', 'model.reaction'),
    ({'model': {'fixture': 'tanh2'}, 'experiment': {'kind': 'line'},
      'plots': {}},
     'UNKNOWN_KEY', 'plots'),
    ([1, 2], 'NOT_A_MAPPING', ''),
))
def test_invalid(data, reason: str, path: str) -> None:
    with pytest.raises(mconfig.ConfigError) as excinfo:
        mconfig.from_dict(data)
    assert excinfo.value.reason is mconfig.ConfigError.Reason[reason]
    assert excinfo.value.path == path


def test_custom_model() -> None:
    config = mconfig.from_dict({
        'model': {'arity': 2, 'reaction': '-u1 + u2; -u2 + u1'},
        'experiment': {'kind': 'trajectory', 'x0': [1, 0]},
        'integrator': {'scheme': 'adaptive_rk54', 'abs_tol': '1e-9'},
    })
    model = config.model.build()
    assert isinstance(model, ODEModel)
    assert config.integrator.scheme is Scheme.ADAPTIVE_RK54
    assert config.integrator.abs_tol == 1e-9
    assert config.experiment.x0 == [1.0, 0.0]
    assert config.model.box() == [(-2.0, 2.0), (-2.0, 2.0)]


def test_custom_reaction_parse_error() -> None:
    config = mconfig.from_dict({
        'model': {'arity': 1, 'reaction': 'u2'},
        'experiment': {'kind': 'trajectory'},
    })
    with pytest.raises(mconfig.ConfigError) as excinfo:
        config.model.build()
    assert excinfo.value.path == 'model.reaction'


def test_custom_rd_model() -> None:
    config = mconfig.from_dict({
        'model': {'arity': 1, 'reaction': 'u1 - u1^3', 'diffusion': [0.01],
                  'grid': {'nodes': [21]}},
        'experiment': {'kind': 'homogeneity', 'm': 2},
    })
    assert config.model.build().layout == (1, 21)


def test_tagged_fixture(tmp_path: Path) -> None:
    path = tmp_path / 'config.yml'
    path.write_text('model: !chafee {nodes: 51}\n'
                    'experiment: {kind: equilibria}\n')
    config = mconfig.load(path)
    assert isinstance(config.model.fixture, Chafee)
    assert config.model.fixture.nodes == 51
    echo = config.to_dict()['model']
    assert echo['fixture'] == 'chafee'
    assert echo['params'] == {'nodes': 51}


def test_overrides() -> None:
    data = {'model': get_fixture('chafee'),
            'experiment': {'kind': 'line', 'n': 100}}
    mconfig.apply_overrides(data, ['experiment.n=50', 'model.nodes=21',
                                   'classifier.t_burn=1e2', 'seed=3'])
    config = mconfig.from_dict(data)
    assert config.experiment.n == 50
    assert config.model.fixture.nodes == 21
    assert config.classifier.t_burn == 100.0
    assert config.seed == 3


@pytest.mark.parametrize('override', ('experiment.n', '=3'))
def test_invalid_override(override: str) -> None:
    with pytest.raises(mconfig.ConfigError) as excinfo:
        mconfig.apply_overrides({}, [override])
    assert excinfo.value.reason is (
        mconfig.ConfigError.Reason.INVALID_OVERRIDE
    )


def test_override_through_scalar() -> None:
    with pytest.raises(mconfig.ConfigError):
        mconfig.apply_overrides({'seed': 0}, ['seed.value=1'])


def test_unreadable(tmp_path: Path) -> None:
    with pytest.raises(mconfig.ConfigError) as excinfo:
        mconfig.load(tmp_path / 'missing.json')
    assert excinfo.value.reason is mconfig.ConfigError.Reason.UNREADABLE


def test_invalid_syntax(tmp_path: Path) -> None:
    path = tmp_path / 'config.yml'
    path.write_text('model: !foo {}\nexperiment: {kind: line}\n')
    with pytest.raises(mconfig.ConfigError) as excinfo:
        mconfig.load(path)
    assert excinfo.value.reason is mconfig.ConfigError.Reason.INVALID_SYNTAX


@pytest.mark.parametrize('name', sorted(p.name for p in CONFIGS.glob('*')))
def test_shipped_configs(name: str) -> None:
    config = mconfig.load(CONFIGS / name)
    assert config.experiment.kind in mconfig.EXPERIMENTS
    assert config.to_dict()['seed'] == config.seed
