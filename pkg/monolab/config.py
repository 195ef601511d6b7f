# Copyright (C) 2019 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""Experiment configuration.

A config is a JSON or YAML mapping::

    {
      "model": {"fixture": "tanh2"},
      "order": {"signs": [1, 1], "eta": 1e-9},
      "integrator": {"rel_tol": 1e-8},
      "classifier": {"t_burn": 50},
      "experiment": {"kind": "line", "n": 100},
      "seed": 0,
      "output_dir": "out"
    }

``model`` is either ``{"fixture": name, **params}``, a tagged fixture such as
``!chafee {nodes: 101}``, or a custom model
``{"arity": n, "reaction": source, "diffusion": [...], "grid": {...}}``
(an ODE when ``diffusion`` is omitted). Every other section maps onto a
dataclass whose defaults apply to missing keys.
"""
from __future__ import annotations

import dataclasses as dc
import enum
import logging
import math
from pathlib import Path
from typing import (Any, Dict, List, Optional, Tuple, Type, TypeVar, Union,
                    get_type_hints)

import yaml
from typing_extensions import Literal

import monolab.yaml as myaml
from monolab.discretize import Grid, assemble
from monolab.dsl import ParseError, parse
from monolab.fixtures import Fixture, available, get_fixture
from monolab.limits import ClassifierParams
from monolab.models import Model, ODEModel
from monolab.order import ConeOrder, ContractViolation
from monolab.semiflow import IntegratorConfig

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

T = TypeVar('T')


class ConfigError(Exception):
    """Exception raised on an invalid experiment config."""

    class Reason(str, enum.Enum):
        """Reason for the exception."""

        UNREADABLE = 'unreadable'
        INVALID_SYNTAX = 'invalid_syntax'
        NOT_A_MAPPING = 'not_a_mapping'
        UNKNOWN_KEY = 'unknown_key'
        MISSING_KEY = 'missing_key'
        WRONG_TYPE = 'wrong_type'
        INVALID_VALUE = 'invalid_value'
        UNKNOWN_FIXTURE = 'unknown_fixture'
        UNKNOWN_EXPERIMENT = 'unknown_experiment'
        INVALID_OVERRIDE = 'invalid_override'

    def __init__(self, reason: ConfigError.Reason, path: str,
                 message: str) -> None:
        """Initialize the exception.

        Args:
            reason: The reason of the exception.
            path: The dotted path of the offending field.
            message: What is wrong with it.

        """
        self._reason = reason
        self.path = path
        super().__init__(f'{path or "<config>"}: {message}')

    @property
    def reason(self) -> ConfigError.Reason:
        """Return the reason of the exception."""
        return self._reason


@dc.dataclass(frozen=True)
class OrderSection(object):
    """Orthant order; ``signs`` defaults to all +1."""

    signs: Optional[List[int]] = None
    eta: float = 1e-9

    def build(self, species: int) -> ConeOrder:
        """Return the order for ``species`` species."""
        signs = self.signs if self.signs is not None else [1] * species
        if len(signs) != species:
            raise ConfigError(ConfigError.Reason.INVALID_VALUE, 'order.signs',
                              f'{len(signs)} signs for {species} species')
        return ConeOrder(signs=tuple(signs), eta=self.eta)


@dc.dataclass(frozen=True)
class SweepSection(object):
    """Seeds of the equilibrium sweep and of the stability analysis."""

    scalar_seeds: List[float] = dc.field(
        default_factory=lambda: [-2.0, -1.0, 0.0, 1.0, 2.0]
    )
    modes: List[int] = dc.field(default_factory=lambda: [1, 2, 3])
    amplitude: float = 0.5
    horizon: float = 1.0
    neutral_band: float = 1e-3
    power_tol: float = 1e-8
    max_pi_iter: int = 500

    def analysis(self) -> Dict[str, Any]:
        """Return the keyword arguments of the stability analysis."""
        return dict(T=self.horizon, neutral_band=self.neutral_band,
                    power_tol=self.power_tol, max_pi_iter=self.max_pi_iter)


@dc.dataclass(frozen=True)
class EquilibriaExperiment(object):
    """Sweep, analyze and export the equilibria."""

    kind: Literal['equilibria'] = 'equilibria'
    sweep: SweepSection = dc.field(default_factory=SweepSection)


@dc.dataclass(frozen=True)
class LineExperiment(object):
    """Classify the points of a segment.

    ``base`` and ``direction`` hold either one value per species (a constant
    profile) or one value per state coordinate; the fixture default is the
    diagonal from -3 to 3. ``refine`` lists further N whose unstable mass is
    reported.
    """

    kind: Literal['line'] = 'line'
    n: int = 100
    base: Optional[List[float]] = None
    direction: Optional[List[float]] = None
    refine: List[int] = dc.field(default_factory=list)
    sweep: SweepSection = dc.field(default_factory=SweepSection)


@dc.dataclass(frozen=True)
class BasinExperiment(object):
    """Search ordered pairs in the basins of the unstable equilibria."""

    kind: Literal['basin'] = 'basin'
    trials: int = 200
    step: float = 0.1
    box: Optional[List[Tuple[float, float]]] = None
    sweep: SweepSection = dc.field(default_factory=SweepSection)


@dc.dataclass(frozen=True)
class HomogeneityExperiment(object):
    """Classify random initial data of a reaction-diffusion model.

    ``sampler`` is ``fourier`` or ``noise``; unset sampler fields take the
    fixture defaults.
    """

    kind: Literal['homogeneity'] = 'homogeneity'
    m: int = 50
    sampler: str = 'fourier'
    offset_range: Optional[Tuple[float, float]] = None
    amplitude: Optional[float] = None
    modes: int = 4
    symmetric_offsets: Optional[bool] = None
    eps_unif: float = 1e-4
    cooperativity_samples: int = 1000
    box: Optional[List[Tuple[float, float]]] = None


@dc.dataclass(frozen=True)
class PropertiesExperiment(object):
    """Randomized checks of the order-theoretic properties."""

    kind: Literal['properties'] = 'properties'
    pairs: int = 200
    lsd_pairs: int = 100
    criterion_points: int = 50
    basin_trials: int = 200
    step: float = 0.1
    t_samples: List[float] = dc.field(
        default_factory=lambda: [0.5, 1.0, 2.0, 5.0]
    )
    criterion_horizon: float = 1.0
    box: Optional[List[Tuple[float, float]]] = None
    sweep: SweepSection = dc.field(default_factory=SweepSection)


@dc.dataclass(frozen=True)
class TrajectoryExperiment(object):
    """Export one trajectory; ``x0`` is per species or per coordinate."""

    kind: Literal['trajectory'] = 'trajectory'
    x0: List[float] = dc.field(default_factory=lambda: [0.5])
    t_end: float = 10.0


@dc.dataclass(frozen=True)
class ResolutionExperiment(object):
    """Repeat the equilibrium sweep of an RD fixture over node counts."""

    kind: Literal['resolution'] = 'resolution'
    nodes: List[int] = dc.field(default_factory=lambda: [51, 101, 201])
    sweep: SweepSection = dc.field(default_factory=SweepSection)


ExperimentSection = Union[EquilibriaExperiment, LineExperiment,
                          BasinExperiment, HomogeneityExperiment,
                          PropertiesExperiment, TrajectoryExperiment,
                          ResolutionExperiment]

EXPERIMENTS: Dict[str, Type[Any]] = {
    cls.kind: cls for cls in (EquilibriaExperiment, LineExperiment,
                              BasinExperiment, HomogeneityExperiment,
                              PropertiesExperiment, TrajectoryExperiment,
                              ResolutionExperiment)
}


@dc.dataclass(frozen=True)
class GridSection(object):
    """Grid of a custom reaction-diffusion model."""

    lengths: List[float] = dc.field(default_factory=lambda: [1.0])
    nodes: List[int] = dc.field(default_factory=lambda: [101])


@dc.dataclass(frozen=True)
class CustomModelSection(object):
    """A model given by a reaction source."""

    arity: int
    reaction: str
    diffusion: Optional[List[float]] = None
    grid: GridSection = dc.field(default_factory=GridSection)
    box: Optional[List[Tuple[float, float]]] = None


@dc.dataclass(frozen=True, eq=False)
class ModelSection(object):
    """Either a fixture or a custom model.

    Attributes:
        fixture: The fixture, for fixture models.
        custom: The custom description, otherwise.

    """

    fixture: Optional[Fixture] = None
    custom: Optional[CustomModelSection] = None

    def build(self) -> Model:
        """Return the model."""
        if self.fixture is not None:
            return self.fixture.build()
        assert self.custom is not None
        try:
            reaction = parse(self.custom.reaction, arity=self.custom.arity)
        except ParseError as e:
            raise ConfigError(ConfigError.Reason.INVALID_VALUE,
                              'model.reaction', str(e)) from e
        if self.custom.diffusion is None:
            return ODEModel(reaction)
        grid = Grid(lengths=tuple(self.custom.grid.lengths),
                    nodes=tuple(self.custom.grid.nodes))
        return assemble(grid, self.custom.diffusion, reaction)

    @property
    def species(self) -> int:
        """Return the number of species."""
        if self.fixture is not None:
            return self.fixture.species
        assert self.custom is not None
        return self.custom.arity

    def box(self) -> List[Tuple[float, float]]:
        """Return the default per-species box."""
        if self.custom is not None and self.custom.box is not None:
            return [tuple(b) for b in self.custom.box]  # type: ignore
        if self.fixture is not None:
            return self.fixture.box()
        return [(-2.0, 2.0)] * self.species

    def to_dict(self) -> Dict[str, Any]:
        """Return the echo of the section."""
        if self.fixture is not None:
            return {'fixture': self.fixture.name,
                    'params': _jsonable(self.fixture.input_parameters),
                    'input_hash': self.fixture.input_hash}
        assert self.custom is not None
        return _jsonable(dc.asdict(self.custom))


@dc.dataclass(frozen=True, eq=False)
class ExperimentConfig(object):
    """A validated experiment config."""

    model: ModelSection
    experiment: ExperimentSection
    order: OrderSection = dc.field(default_factory=OrderSection)
    integrator: IntegratorConfig = dc.field(default_factory=IntegratorConfig)
    classifier: ClassifierParams = dc.field(default_factory=ClassifierParams)
    seed: int = 0
    output_dir: str = 'out'

    def to_dict(self) -> Dict[str, Any]:
        """Return every value of the config, defaults included."""
        return {
            'model': self.model.to_dict(),
            'experiment': _jsonable(dc.asdict(self.experiment)),
            'order': _jsonable(dc.asdict(self.order)),
            'integrator': _jsonable(dc.asdict(self.integrator)),
            'classifier': _jsonable(dc.asdict(self.classifier)),
            'seed': self.seed,
            'output_dir': self.output_dir,
        }

    def replace(self, **changes) -> ExperimentConfig:
        """Return a copy with some fields changed."""
        return dc.replace(self, **changes)


def _jsonable(value: Any) -> Any:
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def _type_name(target: Any) -> str:
    return getattr(target, '__name__', str(target))


def _cast(value: Any, target: Any, path: str) -> Any:
    """Cast a parsed YAML value to the type hint ``target``."""
    origin = getattr(target, '__origin__', None)
    args = getattr(target, '__args__', ())

    if origin is Union:
        if value is None and type(None) in args:
            return None
        errors = []
        for arg in args:
            if arg is type(None):
                continue
            try:
                return _cast(value, arg, path)
            except ConfigError as e:
                errors.append(e)
        raise errors[0]
    if origin is Literal:
        if value not in args:
            raise ConfigError(ConfigError.Reason.INVALID_VALUE, path,
                              f'expected one of {list(args)}, got {value!r}')
        return value
    if origin in (list, List):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(ConfigError.Reason.WRONG_TYPE, path,
                              f'expected a list, got {value!r}')
        return [_cast(v, args[0], f'{path}[{i}]')
                for i, v in enumerate(value)]
    if origin in (tuple, Tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(ConfigError.Reason.WRONG_TYPE, path,
                              f'expected a list, got {value!r}')
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_cast(v, args[0], f'{path}[{i}]')
                         for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(ConfigError.Reason.WRONG_TYPE, path,
                              f'expected {len(args)} values, got {value!r}')
        return tuple(_cast(v, a, f'{path}[{i}]')
                     for i, (v, a) in enumerate(zip(value, args)))
    if dc.is_dataclass(target):
        return build_section(target, value, path)
    if isinstance(target, type) and issubclass(target, enum.Enum):
        try:
            return target(value)
        except ValueError:
            raise ConfigError(ConfigError.Reason.INVALID_VALUE, path,
                              f'expected one of '
                              f'{[m.value for m in target]}, got {value!r}')
    if target is bool:
        if not isinstance(value, bool):
            raise ConfigError(ConfigError.Reason.WRONG_TYPE, path,
                              f'expected a boolean, got {value!r}')
        return value
    if target is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(ConfigError.Reason.WRONG_TYPE, path,
                              f'expected an integer, got {value!r}')
        return value
    if target is float:
        # The YAML 1.1 resolver reads "1e-9" as a string
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(ConfigError.Reason.WRONG_TYPE, path,
                              f'expected a number, got {value!r}')
        return float(value)
    if target is str:
        if not isinstance(value, str):
            raise ConfigError(ConfigError.Reason.WRONG_TYPE, path,
                              f'expected a string, got {value!r}')
        return value
    raise TypeError(f'Unknown target type: {target}')


def _join(path: str, key: str) -> str:
    return f'{path}.{key}' if path else key


def build_section(cls: Type[T], data: Any, path: str) -> T:
    """Build the dataclass ``cls`` from a mapping, casting by type hints.

    Raises:
        ConfigError: On unknown keys, missing keys, wrong types or values
            rejected by ``cls`` itself.

    """
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(ConfigError.Reason.NOT_A_MAPPING, path,
                          f'expected a mapping, got {data!r}')
    hints = get_type_hints(cls)
    fields = {f.name: f for f in dc.fields(cls) if f.init}
    unknown = sorted(set(map(str, data)) - set(fields))
    if unknown:
        raise ConfigError(ConfigError.Reason.UNKNOWN_KEY,
                          _join(path, unknown[0]),
                          f'unknown key; expected one of {sorted(fields)}')
    kwargs = {}
    for name, field in fields.items():
        if name in data:
            kwargs[name] = _cast(data[name], hints[name], _join(path, name))
        elif (field.default is dc.MISSING
              and field.default_factory is dc.MISSING):  # type: ignore
            raise ConfigError(ConfigError.Reason.MISSING_KEY,
                              _join(path, name), 'missing key')
    try:
        return cls(**kwargs)  # type: ignore
    except (ContractViolation, ValueError) as e:
        raise ConfigError(ConfigError.Reason.INVALID_VALUE, path,
                          str(e)) from e


def _model_section(data: Any) -> ModelSection:
    if isinstance(data, Fixture):
        return ModelSection(fixture=data)
    if not isinstance(data, dict):
        raise ConfigError(ConfigError.Reason.NOT_A_MAPPING, 'model',
                          f'expected a mapping or a fixture, got {data!r}')
    if 'fixture' not in data:
        return ModelSection(custom=build_section(CustomModelSection, data,
                                                 'model'))
    params = dict(data)
    name = params.pop('fixture')
    if name not in available():
        raise ConfigError(ConfigError.Reason.UNKNOWN_FIXTURE, 'model.fixture',
                          f'unknown fixture {name!r}; available: '
                          f'{sorted(available())}')
    try:
        return ModelSection(fixture=get_fixture(name, params))
    except TypeError as e:
        raise ConfigError(ConfigError.Reason.UNKNOWN_KEY, 'model',
                          str(e)) from e
    except (ContractViolation, ValueError) as e:
        raise ConfigError(ConfigError.Reason.INVALID_VALUE, 'model',
                          str(e)) from e


def _experiment_section(data: Any) -> ExperimentSection:
    if not isinstance(data, dict):
        raise ConfigError(ConfigError.Reason.NOT_A_MAPPING, 'experiment',
                          f'expected a mapping, got {data!r}')
    kind = data.get('kind')
    if kind not in EXPERIMENTS:
        raise ConfigError(ConfigError.Reason.UNKNOWN_EXPERIMENT,
                          'experiment.kind',
                          f'unknown experiment {kind!r}; available: '
                          f'{sorted(EXPERIMENTS)}')
    return build_section(EXPERIMENTS[kind], data, 'experiment')


_SECTIONS = ('model', 'experiment', 'order', 'integrator', 'classifier',
             'seed', 'output_dir')


def from_dict(data: Any) -> ExperimentConfig:
    """Validate a parsed config.

    Raises:
        ConfigError: Naming the offending field.

    """
    if not isinstance(data, dict):
        raise ConfigError(ConfigError.Reason.NOT_A_MAPPING, '',
                          'the config must be a mapping')
    unknown = sorted(set(map(str, data)) - set(_SECTIONS))
    if unknown:
        raise ConfigError(ConfigError.Reason.UNKNOWN_KEY, unknown[0],
                          f'unknown section; expected one of '
                          f'{list(_SECTIONS)}')
    for key in ('model', 'experiment'):
        if key not in data:
            raise ConfigError(ConfigError.Reason.MISSING_KEY, key,
                              'missing section')

    config = ExperimentConfig(
        model=_model_section(data['model']),
        experiment=_experiment_section(data['experiment']),
        order=build_section(OrderSection, data.get('order'), 'order'),
        integrator=build_section(IntegratorConfig, data.get('integrator'),
                                 'integrator'),
        classifier=build_section(ClassifierParams, data.get('classifier'),
                                 'classifier'),
        seed=_cast(data.get('seed', 0), int, 'seed'),
        output_dir=_cast(data.get('output_dir', 'out'), str, 'output_dir'),
    )
    signs = config.order.signs
    if signs is not None and len(signs) != config.model.species:
        raise ConfigError(ConfigError.Reason.INVALID_VALUE, 'order.signs',
                          f'{len(signs)} signs for {config.model.species} '
                          f'species')
    return config


def apply_overrides(data: Dict[str, Any], overrides: List[str]) \
        -> Dict[str, Any]:
    """Apply ``a.b=value`` overrides to a parsed config.

    Values are parsed as YAML scalars, so ``n=1000`` sets an integer and
    ``sampler=noise`` a string. Missing intermediate mappings are created.

    Raises:
        ConfigError: On malformed overrides.

    """
    for override in overrides:
        key, sep, raw = override.partition('=')
        if not sep or not key:
            raise ConfigError(ConfigError.Reason.INVALID_OVERRIDE, override,
                              'expected key=value')
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as e:
            raise ConfigError(ConfigError.Reason.INVALID_OVERRIDE, key,
                              f'cannot parse {raw!r}: {e}') from e
        *parents, leaf = key.split('.')
        node = data
        for i, part in enumerate(parents):
            child = node.setdefault(part, {})
            if isinstance(child, Fixture):
                child = {'fixture': child.name, **child.input_parameters}
                node[part] = child
            if not isinstance(child, dict):
                raise ConfigError(ConfigError.Reason.INVALID_OVERRIDE,
                                  '.'.join(parents[:i + 1]),
                                  'is not a mapping')
            node = child
        node[leaf] = value
        logger.debug(f'Override {key} = {value!r}')
    return data


def load(path: Union[str, Path], overrides: Optional[List[str]] = None) \
        -> ExperimentConfig:
    """Read, override and validate an experiment config file.

    Raises:
        ConfigError: If the file cannot be read, parsed or validated.

    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(ConfigError.Reason.UNREADABLE, '',
                          f'cannot read {path}: {e}') from e
    try:
        data = myaml.load(text)
    except (yaml.YAMLError, TypeError) as e:
        raise ConfigError(ConfigError.Reason.INVALID_SYNTAX, '',
                          f'cannot parse {path}: {e}') from e
    if isinstance(data, dict) and overrides:
        data = apply_overrides(data, overrides)
    config = from_dict(data)
    logger.info(f'Loaded {config.experiment.kind} experiment from {path}.')
    return config
