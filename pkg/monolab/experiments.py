# Copyright (C) 2019 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""Experiment runner.

The runner owns the worker pool. Work is handed to ``executor.map``, which
returns results in submission order, and equilibria found by the workers are
merged into the shared database in that order, so outputs do not depend on
the number of threads. Random data of trial k comes from the stream
``(seed, stream, k)``.
"""
from __future__ import annotations

import dataclasses as dc
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import ExitStack
from pathlib import Path
from typing import (Any, Callable, Dict, List, Optional, Sequence, Tuple,
                    TypeVar)

import numpy as np

import monolab
import monolab.csv as mcsv
from monolab.config import (BasinExperiment, ConfigError, EquilibriaExperiment,
                            ExperimentConfig, HomogeneityExperiment,
                            LineExperiment, PropertiesExperiment,
                            ResolutionExperiment, SCHEMA_VERSION,
                            SweepSection, TrajectoryExperiment)
from monolab.discretize import RDModel
from monolab.equilibria import (EquilibriumDB, EquilibriumRecord, Stability,
                                analyze_all, sweep_equilibria)
from monolab.fixtures import get_fixture
from monolab.limits import (ClassifierParams, Mapper,
                            check_convergence_criterion, check_lsd,
                            check_nonordering, classify_many, inf_trap_check,
                            sup_trap_check)
from monolab.models import Model
from monolab.order import ConeOrder, Segment
from monolab.prevalence import (FourierSampler, NoiseSampler, Sampler,
                                basin_unordered_check, homogeneity_experiment,
                                line_experiment)
from monolab.semiflow import IntegratorConfig, check_monotone, flow

logger = logging.getLogger(__name__)

R = TypeVar('R')

# Independent random streams of the property checks
_MONOTONE_STREAM = 0
_LSD_STREAM = 1
_CRITERION_STREAM = 2


@dc.dataclass(frozen=True)
class RunResult(object):
    """Outcome of a run.

    Attributes:
        summary: The content of ``summary.json``.
        violations: Number of failed property checks.
        files: The files written.

    """

    summary: Dict[str, Any]
    violations: int
    files: List[Path]


@dc.dataclass
class _Context(object):
    config: ExperimentConfig
    model: Model
    order: ConeOrder
    mapper: Mapper
    out_dir: Path
    db: EquilibriumDB = dc.field(default_factory=EquilibriumDB)
    files: List[Path] = dc.field(default_factory=list)

    @property
    def params(self) -> ClassifierParams:
        return self.config.classifier

    @property
    def cfg(self) -> IntegratorConfig:
        return self.config.integrator

    @property
    def seed(self) -> int:
        return self.config.seed

    def box(self, override: Optional[Sequence[Tuple[float, float]]]) \
            -> List[Tuple[float, float]]:
        if override is not None:
            if len(override) != self.model.species:
                raise ConfigError(ConfigError.Reason.INVALID_VALUE,
                                  'experiment.box',
                                  f'{len(override)} intervals for '
                                  f'{self.model.species} species')
            return [tuple(b) for b in override]  # type: ignore
        return self.config.model.box()

    def sampler(self) -> Sampler:
        fixture = self.config.model.fixture
        sampler = fixture.sampler() if fixture is not None else None
        return sampler or FourierSampler()

    def write_csv(self, name: str, rows: List[Dict[str, Any]]) -> None:
        path = self.out_dir / name
        if path.exists():
            path.unlink()
        with mcsv.CSVWriter(path=path) as writer:
            writer.write_rows(rows)
        self.files.append(path)

    def write_json(self, name: str, text: str) -> None:
        path = self.out_dir / name
        path.write_text(text + '\n')
        self.files.append(path)

    def sweep(self, sweep: SweepSection) -> None:
        sweep_equilibria(self.model, scalar_seeds=sweep.scalar_seeds,
                         modes=sweep.modes, amplitude=sweep.amplitude,
                         newton_tol=self.params.newton_tol,
                         max_iter=self.params.max_newton_iter, db=self.db)
        analyze_all(self.model, self.db, order=self.order, cfg=self.cfg,
                    **sweep.analysis())

    def analysis(self, sweep: SweepSection) -> Dict[str, Any]:
        return dict(order=self.order, cfg=self.cfg, **sweep.analysis())


def _expand(values: Sequence[float], model: Model, path: str) -> np.ndarray:
    """Return a state from one value per species or per coordinate."""
    arr = np.asarray(values, dtype=float)
    if arr.size == model.species:
        return np.repeat(arr, model.nodes)
    if arr.size == model.size:
        return arr
    raise ConfigError(ConfigError.Reason.INVALID_VALUE, path,
                      f'expected {model.species} or {model.size} values, '
                      f'got {arr.size}')


def _bounds(model: Model, box: Sequence[Tuple[float, float]]) \
        -> Tuple[np.ndarray, np.ndarray]:
    low, high = np.array(box, dtype=float).T
    return np.repeat(low, model.nodes), np.repeat(high, model.nodes)


def _random_state(ctx: _Context, box: Sequence[Tuple[float, float]],
                  rng: np.random.Generator) -> np.ndarray:
    if isinstance(ctx.model, RDModel):
        return ctx.sampler().sample(ctx.model.grid, ctx.model.species, rng)
    return rng.uniform(*_bounds(ctx.model, box))


def _random_increment(ctx: _Context, box: Sequence[Tuple[float, float]],
                      step: float, rng: np.random.Generator) -> np.ndarray:
    """Return a random ``w > 0`` of size ``step`` relative to the box."""
    low, high = _bounds(ctx.model, box)
    if isinstance(ctx.model, RDModel):
        # Offsets exceed the summed amplitudes, so every entry stays positive
        shape = FourierSampler(offset_range=(0.5, 1.0),
                               amplitude=0.1 / ctx.model.grid.dimension)
        scale = shape.sample(ctx.model.grid, ctx.model.species, rng)
    else:
        scale = rng.uniform(0.01, 1.0, size=ctx.model.size)
    return ctx.order.sign_vector(ctx.model.size) * step * (high - low) * scale


def _ordered_pair(ctx: _Context, box: Sequence[Tuple[float, float]],
                  step: float, stream: int, k: int) \
        -> Tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([ctx.seed, stream, k])
    x = _random_state(ctx, box, rng)
    return x, x + _random_increment(ctx, box, step, rng)


@dc.dataclass(frozen=True)
class _LocalTask(object):
    """Run ``check`` against a private snapshot of the database."""

    check: Callable[[EquilibriumDB, Any], Any]
    db: EquilibriumDB

    def __call__(self, item: Any) -> Tuple[Any, List[EquilibriumRecord]]:
        local = self.db.snapshot()
        result = self.check(local, item)
        return result, local.records[len(self.db):]


def _map_with_db(ctx: _Context, check: Callable[[EquilibriumDB, Any], R],
                 items: Sequence[Any]) -> List[R]:
    task = _LocalTask(check=check, db=ctx.db.snapshot())
    outcomes = list(ctx.mapper(task, items))
    for _, records in outcomes:
        for record in records:
            ctx.db.register(record)
    return [result for result, _ in outcomes]


def _equilibria_summary(db: EquilibriumDB) -> List[Dict[str, Any]]:
    return [{
        'id': i,
        'rho': r.rho,
        'stability': r.stability.value if r.stability is not None else None,
        'irreducible': r.irreducible,
        'residual': r.residual,
        'spatial_variation': r.variation().tolist(),
    } for i, r in enumerate(db)]


def _nonconstant_stable(db: EquilibriumDB, tol: float = 1e-6) -> List[int]:
    return [i for i, r in enumerate(db)
            if r.layout[1] > 1 and np.max(r.variation()) > tol
            and r.stability is not Stability.LINEARLY_UNSTABLE]


def _run_equilibria(ctx: _Context, section: EquilibriaExperiment) \
        -> Tuple[Dict[str, Any], int]:
    ctx.sweep(section.sweep)
    report = {
        'count': len(ctx.db),
        'equilibria': _equilibria_summary(ctx.db),
        'nonconstant_not_unstable': _nonconstant_stable(ctx.db),
    }
    return report, 0


def _run_line(ctx: _Context, section: LineExperiment) \
        -> Tuple[Dict[str, Any], int]:
    ctx.sweep(section.sweep)
    if section.base is None and section.direction is None:
        fixture = ctx.config.model.fixture
        if fixture is not None:
            segment = fixture.segment(ctx.model, ctx.order)
        else:
            signs = ctx.order.sign_vector(ctx.model.size)
            segment = Segment(base=-3.0 * signs, direction=6.0 * signs,
                              order=ctx.order)
    elif section.base is None or section.direction is None:
        raise ConfigError(ConfigError.Reason.MISSING_KEY,
                          'experiment.base' if section.base is None
                          else 'experiment.direction',
                          'base and direction go together')
    else:
        segment = Segment(
            base=_expand(section.base, ctx.model, 'experiment.base'),
            direction=_expand(section.direction, ctx.model,
                              'experiment.direction'),
            order=ctx.order
        )

    analysis = ctx.analysis(section.sweep)
    report = line_experiment(ctx.model, segment, section.n, ctx.db,
                             params=ctx.params, cfg=ctx.cfg,
                             mapper=ctx.mapper, analysis=analysis)
    ctx.write_csv('points.csv', report.rows())

    summary = report.summary()
    summary['refinement'] = []
    for n in section.refine:
        refined = line_experiment(ctx.model, segment, n, ctx.db,
                                  params=ctx.params, cfg=ctx.cfg,
                                  mapper=ctx.mapper, analysis=analysis)
        summary['refinement'].append({
            'n': n,
            'unstable_hits': refined.unstable_hits,
            'unstable_mass': refined.unstable_mass,
            'limit_chain': refined.limit_chain,
            'chain_ordered': refined.chain_ordered,
        })
    summary['equilibria'] = _equilibria_summary(ctx.db)
    return summary, 0


def _unstable(db: EquilibriumDB) -> List[EquilibriumRecord]:
    return [r for r in db if r.stability is Stability.LINEARLY_UNSTABLE]


def _basin_checks(ctx: _Context, trials: int, step: float,
                  box: Sequence[Tuple[float, float]]) -> List[Dict[str, Any]]:
    rows = []
    for record in _unstable(ctx.db):
        report = basin_unordered_check(ctx.model, record, trials, box,
                                       ctx.seed, ctx.db, params=ctx.params,
                                       cfg=ctx.cfg, order=ctx.order,
                                       step=step, mapper=ctx.mapper)
        rows.append(report.summary())
    return rows


def _run_basin(ctx: _Context, section: BasinExperiment) \
        -> Tuple[Dict[str, Any], int]:
    ctx.sweep(section.sweep)
    rows = _basin_checks(ctx, section.trials, section.step,
                         ctx.box(section.box))
    ctx.write_csv('trials.csv', rows)
    violations = sum(row['ordered_pairs_found'] for row in rows)
    return {'checks': rows, 'ordered_pairs_found': violations}, violations


def _sampler(ctx: _Context, section: HomogeneityExperiment) -> Sampler:
    default = ctx.sampler()
    fields = {
        'offset_range': section.offset_range,
        'amplitude': section.amplitude,
        'symmetric_offsets': section.symmetric_offsets,
    }
    base = {k: getattr(default, k) for k in fields}
    base.update({k: v for k, v in fields.items() if v is not None})
    if section.sampler == 'fourier':
        return FourierSampler(modes=section.modes, **base)
    if section.sampler == 'noise':
        return NoiseSampler(**base)
    raise ConfigError(ConfigError.Reason.INVALID_VALUE, 'experiment.sampler',
                      f'expected "fourier" or "noise", got '
                      f'{section.sampler!r}')


def _run_homogeneity(ctx: _Context, section: HomogeneityExperiment) \
        -> Tuple[Dict[str, Any], int]:
    if not isinstance(ctx.model, RDModel):
        raise ConfigError(ConfigError.Reason.INVALID_VALUE, 'model',
                          'the homogeneity experiment needs a '
                          'reaction-diffusion model')
    report = homogeneity_experiment(
        ctx.model, _sampler(ctx, section), section.m, ctx.seed, ctx.db,
        ctx.box(section.box), params=ctx.params, cfg=ctx.cfg,
        eps_unif=section.eps_unif,
        cooperativity_samples=section.cooperativity_samples,
        mapper=ctx.mapper
    )
    ctx.write_csv('trials.csv', report.trials)
    return report.summary(), 0


def _run_properties(ctx: _Context, section: PropertiesExperiment) \
        -> Tuple[Dict[str, Any], int]:
    ctx.sweep(section.sweep)
    box = ctx.box(section.box)
    rows: List[Dict[str, Any]] = []

    def add(check: str, index: int, ok: bool, margin: Any = '') -> None:
        rows.append({'check': check, 'index': index, 'ok': ok,
                     'margin': margin})

    pairs = [_ordered_pair(ctx, box, section.step, _MONOTONE_STREAM, k)
             for k in range(section.pairs)]

    def monotone(pair: Tuple[np.ndarray, np.ndarray]) -> Tuple[bool, float]:
        report = check_monotone(ctx.model, *pair, ctx.order,
                                section.t_samples, ctx.cfg,
                                ctx.params.tol_order)
        margin = min((m for _, m in report.margins), default=float('nan'))
        return report.ok, margin

    for k, (ok, margin) in enumerate(ctx.mapper(monotone, pairs)):
        add('monotone', k, ok, margin)

    lsd_pairs = [_ordered_pair(ctx, box, section.step, _LSD_STREAM, k)
                 for k in range(section.lsd_pairs)]
    lsd_reports = _map_with_db(
        ctx, lambda db, pair: check_lsd(ctx.model, *pair, db, ctx.params,
                                        ctx.cfg, ctx.order),
        lsd_pairs
    )
    for k, report in enumerate(lsd_reports):
        add('lsd', k, report.verdict.ok, report.worst_margin)

    points = [_random_state(ctx, box, np.random.default_rng(
        [ctx.seed, _CRITERION_STREAM, k]))
        for k in range(section.criterion_points)]
    criteria = _map_with_db(
        ctx, lambda db, x: check_convergence_criterion(
            ctx.model, x, section.criterion_horizon, db, ctx.params,
            ctx.cfg, ctx.order),
        points
    )
    applicable = 0
    for k, report in enumerate(criteria):
        if report.applicable:
            applicable += 1
            add('criterion', k, bool(report.satisfied))

    classes, omegas = classify_many(ctx.model, points, ctx.db,
                                    params=ctx.params, cfg=ctx.cfg,
                                    mapper=ctx.mapper)
    valid = [k for k, omega in enumerate(omegas) if omega.valid]
    for k in valid:
        add('nonordering', k, check_nonordering(omegas[k], ctx.order,
                                                ctx.params.tol_order,
                                                ctx.params.eps_conv))
    for name, trap in (('inf_trap', inf_trap_check),
                       ('sup_trap', sup_trap_check)):
        traps = _map_with_db(
            ctx, lambda db, k, trap=trap: trap(ctx.model, omegas[k],
                                               ctx.order, db, ctx.params,
                                               ctx.cfg),
            valid
        )
        for k, report in zip(valid, traps):
            add(name, k, report.ok)

    basin = _basin_checks(ctx, section.basin_trials, section.step, box)
    for k, row in enumerate(basin):
        add('basin', k, row['ordered_pairs_found'] == 0,
            row['ordered_pairs_found'])

    ctx.write_csv('trials.csv', rows)
    checks: Dict[str, Dict[str, int]] = {}
    for row in rows:
        entry = checks.setdefault(row['check'],
                                  {'tested': 0, 'violations': 0})
        entry['tested'] += 1
        entry['violations'] += int(not row['ok'])
    violations = sum(entry['violations'] for entry in checks.values())
    summary = {
        'checks': checks,
        'criterion_applicable': applicable,
        'basin': basin,
        'blowups': sum(c.blowup for c in classes),
        'step_limits': sum(c.step_limit for c in classes),
        'equilibria': _equilibria_summary(ctx.db),
        'violations': violations,
    }
    return summary, violations


def _run_trajectory(ctx: _Context, section: TrajectoryExperiment) \
        -> Tuple[Dict[str, Any], int]:
    x0 = _expand(section.x0, ctx.model, 'experiment.x0')
    trajectory = flow(ctx.model, x0, section.t_end, ctx.cfg)
    path = ctx.out_dir / 'trajectory.csv'
    if path.exists():
        path.unlink()
    trajectory.to_csv(path)
    ctx.files.append(path)
    return {
        'flag': trajectory.flag.value,
        'final_time': trajectory.final_time,
        'steps': len(trajectory) - 1,
        'final_sup_norm': float(np.max(np.abs(trajectory.final))),
    }, 0


def _run_resolution(ctx: _Context, section: ResolutionExperiment) \
        -> Tuple[Dict[str, Any], int]:
    fixture = ctx.config.model.fixture
    if fixture is None or 'nodes' not in getattr(fixture, '__dict__', {}):
        raise ConfigError(ConfigError.Reason.INVALID_VALUE, 'model',
                          'the resolution experiment needs a '
                          'reaction-diffusion fixture')
    rows = []
    levels = []
    for nodes in section.nodes:
        refined = get_fixture(fixture.name,
                              {**fixture.input_parameters, 'nodes': nodes})
        model = refined.build()
        level = dc.replace(ctx, model=model, db=EquilibriumDB(), files=[])
        level.sweep(section.sweep)
        for entry in _equilibria_summary(level.db):
            rows.append({'nodes': nodes, 'id': entry['id'],
                         'rho': entry['rho'],
                         'stability': entry['stability'],
                         'max_variation': max(entry['spatial_variation']),
                         'residual': entry['residual']})
        levels.append({'nodes': nodes, 'count': len(level.db),
                       'equilibria': _equilibria_summary(level.db)})
    ctx.write_csv('resolution.csv', rows)
    return {'levels': levels}, 0


_RUNNERS: Dict[type, Callable[[_Context, Any], Tuple[Dict[str, Any], int]]] = {
    EquilibriaExperiment: _run_equilibria,
    LineExperiment: _run_line,
    BasinExperiment: _run_basin,
    HomogeneityExperiment: _run_homogeneity,
    PropertiesExperiment: _run_properties,
    TrajectoryExperiment: _run_trajectory,
    ResolutionExperiment: _run_resolution,
}


def run_experiment(config: ExperimentConfig, threads: int = 1) -> RunResult:
    """Run the experiment of ``config`` and write its reports.

    Args:
        config: The validated config.
        threads: Number of worker threads; 1 runs everything inline.

    Returns:
        The summary, the number of violations and the files written.

    """
    if threads < 1:
        raise ConfigError(ConfigError.Reason.INVALID_VALUE, 'threads',
                          f'expected a positive integer, got {threads}')
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = config.model.build()
    order = config.order.build(model.species)
    kind = config.experiment.kind
    logger.info(f'Running {kind} experiment on {model.describe()} with '
                f'{threads} threads.')

    start = time.monotonic()
    with ExitStack() as stack:
        mapper: Mapper = map
        if threads > 1:
            executor = stack.enter_context(
                ThreadPoolExecutor(max_workers=threads)
            )
            mapper = executor.map
        ctx = _Context(config=config, model=model, order=order,
                       mapper=mapper, out_dir=out_dir)
        report, violations = _RUNNERS[type(config.experiment)](
            ctx, config.experiment
        )
    logger.info(f'{kind} experiment done in {time.monotonic() - start:.1f} '
                f's with {violations} violations.')

    if len(ctx.db):
        ctx.write_json('equilibria.json', ctx.db.to_json())
    summary = {
        'schema_version': SCHEMA_VERSION,
        'monolab_version': monolab.__version__,
        'kind': kind,
        'model': model.describe(),
        'config': config.to_dict(),
        'report': report,
        'violations': violations,
    }
    ctx.write_json('summary.json', json.dumps(_finite(summary), indent=2,
                                              sort_keys=True))
    return RunResult(summary=summary, violations=violations, files=ctx.files)


def _finite(value: Any) -> Any:
    """Replace non-finite floats by strings, which JSON cannot hold."""
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    if isinstance(value, (float, np.floating)):
        return float(value) if np.isfinite(value) else str(float(value))
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value
