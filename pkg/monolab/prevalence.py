# Copyright (C) 2019 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""Sampling experiments on segments, basins and random initial data."""
from __future__ import annotations

import dataclasses as dc
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from typing_extensions import Protocol

from monolab.discretize import (CooperativityReport, Grid, RDModel,
                                check_cooperative_irreducible)
from monolab.equilibria import (EquilibriumDB, EquilibriumRecord, Stability,
                                analyze_all)
from monolab.limits import (ClassifierParams, ClassTag, Mapper,
                            TrajectoryClass, classify_many)
from monolab.models import Model
from monolab.order import (ConeOrder, ContractViolation, Segment,
                           segment_points, spatial_variation)
from monolab.semiflow import IntegratorConfig

logger = logging.getLogger(__name__)


def segment_measure(classes: Sequence[TrajectoryClass],
                    tag: Union[ClassTag, str]) -> float:
    """Return the quadrature mass of the points classified as ``tag``.

    Args:
        classes: The classes of the N+1 points of one segment.
        tag: A ClassTag, or a label such as ``convergent:2``.

    Returns:
        (number of matching points) / (N + 1).

    """
    if not classes:
        return 0.0
    if isinstance(tag, ClassTag):
        count = sum(c.tag is tag for c in classes)
    else:
        count = sum(c.label == tag or c.tag.value == tag for c in classes)
    return count / len(classes)


def label_runs(labels: Sequence[str],
               t_params: Optional[Sequence[float]] = None) -> pd.DataFrame:
    """Return the contiguous runs of equal labels along a segment.

    Args:
        labels: One label per segment point, in increasing t.
        t_params: The segment parameter of each point.

    Returns:
        One row per run with its label, start index, end index (exclusive)
        and length; plus the first and last t of the run when ``t_params`` is
        given.

    """
    series = pd.Series(list(labels), dtype=object)
    columns = ['label', 'start_index', 'end_index', 'index_length']
    if series.empty:
        return pd.DataFrame(columns=columns)
    run_ids = (series != series.shift()).cumsum()
    grouped = series.groupby(run_ids)
    starts = grouped.apply(lambda s: s.index[0]).values
    lengths = grouped.size().values
    df = pd.DataFrame({
        'label': grouped.first().values,
        'start_index': starts,
        'end_index': starts + lengths,
        'index_length': lengths,
    }, columns=columns)
    if t_params is not None:
        t_arr = np.asarray(t_params, dtype=float)
        df['t_start'] = t_arr[df['start_index'].values]
        # t_end is inclusive
        df['t_end'] = t_arr[df['end_index'].values - 1]
    return df


@dc.dataclass(frozen=True, eq=False)
class LineReport(object):
    """Classification of the N+1 points of a segment.

    Attributes:
        segment: The segment.
        n: The number of subintervals N.
        t_params: ``k / N`` for each point.
        classes: The class of each point.
        masses: Quadrature mass of each class tag.
        limit_chain: Distinct limit equilibria in order of first appearance.
        chain_ordered: Whether consecutive chain elements are ordered.
        unstable_hits: Points converging to linearly unstable equilibria.
        runs: Contiguous runs of labels, see :func:`label_runs`.

    """

    segment: Segment
    n: int
    t_params: np.ndarray
    classes: List[TrajectoryClass]
    masses: Dict[str, float]
    limit_chain: List[int]
    chain_ordered: bool
    unstable_hits: int
    runs: pd.DataFrame

    @property
    def unstable_mass(self) -> float:
        """Return the mass of points converging to unstable equilibria."""
        return self.unstable_hits / len(self.classes)

    def rows(self) -> List[Dict[str, Any]]:
        """Return one CSV row per segment point."""
        return [c.to_row(index=k, t_param=float(t))
                for k, (c, t) in enumerate(zip(self.classes, self.t_params))]

    def summary(self) -> Dict[str, Any]:
        """Return a JSON-friendly summary."""
        return {
            'n': self.n,
            'masses': self.masses,
            'limit_chain': self.limit_chain,
            'chain_ordered': self.chain_ordered,
            'unstable_hits': self.unstable_hits,
            'unstable_mass': self.unstable_mass,
            'runs': self.runs.to_dict(orient='records'),
        }


def _unstable_ids(db: EquilibriumDB) -> List[int]:
    return [i for i, r in enumerate(db)
            if r.stability is Stability.LINEARLY_UNSTABLE]


def line_experiment(model: Model, segment: Segment, n: int,
                    db: EquilibriumDB,
                    params: Optional[ClassifierParams] = None,
                    cfg: Optional[IntegratorConfig] = None,
                    mapper: Mapper = map,
                    analysis: Optional[Dict[str, Any]] = None) -> LineReport:
    """Classify the N+1 quadrature points of a segment.

    Args:
        model: The model.
        segment: The segment, with a positive direction.
        n: The number of subintervals N, at least 2.
        db: The equilibrium database, updated in place.
        params: The classifier thresholds.
        cfg: The integrator settings.
        mapper: An order-preserving map for the per-point work.
        analysis: Keyword arguments of the stability analysis of the limits.

    Returns:
        The report.

    """
    if n < 2:
        raise ContractViolation(f'N must be >= 2, got {n}.')
    points = segment_points(segment, n)
    classes, _ = classify_many(model, [p.data for p in points], db,
                               params=params, cfg=cfg, mapper=mapper)

    chain: List[int] = []
    for c in classes:
        if (c.tag is ClassTag.CONVERGENT and c.equilibrium_id is not None
                and c.equilibrium_id not in chain):
            chain.append(c.equilibrium_id)
    chain_ordered = all(segment.order.leq(db[a].state, db[b].state)
                        for a, b in zip(chain, chain[1:]))

    analysis = dict(analysis or {})
    analysis.setdefault('order', segment.order)
    analyze_all(model, db, ids=chain, **analysis)
    unstable = set(_unstable_ids(db))
    unstable_hits = sum(c.tag is ClassTag.CONVERGENT
                        and c.equilibrium_id in unstable for c in classes)

    t_params = np.arange(n + 1) / n
    report = LineReport(
        segment=segment, n=n, t_params=t_params, classes=classes,
        masses={tag.value: segment_measure(classes, tag) for tag in ClassTag},
        limit_chain=chain, chain_ordered=chain_ordered,
        unstable_hits=unstable_hits,
        runs=label_runs([c.label for c in classes], t_params)
    )
    logger.info(f'Line experiment: chain {chain}, ordered={chain_ordered}, '
                f'{unstable_hits} unstable hits out of {n + 1} points.')
    return report


def _coordinate_bounds(box: Sequence[Tuple[float, float]],
                       model: Model) -> Tuple[np.ndarray, np.ndarray]:
    if len(box) != model.species:
        raise ContractViolation(f'Box has {len(box)} intervals for '
                                f'{model.species} species.')
    low, high = np.array(box, dtype=float).T
    return np.repeat(low, model.nodes), np.repeat(high, model.nodes)


@dc.dataclass(frozen=True)
class BasinReport(object):
    """Outcome of the unordered basin check of an unstable equilibrium.

    Attributes:
        equilibrium_id: The unstable equilibrium.
        pairs_tested: Number of sampled pairs ``x < x + w``.
        ordered_pairs_found: Pairs with both points converging to it.
        undetermined: Points that could not be classified.

    """

    equilibrium_id: int
    pairs_tested: int
    ordered_pairs_found: int
    undetermined: int = 0

    def summary(self) -> Dict[str, Any]:
        """Return a JSON-friendly summary."""
        return dc.asdict(self)


def basin_unordered_check(model: Model, e_unstable: EquilibriumRecord,
                          trials: int, box: Sequence[Tuple[float, float]],
                          seed: int, db: EquilibriumDB,
                          params: Optional[ClassifierParams] = None,
                          cfg: Optional[IntegratorConfig] = None,
                          order: Optional[ConeOrder] = None,
                          step: float = 0.1,
                          mapper: Mapper = map) -> BasinReport:
    """Look for ordered pairs in the basin of an unstable equilibrium.

    Trial k draws ``x`` uniformly in the box and a positive ``w`` with
    entries in ``(0.01, 1] * step * width`` from the stream ``(seed, k)``.

    Raises:
        ContractViolation: If the equilibrium is not linearly unstable.

    """
    if e_unstable.stability is not Stability.LINEARLY_UNSTABLE:
        raise ContractViolation('basin_unordered_check needs a linearly '
                                'unstable equilibrium.')
    order = order or ConeOrder.standard(model.species)
    target = db.register(e_unstable)
    low, high = _coordinate_bounds(box, model)
    signs = order.sign_vector(model.size)

    points = []
    for k in range(trials):
        rng = np.random.default_rng([seed, k])
        x = rng.uniform(low, high)
        w = signs * step * (high - low) * rng.uniform(0.01, 1.0,
                                                      size=model.size)
        points.extend([x, x + w])
    classes, _ = classify_many(model, points, db, params=params, cfg=cfg,
                               mapper=mapper)

    def hits(c: TrajectoryClass) -> bool:
        return (c.tag is ClassTag.CONVERGENT
                and c.equilibrium_id == target)

    found = sum(hits(a) and hits(b) for a, b in zip(classes[::2],
                                                   classes[1::2]))
    undetermined = sum(c.tag is ClassTag.UNDETERMINED for c in classes)
    if found:
        logger.warning(f'{found} ordered pairs found in the basin of '
                       f'equilibrium {target}.')
    return BasinReport(equilibrium_id=target, pairs_tested=trials,
                       ordered_pairs_found=found, undetermined=undetermined)


class Sampler(Protocol):
    """Sampler of initial data on a grid."""

    def sample(self, grid: Grid, species: int,
               rng: np.random.Generator) -> np.ndarray:
        """Return a flat, species-major initial datum."""
        ...


def _offsets(offset_range: Tuple[float, float], symmetric: bool,
             species: int, rng: np.random.Generator) -> np.ndarray:
    offsets = rng.uniform(*offset_range, size=species)
    if symmetric:
        offsets *= rng.choice([-1.0, 1.0], size=species)
    return offsets


@dc.dataclass(frozen=True)
class FourierSampler(object):
    """Low-frequency cosine initial data, compatible with Neumann conditions.

    ``u_i(x) = c_i + sum_{k <= modes} b_ik cos(k pi x / L)`` with
    ``c_i`` uniform in ``offset_range`` (with a random sign when
    ``symmetric_offsets``) and ``b_ik`` uniform in
    ``[-amplitude, amplitude]``. On 2-D grids each axis contributes its own
    cosine sum.
    """

    offset_range: Tuple[float, float] = (-1.0, 1.0)
    amplitude: float = 0.2
    modes: int = 4
    symmetric_offsets: bool = False

    def sample(self, grid: Grid, species: int,
               rng: np.random.Generator) -> np.ndarray:
        """Return a flat, species-major initial datum."""
        offsets = _offsets(tuple(self.offset_range), self.symmetric_offsets,
                           species, rng)
        out = np.repeat(offsets[:, None], grid.size, axis=1)
        for axis, (x, length) in enumerate(zip(grid.coordinates(),
                                                grid.lengths)):
            coefficients = rng.uniform(-self.amplitude, self.amplitude,
                                       size=(species, self.modes))
            k = np.arange(1, self.modes + 1)
            basis = np.cos(np.outer(k, x) * np.pi / length)
            out += coefficients @ basis
        return out.ravel()


@dc.dataclass(frozen=True)
class NoiseSampler(object):
    """Constant offsets plus independent uniform noise at each node."""

    offset_range: Tuple[float, float] = (-1.0, 1.0)
    amplitude: float = 0.2
    symmetric_offsets: bool = False

    def sample(self, grid: Grid, species: int,
               rng: np.random.Generator) -> np.ndarray:
        """Return a flat, species-major initial datum."""
        offsets = _offsets(tuple(self.offset_range), self.symmetric_offsets,
                           species, rng)
        noise = rng.uniform(-self.amplitude, self.amplitude,
                            size=(species, grid.size))
        return (offsets[:, None] + noise).ravel()


@dc.dataclass(frozen=True, eq=False)
class HomogeneityReport(object):
    """Outcome of the homogeneous convergence experiment.

    Attributes:
        trials: One row per trial: class, limit, final spatial variation of
            each species, whether the trial is uniform.
        fraction_uniform: Fraction of trials converging to a spatially
            uniform equilibrium.
        blowups: Trials whose orbit blew up.
        step_limits: Trials whose integration hit the step limit.
        nonuniform_limits: Trials converging to a nonuniform equilibrium.
        cooperativity: The audit of the reaction term.

    """

    trials: List[Dict[str, Any]]
    fraction_uniform: float
    blowups: int
    step_limits: int
    nonuniform_limits: int
    cooperativity: CooperativityReport

    def summary(self) -> Dict[str, Any]:
        """Return a JSON-friendly summary."""
        return {
            'm': len(self.trials),
            'fraction_uniform': self.fraction_uniform,
            'blowups': self.blowups,
            'step_limits': self.step_limits,
            'nonuniform_limits': self.nonuniform_limits,
            'undetermined': sum(row['tag'] == ClassTag.UNDETERMINED.value
                                for row in self.trials),
            'cooperative': self.cooperativity.cooperative,
            'irreducible': self.cooperativity.irreducible,
            'samples_checked': self.cooperativity.samples_checked,
        }


def homogeneity_experiment(model: RDModel, sampler: Sampler, m: int,
                           seed: int, db: EquilibriumDB,
                           box: Sequence[Tuple[float, float]],
                           params: Optional[ClassifierParams] = None,
                           cfg: Optional[IntegratorConfig] = None,
                           eps_unif: float = 1e-4,
                           cooperativity_samples: int = 1000,
                           initial_data: Optional[Sequence[np.ndarray]] = None,
                           mapper: Mapper = map) -> HomogeneityReport:
    """Classify random initial data of a reaction-diffusion model.

    A trial is uniform when it is Convergent to an equilibrium whose spatial
    sup-variation is at most ``eps_unif`` for every species.

    Args:
        model: The reaction-diffusion model.
        sampler: The initial data sampler; trial k uses the stream
            ``(seed, k)``.
        m: The number of trials M.
        seed: The seed.
        db: The equilibrium database, updated in place.
        box: Per-species interval on which the reaction is audited.
        params: The classifier thresholds.
        cfg: The integrator settings.
        eps_unif: Largest spatial variation of a uniform limit.
        cooperativity_samples: Samples of the cooperativity audit.
        initial_data: Explicit initial data, replacing the sampler.
        mapper: An order-preserving map for the per-trial work.

    Raises:
        ContractViolation: If the reaction is not cooperative and irreducible
            on ``box``.

    """
    audit = check_cooperative_irreducible(model.reaction, box,
                                          samples=cooperativity_samples,
                                          seed=seed)
    if not (audit.cooperative and audit.irreducible):
        raise ContractViolation(f'Reaction fails the cooperativity audit: '
                                f'{audit.witness.message}.')
    if initial_data is None:
        initial_data = [
            sampler.sample(model.grid, model.species,
                           np.random.default_rng([seed, k]))
            for k in range(m)
        ]
    classes, omegas = classify_many(model, initial_data, db, params=params,
                                    cfg=cfg, mapper=mapper)

    trials = []
    for k, (c, omega) in enumerate(zip(classes, omegas)):
        variation = (spatial_variation(omega.mean, model.species)
                     if omega.valid else np.full(model.species, np.nan))
        uniform = bool(c.tag is ClassTag.CONVERGENT
                       and np.all(db[c.equilibrium_id].variation()
                                  <= eps_unif))
        row: Dict[str, Any] = {
            'trial': k,
            'tag': c.tag.value,
            'equilibrium_id': ('' if c.equilibrium_id is None
                               or c.tag is not ClassTag.CONVERGENT
                               else c.equilibrium_id),
            'uniform': uniform,
            'blowup': c.blowup,
            'step_limit': c.step_limit,
        }
        row.update({f'variation_u{i + 1}': float(v)
                    for i, v in enumerate(variation)})
        trials.append(row)

    count = len(trials)
    fraction = sum(row['uniform'] for row in trials) / count if count else 0.0
    nonuniform = sum(row['tag'] == ClassTag.CONVERGENT.value
                     and not row['uniform'] for row in trials)
    report = HomogeneityReport(
        trials=trials, fraction_uniform=fraction,
        blowups=sum(row['blowup'] for row in trials),
        step_limits=sum(row['step_limit'] for row in trials),
        nonuniform_limits=nonuniform, cooperativity=audit
    )
    logger.info(f'Homogeneity experiment: {fraction:.3f} uniform, '
                f'{nonuniform} nonuniform limits, {report.blowups} blowups, '
                f'{report.step_limits} step limit runs.')
    return report
