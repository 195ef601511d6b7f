# Copyright (C) 2019 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""Omega limit set estimates, trajectory classes and order property checks.

A trajectory is classified from the tail of its orbit on
``[t_burn, t_burn + t_window]``:

1. a point-like tail near a known equilibrium is Convergent to it;
2. a point-like tail elsewhere seeds Newton, and a converged equilibrium is
   registered and cited;
3. a spread tail lying within ``eps_eq`` of known equilibria is
   Quasiconvergent;
4. a spread, bounded tail whose vector field stays above ``eps_flow`` is
   NonQuasiconvergent;
5. anything else is Undetermined, after one retry with ``t_burn`` doubled.
"""
from __future__ import annotations

import dataclasses as dc
import enum
import logging
from typing import (Any, Callable, Dict, Iterable, List, Optional, Sequence,
                    Tuple, Union)

import numpy as np

from monolab.equilibria import (EquilibriumDB, EquilibriumRecord,
                                NewtonFailure, find_equilibrium)
from monolab.models import Model
from monolab.order import (ConeOrder, ContractViolation, Layout, StateVec,
                           pointwise_inf, pointwise_sup)
from monolab.semiflow import IntegratorConfig, TerminalFlag, flow, flow_at

logger = logging.getLogger(__name__)

Mapper = Callable[[Callable[..., Any], Iterable[Any]], Iterable[Any]]


@dc.dataclass(frozen=True)
class ClassifierParams(object):
    """Thresholds of the trajectory classifier.

    Attributes:
        t_burn: Time discarded before sampling the tail.
        t_window: Length of the sampled tail.
        sample_dt: Sampling interval of the tail.
        eps_conv: Largest tail diameter of a point-like omega.
        eps_eq: Distance to the equilibria of a quasiconvergent tail.
        eps_flow: Smallest vector field norm of a nonquasiconvergent tail.
        delta: Distance of a convergent tail to its equilibrium.
        tol_order: Margin of the order comparisons.
        retries: Number of retries with ``t_burn`` doubled.
        newton_tol: Residual threshold of the equilibrium search.
        max_newton_iter: Iteration limit of the equilibrium search.

    """

    t_burn: float = 50.0
    t_window: float = 10.0
    sample_dt: float = 0.1
    eps_conv: float = 1e-6
    eps_eq: float = 1e-4
    eps_flow: float = 1e-3
    delta: float = 1e-4
    tol_order: float = 1e-8
    retries: int = 1
    newton_tol: float = 1e-10
    max_newton_iter: int = 50

    def __post_init__(self) -> None:
        """Validate the thresholds."""
        if not (self.t_burn > 0 and self.t_window > 0 and self.sample_dt > 0):
            raise ContractViolation('t_burn, t_window and sample_dt must be '
                                    'positive.')
        if self.retries < 0:
            raise ContractViolation(f'retries must be >= 0, got '
                                    f'{self.retries}.')


@enum.unique
class OmegaKind(str, enum.Enum):
    """Shape of an omega limit set estimate."""

    POINT = 'point'
    NON_POINT = 'non_point'


@dc.dataclass(frozen=True, eq=False)
class OmegaEstimate(object):
    """Tail of an orbit, as a surrogate of its omega limit set.

    Attributes:
        tail_times: Sample times.
        tail_states: One row per sample.
        layout: The layout of each state.
        diameter: Sup-norm diameter of the tail.
        mean: Mean of the tail states.
        kind: POINT iff ``diameter <= eps_conv``.
        valid: False when the run blew up or hit the step limit.
        horizon: The time at which sampling ended.
        flag: How the integration behind the estimate ended.

    """

    tail_times: np.ndarray
    tail_states: np.ndarray
    layout: Layout
    diameter: float
    mean: np.ndarray
    kind: OmegaKind
    valid: bool = True
    horizon: float = 0.0
    flag: TerminalFlag = TerminalFlag.REACHED_HORIZON

    @classmethod
    def from_states(cls, states: Sequence[Union[StateVec, Sequence[float],
                                                np.ndarray]],
                    species: int = 1, eps_conv: float = 1e-6,
                    times: Optional[Sequence[float]] = None,
                    valid: bool = True, horizon: float = 0.0) \
            -> OmegaEstimate:
        """Build an estimate from given tail states."""
        vecs = [StateVec.of(s, species=species) for s in states]
        if not vecs:
            raise ContractViolation('An omega estimate needs states.')
        stacked = np.stack([v.data for v in vecs])
        diameter = float(np.max(stacked.max(axis=0) - stacked.min(axis=0)))
        kind = OmegaKind.POINT if diameter <= eps_conv else OmegaKind.NON_POINT
        tail_times = (np.asarray(times, dtype=float) if times is not None
                      else np.arange(len(vecs), dtype=float))
        return cls(tail_times=tail_times, tail_states=stacked,
                   layout=vecs[0].layout, diameter=diameter,
                   mean=stacked.mean(axis=0), kind=kind, valid=valid,
                   horizon=horizon)

    @classmethod
    def invalid(cls, layout: Layout, horizon: float,
                flag: TerminalFlag = TerminalFlag.BLOWUP) -> OmegaEstimate:
        """Return the estimate of a run that blew up or hit the step limit."""
        size = layout[0] * layout[1]
        return cls(tail_times=np.empty(0), tail_states=np.empty((0, size)),
                   layout=layout, diameter=float('inf'),
                   mean=np.full(size, np.nan), kind=OmegaKind.NON_POINT,
                   valid=False, horizon=horizon, flag=flag)


def estimate_omega(model: Model, x0: Union[StateVec, np.ndarray],
                   t_burn: float = 50.0, t_window: float = 10.0,
                   sample_dt: float = 0.1,
                   cfg: Optional[IntegratorConfig] = None,
                   eps_conv: float = 1e-6) -> OmegaEstimate:
    """Sample the orbit of ``x0`` on ``[t_burn, t_burn + t_window]``.

    Samples are the recorded states nearest to each multiple of
    ``sample_dt``; the step size is capped at ``sample_dt`` on the window.
    """
    if not (t_burn > 0 and t_window > 0 and sample_dt > 0):
        raise ContractViolation('t_burn, t_window and sample_dt must be '
                                'positive.')
    cfg = cfg or IntegratorConfig()
    horizon = t_burn + t_window
    burn = flow(model, x0, t_burn, cfg)
    if burn.flag is not TerminalFlag.REACHED_HORIZON:
        logger.debug(f'Burn-in ended with {burn.flag.value}.')
        return OmegaEstimate.invalid(model.layout, horizon, burn.flag)
    window_cfg = cfg.replace(max_step=min(cfg.max_step, sample_dt))
    window = flow(model, burn.final, t_window, window_cfg)
    if window.flag is not TerminalFlag.REACHED_HORIZON:
        return OmegaEstimate.invalid(model.layout, horizon, window.flag)

    count = int(round(t_window / sample_dt))
    offsets = np.minimum(np.arange(count + 1) * sample_dt, t_window)
    states = [window.state_at(t) for t in offsets]
    return OmegaEstimate.from_states(states, species=model.species,
                                     eps_conv=eps_conv,
                                     times=t_burn + offsets,
                                     horizon=horizon)


@enum.unique
class ClassTag(str, enum.Enum):
    """Asymptotic class of a trajectory."""

    CONVERGENT = 'convergent'
    QUASICONVERGENT = 'quasiconvergent'
    NON_QUASICONVERGENT = 'non_quasiconvergent'
    UNDETERMINED = 'undetermined'


@dc.dataclass(frozen=True)
class TrajectoryClass(object):
    """Classification of one initial datum with its evidence.

    Attributes:
        tag: The class.
        equilibrium_id: The cited equilibrium of a Convergent class, else the
            equilibrium nearest to the tail mean, if any.
        distance: Sup distance of the tail mean to that equilibrium.
        horizon: The integration horizon used.
        diameter: The tail diameter.
        min_flow_norm: Smallest ``||F||_inf`` over the tail, when computed.
        blowup: Whether the run blew up.
        step_limit: Whether the run hit the step limit.

    """

    tag: ClassTag
    equilibrium_id: Optional[int] = None
    distance: Optional[float] = None
    horizon: float = 0.0
    diameter: Optional[float] = None
    min_flow_norm: Optional[float] = None
    blowup: bool = False
    step_limit: bool = False

    @property
    def label(self) -> str:
        """Return a short label, e.g. ``convergent:2``."""
        if self.tag is ClassTag.CONVERGENT:
            return f'{self.tag.value}:{self.equilibrium_id}'
        return self.tag.value

    def to_row(self, index: int, t_param: float) -> Dict[str, Any]:
        """Return the CSV row of a classified segment point."""
        return {
            'index': index,
            't_param': t_param,
            'tag': self.tag.value,
            'equilibrium_id': ('' if self.equilibrium_id is None
                               else self.equilibrium_id),
            'distance': '' if self.distance is None else self.distance,
            'horizon': self.horizon,
        }


def _sup(x: np.ndarray) -> float:
    return float(np.max(np.abs(x))) if x.size else 0.0


def reclassify(model: Model, omega: OmegaEstimate, db: EquilibriumDB,
               params: Optional[ClassifierParams] = None) -> TrajectoryClass:
    """Run the decision tree on an existing omega estimate.

    No integration is done; a point-like tail with no known equilibrium
    nearby seeds Newton and the result is registered in ``db``.
    """
    params = params or ClassifierParams()
    if not omega.valid:
        return TrajectoryClass(
            tag=ClassTag.UNDETERMINED, horizon=omega.horizon,
            blowup=omega.flag is TerminalFlag.BLOWUP,
            step_limit=omega.flag is TerminalFlag.STEP_LIMIT_EXCEEDED
        )

    nearest, distance = db.nearest(omega.mean)
    evidence = dict(horizon=omega.horizon, diameter=omega.diameter)
    if omega.kind is OmegaKind.POINT:
        if nearest is not None and distance <= params.delta:
            return TrajectoryClass(tag=ClassTag.CONVERGENT,
                                   equilibrium_id=nearest, distance=distance,
                                   **evidence)
        try:
            record = find_equilibrium(model, omega.mean,
                                      newton_tol=params.newton_tol,
                                      max_iter=params.max_newton_iter)
        except NewtonFailure as e:
            logger.debug(f'Point-like tail without equilibrium: {e}')
        else:
            distance = _sup(record.state - omega.mean)
            if distance <= params.delta:
                return TrajectoryClass(tag=ClassTag.CONVERGENT,
                                       equilibrium_id=db.register(record),
                                       distance=distance, **evidence)
        return TrajectoryClass(tag=ClassTag.UNDETERMINED,
                               equilibrium_id=nearest,
                               distance=(distance if nearest is not None
                                         else None), **evidence)

    if len(db) and all(db.nearest(s)[1] <= params.eps_eq
                       for s in omega.tail_states):
        return TrajectoryClass(tag=ClassTag.QUASICONVERGENT,
                               equilibrium_id=nearest, distance=distance,
                               **evidence)

    min_flow = min(_sup(model.rhs(s)) for s in omega.tail_states)
    tag = (ClassTag.NON_QUASICONVERGENT if min_flow > params.eps_flow
           else ClassTag.UNDETERMINED)
    return TrajectoryClass(tag=tag, equilibrium_id=nearest,
                           distance=distance if nearest is not None else None,
                           min_flow_norm=min_flow, **evidence)


def classify_with_omega(model: Model, x0: Union[StateVec, np.ndarray],
                        db: EquilibriumDB,
                        params: Optional[ClassifierParams] = None,
                        cfg: Optional[IntegratorConfig] = None) \
        -> Tuple[TrajectoryClass, OmegaEstimate]:
    """Classify ``x0`` and return the omega estimate the class rests on."""
    params = params or ClassifierParams()
    t_burn = params.t_burn
    for attempt in range(params.retries + 1):
        omega = estimate_omega(model, x0, t_burn=t_burn,
                               t_window=params.t_window,
                               sample_dt=params.sample_dt, cfg=cfg,
                               eps_conv=params.eps_conv)
        result = reclassify(model, omega, db, params)
        if result.tag is not ClassTag.UNDETERMINED or not omega.valid:
            break
        if attempt < params.retries:
            logger.warning(f'Undetermined at horizon {omega.horizon:g}; '
                           f'retrying with t_burn={2 * t_burn:g}.')
            t_burn *= 2
    return result, omega


def classify(model: Model, x0: Union[StateVec, np.ndarray],
             db: EquilibriumDB, params: Optional[ClassifierParams] = None,
             cfg: Optional[IntegratorConfig] = None) -> TrajectoryClass:
    """Classify the initial datum ``x0``; see the module docstring."""
    return classify_with_omega(model, x0, db, params, cfg)[0]


@dc.dataclass(frozen=True)
class _Task(object):
    model: Model
    db: EquilibriumDB
    params: ClassifierParams
    cfg: Optional[IntegratorConfig]

    def __call__(self, x0: np.ndarray) \
            -> Tuple[OmegaEstimate, List[EquilibriumRecord]]:
        local = self.db.snapshot()
        _, omega = classify_with_omega(self.model, x0, local, self.params,
                                       self.cfg)
        changed = [record for index, record in enumerate(local.records)
                   if index >= len(self.db) or record is not self.db[index]]
        return omega, changed


def classify_many(model: Model,
                  points: Sequence[Union[StateVec, np.ndarray]],
                  db: EquilibriumDB,
                  params: Optional[ClassifierParams] = None,
                  cfg: Optional[IntegratorConfig] = None,
                  mapper: Mapper = map) \
        -> Tuple[List[TrajectoryClass], List[OmegaEstimate]]:
    """Classify many initial data with the two-phase protocol.

    Every task works on its own snapshot of ``db``. Equilibria discovered or
    refined by the tasks are then registered in ``db`` in task order; a
    refined record replaces its match there as it did in the task. All
    points are reclassified from their stored omega estimates against the
    merged database. Results therefore do not depend on ``mapper``.

    Args:
        model: The model.
        points: The initial data.
        db: The equilibrium database, updated in place.
        params: The classifier thresholds.
        cfg: The integrator settings.
        mapper: An order-preserving map, e.g. ``executor.map``.

    Returns:
        The classes and omega estimates, in the order of ``points``.

    """
    params = params or ClassifierParams()
    task = _Task(model=model, db=db.snapshot(), params=params, cfg=cfg)
    outcomes = list(mapper(task, [model.check_state(p) for p in points]))
    for _, new_records in outcomes:
        for record in new_records:
            db.register(record)
    omegas = [omega for omega, _ in outcomes]
    classes = [reclassify(model, omega, db, params) for omega in omegas]
    return classes, omegas


@dc.dataclass(frozen=True)
class CriterionReport(object):
    """Outcome of the convergence criterion check.

    Attributes:
        applicable: Whether ``Phi_T(x) > x`` or ``Phi_T(x) < x``.
        satisfied: Whether the classification is Convergent, when
            applicable.
        direction: 'up' when ``Phi_T(x) > x``, 'down' when below.
        classification: The class of ``x``, when applicable.

    """

    applicable: bool
    satisfied: Optional[bool] = None
    direction: Optional[str] = None
    classification: Optional[TrajectoryClass] = None


def _strictly_above(lower: np.ndarray, upper: np.ndarray, order: ConeOrder,
                    tol: float) -> bool:
    diff = order.difference(lower, upper)
    return bool(np.all(diff >= 0) and np.max(diff) > tol)


def check_convergence_criterion(model: Model,
                                x: Union[StateVec, np.ndarray],
                                T: float, db: EquilibriumDB,
                                params: Optional[ClassifierParams] = None,
                                cfg: Optional[IntegratorConfig] = None,
                                order: Optional[ConeOrder] = None) \
        -> CriterionReport:
    """Check that ``Phi_T(x) > x`` or ``Phi_T(x) < x`` implies convergence."""
    params = params or ClassifierParams()
    order = order or ConeOrder.standard(model.species)
    x = model.check_state(x)
    image = flow_at(model, x, T, cfg)
    if not np.all(np.isfinite(image)):
        return CriterionReport(applicable=False)
    if _strictly_above(x, image, order, params.tol_order):
        direction = 'up'
    elif _strictly_above(image, x, order, params.tol_order):
        direction = 'down'
    else:
        return CriterionReport(applicable=False)
    result = classify(model, x, db, params, cfg)
    return CriterionReport(applicable=True,
                           satisfied=result.tag is ClassTag.CONVERGENT,
                           direction=direction, classification=result)


def check_nonordering(omega: OmegaEstimate, order: ConeOrder,
                      tol_order: float = 1e-8,
                      eps_conv: float = 1e-6) -> bool:
    """Return whether no two tail states are related.

    Two states are related when one is above the other up to ``tol_order``
    in every coordinate and by more than ``tol_order`` in some coordinate.
    Pairs closer than ``eps_conv`` are skipped.
    """
    if not omega.valid:
        raise ContractViolation('Omega estimate is not valid.')
    if omega.kind is OmegaKind.POINT:
        return True
    adjusted = np.stack([order.adjust(s) for s in omega.tail_states])
    for i in range(len(adjusted) - 1):
        diffs = adjusted[i + 1:] - adjusted[i]
        close = np.max(np.abs(diffs), axis=1) <= eps_conv
        up = np.all(diffs >= -tol_order, axis=1) & (diffs.max(axis=1)
                                                    > tol_order)
        down = np.all(diffs <= tol_order, axis=1) & (diffs.min(axis=1)
                                                     < -tol_order)
        if np.any((up | down) & ~close):
            return False
    return True


@enum.unique
class LSDVerdict(str, enum.Enum):
    """Outcome of the limit set dichotomy check."""

    OK_ORDERED = 'ok_ordered'
    OK_SAME_LIMIT = 'ok_same_limit'
    VIOLATION = 'violation'

    @property
    def ok(self) -> bool:
        """Return whether the dichotomy holds."""
        return self is not LSDVerdict.VIOLATION


@dc.dataclass(frozen=True)
class LSDReport(object):
    """Outcome of the limit set dichotomy check for a pair ``x <= y``.

    Attributes:
        verdict: The verdict.
        x_class: Classification of x.
        y_class: Classification of y.
        worst_margin: Smallest sign-adjusted coordinate of ``s_y - s_x``
            over all tail pairs.
        witness: Indices (i, j) of the tail pair attaining it.

    """

    verdict: LSDVerdict
    x_class: TrajectoryClass
    y_class: TrajectoryClass
    worst_margin: float
    witness: Optional[Tuple[int, int]] = None


def _tails_below(lower: OmegaEstimate, upper: OmegaEstimate,
                 order: ConeOrder, tol: float) \
        -> Tuple[bool, float, Tuple[int, int]]:
    """Return whether every lower tail state is strictly below every upper one.

    Also returns the worst margin and the pair attaining it.
    """
    low = np.stack([order.adjust(s) for s in lower.tail_states])
    high = np.stack([order.adjust(s) for s in upper.tail_states])
    worst, witness, ordered = np.inf, (0, 0), True
    for i, state in enumerate(low):
        diffs = high - state
        mins = diffs.min(axis=1)
        j = int(np.argmin(mins))
        if mins[j] < worst:
            worst, witness = float(mins[j]), (i, j)
        if np.any(mins < -tol) or np.any(diffs.max(axis=1) <= tol):
            ordered = False
    return ordered, worst, witness


def check_lsd(model: Model, x: Union[StateVec, np.ndarray],
              y: Union[StateVec, np.ndarray], db: EquilibriumDB,
              params: Optional[ClassifierParams] = None,
              cfg: Optional[IntegratorConfig] = None,
              order: Optional[ConeOrder] = None) -> LSDReport:
    """Check the limit set dichotomy for ``x <= y``.

    The verdict is OK when every tail state of x is strictly below every
    tail state of y and the two estimates differ, or when both orbits
    converge to the same equilibrium.

    Raises:
        ContractViolation: If ``x <= y`` does not hold.

    """
    params = params or ClassifierParams()
    order = order or ConeOrder.standard(model.species)
    x, y = model.check_state(x), model.check_state(y)
    if not order.leq(x, y):
        raise ContractViolation('check_lsd needs x <= y.')
    x_class, x_omega = classify_with_omega(model, x, db, params, cfg)
    y_class, y_omega = classify_with_omega(model, y, db, params, cfg)

    if not (x_omega.valid and y_omega.valid):
        return LSDReport(verdict=LSDVerdict.VIOLATION, x_class=x_class,
                         y_class=y_class, worst_margin=float('nan'))
    ordered, worst, witness = _tails_below(x_omega, y_omega, order,
                                           params.tol_order)
    if (x_class.tag is ClassTag.CONVERGENT
            and y_class.tag is ClassTag.CONVERGENT
            and x_class.equilibrium_id == y_class.equilibrium_id):
        verdict = LSDVerdict.OK_SAME_LIMIT
    elif ordered and _sup(x_omega.mean - y_omega.mean) > params.eps_conv:
        verdict = LSDVerdict.OK_ORDERED
    else:
        verdict = LSDVerdict.VIOLATION
        logger.info(f'Limit set dichotomy violated: worst margin '
                    f'{worst:.3g} at tail pair {witness}.')
    return LSDReport(verdict=verdict, x_class=x_class, y_class=y_class,
                     worst_margin=worst, witness=witness)


@dc.dataclass(frozen=True)
class TrapReport(object):
    """Outcome of the inf (or sup) trap check.

    Attributes:
        ok: Whether the orbit of the anchor converges to a point p below
            (resp. above) every tail state.
        anchor: The pointwise inf (resp. sup) of the tail.
        classification: The class of the anchor.
        limit: The equilibrium p, when the anchor is Convergent.

    """

    ok: bool
    anchor: np.ndarray
    classification: TrajectoryClass
    limit: Optional[np.ndarray] = None


def _trap_check(model: Model, omega: OmegaEstimate, order: ConeOrder,
                db: EquilibriumDB, params: ClassifierParams,
                cfg: Optional[IntegratorConfig], lower: bool) -> TrapReport:
    if not omega.valid:
        raise ContractViolation('Omega estimate is not valid.')
    extremum = pointwise_inf if lower else pointwise_sup
    anchor = extremum(list(omega.tail_states), order).data
    result = classify(model, anchor, db, params, cfg)
    if result.tag is not ClassTag.CONVERGENT:
        return TrapReport(ok=False, anchor=anchor, classification=result)

    limit = db[result.equilibrium_id].state
    # Point-like tails are only known up to their diameter
    point = omega.kind is OmegaKind.POINT
    tol = max(params.eps_conv, params.tol_order) if point else (
        params.tol_order)
    ok = True
    for state in omega.tail_states:
        diff = (order.difference(limit, state) if lower
                else order.difference(state, limit))
        if np.any(diff < -tol) or (not point and np.max(diff) <= tol):
            ok = False
            break
    return TrapReport(ok=ok, anchor=anchor, classification=result,
                      limit=limit)


def inf_trap_check(model: Model, omega: OmegaEstimate,
                   order: Optional[ConeOrder] = None,
                   db: Optional[EquilibriumDB] = None,
                   params: Optional[ClassifierParams] = None,
                   cfg: Optional[IntegratorConfig] = None) -> TrapReport:
    """Check that the orbit of ``inf omega`` converges below ``omega``."""
    return _trap_check(model, omega,
                       order or ConeOrder.standard(model.species),
                       db if db is not None else EquilibriumDB(),
                       params or ClassifierParams(), cfg, lower=True)


def sup_trap_check(model: Model, omega: OmegaEstimate,
                   order: Optional[ConeOrder] = None,
                   db: Optional[EquilibriumDB] = None,
                   params: Optional[ClassifierParams] = None,
                   cfg: Optional[IntegratorConfig] = None) -> TrapReport:
    """Check that the orbit of ``sup omega`` converges above ``omega``."""
    return _trap_check(model, omega,
                       order or ConeOrder.standard(model.species),
                       db if db is not None else EquilibriumDB(),
                       params or ClassifierParams(), cfg, lower=False)
