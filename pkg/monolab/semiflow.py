# Copyright (C) 2019 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""Numerical semiflow: time integration and trajectory predicates.

Two integrators are available. Finite networks use an adaptive Dormand-Prince
5(4) pair with PI step control; reaction-diffusion models use Crank-Nicolson
on the diffusion part and Heun on the reaction, with the implicit matrix
factored once per step size. Linear models are advanced exactly with
``expm_multiply``.

Every accepted step is recorded: trajectories are compared at recorded times,
never interpolated.
"""
from __future__ import annotations

import dataclasses as dc
import enum
import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

import monolab.csv as mcsv
from monolab.dsl import EvaluationError
from monolab.models import LinearModel, Model, ModelKind
from monolab.order import ConeOrder, ContractViolation, Layout, StateVec

logger = logging.getLogger(__name__)

# Dormand-Prince 5(4) tableau
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84,
                0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

_SAFETY = 0.9
_ALPHA = 0.7 / 5
_BETA = 0.4 / 5
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0

# Largest IMEX step, also used when the reaction has no Lipschitz estimate
DEFAULT_IMEX_DT = 0.05
# Random Jacobian samples in the box of the reaction CFL estimate
REACTION_SAMPLES = 16


@enum.unique
class Scheme(str, enum.Enum):
    """Time integration scheme."""

    AUTO = 'auto'
    ADAPTIVE_RK54 = 'adaptive_rk54'
    IMEX_CN_HEUN = 'imex_cn_heun'
    EXPONENTIAL = 'exponential'


@enum.unique
class TerminalFlag(str, enum.Enum):
    """How an integration ended."""

    REACHED_HORIZON = 'reached_horizon'
    STEP_LIMIT_EXCEEDED = 'step_limit_exceeded'
    BLOWUP = 'blowup'


@dc.dataclass(frozen=True)
class IntegratorConfig(object):
    """Integrator settings.

    Attributes:
        scheme: The scheme. AUTO picks by model kind: RK54 for networks, IMEX
            for reaction-diffusion models, the exact exponential for linear
            models.
        rel_tol: Relative tolerance of the adaptive scheme.
        abs_tol: Absolute tolerance of the adaptive scheme.
        dt: IMEX step. If None, chosen so that ``dt * L_f <= 0.5``.
        max_step_count: Largest number of attempted steps.
        max_step: Largest step of either scheme.
        blowup_threshold: Sup norm above which a run is declared a blowup.

    """

    scheme: Scheme = Scheme.AUTO
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    dt: Optional[float] = None
    max_step_count: int = 200000
    max_step: float = math.inf
    blowup_threshold: float = 1e8

    def __post_init__(self) -> None:
        """Validate the settings."""
        object.__setattr__(self, 'scheme', Scheme(self.scheme))
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ContractViolation(f'Tolerances must be positive, got '
                                    f'rel_tol={self.rel_tol}, '
                                    f'abs_tol={self.abs_tol}.')
        if self.dt is not None and not self.dt > 0:
            raise ContractViolation(f'dt must be positive, got {self.dt}.')
        if self.max_step_count < 1 or not self.max_step > 0:
            raise ContractViolation('max_step_count and max_step must be '
                                    'positive.')

    def resolve(self, model: Model) -> Scheme:
        """Return the concrete scheme used for ``model``."""
        if self.scheme is not Scheme.AUTO:
            return self.scheme
        if isinstance(model, LinearModel):
            return Scheme.EXPONENTIAL
        if model.kind is ModelKind.RD:
            return Scheme.IMEX_CN_HEUN
        return Scheme.ADAPTIVE_RK54

    def replace(self, **changes) -> IntegratorConfig:
        """Return a copy with some fields changed."""
        return dc.replace(self, **changes)


@dc.dataclass(frozen=True, eq=False)
class Trajectory(object):
    """Recorded orbit of one initial datum.

    Attributes:
        times: Strictly increasing times, starting at 0.
        states: One row per recorded time.
        layout: The layout of each state.
        flag: How the integration ended.

    """

    times: np.ndarray
    states: np.ndarray
    layout: Layout
    flag: TerminalFlag = TerminalFlag.REACHED_HORIZON

    def __len__(self) -> int:
        """Return the number of recorded states."""
        return self.times.size

    @property
    def final(self) -> np.ndarray:
        """Return the last recorded state (possibly non-finite on blowup)."""
        return self.states[-1]

    @property
    def final_time(self) -> float:
        """Return the last recorded time."""
        return float(self.times[-1])

    @property
    def blowup(self) -> bool:
        """Return whether the run blew up."""
        return self.flag is TerminalFlag.BLOWUP

    def final_state(self) -> StateVec:
        """Return the last state as a StateVec."""
        return StateVec(data=self.final, layout=self.layout)

    def state_at(self, t: float) -> np.ndarray:
        """Return the recorded state whose time is nearest to ``t``."""
        index = int(np.argmin(np.abs(self.times - t)))
        return self.states[index]

    def window(self, start: float, end: float = math.inf) \
            -> Tuple[np.ndarray, np.ndarray]:
        """Return the recorded times and states with ``start <= t <= end``."""
        mask = (self.times >= start) & (self.times <= end)
        return self.times[mask], self.states[mask]

    def column_names(self) -> List[str]:
        """Return ``t`` followed by one name per state coordinate."""
        species, nodes = self.layout
        if nodes == 1:
            names = [f'u{i + 1}' for i in range(species)]
        else:
            names = [f'u{i + 1}_{j}' for i in range(species)
                     for j in range(nodes)]
        return ['t'] + names

    def to_csv(self, path: Union[str, Path]) -> None:
        """Write the trajectory to a CSV file, one row per recorded time."""
        names = self.column_names()
        with mcsv.CSVWriter(path=path, field_names=names) as writer:
            writer.write_rows(
                dict(zip(names, (t, *state)))
                for t, state in zip(self.times, self.states)
            )


def _rms(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(values * values)))


def _evaluate(func: Callable[[np.ndarray], np.ndarray],
              u: np.ndarray) -> Optional[np.ndarray]:
    """Return ``func(u)``, or None when ``u`` or the result is not finite."""
    if not np.all(np.isfinite(u)):
        return None
    try:
        out = func(u)
    except EvaluationError:
        return None
    return out if np.all(np.isfinite(out)) else None


def _initial_step(model: Model, u: np.ndarray, f0: np.ndarray,
                  cfg: IntegratorConfig) -> float:
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(u)
    d0, d1 = _rms(u / scale), _rms(f0 / scale)
    if d0 < 1e-5 or d1 < 1e-5:
        return 1e-6
    return 0.01 * d0 / d1


def _integrate_rk54(model: Model, u0: np.ndarray, t_end: float,
                    cfg: IntegratorConfig) -> Trajectory:
    times, states = [0.0], [u0]
    t, u = 0.0, u0
    k1 = model.rhs(u)
    h = min(_initial_step(model, u, k1, cfg), cfg.max_step)
    err_prev = 1e-4
    flag = TerminalFlag.REACHED_HORIZON
    attempts = 0

    while t < t_end:
        if attempts >= cfg.max_step_count:
            flag = TerminalFlag.STEP_LIMIT_EXCEEDED
            logger.warning(f'Step limit {cfg.max_step_count} reached at '
                           f't={t:.6g} before t_end={t_end:.6g}.')
            break
        attempts += 1
        last = h >= t_end - t
        if last:
            h = t_end - t

        ks: List[Optional[np.ndarray]] = [k1]
        with np.errstate(all='ignore'):
            for row in _A[1:]:
                stage = u + h * sum(a * k for a, k in zip(row, ks) if a)
                ks.append(_evaluate(model.rhs, stage))
                if ks[-1] is None:
                    break
            if ks[-1] is None:
                u_new, err = u, math.inf
            else:
                u_new = u + h * sum(b * k for b, k in zip(_B5, ks) if b)
                err_vec = h * sum(e * k for e, k in zip(_E, ks))
                scale = cfg.abs_tol + cfg.rel_tol * np.maximum(
                    np.abs(u), np.abs(u_new)
                )
                err = _rms(err_vec / scale)

        if not math.isfinite(err) or not np.all(np.isfinite(u_new)):
            if h <= 1e-14 * max(1.0, t):
                times.append(t + h)
                states.append(u_new)
                flag = TerminalFlag.BLOWUP
                logger.warning(f'Non-finite state at t={t:.6g}.')
                break
            h *= _MIN_FACTOR
            continue

        if err <= 1.0:
            t = t_end if last else t + h
            u = u_new
            k1 = ks[6]
            times.append(t)
            states.append(u)
            if np.max(np.abs(u)) > cfg.blowup_threshold:
                flag = TerminalFlag.BLOWUP
                logger.warning(f'Blowup at t={t:.6g}: sup norm above '
                               f'{cfg.blowup_threshold:g}.')
                break
            if err == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = _SAFETY * err ** -_ALPHA * err_prev ** _BETA
            err_prev = max(err, 1e-4)
            h = min(h * min(_MAX_FACTOR, max(_MIN_FACTOR, factor)),
                    cfg.max_step)
        else:
            factor = max(_MIN_FACTOR, _SAFETY * err ** -0.2)
            h *= min(1.0, factor)

    return Trajectory(times=np.asarray(times), states=np.stack(states),
                      layout=model.layout, flag=flag)


def estimate_step_for_reaction(model: Model, u: np.ndarray,
                               cap: float = DEFAULT_IMEX_DT,
                               samples: int = REACTION_SAMPLES) -> float:
    """Return the IMEX step satisfying the reaction CFL rule ``dt L_f <= 0.5``.

    ``L_f`` is the largest row-sum norm of the reaction Jacobian over the
    sup-norm box of radius ``max(1, |u|_inf)``: at ``u``, at the origin, at
    the two constant corners and at ``samples`` seeded random states.
    """
    u = np.asarray(u, dtype=float)
    radius = max(1.0, float(np.max(np.abs(u))))
    rng = np.random.default_rng(0)
    points = [u, np.zeros_like(u), np.full_like(u, radius),
              np.full_like(u, -radius)]
    points.extend(rng.uniform(-radius, radius, size=(samples, u.size)))
    lipschitz = max(model.reaction_lipschitz(p) for p in points)
    if lipschitz <= 0:
        return cap
    return min(cap, 0.5 / lipschitz)


class _CrankNicolson(object):
    """Factorizations of ``I - dt/2 A`` keyed by step size."""

    def __init__(self, linear: sps.spmatrix) -> None:
        self._linear = sps.csc_matrix(linear)
        self._eye = sps.identity(linear.shape[0], format='csc')
        self._cache: Dict[float, Tuple[Callable, sps.spmatrix]] = {}

    def __getitem__(self, dt: float) -> Tuple[Callable, sps.spmatrix]:
        if dt not in self._cache:
            lhs = (self._eye - 0.5 * dt * self._linear).tocsc()
            rhs = (self._eye + 0.5 * dt * self._linear).tocsr()
            self._cache[dt] = (spla.splu(lhs).solve, rhs)
        return self._cache[dt]


def _integrate_imex(model: Model, u0: np.ndarray, t_end: float,
                    cfg: IntegratorConfig) -> Trajectory:
    dt = cfg.dt if cfg.dt is not None else estimate_step_for_reaction(model,
                                                                      u0)
    dt = min(dt, cfg.max_step)
    steps = max(1, math.ceil(t_end / dt - 1e-9)) if t_end > 0 else 0
    if steps > cfg.max_step_count:
        logger.warning(f'Step limit {cfg.max_step_count} is below the '
                       f'{steps} IMEX steps needed to reach {t_end:.6g}.')
    cn = _CrankNicolson(model.linear_part())

    times, states = [0.0], [u0]
    u = u0
    flag = TerminalFlag.REACHED_HORIZON
    for k in range(1, steps + 1):
        if k > cfg.max_step_count:
            flag = TerminalFlag.STEP_LIMIT_EXCEEDED
            break
        t = t_end if k == steps else k * dt
        h = t - times[-1]
        solve, explicit = cn[h]
        with np.errstate(all='ignore'):
            r0 = _evaluate(model.nonlinear_part, u)
            base = explicit @ u
            predictor = solve(base + h * r0) if r0 is not None else base
            r1 = _evaluate(model.nonlinear_part, predictor)
            if r0 is None or r1 is None:
                u = np.full_like(u, np.inf)
            else:
                u = solve(base + 0.5 * h * (r0 + r1))
        times.append(t)
        states.append(u)
        if not np.all(np.isfinite(u)) or (np.max(np.abs(u))
                                          > cfg.blowup_threshold):
            flag = TerminalFlag.BLOWUP
            logger.warning(f'Blowup at t={t:.6g}.')
            break

    return Trajectory(times=np.asarray(times), states=np.stack(states),
                      layout=model.layout, flag=flag)


def _integrate_exponential(model: Model, u0: np.ndarray, t_end: float,
                           cfg: IntegratorConfig) -> Trajectory:
    states = [u0]
    if t_end > 0:
        final = spla.expm_multiply(model.linear_part() * t_end, u0)
        states.append(np.asarray(final, dtype=float))
    times = [0.0, t_end] if t_end > 0 else [0.0]
    flag = TerminalFlag.REACHED_HORIZON
    if not np.all(np.isfinite(states[-1])) or (
            np.max(np.abs(states[-1])) > cfg.blowup_threshold):
        flag = TerminalFlag.BLOWUP
    return Trajectory(times=np.asarray(times), states=np.stack(states),
                      layout=model.layout, flag=flag)


_INTEGRATORS = {
    Scheme.ADAPTIVE_RK54: _integrate_rk54,
    Scheme.IMEX_CN_HEUN: _integrate_imex,
    Scheme.EXPONENTIAL: _integrate_exponential,
}


def flow(model: Model, x0: Union[StateVec, np.ndarray], t_end: float,
         cfg: Optional[IntegratorConfig] = None) -> Trajectory:
    """Integrate ``u' = F(u)`` from ``x0`` over ``[0, t_end]``.

    Args:
        model: The model.
        x0: The initial datum.
        t_end: The horizon.
        cfg: The integrator settings. Defaults to IntegratorConfig().

    Returns:
        The trajectory. Blowup and step-limit outcomes are reported through
        its flag.

    """
    cfg = cfg or IntegratorConfig()
    if not t_end >= 0 or not math.isfinite(t_end):
        raise ContractViolation(f't_end must be finite and >= 0, got '
                                f'{t_end}.')
    u0 = model.check_state(x0)
    if not np.all(np.isfinite(u0)):
        raise ContractViolation('Initial datum must be finite.')
    scheme = cfg.resolve(model)
    return _INTEGRATORS[scheme](model, u0.copy(), float(t_end), cfg)


def flow_at(model: Model, x0: Union[StateVec, np.ndarray], t: float,
            cfg: Optional[IntegratorConfig] = None) -> np.ndarray:
    """Return the last recorded state of ``flow(model, x0, t, cfg)``."""
    if t == 0:
        return model.check_state(x0).copy()
    return flow(model, x0, t, cfg).final


def flow_through(model: Model, x0: Union[StateVec, np.ndarray],
                 times: Sequence[float],
                 cfg: Optional[IntegratorConfig] = None) \
        -> Tuple[List[np.ndarray], TerminalFlag]:
    """Return the states at each of ``times`` (in the given order).

    The orbit is integrated piecewise between consecutive sample times, so
    every requested time is hit exactly. Integration stops at the first
    blowup or step-limit; later samples are then missing from the result.
    """
    u = model.check_state(x0)
    order = sorted(set(float(t) for t in times))
    if order and order[0] < 0:
        raise ContractViolation('Sample times must be >= 0.')
    reached: Dict[float, np.ndarray] = {}
    t_prev = 0.0
    flag = TerminalFlag.REACHED_HORIZON
    for t in order:
        if t > t_prev:
            piece = flow(model, u, t - t_prev, cfg)
            if piece.flag is not TerminalFlag.REACHED_HORIZON:
                flag = piece.flag
                break
            u = piece.final
        reached[t] = u
        t_prev = t
    return [reached[float(t)] for t in times if float(t) in reached], flag


@dc.dataclass(frozen=True)
class StaysInResult(object):
    """Outcome of the finite-horizon ``W(D, r)`` check."""

    holds: bool
    flag: TerminalFlag
    first_exit: Optional[float] = None

    def __bool__(self) -> bool:
        """Return whether the predicate held."""
        return self.holds


def stays_in(model: Model, x0: Union[StateVec, np.ndarray],
             predicate: Callable[[np.ndarray], bool], r: float,
             horizon: float, cfg: Optional[IntegratorConfig] = None) \
        -> StaysInResult:
    """Check that ``predicate`` holds at every recorded state in [r, horizon].

    This is a necessary condition only: the horizon is finite.
    """
    if not 0 <= r <= horizon:
        raise ContractViolation(f'Need 0 <= r <= horizon, got r={r}, '
                                f'horizon={horizon}.')
    trajectory = flow(model, x0, horizon, cfg)
    if trajectory.flag is not TerminalFlag.REACHED_HORIZON:
        return StaysInResult(holds=False, flag=trajectory.flag)
    for t, state in zip(*trajectory.window(r, horizon)):
        if not predicate(state):
            return StaysInResult(holds=False, flag=trajectory.flag,
                                 first_exit=float(t))
    return StaysInResult(holds=True, flag=trajectory.flag)


@dc.dataclass(frozen=True)
class MonotonicityReport(object):
    """Comparison of two orbits at sample times.

    Attributes:
        margins: (t, smallest sign-adjusted coordinate of Phi_t(y) - Phi_t(x))
            for every compared time.
        violations: The margins below ``-tol_order``.
        flag: REACHED_HORIZON unless one of the runs ended early.

    """

    margins: List[Tuple[float, float]]
    violations: List[Tuple[float, float]]
    flag: TerminalFlag = TerminalFlag.REACHED_HORIZON

    @property
    def ok(self) -> bool:
        """Return whether no violation was found."""
        return not self.violations


def _paired_margins(model: Model, x: np.ndarray, y: np.ndarray,
                    order: ConeOrder, t_samples: Sequence[float],
                    cfg: Optional[IntegratorConfig]) \
        -> Tuple[List[Tuple[float, float]], TerminalFlag]:
    times = sorted(set(float(t) for t in t_samples))
    x_states, x_flag = flow_through(model, x, times, cfg)
    y_states, y_flag = flow_through(model, y, times, cfg)
    flag = (x_flag if x_flag is not TerminalFlag.REACHED_HORIZON
            else y_flag)
    margins = [(t, float(order.difference(xs, ys).min()))
               for t, xs, ys in zip(times, x_states, y_states)]
    return margins, flag


def check_monotone(model: Model, x: Union[StateVec, np.ndarray],
                   y: Union[StateVec, np.ndarray], order: ConeOrder,
                   t_samples: Sequence[float],
                   cfg: Optional[IntegratorConfig] = None,
                   tol_order: float = 1e-8) -> MonotonicityReport:
    """Check ``Phi_t(x) <= Phi_t(y)`` at each sample time.

    Raises:
        ContractViolation: If ``x <= y`` does not hold.

    """
    x, y = model.check_state(x), model.check_state(y)
    if not order.leq(x, y):
        raise ContractViolation('check_monotone needs x <= y.')
    margins, flag = _paired_margins(model, x, y, order, t_samples, cfg)
    violations = [(t, m) for t, m in margins if m < -tol_order]
    if violations:
        logger.info(f'Order violated at {len(violations)} sample times, '
                    f'worst margin {min(m for _, m in violations):.3g}.')
    return MonotonicityReport(margins=margins, violations=violations,
                              flag=flag)


def check_strongly_monotone(model: Model, x: Union[StateVec, np.ndarray],
                            y: Union[StateVec, np.ndarray],
                            order: ConeOrder, t_samples: Sequence[float],
                            cfg: Optional[IntegratorConfig] = None) \
        -> MonotonicityReport:
    """Check ``Phi_t(x) << Phi_t(y)`` at each sample time ``t >= 1``.

    A margin below ``order.eta`` counts as a violation.

    Raises:
        ContractViolation: If ``x < y`` does not hold.

    """
    x, y = model.check_state(x), model.check_state(y)
    if not order.lt(x, y):
        raise ContractViolation('check_strongly_monotone needs x < y.')
    times = [t for t in t_samples if t >= 1]
    margins, flag = _paired_margins(model, x, y, order, times, cfg)
    violations = [(t, m) for t, m in margins if m < order.eta]
    return MonotonicityReport(margins=margins, violations=violations,
                              flag=flag)
