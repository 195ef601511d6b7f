# Copyright (C) 2019 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""Equilibria: Newton search, spectral stability and irreducibility."""
from __future__ import annotations

import dataclasses as dc
import enum
import json
import logging
from typing import (Any, Dict, Iterable, Iterator, List, Optional, Sequence,
                    Tuple, Union)

import numpy as np
import scipy.sparse as sps
from scipy.sparse.csgraph import connected_components

from monolab.discretize import RDModel
from monolab.dsl import EvaluationError
from monolab.models import LinearModel, Model, ODEModel
from monolab.order import ConeOrder, ContractViolation, StateVec
from monolab.semiflow import IntegratorConfig, flow_at

logger = logging.getLogger(__name__)

NEWTON_TOL = 1e-10
MAX_NEWTON_ITER = 50
MAX_HALVINGS = 30
ARMIJO = 1e-4

POWER_TOL = 1e-8
MAX_POWER_ITER = 500
# Bound on the relative eigen residual, in units of power_tol
RESIDUAL_FACTOR = 100.0
NEUTRAL_BAND = 1e-3
MATCH_RADIUS = 1e-4

# Largest system tested with every basis direction
MAX_TEST_VECTORS = 32


class NewtonFailure(Exception):
    """Exception raised when Newton's method does not find an equilibrium."""

    @enum.unique
    class Reason(str, enum.Enum):
        """Reason of the failure."""

        MAX_ITERATIONS = 'Maximum number of iterations reached'
        SINGULAR_JACOBIAN = 'Singular Jacobian'
        LINE_SEARCH = 'Line search failed to decrease the residual'
        NON_FINITE = 'Non-finite residual'

    def __init__(self, reason: NewtonFailure.Reason, residual: float,
                 iterations: int) -> None:
        """Initialize the exception.

        Args:
            reason: The reason of the failure.
            residual: The last sup-norm residual.
            iterations: The number of Newton iterations done.

        """
        super().__init__(f'{reason.value} (residual={residual:.3g} after '
                         f'{iterations} iterations)')
        self._reason = reason
        self.residual = residual
        self.iterations = iterations

    @property
    def reason(self) -> NewtonFailure.Reason:
        """Return the reason of the failure."""
        return self._reason


class SpectralError(Exception):
    """Exception raised when the power iteration does not converge."""

    @enum.unique
    class Reason(str, enum.Enum):
        """Reason of the failure."""

        NO_CONVERGENCE = 'Power iteration did not converge'
        NON_FINITE = 'Non-finite iterate'

    def __init__(self, reason: SpectralError.Reason, estimate: float,
                 iterations: int) -> None:
        """Initialize the exception."""
        super().__init__(f'{reason.value} (estimate={estimate:.6g} after '
                         f'{iterations} iterations)')
        self._reason = reason
        self.estimate = estimate
        self.iterations = iterations

    @property
    def reason(self) -> SpectralError.Reason:
        """Return the reason of the failure."""
        return self._reason


@enum.unique
class Stability(str, enum.Enum):
    """Stability class of an equilibrium."""

    LINEARLY_STABLE = 'linearly_stable'
    NEUTRALLY_STABLE = 'neutrally_stable'
    LINEARLY_UNSTABLE = 'linearly_unstable'


@dc.dataclass(frozen=True, eq=False)
class EquilibriumRecord(object):
    """An equilibrium and, once analyzed, its linear stability.

    Attributes:
        state: The equilibrium e.
        layout: The layout of ``state``.
        residual: ``||F(e)||_inf``.
        iterations: Newton iterations used to find it.
        horizon: The time T of the linearized flow.
        rho: The spectral radius of the linearized time-T flow.
        stability: The class of ``rho``.
        principal_vector: The dominant eigenvector, unit sup norm.
        irreducible: Whether the linearized flow is strongly positive.

    """

    state: np.ndarray
    layout: Tuple[int, int]
    residual: float
    iterations: int = 0
    horizon: Optional[float] = None
    rho: Optional[float] = None
    stability: Optional[Stability] = None
    principal_vector: Optional[np.ndarray] = None
    irreducible: Optional[bool] = None

    @property
    def complete(self) -> bool:
        """Return whether the stability fields are filled."""
        return self.stability is not None and self.irreducible is not None

    def state_vec(self) -> StateVec:
        """Return the state as a StateVec."""
        return StateVec(data=self.state, layout=self.layout)

    def variation(self) -> np.ndarray:
        """Return the sup-variation of each species over the grid."""
        nodal = self.state.reshape(self.layout)
        return nodal.max(axis=1) - nodal.min(axis=1)

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-friendly representation."""
        return {
            'state': self.state.tolist(),
            'layout': list(self.layout),
            'residual': self.residual,
            'iterations': self.iterations,
            'horizon': self.horizon,
            'rho': self.rho,
            'stability': (self.stability.value if self.stability is not None
                          else None),
            'principal_vector': (self.principal_vector.tolist()
                                 if self.principal_vector is not None
                                 else None),
            'irreducible': self.irreducible,
            'spatial_variation': self.variation().tolist(),
        }


EquilibriumLike = Union[EquilibriumRecord, StateVec, np.ndarray,
                        Sequence[float]]


def find_equilibrium(model: Model, seed: Union[StateVec, np.ndarray],
                     newton_tol: float = NEWTON_TOL,
                     max_iter: int = MAX_NEWTON_ITER) -> EquilibriumRecord:
    """Solve ``F(u) = 0`` by damped Newton from ``seed``.

    The step is halved up to 30 times until the Armijo condition on
    ``||F||_2`` holds.

    Args:
        model: The model.
        seed: The starting point.
        newton_tol: Success threshold on ``||F||_inf``.
        max_iter: Largest number of Newton steps.

    Returns:
        A partial record (stability fields unset).

    Raises:
        NewtonFailure: With the last residual and iteration count.

    """
    u = model.check_state(seed).copy()
    if not np.all(np.isfinite(u)):
        raise ContractViolation('Newton seed must be finite.')
    try:
        residual_vec = model.rhs(u)
    except EvaluationError:
        raise NewtonFailure(NewtonFailure.Reason.NON_FINITE,
                            residual=float('nan'), iterations=0)

    for iteration in range(max_iter + 1):
        if not np.all(np.isfinite(residual_vec)):
            raise NewtonFailure(NewtonFailure.Reason.NON_FINITE,
                                residual=float('nan'), iterations=iteration)
        residual = float(np.max(np.abs(residual_vec)))
        logger.debug(f'Newton iteration {iteration}: residual '
                     f'{residual:.3e}')
        if residual <= newton_tol:
            return EquilibriumRecord(state=u, layout=model.layout,
                                     residual=residual,
                                     iterations=iteration)
        if iteration == max_iter:
            break

        try:
            step = model.jacobian_handle(u).solve(-residual_vec)
        except np.linalg.LinAlgError:
            raise NewtonFailure(NewtonFailure.Reason.SINGULAR_JACOBIAN,
                                residual=residual, iterations=iteration)
        if not np.all(np.isfinite(step)):
            raise NewtonFailure(NewtonFailure.Reason.SINGULAR_JACOBIAN,
                                residual=residual, iterations=iteration)

        norm = np.linalg.norm(residual_vec)
        damping = 1.0
        for _ in range(MAX_HALVINGS + 1):
            candidate = u + damping * step
            try:
                with np.errstate(all='ignore'):
                    candidate_vec = model.rhs(candidate)
            except EvaluationError:
                candidate_vec = np.full_like(candidate, np.inf)
            if (np.all(np.isfinite(candidate_vec))
                    and np.linalg.norm(candidate_vec)
                    <= (1 - ARMIJO * damping) * norm):
                break
            damping /= 2
        else:
            raise NewtonFailure(NewtonFailure.Reason.LINE_SEARCH,
                                residual=residual, iterations=iteration)
        u, residual_vec = candidate, candidate_vec

    raise NewtonFailure(NewtonFailure.Reason.MAX_ITERATIONS,
                        residual=residual, iterations=max_iter)


def _state_of(model: Model, e: EquilibriumLike) -> np.ndarray:
    if isinstance(e, EquilibriumRecord):
        return model.check_state(e.state)
    return model.check_state(e)


def linearization(model: Model, e: EquilibriumLike,
                  newton_tol: float = NEWTON_TOL) -> LinearModel:
    """Return the frozen linearization ``v' = F'(e) v``.

    Raises:
        ContractViolation: If ``e`` is not an equilibrium.

    """
    state = _state_of(model, e)
    residual = float(np.max(np.abs(model.rhs(state))))
    if residual > newton_tol:
        raise ContractViolation(f'Not an equilibrium: residual '
                                f'{residual:.3g} > {newton_tol:.3g}.')
    return LinearModel(model.jacobian(state), layout=model.layout)


def linearized_flow_apply(model: Model, e: EquilibriumLike,
                          w: Union[StateVec, np.ndarray], T: float = 1.0,
                          cfg: Optional[IntegratorConfig] = None,
                          newton_tol: float = NEWTON_TOL) -> np.ndarray:
    """Return ``Phi_T'(e) w``, the variational equation solved up to T."""
    return flow_at(linearization(model, e, newton_tol), w, T, cfg)


def spectral_radius(model: Model, e: EquilibriumLike, T: float = 1.0,
                    power_tol: float = POWER_TOL,
                    max_pi_iter: int = MAX_POWER_ITER,
                    cfg: Optional[IntegratorConfig] = None,
                    start: Optional[np.ndarray] = None,
                    newton_tol: float = NEWTON_TOL) \
        -> Tuple[float, np.ndarray]:
    """Estimate the spectral radius of ``Phi_T'(e)`` by power iteration.

    Iterates are normalized in sup norm. The estimate at each step is the
    Rayleigh-type ratio ``|<w, L w>| / <w, w>``. Iteration stops when two
    successive estimates agree to ``power_tol`` (relative) and the eigen
    residual ``|L w - rho w|`` is below ``RESIDUAL_FACTOR * power_tol``
    relative to ``|L w|``, both in sup norm.

    Args:
        model: The model.
        e: The equilibrium.
        T: The horizon, >= 1.
        power_tol: Relative convergence threshold.
        max_pi_iter: Largest number of iterations.
        cfg: Integrator settings for the linearized flow.
        start: First iterate. Defaults to the all-ones vector.
        newton_tol: Residual threshold for ``e``.

    Returns:
        rho and the final iterate, scaled to unit sup norm with its largest
        entry positive.

    Raises:
        SpectralError: On non-convergence (typically a complex dominant pair;
            retrying with a larger T is the usual remedy).

    """
    if T < 1:
        raise ContractViolation(f'T must be >= 1, got {T}.')
    linear = linearization(model, e, newton_tol)
    w = (np.ones(linear.size) if start is None
         else np.asarray(start, dtype=float).copy())
    w /= np.max(np.abs(w))

    previous = None
    estimate = float('nan')
    for iteration in range(1, max_pi_iter + 1):
        image = flow_at(linear, w, T, cfg)
        scale = float(np.max(np.abs(image))) if image.size else 0.0
        if not np.all(np.isfinite(image)) or scale == 0.0:
            raise SpectralError(SpectralError.Reason.NON_FINITE,
                                estimate=estimate, iterations=iteration)
        estimate = abs(float(w @ image)) / float(w @ w)
        residual = float(np.max(np.abs(image - estimate * w))) / scale
        w = image / scale
        if (previous is not None
                and abs(estimate - previous) <= power_tol * estimate
                and residual <= RESIDUAL_FACTOR * power_tol):
            logger.debug(f'Power iteration converged in {iteration} '
                         f'iterations: rho={estimate:.10g}')
            if w[np.argmax(np.abs(w))] < 0:
                w = -w
            return estimate, w
        previous = estimate

    raise SpectralError(SpectralError.Reason.NO_CONVERGENCE,
                        estimate=estimate, iterations=max_pi_iter)


def classify_stability(rho: float, neutral_band: float = NEUTRAL_BAND) \
        -> Stability:
    """Return the stability class of a spectral radius."""
    if not rho > 0:
        raise ContractViolation(f'rho must be positive, got {rho}.')
    if rho < 1 - neutral_band:
        return Stability.LINEARLY_STABLE
    if rho > 1 + neutral_band:
        return Stability.LINEARLY_UNSTABLE
    return Stability.NEUTRALLY_STABLE


def in_stable_set(record: EquilibriumRecord) -> bool:
    """Return whether the equilibrium belongs to E_s (not linearly unstable).

    Raises:
        ContractViolation: If the record was not analyzed.

    """
    if record.stability is None:
        raise ContractViolation('Record has no stability class.')
    return record.stability is not Stability.LINEARLY_UNSTABLE


def _strongly_connected(pattern: sps.spmatrix) -> bool:
    n_components, _ = connected_components(pattern, directed=True,
                                           connection='strong')
    return n_components == 1


def check_irreducible(model: Model, e: EquilibriumLike, T: float = 1.0,
                      order: Optional[ConeOrder] = None,
                      principal_vector: Optional[np.ndarray] = None,
                      cfg: Optional[IntegratorConfig] = None,
                      seed: int = 0, tol: float = 1e-12) -> bool:
    """Test the strong positivity of ``Phi_T'(e)``.

    Two signals are required:

    1. the principal eigenvector, sign normalized, is above ``order.eta`` in
       every sign-adjusted coordinate;
    2. positive vectors are mapped to strongly positive images. Small systems
       are tested with every basis direction. Larger ones are tested with up
       to 32 random sparse positive vectors, whose images must stay
       nonnegative, and the sign-adjusted Jacobian is certified Metzler with
       a strongly connected coupling graph, which makes ``exp(T J)``
       entrywise positive.

    Args:
        model: The model.
        e: The equilibrium.
        T: The horizon.
        order: The order. Defaults to the standard orthant.
        principal_vector: Precomputed dominant eigenvector, if any.
        cfg: Integrator settings of the linearized flow.
        seed: Seed of the random test vectors.
        tol: Tolerance of the sign tests on the Jacobian.

    Returns:
        Whether ``e`` is irreducible.

    """
    order = order or ConeOrder.standard(model.species)
    linear = linearization(model, e)
    signs = order.sign_vector(linear.size)

    if principal_vector is None:
        _, principal_vector = spectral_radius(model, e, T=T, cfg=cfg,
                                              start=signs)
    adjusted = signs * principal_vector
    if adjusted.sum() < 0:
        adjusted = -adjusted
    adjusted /= np.max(np.abs(adjusted))
    if np.min(adjusted) < order.eta:
        logger.debug('Principal vector is not strongly positive.')
        return False

    if linear.size <= MAX_TEST_VECTORS:
        for k in range(linear.size):
            direction = np.zeros(linear.size)
            direction[k] = signs[k]
            image = signs * flow_at(linear, direction, T, cfg)
            if np.min(image) <= order.eta * np.max(np.abs(image)):
                logger.debug(f'Direction {k} has a non-positive image.')
                return False
        return True

    rng = np.random.default_rng(seed)
    for _ in range(MAX_TEST_VECTORS):
        direction = np.zeros(linear.size)
        support = rng.choice(linear.size, size=max(1, linear.size // 16),
                             replace=False)
        direction[support] = rng.uniform(0.5, 1.0, size=support.size)
        image = signs * flow_at(linear, signs * direction, T, cfg)
        if np.min(image) < -tol * np.max(np.abs(image)):
            return False

    adjusted_jac = sps.diags(signs) @ linear.matrix @ sps.diags(signs)
    off_diagonal = (adjusted_jac - sps.diags(adjusted_jac.diagonal())).tocsr()
    if off_diagonal.nnz and off_diagonal.data.min() < -tol:
        logger.debug('Linearization is not cooperative.')
        return False
    pattern = (off_diagonal > tol).astype(float)
    return _strongly_connected(pattern)


@dc.dataclass
class EquilibriumDB(object):
    """Equilibria found so far, pairwise more than ``match_radius`` apart.

    Equilibrium ids are indices into ``records``.
    """

    match_radius: float = MATCH_RADIUS
    records: List[EquilibriumRecord] = dc.field(default_factory=list)

    def __len__(self) -> int:
        """Return the number of equilibria."""
        return len(self.records)

    def __iter__(self) -> Iterator[EquilibriumRecord]:
        """Iterate over the records, in id order."""
        return iter(self.records)

    def __getitem__(self, index: int) -> EquilibriumRecord:
        """Return the record with id ``index``."""
        return self.records[index]

    def nearest(self, state: np.ndarray) -> Tuple[Optional[int], float]:
        """Return the id of the nearest equilibrium and its sup distance."""
        if not self.records:
            return None, float('inf')
        state = np.asarray(state, dtype=float).ravel()
        distances = [float(np.max(np.abs(r.state - state)))
                     if r.state.size == state.size else float('inf')
                     for r in self.records]
        index = int(np.argmin(distances))
        return index, distances[index]

    def find(self, state: np.ndarray) -> Optional[int]:
        """Return the id of a stored equilibrium within the match radius."""
        index, distance = self.nearest(state)
        return index if distance <= self.match_radius else None

    def register(self, record: EquilibriumRecord) -> int:
        """Add ``record``, or merge it into a match with the smaller residual.

        Returns:
            The id of the stored equilibrium.

        """
        index = self.find(record.state)
        if index is None:
            self.records.append(record)
            logger.debug(f'Registered equilibrium {len(self.records) - 1}.')
            return len(self.records) - 1
        stored = self.records[index]
        if record.residual < stored.residual:
            if not record.complete and stored.complete:
                record = dc.replace(
                    record, horizon=stored.horizon, rho=stored.rho,
                    stability=stored.stability,
                    principal_vector=stored.principal_vector,
                    irreducible=stored.irreducible
                )
            self.records[index] = record
        elif record.complete and not stored.complete:
            self.records[index] = dc.replace(
                stored, horizon=record.horizon, rho=record.rho,
                stability=record.stability,
                principal_vector=record.principal_vector,
                irreducible=record.irreducible
            )
        return index

    def snapshot(self) -> EquilibriumDB:
        """Return a shallow copy that later registrations do not affect."""
        return EquilibriumDB(match_radius=self.match_radius,
                             records=list(self.records))

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-friendly representation."""
        return {
            'match_radius': self.match_radius,
            'equilibria': [dict(id=i, **r.to_dict())
                           for i, r in enumerate(self.records)],
        }

    def to_json(self) -> str:
        """Return the JSON export."""
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def register(db: EquilibriumDB, record: EquilibriumRecord) -> int:
    """Register ``record`` in ``db`` and return its id."""
    return db.register(record)


def analyze_equilibrium(model: Model, record: EquilibriumRecord,
                        T: float = 1.0, order: Optional[ConeOrder] = None,
                        neutral_band: float = NEUTRAL_BAND,
                        power_tol: float = POWER_TOL,
                        max_pi_iter: int = MAX_POWER_ITER,
                        cfg: Optional[IntegratorConfig] = None) \
        -> EquilibriumRecord:
    """Fill the stability fields of a partial record.

    A non-converged power iteration is retried once with T doubled.

    Raises:
        SpectralError: If the retry fails as well.

    """
    order = order or ConeOrder.standard(model.species)
    start = order.sign_vector(model.size)
    try:
        rho, vector = spectral_radius(model, record, T=T,
                                      power_tol=power_tol,
                                      max_pi_iter=max_pi_iter, cfg=cfg,
                                      start=start)
    except SpectralError as e:
        logger.warning(f'{e}; retrying with T={2 * T:g}.')
        T = 2 * T
        rho, vector = spectral_radius(model, record, T=T,
                                      power_tol=power_tol,
                                      max_pi_iter=max_pi_iter, cfg=cfg,
                                      start=start)
    irreducible = check_irreducible(model, record, T=T, order=order,
                                    principal_vector=vector, cfg=cfg)
    return dc.replace(record, horizon=T, rho=rho,
                      stability=classify_stability(rho, neutral_band),
                      principal_vector=vector, irreducible=irreducible)


def _constant_roots(model: Union[ODEModel, RDModel],
                    scalar_seeds: Sequence[float], newton_tol: float,
                    max_iter: int) -> List[np.ndarray]:
    network = ODEModel(model.reaction)
    roots: List[np.ndarray] = []
    for s in scalar_seeds:
        try:
            root = find_equilibrium(network, np.full(network.size, float(s)),
                                    newton_tol=newton_tol,
                                    max_iter=max_iter).state
        except NewtonFailure as e:
            logger.debug(f'No constant equilibrium from seed {s}: {e}')
            continue
        if not any(np.max(np.abs(root - r)) <= MATCH_RADIUS for r in roots):
            roots.append(root)
    return roots


def equilibrium_seeds(model: Model,
                      scalar_seeds: Sequence[float] = (-2, -1, 0, 1, 2),
                      modes: Sequence[int] = (1, 2, 3),
                      amplitude: float = 0.5,
                      newton_tol: float = NEWTON_TOL,
                      max_iter: int = MAX_NEWTON_ITER) -> List[np.ndarray]:
    """Return the Newton seeds of an equilibrium sweep.

    Constants solving ``f(c) = 0`` come first (found by Newton on the
    reaction alone from each scalar seed), then for reaction-diffusion models
    the profiles ``c + amplitude cos(k pi x / L)`` for every mode k.
    """
    if not isinstance(model, (ODEModel, RDModel)):
        return [np.full(model.size, float(s)) for s in scalar_seeds]
    constants = _constant_roots(model, scalar_seeds, newton_tol, max_iter)
    if not isinstance(model, RDModel):
        return constants
    grid = model.grid
    x = grid.coordinates()[0]
    seeds = [np.repeat(c, grid.size) for c in constants]
    for c in constants:
        for k in modes:
            profile = amplitude * np.cos(k * np.pi * x / grid.lengths[0])
            seeds.append((c[:, None] + profile[None, :]).ravel())
    return seeds


def sweep_equilibria(model: Model,
                     scalar_seeds: Sequence[float] = (-2, -1, 0, 1, 2),
                     modes: Sequence[int] = (1, 2, 3),
                     amplitude: float = 0.5,
                     newton_tol: float = NEWTON_TOL,
                     max_iter: int = MAX_NEWTON_ITER,
                     db: Optional[EquilibriumDB] = None) -> EquilibriumDB:
    """Run Newton from every sweep seed and register what converges.

    Records are registered in seed order; they are left partial.
    """
    db = db if db is not None else EquilibriumDB()
    seeds = equilibrium_seeds(model, scalar_seeds=scalar_seeds, modes=modes,
                              amplitude=amplitude, newton_tol=newton_tol,
                              max_iter=max_iter)
    for index, seed in enumerate(seeds):
        try:
            record = find_equilibrium(model, seed, newton_tol=newton_tol,
                                      max_iter=max_iter)
        except NewtonFailure as e:
            logger.debug(f'Seed {index} failed: {e}')
            continue
        db.register(record)
    logger.info(f'Equilibrium sweep: {len(db)} equilibria from '
                f'{len(seeds)} seeds.')
    return db


def analyze_all(model: Model, db: EquilibriumDB,
                ids: Optional[Iterable[int]] = None, **kwargs) -> None:
    """Analyze the partial records of ``db`` in place.

    Args:
        model: The model.
        db: The database.
        ids: The records to analyze. Defaults to all of them.
        **kwargs: Passed to :func:`analyze_equilibrium`.

    """
    for index in sorted(set(range(len(db)) if ids is None else ids)):
        record = db[index]
        if not record.complete:
            db.records[index] = analyze_equilibrium(model, record, **kwargs)
