# Copyright (C) 2019 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""Orthant orders, comparison predicates and segments of the state space."""
from __future__ import annotations

import dataclasses as dc
import logging
from typing import List, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

Layout = Tuple[int, int]


class ContractViolation(ValueError):
    """Exception raised when the precondition of an operation is violated."""


@dc.dataclass(frozen=True, eq=False)
class StateVec(object):
    """A point of the discretized state space.

    Attributes:
        data: Flat array of reals, species-major: ``data.reshape(layout)``
            gives one row of nodal values per species.
        layout: (number of species, number of nodes).

    """

    data: np.ndarray
    layout: Layout

    def __post_init__(self) -> None:
        """Validate the layout and the entries."""
        data = np.asarray(self.data, dtype=float).ravel()
        object.__setattr__(self, 'data', data)
        species, nodes = self.layout
        if species < 1 or nodes < 1 or species * nodes != data.size:
            raise ContractViolation(f'Layout {self.layout} does not match '
                                    f'{data.size} entries.')
        if not np.all(np.isfinite(data)):
            raise ContractViolation('StateVec entries must be finite.')

    @classmethod
    def of(cls, data: Union[StateVec, Sequence[float], np.ndarray],
           species: int = 1) -> StateVec:
        """Wrap an array, inferring the number of nodes from ``species``."""
        if isinstance(data, StateVec):
            return data
        arr = np.asarray(data, dtype=float).ravel()
        if species < 1 or arr.size % species:
            raise ContractViolation(f'{arr.size} entries cannot be split '
                                    f'into {species} species.')
        return cls(data=arr, layout=(species, arr.size // species))

    def nodal(self) -> np.ndarray:
        """Return the (species, nodes) view of the data."""
        return self.data.reshape(self.layout)

    def __len__(self) -> int:
        """Return the number of coordinates."""
        return self.data.size


StateLike = Union[StateVec, Sequence[float], np.ndarray]


@dc.dataclass(frozen=True)
class ConeOrder(object):
    """Partial order generated by a sign-reoriented nonnegative orthant.

    ``x <= y`` iff ``signs[i] * (y - x) >= 0`` on every node of species i.

    Attributes:
        signs: One entry in {+1, -1} per species.
        eta: Margin used for the strong relation ``<<``.

    """

    signs: Tuple[int, ...] = (1,)
    eta: float = 1e-9

    def __post_init__(self) -> None:
        """Validate the sign pattern and the margin."""
        signs = tuple(int(s) for s in self.signs)
        object.__setattr__(self, 'signs', signs)
        if not signs or any(s not in (1, -1) for s in signs):
            raise ContractViolation(f'signs must be a nonempty sequence of '
                                    f'+1/-1, but got {self.signs}.')
        if not self.eta > 0:
            raise ContractViolation(f'eta must be positive, got {self.eta}.')

    @classmethod
    def standard(cls, species: int, eta: float = 1e-9) -> ConeOrder:
        """Return the order of the nonnegative orthant."""
        return cls(signs=(1,) * species, eta=eta)

    @property
    def species(self) -> int:
        """Return the number of species the order is defined for."""
        return len(self.signs)

    def sign_vector(self, size: int) -> np.ndarray:
        """Return the per-coordinate signs for a flat state of ``size``."""
        if size % self.species:
            raise ContractViolation(f'A state of size {size} does not fit '
                                    f'{self.species} species.')
        return np.repeat(np.asarray(self.signs, dtype=float),
                         size // self.species)

    def as_array(self, x: StateLike) -> np.ndarray:
        """Return the flat data of ``x``, checking it fits this order."""
        if isinstance(x, StateVec):
            if x.layout[0] != self.species:
                raise ContractViolation(f'State has {x.layout[0]} species, '
                                        f'order has {self.species}.')
            return x.data
        arr = np.asarray(x, dtype=float).ravel()
        self.sign_vector(arr.size)
        return arr

    def adjust(self, x: StateLike) -> np.ndarray:
        """Apply the change of variables ``u -> S u`` (S = diag(signs))."""
        arr = self.as_array(x)
        return self.sign_vector(arr.size) * arr

    def difference(self, x: StateLike, y: StateLike) -> np.ndarray:
        """Return the sign-adjusted difference ``S (y - x)``."""
        x_arr, y_arr = self.as_array(x), self.as_array(y)
        if x_arr.size != y_arr.size:
            raise ContractViolation(f'Layout mismatch: {x_arr.size} vs '
                                    f'{y_arr.size} coordinates.')
        if (isinstance(x, StateVec) and isinstance(y, StateVec)
                and x.layout != y.layout):
            raise ContractViolation(f'Layout mismatch: {x.layout} vs '
                                    f'{y.layout}.')
        return self.sign_vector(x_arr.size) * (y_arr - x_arr)

    def leq(self, x: StateLike, y: StateLike) -> bool:
        """Return whether ``x <= y``."""
        return bool(np.all(self.difference(x, y) >= 0))

    def lt(self, x: StateLike, y: StateLike) -> bool:
        """Return whether ``x < y``, i.e. ``x <= y`` and ``x != y``."""
        diff = self.difference(x, y)
        return bool(np.all(diff >= 0) and np.any(diff > 0))

    def ll(self, x: StateLike, y: StateLike) -> bool:
        """Return whether ``x << y`` (every coordinate above ``eta``)."""
        return bool(np.all(self.difference(x, y) >= self.eta))


def cone_leq(x: StateLike, y: StateLike, order: ConeOrder) -> bool:
    """Return whether ``x <= y`` in ``order``."""
    return order.leq(x, y)


def cone_lt(x: StateLike, y: StateLike, order: ConeOrder) -> bool:
    """Return whether ``x < y`` in ``order``."""
    return order.lt(x, y)


def cone_ll(x: StateLike, y: StateLike, order: ConeOrder) -> bool:
    """Return whether ``x << y`` in ``order``."""
    return order.ll(x, y)


@dc.dataclass(frozen=True, eq=False)
class Segment(object):
    """The segment ``{x0 + t v : 0 <= t <= 1}`` with ``v > 0``.

    Attributes:
        base: The starting point x0.
        direction: The positive direction v.
        order: The order in which v must be positive.

    """

    base: np.ndarray
    direction: np.ndarray
    order: ConeOrder

    def __post_init__(self) -> None:
        """Check that the direction is positive in the order."""
        base = self.order.as_array(self.base)
        direction = self.order.as_array(self.direction)
        if base.size != direction.size:
            raise ContractViolation('Segment base and direction differ in '
                                    'size.')
        if not np.all(np.isfinite(base)) or not np.all(
                np.isfinite(direction)):
            raise ContractViolation('Segment entries must be finite.')
        if not self.order.lt(np.zeros_like(direction), direction):
            raise ContractViolation('Segment direction must be > 0 in the '
                                    'active order.')
        object.__setattr__(self, 'base', base)
        object.__setattr__(self, 'direction', direction)

    def point(self, t: float) -> np.ndarray:
        """Return ``x0 + t v``."""
        return self.base + t * self.direction


def segment_points(segment: Segment, n: int) -> List[StateVec]:
    """Return the N+1 equispaced quadrature nodes of the segment measure.

    Args:
        segment: The segment.
        n: The number of subintervals N.

    Returns:
        ``x0 + (k/N) v`` for k = 0..N, in increasing order.

    """
    if n < 1:
        raise ContractViolation(f'N must be >= 1, got {n}.')
    species = segment.order.species
    return [StateVec.of(segment.point(k / n), species=species)
            for k in range(n + 1)]


def _extremum(states: Sequence[StateLike], order: ConeOrder,
              lower: bool) -> StateVec:
    if len(states) == 0:
        raise ContractViolation('Cannot take the extremum of no states.')
    arrays = [order.as_array(s) for s in states]
    if len({a.size for a in arrays}) != 1:
        raise ContractViolation('States must share a layout.')
    signs = order.sign_vector(arrays[0].size)
    adjusted = np.stack(arrays) * signs
    extremum = adjusted.min(axis=0) if lower else adjusted.max(axis=0)
    return StateVec.of(signs * extremum, species=order.species)


def pointwise_inf(states: Sequence[StateLike], order: ConeOrder) -> StateVec:
    """Return the greatest lower bound of ``states`` in ``order``."""
    return _extremum(states, order, lower=True)


def pointwise_sup(states: Sequence[StateLike], order: ConeOrder) -> StateVec:
    """Return the least upper bound of ``states`` in ``order``."""
    return _extremum(states, order, lower=False)


def spatial_variation(state: StateLike, species: int) -> np.ndarray:
    """Return the sup-variation (max - min over nodes) of each species."""
    arr = StateVec.of(state, species=species).nodal()
    return arr.max(axis=1) - arr.min(axis=1)
