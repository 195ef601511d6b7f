# Copyright (C) 2019 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""Method-of-lines reaction-diffusion models with Neumann boundaries."""
from __future__ import annotations

import dataclasses as dc
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sps
from scipy.sparse.csgraph import connected_components

from monolab.dsl import ReactionField
from monolab.models import Model, ModelKind
from monolab.order import ContractViolation

logger = logging.getLogger(__name__)

# Off-diagonal entries above this count as coupling, below minus it as
# violations of cooperativity
COUPLING_TOL = 1e-12


@dc.dataclass(frozen=True)
class Grid(object):
    """Uniform grid on an interval or a rectangle.

    Attributes:
        lengths: Extent of the domain along each axis.
        nodes: Number of nodes along each axis, end points included.

    """

    lengths: Tuple[float, ...] = (1.0,)
    nodes: Tuple[int, ...] = (101,)

    def __post_init__(self) -> None:
        """Validate the grid."""
        lengths = tuple(float(x) for x in self.lengths)
        nodes = tuple(int(m) for m in self.nodes)
        object.__setattr__(self, 'lengths', lengths)
        object.__setattr__(self, 'nodes', nodes)
        if len(lengths) not in (1, 2) or len(nodes) != len(lengths):
            raise ContractViolation(f'Grids are 1-D or 2-D, got lengths '
                                    f'{lengths} and nodes {nodes}.')
        if any(m < 3 for m in nodes):
            raise ContractViolation(f'Need at least 3 nodes per axis, got '
                                    f'{nodes}.')
        if any(not length > 0 for length in lengths):
            raise ContractViolation(f'Lengths must be positive, got '
                                    f'{lengths}.')

    @property
    def dimension(self) -> int:
        """Return the spatial dimension."""
        return len(self.nodes)

    @property
    def spacing(self) -> Tuple[float, ...]:
        """Return the mesh width h = L / (m - 1) along each axis."""
        return tuple(length / (m - 1)
                     for length, m in zip(self.lengths, self.nodes))

    @property
    def size(self) -> int:
        """Return the total number of nodes."""
        return int(np.prod(self.nodes))

    def axes(self) -> List[np.ndarray]:
        """Return the node coordinates along each axis."""
        return [np.linspace(0.0, length, m)
                for length, m in zip(self.lengths, self.nodes)]

    def coordinates(self) -> List[np.ndarray]:
        """Return flat coordinate arrays, one per axis, in node order."""
        return [c.ravel() for c in np.meshgrid(*self.axes(), indexing='ij')]

    def trapezoid_weights(self) -> np.ndarray:
        """Return the trapezoidal quadrature weights of the nodes."""
        weights = []
        for h, m in zip(self.spacing, self.nodes):
            w = np.full(m, h)
            w[[0, -1]] = h / 2
            weights.append(w)
        if self.dimension == 1:
            return weights[0]
        return np.outer(weights[0], weights[1]).ravel()


def _laplacian_1d(m: int, h: float) -> sps.csr_matrix:
    a = 1.0 / (h * h)
    main = np.full(m, -2.0 * a)
    lower = np.full(m - 1, a)
    upper = np.full(m - 1, a)
    # mirrored ghost nodes double the inward neighbour at both ends
    upper[0] = 2.0 * a
    lower[-1] = 2.0 * a
    return sps.diags([lower, main, upper], offsets=[-1, 0, 1],
                     shape=(m, m), format='csr')


def laplacian_matrix(grid: Grid) -> sps.csr_matrix:
    """Return the sparse Neumann Laplacian on ``grid``."""
    if grid.dimension == 1:
        return _laplacian_1d(grid.nodes[0], grid.spacing[0])
    (m1, m2), (h1, h2) = grid.nodes, grid.spacing
    lap1, lap2 = _laplacian_1d(m1, h1), _laplacian_1d(m2, h2)
    return (sps.kron(lap1, sps.eye(m2)) + sps.kron(sps.eye(m1), lap2)).tocsr()


def _second_difference(u: np.ndarray, h: float, axis: int) -> np.ndarray:
    padded = np.moveaxis(u, axis, 0)
    ghost = np.concatenate([padded[1:2], padded, padded[-2:-1]])
    out = (ghost[:-2] - 2.0 * ghost[1:-1] + ghost[2:]) / (h * h)
    return np.moveaxis(out, 0, axis)


def neumann_laplacian(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Apply the discrete Laplacian with homogeneous Neumann conditions.

    Interior nodes use the standard second difference; boundary nodes use a
    mirrored ghost node, e.g. ``2 (u_1 - u_0) / h^2`` at the left end. In 2-D
    the stencil is the sum of the two axis stencils.

    Args:
        grid: The grid.
        u: Nodal values of one species, in node order.

    Returns:
        The nodal values of the Laplacian.

    """
    arr = np.asarray(u, dtype=float)
    if arr.size != grid.size:
        raise ContractViolation(f'Expected {grid.size} nodal values, got '
                                f'{arr.size}.')
    arr = arr.reshape(grid.nodes)
    out = sum(_second_difference(arr, h, axis)
              for axis, h in enumerate(grid.spacing))
    return np.asarray(out).ravel()


class RDModel(Model):
    """Reaction-diffusion system ``u_t = D Lap u + f(u)`` on a grid."""

    kind = ModelKind.RD

    def __init__(self, grid: Grid, diffusion: Sequence[float],
                 reaction: ReactionField) -> None:
        """Initialize the model.

        Args:
            grid: The spatial grid.
            diffusion: The diagonal of D, one coefficient per species.
            reaction: The reaction term f.

        """
        diffusion = tuple(float(d) for d in diffusion)
        if reaction.arity != len(diffusion):
            raise ContractViolation(f'Reaction has arity {reaction.arity} '
                                    f'but {len(diffusion)} diffusion '
                                    f'coefficients were given.')
        if any(d < 0 for d in diffusion):
            raise ContractViolation(f'Diffusion coefficients must be >= 0, '
                                    f'got {diffusion}.')
        super().__init__(layout=(reaction.arity, grid.size))
        self.grid = grid
        self.diffusion = diffusion
        self.reaction = reaction
        self._laplacian = laplacian_matrix(grid)
        self._linear = sps.block_diag(
            [d * self._laplacian for d in diffusion], format='csr'
        )

    def laplacian(self, u: np.ndarray, species: int) -> np.ndarray:
        """Return the Laplacian of one species of the state ``u``."""
        return neumann_laplacian(self.grid, self.nodal(u)[species])

    def nodal(self, u: np.ndarray) -> np.ndarray:
        """Return the (species, nodes) view of a flat state."""
        return np.asarray(u, dtype=float).reshape(self.layout)

    def rhs(self, u: np.ndarray) -> np.ndarray:
        """Return ``D Lap u + f(u)``."""
        return self._linear @ u + self.nonlinear_part(u)

    def linear_part(self) -> sps.csr_matrix:
        """Return the block-diagonal diffusion operator."""
        return self._linear

    def nonlinear_part(self, u: np.ndarray) -> np.ndarray:
        """Return the nodewise reaction term."""
        return self.reaction.eval(self.nodal(u)).ravel()

    def reaction_jacobian(self, u: np.ndarray) -> sps.csr_matrix:
        """Return the block matrix of nodewise reaction Jacobians."""
        jac = self.reaction.jacobian(self.nodal(u))
        n = self.species
        blocks = [[sps.diags(jac[:, i, j]) for j in range(n)]
                  for i in range(n)]
        return sps.bmat(blocks, format='csr')

    def jacobian(self, u: np.ndarray) -> sps.csr_matrix:
        """Return the diffusion stencil plus the reaction blocks."""
        return (self._linear + self.reaction_jacobian(u)).tocsr()

    def reaction_lipschitz(self, u: np.ndarray) -> float:
        """Return the largest row-sum norm of the nodal reaction Jacobians."""
        jac = self.reaction.jacobian(self.nodal(u))
        return float(np.abs(jac).sum(axis=2).max())

    def describe(self) -> Dict[str, Any]:
        """Return a JSON-friendly description."""
        return {**super().describe(), 'reaction': self.reaction.source,
                'diffusion': list(self.diffusion),
                'grid': {'lengths': list(self.grid.lengths),
                         'nodes': list(self.grid.nodes)}}


def assemble(grid: Grid, diffusion: Sequence[float],
             reaction: ReactionField) -> RDModel:
    """Assemble the method-of-lines model ``D Lap u + f(u)``."""
    model = RDModel(grid=grid, diffusion=diffusion, reaction=reaction)
    logger.debug(f'Assembled RD model with layout {model.layout}.')
    return model


@dc.dataclass(frozen=True)
class Witness(object):
    """Location of the first failed hypothesis.

    Attributes:
        entry: One-based (row, column) of the Jacobian entry, if any.
        point: The sampled species values, if any.
        message: Human readable description.

    """

    message: str
    entry: Optional[Tuple[int, int]] = None
    point: Optional[Tuple[float, ...]] = None


@dc.dataclass(frozen=True)
class CooperativityReport(object):
    """Result of the sampled cooperativity / irreducibility audit."""

    cooperative: bool
    irreducible: bool
    samples_checked: int
    box: Tuple[Tuple[float, float], ...]
    witness: Optional[Witness] = None

    def __post_init__(self) -> None:
        """Check that a witness is present iff a flag is false."""
        if (self.witness is None) != (self.cooperative and self.irreducible):
            raise ContractViolation('A witness must be present iff a '
                                    'hypothesis fails.')


def coupling_graph_is_strongly_connected(pattern: np.ndarray) -> bool:
    """Return whether the directed graph of a boolean pattern is connected."""
    n_components, _ = connected_components(
        sps.csr_matrix(pattern.astype(float)), directed=True,
        connection='strong'
    )
    return n_components == 1


def check_cooperative_irreducible(
        reaction: ReactionField, box: Sequence[Tuple[float, float]],
        samples: int, seed: int = 0,
        signs: Optional[Sequence[int]] = None
) -> CooperativityReport:
    """Audit the cooperativity and irreducibility hypotheses on a box.

    Args:
        reaction: The reaction term f.
        box: One (low, high) interval per species.
        samples: Number of uniformly sampled points.
        seed: Seed of the sampler.
        signs: Orthant signs; the Jacobian is checked after the change of
            variables ``u -> S u``. Defaults to the standard orthant.

    Returns:
        The report.

    Raises:
        EvaluationError: If f or its Jacobian is not finite at a sample.

    """
    if samples < 1:
        raise ContractViolation(f'samples must be >= 1, got {samples}.')
    n = reaction.arity
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    if len(box) != n:
        raise ContractViolation(f'Box has {len(box)} intervals for arity '
                                f'{n}.')
    rng = np.random.default_rng(seed)
    low, high = np.array(box).T
    points = rng.uniform(low, high, size=(samples, n)).T
    jac = reaction.jacobian(points)
    s = np.asarray(signs if signs is not None else (1,) * n, dtype=float)
    jac = jac * s[None, :, None] * s[None, None, :]

    off_diagonal = ~np.eye(n, dtype=bool)
    pattern = np.any(jac > COUPLING_TOL, axis=0) & off_diagonal
    irreducible = coupling_graph_is_strongly_connected(pattern)

    witness = None
    violations = (jac < -COUPLING_TOL) & off_diagonal
    if np.any(violations):
        sample, i, j = np.argwhere(violations)[0]
        witness = Witness(
            message=f'df{i + 1}/du{j + 1} = {jac[sample, i, j]:.3g} < 0',
            entry=(int(i) + 1, int(j) + 1),
            point=tuple(float(p) for p in points[:, sample])
        )
        logger.info(f'Cooperativity fails: {witness.message}')
    elif not irreducible:
        witness = Witness(message='The coupling graph of the Jacobian is '
                                  'not strongly connected.')
    return CooperativityReport(cooperative=not np.any(violations),
                               irreducible=irreducible,
                               samples_checked=samples, box=box,
                               witness=witness)
