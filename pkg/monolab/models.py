# Copyright (C) 2019 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""Vector fields with exact Jacobians."""
from __future__ import annotations

import abc
import enum
import logging
from typing import Any, Dict, Optional, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from monolab.dsl import ReactionField
from monolab.order import ContractViolation, Layout

logger = logging.getLogger(__name__)

# Jacobians up to this size are factored densely
DENSE_LIMIT = 64


@enum.unique
class ModelKind(str, enum.Enum):
    """Kind of model, used to pick the default time integrator."""

    ODE = 'ode'
    RD = 'rd'


class JacobianHandle(object):
    """Matrix-vector products and linear solves with a fixed Jacobian."""

    def __init__(self, matrix: Union[sps.spmatrix, np.ndarray]) -> None:
        """Initialize the handle.

        Args:
            matrix: The square Jacobian matrix.

        """
        self._matrix = sps.csr_matrix(matrix)
        self._solver: Optional[Any] = None

    @property
    def size(self) -> int:
        """Return the dimension of the matrix."""
        return self._matrix.shape[0]

    @property
    def matrix(self) -> sps.csr_matrix:
        """Return the sparse matrix."""
        return self._matrix

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """Return ``J v``."""
        return self._matrix @ v

    def _factor(self) -> Any:
        if self.size <= DENSE_LIMIT:
            lu, piv = scipy.linalg.lu_factor(self._matrix.toarray(),
                                             check_finite=True)
            if np.any(np.diag(lu) == 0):
                raise np.linalg.LinAlgError('Singular Jacobian.')
            return lambda b: scipy.linalg.lu_solve((lu, piv), b)
        try:
            return spla.splu(self._matrix.tocsc()).solve
        except RuntimeError as e:
            raise np.linalg.LinAlgError(str(e)) from e

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Return ``x`` with ``J x = b``.

        Raises:
            numpy.linalg.LinAlgError: If the matrix is singular.

        """
        if self._solver is None:
            self._solver = self._factor()
        return self._solver(b)


class Model(abc.ABC):
    """Autonomous vector field ``u' = F(u)`` on a flat state vector."""

    kind: ModelKind = ModelKind.ODE

    def __init__(self, layout: Layout) -> None:
        """Initialize the model.

        Args:
            layout: (species, nodes) of the flat state vector.

        """
        species, nodes = layout
        if species < 1 or nodes < 1:
            raise ContractViolation(f'Invalid layout {layout}.')
        self.layout: Layout = (int(species), int(nodes))

    @property
    def species(self) -> int:
        """Return the number of species."""
        return self.layout[0]

    @property
    def nodes(self) -> int:
        """Return the number of grid nodes."""
        return self.layout[1]

    @property
    def size(self) -> int:
        """Return the length of the flat state vector."""
        return self.layout[0] * self.layout[1]

    def check_state(self, u: Any) -> np.ndarray:
        """Return ``u`` as a flat float array, checking its size."""
        arr = np.asarray(getattr(u, 'data', u), dtype=float).ravel()
        if arr.size != self.size:
            raise ContractViolation(f'State has {arr.size} entries, model '
                                    f'layout {self.layout} needs '
                                    f'{self.size}.')
        return arr

    @abc.abstractmethod
    def rhs(self, u: np.ndarray) -> np.ndarray:
        """Return ``F(u)``."""

    @abc.abstractmethod
    def jacobian(self, u: np.ndarray) -> sps.csr_matrix:
        """Return the sparse Jacobian ``F'(u)``."""

    def jacobian_handle(self, u: np.ndarray) -> JacobianHandle:
        """Return a matvec/solve handle for ``F'(u)``."""
        return JacobianHandle(self.jacobian(u))

    def linear_part(self) -> sps.csr_matrix:
        """Return the stiff linear part A of ``F(u) = A u + R(u)``."""
        return sps.csr_matrix((self.size, self.size))

    def nonlinear_part(self, u: np.ndarray) -> np.ndarray:
        """Return the remainder R(u) of ``F(u) = A u + R(u)``."""
        return self.rhs(u)

    def reaction_lipschitz(self, u: np.ndarray) -> float:
        """Estimate the Lipschitz constant of R near ``u`` (row-sum norm)."""
        jac = self.jacobian(u) - self.linear_part()
        return float(abs(jac).sum(axis=1).max()) if jac.nnz else 0.0

    def describe(self) -> Dict[str, Any]:
        """Return a JSON-friendly description."""
        return {'kind': self.kind.value, 'layout': list(self.layout)}


class ODEModel(Model):
    """Finite network ``u' = f(u)`` given by a reaction field."""

    def __init__(self, reaction: ReactionField) -> None:
        """Initialize the model.

        Args:
            reaction: The vector field f.

        """
        super().__init__(layout=(reaction.arity, 1))
        self.reaction = reaction

    def rhs(self, u: np.ndarray) -> np.ndarray:
        """Return ``f(u)``."""
        return self.reaction.eval(u)

    def jacobian(self, u: np.ndarray) -> sps.csr_matrix:
        """Return ``f'(u)``."""
        return sps.csr_matrix(self.reaction.jacobian(u))

    def describe(self) -> Dict[str, Any]:
        """Return a JSON-friendly description."""
        return {**super().describe(), 'reaction': self.reaction.source}


class LinearModel(Model):
    """Linear system ``v' = A v``."""

    def __init__(self, matrix: Union[sps.spmatrix, np.ndarray],
                 layout: Optional[Layout] = None) -> None:
        """Initialize the model.

        Args:
            matrix: The square matrix A.
            layout: The layout of the state vector. Defaults to one node per
                coordinate.

        """
        mat = sps.csr_matrix(matrix)
        if mat.shape[0] != mat.shape[1]:
            raise ContractViolation(f'Matrix must be square, got '
                                    f'{mat.shape}.')
        layout = layout or (mat.shape[0], 1)
        super().__init__(layout=layout)
        if self.size != mat.shape[0]:
            raise ContractViolation(f'Layout {layout} does not match a '
                                    f'{mat.shape} matrix.')
        self.matrix = mat

    def rhs(self, u: np.ndarray) -> np.ndarray:
        """Return ``A u``."""
        return self.matrix @ u

    def jacobian(self, u: np.ndarray) -> sps.csr_matrix:
        """Return A."""
        return self.matrix

    def linear_part(self) -> sps.csr_matrix:
        """Return A."""
        return self.matrix

    def nonlinear_part(self, u: np.ndarray) -> np.ndarray:
        """Return zero."""
        return np.zeros_like(u)

    def reaction_lipschitz(self, u: np.ndarray) -> float:
        """Return zero, the system has no reaction part."""
        return 0.0
