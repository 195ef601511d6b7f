# Copyright (C) 2019 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""Built-in models, available in configs as `!tanh2`, `!chafee`, `!rd2`."""
from __future__ import annotations

import logging
from typing import Any, ClassVar, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

import monolab.yaml as myaml
from monolab.discretize import Grid, assemble
from monolab.dsl import parse
from monolab.models import Model, ODEModel
from monolab.order import ConeOrder, Segment
from monolab.prevalence import FourierSampler, Sampler

logger = logging.getLogger(__name__)

TAG_PREFIX = '!'


def tanh_fixed_point(gain: float = 2.0) -> float:
    """Return the positive root of ``a = gain * tanh(a)``, for gain > 1."""
    if gain <= 1:
        raise ValueError(f'No positive root for gain {gain}.')
    return optimize.brentq(lambda a: a - gain * np.tanh(a), 1e-6, gain + 1,
                           xtol=1e-14)


class Fixture(myaml.YAMLRegistered, register_yaml=False):
    """A named model with the defaults its experiments use."""

    name: ClassVar[str]
    description: ClassVar[str]
    acceptance: ClassVar[str]

    @staticmethod
    def format_yaml_tag(subcls) -> str:
        """Return ``!<name>``."""
        return f'{TAG_PREFIX}{subcls.name}'

    def build(self) -> Model:
        """Return the model."""
        raise NotImplementedError

    def box(self) -> List[Tuple[float, float]]:
        """Return the per-species box used by audits and random samples."""
        return [(-2.0, 2.0)] * self.species

    @property
    def species(self) -> int:
        """Return the number of species."""
        raise NotImplementedError

    def segment(self, model: Model, order: ConeOrder) -> Segment:
        """Return the default segment, from -3 to 3 along the order."""
        signs = order.sign_vector(model.size)
        return Segment(base=-3.0 * signs, direction=6.0 * signs, order=order)

    def sampler(self) -> Optional[Sampler]:
        """Return the default initial data sampler of RD fixtures."""
        return None


class Tanh2(Fixture):
    """Two mutually activating species, ``ui' = -ui + gain tanh(uj)``."""

    name = 'tanh2'
    description = ('2-D cooperative ODE u1\' = -u1 + 2 tanh(u2), '
                   'u2\' = -u2 + 2 tanh(u1); bistable, saddle at 0')
    acceptance = ('3 equilibria, rho(0) = e, rho(+-a) = exp(1 - a^2/2), '
                  'ordered limit chain on the diagonal')

    def __init__(self, gain: float = 2.0) -> None:
        """Initialize the fixture."""
        self.gain = float(gain)

    @property
    def species(self) -> int:
        """Return the number of species."""
        return 2

    @property
    def source(self) -> str:
        """Return the reaction source."""
        return f'-u1 + {self.gain!r}*tanh(u2); -u2 + {self.gain!r}*tanh(u1)'

    def build(self) -> Model:
        """Return the ODE model."""
        return ODEModel(parse(self.source, arity=2))


class Chafee(Fixture):
    """Chafee-Infante equation ``u_t = d u_xx + u - u^3`` on ``[0, L]``."""

    name = 'chafee'
    description = ('Chafee-Infante u_t = d u_xx + u - u^3, Neumann, '
                   'd=0.01, 201 nodes on [0, 1]')
    acceptance = ('constants +-1 stable, 0 unstable, every nonconstant '
                  'equilibrium unstable, homogeneous convergence')

    def __init__(self, diffusion: float = 0.01, nodes: int = 201,
                 length: float = 1.0) -> None:
        """Initialize the fixture."""
        self.diffusion = float(diffusion)
        self.nodes = int(nodes)
        self.length = float(length)

    @property
    def species(self) -> int:
        """Return the number of species."""
        return 1

    def build(self) -> Model:
        """Return the method-of-lines model."""
        grid = Grid(lengths=(self.length,), nodes=(self.nodes,))
        return assemble(grid, (self.diffusion,), parse('u1 - u1^3', arity=1))

    def sampler(self) -> Optional[Sampler]:
        """Return small cosine perturbations of offsets of either sign.

        Offsets closer to 0 than the cosine sum give sign-changing data.
        """
        return FourierSampler(offset_range=(0.05, 1.3), amplitude=0.05,
                              symmetric_offsets=True)


class Rd2(Fixture):
    """Two diffusing species with the ``tanh2`` reaction."""

    name = 'rd2'
    description = ('2-species RD system with the tanh2 reaction, '
                   'd=(0.05, 0.05), 101 nodes on [0, 1]')
    acceptance = 'homogeneous convergence to the uniform equilibria +-(a, a)'

    def __init__(self, diffusion: Sequence[float] = (0.05, 0.05),
                 nodes: int = 101, length: float = 1.0,
                 gain: float = 2.0) -> None:
        """Initialize the fixture."""
        self.diffusion = tuple(float(d) for d in diffusion)
        self.nodes = int(nodes)
        self.length = float(length)
        self.gain = float(gain)

    @property
    def species(self) -> int:
        """Return the number of species."""
        return 2

    def build(self) -> Model:
        """Return the method-of-lines model."""
        grid = Grid(lengths=(self.length,), nodes=(self.nodes,))
        reaction = parse(Tanh2(gain=self.gain).source, arity=2)
        return assemble(grid, self.diffusion, reaction)

    def sampler(self) -> Optional[Sampler]:
        """Return the canonical Fourier sampler."""
        return FourierSampler(offset_range=(-1.0, 1.0), amplitude=0.2)


def available() -> Dict[str, type]:
    """Return the registered fixture classes by name."""
    return {tag[len(TAG_PREFIX):]: cls
            for tag, cls in myaml.get_yaml_tag_mapping(TAG_PREFIX).items()
            if issubclass(cls, Fixture)}


def get_fixture(name: str, params: Optional[Dict[str, Any]] = None) \
        -> Fixture:
    """Instantiate the fixture ``name`` with ``params``.

    Raises:
        KeyError: If there is no such fixture.

    """
    if name not in available():
        raise KeyError(name)
    fixture = myaml.construct(f'{TAG_PREFIX}{name}', params)
    assert isinstance(fixture, Fixture)
    return fixture


def listing() -> List[str]:
    """Return one line per fixture: name, description and acceptance."""
    return [f'{name}: {cls.description} [acceptance: {cls.acceptance}]'
            for name, cls in sorted(available().items())]
