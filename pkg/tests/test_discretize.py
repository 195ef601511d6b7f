# Copyright (C) 2018 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""Tests for the method-of-lines discretization."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from monolab.discretize import (Grid, RDModel, assemble,
                                check_cooperative_irreducible,
                                coupling_graph_is_strongly_connected,
                                laplacian_matrix, neumann_laplacian)
from monolab.dsl import parse
from monolab.fixtures import Chafee
from monolab.order import ContractViolation

TANH2 = '-u1 + 2*tanh(u2); -u2 + 2*tanh(u1)'

def test_laplacian_hand_stencil() -> None:
    grid = Grid(lengths=(1.0,), nodes=(3,))
    assert grid.spacing == (0.5,)
    np.testing.assert_allclose(neumann_laplacian(grid, [0.0, 1.0, 0.0]),
                               [8.0, -8.0, 8.0])

@pytest.mark.parametrize('grid', (
    Grid(lengths=(1.0,), nodes=(11,)),
    Grid(lengths=(1.0, 2.0), nodes=(5, 7)),
))
def test_laplacian_of_constant(grid: Grid) -> None:
    u = np.full(grid.size, 3.5)
    np.testing.assert_allclose(neumann_laplacian(grid, u), 0.0, atol=1e-9)
    np.testing.assert_allclose(laplacian_matrix(grid) @ u, 0.0, atol=1e-9)

def test_laplacian_eigenfunction() -> None:
    grid = Grid(lengths=(1.0,), nodes=(101,))
    x, = grid.coordinates()
    u = np.cos(np.pi * x)
    lap = neumann_laplacian(grid, u)
    expected = -np.pi ** 2 * u
    error = np.max(np.abs(lap - expected)) / np.max(np.abs(expected))
    assert error <= 1e-2

def test_matrix_matches_stencil_in_2d() -> None:
    grid = Grid(lengths=(1.0, 1.0), nodes=(6, 4))
    rng = np.random.default_rng(0)
    u = rng.normal(size=grid.size)
    np.testing.assert_allclose(laplacian_matrix(grid) @ u,
                               neumann_laplacian(grid, u))


GRIDS = (Grid(lengths=(1.0,), nodes=(21,)),
         Grid(lengths=(1.0, 2.0), nodes=(9, 7)))


@pytest.mark.parametrize('grid', GRIDS)
@given(seed=st.integers(min_value=0, max_value=2 ** 32 - 1))
def test_laplacian_conserves_mass(grid: Grid, seed: int) -> None:
    u = np.random.default_rng(seed).uniform(-3, 3, size=grid.size)
    weights = grid.trapezoid_weights()
    mean = weights @ neumann_laplacian(grid, u) / weights.sum()
    assert abs(mean) <= 1e-12 * np.linalg.norm(u)


@pytest.mark.parametrize('grid', GRIDS)
@given(seed=st.integers(min_value=0, max_value=2 ** 32 - 1))
def test_laplacian_symmetric_in_weighted_product(grid: Grid,
                                                 seed: int) -> None:
    rng = np.random.default_rng(seed)
    u, v = rng.uniform(-3, 3, size=(2, grid.size))
    weights = grid.trapezoid_weights()
    left = weights @ (neumann_laplacian(grid, u) * v)
    right = weights @ (u * neumann_laplacian(grid, v))
    assert left == pytest.approx(right, rel=1e-10, abs=1e-9)


def test_trapezoid_weights_sum_to_area() -> None:
    grid = Grid(lengths=(2.0, 3.0), nodes=(5, 9))
    assert grid.trapezoid_weights().sum() == pytest.approx(6.0)

@pytest.mark.parametrize('lengths,nodes', (
    ((1.0,), (2,)),
    ((0.0,), (10,)),
    ((1.0, 1.0, 1.0), (3, 3, 3)),
    ((1.0,), (3, 3)),
))
def test_invalid_grid(lengths, nodes) -> None:
    with pytest.raises(ContractViolation):
        Grid(lengths=lengths, nodes=nodes)

def test_zero_diffusion_is_nodewise_reaction() -> None:
    grid = Grid(lengths=(1.0,), nodes=(7,))
    reaction = parse(TANH2, arity=2)
    model = assemble(grid, (0.0, 0.0), reaction)
    rng = np.random.default_rng(1)
    u = rng.uniform(-2, 2, size=model.size)
    np.testing.assert_allclose(model.rhs(u),
                               reaction.eval(u.reshape(2, 7)).ravel())

def test_zero_reaction_constant_state() -> None:
    grid = Grid(lengths=(1.0,), nodes=(9,))
    model = assemble(grid, (0.3,), parse('0', arity=1))
    np.testing.assert_allclose(model.rhs(np.full(9, 2.0)), 0.0, atol=1e-12)

def test_chafee_constant_equilibrium() -> None:
    model = Chafee().build()
    assert isinstance(model, RDModel)
    assert model.layout == (1, 201)
    np.testing.assert_allclose(model.rhs(np.ones(model.size)), 0.0,
                               atol=1e-12)

def test_jacobian_matches_finite_differences() -> None:
    grid = Grid(lengths=(1.0,), nodes=(5,))
    model = assemble(grid, (0.1, 0.2), parse(TANH2, arity=2))
    rng = np.random.default_rng(2)
    u = rng.uniform(-1, 1, size=model.size)
    jac = model.jacobian(u).toarray()
    h = 1e-6
    for j in range(model.size):
        step = np.zeros(model.size)
        step[j] = h
        column = (model.rhs(u + step) - model.rhs(u - step)) / (2 * h)
        np.testing.assert_allclose(jac[:, j], column, atol=1e-5)

def test_assemble_rejects_wrong_diffusion() -> None:
    grid = Grid(lengths=(1.0,), nodes=(5,))
    with pytest.raises(ContractViolation):
        assemble(grid, (0.1,), parse(TANH2, arity=2))
    with pytest.raises(ContractViolation):
        assemble(grid, (-0.1,), parse('u1', arity=1))

def test_tanh2_cooperative_irreducible() -> None:
    report = check_cooperative_irreducible(parse(TANH2, arity=2),
                                           box=[(-3, 3), (-3, 3)],
                                           samples=500)
    assert report.cooperative
    assert report.irreducible
    assert report.witness is None
    assert report.samples_checked == 500

def test_decoupled_not_irreducible() -> None:
    report = check_cooperative_irreducible(parse('-u1; -u2', arity=2),
                                           box=[(-1, 1), (-1, 1)],
                                           samples=10)
    assert report.cooperative
    assert not report.irreducible
    assert report.witness is not None

def test_competitive_coupling_witness() -> None:
    report = check_cooperative_irreducible(
        parse('-u1 - u2; -u2 - u1', arity=2), box=[(-1, 1), (-1, 1)],
        samples=10
    )
    assert not report.cooperative
    assert report.witness is not None
    assert report.witness.entry == (1, 2)

def test_irreducible_without_cooperativity() -> None:
    report = check_cooperative_irreducible(
        parse('sin(u2); sin(u1)', arity=2), box=[(-3, 3), (-3, 3)],
        samples=200
    )
    assert not report.cooperative
    assert report.irreducible
    assert report.witness is not None
    assert report.witness.entry in ((1, 2), (2, 1))


def test_neither_cooperative_nor_irreducible() -> None:
    report = check_cooperative_irreducible(
        parse('-u1 - u2; -u2', arity=2), box=[(-1, 1), (-1, 1)],
        samples=10
    )
    assert not report.cooperative
    assert not report.irreducible
    assert report.witness.entry == (1, 2)


def test_competitive_is_cooperative_in_mixed_order() -> None:
    report = check_cooperative_irreducible(
        parse('-u1 - u2; -u2 - u1', arity=2), box=[(-1, 1), (-1, 1)],
        samples=10, signs=(1, -1)
    )
    assert report.cooperative
    assert report.irreducible

@pytest.mark.parametrize('pattern,connected', (
    ([[0, 1], [1, 0]], True),
    ([[0, 1], [0, 0]], False),
    ([[0, 1, 0], [0, 0, 1], [1, 0, 0]], True),
))
def test_coupling_graph(pattern, connected: bool) -> None:
    assert coupling_graph_is_strongly_connected(
        np.asarray(pattern, dtype=bool)
    ) is connected
