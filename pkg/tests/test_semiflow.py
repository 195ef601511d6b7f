# Copyright (C) 2018 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""Tests for the time integrators and the monotonicity checks."""

import csv
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monolab.dsl import parse
from monolab.fixtures import Chafee, Tanh2, tanh_fixed_point
from monolab.models import LinearModel, ODEModel
from monolab.order import ConeOrder, ContractViolation
from monolab.semiflow import (IntegratorConfig, Scheme, TerminalFlag,
                              check_monotone, check_strongly_monotone,
                              estimate_step_for_reaction, flow, flow_at,
                              flow_through, stays_in)

A = tanh_fixed_point()
DECAY = ODEModel(parse('-u1', arity=1))
TANH2 = Tanh2().build()
STANDARD = ConeOrder.standard(2)


def test_linear_decay() -> None:
    trajectory = flow(DECAY, np.array([1.0]), 1.0)
    assert trajectory.flag is TerminalFlag.REACHED_HORIZON
    assert trajectory.final_time == 1.0
    assert trajectory.final[0] == pytest.approx(math.exp(-1), abs=1e-6)
    assert np.all(np.diff(trajectory.times) > 0)


def test_flow_at_zero_is_identity() -> None:
    x0 = np.array([0.3, -0.7])
    np.testing.assert_array_equal(flow_at(TANH2, x0, 0.0), x0)


def test_flow_at_decay() -> None:
    assert flow_at(DECAY, np.array([1.0]), 2.0)[0] == pytest.approx(
        math.exp(-2), abs=1e-6
    )


def test_equilibrium_stays() -> None:
    trajectory = flow(TANH2, np.zeros(2), 10.0)
    np.testing.assert_allclose(trajectory.final, 0.0, atol=1e-12)


def test_tanh2_converges_to_fixed_point() -> None:
    final = flow_at(TANH2, np.array([0.1, 0.1]), 40.0)
    np.testing.assert_allclose(final, [A, A], atol=1e-5)


def test_anti_diagonal_contracts() -> None:
    final = flow_at(TANH2, np.array([0.5, -0.5]), 30.0)
    np.testing.assert_allclose(final, 0.0, atol=1e-5)


def test_blowup_is_flagged() -> None:
    model = ODEModel(parse('u1^2', arity=1))
    trajectory = flow(model, np.array([1.0]), 2.0)
    assert trajectory.blowup
    assert trajectory.final_time < 1.0


def test_step_limit() -> None:
    cfg = IntegratorConfig(max_step_count=3)
    trajectory = flow(TANH2, np.array([0.1, 0.1]), 40.0, cfg)
    assert trajectory.flag is TerminalFlag.STEP_LIMIT_EXCEEDED
    assert trajectory.final_time < 40.0


def test_negative_horizon() -> None:
    with pytest.raises(ContractViolation):
        flow(DECAY, np.array([1.0]), -1.0)


def test_linear_model_uses_exponential() -> None:
    model = LinearModel(np.array([[-1.0, 2.0], [2.0, -1.0]]))
    assert IntegratorConfig().resolve(model) is Scheme.EXPONENTIAL
    final = flow_at(model, np.array([1.0, 1.0]), 1.0)
    np.testing.assert_allclose(final, [math.e, math.e], rtol=1e-8)


def test_rd_model_uses_imex() -> None:
    model = Chafee(nodes=21).build()
    assert IntegratorConfig().resolve(model) is Scheme.IMEX_CN_HEUN
    trajectory = flow(model, np.full(model.size, 1.0), 1.0)
    np.testing.assert_allclose(trajectory.final, 1.0, atol=1e-10)


def test_imex_matches_adaptive_on_diffusion_free_model() -> None:
    model = Chafee(nodes=5, diffusion=0.0).build()
    x0 = np.full(model.size, 0.2)
    imex = flow_at(model, x0, 2.0, IntegratorConfig(dt=1e-3))
    exact = 0.2 / math.sqrt(0.04 + 0.96 * math.exp(-4.0))
    np.testing.assert_allclose(imex, exact, atol=1e-5)


def test_flow_through_hits_sample_times() -> None:
    states, flag = flow_through(DECAY, np.array([1.0]), [2.0, 0.0, 1.0])
    assert flag is TerminalFlag.REACHED_HORIZON
    np.testing.assert_allclose([s[0] for s in states],
                               [math.exp(-2), 1.0, math.exp(-1)],
                               atol=1e-6)


def test_stays_in_basin_interior() -> None:
    result = stays_in(TANH2, np.array([1.9, 1.9]),
                      lambda u: np.max(np.abs(u - A)) <= 0.2, r=0.0,
                      horizon=20.0)
    assert result
    assert result.first_exit is None


def test_stays_in_leaves_ball() -> None:
    result = stays_in(TANH2, np.array([1.0, 1.0]),
                      lambda u: np.max(np.abs(u)) <= 0.05, r=0.0,
                      horizon=20.0)
    assert not result
    assert result.first_exit == 0.0


def test_stays_in_trivial_predicate() -> None:
    assert stays_in(TANH2, np.array([0.3, 2.0]), lambda u: True, r=1.0,
                    horizon=5.0)


def test_stays_in_blowup() -> None:
    model = ODEModel(parse('u1^2', arity=1))
    result = stays_in(model, np.array([1.0]), lambda u: True, r=0.0,
                      horizon=2.0)
    assert not result
    assert result.flag is TerminalFlag.BLOWUP


def test_monotone_tanh2() -> None:
    report = check_monotone(TANH2, np.zeros(2), np.array([0.1, 0.1]),
                            STANDARD, [1.0, 5.0, 10.0])
    assert report.ok
    assert [t for t, _ in report.margins] == [1.0, 5.0, 10.0]


def test_monotone_equal_points() -> None:
    x = np.array([0.4, -0.3])
    report = check_monotone(TANH2, x, x, STANDARD, [1.0, 2.0])
    assert report.ok
    assert all(margin == 0.0 for _, margin in report.margins)


def test_monotone_requires_ordered_pair() -> None:
    with pytest.raises(ContractViolation):
        check_monotone(TANH2, np.array([1.0, 0.0]), np.array([0.0, 1.0]),
                       STANDARD, [1.0])


def test_monotone_detects_competitive_system() -> None:
    model = ODEModel(parse('-u1 - 2*u2; -u2 - 2*u1', arity=2))
    report = check_monotone(model, np.zeros(2), np.array([1.0, 0.0]),
                            STANDARD, [1.0])
    assert not report.ok


@pytest.mark.slow
def test_monotone_chafee() -> None:
    model = Chafee().build()
    report = check_monotone(model, np.full(model.size, -0.5),
                            np.full(model.size, 0.5), ConeOrder.standard(1),
                            [1.0, 10.0])
    assert report.ok


def test_strongly_monotone_tanh2() -> None:
    report = check_strongly_monotone(TANH2, np.zeros(2),
                                     np.array([0.1, 0.0]), STANDARD,
                                     [0.5, 1.0, 2.0])
    assert report.ok
    assert [t for t, _ in report.margins] == [1.0, 2.0]


coordinates = st.floats(min_value=-3.0, max_value=3.0)


@settings(max_examples=30, deadline=None)
@given(x=st.tuples(coordinates, coordinates),
       t=st.floats(min_value=0.0, max_value=2.5),
       s=st.floats(min_value=0.0, max_value=2.5))
def test_semigroup_property(x, t: float, s: float) -> None:
    x = np.array(x)
    direct = flow_at(TANH2, x, t + s)
    composed = flow_at(TANH2, flow_at(TANH2, x, t), s)
    assert np.max(np.abs(direct - composed)) <= 1e-5 * (
        1 + np.max(np.abs(x))
    )


def test_adaptive_integrator_converges_with_tolerance() -> None:
    x = np.array([0.3, -1.2])
    exact = flow_at(TANH2, x, 5.0,
                    IntegratorConfig(rel_tol=1e-12, abs_tol=1e-14))
    tolerances = [1e-4 / 2 ** k for k in range(6)]
    errors = []
    for tol in tolerances:
        cfg = IntegratorConfig(scheme=Scheme.ADAPTIVE_RK54, rel_tol=tol,
                               abs_tol=tol * 1e-2)
        errors.append(np.max(np.abs(flow_at(TANH2, x, 5.0, cfg) - exact)))
    for tol, error in zip(tolerances, errors):
        assert error <= 100 * tol * (1 + np.max(np.abs(x)))
    assert errors[-1] <= errors[0] / 4


@pytest.mark.slow
@pytest.mark.parametrize('model,order', (
    (TANH2, STANDARD),
    (ODEModel(parse('-u1 - 0.5*u2; -2*u2 - 0.25*u1 + 0.1*tanh(u2)',
                    arity=2)),
     ConeOrder(signs=(1, -1))),
))
def test_monotone_on_random_ordered_pairs(model, order: ConeOrder) -> None:
    rng = np.random.default_rng(11)
    signs = order.sign_vector(2)
    for _ in range(200):
        x = rng.uniform(-3.0, 3.0, size=2)
        y = x + signs * rng.uniform(0.01, 0.5, size=2)
        report = check_monotone(model, x, y, order, [0.5, 1.0, 2.0, 5.0])
        assert report.ok, (x, y, report.violations)


def test_strongly_monotone_on_random_pairs() -> None:
    rng = np.random.default_rng(12)
    for _ in range(50):
        x = rng.uniform(-3.0, 3.0, size=2)
        w = rng.uniform(0.05, 0.5, size=2)
        w[rng.integers(2)] = 0.0
        report = check_strongly_monotone(TANH2, x, x + w, STANDARD,
                                         [1.0, 2.0, 3.0])
        assert report.ok, (x, w, report.violations)


def test_reaction_step_covers_the_box() -> None:
    model = ODEModel(parse('-(u1 - 1)*(u1 - 1)*(u1 - 1)', arity=1))
    # The Jacobian vanishes at u0 and is largest at the far corner -1
    assert estimate_step_for_reaction(model, np.ones(1)) == pytest.approx(
        0.5 / 12)
    assert estimate_step_for_reaction(model, np.ones(1), cap=0.01) == 0.01


def test_reaction_step_without_reaction() -> None:
    model = LinearModel(np.array([[-1.0, 1.0], [1.0, -1.0]]))
    assert estimate_step_for_reaction(model, np.zeros(2)) == 0.05


def test_trajectory_to_csv(tmp_path: Path) -> None:
    trajectory = flow(TANH2, np.array([0.1, 0.2]), 1.0)
    path = tmp_path / 'trajectory.csv'
    trajectory.to_csv(path)
    with path.open() as f:
        rows = list(csv.reader(f))
    assert rows[0] == ['t', 'u1', 'u2']
    assert len(rows) == len(trajectory) + 1
    assert float(rows[-1][0]) == 1.0
