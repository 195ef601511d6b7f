# Copyright (C) 2018 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""Tests for the trajectory classifier and the limit set property checks."""

import dataclasses as dc
import math

import numpy as np
import pytest

from monolab.dsl import parse
from monolab.equilibria import EquilibriumDB, find_equilibrium
from monolab.fixtures import Tanh2, tanh_fixed_point
from monolab.limits import (ClassifierParams, ClassTag, LSDVerdict,
                            OmegaEstimate, OmegaKind, _Task,
                            check_convergence_criterion, check_lsd,
                            check_nonordering, classify, classify_many,
                            classify_with_omega, estimate_omega,
                            inf_trap_check, reclassify, sup_trap_check)
from monolab.models import ODEModel
from monolab.order import ConeOrder, ContractViolation
from monolab.semiflow import IntegratorConfig, TerminalFlag

A = tanh_fixed_point()
TANH2 = Tanh2().build()
CENTER = ODEModel(parse('u2; -u1', arity=2))
STANDARD = ConeOrder.standard(2)


@pytest.fixture
def tanh2_db() -> EquilibriumDB:
    """Return the three equilibria of tanh2: 0, a and -a."""
    db = EquilibriumDB()
    for seed in (0.0, 2.0, -2.0):
        db.register(find_equilibrium(TANH2, np.full(2, seed)))
    return db


def test_omega_of_converging_orbit() -> None:
    omega = estimate_omega(TANH2, np.array([0.1, 0.1]), t_burn=40.0,
                           t_window=10.0)
    assert omega.valid
    assert omega.kind is OmegaKind.POINT
    np.testing.assert_allclose(omega.mean, [A, A], atol=1e-5)
    assert omega.tail_times[0] == pytest.approx(40.0)
    assert omega.horizon == 50.0


def test_omega_of_equilibrium() -> None:
    omega = estimate_omega(TANH2, np.zeros(2))
    assert omega.kind is OmegaKind.POINT
    assert omega.diameter == 0.0


def test_omega_of_center() -> None:
    omega = estimate_omega(CENTER, np.array([1.0, 0.0]))
    assert omega.kind is OmegaKind.NON_POINT
    assert omega.diameter == pytest.approx(2.0, rel=0.05)


def test_omega_of_blowup() -> None:
    model = ODEModel(parse('u1^2', arity=1))
    omega = estimate_omega(model, np.array([1.0]), t_burn=5.0)
    assert not omega.valid
    result = reclassify(model, omega, EquilibriumDB())
    assert result.tag is ClassTag.UNDETERMINED
    assert result.blowup
    assert not result.step_limit


def test_omega_of_step_limit() -> None:
    cfg = IntegratorConfig(max_step_count=5)
    omega = estimate_omega(TANH2, np.array([0.1, 0.1]), cfg=cfg)
    assert not omega.valid
    assert omega.flag is TerminalFlag.STEP_LIMIT_EXCEEDED
    result, _ = classify_with_omega(TANH2, np.array([0.1, 0.1]),
                                    EquilibriumDB(), cfg=cfg)
    assert result.tag is ClassTag.UNDETERMINED
    assert result.step_limit
    assert not result.blowup


def test_classify_converges_to_fixed_point(tanh2_db: EquilibriumDB) -> None:
    result = classify(TANH2, np.array([0.1, 0.1]), tanh2_db)
    assert result.tag is ClassTag.CONVERGENT
    assert result.equilibrium_id == 1
    assert result.label == 'convergent:1'


def test_classify_anti_diagonal(tanh2_db: EquilibriumDB) -> None:
    result = classify(TANH2, np.array([0.5, -0.5]), tanh2_db)
    assert result.tag is ClassTag.CONVERGENT
    assert result.equilibrium_id == 0


def test_classify_registers_new_equilibrium() -> None:
    db = EquilibriumDB()
    result = classify(TANH2, np.array([0.1, 0.1]), db)
    assert result.tag is ClassTag.CONVERGENT
    assert len(db) == 1
    np.testing.assert_allclose(db[result.equilibrium_id].state, [A, A],
                               atol=1e-8)


def test_classify_center_is_non_quasiconvergent() -> None:
    db = EquilibriumDB()
    db.register(find_equilibrium(CENTER, np.zeros(2)))
    result = classify(CENTER, np.array([1.0, 0.0]), db)
    assert result.tag is ClassTag.NON_QUASICONVERGENT
    assert result.min_flow_norm is not None
    assert result.min_flow_norm > 0.5


def test_reclassify_quasiconvergent() -> None:
    model = ODEModel(parse('0; 0', arity=2))
    db = EquilibriumDB()
    db.register(find_equilibrium(model, np.zeros(2)))
    omega = OmegaEstimate.from_states([(0.0, 0.0), (1e-5, 0.0)], species=2)
    assert omega.kind is OmegaKind.NON_POINT
    result = reclassify(model, omega, db)
    assert result.tag is ClassTag.QUASICONVERGENT


def test_classify_many_is_order_independent(tanh2_db: EquilibriumDB) -> None:
    points = [np.array([0.1, 0.1]), np.array([-0.3, -0.1]), np.zeros(2)]
    classes, omegas = classify_many(TANH2, points, tanh2_db)
    assert [c.label for c in classes] == ['convergent:1', 'convergent:2',
                                          'convergent:0']
    assert len(omegas) == 3
    reversed_classes, _ = classify_many(TANH2, points[::-1], tanh2_db)
    assert [c.label for c in reversed_classes] == [c.label
                                                   for c in classes[::-1]]


def test_classify_many_merges_discoveries_in_order() -> None:
    db = EquilibriumDB()
    classes, _ = classify_many(TANH2, [np.array([0.2, 0.1]),
                                       np.array([-0.2, -0.1])], db)
    assert len(db) == 2
    assert [c.equilibrium_id for c in classes] == [0, 1]
    assert db[0].state[0] > 0


def test_classify_many_keeps_refined_records() -> None:
    good = find_equilibrium(TANH2, np.full(2, 2.0))
    offset = good.state + 8e-5
    rough = dc.replace(good, state=offset,
                       residual=float(np.max(np.abs(TANH2.rhs(offset)))))
    db = EquilibriumDB()
    db.register(rough)
    params = ClassifierParams(delta=5e-5)

    omega, changed = _Task(model=TANH2, db=db.snapshot(), params=params,
                           cfg=None)(np.array([0.3, 0.2]))
    assert omega.kind is OmegaKind.POINT
    assert len(changed) == 1
    assert changed[0].residual < rough.residual

    classes, _ = classify_many(TANH2, [np.array([0.3, 0.2])], db, params)
    assert len(db) == 1
    assert db[0].residual <= params.newton_tol
    np.testing.assert_allclose(db[0].state, [A, A], atol=1e-9)
    assert classes[0].label == 'convergent:0'


def test_criterion_up(tanh2_db: EquilibriumDB) -> None:
    report = check_convergence_criterion(TANH2, np.array([0.1, 0.1]), 1.0,
                                         tanh2_db)
    assert report.applicable
    assert report.direction == 'up'
    assert report.satisfied


def test_criterion_down(tanh2_db: EquilibriumDB) -> None:
    report = check_convergence_criterion(TANH2, np.array([2.5, 2.5]), 1.0,
                                         tanh2_db)
    assert report.applicable
    assert report.direction == 'down'
    assert report.satisfied


def test_criterion_not_applicable_at_equilibrium(
        tanh2_db: EquilibriumDB) -> None:
    report = check_convergence_criterion(TANH2, np.zeros(2), 1.0, tanh2_db)
    assert not report.applicable
    assert report.satisfied is None


@pytest.mark.parametrize('states,expected', (
    ([(0.5, 0.5)], True),
    ([(0.0, 1.0), (1.0, 0.0)], True),
    ([(0.0, 0.0), (1.0, 1.0)], False),
))
def test_nonordering(states, expected: bool) -> None:
    omega = OmegaEstimate.from_states(states, species=2)
    assert check_nonordering(omega, STANDARD) is expected


def test_nonordering_mixed_order() -> None:
    omega = OmegaEstimate.from_states([(0.0, 0.0), (1.0, -1.0)], species=2)
    assert check_nonordering(omega, STANDARD)
    assert not check_nonordering(omega, ConeOrder(signs=(1, -1)))


def test_nonordering_center_orbit() -> None:
    omega = estimate_omega(CENTER, np.array([1.0, 0.0]))
    assert not check_nonordering(omega, STANDARD)


def test_nonordering_rejects_invalid_estimate() -> None:
    with pytest.raises(ContractViolation):
        check_nonordering(OmegaEstimate.invalid((2, 1), 10.0), STANDARD)


def test_lsd_same_basin(tanh2_db: EquilibriumDB) -> None:
    report = check_lsd(TANH2, np.array([0.1, 0.1]), np.array([0.2, 0.2]),
                       tanh2_db)
    assert report.verdict is LSDVerdict.OK_SAME_LIMIT
    assert report.verdict.ok


def test_lsd_opposite_basins(tanh2_db: EquilibriumDB) -> None:
    report = check_lsd(TANH2, np.array([-0.1, -0.1]), np.array([0.1, 0.1]),
                       tanh2_db)
    assert report.verdict is LSDVerdict.OK_ORDERED
    assert report.worst_margin == pytest.approx(2 * A, abs=1e-4)


def test_lsd_equal_points(tanh2_db: EquilibriumDB) -> None:
    x = np.array([0.3, 0.2])
    assert check_lsd(TANH2, x, x, tanh2_db).verdict.ok


def test_lsd_requires_ordered_pair(tanh2_db: EquilibriumDB) -> None:
    with pytest.raises(ContractViolation):
        check_lsd(TANH2, np.array([1.0, 0.0]), np.array([0.0, 1.0]),
                  tanh2_db)


CYCLIC3 = ODEModel(parse('-u1 + 2*tanh(u3); -u2 + 2*tanh(u1); '
                         '-u3 + 2*tanh(u2)', arity=3))


@pytest.mark.slow
@pytest.mark.parametrize('model,seed', ((TANH2, 11), (CYCLIC3, 12)))
def test_random_data_are_never_non_quasiconvergent(model: ODEModel,
                                                   seed: int) -> None:
    db = EquilibriumDB()
    rng = np.random.default_rng(seed)
    points = list(rng.uniform(-3, 3, size=(100, model.species)))
    classes, _ = classify_many(model, points, db)
    tags = {c.tag for c in classes}
    assert ClassTag.NON_QUASICONVERGENT not in tags
    assert ClassTag.CONVERGENT in tags


@pytest.mark.slow
def test_lsd_on_random_ordered_pairs(tanh2_db: EquilibriumDB) -> None:
    rng = np.random.default_rng(13)
    for _ in range(100):
        x = rng.uniform(-2, 2, size=2)
        y = x + rng.uniform(0, 1, size=2)
        report = check_lsd(TANH2, x, y, tanh2_db)
        assert report.verdict.ok, (x, y, report)


@pytest.mark.slow
def test_criterion_holds_wherever_it_applies(
        tanh2_db: EquilibriumDB) -> None:
    rng = np.random.default_rng(14)
    applicable = 0
    for x in rng.uniform(-3, 3, size=(100, 2)):
        report = check_convergence_criterion(TANH2, x, 1.0, tanh2_db)
        if report.applicable:
            applicable += 1
            assert report.satisfied, (x, report)
    assert applicable > 10


def test_inf_trap_point_omega(tanh2_db: EquilibriumDB) -> None:
    omega = OmegaEstimate.from_states([(A, A)], species=2)
    report = inf_trap_check(TANH2, omega, STANDARD, tanh2_db)
    assert report.ok
    np.testing.assert_allclose(report.limit, [A, A])


def test_inf_trap_incomparable_omega(tanh2_db: EquilibriumDB) -> None:
    omega = OmegaEstimate.from_states([(1.0, 0.0), (0.0, 1.0)], species=2)
    report = inf_trap_check(TANH2, omega, STANDARD, tanh2_db)
    np.testing.assert_array_equal(report.anchor, [0.0, 0.0])
    assert report.classification.equilibrium_id == 0
    assert report.ok


def test_inf_trap_detects_non_invariant_input(
        tanh2_db: EquilibriumDB) -> None:
    omega = OmegaEstimate.from_states([(2.0, 1.8), (1.8, 2.0)], species=2)
    report = inf_trap_check(TANH2, omega, STANDARD, tanh2_db)
    np.testing.assert_allclose(report.anchor, [1.8, 1.8])
    np.testing.assert_allclose(report.limit, [A, A], atol=1e-8)
    assert not report.ok


def test_sup_trap_incomparable_omega(tanh2_db: EquilibriumDB) -> None:
    omega = OmegaEstimate.from_states([(1.0, 0.0), (0.0, 1.0)], species=2)
    report = sup_trap_check(TANH2, omega, STANDARD, tanh2_db)
    np.testing.assert_array_equal(report.anchor, [1.0, 1.0])
    assert report.classification.equilibrium_id == 1
    assert report.ok


def test_params_validation() -> None:
    with pytest.raises(ContractViolation):
        ClassifierParams(t_burn=0.0)
    with pytest.raises(ContractViolation):
        ClassifierParams(retries=-1)
    assert math.isclose(ClassifierParams().delta, 1e-4)
