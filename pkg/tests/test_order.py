# Copyright (C) 2018 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""Tests for cone orders and segments."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from monolab.order import (ConeOrder, ContractViolation, Segment, StateVec,
                           cone_leq, cone_ll, cone_lt, pointwise_inf,
                           pointwise_sup, segment_points, spatial_variation)

STANDARD = ConeOrder.standard(2)
MIXED = ConeOrder(signs=(1, -1))

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)
pairs = st.lists(finite, min_size=2, max_size=2)


@pytest.mark.parametrize('x,y,order,leq,lt,ll', (
    ((0, 0), (1, 2), STANDARD, True, True, True),
    ((0, 0), (1, 0), STANDARD, True, True, False),
    ((0, 0), (0, 0), STANDARD, True, False, False),
    ((0, 0), (1, -2), MIXED, True, True, True),
    ((0, 0), (1, 2), MIXED, False, False, False),
))
def test_relations(x, y, order: ConeOrder, leq: bool, lt: bool,
                   ll: bool) -> None:
    assert cone_leq(x, y, order) is leq
    assert cone_lt(x, y, order) is lt
    assert cone_ll(x, y, order) is ll


def test_layout_mismatch() -> None:
    x = StateVec.of(np.zeros(4), species=2)
    y = StateVec.of(np.zeros(4), species=1)
    with pytest.raises(ContractViolation):
        cone_leq(x, y, STANDARD)
    with pytest.raises(ContractViolation):
        cone_leq((0, 0), (0, 0, 0, 0, 0), STANDARD)


@pytest.mark.parametrize('signs', ((), (1, 0), (2,)))
def test_invalid_signs(signs) -> None:
    with pytest.raises(ContractViolation):
        ConeOrder(signs=signs)


def test_state_vec_rejects_non_finite() -> None:
    with pytest.raises(ContractViolation):
        StateVec.of([0.0, np.nan])
    with pytest.raises(ContractViolation):
        StateVec(data=np.zeros(3), layout=(2, 2))


def test_segment_points() -> None:
    segment = Segment(base=np.array([0.0, 0.0]),
                      direction=np.array([1.0, 1.0]), order=STANDARD)
    points = segment_points(segment, 2)
    assert [p.data.tolist() for p in points] == [[0, 0], [0.5, 0.5], [1, 1]]
    for lower, upper in zip(points, points[1:]):
        assert cone_lt(lower, upper, STANDARD)


def test_segment_single_interval() -> None:
    segment = Segment(base=np.array([0.0, 0.0]),
                      direction=np.array([1.0, 1.0]), order=STANDARD)
    assert len(segment_points(segment, 1)) == 2
    with pytest.raises(ContractViolation):
        segment_points(segment, 0)


@pytest.mark.parametrize('direction', ((0.0, 0.0), (1.0, -1.0)))
def test_segment_direction_not_positive(direction) -> None:
    with pytest.raises(ContractViolation):
        Segment(base=np.zeros(2), direction=np.array(direction),
                order=STANDARD)


def test_segment_in_mixed_order() -> None:
    segment = Segment(base=np.zeros(2), direction=np.array([1.0, -1.0]),
                      order=MIXED)
    np.testing.assert_allclose(segment.point(0.5), [0.5, -0.5])


def test_pointwise_extrema() -> None:
    states = [(1, 5), (3, 2)]
    assert pointwise_inf(states, STANDARD).data.tolist() == [1, 2]
    assert pointwise_sup(states, STANDARD).data.tolist() == [3, 5]
    assert pointwise_inf(states, MIXED).data.tolist() == [1, 5]
    with pytest.raises(ContractViolation):
        pointwise_inf([], STANDARD)


def test_spatial_variation() -> None:
    state = StateVec.of([0.0, 1.0, 0.5, 2.0, 2.0, 2.0], species=2)
    np.testing.assert_allclose(spatial_variation(state, 2), [1.0, 0.0])


@given(x=pairs, y=pairs)
def test_lt_implies_leq_and_ll_implies_lt(x, y) -> None:
    for order in (STANDARD, MIXED):
        if cone_lt(x, y, order):
            assert cone_leq(x, y, order)
        if cone_ll(x, y, order):
            assert cone_lt(x, y, order)


@given(x=pairs, y=pairs)
def test_antisymmetry(x, y) -> None:
    if cone_leq(x, y, MIXED) and cone_leq(y, x, MIXED):
        assert np.array_equal(np.asarray(x), np.asarray(y))


@given(states=st.lists(pairs, min_size=1, max_size=5))
def test_extrema_bound_every_state(states) -> None:
    for order in (STANDARD, MIXED):
        low = pointwise_inf(states, order)
        high = pointwise_sup(states, order)
        for state in states:
            assert cone_leq(low, state, order)
            assert cone_leq(state, high, order)
