# Copyright (C) 2018 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""Tests for the reaction expression language."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monolab.dsl import EvaluationError, ParseError, format_expr, parse
from monolab.fixtures import tanh_fixed_point

TANH2 = '-u1 + 2*tanh(u2); -u2 + 2*tanh(u1)'


def test_tanh2_eval() -> None:
    field = parse(TANH2, arity=2)
    value = field.eval(np.array([1.0, 1.0]))
    np.testing.assert_allclose(value, [0.523188, 0.523188], atol=1e-6)


def test_tanh2_jacobian_at_origin() -> None:
    field = parse(TANH2, arity=2)
    np.testing.assert_allclose(field.jacobian(np.zeros(2)),
                               [[-1.0, 2.0], [2.0, -1.0]])


def test_tanh2_jacobian_at_fixed_point() -> None:
    a = tanh_fixed_point()
    field = parse(TANH2, arity=2)
    jac = field.jacobian(np.array([a, a]))
    assert jac[0, 1] == pytest.approx(0.16637, abs=1e-5)
    assert jac[0, 1] == pytest.approx(2 - a ** 2 / 2)


def test_cubic_jacobian() -> None:
    field = parse('u1 - u1^3', arity=1)
    np.testing.assert_allclose(field.jacobian(np.array([1.0])), [[-2.0]])


def test_nodal_evaluation() -> None:
    field = parse(TANH2, arity=2)
    u = np.array([[0.0, 1.0, -1.0], [0.5, 1.0, 2.0]])
    out = field.eval(u)
    assert out.shape == (2, 3)
    for node in range(3):
        np.testing.assert_allclose(out[:, node], field.eval(u[:, node]))
    jac = field.jacobian(u)
    assert jac.shape == (3, 2, 2)
    np.testing.assert_allclose(jac[1], field.jacobian(u[:, 1]))


@pytest.mark.parametrize('source,arity,reason', (
    ('u3', 2, ParseError.Reason.VARIABLE_OUT_OF_RANGE),
    ('u1; u1', 1, ParseError.Reason.ARITY_MISMATCH),
    ('u1', 2, ParseError.Reason.ARITY_MISMATCH),
    ('log(u1)', 1, ParseError.Reason.UNKNOWN_FUNCTION),
    ('x + u1', 1, ParseError.Reason.UNKNOWN_IDENTIFIER),
    ('u0', 1, ParseError.Reason.UNKNOWN_IDENTIFIER),
    ('u1 +', 1, ParseError.Reason.UNEXPECTED_END),
    ('(u1', 1, ParseError.Reason.UNEXPECTED_END),
    ('u1 u1', 1, ParseError.Reason.UNEXPECTED_TOKEN),
    ('u1 $ 2', 1, ParseError.Reason.UNEXPECTED_TOKEN),
))
def test_parse_errors(source: str, arity: int,
                      reason: ParseError.Reason) -> None:
    with pytest.raises(ParseError) as excinfo:
        parse(source, arity=arity)
    assert excinfo.value.reason == reason


def test_trailing_semicolon() -> None:
    assert parse('u1;', arity=1).arity == 1


@pytest.mark.parametrize('source,expected', (
    ('2^3^2', 512.0),
    ('-2^2', -4.0),
    ('2*3-4/2', 4.0),
    ('(1+2)*3', 9.0),
    ('sqrt(abs(-16))', 4.0),
    ('1.5e1 - u1', 14.0),
))
def test_precedence(source: str, expected: float) -> None:
    field = parse(source, arity=1)
    assert field.eval(np.array([1.0]))[0] == pytest.approx(expected)


def test_evaluation_error() -> None:
    field = parse('1; 1/u1', arity=2)
    with pytest.raises(EvaluationError) as excinfo:
        field.eval(np.array([0.0, 1.0]))
    assert excinfo.value.component == 1
    assert excinfo.value.point == (0.0, 1.0)


@pytest.mark.parametrize('source', (
    TANH2,
    'u1 - u1^3',
    '-(u1 - 2)^2 + exp(-u1)*sin(u1); cos(u2)/(1 + u1^2)',
    '-u1*(u1 - 0.5)*(u1 - 1) - 0.1*u1',
    'u1 - (-2) + u1^-2',
))
def test_format_round_trip(source: str) -> None:
    field = parse(source, arity=source.count(';') + 1)
    reparsed = parse(field.source, arity=field.arity)
    assert reparsed.components == field.components


@settings(max_examples=50, deadline=None)
@given(u=st.lists(st.floats(min_value=-2, max_value=2), min_size=2,
                  max_size=2))
def test_jacobian_matches_finite_differences(u) -> None:
    field = parse('-u1 + 2*tanh(u2) + u1*u2^2; exp(-u1)*sin(u2) - u2^3',
                  arity=2)
    point = np.asarray(u)
    h = 1e-6
    approx = np.empty((2, 2))
    for j in range(2):
        step = np.zeros(2)
        step[j] = h
        approx[:, j] = (field.eval(point + step)
                        - field.eval(point - step)) / (2 * h)
    np.testing.assert_allclose(field.jacobian(point), approx, atol=1e-5)

