# Copyright (C) 2019 Lecida Inc
# All Rights Reserved.
#
# NOTICE:  All information contained herein is, and remains the property of
# Lecida Inc. The intellectual and technical concepts contained herein are
# proprietary to Lecida Inc and may be covered by U.S. and Foreign Patents,
# patents in process, and are protected by trade secret or copyright law.
# Dissemination or reproduction of this material is strictly forbidden unless
# prior written permission is obtained from Lecida Inc.
"""Expression language for reaction terms.

Grammar (one expression per species, separated by semicolons)::

    field  = expr { ";" expr } [ ";" ] ;
    expr   = term { ( "+" | "-" ) term } ;
    term   = unary { ( "*" | "/" ) unary } ;
    unary  = "-" unary | power ;
    power  = atom [ "^" unary ] ;
    atom   = number | "u" index | func "(" expr ")" | "(" expr ")" ;
    func   = "tanh" | "exp" | "sin" | "cos" | "sqrt" | "abs" ;

Evaluation is vectorized over grid nodes, and Jacobians are exact: they are
propagated through the tree with forward-mode dual numbers.
"""
from __future__ import annotations

import dataclasses as dc
import enum
import logging
import re
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

FUNCTIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    'tanh': np.tanh,
    'exp': np.exp,
    'sin': np.sin,
    'cos': np.cos,
    'sqrt': np.sqrt,
    'abs': np.abs,
}

_TOKEN_RE = re.compile(r'''
    (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^();])
  | (?P<space>\s+)
''', re.VERBOSE)

_VARIABLE_RE = re.compile(r'u([1-9][0-9]*)')


class ParseError(Exception):
    """Exception raised when a reaction source cannot be parsed."""

    class Reason(str, enum.Enum):
        """Reason for the exception."""

        UNEXPECTED_TOKEN = 'Unexpected token'
        UNEXPECTED_END = 'Unexpected end of input'
        UNKNOWN_IDENTIFIER = 'Unknown identifier'
        UNKNOWN_FUNCTION = 'Unknown function'
        VARIABLE_OUT_OF_RANGE = 'Variable out of range'
        ARITY_MISMATCH = 'Arity mismatch'

    def __init__(self, reason: ParseError.Reason, position: int,
                 detail: str = '') -> None:
        """Initialize the exception.

        Args:
            reason: The reason why the source is invalid.
            position: Character offset in the source.
            detail: Additional context.

        """
        message = f'{reason.value} at position {position}'
        if detail:
            message += f': {detail}'
        super().__init__(message)
        self._reason = reason
        self.position = position

    @property
    def reason(self) -> ParseError.Reason:
        """Return the reason for the exception."""
        return self._reason


class EvaluationError(ArithmeticError):
    """Exception raised when a component evaluates to NaN or infinity."""

    def __init__(self, component: int, point: Sequence[float]) -> None:
        """Initialize the exception.

        Args:
            component: Zero-based index of the failing component.
            point: The species values at which evaluation failed.

        """
        self.component = component
        self.point = tuple(float(p) for p in point)
        super().__init__(f'Component {component + 1} is not finite at '
                         f'u={self.point}.')


@dc.dataclass(frozen=True)
class Expr(object):
    """Node of the expression tree."""


@dc.dataclass(frozen=True)
class Num(Expr):
    value: float


@dc.dataclass(frozen=True)
class Var(Expr):
    index: int


@dc.dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dc.dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dc.dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr


_Token = Tuple[str, str, int]


def _tokenize(source: str) -> List[_Token]:
    tokens: List[_Token] = []
    position = 0
    while position < len(source):
        match = _TOKEN_RE.match(source, position)
        if match is None:
            raise ParseError(ParseError.Reason.UNEXPECTED_TOKEN, position,
                             repr(source[position]))
        kind = match.lastgroup
        assert kind is not None
        if kind != 'space':
            tokens.append((kind, match.group(), position))
        position = match.end()
    return tokens


class _Parser(object):
    """Recursive descent parser for one reaction field."""

    def __init__(self, source: str, arity: int) -> None:
        self._tokens = _tokenize(source)
        self._end = len(source)
        self._index = 0
        self._arity = arity

    def _peek(self) -> Optional[_Token]:
        if self._index < len(self._tokens):
            return self._tokens[self._index]
        return None

    def _next(self) -> _Token:
        token = self._peek()
        if token is None:
            raise ParseError(ParseError.Reason.UNEXPECTED_END, self._end)
        self._index += 1
        return token

    def _accept(self, *ops: str) -> Optional[str]:
        token = self._peek()
        if token is not None and token[0] == 'op' and token[1] in ops:
            self._index += 1
            return token[1]
        return None

    def _expect(self, op: str) -> None:
        token = self._next()
        if token[0] != 'op' or token[1] != op:
            raise ParseError(ParseError.Reason.UNEXPECTED_TOKEN, token[2],
                             f'expected {op!r}, got {token[1]!r}')

    def field(self) -> List[Expr]:
        components = [self.expr()]
        while self._accept(';'):
            if self._peek() is None:
                break
            components.append(self.expr())
        token = self._peek()
        if token is not None:
            raise ParseError(ParseError.Reason.UNEXPECTED_TOKEN, token[2],
                             repr(token[1]))
        return components

    def expr(self) -> Expr:
        node = self.term()
        op = self._accept('+', '-')
        while op:
            node = BinOp(op, node, self.term())
            op = self._accept('+', '-')
        return node

    def term(self) -> Expr:
        node = self.unary()
        op = self._accept('*', '/')
        while op:
            node = BinOp(op, node, self.unary())
            op = self._accept('*', '/')
        return node

    def unary(self) -> Expr:
        if self._accept('-'):
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self._accept('^'):
            return BinOp('^', base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, text, position = self._next()
        if kind == 'number':
            return Num(float(text))
        if kind == 'op' and text == '(':
            node = self.expr()
            self._expect(')')
            return node
        if kind == 'name':
            following = self._peek()
            if following is not None and following[1] == '(':
                if text not in FUNCTIONS:
                    raise ParseError(ParseError.Reason.UNKNOWN_FUNCTION,
                                     position, text)
                self._index += 1
                arg = self.expr()
                self._expect(')')
                return Call(text, arg)
            match = _VARIABLE_RE.fullmatch(text)
            if match is None:
                raise ParseError(ParseError.Reason.UNKNOWN_IDENTIFIER,
                                 position, text)
            index = int(match.group(1))
            if index > self._arity:
                raise ParseError(ParseError.Reason.VARIABLE_OUT_OF_RANGE,
                                 position,
                                 f'{text} with arity {self._arity}')
            return Var(index)
        raise ParseError(ParseError.Reason.UNEXPECTED_TOKEN, position,
                         repr(text))


_PRECEDENCE = {'+': 1, '-': 1, '*': 2, '/': 2, '^': 4}


def _precedence(node: Expr) -> int:
    if isinstance(node, BinOp):
        return _PRECEDENCE[node.op]
    if isinstance(node, Neg):
        return 3
    return 5


def format_expr(node: Expr) -> str:
    """Pretty-print an expression so that it parses back to the same tree."""
    if isinstance(node, Num):
        text = repr(float(node.value))
        return f'({text})' if node.value < 0 else text
    if isinstance(node, Var):
        return f'u{node.index}'
    if isinstance(node, Call):
        return f'{node.func}({format_expr(node.arg)})'
    if isinstance(node, Neg):
        inner = format_expr(node.operand)
        if _precedence(node.operand) < 3:
            inner = f'({inner})'
        return f'-{inner}'
    if isinstance(node, BinOp):
        prec = _PRECEDENCE[node.op]
        left, right = format_expr(node.left), format_expr(node.right)
        if node.op == '^':
            if _precedence(node.left) <= prec:
                left = f'({left})'
            if _precedence(node.right) < 3:
                right = f'({right})'
        else:
            if _precedence(node.left) < prec:
                left = f'({left})'
            if _precedence(node.right) <= prec:
                right = f'({right})'
        return f'{left}{node.op}{right}'
    raise TypeError(f'Unknown node {node!r}')


def _constant(node: Expr) -> Optional[float]:
    """Return the value of a variable-free subtree, or None."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Neg):
        value = _constant(node.operand)
        return None if value is None else -value
    return None


_Compiled = Callable[[np.ndarray], Union[np.ndarray, float]]

_BINARY: Dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    '+': np.add,
    '-': np.subtract,
    '*': np.multiply,
    '/': np.divide,
    '^': np.power,
}


def _compile(node: Expr) -> _Compiled:
    """Turn a tree into nested closures over the nodal value array."""
    if isinstance(node, Num):
        value = node.value
        return lambda u: value
    if isinstance(node, Var):
        row = node.index - 1
        return lambda u: u[row]
    if isinstance(node, Neg):
        operand = _compile(node.operand)
        return lambda u: -operand(u)
    if isinstance(node, Call):
        func, arg = FUNCTIONS[node.func], _compile(node.arg)
        return lambda u: func(arg(u))
    if isinstance(node, BinOp):
        binary = _BINARY[node.op]
        left, right = _compile(node.left), _compile(node.right)
        return lambda u: binary(left(u), right(u))
    raise TypeError(f'Unknown node {node!r}')


class _Dual(object):
    """Dual number carrying nodal values and gradients w.r.t. all species."""

    __slots__ = ('val', 'grad')

    def __init__(self, val: np.ndarray, grad: np.ndarray) -> None:
        self.val = val
        self.grad = grad

    def __neg__(self) -> _Dual:
        return _Dual(-self.val, -self.grad)

    def __add__(self, other: _Dual) -> _Dual:
        return _Dual(self.val + other.val, self.grad + other.grad)

    def __sub__(self, other: _Dual) -> _Dual:
        return _Dual(self.val - other.val, self.grad - other.grad)

    def __mul__(self, other: _Dual) -> _Dual:
        return _Dual(self.val * other.val,
                     self.grad * other.val + other.grad * self.val)

    def __truediv__(self, other: _Dual) -> _Dual:
        return _Dual(self.val / other.val,
                     (self.grad * other.val - self.val * other.grad)
                     / other.val ** 2)

    def power(self, other: _Dual, exponent: Optional[float]) -> _Dual:
        val = np.power(self.val, other.val)
        if exponent == 0:
            return _Dual(val, np.zeros_like(self.grad))
        if exponent is not None:
            return _Dual(val, exponent * np.power(self.val, exponent - 1)
                         * self.grad)
        return _Dual(val, val * (other.grad * np.log(self.val)
                                 + other.val * self.grad / self.val))

    def apply(self, func: str) -> _Dual:
        x = self.val
        if func == 'tanh':
            t = np.tanh(x)
            return _Dual(t, (1 - t ** 2) * self.grad)
        if func == 'exp':
            e = np.exp(x)
            return _Dual(e, e * self.grad)
        if func == 'sin':
            return _Dual(np.sin(x), np.cos(x) * self.grad)
        if func == 'cos':
            return _Dual(np.cos(x), -np.sin(x) * self.grad)
        if func == 'sqrt':
            s = np.sqrt(x)
            return _Dual(s, self.grad / (2 * s))
        if func == 'abs':
            return _Dual(np.abs(x), np.sign(x) * self.grad)
        raise ValueError(f'Unknown function {func}')


def _differentiate(node: Expr, seeds: List[_Dual], nodes: int) -> _Dual:
    if isinstance(node, Num):
        return _Dual(np.full(nodes, node.value),
                     np.zeros_like(seeds[0].grad))
    if isinstance(node, Var):
        return seeds[node.index - 1]
    if isinstance(node, Neg):
        return -_differentiate(node.operand, seeds, nodes)
    if isinstance(node, Call):
        return _differentiate(node.arg, seeds, nodes).apply(node.func)
    if isinstance(node, BinOp):
        left = _differentiate(node.left, seeds, nodes)
        right = _differentiate(node.right, seeds, nodes)
        if node.op == '+':
            return left + right
        if node.op == '-':
            return left - right
        if node.op == '*':
            return left * right
        if node.op == '/':
            return left / right
        return left.power(right, _constant(node.right))
    raise TypeError(f'Unknown node {node!r}')


@dc.dataclass(frozen=True)
class ReactionField(object):
    """Autonomous reaction term f: R^n -> R^n given by expressions.

    Attributes:
        arity: Number of species n.
        components: One expression per species.

    """

    arity: int
    components: Tuple[Expr, ...]
    _compiled: Tuple[_Compiled, ...] = dc.field(init=False, repr=False,
                                                compare=False)

    def __post_init__(self) -> None:
        """Validate the variables and compile the components."""
        if len(self.components) != self.arity:
            raise ParseError(ParseError.Reason.ARITY_MISMATCH, 0,
                             f'{len(self.components)} components for arity '
                             f'{self.arity}')
        for component in self.components:
            _check_variables(component, self.arity)
        object.__setattr__(self, '_compiled',
                           tuple(_compile(c) for c in self.components))

    @property
    def source(self) -> str:
        """Return the canonical source of the field."""
        return '; '.join(format_expr(c) for c in self.components)

    def _nodal(self, u: np.ndarray) -> Tuple[np.ndarray, bool]:
        arr = np.asarray(u, dtype=float)
        flat = arr.ndim == 1
        if flat:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] != self.arity:
            raise ValueError(f'Expected {self.arity} species, got an array '
                             f'of shape {np.shape(u)}.')
        if not np.all(np.isfinite(arr)):
            raise ValueError('Reaction inputs must be finite.')
        return arr, flat

    def _check(self, component: int, values: np.ndarray,
               u: np.ndarray) -> None:
        bad = ~np.isfinite(values)
        if np.any(bad):
            node = int(np.argwhere(bad.reshape(-1, u.shape[1]))[0][-1])
            raise EvaluationError(component, u[:, node])

    def eval(self, u: np.ndarray) -> np.ndarray:
        """Evaluate the field.

        Args:
            u: Either n species values, or an (n, m) array of nodal values.

        Returns:
            An array with the shape of ``u``.

        Raises:
            EvaluationError: If a component is NaN or infinite.

        """
        arr, flat = self._nodal(u)
        out = np.empty_like(arr)
        with np.errstate(all='ignore'):
            for i, func in enumerate(self._compiled):
                out[i] = func(arr)
        for i in range(self.arity):
            self._check(i, out[i], arr)
        return out[:, 0] if flat else out

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        """Return the exact Jacobian of :meth:`eval`.

        Args:
            u: Either n species values, or an (n, m) array of nodal values.

        Returns:
            An (n, n) matrix, or an (m, n, n) stack of nodal Jacobians.

        """
        arr, flat = self._nodal(u)
        n, m = arr.shape
        seeds = []
        for i in range(n):
            grad = np.zeros((n, m))
            grad[i] = 1.0
            seeds.append(_Dual(arr[i], grad))
        jac = np.empty((m, n, n))
        with np.errstate(all='ignore'):
            for i, component in enumerate(self.components):
                dual = _differentiate(component, seeds, m)
                self._check(i, np.broadcast_to(dual.val, (m,)), arr)
                self._check(i, dual.grad, arr)
                jac[:, i, :] = dual.grad.T
        return jac[0] if flat else jac


def _check_variables(node: Expr, arity: int) -> None:
    if isinstance(node, Var):
        if not 1 <= node.index <= arity:
            raise ParseError(ParseError.Reason.VARIABLE_OUT_OF_RANGE, 0,
                             f'u{node.index} with arity {arity}')
    if isinstance(node, Neg):
        _check_variables(node.operand, arity)
    elif isinstance(node, Call):
        _check_variables(node.arg, arity)
    elif isinstance(node, BinOp):
        _check_variables(node.left, arity)
        _check_variables(node.right, arity)


def parse(source: str, arity: int) -> ReactionField:
    """Parse a reaction field.

    Args:
        source: One expression per component, separated by semicolons.
        arity: The number of species n.

    Returns:
        The parsed field.

    Raises:
        ParseError: On syntax errors, unknown names or arity mismatch.

    """
    if arity < 1:
        raise ValueError(f'arity must be positive, got {arity}')
    components = _Parser(source, arity).field()
    if len(components) != arity:
        raise ParseError(ParseError.Reason.ARITY_MISMATCH, len(source),
                         f'{len(components)} components for arity {arity}')
    logger.debug(f'Parsed reaction field with {arity} components.')
    return ReactionField(arity=arity, components=tuple(components))
