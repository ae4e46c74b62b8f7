"""Module with the arithmetic expression language of the command line.

Expressions describe point functions of x and y, e.g. "x*(1-x)*y^2" or
"sin(pi*x)". The grammar, parsed by recursive descent, is

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := ('+' | '-') unary | power
    power := atom ('^' unary)?
    atom  := NUMBER | 'x' | 'y' | 'pi' | FUNC '(' expr ')' | '(' expr ')'
    FUNC  := 'sin' | 'cos' | 'exp'

so '^' binds tighter than unary minus and associates to the right.
Compiled expressions are vectorized: they accept numpy arrays.

This file can also be imported as a module and contains the following
functions:

    * compile_expression - parse an expression into a callable
    Expression.

"""

import re
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

_TOKEN = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)
_FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_VARIABLES = ("x", "y")


class ExpressionError(ValueError):
    """Syntax error in an expression, 'position' is the character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


Node = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _tokenize(text: str) -> List[Tuple[str, str, int]]:
    tokens = []
    position = 0
    while position < len(text):
        if text[position:].strip() == "":
            break
        match = _TOKEN.match(text, position)
        if match is None:
            start = len(text) - len(text[position:].lstrip())
            raise ExpressionError(f"Unexpected character '{text[start]}'", start)
        kind = match.lastgroup
        tokens.append((kind, match.group(kind), match.start(kind)))
        position = match.end()
    tokens.append(("end", "", len(text)))

    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.index = 0
        self.variables = set()

    @property
    def current(self) -> Tuple[str, str, int]:
        return self.tokens[self.index]

    def accept(self, *ops: str) -> str:
        kind, value, _ = self.current
        if kind == "op" and value in ops:
            self.index += 1
            return value
        return ""

    def expect(self, op: str) -> None:
        if not self.accept(op):
            _, value, position = self.current
            found = f"'{value}'" if value else "end of input"
            raise ExpressionError(f"Expected '{op}', found {found}", position)

    def parse(self) -> Node:
        node = self.expr()
        kind, value, position = self.current
        if kind != "end":
            raise ExpressionError(f"Unexpected '{value}'", position)
        return node

    def expr(self) -> Node:
        node = self.term()
        while True:
            op = self.accept("+", "-")
            if not op:
                return node
            node = _binary(op, node, self.term())

    def term(self) -> Node:
        node = self.unary()
        while True:
            op = self.accept("*", "/")
            if not op:
                return node
            node = _binary(op, node, self.unary())

    def unary(self) -> Node:
        op = self.accept("+", "-")
        if op == "-":
            operand = self.unary()
            return lambda x, y: -operand(x, y)
        if op == "+":
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.accept("^"):
            return _binary("^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, value, position = self.current
        if kind == "number":
            self.index += 1
            constant = float(value)
            return lambda x, y: constant
        if kind == "name":
            self.index += 1
            if value in _VARIABLES:
                self.variables.add(value)
                if value == "x":
                    return lambda x, y: x
                return lambda x, y: y
            if value == "pi":
                return lambda x, y: np.pi
            if value in _FUNCTIONS:
                function = _FUNCTIONS[value]
                self.expect("(")
                argument = self.expr()
                self.expect(")")
                return lambda x, y: function(argument(x, y))
            raise ExpressionError(f"Unknown name '{value}'", position)
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        found = f"'{value}'" if value else "end of input"
        raise ExpressionError(f"Expected a value, found {found}", position)


def _binary(op: str, left: Node, right: Node) -> Node:
    operation = {
        "+": np.add,
        "-": np.subtract,
        "*": np.multiply,
        "/": np.divide,
        "^": np.power,
    }[op]
    return lambda x, y: operation(left(x, y), right(x, y))


@dataclass(frozen=True)
class Expression:
    """Compiled expression, callable as expr(x, y=0.0)."""

    text: str
    variables: frozenset
    _node: Node

    def __call__(self, x, y=0.0) -> np.ndarray:
        with np.errstate(all="ignore"):
            return np.asarray(
                self._node(np.asarray(x, dtype=float), np.asarray(y, dtype=float)),
                dtype=float,
            )


def compile_expression(text: str) -> Expression:
    """Parse an expression of x and y.

    Parameters
    ----------
    text : str
        The expression.

    Returns
    -------
    Expression
        Vectorized callable; non-finite results (e.g. 1/x at x = 0) are
        returned as inf/nan without raising.

    Raises
    ------
    TypeError
        Raised if 'text' is not a string.
    ExpressionError
        Raised on a syntax error, with the offending position.
    """
    if not isinstance(text, str):
        raise TypeError("'text' should be a string")
    parser = _Parser(text)
    node = parser.parse()

    return Expression(text, frozenset(parser.variables), node)
