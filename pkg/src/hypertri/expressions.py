"""Recursive-descent parser for the scenario expression grammar.

Grammar (whitespace insensitive):

    expr    := term (('+' | '-') term)*
    term    := factor (('*' | '/') factor)*
    factor  := '-' factor | power
    power   := atom ('^' exponent)?      # base must be bracket(xi)
    atom    := NUMBER | 't' | 'x' | 'xi'
             | ('sin' | 'cos' | 'exp' | 'bracket') '(' expr ')'
             | '(' expr ')'
    exponent:= NUMBER | '(' '-'? NUMBER ')'

``bracket`` must be applied to the bare variable ``xi``; real powers are
allowed on bracket only, which keeps every expression pole-free on the
evaluation domain.  Orders are inferred structurally: xi and bracket have
order 1, constants and the bounded functions order 0, products add,
quotients subtract, sums take the maximum.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .symbols import ScalarSymbol, VANISHING_ORDER

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\^|[()+\-*/]))"
)

_FUNCS = ("sin", "cos", "exp", "bracket")
_VARS = ("t", "x", "xi")


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(src: str):
    toks = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            if src[pos:].strip() == "":
                break
            raise ParseError(f"unexpected character {src[pos]!r} at position {pos}", position=pos)
        if m.lastgroup == "num":
            toks.append(_Tok("num", m.group("num"), m.start("num")))
        elif m.lastgroup == "name":
            toks.append(_Tok("name", m.group("name"), m.start("name")))
        else:
            toks.append(_Tok("op", m.group("op"), m.start("op")))
        pos = m.end()
    toks.append(_Tok("end", "", len(src)))
    return toks


# AST nodes are tuples:
#   ("num", value) ("var", name) ("call", fn, arg)
#   ("add"|"sub"|"mul"|"div", lhs, rhs) ("neg", arg) ("pow", base, p)


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str) -> _Tok:
        tok = self.take()
        if tok.kind != "op" or tok.text != op:
            raise ParseError(f"expected {op!r} at position {tok.pos} in {self.src!r}", position=tok.pos)
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"trailing input at position {tok.pos} in {self.src!r}", position=tok.pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.take().text
            rhs = self.term()
            node = ("add" if op == "+" else "sub", node, rhs)
        return node

    def term(self):
        node = self.factor()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.take().text
            rhs = self.factor()
            node = ("mul" if op == "*" else "div", node, rhs)
        return node

    def factor(self):
        if self.peek().kind == "op" and self.peek().text == "-":
            self.take()
            return ("neg", self.factor())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            tok = self.take()
            if base[0] != "call" or base[1] != "bracket":
                raise ParseError(
                    f"'^' only applies to bracket(xi), at position {tok.pos}", position=tok.pos
                )
            p = self.exponent()
            return ("pow", base, p)
        return base

    def exponent(self) -> float:
        tok = self.peek()
        if tok.kind == "num":
            return float(self.take().text)
        if tok.kind == "op" and tok.text == "(":
            self.take()
            sign = 1.0
            if self.peek().kind == "op" and self.peek().text == "-":
                self.take()
                sign = -1.0
            num = self.take()
            if num.kind != "num":
                raise ParseError(f"expected a number at position {num.pos}", position=num.pos)
            self.expect_op(")")
            return sign * float(num.text)
        raise ParseError(f"expected an exponent at position {tok.pos}", position=tok.pos)

    def atom(self):
        tok = self.take()
        if tok.kind == "num":
            return ("num", float(tok.text))
        if tok.kind == "name":
            if tok.text in _VARS:
                return ("var", tok.text)
            if tok.text in _FUNCS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                if tok.text == "bracket" and arg != ("var", "xi"):
                    raise ParseError(
                        f"bracket takes the bare variable xi, at position {tok.pos}",
                        position=tok.pos,
                    )
                return ("call", tok.text, arg)
            raise ParseError(f"unknown name {tok.text!r} at position {tok.pos}", position=tok.pos)
        if tok.kind == "op" and tok.text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ParseError(f"unexpected token {tok.text!r} at position {tok.pos}", position=tok.pos)


def parse(src: str):
    """Parse an expression string to its AST."""
    return _Parser(src).parse()


def _order(node) -> float:
    kind = node[0]
    if kind == "num":
        return VANISHING_ORDER if node[1] == 0 else 0.0
    if kind == "var":
        return 1.0 if node[1] == "xi" else 0.0
    if kind == "call":
        fn, arg = node[1], node[2]
        if fn == "bracket":
            return 1.0
        argord = _order(arg)
        if fn == "exp" and argord > 0:
            raise ParseError("exp of a positive-order argument is unbounded")
        return 0.0
    if kind in ("add", "sub"):
        return max(_order(node[1]), _order(node[2]))
    if kind == "mul":
        a, b = _order(node[1]), _order(node[2])
        if a == VANISHING_ORDER or b == VANISHING_ORDER:
            return VANISHING_ORDER
        return a + b
    if kind == "div":
        a, b = _order(node[1]), _order(node[2])
        if b == VANISHING_ORDER:
            raise ParseError("division by the constant zero")
        return (a if a == VANISHING_ORDER else a - b)
    if kind == "neg":
        return _order(node[1])
    if kind == "pow":
        return float(node[2])
    raise ParseError(f"unknown node {kind!r}")


def _depends(node, var: str) -> bool:
    kind = node[0]
    if kind == "num":
        return False
    if kind == "var":
        return node[1] == var
    if kind == "call":
        return _depends(node[2], var)
    if kind in ("add", "sub", "mul", "div"):
        return _depends(node[1], var) or _depends(node[2], var)
    if kind == "neg":
        return _depends(node[1], var)
    if kind == "pow":
        return _depends(node[1], var)
    raise ParseError(f"unknown node {kind!r}")


def _is_zero(node) -> bool:
    return node == ("num", 0.0) or (node[0] == "neg" and _is_zero(node[1]))


def _evaluate(node, t, x, xi):
    kind = node[0]
    if kind == "num":
        return node[1]
    if kind == "var":
        return {"t": t, "x": x, "xi": xi}[node[1]]
    if kind == "call":
        arg = _evaluate(node[2], t, x, xi)
        if node[1] == "sin":
            return np.sin(arg)
        if node[1] == "cos":
            return np.cos(arg)
        if node[1] == "exp":
            return np.exp(arg)
        return np.sqrt(1.0 + np.asarray(arg) ** 2)
    if kind == "add":
        return _evaluate(node[1], t, x, xi) + _evaluate(node[2], t, x, xi)
    if kind == "sub":
        return _evaluate(node[1], t, x, xi) - _evaluate(node[2], t, x, xi)
    if kind == "mul":
        return _evaluate(node[1], t, x, xi) * _evaluate(node[2], t, x, xi)
    if kind == "div":
        return _evaluate(node[1], t, x, xi) / _evaluate(node[2], t, x, xi)
    if kind == "neg":
        return -_evaluate(node[1], t, x, xi)
    if kind == "pow":
        arg = _evaluate(node[1][2], t, x, xi)
        return np.power(1.0 + np.asarray(arg) ** 2, 0.5 * node[2])
    raise ParseError(f"unknown node {kind!r}")


def compile_symbol(src: str, allowed_vars=("t", "x", "xi")) -> ScalarSymbol:
    """Parse and compile an expression string to a ScalarSymbol.

    The declared order and the t/x dependence flags are inferred from the
    tree; disallowed variables raise ParseError.
    """
    node = parse(src)
    for v in _VARS:
        if v not in allowed_vars and _depends(node, v):
            raise ParseError(f"variable {v!r} is not allowed in {src!r}")
    if _is_zero(node):
        from .symbols import zero_symbol

        return zero_symbol()
    order = _order(node)
    dep_t = _depends(node, "t")
    dep_x = _depends(node, "x")

    def fn(t, x, xi):
        val = _evaluate(node, t, np.asarray(x), np.asarray(xi))
        out = np.asarray(val, dtype=complex)
        shape = np.broadcast(np.asarray(x), np.asarray(xi)).shape
        return np.broadcast_to(out, shape)

    return ScalarSymbol(
        fn,
        order=0.0 if order == VANISHING_ORDER else order,
        depends_t=dep_t,
        depends_x=dep_x,
        name=src,
    )
