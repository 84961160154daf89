"""Closed-form right-hand sides given as strings.

Grammar: real literals, the coordinates ``x1``, ``x2``, ``x3``, the binary
operators ``+ - * /``, unary minus, parentheses and the functions ``exp``,
``sin``, ``cos``, ``log`` and ``pow(a, b)``.  Parsing goes through
:mod:`ast` and every node is checked against that whitelist before
evaluation, so nothing else in Python is reachable.
"""

from __future__ import annotations

import ast

import numpy as np

from .errors import SpecError

_FUNCS = {"exp": np.exp, "sin": np.sin, "cos": np.cos, "log": np.log, "pow": np.power}
_ARITY = {"exp": 1, "sin": 1, "cos": 1, "log": 1, "pow": 2}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide}
_VARS = ("x1", "x2", "x3")


class Expression:
    """A parsed scalar field f(x1, ..., xn), evaluated in float64.

    >>> Expression("1 + x1*x1").evaluate([[2.0, 0.0]])
    array([5.])
    """

    def __init__(self, text: str):
        self.text = str(text)
        try:
            tree = ast.parse(self.text.strip(), mode="eval")
        except SyntaxError as exc:
            raise SpecError(f"cannot parse expression {text!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def __repr__(self) -> str:
        return f"Expression({self.text!r})"

    def _check(self, node: ast.AST) -> None:
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise SpecError(f"unsupported literal {node.value!r}")
        elif isinstance(node, ast.Name):
            if node.id not in _VARS:
                raise SpecError(f"unknown variable {node.id!r}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise SpecError(f"unsupported operator {type(node.op).__name__}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd)):
                raise SpecError("only unary + and - are allowed")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise SpecError("unknown function in expression")
            if node.keywords or len(node.args) != _ARITY[node.func.id]:
                raise SpecError(f"{node.func.id} takes {_ARITY[node.func.id]} argument(s)")
            for a in node.args:
                self._check(a)
        else:
            raise SpecError(f"unsupported syntax: {type(node).__name__}")

    def evaluate(self, points) -> np.ndarray:
        x = np.atleast_2d(np.asarray(points, dtype=np.float64))
        env = {name: x[:, i] for i, name in enumerate(_VARS) if i < x.shape[1]}
        with np.errstate(all="ignore"):
            out = self._eval(self._tree, env)
        return np.broadcast_to(np.asarray(out, dtype=np.float64), (x.shape[0],)).copy()

    __call__ = evaluate

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return np.float64(node.value)
        if isinstance(node, ast.Name):
            if node.id not in env:
                raise SpecError(f"variable {node.id} exceeds the problem dimension")
            return env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        return _FUNCS[node.func.id](*(self._eval(a, env) for a in node.args))
