"""Scalar fields as hash-consed expression trees.

Every coefficient of a :class:`~superforms.fields.FormField` is an
:class:`Expr`.  Nodes are interned, so structurally equal subtrees are the
same object; derivatives are symbolic and memoised per node, and evaluation
is vectorised over arrays of points with a per-call cache.

The tiny text grammar accepted by :func:`parse_expression` is::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?
    atom   := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'

with identifiers ``x1 ... xn`` (or any caller supplied names), the constants
``pi`` and ``e``, and the functions ``sin cos cosh sinh exp log sqrt abs max``.
"""

from __future__ import annotations

import math
import re
import weakref
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Expr",
    "ExpressionError",
    "const",
    "var",
    "variables",
    "func",
    "maximum",
    "bump_core",
    "opaque",
    "sqrt",
    "exp",
    "log",
    "sin",
    "cos",
    "sinh",
    "cosh",
    "absolute",
    "evaluate",
    "evaluate_many",
    "gradient",
    "hessian",
    "parse_expression",
    "dot",
    "norm",
]


class ExpressionError(ValueError):
    """Raised for malformed expressions; carries the 1-based column."""

    def __init__(self, message: str, column: int | None = None, text: str | None = None):
        self.column = column
        self.text = text
        where = f" (column {column})" if column is not None else ""
        super().__init__(f"{message}{where}")


_UNARY = {
    "sin": np.sin,
    "cos": np.cos,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "sign": np.sign,
}

_TABLE: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()


class Expr:
    """Immutable node of a scalar expression.

    ``op`` is one of ``const var add mul pow func max select psi opaque``.
    Construct nodes through the helper functions and operators rather than
    calling the class directly.
    """

    __slots__ = ("op", "args", "data", "_diff", "__weakref__")

    op: str
    args: tuple["Expr", ...]
    data: object

    def __new__(cls, op: str, args: tuple = (), data: object = None):
        key = (op, args, data)
        node = _TABLE.get(key)
        if node is None:
            node = object.__new__(cls)
            node.op = op
            node.args = args
            node.data = data
            node._diff = {}
            _TABLE[key] = node
        return node

    # identity semantics: interning makes `is` structural equality
    __hash__ = object.__hash__

    def __eq__(self, other):  # pragma: no cover - identity is enough
        return self is other

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, mul(-1.0, other))

    def __rsub__(self, other):
        return add(other, mul(-1.0, self))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return mul(self, power(other, -1.0))

    def __rtruediv__(self, other):
        return mul(other, power(self, -1.0))

    def __neg__(self):
        return mul(-1.0, self)

    def __pos__(self):
        return self

    def __pow__(self, other):
        return power(self, other)

    def __rpow__(self, other):
        return power(other, self)

    # -- queries ----------------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return self.op == "const" and self.data == 0.0

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    def diff(self, k: int) -> "Expr":
        """Partial derivative with respect to variable ``k`` (0-based)."""
        cached = self._diff.get(k)
        if cached is None:
            cached = _differentiate(self, k)
            self._diff[k] = cached
        return cached

    def subs(self, mapping: Mapping[int, "Expr"]) -> "Expr":
        """Substitute variables (by index) with expressions."""
        return _substitute(self, {k: as_expr(v) for k, v in mapping.items()}, {})

    def free_variables(self) -> set[int]:
        seen: set[int] = set()
        out: set[int] = set()
        stack = [self]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            if node.op == "var":
                out.add(node.data)
            elif node.op == "opaque":
                out.update(range(node.data[2]))
            stack.extend(node.args)
        return out

    def __call__(self, x) -> np.ndarray:
        return evaluate(self, x)

    def value(self, x) -> np.ndarray:
        return evaluate(self, x)

    def gradient(self, x, n: int | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = x.shape[-1] if n is None else n
        return np.stack(evaluate_many([self.diff(k) for k in range(n)], x), axis=-1)

    def hessian(self, x, n: int | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = x.shape[-1] if n is None else n
        rows = [self.diff(i) for i in range(n)]
        entries = evaluate_many([r.diff(j) for r in rows for j in range(n)], x)
        return np.stack(entries, axis=-1).reshape(x.shape[:-1] + (n, n))

    def __repr__(self) -> str:
        return f"Expr({to_string(self)})"

    def __str__(self) -> str:
        return to_string(self)


# ---------------------------------------------------------------------------
# constructors with light canonicalisation


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float, np.integer, np.floating)):
        return const(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


def const(value: float) -> Expr:
    value = float(value)
    if value == 0.0:
        value = 0.0  # fold -0.0
    return Expr("const", (), value)


ZERO = const(0.0)
ONE = const(1.0)


def var(k: int) -> Expr:
    return Expr("var", (), int(k))


def variables(n: int) -> list[Expr]:
    return [var(k) for k in range(n)]


def add(*terms) -> Expr:
    flat: list[Expr] = []
    c = 0.0
    for t in terms:
        t = as_expr(t)
        if t.op == "add":
            for s in t.args:
                if s.op == "const":
                    c += s.data
                else:
                    flat.append(s)
        elif t.op == "const":
            c += t.data
        else:
            flat.append(t)
    if c != 0.0:
        flat.append(const(c))
    if not flat:
        return ZERO
    if len(flat) == 1:
        return flat[0]
    return Expr("add", tuple(flat))


def mul(*factors) -> Expr:
    flat: list[Expr] = []
    c = 1.0
    for f in factors:
        f = as_expr(f)
        if f.op == "mul":
            for s in f.args:
                if s.op == "const":
                    c *= s.data
                else:
                    flat.append(s)
        elif f.op == "const":
            c *= f.data
        else:
            flat.append(f)
    if c == 0.0:
        return ZERO
    if not flat:
        return const(c)
    if c != 1.0:
        flat.insert(0, const(c))
    if len(flat) == 1:
        return flat[0]
    return Expr("mul", tuple(flat))


def power(base, exponent) -> Expr:
    base = as_expr(base)
    exponent = as_expr(exponent)
    if exponent.op == "const":
        e = exponent.data
        if e == 0.0:
            return ONE
        if e == 1.0:
            return base
        if base.op == "const":
            with np.errstate(all="ignore"):
                return const(float(np.power(base.data, e)))
        if base.op == "pow" and base.args[1].op == "const" and float(e).is_integer():
            return power(base.args[0], base.args[1].data * e)
    elif base.op == "const" and base.data == 1.0:
        return ONE
    return Expr("pow", (base, exponent))


def func(name: str, arg) -> Expr:
    if name not in _UNARY:
        raise ExpressionError(f"unknown function {name!r}")
    arg = as_expr(arg)
    if arg.op == "const":
        with np.errstate(all="ignore"):
            return const(float(_UNARY[name](arg.data)))
    return Expr("func", (arg,), name)


def sqrt(u) -> Expr:
    return func("sqrt", u)


def exp(u) -> Expr:
    return func("exp", u)


def log(u) -> Expr:
    return func("log", u)


def sin(u) -> Expr:
    return func("sin", u)


def cos(u) -> Expr:
    return func("cos", u)


def sinh(u) -> Expr:
    return func("sinh", u)


def cosh(u) -> Expr:
    return func("cosh", u)


def absolute(u) -> Expr:
    return func("abs", u)


def maximum(*args) -> Expr:
    args = tuple(as_expr(a) for a in args)
    if not args:
        raise ExpressionError("max needs at least one argument")
    if len(args) == 1:
        return args[0]
    if all(a.op == "const" for a in args):
        return const(max(a.data for a in args))
    return Expr("max", args)


def _select(keys: tuple[Expr, ...], values: Sequence[Expr]) -> Expr:
    values = tuple(as_expr(v) for v in values)
    if all(v is values[0] for v in values):
        return values[0]
    return Expr("select", keys + values, len(keys))


def bump_core(s, order: int = 0) -> Expr:
    """``exp(-1/s) * s**(-order)`` for ``s > 0`` and ``0`` otherwise (C-infinity)."""
    s = as_expr(s)
    return Expr("psi", (s,), int(order))


def opaque(fn: Callable[[np.ndarray], np.ndarray], n: int, name: str = "f") -> Expr:
    """Wrap a vectorised numpy callable; derivatives use central differences.

    The step is ``eps**(1/3) * max(1, |x|)`` per differentiation.
    """
    return Expr("opaque", (), (fn, (), int(n), name))


def dot(u: Sequence, v: Sequence) -> Expr:
    return add(*[mul(a, b) for a, b in zip(u, v)])


def norm(u: Sequence) -> Expr:
    return sqrt(add(*[power(a, 2.0) for a in u]))


# ---------------------------------------------------------------------------
# differentiation


def _differentiate(node: Expr, k: int) -> Expr:
    op = node.op
    if op == "const":
        return ZERO
    if op == "var":
        return ONE if node.data == k else ZERO
    if op == "add":
        return add(*[a.diff(k) for a in node.args])
    if op == "mul":
        terms = []
        args = node.args
        for i, a in enumerate(args):
            da = a.diff(k)
            if da.is_zero:
                continue
            terms.append(mul(*args[:i], da, *args[i + 1:]))
        return add(*terms)
    if op == "pow":
        base, ex = node.args
        db = base.diff(k)
        if ex.op == "const":
            if db.is_zero:
                return ZERO
            return mul(ex.data, power(base, ex.data - 1.0), db)
        de = ex.diff(k)
        return mul(node, add(mul(de, log(base)), mul(ex, db, power(base, -1.0))))
    if op == "func":
        (u,) = node.args
        du = u.diff(k)
        if du.is_zero:
            return ZERO
        name = node.data
        if name == "sin":
            outer = cos(u)
        elif name == "cos":
            outer = mul(-1.0, sin(u))
        elif name == "sinh":
            outer = cosh(u)
        elif name == "cosh":
            outer = sinh(u)
        elif name == "exp":
            outer = node
        elif name == "log":
            outer = power(u, -1.0)
        elif name == "sqrt":
            outer = mul(0.5, power(node, -1.0))
        elif name == "abs":
            outer = func("sign", u)
        elif name == "sign":
            return ZERO
        else:  # pragma: no cover
            raise ExpressionError(f"no derivative rule for {name}")
        return mul(outer, du)
    if op == "max":
        return _select(node.args, [a.diff(k) for a in node.args])
    if op == "select":
        nk = node.data
        keys, values = node.args[:nk], node.args[nk:]
        return _select(keys, [v.diff(k) for v in values])
    if op == "psi":
        (s,) = node.args
        ds = s.diff(k)
        if ds.is_zero:
            return ZERO
        j = node.data
        # d/ds [e^{-1/s} s^{-j}] = psi_{j+2} - j psi_{j+1}
        outer = bump_core(s, j + 2)
        if j:
            outer = add(outer, mul(-float(j), bump_core(s, j + 1)))
        return mul(outer, ds)
    if op == "opaque":
        fn, index, n, name = node.data
        if k >= n:
            return ZERO
        return Expr("opaque", (), (fn, index + (k,), n, name))
    raise ExpressionError(f"unknown node {op}")  # pragma: no cover


def _substitute(node: Expr, mapping: dict[int, Expr], memo: dict[int, Expr]) -> Expr:
    hit = memo.get(id(node))
    if hit is not None:
        return hit
    op = node.op
    if op == "const":
        out = node
    elif op == "var":
        out = mapping.get(node.data, node)
    elif op == "opaque":
        raise ExpressionError("cannot substitute into an opaque field")
    else:
        args = tuple(_substitute(a, mapping, memo) for a in node.args)
        if op == "add":
            out = add(*args)
        elif op == "mul":
            out = mul(*args)
        elif op == "pow":
            out = power(*args)
        elif op == "func":
            out = func(node.data, args[0])
        elif op == "max":
            out = maximum(*args)
        elif op == "select":
            out = _select(args[: node.data], args[node.data:])
        elif op == "psi":
            out = bump_core(args[0], node.data)
        else:  # pragma: no cover
            raise ExpressionError(f"unknown node {op}")
    memo[id(node)] = out
    return out


# ---------------------------------------------------------------------------
# evaluation

_EPS3 = np.finfo(float).eps ** (1.0 / 3.0)


def _fd(fn: Callable, index: tuple[int, ...], x: np.ndarray) -> np.ndarray:
    if not index:
        return np.asarray(fn(x), dtype=float)
    k = index[-1]
    h = _EPS3 * np.maximum(1.0, np.linalg.norm(x, axis=-1))
    step = np.zeros_like(x)
    step[..., k] = h
    up = _fd(fn, index[:-1], x + step)
    down = _fd(fn, index[:-1], x - step)
    return (up - down) / (2.0 * h)


def _eval(node: Expr, x: np.ndarray, memo: dict[int, np.ndarray]) -> np.ndarray:
    hit = memo.get(id(node))
    if hit is not None:
        return hit
    op = node.op
    if op == "const":
        out = np.full(x.shape[:-1], node.data)
    elif op == "var":
        out = x[..., node.data]
    elif op == "add":
        vals = [_eval(a, x, memo) for a in node.args]
        out = vals[0] + vals[1]
        for v in vals[2:]:
            out = out + v
    elif op == "mul":
        vals = [_eval(a, x, memo) for a in node.args]
        out = vals[0] * vals[1]
        for v in vals[2:]:
            out = out * v
    elif op == "pow":
        b = _eval(node.args[0], x, memo)
        ex = node.args[1]
        if ex.op == "const":
            e = ex.data
            if e == 2.0:
                out = b * b
            elif e == -1.0:
                out = 1.0 / b
            elif e == 0.5:
                out = np.sqrt(b)
            else:
                out = np.power(b, e)
        else:
            out = np.power(b, _eval(ex, x, memo))
    elif op == "func":
        out = _UNARY[node.data](_eval(node.args[0], x, memo))
    elif op == "max":
        vals = np.stack([_eval(a, x, memo) for a in node.args])
        out = vals.max(axis=0)
    elif op == "select":
        nk = node.data
        keys = np.stack([_eval(a, x, memo) for a in node.args[:nk]])
        vals = np.stack([_eval(a, x, memo) for a in node.args[nk:]])
        idx = keys.argmax(axis=0)
        out = np.take_along_axis(vals, idx[None], axis=0)[0]
    elif op == "psi":
        s = _eval(node.args[0], x, memo)
        pos = s > 0
        safe = np.where(pos, s, 1.0)
        out = np.where(pos, np.exp(-1.0 / safe) * safe ** (-float(node.data)), 0.0)
    elif op == "opaque":
        fn, index, n, _ = node.data
        out = _fd(fn, index, x)
    else:  # pragma: no cover
        raise ExpressionError(f"unknown node {op}")
    memo[id(node)] = out
    return out


def evaluate_many(exprs: Iterable, x) -> list[np.ndarray]:
    """Evaluate several expressions at points ``x`` (shape ``(..., n)``)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    memo: dict[int, np.ndarray] = {}
    out = []
    with np.errstate(all="ignore"):
        for e in exprs:
            if isinstance(e, Expr):
                out.append(_eval(e, x, memo))
            else:
                out.append(np.full(x.shape[:-1], float(e)))
    return out


def evaluate(expr, x) -> np.ndarray:
    return evaluate_many([expr], x)[0]


def gradient(expr: Expr, n: int) -> list[Expr]:
    return [expr.diff(k) for k in range(n)]


def hessian(expr: Expr, n: int) -> list[list[Expr]]:
    g = gradient(expr, n)
    return [[gi.diff(j) for j in range(n)] for gi in g]


# ---------------------------------------------------------------------------
# printing


def to_string(node: Expr, names: Sequence[str] | None = None) -> str:
    def name(k: int) -> str:
        return names[k] if names is not None else f"x{k + 1}"

    def go(e: Expr) -> str:
        op = e.op
        if op == "const":
            return repr(e.data) if e.data >= 0 else f"({e.data!r})"
        if op == "var":
            return name(e.data)
        if op == "add":
            return "(" + " + ".join(go(a) for a in e.args) + ")"
        if op == "mul":
            return "*".join(go(a) for a in e.args)
        if op == "pow":
            return f"{go(e.args[0])}^{go(e.args[1])}"
        if op == "func":
            return f"{e.data}({go(e.args[0])})"
        if op == "max":
            return "max(" + ", ".join(go(a) for a in e.args) + ")"
        if op == "select":
            return "select(" + ", ".join(go(a) for a in e.args) + ")"
        if op == "psi":
            return f"psi{e.data}({go(e.args[0])})"
        if op == "opaque":
            idx = "".join(str(i + 1) for i in e.data[1])
            return f"{e.data[3]}{'_' + idx if idx else ''}(x)"
        return op

    return go(node)


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)

_FUNCTIONS = {"sin", "cos", "cosh", "sinh", "exp", "log", "sqrt", "abs", "max"}
_CONSTANTS = {"pi": math.pi, "e": math.e}


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            col = pos + len(text[pos:]) - len(text[pos:].lstrip()) + 1
            raise ExpressionError(f"unexpected character {text[col - 1]!r}", col, text)
        kind = m.lastgroup
        start = m.start(kind) + 1
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, names: Mapping[str, int]):
        self.text = text
        self.names = names
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, col = self.take()
        if text != value:
            got = "end of input" if kind == "end" else repr(text)
            raise ExpressionError(f"expected {value!r}, got {got}", col, self.text)

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, col = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected token {text!r}", col, self.text)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            _, o, _ = self.take()
            rhs = self.term()
            e = e + rhs if o == "+" else e - rhs
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            _, o, _ = self.take()
            rhs = self.unary()
            e = e * rhs if o == "*" else e / rhs
        return e

    def unary(self) -> Expr:
        if self.peek()[1] == "-":
            self.take()
            return -self.unary()
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return power(base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, text, col = self.take()
        if kind == "num":
            return const(float(text))
        if kind == "name":
            if self.peek()[1] == "(":
                if text not in _FUNCTIONS:
                    raise ExpressionError(f"unknown function {text!r}", col, self.text)
                self.take()
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if text == "max":
                    return maximum(*args)
                if len(args) != 1:
                    raise ExpressionError(
                        f"{text} takes 1 argument, got {len(args)}", col, self.text
                    )
                return func(text, args[0])
            if text in self.names:
                return var(self.names[text])
            if text in _CONSTANTS:
                return const(_CONSTANTS[text])
            if text in _FUNCTIONS:
                raise ExpressionError(f"function {text!r} used without arguments", col, self.text)
            raise ExpressionError(f"unknown identifier {text!r}", col, self.text)
        if text == "(":
            e = self.expr()
            self.expect(")")
            return e
        got = "end of input" if kind == "end" else repr(text)
        raise ExpressionError(f"unexpected {got}", col, self.text)


def parse_expression(text: str, variables: int | Sequence[str] | None = None) -> Expr:
    """Parse ``text`` into an :class:`Expr`.

    ``variables`` is either the ambient dimension ``n`` (identifiers
    ``x1..xn``), an explicit list of names, or ``None`` to accept any
    ``x<k>``.
    """
    if variables is None:
        names = {f"x{k}": k - 1 for k in range(1, 65)}
    elif isinstance(variables, int):
        names = {f"x{k}": k - 1 for k in range(1, variables + 1)}
    else:
        names = {name: k for k, name in enumerate(variables)}
    return _Parser(text, names).parse()
