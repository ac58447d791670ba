"""Symbolic scalar expressions over named variables.

Expressions are immutable trees.  Smart constructors fold constant subtrees
and drop neutral elements (``x + 0``, ``1 * x``, ``x ^ 1``) so the folded form
is canonical; no other algebraic rewriting is done.

Grammar accepted by :func:`parse` (and produced by :func:`to_text`)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' power)?          # '**' is accepted for '^'
    atom   := number | name | func '(' expr (',' expr)* ')' | '(' expr ')'

Exponents must fold to non-negative integer constants.
"""

from __future__ import annotations

import math
import re
from typing import Callable, Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from . import interval as iv

__all__ = [
    "Expr", "Const", "Var", "parse", "to_text", "differentiate", "evaluate",
    "eval_interval", "interval_bounds", "lambdify", "substitute", "free_vars",
    "is_globally_bounded", "is_zero", "abstract_bounded", "contract", "ExprSyntaxError", "UnknownSymbol",
    "EvalError", "DomainError",
]


class ExprSyntaxError(SyntaxError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownSymbol(NameError):
    def __init__(self, name: str):
        super().__init__(f"unknown symbol {name!r}")
        self.name = name


class EvalError(ArithmeticError):
    pass


class DomainError(ValueError):
    pass


UNARY_FUNCS = ("sin", "cos", "tanh", "exp", "sqrt", "abs")
BINARY_FUNCS = ("min", "max")


class Expr:
    """A node of an expression tree.

    ``op`` is one of ``const var neg add sub mul div pow`` or a function name.
    ``value`` holds the constant for ``const`` and the integer exponent for
    ``pow``; ``name`` holds the variable name for ``var``.
    """

    __slots__ = ("op", "args", "value", "name", "_hash")

    def __init__(self, op: str, args: Tuple["Expr", ...] = (), value=None, name=None):
        self.op = op
        self.args = args
        self.value = value
        self.name = name
        self._hash = hash((op, args, value, name))

    def _key(self):
        return (self.op, self.args, self.value, self.name)

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Expr) or self._hash != other._hash:
            return False
        return self._key() == other._key()

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Expr({to_text(self)!r})"

    def __str__(self):
        return to_text(self)

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    # operator sugar, used heavily when assembling verification queries
    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __pow__(self, k):
        return power(self, k)

    def __neg__(self):
        return neg(self)


def _coerce(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return Const(float(x))


def Const(v: float) -> Expr:
    v = float(v)
    if v == 0.0:
        v = 0.0  # normalise -0.0
    return Expr("const", value=v)


def Var(name: str) -> Expr:
    return Expr("var", name=name)


ZERO = Const(0.0)
ONE = Const(1.0)


def _isc(e: Expr, v: float) -> bool:
    return e.op == "const" and e.value == v


def is_zero(e: Expr) -> bool:
    return _isc(e, 0.0)


def neg(a: Expr) -> Expr:
    if a.op == "const":
        return Const(-a.value)
    if a.op == "neg":
        return a.args[0]
    return Expr("neg", (a,))


def add(a: Expr, b: Expr) -> Expr:
    if a.op == "const" and b.op == "const":
        return Const(a.value + b.value)
    if _isc(a, 0.0):
        return b
    if _isc(b, 0.0):
        return a
    return Expr("add", (a, b))


def sub(a: Expr, b: Expr) -> Expr:
    if a.op == "const" and b.op == "const":
        return Const(a.value - b.value)
    if _isc(b, 0.0):
        return a
    if _isc(a, 0.0):
        return neg(b)
    return Expr("sub", (a, b))


def mul(a: Expr, b: Expr) -> Expr:
    if a.op == "const" and b.op == "const":
        return Const(a.value * b.value)
    if _isc(a, 0.0) or _isc(b, 0.0):
        return ZERO
    if _isc(a, 1.0):
        return b
    if _isc(b, 1.0):
        return a
    return Expr("mul", (a, b))


def div(a: Expr, b: Expr) -> Expr:
    if b.op == "const" and b.value != 0.0:
        if a.op == "const":
            return Const(a.value / b.value)
        if b.value == 1.0:
            return a
    if _isc(a, 0.0) and not _isc(b, 0.0):
        return ZERO
    return Expr("div", (a, b))


def power(a: Expr, k) -> Expr:
    if isinstance(k, Expr):
        if k.op != "const":
            raise DomainError("exponent must be a constant")
        k = k.value
    if float(k) != int(k) or k < 0:
        raise DomainError(f"exponent must be a non-negative integer, got {k}")
    k = int(k)
    if k == 0:
        return ONE
    if k == 1:
        return a
    if a.op == "const":
        return Const(a.value**k)
    return Expr("pow", (a,), value=k)


_FOLD = {
    "sin": math.sin, "cos": math.cos, "tanh": math.tanh, "exp": math.exp,
    "sqrt": math.sqrt, "abs": abs,
}


def func(name: str, *args: Expr) -> Expr:
    if name in BINARY_FUNCS:
        a, b = args
        if a.op == "const" and b.op == "const":
            return Const(min(a.value, b.value) if name == "min" else max(a.value, b.value))
        return Expr(name, (a, b))
    (a,) = args
    if a.op == "const":
        try:
            return Const(_FOLD[name](a.value))
        except (ValueError, OverflowError):
            pass
    return Expr(name, (a,))


def sin(a):
    return func("sin", _coerce(a))


def cos(a):
    return func("cos", _coerce(a))


def tanh(a):
    return func("tanh", _coerce(a))


def exp(a):
    return func("exp", _coerce(a))


def sqrt(a):
    return func("sqrt", _coerce(a))


def fabs(a):
    return func("abs", _coerce(a))


def fmin(a, b):
    return func("min", _coerce(a), _coerce(b))


def fmax(a, b):
    return func("max", _coerce(a), _coerce(b))


def sum_exprs(terms: Iterable[Expr]) -> Expr:
    out = ZERO
    for t in terms:
        out = add(out, t)
    return out


_MAX_DISTRIBUTE = 16


def _terms(e: Expr) -> list:
    """Additive terms ``[(coef, monomial or None)]``; small products of sums
    are distributed, anything else is an opaque monomial."""
    op = e.op
    if op == "const":
        return [(e.value, None)]
    if op == "neg":
        return [(-c, t) for c, t in _terms(e.args[0])]
    if op in ("add", "sub"):
        s = -1.0 if op == "sub" else 1.0
        return _terms(e.args[0]) + [(s * c, t) for c, t in _terms(e.args[1])]
    if op == "mul":
        ta, tb = _terms(e.args[0]), _terms(e.args[1])
        if len(ta) * len(tb) <= _MAX_DISTRIBUTE:
            out = []
            for ca, a in ta:
                for cb, b in tb:
                    m = a if b is None else b if a is None else mul(a, b)
                    out.append((ca * cb, m))
            return out
    if op == "div" and e.args[1].op == "const" and e.args[1].value != 0.0:
        k = e.args[1].value
        return [(c / k, t) for c, t in _terms(e.args[0])]
    return [(1.0, e)]


def _rebuild_sum(terms) -> Expr:
    out = ZERO
    for c, t in terms:
        if c == 0.0:
            continue
        if t is None:
            out = add(out, Const(c)) if c > 0 or is_zero(out) else sub(out, Const(-c))
            continue
        body = t if abs(c) == 1.0 else mul(Const(abs(c)), t)
        if is_zero(out):
            out = body if c > 0 else neg(body)
        else:
            out = add(out, body) if c > 0 else sub(out, body)
    return out


def collect(e: Expr, linear: Mapping[str, float] = None) -> Expr:
    """Merge like additive terms of ``e`` after subtracting ``sum_v linear[v] * v``.

    Only syntactically equal monomials merge, so this is a cancellation
    pass rather than a normal form.
    """
    coef, order = {}, []
    for c, t in _terms(e):
        if t not in coef:
            coef[t] = 0.0
            order.append(t)
        coef[t] += c
    for v, c in (linear or {}).items():
        t = Var(v)
        if t not in coef:
            coef[t] = 0.0
            order.append(t)
        coef[t] -= c
    return _rebuild_sum((coef[t], t) for t in order)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)"
    r"|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        start = m.start(m.lastgroup)
        kind = m.lastgroup
        tok = m.group(kind)
        if tok == "**":
            tok = "^"
        tokens.append((kind, tok, start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str, variables: Sequence[str]):
        self.tokens = _tokenize(text)
        self.i = 0
        self.vars = set(variables)

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, sym: str):
        kind, tok, pos = self.take()
        if tok != sym or kind == "end":
            raise ExprSyntaxError(f"expected {sym!r}", pos)

    def parse(self) -> Expr:
        e = self.expr()
        kind, tok, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {tok!r}", pos)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def unary(self) -> Expr:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return neg(self.unary())
        if self.peek()[0] == "op" and self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            pos = self.take()[2]
            exponent = self.power()
            if exponent.op != "const":
                raise ExprSyntaxError("exponent must be a numeric constant", pos)
            k = exponent.value
            if k < 0 or k != int(k):
                raise ExprSyntaxError("exponent must be a non-negative integer", pos)
            return power(base, int(k))
        return base

    def atom(self) -> Expr:
        kind, tok, pos = self.take()
        if kind == "num":
            return Const(float(tok))
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if tok not in UNARY_FUNCS and tok not in BINARY_FUNCS:
                    raise UnknownSymbol(tok)
                self.take()
                args = [self.expr()]
                while self.peek()[1] == "," and self.peek()[0] == "op":
                    self.take()
                    args.append(self.expr())
                want = 2 if tok in BINARY_FUNCS else 1
                if len(args) != want:
                    raise ExprSyntaxError(f"{tok} takes {want} argument(s)", pos)
                self.expect(")")
                return func(tok, *args)
            if tok not in self.vars:
                raise UnknownSymbol(tok)
            return Var(tok)
        if kind == "op" and tok == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "end":
            raise ExprSyntaxError("unexpected end of input", pos)
        raise ExprSyntaxError(f"unexpected token {tok!r}", pos)


def parse(text: str, variables: Sequence[str]) -> Expr:
    """Parse infix ``text`` into a canonical :class:`Expr`."""
    return _Parser(text, variables).parse()


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
_SYM = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


def _prec(e: Expr) -> int:
    if e.op == "const" and e.value < 0:
        return 3
    return _PREC.get(e.op, 5)


def to_text(e: Expr) -> str:
    op = e.op
    if op == "const":
        return repr(e.value)
    if op == "var":
        return e.name
    if op == "neg":
        (a,) = e.args
        inner = to_text(a)
        if _prec(a) < 3 or (a.op == "const"):
            inner = f"({inner})"
        return "-" + inner
    if op in _SYM:
        a, b = e.args
        p = _PREC[op]
        left = to_text(a)
        right = to_text(b)
        if _prec(a) < p:
            left = f"({left})"
        if _prec(b) <= p:
            right = f"({right})"
        return f"{left}{_SYM[op]}{right}" if p == 2 else f"{left} {_SYM[op]} {right}"
    if op == "pow":
        (a,) = e.args
        base = to_text(a)
        if _prec(a) <= 4:
            base = f"({base})"
        return f"{base}^{e.value}"
    return f"{op}(" + ", ".join(to_text(a) for a in e.args) + ")"


# ---------------------------------------------------------------------------
# structure
# ---------------------------------------------------------------------------


def _postorder(e: Expr) -> List[Expr]:
    """Distinct nodes (by identity) with children before parents."""
    seen = set()
    order: List[Expr] = []
    stack = [(e, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for a in reversed(node.args):
            if id(a) not in seen:
                stack.append((a, False))
    return order


def free_vars(e: Expr) -> set:
    return {n.name for n in _postorder(e) if n.op == "var"}


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    memo: Dict[int, Expr] = {}
    for node in _postorder(e):
        if node.op == "var":
            out = mapping.get(node.name, node)
        elif node.op == "const":
            out = node
        else:
            args = tuple(memo[id(a)] for a in node.args)
            out = _rebuild(node, args)
        memo[id(node)] = out
    return memo[id(e)]


def _rebuild(node: Expr, args: Tuple[Expr, ...]) -> Expr:
    op = node.op
    if op == "neg":
        return neg(*args)
    if op == "add":
        return add(*args)
    if op == "sub":
        return sub(*args)
    if op == "mul":
        return mul(*args)
    if op == "div":
        return div(*args)
    if op == "pow":
        return power(args[0], node.value)
    return func(op, *args)


def is_globally_bounded(e: Expr) -> bool:
    """True if every variable occurrence sits under a sin, cos or tanh and no
    division has a non-constant denominator."""

    def walk(node: Expr, shielded: bool) -> bool:
        if node.op == "var":
            return shielded
        if node.op == "const":
            return True
        if node.op in ("sin", "cos", "tanh"):
            return walk(node.args[0], True)
        if node.op == "div" and node.args[1].op != "const":
            return False
        return all(walk(a, shielded) for a in node.args)

    return walk(e, False)


def abstract_bounded(exprs: Sequence[Expr], prefix: str = "_s"):
    """Replace each variable-dependent sin/cos/tanh subtree by a fresh
    variable ranging over [-1, 1].

    Structurally equal subtrees share one fresh variable.  Returns the
    rewritten expressions and the ordered fresh names, or ``None`` if some
    variable occurrence is not shielded.
    """
    if not all(is_globally_bounded(e) for e in exprs):
        return None
    fresh: Dict[Expr, str] = {}

    def rewrite(node: Expr) -> Expr:
        if node.op in ("sin", "cos", "tanh") and free_vars(node):
            if node not in fresh:
                fresh[node] = f"{prefix}{len(fresh)}"
            return Var(fresh[node])
        if not node.args:
            return node
        return _rebuild(node, tuple(rewrite(a) for a in node.args))

    out = [rewrite(e) for e in exprs]
    return out, list(fresh.values())


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------


def differentiate(e: Expr, v: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to variable ``v``."""
    memo: Dict[int, Expr] = {}
    for node in _postorder(e):
        memo[id(node)] = _d(node, v, memo)
    return memo[id(e)]


def _d(node: Expr, v: str, memo) -> Expr:
    op = node.op
    if op == "const":
        return ZERO
    if op == "var":
        return ONE if node.name == v else ZERO
    da = [memo[id(a)] for a in node.args]
    if op == "neg":
        return neg(da[0])
    if op == "add":
        return add(da[0], da[1])
    if op == "sub":
        return sub(da[0], da[1])
    a = node.args[0]
    if op == "mul":
        b = node.args[1]
        return add(mul(da[0], b), mul(a, da[1]))
    if op == "div":
        b = node.args[1]
        if _isc(da[1], 0.0):
            return div(da[0], b)
        return div(sub(mul(da[0], b), mul(a, da[1])), power(b, 2))
    if _isc(da[0], 0.0):
        return ZERO
    if op == "pow":
        k = node.value
        return mul(mul(Const(k), power(a, k - 1)), da[0])
    if op == "sin":
        return mul(cos(a), da[0])
    if op == "cos":
        return neg(mul(sin(a), da[0]))
    if op == "tanh":
        return mul(sub(ONE, power(node, 2)), da[0])
    if op == "exp":
        return mul(node, da[0])
    if op == "sqrt":
        return div(da[0], mul(Const(2.0), node))
    raise DomainError(f"{op} is not differentiable here (verification queries only)")


# ---------------------------------------------------------------------------
# point evaluation
# ---------------------------------------------------------------------------

_MATH = {
    "sin": math.sin, "cos": math.cos, "tanh": math.tanh, "exp": math.exp,
    "sqrt": math.sqrt, "abs": abs, "min": min, "max": max,
}


def evaluate(e: Expr, point: Sequence[float], variables: Sequence[str]) -> float:
    """IEEE double evaluation; raises :class:`EvalError` on poles, domain
    violations and non-finite results."""
    if len(point) != len(variables):
        raise ValueError("point length does not match the variable list")
    env = dict(zip(variables, map(float, point)))
    memo: Dict[int, float] = {}
    try:
        for node in _postorder(e):
            op = node.op
            if op == "const":
                val = node.value
            elif op == "var":
                try:
                    val = env[node.name]
                except KeyError:
                    raise UnknownSymbol(node.name) from None
            else:
                xs = [memo[id(a)] for a in node.args]
                if op == "neg":
                    val = -xs[0]
                elif op == "add":
                    val = xs[0] + xs[1]
                elif op == "sub":
                    val = xs[0] - xs[1]
                elif op == "mul":
                    val = xs[0] * xs[1]
                elif op == "div":
                    val = xs[0] / xs[1]
                elif op == "pow":
                    val = xs[0] ** node.value
                else:
                    val = _MATH[op](*xs)
            if isinstance(val, complex) or not math.isfinite(val):
                raise EvalError(f"non-finite value in {op}")
            memo[id(node)] = val
    except ZeroDivisionError as exc:
        raise EvalError("division by zero") from exc
    except (ValueError, OverflowError) as exc:
        raise EvalError(str(exc)) from exc
    return memo[id(e)]


_NP = {
    "sin": "np.sin", "cos": "np.cos", "tanh": "np.tanh", "exp": "np.exp",
    "sqrt": "np.sqrt", "abs": "np.abs", "min": "np.minimum", "max": "np.maximum",
}

_LAMBDA_CACHE: Dict[Tuple[Expr, Tuple[str, ...]], Callable] = {}


def lambdify(e: Expr, variables: Sequence[str]) -> Callable[[np.ndarray], np.ndarray]:
    """Compile ``e`` to a numpy function of an ``(m, n)`` array of points."""
    key = (e, tuple(variables))
    fn = _LAMBDA_CACHE.get(key)
    if fn is not None:
        return fn
    index = {v: i for i, v in enumerate(variables)}
    names: Dict[int, str] = {}
    lines = []
    for k, node in enumerate(_postorder(e)):
        op = node.op
        if op == "const":
            src = repr(node.value)
        elif op == "var":
            if node.name not in index:
                raise UnknownSymbol(node.name)
            src = f"X[..., {index[node.name]}]"
        else:
            a = [names[id(x)] for x in node.args]
            if op == "neg":
                src = f"-{a[0]}"
            elif op in _SYM:
                src = f"{a[0]} {_SYM[op]} {a[1]}"
            elif op == "pow":
                src = f"{a[0]} ** {node.value}"
            else:
                src = f"{_NP[op]}(" + ", ".join(a) + ")"
        names[id(node)] = f"t{k}"
        lines.append(f"    t{k} = {src}")
    body = "\n".join(lines)
    src = f"def _f(X):\n{body}\n    return t{len(lines) - 1} + np.zeros(X.shape[:-1])\n"
    scope = {"np": np}
    exec(src, scope)
    fn = scope["_f"]
    _LAMBDA_CACHE[key] = fn
    return fn


# ---------------------------------------------------------------------------
# interval evaluation
# ---------------------------------------------------------------------------


def _forward(e: Expr, lo: np.ndarray, hi: np.ndarray, index: Mapping[str, int]):
    """Natural interval extension over a batch of boxes.

    ``lo``/``hi`` have shape ``(m, n)``.  Returns the per-node enclosures
    (keyed by node identity) and the post-order node list.
    """
    order = _postorder(e)
    shape = lo.shape[:-1]
    out: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
    for node in order:
        op = node.op
        if op == "const":
            c = np.full(shape, node.value)
            r = (c, c)
        elif op == "var":
            try:
                j = index[node.name]
            except KeyError:
                raise UnknownSymbol(node.name) from None
            r = (lo[..., j], hi[..., j])
        else:
            xs = [out[id(a)] for a in node.args]
            if op == "neg":
                r = iv.ineg(*xs[0])
            elif op == "add":
                r = iv.iadd(*xs[0], *xs[1])
            elif op == "sub":
                r = iv.isub(*xs[0], *xs[1])
            elif op == "mul":
                a, b = node.args
                if a.op == "const":
                    r = iv.iscale(a.value, *xs[1])
                elif b.op == "const":
                    r = iv.iscale(b.value, *xs[0])
                elif a == b:
                    r = iv.ipow(*xs[0], 2)
                else:
                    r = iv.imul(*xs[0], *xs[1])
            elif op == "div":
                r = iv.idiv(*xs[0], *xs[1])
            elif op == "pow":
                r = iv.ipow(*xs[0], node.value)
            elif op == "sin":
                r = iv.isin(*xs[0])
            elif op == "cos":
                r = iv.icos(*xs[0])
            elif op == "tanh":
                r = iv.itanh(*xs[0])
            elif op == "exp":
                r = iv.iexp(*xs[0])
            elif op == "sqrt":
                r = iv.isqrt(*xs[0])
            elif op == "abs":
                r = iv.iabs(*xs[0])
            elif op == "min":
                r = iv.imin(*xs[0], *xs[1])
            elif op == "max":
                r = iv.imax(*xs[0], *xs[1])
            else:  # pragma: no cover - constructors prevent this
                raise DomainError(op)
        out[id(node)] = r
    return out, order


def interval_bounds(e: Expr, lo: np.ndarray, hi: np.ndarray, variables: Sequence[str]):
    """Vectorized enclosure of ``e`` over boxes ``[lo, hi]`` of shape ``(m, n)``.

    Entries touching a pole or a sqrt of a negative come back as +-inf.
    """
    index = {v: i for i, v in enumerate(variables)}
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    out, _ = _forward(e, lo, hi, index)
    rl, rh = out[id(e)]
    rl = np.broadcast_to(rl, lo.shape[:-1])
    rh = np.broadcast_to(rh, lo.shape[:-1])
    bad = np.isnan(rl) | np.isnan(rh)
    return np.where(bad, -np.inf, rl), np.where(bad, np.inf, rh)


def eval_interval(e: Expr, box, variables: Sequence[str]) -> iv.Interval:
    """Sound enclosure of ``{e(x) : x in box}``."""
    box = iv.Box(box)
    if box.dim != len(variables):
        raise ValueError("box dimension does not match the variable list")
    rl, rh = interval_bounds(e, box.lo[None, :], box.hi[None, :], variables)
    lo, hi = float(rl[0]), float(rh[0])
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise EvalError("box meets a singularity")
    return iv.Interval(lo, hi)


# ---------------------------------------------------------------------------
# HC4-style contraction for a constraint  e(x) <= bound
# ---------------------------------------------------------------------------


def _bw_pow_even(nl, nh, al, ah, k):
    nl = np.maximum(nl, 0.0)
    with np.errstate(invalid="ignore"):
        rl = nl ** (1.0 / k)
        rh = nh ** (1.0 / k)
    rl, rh = iv.widen(rl, rh)
    rl = np.maximum(rl, 0.0)
    empty = nh < 0
    pos = al >= 0
    negside = ah <= 0
    lo = np.where(pos, rl, -rh)
    hi = np.where(negside, -rl, rh)
    # straddling boxes: the preimage is [-rh, -rl] U [rl, rh]; keep its hull
    # unless one branch misses the current box entirely
    straddle = ~pos & ~negside
    left_dead = -rl < al
    right_dead = rl > ah
    lo = np.where(straddle & left_dead, rl, lo)
    hi = np.where(straddle & right_dead, -rl, hi)
    lo = np.where(empty, np.inf, lo)
    hi = np.where(empty, -np.inf, hi)
    return lo, hi


def _bw_pow_odd(nl, nh, k):
    rl = np.sign(nl) * np.abs(nl) ** (1.0 / k)
    rh = np.sign(nh) * np.abs(nh) ** (1.0 / k)
    return iv.widen(rl, rh)


def contract(e: Expr, bound, lo: np.ndarray, hi: np.ndarray, variables: Sequence[str]):
    """Narrow boxes to the points that can satisfy ``e(x) <= bound``.

    Returns ``(lo, hi, feasible)``; boxes with ``feasible == False`` contain no
    solution.  Only sound narrowing rules are applied; nodes without a cheap
    inverse (sin, cos, min, max, div denominators) pass through unchanged.
    """
    index = {v: i for i, v in enumerate(variables)}
    lo = np.array(lo, float, copy=True)
    hi = np.array(hi, float, copy=True)
    fwd, order = _forward(e, lo, hi, index)
    shape = lo.shape[:-1]
    nar: Dict[int, List[np.ndarray]] = {}
    for node in order:
        a, b = fwd[id(node)]
        nar[id(node)] = [np.broadcast_to(a, shape).astype(float), np.broadcast_to(b, shape).astype(float)]
    root = nar[id(e)]
    root[1] = np.minimum(root[1], bound)
    feasible = np.ones(shape, dtype=bool)

    def narrow(node: Expr, nl, nh):
        cur = nar[id(node)]
        with np.errstate(invalid="ignore"):
            nl = np.where(np.isnan(nl), -np.inf, nl)
            nh = np.where(np.isnan(nh), np.inf, nh)
        cur[0] = np.maximum(cur[0], nl)
        cur[1] = np.minimum(cur[1], nh)

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for node in reversed(order):
            nl, nh = nar[id(node)]
            feasible &= nl <= nh
            op = node.op
            if op in ("const", "var"):
                continue
            args = node.args
            if op == "neg":
                narrow(args[0], *iv.ineg(nl, nh))
            elif op == "add":
                a, b = (nar[id(x)] for x in args)
                narrow(args[0], *iv.isub(nl, nh, b[0], b[1]))
                narrow(args[1], *iv.isub(nl, nh, a[0], a[1]))
            elif op == "sub":
                a, b = (nar[id(x)] for x in args)
                narrow(args[0], *iv.iadd(nl, nh, b[0], b[1]))
                narrow(args[1], *iv.isub(a[0], a[1], nl, nh))
            elif op == "mul":
                a, b = (nar[id(x)] for x in args)
                if args[0] == args[1]:
                    sq = _bw_pow_even(nl, nh, a[0], a[1], 2)
                    narrow(args[0], *sq)
                    narrow(args[1], *sq)
                    continue
                ok_b = (b[0] > 0) | (b[1] < 0)
                ql, qh = iv.idiv(nl, nh, np.where(ok_b, b[0], 1.0), np.where(ok_b, b[1], 1.0))
                narrow(args[0], np.where(ok_b, ql, -np.inf), np.where(ok_b, qh, np.inf))
                a = nar[id(args[0])]
                ok_a = (a[0] > 0) | (a[1] < 0)
                ql, qh = iv.idiv(nl, nh, np.where(ok_a, a[0], 1.0), np.where(ok_a, a[1], 1.0))
                narrow(args[1], np.where(ok_a, ql, -np.inf), np.where(ok_a, qh, np.inf))
            elif op == "div":
                b = nar[id(args[1])]
                ok_b = (b[0] > 0) | (b[1] < 0)
                finite = np.isfinite(nl) & np.isfinite(nh)
                pl, ph = iv.imul(np.where(finite, nl, 0.0), np.where(finite, nh, 0.0), b[0], b[1])
                use = ok_b & finite
                narrow(args[0], np.where(use, pl, -np.inf), np.where(use, ph, np.inf))
            elif op == "pow":
                a = nar[id(args[0])]
                k = node.value
                if k % 2 == 0:
                    narrow(args[0], *_bw_pow_even(nl, nh, a[0], a[1], k))
                else:
                    narrow(args[0], *_bw_pow_odd(nl, nh, k))
            elif op == "sqrt":
                cl = np.maximum(nl, 0.0)
                narrow(args[0], *iv.widen(np.where(nh < 0, np.inf, cl * cl), nh * np.abs(nh)))
            elif op == "exp":
                rl = np.where(nl > 0, np.log(np.maximum(nl, 1e-300)), -np.inf)
                rh = np.where(nh > 0, np.log(np.maximum(nh, 1e-300)), -np.inf)
                narrow(args[0], *iv.widen(rl, rh))
            elif op == "tanh":
                rl = np.where(nl > -1, np.arctanh(np.clip(nl, -1, 1)), -np.inf)
                rh = np.where(nh < 1, np.arctanh(np.clip(nh, -1, 1)), np.inf)
                narrow(args[0], *iv.widen(rl, rh))
            elif op == "abs":
                narrow(args[0], -nh, nh)
            # sin, cos, min, max: no narrowing

    for node in order:
        if node.op == "var":
            j = index[node.name]
            nl, nh = nar[id(node)]
            lo[..., j] = np.maximum(lo[..., j], nl)
            hi[..., j] = np.minimum(hi[..., j], nh)
    feasible &= np.all(lo <= hi, axis=-1)
    return lo, hi, feasible
