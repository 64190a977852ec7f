"""Symbolic expressions in one variable ``x`` and the diffusion coefficient.

Grammar (whitespace is ignored)::

    expr     := term (("+" | "-") term)*
    term     := unary (("*" | "/") unary)*
    unary    := "-" unary | power
    power    := atom [("^" | "**") exponent]
    exponent := ["-"] INT | "(" ["-"] INT ")"
    atom     := NUMBER | "x" | FUNC "(" expr ")" | "(" expr ")"
    FUNC     := "sin" | "cos" | "exp" | "tanh"

Nodes are immutable and hashable.  The constructor helpers (``add``, ``mul``,
...) perform constant folding, zero/one absorption and flattening; nothing
more ambitious than that is attempted.
"""

from __future__ import annotations

import math
import re
import warnings
import weakref
from fractions import Fraction

import numpy as np

__all__ = [
    "Expression", "Const", "Var", "Neg", "Sum", "Prod", "Quot", "Pow",
    "Sin", "Cos", "Exp", "Tanh", "ExprSyntaxError", "UnknownIdentifierError",
    "EllipticityError", "parse_sigma", "to_text", "differentiate", "const",
    "add", "mul", "sub", "div", "power", "neg", "Coefficient", "d_operator",
    "h_function", "g_function", "prop1_expression", "scan_max_abs",
    "MAX_SIZE", "factorial", "compile_expr", "compile_many",
]

# h_m and g_m need up to D^{m+2}; factorials stay exact up to (m+3)!
MAX_SIZE = 12


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class UnknownIdentifierError(ValueError):
    def __init__(self, name: str, position: int):
        super().__init__(f"unknown identifier {name!r} at offset {position}")
        self.name = name
        self.position = position


class EllipticityError(ValueError):
    pass


# ---------------------------------------------------------------------------
# AST


_INTERN: "weakref.WeakValueDictionary" = weakref.WeakValueDictionary()


class Expression:
    """Base node.  Nodes are interned, so structural equality is identity."""

    __slots__ = ("_key", "_hash", "__weakref__")

    def __new__(cls, *args):
        key = cls._normalize(*args)
        full = (cls,) + key
        obj = _INTERN.get(full)
        if obj is None:
            obj = object.__new__(cls)
            object.__setattr__(obj, "_key", key)
            object.__setattr__(obj, "_hash", hash(full))
            _INTERN[full] = obj
        return obj

    @staticmethod
    def _normalize(*args):
        return tuple(args)

    def __setattr__(self, name, value):
        raise AttributeError("Expression nodes are immutable")

    def __reduce__(self):
        return (type(self), self._key)

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if self is other:
            return True
        return (isinstance(other, Expression) and type(self) is type(other)
                and self._hash == other._hash and self._key == other._key)

    def __repr__(self):
        return f"{type(self).__name__}({', '.join(map(repr, self._key))})"

    def __str__(self):
        return to_text(self)

    @property
    def children(self) -> tuple:
        return tuple(k for k in self._key if isinstance(k, Expression))

    def __call__(self, x):
        return compile_expr(self)(x)


class Const(Expression):
    __slots__ = ()

    @staticmethod
    def _normalize(value):
        return (float(value),)

    @property
    def value(self) -> float:
        return self._key[0]


class Var(Expression):
    __slots__ = ()

    def __repr__(self):
        return "Var()"


class Neg(Expression):
    __slots__ = ()

    @property
    def arg(self) -> Expression:
        return self._key[0]


class Sum(Expression):
    __slots__ = ()

    @property
    def terms(self) -> tuple:
        return self._key


class Prod(Expression):
    __slots__ = ()

    @property
    def factors(self) -> tuple:
        return self._key


class Quot(Expression):
    __slots__ = ()

    @property
    def num(self) -> Expression:
        return self._key[0]

    @property
    def den(self) -> Expression:
        return self._key[1]


class Pow(Expression):
    __slots__ = ()

    @staticmethod
    def _normalize(base, exponent):
        return (base, int(exponent))

    @property
    def base(self) -> Expression:
        return self._key[0]

    @property
    def exponent(self) -> int:
        return self._key[1]


class _Call(Expression):
    __slots__ = ()
    name = ""

    @property
    def arg(self) -> Expression:
        return self._key[0]


class Sin(_Call):
    __slots__ = ()
    name = "sin"


class Cos(_Call):
    __slots__ = ()
    name = "cos"


class Exp(_Call):
    __slots__ = ()
    name = "exp"


class Tanh(_Call):
    __slots__ = ()
    name = "tanh"


FUNCTIONS = {cls.name: cls for cls in (Sin, Cos, Exp, Tanh)}
_MATH = {"sin": math.sin, "cos": math.cos, "exp": math.exp, "tanh": math.tanh}

ZERO = Const(0.0)
ONE = Const(1.0)
X = Var()


# ---------------------------------------------------------------------------
# simplifying constructors


def const(value: float) -> Const:
    return Const(value)


def _is_const(e, value=None):
    return isinstance(e, Const) and (value is None or e.value == value)


def neg(a: Expression) -> Expression:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    if isinstance(a, Prod):
        return mul(Const(-1.0), a)
    return Neg(a)


def add(*terms: Expression) -> Expression:
    flat = []
    c = 0.0
    for t in terms:
        parts = t.terms if isinstance(t, Sum) else (t,)
        for p in parts:
            if isinstance(p, Const):
                c += p.value
            else:
                flat.append(p)
    if not flat:
        return Const(c)
    if c != 0.0:
        flat.insert(0, Const(c))
    if len(flat) == 1:
        return flat[0]
    return Sum(*flat)


def sub(a: Expression, b: Expression) -> Expression:
    return add(a, neg(b))


def _gather(f: Expression, flat: list) -> float:
    c = 1.0
    while isinstance(f, Neg):
        c = -c
        f = f.arg
    if isinstance(f, Prod):
        for p in f.factors:
            c *= _gather(p, flat)
    elif isinstance(f, Const):
        c *= f.value
    else:
        flat.append(f)
    return c


def mul(*factors: Expression) -> Expression:
    flat: list = []
    c = 1.0
    for f in factors:
        c *= _gather(f, flat)
    if c == 0.0 or not flat:
        return Const(c)
    if c == -1.0:
        return Neg(flat[0] if len(flat) == 1 else Prod(*flat))
    if c != 1.0:
        flat.insert(0, Const(c))
    if len(flat) == 1:
        return flat[0]
    return Prod(*flat)


def div(a: Expression, b: Expression) -> Expression:
    if _is_const(b):
        if b.value == 0.0:
            raise ZeroDivisionError("division by the constant 0")
        return mul(Const(1.0 / b.value), a) if b.value != 1.0 else a
    if _is_const(a, 0.0):
        return ZERO
    return Quot(a, b)


def power(base: Expression, exponent: int) -> Expression:
    exponent = int(exponent)
    if exponent == 0:
        return ONE
    if exponent == 1:
        return base
    if isinstance(base, Const):
        return Const(base.value ** exponent)
    if isinstance(base, Pow):
        return power(base.base, base.exponent * exponent)
    return Pow(base, exponent)


def call(name: str, arg: Expression) -> Expression:
    if isinstance(arg, Const):
        return Const(_MATH[name](arg.value))
    return FUNCTIONS[name](arg)


# ---------------------------------------------------------------------------
# parsing and printing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[start]!r}", start)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value or kind == "end":
            what = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {what}", pos)

    def parse(self) -> Expression:
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {text!r}", pos)
        return e

    def expr(self):
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            right = self.term()
            left = add(left, right) if op == "+" else sub(left, right)
        return left

    def term(self):
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            right = self.unary()
            left = mul(left, right) if op == "*" else div(left, right)
        return left

    def unary(self):
        if self.peek()[1] == "-" and self.peek()[0] == "op":
            self.take()
            return neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] in ("^", "**") and self.peek()[0] == "op":
            self.take()
            return power(base, self.exponent())
        return base

    def exponent(self):
        paren = False
        if self.peek()[1] == "(":
            self.take()
            paren = True
        sign = 1
        if self.peek()[1] == "-":
            self.take()
            sign = -1
        kind, text, pos = self.take()
        if kind != "num" or not text.isdigit():
            what = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected integer exponent, found {what}", pos)
        if paren:
            self.expect(")")
        return sign * int(text)

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "name":
            if text == "x":
                return X
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return call(text, arg)
            raise UnknownIdentifierError(text, pos)
        if text == "(":
            e = self.expr()
            self.expect(")")
            return e
        what = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"expected operand, found {what}", pos)


def parse_sigma(text: str) -> Expression:
    """Parse ``text`` into an expression tree.

    >>> to_text(parse_sigma("2 + sin(x)"))
    '2.0 + sin(x)'
    """
    return _Parser(text).parse()


def _wrap(e: Expression) -> str:
    s = to_text(e)
    if isinstance(e, (Var, _Call, Const)):
        return s
    return f"({s})"


def to_text(e: Expression) -> str:
    if isinstance(e, Const):
        v = e.value
        if math.isinf(v) or math.isnan(v):
            raise ValueError(f"cannot print non-finite constant {v}")
        return repr(v) if v >= 0 else f"(-{repr(-v)})"
    if isinstance(e, Var):
        return "x"
    if isinstance(e, Neg):
        return f"-{_wrap(e.arg)}"
    if isinstance(e, Sum):
        return " + ".join(_wrap(t) if isinstance(t, Sum) else to_text(t) for t in e.terms)
    if isinstance(e, Prod):
        return " * ".join(_wrap(f) for f in e.factors)
    if isinstance(e, Quot):
        return f"{_wrap(e.num)} / {_wrap(e.den)}"
    if isinstance(e, Pow):
        k = e.exponent
        return f"{_wrap(e.base)}^{k}" if k >= 0 else f"{_wrap(e.base)}^({k})"
    if isinstance(e, _Call):
        return f"{e.name}({to_text(e.arg)})"
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# differentiation


def _d(e: Expression, memo: dict) -> Expression:
    hit = memo.get(e)
    if hit is not None:
        return hit
    if isinstance(e, Const):
        out = ZERO
    elif isinstance(e, Var):
        out = ONE
    elif isinstance(e, Neg):
        out = neg(_d(e.arg, memo))
    elif isinstance(e, Sum):
        out = add(*(_d(t, memo) for t in e.terms))
    elif isinstance(e, Prod):
        fs = e.factors
        terms = []
        for i, f in enumerate(fs):
            df = _d(f, memo)
            if _is_const(df, 0.0):
                continue
            terms.append(mul(*fs[:i], df, *fs[i + 1:]))
        out = add(*terms)
    elif isinstance(e, Quot):
        u, v = e.num, e.den
        du, dv = _d(u, memo), _d(v, memo)
        out = div(sub(mul(du, v), mul(u, dv)), power(v, 2))
    elif isinstance(e, Pow):
        k = e.exponent
        out = mul(Const(k), power(e.base, k - 1), _d(e.base, memo))
    elif isinstance(e, Sin):
        out = mul(call("cos", e.arg), _d(e.arg, memo))
    elif isinstance(e, Cos):
        out = neg(mul(call("sin", e.arg), _d(e.arg, memo)))
    elif isinstance(e, Exp):
        out = mul(e, _d(e.arg, memo))
    elif isinstance(e, Tanh):
        out = mul(sub(ONE, power(e, 2)), _d(e.arg, memo))
    else:
        raise TypeError(f"not an expression node: {e!r}")
    memo[e] = out
    return out


def differentiate(e: Expression, order: int = 1) -> Expression:
    """Exact symbolic derivative of ``e`` of the given order."""
    if order < 0:
        raise ValueError("order must be nonnegative")
    memo: dict = {}
    for _ in range(order):
        e = _d(e, memo)
    return e


# ---------------------------------------------------------------------------
# numeric evaluation

_COMPILED: dict = {}


def compile_many(exprs):
    """Compile several expressions into one callable returning a list.

    Shared subexpressions (``sin(x)`` in sigma and all its derivatives, say)
    are evaluated once per call.
    """
    exprs = tuple(exprs)
    fn = _COMPILED.get(exprs)
    if fn is not None:
        return fn
    names: dict = {}
    lines = []

    def emit(node):
        if node in names:
            return names[node]
        if isinstance(node, Var):
            return "x"
        if isinstance(node, Const):
            return repr(node.value)
        if isinstance(node, Neg):
            rhs = f"-{emit(node.arg)}"
        elif isinstance(node, Sum):
            rhs = " + ".join(emit(t) for t in node.terms)
        elif isinstance(node, Prod):
            rhs = " * ".join(emit(f) for f in node.factors)
        elif isinstance(node, Quot):
            rhs = f"{emit(node.num)} / {emit(node.den)}"
        elif isinstance(node, Pow):
            b = emit(node.base)
            k = node.exponent
            rhs = f"{b} ** {k}" if k > 0 else f"1.0 / {b} ** {-k}"
        elif isinstance(node, _Call):
            rhs = f"_np.{node.name}({emit(node.arg)})"
        else:
            raise TypeError(f"not an expression node: {node!r}")
        name = f"t{len(names)}"
        lines.append(f"    {name} = {rhs}")
        names[node] = name
        return name

    results = [emit(e) for e in exprs]
    # "+ z" broadcasts constants to the shape of x
    body = "\n".join(lines)
    src = ("def _f(x):\n    x = _np.asarray(x, dtype=float)\n    z = x * 0.0\n"
           + (body + "\n" if body else "")
           + "    return [" + ", ".join(f"{r} + z" for r in results) + "]\n")
    scope = {"_np": np}
    exec(compile(src, f"<expr {len(names)} nodes>", "exec"), scope)
    fn = scope["_f"]
    if len(_COMPILED) > 4096:
        _COMPILED.clear()
    _COMPILED[exprs] = fn
    return fn


def compile_expr(e: Expression):
    """Compile ``e`` to a numpy-vectorized callable."""
    fn = _COMPILED.get(e)
    if fn is None:
        many = compile_many((e,))

        def fn(x, _many=many):
            return _many(x)[0]

        _COMPILED[e] = fn
    return fn


def scan_max_abs(e: Expression, lo: float = -10.0, hi: float = 10.0,
                 points: int = 100_001) -> float:
    grid = np.linspace(lo, hi, points)
    with np.errstate(all="ignore"):
        vals = np.abs(compile_expr(e)(grid))
    return float(np.nanmax(vals))


# ---------------------------------------------------------------------------
# diffusion coefficient


def factorial(k: int) -> int:
    return math.factorial(k)


class Coefficient:
    """A diffusion coefficient sigma together with its symbolic derivatives.

    Ellipticity is certified numerically: ``min |sigma|`` over a dense grid of
    the probe interval must be positive.  ``bounded`` is the caller's word that
    sigma and its derivatives are bounded; passing ``False`` is allowed but
    warns.
    """

    def __init__(self, sigma, bounded: bool = True,
                 probe: tuple = (-20.0, 20.0), probe_points: int = 100_000):
        if isinstance(sigma, str):
            text = sigma
            sigma = parse_sigma(sigma)
        else:
            text = to_text(sigma)
        self.text = text
        self.sigma = sigma
        self.bounded = bool(bounded)
        self.probe = (float(probe[0]), float(probe[1]))
        grid = np.linspace(self.probe[0], self.probe[1], probe_points)
        with np.errstate(all="ignore"):
            vals = np.broadcast_to(compile_expr(sigma)(grid), grid.shape)
        if not np.all(np.isfinite(vals)) or np.any(np.sign(vals[1:]) != np.sign(vals[:-1])):
            # a sign change between grid points hides a zero of sigma
            self.ellipticity = 0.0
        else:
            self.ellipticity = float(np.min(np.abs(vals)))
        self._derivs = [sigma]
        self._dops = [sigma]
        if not self.bounded:
            warnings.warn(f"sigma = {text!r} flagged as unbounded; "
                          "convergence results are not guaranteed", stacklevel=2)

    def __repr__(self):
        return f"Coefficient({self.text!r})"

    @property
    def is_elliptic(self) -> bool:
        return self.ellipticity > 0.0

    def require_elliptic(self):
        if not self.is_elliptic:
            raise EllipticityError(
                f"inf |sigma| over {self.probe} is {self.ellipticity:g}; "
                "sigma must stay away from zero")

    @property
    def is_constant(self) -> bool:
        return isinstance(self.sigma, Const)

    def derivative(self, order: int) -> Expression:
        while len(self._derivs) <= order:
            self._derivs.append(differentiate(self._derivs[-1]))
        return self._derivs[order]

    def d_sigma(self, j: int) -> Expression:
        """D^j sigma, cached."""
        while len(self._dops) <= j:
            self._dops.append(mul(differentiate(self._dops[-1]), self.sigma))
        return self._dops[j]

    def sup_abs_derivative(self, order: int = 1) -> float:
        return scan_max_abs(self.derivative(order), *self.probe,
                            points=100_001)

    def __call__(self, x):
        return compile_expr(self.sigma)(x)


def d_operator(c: Coefficient, f: Expression, j: int) -> Expression:
    """Apply D^1 f = f' sigma ``j`` times."""
    if j < 0:
        raise ValueError("j must be nonnegative")
    if f == c.sigma:
        return c.d_sigma(j)
    memo: dict = {}
    for _ in range(j):
        f = mul(_d(f, memo), c.sigma)
    return f


def _check_size(m: int):
    if m < 0 or m > MAX_SIZE:
        raise ValueError(f"size m must lie in [0, {MAX_SIZE}], got {m}")


def h_function(c: Coefficient, m: int) -> Expression:
    """h_m = -(D^{m+1} sigma / sigma) / (m+2)!."""
    c.require_elliptic()
    if m < 0 or m > MAX_SIZE + 1:
        raise ValueError(f"m must lie in [0, {MAX_SIZE + 1}], got {m}")
    scale = Fraction(-1, factorial(m + 2))
    # D^{m+1} sigma / sigma is exactly (D^m sigma)'
    return mul(Const(float(scale)), differentiate(c.d_sigma(m)))


def g_function(c: Coefficient, m: int) -> Expression:
    """g_m = -sigma' h_m + h_{m+1}."""
    c.require_elliptic()
    _check_size(m)
    return add(neg(mul(c.derivative(1), h_function(c, m))), h_function(c, m + 1))


def prop1_expression(c: Coefficient) -> Expression:
    """3 s'^3 + 6 s s' s'' + s^2 s''' for s = sigma."""
    s, s1, s2, s3 = (c.derivative(k) for k in range(4))
    return add(mul(Const(3.0), power(s1, 3)),
               mul(Const(6.0), s, s1, s2),
               mul(power(s, 2), s3))
