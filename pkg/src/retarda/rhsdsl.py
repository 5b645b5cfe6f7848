"""Right-hand-side expressions and system-spec documents.

Grammar (1-based indices)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | '+' unary | power
    power   := atom ('^' unary)?
    atom    := NUMBER | var | call | '(' expr ')'
    var     := 'x[' INT ']' | 'xd[' INT '][' INT ']' | 'u[' INT ']' | 'r'
    call    := NAME '(' expr (',' expr)* ')'

``xd[k][i]`` is component ``i`` of ``x(t - theta_k)``.  ``**`` is accepted as a
synonym of ``^``.  Functions: exp, sin, cos, tanh, abs (one argument);
min, max, pow, sat (two arguments), where ``sat(a, b)`` clips ``a`` to
``[-b, b]``.  The variable ``r`` is only legal in a ``kappa`` expression.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np

from .history import Delays

UNARY_FUNCS = {"exp": "_exp", "sin": "_m.sin", "cos": "_m.cos", "tanh": "_m.tanh", "abs": "abs"}
BINARY_FUNCS = {"min": "min", "max": "max", "pow": "_pow", "sat": "_sat"}


class SpecError(ValueError):
    """Invalid system specification; ``pos`` is a character offset when known."""

    def __init__(self, message: str, pos: Optional[int] = None, where: str = ""):
        self.message = message
        self.pos = pos
        self.where = where
        loc = ""
        if where:
            loc += f" in {where}"
        if pos is not None:
            loc += f" at position {pos}"
        super().__init__(f"{message}{loc}")


class EvaluationOverflow(ArithmeticError):
    pass


# -- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # "x", "xd", "u", "r"
    index: int = 0  # 1-based component
    delay: int = 0  # 1-based delay index for "xd"


@dataclass(frozen=True)
class Unary:
    op: str
    arg: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


Node = Union[Num, Var, Unary, Binary, Call]


# -- tokenizer / parser ------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>\*\*|[-+*/^(),\[\]]))"
)


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                break
            stripped = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise SpecError(f"unexpected character {text[stripped]!r}", stripped)
        kind = m.lastgroup
        start = m.start(kind)
        val = m.group(kind)
        if kind == "op" and val == "**":
            val = "^"
        out.append((kind, val, start))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, allow_r: bool = False):
        self.toks = _tokenize(text)
        self.i = 0
        self.allow_r = allow_r

    @property
    def tok(self):
        return self.toks[self.i]

    def take(self, val=None, kind=None):
        k, v, p = self.tok
        if (val is not None and v != val) or (kind is not None and k != kind):
            want = val if val is not None else kind
            got = v if k != "end" else "end of input"
            raise SpecError(f"expected {want!r}, got {got!r}", p)
        self.i += 1
        return v, p

    def parse(self) -> Node:
        node = self.expr()
        if self.tok[0] != "end":
            raise SpecError(f"unexpected {self.tok[1]!r}", self.tok[2])
        return node

    def expr(self):
        node = self.term()
        while self.tok[1] in ("+", "-") and self.tok[0] == "op":
            op, _ = self.take()
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok[1] in ("*", "/") and self.tok[0] == "op":
            op, _ = self.take()
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        if self.tok[0] == "op" and self.tok[1] in ("-", "+"):
            op, _ = self.take()
            return Unary(op, self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self.take()
            return Binary("^", base, self.unary())
        return base

    def index(self) -> int:
        self.take("[")
        v, p = self.take(kind="num")
        if not re.fullmatch(r"\d+", v):
            raise SpecError(f"index must be an integer, got {v!r}", p)
        self.take("]")
        idx = int(v)
        if idx < 1:
            raise SpecError("indices are 1-based", p)
        return idx

    def atom(self):
        k, v, p = self.tok
        if k == "num":
            self.take()
            return Num(float(v))
        if k == "op" and v == "(":
            self.take()
            node = self.expr()
            self.take(")")
            return node
        if k == "name":
            self.take()
            if v == "x" or v == "u":
                return Var(v, self.index())
            if v == "xd":
                d = self.index()
                return Var("xd", self.index(), d)
            if v == "r":
                if not self.allow_r:
                    raise SpecError("variable 'r' is only allowed in kappa", p)
                return Var("r")
            if v in UNARY_FUNCS or v in BINARY_FUNCS:
                self.take("(")
                args = [self.expr()]
                while self.tok[1] == ",":
                    self.take(",")
                    args.append(self.expr())
                self.take(")")
                want = 1 if v in UNARY_FUNCS else 2
                if len(args) != want:
                    raise SpecError(f"{v} takes {want} argument(s), got {len(args)}", p)
                return Call(v, tuple(args))
            raise SpecError(f"unknown name {v!r}", p)
        got = v if k != "end" else "end of input"
        raise SpecError(f"unexpected {got!r}", p)


def parse_expr(text: str, allow_r: bool = False) -> Node:
    return _Parser(text, allow_r).parse()


# -- printing ----------------------------------------------------------------


def to_source(node: Node) -> str:
    """Render an AST so that ``parse_expr(to_source(a)) == a``."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        if node.kind == "xd":
            return f"xd[{node.delay}][{node.index}]"
        if node.kind == "r":
            return "r"
        return f"{node.kind}[{node.index}]"
    if isinstance(node, Unary):
        return f"{node.op}({to_source(node.arg)})"
    if isinstance(node, Binary):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.fn}({', '.join(to_source(a) for a in node.args)})"
    raise TypeError(node)


def variables(node: Node):
    if isinstance(node, Var):
        yield node
    elif isinstance(node, Unary):
        yield from variables(node.arg)
    elif isinstance(node, Binary):
        yield from variables(node.left)
        yield from variables(node.right)
    elif isinstance(node, Call):
        for a in node.args:
            yield from variables(a)


# -- compilation -------------------------------------------------------------


def _py(node: Node) -> str:
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        if node.kind == "x":
            return f"x[{node.index - 1}]"
        if node.kind == "u":
            return f"u[{node.index - 1}]"
        if node.kind == "xd":
            return f"xd[{node.delay - 1}][{node.index - 1}]"
        return "r"
    if isinstance(node, Unary):
        return f"({node.op}{_py(node.arg)})"
    if isinstance(node, Binary):
        op = "**" if node.op == "^" else node.op
        if op == "**":
            return f"_pow({_py(node.left)}, {_py(node.right)})"
        return f"({_py(node.left)} {op} {_py(node.right)})"
    if isinstance(node, Call):
        fn = UNARY_FUNCS.get(node.fn) or BINARY_FUNCS[node.fn]
        return f"{fn}({', '.join(_py(a) for a in node.args)})"
    raise TypeError(node)


def _exp(a):
    return math.exp(a) if a < 709.0 else math.inf


def _pow(a, b):
    try:
        v = float(a) ** float(b)
    except (OverflowError, ZeroDivisionError):
        return math.inf
    # a negative base with a fractional exponent has no real value
    return v if isinstance(v, float) else math.nan


def _sat(a, b):
    return max(-b, min(b, a))


_NAMESPACE = {"_m": math, "_exp": _exp, "_pow": _pow, "_sat": _sat, "min": min, "max": max, "abs": abs}


@lru_cache(maxsize=None)
def _compile_rhs(rhs: tuple) -> Callable:
    body = ", ".join(_py(e) for e in rhs)
    src = f"lambda x, xd, u: ({body},)"
    return eval(compile(src, "<rhs>", "eval"), dict(_NAMESPACE))


@lru_cache(maxsize=None)
def _compile_scalar(expr: Node) -> Callable:
    src = f"lambda r: {_py(expr)}"
    return eval(compile(src, "<kappa>", "eval"), dict(_NAMESPACE))


# -- system definitions ------------------------------------------------------


@dataclass(frozen=True)
class SystemDef:
    n: int
    m: int
    delays: Delays
    rhs: tuple
    kappa: Optional[Node] = None
    zero_equilibrium: bool = False
    name: str = ""
    description: str = ""
    validity_radius: Optional[float] = None
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def p(self) -> int:
        return self.delays.p

    @property
    def f(self) -> Callable:
        """Compiled ``f(x, xd, u) -> tuple``; ``xd`` is a sequence of p vectors."""
        return _compile_rhs(self.rhs)

    def kappa_fn(self) -> Optional[Callable[[float], float]]:
        if self.kappa is None:
            return None
        return _compile_scalar(self.kappa)

    def to_document(self) -> dict:
        doc = {
            "name": self.name,
            "description": self.description,
            "n": self.n,
            "m": self.m,
            "delays": list(self.delays.values),
            "f": [to_source(e) for e in self.rhs],
            "zero_equilibrium": self.zero_equilibrium,
        }
        if self.kappa is not None:
            doc["kappa"] = to_source(self.kappa)
        if self.validity_radius is not None:
            doc["validity_radius"] = self.validity_radius
        return doc


def eval_rhs(sys: SystemDef, x, xd, u) -> np.ndarray:
    """Pointwise ``f(x, (xd_k), u)``; raises :class:`EvaluationOverflow` on non-finite output."""
    x = np.asarray(x, dtype=float).reshape(sys.n)
    xd = [np.asarray(v, dtype=float).reshape(sys.n) for v in xd]
    if len(xd) != sys.p:
        raise ValueError(f"expected {sys.p} delayed vectors, got {len(xd)}")
    u = np.asarray(u, dtype=float).reshape(sys.m)
    return _checked_call(sys.f, x, xd, u)


def _checked_call(f, x, xd, u) -> np.ndarray:
    try:
        with np.errstate(all="ignore"):
            out = f(x, xd, u)
    except (OverflowError, ZeroDivisionError, ValueError) as exc:
        raise EvaluationOverflow(str(exc)) from exc
    arr = np.array(out, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise EvaluationOverflow("non-finite right-hand side")
    return arr


def _check_indices(node: Node, n: int, m: int, p: int, where: str):
    for v in variables(node):
        if v.kind == "x" and v.index > n:
            raise SpecError(f"index out of range: x[{v.index}] with n={n}", where=where)
        if v.kind == "xd":
            if v.delay > p:
                raise SpecError(f"index out of range: delay {v.delay} with p={p}", where=where)
            if v.index > n:
                raise SpecError(f"index out of range: xd[{v.delay}][{v.index}] with n={n}", where=where)
        if v.kind == "u":
            if m == 0:
                raise SpecError(f"undeclared input u[{v.index}] (m=0)", where=where)
            if v.index > m:
                raise SpecError(f"index out of range: u[{v.index}] with m={m}", where=where)


def _positive_int(doc, key, allow_zero=False) -> int:
    if key not in doc:
        raise SpecError(f"missing field {key!r}")
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < (0 if allow_zero else 1):
        raise SpecError(f"field {key!r} must be a {'nonnegative' if allow_zero else 'positive'} integer")
    return v


def system_from_document(doc: dict) -> SystemDef:
    if not isinstance(doc, dict):
        raise SpecError("system spec must be a JSON object")
    n = _positive_int(doc, "n")
    m = _positive_int(doc, "m", allow_zero=True) if "m" in doc else 0
    raw = doc.get("delays")
    if not isinstance(raw, list) or not raw:
        raise SpecError("field 'delays' must be a nonempty list")
    try:
        vals = [float(v) for v in raw]
    except (TypeError, ValueError):
        raise SpecError("delays must be numbers") from None
    if any(v <= 0 or not math.isfinite(v) for v in vals):
        raise SpecError("nonpositive delay")
    if len(set(vals)) != len(vals):
        raise SpecError("duplicate delay")
    if vals != sorted(vals):
        # xd[k] refers to the k-th listed delay, so reordering would change f
        raise SpecError("delays must be listed in increasing order")
    delays = Delays(tuple(vals))
    f = doc.get("f")
    if isinstance(f, str):
        f = [f]
    if not isinstance(f, list) or not all(isinstance(e, str) for e in f):
        raise SpecError("field 'f' must be a list of expression strings")
    if len(f) != n:
        raise SpecError(f"dimension mismatch: f has {len(f)} components, n={n}")
    rhs = []
    for i, text in enumerate(f):
        where = f"f[{i + 1}]"
        try:
            node = parse_expr(text)
        except SpecError as exc:
            raise SpecError(exc.message, exc.pos, where) from None
        _check_indices(node, n, m, delays.p, where)
        rhs.append(node)
    kappa = None
    if doc.get("kappa") is not None:
        try:
            kappa = parse_expr(str(doc["kappa"]), allow_r=True)
        except SpecError as exc:
            raise SpecError(exc.message, exc.pos, "kappa") from None
        if any(v.kind != "r" for v in variables(kappa)):
            raise SpecError("kappa may only reference r", where="kappa")
        kfn = _compile_scalar(kappa)
        grid = np.geomspace(1e-3, 1e3, 61)
        vals_k = [kfn(float(r)) for r in grid]
        if any(not (v > 0) for v in vals_k):
            raise SpecError("kappa must be positive for r > 0", where="kappa")
        if any(b < a for a, b in zip(vals_k, vals_k[1:])):
            raise SpecError("kappa must be nondecreasing", where="kappa")
    sysdef = SystemDef(
        n=n,
        m=m,
        delays=delays,
        rhs=tuple(rhs),
        kappa=kappa,
        name=str(doc.get("name", "")),
        description=str(doc.get("description", "")),
        validity_radius=None if doc.get("validity_radius") is None else float(doc["validity_radius"]),
    )
    try:
        at_zero = _checked_call(sysdef.f, np.zeros(n), [np.zeros(n)] * delays.p, np.zeros(m))
        is_zero = bool(np.all(at_zero == 0.0))
    except EvaluationOverflow:
        is_zero = False
    declared = doc.get("zero_equilibrium")
    if declared is True and not is_zero:
        raise SpecError("zero_equilibrium declared but f(0, 0, 0) != 0")
    object.__setattr__(sysdef, "zero_equilibrium", is_zero if declared is None else bool(declared))
    return sysdef


def parse_system(text: str) -> SystemDef:
    """Parse a JSON system-spec document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid JSON: {exc.msg}", exc.pos) from None
    return system_from_document(doc)


def print_system(sys: SystemDef) -> str:
    return json.dumps(sys.to_document(), indent=2)


# -- Lipschitz estimation ----------------------------------------------------


def _ball(rng: np.random.Generator, count: int, dim: int, r: float) -> np.ndarray:
    g = rng.standard_normal((count, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = r * rng.random(count) ** (1.0 / dim)
    return g * rad[:, None]


def _into_block_ball(z: np.ndarray, n: int) -> np.ndarray:
    b = z.reshape(z.shape[0], -1, n)
    norms = np.linalg.norm(b, axis=2, keepdims=True)
    return (b / np.maximum(norms, 1.0)).reshape(z.shape)


def block_norm(z: np.ndarray, n: int) -> float:
    """Max over the ``p+1`` Euclidean blocks of a joint ``(x, xd_1..xd_p)`` vector."""
    return float(np.max(np.linalg.norm(z.reshape(-1, n), axis=1)))


def lipschitz_ratio(sys: SystemDef, points: np.ndarray) -> float:
    """Largest ``|f(a) - f(b)| / |a - b|`` over consecutive-pair samples.

    ``points`` has shape ``(k, n*(p+1))``: rows are joint state/delayed vectors
    paired as ``(points[0], points[1]), (points[2], points[3]), ...`` plus every
    row against its successor. Distances use :func:`block_norm`, matching the
    ``X^inf`` norm of the arguments.
    """
    n, p = sys.n, sys.p
    u0 = np.zeros(sys.m)
    f = sys.f
    vals = []
    for z in points:
        blocks = z.reshape(p + 1, n)
        vals.append(_checked_call(f, blocks[0], list(blocks[1:]), u0))
    best = 0.0
    for i in range(len(points) - 1):
        d = block_norm(points[i + 1] - points[i], n)
        if d == 0.0:
            continue
        ratio = float(np.linalg.norm(vals[i + 1] - vals[i])) / d
        best = max(best, ratio)
    return best


def estimate_lipschitz(sys: SystemDef, r: float, samples: int = 400, seed: int = 0, safety: float = 1.25) -> float:
    """Sampled Lipschitz bound of ``f`` in ``(x, xd)`` over the radius-``r`` ball, inflated.

    Samples are drawn in the unit ball once per ``(seed, samples)`` and scaled by
    ``r``; with ``u = 0``.  If the system carries an analytic ``kappa`` the
    larger of the two is returned.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    if samples < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x11F]))
    dim = sys.n * (sys.p + 1)
    unit = _ball(rng, samples, dim, 1.0)
    # each block independently on its sphere for a share of rows: reaches the corners of the block-max ball
    k = samples // 2
    blocks = unit[:k].reshape(k, sys.p + 1, sys.n)
    norms = np.linalg.norm(blocks, axis=2, keepdims=True)
    norms[norms == 0] = 1.0
    unit[:k] = (blocks / norms).reshape(k, dim) * rng.random((k, 1)) ** 0.25
    # near-coincident partners probe the local slope
    near = _into_block_ball(unit + 1e-4 * _ball(rng, samples, dim, 1.0), sys.n)
    pts = np.empty((2 * samples, dim))
    pts[0::2] = unit
    pts[1::2] = near
    sampled = safety * lipschitz_ratio(sys, r * pts)
    kfn = sys.kappa_fn()
    if kfn is not None:
        return max(float(kfn(r)), sampled)
    return sampled
