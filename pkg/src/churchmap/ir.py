"""Width-annotated unsigned bitvector expressions and their reference semantics.

``eval`` on Python integers is the ground truth every other component is
checked against; ``eval_batch`` is the vectorized twin used for bulk
simulation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp
from .dsp import DspParams
from .errors import UnboundVar, WidthError

MAX_WIDTH = 256


def check_width(w) -> int:
    if isinstance(w, bool) or not isinstance(w, int) or not 1 <= w <= MAX_WIDTH:
        raise WidthError(f"width must be an integer in [1, {MAX_WIDTH}], got {w!r}")
    return w


def mask(w: int) -> int:
    return (1 << w) - 1


def node_width(op: str, payload: tuple, child_widths: tuple[int, ...]) -> int:
    """Width rule for one constructor, shared by Expr and the e-graph."""
    n = len(child_widths)

    def arity(k):
        if n != k:
            raise WidthError(f"{op} takes {k} operands, got {n}")

    if op == "var":
        arity(0)
        return check_width(payload[1])
    if op == "const":
        arity(0)
        value, w = payload
        check_width(w)
        if not isinstance(value, int) or not 0 <= value < (1 << w):
            raise WidthError(f"constant {value!r} does not fit {w} bits")
        return w
    if op in ("mul", "add"):
        arity(2)
        return check_width(payload[0])
    if op in ("shr", "shl"):
        arity(1)
        amount = payload[0]
        if isinstance(amount, bool) or not isinstance(amount, int) or amount < 0:
            raise WidthError(f"shift amount must be a non-negative integer, got {amount!r}")
        return child_widths[0]
    if op == "extract":
        arity(1)
        hi, lo = payload
        if not (isinstance(hi, int) and isinstance(lo, int) and 0 <= lo <= hi < child_widths[0]):
            raise WidthError(f"extract [{hi}:{lo}] out of range for {child_widths[0]}-bit operand")
        return hi - lo + 1
    if op == "concat":
        arity(2)
        return check_width(child_widths[0] + child_widths[1])
    if op == "zext":
        arity(1)
        w = check_width(payload[0])
        if w < child_widths[0]:
            raise WidthError(f"zero-extend to {w} bits narrows a {child_widths[0]}-bit operand")
        return w
    if op == "dsp":
        params, w = payload
        if n not in (2, 3):
            raise WidthError(f"dsp takes 2 or 3 operands, got {n}")
        if not isinstance(params, DspParams):
            raise WidthError(f"dsp payload needs DspParams, got {params!r}")
        return check_width(w)
    raise WidthError(f"unknown operator {op!r}")


class Expr:
    """Base of the expression tree.  Subclasses are frozen dataclasses."""

    op: str = ""
    width: int

    def _finish(self):
        w = node_width(self.op, self.payload, tuple(c.width for c in self.children))
        object.__setattr__(self, "width", w)

    @property
    def payload(self) -> tuple:
        return ()

    @property
    def children(self) -> tuple[Expr, ...]:
        return ()

    def __str__(self):
        return to_sexpr(self)


@dataclass(frozen=True)
class Var(Expr):
    name: str
    w: int
    op = "var"

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise WidthError(f"bad variable name {self.name!r}")
        self._finish()

    @property
    def payload(self):
        return (self.name, self.w)


@dataclass(frozen=True)
class Const(Expr):
    value: int
    w: int
    op = "const"

    def __post_init__(self):
        self._finish()

    @property
    def payload(self):
        return (self.value, self.w)


@dataclass(frozen=True)
class Mul(Expr):
    """Lower ``w`` bits of the full product; operands zero-extend implicitly."""

    w: int
    lhs: Expr
    rhs: Expr
    op = "mul"

    def __post_init__(self):
        self._finish()

    @property
    def payload(self):
        return (self.w,)

    @property
    def children(self):
        return (self.lhs, self.rhs)


@dataclass(frozen=True)
class Add(Expr):
    w: int
    lhs: Expr
    rhs: Expr
    op = "add"

    def __post_init__(self):
        self._finish()

    @property
    def payload(self):
        return (self.w,)

    @property
    def children(self):
        return (self.lhs, self.rhs)


@dataclass(frozen=True)
class Shr(Expr):
    operand: Expr
    amount: int
    op = "shr"

    def __post_init__(self):
        self._finish()

    @property
    def payload(self):
        return (self.amount,)

    @property
    def children(self):
        return (self.operand,)


@dataclass(frozen=True)
class Shl(Expr):
    operand: Expr
    amount: int
    op = "shl"

    def __post_init__(self):
        self._finish()

    @property
    def payload(self):
        return (self.amount,)

    @property
    def children(self):
        return (self.operand,)


@dataclass(frozen=True)
class Extract(Expr):
    hi: int
    lo: int
    operand: Expr
    op = "extract"

    def __post_init__(self):
        self._finish()

    @property
    def payload(self):
        return (self.hi, self.lo)

    @property
    def children(self):
        return (self.operand,)


@dataclass(frozen=True)
class Concat(Expr):
    hi_part: Expr
    lo_part: Expr
    op = "concat"

    def __post_init__(self):
        self._finish()

    @property
    def children(self):
        return (self.hi_part, self.lo_part)


@dataclass(frozen=True)
class ZeroExtend(Expr):
    operand: Expr
    w: int
    op = "zext"

    def __post_init__(self):
        self._finish()

    @property
    def payload(self):
        return (self.w,)

    @property
    def children(self):
        return (self.operand,)


@dataclass(frozen=True)
class DspInst(Expr):
    """A configured DSP block whose output is truncated to ``w`` bits."""

    params: DspParams
    w: int
    a: Expr
    b: Expr
    c: Expr | None = None
    op = "dsp"

    def __post_init__(self):
        self._finish()

    @property
    def payload(self):
        return (self.params, self.w)

    @property
    def children(self):
        return (self.a, self.b) if self.c is None else (self.a, self.b, self.c)


STRUCTURAL_OPS = frozenset({"var", "const", "extract", "concat", "zext", "dsp"})
BEHAVIORAL_OPS = frozenset({"mul", "add", "shr", "shl"})


def make(op: str, payload: tuple, children) -> Expr:
    """Rebuild an Expr from the (op, payload, children) triple."""
    ch = tuple(children)
    if op == "var":
        return Var(*payload)
    if op == "const":
        return Const(*payload)
    if op == "mul":
        return Mul(payload[0], *ch)
    if op == "add":
        return Add(payload[0], *ch)
    if op == "shr":
        return Shr(ch[0], payload[0])
    if op == "shl":
        return Shl(ch[0], payload[0])
    if op == "extract":
        return Extract(payload[0], payload[1], ch[0])
    if op == "concat":
        return Concat(*ch)
    if op == "zext":
        return ZeroExtend(ch[0], payload[0])
    if op == "dsp":
        return DspInst(payload[0], payload[1], *ch)
    raise WidthError(f"no expression constructor for {op!r}")


def infer_width(e: Expr) -> int:
    return e.width


def free_vars(e: Expr) -> list[tuple[str, int]]:
    seen: dict[str, int] = {}
    visited: set[int] = set()

    def walk(x):
        if id(x) in visited:
            return
        visited.add(id(x))
        if isinstance(x, Var):
            if x.name in seen and seen[x.name] != x.w:
                raise WidthError(f"variable {x.name} used at widths {seen[x.name]} and {x.w}")
            seen.setdefault(x.name, x.w)
        for c in x.children:
            walk(c)

    walk(e)
    return list(seen.items())


def subterms(e: Expr):
    """Post-order walk yielding each distinct subterm object once."""
    seen: set[int] = set()
    stack = [(e, False)]
    while stack:
        x, done = stack.pop()
        if done:
            yield x
            continue
        if id(x) in seen:
            continue
        seen.add(id(x))
        stack.append((x, True))
        stack.extend((c, False) for c in reversed(x.children))


def max_width(e: Expr) -> int:
    return max(x.width for x in subterms(e))


def substitute(e: Expr, mapping: dict[str, Expr]) -> Expr:
    memo: dict[int, Expr] = {}

    def go(x):
        if id(x) in memo:
            return memo[id(x)]
        if isinstance(x, Var) and x.name in mapping:
            r = mapping[x.name]
            if r.width != x.w:
                raise WidthError(f"substituting {r.width}-bit term for {x.w}-bit variable {x.name}")
        elif x.children:
            r = make(x.op, x.payload, [go(c) for c in x.children])
        else:
            r = x
        memo[id(x)] = r
        return r

    return go(e)


def eval(e: Expr, env: dict[str, int], arch=None) -> int:
    """Evaluate on Python integers.  DSP blocks are checked against ``arch`` when given."""
    memo: dict[int, int] = {}
    for x in subterms(e):
        vs = [memo[id(c)] for c in x.children]
        op = x.op
        if op == "var":
            if x.name not in env:
                raise UnboundVar(f"no value bound for {x.name}")
            v = int(env[x.name])
            if not 0 <= v <= mask(x.w):
                raise WidthError(f"value {v} for {x.name} does not fit {x.w} bits")
        elif op == "const":
            v = x.value
        elif op == "mul":
            v = (vs[0] * vs[1]) & mask(x.w)
        elif op == "add":
            v = (vs[0] + vs[1]) & mask(x.w)
        elif op == "shr":
            v = vs[0] >> x.amount
        elif op == "shl":
            v = (vs[0] << x.amount) & mask(x.width)
        elif op == "extract":
            v = (vs[0] >> x.lo) & mask(x.width)
        elif op == "concat":
            v = (vs[0] << x.lo_part.width) | vs[1]
        elif op == "zext":
            v = vs[0]
        elif op == "dsp":
            c = vs[2] if len(vs) == 3 else None
            if arch is None:
                v = dsp.raw_semantics(x.params, vs[0], vs[1], c, x.w)
            else:
                v = dsp.dsp_semantics(arch, x.params, vs[0], vs[1], c, x.w)
        else:
            raise WidthError(f"cannot evaluate {op!r}")
        memo[id(x)] = v
    return memo[id(e)]


# ---------------------------------------------------------------------------
# vectorized evaluation


def needs_object(width: int) -> bool:
    return width > 64


def as_batch(values, width: int) -> np.ndarray:
    if needs_object(width):
        return np.array([int(v) for v in values], dtype=object)
    return np.asarray(values, dtype=np.uint64)


def _bmask(w: int, obj: bool):
    return mask(w) if obj else np.uint64(mask(min(w, 64)))


def eval_batch(e: Expr, env: dict[str, np.ndarray], arch=None) -> np.ndarray:
    """Evaluate over arrays of environments at once.

    Uses wrapping uint64 arithmetic when every node is at most 64 bits wide
    (only the low bits of products and sums are ever kept, so wrap-then-mask
    is exact) and Python-int object arrays otherwise.
    """
    obj = needs_object(max_width(e)) or any(
        isinstance(v, np.ndarray) and v.dtype == object for v in env.values()
    )
    n = None
    for v in env.values():
        n = len(v)
        break
    memo: dict[int, np.ndarray] = {}
    for x in subterms(e):
        vs = [memo[id(c)] for c in x.children]
        op = x.op
        if op == "var":
            if x.name not in env:
                raise UnboundVar(f"no value bound for {x.name}")
            v = env[x.name]
            v = v.astype(object) if obj and v.dtype != object else v
        elif op == "const":
            v = np.full(n or 1, x.value, dtype=object if obj else np.uint64)
        elif op == "mul":
            v = (vs[0] * vs[1]) & _bmask(x.w, obj)
        elif op == "add":
            v = (vs[0] + vs[1]) & _bmask(x.w, obj)
        elif op == "shr":
            if x.amount >= vs[0].dtype.itemsize * 8 and not obj:
                v = np.zeros_like(vs[0])
            else:
                v = vs[0] >> (x.amount if obj else np.uint64(x.amount))
        elif op == "shl":
            if x.amount >= x.width:
                v = np.zeros_like(vs[0])
            else:
                v = (vs[0] << (x.amount if obj else np.uint64(x.amount))) & _bmask(x.width, obj)
        elif op == "extract":
            lo = x.lo if obj else np.uint64(x.lo)
            v = (vs[0] >> lo) & _bmask(x.width, obj)
        elif op == "concat":
            sh = x.lo_part.width if obj else np.uint64(x.lo_part.width)
            v = (vs[0] << sh) | vs[1]
        elif op == "zext":
            v = vs[0]
        elif op == "dsp":
            c = vs[2] if len(vs) == 3 else None
            if arch is None:
                v = dsp.raw_semantics(x.params, vs[0], vs[1], c, x.w)
            else:
                v = dsp.dsp_semantics(arch, x.params, vs[0], vs[1], c, x.w)
            if not obj:
                v = v.astype(np.uint64)
        else:
            raise WidthError(f"cannot evaluate {op!r}")
        memo[id(x)] = v
    out = memo[id(e)]
    if n is not None and len(out) != n:
        out = np.broadcast_to(out, (n,))
    return out


# ---------------------------------------------------------------------------
# canonical text form


def to_sexpr(e: Expr) -> str:
    op = e.op
    if op == "var":
        return f"(var {e.name} {e.w})"
    if op == "const":
        return f"(const {e.value} {e.w})"
    if op in ("mul", "add"):
        return f"({op} {e.w} {to_sexpr(e.lhs)} {to_sexpr(e.rhs)})"
    if op in ("shr", "shl"):
        return f"({op} {to_sexpr(e.operand)} {e.amount})"
    if op == "extract":
        return f"(extract {e.hi} {e.lo} {to_sexpr(e.operand)})"
    if op == "concat":
        return f"(concat {to_sexpr(e.hi_part)} {to_sexpr(e.lo_part)})"
    if op == "zext":
        return f"(zext {to_sexpr(e.operand)} {e.w})"
    if op == "dsp":
        args = " ".join(to_sexpr(c) for c in e.children)
        return f"(dsp {e.params.mode.value} {e.params.shift} {e.w} {args})"
    raise WidthError(f"cannot print {op!r}")
