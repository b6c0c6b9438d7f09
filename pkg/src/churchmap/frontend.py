"""Readers that turn source text into Expr trees.

Two inputs are accepted: the canonical s-expression form and a small
combinational subset of Verilog (one module, continuous assigns only).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from . import ir
from .dsp import DspParams, Mode
from .errors import ParseError, UnsupportedConstruct, WidthError
from .ir import Add, Concat, Const, Expr, Extract, Mul, Shl, Shr, Var, ZeroExtend


@dataclass(frozen=True)
class SourceModule:
    name: str
    inputs: tuple[tuple[str, int], ...]
    output: tuple[str, int]
    body: Expr

    def __post_init__(self):
        declared = dict(self.inputs)
        for name, w in ir.free_vars(self.body):
            if declared.get(name) != w:
                raise WidthError(f"module {self.name}: body reads undeclared or mis-sized input {name} ({w} bits)")
        if self.body.width != self.output[1]:
            raise WidthError(
                f"module {self.name}: body is {self.body.width} bits but output {self.output[0]} is {self.output[1]}"
            )


# ---------------------------------------------------------------------------
# s-expressions


@dataclass(frozen=True)
class Atom:
    text: str
    line: int
    col: int


_SEXP_TOKEN = re.compile(r"\s*(?:(;[^\n]*)|(\()|(\))|([^\s()]+))")


def read_sexp(text: str):
    """Read one s-expression into nested lists of Atom."""
    pos = 0
    stack: list[list] = [[]]
    opens: list[tuple[int, int]] = []

    def where(p):
        line = text.count("\n", 0, p) + 1
        col = p - (text.rfind("\n", 0, p) + 1) + 1
        return line, col

    while pos < len(text):
        m = _SEXP_TOKEN.match(text, pos)
        if not m or m.end() == pos:
            break
        start = m.start(m.lastindex) if m.lastindex else m.end()
        pos = m.end()
        if m.group(1):
            continue
        if m.group(2):
            opens.append(where(start))
            stack.append([])
        elif m.group(3):
            if len(stack) == 1:
                raise ParseError("unbalanced ')'", *where(start))
            done = stack.pop()
            opens.pop()
            stack[-1].append(done)
        elif m.group(4):
            stack[-1].append(Atom(m.group(4), *where(start)))
    if len(stack) > 1:
        raise ParseError("unclosed '('", *opens[-1])
    top = stack[0]
    if not top:
        raise ParseError("empty input", 1, 1)
    if len(top) > 1:
        extra = top[1]
        a = extra if isinstance(extra, Atom) else _first_atom(extra)
        raise ParseError("trailing input after expression", a.line if a else None, a.col if a else None)
    return top[0]


def _first_atom(node):
    if isinstance(node, Atom):
        return node
    for x in node:
        a = _first_atom(x)
        if a:
            return a
    return None


def _int(atom) -> int:
    if not isinstance(atom, Atom):
        raise ParseError("expected an integer", *_loc(atom))
    t = atom.text
    try:
        if t.lower().startswith("#x"):
            return int(t[2:], 16)
        return int(t, 0)
    except ValueError:
        raise ParseError(f"expected an integer, got {t!r}", atom.line, atom.col) from None


def _loc(node):
    a = _first_atom(node) if not isinstance(node, Atom) else node
    return (a.line, a.col) if a else (None, None)


_ARITY = {
    "var": 2, "const": 2, "mul": 3, "add": 3, "shr": 2, "shl": 2,
    "extract": 3, "concat": 2, "zext": 2,
}


def _build(node) -> Expr:
    if isinstance(node, Atom):
        raise ParseError(f"bare atom {node.text!r} where an expression was expected", node.line, node.col)
    if not node or not isinstance(node[0], Atom):
        raise ParseError("expected (op args...)", *_loc(node))
    head = node[0]
    op, args = head.text.lower(), node[1:]
    if op == "dsp":
        if len(args) not in (5, 6):
            raise ParseError("dsp takes mode, shift, width and 2 or 3 operands", head.line, head.col)
        try:
            params = DspParams(Mode(args[0].text.upper()), _int(args[1]))
        except (ValueError, AttributeError):
            raise ParseError("bad dsp mode", *_loc(args[0])) from None
        return ir.DspInst(params, _int(args[2]), *[_build(a) for a in args[3:]])
    if op not in _ARITY:
        raise ParseError(f"unknown operator {head.text!r}", head.line, head.col)
    if len(args) != _ARITY[op]:
        raise ParseError(f"{op} takes {_ARITY[op]} arguments, got {len(args)}", head.line, head.col)
    try:
        if op == "var":
            if not isinstance(args[0], Atom):
                raise ParseError("variable name must be an atom", *_loc(args[0]))
            return Var(args[0].text, _int(args[1]))
        if op == "const":
            return Const(_int(args[0]), _int(args[1]))
        if op == "mul":
            return Mul(_int(args[0]), _build(args[1]), _build(args[2]))
        if op == "add":
            return Add(_int(args[0]), _build(args[1]), _build(args[2]))
        if op == "shr":
            return Shr(_build(args[0]), _int(args[1]))
        if op == "shl":
            return Shl(_build(args[0]), _int(args[1]))
        if op == "extract":
            return Extract(_int(args[0]), _int(args[1]), _build(args[2]))
        if op == "concat":
            return Concat(_build(args[0]), _build(args[1]))
        return ZeroExtend(_build(args[0]), _int(args[1]))
    except WidthError as exc:
        line, col = head.line, head.col
        raise WidthError(f"{exc} (at {line}:{col})") from None


def parse_sexpr(text: str) -> Expr:
    return _build(read_sexp(text))


def print_sexpr(e: Expr) -> str:
    return ir.to_sexpr(e)


# ---------------------------------------------------------------------------
# Verilog subset

_VTOKEN = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*|/\*.*?\*/)
  | (?P<num>\d+\s*'\s*[sS]?[hHdDbBoO]\s*[0-9a-fA-F_xXzZ?]+|\d[\d_]*)
  | (?P<id>[A-Za-z_][A-Za-z0-9_$]*)
  | (?P<op><<<|>>>|<<|>>|==|!=|<=|>=|&&|\|\||[-+*/%&|^~!<>?:;,.()\[\]{}=@#])
    """,
    re.VERBOSE | re.DOTALL,
)

_REJECTED_KEYWORDS = {
    "always", "always_ff", "always_comb", "always_latch", "initial", "reg", "posedge", "negedge",
    "generate", "function", "task", "case", "if", "for", "while", "begin", "integer", "parameter",
    "localparam", "signed", "inout",
}


@dataclass(frozen=True)
class Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize_verilog(text: str) -> list[Tok]:
    toks = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _VTOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(Tok(kind, m.group(), line, m.start() - line_start + 1))
        chunk = m.group()
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = m.start() + chunk.rfind("\n") + 1
        pos = m.end()
    return toks


def _literal(tok: Tok) -> tuple[int, int | None]:
    t = tok.text.replace("_", "").replace(" ", "")
    if "'" not in t:
        return int(t), None
    size, rest = t.split("'", 1)
    if rest[0] in "sS":
        raise UnsupportedConstruct("signed literal", tok.line, tok.col)
    base = {"h": 16, "d": 10, "b": 2, "o": 8}[rest[0].lower()]
    digits = rest[1:]
    if any(ch in "xXzZ?" for ch in digits):
        raise UnsupportedConstruct(f"X/Z literal {tok.text}", tok.line, tok.col)
    w = int(size)
    value = int(digits, base)
    if value >> w:
        raise WidthError(f"literal {tok.text} does not fit {w} bits (at {tok.line}:{tok.col})")
    return value, w


# expression AST before sizing
@dataclass(frozen=True)
class _Ref:
    name: str
    tok: Tok


@dataclass(frozen=True)
class _Slice:
    name: str
    hi: int
    lo: int
    tok: Tok


@dataclass(frozen=True)
class _Lit:
    value: int
    w: int | None


@dataclass(frozen=True)
class _Bin:
    op: str
    lhs: object
    rhs: object
    tok: Tok


@dataclass(frozen=True)
class _Cat:
    parts: tuple


class _VParser:
    def __init__(self, toks: list[Tok]):
        self.toks = toks
        self.i = 0

    def peek(self, k=0) -> Tok | None:
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def next(self) -> Tok:
        t = self.peek()
        if t is None:
            last = self.toks[-1] if self.toks else None
            raise ParseError("unexpected end of input", last.line if last else None, last.col if last else None)
        self.i += 1
        if t.kind == "id" and t.text in _REJECTED_KEYWORDS:
            raise UnsupportedConstruct(f"unsupported construct {t.text!r}", t.line, t.col)
        return t

    def end_statement(self):
        t = self.peek()
        if t is not None and t.kind == "op" and t.text != ";":
            raise UnsupportedConstruct(f"operator {t.text!r} is outside the supported subset", t.line, t.col)
        self.expect(";")

    def expect(self, text: str) -> Tok:
        t = self.next()
        if t.text != text:
            raise ParseError(f"expected {text!r}, got {t.text!r}", t.line, t.col)
        return t

    def ident(self) -> Tok:
        t = self.next()
        if t.kind != "id":
            raise ParseError(f"expected identifier, got {t.text!r}", t.line, t.col)
        return t

    def at(self, text: str) -> bool:
        t = self.peek()
        return t is not None and t.text == text

    def const_int(self) -> int:
        t = self.next()
        if t.kind != "num":
            raise ParseError(f"expected a constant, got {t.text!r}", t.line, t.col)
        return _literal(t)[0]

    def range_(self) -> int:
        self.expect("[")
        hi_tok = self.peek()
        hi = self.const_int()
        self.expect(":")
        lo = self.const_int()
        self.expect("]")
        if lo != 0 or hi < 0:
            raise UnsupportedConstruct(f"only [N:0] ranges are supported, got [{hi}:{lo}]", hi_tok.line, hi_tok.col)
        return ir.check_width(hi + 1)

    # expressions: shift < add < mul < primary (Verilog precedence)
    def expr(self):
        lhs = self.additive()
        while self.peek() is not None and self.peek().text in ("<<", ">>", "<<<", ">>>"):
            t = self.next()
            if t.text in ("<<<", ">>>"):
                raise UnsupportedConstruct(f"arithmetic shift {t.text}", t.line, t.col)
            amount = self.additive()
            if not isinstance(amount, _Lit):
                raise UnsupportedConstruct("shift amounts must be constants", t.line, t.col)
            lhs = _Bin(t.text, lhs, amount, t)
        return lhs

    def additive(self):
        lhs = self.multiplicative()
        while self.at("+"):
            t = self.next()
            lhs = _Bin("+", lhs, self.multiplicative(), t)
        return lhs

    def multiplicative(self):
        lhs = self.primary()
        while self.at("*"):
            t = self.next()
            lhs = _Bin("*", lhs, self.primary(), t)
        return lhs

    def primary(self):
        t = self.next()
        if t.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if t.text == "{":
            parts = [self.expr()]
            while self.at(","):
                self.next()
                parts.append(self.expr())
            self.expect("}")
            return _Cat(tuple(parts))
        if t.kind == "num":
            return _Lit(*_literal(t))
        if t.kind == "id":
            if self.at("["):
                self.next()
                hi = self.const_int()
                lo = hi
                if self.at(":"):
                    self.next()
                    lo = self.const_int()
                self.expect("]")
                return _Slice(t.text, hi, lo, t)
            return _Ref(t.text, t)
        if t.kind == "op":
            raise UnsupportedConstruct(f"operator {t.text!r} is outside the supported subset", t.line, t.col)
        raise ParseError(f"unexpected token {t.text!r}", t.line, t.col)


def _fit(e: Expr, w: int) -> Expr:
    if e.width < w:
        return ZeroExtend(e, w)
    if e.width > w:
        return Extract(w - 1, 0, e)
    return e


class _Sizer:
    """Applies Verilog's context-determined width rules to the parsed AST."""

    def __init__(self, nets: dict[str, int], inputs: set[str], resolve):
        self.nets = nets
        self.inputs = inputs
        self.resolve = resolve

    def self_width(self, n) -> int:
        if isinstance(n, _Ref):
            return self.nets[n.name] if n.name in self.nets else self._undeclared(n)
        if isinstance(n, _Slice):
            return n.hi - n.lo + 1
        if isinstance(n, _Lit):
            return n.w or 32
        if isinstance(n, _Cat):
            return sum(self.self_width(p) for p in n.parts)
        if n.op in ("<<", ">>"):
            return self.self_width(n.lhs)
        return max(self.self_width(n.lhs), self.self_width(n.rhs))

    def _undeclared(self, n):
        raise ParseError(f"undeclared net {n.name!r}", n.tok.line, n.tok.col)

    def leaf(self, name: str, tok: Tok) -> Expr:
        if name not in self.nets:
            raise ParseError(f"undeclared net {name!r}", tok.line, tok.col)
        if name in self.inputs:
            return Var(name, self.nets[name])
        return self.resolve(name, tok)

    def build(self, n, w: int) -> Expr:
        """Expr whose zero-extension to ``w`` bits is the Verilog value at context width ``w``."""
        if isinstance(n, _Ref):
            return self.leaf(n.name, n.tok)
        if isinstance(n, _Slice):
            base = self.leaf(n.name, n.tok)
            try:
                return Extract(n.hi, n.lo, base)
            except WidthError:
                raise WidthError(
                    f"slice {n.name}[{n.hi}:{n.lo}] out of range (at {n.tok.line}:{n.tok.col})"
                ) from None
        if isinstance(n, _Lit):
            lw = n.w or 32
            return Const(n.value & ir.mask(lw), lw)
        if isinstance(n, _Cat):
            parts = [self.build(p, self.self_width(p)) for p in n.parts]
            parts = [_fit(e, self.self_width(p)) for e, p in zip(parts, n.parts)]
            out = parts[-1]
            for p in reversed(parts[:-1]):
                out = Concat(p, out)
            return out
        if n.op in ("<<", ">>"):
            x = _fit(self.build(n.lhs, w), w)
            return Shr(x, n.rhs.value) if n.op == ">>" else Shl(x, n.rhs.value)
        lhs, rhs = self.build(n.lhs, w), self.build(n.rhs, w)
        return Mul(w, lhs, rhs) if n.op == "*" else Add(w, lhs, rhs)

    def assign(self, n, target_w: int) -> Expr:
        w = max(self.self_width(n), target_w)
        return _fit(self.build(n, w), target_w)


def parse_verilog_subset(text: str) -> SourceModule:
    toks = _tokenize_verilog(text)
    p = _VParser(toks)
    p.expect("module")
    name = p.ident().text
    nets: dict[str, int] = {}
    inputs: list[tuple[str, int]] = []
    outputs: list[tuple[str, int]] = []
    header_names: list[str] = []
    assigns: dict[str, tuple[object, Tok]] = {}

    def declare(kind: str, tok: Tok):
        names = []
        if p.at("logic") or p.at("wire"):
            p.next()
        if not p.at("["):
            raise ParseError(f"{kind} declarations need an explicit [N:0] range", tok.line, tok.col)
        w = p.range_()
        names.append(p.ident())
        while p.at(",") and p.peek(1) is not None and p.peek(1).kind == "id" and p.peek(1).text not in (
            "input", "output", "wire", "logic",
        ):
            p.next()
            names.append(p.ident())
        for nt in names:
            if nt.text in nets:
                raise ParseError(f"net {nt.text!r} declared twice", nt.line, nt.col)
            nets[nt.text] = w
            if kind == "input":
                inputs.append((nt.text, w))
            elif kind == "output":
                outputs.append((nt.text, w))
        return names

    if p.at("("):
        p.next()
        while not p.at(")"):
            t = p.next()
            if t.text in ("input", "output"):
                declare(t.text, t)
            elif t.kind == "id":
                header_names.append(t.text)
            else:
                raise ParseError(f"unexpected {t.text!r} in port list", t.line, t.col)
            if p.at(","):
                p.next()
        p.expect(")")
    p.expect(";")

    while True:
        t = p.next()
        if t.text == "endmodule":
            break
        if t.text in ("input", "output", "wire", "logic"):
            names = declare(t.text, t)
            if p.at("=") and t.text in ("wire", "logic") and len(names) == 1:
                eq = p.next()
                assigns[names[0].text] = (p.expr(), eq)
            p.end_statement()
        elif t.text == "assign":
            target = p.ident()
            if p.at("["):
                raise UnsupportedConstruct("partial assignment to a net", target.line, target.col)
            p.expect("=")
            if target.text in assigns:
                raise ParseError(f"net {target.text!r} driven twice", target.line, target.col)
            assigns[target.text] = (p.expr(), target)
            p.end_statement()
        elif t.text == "module":
            raise UnsupportedConstruct("more than one module", t.line, t.col)
        else:
            raise UnsupportedConstruct(f"unsupported construct {t.text!r}", t.line, t.col)
    if p.peek() is not None:
        t = p.peek()
        raise UnsupportedConstruct("more than one module", t.line, t.col)

    for hn in header_names:
        if hn not in nets:
            raise ParseError(f"port {hn!r} has no declaration")
    if len(outputs) != 1:
        raise UnsupportedConstruct(f"exactly one output is supported, module {name} has {len(outputs)}")
    input_names = {n for n, _ in inputs}
    resolved: dict[str, Expr] = {}
    active: set[str] = set()

    def resolve(net: str, tok: Tok) -> Expr:
        if net in resolved:
            return resolved[net]
        if net not in assigns:
            raise ParseError(f"net {net!r} is never driven", tok.line, tok.col)
        if net in active:
            raise UnsupportedConstruct(f"combinational loop through {net!r}", tok.line, tok.col)
        active.add(net)
        node, _ = assigns[net]
        e = sizer.assign(node, nets[net])
        active.discard(net)
        resolved[net] = e
        return e

    sizer = _Sizer(nets, input_names, resolve)
    for n in assigns:
        if n in input_names:
            _, tok = assigns[n]
            raise ParseError(f"input {n!r} cannot be assigned", tok.line, tok.col)
    out_name, out_w = outputs[0]
    body = resolve(out_name, Tok("id", out_name, 0, 0))
    return SourceModule(name, tuple(inputs), (out_name, out_w), body)


def module_from_expr(name: str, body: Expr, output: str = "o") -> SourceModule:
    return SourceModule(name, tuple(ir.free_vars(body)), (output, body.width), body)


def load_source(path, fmt: str | None = None) -> SourceModule:
    path = Path(path)
    text = path.read_text()
    fmt = fmt or ("verilog" if path.suffix in (".v", ".sv") else "sexpr")
    if fmt == "verilog":
        return parse_verilog_subset(text)
    return module_from_expr(path.stem.split(".")[0], parse_sexpr(text))
