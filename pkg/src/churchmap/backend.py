"""Structural netlists: construction from extracted terms, simulation, Verilog and JSON output."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import dsp, ir
from .dsp import ArchSpec, DspParams, Mode
from .errors import BehavioralNode, UnboundVar, WidthError
from .ir import Concat, Const, DspInst, Expr, Extract, Var, ZeroExtend

DSP_CELL_COST = 100


@dataclass(frozen=True)
class Assign:
    target: str
    expr: Expr  # structural, over net names


@dataclass(frozen=True)
class DspCell:
    name: str
    params: DspParams
    width: int
    ports: tuple[tuple[str, str], ...]  # (port, net) for a, b[, c], o

    def port(self, p: str) -> str | None:
        return dict(self.ports).get(p)


@dataclass
class Netlist:
    name: str
    inputs: tuple[tuple[str, int], ...]
    output: tuple[str, int]
    wires: list[tuple[str, int]] = field(default_factory=list)
    items: list[Assign | DspCell] = field(default_factory=list)
    arch: ArchSpec | None = None

    @property
    def cells(self) -> list[DspCell]:
        return [it for it in self.items if isinstance(it, DspCell)]

    @property
    def assigns(self) -> list[Assign]:
        return [it for it in self.items if isinstance(it, Assign)]

    def net_widths(self) -> dict[str, int]:
        return {**dict(self.inputs), **dict(self.wires), self.output[0]: self.output[1]}

    def cost(self) -> float:
        wiring = sum(sum(1 for _ in ir.subterms(a.expr)) for a in self.assigns)
        return DSP_CELL_COST * len(self.cells) + wiring

    def validate(self):
        widths = self.net_widths()
        defined = set(dict(self.inputs))
        driven: set[str] = set()

        def read(net):
            if net not in defined:
                raise WidthError(f"net {net} read before it is driven")

        for it in self.items:
            if isinstance(it, Assign):
                for name, w in ir.free_vars(it.expr):
                    read(name)
                    if widths.get(name) != w:
                        raise WidthError(f"net {name} read at {w} bits but declared {widths.get(name)}")
                if it.expr.width != widths[it.target]:
                    raise WidthError(f"assign to {it.target} is {it.expr.width} bits, net is {widths[it.target]}")
                target = it.target
            else:
                for p in ("a", "b"):
                    if it.port(p) is None:
                        raise WidthError(f"cell {it.name} port {p} unconnected")
                for p, net in it.ports:
                    if p != "o":
                        read(net)
                        if self.arch is not None:
                            limit = self.arch.c_width if p == "c" else self.arch.mul_in_width
                            if widths[net] > limit:
                                raise WidthError(f"cell {it.name} port {p} driven by {widths[net]}-bit net")
                target = it.port("o")
                if widths[target] != it.width:
                    raise WidthError(f"cell {it.name} output is {it.width} bits, net {target} is {widths[target]}")
            if target in driven:
                raise WidthError(f"net {target} driven twice")
            driven.add(target)
            defined.add(target)
        undriven = {w for w, _ in self.wires} - driven
        if undriven or self.output[0] not in driven:
            raise WidthError(f"undriven nets: {sorted(undriven | ({self.output[0]} - driven))}")

    # simulation ---------------------------------------------------------
    def _run(self, env, evaluate, arch):
        nets = {}
        for name, _ in self.inputs:
            if name not in env:
                raise UnboundVar(f"no value bound for input {name}")
            nets[name] = env[name]
        for it in self.items:
            if isinstance(it, Assign):
                nets[it.target] = evaluate(it.expr, nets)
            else:
                a, b = nets[it.port("a")], nets[it.port("b")]
                c = nets[it.port("c")] if it.port("c") else None
                if arch is None:
                    v = dsp.raw_semantics(it.params, a, b, c, it.width)
                else:
                    v = dsp.dsp_semantics(arch, it.params, a, b, c, it.width)
                nets[it.port("o")] = v
        return nets[self.output[0]]

    def evaluate(self, env: dict[str, int]) -> int:
        return int(self._run(env, ir.eval, self.arch))

    def evaluate_batch(self, env):
        return self._run(env, ir.eval_batch, self.arch)

    # serialization ------------------------------------------------------
    def to_json(self) -> str:
        items = []
        for it in self.items:
            if isinstance(it, Assign):
                items.append({"assign": it.target, "expr": ir.to_sexpr(it.expr)})
            else:
                items.append(
                    {
                        "cell": it.name,
                        "mode": it.params.mode.value,
                        "shift": it.params.shift,
                        "width": it.width,
                        "ports": dict(it.ports),
                    }
                )
        doc = {
            "module": self.name,
            "inputs": [list(p) for p in self.inputs],
            "output": list(self.output),
            "arch": self.arch.to_dict() if self.arch else None,
            "wires": [list(w) for w in self.wires],
            "items": items,
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Netlist":
        from .frontend import parse_sexpr

        doc = json.loads(text)
        items: list[Assign | DspCell] = []
        for it in doc["items"]:
            if "assign" in it:
                items.append(Assign(it["assign"], parse_sexpr(it["expr"])))
            else:
                ports = tuple(sorted(it["ports"].items(), key=lambda kv: "abco".index(kv[0])))
                items.append(DspCell(it["cell"], DspParams(Mode(it["mode"]), it["shift"]), it["width"], ports))
        n = cls(
            name=doc["module"],
            inputs=tuple((a, int(w)) for a, w in doc["inputs"]),
            output=(doc["output"][0], int(doc["output"][1])),
            wires=[(a, int(w)) for a, w in doc["wires"]],
            items=items,
            arch=dsp.arch_from_dict(doc["arch"]) if doc.get("arch") else None,
        )
        n.validate()
        return n


def eval_netlist(n: Netlist, arch: ArchSpec | None, env: dict[str, int]) -> int:
    return int(n._run(env, ir.eval, arch))


class _Builder:
    def __init__(self, m, arch):
        self.inputs = dict(m.inputs)
        self.taken = set(self.inputs) | {m.output[0]}
        self.net = Netlist(m.name, tuple(m.inputs), tuple(m.output), arch=arch)
        self.signals: dict[Expr, str] = {}
        self.n_wires = 0

    def fresh(self, w: int) -> str:
        while f"w{self.n_wires}" in self.taken:
            self.n_wires += 1
        name = f"w{self.n_wires}"
        self.n_wires += 1
        self.taken.add(name)
        self.net.wires.append((name, w))
        return name

    def signal(self, e: Expr) -> str:
        """Name of a net carrying ``e``; identical subterms share one net."""
        if isinstance(e, Var):
            if self.inputs.get(e.name) != e.w:
                raise WidthError(f"term reads {e.name}:{e.w}, which is not a module input")
            return e.name
        hit = self.signals.get(e)
        if hit is not None:
            return hit
        if isinstance(e, DspInst):
            ports = [(p, self.signal(c)) for p, c in zip("abc", e.children)]
            out = self.fresh(e.w)
            name = f"dsp{len(self.net.cells)}"
            self.net.items.append(DspCell(name, e.params, e.w, tuple(ports) + (("o", out),)))
        else:
            rhs = self.inline(e)
            out = self.fresh(e.width)
            self.net.items.append(Assign(out, rhs))
        self.signals[e] = out
        return out

    def inline(self, e: Expr) -> Expr:
        if e.op in ir.BEHAVIORAL_OPS:
            raise BehavioralNode(f"behavioral operator {e.op} cannot be emitted structurally")
        if isinstance(e, (Var, Const)):
            if isinstance(e, Var):
                self.signal(e)
            return e
        if isinstance(e, DspInst):
            return Var(self.signal(e), e.w)
        if isinstance(e, Extract):
            x = e.operand
            base = x if isinstance(x, Var) else Var(self.signal(x), x.width)
            if isinstance(x, Var):
                self.signal(x)
            return Extract(e.hi, e.lo, base)
        if isinstance(e, Concat):
            return Concat(self.inline(e.hi_part), self.inline(e.lo_part))
        if isinstance(e, ZeroExtend):
            return ZeroExtend(self.inline(e.operand), e.w)
        raise BehavioralNode(f"cannot emit {e.op}")


def netlist_from_expr(e: Expr, m, arch: ArchSpec | None = None) -> Netlist:
    if e.width != m.output[1]:
        raise WidthError(f"term is {e.width} bits, output {m.output[0]} is {m.output[1]}")
    b = _Builder(m, arch)
    b.net.items.append(Assign(m.output[0], b.inline(e)))
    b.net.validate()
    return b.net


# ---------------------------------------------------------------------------
# Verilog text


def _render(e: Expr) -> str:
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Const):
        return f"{e.w}'h{e.value:x}"
    if isinstance(e, Extract):
        name = e.operand.name
        return f"{name}[{e.hi}]" if e.hi == e.lo else f"{name}[{e.hi}:{e.lo}]"
    if isinstance(e, Concat):
        parts = []
        stack = [e]
        while stack:
            x = stack.pop(0)
            if isinstance(x, Concat):
                stack[0:0] = [x.hi_part, x.lo_part]
            else:
                parts.append(_render(x))
        return "{" + ", ".join(parts) + "}"
    if isinstance(e, ZeroExtend):
        pad = e.w - e.operand.width
        inner = _render(e.operand)
        return inner if pad == 0 else f"{{{pad}'h0, {inner}}}"
    raise BehavioralNode(f"cannot render {e.op}")


def _range(w: int) -> str:
    return f"[{w - 1}:0]"


def emit_verilog(n: Netlist) -> str:
    ports = [f"  input  {_range(w)} {name}" for name, w in n.inputs]
    ports.append(f"  output {_range(n.output[1])} {n.output[0]}")
    lines = [f"// structural netlist for {n.name}; DSP is the abstract primitive in the companion model file", f"module {n.name} ("]
    lines.append(",\n".join(ports))
    lines.append(");")
    for name, w in n.wires:
        lines.append(f"  wire {_range(w)} {name};")
    if n.wires:
        lines.append("")
    for it in n.items:
        if isinstance(it, Assign):
            lines.append(f"  assign {it.target} = {_render(it.expr)};")
        else:
            conns = ", ".join(f".{p}({net})" for p, net in it.ports)
            lines.append(
                f'  DSP #(.MODE("{it.params.mode.value}"), .SHIFT({it.params.shift})) {it.name} ({conns});'
            )
    lines.append("endmodule")
    return "\n".join(lines) + "\n"


def emit_dsp_model(arch: ArchSpec) -> str:
    a, c, acc = arch.mul_in_width, arch.c_width, arch.acc_width
    return f"""// behavioral model of the abstract DSP primitive for arch {arch.name}
module DSP #(
  parameter MODE = "MUL",
  parameter SHIFT = 0
) (
  input  [{a - 1}:0] a,
  input  [{a - 1}:0] b,
  input  [{c - 1}:0] c,
  output [{acc - 1}:0] o
);
  wire [{acc - 1}:0] prod = a * b;
  wire [{acc - 1}:0] cin = (c === {{{c}{{1'bz}}}}) ? {acc}'h0 : c;
  assign o = (MODE == "MUL")    ? prod :
             (MODE == "MULADD") ? prod + cin :
                                  prod + (cin >> SHIFT);
endmodule
"""
