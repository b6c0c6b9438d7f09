"""Rewrite rules: wide-multiply decomposition, DSP proposals, and a soundness checker."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

from . import ir
from .dsp import MUL_SHAPE, MULADD_SHAPE, ArchSpec, muladd_shr_shape
from .egraph import EGraph, ENode, Match, Pattern, PNode, PVar
from .errors import SoundnessViolation, WidthError

Applier = Callable[[EGraph, Match], list[tuple[int, int]]]


@dataclass(frozen=True)
class Rule:
    name: str
    pattern: Pattern
    applier: Applier = field(compare=False)
    kind: str = "rewrite"  # "rewrite" | "proposal"

    def apply(self, g: EGraph, m: Match) -> list[tuple[int, int]]:
        return self.applier(g, m)


def look_through(g: EGraph, cid: int) -> int:
    """Follow ZeroExtend nodes down to the narrowest equivalent operand."""
    cid = g.find(cid)
    while True:
        w = g.width(cid)
        inner = [
            g.find(n.children[0]) for n in g.nodes(cid) if n.op == "zext" and g.width(n.children[0]) < w
        ]
        if not inner:
            return cid
        cid = min(inner, key=lambda c: (g.width(c), c))


def effective_width(g: EGraph, cid: int) -> int:
    return g.width(look_through(g, cid))


# ---------------------------------------------------------------------------
# decomposition


@dataclass(frozen=True)
class SplitConfig:
    w0: int = 16
    max_a: int = 17

    def __post_init__(self):
        if self.w0 < 1 or self.max_a < 1:
            raise ValueError("split point and operand bound must be positive")


def split_config(arch: ArchSpec, w0: int | None = None) -> SplitConfig:
    w0 = arch.internal_shift if w0 is None else w0
    if w0 not in arch.shift_amounts:
        raise ValueError(f"split point {w0} is not a shift the {arch.name} DSP can chain with")
    return SplitConfig(w0, arch.mul_in_width)


def mul_split_rule(cfg: SplitConfig) -> Rule:
    """a*b at width W  ==  {(a*b_hi + (a*b_lo >> w0))[W-w0-1:0], (a*b_lo)[w0-1:0]}.

    Operand widths are judged after looking through ZeroExtend, so a split
    half that was padded back to W never matches again.
    """
    w0 = cfg.w0

    def cond(g, m):
        W = m.nodes["e"].payload[0]
        return (
            W == g.width(m["b"])
            and effective_width(g, m["a"]) <= cfg.max_a
            and effective_width(g, m["b"]) > w0
        )

    def apply(g, m):
        W = m.nodes["e"].payload[0]
        a = m["a"]
        b = look_through(g, m["b"])
        wb = g.width(b)

        def add(op, payload, *ch):
            return g.add(ENode(op, payload, ch))

        b_lo = add("zext", (W,), add("extract", (w0 - 1, 0), b))
        b_hi = add("zext", (W,), add("extract", (wb - 1, w0), b))
        lo_prod = add("mul", (W,), a, b_lo)
        hi_prod = add("mul", (W,), a, b_hi)
        upper = add("extract", (W - w0 - 1, 0), add("add", (W,), hi_prod, add("shr", (w0,), lo_prod)))
        lower = add("extract", (w0 - 1, 0), lo_prod)
        return [(m.root, add("concat", (), upper, lower))]

    pattern = Pattern(PNode("mul", (PVar("a"), PVar("b")), name="e"), (cond,))
    return Rule(f"mul-split[w0={w0},max_a={cfg.max_a}]", pattern, apply)


# ---------------------------------------------------------------------------
# DSP proposals


def dsp_proposal_rules(arch: ArchSpec) -> list[Rule]:
    def ports_ok(g, m, names):
        for n in names:
            limit = arch.c_width if n == "z" else arch.mul_in_width
            if effective_width(g, m[n]) > limit:
                return False
        return True

    def fits_acc(g, m):
        return g.width(m.root) <= arch.acc_width

    def mul_covers(g, m):
        # the inner product must keep at least as many bits as the sum consumes
        return m.nodes["m"].payload[0] >= g.width(m.root)

    def proposer(shape_of, names):
        def apply(g, m):
            shape = shape_of(m)
            prop = g.add(ENode("dsp?", (shape, g.width(m.root)), tuple(m[n] for n in names)))
            return [(m.root, prop)]

        return apply

    mul_only = Pattern(
        PNode("mul", (PVar("x"), PVar("y")), name="e"),
        (fits_acc, lambda g, m: ports_ok(g, m, "xy")),
    )
    mul_add_shr = Pattern(
        PNode("add", (PNode("mul", (PVar("x"), PVar("y")), name="m"), PNode("shr", (PVar("z"),), name="s")), name="e"),
        (
            lambda g, m: m.nodes["s"].payload[0] in arch.shift_amounts,
            fits_acc,
            mul_covers,
            lambda g, m: ports_ok(g, m, "xyz"),
        ),
    )
    mul_add = Pattern(
        PNode("add", (PNode("mul", (PVar("x"), PVar("y")), name="m"), PVar("z")), name="e"),
        (fits_acc, mul_covers, lambda g, m: ports_ok(g, m, "xyz")),
    )
    return [
        Rule("propose-mul", mul_only, proposer(lambda m: MUL_SHAPE, "xy"), "proposal"),
        Rule(
            "propose-muladd-shr",
            mul_add_shr,
            proposer(lambda m: muladd_shr_shape(m.nodes["s"].payload[0]), "xyz"),
            "proposal",
        ),
        Rule("propose-muladd", mul_add, proposer(lambda m: MULADD_SHAPE, "xyz"), "proposal"),
    ]


RULESET_NAMES = ("split", "propose")


def ruleset(names, arch: ArchSpec, split: SplitConfig | None = None) -> list[Rule]:
    out: list[Rule] = []
    for name in names:
        if name == "split":
            out.append(mul_split_rule(split or split_config(arch)))
        elif name == "propose":
            out.extend(dsp_proposal_rules(arch))
        else:
            raise ValueError(f"unknown ruleset {name!r}; choose from {', '.join(RULESET_NAMES)}")
    return out


# ---------------------------------------------------------------------------
# soundness checking


@dataclass
class CheckReport:
    rule: str
    instances: int = 0
    exhaustive: int = 0
    sampled: int = 0
    exempt: bool = False

    @property
    def vacuous(self) -> bool:
        return not self.exempt and self.instances == 0

    @property
    def status(self) -> str:
        if self.exempt:
            return "exempt"
        if self.vacuous:
            return "vacuous: 0 instances"
        return "pass"


def _payload_domain(op: str, cap: int):
    if op in ("mul", "add", "zext"):
        return [(w,) for w in range(1, cap + 1)]
    if op in ("shr", "shl"):
        return [(k,) for k in range(cap + 1)]
    if op == "extract":
        return [(hi, lo) for hi in range(cap) for lo in range(hi + 1)]
    if op == "concat":
        return [()]
    raise ValueError(f"cannot enumerate payloads for {op!r}")


def _instances(pattern: Pattern, width_budget: int, cap: int):
    """Yield (lhs Expr, var widths) for every pattern instantiation within budget."""
    names = pattern.vars()
    for widths in itertools.product(range(1, cap + 1), repeat=len(names)):
        if sum(widths) > width_budget:
            continue
        leaves = {n: ir.Var(f"x{i}", w) for i, (n, w) in enumerate(zip(names, widths))}

        def build(p):
            if isinstance(p, PVar):
                yield leaves[p.name]
                return
            payloads = [p.payload] if p.payload is not None else _payload_domain(p.op, cap)
            for kids in itertools.product(*[list(build(c)) for c in p.children]):
                for pl in payloads:
                    try:
                        yield ir.make(p.op, pl, kids)
                    except WidthError:
                        continue

        for lhs in build(pattern.root):
            yield lhs, dict(zip(names, widths))


def check_rule_soundness(rule: Rule, width_budget: int, max_var_width: int | None = None, seed: int = 0x5EED) -> CheckReport:
    """Instantiate ``rule`` at every width assignment within budget and compare both sides.

    Exhaustive when an instance has at most 16 free input bits, otherwise
    4096 random vectors plus corners.  Raises SoundnessViolation on the first
    mismatch.
    """
    from .synth import Counterexample, VerifyBudget, check_equivalence

    report = CheckReport(rule.name)
    if rule.kind == "proposal":
        report.exempt = True
        return report
    cap = max_var_width or width_budget
    budget = VerifyBudget(exhaustive_bit_limit=16, sample_count=4096, seed=seed)
    for lhs, widths in _instances(rule.pattern, width_budget, cap):
        g = EGraph()
        root = g.add_expr(lhs)
        g.rebuild()
        for m in g.ematch(rule.pattern):
            if g.find(m.root) != root:
                continue
            pairs = rule.apply(g, m)
            g.rebuild()
            for l, r in pairs:
                lt, rt = g.any_term(l), g.any_term(r)
                inputs = sorted(set(ir.free_vars(lt)) | set(ir.free_vars(rt)))
                verdict = check_equivalence(lt, rt, inputs, budget)
                report.instances += 1
                if isinstance(verdict, Counterexample):
                    raise SoundnessViolation(rule.name, ir.to_sexpr(lhs), verdict.env, verdict.expected, verdict.actual, report)
                if verdict.kind == "Exhaustive":
                    report.exhaustive += 1
                else:
                    report.sampled += 1
    return report
