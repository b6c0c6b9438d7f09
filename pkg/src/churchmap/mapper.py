"""Saturate, confirm DSP proposals by synthesis, extract a structural term."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from . import ir
from .backend import Netlist, netlist_from_expr
from .dsp import ArchSpec, Shape
from .egraph import EGraph, ENode, RunLimits, SaturationReport, run_rules
from .errors import MalformedProposal, MappingIncomplete, NoStructuralTerm
from .frontend import SourceModule
from .ir import Add, Expr, Mul, Shr, Var
from .rules import SplitConfig, look_through, ruleset
from .synth import Counterexample, Sat, SynthQuery, VerifyBudget, check_equivalence, synthesize


@dataclass(frozen=True)
class CostModel:
    dsp: float = 100
    wiring: float = 1  # var, const, extract, concat, zext
    behavioral: float = math.inf  # mul, add, shr, shl, dsp?

    def __call__(self, node: ENode) -> float:
        if node.op == "dsp":
            return self.dsp
        if node.op in ir.STRUCTURAL_OPS:
            return self.wiring
        return self.behavioral


def extract(g: EGraph, root: int, cost: CostModel = CostModel()) -> tuple[Expr, float]:
    """Minimum tree-cost structural term for ``root`` and its cost."""
    g.rebuild()
    best = g.best_terms(cost)
    root = g.find(root)
    if root not in best:
        raise NoStructuralTerm(root, blocking_classes(g, root, best, cost))
    return g.term_from(best, root), best[root][0]


def blocking_classes(g: EGraph, root: int, best, cost) -> list[tuple[int, str]]:
    """Reachable classes with no legal node at all, i.e. nothing synthesis could replace."""
    seen, stack, out = set(), [g.find(root)], []
    while stack:
        cid = stack.pop()
        if cid in seen:
            continue
        seen.add(cid)
        nodes = g.nodes(cid)
        if cid not in best and all(cost(n) == math.inf for n in nodes):
            out.append((cid, ", ".join(sorted({n.label() for n in nodes}))))
        for n in nodes:
            if n.op != "dsp?":
                stack.extend(g.find(c) for c in n.children)
    return sorted(out)


def build_spec_for_proposal(g: EGraph, cid: int, node: ENode, arch: ArchSpec) -> tuple[SynthQuery, tuple[int, ...]]:
    """Cut-point query for one proposal; returns the query and the port e-classes."""
    if node.op != "dsp?":
        raise MalformedProposal(f"{node} is not a proposal")
    shape, w = node.payload
    if not isinstance(shape, Shape) or len(node.children) != shape.arity:
        raise MalformedProposal(f"proposal {node} has the wrong arity")
    if w != g.width(cid) or w > arch.acc_width:
        raise MalformedProposal(f"proposal {node} width {w} does not fit e-class {cid} / accumulator")
    ports = tuple(look_through(g, c) for c in node.children)
    names = ("x", "y", "z")
    limits = (arch.mul_in_width, arch.mul_in_width, arch.c_width)
    vars_ = []
    for name, port, limit in zip(names, ports, limits):
        pw = g.width(port)
        if pw > limit:
            raise MalformedProposal(f"port {name} of proposal on e-class {cid} is {pw} bits, limit {limit}")
        vars_.append(Var(name, pw))
    prod = Mul(w, vars_[0], vars_[1])
    if shape.kind == "mul":
        spec = prod
    elif shape.kind == "muladd":
        spec = Add(w, prod, vars_[2])
    else:
        spec = Add(w, prod, Shr(vars_[2], shape.shift))
    q = SynthQuery(spec, shape, arch, w, tuple((v.name, v.w) for v in vars_))
    return q, ports


@dataclass
class ProposalOutcome:
    eclass: int
    shape: str
    ports: tuple[int, ...]
    result: str
    params: str | None
    verified: str | None
    tried: int
    elapsed_ms: float

    def to_dict(self):
        return dict(self.__dict__, ports=list(self.ports))


@dataclass
class MapReport:
    module: str
    arch: str
    arch_digest: str
    rules: list[str]
    seed: int
    saturation: SaturationReport
    proposals: list[ProposalOutcome] = field(default_factory=list)
    extraction_cost: float = 0.0
    netlist_cost: float = 0.0
    dsp_cells: int = 0
    verification: str = ""
    verified_ok: bool = False
    timings_ms: dict[str, float] = field(default_factory=dict)

    @property
    def verify_ms(self) -> float:
        return self.timings_ms.get("verifier", 0.0)

    def to_dict(self) -> dict:
        return {
            "module": self.module,
            "arch": self.arch,
            "arch_digest": self.arch_digest,
            "rules": self.rules,
            "seed": self.seed,
            "saturation": self.saturation.to_dict(),
            "proposals": [p.to_dict() for p in self.proposals],
            "extraction_cost": self.extraction_cost,
            "netlist_cost": self.netlist_cost,
            "dsp_cells": self.dsp_cells,
            "verification": self.verification,
            "verified_ok": self.verified_ok,
            "timings_ms": {k: round(v, 3) for k, v in self.timings_ms.items()},
        }

    def to_text(self) -> str:
        s = self.saturation
        lines = [
            f"module {self.module} on {self.arch} (arch {self.arch_digest}), rules {','.join(self.rules)}, seed {self.seed:#x}",
            f"saturation: {s.stop_reason} after {s.iterations} changing iteration(s); {s.n_nodes} e-nodes, {s.n_classes} e-classes",
            f"proposals: {len(self.proposals)}",
        ]
        for p in self.proposals:
            detail = f"{p.params} [{p.verified}]" if p.result == "Sat" else f"tried {p.tried}"
            lines.append(f"  e{p.eclass} {p.shape}: {p.result} {detail} ({p.elapsed_ms:.1f} ms)")
        lines.append(f"extraction: tree cost {self.extraction_cost:g}, netlist cost {self.netlist_cost:g}, {self.dsp_cells} DSP cells")
        lines.append(f"final check: {self.verification}")
        if self.verification.startswith("Sampled"):
            lines.append("  (equivalence checked by simulation, not proof)")
        lines.append("timings: " + ", ".join(f"{k} {v:.1f} ms" for k, v in self.timings_ms.items()))
        return "\n".join(lines) + "\n"


def proposals(g: EGraph) -> list[tuple[int, ENode]]:
    return [(cid, n) for cid in g.class_ids() for n in g.nodes(cid) if n.op == "dsp?"]


def map_design(
    m: SourceModule,
    arch: ArchSpec,
    limits: RunLimits = RunLimits(),
    budget: VerifyBudget = VerifyBudget(),
    rules=("split", "propose"),
    split: SplitConfig | None = None,
    final_budget: VerifyBudget | None = None,
    deadline: float | None = None,
) -> tuple[Netlist, MapReport]:
    t_start = time.perf_counter()
    timings: dict[str, float] = {}
    g = EGraph()
    root = g.add_expr(m.body)
    sat_report = run_rules(g, ruleset(rules, arch, split), limits)
    timings["saturate"] = sat_report.elapsed_ms
    report = MapReport(m.name, arch.name, arch.digest(), list(rules), budget.seed, sat_report)

    t0 = time.perf_counter()
    verifier_ms = 0.0
    for cid, node in proposals(g):
        t1 = time.perf_counter()
        q, ports = build_spec_for_proposal(g, cid, node, arch)
        res = synthesize(q, budget, deadline)
        verifier_ms += res.verify_ms
        if isinstance(res, Sat):
            inst = g.add(ENode("dsp", (res.params, q.out_width), ports))
            g.union(cid, inst)
            g.rebuild()
        report.proposals.append(
            ProposalOutcome(
                eclass=cid,
                shape=str(q.shape),
                ports=ports,
                result="Sat" if isinstance(res, Sat) else "Unsat",
                params=str(res.params) if isinstance(res, Sat) else None,
                verified=str(res.verified) if isinstance(res, Sat) else None,
                tried=res.tried,
                elapsed_ms=(time.perf_counter() - t1) * 1000,
            )
        )
    g.rebuild()
    timings["synthesize"] = (time.perf_counter() - t0) * 1000
    timings["verifier"] = verifier_ms

    t0 = time.perf_counter()
    try:
        term, cost = extract(g, root)
    except NoStructuralTerm as exc:
        raise MappingIncomplete(exc.root, exc.blocking) from None
    netlist = netlist_from_expr(term, m, arch)
    timings["extract"] = (time.perf_counter() - t0) * 1000
    report.extraction_cost = cost
    report.netlist_cost = netlist.cost()
    report.dsp_cells = len(netlist.cells)

    t0 = time.perf_counter()
    verdict = check_equivalence(m.body, netlist, m.inputs, final_budget or budget, arch)
    timings["final_check"] = (time.perf_counter() - t0) * 1000
    report.verification = str(verdict)
    report.verified_ok = not isinstance(verdict, Counterexample)
    timings["total"] = (time.perf_counter() - t_start) * 1000
    report.timings_ms = timings
    return netlist, report
