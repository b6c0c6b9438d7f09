"""Scaling benchmark: one whole-design synthesis query versus the decomposed pipeline.

Monolithic runs CEGIS over the joint parameter space of a two-DSP sketch and
verifies each candidate against the full multiply.  Decomposed runs
``map_design``, whose synthesis queries only see cut-point inputs.  Both use
the same proof-style budget, so the monolithic check must enumerate every
input of the full design.
"""

from __future__ import annotations

import csv
import itertools
import time
from dataclasses import dataclass

from .dsp import MUL_SHAPE, MULADD_SHAPE, ArchSpec, param_space
from .errors import BudgetExceeded
from .frontend import SourceModule
from .ir import Concat, DspInst, Expr, Extract, Mul, Var, ZeroExtend
from .mapper import map_design
from .synth import Sat, VerifyBudget, cegis

CSV_FIELDS = ("total_width", "strategy", "wall_time_ms", "outcome", "verified")

PROOF_BUDGET = VerifyBudget(exhaustive_bit_limit=None, structural=True, vectorized=False)


@dataclass(frozen=True)
class BenchRow:
    total_width: int
    strategy: str  # "Monolithic" | "Decomposed"
    wall_time_ms: float
    outcome: str  # "Completed" | "Budget Exceeded"
    verified: str  # regime of the deciding check, "-" when the budget ran out

    def __post_init__(self):
        if self.wall_time_ms < 0:
            raise ValueError("wall time cannot be negative")

    def as_csv(self) -> dict:
        return {
            "total_width": self.total_width,
            "strategy": self.strategy,
            "wall_time_ms": f"{self.wall_time_ms:.3f}",
            "outcome": self.outcome,
            "verified": self.verified,
        }


def bench_arch(bw: int) -> ArchSpec:
    """DSP scaled to a ``bw/2 x bw`` multiply the way 17/48/36/16 relates to 16 x 32."""
    h = bw // 2
    return ArchSpec(name=f"bench{bw}", mul_in_width=h + 1, acc_width=2 * bw, c_width=bw, internal_shift=h, shift_amounts=frozenset({h}))


def bench_module(bw: int) -> SourceModule:
    if bw < 4 or bw % 2:
        raise ValueError(f"bench widths must be even and at least 4, got {bw}")
    h = bw // 2
    a, b = Var("a", h), Var("b", bw)
    return SourceModule(f"mul{h}x{bw}", (("a", h), ("b", bw)), ("o", bw), Mul(bw, ZeroExtend(a, bw), b))


def two_dsp_sketch(bw: int, p0, p1) -> Expr:
    """Two chained DSPs over the low and high halves of b, output {dsp1[h-1:0], dsp0[h-1:0]}."""
    h = bw // 2
    a, b = Var("a", h), Var("b", bw)
    d0 = DspInst(p0, bw, a, Extract(h - 1, 0, b))
    d1 = DspInst(p1, bw, a, Extract(bw - 1, h, b), d0)
    return Concat(Extract(h - 1, 0, d1), Extract(h - 1, 0, d0))


def run_monolithic(bw: int, budget_ms: float, budget: VerifyBudget = PROOF_BUDGET) -> BenchRow:
    arch, m = bench_arch(bw), bench_module(bw)
    # the second DSP may take any three-input mode the arch offers
    space = list(itertools.product(param_space(arch, MUL_SHAPE), param_space(arch, MULADD_SHAPE)))
    t0 = time.perf_counter()
    deadline = t0 + budget_ms / 1000
    try:
        res = cegis(space, lambda p: two_dsp_sketch(bw, *p), m.body, m.inputs, budget, arch, deadline)
    except BudgetExceeded:
        return BenchRow(bw, "Monolithic", (time.perf_counter() - t0) * 1000, "Budget Exceeded", "-")
    elapsed = (time.perf_counter() - t0) * 1000
    if elapsed > budget_ms:
        return BenchRow(bw, "Monolithic", elapsed, "Budget Exceeded", "-")
    if not isinstance(res, Sat):
        raise RuntimeError(f"two-DSP sketch has no solution at width {bw}")
    return BenchRow(bw, "Monolithic", res.verify_ms, "Completed", str(res.verified))


def run_decomposed(bw: int, budget_ms: float, budget: VerifyBudget = PROOF_BUDGET) -> BenchRow:
    arch, m = bench_arch(bw), bench_module(bw)
    t0 = time.perf_counter()
    deadline = t0 + budget_ms / 1000
    try:
        net, report = map_design(m, arch, budget=budget, final_budget=VerifyBudget(seed=budget.seed), deadline=deadline)
    except BudgetExceeded:
        return BenchRow(bw, "Decomposed", (time.perf_counter() - t0) * 1000, "Budget Exceeded", "-")
    elapsed = (time.perf_counter() - t0) * 1000
    if elapsed > budget_ms:
        return BenchRow(bw, "Decomposed", elapsed, "Budget Exceeded", "-")
    if not report.verified_ok:
        raise RuntimeError(f"decomposed mapping at width {bw} failed its final check: {report.verification}")
    return BenchRow(bw, "Decomposed", report.verify_ms, "Completed", report.verification)


def run_bench(widths, budget_ms: float = 10_000, budget: VerifyBudget = PROOF_BUDGET) -> list[BenchRow]:
    rows = []
    for bw in widths:
        rows.append(run_monolithic(bw, budget_ms, budget))
        rows.append(run_decomposed(bw, budget_ms, budget))
    return rows


def write_csv(rows, fh):
    w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r.as_csv())
