"""Counterexample-guided enumerative synthesis of DSP parameters.

The universally quantified check is discharged by simulation: exhaustive
when the input space is small enough, otherwise corner vectors plus seeded
random sampling.  An optional structural tier proves equality outright when
both sides normalize to the same term.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import ir
from .dsp import ArchSpec, DspParams, Mode, Shape, param_space
from .errors import BudgetExceeded
from .ir import Add, DspInst, Expr, Extract, Mul, Shl, Shr, Var, ZeroExtend

DEFAULT_SEED = 0x5EED


@dataclass(frozen=True)
class VerifyBudget:
    exhaustive_bit_limit: int | None = 22  # None: always enumerate (proof mode)
    sample_count: int = 65_536
    corners: bool = True
    structural: bool = False
    vectorized: bool = True
    seed: int = DEFAULT_SEED
    chunk: int = 1 << 18

    def __post_init__(self):
        if self.sample_count <= 0 or (self.exhaustive_bit_limit is not None and self.exhaustive_bit_limit < 0):
            raise ValueError("verification budget counts must be positive")


@dataclass(frozen=True)
class Regime:
    kind: str  # "Exhaustive" | "Sampled" | "Structural"
    samples: int = 0

    def __str__(self):
        return f"Sampled({self.samples})" if self.kind == "Sampled" else self.kind

    @property
    def is_proof(self) -> bool:
        return self.kind != "Sampled"


@dataclass(frozen=True)
class Counterexample:
    env: dict[str, int]
    expected: int
    actual: int

    def __str__(self):
        vals = ", ".join(f"{k}={v:#x}" for k, v in self.env.items())
        return f"counterexample {vals}: expected {self.expected:#x}, got {self.actual:#x}"


# ---------------------------------------------------------------------------
# structural normal form


def _strip_zext(e: Expr) -> Expr:
    while isinstance(e, ZeroExtend):
        e = e.operand
    return e


def expand_dsp(e: DspInst) -> Expr:
    prod = Mul(e.w, e.a, e.b)
    if e.params.mode is Mode.MUL or e.c is None:
        return prod
    if e.params.mode is Mode.MULADD:
        return Add(e.w, prod, e.c)
    return Add(e.w, prod, Shr(e.c, e.params.shift))


def normalize(e: Expr) -> Expr:
    """Value-preserving rewrite to a canonical form (DSPs expanded, commutative operands sorted)."""
    memo: dict[int, Expr] = {}
    for x in ir.subterms(e):
        ch = [memo[id(c)] for c in x.children]
        if isinstance(x, DspInst):
            ex = expand_dsp(ir.make(x.op, x.payload, ch))
            r = normalize(ex)
        elif isinstance(x, (Mul, Add)):
            a, b = sorted((_strip_zext(c) for c in ch), key=ir.to_sexpr)
            r = type(x)(x.w, a, b)
        elif isinstance(x, ZeroExtend) and ch[0].width == x.w:
            r = ch[0]
        elif isinstance(x, Extract) and x.lo == 0 and x.hi == ch[0].width - 1:
            r = ch[0]
        elif isinstance(x, (Shr, Shl)) and x.amount == 0:
            r = ch[0]
        elif ch:
            r = ir.make(x.op, x.payload, ch)
        else:
            r = x
        memo[id(x)] = r
    return memo[id(e)]


# ---------------------------------------------------------------------------
# simulation-based equivalence


Side = object  # an Expr, or anything with evaluate(env) / evaluate_batch(env)


def _evaluators(side, arch) -> tuple[Callable, Callable]:
    if isinstance(side, Expr):
        return (lambda env: ir.eval(side, env, arch)), (lambda env: ir.eval_batch(side, env, arch))
    return side.evaluate, side.evaluate_batch


def corner_envs(inputs) -> list[dict[str, int]]:
    """All-zero, every single-bit-set vector in input order, then all-ones."""
    zero = {n: 0 for n, _ in inputs}
    out = [dict(zero)]
    for n, w in inputs:
        for bit in range(w):
            env = dict(zero)
            env[n] = 1 << bit
            out.append(env)
    out.append({n: ir.mask(w) for n, w in inputs})
    return out


def _batch_from_envs(envs, inputs) -> dict[str, np.ndarray]:
    return {n: ir.as_batch([e[n] for e in envs], w) for n, w in inputs}


def _random_column(rng: np.random.Generator, w: int, n: int) -> np.ndarray:
    if w <= 64:
        return rng.integers(0, ir.mask(w), size=n, dtype=np.uint64, endpoint=True)
    words = (w + 63) // 64
    chunks = [rng.integers(0, ir.mask(64), size=n, dtype=np.uint64, endpoint=True) for _ in range(words)]
    out = np.empty(n, dtype=object)
    for i in range(n):
        v = 0
        for c in chunks:
            v = (v << 64) | int(c[i])
        out[i] = v & ir.mask(w)
    return out


def _first_mismatch(spec_b, impl_b, batch, inputs) -> Counterexample | None:
    s = spec_b(batch)
    t = impl_b(batch)
    bad = np.nonzero(np.asarray(s != t, dtype=bool))[0]
    if len(bad) == 0:
        return None
    i = int(bad[0])
    env = {n: int(batch[n][i]) for n, _ in inputs}
    return Counterexample(env, int(s[i]), int(t[i]))


def _scalar_mismatch(spec_s, impl_s, env) -> Counterexample | None:
    s, t = spec_s(env), impl_s(env)
    if s != t:
        return Counterexample(dict(env), int(s), int(t))
    return None


def _check_deadline(deadline):
    if deadline is not None and time.perf_counter() > deadline:
        raise BudgetExceeded("verification time budget exhausted")


def check_equivalence(
    spec: Side,
    impl: Side,
    inputs: Iterable[tuple[str, int]],
    budget: VerifyBudget = VerifyBudget(),
    arch: ArchSpec | None = None,
    deadline: float | None = None,
) -> Regime | Counterexample:
    """Decide spec == impl over every assignment to ``inputs`` within ``budget``."""
    inputs = list(inputs)
    _check_deadline(deadline)
    if budget.structural and isinstance(spec, Expr) and isinstance(impl, Expr):
        if normalize(spec) == normalize(impl):
            return Regime("Structural")
    spec_s, spec_b = _evaluators(spec, arch)
    impl_s, impl_b = _evaluators(impl, arch)
    total_bits = sum(w for _, w in inputs)
    exhaustive = budget.exhaustive_bit_limit is None or total_bits <= budget.exhaustive_bit_limit

    if budget.corners:
        envs = corner_envs(inputs)
        if budget.vectorized:
            cx = _first_mismatch(spec_b, impl_b, _batch_from_envs(envs, inputs), inputs)
            if cx:
                return cx
        else:
            for env in envs:
                cx = _scalar_mismatch(spec_s, impl_s, env)
                if cx:
                    return cx

    if exhaustive:
        space = 1 << total_bits
        offsets = []
        off = 0
        for n, w in inputs:
            offsets.append((n, w, off))
            off += w
        if budget.vectorized:
            for start in range(0, space, budget.chunk):
                _check_deadline(deadline)
                idx = np.arange(start, min(space, start + budget.chunk), dtype=np.uint64)
                batch = {n: (idx >> np.uint64(o)) & np.uint64(ir.mask(w)) for n, w, o in offsets}
                cx = _first_mismatch(spec_b, impl_b, batch, inputs)
                if cx:
                    return cx
        else:
            for i in range(space):
                if i & 0x3FF == 0:
                    _check_deadline(deadline)
                env = {n: (i >> o) & ir.mask(w) for n, w, o in offsets}
                cx = _scalar_mismatch(spec_s, impl_s, env)
                if cx:
                    return cx
        return Regime("Exhaustive")

    rng = np.random.default_rng(budget.seed)
    n = budget.sample_count
    batch = {name: _random_column(rng, w, n) for name, w in inputs}
    if budget.vectorized:
        for start in range(0, n, budget.chunk):
            _check_deadline(deadline)
            part = {k: v[start : start + budget.chunk] for k, v in batch.items()}
            cx = _first_mismatch(spec_b, impl_b, part, inputs)
            if cx:
                return cx
    else:
        for i in range(n):
            if i & 0x3FF == 0:
                _check_deadline(deadline)
            cx = _scalar_mismatch(spec_s, impl_s, {k: int(v[i]) for k, v in batch.items()})
            if cx:
                return cx
    return Regime("Sampled", n)


# ---------------------------------------------------------------------------
# CEGIS


@dataclass(frozen=True)
class SynthQuery:
    spec: Expr
    shape: Shape
    arch: ArchSpec
    out_width: int
    ports: tuple[tuple[str, int], ...]  # cut-point inputs in a, b[, c] order

    def __post_init__(self):
        if len(self.ports) != self.shape.arity:
            raise ValueError(f"{self.shape} needs {self.shape.arity} ports, got {len(self.ports)}")
        port_set = set(self.ports)
        for fv in ir.free_vars(self.spec):
            if fv not in port_set:
                raise ValueError(f"spec reads {fv[0]}:{fv[1]} which is not a port")

    def instance(self, p: DspParams) -> DspInst:
        return DspInst(p, self.out_width, *[Var(n, w) for n, w in self.ports])


@dataclass
class Sat:
    params: object
    verified: Regime
    tried: int
    tests: int
    verify_ms: float = 0.0

    def __str__(self):
        return f"Sat({self.params}, {self.verified})"


@dataclass
class Unsat:
    tried: int
    tests: int
    verify_ms: float = 0.0

    def __str__(self):
        return f"Unsat(tried={self.tried})"


@dataclass
class _TestSet:
    inputs: list
    envs: list = field(default_factory=list)

    def rejects(self, spec: Expr, impl: Expr, arch) -> bool:
        return any(ir.eval(spec, e, arch) != ir.eval(impl, e, arch) for e in self.envs)


def cegis(
    candidates,
    build: Callable[[object], Expr],
    spec: Expr,
    inputs,
    budget: VerifyBudget,
    arch: ArchSpec | None = None,
    deadline: float | None = None,
) -> Sat | Unsat:
    """Guess-and-check over an ordered candidate list; the first verified candidate wins.

    Candidates are cheaply screened against a growing test set (seeded with
    corner vectors); survivors go to ``check_equivalence`` and any
    counterexample joins the test set.
    """
    inputs = list(inputs)
    tests = _TestSet(inputs, corner_envs(inputs) if budget.corners else [])
    tried = 0
    verify_s = 0.0
    for cand in candidates:
        tried += 1
        impl = build(cand)
        if tests.rejects(spec, impl, arch):
            continue
        t0 = time.perf_counter()
        verdict = check_equivalence(spec, impl, inputs, budget, arch, deadline)
        verify_s += time.perf_counter() - t0
        if isinstance(verdict, Counterexample):
            tests.envs.append(verdict.env)
            continue
        return Sat(cand, verdict, tried, len(tests.envs), verify_s * 1000)
    return Unsat(tried, len(tests.envs), verify_s * 1000)


def verify(q: SynthQuery, p: DspParams, budget: VerifyBudget = VerifyBudget(), deadline=None) -> Regime | Counterexample:
    return check_equivalence(q.spec, q.instance(p), q.ports, budget, q.arch, deadline)


def synthesize(q: SynthQuery, budget: VerifyBudget = VerifyBudget(), deadline=None) -> Sat | Unsat:
    return cegis(param_space(q.arch, q.shape), q.instance, q.spec, q.ports, budget, q.arch, deadline)
