"""Equality-saturation engine.

Hashconsed e-nodes over a union-find of e-classes with deferred (worklist)
congruence repair, top-down e-matching, and a bitwidth analysis that refuses
to merge classes of different widths.
"""

from __future__ import annotations

import math
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterator

from . import ir
from .dsp import Shape
from .errors import WidthError, WidthMismatch
from .ir import Expr

EClassId = int


@dataclass(frozen=True, slots=True)
class ENode:
    op: str
    payload: tuple
    children: tuple[EClassId, ...] = ()

    def key(self):
        return (self.op, repr(self.payload), self.children)

    def label(self) -> str:
        if self.op == "var":
            return f"{self.payload[0]}:{self.payload[1]}"
        if self.op == "const":
            return f"{self.payload[0]}'{self.payload[1]}"
        if self.op == "dsp?":
            return f"DSP?[{self.payload[0]}]"
        if self.op == "dsp":
            return f"DSP[{self.payload[0]}]"
        if self.payload:
            return f"{self.op} {' '.join(str(p) for p in self.payload)}"
        return self.op


def enode_width(node: ENode, child_widths: tuple[int, ...]) -> int:
    if node.op == "dsp?":
        shape, w = node.payload
        if not isinstance(shape, Shape) or len(child_widths) != shape.arity:
            raise WidthError(f"malformed proposal node {node}")
        return ir.check_width(w)
    return ir.node_width(node.op, node.payload, child_widths)


@dataclass
class EClass:
    id: EClassId
    width: int
    nodes: list[ENode] = field(default_factory=list)
    parents: list[tuple[ENode, EClassId]] = field(default_factory=list)


# ---------------------------------------------------------------------------
# patterns


@dataclass(frozen=True)
class PVar:
    name: str


@dataclass(frozen=True)
class PNode:
    """Pattern node.  ``payload`` of None matches any payload; ``name`` records the matched e-node."""

    op: str
    children: tuple = ()
    payload: tuple | None = None
    name: str | None = None


@dataclass(frozen=True)
class Pattern:
    root: PNode
    conditions: tuple[Callable[["EGraph", "Match"], bool], ...] = ()

    def vars(self) -> list[str]:
        out: list[str] = []

        def walk(p):
            if isinstance(p, PVar):
                if p.name not in out:
                    out.append(p.name)
            else:
                for c in p.children:
                    walk(c)

        walk(self.root)
        return out


@dataclass(frozen=True)
class Match:
    root: EClassId
    subst: dict[str, EClassId]
    nodes: dict[str, ENode]

    def __getitem__(self, name):
        return self.subst[name]


def parse_pattern(text: str, conditions=()) -> Pattern:
    """``(mul ?x ?y)`` style patterns; leading integer atoms pin the payload."""
    from .frontend import Atom, read_sexp

    def go(node):
        if isinstance(node, Atom):
            if node.text.startswith("?"):
                return PVar(node.text[1:])
            raise ValueError(f"pattern leaves must be ?variables, got {node.text!r}")
        op = node[0].text.lower()
        ints, rest = [], list(node[1:])
        while rest and isinstance(rest[0], Atom) and not rest[0].text.startswith("?"):
            ints.append(int(rest.pop(0).text, 0))
        return PNode(op, tuple(go(c) for c in rest), tuple(ints) if ints else None)

    root = go(read_sexp(text))
    return Pattern(PNode(root.op, root.children, root.payload, "e"), tuple(conditions))


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunLimits:
    max_iterations: int = 10
    max_enodes: int = 10_000
    time_ms: int = 5_000

    def __post_init__(self):
        if min(self.max_iterations, self.max_enodes, self.time_ms) <= 0:
            raise ValueError("run limits must be positive")


@dataclass
class Application:
    rule: str
    lhs: EClassId
    rhs: EClassId
    lhs_term: Expr | None = None
    rhs_term: Expr | None = None


@dataclass
class SaturationReport:
    iterations: int
    rounds: int
    stop_reason: str
    n_nodes: int
    n_classes: int
    elapsed_ms: float
    matches: dict[str, int]
    applications: list[Application] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "rounds": self.rounds,
            "stop_reason": self.stop_reason,
            "enodes": self.n_nodes,
            "eclasses": self.n_classes,
            "elapsed_ms": round(self.elapsed_ms, 3),
            "matches": dict(self.matches),
        }


class EGraph:
    def __init__(self):
        self._uf: list[EClassId] = []
        self.hashcons: dict[ENode, EClassId] = {}
        self.classes: dict[EClassId, EClass] = {}
        self.pending: list[EClassId] = []
        self.version = 0
        self.n_nodes = 0

    # union-find ---------------------------------------------------------
    def find(self, x: EClassId) -> EClassId:
        root = x
        while self._uf[root] != root:
            root = self._uf[root]
        while self._uf[x] != root:
            self._uf[x], x = root, self._uf[x]
        return root

    def canonicalize(self, node: ENode) -> ENode:
        ch = tuple(self.find(c) for c in node.children)
        return node if ch == node.children else ENode(node.op, node.payload, ch)

    def width(self, x: EClassId) -> int:
        return self.classes[self.find(x)].width

    def nodes(self, x: EClassId) -> list[ENode]:
        return self.classes[self.find(x)].nodes

    def class_ids(self) -> list[EClassId]:
        return sorted(self.classes)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def lookup(self, node: ENode) -> EClassId | None:
        cid = self.hashcons.get(self.canonicalize(node))
        return None if cid is None else self.find(cid)

    # mutation -----------------------------------------------------------
    def add(self, node: ENode) -> EClassId:
        for c in node.children:
            if not 0 <= c < len(self._uf):
                raise ValueError(f"unknown e-class {c}")
        node = self.canonicalize(node)
        hit = self.hashcons.get(node)
        if hit is not None:
            return self.find(hit)
        w = enode_width(node, tuple(self.classes[c].width for c in node.children))
        cid = len(self._uf)
        self._uf.append(cid)
        self.classes[cid] = EClass(cid, w, [node])
        for c in set(node.children):
            self.classes[c].parents.append((node, cid))
        self.hashcons[node] = cid
        self.version += 1
        self.n_nodes += 1
        return cid

    def add_expr(self, e: Expr) -> EClassId:
        memo: dict[int, EClassId] = {}
        for x in ir.subterms(e):
            memo[id(x)] = self.add(ENode(x.op, x.payload, tuple(memo[id(c)] for c in x.children)))
        return memo[id(e)]

    def union(self, x: EClassId, y: EClassId) -> EClassId:
        a, b = self.find(x), self.find(y)
        if a == b:
            return a
        ca, cb = self.classes[a], self.classes[b]
        if ca.width != cb.width:
            raise WidthMismatch(a, b, ca.width, cb.width)
        if b < a:
            a, b, ca, cb = b, a, cb, ca
        self._uf[b] = a
        ca.nodes.extend(cb.nodes)
        ca.parents.extend(cb.parents)
        del self.classes[b]
        self.pending.append(a)
        self.version += 1
        return a

    def rebuild(self):
        while self.pending:
            todo = sorted({self.find(c) for c in self.pending})
            self.pending = []
            for c in todo:
                self._repair(c)
        n = 0
        for cls in self.classes.values():
            uniq = {self.canonicalize(nd) for nd in cls.nodes}
            cls.nodes = sorted(uniq, key=ENode.key)
            n += len(cls.nodes)
        self.n_nodes = n

    def _repair(self, c: EClassId):
        cls = self.classes.get(self.find(c))
        if cls is None:
            return
        old = cls.parents
        for pnode, _ in old:
            self.hashcons.pop(pnode, None)
        fresh: dict[ENode, EClassId] = {}
        for pnode, pclass in old:
            pnode = self.canonicalize(pnode)
            if pnode in fresh:
                self.union(pclass, fresh[pnode])
            fresh[pnode] = self.find(pclass)
            self.hashcons[pnode] = self.find(pclass)
        root = self.classes[self.find(c)]
        if root is cls:
            cls.parents = list(fresh.items())
        else:
            root.parents.extend(fresh.items())

    # matching -----------------------------------------------------------
    def _index(self) -> dict[str, list[tuple[EClassId, ENode]]]:
        idx: dict[str, list[tuple[EClassId, ENode]]] = defaultdict(list)
        for cid in sorted(self.classes):
            for nd in self.classes[cid].nodes:
                idx[nd.op].append((cid, nd))
        return idx

    def ematch(self, pattern: Pattern, index=None) -> list[Match]:
        index = index if index is not None else self._index()
        root = pattern.root
        out: list[Match] = []
        seen = set()
        for cid, node in index.get(root.op, ()):
            for subst, named in self._match_node(root, node, {}, {}):
                m = Match(cid, subst, named)
                key = (cid, tuple(sorted(subst.items())), tuple(sorted((k, v.key()) for k, v in named.items())))
                if key in seen:
                    continue
                seen.add(key)
                if all(cond(self, m) for cond in pattern.conditions):
                    out.append(m)
        return out

    def _match_node(self, p: PNode, node: ENode, subst, named) -> Iterator[tuple[dict, dict]]:
        if node.op != p.op or len(node.children) != len(p.children):
            return
        if p.payload is not None:
            if len(p.payload) != len(node.payload):
                return
            if any(want is not None and want != got for want, got in zip(p.payload, node.payload)):
                return
        if p.name is not None:
            named = {**named, p.name: node}
        states = [(subst, named)]
        for pc, cc in zip(p.children, node.children):
            states = [s for st in states for s in self._match_class(pc, cc, *st)]
            if not states:
                return
        yield from states

    def _match_class(self, p, cid: EClassId, subst, named) -> Iterator[tuple[dict, dict]]:
        cid = self.find(cid)
        if isinstance(p, PVar):
            bound = subst.get(p.name)
            if bound is None:
                yield {**subst, p.name: cid}, named
            elif self.find(bound) == cid:
                yield subst, named
            return
        for node in self.classes[cid].nodes:
            if node.op == p.op:
                yield from self._match_node(p, node, subst, named)

    # extraction helpers -------------------------------------------------
    def best_terms(self, cost: Callable[[ENode], float]) -> dict[EClassId, tuple[float, ENode]]:
        """Bottom-up fixpoint of minimum tree cost per class under ``cost``."""
        best: dict[EClassId, tuple[float, ENode]] = {}
        changed = True
        while changed:
            changed = False
            for cid in sorted(self.classes):
                for nd in self.classes[cid].nodes:
                    base = cost(nd)
                    if base == math.inf:
                        continue
                    total = base
                    for ch in nd.children:
                        got = best.get(self.find(ch))
                        if got is None:
                            total = math.inf
                            break
                        total += got[0]
                    if total == math.inf:
                        continue
                    cur = best.get(cid)
                    if cur is None or (total, nd.key()) < (cur[0], cur[1].key()):
                        best[cid] = (total, nd)
                        changed = True
        return best

    def term_from(self, best, root: EClassId) -> Expr:
        memo: dict[EClassId, Expr] = {}

        def go(cid):
            cid = self.find(cid)
            if cid not in memo:
                nd = best[cid][1]
                memo[cid] = ir.make(nd.op, nd.payload, [go(c) for c in nd.children])
            return memo[cid]

        return go(root)

    def any_term(self, root: EClassId) -> Expr:
        """Smallest term of ``root`` ignoring proposal markers (used for soundness checks)."""
        best = self.best_terms(lambda nd: math.inf if nd.op == "dsp?" else 1)
        return self.term_from(best, root)

    # diagnostics --------------------------------------------------------
    def check_invariants(self) -> list[str]:
        problems = []
        owner: dict[ENode, EClassId] = {}
        for cid, cls in self.classes.items():
            if self.find(cid) != cid:
                problems.append(f"class {cid} is not canonical")
            for nd in cls.nodes:
                can = self.canonicalize(nd)
                if can != nd:
                    problems.append(f"class {cid} holds non-canonical node {nd}")
                if can in owner and owner[can] != cid:
                    problems.append(f"node {can} appears in classes {owner[can]} and {cid}")
                owner[can] = cid
                hc = self.hashcons.get(can)
                if hc is None or self.find(hc) != cid:
                    problems.append(f"hashcons entry for {can} does not point at class {cid}")
                try:
                    w = enode_width(can, tuple(self.width(c) for c in can.children))
                except WidthError as exc:
                    problems.append(f"width error in class {cid}: {exc}")
                    continue
                if w != cls.width:
                    problems.append(f"node {can} has width {w} in {cls.width}-bit class {cid}")
        return problems

    def to_dot(self) -> str:
        lines = ["digraph egraph {", "  compound=true;", "  node [shape=box];"]
        for cid in sorted(self.classes):
            cls = self.classes[cid]
            lines.append(f"  subgraph cluster_{cid} {{")
            lines.append(f'    style=dotted; label="e{cid} ({cls.width}b)";')
            for i, nd in enumerate(cls.nodes):
                label = nd.label().replace('"', '\\"')
                lines.append(f'    n{cid}_{i} [label="{label}"];')
            lines.append("  }")
        for cid in sorted(self.classes):
            for i, nd in enumerate(self.classes[cid].nodes):
                for ch in nd.children:
                    ch = self.find(ch)
                    lines.append(f"  n{cid}_{i} -> n{ch}_0 [lhead=cluster_{ch}];")
        lines.append("}")
        return "\n".join(lines) + "\n"


def run_rules(g: EGraph, rules, limits: RunLimits = RunLimits(), record_terms: bool = False) -> SaturationReport:
    """Match-then-apply rounds until nothing changes or a limit trips.

    Every round reads all matches from the graph as it stood at the start of
    the round, then applies them, then rebuilds.
    """
    start = time.perf_counter()
    deadline = start + limits.time_ms / 1000
    iterations = rounds = 0
    matches_per_rule: dict[str, int] = {r.name: 0 for r in rules}
    applications: list[Application] = []
    g.rebuild()
    stop = None
    while stop is None:
        if iterations >= limits.max_iterations:
            stop = "IterationLimit"
            break
        rounds += 1
        index = g._index()
        found = [(r, m) for r in rules for m in g.ematch(r.pattern, index)]
        before = g.version
        for r, m in found:
            matches_per_rule[r.name] += 1
            for lhs, rhs in r.apply(g, m):
                app = Application(r.name, g.find(lhs), g.find(rhs))
                if record_terms and r.kind == "rewrite":
                    g.rebuild()
                    app.lhs_term, app.rhs_term = g.any_term(lhs), g.any_term(rhs)
                applications.append(app)
                g.union(lhs, rhs)
            if g.n_nodes > limits.max_enodes:
                stop = "NodeLimit"
                break
            if time.perf_counter() > deadline:
                stop = "TimeLimit"
                break
        g.rebuild()
        if stop is not None:
            break
        if g.version == before:
            stop = "Saturated"
            break
        iterations += 1
        if g.n_nodes > limits.max_enodes:
            stop = "NodeLimit"
        elif time.perf_counter() > deadline:
            stop = "TimeLimit"
    return SaturationReport(
        iterations=iterations,
        rounds=rounds,
        stop_reason=stop,
        n_nodes=g.n_nodes,
        n_classes=g.n_classes,
        elapsed_ms=(time.perf_counter() - start) * 1000,
        matches=matches_per_rule,
        applications=applications,
    )
