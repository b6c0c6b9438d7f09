import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from churchmap import ir
from churchmap.egraph import EGraph, ENode, Pattern, PNode, PVar, RunLimits, parse_pattern, run_rules
from churchmap.errors import WidthMismatch
from churchmap.ir import Add, Mul, Var

from conftest import exprs


def var(g, name, w=4):
    return g.add(ENode("var", (name, w)))


class NaiveClosure:
    """Reference congruence closure by brute-force fixpoint over every node ever added."""

    def __init__(self):
        self.nodes = []  # (class id, op, payload, children)
        self.parent = {}

    def find(self, x):
        while self.parent.setdefault(x, x) != x:
            x = self.parent[x]
        return x

    def merge(self, x, y):
        x, y = self.find(x), self.find(y)
        if x != y:
            self.parent[max(x, y)] = min(x, y)
            return True
        return False

    def close(self):
        changed = True
        while changed:
            changed = False
            seen = {}
            for cid, op, payload, ch in self.nodes:
                key = (op, payload, tuple(self.find(c) for c in ch))
                if key in seen:
                    changed |= self.merge(seen[key], cid)
                else:
                    seen[key] = cid


def random_session(seed, steps=1000):
    rng = random.Random(seed)
    g, ref = EGraph(), NaiveClosure()
    ids = {4: [], 8: []}

    def add(node):
        cid = g.add(node)
        ref.nodes.append((cid, node.op, node.payload, node.children))
        ids[g.width(cid)].append(cid)
        return cid

    for name in "abcd":
        add(ENode("var", (name, 4)))
    for _ in range(steps):
        r = rng.random()
        if r < 0.45:
            op = rng.choice(["add", "mul"])
            w = rng.choice([4, 8]) if op == "mul" else 4
            add(ENode(op, (w,), (rng.choice(ids[4]), rng.choice(ids[4]))))
        elif r < 0.55:
            add(ENode("zext", (8,), (rng.choice(ids[4]),)))
        elif r < 0.9:
            w = rng.choice([4, 8] if ids[8] else [4])
            x, y = rng.choice(ids[w]), rng.choice(ids[w])
            g.union(x, y)
            ref.merge(x, y)
        else:
            g.rebuild()
    g.rebuild()
    ref.close()
    return g, ref


def test_randomized_operations_match_naive_closure():
    g, ref = random_session(seed=2024)
    assert g.check_invariants() == []
    all_ids = sorted({cid for cid, *_ in ref.nodes})
    for x in all_ids:
        for y in all_ids:
            assert (g.find(x) == g.find(y)) == (ref.find(x) == ref.find(y))
    # hashcons uniqueness: each canonical node lives in exactly one class
    owner = {}
    for cid in g.class_ids():
        for nd in g.nodes(cid):
            assert owner.setdefault(nd, cid) == cid


@pytest.mark.parametrize("seed", [1, 7, 99])
def test_randomized_sessions_other_seeds(seed):
    g, ref = random_session(seed, steps=300)
    assert g.check_invariants() == []
    for cid, op, payload, ch in ref.nodes:
        assert g.lookup(ENode(op, payload, ch)) == g.find(cid)


def test_hashcons_dedupes():
    g = EGraph()
    a, b = var(g, "a"), var(g, "b")
    x = g.add(ENode("add", (4,), (a, b)))
    assert g.add(ENode("add", (4,), (a, b))) == x
    assert g.n_nodes == 3


def test_union_keeps_smaller_id_and_congruence():
    g = EGraph()
    a, b, c = var(g, "a"), var(g, "b"), var(g, "c")
    fa = g.add(ENode("add", (4,), (a, c)))
    fb = g.add(ENode("add", (4,), (b, c)))
    assert g.find(fa) != g.find(fb)
    assert g.union(b, a) == a
    g.rebuild()
    assert g.find(fa) == g.find(fb)
    assert g.check_invariants() == []


def test_width_mismatch_on_union():
    g = EGraph()
    a, w = var(g, "a", 4), var(g, "w", 8)
    with pytest.raises(WidthMismatch):
        g.union(a, w)


def test_add_rejects_unknown_child():
    with pytest.raises(ValueError):
        EGraph().add(ENode("zext", (8,), (3,)))


def test_add_expr_shares_subterms():
    g = EGraph()
    a = Var("a", 8)
    e = Add(8, Mul(8, a, a), Mul(8, a, a))
    root = g.add_expr(e)
    assert g.n_nodes == 3
    assert g.any_term(root) == e


@settings(max_examples=100, deadline=None)
@given(exprs(dsp=False))
def test_add_expr_then_any_term_round_trip(e):
    g = EGraph()
    root = g.add_expr(e)
    assert g.width(root) == e.width
    assert g.any_term(root) == e
    assert g.check_invariants() == []


def test_ematch_with_nonlinear_pattern():
    g = EGraph()
    a, b = var(g, "a"), var(g, "b")
    sq = g.add(ENode("mul", (4,), (a, a)))
    g.add(ENode("mul", (4,), (a, b)))
    pat = parse_pattern("(mul ?x ?x)")
    ms = g.ematch(pat)
    assert [m.root for m in ms] == [sq]
    assert ms[0]["x"] == a
    g.union(a, b)
    g.rebuild()
    assert len(g.ematch(pat)) == 1  # both products are now one node


def test_ematch_payload_and_conditions():
    g = EGraph()
    a = var(g, "a", 8)
    s4 = g.add(ENode("shr", (4,), (a,)))
    g.add(ENode("shr", (2,), (a,)))
    assert [m.root for m in g.ematch(parse_pattern("(shr 4 ?x)"))] == [s4]
    wide = Pattern(PNode("shr", (PVar("x"),), name="e"), (lambda g, m: m.nodes["e"].payload[0] > 3,))
    assert [m.root for m in g.ematch(wide)] == [s4]


class Commute:
    name = "commute-add"
    kind = "rewrite"
    pattern = parse_pattern("(add ?x ?y)")

    def apply(self, g, m):
        return [(m.root, g.add(ENode("add", m.nodes["e"].payload, (m["y"], m["x"]))))]


class Grow:
    """Unbounded: every sum spawns a wider-nested sum, so the graph never stops growing."""

    name = "grow"
    kind = "rewrite"
    pattern = parse_pattern("(add ?x ?y)")

    def apply(self, g, m):
        new = g.add(ENode("add", m.nodes["e"].payload, (m.root, m["y"])))
        return [(new, new)]


def test_saturation_reaches_fixpoint():
    g = EGraph()
    root = g.add_expr(Add(4, Var("a", 4), Var("b", 4)))
    rep = run_rules(g, [Commute()])
    assert rep.stop_reason == "Saturated"
    assert len(g.nodes(root)) == 2
    assert g.check_invariants() == []


def test_iteration_and_node_limits():
    seed = Add(4, Var("a", 4), Var("b", 4))
    g = EGraph()
    g.add_expr(seed)
    rep = run_rules(g, [Grow()], RunLimits(max_iterations=3))
    assert (rep.stop_reason, rep.iterations) == ("IterationLimit", 3)
    g = EGraph()
    g.add_expr(seed)
    rep = run_rules(g, [Grow()], RunLimits(max_iterations=10_000, max_enodes=50))
    assert rep.stop_reason == "NodeLimit"


def test_limits_must_be_positive():
    with pytest.raises(ValueError):
        RunLimits(max_iterations=0)


def test_dot_output_mentions_every_class():
    g = EGraph()
    g.add_expr(Add(4, Var("a", 4), Var("b", 4)))
    dot = g.to_dot()
    assert dot.startswith("digraph") and all(f"cluster_{c}" in dot for c in g.class_ids())


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), max_size=30))
def test_union_order_irrelevant_to_partition(pairs):
    def partition(ps):
        g = EGraph()
        ids = [var(g, f"v{i}") for i in range(10)]
        for x, y in ps:
            g.union(ids[x], ids[y])
        g.rebuild()
        return {frozenset(i for i in range(10) if g.find(ids[i]) == g.find(ids[j])) for j in range(10)}

    assert partition(pairs) == partition(list(reversed(pairs)))
