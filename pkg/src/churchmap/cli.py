"""Command-line entry point: map, check, bench, rules-check."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import bench as bench_mod
from .backend import Netlist, emit_dsp_model, emit_verilog
from .dsp import DEFAULT_ARCH, load_arch
from .egraph import PNode, PVar, Pattern, RunLimits
from .errors import ChurchmapError, MappingIncomplete, SoundnessViolation
from .frontend import load_source
from .mapper import map_design
from .rules import RULESET_NAMES, CheckReport, Rule, SplitConfig, check_rule_soundness, mul_split_rule, ruleset
from .synth import DEFAULT_SEED, Counterexample, VerifyBudget, check_equivalence

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INCOMPLETE = 2
EXIT_MISMATCH = 3
EXIT_UNSOUND = 4

SPLIT_CHECK_POINTS = (1, 2, 3, 4)


def _parse_overrides(cls, items, flag):
    """Turn ``key=value`` strings into a dataclass instance of ``cls``."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kw = {}
    for item in items or []:
        for part in item.split(","):
            if not part:
                continue
            key, sep, val = part.partition("=")
            key = key.strip().replace("-", "_")
            if not sep or key not in fields:
                raise ValueError(f"{flag}: expected key=value with key in {', '.join(fields)}, got {part!r}")
            val = val.strip()
            if val.lower() in ("none", "null"):
                kw[key] = None
            elif val.lower() in ("true", "false"):
                kw[key] = val.lower() == "true"
            else:
                kw[key] = int(val, 0)
    return cls(**kw)


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("CHURCHMAP_SEED")
    return int(env, 0) if env else DEFAULT_SEED


def _budget(args) -> VerifyBudget:
    b = _parse_overrides(VerifyBudget, args.budget, "--budget")
    return dataclasses.replace(b, seed=_seed(args))


def _arch(args):
    return load_arch(args.arch) if args.arch else DEFAULT_ARCH


def cmd_map(args) -> int:
    try:
        m = load_source(args.input, args.format)
        arch = _arch(args)
        limits = _parse_overrides(RunLimits, args.limits, "--limits")
        budget = _budget(args)
        rules = tuple(r.strip() for r in args.rules.split(",") if r.strip())
        split = SplitConfig(args.split_at, arch.mul_in_width) if args.split_at else None
        net, report = map_design(m, arch, limits, budget, rules, split)
    except MappingIncomplete as exc:
        print(f"error: {exc}", file=sys.stderr)
        for cid, ops in exc.blocking:
            print(f"  e-class {cid}: {ops}", file=sys.stderr)
        return EXIT_INCOMPLETE
    except (ChurchmapError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{m.name}.mapped.v").write_text(emit_verilog(net))
    (out / f"{m.name}.dsp_model.v").write_text(emit_dsp_model(arch))
    (out / f"{m.name}.netlist.json").write_text(net.to_json())
    (out / f"{m.name}.report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    if args.verbose:
        print(report.to_text(), end="")
    print(f"{m.name}: {report.dsp_cells} DSP cells, verified: {report.verification}")
    return EXIT_OK if report.verified_ok else EXIT_MISMATCH


def cmd_check(args) -> int:
    try:
        m = load_source(args.spec, args.format)
        net = Netlist.from_json(Path(args.netlist).read_text())
        budget = _budget(args)
    except (ChurchmapError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if dict(m.inputs) != dict(net.inputs) or m.output[1] != net.output[1]:
        print(
            f"error: port mismatch: spec has inputs {list(m.inputs)} -> {m.output[1]} bits, "
            f"netlist has {list(net.inputs)} -> {net.output[1]} bits",
            file=sys.stderr,
        )
        return EXIT_USAGE
    verdict = check_equivalence(m.body, net, m.inputs, budget, net.arch)
    if isinstance(verdict, Counterexample):
        print("counterexample:")
        for k, v in verdict.env.items():
            print(f"  {k} = {v:#x}")
        print(f"  spec = {verdict.expected:#x}, netlist = {verdict.actual:#x}")
        return EXIT_MISMATCH
    print(f"equivalent, verified: {verdict}")
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        widths = [int(w) for w in args.widths.split(",") if w.strip()]
        for w in widths:
            bench_mod.bench_module(w)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    budget = dataclasses.replace(bench_mod.PROOF_BUDGET, seed=_seed(args))
    rows = bench_mod.run_bench(widths, args.time_budget, budget)
    if args.out and args.out != "-":
        with open(args.out, "w", newline="") as fh:
            bench_mod.write_csv(rows, fh)
        for r in rows:
            print(f"{r.total_width:>4} {r.strategy:<11} {r.wall_time_ms:>12.3f} ms  {r.outcome:<16} {r.verified}")
    else:
        bench_mod.write_csv(rows, sys.stdout)
    return EXIT_OK


def bad_rule() -> Rule:
    """Deliberately unsound: x + y -> x << 1.  Used to exercise the checker."""

    def cond(g, m):
        return g.width(m["x"]) == m.nodes["e"].payload[0]

    def apply(g, m):
        from .egraph import ENode

        return [(m.root, g.add(ENode("shl", (1,), (m["x"],))))]

    return Rule("bad-add-as-double", Pattern(PNode("add", (PVar("x"), PVar("y")), name="e"), (cond,)), apply)


def shipped_rules_for_check(arch) -> list[Rule]:
    """The split rule at small split points (where instances fit the budget) plus the arch's own ruleset."""
    rules = [mul_split_rule(SplitConfig(w0, max_a=6)) for w0 in SPLIT_CHECK_POINTS]
    rules += ruleset(RULESET_NAMES, arch)
    return rules


def cmd_rules_check(args) -> int:
    rules = shipped_rules_for_check(_arch(args))
    if args.inject_bad:
        rules.append(bad_rule())
    failures = []
    for rule in rules:
        try:
            rep = check_rule_soundness(rule, args.width_budget, args.max_var_width, _seed(args))
        except SoundnessViolation as exc:
            failures.append(exc)
            rep = exc.report or CheckReport(rule.name)
            print(f"FAIL  {rule.name}")
            continue
        tag = "warning: " if rep.vacuous else ""
        print(f"{tag}{rep.status:<22} {rule.name}  ({rep.instances} instances: {rep.exhaustive} exhaustive, {rep.sampled} sampled)")
    if failures:
        print("\ncounterexamples:")
        print(f"{'rule':<32} {'instance':<48} env -> lhs != rhs")
        for f in failures:
            env = ", ".join(f"{k}={v:#x}" for k, v in f.env.items())
            print(f"{f.rule:<32} {f.instance:<48} {env} -> {f.values[0]:#x} != {f.values[1]:#x}")
        return EXIT_UNSOUND
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="churchmap", description="Map multiply/multiply-add designs onto DSP blocks.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=lambda s: int(s, 0), default=None, help="sampling seed (default $CHURCHMAP_SEED or 0x5EED)")
        sp.add_argument("--budget", action="append", metavar="KEY=VAL", help="verification budget overrides, e.g. sample_count=4096")

    m = sub.add_parser("map", help="map a design onto DSP cells")
    m.add_argument("input", help=".v or .sexp design")
    m.add_argument("--arch", help="architecture TOML (default ultrascale_like)")
    m.add_argument("--rules", default=",".join(RULESET_NAMES), help="comma-separated rulesets")
    m.add_argument("--limits", action="append", metavar="KEY=VAL", help="saturation limits, e.g. max_iterations=20")
    m.add_argument("--split-at", type=int, default=None, help="split point for wide multiplies (default: arch internal shift)")
    m.add_argument("--format", choices=("verilog", "sexpr"), default=None)
    m.add_argument("--out", default=".", help="output directory")
    m.add_argument("-v", "--verbose", action="store_true", help="print the full report")
    common(m)
    m.set_defaults(func=cmd_map)

    c = sub.add_parser("check", help="check a netlist against a spec")
    c.add_argument("spec")
    c.add_argument("netlist", help=".netlist.json written by map")
    c.add_argument("--format", choices=("verilog", "sexpr"), default=None)
    common(c)
    c.set_defaults(func=cmd_check)

    b = sub.add_parser("bench", help="monolithic vs decomposed verification scaling")
    b.add_argument("--widths", default="4,8,12,16", help="comma-separated total widths (even, >= 4)")
    b.add_argument("--time-budget", type=float, default=10_000, help="per-run budget in ms")
    b.add_argument("--out", default="-", help="CSV path ('-' for stdout)")
    b.add_argument("--seed", type=lambda s: int(s, 0), default=None)
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("rules-check", help="check rewrite-rule soundness at small widths")
    r.add_argument("--width-budget", type=int, default=14, help="max total free-variable bits per instance")
    r.add_argument("--max-var-width", type=int, default=8, help="max width of any single variable")
    r.add_argument("--arch", help="architecture TOML")
    r.add_argument("--inject-bad", action="store_true", help="add a known-unsound rule (tests the checker)")
    r.add_argument("--seed", type=lambda s: int(s, 0), default=None)
    r.set_defaults(func=cmd_rules_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
