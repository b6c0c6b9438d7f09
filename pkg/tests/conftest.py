from pathlib import Path

import pytest
from hypothesis import strategies as st

from churchmap import ir
from churchmap.dsp import ArchSpec, DspParams, Mode, load_arch
from churchmap.frontend import load_source

ROOT = Path(__file__).resolve().parents[1]
DESIGNS = ROOT / "designs"
ARCHS = ROOT / "arch"


@pytest.fixture
def tiny_arch():
    return load_arch(ARCHS / "tiny.toml")


@pytest.fixture
def mul16x32():
    return load_source(DESIGNS / "mul16x32.v")


@pytest.fixture
def mul4x8():
    return load_source(DESIGNS / "mul4x8.v")


def var_for(width, k=0):
    # one name per width keeps free-variable widths consistent
    return ir.Var(f"{'xyz'[k]}{width}", width)


@st.composite
def exprs(draw, width=None, depth=3, max_width=12, dsp=True):
    """Random well-formed expressions of the given width."""
    if width is None:
        width = draw(st.integers(1, max_width))
    if depth == 0 or draw(st.integers(0, 3)) == 0:
        if draw(st.booleans()):
            return var_for(width, draw(st.integers(0, 1)))
        return ir.Const(draw(st.integers(0, ir.mask(width))), width)
    ops = ["mul", "add", "shr", "shl", "extract", "zext"]
    if width >= 2:
        ops.append("concat")
    if dsp:
        ops.append("dsp")
    op = draw(st.sampled_from(ops))
    sub = lambda w: draw(exprs(w, depth - 1, max_width, dsp))  # noqa: E731
    if op in ("mul", "add"):
        a = sub(draw(st.integers(1, max_width)))
        b = sub(draw(st.integers(1, max_width)))
        return (ir.Mul if op == "mul" else ir.Add)(width, a, b)
    if op in ("shr", "shl"):
        return (ir.Shr if op == "shr" else ir.Shl)(sub(width), draw(st.integers(0, width + 1)))
    if op == "extract":
        cw = draw(st.integers(width, max_width + 4))
        lo = draw(st.integers(0, cw - width))
        return ir.Extract(lo + width - 1, lo, sub(cw))
    if op == "concat":
        k = draw(st.integers(1, width - 1))
        return ir.Concat(sub(width - k), sub(k))
    if op == "zext":
        return ir.ZeroExtend(sub(draw(st.integers(1, width))), width)
    mode = draw(st.sampled_from(list(Mode)))
    params = DspParams(mode, draw(st.integers(0, 6)) if mode is Mode.MULADD_SHR else 0)
    a, b = sub(draw(st.integers(1, 8))), sub(draw(st.integers(1, 8)))
    c = None if mode is Mode.MUL else sub(draw(st.integers(1, max_width)))
    return ir.DspInst(params, width, a, b, c)


@st.composite
def envs_for(draw, e):
    return {n: draw(st.integers(0, ir.mask(w))) for n, w in ir.free_vars(e)}


@st.composite
def expr_and_env(draw, **kw):
    e = draw(exprs(**kw))
    return e, draw(envs_for(e))


SMALL_ARCH = ArchSpec(name="small", mul_in_width=5, acc_width=16, c_width=16, internal_shift=4, shift_amounts=frozenset({4}))


ACCEPTANCE: dict[int, str] = {}


def report_criterion(capsys, n, ok, detail):
    line = f"[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE[n] = line
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
