"""Abstract parameterizable DSP primitive.

The block is a pure combinational multiply / multiply-add with an optional
logical right shift on the cascade input ``c``.  Everything is unsigned and
computed at the accumulator width before truncation to the consumer's width.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import IllegalMode, PortWidthError, WidthError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class Mode(str, Enum):
    MUL = "MUL"
    MULADD = "MULADD"
    MULADD_SHR = "MULADD_SHR"


MODE_ORDER = (Mode.MUL, Mode.MULADD, Mode.MULADD_SHR)


@dataclass(frozen=True)
class DspParams:
    mode: Mode
    shift: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.mode is not Mode.MULADD_SHR and self.shift != 0:
            raise IllegalMode(f"shift is only meaningful for MULADD_SHR, got {self.mode.value} shift={self.shift}")
        if self.shift < 0:
            raise IllegalMode(f"negative shift {self.shift}")

    def __str__(self):
        if self.mode is Mode.MULADD_SHR:
            return f"MULADD_SHR({self.shift})"
        return self.mode.value


@dataclass(frozen=True)
class Shape:
    """What a "DSP?" proposal claims an e-class computes."""

    kind: str  # "mul" | "muladd" | "muladd_shr"
    shift: int | None = None

    def __post_init__(self):
        if self.kind not in ("mul", "muladd", "muladd_shr"):
            raise ValueError(f"unknown proposal shape {self.kind!r}")
        if (self.kind == "muladd_shr") != (self.shift is not None):
            raise ValueError("only muladd_shr carries a shift")

    @property
    def arity(self) -> int:
        return 2 if self.kind == "mul" else 3

    def __str__(self):
        return {"mul": "MulShape", "muladd": "MulAddShape"}.get(self.kind) or f"MulAddShrShape({self.shift})"


MUL_SHAPE = Shape("mul")
MULADD_SHAPE = Shape("muladd")


def muladd_shr_shape(shift: int) -> Shape:
    return Shape("muladd_shr", shift)


@dataclass(frozen=True)
class ArchSpec:
    name: str = "ultrascale_like"
    mul_in_width: int = 17
    acc_width: int = 48
    c_width: int = 36
    internal_shift: int = 16
    shift_amounts: frozenset[int] = field(default_factory=lambda: frozenset({16}))
    modes: frozenset[Mode] = field(default_factory=lambda: frozenset(MODE_ORDER))

    def __post_init__(self):
        object.__setattr__(self, "shift_amounts", frozenset(int(s) for s in self.shift_amounts))
        object.__setattr__(self, "modes", frozenset(Mode(m) for m in self.modes))
        for attr in ("mul_in_width", "acc_width", "c_width", "internal_shift"):
            v = getattr(self, attr)
            if not isinstance(v, int) or v < 1:
                raise WidthError(f"arch {self.name}: {attr} must be a positive integer, got {v!r}")
        if any(s < 0 for s in self.shift_amounts):
            raise WidthError(f"arch {self.name}: shift amounts must be non-negative")
        if self.internal_shift not in self.shift_amounts:
            raise WidthError(f"arch {self.name}: internal_shift {self.internal_shift} not in shift_amounts")
        if self.mul_in_width >= self.acc_width:
            raise WidthError(f"arch {self.name}: mul_in_width must be < acc_width")

    @property
    def shifts(self) -> list[int]:
        return sorted(self.shift_amounts)

    def ordered_modes(self) -> list[Mode]:
        return [m for m in MODE_ORDER if m in self.modes]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "mul_in_width": self.mul_in_width,
            "acc_width": self.acc_width,
            "c_width": self.c_width,
            "internal_shift": self.internal_shift,
            "shift_amounts": self.shifts,
            "modes": [m.value for m in self.ordered_modes()],
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


DEFAULT_ARCH = ArchSpec()


def arch_from_dict(d: dict) -> ArchSpec:
    known = {"name", "mul_in_width", "acc_width", "c_width", "internal_shift", "shift_amounts", "modes"}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown arch keys: {sorted(unknown)}")
    kw = dict(d)
    if "shift_amounts" in kw:
        kw["shift_amounts"] = frozenset(kw["shift_amounts"])
    if "modes" in kw:
        kw["modes"] = frozenset(Mode(m) for m in kw["modes"])
    if "shift_amounts" in kw and "internal_shift" not in kw and len(kw["shift_amounts"]) == 1:
        kw["internal_shift"] = next(iter(kw["shift_amounts"]))
    return ArchSpec(**kw)


def load_arch(path) -> ArchSpec:
    path = Path(path)
    with path.open("rb") as f:
        data = tomllib.load(f)
    data = data.get("arch", data)
    data.setdefault("name", path.stem)
    return arch_from_dict(data)


def param_space(arch: ArchSpec, shape: Shape) -> list[DspParams]:
    """Enumerate the hole domain for a proposal shape.

    A mode that would leave a connected ``c`` port unread is never offered, so
    three-port shapes only see the multiply-add modes.
    """
    out = []
    for mode in arch.ordered_modes():
        if shape.arity == 2:
            if mode is Mode.MUL:
                out.append(DspParams(Mode.MUL))
        elif mode is Mode.MULADD:
            out.append(DspParams(Mode.MULADD))
        elif mode is Mode.MULADD_SHR:
            out.extend(DspParams(Mode.MULADD_SHR, s) for s in arch.shifts)
    return out


def _mask(w):
    return (1 << w) - 1


def raw_semantics(p: DspParams, a, b, c, out_width: int):
    """Unchecked semantics; works on Python ints and on numpy uint64/object arrays."""
    acc = a * b
    if p.mode is Mode.MULADD and c is not None:
        acc = acc + c
    elif p.mode is Mode.MULADD_SHR and c is not None:
        acc = acc + (c >> p.shift)
    return acc & _mask(out_width)


def _peak(v) -> int:
    if isinstance(v, int):
        return v
    return int(v.max()) if len(v) else 0


def check_params(arch: ArchSpec, p: DspParams):
    if p.mode not in arch.modes:
        raise IllegalMode(f"mode {p.mode.value} not offered by arch {arch.name}")
    if p.mode is Mode.MULADD_SHR and p.shift not in arch.shift_amounts:
        raise IllegalMode(f"shift {p.shift} not offered by arch {arch.name}")


def dsp_semantics(arch: ArchSpec, p: DspParams, a, b, c=None, out_width: int | None = None):
    if out_width is None:
        out_width = arch.acc_width
    check_params(arch, p)
    if out_width > arch.acc_width:
        raise PortWidthError(f"out width {out_width} exceeds accumulator width {arch.acc_width}")
    for port, v, w in (("a", a, arch.mul_in_width), ("b", b, arch.mul_in_width), ("c", c, arch.c_width)):
        if v is not None and _peak(v) >> w:
            raise PortWidthError(f"value on port {port} does not fit {w} bits")
    return raw_semantics(p, a, b, c, out_width)
