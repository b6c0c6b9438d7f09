"""DSP technology mapping by equality saturation plus enumerative synthesis."""

from .backend import Netlist, emit_dsp_model, emit_verilog, eval_netlist, netlist_from_expr
from .dsp import DEFAULT_ARCH, ArchSpec, DspParams, Mode, load_arch, param_space
from .egraph import EGraph, RunLimits, run_rules
from .frontend import SourceModule, load_source, parse_sexpr, parse_verilog_subset
from .ir import Expr
from .mapper import CostModel, MapReport, extract, map_design
from .rules import check_rule_soundness, mul_split_rule, ruleset
from .synth import VerifyBudget, check_equivalence, synthesize

__version__ = "0.1.0"
