"""Exception hierarchy shared by every stage of the mapper."""


class ChurchmapError(Exception):
    pass


class WidthError(ChurchmapError):
    pass


class WidthMismatch(WidthError):
    """Two e-classes of different widths were asked to merge."""

    def __init__(self, a, b, wa, wb):
        super().__init__(f"cannot merge e-class {a} ({wa} bits) with e-class {b} ({wb} bits)")
        self.ids = (a, b)
        self.widths = (wa, wb)


class UnboundVar(ChurchmapError):
    pass


class ParseError(ChurchmapError):
    def __init__(self, msg, line=None, col=None):
        where = f" at {line}:{col}" if line is not None else ""
        super().__init__(f"{msg}{where}")
        self.line = line
        self.col = col


class UnsupportedConstruct(ParseError):
    pass


class PortWidthError(ChurchmapError):
    pass


class IllegalMode(ChurchmapError):
    pass


class MalformedProposal(ChurchmapError):
    pass


class NoStructuralTerm(ChurchmapError):
    def __init__(self, root, blocking):
        desc = ", ".join(f"e-class {cid} [{ops}]" for cid, ops in blocking) or "none"
        super().__init__(f"no structural term for e-class {root}; blocked by: {desc}")
        self.root = root
        self.blocking = blocking


class MappingIncomplete(ChurchmapError):
    def __init__(self, root, blocking):
        desc = ", ".join(f"e-class {cid} [{ops}]" for cid, ops in blocking) or "none"
        super().__init__(f"mapping incomplete: behavioral e-classes remain: {desc}")
        self.root = root
        self.blocking = blocking


class BehavioralNode(ChurchmapError):
    pass


class SoundnessViolation(ChurchmapError):
    def __init__(self, rule, instance, env, lhs_value, rhs_value, report=None):
        env_s = ", ".join(f"{k}={v:#x}" for k, v in env.items())
        super().__init__(
            f"rule {rule!r} unsound on {instance}: {env_s} gives {lhs_value:#x} != {rhs_value:#x}"
        )
        self.rule = rule
        self.instance = instance
        self.env = env
        self.values = (lhs_value, rhs_value)
        self.report = report


class BudgetExceeded(ChurchmapError):
    pass
