"""Exception hierarchy shared by all modules."""


class CausalShapError(Exception):
    pass


class UnknownNodeError(CausalShapError, KeyError):
    def __init__(self, names):
        self.names = sorted(names)
        super().__init__(f"unknown node(s): {', '.join(self.names)}")

    def __str__(self):
        return self.args[0]


class ArgumentError(CausalShapError, ValueError):
    pass


class CycleError(CausalShapError, ValueError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("cycle detected: " + " -> ".join(self.cycle))


class ResourceLimitError(CausalShapError, RuntimeError):
    pass


class ExpressionError(CausalShapError, ValueError):
    """Malformed expression or reference to an undeclared name."""


class DomainError(CausalShapError, ArithmeticError):
    """An expression left its mathematical domain (log of non-positive, x/0)."""

    def __init__(self, message, row=None):
        self.row = row
        super().__init__(message)


class SamplingError(CausalShapError, RuntimeError):
    def __init__(self, node, row, reason):
        self.node = node
        self.row = row
        super().__init__(f"sampling failed at node {node!r}, row {row}: {reason}")


class FitError(CausalShapError, RuntimeError):
    pass


class PreconditionError(CausalShapError, ValueError):
    pass


class IngestError(CausalShapError, ValueError):
    pass
