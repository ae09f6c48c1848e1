"""Exception types raised across the package."""


class LagrangeSwarmError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(LagrangeSwarmError, ValueError):
    pass


class NoSpanningTree(LagrangeSwarmError):
    pass


class SpectraOverlap(LagrangeSwarmError, ArithmeticError):
    pass


class NotHurwitz(LagrangeSwarmError, ValueError):
    pass


class NotControllable(LagrangeSwarmError, ValueError):
    pass


class Overflow(LagrangeSwarmError, OverflowError):
    pass


class DuplicateFrequency(LagrangeSwarmError, ValueError):
    pass


class SingularT(LagrangeSwarmError, ArithmeticError):
    pass


class SingularMass(LagrangeSwarmError, ArithmeticError):
    pass


class NonFiniteState(LagrangeSwarmError, FloatingPointError):
    """Integration produced a non-finite state component.

    ``t``, ``agent`` (0-based) and ``component`` locate the first offending
    entry; any of them may be None when the location is unknown.
    """

    def __init__(self, t=None, agent=None, component=None, message=None, index=None):
        self.t = t
        self.index = index
        self.agent = agent
        self.component = component
        if message is None:
            where = []
            if t is not None:
                where.append(f"t={t:.6g}")
            if agent is not None:
                where.append(f"agent={agent + 1}")
            if component is not None:
                where.append(f"component={component}")
            message = "non-finite state" + (f" ({', '.join(where)})" if where else "")
        super().__init__(message)


class ParseError(LagrangeSwarmError, ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


class ValidationError(LagrangeSwarmError, ValueError):
    def __init__(self, field, message=""):
        self.field = field
        super().__init__(f"{field}: {message}" if message else field)
