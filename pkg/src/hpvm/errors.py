"""Exception types shared across the package."""


class HpvmError(Exception):
    """Base class for solver errors."""


class InvalidParameter(HpvmError, ValueError):
    pass


class DomainError(HpvmError):
    """Raised when a point leaves the domain of a smooth term."""


class StepRejected(HpvmError):
    """A candidate iterate fell outside the domain of the objective."""

    def __init__(self, msg, x_candidate=None):
        super().__init__(msg)
        self.x_candidate = x_candidate


class SubproblemNotConverged(HpvmError):
    """Inner solver hit its iteration cap before certifying the gap.

    The best point found so far is kept on ``best`` together with its
    certified gap bound, so callers can decide whether to accept it.
    """

    def __init__(self, msg, best=None, gap_bound=float("inf"), iterations=0):
        super().__init__(msg)
        self.best = best
        self.gap_bound = gap_bound
        self.iterations = iterations


class NotSelfConcordant(HpvmError):
    pass


class UnsupportedModel(HpvmError):
    """The requested construction needs an oracle the model does not provide."""


class FormatError(HpvmError, ValueError):
    """Malformed input file."""

    def __init__(self, msg, line=None):
        if line is not None:
            msg = f"line {line}: {msg}"
        super().__init__(msg)
        self.line = line
