"""Exception types shared across the package."""


class DecompositionError(RuntimeError):
    """An SVD backend failed to converge on finite input."""


class InfeasibleRankError(ValueError):
    """The requested inner dimension cannot represent the target's rank."""


class DataFormatError(ValueError):
    """A triplet input file is malformed or inconsistent."""


class DivergenceError(RuntimeError):
    """The solver produced a non-finite objective.

    The partial trace, when available, is attached as ``trace``.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class InternalConsistencyError(RuntimeError):
    """A cycle that is guaranteed to descend still increased the objective.

    This signals a gradient or Lipschitz-constant bug, not a data problem.
    """
