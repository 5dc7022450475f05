"""Exception types raised across the package."""


class ErgovarError(Exception):
    """Base class for all package errors."""


class ReducibleChain(ErgovarError):
    """The directed graph of positive transition entries is not strongly connected."""


class DimensionMismatch(ErgovarError):
    """A function vector does not match the kernel's state count."""


class SingularSystem(ErgovarError):
    """A linear system restricted to mean-zero functions is numerically singular."""


class AbsorbingState(ErgovarError):
    """A state holds with probability one, so no jump decomposition exists."""

    def __init__(self, state):
        self.state = state
        super().__init__(f"state {state!r} is absorbing (self-transition probability 1)")


class EmptyPath(ErgovarError):
    """An estimator was given a path with no entries."""


class PathTooShort(ErgovarError):
    """The path is too short for the requested batch length."""


class NotExactMode(ErgovarError):
    """The operation needs a finite support with exactly summable quantities."""


class MissingMoments(ErgovarError):
    """Classification needs moment values the model cannot compute itself."""


class ZeroWeightSum(ErgovarError):
    """All importance weights are numerically zero."""


class ZeroNoiseCurrent(ErgovarError):
    """The current noise value is zero, where the acceptance ratio is undefined."""


class UnevaluableNoise(ErgovarError):
    """The noise family has no exact (atom or closed-form) evaluation."""


class UnknownModel(ErgovarError):
    """A registry name does not resolve to a built-in model or experiment."""


class InvalidConfig(ErgovarError):
    """An experiment configuration is malformed; the message names the field."""
