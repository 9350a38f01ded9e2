"""Exception hierarchy shared by every module."""


class JumpFlowError(Exception):
    """Base class for all errors raised by jumpflow."""


class DivergentMoment(JumpFlowError, ValueError):
    """A moment integral of a Lévy measure is infinite."""


class EmptyTail(JumpFlowError, ValueError):
    """Sampling was requested from a tail region with zero mass."""


class KernelOutOfHorizon(JumpFlowError, ValueError):
    """A step kernel reaches outside the time horizon of a path."""


class DivergentCompensator(JumpFlowError, ValueError):
    """A size set accumulates infinite intensity near the origin."""


class NonFiniteState(JumpFlowError, FloatingPointError):
    """A simulated state overflowed or became NaN."""


class AbortBudgetExceeded(JumpFlowError, RuntimeError):
    """Too many Monte Carlo samples were aborted as non-finite."""


class GridMismatch(JumpFlowError, ValueError):
    """An intermediate time is missing from a grid that must contain it."""


class AdaptednessViolation(JumpFlowError, ValueError):
    """An integrand coefficient depends on noise at or after its own time window."""


class ConfigError(JumpFlowError, ValueError):
    """An experiment configuration failed validation."""
