"""Exception hierarchy shared by the simulator modules."""


class PetcorError(Exception):
    """Base class for every error raised by this package."""


class ContractViolation(PetcorError, ValueError):
    """An argument breaks a function's documented precondition."""


class StructuralError(PetcorError):
    """The communication graph lacks a property the algorithm requires."""


class SolvabilityError(PetcorError):
    """A matrix equation has no (unique) positive definite solution."""


class SchedulingFault(PetcorError):
    """A trigger was evaluated off its sampling grid."""


class HistoryFault(PetcorError):
    """An input-history query fell outside the retained window."""


class PredictionOverflow(PetcorError):
    """The prediction integral produced non-finite values."""


class ConfigError(PetcorError):
    """A scenario configuration failed parsing or validation.

    ``path`` names the offending field, e.g. ``agents[2].controller.K``.
    """

    def __init__(self, message, path=None):
        self.message = message
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class SimulationFault(PetcorError):
    """Wraps a fault raised inside the closed-loop step with its context."""

    def __init__(self, message, t=None, agent=None):
        self.t = t
        self.agent = agent
        where = []
        if t is not None:
            where.append(f"t={t:.6f}")
        if agent is not None:
            where.append(f"agent={agent}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
