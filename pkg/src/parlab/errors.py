"""Exception hierarchy shared by all parlab modules."""


class ParlabError(Exception):
    """Base class for every error raised by parlab."""


class InvariantViolation(ParlabError):
    pass


class InvalidWarp(ParlabError):
    pass


class InvalidFraction(ParlabError):
    pass


class QuadratureFailure(ParlabError):
    pass


class MeshingFailure(ParlabError):
    pass


class DisconnectedMesh(ParlabError):
    pass


class RadiusOutOfRange(ParlabError):
    pass


class IoError(ParlabError):
    pass


class ParseError(ParlabError):
    pass


class MeshMismatch(ParlabError):
    pass


class SolverError(ParlabError):
    """Raised when a linear or nonlinear solve cannot produce a valid answer."""


class SingularSystem(SolverError):
    pass


class SolverDivergence(SolverError):
    pass


class MonotonicityViolation(SolverError):
    pass


class InsufficientData(ParlabError):
    pass


class ObtuseMeshUnsupported(ParlabError):
    pass


class NonAbsorbingConfiguration(ParlabError):
    pass


class EmptyBoundary(ParlabError):
    pass


class PreconditionViolated(ParlabError):
    pass


class HypothesisViolation(ParlabError):
    pass


class ConfigError(ParlabError):
    pass
