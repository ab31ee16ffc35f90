"""Central tolerance record and shared exception types."""
from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds used across the package.

    ``algebraic`` bounds identities that hold exactly up to rounding,
    ``geometric`` bounds drift of quantities that are preserved by exact
    integrators, ``certification`` is the fine-grid bound for residuals that
    converge under refinement.
    """

    algebraic: float = 1e-12
    geometric: float = 1e-8
    certification: float = 1e-4
    umbilic_rel: float = 1e-6
    nilpotent: float = 1e-14
    curvature_line: float = 5e-2
    rank_rel: float = 1e-8
    genericity: float = 1e-4
    conditioning: float = 1e-8
    min_order: float = 1.5
    leakage: float = 5e-2

    def with_(self, **kw) -> "Tolerances":
        return replace(self, **kw)


DEFAULT_TOL = Tolerances()


class LieAppError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class InputError(LieAppError, ValueError):
    exit_code = 4


class DegeneratePairError(LieAppError, ValueError):
    """Raised for a null pair with vanishing inner product."""

    exit_code = 3


class ParameterError(InputError):
    pass


class UnsupportedError(InputError):
    pass


class NormalizationError(InputError):
    pass


class GridShapeError(InputError):
    pass


class NotCurvatureLineError(LieAppError):
    exit_code = 3


class CertificationError(LieAppError):
    exit_code = 2


class PathDependenceError(LieAppError):
    exit_code = 3


class GenericityError(LieAppError):
    """A parallel section became orthogonal to a curvature sphere."""

    exit_code = 3

    def __init__(self, message: str, nodes=None):
        super().__init__(message)
        self.nodes = [] if nodes is None else list(nodes)


class NotNormalizedError(LieAppError):
    """A potential is not in the normalized gauge, or not of Omega type."""

    exit_code = 3


class IllConditionedError(LieAppError):
    exit_code = 3
