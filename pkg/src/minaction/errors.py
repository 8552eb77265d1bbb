"""Exception types shared across the solver stack.

Every failure mode that user code may want to catch gets its own class; all of
them derive from :class:`SolverError` so ``except SolverError`` catches any
numerical failure while letting programming errors (TypeError, ...) surface.
"""

from __future__ import annotations

import numpy as np


class SolverError(Exception):
    """Base class for all solver-specific failures."""


class InvalidPathError(SolverError):
    """Path array is malformed: wrong shape, too few points, or non-finite."""


class DegeneratePathError(SolverError):
    """Path has (numerically) zero total length, e.g. all images identical."""


class CriticalPointOnPathError(SolverError):
    """The drift vanishes at an interior image, so ``mu = |phi'|/|b|`` blows up.

    Paths through an exact fixed point must be split at that point.
    """

    def __init__(self, index: int, point: np.ndarray):
        self.index = int(index)
        self.point = np.asarray(point)
        super().__init__(
            f"drift vanishes at interior path point {self.index} "
            f"(state {self.point.tolist()}); split the path at the fixed point"
        )


class DegenerateDiffusionError(SolverError):
    """Diffusion matrix a(phi) is not symmetric positive definite."""

    def __init__(self, point: np.ndarray, detail: str = ""):
        self.point = np.asarray(point)
        msg = f"diffusion matrix is not SPD at state {self.point.tolist()}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DomainViolationError(SolverError):
    """A Hamiltonian was evaluated outside its admissible (phi, theta) domain."""

    def __init__(self, point: np.ndarray, theta: np.ndarray | None = None):
        self.point = np.asarray(point)
        self.theta = None if theta is None else np.asarray(theta)
        msg = f"state outside admissible domain: {self.point.tolist()}"
        if theta is not None:
            msg = (
                f"(state, momentum) outside admissible domain: "
                f"{self.point.tolist()}, {self.theta.tolist()}"
            )
        super().__init__(msg)


class InnerSolverError(SolverError):
    """Newton solve for (theta*, mu) failed at one grid point."""

    def __init__(self, index: int, residual: float, last_iterate: np.ndarray):
        self.index = int(index)
        self.residual = float(residual)
        self.last_iterate = np.asarray(last_iterate)
        super().__init__(
            f"inner Newton solve failed at grid point {self.index}: "
            f"residual {self.residual:.3e}, "
            f"last iterate {self.last_iterate.tolist()}"
        )


class StepOverflowError(SolverError):
    """A descent step produced non-finite states; retry with a smaller step."""

    def __init__(self, iteration: int, step_size: float):
        self.iteration = int(iteration)
        self.step_size = float(step_size)
        super().__init__(
            f"descent step overflowed at iteration {self.iteration} with "
            f"step size {self.step_size:g}; reduce the step size"
        )


class RegistryError(SolverError):
    """Unknown model name or parameter key."""


class AssemblyError(SolverError):
    """Split-operator assembly failed (e.g. non-symmetric linear part)."""


class ConfigError(SolverError):
    """Run configuration file is malformed or inconsistent."""
