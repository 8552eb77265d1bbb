"""Heteroclinic orbits by string relaxation.

A string is a curve everywhere parallel to the drift, connecting fixed
points through saddles: the zero-noise reference path.  It is computed by
alternating a forward-Euler drift step at the interior points with an
arc-length re-parametrization; the composite map's fixed points are exactly
the drift-parallel curves.  For stiff spatially extended drifts the Euler
update can be swapped for a first-order exponential integrator built from a
precomputed splitting.

Strings serve two purposes here: seeding action minimizations, and acting
as the deterministic comparison path (the action evaluated on a string's
downhill segments vanishes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, StepOverflowError
from .paths import PathGrid, derivative_s, reparametrize
from .spde import SplitOperator

_OVERFLOW_FACTOR = 1e6


@dataclass(frozen=True)
class StringResult:
    """Converged (or stopped) state of a string relaxation."""

    path: PathGrid
    converged: bool
    iterations_used: int
    displacement_history: np.ndarray


def _euler_update(states, drift, step_size):
    return states + step_size * np.asarray(drift(states), dtype=float)


def _exponential_update_factors(split: SplitOperator, step_size: float):
    """First-order exponential-integrator factors for the flow L phi + R.

    Per eigenvalue l of the linear part: e^{l h} and (e^{l h} - 1)/l, with
    the analytic limit h for (near-)null modes.
    """
    eigvals = split.eigenvalues
    grow = np.exp(eigvals * step_size)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(
            np.abs(eigvals) < 1e-12, step_size, (grow - 1.0) / eigvals
        )
    return grow, gain


def string_relax(
    initial_path: PathGrid,
    drift,
    step_size: float = 0.1,
    max_iterations: int = 20000,
    tolerance: float = 1e-8,
    split: SplitOperator | None = None,
) -> StringResult:
    """Relax a path onto the heteroclinic orbit between its endpoints.

    Endpoints are pinned bit-exactly; interior points follow the drift and
    the curve is re-gridded to uniform speed each iteration.  Convergence is
    judged on the composite displacement per unit step (the drift's
    tangential component is undone by the re-gridding and must not count).
    """
    if step_size <= 0.0:
        raise ConfigError("step_size must be positive")
    if max_iterations < 1:
        raise ConfigError("max_iterations must be positive")
    if initial_path.endpoint_mode != "both-pinned":
        raise ConfigError("string relaxation requires a both-pinned path")

    path = reparametrize(initial_path)
    scale0 = max(1.0, float(np.abs(path.states).max()))

    if split is not None:
        grow, gain = _exponential_update_factors(split, step_size)
        basis = split.eigenvectors

        def update(states):
            modal = states @ basis
            forcing = split.remainder(states) @ basis
            return (modal * grow + forcing * gain) @ basis.T

    else:

        def update(states):
            return _euler_update(states, drift, step_size)

    displacement_history = []
    converged = False
    iterations_used = 0

    for iteration in range(max_iterations):
        new_states = update(path.states)
        new_states[0] = path.states[0]
        new_states[-1] = path.states[-1]
        if not np.all(np.isfinite(new_states)) or np.abs(new_states).max() > (
            _OVERFLOW_FACTOR * scale0
        ):
            raise StepOverflowError(iteration, step_size)
        new_path = reparametrize(path.with_states(new_states))

        displacement = float(np.abs(new_path.states - path.states).max()) / step_size
        displacement_history.append(displacement)
        iterations_used = iteration + 1
        path = new_path
        if displacement <= tolerance:
            converged = True
            break

    return StringResult(
        path=path,
        converged=converged,
        iterations_used=iterations_used,
        displacement_history=np.asarray(displacement_history),
    )


def parallelism_residual(path: PathGrid, drift) -> np.ndarray:
    """Pointwise norm of the drift component transverse to the curve.

    Zero exactly on drift-parallel curves; the convergence quality measure
    for strings.  Meaningful only where the drift itself does not vanish.
    """
    b = np.asarray(drift(path.states), dtype=float)
    tangent = derivative_s(path)
    tangent = tangent / np.linalg.norm(tangent, axis=1, keepdims=True)
    along = np.einsum("ij,ij->i", b, tangent)
    return np.linalg.norm(b - along[:, None] * tangent, axis=1)


__all__ = ["StringResult", "parallelism_residual", "string_relax"]
