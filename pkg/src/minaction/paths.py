"""Arc-length parametrized discrete paths.

A path is a polyline of ``n_points`` images in R^dim, understood as samples of
a curve phi(s) on the normalized parameter interval s in [0, 1].  All solvers
in this package assume uniform arc-length spacing, which :func:`reparametrize`
enforces; derivatives with respect to s then use standard second-order finite
differences with Delta s = 1/(n_points - 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegeneratePathError, InvalidPathError

ENDPOINT_MODES = ("both-pinned", "start-pinned")

# Relative non-uniformity of consecutive chord lengths below which a path is
# considered uniformly parametrized.  Kept well under the 1e-10 documented
# guarantee so one extra resampling pass is a no-op.
_UNIFORM_TOL = 1e-12
_MAX_RESAMPLE_PASSES = 1000


@dataclass(frozen=True)
class PathGrid:
    """Immutable container for a discrete path.

    Parameters
    ----------
    states:
        Array of shape ``(n_points, dim)``; row i is the image phi(s_i).
    endpoint_mode:
        ``"both-pinned"`` (default) fixes both ends during relaxation;
        ``"start-pinned"`` leaves the final image free.
    """

    states: np.ndarray
    endpoint_mode: str = "both-pinned"

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim != 2:
            raise InvalidPathError(
                f"states must be a 2-d array (n_points, dim), got shape {states.shape}"
            )
        if states.shape[0] < 3:
            raise InvalidPathError(f"a path needs at least 3 points, got {states.shape[0]}")
        if states.shape[1] < 1:
            raise InvalidPathError("state dimension must be at least 1")
        if not np.all(np.isfinite(states)):
            raise InvalidPathError("states contain non-finite entries")
        if self.endpoint_mode not in ENDPOINT_MODES:
            raise InvalidPathError(
                f"endpoint_mode must be one of {ENDPOINT_MODES}, got {self.endpoint_mode!r}"
            )
        object.__setattr__(self, "states", states)

    @property
    def n_points(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def ds(self) -> float:
        """Parameter spacing of the uniform grid on [0, 1]."""
        return 1.0 / (self.n_points - 1)

    @property
    def s(self) -> np.ndarray:
        """Parameter values s_i = i / (n_points - 1)."""
        return np.linspace(0.0, 1.0, self.n_points)

    def with_states(self, states: np.ndarray) -> "PathGrid":
        return replace(self, states=states)


def chord_lengths(path: PathGrid | np.ndarray) -> np.ndarray:
    """Lengths of the n_points - 1 segments of the polyline."""
    states = path.states if isinstance(path, PathGrid) else np.asarray(path, dtype=float)
    return np.linalg.norm(np.diff(states, axis=0), axis=1)


def arc_length(path: PathGrid) -> float:
    """Total polyline length (sum of chord lengths)."""
    return float(chord_lengths(path).sum())


def cumulative_arc_length(path: PathGrid) -> np.ndarray:
    """Cumulative chord length at each image, starting at 0."""
    out = np.empty(path.n_points)
    out[0] = 0.0
    np.cumsum(chord_lengths(path), out=out[1:])
    return out


def _resample_uniform(states: np.ndarray) -> np.ndarray:
    """One pass of piecewise-linear resampling at equal arc-length knots."""
    seg = np.linalg.norm(np.diff(states, axis=0), axis=1)
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    total = cum[-1]
    if total <= 0.0:
        raise DegeneratePathError("path has zero arc length; cannot reparametrize")
    knots = np.linspace(0.0, total, states.shape[0])
    out = np.empty_like(states)
    for j in range(states.shape[1]):
        out[:, j] = np.interp(knots, cum, states[:, j])
    # endpoints are knots by construction; keep them bit-exact anyway
    out[0] = states[0]
    out[-1] = states[-1]
    return out


def _chord_spread(states: np.ndarray) -> float:
    seg = np.linalg.norm(np.diff(states, axis=0), axis=1)
    mean = seg.mean()
    if mean == 0.0:
        return np.inf
    return float((seg.max() - seg.min()) / mean)


def reparametrize(path: PathGrid) -> PathGrid:
    """Redistribute the images to uniform arc-length spacing.

    Piecewise-linear resampling at equal arc-length knots, applied repeatedly
    until consecutive chord lengths agree to near machine precision (a single
    pass leaves O(Delta s^2) non-uniformity where knots straddle polyline
    vertices; the iteration's fixed points are exactly the equal-chord
    polylines).  Endpoints are preserved bit-exactly.
    """
    states = path.states
    spread = _chord_spread(states)
    if spread <= _UNIFORM_TOL:
        return path
    for _ in range(_MAX_RESAMPLE_PASSES):
        states = _resample_uniform(states)
        new_spread = _chord_spread(states)
        if new_spread <= _UNIFORM_TOL or new_spread >= spread:
            # converged, or hit the rounding floor (no further improvement)
            break
        spread = new_spread
    return path.with_states(states)


def derivative_s(path: PathGrid | np.ndarray, ds: float | None = None) -> np.ndarray:
    """d(phi)/ds by central differences, second-order one-sided at the ends."""
    if isinstance(path, PathGrid):
        states = path.states
        ds = path.ds
    else:
        states = np.asarray(path, dtype=float)
        if ds is None:
            ds = 1.0 / (states.shape[0] - 1)
    return np.gradient(states, ds, axis=0, edge_order=2)


def second_derivative_s(states: np.ndarray, ds: float) -> np.ndarray:
    """d^2(phi)/ds^2 on the interior (3-point stencil); one-sided copies at ends.

    The endpoint rows simply repeat the adjacent interior value; relaxation
    schemes never use them because endpoints are pinned.
    """
    out = np.empty_like(states)
    out[1:-1] = (states[2:] - 2.0 * states[1:-1] + states[:-2]) / ds**2
    out[0] = out[1]
    out[-1] = out[-2]
    return out


def linear_path(a: np.ndarray, b: np.ndarray, n_points: int, **kw) -> PathGrid:
    """Straight-line path from a to b with n_points images."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t = np.linspace(0.0, 1.0, n_points)[:, None]
    return PathGrid((1.0 - t) * a + t * b, **kw)


def broken_line_path(points: list[np.ndarray], n_points: int, **kw) -> PathGrid:
    """Uniform arc-length path through the given way-points (in order)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise InvalidPathError("broken_line_path needs at least two way-points")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if np.any(seg == 0.0):
        raise DegeneratePathError("consecutive way-points coincide")
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    knots = np.linspace(0.0, cum[-1], n_points)
    states = np.empty((n_points, pts.shape[1]))
    for j in range(pts.shape[1]):
        states[:, j] = np.interp(knots, cum, pts[:, j])
    states[0] = pts[0]
    states[-1] = pts[-1]
    return reparametrize(PathGrid(states, **kw))


__all__ = [
    "PathGrid",
    "arc_length",
    "chord_lengths",
    "cumulative_arc_length",
    "reparametrize",
    "derivative_s",
    "second_derivative_s",
    "linear_path",
    "broken_line_path",
]
