"""Replace the post-saddle segment of a minimizer with the exact flowline.

Past the transition state the optimal continuation is the deterministic
relaxation toward the target attractor: its momentum vanishes, so it carries
no action.  A relaxed path approximates that segment with small but nonzero
residual density, limited by the path resolution near the transit corner.
This module rebuilds the segment exactly: it sharpens the transit state with
a Newton solve on the drift, shoots the unstable-manifold trajectory that
lands on the target state, and splices the result back into the path.  The
replacement is kept only when it does not increase the discrete action, so
the routine can be applied unconditionally as a final polish.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .descent import action_density, detect_saddle_index
from .errors import (
    CriticalPointOnPathError,
    DomainViolationError,
    InnerSolverError,
)
from .hamiltonians import HamiltonianModel
from .inner import NewtonConfig, solve_inner
from .paths import PathGrid, derivative_s

__all__ = ["CompletionResult", "complete_downhill"]


@dataclass(frozen=True)
class CompletionResult:
    """Outcome of a downhill-completion attempt.

    ``accepted`` is True when the rebuilt path replaced the original; the
    original path is always available as ``path`` when it did not.  ``reason``
    names the branch taken (``"saddle-shoot"``, ``"outflow-splice"``) or why
    the original was kept.
    """

    path: PathGrid
    accepted: bool
    reason: str
    action_before: float
    action_after: float
    saddle_state: np.ndarray | None
    saddle_index: int


def _drift_one(model: HamiltonianModel, x: np.ndarray) -> np.ndarray:
    return np.asarray(model.drift(x[None, :]), dtype=float)[0]


def _fd_jacobian(model: HamiltonianModel, x: np.ndarray) -> np.ndarray:
    dim = x.size
    eps = 1e-6 * (1.0 + float(np.abs(x).max()))
    probes = np.vstack([x + eps * np.eye(dim), x - eps * np.eye(dim)])
    vals = np.asarray(model.drift(probes), dtype=float)
    return (vals[:dim] - vals[dim:]).T / (2.0 * eps)


def _refine_saddle(model, x0, jacobian, max_iter=60):
    """Newton-polish a drift zero starting from a near-transit state."""
    x = np.asarray(x0, dtype=float).copy()
    scale = 1.0 + float(np.abs(x).max())
    for _ in range(max_iter):
        f = _drift_one(model, x)
        if np.linalg.norm(f) < 1e-12 * scale:
            return x
        jac = jacobian(x) if jacobian is not None else _fd_jacobian(model, x)
        try:
            step = np.linalg.solve(jac, f)
        except np.linalg.LinAlgError:
            return None
        x = x - step
        if not np.all(np.isfinite(x)) or np.abs(x).max() > 1e6 * scale:
            return None
    return x if np.linalg.norm(_drift_one(model, x)) < 1e-9 * scale else None


def _integrate_flow(model, x0, target, *, rtol, max_time, max_step=None):
    """Run the deterministic flow until it parks near ``target``.

    Returns the sampled trajectory truncated at its closest approach and the
    closest distance reached.  Integration stops early both on landing and on
    escape far outside the region spanned by the start and target states, so
    a wrong shooting direction fails fast instead of overflowing.
    """
    stop_r = 1e-8 * (1.0 + float(np.linalg.norm(target)))
    escape_r = 10.0 * (1.0 + float(np.abs(x0).max()) + float(np.abs(target).max()))

    def landed(t, u):
        return float(np.linalg.norm(u - target)) - stop_r

    landed.terminal = True

    def escaped(t, u):
        return escape_r - float(np.abs(u).max())

    escaped.terminal = True

    def rhs(t, u):
        # Keep doomed trajectories finite until the escape event fires.
        with np.errstate(over="ignore", invalid="ignore"):
            f = _drift_one(model, u)
        return np.clip(np.nan_to_num(f, nan=0.0), -1e9, 1e9)

    kwargs = {}
    if max_step is not None:
        kwargs["max_step"] = max_step
    sol = solve_ivp(
        rhs,
        (0.0, max_time),
        x0,
        rtol=rtol,
        atol=rtol * 1e-2,
        method="LSODA",
        events=(landed, escaped),
        **kwargs,
    )
    traj = sol.y.T
    finite = np.all(np.isfinite(traj), axis=1)
    if not finite.all():
        traj = traj[: int(np.argmin(finite))]
    if len(traj) == 0:
        return traj, np.inf
    dists = np.linalg.norm(traj - target, axis=1)
    k_best = int(np.argmin(dists))
    return traj[: k_best + 1], float(dists[k_best])


def _resample_block(
    pts: np.ndarray, n: int, grading: str = "uniform"
) -> tuple[np.ndarray, float]:
    """Resample a polyline to ``n`` points by chord length.

    ``grading="edge"`` clusters points toward both ends of the block with a
    cosine map.  The flow direction rotates fastest right after a transit
    state and in the funnel where trajectories swing onto the attractor's
    slow eigendirection, so those stretches need the extra resolution; the
    action integral itself is parametrization-invariant.
    """
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = float(s[-1])
    if total <= 0.0:
        return np.repeat(pts[:1], n, axis=0), 0.0
    s = s / total
    t = np.linspace(0.0, 1.0, n)
    s_new = 0.5 * (1.0 - np.cos(np.pi * t)) if grading == "edge" else t
    out = np.empty((n, pts.shape[1]))
    for j in range(pts.shape[1]):
        out[:, j] = np.interp(s_new, s, pts[:, j])
    return out, total


def _path_action(model, states):
    """Discrete action of a candidate state sequence, or None on failure."""
    if not np.all(np.isfinite(states)):
        return None, None
    path = PathGrid(states)
    dphi = derivative_s(path)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            inner = solve_inner(model, path.states, dphi, NewtonConfig(), None)
            dens = action_density(model, dphi, inner.theta)
    except (CriticalPointOnPathError, DomainViolationError, InnerSolverError):
        return None, None
    if not np.all(np.isfinite(dens)):
        return None, None
    return float(np.trapezoid(dens, dx=path.ds)), path


def _assemble(model, uphill, saddle, tail, start, end, n_points):
    """Two-block arc-length resample through the exact transit state."""
    up_pts = np.vstack([uphill, saddle])
    dn_pts = np.vstack([saddle[None, :], tail, end[None, :]])
    _, len_up = _resample_block(up_pts, 3)
    _, len_dn = _resample_block(dn_pts, 3)
    if len_up <= 0.0 or len_dn <= 0.0:
        return None, None
    n1 = int(round(n_points * len_up / (len_up + len_dn)))
    n1 = min(max(n1, 3), n_points - 2)
    blk_up, _ = _resample_block(up_pts, n1)
    blk_dn, _ = _resample_block(dn_pts, n_points - n1 + 1, grading="edge")
    states = np.vstack([blk_up, blk_dn[1:]])
    states[0] = start
    states[-1] = end
    return _path_action(model, states)


def _unstable_basis(jac):
    w, vec = np.linalg.eig(jac)
    tol = 1e-8 * max(1.0, float(np.abs(w.real).max()))
    unstable = w.real > tol
    if not unstable.any():
        return None
    basis = np.real(vec[:, unstable])
    q, _ = np.linalg.qr(basis)
    return q


def _shoot(model, saddle, direction, end, *, kick, rtol, max_time, max_step):
    x0 = saddle + kick * direction
    return _integrate_flow(
        model, x0, end, rtol=rtol, max_time=max_time, max_step=max_step
    )


def complete_downhill(
    model: HamiltonianModel,
    path: PathGrid,
    *,
    jacobian=None,
    land_tol: float = 1e-5,
    kick: float = 1e-6,
    max_time: float = 1000.0,
    n_points: int | None = None,
) -> CompletionResult:
    """Rebuild the segment of ``path`` past its transit state exactly.

    The transit state is located from the interior drift-norm dip, polished
    by Newton, and classified by its unstable directions.  A trajectory of
    the deterministic flow is then shot from the unstable subspace so that it
    lands on the final path state: for a single unstable direction only the
    sign must be chosen; for a two-dimensional unstable subspace the shooting
    angle is found by a coarse scan plus bounded scalar minimization of the
    landing miss.  If any stage fails, the flow started from the path state
    just past the dip is used instead.  The rebuilt path replaces the
    original only when its discrete action is no larger.

    ``n_points`` sets the node count of the rebuilt path; by default the
    input count is kept.  Flowlines that spiral into a focus need more
    downhill nodes than the relaxation grid carries, since a chord across a
    winding picks up artificial action.
    """
    states = np.asarray(path.states, dtype=float)
    n_in, _ = states.shape
    n_out = int(n_points) if n_points is not None else n_in
    start, end = states[0], states[-1]
    action_before, _ = _path_action(model, states)
    if action_before is None:
        return CompletionResult(
            path, False, "inner solve failed on input", np.nan, np.nan, None, -1
        )
    k_dip = detect_saddle_index(model, path)
    length = float(np.sum(np.linalg.norm(np.diff(states, axis=0), axis=1)))
    land_abs = land_tol * (1.0 + float(np.linalg.norm(end)))

    candidates: list[tuple[float, PathGrid, str, np.ndarray | None]] = []

    saddle = _refine_saddle(model, states[k_dip], jacobian)
    separated = (
        saddle is not None
        and np.linalg.norm(saddle - start) > 1e-3 * length
        and np.linalg.norm(saddle - end) > 1e-3 * length
        and np.linalg.norm(saddle - states[k_dip]) < 0.5 * length
    )
    if separated:
        jac = jacobian(saddle) if jacobian is not None else _fd_jacobian(model, saddle)
        basis = _unstable_basis(jac)
        kick_abs = kick * (1.0 + float(np.abs(saddle).max()))
        tail = None
        if basis is not None and basis.shape[1] == 1:
            for sign in (1.0, -1.0):
                traj, miss = _shoot(
                    model, saddle, sign * basis[:, 0], end,
                    kick=kick_abs, rtol=1e-11, max_time=max_time,
                    max_step=max_time / 2000.0,
                )
                if miss <= land_abs:
                    tail = traj
                    break
        elif basis is not None and basis.shape[1] == 2:
            proj = basis @ (basis.T @ (end - saddle))
            if np.linalg.norm(proj) > 1e-12:
                q1 = proj / np.linalg.norm(proj)
            else:
                q1 = basis[:, 0]
            q2 = basis[:, 0] - (basis[:, 0] @ q1) * q1
            if np.linalg.norm(q2) < 1e-8:
                q2 = basis[:, 1] - (basis[:, 1] @ q1) * q1
            q2 = q2 / np.linalg.norm(q2)

            def miss_at(psi, rtol=1e-8, full=False):
                direction = np.cos(psi) * q1 + np.sin(psi) * q2
                traj, miss = _shoot(
                    model, saddle, direction, end,
                    kick=kick_abs, rtol=rtol, max_time=max_time,
                    max_step=(max_time / 2000.0) if full else None,
                )
                return (traj, miss) if full else miss

            grid = np.linspace(-np.pi, np.pi, 17)[:-1]
            scan = [miss_at(p) for p in grid]
            j = int(np.argmin(scan))
            lo, hi = grid[j] - (grid[1] - grid[0]), grid[j] + (grid[1] - grid[0])
            opt = minimize_scalar(
                miss_at, bounds=(lo, hi), method="bounded",
                options={"xatol": 1e-10, "maxiter": 60},
            )
            traj, miss = miss_at(float(opt.x), rtol=1e-11, full=True)
            if miss <= land_abs:
                tail = traj
        if tail is not None:
            act, cand = _assemble(
                model, states[:k_dip], saddle, tail, start, end, n_out
            )
            if act is not None:
                candidates.append((act, cand, "saddle-shoot", saddle))

    if k_dip + 1 < n_in - 1:
        traj, miss = _integrate_flow(
            model, states[k_dip + 1], end, rtol=1e-11,
            max_time=max_time, max_step=max_time / 2000.0,
        )
        if miss <= land_abs:
            spliced = np.vstack([states[: k_dip + 1], traj, end[None, :]])
            resampled, _ = _resample_block(spliced, n_out)
            resampled[0], resampled[-1] = start, end
            act, cand = _path_action(model, resampled)
            if act is not None:
                candidates.append((act, cand, "outflow-splice", None))

    for act, cand, reason, sdl in sorted(candidates, key=lambda c: c[0]):
        if act <= action_before * (1.0 + 1e-12) + 1e-15:
            return CompletionResult(
                cand, True, reason, action_before, act, sdl,
                detect_saddle_index(model, cand),
            )
    return CompletionResult(
        path, False, "no candidate improved the action",
        action_before, action_before, None, k_dip,
    )
