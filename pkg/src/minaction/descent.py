"""Outer relaxation loop minimizing the geometric action over paths.

Writing the action of an arc-length parametrized curve as
``S = integral <theta*(s), phi'(s)> ds`` with ``theta*`` from the pointwise
inner solve, the (mu-preconditioned) descent direction is

    F(phi) = theta*' / mu + H_phi(phi, theta*),

which vanishes exactly on minimizers.  Three time discretizations of the
relaxation flow ``d phi / d tau = F`` are available:

* ``explicit``        forward Euler; conditionally stable, the step must
                      resolve the parabolic term (h ~ ds^2 / max(1/mu^2));
* ``semi-implicit``   the second-order term ``(1/mu^2) H_tt^{-1} phi''``
                      hidden inside ``theta*'/mu`` is stepped implicitly
                      (frozen coefficients), the rest explicitly; stable at
                      O(1) steps;
* ``original-gmam``   the classical reference flow
                      ``lambda^2 phi'' - lambda H_theta_phi phi' + H_tt H_phi``
                      (lambda = 1/mu), which differs from F only by the
                      tangential term ``lambda lambda' phi'``; forward Euler,
                      restricted to additive models.

After every step the curve is re-parametrized to uniform speed and its
endpoints are pinned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.linalg
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import solve_banded

from .errors import (
    ConfigError,
    DomainViolationError,
    InnerSolverError,
    StepOverflowError,
)
from .hamiltonians import HamiltonianModel, fd_jacobian
from .inner import InnerSolution, NewtonConfig, solve_inner
from .paths import PathGrid, derivative_s, reparametrize, second_derivative_s

SCHEMES = ("explicit", "semi-implicit", "original-gmam")

_OVERFLOW_FACTOR = 1e6


@dataclass(frozen=True)
class DescentConfig:
    """Settings for the outer minimization loop."""

    step_size: float = 0.1
    max_iterations: int = 20000
    convergence_tol: float = 1e-8  # on sup|phi_new - phi_old| / step_size
    scheme: str = "semi-implicit"
    reparam_every: int = 1
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    # opt-in trust region for stiff drifts: each iteration's step size is
    # halved until the sup-norm state displacement stays below
    # max_displacement AND the action does not increase, and doubles back
    # toward step_size after a streak of first-try accepts.  Every accepted
    # state is still a genuine step of the configured scheme at some size.
    adaptive_step: bool = False
    max_displacement: float = 0.05

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.step_size <= 0.0:
            raise ConfigError("step_size must be positive")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be positive")
        if self.reparam_every < 1:
            raise ConfigError("reparam_every must be positive")
        if self.max_displacement <= 0.0:
            raise ConfigError("max_displacement must be positive")


@dataclass(frozen=True)
class RunResult:
    """Converged (or stopped) state of an action minimization."""

    path: PathGrid
    inner: InnerSolution
    action: float
    action_density: np.ndarray
    iterations_used: int
    converged: bool
    displacement_history: np.ndarray
    action_history: np.ndarray

    @property
    def physical_time_density(self) -> np.ndarray:
        """dt/ds along the path (diverges toward fixed-point endpoints)."""
        return self.inner.mu


# ---------------------------------------------------------------------------
# action evaluation
# ---------------------------------------------------------------------------


def action_density(model: HamiltonianModel, dphi: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Pointwise integrand <phi', theta*>, scaled by the inner-product weight."""
    return model.inner_weight * np.einsum("ij,ij->i", dphi, theta)


def action_from_inner(
    model: HamiltonianModel, path: PathGrid, inner: InnerSolution
) -> tuple[float, np.ndarray]:
    dphi = derivative_s(path)
    dens = action_density(model, dphi, inner.theta)
    return float(np.trapezoid(dens, dx=path.ds)), dens


def action_additive_closed_form(model: HamiltonianModel, path: PathGrid) -> float:
    """Closed-form geometric action |phi'||b| - <phi', b> for additive noise.

    Independent of the inner solve; used to cross-check the generic
    quadrature.  Requires kind == "additive".
    """
    if model.kind != "additive":
        raise ConfigError("closed-form action requires an additive-noise model")
    dphi = derivative_s(path)
    b = np.asarray(model.drift(path.states), dtype=float)
    dens = np.linalg.norm(dphi, axis=1) * np.linalg.norm(b, axis=1) - np.einsum(
        "ij,ij->i", dphi, b
    )
    return float(model.inner_weight * np.trapezoid(dens, dx=path.ds))


# ---------------------------------------------------------------------------
# descent directions and steps
# ---------------------------------------------------------------------------


def descent_direction(
    model: HamiltonianModel, path: PathGrid, inner: InnerSolution
) -> np.ndarray:
    """The relaxation velocity theta*'/mu + H_phi, zero at minimizers."""
    dtheta = derivative_s(inner.theta, ds=path.ds)
    h_phi = np.asarray(model.grad_phi(path.states, inner.theta), dtype=float)
    return dtheta / inner.mu[:, None] + h_phi


def _diffusion_blocks(model, path, inner):
    """Per-point matrices C_i = mu_i^{-2} H_tt^{-1}, the stiff coefficient."""
    htt = np.asarray(model.hess_theta_theta(path.states, inner.theta), dtype=float)
    inv_mu2 = inner.mu**-2.0
    if model.kind == "additive":
        return inv_mu2, None  # identity H_tt: scalar coefficient
    blocks = np.linalg.inv(htt) * inv_mu2[:, None, None]
    return None, blocks


def step_explicit(model, path, inner, step_size):
    velocity = descent_direction(model, path, inner)
    new_states = path.states + step_size * velocity
    new_states[0] = path.states[0]
    new_states[-1] = path.states[-1]
    return new_states


def solve_arclength_implicit(scalar_c, rhs, ds, step_size):
    """Solve (I - h c_i d^2/ds^2) x = rhs with identity (pinned) end rows.

    ``scalar_c`` holds the per-point parabolic coefficients; the same
    tridiagonal factorization covers every state component at once.
    """
    n_pts = rhs.shape[0]
    r = step_size * scalar_c / ds**2
    ab = np.zeros((3, n_pts))
    ab[1, :] = 1.0
    ab[1, 1:-1] += 2.0 * r[1:-1]
    ab[0, 2:] = -r[1:-1]  # a[i, i+1] for interior rows i
    ab[2, : n_pts - 2] = -r[1:-1]  # a[i, i-1]
    return solve_banded((1, 1), ab, rhs)


def step_semi_implicit(model, path, inner, step_size):
    """Implicit treatment of the parabolic part, frozen per-point coefficients.

    Solves (I - h C d^2/ds^2) phi_new = phi + h (F(phi) - C phi'') with
    C = mu^{-2} H_tt^{-1}; endpoint rows are identity (pinned).
    """
    states = path.states
    ds = path.ds
    n_pts, dim = states.shape
    velocity = descent_direction(model, path, inner)
    curv = second_derivative_s(states, ds)
    scalar_c, block_c = _diffusion_blocks(model, path, inner)

    if scalar_c is not None:
        rhs = states + step_size * (velocity - scalar_c[:, None] * curv)
        rhs[0] = states[0]
        rhs[-1] = states[-1]
        new_states = solve_arclength_implicit(scalar_c, rhs, path.ds, step_size)
    else:
        c_curv = np.einsum("ijk,ik->ij", block_c, curv)
        rhs = states + step_size * (velocity - c_curv)
        rhs[0] = states[0]
        rhs[-1] = states[-1]
        r = step_size / ds**2
        eye = np.eye(dim)
        n_int = n_pts - 2
        mid = np.empty((n_int, 3, dim, dim))
        mid[:, 0] = -r * block_c[1:-1]
        mid[:, 1] = eye + 2.0 * r * block_c[1:-1]
        mid[:, 2] = -r * block_c[1:-1]
        data = np.concatenate([eye[None], mid.reshape(-1, dim, dim), eye[None]])
        interior_cols = (np.arange(1, n_pts - 1)[:, None] + np.array([-1, 0, 1])).ravel()
        indices = np.concatenate([[0], interior_cols, [n_pts - 1]])
        counts = np.concatenate([[1], np.full(n_int, 3), [1]])
        indptr = np.concatenate([[0], np.cumsum(counts)])
        mat = scipy.sparse.bsr_matrix(
            (data, indices, indptr), shape=(n_pts * dim, n_pts * dim)
        ).tocsr()
        new_states = scipy.sparse.linalg.spsolve(mat, rhs.ravel()).reshape(n_pts, dim)

    new_states[0] = states[0]
    new_states[-1] = states[-1]
    return new_states


def step_original_gmam(model, path, inner, step_size):
    """Forward Euler on the classical flow (additive models only).

    lambda^2 phi'' - lambda (d H_theta/d phi) phi' + H_tt H_phi with
    lambda = 1/mu; equal to the preconditioned gradient up to the tangential
    term lambda lambda' phi'.
    """
    if model.hess_theta_phi is None or model.kind != "additive":
        raise ConfigError(
            "the original relaxation scheme needs an additive model with a "
            "drift Jacobian"
        )
    states = path.states
    ds = path.ds
    lam = 1.0 / inner.mu
    dphi = derivative_s(states, ds=ds)
    curv = second_derivative_s(states, ds)
    jac = np.asarray(model.hess_theta_phi(states, inner.theta), dtype=float)
    h_phi = np.asarray(model.grad_phi(states, inner.theta), dtype=float)
    velocity = (
        lam[:, None] ** 2 * curv
        - lam[:, None] * np.einsum("ijk,ik->ij", jac, dphi)
        + h_phi
    )
    new_states = states + step_size * velocity
    new_states[0] = states[0]
    new_states[-1] = states[-1]
    return new_states


_STEPPERS = {
    "explicit": step_explicit,
    "semi-implicit": step_semi_implicit,
    "original-gmam": step_original_gmam,
}


# ---------------------------------------------------------------------------
# outer loop
# ---------------------------------------------------------------------------


def minimize_action(
    model: HamiltonianModel,
    initial_path: PathGrid,
    config: DescentConfig | None = None,
    stepper=None,
) -> RunResult:
    """Relax a path to a local minimizer of the geometric action.

    Each iteration re-parametrizes the curve to uniform speed, solves the
    pointwise momentum problem (warm-started from the previous iteration),
    takes one step of the configured scheme, and re-pins the endpoints.
    Convergence is declared when the sup-norm displacement per unit step
    drops below ``convergence_tol``.

    ``stepper`` overrides the scheme named in the config with a custom
    update ``(model, path, inner, step_size) -> states`` (used by the
    exponential-integrator update for stiff spatially extended models).
    """
    cfg = config or DescentConfig()
    if initial_path.endpoint_mode != "both-pinned":
        raise ConfigError("action minimization requires a both-pinned path")
    if initial_path.dim != model.dim:
        raise ConfigError(
            f"path dimension {initial_path.dim} does not match model dimension {model.dim}"
        )
    model.check_state(initial_path.states)

    path = reparametrize(initial_path)
    scale0 = max(1.0, float(np.abs(path.states).max()))
    if stepper is None:
        stepper = _STEPPERS[cfg.scheme]

    warm = None
    displacement_history = []
    action_history = []
    converged = False
    iterations_used = 0
    step_now = cfg.step_size
    clean_streak = 0
    carried = None  # inner solution for `path` reused from an accepted trial

    for iteration in range(cfg.max_iterations):
        dphi = derivative_s(path)
        if carried is None:
            inner = solve_inner(model, path.states, dphi, cfg.newton, warm)
        else:
            inner, carried = carried, None
        warm = inner.theta
        dens = action_density(model, dphi, inner.theta)
        action_now = float(np.trapezoid(dens, dx=path.ds))
        action_history.append(action_now)

        do_reparam = (iteration + 1) % cfg.reparam_every == 0

        if not cfg.adaptive_step:
            new_states = stepper(model, path, inner, step_now)
            if not np.all(np.isfinite(new_states)) or np.abs(new_states).max() > (
                _OVERFLOW_FACTOR * scale0
            ):
                raise StepOverflowError(iteration, step_now)
            new_path = path.with_states(new_states)
            if do_reparam:
                new_path = reparametrize(new_path)
        else:
            slack = 1e-12 * max(1.0, abs(action_now))
            accepted = False
            first_try = True
            for _ in range(60):
                new_states = stepper(model, path, inner, step_now)
                within_region = np.all(np.isfinite(new_states)) and (
                    np.abs(new_states - path.states).max() <= cfg.max_displacement
                )
                if within_region:
                    new_path = path.with_states(new_states)
                    if do_reparam:
                        new_path = reparametrize(new_path)
                    move = float(np.abs(new_path.states - path.states).max())
                    if move <= cfg.convergence_tol * step_now:
                        # flow velocity below tolerance: converged regardless
                        # of the (machine-noise) action comparison
                        accepted = True
                        break
                    try:
                        trial_inner = solve_inner(
                            model,
                            new_path.states,
                            derivative_s(new_path),
                            cfg.newton,
                            warm,
                        )
                    except (DomainViolationError, InnerSolverError):
                        trial_inner = None
                    if trial_inner is not None:
                        trial_action = float(
                            np.trapezoid(
                                action_density(
                                    model, derivative_s(new_path), trial_inner.theta
                                ),
                                dx=new_path.ds,
                            )
                        )
                        if trial_action <= action_now + slack:
                            carried = trial_inner
                            accepted = True
                            break
                step_now *= 0.5
                first_try = False
            if not accepted:
                raise StepOverflowError(iteration, step_now)
            if first_try:
                clean_streak += 1
                if clean_streak >= 10 and step_now < cfg.step_size:
                    step_now = min(2.0 * step_now, cfg.step_size)
                    clean_streak = 0
            else:
                clean_streak = 0

        # convergence is judged on the step + reparametrization composite:
        # the raw step keeps a tangential component that the re-gridding
        # exactly undoes, so only the composite displacement vanishes at the
        # discrete minimizer
        displacement = float(np.abs(new_path.states - path.states).max()) / step_now
        displacement_history.append(displacement)
        iterations_used = iteration + 1
        path = new_path

        if displacement <= cfg.convergence_tol:
            converged = True
            break

    # consistent final snapshot on the uniform grid
    path = reparametrize(path)
    dphi = derivative_s(path)
    inner = solve_inner(model, path.states, dphi, cfg.newton, warm)
    action, dens = action_from_inner(model, path, inner)

    return RunResult(
        path=path,
        inner=inner,
        action=action,
        action_density=dens,
        iterations_used=iterations_used,
        converged=converged,
        displacement_history=np.asarray(displacement_history),
        action_history=np.asarray(action_history),
    )


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def physical_time_profile(result: RunResult) -> tuple[np.ndarray, float, tuple[bool, bool]]:
    """Cumulative physical time t(s) along the path, its total, and whether
    the true time diverges at either endpoint (fixed-point endpoints)."""
    t = cumulative_trapezoid(result.inner.mu, dx=result.path.ds, initial=0.0)
    return t, float(t[-1]), result.inner.endpoint_divergent


def endpoint_relaxation_rates(model: HamiltonianModel, path: PathGrid) -> tuple[float, float]:
    """Leading (least negative) real part of the drift linearization at each
    endpoint; sets the exponential timescale of the divergent time tails."""
    rates = []
    for end in (0, -1):
        state = path.states[end][None, :]
        if model.drift_jacobian is not None:
            jac = np.asarray(model.drift_jacobian(state), dtype=float)[0]
        else:
            jac = fd_jacobian(model.drift, state)[0]
        rates.append(float(np.linalg.eigvals(jac).real.max()))
    return rates[0], rates[1]


def detect_saddle_index(model: HamiltonianModel, path: PathGrid) -> int:
    """Index of the interior drift-magnitude dip marking the saddle crossing.

    On a transition path between fixed points |b| vanishes at both endpoints,
    so the raw interior argmin usually lands next to an endpoint.  The
    saddle crossing is instead the deepest *local* minimum of |b| (strictly
    below both neighbors, endpoint values included); the raw argmin is kept
    as a fallback for paths without one (e.g. paths that stop at the saddle).
    """
    b = np.asarray(model.drift(path.states), dtype=float)
    b_norm = np.linalg.norm(b, axis=1)
    interior = np.arange(1, len(b_norm) - 1)
    is_dip = (b_norm[interior] <= b_norm[interior - 1]) & (
        b_norm[interior] <= b_norm[interior + 1]
    )
    dips = interior[is_dip]
    if dips.size:
        return int(dips[np.argmin(b_norm[dips])])
    return int(np.argmin(b_norm[1:-1])) + 1


__all__ = [
    "DescentConfig",
    "RunResult",
    "SCHEMES",
    "action_additive_closed_form",
    "action_density",
    "action_from_inner",
    "descent_direction",
    "detect_saddle_index",
    "endpoint_relaxation_rates",
    "minimize_action",
    "physical_time_profile",
    "solve_arclength_implicit",
    "step_explicit",
    "step_original_gmam",
    "step_semi_implicit",
]
