"""Pointwise solve for the optimal momentum along a path.

At every image the geometric-action maximization yields the conditions

    H(phi, theta*) = 0,        phi' = mu * H_theta(phi, theta*),  mu >= 0,

where ``mu = dt/ds`` is the local change of physical time per unit of path
parameter.  For additive noise the solution is closed form,

    mu = |phi'| / |b|,         theta* = phi'/mu - b,

for state-dependent SPD diffusion ``a`` the same formulas hold in the a-norm
``|u|_a = sqrt(<u, a^{-1} u>)`` with ``theta* = a^{-1}(phi'/mu - b)``, and for
general Hamiltonians (jump processes, averaged slow-fast systems) a damped
Newton iteration solves the system per grid point.  Grid points are
independent: solving a whole path in one vectorized sweep gives bitwise the
same answers as solving each point alone.

Path endpoints at fixed points of the drift (|b| = 0) carry theta* = 0 and a
mu obtained by linear one-sided extrapolation from the two adjacent interior
values; the true mu diverges there (infinite transition time), which is
reported via ``endpoint_divergent``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    CriticalPointOnPathError,
    DegenerateDiffusionError,
    DegeneratePathError,
    DomainViolationError,
    InnerSolverError,
)
from .hamiltonians import HamiltonianModel, spd_check

INIT_STRATEGIES = ("warm", "zero", "additive")
MU_METRICS = ("euclidean", "hess-weighted")

# an endpoint counts as a fixed point when |b| there is negligible against the
# largest drift magnitude seen along the path
_FIXED_POINT_REL = 1e-6
_DIVERGENT_FACTOR = 1e6


@dataclass(frozen=True)
class NewtonConfig:
    """Settings for the per-point Newton solve (general Hamiltonians)."""

    max_iterations: int = 50
    tolerance: float = 1e-10
    damping_factor: float = 0.5
    max_damping_steps: int = 30
    init_strategy: str = "warm"
    mu_metric: str = "euclidean"

    def __post_init__(self):
        if self.init_strategy not in INIT_STRATEGIES:
            raise ValueError(f"init_strategy must be one of {INIT_STRATEGIES}")
        if self.mu_metric not in MU_METRICS:
            raise ValueError(f"mu_metric must be one of {MU_METRICS}")
        if self.max_iterations < 1 or self.max_damping_steps < 1:
            raise ValueError("iteration limits must be positive")
        if not (0.0 < self.damping_factor < 1.0):
            raise ValueError("damping_factor must lie in (0, 1)")


@dataclass(frozen=True)
class InnerSolution:
    """Optimal momentum, time-change and defect measures along a path.

    ``residual_align`` is |phi' - mu H_theta| / |phi'| (zero by convention at
    fixed-point endpoints, where the pointwise problem degenerates and the
    values are fixed by continuity instead).
    """

    theta: np.ndarray
    mu: np.ndarray
    residual_H: np.ndarray
    residual_align: np.ndarray
    endpoint_divergent: tuple[bool, bool] = (False, False)
    newton_iterations: np.ndarray | None = None

    def __post_init__(self):
        if np.any(self.mu < 0.0):
            raise ValueError("mu must be non-negative")


def _norms(v: np.ndarray) -> np.ndarray:
    return np.linalg.norm(v, axis=-1)


def _extrapolate_endpoint(mu: np.ndarray, end: int) -> float:
    """Linear one-sided extrapolation of mu to an endpoint, clamped positive."""
    if end == 0:
        inner1 = mu[1]
        inner2 = mu[2] if mu.shape[0] > 3 else mu[1]
    else:
        inner1 = mu[-2]
        inner2 = mu[-3] if mu.shape[0] > 3 else mu[-2]
    val = 2.0 * inner1 - inner2
    if not np.isfinite(val) or val <= 0.0:
        val = inner1
    return float(val)


def _endpoint_fixup(
    mu: np.ndarray,
    theta: np.ndarray,
    residual_align: np.ndarray,
    fixed_ends: tuple[bool, bool],
    raw_mu_ends: tuple[float, float],
) -> tuple[np.ndarray, np.ndarray, np.ndarray, tuple[bool, bool]]:
    interior = mu[1:-1]
    med = float(np.median(interior)) if interior.size else 1.0
    divergent = [False, False]
    for side, end in ((0, 0), (1, -1)):
        if fixed_ends[side]:
            theta[end] = 0.0
            mu[end] = _extrapolate_endpoint(mu, side)
            residual_align[end] = 0.0
            raw = raw_mu_ends[side]
            divergent[side] = (not np.isfinite(raw)) or raw > _DIVERGENT_FACTOR * med
    return mu, theta, residual_align, (divergent[0], divergent[1])


def _classify_endpoints(b_norm: np.ndarray) -> tuple[bool, bool]:
    scale = b_norm.max()
    if scale == 0.0:
        return (True, True)
    return (
        bool(b_norm[0] <= _FIXED_POINT_REL * scale),
        bool(b_norm[-1] <= _FIXED_POINT_REL * scale),
    )


def _check_interior_critical(b_norm: np.ndarray, phi: np.ndarray | None) -> None:
    zero = np.flatnonzero(b_norm[1:-1] == 0.0)
    if zero.size:
        idx = int(zero[0]) + 1
        point = phi[idx] if phi is not None else np.array([np.nan])
        raise CriticalPointOnPathError(idx, point)


def solve_additive(
    b_values: np.ndarray,
    phi_prime: np.ndarray,
    phi: np.ndarray | None = None,
) -> InnerSolution:
    """Closed-form inner solve for H = <b, theta> + |theta|^2 / 2."""
    b = np.asarray(b_values, dtype=float)
    dphi = np.asarray(phi_prime, dtype=float)
    b_norm = _norms(b)
    speed = _norms(dphi)
    if np.any(speed == 0.0):
        raise DegeneratePathError("phi' vanishes at a grid point; reparametrize first")
    _check_interior_critical(b_norm, phi)
    fixed_ends = _classify_endpoints(b_norm)

    with np.errstate(divide="ignore", invalid="ignore"):
        mu = speed / b_norm
    with np.errstate(invalid="ignore"):
        theta = dphi * np.where(mu > 0.0, 1.0 / mu, 0.0)[:, None] - b
        residual_H = np.einsum("ij,ij->i", b, theta) + 0.5 * np.einsum("ij,ij->i", theta, theta)
        h_theta = b + theta
        residual_align = _norms(dphi - mu[:, None] * h_theta) / speed
    raw_ends = (float(mu[0]), float(mu[-1]))
    mu, theta, residual_align, divergent = _endpoint_fixup(
        mu, theta, residual_align, fixed_ends, raw_ends
    )
    for end in (0, -1):
        if fixed_ends[0 if end == 0 else 1]:
            residual_H[end] = 0.0
    return InnerSolution(
        theta=theta,
        mu=mu,
        residual_H=np.abs(residual_H),
        residual_align=residual_align,
        endpoint_divergent=divergent,
    )


def solve_multiplicative(
    b_values: np.ndarray,
    a_values: np.ndarray,
    phi_prime: np.ndarray,
    phi: np.ndarray | None = None,
) -> InnerSolution:
    """Closed-form inner solve for H = <b, theta> + <theta, a theta> / 2."""
    b = np.asarray(b_values, dtype=float)
    a = np.asarray(a_values, dtype=float)
    dphi = np.asarray(phi_prime, dtype=float)
    spd_check(a, phi if phi is not None else b)

    a_inv_b = np.linalg.solve(a, b[..., None])[..., 0]
    a_inv_dphi = np.linalg.solve(a, dphi[..., None])[..., 0]
    b_norm_a = np.sqrt(np.einsum("ij,ij->i", b, a_inv_b))
    speed_a = np.sqrt(np.einsum("ij,ij->i", dphi, a_inv_dphi))
    if np.any(speed_a == 0.0):
        raise DegeneratePathError("phi' vanishes at a grid point; reparametrize first")
    _check_interior_critical(b_norm_a, phi)
    fixed_ends = _classify_endpoints(b_norm_a)

    with np.errstate(divide="ignore", invalid="ignore"):
        mu = speed_a / b_norm_a
    with np.errstate(invalid="ignore"):
        inv_mu = np.where(mu > 0.0, 1.0 / mu, 0.0)
        theta = a_inv_dphi * inv_mu[:, None] - a_inv_b
        a_theta = dphi * inv_mu[:, None] - b
        residual_H = np.einsum("ij,ij->i", b, theta) + 0.5 * np.einsum("ij,ij->i", theta, a_theta)
        h_theta = b + a_theta
        residual_align = _norms(dphi - mu[:, None] * h_theta) / _norms(dphi)
    raw_ends = (float(mu[0]), float(mu[-1]))
    mu, theta, residual_align, divergent = _endpoint_fixup(
        mu, theta, residual_align, fixed_ends, raw_ends
    )
    for end in (0, -1):
        if fixed_ends[0 if end == 0 else 1]:
            residual_H[end] = 0.0
    return InnerSolution(
        theta=theta,
        mu=mu,
        residual_H=np.abs(residual_H),
        residual_align=residual_align,
        endpoint_divergent=divergent,
    )


# ---------------------------------------------------------------------------
# general Hamiltonians: damped Newton per grid point
# ---------------------------------------------------------------------------


def _convex_subproblem(model, phi_row, dphi_row, mu, theta0, grad_tol, max_iter=200):
    """Solve phi' = mu H_theta(phi, theta) for theta at one grid point.

    For H strictly convex in theta this is the minimization of
    psi(theta) = mu H - <phi', theta>, so Newton steps with backtracking on
    psi converge globally; psi grows steeply toward any theta-domain
    boundary, which keeps iterates admissible.

    Returns ``(theta, grad_norm, escaped)``.  Hamiltonians that grow only
    linearly in theta along some ray (slow-fast averaging produces these)
    make psi unbounded below once mu drops under a positive threshold; the
    minimizing sequence then runs off to infinity.  Such runaways are cut off
    at a generous radius and flagged via ``escaped`` instead of being chased.
    """
    phi_b = phi_row[None, :]
    dphi_b = dphi_row[None, :]
    theta = np.array(theta0[None, :], dtype=float)
    escape_radius = 1e8 * (
        1.0 + float(np.linalg.norm(theta0)) + float(np.linalg.norm(dphi_row))
    )

    def psi(th):
        return mu * float(model.eval_H(phi_b, th)[0]) - float(np.dot(dphi_row, th[0]))

    gnorm = np.inf
    for _ in range(max_iter):
        if float(np.linalg.norm(theta)) > escape_radius:
            return theta[0], gnorm, True
        ht = np.asarray(model.grad_theta(phi_b, theta), dtype=float)
        grad = mu * ht[0] - dphi_row
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= grad_tol:
            break
        htt = np.asarray(model.hess_theta_theta(phi_b, theta), dtype=float)[0]
        try:
            delta = np.linalg.solve(mu * htt, -grad)
        except np.linalg.LinAlgError:
            delta = -grad / max(mu, 1e-12)
        slope = float(np.dot(grad, delta))
        if slope >= 0.0:  # not a descent direction (should not happen for SPD)
            delta = -grad
            slope = -gnorm**2
        # trust radius keeps near-boundary Hessians from launching huge steps
        radius = 100.0 * (1.0 + float(np.linalg.norm(theta)))
        dnorm = float(np.linalg.norm(delta))
        if dnorm > radius:
            delta *= radius / dnorm
            slope *= radius / dnorm
        base = psi(theta)
        # once the predicted decrease drops below the resolution of psi the
        # line search would only chase rounding noise
        if -slope < 4e-16 * (1.0 + abs(base)):
            break
        alpha = 1.0
        moved = False
        for _h in range(60):
            cand = theta + alpha * delta[None, :]
            if bool(_theta_admissible(model, phi_b, cand)[0]):
                if psi(cand) <= base + 1e-4 * alpha * slope:
                    theta = cand
                    moved = True
                    break
            alpha *= 0.5
        if not moved:
            break
    return theta[0], gnorm, False


def _solve_support_point(model, phi_row, dphi_row, mu_init, cfg, index):
    """Bracketed solve of the pointwise problem at one grid point.

    G(mu) = H(phi, theta(mu)) with theta(mu) from the convex subproblem is
    strictly decreasing (dG/dmu = -<H_theta, H_tt^{-1} H_theta>/mu < 0), so a
    sign bracket plus Brent iteration finds the unique mu >= 0 root whenever
    one exists.  If G stays negative as mu -> 0 the Hamiltonian admits no
    admissible uphill momentum at this point and the solve fails honestly.
    """
    speed = float(np.linalg.norm(dphi_row))
    grad_tol = 1e-8 * (1.0 + speed)
    theta_warm = np.zeros_like(phi_row)

    def G(mu):
        nonlocal theta_warm
        theta_trial, gnorm, escaped = _convex_subproblem(
            model, phi_row, dphi_row, mu, theta_warm, grad_tol
        )
        if escaped:
            # unbounded subproblem: this mu is below the existence threshold,
            # so report "H = +inf" (the monotone bracket then raises mu) and
            # drop the runaway iterate
            theta_warm = np.zeros_like(phi_row)
            return np.inf
        theta_warm = theta_trial
        # mild stalls are fine: the result only needs to locate the mu
        # bracket, and a joint-Newton polish runs afterwards
        if gnorm > max(grad_tol, 1e-5 * (1.0 + speed)):
            raise InnerSolverError(index, gnorm, theta_warm)
        return float(model.eval_H(phi_row[None, :], theta_warm[None, :])[0])

    mu0 = mu_init if np.isfinite(mu_init) and mu_init > 0.0 else 1.0
    g0 = G(mu0)
    lo = hi = mu0
    if g0 > 0.0:
        for _ in range(80):
            hi *= 4.0
            if G(hi) < 0.0:
                break
        else:
            raise InnerSolverError(index, g0, theta_warm)
    elif g0 < 0.0:
        for _ in range(80):
            lo /= 4.0
            if G(lo) > 0.0:
                break
        else:
            raise InnerSolverError(index, g0, theta_warm)
    else:
        return theta_warm, mu0

    # log-space bisection; G is strictly decreasing, and evaluating it with a
    # warm-started theta makes it impure, so library root finders that
    # re-check bracket signs are unsuitable here
    mu_star = np.sqrt(lo * hi)
    g_scale = 1.0 + (abs(g0) if np.isfinite(g0) else 0.0)
    for _ in range(120):
        mu_star = np.sqrt(lo * hi)
        g_mid = G(mu_star)
        if abs(g_mid) < 1e-11 * g_scale:
            break
        if g_mid > 0.0:
            lo = mu_star
        else:
            hi = mu_star
        if hi / lo < 1.0 + 1e-10:
            break
    return _polish_root(model, phi_row, dphi_row, theta_warm, float(mu_star))


def _polish_root(model, phi_row, dphi_row, theta, mu, iters=12):
    """Plain joint-Newton steps on (theta, mu) from a near-root iterate."""
    phi_b = phi_row[None, :]
    dim = theta.size
    th = theta.copy()
    m = float(mu)

    def full_res(th_, m_):
        hv = float(model.eval_H(phi_b, th_[None, :])[0])
        ht = np.asarray(model.grad_theta(phi_b, th_[None, :]), dtype=float)[0]
        f1 = dphi_row - m_ * ht
        return hv, ht, f1, float(np.sqrt(f1 @ f1 + hv * hv))

    hv, ht, f1, r = full_res(th, m)
    for _ in range(iters):
        htt = np.asarray(model.hess_theta_theta(phi_b, th[None, :]), dtype=float)[0]
        jac = np.zeros((dim + 1, dim + 1))
        jac[:dim, :dim] = -m * htt
        jac[:dim, dim] = -ht
        jac[dim, :dim] = ht
        rhs = np.concatenate([f1, [hv]])
        try:
            delta = np.linalg.solve(jac, -rhs)
        except np.linalg.LinAlgError:
            break
        alpha = 1.0
        improved = False
        for _h in range(30):
            cth = th + alpha * delta[:dim]
            cm = m + alpha * delta[dim]
            if cm > 0.0 and bool(_theta_admissible(model, phi_b, cth[None, :])[0]):
                chv, cht, cf1, cr = full_res(cth, cm)
                if cr < r:
                    th, m, r = cth, cm, cr
                    hv, ht, f1 = chv, cht, cf1
                    improved = True
                    break
            alpha *= 0.5
        if not improved:
            break
    return th, m


def _theta_admissible(model: HamiltonianModel, phi: np.ndarray, theta: np.ndarray) -> np.ndarray:
    if model.theta_domain is None:
        return np.ones(phi.shape[0], dtype=bool)
    return np.asarray(model.theta_domain(phi, theta), dtype=bool)


def _shrink_into_domain(model, phi, theta, max_halvings=60):
    """Halve theta toward 0 (always admissible) until inside the domain."""
    theta = theta.copy()
    for _ in range(max_halvings):
        bad = ~_theta_admissible(model, phi, theta)
        if not bad.any():
            return theta
        theta[bad] *= 0.5
    raise DomainViolationError(phi[np.flatnonzero(bad)[0]], theta[np.flatnonzero(bad)[0]])


def _residual(model, phi, dphi, theta, mu):
    h_val = np.asarray(model.eval_H(phi, theta), dtype=float)
    h_theta = np.asarray(model.grad_theta(phi, theta), dtype=float)
    f_align = dphi - mu[:, None] * h_theta
    norm = np.sqrt(np.einsum("ij,ij->i", f_align, f_align) + h_val**2)
    return h_val, h_theta, f_align, norm


def solve_general(
    model: HamiltonianModel,
    phi: np.ndarray,
    phi_prime: np.ndarray,
    config: NewtonConfig | None = None,
    warm_theta: np.ndarray | None = None,
) -> InnerSolution:
    """Damped Newton for (theta*, mu) at every grid point of a path.

    The unknown per point is z = (theta, nu) with mu = exp(nu); the residual
    is F = (phi' - mu H_theta, H).  Parametrizing mu through its logarithm
    makes the mu >= 0 branch of the root structural: for Hamiltonians convex
    in theta the system has a second, spurious solution with negative mu
    (e.g. the zero-momentum root at points where the path runs against the
    drift), and exp(nu) cannot reach it.  Step halving (factor
    `damping_factor`, at most `max_damping_steps` times) enforces both
    residual decrease and the theta-domain constraint, so H is never
    evaluated at inadmissible momenta.
    """
    cfg = config or NewtonConfig()
    phi = np.asarray(phi, dtype=float)
    dphi = np.asarray(phi_prime, dtype=float)
    n_pts, dim = phi.shape

    b = np.asarray(model.drift(phi), dtype=float)
    b_norm = _norms(b)
    speed = _norms(dphi)
    if np.any(speed == 0.0):
        raise DegeneratePathError("phi' vanishes at a grid point; reparametrize first")
    _check_interior_critical(b_norm, phi)
    fixed_ends = _classify_endpoints(b_norm)

    # --- initial iterate ------------------------------------------------
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0_raw = speed / b_norm
    mu = np.where(np.isfinite(mu0_raw) & (mu0_raw > 0.0), mu0_raw, 1.0)
    strategy = cfg.init_strategy
    if strategy == "warm" and warm_theta is None:
        strategy = "additive"
    if strategy == "warm":
        theta = np.array(warm_theta, dtype=float, copy=True)
        theta = _shrink_into_domain(model, phi, theta)
        h_theta = np.asarray(model.grad_theta(phi, theta), dtype=float)
        num = np.einsum("ij,ij->i", dphi, h_theta)
        den = np.einsum("ij,ij->i", h_theta, h_theta)
        with np.errstate(divide="ignore", invalid="ignore"):
            mu_fit = num / den
        mu = np.where(np.isfinite(mu_fit) & (mu_fit > 0.0), mu_fit, mu)
    elif strategy == "additive":
        inv_mu = np.where(mu > 0.0, 1.0 / mu, 0.0)
        theta = _shrink_into_domain(model, phi, dphi * inv_mu[:, None] - b)
    else:  # zero
        theta = np.zeros_like(dphi)

    scale = 1.0 + speed + b_norm
    tol = cfg.tolerance * scale

    h_val, h_theta, f_align, res = _residual(model, phi, dphi, theta, mu)
    iterations = np.zeros(n_pts, dtype=int)
    active = res > tol
    failed = np.zeros(n_pts, dtype=bool)
    stall_count = np.zeros(n_pts, dtype=int)
    # endpoints at fixed points are patched afterwards; skip their Newton solve
    for side, end in ((0, 0), (1, n_pts - 1)):
        if fixed_ends[side]:
            active[end] = False

    hess = model.hess_theta_theta
    if hess is None:
        raise InnerSolverError(0, np.inf, theta[0])

    nu = np.log(mu)
    for _ in range(cfg.max_iterations):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        ph, dp = phi[idx], dphi[idx]
        th, m = theta[idx], np.exp(nu[idx])
        htt = np.asarray(hess(ph, th), dtype=float)
        ht = np.asarray(model.grad_theta(ph, th), dtype=float)
        hv = np.asarray(model.eval_H(ph, th), dtype=float)

        jac = np.empty((idx.size, dim + 1, dim + 1))
        jac[:, :dim, :dim] = -m[:, None, None] * htt
        jac[:, :dim, dim] = -m[:, None] * ht  # d/dnu of -exp(nu) H_theta
        jac[:, dim, :dim] = ht
        jac[:, dim, dim] = 0.0
        rhs = np.empty((idx.size, dim + 1))
        rhs[:, :dim] = dp - m[:, None] * ht
        rhs[:, dim] = hv
        try:
            delta = np.linalg.solve(jac, -rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            # regularize the singular points only
            jac = jac + 1e-12 * np.eye(dim + 1)
            delta = np.linalg.solve(jac, -rhs[..., None])[..., 0]

        base_res = res[idx]
        alpha = np.ones(idx.size)
        accepted = np.zeros(idx.size, dtype=bool)
        trial_theta = th.copy()
        trial_nu = nu[idx].copy()
        for _halving in range(cfg.max_damping_steps + 1):
            todo = ~accepted
            if not todo.any():
                break
            cand_theta = th[todo] + alpha[todo, None] * delta[todo, :dim]
            cand_nu = np.clip(nu[idx][todo] + alpha[todo] * delta[todo, dim], -50.0, 50.0)
            ok = _theta_admissible(model, ph[todo], cand_theta)
            cand_res = np.full(todo.sum(), np.inf)
            if ok.any():
                sub = np.flatnonzero(ok)
                _, _, _, r = _residual(
                    model, ph[todo][sub], dp[todo][sub], cand_theta[sub], np.exp(cand_nu[sub])
                )
                cand_res[sub] = r
            good = cand_res <= (1.0 - 1e-4 * alpha[todo]) * base_res[todo]
            todo_idx = np.flatnonzero(todo)
            acc = todo_idx[good]
            trial_theta[acc] = cand_theta[good]
            trial_nu[acc] = cand_nu[good]
            accepted[acc] = True
            alpha[todo_idx[~good]] *= cfg.damping_factor
        if not accepted.all():
            stuck = idx[~accepted]
            failed[stuck] = True
            active[stuck] = False
            keep = accepted
            idx = idx[keep]
            trial_theta = trial_theta[keep]
            trial_nu = trial_nu[keep]
            if idx.size == 0:
                continue

        theta[idx] = trial_theta
        nu[idx] = trial_nu
        iterations[idx] += 1
        _, _, _, r2 = _residual(model, phi[idx], dphi[idx], trial_theta, np.exp(trial_nu))
        # rows collapsing toward mu -> 0 or barely improving are chasing the
        # spurious negative-mu root; hand them to the bracketed solve early
        stalled = (r2 > tol[idx]) & ((trial_nu < -20.0) | (r2 > 0.99 * res[idx]))
        stall_count[idx] = np.where(stalled, stall_count[idx] + 1, 0)
        res[idx] = r2
        active[idx] = r2 > tol[idx]
        give_up = idx[stall_count[idx] >= 3]
        failed[give_up] = True
        active[give_up] = False
    mu = np.exp(nu)

    # rows the joint Newton could not finish (stagnation near the spurious
    # negative-mu basin, or line-search failure) go through the globally
    # convergent bracketed solve; the bracket is seeded at the well-scaled
    # |phi'|/|b| estimate, not at whatever value the failed iteration reached
    for k in np.flatnonzero(active | failed):
        seed = float(mu0_raw[k]) if np.isfinite(mu0_raw[k]) and mu0_raw[k] > 0.0 else 1.0
        theta[k], mu[k] = _solve_support_point(
            model, phi[k], dphi[k], mu_init=seed, cfg=cfg, index=int(k)
        )
        _, _, _, rk = _residual(model, phi[k : k + 1], dphi[k : k + 1],
                                theta[k : k + 1], mu[k : k + 1])
        res[k] = rk[0]
        if res[k] > tol[k]:
            raise InnerSolverError(int(k), float(res[k]), theta[k])

    h_val, h_theta, f_align, _ = _residual(model, phi, dphi, theta, mu)
    residual_H = np.abs(h_val)
    residual_align = _norms(f_align) / speed
    # divergence is judged from the naive |phi'|/|b| rate at the ends
    raw0 = speed[0] / b_norm[0] if b_norm[0] > 0.0 else np.inf
    raw1 = speed[-1] / b_norm[-1] if b_norm[-1] > 0.0 else np.inf
    raw_ends = (float(raw0), float(raw1))
    mu, theta, residual_align, divergent = _endpoint_fixup(
        mu, theta, residual_align, fixed_ends, raw_ends
    )
    for side, end in ((0, 0), (1, -1)):
        if fixed_ends[side]:
            residual_H[end] = 0.0
    return InnerSolution(
        theta=theta,
        mu=mu,
        residual_H=residual_H,
        residual_align=residual_align,
        endpoint_divergent=divergent,
        newton_iterations=iterations,
    )


def solve_inner(
    model: HamiltonianModel,
    phi: np.ndarray,
    phi_prime: np.ndarray,
    config: NewtonConfig | None = None,
    warm_theta: np.ndarray | None = None,
) -> InnerSolution:
    """Dispatch to the closed-form or Newton inner solver by model kind."""
    if model.kind == "additive":
        return solve_additive(model.drift(phi), phi_prime, phi)
    if model.kind == "multiplicative":
        return solve_multiplicative(model.drift(phi), model.diffusion(phi), phi_prime, phi)
    return solve_general(model, phi, phi_prime, config, warm_theta)


__all__ = [
    "InnerSolution",
    "NewtonConfig",
    "solve_additive",
    "solve_multiplicative",
    "solve_general",
    "solve_inner",
]
