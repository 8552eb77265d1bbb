"""Catalog of benchmark metastable systems.

Each entry bundles everything a transition-path run needs: the Hamiltonian
(with analytic first derivatives), drift, named fixed-point seeds, the grid
settings used for the reference computations, an optional stiff/soft operator
split for exponential relaxation, and a model-aware initial path factory.

Models are registered by name and created through :func:`instantiate`, which
validates parameter overrides.  :func:`find_fixed_points` polishes every seed
with a damped least-squares Newton iteration and tags the resulting roots by
the sign pattern of the drift-Jacobian spectrum.
"""

from __future__ import annotations

import inspect
import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import RegistryError
from .hamiltonians import (
    HamiltonianModel,
    fd_jacobian,
    make_additive,
    make_general,
    make_multiplicative,
)
from .paths import PathGrid, broken_line_path, linear_path
from .spde import SplitOperator, build_split, periodic_laplacian

__all__ = [
    "RunSettings",
    "ModelInstance",
    "FixedPoint",
    "available_models",
    "instantiate",
    "find_fixed_points",
    "sample_admissible",
]


@dataclass(frozen=True)
class RunSettings:
    """Reference grid resolution for a model's transition-path runs."""

    n_points: int
    step_size: float
    n_space: int | None = None


@dataclass(frozen=True, eq=False)
class ModelInstance:
    """A fully assembled model: dynamics, seeds, and run defaults."""

    name: str
    dim: int
    params: Mapping[str, float]
    description: str
    hamiltonian: HamiltonianModel
    seeds: Mapping[str, np.ndarray]
    settings: RunSettings
    build_split: Callable[[float], SplitOperator] | None = None
    fixed_point_jacobian: Callable | None = None
    waypoint: Callable[[np.ndarray, np.ndarray], np.ndarray | None] | None = None

    @property
    def drift(self) -> Callable:
        return self.hamiltonian.drift

    def initial_path(self, start: np.ndarray, end: np.ndarray, n_points: int) -> PathGrid:
        """Piecewise-linear initial guess between two states.

        Models with symmetric transition channels supply waypoints that
        nudge the guess off the symmetry axis (and away from any interior
        fixed point a straight chord would cross); stiff models thread the
        guess along their slow manifold.  ``waypoint`` may return a single
        state, a stack of states, or ``None`` for a straight chord.
        """
        start = np.asarray(start, dtype=float)
        end = np.asarray(end, dtype=float)
        wp = self.waypoint(start, end) if self.waypoint is not None else None
        if wp is None:
            return linear_path(start, end, n_points)
        wp = np.atleast_2d(np.asarray(wp, dtype=float))
        return broken_line_path([start, *wp, end], n_points)


@dataclass(frozen=True, eq=False)
class FixedPoint:
    """A Newton-polished root of the drift with its linear stability."""

    name: str
    state: np.ndarray
    stability: str  # "stable" | "saddle" | "unstable"
    n_unstable: int
    residual: float
    converged: bool
    eigenvalues: np.ndarray


_BUILDERS: dict[str, Callable[..., ModelInstance]] = {}


def _register(name: str):
    def deco(fn):
        _BUILDERS[name] = fn
        return fn

    return deco


def available_models() -> tuple[str, ...]:
    return tuple(sorted(_BUILDERS))


def instantiate(name: str, **overrides) -> ModelInstance:
    """Build a registered model, applying keyword parameter overrides.

    Unknown model names and unknown parameter names raise
    :class:`RegistryError` listing the valid choices.
    """
    if name not in _BUILDERS:
        raise RegistryError(
            f"unknown model '{name}'; available: {', '.join(available_models())}"
        )
    builder = _BUILDERS[name]
    sig = inspect.signature(builder)
    unknown = sorted(set(overrides) - set(sig.parameters))
    if unknown:
        raise RegistryError(
            f"unknown parameter(s) {', '.join(unknown)} for model '{name}'; "
            f"valid: {', '.join(sig.parameters)}"
        )
    coerced = {}
    for key, value in overrides.items():
        default = sig.parameters[key].default
        try:
            if isinstance(default, bool):
                if isinstance(value, str):
                    if value.lower() in ("true", "1", "yes"):
                        value = True
                    elif value.lower() in ("false", "0", "no"):
                        value = False
                    else:
                        raise ValueError(value)
                coerced[key] = bool(value)
            elif isinstance(default, int):
                coerced[key] = int(value)
            elif isinstance(default, float):
                coerced[key] = float(value)
            else:
                coerced[key] = value
        except (TypeError, ValueError) as exc:
            raise RegistryError(
                f"parameter '{key}' of model '{name}' expects "
                f"{type(default).__name__}, got {value!r}"
            ) from exc
    return builder(**coerced)


# ---------------------------------------------------------------------------
# Fixed-point location
# ---------------------------------------------------------------------------

_NEWTON_TARGET = 1e-12
_ROOT_TOLERANCE = 1e-10
_NEUTRAL_REL = 1e-6


def _newton_root(
    func: Callable,
    jacobian: Callable,
    seed: np.ndarray,
    max_iterations: int = 200,
) -> tuple[np.ndarray, float, bool]:
    """Damped least-squares Newton; returns (root, residual, converged).

    The least-squares solve tolerates singular Jacobians (translation modes
    of periodic fields); damping halves the step until the residual drops.
    """
    x = np.asarray(seed, dtype=float).copy()
    fx = np.asarray(func(x), dtype=float)
    best = np.abs(fx).max()
    for _ in range(max_iterations):
        if best <= _NEWTON_TARGET:
            break
        jac = np.asarray(jacobian(x), dtype=float)
        step = np.linalg.lstsq(jac, -fx, rcond=None)[0]
        t = 1.0
        while t > 1e-8:
            trial = x + t * step
            f_trial = np.asarray(func(trial), dtype=float)
            if np.abs(f_trial).max() <= (1.0 - 0.5 * t) * best + _NEWTON_TARGET:
                x, fx = trial, f_trial
                best = np.abs(fx).max()
                break
            t *= 0.5
        else:
            break  # stalled: no damping factor reduces the residual
    return x, best, bool(best <= _ROOT_TOLERANCE)


def _stability_tag(eigenvalues: np.ndarray) -> tuple[str, int]:
    real = np.real(eigenvalues)
    cut = _NEUTRAL_REL * max(1.0, float(np.abs(real).max()))
    n_pos = int((real > cut).sum())
    n_neg = int((real < -cut).sum())
    if n_pos == 0:
        return "stable", 0
    if n_neg == 0:
        return "unstable", n_pos
    return "saddle", n_pos


def sample_admissible(
    instance: ModelInstance,
    n_samples: int,
    seed: int = 0,
    theta_scale: float = 0.3,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw admissible (state, momentum) pairs for derivative checks.

    States are convex combinations of the model's seeds plus a small jitter,
    so they probe the region a transition path actually visits; momenta are
    Gaussian with a magnitude tied to the local drift.  Proposals violating
    the model's state or momentum domain are rejected, with the momentum
    scale shrinking geometrically so restrictive domains still fill the
    request deterministically.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    model = instance.hamiltonian
    rng = np.random.default_rng(seed)
    seeds = np.stack([np.asarray(s, dtype=float) for s in instance.seeds.values()])
    span = np.maximum(seeds.max(axis=0) - seeds.min(axis=0), 1e-2)
    phi_keep: list[np.ndarray] = []
    theta_keep: list[np.ndarray] = []
    got = 0
    scale = theta_scale
    for _ in range(80):
        m = max(4 * (n_samples - got), 16)
        weights = rng.dirichlet(np.ones(len(seeds)), size=m)
        phi = weights @ seeds
        jitter = rng.standard_normal((m, instance.dim))
        if instance.settings.n_space is not None:
            # Discretized fields: smooth the jitter so the stiff spatial
            # operator does not amplify grid-scale noise into huge drift
            # values that drown finite differences in roundoff.
            kernel = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
            for _ in range(2):
                acc = np.zeros_like(jitter)
                for shift, w in zip(range(-2, 3), kernel):
                    acc += w * np.roll(jitter, shift, axis=1)
                jitter = acc
        phi = phi + 0.05 * span * jitter
        if model.state_domain is not None:
            phi = phi[np.asarray(model.state_domain(phi), dtype=bool)]
        if len(phi) == 0:
            continue
        with np.errstate(over="ignore", invalid="ignore"):
            b = np.asarray(model.drift(phi), dtype=float)
        # Tie the momentum magnitude to the local drift (the physical scale of
        # the optimal momentum) but cap it: for stiff discretized operators an
        # uncapped |b| makes H so large that finite differences of it drown in
        # roundoff.
        mag = np.linalg.norm(b, axis=1, keepdims=True) / math.sqrt(instance.dim)
        theta = scale * (1.0 + np.minimum(mag, 3.0)) * rng.standard_normal(phi.shape)
        if model.theta_domain is not None:
            ok = np.asarray(model.theta_domain(phi, theta), dtype=bool)
            phi, theta = phi[ok], theta[ok]
        if len(phi):
            phi_keep.append(phi)
            theta_keep.append(theta)
            got += len(phi)
        if got >= n_samples:
            phi_all = np.concatenate(phi_keep)[:n_samples]
            theta_all = np.concatenate(theta_keep)[:n_samples]
            return phi_all, theta_all
        scale *= 0.8
    raise RegistryError(
        f"could not draw {n_samples} admissible samples for {instance.name!r}"
    )


def find_fixed_points(
    instance: ModelInstance, max_iterations: int = 200
) -> list[FixedPoint]:
    """Polish every named seed of ``instance`` to a root of the drift.

    Divergent seeds are reported (``converged=False``) rather than raised, so
    one bad seed does not hide the others.
    """
    drift = instance.hamiltonian.drift

    def func(x):
        return np.asarray(drift(x[np.newaxis, :]), dtype=float)[0]

    if instance.fixed_point_jacobian is not None:
        jac_single = instance.fixed_point_jacobian
    elif instance.hamiltonian.drift_jacobian is not None:
        analytic = instance.hamiltonian.drift_jacobian

        def jac_single(x):
            return np.asarray(analytic(x[np.newaxis, :]), dtype=float)[0]

    else:

        def jac_single(x):
            return fd_jacobian(drift, x[np.newaxis, :])[0]

    results = []
    for name, seed in instance.seeds.items():
        root, residual, converged = _newton_root(
            func, jac_single, seed, max_iterations=max_iterations
        )
        eig = np.linalg.eigvals(jac_single(root))
        tag, n_unstable = _stability_tag(eig)
        results.append(
            FixedPoint(
                name=name,
                state=root,
                stability=tag,
                n_unstable=n_unstable,
                residual=float(residual),
                converged=converged,
                eigenvalues=eig,
            )
        )
    return results


# ---------------------------------------------------------------------------
# Planar double-well with transverse channel
# ---------------------------------------------------------------------------


@_register("maier-stein")
def _build_maier_stein(beta: float = 10.0) -> ModelInstance:
    """Planar non-gradient double well; ``beta`` controls the rotational part."""

    def drift(states):
        states = np.asarray(states, dtype=float)
        u, v = states[..., 0], states[..., 1]
        out = np.empty_like(states)
        out[..., 0] = u - u**3 - beta * u * v**2
        out[..., 1] = -(1.0 + u**2) * v
        return out

    def drift_jacobian(states):
        states = np.asarray(states, dtype=float)
        u, v = states[..., 0], states[..., 1]
        jac = np.zeros(states.shape + (2,))
        jac[..., 0, 0] = 1.0 - 3.0 * u**2 - beta * v**2
        jac[..., 0, 1] = -2.0 * beta * u * v
        jac[..., 1, 0] = -2.0 * u * v
        jac[..., 1, 1] = -(1.0 + u**2)
        return jac

    return ModelInstance(
        name="maier-stein",
        dim=2,
        params={"beta": beta},
        description="planar bistable flow with a non-gradient transverse channel",
        hamiltonian=make_additive(drift, dim=2, drift_jacobian=drift_jacobian),
        seeds={
            "minus": np.array([-1.0, 0.0]),
            "plus": np.array([1.0, 0.0]),
            "saddle": np.array([0.0, 0.0]),
        },
        settings=RunSettings(n_points=1024, step_size=0.1),
        waypoint=lambda start, end: np.array([0.0, 0.3]),
    )


# ---------------------------------------------------------------------------
# Two-cell conserved bistable toy
# ---------------------------------------------------------------------------


@_register("acch-toy")
def _build_acch_toy(alpha: float = 0.01) -> ModelInstance:
    """Two coupled bistable cells with a fast mass-exchange term.

    The exchange matrix annihilates the uniform mode, so for small ``alpha``
    the dynamics collapses onto the slow manifold where the cell reactions
    balance; transitions hug that manifold.
    """

    def _f(x):
        return x - x**3

    def drift(states):
        states = np.asarray(states, dtype=float)
        f1, f2 = _f(states[..., 0]), _f(states[..., 1])
        out = np.empty_like(states)
        out[..., 0] = (f1 - f2) / alpha - states[..., 0]
        out[..., 1] = (f2 - f1) / alpha - states[..., 1]
        return out

    def drift_jacobian(states):
        states = np.asarray(states, dtype=float)
        d1 = 1.0 - 3.0 * states[..., 0] ** 2
        d2 = 1.0 - 3.0 * states[..., 1] ** 2
        jac = np.zeros(states.shape + (2,))
        jac[..., 0, 0] = d1 / alpha - 1.0
        jac[..., 0, 1] = -d2 / alpha
        jac[..., 1, 0] = -d1 / alpha
        jac[..., 1, 1] = d2 / alpha - 1.0
        return jac

    amp = math.sqrt(1.0 - alpha / 2.0)

    def waypoint(start, end):
        if alpha >= 0.5:
            # mild exchange: a single off-diagonal bend suffices
            return np.array([0.25 * (start[0] + end[0]) + 0.1, 0.1])
        # Thread the guess along the balanced-reaction branch
        # phi1^2 + phi1 phi2 + phi2^2 = 1, where the stiff exchange term
        # vanishes; a chord through the stiff region makes the first
        # descent directions explode.
        psi = np.linspace(0.0, math.pi, 33)[1:-1]
        p = math.sqrt(2.0 / 3.0) * np.sin(psi)
        q = math.sqrt(2.0) * np.cos(psi)
        pts = np.stack([(p + q), (p - q)], axis=1) / math.sqrt(2.0)
        if np.linalg.norm(pts[0] - start) > np.linalg.norm(pts[-1] - start):
            pts = pts[::-1]
        return pts

    return ModelInstance(
        name="acch-toy",
        dim=2,
        params={"alpha": alpha},
        description="two bistable cells with stiff mass exchange (slow-manifold toy)",
        hamiltonian=make_additive(drift, dim=2, drift_jacobian=drift_jacobian),
        seeds={
            "a": np.array([-amp, amp]),
            "b": np.array([amp, -amp]),
            "saddle": np.array([0.0, 0.0]),
        },
        settings=RunSettings(n_points=16384, step_size=0.01),
        waypoint=waypoint,
    )


# ---------------------------------------------------------------------------
# Conserved reaction-diffusion field (spectral-split SPDE)
# ---------------------------------------------------------------------------


@_register("acch-pde")
def _build_acch_pde(
    alpha: float = 0.01, kappa: float = 0.02, n_space: int = 64
) -> ModelInstance:
    """Mass-projected bistable field on the periodic unit interval.

    The reaction is filtered through the zero-mean projection, so every fixed
    point has exactly zero spatial mean; stable states are domain-wall pairs.
    State vectors hold the field values on ``n_space`` uniform cells.
    """
    dx = 1.0 / n_space
    lap = periodic_laplacian(n_space, dx)
    linear = (kappa / alpha) * lap - np.eye(n_space)

    def _project(v):
        return v - v.mean(axis=-1, keepdims=True)

    def remainder(states):
        states = np.asarray(states, dtype=float)
        return _project(states - states**3) / alpha

    def remainder_jta(states, thetas):
        states = np.asarray(states, dtype=float)
        return (1.0 - 3.0 * states**2) * _project(thetas) / alpha

    def drift(states):
        states = np.asarray(states, dtype=float)
        return states @ linear.T + remainder(states)

    def drift_jta(states, thetas):
        return thetas @ linear.T + remainder_jta(states, thetas)

    def fp_jacobian(x):
        inner = kappa * lap + np.diag(1.0 - 3.0 * x**2)
        return (inner - inner.mean(axis=0, keepdims=True)) / alpha - np.eye(n_space)

    grid = np.arange(n_space) * dx
    width = math.sqrt(2.0 * kappa)
    wall = np.tanh((grid - 0.25) / width) - np.tanh((grid - 0.75) / width) - 1.0
    wall = wall - wall.mean()

    # --- guided initial guess for wall-to-wall transitions ----------------
    # The projected reaction is stiff (scale 1/alpha), so relaxation squeezes
    # paths onto the family of states whose unprojected reaction balance
    # kappa*phi_xx + phi - phi**3 is spatially uniform.  Low-action guesses
    # should hug that one-parameter family: starting from one wall state it
    # climbs in mean, crosses the hyperplane of states orthogonal to the
    # start, and comes back to zero mean on the far side of the basin
    # boundary.  Pseudo-arclength continuation with a bordered Newton
    # corrector traces the branch through its folds.
    waypoint_cache: dict[bytes, np.ndarray | None] = {}

    def uniform_balance_residual(phi, lam):
        return kappa * (lap @ phi) + phi - phi**3 - lam

    def uniform_balance_jacobian(phi):
        return kappa * lap + np.diag(1.0 - 3.0 * phi**2)

    def branch_corrector(phi, lam, tangent, z_pred, max_iter=30):
        z = np.concatenate([phi, [lam]])
        res = np.inf
        for _ in range(max_iter):
            phi, lam = z[:n_space], z[n_space]
            res = np.concatenate(
                [uniform_balance_residual(phi, lam), [tangent @ (z - z_pred)]]
            )
            if np.linalg.norm(res) < 1e-12 * n_space:
                return z, True
            jac = np.zeros((n_space + 1, n_space + 1))
            jac[:n_space, :n_space] = uniform_balance_jacobian(phi)
            jac[:n_space, n_space] = -1.0
            jac[n_space, :] = tangent
            z = z - np.linalg.solve(jac, res)
        return z, bool(np.linalg.norm(res) < 1e-9 * n_space)

    def branch_tangent(z, prev):
        jac = np.zeros((n_space + 1, n_space + 1))
        jac[:n_space, :n_space] = uniform_balance_jacobian(z[:n_space])
        jac[:n_space, n_space] = -1.0
        jac[n_space, :] = prev
        rhs = np.zeros(n_space + 1)
        rhs[n_space] = 1.0
        t = np.linalg.solve(jac, rhs)
        return t / np.linalg.norm(t)

    def wall_pair_waypoint(start, end):
        start = np.asarray(start, dtype=float)
        end = np.asarray(end, dtype=float)
        # Only the two wall states form an antipodal pair; anything else
        # (for example paths into the zero state) keeps a straight guess.
        if np.linalg.norm(start) < 1.0 or not np.allclose(
            start, -end, atol=1e-8
        ):
            return None
        key = start.tobytes()
        if key in waypoint_cache:
            return waypoint_cache[key]
        lam0 = float(np.mean(start - start**3))
        mean_dir = np.zeros(n_space + 1)
        mean_dir[:n_space] = 1.0 / n_space
        z, ok = branch_corrector(
            start, lam0, mean_dir, np.concatenate([start, [lam0]])
        )
        result = None
        if ok:
            branch = [z[:n_space].copy()]
            prev_t = mean_dir
            ds_branch = 0.05
            unit_start = start / np.linalg.norm(start)
            finished = False
            for step in range(4000):
                t = branch_tangent(z, prev_t)
                if t @ prev_t < 0:
                    t = -t
                z_pred = z + ds_branch * t
                z_new, ok = branch_corrector(z_pred[:n_space], z_pred[n_space], t, z_pred)
                if not ok:
                    ds_branch *= 0.5
                    if ds_branch < 1e-4:
                        break
                    continue
                z, prev_t = z_new, t
                branch.append(z[:n_space].copy())
                mean_now = float(z[:n_space].mean())
                overlap = float(z[:n_space] @ unit_start)
                if step > 10 and abs(mean_now) < 2e-3 and overlap < -0.1:
                    finished = True
                    break
            if finished:
                keep = list(range(10, len(branch) - 1, 20)) + [len(branch) - 1]
                result = np.stack([branch[i] for i in keep])
        waypoint_cache[key] = result
        return result

    return ModelInstance(
        name="acch-pde",
        dim=n_space,
        params={"alpha": alpha, "kappa": kappa, "n_space": n_space},
        description="mass-projected bistable field on a periodic interval",
        hamiltonian=make_additive(
            drift,
            dim=n_space,
            drift_jacobian_transpose_apply=drift_jta,
            inner_weight=dx,
        ),
        seeds={
            "a": wall.copy(),
            "b": -wall.copy(),
            "zero": np.zeros(n_space),
        },
        settings=RunSettings(n_points=100, step_size=0.1, n_space=n_space),
        build_split=lambda h: build_split(linear, remainder, remainder_jta, h),
        fixed_point_jacobian=fp_jacobian,
        waypoint=wall_pair_waypoint,
    )


# ---------------------------------------------------------------------------
# Advective bistable field (spectral-split SPDE)
# ---------------------------------------------------------------------------


@_register("burgers-huxley")
def _build_burgers_huxley(
    kappa: float = 0.01,
    advection: float = 0.25,
    n_space: int = 256,
    inverted_reaction: bool = False,
) -> ModelInstance:
    """Viscous advecting field with a bistable reaction, periodic cell.

    ``inverted_reaction`` flips the sign of the reaction term; some
    formulations state it with the opposite sign, which makes the uniform
    states repelling instead of attracting.
    """
    dx = 1.0 / n_space
    lap = periodic_laplacian(n_space, dx)
    sign = -1.0 if inverted_reaction else 1.0

    def _deriv_x(v):
        return (np.roll(v, -1, axis=-1) - np.roll(v, 1, axis=-1)) / (2.0 * dx)

    def _reaction(u):
        return sign * (u - u**3)

    def remainder(states):
        u = np.asarray(states, dtype=float)
        return -advection * u * _deriv_x(u) + _reaction(u)

    def remainder_jta(states, thetas):
        u = np.asarray(states, dtype=float)
        ux = _deriv_x(u)
        # transpose of -advection*(diag(u_x) + diag(u) d/dx) plus the
        # pointwise reaction derivative; d/dx is antisymmetric.
        return (
            -advection * (ux * thetas - _deriv_x(u * thetas))
            + sign * (1.0 - 3.0 * u**2) * thetas
        )

    linear = kappa * lap

    def drift(states):
        states = np.asarray(states, dtype=float)
        return states @ linear.T + remainder(states)

    def drift_jta(states, thetas):
        return thetas @ linear.T + remainder_jta(states, thetas)

    def fp_jacobian(x):
        dmat = np.zeros((n_space, n_space))
        idx = np.arange(n_space)
        dmat[idx, (idx + 1) % n_space] = 1.0 / (2.0 * dx)
        dmat[idx, (idx - 1) % n_space] = -1.0 / (2.0 * dx)
        return (
            linear
            - advection * (np.diag(_deriv_x(x)) + np.diag(x) @ dmat)
            + np.diag(sign * (1.0 - 3.0 * x**2))
        )

    return ModelInstance(
        name="burgers-huxley",
        dim=n_space,
        params={
            "kappa": kappa,
            "advection": advection,
            "n_space": n_space,
            "inverted_reaction": float(inverted_reaction),
        },
        description="advective bistable field on a periodic interval",
        hamiltonian=make_additive(
            drift,
            dim=n_space,
            drift_jacobian_transpose_apply=drift_jta,
            inner_weight=dx,
        ),
        seeds={
            "minus": -np.ones(n_space),
            "plus": np.ones(n_space),
            "zero": np.zeros(n_space),
        },
        settings=RunSettings(n_points=100, step_size=5e-3, n_space=n_space),
        build_split=lambda h: build_split(linear, remainder, remainder_jta, h),
        fixed_point_jacobian=fp_jacobian,
        waypoint=lambda start, end: 0.3 * np.sin(2.0 * np.pi * np.arange(n_space) * dx),
    )


# ---------------------------------------------------------------------------
# Three-mode topographic flow
# ---------------------------------------------------------------------------


@_register("egger")
def _build_egger(
    topography: float = 12.0,
    beta: float = 1.25,
    damping: float = 2.0,
    wavenumber: float = 2.0,
    forcing: float = 10.5,
) -> ModelInstance:
    """Three-mode barotropic flow over topography with blocked/zonal states."""
    hh, be, ga, kk, u0 = topography, beta, damping, wavenumber, forcing
    shift = be / kk**2

    def drift(states):
        states = np.asarray(states, dtype=float)
        a, b, u = states[..., 0], states[..., 1], states[..., 2]
        out = np.empty_like(states)
        out[..., 0] = kk * b * (u - shift) - ga * a
        out[..., 1] = -kk * a * (u - shift) + u * hh / kk - ga * b
        out[..., 2] = -b * hh * kk / 2.0 - ga * (u - u0)
        return out

    def drift_jacobian(states):
        states = np.asarray(states, dtype=float)
        a, b, u = states[..., 0], states[..., 1], states[..., 2]
        jac = np.zeros(states.shape + (3,))
        jac[..., 0, 0] = -ga
        jac[..., 0, 1] = kk * (u - shift)
        jac[..., 0, 2] = kk * b
        jac[..., 1, 0] = -kk * (u - shift)
        jac[..., 1, 1] = -ga
        jac[..., 1, 2] = -kk * a + hh / kk
        jac[..., 2, 1] = -hh * kk / 2.0
        jac[..., 2, 2] = -ga
        return jac

    return ModelInstance(
        name="egger",
        dim=3,
        params={
            "topography": topography,
            "beta": beta,
            "damping": damping,
            "wavenumber": wavenumber,
            "forcing": forcing,
        },
        description="three-mode topographic channel flow (blocked vs zonal)",
        hamiltonian=make_additive(drift, dim=3, drift_jacobian=drift_jacobian),
        seeds={
            "blocked": np.array([0.465, 1.65, 0.593]),
            "zonal": np.array([3.07, 0.392, 8.15]),
            "saddle": np.array([2.80, 1.35, 2.38]),
        },
        settings=RunSettings(n_points=256, step_size=1e-3),
    )


# ---------------------------------------------------------------------------
# Six-mode blocked/zonal atmosphere
# ---------------------------------------------------------------------------


@_register("charney-devore")
def _build_charney_devore(
    b: float = 0.5,
    damping: float = 0.1,
    beta: float = 1.25,
    gamma: float = 1.0,
    x1_star: float = 4.5,
    x4_star: float = -1.8,
    noise_variance: float = 2.0,
) -> ModelInstance:
    """Six-mode spectral atmosphere with zonal and blocked regimes.

    Noise acts on every mode with variance ``noise_variance`` (the reference
    formulation's forcing amplitude convention makes it 2).
    """
    cc = damping

    def _mode(m):
        al = (8.0 * math.sqrt(2.0) / math.pi) * (m**2 / (4.0 * m**2 - 1.0)) * (
            (b**2 + m**2 - 1.0) / (b**2 + m**2)
        )
        be_m = beta * b**2 / (b**2 + m**2)
        ga_m = gamma * (math.sqrt(2.0) * b / math.pi) * (
            4.0 * m**3 / ((4.0 * m**2 - 1.0) * (b**2 + m**2))
        )
        gt_m = gamma * (math.sqrt(2.0) * b / math.pi) * (4.0 * m / (4.0 * m**2 - 1.0))
        de_m = (64.0 * math.sqrt(2.0) / (15.0 * math.pi)) * (
            (b**2 - m**2 + 1.0) / (b**2 + m**2)
        )
        return al, be_m, ga_m, gt_m, de_m

    a1, b1, g1, gt1, d1 = _mode(1)
    a2, b2, g2, gt2, d2 = _mode(2)
    eta = 16.0 * math.sqrt(2.0) / (5.0 * math.pi)

    def drift(states):
        states = np.asarray(states, dtype=float)
        x1, x2, x3 = states[..., 0], states[..., 1], states[..., 2]
        x4, x5, x6 = states[..., 3], states[..., 4], states[..., 5]
        out = np.empty_like(states)
        out[..., 0] = gt1 * x3 - cc * (x1 - x1_star)
        out[..., 1] = -(a1 * x1 - b1) * x3 - cc * x2 - d1 * x4 * x6
        out[..., 2] = (a1 * x1 - b1) * x2 - g1 * x1 - cc * x3 + d1 * x4 * x5
        out[..., 3] = gt2 * x6 - cc * (x4 - x4_star) + eta * (x2 * x6 - x3 * x5)
        out[..., 4] = -(a2 * x1 - b2) * x6 - cc * x5 - d2 * x3 * x4
        out[..., 5] = (a2 * x1 - b2) * x5 - g2 * x4 - cc * x6 + d2 * x2 * x4
        return out

    def drift_jacobian(states):
        states = np.asarray(states, dtype=float)
        x1, x2, x3 = states[..., 0], states[..., 1], states[..., 2]
        x4, x5, x6 = states[..., 3], states[..., 4], states[..., 5]
        jac = np.zeros(states.shape + (6,))
        jac[..., 0, 0] = -cc
        jac[..., 0, 2] = gt1
        jac[..., 1, 0] = -a1 * x3
        jac[..., 1, 1] = -cc
        jac[..., 1, 2] = -(a1 * x1 - b1)
        jac[..., 1, 3] = -d1 * x6
        jac[..., 1, 5] = -d1 * x4
        jac[..., 2, 0] = a1 * x2 - g1
        jac[..., 2, 1] = a1 * x1 - b1
        jac[..., 2, 2] = -cc
        jac[..., 2, 3] = d1 * x5
        jac[..., 2, 4] = d1 * x4
        jac[..., 3, 1] = eta * x6
        jac[..., 3, 2] = -eta * x5
        jac[..., 3, 3] = -cc
        jac[..., 3, 4] = -eta * x3
        jac[..., 3, 5] = gt2 + eta * x2
        jac[..., 4, 0] = -a2 * x6
        jac[..., 4, 2] = -d2 * x4
        jac[..., 4, 3] = -d2 * x3
        jac[..., 4, 4] = -cc
        jac[..., 4, 5] = -(a2 * x1 - b2)
        jac[..., 5, 0] = a2 * x5
        jac[..., 5, 1] = d2 * x4
        jac[..., 5, 3] = -g2 + d2 * x2
        jac[..., 5, 4] = a2 * x1 - b2
        jac[..., 5, 5] = -cc
        return jac

    eye6 = np.eye(6)

    def diffusion(states):
        states = np.asarray(states, dtype=float)
        return np.broadcast_to(
            noise_variance * eye6, states.shape + (6,)
        ).copy()

    def contraction(states, thetas):
        return np.zeros_like(np.asarray(states, dtype=float))

    return ModelInstance(
        name="charney-devore",
        dim=6,
        params={
            "b": b,
            "damping": damping,
            "beta": beta,
            "gamma": gamma,
            "x1_star": x1_star,
            "x4_star": x4_star,
            "noise_variance": noise_variance,
        },
        description="six-mode spectral atmosphere with zonal and blocked regimes",
        hamiltonian=make_multiplicative(
            drift,
            diffusion,
            dim=6,
            drift_jacobian=drift_jacobian,
            contraction=contraction,
        ),
        seeds={
            "zonal": np.array(
                [4.30415, 0.864284, -0.06526, -1.541406, -0.590751, 0.059628]
            ),
            "blocked": np.array(
                [0.731985, -0.816836, -1.255564, -0.103415, 0.26376, 0.29092]
            ),
            "saddle": np.array(
                [1.638786, 1.709998, -0.953403, -0.270911, -0.50749, 0.328992]
            ),
        },
        settings=RunSettings(n_points=100, step_size=1e-3),
    )


# ---------------------------------------------------------------------------
# Two coupled opinion fields with state-dependent noise
# ---------------------------------------------------------------------------


@_register("voter2d")
def _build_voter2d(
    a: float = 1.0 - 1e-4,
    b: float = 1.0,
    coupling: float = 0.4,
    noise_amp: float = 1.0,
) -> ModelInstance:
    """Two coupled bounded opinion variables with vanishing boundary noise.

    Noise variance ``noise_amp**2 * (1 - phi_i**2)`` degenerates at the
    domain boundary, so states must stay strictly inside ``(-1, 1)^2``.  The
    cross-coupling enters with the anti-diffusive sign (+D on the first
    component's difference), which makes the origin fully repelling.
    """
    dd = coupling
    s2 = noise_amp**2

    def drift(states):
        states = np.asarray(states, dtype=float)
        p1, p2 = states[..., 0], states[..., 1]
        out = np.empty_like(states)
        out[..., 0] = (1.0 - p1**2) * (a * p1 - b * p1**3) + dd * (p1 - p2)
        out[..., 1] = (1.0 - p2**2) * (a * p2 - b * p2**3) - dd * (p1 - p2)
        return out

    def _dself(p):
        return -2.0 * p * (a * p - b * p**3) + (1.0 - p**2) * (a - 3.0 * b * p**2)

    def drift_jacobian(states):
        states = np.asarray(states, dtype=float)
        p1, p2 = states[..., 0], states[..., 1]
        jac = np.zeros(states.shape + (2,))
        jac[..., 0, 0] = _dself(p1) + dd
        jac[..., 0, 1] = -dd
        jac[..., 1, 0] = -dd
        jac[..., 1, 1] = _dself(p2) + dd
        return jac

    def diffusion(states):
        states = np.asarray(states, dtype=float)
        out = np.zeros(states.shape + (2,))
        out[..., 0, 0] = s2 * (1.0 - states[..., 0] ** 2)
        out[..., 1, 1] = s2 * (1.0 - states[..., 1] ** 2)
        return out

    def contraction(states, thetas):
        states = np.asarray(states, dtype=float)
        thetas = np.asarray(thetas, dtype=float)
        return -s2 * states * thetas**2

    def state_domain(states):
        states = np.asarray(states, dtype=float)
        return np.all(np.abs(states) < 1.0, axis=-1)

    q = math.sqrt(a / b)
    return ModelInstance(
        name="voter2d",
        dim=2,
        params={"a": a, "b": b, "coupling": coupling, "noise_amp": noise_amp},
        description="two coupled bounded opinion variables, noise dying at the walls",
        hamiltonian=make_multiplicative(
            drift,
            diffusion,
            dim=2,
            drift_jacobian=drift_jacobian,
            contraction=contraction,
            state_domain=state_domain,
        ),
        seeds={
            "minus": np.array([-q, -q]),
            "plus": np.array([q, q]),
            "center": np.array([0.0, 0.0]),
        },
        settings=RunSettings(n_points=256, step_size=1e-3),
        waypoint=lambda start, end: np.array([0.12, -0.12]),
    )


# ---------------------------------------------------------------------------
# Birth-death reaction chain with compartment diffusion
# ---------------------------------------------------------------------------


@_register("schloegl-rd")
def _build_schloegl_rd(
    lambda0: float = 0.8,
    lambda1: float = 2.9,
    lambda2: float = 3.1,
    lambda3: float = 1.0,
    n_compartments: int = 2,
    diffusivity: float = 1.0,
) -> ModelInstance:
    """Bistable birth-death kinetics in diffusively coupled compartments.

    The Hamiltonian is the large-volume limit of the reaction network:
    exponential tilts of the birth rate ``lambda0 + lambda2 rho^2``, the
    death rate ``lambda1 rho + lambda3 rho^3``, and nearest-neighbour hops
    at rate ``diffusivity`` with reflecting chain ends (missing-neighbour
    terms simply dropped).  With the default rates the spatially uniform
    roots sit at 1/2, 1, and 8/5 exactly.
    """
    nn = n_compartments
    dd = diffusivity

    def _a_plus(rho):
        return lambda0 + lambda2 * rho**2

    def _a_minus(rho):
        return lambda1 * rho + lambda3 * rho**3

    def _hop_factors(rho, theta):
        """exp tilts toward the left/right neighbour, zero where absent."""
        e_left = np.zeros_like(theta)
        e_right = np.zeros_like(theta)
        if nn > 1:
            e_left[..., 1:] = np.exp(theta[..., :-1] - theta[..., 1:])
            e_right[..., :-1] = np.exp(theta[..., 1:] - theta[..., :-1])
        return e_left, e_right

    def eval_H(states, thetas):
        rho = np.asarray(states, dtype=float)
        th = np.asarray(thetas, dtype=float)
        react = _a_plus(rho) * (np.exp(th) - 1.0) + _a_minus(rho) * (
            np.exp(-th) - 1.0
        )
        total = react.sum(axis=-1)
        if nn > 1:
            e_left, e_right = _hop_factors(rho, th)
            has_left = np.zeros(nn)
            has_left[1:] = 1.0
            has_right = np.zeros(nn)
            has_right[:-1] = 1.0
            hop = rho * (e_left - has_left + e_right - has_right)
            total = total + dd * hop.sum(axis=-1)
        return total

    def grad_theta(states, thetas):
        rho = np.asarray(states, dtype=float)
        th = np.asarray(thetas, dtype=float)
        out = _a_plus(rho) * np.exp(th) - _a_minus(rho) * np.exp(-th)
        if nn > 1:
            e_left, e_right = _hop_factors(rho, th)
            out = out - dd * rho * (e_left + e_right)
            incoming = np.zeros_like(out)
            incoming[..., 1:] += (rho * e_right)[..., :-1]
            incoming[..., :-1] += (rho * e_left)[..., 1:]
            out = out + dd * incoming
        return out

    def grad_phi(states, thetas):
        rho = np.asarray(states, dtype=float)
        th = np.asarray(thetas, dtype=float)
        out = (2.0 * lambda2 * rho) * (np.exp(th) - 1.0) + (
            lambda1 + 3.0 * lambda3 * rho**2
        ) * (np.exp(-th) - 1.0)
        if nn > 1:
            e_left, e_right = _hop_factors(rho, th)
            has_left = np.zeros(nn)
            has_left[1:] = 1.0
            has_right = np.zeros(nn)
            has_right[:-1] = 1.0
            out = out + dd * (e_left - has_left + e_right - has_right)
        return out

    def hess_theta_theta(states, thetas):
        rho = np.asarray(states, dtype=float)
        th = np.asarray(thetas, dtype=float)
        diag = _a_plus(rho) * np.exp(th) + _a_minus(rho) * np.exp(-th)
        hess = np.zeros(rho.shape + (nn,))
        idx = np.arange(nn)
        if nn > 1:
            e_left, e_right = _hop_factors(rho, th)
            incoming = np.zeros_like(diag)
            incoming[..., 1:] += (rho * e_right)[..., :-1]
            incoming[..., :-1] += (rho * e_left)[..., 1:]
            diag = diag + dd * (rho * (e_left + e_right) + incoming)
            off = -dd * (
                (rho * e_right)[..., :-1] + (rho * e_left)[..., 1:]
            )
            hess[..., idx[:-1], idx[1:]] = off
            hess[..., idx[1:], idx[:-1]] = off
        hess[..., idx, idx] = diag
        return hess

    def drift(states):
        rho = np.asarray(states, dtype=float)
        out = _a_plus(rho) - _a_minus(rho)
        if nn > 1:
            neighbor_sum = np.zeros_like(rho)
            neighbor_sum[..., 1:] += rho[..., :-1]
            neighbor_sum[..., :-1] += rho[..., 1:]
            degree = np.ones(nn)
            if nn > 2:
                degree[1:-1] = 2.0
            elif nn == 2:
                degree[:] = 1.0
            out = out + dd * (neighbor_sum - degree * rho)
        return out

    def drift_jacobian(states):
        rho = np.asarray(states, dtype=float)
        diag = 2.0 * lambda2 * rho - lambda1 - 3.0 * lambda3 * rho**2
        jac = np.zeros(rho.shape + (nn,))
        idx = np.arange(nn)
        if nn > 1:
            degree = np.ones(nn)
            if nn > 2:
                degree[1:-1] = 2.0
            diag = diag - dd * degree
            jac[..., idx[:-1], idx[1:]] = dd
            jac[..., idx[1:], idx[:-1]] = dd
        jac[..., idx, idx] = diag
        return jac

    def state_domain(states):
        return np.all(np.asarray(states, dtype=float) > 0.0, axis=-1)

    def waypoint(start, end):
        if nn < 2:
            return None
        mid = 0.5 * (start + end)
        tilt = 0.05 * np.where(np.arange(nn) % 2 == 0, 1.0, -1.0)
        return mid + tilt

    return ModelInstance(
        name="schloegl-rd",
        dim=nn,
        params={
            "lambda0": lambda0,
            "lambda1": lambda1,
            "lambda2": lambda2,
            "lambda3": lambda3,
            "n_compartments": float(nn),
            "diffusivity": diffusivity,
        },
        description="bistable birth-death kinetics in diffusively coupled compartments",
        hamiltonian=make_general(
            eval_H,
            dim=nn,
            grad_phi=grad_phi,
            grad_theta=grad_theta,
            hess_theta_theta=hess_theta_theta,
            state_domain=state_domain,
            drift=drift,
            drift_jacobian=drift_jacobian,
        ),
        seeds={
            "low": np.full(nn, 0.5),
            "saddle": np.full(nn, 1.0),
            "high": np.full(nn, 1.6),
        },
        settings=RunSettings(n_points=512, step_size=10.0),
        waypoint=waypoint,
    )


# ---------------------------------------------------------------------------
# Two slow modes driven by fast Ornstein-Uhlenbeck energies
# ---------------------------------------------------------------------------


@_register("slowfast2")
def _build_slowfast2(
    beta1: float = 0.6,
    beta2: float = 0.3,
    coupling: float = 1.0,
    noise_variance: float = 10.0,
) -> ModelInstance:
    """Two spring-coupled slow modes forced by squared fast noise.

    The fast variables are averaged out analytically; the price is a
    Hamiltonian defined only for conjugate momenta with
    ``2 sigma^2 theta_i < gamma(x_i)^2``, where ``gamma`` is the
    state-dependent fast relaxation rate.
    """
    betas = np.array([beta1, beta2])
    dd = coupling
    s2 = noise_variance

    def _gamma(x):
        return (x - 5.0) ** 2 + 1.0

    def _gamma_prime(x):
        return 2.0 * (x - 5.0)

    def _rad(x, th):
        return _gamma(x) ** 2 - 2.0 * s2 * th

    def _cross(v):
        # D * (v_i - v_j) for the two-component exchange
        return dd * (v - v[..., ::-1])

    def eval_H(states, thetas):
        x = np.asarray(states, dtype=float)
        th = np.asarray(thetas, dtype=float)
        root = np.sqrt(_rad(x, th))
        local = -betas * x * th + 0.5 * (_gamma(x) - root)
        return (local - _cross(x) * th).sum(axis=-1)

    def grad_theta(states, thetas):
        x = np.asarray(states, dtype=float)
        th = np.asarray(thetas, dtype=float)
        return -betas * x + s2 / (2.0 * np.sqrt(_rad(x, th))) - _cross(x)

    def grad_phi(states, thetas):
        x = np.asarray(states, dtype=float)
        th = np.asarray(thetas, dtype=float)
        root = np.sqrt(_rad(x, th))
        return (
            -betas * th
            + 0.5 * _gamma_prime(x) * (1.0 - _gamma(x) / root)
            - _cross(th)
        )

    def hess_theta_theta(states, thetas):
        x = np.asarray(states, dtype=float)
        th = np.asarray(thetas, dtype=float)
        diag = s2**2 / (2.0 * _rad(x, th) ** 1.5)
        hess = np.zeros(x.shape + (2,))
        hess[..., 0, 0] = diag[..., 0]
        hess[..., 1, 1] = diag[..., 1]
        return hess

    def theta_domain(states, thetas):
        x = np.asarray(states, dtype=float)
        th = np.asarray(thetas, dtype=float)
        return np.all(2.0 * s2 * th < _gamma(x) ** 2, axis=-1)

    def drift(states):
        x = np.asarray(states, dtype=float)
        return s2 / (2.0 * _gamma(x)) - betas * x - _cross(x)

    def drift_jacobian(states):
        x = np.asarray(states, dtype=float)
        dself = -s2 * _gamma_prime(x) / (2.0 * _gamma(x) ** 2) - betas - dd
        jac = np.zeros(x.shape + (2,))
        jac[..., 0, 0] = dself[..., 0]
        jac[..., 1, 1] = dself[..., 1]
        jac[..., 0, 1] = dd
        jac[..., 1, 0] = dd
        return jac

    return ModelInstance(
        name="slowfast2",
        dim=2,
        params={
            "beta1": beta1,
            "beta2": beta2,
            "coupling": coupling,
            "noise_variance": noise_variance,
        },
        description="two spring-coupled slow modes forced by squared fast noise",
        hamiltonian=make_general(
            eval_H,
            dim=2,
            grad_phi=grad_phi,
            grad_theta=grad_theta,
            hess_theta_theta=hess_theta_theta,
            theta_domain=theta_domain,
            drift=drift,
            drift_jacobian=drift_jacobian,
        ),
        seeds={
            "low": np.array([0.50977446, 0.57936798]),
            "saddle": np.array([2.9290639, 3.74110397]),
            "high": np.array([5.77830988, 6.13151763]),
        },
        settings=RunSettings(n_points=1024, step_size=1e-2),
    )
