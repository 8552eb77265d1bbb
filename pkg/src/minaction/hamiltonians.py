"""Hamiltonians of large-deviation type and their derivatives.

For a diffusion ``dX = b(X) dt + sqrt(eps) sigma(X) dW`` the relevant
Hamiltonian is ``H(phi, theta) = <b(phi), theta> + 1/2 <theta, a(phi) theta>``
with ``a = sigma sigma^T``; jump processes and averaged slow-fast systems give
non-quadratic H.  The solvers only ever talk to the :class:`HamiltonianModel`
interface below: H itself, its gradients in phi and theta, and (for implicit
relaxation) the Hessian in theta.

All callbacks are vectorized over leading axes: ``phi`` and ``theta`` have
shape ``(..., dim)``, values have shape ``(...)`` and gradients ``(..., dim)``.
Missing derivative callbacks are filled in with central finite differences
(relative step 1e-6 with an absolute floor of 1e-8).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateDiffusionError, DomainViolationError

KINDS = ("additive", "multiplicative", "general")

_FD_REL_STEP = 1e-6
_FD_ABS_FLOOR = 1e-8


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------


def _fd_steps(x: np.ndarray, rel: float, floor: float) -> np.ndarray:
    return np.maximum(rel * np.abs(x), floor)


def fd_gradient(f: Callable, x: np.ndarray, *args_before, args_after=()) -> np.ndarray:
    """Central-difference gradient of f in the argument ``x``.

    ``f`` is called as ``f(*args_before, x_perturbed, *args_after)`` and must
    return values of shape ``x.shape[:-1]``.
    """
    x = np.asarray(x, dtype=float)
    h = _fd_steps(x, _FD_REL_STEP, _FD_ABS_FLOOR)
    out = np.empty_like(x)
    for j in range(x.shape[-1]):
        xp = x.copy()
        xm = x.copy()
        xp[..., j] += h[..., j]
        xm[..., j] -= h[..., j]
        fp = f(*args_before, xp, *args_after)
        fm = f(*args_before, xm, *args_after)
        out[..., j] = (fp - fm) / (2.0 * h[..., j])
    return out


def fd_jacobian(
    f: Callable,
    x: np.ndarray,
    rel_step: float = _FD_REL_STEP,
    abs_floor: float = _FD_ABS_FLOOR,
) -> np.ndarray:
    """Central-difference Jacobian J[..., i, j] = d f_i / d x_j."""
    x = np.asarray(x, dtype=float)
    h = _fd_steps(x, rel_step, abs_floor)
    n = x.shape[-1]
    out = np.empty(x.shape[:-1] + (n, n))
    for j in range(n):
        xp = x.copy()
        xm = x.copy()
        xp[..., j] += h[..., j]
        xm[..., j] -= h[..., j]
        out[..., :, j] = (f(xp) - f(xm)) / (2.0 * h[..., j])[..., None]
    return out


# ---------------------------------------------------------------------------
# model container
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HamiltonianModel:
    """Hamiltonian with first derivatives and optional structure.

    ``kind`` records how the model was built: closed-form inner solves exist
    for ``"additive"`` (a = Id) and ``"multiplicative"`` (state-dependent SPD
    a); anything else is ``"general"`` and handled by Newton iteration.
    """

    dim: int
    kind: str
    eval_H: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_phi: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_theta: Callable[[np.ndarray, np.ndarray], np.ndarray]
    hess_theta_theta: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    hess_theta_phi: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    theta_domain: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    state_domain: Optional[Callable[[np.ndarray], np.ndarray]] = None
    drift: Optional[Callable[[np.ndarray], np.ndarray]] = None
    drift_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    diffusion: Optional[Callable[[np.ndarray], np.ndarray]] = None
    # weight of the discrete inner product (dx for discretized fields, else 1);
    # only actions and densities are scaled by it, the minimizer is unaffected
    inner_weight: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    def check_state(self, phi: np.ndarray) -> None:
        """Raise DomainViolationError if any state is inadmissible."""
        if self.state_domain is not None:
            ok = np.asarray(self.state_domain(phi))
            if not np.all(ok):
                bad = np.argwhere(~ok)
                idx = tuple(bad[0]) if bad.size else ()
                raise DomainViolationError(np.asarray(phi)[idx])

    def check_theta(self, phi: np.ndarray, theta: np.ndarray) -> None:
        """Raise DomainViolationError if any (phi, theta) pair is inadmissible."""
        self.check_state(phi)
        if self.theta_domain is not None:
            ok = np.asarray(self.theta_domain(phi, theta))
            if not np.all(ok):
                bad = np.argwhere(~ok)
                idx = tuple(bad[0]) if bad.size else ()
                raise DomainViolationError(np.asarray(phi)[idx], np.asarray(theta)[idx])


def _dot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...i->...", u, v)


def _jac_T_vec(jac: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...ji,...j->...i", jac, v)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def make_additive(
    drift: Callable,
    dim: int,
    drift_jacobian: Callable | None = None,
    drift_jacobian_transpose_apply: Callable | None = None,
    state_domain: Callable | None = None,
    inner_weight: float = 1.0,
) -> HamiltonianModel:
    """H(phi, theta) = <b(phi), theta> + 1/2 |theta|^2.

    ``drift_jacobian_transpose_apply(phi, v) -> (Db)^T v`` may be supplied for
    matrix-free models (discretized PDEs); otherwise the Jacobian callback or a
    finite-difference fallback is used.
    """
    jac = drift_jacobian if drift_jacobian is not None else (lambda phi: fd_jacobian(drift, phi))

    if drift_jacobian_transpose_apply is not None:
        jtv = drift_jacobian_transpose_apply
    else:
        jtv = lambda phi, v: _jac_T_vec(jac(phi), v)  # noqa: E731

    def eval_H(phi, theta):
        return _dot(drift(phi), theta) + 0.5 * _dot(theta, theta)

    def grad_phi(phi, theta):
        return jtv(phi, theta)

    def grad_theta(phi, theta):
        return drift(phi) + theta

    def hess_theta_theta(phi, theta):
        phi = np.asarray(phi, dtype=float)
        eye = np.eye(dim)
        return np.broadcast_to(eye, phi.shape[:-1] + (dim, dim)).copy()

    def hess_theta_phi(phi, theta):
        return jac(phi)

    return HamiltonianModel(
        dim=dim,
        kind="additive",
        eval_H=eval_H,
        grad_phi=grad_phi,
        grad_theta=grad_theta,
        hess_theta_theta=hess_theta_theta,
        hess_theta_phi=hess_theta_phi,
        state_domain=state_domain,
        drift=drift,
        drift_jacobian=jac,
        inner_weight=inner_weight,
    )


def spd_check(a: np.ndarray, phi: np.ndarray) -> None:
    """Verify that every diffusion matrix in the batch is symmetric PD."""
    a = np.asarray(a, dtype=float)
    sym_err = np.abs(a - np.swapaxes(a, -1, -2)).max()
    if sym_err > 1e-10 * max(1.0, np.abs(a).max()):
        raise DegenerateDiffusionError(
            np.asarray(phi).reshape(-1, a.shape[-1])[0], "not symmetric"
        )
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        flat_a = a.reshape(-1, a.shape[-2], a.shape[-1])
        flat_phi = np.broadcast_to(phi, a.shape[:-2] + (a.shape[-1],)).reshape(
            -1, a.shape[-1]
        )
        for k in range(flat_a.shape[0]):
            if np.linalg.eigvalsh(flat_a[k]).min() <= 0.0:
                raise DegenerateDiffusionError(
                    flat_phi[k], "non-positive eigenvalue"
                ) from None
        raise


def make_multiplicative(
    drift: Callable,
    diffusion: Callable,
    dim: int,
    drift_jacobian: Callable | None = None,
    contraction: Callable | None = None,
    state_domain: Callable | None = None,
    inner_weight: float = 1.0,
) -> HamiltonianModel:
    """H(phi, theta) = <b(phi), theta> + 1/2 <theta, a(phi) theta>.

    ``diffusion`` must return SPD matrices (checked at every evaluation site;
    degenerate noise is rejected rather than regularized).  ``contraction`` is
    the state-gradient of the quadratic form, ``c_i = 1/2 <theta, (d a/d
    phi_i) theta>``; omitted, it is recovered by differencing H.
    """
    jac = drift_jacobian if drift_jacobian is not None else (lambda phi: fd_jacobian(drift, phi))

    def checked_a(phi):
        a = np.asarray(diffusion(phi), dtype=float)
        spd_check(a, phi)
        return a

    def eval_H(phi, theta):
        a = checked_a(phi)
        return _dot(drift(phi), theta) + 0.5 * _dot(theta, np.einsum("...ij,...j->...i", a, theta))

    def quad_only(phi, theta):
        a = checked_a(phi)
        return 0.5 * _dot(theta, np.einsum("...ij,...j->...i", a, theta))

    if contraction is None:
        contraction_fn = lambda phi, theta: fd_gradient(  # noqa: E731
            lambda p: quad_only(p, theta), phi
        )
    else:
        contraction_fn = contraction

    def grad_phi(phi, theta):
        return _jac_T_vec(jac(phi), theta) + contraction_fn(phi, theta)

    def grad_theta(phi, theta):
        a = checked_a(phi)
        return drift(phi) + np.einsum("...ij,...j->...i", a, theta)

    def hess_theta_theta(phi, theta):
        return checked_a(phi)

    return HamiltonianModel(
        dim=dim,
        kind="multiplicative",
        eval_H=eval_H,
        grad_phi=grad_phi,
        grad_theta=grad_theta,
        hess_theta_theta=hess_theta_theta,
        state_domain=state_domain,
        drift=drift,
        drift_jacobian=jac,
        diffusion=checked_a,
        inner_weight=inner_weight,
    )


def make_general(
    eval_H: Callable,
    dim: int,
    grad_phi: Callable | None = None,
    grad_theta: Callable | None = None,
    hess_theta_theta: Callable | None = None,
    theta_domain: Callable | None = None,
    state_domain: Callable | None = None,
    drift: Callable | None = None,
    drift_jacobian: Callable | None = None,
    inner_weight: float = 1.0,
) -> HamiltonianModel:
    """Wrap an arbitrary Hamiltonian, filling missing derivatives by FD.

    Evaluations outside the declared (phi, theta) domain raise
    :class:`DomainViolationError` carrying the offending point, so root
    finders can backtrack instead of silently producing NaNs.
    """

    def guard(phi, theta):
        if state_domain is not None:
            ok = np.asarray(state_domain(phi))
            if not np.all(ok):
                bad = np.argwhere(~ok)
                idx = tuple(bad[0]) if bad.size else ()
                raise DomainViolationError(np.asarray(phi)[idx])
        if theta_domain is not None:
            ok = np.asarray(theta_domain(phi, theta))
            if not np.all(ok):
                bad = np.argwhere(~ok)
                idx = tuple(bad[0]) if bad.size else ()
                raise DomainViolationError(np.asarray(phi)[idx], np.asarray(theta)[idx])

    def H(phi, theta):
        guard(phi, theta)
        return eval_H(phi, theta)

    gp = grad_phi if grad_phi is not None else (
        lambda phi, theta: fd_gradient(lambda p: H(p, theta), phi)
    )
    gt = grad_theta if grad_theta is not None else (
        lambda phi, theta: fd_gradient(lambda t: H(phi, t), theta)
    )
    if hess_theta_theta is not None:
        htt = hess_theta_theta
    else:
        # differencing an FD gradient needs a much coarser step than
        # differencing an analytic one, or rounding noise dominates
        if grad_theta is not None:
            hess_rel, hess_floor = _FD_REL_STEP, _FD_ABS_FLOOR
        else:
            hess_rel, hess_floor = 1e-3, 5e-3
        htt = lambda phi, theta: fd_jacobian(  # noqa: E731
            lambda t: gt(phi, t), theta, rel_step=hess_rel, abs_floor=hess_floor
        )
    if drift is None:
        drift = lambda phi: gt(phi, np.zeros_like(np.asarray(phi, dtype=float)))  # noqa: E731

    def guarded_gp(phi, theta):
        guard(phi, theta)
        return gp(phi, theta)

    def guarded_gt(phi, theta):
        guard(phi, theta)
        return gt(phi, theta)

    return HamiltonianModel(
        dim=dim,
        kind="general",
        eval_H=H,
        grad_phi=guarded_gp,
        grad_theta=guarded_gt,
        hess_theta_theta=htt,
        theta_domain=theta_domain,
        state_domain=state_domain,
        drift=drift,
        drift_jacobian=drift_jacobian,
        inner_weight=inner_weight,
    )


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------


@dataclass
class GradientCheckReport:
    n_samples: int
    tolerance: float
    max_rel_error_phi: float
    max_rel_error_theta: float
    worst_kind: str = ""
    worst_sample: int = -1
    worst_component: int = -1
    passed: bool = False
    notes: list = field(default_factory=list)

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (
            f"gradient check [{status}]: {self.n_samples} samples, "
            f"max rel err d/dphi {self.max_rel_error_phi:.3e}, "
            f"d/dtheta {self.max_rel_error_theta:.3e} (tol {self.tolerance:g}); "
            f"worst: {self.worst_kind} gradient, sample {self.worst_sample}, "
            f"component {self.worst_component}"
        )


def check_gradients(
    model: HamiltonianModel,
    phi_samples: np.ndarray,
    theta_samples: np.ndarray,
    tolerance: float = 1e-5,
) -> GradientCheckReport:
    """Compare analytic gradients against central differences of eval_H.

    Relative error is measured per component against
    ``max(|analytic|, |numeric|, 1)`` so entries that vanish do not produce
    spurious failures.
    """
    phi = np.atleast_2d(np.asarray(phi_samples, dtype=float))
    theta = np.atleast_2d(np.asarray(theta_samples, dtype=float))
    if phi.shape != theta.shape:
        raise ValueError("phi_samples and theta_samples must have matching shapes")

    ana_p = model.grad_phi(phi, theta)
    ana_t = model.grad_theta(phi, theta)
    num_p = fd_gradient(lambda p: model.eval_H(p, theta), phi)
    num_t = fd_gradient(lambda t: model.eval_H(phi, t), theta)

    def rel(a, b):
        return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)

    err_p = rel(ana_p, num_p)
    err_t = rel(ana_t, num_t)
    report = GradientCheckReport(
        n_samples=phi.shape[0],
        tolerance=float(tolerance),
        max_rel_error_phi=float(err_p.max()),
        max_rel_error_theta=float(err_t.max()),
    )
    if err_p.max() >= err_t.max():
        report.worst_kind = "phi"
        flat = np.argmax(err_p)
        report.worst_sample, report.worst_component = np.unravel_index(flat, err_p.shape)
    else:
        report.worst_kind = "theta"
        flat = np.argmax(err_t)
        report.worst_sample, report.worst_component = np.unravel_index(flat, err_t.shape)
    report.worst_sample = int(report.worst_sample)
    report.worst_component = int(report.worst_component)
    report.passed = bool(max(report.max_rel_error_phi, report.max_rel_error_theta) <= tolerance)
    return report


__all__ = [
    "HamiltonianModel",
    "GradientCheckReport",
    "make_additive",
    "make_multiplicative",
    "make_general",
    "check_gradients",
    "fd_gradient",
    "fd_jacobian",
    "spd_check",
]
