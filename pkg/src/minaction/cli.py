"""Command-line interface: runs, parameter sweeps, and diagnostics.

Subcommands map one-to-one onto library operations: ``run`` minimizes the
action for one configuration, ``sweep`` repeats a run over parameter values,
``models`` lists the registry, ``fixed-points`` polishes a model's seeds,
``string`` relaxes a path onto the heteroclinic connection, and
``check-gradients`` compares analytic derivatives against finite differences.

Exit codes: 0 success, 2 configuration error, 3 solver failure.  Solver
failures inside a run leave a ``diagnostics.json`` in the output directory.
All artifacts are byte-deterministic for identical configurations.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

import numpy as np

from . import serialize
from .descent import (
    DescentConfig,
    detect_saddle_index,
    minimize_action,
    physical_time_profile,
)
from .errors import ConfigError, RegistryError, SolverError
from .hamiltonians import check_gradients
from .inner import NewtonConfig
from .models import (
    available_models,
    find_fixed_points,
    instantiate,
    sample_admissible,
)
from .serialize import RunSpec
from .spde import make_etd_stepper
from .string_method import string_relax

__all__ = ["main"]

_FLOWFIELD_RES = 40
_FLOWFIELD_MARGIN = 0.15


# ---------------------------------------------------------------------------
# spec resolution
# ---------------------------------------------------------------------------


class _Resolved:
    """A RunSpec bound to a concrete model instance and solver settings."""

    def __init__(self, spec: RunSpec):
        params = dict(spec.params)
        if spec.n_x is not None:
            params["n_space"] = spec.n_x
        try:
            self.instance = instantiate(spec.model, **params)
        except RegistryError as exc:
            raise ConfigError(str(exc))
        self.spec = spec
        self.n_s = spec.n_s if spec.n_s is not None else self.instance.settings.n_points
        self.endpoints = tuple(
            self._resolve_endpoint(ep, i) for i, ep in enumerate(spec.endpoints)
        )

        solver = dict(spec.solver)
        default_scheme = "etd" if self.instance.build_split is not None else "semi-implicit"
        self.scheme = solver.pop("scheme", default_scheme)
        solver.setdefault("step_size", self.instance.settings.step_size)
        # The trust region only ever rejects action-increasing trial steps, so
        # it is a safe default; stiff zoo members require it at their
        # reference step sizes.
        solver.setdefault("adaptive_step", True)
        try:
            newton = NewtonConfig(**dict(spec.inner))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid inner-solver settings: {exc}")
        try:
            if self.scheme == "etd":
                if self.instance.build_split is None:
                    raise ConfigError(
                        f"model {spec.model!r} has no stiff/soft operator split; "
                        "the 'etd' scheme is unavailable"
                    )
                self.stepper = make_etd_stepper(self.instance.build_split)
                self.config = DescentConfig(newton=newton, **solver)
            else:
                self.stepper = None
                self.config = DescentConfig(scheme=self.scheme, newton=newton, **solver)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid solver settings: {exc}")

        is_field = self.instance.settings.n_space is not None
        emit = {
            "path": True,
            "theta": True,
            "action_density": True,
            "summary": True,
            "spacetime": is_field,
            "string": False,
            "flowfield": False,
        }
        emit.update(spec.emit)
        self.emit = emit

    def _resolve_endpoint(self, ep, index: int) -> np.ndarray:
        if isinstance(ep, str):
            if ep not in self.instance.seeds:
                raise ConfigError(
                    f"unknown seed {ep!r} for model {self.spec.model!r}; "
                    f"available: {sorted(self.instance.seeds)}"
                )
            return np.asarray(self.instance.seeds[ep], dtype=float)
        vec = np.asarray(ep, dtype=float)
        if vec.shape != (self.instance.dim,):
            raise ConfigError(
                f"endpoint {index} has dimension {vec.shape}, "
                f"model {self.spec.model!r} needs ({self.instance.dim},)"
            )
        return vec

    def echo(self, direction: str) -> list:
        resolved = {
            "model": self.spec.model,
            "params": dict(self.instance.params),
            "endpoints": {
                "0": list(self.endpoints[0]),
                "1": list(self.endpoints[1]),
            },
            "direction": direction,
            "solver": {
                "scheme": self.scheme,
                "step_size": self.config.step_size,
                "max_iterations": self.config.max_iterations,
                "convergence_tol": self.config.convergence_tol,
                "reparam_every": self.config.reparam_every,
                "adaptive_step": self.config.adaptive_step,
                "max_displacement": self.config.max_displacement,
            },
            "inner": {
                "max_iterations": self.config.newton.max_iterations,
                "tolerance": self.config.newton.tolerance,
                "damping_factor": self.config.newton.damping_factor,
                "max_damping_steps": self.config.newton.max_damping_steps,
                "init_strategy": self.config.newton.init_strategy,
                "mu_metric": self.config.newton.mu_metric,
            },
            "grid": {
                "n_s": self.n_s,
                **(
                    {"n_x": self.instance.settings.n_space}
                    if self.instance.settings.n_space is not None
                    else {}
                ),
            },
            "outputs": self.spec.outputs,
            "emit": self.emit,
        }
        return serialize.config_echo(resolved)


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------


def _state_header(prefix: str, dim: int) -> list[str]:
    return ["s"] + [f"{prefix}_{i}" for i in range(1, dim + 1)]


def _write_table(path: Path, prefix: str, s: np.ndarray, states: np.ndarray) -> None:
    serialize.write_csv(
        path, _state_header(prefix, states.shape[1]), np.column_stack([s, states])
    )


def _write_flowfield(path: Path, instance, states: np.ndarray) -> None:
    lo = states.min(axis=0)
    hi = states.max(axis=0)
    pad = _FLOWFIELD_MARGIN * np.maximum(hi - lo, 1e-3)
    lo, hi = lo - pad, hi + pad
    xs = np.linspace(lo[0], hi[0], _FLOWFIELD_RES)
    ys = np.linspace(lo[1], hi[1], _FLOWFIELD_RES)
    gx, gy = np.meshgrid(xs, ys)
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    drift = np.asarray(instance.hamiltonian.drift(grid), dtype=float)
    serialize.write_csv(
        path, ["x", "y", "bx", "by"], np.column_stack([grid, drift])
    )


def _run_single(resolved: _Resolved, direction: str, outdir: Path) -> int:
    """Execute one direction of a run; returns the process exit code."""
    instance = resolved.instance
    model = instance.hamiltonian
    a, b = resolved.endpoints
    if direction == "backward":
        a, b = b, a
    outdir.mkdir(parents=True, exist_ok=True)
    echo = resolved.echo(direction)

    try:
        initial = instance.initial_path(a, b, resolved.n_s)
        result = minimize_action(
            model, initial, resolved.config, stepper=resolved.stepper
        )
        string_result = None
        if resolved.emit["string"]:
            split = (
                instance.build_split(resolved.config.step_size)
                if instance.build_split is not None
                else None
            )
            string_result = string_relax(
                instance.initial_path(a, b, resolved.n_s),
                model.drift,
                step_size=resolved.config.step_size,
                max_iterations=resolved.config.max_iterations,
                tolerance=resolved.config.convergence_tol,
                split=split,
            )
    except SolverError as exc:
        serialize.write_json(
            outdir / "diagnostics.json",
            {
                "error": type(exc).__name__,
                "message": str(exc),
                "model": instance.name,
                "direction": direction,
                "config": echo,
            },
        )
        print(f"solver failure ({direction}): {exc}", file=sys.stderr)
        return 3

    n = len(result.path.states)
    s = np.linspace(0.0, 1.0, n)
    if resolved.emit["path"]:
        _write_table(outdir / "path.csv", "phi", s, result.path.states)
    if resolved.emit["theta"]:
        _write_table(outdir / "theta.csv", "theta", s, result.inner.theta)
    if resolved.emit["action_density"]:
        serialize.write_csv(
            outdir / "action_density.csv",
            ["s", "action_density"],
            np.column_stack([s, result.action_density]),
        )
    if resolved.emit["spacetime"]:
        _write_table(outdir / "spacetime.csv", "x", s, result.path.states)
    if resolved.emit["string"] and string_result is not None:
        _write_table(
            outdir / "string.csv", "phi", s, string_result.path.states
        )
    if resolved.emit["flowfield"] and instance.dim == 2:
        _write_flowfield(outdir / "flowfield.csv", instance, result.path.states)

    if resolved.emit["summary"]:
        align = result.inner.residual_align
        _, total_time, divergent = physical_time_profile(result)
        summary = {
            "model": instance.name,
            "params": dict(instance.params),
            "direction": direction,
            "action": result.action,
            "iterations": result.iterations_used,
            "converged": result.converged,
            "residuals": {
                "hamiltonian_max": float(np.abs(result.inner.residual_H).max()),
                "alignment_max": float(np.abs(align).max()),
            },
            "physical_time": total_time,
            "T_flagged": bool(divergent[0] or divergent[1]),
            "saddle_index": int(detect_saddle_index(model, result.path)),
            "n_s": resolved.n_s,
            "config": echo,
        }
        if string_result is not None:
            summary["string_converged"] = string_result.converged
        serialize.write_json(outdir / "summary.json", summary)
    return 0


def run_spec(spec: RunSpec) -> int:
    resolved = _Resolved(spec)
    base = Path(spec.outputs)
    if spec.direction == "both":
        rc = 0
        for direction in ("forward", "backward"):
            rc = max(rc, _run_single(resolved, direction, base / direction))
        return rc
    return _run_single(resolved, spec.direction, base)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _load_spec(args) -> RunSpec:
    doc = serialize.load_config(args.config)
    doc = serialize.apply_assignments(doc, args.set or [])
    if getattr(args, "out", None):
        doc["outputs"] = args.out
    return RunSpec.from_dict(doc)


def _cmd_run(args) -> int:
    return run_spec(_load_spec(args))


def _cmd_sweep(args) -> int:
    doc = serialize.load_config(args.config)
    doc = serialize.apply_assignments(doc, args.set or [])
    if args.out:
        doc["outputs"] = args.out
    base_spec = RunSpec.from_dict(doc)  # validates the shared part
    base = Path(base_spec.outputs)
    base.mkdir(parents=True, exist_ok=True)

    tokens = [tok for tok in args.values.split(",") if tok != ""]
    values = []
    for tok in tokens:
        try:
            value = float(tok)
        except ValueError:
            raise ConfigError(f"sweep value {tok!r} is not numeric")
        values.append(value)

    leaf = args.param.split(".")[-1]
    rows = []
    report = []
    for value in values:
        run_dir = base / f"{leaf}={serialize.format_float(value)}"
        subdoc = serialize.apply_assignments(
            doc,
            [
                f"{args.param}={serialize.format_float(value)}",
                f"outputs={run_dir}",
            ],
        )
        entry = {"value": value, "outputs": str(run_dir)}
        try:
            spec = RunSpec.from_dict(subdoc)
            code = run_spec(spec)
        except SolverError as exc:
            entry["status"] = "config-error"
            entry["message"] = str(exc)
            report.append(entry)
            continue
        if code == 0:
            summary_path = run_dir / "summary.json"
            if spec.direction == "both":
                summary_path = run_dir / "forward" / "summary.json"
            summary = serialize.read_json(summary_path)
            entry["status"] = "ok"
            entry["action"] = summary["action"]
            rows.append([value, summary["action"]])
        else:
            entry["status"] = "solver-failure"
        report.append(entry)

    serialize.write_csv(
        base / "sweep.csv",
        [args.param, "action"],
        np.asarray(rows, dtype=float).reshape(len(rows), 2),
    )
    serialize.write_json(
        base / "sweep_report.json", {"param": args.param, "runs": report}
    )
    return 0


def _cmd_models(args) -> int:
    entries = []
    for name in available_models():
        inst = instantiate(name)
        settings = {
            "n_s": inst.settings.n_points,
            "step_size": inst.settings.step_size,
        }
        if inst.settings.n_space is not None:
            settings["n_x"] = inst.settings.n_space
        entries.append(
            {
                "name": name,
                "dim": inst.dim,
                "params": dict(inst.params),
                "settings": settings,
                "seeds": sorted(inst.seeds),
                "description": inst.description,
            }
        )
    if args.json:
        print(serialize.to_json_text(entries))
        return 0
    widths = (16, 5, 34, 26)
    header = ("name", "dim", "params", "settings")
    print(
        f"{header[0]:<{widths[0]}} {header[1]:>{widths[1]}} "
        f"{header[2]:<{widths[2]}} {header[3]:<{widths[3]}}"
    )
    for e in entries:
        params = ", ".join(f"{k}={v}" for k, v in sorted(e["params"].items()))
        settings = ", ".join(f"{k}={v}" for k, v in sorted(e["settings"].items()))
        print(
            f"{e['name']:<{widths[0]}} {e['dim']:>{widths[1]}} "
            f"{params:<{widths[2]}} {settings:<{widths[3]}}"
        )
    return 0


def _cmd_fixed_points(args) -> int:
    inst = instantiate(args.model)
    points = find_fixed_points(inst)
    if args.json:
        print(
            serialize.to_json_text(
                [
                    {
                        "name": p.name,
                        "state": p.state.tolist(),
                        "stability": p.stability,
                        "n_unstable": p.n_unstable,
                        "residual": p.residual,
                        "converged": p.converged,
                        "eigenvalues_real": np.real(p.eigenvalues).tolist(),
                        "eigenvalues_imag": np.imag(p.eigenvalues).tolist(),
                    }
                    for p in points
                ]
            )
        )
        return 0
    print(f"{'name':<12} {'stability':<10} {'unstable':>8} {'residual':>10}  state")
    for p in points:
        state = "[" + ", ".join(f"{v:.6g}" for v in p.state) + "]"
        print(
            f"{p.name:<12} {p.stability:<10} {p.n_unstable:>8} "
            f"{p.residual:>10.2e}  {state}"
        )
    return 0


def _cmd_string(args) -> int:
    spec = _load_spec(args)
    resolved = _Resolved(spec)
    instance = resolved.instance
    a, b = resolved.endpoints
    if spec.direction == "backward":
        a, b = b, a
    outdir = Path(spec.outputs)
    outdir.mkdir(parents=True, exist_ok=True)
    split = (
        instance.build_split(resolved.config.step_size)
        if instance.build_split is not None
        else None
    )
    try:
        result = string_relax(
            instance.initial_path(a, b, resolved.n_s),
            instance.hamiltonian.drift,
            step_size=resolved.config.step_size,
            max_iterations=resolved.config.max_iterations,
            tolerance=resolved.config.convergence_tol,
            split=split,
        )
    except SolverError as exc:
        serialize.write_json(
            outdir / "diagnostics.json",
            {
                "error": type(exc).__name__,
                "message": str(exc),
                "model": instance.name,
                "config": resolved.echo(spec.direction),
            },
        )
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    s = np.linspace(0.0, 1.0, resolved.n_s)
    _write_table(outdir / "string.csv", "phi", s, result.path.states)
    serialize.write_json(
        outdir / "summary.json",
        {
            "model": instance.name,
            "params": dict(instance.params),
            "converged": result.converged,
            "iterations": result.iterations_used,
            "config": resolved.echo(spec.direction),
        },
    )
    return 0


def _cmd_check_gradients(args) -> int:
    inst = instantiate(args.model)
    phi, theta = sample_admissible(inst, args.samples, seed=args.seed)
    report = check_gradients(inst.hamiltonian, phi, theta, tolerance=args.tolerance)
    print(report)
    return 0 if report.passed else 3


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minaction",
        description="Most-probable transition paths of metastable stochastic systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="minimize the action for one configuration")
    run_p.add_argument("--config", required=True, help="JSON run configuration")
    run_p.add_argument("--out", help="override the output directory")
    run_p.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config field (dotted keys, JSON values)",
    )
    run_p.set_defaults(handler=_cmd_run)

    sweep_p = sub.add_parser("sweep", help="repeat a run over parameter values")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--param", required=True, help="dotted config key to vary")
    sweep_p.add_argument(
        "--values", required=True, help="comma-separated numeric values"
    )
    sweep_p.add_argument("--out", help="override the output directory")
    sweep_p.add_argument("--set", action="append", metavar="KEY=VALUE")
    sweep_p.set_defaults(handler=_cmd_sweep)

    models_p = sub.add_parser("models", help="list registered models")
    models_p.add_argument("--json", action="store_true", help="emit JSON")
    models_p.set_defaults(handler=_cmd_models)

    fp_p = sub.add_parser("fixed-points", help="polish and classify a model's seeds")
    fp_p.add_argument("--model", required=True)
    fp_p.add_argument("--json", action="store_true", help="emit JSON")
    fp_p.set_defaults(handler=_cmd_fixed_points)

    string_p = sub.add_parser(
        "string", help="relax a path onto the heteroclinic connection"
    )
    string_p.add_argument("--config", required=True)
    string_p.add_argument("--out", help="override the output directory")
    string_p.add_argument("--set", action="append", metavar="KEY=VALUE")
    string_p.set_defaults(handler=_cmd_string)

    grad_p = sub.add_parser(
        "check-gradients", help="compare analytic derivatives with finite differences"
    )
    grad_p.add_argument("--model", required=True)
    grad_p.add_argument("--samples", type=int, default=50)
    grad_p.add_argument("--seed", type=int, default=0)
    grad_p.add_argument("--tolerance", type=float, default=1e-5)
    grad_p.set_defaults(handler=_cmd_check_gradients)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, RegistryError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
