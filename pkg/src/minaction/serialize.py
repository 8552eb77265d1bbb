"""Deterministic run configurations and artifact formats.

A run is configured by a single JSON document; command-line assignments
override file fields.  Artifacts are written with shortest round-trip float
formatting, ``\n`` line endings, and sorted JSON keys, so re-running an
identical configuration reproduces byte-identical files.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError

__all__ = [
    "CONFIG_DIR_ENV",
    "DIRECTIONS",
    "EMIT_FLAGS",
    "RunSpec",
    "apply_assignments",
    "format_float",
    "load_config",
    "parse_assignment",
    "read_csv",
    "read_json",
    "resolve_config_path",
    "to_json_text",
    "write_csv",
    "write_json",
]

DIRECTIONS = ("forward", "backward", "both")
EMIT_FLAGS = (
    "path",
    "theta",
    "action_density",
    "string",
    "summary",
    "spacetime",
    "flowfield",
)
#: Environment variable naming a directory searched for relative config paths.
CONFIG_DIR_ENV = "MINACTION_CONFIG_DIR"

_ALLOWED_TOP = {
    "model",
    "params",
    "endpoints",
    "direction",
    "solver",
    "inner",
    "grid",
    "outputs",
    "emit",
}


# ---------------------------------------------------------------------------
# low-level writers/readers
# ---------------------------------------------------------------------------


def format_float(value) -> str:
    """Shortest decimal string that round-trips to the same binary float."""
    return repr(float(value))


def write_csv(path, header, rows) -> None:
    """Write a numeric table with a header row and round-trip floats."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None] if len(header) == 1 else rows[None, :]
    if rows.size and rows.shape[1] != len(header):
        raise ValueError(
            f"row width {rows.shape[1]} does not match header width {len(header)}"
        )
    lines = [",".join(header)]
    lines.extend(",".join(format_float(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Read a table written by :func:`write_csv`: (header, 2-D float array)."""
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").split("\n") if ln]
    if not lines:
        raise ConfigError(f"empty CSV file: {path}")
    header = lines[0].split(",")
    body = [[float(tok) for tok in ln.split(",")] for ln in lines[1:]]
    data = np.asarray(body, dtype=float)
    if data.size == 0:
        data = np.empty((0, len(header)))
    return header, data


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def to_json_text(obj) -> str:
    """Canonical JSON rendering: sorted keys, two-space indent."""
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default)


def write_json(path, obj) -> None:
    """Write JSON with sorted keys and a trailing newline (byte-stable)."""
    Path(path).write_text(to_json_text(obj) + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _as_str_mapping(doc: Mapping, key: str) -> dict:
    value = doc.get(key, {})
    _require(isinstance(value, Mapping), f"{key!r} must be an object")
    _require(
        all(isinstance(k, str) for k in value),
        f"{key!r} keys must be strings",
    )
    return dict(value)


def _parse_endpoint(raw, which: str):
    if isinstance(raw, str):
        _require(bool(raw), f"endpoint {which} must be a non-empty seed name")
        return raw
    _require(
        isinstance(raw, (list, tuple)) and len(raw) >= 1,
        f"endpoint {which} must be a seed name or a numeric vector",
    )
    try:
        return tuple(float(v) for v in raw)
    except (TypeError, ValueError):
        raise ConfigError(f"endpoint {which} vector must contain only numbers")


@dataclass(frozen=True)
class RunSpec:
    """Validated description of one minimization run.

    ``endpoints`` entries are seed names or explicit state vectors; ``solver``
    and ``inner`` hold keyword overrides for the outer descent and for the
    pointwise momentum solve; ``n_s``/``n_x`` override the model's reference
    grid.  ``emit`` toggles which artifact files a run writes.
    """

    model: str
    endpoints: tuple
    params: Mapping[str, Any] = field(default_factory=dict)
    direction: str = "forward"
    solver: Mapping[str, Any] = field(default_factory=dict)
    inner: Mapping[str, Any] = field(default_factory=dict)
    n_s: int | None = None
    n_x: int | None = None
    outputs: str = "out"
    emit: Mapping[str, bool] = field(default_factory=dict)

    @staticmethod
    def from_dict(doc: Mapping) -> "RunSpec":
        _require(isinstance(doc, Mapping), "config must be a JSON object")
        unknown = sorted(set(doc) - _ALLOWED_TOP)
        _require(not unknown, f"unknown config keys: {unknown}")
        _require("model" in doc, "config must name a 'model'")
        model = doc["model"]
        _require(isinstance(model, str) and bool(model), "'model' must be a string")

        _require("endpoints" in doc, "config must list two 'endpoints'")
        raw_ep = doc["endpoints"]
        _require(
            isinstance(raw_ep, (list, tuple)) and len(raw_ep) == 2,
            "'endpoints' must be a pair",
        )
        endpoints = (
            _parse_endpoint(raw_ep[0], "0"),
            _parse_endpoint(raw_ep[1], "1"),
        )

        direction = doc.get("direction", "forward")
        _require(
            direction in DIRECTIONS,
            f"'direction' must be one of {DIRECTIONS}, got {direction!r}",
        )

        params = _as_str_mapping(doc, "params")
        solver = _as_str_mapping(doc, "solver")
        inner = _as_str_mapping(doc, "inner")

        grid = _as_str_mapping(doc, "grid")
        unknown_grid = sorted(set(grid) - {"n_s", "n_x"})
        _require(not unknown_grid, f"unknown grid keys: {unknown_grid}")
        n_s = grid.get("n_s")
        n_x = grid.get("n_x")
        if n_s is not None:
            _require(
                isinstance(n_s, int) and not isinstance(n_s, bool) and n_s >= 3,
                "grid.n_s must be an integer >= 3",
            )
        if n_x is not None:
            _require(
                isinstance(n_x, int) and not isinstance(n_x, bool) and n_x >= 8,
                "grid.n_x must be an integer >= 8",
            )

        outputs = doc.get("outputs", "out")
        _require(
            isinstance(outputs, str) and bool(outputs),
            "'outputs' must be a directory path",
        )

        emit = _as_str_mapping(doc, "emit")
        unknown_emit = sorted(set(emit) - set(EMIT_FLAGS))
        _require(not unknown_emit, f"unknown emit flags: {unknown_emit}")
        _require(
            all(isinstance(v, bool) for v in emit.values()),
            "emit flags must be booleans",
        )

        return RunSpec(
            model=model,
            endpoints=endpoints,
            params=params,
            direction=direction,
            solver=solver,
            inner=inner,
            n_s=n_s,
            n_x=n_x,
            outputs=outputs,
            emit=emit,
        )

    def to_dict(self) -> dict:
        grid: dict[str, int] = {}
        if self.n_s is not None:
            grid["n_s"] = self.n_s
        if self.n_x is not None:
            grid["n_x"] = self.n_x
        return {
            "model": self.model,
            "endpoints": [
                ep if isinstance(ep, str) else list(ep) for ep in self.endpoints
            ],
            "params": dict(self.params),
            "direction": self.direction,
            "solver": dict(self.solver),
            "inner": dict(self.inner),
            "grid": grid,
            "outputs": self.outputs,
            "emit": dict(self.emit),
        }


def config_echo(resolved: Mapping) -> list:
    """Flatten a resolved config into sorted ``dotted.key=value`` lines."""
    flat: dict[str, str] = {}

    def visit(prefix: str, value):
        if isinstance(value, Mapping):
            for k in value:
                visit(f"{prefix}.{k}" if prefix else str(k), value[k])
        elif isinstance(value, (list, tuple)):
            flat[prefix] = json.dumps(list(value), default=_json_default)
        elif isinstance(value, str):
            flat[prefix] = value
        else:
            flat[prefix] = json.dumps(value, default=_json_default)

    visit("", resolved)
    return [f"{k}={flat[k]}" for k in sorted(flat)]


# ---------------------------------------------------------------------------
# config file loading and overrides
# ---------------------------------------------------------------------------


def resolve_config_path(arg: str) -> Path:
    """Resolve a config argument, consulting the default-directory variable."""
    direct = Path(arg)
    if direct.exists():
        return direct
    env_dir = os.environ.get(CONFIG_DIR_ENV)
    if env_dir and not direct.is_absolute():
        candidate = Path(env_dir) / arg
        if candidate.exists():
            return candidate
        raise ConfigError(
            f"config file not found: {arg} (also tried {candidate})"
        )
    raise ConfigError(f"config file not found: {arg}")


def load_config(arg: str) -> dict:
    path = resolve_config_path(arg)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    _require(isinstance(doc, dict), f"config file {path} must hold a JSON object")
    return doc


def parse_assignment(text: str) -> tuple[list[str], Any]:
    """Parse one ``dotted.key=value`` override; values parse as JSON if they can."""
    key, sep, raw = text.partition("=")
    _require(bool(sep), f"override {text!r} must look like key=value")
    parts = [p for p in key.split(".") if p]
    _require(bool(parts), f"override {text!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return parts, value


def apply_assignments(doc: Mapping, assignments: list[str]) -> dict:
    """Apply ``key=value`` overrides to a config document (returns a copy)."""
    out = json.loads(json.dumps(doc, default=_json_default))
    for text in assignments:
        parts, value = parse_assignment(text)
        node = out
        for part in parts[:-1]:
            nxt = node.get(part)
            if not isinstance(nxt, dict):
                nxt = {}
                node[part] = nxt
            node = nxt
        node[parts[-1]] = value
    return out
