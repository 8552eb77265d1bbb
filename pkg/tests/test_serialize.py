"""Tests for run configurations and byte-stable artifact formats."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minaction.errors import ConfigError
from minaction.serialize import (
    CONFIG_DIR_ENV,
    RunSpec,
    apply_assignments,
    config_echo,
    format_float,
    load_config,
    parse_assignment,
    read_csv,
    read_json,
    resolve_config_path,
    to_json_text,
    write_csv,
    write_json,
)

finite_floats = st.floats(allow_nan=False, allow_infinity=False, width=64)


class TestFloatFormat:
    @given(finite_floats)
    @settings(max_examples=300)
    def test_round_trip_is_exact(self, x):
        assert float(format_float(x)) == x

    @given(finite_floats)
    def test_no_locale_artifacts(self, x):
        text = format_float(x)
        assert "," not in text
        assert " " not in text


class TestCsv:
    def test_round_trip(self, tmp_path):
        rows = np.array([[0.0, -1.5, 3e-17], [0.1, 2.0, np.pi]])
        f = tmp_path / "t.csv"
        write_csv(f, ["s", "a", "b"], rows)
        header, data = read_csv(f)
        assert header == ["s", "a", "b"]
        assert np.array_equal(data, rows)

    def test_newline_terminated(self, tmp_path):
        f = tmp_path / "t.csv"
        write_csv(f, ["x"], np.array([[1.0]]))
        assert f.read_bytes().endswith(b"\n")
        assert b"\r" not in f.read_bytes()

    def test_empty_table_keeps_header(self, tmp_path):
        f = tmp_path / "t.csv"
        write_csv(f, ["p", "q"], np.empty((0, 2)))
        header, data = read_csv(f)
        assert header == ["p", "q"]
        assert data.shape == (0, 2)

    def test_width_mismatch_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_csv(tmp_path / "t.csv", ["a"], np.ones((2, 3)))

    @given(
        st.lists(
            st.lists(finite_floats, min_size=3, max_size=3),
            min_size=1,
            max_size=20,
        )
    )
    @settings(max_examples=50)
    def test_round_trip_property(self, tmp_path_factory, rows):
        f = tmp_path_factory.mktemp("csv") / "t.csv"
        arr = np.asarray(rows, dtype=float)
        write_csv(f, ["a", "b", "c"], arr)
        _, data = read_csv(f)
        assert np.array_equal(data, arr)


class TestJson:
    def test_sorted_keys_and_newline(self, tmp_path):
        f = tmp_path / "t.json"
        write_json(f, {"b": 1, "a": {"z": 2, "y": np.float64(0.5)}})
        text = f.read_text()
        assert text.endswith("\n")
        assert text.index('"a"') < text.index('"b"')
        assert read_json(f) == {"b": 1, "a": {"z": 2, "y": 0.5}}

    def test_numpy_scalars_and_arrays(self, tmp_path):
        f = tmp_path / "t.json"
        write_json(
            f,
            {
                "i": np.int64(3),
                "x": np.float32(0.5),
                "flag": np.bool_(True),
                "v": np.arange(3.0),
            },
        )
        assert read_json(f) == {"i": 3, "x": 0.5, "flag": True, "v": [0.0, 1.0, 2.0]}

    def test_identical_objects_give_identical_bytes(self):
        obj = {"m": "x", "params": {"a": 1.0, "b": 2}}
        assert to_json_text(obj) == to_json_text(json.loads(json.dumps(obj)))


class TestRunSpec:
    def minimal(self):
        return {"model": "maier-stein", "endpoints": ["minus", "plus"]}

    def test_minimal_spec_parses_with_defaults(self):
        spec = RunSpec.from_dict(self.minimal())
        assert spec.model == "maier-stein"
        assert spec.direction == "forward"
        assert spec.n_s is None
        assert spec.outputs == "out"

    def test_explicit_vector_endpoint(self):
        doc = self.minimal()
        doc["endpoints"] = [[-1.0, 0.0], "plus"]
        spec = RunSpec.from_dict(doc)
        assert spec.endpoints[0] == (-1.0, 0.0)
        assert spec.endpoints[1] == "plus"

    def test_round_trips_through_to_dict(self):
        doc = self.minimal()
        doc.update(
            direction="both",
            grid={"n_s": 64, "n_x": 32},
            params={"beta": 2.0},
            emit={"flowfield": True},
        )
        spec = RunSpec.from_dict(doc)
        again = RunSpec.from_dict(spec.to_dict())
        assert again == spec

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda d: d.pop("model"),
            lambda d: d.pop("endpoints"),
            lambda d: d.update(endpoints=["only-one"]),
            lambda d: d.update(endpoints=["a", "b", "c"]),
            lambda d: d.update(direction="sideways"),
            lambda d: d.update(grid={"n_s": 2}),
            lambda d: d.update(grid={"n_x": 4}),
            lambda d: d.update(grid={"bogus": 1}),
            lambda d: d.update(emit={"bogus": True}),
            lambda d: d.update(emit={"path": "yes"}),
            lambda d: d.update(typo_key=1),
            lambda d: d.update(endpoints=[["a", "b"], "plus"]),
        ],
    )
    def test_malformed_documents_are_rejected(self, mutate):
        doc = self.minimal()
        mutate(doc)
        with pytest.raises(ConfigError):
            RunSpec.from_dict(doc)


class TestOverrides:
    def test_parse_assignment_json_values(self):
        assert parse_assignment("a.b=1.5") == (["a", "b"], 1.5)
        assert parse_assignment("a=true") == (["a"], True)
        assert parse_assignment("a=[1,2]") == (["a"], [1, 2])
        assert parse_assignment("a=minus") == (["a"], "minus")

    def test_parse_assignment_requires_equals(self):
        with pytest.raises(ConfigError):
            parse_assignment("novalue")

    def test_apply_creates_nested_keys_without_mutating_input(self):
        doc = {"model": "m", "solver": {"step_size": 0.1}}
        out = apply_assignments(doc, ["solver.step_size=0.2", "grid.n_s=64"])
        assert out["solver"]["step_size"] == 0.2
        assert out["grid"]["n_s"] == 64
        assert doc["solver"]["step_size"] == 0.1
        assert "grid" not in doc


class TestConfigEcho:
    def test_flat_sorted_dotted_lines(self):
        lines = config_echo(
            {"b": {"y": 2, "x": [1, 2]}, "a": "text", "c": 0.5}
        )
        assert lines == ["a=text", "b.x=[1, 2]", "b.y=2", "c=0.5"]


class TestConfigFiles:
    def test_load_checks_json(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(str(bad))

    def test_missing_file_error(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "missing.json"))

    def test_env_dir_fallback(self, tmp_path, monkeypatch):
        cfg = tmp_path / "inner.json"
        cfg.write_text("{}")
        monkeypatch.setenv(CONFIG_DIR_ENV, str(tmp_path))
        monkeypatch.chdir(tmp_path.parent)
        assert resolve_config_path("inner.json") == cfg

    def test_direct_path_wins_over_env_dir(self, tmp_path, monkeypatch):
        local = tmp_path / "a" / "c.json"
        local.parent.mkdir()
        local.write_text("{}")
        other = tmp_path / "b"
        other.mkdir()
        (other / "c.json").write_text("{}")
        monkeypatch.setenv(CONFIG_DIR_ENV, str(other))
        monkeypatch.chdir(local.parent)
        assert resolve_config_path("c.json") == local.relative_to(local.parent)
