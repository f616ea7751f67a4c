"""Tests for the adapter bridge and NDJSON wire protocol."""

import json
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mortbench.bridge import (
    AdapterProtocolError,
    AdapterSpec,
    AdapterUnavailableError,
    CapabilityError,
    TrainingError,
    WireFormatError,
    WireMessage,
    load_registry,
    start_adapter,
)

FIXTURE = str(Path(__file__).parent / "fixtures" / "misbehave.py")
CONSTANT = ["-m", "mortbench.adapters.constant"]


def spec_for(*args: str, timeout: float = 5.0, name: str = "fixture") -> AdapterSpec:
    return AdapterSpec(
        name=name, command=(sys.executable, FIXTURE, *args), timeout=timeout
    )


def constant_spec(timeout: float = 5.0) -> AdapterSpec:
    return AdapterSpec(
        name="constant", command=(sys.executable, *CONSTANT), timeout=timeout
    )


def batch_item(rid: str, values, horizon: int) -> dict:
    return {"id": rid, "start_year": 1950, "values": values, "horizon": horizon}


wire_messages = st.builds(
    WireMessage,
    type=st.sampled_from(
        ["hello", "capabilities", "forecast", "forecast_result", "train",
         "train_result", "error"]
    ),
    id=st.none() | st.text(min_size=1, max_size=8),
    name=st.none() | st.text(min_size=1, max_size=12),
    protocol=st.none() | st.integers(min_value=0, max_value=10),
    start_year=st.none() | st.integers(min_value=1800, max_value=2100),
    values=st.none()
    | st.lists(
        st.floats(allow_nan=False, allow_infinity=False, width=32), max_size=8
    ).map(tuple),
    horizon=st.none() | st.integers(min_value=0, max_value=50),
    tag=st.none() | st.text(min_size=1, max_size=10),
    message=st.none() | st.text(max_size=20),
    path=st.none() | st.text(min_size=1, max_size=20),
    params=st.none() | st.dictionaries(st.text(min_size=1, max_size=5), st.integers()),
    supports_training=st.none() | st.booleans(),
    deterministic=st.none() | st.booleans(),
)


class TestWireFormat:
    def test_compact_single_line_json(self):
        msg = WireMessage(type="forecast", id="a", values=(1.0, 2.0), horizon=3)
        line = msg.to_json()
        assert "\n" not in line
        assert json.loads(line) == {
            "type": "forecast",
            "id": "a",
            "values": [1.0, 2.0],
            "horizon": 3,
        }

    @settings(max_examples=300, deadline=None)
    @given(wire_messages)
    def test_round_trip(self, msg):
        assert WireMessage.from_json(msg.to_json()) == msg

    def test_unknown_field_rejected(self):
        with pytest.raises(WireFormatError):
            WireMessage.from_json('{"type":"hello","surprise":1}')

    def test_unknown_type_rejected(self):
        with pytest.raises(WireFormatError):
            WireMessage.from_json('{"type":"telemetry"}')

    def test_non_object_rejected(self):
        with pytest.raises(WireFormatError):
            WireMessage.from_json("[1,2,3]")

    def test_bad_field_type_rejected(self):
        with pytest.raises(WireFormatError):
            WireMessage.from_json('{"type":"forecast","horizon":"five"}')

    def test_not_json_rejected(self):
        with pytest.raises(WireFormatError):
            WireMessage.from_json("not json at all")


class TestHandshake:
    def test_constant_adapter_handshake(self):
        with start_adapter(constant_spec()) as handle:
            assert handle.adapter_name == "constant"
            assert handle.supports_training is False
            assert handle.deterministic is True

    def test_nonexistent_command_is_launch_error(self):
        spec = AdapterSpec(name="ghost", command=("/nonexistent/binary",))
        with pytest.raises(AdapterProtocolError, match="launch failed"):
            start_adapter(spec)

    def test_non_json_first_line_names_the_line(self):
        with pytest.raises(AdapterProtocolError, match="not JSON"):
            start_adapter(spec_for("badhello", timeout=2.0))

    def test_protocol_version_mismatch(self):
        with pytest.raises(AdapterProtocolError, match="protocol 99"):
            start_adapter(spec_for("wrongproto", timeout=2.0))


class TestForecast:
    def test_constant_adapter_repeats_last_value(self):
        with start_adapter(constant_spec()) as handle:
            out = handle.request_forecast([batch_item("r1", [0.1, 0.2, 0.42], 5)])
        assert out[0].ok
        assert np.allclose(out[0].values, 0.42)
        assert len(out[0].values) == 5

    def test_batch_answered_out_of_order_matches_by_id(self):
        with start_adapter(spec_for("reverse", "--count", "3")) as handle:
            out = handle.request_forecast(
                [
                    batch_item("a", [1.0], 2),
                    batch_item("b", [2.0], 2),
                    batch_item("c", [3.0], 2),
                ]
            )
        assert [o.id for o in out] == ["a", "b", "c"]
        assert [o.values[0] for o in out] == [1.0, 2.0, 3.0]

    def test_short_response_fails_that_id(self):
        with start_adapter(spec_for("short")) as handle:
            out = handle.request_forecast([batch_item("r1", [1.0], 4)])
        assert not out[0].ok
        assert "malformed" in out[0].error

    def test_deterministic_adapter_repeats_identically(self):
        with start_adapter(constant_spec()) as handle:
            batch = [batch_item("x", [0.5, 0.7], 6)]
            first = handle.request_forecast(batch)
            second = handle.request_forecast(batch)
        assert handle.deterministic
        assert np.array_equal(first[0].values, second[0].values)

    def test_timeout_fails_outstanding_within_grace(self):
        spec = spec_for("sleep", timeout=1.0)
        with start_adapter(spec) as handle:
            t0 = time.monotonic()
            out = handle.request_forecast([batch_item("r1", [1.0], 3)])
            elapsed = time.monotonic() - t0
        assert not out[0].ok
        assert "timeout" in out[0].error
        # resolves within timeout + grace, plus a small scheduling margin
        assert elapsed < 1.0 + 1.0 + 2.0

    def test_junk_mid_stream_fails_batch(self):
        with start_adapter(spec_for("badline")) as handle:
            out = handle.request_forecast([batch_item("r1", [1.0], 3)])
        assert not out[0].ok
        assert "protocol violation" in out[0].error

    def test_crash_restart_then_recovery(self, tmp_path):
        marker = tmp_path / "died-once"
        spec = spec_for("die-once", "--marker", str(marker), timeout=5.0)
        with start_adapter(spec) as handle:
            first = handle.request_forecast([batch_item("r1", [1.0, 2.0], 3)])
            assert not first[0].ok
            assert "exited" in first[0].error
            # the restarted child finds the marker and behaves
            second = handle.request_forecast([batch_item("r2", [1.0, 2.0], 3)])
            assert second[0].ok
            assert np.allclose(second[0].values, 2.0)

    def test_repeated_crashes_exclude_the_adapter(self):
        with start_adapter(spec_for("die", timeout=5.0)) as handle:
            first = handle.request_forecast([batch_item("r1", [1.0], 2)])
            assert not first[0].ok
            second = handle.request_forecast([batch_item("r2", [1.0], 2)])
            assert not second[0].ok
            with pytest.raises(AdapterUnavailableError):
                handle.request_forecast([batch_item("r3", [1.0], 2)])

    def test_oversized_batch_rejected(self):
        spec = AdapterSpec(
            name="constant",
            command=(sys.executable, *CONSTANT),
            timeout=5.0,
            batch_size=2,
        )
        with start_adapter(spec) as handle:
            with pytest.raises(ValueError, match="batch_size"):
                handle.request_forecast(
                    [batch_item(str(i), [1.0], 2) for i in range(3)]
                )

    def test_duplicate_ids_rejected(self):
        with start_adapter(constant_spec()) as handle:
            with pytest.raises(ValueError, match="duplicate"):
                handle.request_forecast(
                    [batch_item("same", [1.0], 2), batch_item("same", [2.0], 2)]
                )


class TestTraining:
    def test_constant_adapter_lacks_training_capability(self):
        with start_adapter(constant_spec()) as handle:
            with pytest.raises(CapabilityError):
                handle.request_training("/tmp/nothing.csv")

    def test_echo_trainer_tags_with_file_digest(self, tmp_path):
        export = tmp_path / "pool.csv"
        export.write_text("country,age,end_year,v1,target\nAAA,0,2000,0.5,0.6\n")
        import hashlib

        expected = hashlib.sha256(export.read_bytes()).hexdigest()
        with start_adapter(spec_for("echo-train")) as handle:
            assert handle.supports_training
            tag = handle.request_training(export, params={"epochs": 3})
        assert tag == expected

    def test_training_error_surfaces(self, tmp_path):
        export = tmp_path / "pool.csv"
        export.write_text("x\n")
        with start_adapter(spec_for("ok")) as handle:
            handle.supports_training = True  # force the capability gate open
            with pytest.raises(TrainingError):
                handle.request_training(export)


class TestRegistry:
    def test_load_registry_round_trip(self, tmp_path):
        registry = tmp_path / "adapters.json"
        registry.write_text(
            json.dumps(
                [
                    {
                        "name": "constant",
                        "command": [sys.executable, "-m", "mortbench.adapters.constant"],
                        "timeout": 12.5,
                        "batch_size": 8,
                    },
                    {
                        "name": "fixture",
                        "command": [sys.executable, FIXTURE, "ok"],
                        "env": {"X": "1"},
                    },
                ]
            )
        )
        specs = load_registry(registry)
        assert [s.name for s in specs] == ["constant", "fixture"]
        assert specs[0].timeout == 12.5
        assert specs[0].batch_size == 8
        assert specs[1].env == {"X": "1"}

    def test_duplicate_names_rejected(self, tmp_path):
        registry = tmp_path / "adapters.json"
        registry.write_text(
            json.dumps(
                [
                    {"name": "a", "command": ["x"]},
                    {"name": "a", "command": ["y"]},
                ]
            )
        )
        with pytest.raises(ValueError, match="duplicate"):
            load_registry(registry)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            AdapterSpec(name="", command=("x",))
        with pytest.raises(ValueError):
            AdapterSpec(name="a", command=())
        with pytest.raises(ValueError):
            AdapterSpec(name="a", command=("x",), timeout=0)
