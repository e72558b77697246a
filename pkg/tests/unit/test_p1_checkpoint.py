"""Priority 1: checkpoint format and module state handling."""

import numpy as np
import pytest

from src.common.errors import FormatError, ShapeError
from src.core.tensor.checkpoint import (
    MAGIC,
    VERSION_F32,
    VERSION_F64,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from src.core.tensor.nn import Linear, Module


class TwoLayers(Module):
    def __init__(self, rng):
        super().__init__()
        self.first = self.add_module("first", Linear(4, 3, rng))
        self.second = self.add_module("second", Linear(3, 2, rng))


@pytest.mark.p1
def test_float64_round_trip_is_bit_exact(float64, tmp_path, rng):
    """Test that float64 state survives save/load bit for bit under version 0x02."""
    state = TwoLayers(rng).state_dict()
    path = tmp_path / "model.frid"
    save_checkpoint(path, state)
    payload = path.read_bytes()
    assert payload[:4] == MAGIC and payload[4] == VERSION_F64
    loaded = load_checkpoint(path)
    assert list(loaded) == list(state)
    for name in state:
        assert loaded[name].dtype == np.float64
        np.testing.assert_array_equal(loaded[name], state[name])


@pytest.mark.p1
def test_float32_round_trip(rng):
    """Test that float32 state uses version 0x01 and restores exactly."""
    state = {"w": rng.normal(size=(2, 3)).astype(np.float32), "b": np.zeros(2, dtype=np.float32)}
    payload = encode_checkpoint(state)
    assert payload[4] == VERSION_F32
    loaded = decode_checkpoint(payload)
    np.testing.assert_array_equal(loaded["w"], state["w"])


@pytest.mark.p1
def test_record_layout():
    """Test the little-endian record: name length, name, rank, extents, values."""
    payload = encode_checkpoint({"ab": np.array([[1.0, 2.0]], dtype=np.float32)})
    body = payload[5:]
    assert body[:4] == (2).to_bytes(4, "little")
    assert body[4:6] == b"ab"
    assert body[6:10] == (2).to_bytes(4, "little")
    assert body[10:18] == (1).to_bytes(8, "little")
    assert body[18:26] == (2).to_bytes(8, "little")
    assert np.frombuffer(body[26:], dtype="<f4").tolist() == [1.0, 2.0]


@pytest.mark.p2
def test_bad_magic_version_and_truncation():
    """Test FormatError for wrong magic, unknown version and cut-off values."""
    payload = encode_checkpoint({"w": np.ones(3, dtype=np.float32)})
    with pytest.raises(FormatError):
        decode_checkpoint(b"NOPE" + payload[4:])
    with pytest.raises(FormatError):
        decode_checkpoint(payload[:4] + bytes([9]) + payload[5:])
    with pytest.raises(FormatError):
        decode_checkpoint(payload[:-2])


@pytest.mark.p2
def test_load_state_dict_checks_names_and_shapes(rng):
    """Test that missing names and wrong extents raise ShapeError."""
    model = TwoLayers(rng)
    state = model.state_dict()
    with pytest.raises(ShapeError):
        model.load_state_dict({k: v for k, v in state.items() if k != "first.w"})
    state["first.w"] = np.zeros((5, 5))
    with pytest.raises(ShapeError):
        model.load_state_dict(state)


@pytest.mark.p2
def test_parameter_names_follow_registration_path(rng):
    """Test dotted parameter names."""
    model = TwoLayers(rng)
    model.assign_names()
    assert [p.name for p in model.parameters()] == ["first.w", "first.b", "second.w", "second.b"]
    assert model.num_parameters() == 4 * 3 + 3 + 3 * 2 + 2
