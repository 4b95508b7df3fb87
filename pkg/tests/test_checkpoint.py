import struct

import numpy as np
import numpy.testing as npt
import pytest

import gtc.autodiff as ad
from gtc import DataError
from gtc.checkpoint import MAGIC, VERSION, load_params, save_params


def test_roundtrip_bit_identical(tmp_path, rng):
    params = {
        "b.vec": rng.standard_normal(5),
        "a.mat": rng.standard_normal((3, 4)),
        "c.cube": rng.standard_normal((2, 2, 2)),
    }
    path = tmp_path / "p.gtck"
    save_params(path, params)
    back = load_params(path)
    assert set(back) == set(params)
    for name, arr in params.items():
        assert back[name].tobytes() == arr.tobytes()
        assert back[name].shape == arr.shape
        assert back[name].dtype == np.float64


def test_tensors_accepted_and_float32_upcast(tmp_path, rng):
    t = ad.Tensor(rng.standard_normal((4, 2)).astype(np.float32))
    path = tmp_path / "p.gtck"
    save_params(path, {"w": t})
    back = load_params(path)
    npt.assert_array_equal(back["w"], t.data.astype(np.float64))


def test_entries_stored_sorted_by_name(tmp_path):
    path = tmp_path / "p.gtck"
    save_params(path, {"zz": np.zeros(1), "aa": np.ones(1), "mm": np.ones(1)})
    raw = path.read_bytes()
    assert raw.index(b"aa") < raw.index(b"mm") < raw.index(b"zz")


def test_byte_layout_of_single_entry(tmp_path):
    path = tmp_path / "p.gtck"
    save_params(path, {"w": np.array([[1.0, 2.0]])})
    raw = path.read_bytes()
    assert raw[:4] == MAGIC
    assert struct.unpack_from("<I", raw, 4)[0] == VERSION
    assert struct.unpack_from("<I", raw, 8)[0] == 1      # name length
    assert raw[12:13] == b"w"
    assert struct.unpack_from("<I", raw, 13)[0] == 2     # rank
    assert struct.unpack_from("<2Q", raw, 17) == (1, 2)  # dims
    npt.assert_array_equal(np.frombuffer(raw, "<f8", offset=33), [1.0, 2.0])
    assert len(raw) == 33 + 16


def test_scalar_rank_zero_roundtrip(tmp_path):
    path = tmp_path / "p.gtck"
    save_params(path, {"s": np.float64(3.5)})
    back = load_params(path)
    assert back["s"].shape == () and back["s"] == 3.5


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.gtck"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(DataError, match="bad magic"):
        load_params(path)


def test_unsupported_version_rejected(tmp_path):
    path = tmp_path / "v9.gtck"
    path.write_bytes(MAGIC + struct.pack("<I", 9))
    with pytest.raises(DataError, match="version 9"):
        load_params(path)


def test_truncated_payload_rejected(tmp_path, rng):
    path = tmp_path / "p.gtck"
    save_params(path, {"w": rng.standard_normal((8, 8))})
    clipped = tmp_path / "clipped.gtck"
    clipped.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(DataError, match="corrupt checkpoint"):
        load_params(clipped)


def test_empty_checkpoint_is_empty_dict(tmp_path):
    path = tmp_path / "none.gtck"
    save_params(path, {})
    assert load_params(path) == {}
