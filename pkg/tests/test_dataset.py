import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gvd.dataset import HEADER_SIZE, VideoDataset, file_size, from_bytes, load_dataset, save_dataset, to_bytes
from gvd.errors import DimensionError, FormatError


def _dataset(n=7, F=3, D=2, C=3, soft=False, seed=0):
    rng = np.random.default_rng(seed)
    s = rng.dirichlet(np.ones(C), size=n) if soft else None
    return VideoDataset(rng.integers(0, C, n), rng.standard_normal((n, F, D)), C, s)


@pytest.mark.parametrize("soft", [False, True])
def test_round_trip_bit_exact(tmp_path, soft):
    d = _dataset(soft=soft)
    save_dataset(d, tmp_path / "d.gvds")
    back = load_dataset(tmp_path / "d.gvds")
    assert back.equals(d)
    assert back.videos.tobytes() == d.videos.tobytes()


def test_header_layout():
    buf = to_bytes(_dataset(n=4, F=3, D=2, C=5))
    assert buf[:4] == bytes([0x47, 0x56, 0x44, 0x53])
    assert struct.unpack_from("<IIIIQ", buf, 4) == (1, 3, 2, 5, 4)
    assert HEADER_SIZE == 28


def test_file_size_for_1000_records(tmp_path):
    F, D = 16, 4
    d = _dataset(n=1000, F=F, D=D)
    save_dataset(d, tmp_path / "d.gvds")
    assert (tmp_path / "d.gvds").stat().st_size == 4 + 4 * 4 + 8 + 1000 * (4 + 4 * F * D) == file_size(1000, F, D)


def test_soft_block_size():
    d = _dataset(n=10, C=4, soft=True)
    buf = to_bytes(d)
    assert len(buf) == file_size(10, 3, 2, 4)
    assert buf[file_size(10, 3, 2) : file_size(10, 3, 2) + 4] == b"SLBL"


def test_bad_magic():
    buf = bytearray(to_bytes(_dataset()))
    buf[0] = 0x00
    with pytest.raises(FormatError) as err:
        from_bytes(bytes(buf))
    assert err.value.offset == 0


def test_version_mismatch():
    buf = bytearray(to_bytes(_dataset()))
    buf[4:8] = struct.pack("<I", 2)
    with pytest.raises(FormatError) as err:
        from_bytes(bytes(buf))
    assert err.value.offset == 4


@pytest.mark.parametrize("cut", [10, HEADER_SIZE + 5])
def test_truncation(cut):
    buf = to_bytes(_dataset())
    with pytest.raises(FormatError) as err:
        from_bytes(buf[:cut])
    assert err.value.offset == cut


def test_bad_soft_magic():
    d = _dataset(soft=True)
    buf = bytearray(to_bytes(d))
    pos = file_size(len(d), d.frames, d.dim)
    buf[pos] = ord("X")
    with pytest.raises(FormatError) as err:
        from_bytes(bytes(buf))
    assert err.value.offset == pos


def test_class_id_out_of_range_offset():
    d = _dataset(n=3, F=1, D=1, C=2)
    buf = bytearray(to_bytes(d))
    rec = 4 + 4
    buf[HEADER_SIZE + 2 * rec : HEADER_SIZE + 2 * rec + 4] = struct.pack("<I", 9)
    with pytest.raises(FormatError) as err:
        from_bytes(bytes(buf))
    assert err.value.offset == HEADER_SIZE + 2 * rec


def test_shape_checks():
    with pytest.raises(DimensionError):
        VideoDataset(np.array([0, 1]), np.zeros((3, 2, 2)), 2)
    with pytest.raises(DimensionError):
        VideoDataset(np.array([0, 5]), np.zeros((2, 2, 2)), 2)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(0, 6),
    F=st.integers(1, 4),
    D=st.integers(1, 3),
    C=st.integers(1, 4),
    soft=st.booleans(),
    seed=st.integers(0, 2**32 - 1),
)
def test_round_trip_property(n, F, D, C, soft, seed):
    d = _dataset(n, F, D, C, soft, seed)
    buf = to_bytes(d)
    assert len(buf) == file_size(n, F, D, C if soft else None)
    assert from_bytes(buf).equals(d)
