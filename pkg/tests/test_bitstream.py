import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from purecodec import QuantizationResult, StreamMeta, bitrate, pack, unpack
from purecodec.bitstream import HEADER_SIZE, _check_meta, index_bits, truncate_packet
from purecodec.exceptions import BitstreamError


def result(indices, anchored=False):
    indices = np.asarray(indices, dtype=np.int64)
    return QuantizationResult(indices, np.zeros(indices.shape), anchored)


def meta(B=1024, L=8, streams=1, frames=0, **kw):
    base = dict(sample_rate=16000, hop=320, dim=64, n_quantizers=L, codebook_size=B,
                streams_used=streams, n_frames=frames, anchored=False)
    base.update(kw)
    return StreamMeta(**base)


def reference_bits(indices, width):
    """Independent MSB-first packer via Python big integers."""
    value, nbits = 0, 0
    for i in np.asarray(indices).ravel():
        value = (value << width) | int(i)
        nbits += width
    pad = (-nbits) % 8
    return (value << pad).to_bytes((nbits + pad) // 8, "big") if nbits else b""


class TestLayout:
    def test_header_bytes(self):
        data = pack(result(np.zeros((2, 3))), meta(B=16, L=4, dim=8, anchored=True))
        fields = struct.unpack("<4sBIHHBHBIB", data[:HEADER_SIZE])
        assert HEADER_SIZE == 22
        assert fields == (b"PURE", 1, 16000, 320, 8, 4, 16, 2, 3, 0)

    def test_anchored_flag_from_result(self):
        data = pack(result(np.zeros((1, 1)), anchored=True), meta(B=2))
        assert data[21] == 1 and unpack(data)[0].anchored

    def test_full_scale_geometry_payload(self, rng):
        idx = rng.integers(1024, size=(8, 50))
        data = pack(result(idx), meta())
        assert len(data) - HEADER_SIZE == 500
        assert data[HEADER_SIZE:] == reference_bits(idx, 10)

    def test_header_only(self):
        data = pack(result(np.zeros((1, 0))), meta())
        assert len(data) == HEADER_SIZE
        m, idx = unpack(data)
        assert idx.shape == (1, 0) and m.n_frames == 0

    @pytest.mark.parametrize("B,width", [(1, 0), (2, 1), (3, 2), (4, 2), (5, 3), (1024, 10), (1025, 11), (65535, 16)])
    def test_index_width(self, B, width):
        assert index_bits(B) == width

    def test_msb_first_example(self):
        # indices 5, 3 with 3 bits: 101 011 + 00 padding
        data = pack(result([[5, 3]]), meta(B=8))
        assert data[HEADER_SIZE:] == bytes([0b10101100])


class TestRoundTrip:
    @settings(max_examples=200, deadline=None)
    @given(
        B=st.integers(1, 65535),
        L=st.integers(1, 8),
        frames=st.integers(0, 40),
        data=st.data(),
    )
    def test_identity(self, B, L, frames, data):
        streams = data.draw(st.integers(1, L))
        seed = data.draw(st.integers(0, 2**32 - 1))
        idx = np.random.default_rng(seed).integers(B, size=(streams, frames))
        m = meta(B=B, L=L)
        packet = pack(result(idx), m)
        got_meta, got = unpack(packet)
        assert np.array_equal(got, idx)
        assert (got_meta.codebook_size, got_meta.n_quantizers, got_meta.streams_used, got_meta.n_frames) == (
            B, L, streams, frames
        )
        assert len(packet) - HEADER_SIZE == (streams * frames * index_bits(B) + 7) // 8
        assert packet[HEADER_SIZE:] == reference_bits(idx, index_bits(B))

    def test_truncate_packet(self, rng):
        idx = rng.integers(64, size=(8, 20))
        packet = pack(result(idx), meta(B=64))
        _, got = unpack(truncate_packet(packet, 2))
        assert np.array_equal(got, idx[:2])


class TestErrors:
    def good(self):
        return pack(result([[1, 2, 3]]), meta(B=5))

    def kind(self, data):
        with pytest.raises(BitstreamError) as info:
            unpack(data)
        return info.value.kind

    def test_bad_magic(self):
        assert self.kind(b"NOPE" + self.good()[4:]) == "bad_magic"

    def test_truncated_header(self):
        assert self.kind(self.good()[:10]) == "truncated_header"
        assert self.kind(b"PU") == "truncated_header"

    def test_version(self):
        data = bytearray(self.good())
        data[4] = 2
        assert self.kind(bytes(data)) == "unsupported_version"

    def test_truncated_payload(self):
        assert self.kind(self.good()[:-1]) == "truncated_payload"

    def test_trailing(self):
        assert self.kind(self.good() + b"\x00") == "trailing_data"

    def test_out_of_range_index(self):
        data = bytearray(self.good())
        data[HEADER_SIZE] = 0xFF
        assert self.kind(bytes(data)) == "out_of_range_index"

    def test_nonzero_padding(self):
        data = bytearray(self.good())
        data[-1] |= 0x01
        assert self.kind(bytes(data)) == "nonzero_padding"

    def test_streams_exceed_L(self):
        data = bytearray(self.good())
        data[16] = 9
        assert self.kind(bytes(data)) == "invalid_header"

    def test_pack_rejects(self):
        with pytest.raises(BitstreamError) as info:
            pack(result([[5]]), meta(B=5))
        assert info.value.kind == "out_of_range_index"
        with pytest.raises(BitstreamError):
            pack(result(np.zeros((3, 1))), meta(L=2))
        with pytest.raises(BitstreamError) as info:
            pack(result(np.zeros((1, 0))), meta(hop=2**16))
        assert info.value.kind == "invalid_header"

    def test_frame_count_overflow(self):
        big = StreamMeta(16000, 320, 64, 8, 1024, 1, 2**32, False)
        with pytest.raises(BitstreamError) as info:
            _check_meta(big)
        assert info.value.kind == "frame_count_overflow"

    def test_fuzz_smoke(self, rng):
        good = self.good()
        for _ in range(5000):
            data = bytearray(good)
            for _ in range(int(rng.integers(1, 4))):
                data[int(rng.integers(len(data)))] = int(rng.integers(256))
            try:
                unpack(bytes(data))
            except BitstreamError:
                pass


class TestBitrate:
    @pytest.mark.parametrize("streams,bps", [(1, 500), (2, 1000), (4, 2000), (8, 4000)])
    def test_ladder(self, streams, bps):
        assert bitrate(16000, 320, streams, 1024) == bps

    def test_non_power_of_two(self):
        assert bitrate(16000, 320, 1, 1000) == pytest.approx(50 * np.log2(1000))

    def test_meta_property(self):
        assert meta(streams=8).bitrate == 4000


def test_zero_width_header_claiming_huge_frame_count():
    packet = struct.pack("<4sBIHHBHBIB", b"PURE", 1, 16000, 320, 8, 2, 1, 2, 2**32 - 1, 0)
    got, idx = unpack(packet)
    assert len(packet) == HEADER_SIZE and got.n_frames == 2**32 - 1
    assert idx.shape == (2, 2**32 - 1) and idx[1, -1] == 0 and not idx.flags.writeable
