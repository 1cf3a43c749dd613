"""``.pure`` packet format.

Byte layout (multi-byte header fields little-endian)::

    offset size field
    0      4    magic b"PURE"
    4      1    version (1)
    5      4    sample_rate, Hz
    9      2    hop, samples
    11     2    dim
    13     1    L (stages in the model)
    14     2    B (codebook size)
    16     1    streams_used
    17     4    n_frames
    21     1    anchored flag (0/1)
    22     ...  payload

The payload holds ``streams_used * n_frames`` indices, stream-major, each in
``ceil(log2(B))`` bits written most significant bit first, zero-padded to a
whole byte. Nothing may follow the payload.
"""

import math
import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import BitstreamError
from .rvq import QuantizationResult

MAGIC = b"PURE"
VERSION = 1
_HEADER = struct.Struct("<4sBIHHBHBIB")
HEADER_SIZE = _HEADER.size


@dataclass(frozen=True)
class StreamMeta:
    sample_rate: int
    hop: int
    dim: int
    n_quantizers: int
    codebook_size: int
    streams_used: int
    n_frames: int
    anchored: bool = False

    @property
    def bits_per_index(self):
        return index_bits(self.codebook_size)

    @property
    def payload_bits(self):
        return self.streams_used * self.n_frames * self.bits_per_index

    @property
    def payload_bytes(self):
        return (self.payload_bits + 7) // 8

    @property
    def bitrate(self):
        return bitrate(self.sample_rate, self.hop, self.streams_used, self.codebook_size)


def index_bits(B):
    """``ceil(log2(B))``; zero for a single-entry codebook."""
    return (int(B) - 1).bit_length()


def bitrate(sample_rate, hop, streams_used, B):
    """Bits per second of fixed-width indices: frame rate * streams * log2(B)."""
    B = int(B)
    bits = B.bit_length() - 1 if B & (B - 1) == 0 else math.log2(B)
    return sample_rate / hop * streams_used * bits


def _check_meta(meta):
    limits = (
        ("sample_rate", 1, 2**32 - 1),
        ("hop", 1, 2**16 - 1),
        ("dim", 1, 2**16 - 1),
        ("n_quantizers", 1, 255),
        ("codebook_size", 1, 2**16 - 1),
        ("streams_used", 1, 255),
        ("n_frames", 0, 2**32 - 1),
    )
    for name, low, high in limits:
        value = getattr(meta, name)
        if not low <= value <= high:
            kind = "frame_count_overflow" if name == "n_frames" else "invalid_header"
            raise BitstreamError(kind, f"{name}={value} outside [{low}, {high}]")
    if meta.streams_used > meta.n_quantizers:
        raise BitstreamError("invalid_header", "streams_used exceeds the number of quantizers")


def pack(result, meta):
    """Serialize the indices of ``result`` with the geometry in ``meta``.

    ``streams_used``/``n_frames``/``anchored`` in ``meta`` are taken from the
    result; the other fields describe the model and the front end.
    """
    indices = result.indices if isinstance(result, QuantizationResult) else np.asarray(result)
    indices = np.asarray(indices, dtype=np.int64)
    if indices.ndim != 2:
        raise BitstreamError("invalid_header", "indices must be a (streams, frames) array")
    anchored = bool(getattr(result, "anchored", meta.anchored))
    meta = StreamMeta(
        int(meta.sample_rate), int(meta.hop), int(meta.dim), int(meta.n_quantizers),
        int(meta.codebook_size), int(indices.shape[0]), int(indices.shape[1]), anchored,
    )
    _check_meta(meta)
    if indices.size and (indices.min() < 0 or indices.max() >= meta.codebook_size):
        raise BitstreamError("out_of_range_index", f"index outside [0, {meta.codebook_size})")

    header = _HEADER.pack(
        MAGIC, VERSION, meta.sample_rate, meta.hop, meta.dim, meta.n_quantizers,
        meta.codebook_size, meta.streams_used, meta.n_frames, int(meta.anchored),
    )
    width = meta.bits_per_index
    if width == 0 or indices.size == 0:
        return header
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    bits = ((indices.reshape(-1, 1) >> shifts) & 1).astype(np.uint8)
    return header + np.packbits(bits.ravel()).tobytes()


def unpack(data):
    """Parse a packet into ``(StreamMeta, indices)``; raises :class:`BitstreamError`.

    ``indices`` has shape ``(streams_used, n_frames)``. It is a read-only view
    when the packet carries no payload bits (``B == 1`` or zero frames).
    """
    data = bytes(data)
    if len(data) < 4 or data[:4] != MAGIC:
        if len(data) < 4 and MAGIC.startswith(data):
            raise BitstreamError("truncated_header")
        raise BitstreamError("bad_magic")
    if len(data) < 5:
        raise BitstreamError("truncated_header")
    if data[4] != VERSION:
        raise BitstreamError("unsupported_version", f"unsupported version {data[4]}")
    if len(data) < HEADER_SIZE:
        raise BitstreamError("truncated_header")
    _, _, sr, hop, dim, n_q, size, streams, n_frames, anchored = _HEADER.unpack_from(data)
    if anchored not in (0, 1):
        raise BitstreamError("invalid_header", f"anchored flag {anchored}")
    meta = StreamMeta(sr, hop, dim, n_q, size, streams, n_frames, bool(anchored))
    _check_meta(meta)

    expected = meta.payload_bytes
    payload = memoryview(data)[HEADER_SIZE:]
    if len(payload) < expected:
        raise BitstreamError("truncated_payload", f"payload has {len(payload)} of {expected} bytes")
    if len(payload) > expected:
        raise BitstreamError("trailing_data", f"{len(payload) - expected} bytes after payload")

    width = meta.bits_per_index
    count = streams * n_frames
    if width == 0 or count == 0:
        # B=1 costs zero bits per index, so a header-only packet may declare
        # billions of frames; hand back a read-only view instead of allocating.
        return meta, np.broadcast_to(np.zeros((), dtype=np.int64), (streams, n_frames))
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))
    if bits[count * width :].any():
        raise BitstreamError("nonzero_padding")
    weights = (1 << np.arange(width - 1, -1, -1, dtype=np.int64))
    indices = bits[: count * width].reshape(count, width).astype(np.int64) @ weights
    if indices.max() >= size:
        raise BitstreamError("out_of_range_index", f"index {int(indices.max())} >= B={size}")
    return meta, indices.reshape(streams, n_frames)


def truncate_packet(data, n_streams):
    """Re-pack a packet keeping only its first ``n_streams`` streams."""
    meta, indices = unpack(data)
    if not 1 <= n_streams <= meta.streams_used:
        raise BitstreamError("invalid_header", f"cannot keep {n_streams} of {meta.streams_used} streams")
    return pack(QuantizationResult(indices[:n_streams], np.zeros((n_streams, meta.n_frames)), meta.anchored), meta)
