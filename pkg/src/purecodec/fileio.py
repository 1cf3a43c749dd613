"""WAV files, flat key-value configs and the serialized quantizer stack."""

import configparser
import struct
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .exceptions import ConfigError, ModelFormatError, ShapeError, WavFormatError
from .frontend import FrontendConfig, Waveform
from .rvq import QuantizerStack

MODEL_MAGIC = b"PURM"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<4sBIIIIHI")
_SECTION = "config"


def read_wav(path, expected_rate=None):
    """Mono 16-bit PCM or 32-bit float WAV as a :class:`Waveform`."""
    try:
        rate, data = wavfile.read(str(path))
    except (ValueError, OSError, EOFError) as exc:
        raise WavFormatError(f"{path}: {exc}") from exc
    if data.ndim != 1:
        raise WavFormatError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise WavFormatError(f"{path}: unsupported sample type {data.dtype}")
    if expected_rate is not None and rate != expected_rate:
        raise WavFormatError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz (no resampling)")
    return Waveform(samples, rate)


def write_wav(path, wave, sample_format="float32"):
    samples = np.clip(wave.samples, -1.0, 1.0)
    if sample_format == "float32":
        data = samples.astype(np.float32)
    elif sample_format == "int16":
        data = np.round(samples * 32767.0).astype(np.int16)
    else:
        raise WavFormatError(f"unknown sample format {sample_format!r}")
    wavfile.write(str(path), wave.sample_rate, data)


def parse_config(text):
    """Flat ``key = value`` text (``#`` comments) to a dict of strings."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(f"[{_SECTION}]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return dict(parser[_SECTION])


def read_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def format_config(mapping):
    return "".join(f"{key} = {value}\n" for key, value in mapping.items())


def write_config(path, mapping):
    Path(path).write_text(format_config(mapping))


def save_stack(path, stack, frontend, sample_rate):
    Path(path).write_bytes(dump_stack(stack, frontend, sample_rate))


def dump_stack(stack, frontend, sample_rate):
    """Geometry header, window name, then ``L*B*D`` little-endian float64 values."""
    arr = stack.to_array()
    n_stages, size, dim = arr.shape
    if dim != frontend.dim:
        raise ModelFormatError(f"stack dim {dim} != frontend dim {frontend.dim}")
    window = frontend.window.encode("ascii")
    header = _MODEL_HEADER.pack(
        MODEL_MAGIC, MODEL_VERSION, sample_rate, frontend.frame_len, frontend.hop, dim, n_stages, size
    )
    return header + struct.pack("<B", len(window)) + window + arr.astype("<f8").tobytes()


def load_stack(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ModelFormatError(f"cannot read model {path}: {exc}") from exc
    return parse_stack(data)


def parse_stack(data):
    """Inverse of :func:`dump_stack`: ``(stack, frontend, sample_rate)``."""
    if len(data) < _MODEL_HEADER.size + 1:
        raise ModelFormatError("model file truncated")
    magic, version, sample_rate, frame_len, hop, dim, n_stages, size = _MODEL_HEADER.unpack_from(data)
    if magic != MODEL_MAGIC:
        raise ModelFormatError("not a quantizer model file")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    offset = _MODEL_HEADER.size
    name_len = data[offset]
    offset += 1
    window = data[offset : offset + name_len].decode("ascii", errors="replace")
    offset += name_len
    expected = n_stages * size * dim * 8
    if len(data) - offset != expected:
        raise ModelFormatError(f"model payload has {len(data) - offset} bytes, expected {expected}")
    try:
        frontend = FrontendConfig(frame_len, hop, dim, window)
    except ConfigError as exc:
        raise ModelFormatError(f"invalid front-end geometry: {exc}") from exc
    arr = np.frombuffer(data, dtype="<f8", offset=offset).reshape(n_stages, size, dim).astype(np.float64)
    try:
        stack = QuantizerStack.from_array(arr)
    except ShapeError as exc:
        raise ModelFormatError(f"invalid codebooks: {exc}") from exc
    return stack, frontend, sample_rate
