"""Fixed DCT filterbank front end, synthetic noisy corpus and a simulated enhancer.

The filterbank plays the role of a frozen codec encoder/decoder: each frame of
``frame_len`` samples (stepped by ``hop``) is windowed and mapped to the first
``dim`` coefficients of its orthonormal type-II DCT. Embeddings are stored as
``dim x frames`` matrices (one column per frame).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sp_fft
from scipy.ndimage import uniform_filter1d
from scipy.signal import get_window
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import ConfigError, ShapeError, SignalTooShortError
from .validation import check_float, check_int, check_matrix

WIENER_EPS = 1e-12
OLA_NORM_FLOOR = 0.1

_WINDOW_ALIASES = {
    "hann": "hann",
    "hanning": "hann",
    "rect": "boxcar",
    "rectangular": "boxcar",
    "boxcar": "boxcar",
    "sine": "cosine",
    "hamming": "hamming",
}


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ShapeError(f"waveform must be mono (1-D), got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ShapeError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", check_int(self.sample_rate, "sample_rate", 1))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self):
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class FrontendConfig:
    frame_len: int = 640
    hop: int = 320
    dim: int = 64
    window: str = "hann"

    def __post_init__(self):
        frame_len = check_int(self.frame_len, "frame_len", 1)
        hop = check_int(self.hop, "hop", 1, frame_len)
        check_int(self.dim, "dim", 1, frame_len)
        if str(self.window).lower() not in _WINDOW_ALIASES:
            raise ConfigError(f"unknown window {self.window!r}; choose from {sorted(_WINDOW_ALIASES)}")
        object.__setattr__(self, "frame_len", frame_len)
        object.__setattr__(self, "hop", hop)
        object.__setattr__(self, "window", str(self.window).lower())

    def taper(self):
        return get_window(_WINDOW_ALIASES[self.window], self.frame_len, fftbins=True).astype(np.float64)

    def n_frames(self, n_samples):
        if n_samples < self.frame_len:
            raise SignalTooShortError(
                f"signal of {n_samples} samples is shorter than one frame ({self.frame_len})"
            )
        return (n_samples - self.frame_len) // self.hop + 1

    def interior(self, n_frames):
        """Slice of synthesized samples covered by the full frame overlap."""
        start = self.frame_len - self.hop
        return slice(start, (n_frames - 1) * self.hop + self.hop)


@dataclass(frozen=True)
class EmbeddingSequence:
    """``dim x frames`` matrix of frame embeddings."""

    data: np.ndarray
    hop: int = 320
    frame_len: int = 640
    sample_rate: int = 16000

    def __post_init__(self):
        object.__setattr__(self, "data", check_matrix(self.data, "embedding data"))

    @property
    def dim(self):
        return self.data.shape[0]

    @property
    def frames(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data):
        return EmbeddingSequence(data, hop=self.hop, frame_len=self.frame_len, sample_rate=self.sample_rate)


def analyze(wave, cfg=None):
    """Frame, window and DCT-II the waveform; keep the first ``cfg.dim`` coefficients."""
    cfg = cfg or FrontendConfig()
    if not isinstance(wave, Waveform):
        wave = Waveform(wave)
    n_frames = cfg.n_frames(len(wave))
    frames = np.lib.stride_tricks.sliding_window_view(wave.samples, cfg.frame_len)[:: cfg.hop][:n_frames]
    coeffs = sp_fft.dct(frames * cfg.taper(), type=2, norm="ortho", axis=1)
    return EmbeddingSequence(
        np.ascontiguousarray(coeffs[:, : cfg.dim].T),
        hop=cfg.hop,
        frame_len=cfg.frame_len,
        sample_rate=wave.sample_rate,
    )


def synthesize(emb, cfg=None):
    """Truncated inverse DCT followed by weighted (least-squares) overlap-add.

    Output length is ``(frames - 1) * hop + frame_len``. The normalizer is
    floored at ``OLA_NORM_FLOOR`` times the peak squared window, so the
    poorly covered ends fade instead of amplifying.
    """
    cfg = cfg or FrontendConfig()
    data = emb.data if isinstance(emb, EmbeddingSequence) else check_matrix(emb, "embedding data")
    sample_rate = emb.sample_rate if isinstance(emb, EmbeddingSequence) else 16000
    if data.shape[0] != cfg.dim:
        raise ShapeError(f"embedding dim {data.shape[0]} != frontend dim {cfg.dim}")
    n_frames = data.shape[1]
    if n_frames == 0:
        return Waveform(np.zeros(0), sample_rate)
    full = np.zeros((n_frames, cfg.frame_len))
    full[:, : cfg.dim] = data.T
    frames = sp_fft.idct(full, type=2, norm="ortho", axis=1)

    win = cfg.taper()
    length = (n_frames - 1) * cfg.hop + cfg.frame_len
    out = np.zeros(length)
    norm = np.zeros(length)
    win_sq = win * win
    for t in range(n_frames):
        seg = slice(t * cfg.hop, t * cfg.hop + cfg.frame_len)
        out[seg] += win * frames[t]
        norm[seg] += win_sq
    # The floor only bites near the ends, where a single tapered frame covers
    # the sample; dividing there by a tiny w^2 would blow up truncation error.
    out /= np.maximum(norm, OLA_NORM_FLOOR * win_sq.max())
    return Waveform(out, sample_rate)


class DCTFilterbank(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`analyze` / :func:`synthesize`.

    ``transform`` takes a 1-D waveform and returns a ``(frames, dim)`` array
    (samples-by-features, the transpose of :class:`EmbeddingSequence.data`).
    """

    def __init__(self, frame_len=640, hop=320, dim=64, window="hann", sample_rate=16000):
        self.frame_len = frame_len
        self.hop = hop
        self.dim = dim
        self.window = window
        self.sample_rate = sample_rate

    def _config(self):
        return FrontendConfig(self.frame_len, self.hop, self.dim, self.window)

    def fit(self, X=None, y=None):
        self.config_ = self._config()
        return self

    def transform(self, X):
        cfg = getattr(self, "config_", None) or self._config()
        return analyze(Waveform(X, self.sample_rate), cfg).data.T

    def inverse_transform(self, X):
        cfg = getattr(self, "config_", None) or self._config()
        data = check_matrix(X, "X", dim=cfg.dim, axis=1).T
        return synthesize(EmbeddingSequence(data, cfg.hop, cfg.frame_len, self.sample_rate), cfg).samples


@dataclass(frozen=True)
class CorpusSpec:
    n_utterances: int = 10
    duration_s: float = 2.0
    snr_range_db: tuple = (-5.0, 20.0)
    seed: int = 0
    sample_rate: int = 16000

    def __post_init__(self):
        check_int(self.n_utterances, "n_utterances", 0)
        check_float(self.duration_s, "duration_s", 0.0, low_open=True)
        check_int(self.seed, "seed", 0)
        check_int(self.sample_rate, "sample_rate", 1)
        low, high = (check_float(v, "snr_range_db") for v in self.snr_range_db)
        if low > high:
            raise ConfigError(f"snr_range_db low {low} exceeds high {high}")
        object.__setattr__(self, "snr_range_db", (low, high))


@dataclass(frozen=True)
class CorpusPair:
    clean: Waveform
    noisy: Waveform
    snr_db: float
    f0_hz: float = field(default=0.0)


def measure_snr(clean, noisy):
    """10*log10(|clean|^2 / |noisy - clean|^2) in dB."""
    c = clean.samples if isinstance(clean, Waveform) else np.asarray(clean, dtype=np.float64)
    n = noisy.samples if isinstance(noisy, Waveform) else np.asarray(noisy, dtype=np.float64)
    return 10.0 * np.log10(np.sum(c * c) / np.sum((n - c) ** 2))


def _pink(rng, n):
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.arange(spec.shape[0], dtype=np.float64)
    scale = np.zeros_like(freqs)
    scale[1:] = 1.0 / np.sqrt(freqs[1:])
    return np.fft.irfft(spec * scale, n)


def _unit_rms(x):
    rms = np.sqrt(np.mean(x * x))
    return x / rms if rms > 0 else x


def _utterance(rng, spec):
    sr = spec.sample_rate
    n = int(round(spec.duration_s * sr))
    t = np.arange(n) / sr

    f0 = rng.uniform(80.0, 300.0)
    n_tones = int(rng.integers(3, 9))
    clean = np.zeros(n)
    for k in range(1, n_tones + 1):
        amp = rng.uniform(0.3, 1.0) / k
        phase = rng.uniform(0.0, 2 * np.pi)
        if k * f0 < sr / 2:
            clean += amp * np.sin(2 * np.pi * k * f0 * t + phase)
    am_rate = rng.uniform(0.5, 3.0)
    am_phase = rng.uniform(0.0, 2 * np.pi)
    clean *= 1.0 + 0.6 * np.sin(2 * np.pi * am_rate * t + am_phase)
    peak = np.max(np.abs(clean))
    if peak > 0:
        clean *= 0.3 / peak

    snr_db = rng.uniform(*spec.snr_range_db)
    pink_share = rng.uniform(0.0, 1.0)
    noise = (1.0 - pink_share) * _unit_rms(rng.standard_normal(n)) + pink_share * _unit_rms(_pink(rng, n))
    noise *= np.sqrt(np.sum(clean**2) / (np.sum(noise**2) * 10.0 ** (snr_db / 10.0)))

    noisy = clean + noise
    peak = np.max(np.abs(noisy))
    if peak > 0.99:
        # common gain keeps the SNR unchanged
        clean *= 0.99 / peak
        noise *= 0.99 / peak
        noisy = clean + noise
    return Waveform(clean, sr), Waveform(noisy, sr), float(snr_db), float(f0)


def generate_corpus(spec=None):
    """Seeded harmonic-tone corpus with white/pink noise at drawn SNRs."""
    spec = spec or CorpusSpec()
    children = np.random.SeedSequence(spec.seed).spawn(spec.n_utterances)
    pairs = []
    for child in children:
        clean, noisy, snr_db, f0 = _utterance(np.random.default_rng(child), spec)
        pairs.append(CorpusPair(clean, noisy, snr_db, f0))
    return pairs


def smoothing_width(strength):
    """Odd moving-average width for ``temporal_smooth``: ``2*round(strength) + 1``."""
    strength = check_float(strength, "strength", 0.0)
    return 2 * int(round(strength)) + 1


def enhance(noisy, clean=None, mode="oracle_wiener", strength=1.0):
    """Simulated speech enhancer acting on embeddings.

    ``oracle_wiener`` applies the per-coefficient gain
    ``c^2 / (c^2 + max(eps, (n - c)^2))`` using the clean reference ``c``;
    ``temporal_smooth`` runs a moving average of width
    :func:`smoothing_width` along time for every coefficient.
    """
    x = noisy.data if isinstance(noisy, EmbeddingSequence) else check_matrix(noisy, "noisy")
    if mode == "oracle_wiener":
        if clean is None:
            raise ConfigError("oracle_wiener mode needs the clean reference")
        c = clean.data if isinstance(clean, EmbeddingSequence) else check_matrix(clean, "clean")
        if c.shape != x.shape:
            raise ShapeError(f"clean shape {c.shape} != noisy shape {x.shape}")
        c2 = c * c
        gain = c2 / (c2 + np.maximum(WIENER_EPS, (x - c) ** 2))
        out = gain * x
    elif mode == "temporal_smooth":
        width = smoothing_width(strength)
        if width > x.shape[1]:
            raise ConfigError(f"smoothing width {width} exceeds sequence length {x.shape[1]}")
        out = uniform_filter1d(x, size=width, axis=1, mode="reflect") if width > 1 else x.copy()
    else:
        raise ConfigError(f"unknown enhancement mode {mode!r}")
    if isinstance(noisy, EmbeddingSequence):
        return noisy.with_data(out)
    return out
