"""Entropy measures: Johnston-style perceptual entropy and code-stream statistics."""

from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

from .exceptions import ConfigError, PureCodecError, ShapeError, SignalTooShortError
from .validation import check_float, check_int

# Band edges in Hz, versioned. v1: 25 bands of equal width on the Bark scale
# (Zwicker & Terhardt formula) between 0 and 8 kHz, rounded to the nearest Hz.
BARK_EDGES_HZ_V1 = (
    0, 86, 173, 261, 352, 445, 543, 646, 755, 872, 1000, 1140, 1295,
    1470, 1669, 1898, 2166, 2483, 2859, 3307, 3836, 4453, 5160, 5966, 6894, 8000,
)
BARK_TABLE_VERSION = 1


def hz_to_bark(f):
    f = np.asarray(f, dtype=np.float64)
    return 13.0 * np.arctan(0.00076 * f) + 3.5 * np.arctan((f / 7500.0) ** 2)


def threshold_in_quiet_db(f):
    """Terhardt's absolute hearing threshold in dB SPL (frequencies clipped at 20 Hz)."""
    khz = np.maximum(np.asarray(f, dtype=np.float64), 20.0) / 1000.0
    return 3.64 * khz**-0.8 - 6.5 * np.exp(-0.6 * (khz - 3.3) ** 2) + 1e-3 * khz**4


def spreading_db(dz):
    """Schroeder spreading function; ``dz`` is maskee minus masker in Bark."""
    dz = np.asarray(dz, dtype=np.float64) + 0.474
    return 15.81 + 7.5 * dz - 17.5 * np.sqrt(1.0 + dz * dz)


@dataclass(frozen=True)
class PEConfig:
    """Parameters of the perceptual-entropy estimate.

    ``full_scale_spl`` maps a unit-amplitude sinusoid to that sound pressure
    level when comparing against the threshold in quiet.
    """

    fft_len: int = 2048
    hop: int = 1024
    window: str = "hann"
    band_edges_hz: tuple = BARK_EDGES_HZ_V1
    tonal_offset_db: float = 14.5
    noise_offset_db: float = 5.5
    sfm_tonal_db: float = -60.0
    full_scale_spl: float = 96.0
    absolute_threshold: bool = True

    def __post_init__(self):
        n = check_int(self.fft_len, "fft_len", 2)
        if n & (n - 1):
            raise ConfigError(f"fft_len must be a power of two, got {n}")
        check_int(self.hop, "hop", 1, n)
        edges = tuple(float(e) for e in self.band_edges_hz)
        if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ConfigError("band edges must be strictly increasing")
        object.__setattr__(self, "band_edges_hz", edges)
        check_float(self.sfm_tonal_db, "sfm_tonal_db", high=0.0, high_open=True)

    @property
    def n_bands(self):
        return len(self.band_edges_hz) - 1


@dataclass(frozen=True)
class PEReport:
    pe_bits_per_sample: float
    pe_bits_per_second: float
    frame_pe: np.ndarray

    def to_record(self):
        return {
            "pe_bits_per_sample": self.pe_bits_per_sample,
            "pe_bits_per_second": self.pe_bits_per_second,
            "n_frames": int(self.frame_pe.shape[0]),
        }


def _band_layout(cfg, sample_rate):
    freqs = np.arange(cfg.fft_len // 2 + 1) * sample_rate / cfg.fft_len
    band_of_bin = np.searchsorted(np.asarray(cfg.band_edges_hz), freqs, side="right") - 1
    band_of_bin[freqs >= cfg.band_edges_hz[-1]] = -1
    used = np.unique(band_of_bin[band_of_bin >= 0])
    # renumber so that empty bands (above Nyquist, or narrower than a bin) drop out
    remap = -np.ones(cfg.n_bands, dtype=np.int64)
    remap[used] = np.arange(used.size)
    band_of_bin = np.where(band_of_bin >= 0, remap[np.maximum(band_of_bin, 0)], -1)
    return freqs, band_of_bin, used


def perceptual_entropy(wave, cfg=None, sample_rate=None):
    """Perceptual entropy of a mono signal.

    Per frame: power spectrum, band energies, spreading across bands, a
    tonality-dependent offset from the spectral flatness measure, and the
    threshold in quiet give a band masking threshold ``T``; each bin then costs
    ``log2(2*floor(|Re|/s) + 1) + log2(2*floor(|Im|/s) + 1)`` bits with
    ``s = sqrt(6*T/k)`` for a band of ``k`` bins.
    """
    cfg = cfg or PEConfig()
    samples = getattr(wave, "samples", wave)
    sr = sample_rate or getattr(wave, "sample_rate", 16000)
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ShapeError("perceptual entropy needs a mono signal")
    n = cfg.fft_len
    if samples.shape[0] < n:
        raise SignalTooShortError(f"signal of {samples.shape[0]} samples is shorter than fft_len={n}")

    win = get_window("hann" if cfg.window == "hann" else cfg.window, n, fftbins=True)
    frames = np.lib.stride_tricks.sliding_window_view(samples, n)[:: cfg.hop]
    spec = np.fft.rfft(frames * win, axis=1)
    power = spec.real**2 + spec.imag**2

    freqs, band_of_bin, used = _band_layout(cfg, sr)
    n_bands = used.size
    in_band = band_of_bin >= 0
    bins_per_band = np.bincount(band_of_bin[in_band], minlength=n_bands).astype(np.float64)
    member = np.zeros((n_bands, freqs.shape[0]))
    member[band_of_bin[in_band], np.flatnonzero(in_band)] = 1.0
    energy = power @ member.T

    edges = np.asarray(cfg.band_edges_hz)
    centers = hz_to_bark(0.5 * (edges[used] + edges[used + 1]))
    spread = 10.0 ** (spreading_db(centers[:, None] - centers[None, :]) / 10.0)
    spread_energy = energy @ spread.T / spread.sum(axis=1)

    p = power[:, in_band]
    tiny = np.finfo(np.float64).tiny
    arith = p.mean(axis=1)
    geo = np.exp(np.mean(np.log(p + tiny), axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        sfm_db = np.where(arith > 0, 10.0 * np.log10(np.maximum(geo, tiny) / arith), cfg.sfm_tonal_db)
    alpha = np.minimum(sfm_db / cfg.sfm_tonal_db, 1.0)[:, None]
    offset_db = alpha * (cfg.tonal_offset_db + centers[None, :]) + (1.0 - alpha) * cfg.noise_offset_db
    threshold = spread_energy * 10.0 ** (-offset_db / 10.0)

    if cfg.absolute_threshold:
        full_scale = n * np.sum(win * win) / 4.0
        ath_db = np.full(n_bands, np.inf)
        np.minimum.at(ath_db, band_of_bin[in_band], threshold_in_quiet_db(freqs[in_band]))
        quiet = bins_per_band * full_scale * 10.0 ** ((ath_db - cfg.full_scale_spl) / 10.0)
        threshold = np.maximum(threshold, quiet[None, :])

    step = np.sqrt(6.0 * threshold / bins_per_band[None, :])[:, band_of_bin[in_band]]
    re = np.abs(spec.real[:, in_band])
    im = np.abs(spec.imag[:, in_band])
    with np.errstate(divide="ignore", invalid="ignore"):
        q_re = np.where(step > 0, np.floor(re / step), 0.0)
        q_im = np.where(step > 0, np.floor(im / step), 0.0)
    frame_pe = (np.log2(2.0 * q_re + 1.0) + np.log2(2.0 * q_im + 1.0)).sum(axis=1)

    per_sample = float(frame_pe.mean() / n)
    return PEReport(per_sample, per_sample * sr, frame_pe)


def pe_reduction(noisy, enhanced, cfg=None):
    """Relative PE drop from ``noisy`` to ``enhanced``, in percent (may be negative)."""
    sr_a = getattr(noisy, "sample_rate", None)
    sr_b = getattr(enhanced, "sample_rate", None)
    if sr_a is not None and sr_b is not None and sr_a != sr_b:
        raise ShapeError(f"sample rates differ: {sr_a} vs {sr_b}")
    pe_noisy = perceptual_entropy(noisy, cfg).pe_bits_per_sample
    if pe_noisy == 0:
        raise PureCodecError("PE of the noisy signal is zero; reduction undefined")
    pe_enh = perceptual_entropy(enhanced, cfg).pe_bits_per_sample
    return 100.0 * (1.0 - pe_enh / pe_noisy)


def _entropy_bits(counts):
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    p = counts[counts > 0] / total
    return float(max(0.0, -np.sum(p * np.log2(p))))


def code_entropy(indices, B):
    """Shannon entropy (bits) of the empirical histogram of one code stream."""
    indices = np.asarray(indices)
    B = check_int(B, "B", 1)
    if indices.size == 0:
        raise ShapeError("empty code stream")
    if indices.min() < 0 or indices.max() >= B:
        raise ShapeError(f"code index out of range for B={B}")
    return min(_entropy_bits(np.bincount(indices.ravel(), minlength=B)), float(np.log2(B)))


def perplexity(usage_histogram):
    """``2**H`` of a usage histogram; lies in ``[1, len(histogram)]``."""
    hist = np.asarray(usage_histogram, dtype=np.float64)
    if hist.size == 0 or hist.sum() <= 0:
        raise ShapeError("perplexity needs a non-empty histogram with positive mass")
    return float(min(max(2.0 ** _entropy_bits(hist), 1.0), hist.size))
