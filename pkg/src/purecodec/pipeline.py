"""End-to-end helpers: corpus embedding, encode/decode and evaluation."""

from dataclasses import asdict, dataclass

import numpy as np

from .bitstream import StreamMeta, bitrate, pack, unpack
from .entropy import code_entropy
from .exceptions import PureCodecError, ShapeError
from .frontend import EmbeddingSequence, analyze, enhance, synthesize
from .rvq import partial_reconstruct, quantize, quantize_pure

SDR_CAP_DB = 100.0


def embed_pair(pair, frontend, mode="oracle_wiener", strength=1.0):
    """``(embedding, enhanced embedding)`` of one clean/noisy corpus pair."""
    noisy = analyze(pair.noisy, frontend)
    clean = analyze(pair.clean, frontend) if mode == "oracle_wiener" else None
    return noisy, enhance(noisy, clean, mode=mode, strength=strength)


def embed_corpus(pairs, frontend, mode="oracle_wiener", strength=1.0):
    return [embed_pair(p, frontend, mode, strength) for p in pairs]


def sdr(ref, est):
    """Signal-to-distortion ratio in dB, capped at 100 dB.

    The longer signal is trimmed to the shorter one first.
    """
    r = np.asarray(getattr(ref, "samples", ref), dtype=np.float64)
    e = np.asarray(getattr(est, "samples", est), dtype=np.float64)
    n = min(r.shape[0], e.shape[0])
    r, e = r[:n], e[:n]
    signal = np.sum(r * r)
    if signal == 0:
        raise PureCodecError("SDR undefined for an all-zero reference")
    err = np.sum((r - e) ** 2)
    if err == 0:
        return SDR_CAP_DB
    return float(min(10.0 * np.log10(signal / err), SDR_CAP_DB))


def stream_meta(stack, frontend, sample_rate, result):
    return StreamMeta(
        sample_rate=sample_rate,
        hop=frontend.hop,
        dim=frontend.dim,
        n_quantizers=stack.n_stages,
        codebook_size=stack.codebook_size,
        streams_used=result.streams_used,
        n_frames=result.n_frames,
        anchored=result.anchored,
    )


def encode(wave, stack, frontend, n_streams=None, enhanced=None):
    """Analyze, quantize (anchored when ``enhanced`` is given) and pack.

    Returns ``(packet_bytes, result)``.
    """
    emb = analyze(wave, frontend)
    if enhanced is not None:
        enh = enhanced if isinstance(enhanced, EmbeddingSequence) else analyze(enhanced, frontend)
        if enh.shape != emb.shape:
            raise ShapeError(f"enhancement reference gives {enh.shape}, input gives {emb.shape}")
        result = quantize_pure(emb, enh, stack, n_streams)
    else:
        result = quantize(emb, stack, n_streams)
    return pack(result, stream_meta(stack, frontend, wave.sample_rate, result)), result


def check_geometry(meta, stack, frontend):
    if (meta.dim, meta.hop, meta.n_quantizers, meta.codebook_size) != (
        frontend.dim, frontend.hop, stack.n_stages, stack.codebook_size
    ):
        raise ShapeError(
            "packet geometry (dim={}, hop={}, L={}, B={}) does not match the model (dim={}, hop={}, L={}, B={})".format(
                meta.dim, meta.hop, meta.n_quantizers, meta.codebook_size,
                frontend.dim, frontend.hop, stack.n_stages, stack.codebook_size,
            )
        )


def decode(packet, stack, frontend, n_streams=None):
    """Unpack, sum the first ``n_streams`` codewords and synthesize a waveform."""
    meta, indices = unpack(packet)
    check_geometry(meta, stack, frontend)
    upto = meta.streams_used if n_streams is None else n_streams
    if not 1 <= upto <= meta.streams_used:
        raise ShapeError(f"packet carries {meta.streams_used} streams, cannot decode {upto}")
    recon = partial_reconstruct(indices, stack, upto)
    emb = EmbeddingSequence(recon, hop=frontend.hop, frame_len=frontend.frame_len, sample_rate=meta.sample_rate)
    return synthesize(emb, frontend)


@dataclass
class EvalReport:
    sdr_db: float
    embedding_mse: float = None
    residual_energy: list = None
    bitrate_bps: float = None
    code_entropy_bits: list = None

    def to_record(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


def evaluate(ref, est, packet=None, stack=None, frontend=None):
    """SDR of ``est`` against ``ref``; with a packet and model also code statistics."""
    report = EvalReport(sdr_db=sdr(ref, est))
    if packet is None:
        return report
    if stack is None or frontend is None:
        raise PureCodecError("packet statistics need the model")
    meta, indices = unpack(packet)
    check_geometry(meta, stack, frontend)
    emb = analyze(ref, frontend).data
    if emb.shape[1] != meta.n_frames:
        raise ShapeError(f"reference has {emb.shape[1]} frames, packet has {meta.n_frames}")
    energies = []
    for level in range(1, meta.streams_used + 1):
        diff = emb - partial_reconstruct(indices, stack, level)
        energies.append(float(np.mean(np.sum(diff * diff, axis=0))))
    report.embedding_mse = energies[-1] / emb.shape[0]
    report.residual_energy = energies
    report.bitrate_bps = bitrate(meta.sample_rate, meta.hop, meta.streams_used, meta.codebook_size)
    report.code_entropy_bits = [code_entropy(row, meta.codebook_size) for row in indices] if meta.n_frames else []
    return report

