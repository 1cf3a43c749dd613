"""Acceptance criteria, one test each.

Every test records a one-line PASS/FAIL verdict that is printed in the
``acceptance criteria`` section at the end of the pytest run.
"""

import functools
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES
from scipy.stats import binomtest

from purecodec import (
    CorpusSpec,
    FrontendConfig,
    QuantizationResult,
    QuantizerStack,
    StreamMeta,
    TrainConfig,
    Waveform,
    analyze,
    bitrate,
    decode,
    encode,
    enhance,
    generate_corpus,
    nearest_code,
    pack,
    partial_reconstruct,
    pe_reduction,
    perceptual_entropy,
    quantize,
    quantize_pure,
    sdr,
    synthesize,
    train_stack,
    unpack,
)
from purecodec.bitstream import HEADER_SIZE, MAGIC
from purecodec.cli import main
from purecodec.exceptions import BitstreamError
from purecodec.pipeline import embed_corpus
from purecodec.training import EnhancementScheduler


def criterion(number, title):
    """Run the test body, which returns a detail string, and log the verdict."""

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
                ACCEPTANCE_LINES[number] = f"FAIL  {number:>2}. {title}: {msg}"
                raise
            ACCEPTANCE_LINES[number] = f"PASS  {number:>2}. {title}: {detail}"

        return run

    return wrap


def loop_scan(x, entries):
    best, best_d = 0, None
    for j, row in enumerate(entries):
        d = 0.0
        for a, b in zip(x, row):
            d += (a - b) * (a - b)
        if best_d is None or d < best_d:
            best, best_d = j, d
    return best


@criterion(1, "nearest-code oracle equivalence")
def test_oracle_equivalence():
    rng = np.random.default_rng(1)
    cases = []
    for i in range(10_000):
        D, B = int(rng.integers(1, 9)), int(rng.integers(1, 65))
        if i % 2:
            # coarse integer grid: many exact ties between distinct entries
            entries = rng.integers(-2, 3, size=(B, D)).astype(float)
            x = rng.integers(-2, 3, size=D).astype(float)
        else:
            entries = rng.standard_normal((B, D))
            x = entries[rng.integers(B)].copy() if i % 4 == 0 else rng.standard_normal(D)
        cases.append((x, entries))
    start = time.perf_counter()
    got = [nearest_code(x, e)[0] for x, e in cases]
    elapsed = time.perf_counter() - start
    expected = [loop_scan(x.tolist(), e.tolist()) for x, e in cases]
    ties = sum(
        np.count_nonzero(np.isclose(((e - x) ** 2).sum(1), ((e - x) ** 2).sum(1).min(), rtol=0, atol=0)) > 1
        for x, e in cases
    )
    mismatches = sum(a != b for a, b in zip(got, expected))
    assert mismatches == 0, f"{mismatches} mismatches"
    assert elapsed < 5.0, f"{elapsed:.2f} s"
    return f"10000 queries, {ties} with ties, 0 mismatches, {elapsed:.2f} s"


@criterion(2, "telescoping identity")
def test_telescoping():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        L, B, D, T = (int(v) for v in (rng.integers(1, 9), rng.integers(1, 65), rng.integers(1, 17), rng.integers(1, 60)))
        stack = QuantizerStack.from_array(rng.standard_normal((L, B, D)) * rng.uniform(0.1, 3))
        q = rng.standard_normal((D, T)) * rng.uniform(0.1, 3)
        for res in (quantize(q, stack), quantize_pure(q, q + rng.standard_normal(q.shape), stack)):
            for l in range(1, L + 1):
                err = np.sum((q - partial_reconstruct(res, stack, l)) ** 2, axis=0)
                worst = max(worst, float(np.max(np.abs(err - res.frame_residual_energy[l - 1]))))
    assert worst <= 1e-9, f"max deviation {worst:.3g}"
    return f"100 sequences, max deviation {worst:.2e}"


@criterion(3, "anchoring degeneracy")
def test_degeneracy():
    rng = np.random.default_rng(3)
    for _ in range(100):
        L, B, D, T = (int(v) for v in (rng.integers(1, 9), rng.integers(1, 65), rng.integers(1, 17), rng.integers(1, 60)))
        stack = QuantizerStack.from_array(rng.standard_normal((L, B, D)))
        q = rng.standard_normal((D, T))
        l = int(rng.integers(1, L + 1))
        a, b = quantize_pure(q, q.copy(), stack, l), quantize(q, stack, l)
        assert np.array_equal(a.indices, b.indices)
        assert np.array_equal(a.frame_residual_energy, b.frame_residual_energy)
    return "100 cases bit-identical"


@criterion(4, "prefix stability and bitrate ladder")
def test_prefix_and_ladder():
    rng = np.random.default_rng(4)
    stack = QuantizerStack.from_array(rng.standard_normal((8, 1024, 16)))
    q = rng.standard_normal((16, 50))
    full = quantize(q, stack, 8)
    rates = []
    for l in (1, 2, 4, 8):
        res = quantize(q, stack, l)
        assert np.array_equal(res.indices, full.indices[:l])
        packet = pack(res, StreamMeta(16000, 320, 16, 8, 1024, l, 50))
        meta, idx = unpack(packet)
        assert np.array_equal(idx, full.indices[:l])
        rates.append(meta.bitrate)
        assert bitrate(16000, 320, l, 1024) == meta.bitrate
    assert rates == [500, 1000, 2000, 4000], rates
    return "nested prefixes at l=1,2,4,8; bitrates " + "/".join(f"{r:g}" for r in rates) + " bps"


@criterion(5, "training effectiveness")
def test_training_effectiveness():
    start = time.perf_counter()
    data = embed_corpus(generate_corpus(CorpusSpec(n_utterances=10, seed=0)), FrontendConfig(dim=8))
    stack, log = train_stack(data, TrainConfig(L=2, B=16, steps=200, dropout_levels=(1, 2), seed=0))
    elapsed = time.perf_counter() - start
    frames = np.concatenate([q.data for q, _ in data], axis=1)
    ratio = quantize(frames, stack).residual_energy[-1] / np.mean(np.sum(frames**2, axis=0))
    monotone = all(np.all(np.diff(w) <= 0) for w in log.kmeans_wcss)
    assert ratio <= 0.25, f"residual ratio {ratio:.3f}"
    assert monotone, "WCSS increased"
    assert elapsed < 120, f"{elapsed:.1f} s"
    return f"residual {100 * ratio:.1f}% of input energy, WCSS monotone, {elapsed:.1f} s"


@criterion(6, "anchoring effect")
def test_anchoring_effect(anchoring_sweep):
    wins = sum(r["pure"]["anchor_distance"] < r["base"]["anchor_distance"] for r in anchoring_sweep)
    p = binomtest(wins, len(anchoring_sweep), 0.5, alternative="greater").pvalue
    assert wins >= 18, f"{wins}/20 seeds"
    assert p < 0.01
    return f"PURE closer to enhanced on {wins}/20 seeds, sign test p={p:.1e}"


@criterion(7, "scheduler statistics")
def test_scheduler():
    parts = []
    for p_enh in (0.25, 0.5, 0.75):
        sched = EnhancementScheduler(p_enh, delay_steps=1000, seed=int(p_enh * 100))
        early = sum(sched.should_use_enhanced(s) for s in range(1000))
        rate = np.mean([sched.should_use_enhanced(s) for s in range(1000, 101_000)])
        assert early == 0, f"{early} firings before the delay"
        assert abs(rate - p_enh) <= 0.01, f"p_enh={p_enh}: rate {rate:.4f}"
        parts.append(f"{p_enh}->{rate:.4f}")
    return "rates " + ", ".join(parts) + "; no firings before delay"


@criterion(8, "perceptual entropy direction")
def test_pe_direction():
    cfg = FrontendConfig(dim=640)
    reductions = []
    for pair in generate_corpus(CorpusSpec(n_utterances=100, snr_range_db=(0.0, 0.0), seed=8)):
        noisy = analyze(pair.noisy, cfg)
        enhanced = enhance(noisy, analyze(pair.clean, cfg))
        reductions.append(pe_reduction(synthesize(noisy, cfg), synthesize(enhanced, cfg)))
    reductions = np.array(reductions)
    positive = int(np.sum(reductions > 0))
    silence = perceptual_entropy(Waveform(np.zeros(16000))).pe_bits_per_sample
    assert positive >= 95, f"{positive}/100 positive"
    assert reductions.mean() > 20, f"mean {reductions.mean():.1f}%"
    assert silence == 0.0
    return f"{positive}/100 positive, mean reduction {reductions.mean():.1f}%, PE(silence)=0"


def _random_packet(rng):
    B = int(rng.choice([1, 2, 3, 16, 1000, 1024, 65535]) if rng.random() < 0.5 else rng.integers(1, 65536))
    L = int(rng.integers(1, 9))
    streams, frames = int(rng.integers(1, L + 1)), int(rng.integers(0, 60))
    idx = rng.integers(B, size=(streams, frames))
    meta = StreamMeta(int(rng.integers(1, 96001)), int(rng.integers(1, 4096)), int(rng.integers(1, 1024)), L, B,
                      streams, frames, bool(rng.integers(2)))
    return QuantizationResult(idx, np.zeros(idx.shape), meta.anchored), meta


@criterion(9, "bitstream integrity")
def test_bitstream_integrity():
    rng = np.random.default_rng(9)
    packets = []
    for _ in range(1000):
        res, meta = _random_packet(rng)
        data = pack(res, meta)
        got_meta, idx = unpack(data)
        assert np.array_equal(idx, res.indices)
        assert (got_meta.sample_rate, got_meta.hop, got_meta.dim, got_meta.n_quantizers, got_meta.codebook_size,
                got_meta.streams_used, got_meta.n_frames, got_meta.anchored) == (
            meta.sample_rate, meta.hop, meta.dim, meta.n_quantizers, meta.codebook_size,
            res.streams_used, res.n_frames, res.anchored)
        packets.append(data)

    n = 1_000_000
    parsed = rejected = 0
    blob = rng.integers(0, 256, size=n * 48, dtype=np.uint8).tobytes()
    lengths = rng.integers(0, 48, size=n)
    for i in range(n):
        kind = i % 4
        if kind == 0:
            data = blob[i * 48 : i * 48 + lengths[i]]
        elif kind == 1:
            data = MAGIC + b"\x01" + blob[i * 48 : i * 48 + lengths[i]]
        else:
            # mutate or cut a valid packet
            data = bytearray(packets[i % 1000])
            if kind == 2 and data:
                pos = int(lengths[i]) % len(data)
                data[pos] = blob[i * 48]
            else:
                data = data[: int(lengths[i]) % (len(data) + 1) + HEADER_SIZE // 2]
            data = bytes(data)
        try:
            unpack(data)
            parsed += 1
        except BitstreamError:
            rejected += 1
    assert parsed + rejected == n
    return f"1000 round trips exact; {n} fuzz inputs: {parsed} parsed, {rejected} typed errors, no crashes"


TRAIN_CONFIG = "dim = 8\nL = 2\nB = 16\nsteps = 200\ndropout_levels = 1, 2\n"


def _pipeline(workdir, monkeypatch):
    monkeypatch.chdir(workdir)
    workdir.joinpath("train.cfg").write_text(TRAIN_CONFIG)
    steps = (
        ["gen-data", "--seed", "3", "--out", "corpus"],
        ["train", "--config", "train.cfg", "--corpus", "corpus", "--out", "model"],
        ["encode", "corpus/noisy_0002.wav", "--model", "model/model.bin", "--out", "x.pure"],
        ["decode", "x.pure", "--model", "model/model.bin", "--out", "x.wav"],
    )
    for argv in steps:
        assert main(argv) == 0, argv
    return {p.relative_to(workdir): p.read_bytes() for p in sorted(workdir.rglob("*")) if p.is_file()}


@criterion(10, "end-to-end determinism")
def test_end_to_end_determinism(tmp_path, monkeypatch):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    first = _pipeline(tmp_path / "a", monkeypatch)
    second = _pipeline(tmp_path / "b", monkeypatch)
    assert first.keys() == second.keys()
    differing = [str(k) for k in first if first[k] != second[k]]
    assert not differing, f"differs: {differing}"
    return f"{len(first)} artifacts byte-identical across two runs (gen-data, train, encode, decode)"


@criterion(11, "filterbank fidelity")
def test_filterbank_fidelity():
    rng = np.random.default_rng(11)
    cfg = FrontendConfig(dim=640)
    worst = 0.0
    for _ in range(100):
        x = rng.uniform(-1, 1, int(rng.integers(640, 16000)))
        emb = analyze(Waveform(x), cfg)
        out = synthesize(emb, cfg).samples
        inner = cfg.interior(emb.frames)
        worst = max(worst, float(np.max(np.abs(out[inner] - x[inner]), initial=0.0)))
    assert worst <= 1e-9, f"round trip error {worst:.3g}"

    fe = FrontendConfig()
    pairs = generate_corpus(CorpusSpec(n_utterances=10, seed=0))
    stack, _ = train_stack(embed_corpus(pairs, fe), TrainConfig())
    gains = []
    for pair in pairs:
        packet, _ = encode(pair.noisy, stack, fe)
        low, high = (sdr(pair.noisy, decode(packet, stack, fe, l)) for l in (1, 8))
        gains.append(high - low)
    assert min(gains) > 0, f"SDR gain l=8 over l=1 min {min(gains):.3f} dB"
    return f"round trip max error {worst:.1e}; SDR(l=8) - SDR(l=1) >= {min(gains):.2f} dB on all 10 utterances"


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
