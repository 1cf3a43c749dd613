"""Command-line interface: ``purecodec {gen-data,train,encode,decode,analyze,eval}``.

Every command takes an optional flat ``key = value`` config file; flags
override config keys. Commands that write a directory also write the
effective config to ``config.txt`` inside it.
"""

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bitstream import bitrate, unpack
from .entropy import PEConfig, code_entropy, pe_reduction, perceptual_entropy, perplexity
from .exceptions import ConfigError, PureCodecError
from .fileio import load_stack, read_config, read_wav, save_stack, write_config, write_wav
from .frontend import CorpusSpec, FrontendConfig, analyze, enhance, generate_corpus, measure_snr
from .pipeline import decode, encode, evaluate
from .training import TrainConfig, train_stack

MANIFEST = "manifest.jsonl"
EFFECTIVE_CONFIG = "config.txt"
MODEL_FILE = "model.bin"
TRAIN_LOG = "train_log.jsonl"

_FLAG_KEYS = {
    "seed": "seed",
    "streams": "streams",
    "p_enh": "p_enh",
    "delay_steps": "delay_steps",
}


def _effective(args, defaults):
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(defaults)
    if getattr(args, "config", None):
        cfg.update(read_config(args.config))
    for attr, key in _FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            cfg[key] = str(value)
    return cfg


def _get(cfg, key, cast):
    try:
        return cast(cfg[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {cfg[key]!r}") from exc


def _frontend(cfg):
    return FrontendConfig(
        frame_len=_get(cfg, "frame_len", int),
        hop=_get(cfg, "hop", int),
        dim=_get(cfg, "dim", int),
        window=cfg["window"],
    )


def _emit(records, out=None):
    text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


CORPUS_DEFAULTS = {
    "n_utterances": "10",
    "duration_s": "2.0",
    "snr_range_db": "-5, 20",
    "seed": "0",
    "sample_rate": "16000",
}


def cmd_gen_data(args):
    cfg = _effective(args, CORPUS_DEFAULTS)
    low, high = (float(v) for v in cfg["snr_range_db"].split(","))
    spec = CorpusSpec(
        n_utterances=_get(cfg, "n_utterances", int),
        duration_s=_get(cfg, "duration_s", float),
        snr_range_db=(low, high),
        seed=_get(cfg, "seed", int),
        sample_rate=_get(cfg, "sample_rate", int),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, pair in enumerate(generate_corpus(spec)):
        clean_name, noisy_name = f"clean_{i:04d}.wav", f"noisy_{i:04d}.wav"
        write_wav(out / clean_name, pair.clean)
        write_wav(out / noisy_name, pair.noisy)
        # SNR as stored (after float32 rounding)
        stored = measure_snr(pair.clean.samples.astype(np.float32), pair.noisy.samples.astype(np.float32))
        entries.append(
            {"index": i, "clean": clean_name, "noisy": noisy_name, "snr_db": float(stored),
             "sample_rate": spec.sample_rate}
        )
    _emit(entries, out / MANIFEST)
    write_config(out / EFFECTIVE_CONFIG, cfg)
    print(f"wrote {len(entries)} pairs to {out}")
    return 0


def read_manifest(corpus_dir):
    corpus_dir = Path(corpus_dir)
    path = corpus_dir / MANIFEST
    if not path.exists():
        raise ConfigError(f"no {MANIFEST} in {corpus_dir}")
    rows = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    if not rows:
        raise ConfigError(f"{path} lists no utterances")
    return rows


TRAIN_DEFAULTS = {
    "corpus": "",
    "frame_len": "640",
    "hop": "320",
    "dim": "64",
    "window": "hann",
    "enhance_mode": "oracle_wiener",
    "enhance_strength": "1",
    "L": "8",
    "B": "64",
    "beta": "0.25",
    "ema_decay": "0.99",
    "p_enh": "0.5",
    "delay_steps": "0",
    "kmeans_iters": "20",
    "reseed_threshold": "0.001",
    "dropout_levels": "1, 2, 4, 8",
    "steps": "300",
    "batch_frames": "256",
    "seed": "0",
    "zero_code": "false",
}


def cmd_train(args):
    cfg = _effective(args, TRAIN_DEFAULTS)
    if args.corpus:
        cfg["corpus"] = args.corpus
    if not cfg["corpus"]:
        raise ConfigError("no corpus given (config key 'corpus' or --corpus)")
    frontend = _frontend(cfg)
    train_cfg = TrainConfig.from_mapping(cfg)
    mode = cfg["enhance_mode"]
    strength = _get(cfg, "enhance_strength", float)

    corpus_dir = Path(cfg["corpus"])
    rows = read_manifest(corpus_dir)
    sample_rate = int(rows[0]["sample_rate"])
    dataset = []
    for row in rows:
        noisy = analyze(read_wav(corpus_dir / row["noisy"], sample_rate), frontend)
        clean = analyze(read_wav(corpus_dir / row["clean"], sample_rate), frontend) if mode == "oracle_wiener" else None
        dataset.append((noisy, enhance(noisy, clean, mode=mode, strength=strength)))

    start = time.perf_counter()
    stack, log = train_stack(dataset, train_cfg)
    elapsed = time.perf_counter() - start

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_stack(out / MODEL_FILE, stack, frontend, sample_rate)
    (out / TRAIN_LOG).write_text(log.to_jsonl())
    write_config(out / EFFECTIVE_CONFIG, cfg)
    final = log.records[-1].commitment_loss if log.records else float("nan")
    print(
        f"trained L={train_cfg.L} B={train_cfg.B} D={frontend.dim} on {len(dataset)} utterances, "
        f"{train_cfg.steps} steps in {elapsed:.1f} s; final commitment loss {final:.6g}"
    )
    return 0


def cmd_encode(args):
    cfg = _effective(args, {})
    stack, frontend, sample_rate = load_stack(args.model)
    wave = read_wav(args.input, sample_rate)
    n_streams = _get(cfg, "streams", int) if "streams" in cfg else None
    enhanced = read_wav(args.enhance_ref, sample_rate) if args.enhance_ref else None
    packet, result = encode(wave, stack, frontend, n_streams, enhanced)
    Path(args.out).write_bytes(packet)
    rate = bitrate(sample_rate, frontend.hop, result.streams_used, stack.codebook_size)
    _emit([{
        "bitrate_bps": rate,
        "bytes": len(packet),
        "frames": result.n_frames,
        "streams": result.streams_used,
        "anchored": result.anchored,
        "out": str(args.out),
    }])
    return 0


def cmd_decode(args):
    cfg = _effective(args, {})
    stack, frontend, _ = load_stack(args.model)
    n_streams = _get(cfg, "streams", int) if "streams" in cfg else None
    packet = Path(args.input).read_bytes()
    wave = decode(packet, stack, frontend, n_streams)
    write_wav(args.out, wave)
    _emit([{"samples": len(wave), "sample_rate": wave.sample_rate, "out": str(args.out)}])
    return 0


PE_KEYS = ("fft_len", "hop", "window", "full_scale_spl")


def _pe_config(cfg):
    kwargs = {}
    for key in PE_KEYS:
        if key in cfg:
            kwargs[key] = cfg[key] if key == "window" else (float(cfg[key]) if key == "full_scale_spl" else int(cfg[key]))
    return PEConfig(**kwargs)


def cmd_analyze(args):
    cfg = _effective(args, {})
    pe_cfg = _pe_config(cfg)
    records, summary, waves = [], [], []
    for name in args.inputs:
        path = Path(name)
        if path.suffix == ".pure":
            meta, indices = unpack(path.read_bytes())
            for stream, row in enumerate(indices, start=1):
                if row.size == 0:
                    continue
                h = code_entropy(row, meta.codebook_size)
                ppl = perplexity(np.bincount(row, minlength=meta.codebook_size))
                records.append({"file": name, "kind": "code_entropy", "stream": stream,
                                "entropy_bits": h, "perplexity": ppl,
                                "max_bits": float(np.log2(meta.codebook_size))})
                summary.append(f"{name} stream {stream}: H = {h:.3f} bits, perplexity {ppl:.2f}")
        else:
            wave = read_wav(path)
            report = perceptual_entropy(wave, pe_cfg)
            records.append({"file": name, "kind": "pe", **report.to_record()})
            summary.append(
                f"{name}: PE {report.pe_bits_per_sample:.4f} bits/sample, {report.pe_bits_per_second:.1f} bits/s"
            )
            waves.append((name, wave))
    if args.reduction:
        if len(waves) != 2:
            raise ConfigError("--reduction needs exactly two WAV inputs (noisy, enhanced)")
        (noisy_name, noisy), (enh_name, enh) = waves
        pct = pe_reduction(noisy, enh, pe_cfg)
        records.append({"kind": "pe_reduction", "noisy": noisy_name, "enhanced": enh_name, "percent": pct})
        summary.append(f"PE reduction {noisy_name} -> {enh_name}: {pct:.2f}%")
    _emit(records, args.out)
    print("\n".join(summary), file=sys.stdout if args.out else sys.stderr)
    return 0


def cmd_eval(args):
    ref = read_wav(args.ref)
    est = read_wav(args.est, ref.sample_rate)
    packet = stack = frontend = None
    if args.packet:
        if not args.model:
            raise ConfigError("--packet needs --model")
        packet = Path(args.packet).read_bytes()
        stack, frontend, _ = load_stack(args.model)
    report = evaluate(ref, est, packet, stack, frontend)
    _emit([report.to_record()], args.out)
    lines = [f"SDR {report.sdr_db:.3f} dB"]
    if report.bitrate_bps is not None:
        lines.append(f"bitrate {report.bitrate_bps:g} bps, embedding MSE {report.embedding_mse:.6g}")
    print("; ".join(lines), file=sys.stdout if args.out else sys.stderr)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="purecodec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic clean/noisy corpus")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a quantizer stack on a corpus")
    p.add_argument("--config")
    p.add_argument("--corpus")
    p.add_argument("--seed", type=int)
    p.add_argument("--p-enh", dest="p_enh", type=float)
    p.add_argument("--delay-steps", dest="delay_steps", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="encode a WAV file into a .pure packet")
    p.add_argument("input")
    p.add_argument("--model", required=True)
    p.add_argument("--config")
    p.add_argument("--streams", type=int)
    p.add_argument("--enhance-ref", dest="enhance_ref", help="enhanced WAV anchoring stage 1")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a .pure packet into a WAV file")
    p.add_argument("input")
    p.add_argument("--model", required=True)
    p.add_argument("--config")
    p.add_argument("--streams", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("analyze", help="perceptual entropy of WAVs, code entropy of packets")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--config")
    p.add_argument("--reduction", action="store_true", help="report PE reduction from the first to the second WAV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("eval", help="SDR and code statistics of a decoded file")
    p.add_argument("ref")
    p.add_argument("est")
    p.add_argument("--packet")
    p.add_argument("--model")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PureCodecError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
