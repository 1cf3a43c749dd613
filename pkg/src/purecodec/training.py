"""Codebook learning for the residual quantizer stack.

Codebooks start from Lloyd k-means (stage by stage, each stage clustering the
residuals left by the stages before it) and are then refined with
exponential-moving-average cluster means on random frame batches. A seeded
Bernoulli scheduler decides per batch whether stage 1 is anchored to the
enhanced embeddings or to the original ones.
"""

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .entropy import perplexity
from .exceptions import ConfigError, ShapeError
from .frontend import EmbeddingSequence
from .rvq import Codebook, QuantizerStack, assign, quantize
from .validation import as_generator, check_float, check_int, check_matrix

EMA_EPS = 1e-12
RESEED_NOISE = 1e-4
EVAL_FRAMES = 4096


@dataclass(frozen=True)
class TrainConfig:
    L: int = 8
    B: int = 64
    beta: float = 0.25
    ema_decay: float = 0.99
    p_enh: float = 0.5
    delay_steps: int = 0
    kmeans_iters: int = 20
    reseed_threshold: float = 1e-3
    dropout_levels: tuple = (1, 2, 4, 8)
    steps: int = 300
    batch_frames: int = 256
    seed: int = 0
    zero_code: bool = False

    def __post_init__(self):
        check_int(self.L, "L", 1, 255)
        check_int(self.B, "B", 1, 65535)
        check_float(self.beta, "beta", 0.0)
        check_float(self.ema_decay, "ema_decay", 0.0, 1.0, low_open=True, high_open=True)
        check_float(self.p_enh, "p_enh", 0.0, 1.0)
        check_int(self.delay_steps, "delay_steps", 0)
        check_int(self.kmeans_iters, "kmeans_iters", 0)
        check_float(self.reseed_threshold, "reseed_threshold", 0.0, 1.0)
        check_int(self.steps, "steps", 0)
        check_int(self.batch_frames, "batch_frames", 1)
        check_int(self.seed, "seed", 0)
        levels = tuple(int(v) for v in self.dropout_levels) or (self.L,)
        levels = tuple(v for v in levels if v <= self.L) or (self.L,)
        for v in levels:
            check_int(v, "dropout level", 1, self.L)
        object.__setattr__(self, "dropout_levels", levels)
        object.__setattr__(self, "zero_code", bool(self.zero_code))

    @classmethod
    def from_mapping(cls, mapping):
        """Build from string-valued config entries, ignoring unknown keys."""
        kwargs = {}
        for f in fields(cls):
            if f.name not in mapping:
                continue
            raw = mapping[f.name]
            if f.name == "dropout_levels":
                value = tuple(int(v) for v in str(raw).replace(",", " ").split()) if isinstance(raw, str) else tuple(raw)
            elif f.name == "zero_code":
                value = raw if isinstance(raw, bool) else str(raw).strip().lower() in ("1", "true", "yes", "on")
            elif f.type in (int, "int"):
                value = int(raw)
            else:
                value = float(raw)
            kwargs[f.name] = value
        return cls(**kwargs)


class EnhancementScheduler:
    """Seeded Bernoulli(p_enh) source that stays off before ``delay_steps``."""

    def __init__(self, p_enh=0.5, delay_steps=0, seed=None):
        self.p_enh = check_float(p_enh, "p_enh", 0.0, 1.0)
        self.delay_steps = check_int(delay_steps, "delay_steps", 0)
        self.rng = as_generator(seed)

    def should_use_enhanced(self, step):
        if step < self.delay_steps:
            return False
        return bool(self.rng.random() < self.p_enh)


def should_use_enhanced(sched, step):
    return sched.should_use_enhanced(step)


def _initial_centers(data, n_clusters, rng):
    uniq = np.unique(data, axis=0)
    if uniq.shape[0] >= n_clusters:
        return uniq[rng.choice(uniq.shape[0], n_clusters, replace=False)].copy()
    extra = data[rng.choice(data.shape[0], n_clusters - uniq.shape[0], replace=False)]
    return np.concatenate([uniq, extra])


def lloyd(data, n_clusters, iters=20, seed=None):
    """Lloyd's k-means.

    Returns ``(centers, labels, wcss)`` where ``wcss[0]`` is the within-cluster
    sum of squares at initialization and ``wcss[i]`` after iteration ``i``.
    Stops early once assignments no longer change.
    """
    data = check_matrix(data, "data")
    n_clusters = check_int(n_clusters, "B", 1)
    if data.shape[0] < n_clusters:
        raise ConfigError(f"k-means needs at least B={n_clusters} points, got {data.shape[0]}")
    rng = as_generator(seed)
    centers = _initial_centers(data, n_clusters, rng)
    labels, dist = assign(data, centers)
    wcss = [float(dist.sum())]
    for _ in range(iters):
        counts = np.bincount(labels, minlength=n_clusters)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, data)
        new_centers = centers.copy()
        live = counts > 0
        new_centers[live] = sums[live] / counts[live, None]
        empty = np.flatnonzero(~live)
        if empty.size:
            # farthest points from their own centroid, one per empty cluster
            order = np.argsort(-dist, kind="stable")
            new_centers[empty] = data[order[: empty.size]]
        new_labels, new_dist = assign(data, new_centers)
        wcss.append(float(new_dist.sum()))
        changed = not np.array_equal(new_labels, labels)
        centers, labels, dist = new_centers, new_labels, new_dist
        if not changed and not empty.size:
            break
    return centers, labels, wcss


def kmeans_init(data, B, iters=20, seed=None, stage=1):
    """Codebook of ``B`` Lloyd centroids of ``data`` (rows are vectors)."""
    centers, _, _ = lloyd(data, B, iters, seed)
    return Codebook(centers, stage=stage)


@dataclass
class EMAState:
    counts: np.ndarray
    sums: np.ndarray

    @classmethod
    def from_codebook(cls, codebook, counts=None):
        entries = codebook.entries if isinstance(codebook, Codebook) else np.asarray(codebook)
        counts = np.ones(entries.shape[0]) if counts is None else np.asarray(counts, dtype=np.float64).copy()
        return cls(counts, entries * counts[:, None])


def ema_update(codebook, state, batch, assignments, decay, frozen=()):
    """One exponential-moving-average step toward the assigned cluster means.

    Returns ``(codebook, state)``; inputs are not modified. Codes that receive
    no vectors keep their entry (only their statistics decay). Indices in
    ``frozen`` are never moved.
    """
    entries = codebook.entries.copy()
    batch = check_matrix(batch, "batch", dim=entries.shape[1], axis=1)
    assignments = np.asarray(assignments, dtype=np.int64)
    if assignments.shape != (batch.shape[0],):
        raise ShapeError("one assignment per batch vector is required")
    size = entries.shape[0]
    if assignments.size and (assignments.min() < 0 or assignments.max() >= size):
        raise ShapeError("assignment index out of range")
    n = np.bincount(assignments, minlength=size).astype(np.float64)
    batch_sums = np.zeros_like(entries)
    np.add.at(batch_sums, assignments, batch)
    counts = decay * state.counts + (1.0 - decay) * n
    sums = decay * state.sums + (1.0 - decay) * batch_sums
    moved = n > 0
    if len(frozen):
        moved[list(frozen)] = False
    entries[moved] = sums[moved] / np.maximum(counts[moved], EMA_EPS)[:, None]
    return Codebook(entries, stage=codebook.stage), EMAState(counts, sums)


def commitment_loss(emb, result, stack, beta=0.25):
    """``sum_l (1 + beta) * mean_t |q_t - M_t^l|^2`` over the streams in ``result``.

    With a frozen encoder both stop-gradient terms of the VQ objective have
    the same value, so this is a diagnostic rather than a training target.
    """
    data = emb.data if isinstance(emb, EmbeddingSequence) else check_matrix(emb, "embedding")
    frames = data.T
    partial = np.zeros_like(frames)
    total = 0.0
    for level in range(result.streams_used):
        partial = partial + stack.stages[level].entries[result.indices[level]]
        total += np.mean(np.square(frames - partial).sum(axis=1)) if frames.shape[0] else 0.0
    return (1.0 + beta) * total


def reseed_dead_codes(codebook, usage, data, threshold, rng, protect=()):
    """Replace entries whose usage share is below ``threshold``.

    Replacements are random rows of ``data`` plus ``1e-4`` Gaussian jitter,
    redrawn until no two entries coincide. Returns ``(codebook, replaced)``.
    """
    rng = as_generator(rng)
    entries = codebook.entries.copy()
    usage = np.asarray(usage, dtype=np.float64)
    if usage.shape != (entries.shape[0],):
        raise ShapeError("usage must have one value per codebook entry")
    total = usage.sum()
    share = usage / total if total > 0 else np.zeros_like(usage)
    dead = share < threshold
    if len(protect):
        dead[list(protect)] = False
    replaced = np.flatnonzero(dead)
    data = np.asarray(data, dtype=np.float64)
    if replaced.size == 0 or data.shape[0] == 0:
        return Codebook(entries, stage=codebook.stage), np.zeros(0, dtype=np.int64)
    for _ in range(100):
        picks = data[rng.integers(data.shape[0], size=replaced.size)]
        entries[replaced] = picks + RESEED_NOISE * rng.standard_normal(picks.shape)
        if np.unique(entries, axis=0).shape[0] == entries.shape[0]:
            break
    return Codebook(entries, stage=codebook.stage), replaced


@dataclass
class StepRecord:
    step: int
    commitment_loss: float
    batch_loss: float
    enhanced_anchor: bool
    enh_distance: float
    orig_distance: float
    usage: list
    perplexity: list
    frames: list
    reseeded: list

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class TrainLog:
    records: list = field(default_factory=list)
    kmeans_wcss: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def losses(self):
        return np.array([r.commitment_loss for r in self.records])

    def anchor_flags(self):
        return np.array([r.enhanced_anchor for r in self.records], dtype=bool)

    def to_jsonl(self):
        return "".join(r.to_json() + "\n" for r in self.records)


def _stack_dataset(dataset):
    frames, anchors, owners = [], [], []
    dim = None
    for u, pair in enumerate(dataset):
        emb, enh = pair
        q = emb.data if isinstance(emb, EmbeddingSequence) else check_matrix(emb, "embedding")
        e = enh.data if isinstance(enh, EmbeddingSequence) else check_matrix(enh, "enhanced")
        if q.shape != e.shape:
            raise ShapeError(f"utterance {u}: enhanced shape {e.shape} != embedding shape {q.shape}")
        if dim is None:
            dim = q.shape[0]
        elif q.shape[0] != dim:
            raise ShapeError(f"utterance {u}: dim {q.shape[0]} != {dim}")
        frames.append(q.T)
        anchors.append(e.T)
        owners.append(np.full(q.shape[1], u, dtype=np.int64))
    if not frames:
        raise ConfigError("training needs a non-empty dataset")
    return np.concatenate(frames), np.concatenate(anchors), np.concatenate(owners)


def _init_codebook(data, cfg, rng, stage, log):
    if cfg.zero_code:
        centers = np.zeros((cfg.B, data.shape[1]))
        if cfg.B > 1:
            centers[1:], labels, wcss = lloyd(data, cfg.B - 1, cfg.kmeans_iters, rng)
            labels = labels + 1
        else:
            labels, wcss = np.zeros(data.shape[0], dtype=np.int64), []
    else:
        centers, labels, wcss = lloyd(data, cfg.B, cfg.kmeans_iters, rng)
    log.kmeans_wcss.append(wcss)
    codebook = Codebook(centers, stage=stage)
    # EMA statistics start from the k-means cluster shares, scaled to one batch
    share = np.bincount(labels, minlength=cfg.B) / max(1, data.shape[0])
    return codebook, EMAState.from_codebook(codebook, share * cfg.batch_frames)


def train_stack(dataset, cfg=None):
    """Learn a :class:`QuantizerStack` from ``(embedding, enhanced)`` pairs.

    Deterministic for a fixed dataset and config.
    """
    cfg = cfg or TrainConfig()
    frames, anchors, owners = _stack_dataset(dataset)
    n_total, dim = frames.shape
    n_utt = int(owners.max()) + 1
    if n_total < cfg.B:
        raise ConfigError(f"need at least B={cfg.B} frames, got {n_total}")

    init_ss, sched_ss, batch_ss, drop_ss, reseed_ss = np.random.SeedSequence(cfg.seed).spawn(5)
    init_rng = np.random.default_rng(init_ss)
    batch_rng = np.random.default_rng(batch_ss)
    drop_rng = np.random.default_rng(drop_ss)
    reseed_rng = np.random.default_rng(reseed_ss)
    scheduler = EnhancementScheduler(cfg.p_enh, cfg.delay_steps, np.random.default_rng(sched_ss))
    log = TrainLog()
    protect = (0,) if cfg.zero_code else ()

    # sequential k-means init; stage-1 anchors drawn per utterance
    if cfg.delay_steps > 0:
        use_enh = np.zeros(n_utt, dtype=bool)
    else:
        use_enh = init_rng.random(n_utt) < cfg.p_enh
    target = np.where(use_enh[owners][:, None], anchors, frames)
    codebooks, states = [], []
    residual = frames
    for level in range(cfg.L):
        data = target if level == 0 else residual
        cb, st = _init_codebook(data, cfg, init_rng, level + 1, log)
        idx, _ = assign(data, cb.entries)
        residual = residual - cb.entries[idx]
        codebooks.append(cb)
        states.append(st)

    eval_frames = frames[np.sort(init_rng.choice(n_total, size=min(n_total, EVAL_FRAMES), replace=False))]
    levels = np.asarray(cfg.dropout_levels)
    batch_size = min(cfg.batch_frames, n_total)
    for step in range(cfg.steps):
        pick = np.sort(batch_rng.choice(n_total, size=batch_size, replace=False))
        q = frames[pick]
        enhanced_anchor = scheduler.should_use_enhanced(step)
        anchor = anchors[pick] if enhanced_anchor else q
        active_streams = levels[drop_rng.integers(len(levels), size=n_utt)][owners[pick]]

        residual = q
        loss = 0.0
        usage, perps, counts, reseeded = [], [], [], []
        enh_dist = orig_dist = 0.0
        for level in range(cfg.L):
            cb = codebooks[level]
            inputs = anchor if level == 0 else residual
            idx, _ = assign(inputs, cb.entries)
            chosen = cb.entries[idx]
            if level == 0:
                enh_dist = float(np.mean(np.square(chosen - anchors[pick]).sum(axis=1)))
                orig_dist = float(np.mean(np.square(chosen - q).sum(axis=1)))
            residual = residual - chosen
            loss += float(np.mean(np.square(residual).sum(axis=1)))

            active = active_streams > level
            hist = np.bincount(idx[active], minlength=cfg.B)
            codebooks[level], states[level] = ema_update(
                cb, states[level], inputs[active], idx[active], cfg.ema_decay, frozen=protect
            )
            if active.any() and cfg.reseed_threshold > 0:
                codebooks[level], dead = reseed_dead_codes(
                    codebooks[level], states[level].counts, inputs[active], cfg.reseed_threshold,
                    reseed_rng, protect=protect,
                )
                if dead.size:
                    fresh = codebooks[level].entries[dead]
                    mean_count = states[level].counts.sum() / cfg.B
                    states[level].counts[dead] = mean_count
                    states[level].sums[dead] = fresh * mean_count
                reseeded.append(int(dead.size))
            else:
                reseeded.append(0)
            usage.append(hist.tolist())
            counts.append(int(active.sum()))
            perps.append(perplexity(hist) if hist.sum() else 1.0)

        stack = QuantizerStack(codebooks)
        log.records.append(
            StepRecord(
                step=step,
                commitment_loss=commitment_loss(eval_frames.T, quantize(eval_frames.T, stack), stack, cfg.beta),
                batch_loss=(1.0 + cfg.beta) * loss,
                enhanced_anchor=enhanced_anchor,
                enh_distance=enh_dist,
                orig_distance=orig_dist,
                usage=usage,
                perplexity=perps,
                frames=counts,
                reseeded=reseeded,
            )
        )
    return QuantizerStack(codebooks), log


def anchor_distance(stack, enhanced):
    """Mean ``|q_hat^(1) - q_tilde|^2`` with stage 1 searched against the enhanced frames."""
    anchor = enhanced.data if isinstance(enhanced, EmbeddingSequence) else check_matrix(enhanced, "enhanced")
    _, dist = assign(anchor.T, stack.stages[0].entries)
    return float(dist.mean())
