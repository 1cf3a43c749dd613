"""Residual vector quantization, plain and enhancement-anchored.

Codeword indices are 0-based everywhere in the library; reports that follow
the ``1..B`` convention add one at the serialization boundary.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, ShapeError
from .frontend import EmbeddingSequence
from .validation import as_generator, check_int, check_matrix

# Upper bound on the (frames x B x D) difference tensor materialized at once.
_CHUNK_ELEMENTS = 1 << 22


@dataclass
class Codebook:
    entries: np.ndarray
    stage: int = 1

    def __post_init__(self):
        self.entries = check_matrix(self.entries, "codebook entries")
        if self.entries.shape[0] < 1:
            raise ShapeError("codebook needs at least one entry")

    @property
    def size(self):
        return self.entries.shape[0]

    @property
    def dim(self):
        return self.entries.shape[1]


@dataclass
class QuantizerStack:
    stages: list

    def __post_init__(self):
        if len(self.stages) < 1:
            raise ShapeError("a quantizer stack needs at least one stage")
        dims = {cb.dim for cb in self.stages}
        if len(dims) != 1:
            raise ShapeError(f"all stages must share one dimension, got {sorted(dims)}")

    @classmethod
    def from_array(cls, arr):
        arr = check_matrix(arr, "stack", ndim=3)
        return cls([Codebook(arr[i], stage=i + 1) for i in range(arr.shape[0])])

    def to_array(self):
        """``(L, B, D)`` array; requires equal codebook sizes."""
        return np.stack([cb.entries for cb in self.stages])

    @property
    def n_stages(self):
        return len(self.stages)

    @property
    def dim(self):
        return self.stages[0].dim

    @property
    def codebook_size(self):
        return self.stages[0].size

    def __len__(self):
        return len(self.stages)

    def __getitem__(self, i):
        return self.stages[i]


@dataclass
class QuantizationResult:
    """Codes and residual diagnostics of one quantized sequence.

    ``indices`` is ``(streams_used, frames)``. ``frame_residual_energy[l, t]``
    is ``|r_t^{l+1}|^2`` and ``residual_energy`` its mean over frames.
    """

    indices: np.ndarray
    frame_residual_energy: np.ndarray
    anchored: bool = False
    residual_energy: np.ndarray = field(init=False)

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.frame_residual_energy = np.asarray(self.frame_residual_energy, dtype=np.float64)
        if self.indices.ndim != 2 or self.indices.shape != self.frame_residual_energy.shape:
            raise ShapeError("indices and frame residual energies must be matching 2-D arrays")
        if self.frame_residual_energy.shape[1]:
            self.residual_energy = self.frame_residual_energy.mean(axis=1)
        else:
            self.residual_energy = np.zeros(self.streams_used)

    @property
    def streams_used(self):
        return self.indices.shape[0]

    @property
    def n_frames(self):
        return self.indices.shape[1]

    def truncate(self, n_streams):
        n_streams = check_int(n_streams, "n_streams", 1, self.streams_used)
        return QuantizationResult(
            self.indices[:n_streams].copy(), self.frame_residual_energy[:n_streams].copy(), self.anchored
        )


def _as_matrix(emb, name="embedding"):
    if isinstance(emb, EmbeddingSequence):
        return emb.data
    return check_matrix(emb, name)


def _entries(codebook):
    return codebook.entries if isinstance(codebook, Codebook) else check_matrix(codebook, "codebook")


def _exact_distances(vectors, entries):
    return np.square(vectors[:, None, :] - entries[None, :, :]).sum(axis=2)


def assign_scan(vectors, entries):
    """Reference search: full difference tensor, chunked over rows."""
    n, dim = vectors.shape
    size = entries.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    step = max(1, _CHUNK_ELEMENTS // max(1, size * dim))
    for start in range(0, n, step):
        d = _exact_distances(vectors[start : start + step], entries)
        best = d.argmin(axis=1)
        idx[start : start + step] = best
        dist[start : start + step] = d[np.arange(best.shape[0]), best]
    return idx, dist


def assign(vectors, entries):
    """Nearest entry for each row of ``vectors``; ties go to the lowest index.

    Candidates are screened with the expanded form ``|x|^2 - 2 x.b + |b|^2``;
    every candidate within the rounding margin of the row minimum is then
    re-scored with the same difference formula as :func:`assign_scan`, so the
    result matches the scan exactly. Returns ``(indices, dist)``.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    n, dim = vectors.shape
    size = entries.shape[0]
    if size == 0:
        raise ShapeError("empty codebook")
    if entries.shape[1] != dim:
        raise ShapeError(f"vector dim {dim} != codebook dim {entries.shape[1]}")
    if n == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
    if size * dim <= 64:
        return assign_scan(vectors, entries)
    rows_per_chunk = max(1, _CHUNK_ELEMENTS // size)
    if n > rows_per_chunk:
        parts = [assign(vectors[i : i + rows_per_chunk], entries) for i in range(0, n, rows_per_chunk)]
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])

    x_sq = np.einsum("ij,ij->i", vectors, vectors)
    b_sq = np.einsum("ij,ij->i", entries, entries)
    approx = x_sq[:, None] - 2.0 * (vectors @ entries.T) + b_sq[None, :]
    # generous bound on the rounding error of the expanded form
    margin = 1e-9 * (x_sq + b_sq.max()) + 1e-300
    cand = approx <= approx.min(axis=1)[:, None] + 2.0 * margin[:, None]
    rows, cols = np.nonzero(cand)
    exact = np.square(vectors[rows] - entries[cols]).sum(axis=1)
    order = np.lexsort((cols, exact, rows))
    first = np.ones(order.size, dtype=bool)
    first[1:] = rows[order[1:]] != rows[order[:-1]]
    winners = order[first]
    return cols[winners].astype(np.int64), exact[winners]


def nearest_code(residual, codebook):
    """``(index, codeword)`` minimizing the squared distance to ``residual``."""
    entries = _entries(codebook)
    residual = np.asarray(residual, dtype=np.float64)
    if residual.ndim != 1:
        raise ShapeError("residual must be a single vector")
    idx, _ = assign(residual[None, :], entries)
    return int(idx[0]), entries[idx[0]].copy()


def _check_streams(n_streams, stack):
    if n_streams is None:
        return stack.n_stages
    return check_int(n_streams, "n_streams", 1, stack.n_stages)


def _chain(frames, first_target, stack, n_streams):
    """Greedy residual chain over ``(T, D)`` frames.

    Stage 1 searches against ``first_target`` (the anchor) but the residual is
    always taken against ``frames``.
    """
    n_frames = frames.shape[0]
    indices = np.empty((n_streams, n_frames), dtype=np.int64)
    energy = np.empty((n_streams, n_frames), dtype=np.float64)
    residual = frames
    for level in range(n_streams):
        entries = stack.stages[level].entries
        target = first_target if level == 0 else residual
        idx, _ = assign(target, entries)
        residual = residual - entries[idx]
        indices[level] = idx
        energy[level] = np.square(residual).sum(axis=1)
    return indices, energy


def quantize(emb, stack, n_streams=None):
    """Plain greedy RVQ of every frame using the first ``n_streams`` stages."""
    data = _as_matrix(emb)
    if data.shape[0] != stack.dim:
        raise ShapeError(f"embedding dim {data.shape[0]} != stack dim {stack.dim}")
    n_streams = _check_streams(n_streams, stack)
    frames = data.T
    indices, energy = _chain(frames, frames, stack, n_streams)
    return QuantizationResult(indices, energy, anchored=False)


def quantize_pure(emb, enhanced, stack, n_streams=None):
    """Anchored RVQ: stage 1 picks the codeword nearest the enhanced frame,
    while its residual (and every later stage) tracks the original frame."""
    data = _as_matrix(emb)
    anchor = _as_matrix(enhanced, "enhanced")
    if anchor.shape != data.shape:
        raise ShapeError(f"enhanced shape {anchor.shape} != embedding shape {data.shape}")
    if data.shape[0] != stack.dim:
        raise ShapeError(f"embedding dim {data.shape[0]} != stack dim {stack.dim}")
    n_streams = _check_streams(n_streams, stack)
    indices, energy = _chain(data.T, anchor.T, stack, n_streams)
    return QuantizationResult(indices, energy, anchored=True)


def partial_reconstruct(result, stack, upto=None):
    """Sum of the chosen codewords of stages ``1..upto`` as a ``D x T`` matrix."""
    indices = result.indices if isinstance(result, QuantizationResult) else np.asarray(result)
    upto = indices.shape[0] if upto is None else check_int(upto, "upto", 1, indices.shape[0])
    if upto > stack.n_stages:
        raise ShapeError(f"result uses {upto} streams but the stack has {stack.n_stages}")
    recon = np.zeros((indices.shape[1], stack.dim))
    for level in range(upto):
        recon += stack.stages[level].entries[indices[level]]
    return recon.T


def apply_quantizer_dropout(rng, levels):
    """Draw the number of active streams uniformly from ``levels``."""
    levels = list(levels)
    if not levels:
        raise ConfigError("dropout levels must be non-empty")
    rng = as_generator(rng)
    return int(levels[int(rng.integers(len(levels)))])
