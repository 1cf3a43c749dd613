"""scikit-learn estimator over the training and quantization routines.

Arrays follow the scikit-learn layout, ``(n_frames, n_features)``, which is
the transpose of :class:`~purecodec.frontend.EmbeddingSequence.data`.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ShapeError
from .rvq import partial_reconstruct, quantize, quantize_pure
from .training import TrainConfig, train_stack


def _utterances(X, name="X"):
    """A 2-D array is one utterance; a list/tuple of 2-D arrays is several."""
    if isinstance(X, (list, tuple)):
        return [check_array(u, dtype=np.float64, input_name=name) for u in X]
    return [check_array(X, dtype=np.float64, input_name=name)]


class ResidualVectorQuantizer(TransformerMixin, BaseEstimator):
    """Residual vector quantizer whose first stage can be anchored to enhanced frames.

    ``fit`` learns the codebooks (k-means init, EMA refinement). Passing
    ``enhanced`` (same shape as ``X``) together with ``p_enh > 0`` trains with
    the stochastic enhancement anchor; without it training is plain RVQ.
    ``transform`` returns codes of shape ``(n_frames, n_streams)``.
    """

    def __init__(
        self,
        n_quantizers=8,
        codebook_size=64,
        beta=0.25,
        ema_decay=0.99,
        p_enh=0.5,
        delay_steps=0,
        kmeans_iters=20,
        reseed_threshold=1e-3,
        dropout_levels=(1, 2, 4, 8),
        steps=300,
        batch_frames=256,
        zero_code=False,
        n_streams=None,
        random_state=0,
    ):
        self.n_quantizers = n_quantizers
        self.codebook_size = codebook_size
        self.beta = beta
        self.ema_decay = ema_decay
        self.p_enh = p_enh
        self.delay_steps = delay_steps
        self.kmeans_iters = kmeans_iters
        self.reseed_threshold = reseed_threshold
        self.dropout_levels = dropout_levels
        self.steps = steps
        self.batch_frames = batch_frames
        self.zero_code = zero_code
        self.n_streams = n_streams
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(
            L=self.n_quantizers,
            B=self.codebook_size,
            beta=self.beta,
            ema_decay=self.ema_decay,
            p_enh=self.p_enh,
            delay_steps=self.delay_steps,
            kmeans_iters=self.kmeans_iters,
            reseed_threshold=self.reseed_threshold,
            dropout_levels=tuple(self.dropout_levels),
            steps=self.steps,
            batch_frames=self.batch_frames,
            seed=self.random_state if self.random_state is not None else 0,
            zero_code=self.zero_code,
        )

    def fit(self, X, y=None, enhanced=None):
        utts = _utterances(X)
        enh = _utterances(enhanced, "enhanced") if enhanced is not None else utts
        if len(enh) != len(utts) or any(a.shape != b.shape for a, b in zip(utts, enh)):
            raise ShapeError("enhanced must match X utterance for utterance")
        self.stack_, self.train_log_ = train_stack([(u.T, e.T) for u, e in zip(utts, enh)], self._train_config())
        self.n_features_in_ = utts[0].shape[1]
        return self

    def _check(self, X, name="X"):
        check_is_fitted(self, "stack_")
        X = check_array(X, dtype=np.float64, input_name=name)
        if X.shape[1] != self.n_features_in_:
            raise ShapeError(f"{name} has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def quantize(self, X, enhanced=None, n_streams=None):
        """Full :class:`~purecodec.rvq.QuantizationResult` for one utterance."""
        X = self._check(X)
        n_streams = n_streams or self.n_streams
        if enhanced is None:
            return quantize(X.T, self.stack_, n_streams)
        return quantize_pure(X.T, self._check(enhanced, "enhanced").T, self.stack_, n_streams)

    def transform(self, X, enhanced=None):
        return self.quantize(X, enhanced).indices.T.copy()

    def inverse_transform(self, codes):
        check_is_fitted(self, "stack_")
        codes = check_array(codes, dtype=np.int64, input_name="codes")
        return partial_reconstruct(codes.T, self.stack_).T

    def score(self, X, y=None):
        """Negative mean squared residual after the active streams."""
        result = self.quantize(X)
        return -float(result.residual_energy[-1])
