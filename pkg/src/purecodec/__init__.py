"""Enhancement-anchored residual vector quantization for speech codecs."""

from .bitstream import StreamMeta, bitrate, pack, unpack
from .entropy import PEConfig, PEReport, code_entropy, pe_reduction, perceptual_entropy, perplexity
from .estimator import ResidualVectorQuantizer
from .exceptions import BitstreamError, ConfigError, PureCodecError, ShapeError
from .frontend import (
    CorpusSpec,
    DCTFilterbank,
    EmbeddingSequence,
    FrontendConfig,
    Waveform,
    analyze,
    enhance,
    generate_corpus,
    synthesize,
)
from .pipeline import decode, encode, evaluate, sdr
from .rvq import (
    Codebook,
    QuantizationResult,
    QuantizerStack,
    apply_quantizer_dropout,
    nearest_code,
    partial_reconstruct,
    quantize,
    quantize_pure,
)
from .training import (
    EnhancementScheduler,
    TrainConfig,
    TrainLog,
    commitment_loss,
    ema_update,
    kmeans_init,
    reseed_dead_codes,
    train_stack,
)

__version__ = "0.1.0"
