import numpy as np
import pytest

from purecodec import CorpusSpec, FrontendConfig, generate_corpus
from purecodec.pipeline import embed_corpus

# filled by tests/test_acceptance.py, printed once at the end of the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(CorpusSpec(n_utterances=4, duration_s=1.0, seed=7))


@pytest.fixture(scope="session")
def small_dataset(small_corpus):
    """(noisy, oracle-enhanced) embedding pairs at D=8."""
    return embed_corpus(small_corpus, FrontendConfig(dim=8))


SWEEP_SEEDS = range(20)
SWEEP_CONFIG = dict(L=2, B=16, steps=200, dropout_levels=(1, 2))


@pytest.fixture(scope="session")
def anchoring_sweep():
    """Per seed: PURE (p_enh=0.5) and baseline (p_enh=0) stacks on the same data."""
    from purecodec import TrainConfig, quantize, train_stack
    from purecodec.entropy import code_entropy
    from purecodec.training import anchor_distance

    rows = []
    for seed in SWEEP_SEEDS:
        data = embed_corpus(generate_corpus(CorpusSpec(n_utterances=10, seed=seed)), FrontendConfig(dim=8))
        frames = np.concatenate([q.data for q, _ in data], axis=1)
        enhanced = np.concatenate([e.data for _, e in data], axis=1)
        row = {}
        for name, p_enh in (("pure", 0.5), ("base", 0.0)):
            stack, _ = train_stack(data, TrainConfig(**SWEEP_CONFIG, p_enh=p_enh, seed=seed))
            row[name] = {
                "anchor_distance": anchor_distance(stack, enhanced),
                "stage1_entropy": code_entropy(quantize(frames, stack).indices[0], stack.codebook_size),
            }
        rows.append(row)
    return rows
