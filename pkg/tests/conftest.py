import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def trained_asp():
    """A small ASP model trained briefly on the synthetic corpus."""
    from delexpara.corpus import build_vocab
    from delexpara.embedder import EmbeddingConfig
    from delexpara.model import ModelConfig
    from delexpara.pipeline import prepare_pairs
    from delexpara.synth import SynthConfig, make_corpus
    from delexpara.training import TrainConfig, train

    skills, tests, _ = make_corpus(SynthConfig(n_skills=3, seed=0))
    pairs, _ = prepare_pairs(skills, "ASP", seed=0)
    vocab = build_vocab(pairs)
    cfg = ModelConfig(hidden=32, ffn=64, heads=4, embedding=EmbeddingConfig("AS", embed_dim=32))
    res = train(cfg, pairs, vocab, TrainConfig(epochs=15, batch_size=16, warmup=50))
    return res.model, skills, tests, pairs, vocab


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
