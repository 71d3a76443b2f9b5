import numpy as np
import pytest

from lipunits import corpus as cp
from lipunits import lexicon as lx


@pytest.fixture
def tiny_inventory():
    return lx.parse_inventory("aa V\nee V\nbb C\ndd C\n")


@pytest.fixture
def tiny_lexicon(tiny_inventory):
    text = "BAD bb aa dd\nBED bb ee dd\nAD aa dd\nDAB dd aa bb\n"
    return lx.parse_lexicon(text, tiny_inventory)


def make_corpus(targets, lex, n_sentences, seed, noise=0.5, dur=(3, 9), min_words=2, max_words=5):
    """Synthetic utterances of uniform random words from the lexicon."""
    model = cp.SynthModel(
        base=np.zeros(len(next(iter(targets.values())))),
        modes=np.eye(len(next(iter(targets.values())))),
        coeffs=targets,
        noise_scale=noise,
        duration_range=dur,
    )
    rng = np.random.default_rng(seed)
    words = sorted(lex.entries)
    sentences = [
        tuple(words[int(rng.integers(len(words)))] for _ in range(int(rng.integers(min_words, max_words + 1))))
        for _ in range(n_sentences)
    ]
    return cp.generate_corpus(model, lex, sentences, seed=seed + 1)


@pytest.fixture
def two_phone_setup():
    """Two well-separated phones, single-phone words; easy recovery target."""
    inv = lx.parse_inventory("pa C\npb C\n")
    lex = lx.parse_lexicon("KA pa\nKB pb\n", inv)
    targets = {"pa": np.array([0.0, 0.0]), "pb": np.array([5.0, 5.0])}
    utts = make_corpus(targets, lex, n_sentences=60, seed=11)
    return inv, lex, targets, utts
