import itertools
import math

import numpy as np
import pytest

from lipunits import decoder as dc
from lipunits import hmm as hm
from lipunits import lexicon as lx
from lipunits.errors import DecodeError, LanguageModelError

from test_hmm import lr_model


def tr(labels):
    return lx.Transcript(lx.WORD, tuple(labels))


# --- language model ---------------------------------------------------------


def test_bigram_discount_worked_example():
    lm = dc.estimate_bigram([tr(["a", "b"])] * 10, discount=0.5)
    assert math.exp(lm.logprob("b", "a")) == pytest.approx(0.95, abs=1e-12)
    # withheld mass backs off to the unigram distribution
    others = sum(math.exp(lm.logprob(w, "a")) for w in ("a", dc.END))
    assert others == pytest.approx(0.05, abs=1e-12)


def test_bigram_unseen_positive():
    lm = dc.estimate_bigram([tr(["a", "b"]), tr(["b", "a"])], discount=0.5)
    assert lm.logprob("a", "a") > -math.inf
    assert math.exp(lm.logprob("a", "a")) > 0


def test_bigram_single_token_sentence_masses():
    lm = dc.estimate_bigram([tr(["a"])], discount=0.5)
    p_end = math.exp(lm.logprob(dc.END, "a"))
    p_a = math.exp(lm.logprob("a", "a"))
    assert p_end == pytest.approx(0.5, abs=1e-12)
    assert p_end + p_a == pytest.approx(1.0, abs=1e-12)


def test_bigram_normalization_random_corpora():
    rng = np.random.default_rng(0)
    for _ in range(25):
        vocab = [f"w{k}" for k in range(int(rng.integers(2, 6)))]
        seqs = [
            tr(vocab[k] for k in rng.integers(0, len(vocab), int(rng.integers(1, 7))))
            for _ in range(int(rng.integers(1, 12)))
        ]
        d = float(rng.uniform(0.05, 0.95))
        lm = dc.estimate_bigram(seqs, discount=d)
        for h in (dc.START, *lm.vocab):
            mass = sum(math.exp(lm.logprob(w, h)) for w in lm.successors())
            assert mass == pytest.approx(1.0, abs=1e-9), h


def test_bigram_rejects_empty_and_bad_discount():
    with pytest.raises(LanguageModelError):
        dc.estimate_bigram([])
    with pytest.raises(LanguageModelError):
        dc.estimate_bigram([tr(["a"])], discount=1.0)


def test_arpa_roundtrip(tmp_path):
    lm = dc.estimate_bigram(
        [tr(["a", "b", "a"]), tr(["b"]), tr(["a", "a"])], discount=0.3
    )
    path = tmp_path / "lm.arpa"
    dc.write_arpa(lm, path)
    again = dc.read_arpa(path)
    assert again.vocab == lm.vocab
    assert again.discount == lm.discount
    for h in (dc.START, *lm.vocab):
        for w in lm.successors():
            assert again.logprob(w, h) == pytest.approx(lm.logprob(w, h), abs=1e-12)


# --- networks ---------------------------------------------------------------


@pytest.fixture
def word_setup():
    phones = ["pa", "pe", "ko", "tu"]
    inv = lx.parse_inventory("pa V\npe V\nko C\ntu C\n")
    lex = lx.parse_lexicon("ONE ko pa\nTWO tu pe\nTHREE pa\n", inv)
    rng = np.random.default_rng(5)
    models = {p: lr_model(p, rng.normal(0, 3, 2).tolist(), stay=0.5) for p in phones}
    hset = hm.HmmSet(models=models)
    lm = dc.estimate_bigram(
        [tr(["ONE", "TWO"]), tr(["THREE", "ONE"]), tr(["TWO"])], discount=0.5
    )
    return lex, hset, lm


def test_word_network_expands_pronunciations(word_setup):
    lex, hset, lm = word_setup
    net = dc.build_network(lm, lex, None, lx.PHONEME, lx.WORD)
    for word in lm.vocab:
        chain = [a.model for a in net.arcs if a.model is not None and a.emit == word]
        # the emitting arc is the last phone of the pronunciation
        assert chain == [lex.pronunciation(word)[-1]]
    models_used = net.model_labels()
    assert models_used == {"pa", "pe", "ko", "tu"}


def test_viseme_network_shares_homophene_chain():
    lex = lx.demo_lexicon()
    jeffers = lx.bundled_p2v("jeffers")
    words = [tr([w]) for w in ("TALK", "TONGUE", "DOG", "DUG")]
    unit_seqs = [
        lx.phonemes_to_units(lx.expand_words(lex, w.labels), jeffers) for w in words
    ]
    lm = dc.estimate_bigram(unit_seqs, discount=0.5)
    models = {u: lr_model(u, [0.0]) for u in lm.vocab}
    net = dc.build_network(lm, None, jeffers, lx.VISEME, lx.VISEME)
    # all four words collapse to the same three-unit vocabulary: C, V1, H
    assert set(lm.vocab) == {"C", "V1", "H"}
    labeled = [a for a in net.arcs if a.model is not None]
    assert len(labeled) == 3


def test_single_word_network_shape(word_setup):
    lex, hset, _ = word_setup
    lm = dc.estimate_bigram([tr(["THREE"])], discount=0.5)
    net = dc.build_network(lm, lex, None, lx.PHONEME, lx.WORD)
    labeled = [a for a in net.arcs if a.model is not None]
    assert len(labeled) == len(lex.pronunciation("THREE"))
    frames = np.full((6, 1), 0.0)
    out, _ = dc.decode(hset, net, frames, dc.DecodeParams())
    assert set(out) == {"THREE"}


def test_invalid_pairing_rejected(word_setup):
    lex, _, lm = word_setup
    with pytest.raises(DecodeError, match="pairing"):
        dc.build_network(lm, lex, None, lx.WORD, lx.PHONEME)


def test_untranslatable_phoneme_rejected(word_setup):
    lex, _, lm = word_setup
    partial = lx.P2VMap((("u1", frozenset(["pa", "pe"])),))
    with pytest.raises(Exception, match="not covered"):
        dc.build_network(lm, lex, partial, lx.VISEME, lx.WORD)


# --- decoding ---------------------------------------------------------------


def expand_chain(lex, seq):
    out = []
    for w in seq:
        out.extend(lex.pronunciation(w))
    return out


def oracle_decode(hset, lex, lm, frames, params, max_len=3):
    best_seq, best_score = None, -math.inf
    for k in range(1, max_len + 1):
        for seq in itertools.product(lm.vocab, repeat=k):
            transcript = lx.Transcript(lx.PHONEME, tuple(expand_chain(lex, seq)))
            try:
                _, acoustic = hm.forced_align(hset, frames, transcript)
            except Exception:
                continue
            score = (
                acoustic
                + params.grammar_scale * lm.sequence_logprob(seq)
                - params.penalty * k
            )
            if score > best_score:
                best_seq, best_score = list(seq), score
    return best_seq, best_score


def test_decode_matches_exhaustive_enumeration(word_setup):
    lex, hset, lm = word_setup
    net = dc.build_network(lm, lex, None, lx.PHONEME, lx.WORD)
    rng = np.random.default_rng(77)
    params = dc.DecodeParams(grammar_scale=1.0, penalty=0.5)
    for _ in range(30):
        frames = rng.normal(0, 3, (int(rng.integers(2, 9)), 1))
        want_seq, want_score = oracle_decode(hset, lex, lm, frames, params)
        got_seq, got_score = dc.decode(hset, net, frames, params)
        assert got_seq == want_seq
        assert got_score == pytest.approx(want_score, abs=1e-9)


def test_decode_zero_grammar_scale_picks_acoustic_argmax(word_setup):
    lex, hset, lm = word_setup
    rng = np.random.default_rng(3)
    params = dc.DecodeParams(grammar_scale=0.0, penalty=0.5)
    net = dc.build_network(lm, lex, None, lx.PHONEME, lx.WORD)
    hits = 0
    for _ in range(10):
        # frames long enough for one word only
        frames = rng.normal(0, 3, (3, 1))
        got_seq, _ = dc.decode(hset, net, frames, params)
        scores = {}
        for w in lm.vocab:
            transcript = lx.Transcript(lx.PHONEME, tuple(lex.pronunciation(w)))
            try:
                _, scores[w] = hm.forced_align(hset, frames, transcript)
            except Exception:
                pass
        if len(got_seq) == 1:
            hits += 1
            assert got_seq[0] == max(scores, key=scores.get)
    assert hits > 0


def test_decode_score_decomposition(word_setup):
    lex, hset, lm = word_setup
    net = dc.build_network(lm, lex, None, lx.PHONEME, lx.WORD)
    params = dc.DecodeParams(grammar_scale=1.7, penalty=0.9)
    rng = np.random.default_rng(10)
    frames = rng.normal(0, 3, (8, 1))
    seq, score = dc.decode(hset, net, frames, params)
    transcript = lx.Transcript(lx.PHONEME, tuple(expand_chain(lex, seq)))
    _, acoustic = hm.forced_align(hset, frames, transcript)
    recomputed = (
        acoustic + params.grammar_scale * lm.sequence_logprob(seq) - params.penalty * len(seq)
    )
    assert score == pytest.approx(recomputed, abs=1e-9)


def test_penalty_monotonically_shortens_output(word_setup):
    lex, hset, lm = word_setup
    net = dc.build_network(lm, lex, None, lx.PHONEME, lx.WORD)
    rng = np.random.default_rng(8)
    for _ in range(6):
        frames = rng.normal(0, 3, (10, 1))
        prev_len = None
        for p in (0.0, 1.0, 3.0, 10.0, 40.0):
            seq, _ = dc.decode(hset, net, frames, dc.DecodeParams(grammar_scale=1.0, penalty=p))
            if prev_len is not None:
                assert len(seq) <= prev_len
            prev_len = len(seq)


def test_decode_no_reachable_end():
    # Minimum path needs 2 frames; one frame cannot reach the end node.
    model = lr_model("u", [0.0, 1.0])
    hset = hm.HmmSet(models={"u": model})
    lm = dc.estimate_bigram([tr(["W"])], discount=0.5)
    lex = lx.parse_lexicon("W u u\n", lx.parse_inventory("u C\n"))
    net = dc.build_network(lm, lex, None, lx.PHONEME, lx.WORD)
    with pytest.raises(DecodeError, match="end node"):
        dc.decode(hset, net, np.zeros((1, 1)), dc.DecodeParams())


def test_decode_rejects_unmodeled_arc_label(word_setup):
    lex, hset, lm = word_setup
    net = dc.build_network(lm, lex, None, lx.PHONEME, lx.WORD)
    smaller = hm.HmmSet(models={k: m for k, m in hset.models.items() if k != "tu"})
    with pytest.raises(Exception, match="'tu'"):
        dc.decode(smaller, net, np.zeros((4, 1)), dc.DecodeParams())
