"""Property tests for the algebraic invariants."""

import math

import numpy as np
from hypothesis import given, settings, strategies as st

from lipunits import cluster as cl
from lipunits import decoder as dc
from lipunits import lexicon as lx
from lipunits import scoring as sc

labels = st.sampled_from("abc")
label_seq = st.lists(labels, max_size=8)


@given(label_seq, label_seq)
def test_alignment_counts_are_consistent(ref, hyp):
    r = sc.align(ref, hyp)
    assert r.n_ref == r.matches + r.deletions + r.substitutions
    assert len(hyp) == r.matches + r.insertions + r.substitutions
    assert r.cost == 10 * r.substitutions + 7 * (r.deletions + r.insertions)
    if ref:
        assert r.correctness <= 1.0
        assert r.accuracy <= r.correctness


@given(label_seq)
def test_alignment_identity_is_perfect(seq):
    r = sc.align(seq, seq)
    assert r.cost == 0
    assert r.matches == len(seq)


@given(
    st.lists(st.lists(st.sampled_from("uvwx"), min_size=1, max_size=6), min_size=1, max_size=10),
    st.floats(min_value=0.05, max_value=0.95),
)
@settings(max_examples=60, deadline=None)
def test_bigram_successor_mass_is_one(seqs, discount):
    lm = dc.estimate_bigram(seqs, discount=discount)
    for history in (dc.START, *lm.vocab):
        mass = sum(math.exp(lm.logprob(w, history)) for w in lm.successors())
        assert abs(mass - 1.0) < 1e-9


@given(st.lists(st.sampled_from(["aa", "ee", "bb", "dd"]), min_size=1, max_size=12))
def test_unit_translation_preserves_length(phones):
    pmap = lx.P2VMap((
        ("v1", frozenset(["aa", "ee"])),
        ("c1", frozenset(["bb", "dd"])),
    ))
    out = lx.phonemes_to_units(lx.Transcript(lx.PHONEME, tuple(phones)), pmap)
    assert len(out) == len(phones)


@given(
    st.integers(min_value=1, max_value=6).flatmap(
        lambda n: st.lists(
            st.lists(st.integers(min_value=0, max_value=9), min_size=n, max_size=n),
            min_size=n, max_size=n,
        )
    )
)
def test_column_normalization_is_stochastic(rows):
    counts = np.array(rows, dtype=np.int64)
    n = counts.shape[0]
    cm = cl.ConfusionMatrix(tuple(f"p{z}" for z in range(n)), counts)
    norm = cl.normalize_columns(cm)
    sums = norm.probs.sum(axis=0)
    for j in range(n):
        if counts[:, j].sum() == 0:
            assert sums[j] == 0.0
        else:
            assert abs(sums[j] - 1.0) < 1e-12
