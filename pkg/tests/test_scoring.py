import itertools

import numpy as np
import pytest

from lipunits import scoring as sc
from lipunits.errors import ScoringError


def enumerate_alignments(ref, hyp):
    """Every monotone alignment as (cost, D, S, I), by recursion."""
    out = []

    def walk(i, j, cost, d, s, ins):
        if i == len(ref) and j == len(hyp):
            out.append((cost, d, s, ins))
            return
        if i < len(ref) and j < len(hyp):
            sub = 0 if ref[i] == hyp[j] else sc.SUB_COST
            walk(i + 1, j + 1, cost + sub, d, s + (sub > 0), ins)
        if i < len(ref):
            walk(i + 1, j, cost + sc.DEL_COST, d + 1, s, ins)
        if j < len(hyp):
            walk(i, j + 1, cost + sc.INS_COST, d, s, ins + 1)

    walk(0, 0, 0, 0, 0, 0)
    return out


def oracle_counts(ref, hyp):
    """Minimum alignment cost and its (unique, for short strings) counts."""
    options = enumerate_alignments(ref, hyp)
    best = min(c for c, *_ in options)
    winners = {(d, s, i) for c, d, s, i in options if c == best}
    assert len(winners) == 1, "cost ties with distinct counts need sub=7*k costs"
    return best, winners.pop()


def test_identity_alignment():
    r = sc.align(list("abcde"), list("abcde"))
    assert (r.n_ref, r.deletions, r.substitutions, r.insertions) == (5, 0, 0, 0)
    assert r.correctness == 1.0
    assert r.accuracy == 1.0


def test_worked_example_sub_and_del():
    r = sc.align(["a", "b", "c", "d"], ["a", "x", "c"])
    cost, (d, s, i) = oracle_counts(("a", "b", "c", "d"), ("a", "x", "c"))
    assert r.cost == cost
    assert (r.deletions, r.substitutions, r.insertions) == (d, s, i) == (1, 1, 0)
    assert r.correctness == pytest.approx(0.5)


def test_empty_hypothesis_all_deletions():
    r = sc.align(list("abc"), [])
    assert r.deletions == 3 and r.correctness == 0.0


def test_empty_reference_all_insertions():
    r = sc.align([], list("ab"))
    assert r.insertions == 2 and r.n_ref == 0
    assert r.correctness == 0.0


def test_alignment_pairs_consistent_with_counts():
    r = sc.align(list("abad"), list("bad"))
    matches = sum(1 for a, b in r.pairs if a is not None and b is not None and a == b)
    subs = sum(1 for a, b in r.pairs if a is not None and b is not None and a != b)
    dels = sum(1 for a, b in r.pairs if b is None)
    ins = sum(1 for a, b in r.pairs if a is None)
    assert (matches, subs, dels, ins) == (r.matches, r.substitutions, r.deletions, r.insertions)
    assert r.n_ref == r.matches + r.deletions + r.substitutions


def test_oracle_equivalence_exhaustive_short():
    alphabet = "abc"
    seqs = [
        tuple(s)
        for n in range(0, 4)
        for s in itertools.product(alphabet, repeat=n)
    ]
    for ref in seqs:
        for hyp in seqs:
            r = sc.align(ref, hyp)
            cost, (d, s, i) = oracle_counts(ref, hyp)
            assert r.cost == cost
            assert (r.deletions, r.substitutions, r.insertions) == (d, s, i)


def test_oracle_equivalence_sampled_longer():
    rng = np.random.default_rng(12)
    for _ in range(150):
        nr, nh = int(rng.integers(4, 7)), int(rng.integers(4, 7))
        ref = tuple("abc"[k] for k in rng.integers(0, 3, nr))
        hyp = tuple("abc"[k] for k in rng.integers(0, 3, nh))
        r = sc.align(ref, hyp)
        cost, (d, s, i) = oracle_counts(ref, hyp)
        assert r.cost == cost
        assert (r.deletions, r.substitutions, r.insertions) == (d, s, i)


def test_pooled_identical_folds():
    fr = sc.FoldResult(fold=0, alignments=(sc.align(list("ab"), list("ax")),))
    results = [sc.FoldResult(fold=k, alignments=fr.alignments) for k in range(10)]
    score = sc.pooled_correctness(results)
    assert score.mean_correctness == pytest.approx(0.5)
    assert score.standard_error == 0.0
    assert score.se_defined


def test_pooled_two_folds_se():
    # Folds with C = 0.4 and C = 0.6 built directly from counts.
    f1 = sc.FoldResult(fold=0, alignments=(sc.align(list("aaaaa"), list("aabbb")),))
    f2 = sc.FoldResult(fold=1, alignments=(sc.align(list("aaaaa"), list("aaabb")),))
    assert f1.correctness == pytest.approx(0.4)
    assert f2.correctness == pytest.approx(0.6)
    score = sc.pooled_correctness([f1, f2])
    assert score.mean_correctness == pytest.approx(0.5)
    assert score.standard_error == pytest.approx(0.1)


def test_pooled_single_fold_flagged():
    f1 = sc.FoldResult(fold=0, alignments=(sc.align(list("aa"), list("aa")),))
    score = sc.pooled_correctness([f1])
    assert score.standard_error == 0.0
    assert not score.se_defined


def test_pooled_no_reference_tokens():
    fr = sc.FoldResult(fold=0, alignments=(sc.align([], ["a"]),))
    with pytest.raises(ScoringError, match="no reference"):
        sc.pooled_correctness([fr])


def test_confusions_all_correct_diagonal():
    aligns = [sc.align(list("abab"), list("abab"))]
    tally = sc.confusions_from_alignments(aligns, vocabulary=("a", "b"))
    assert np.array_equal(tally.matrix.counts, np.array([[2, 0], [0, 2]]))
    assert tally.deletions == {} and tally.insertions == {}


def test_confusions_one_substitution():
    aligns = [sc.align(["a"], ["b"])]
    tally = sc.confusions_from_alignments(aligns, vocabulary=("a", "b"))
    assert tally.matrix.counts[0, 1] == 1
    assert tally.matrix.counts.sum() == 1


def test_confusions_exclude_del_ins_and_match_manual_tabulation():
    # Five small utterances, tabulated by hand from their alignment pairs.
    cases = [
        (list("aab"), list("aab")),   # 3 matches
        (list("ab"), list("b")),      # del a, match b
        (list("b"), list("ab")),      # ins a, match b
        (list("ab"), list("aa")),     # match a, sub b->a
        (list("ba"), list("bc")),     # match b, sub a->c
    ]
    aligns = [sc.align(r, h) for r, h in cases]
    tally = sc.confusions_from_alignments(aligns, vocabulary=("a", "b", "c"))
    # u1: K[a][a]+=2, K[b][b]+=1.  u2: del a, K[b][b]+=1.  u3: ins a, K[b][b]+=1.
    # u4: K[a][a]+=1, K[b][a]+=1.  u5: K[b][b]+=1, K[a][c]+=1.
    expect = np.array([
        [3, 0, 1],
        [1, 4, 0],
        [0, 0, 0],
    ])
    assert np.array_equal(tally.matrix.counts, expect)
    assert tally.deletions == {"a": 1}
    assert tally.insertions == {"a": 1}


def test_confusions_out_of_vocab():
    with pytest.raises(ScoringError, match="'z'"):
        sc.confusions_from_alignments([sc.align(["z"], ["z"])], vocabulary=("a",))


def test_correctness_consistent_with_confusion_diagonal():
    rng = np.random.default_rng(5)
    vocab = ("a", "b", "c")
    aligns = []
    for _ in range(20):
        ref = [vocab[k] for k in rng.integers(0, 3, int(rng.integers(1, 7)))]
        hyp = [vocab[k] for k in rng.integers(0, 3, int(rng.integers(0, 7)))]
        aligns.append(sc.align(ref, hyp))
    tally = sc.confusions_from_alignments(aligns, vocab)
    fold = sc.FoldResult(fold=0, alignments=tuple(aligns))
    n, d, s, _ = fold.pooled_counts()
    diag = int(np.trace(tally.matrix.counts))
    # N = matches + S + D, and K holds matches + substitutions
    assert diag == n - d - s
    assert tally.matrix.counts.sum() == n - d
    assert fold.correctness == pytest.approx(diag / n)
