"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with -s or -rA to see them).

Oracles are independent of the code paths they check: exhaustive pair search
for the clustering, brute-force path and label-sequence enumeration for
alignment and decoding, and a separate minimum-cost DP for string alignment.
"""

import itertools
import os
import time

import numpy as np
import pytest

from lipunits import cluster as cl
from lipunits import corpus as cp
from lipunits import decoder as dc
from lipunits import hierarchy as hi
from lipunits import hmm as hm
from lipunits import lexicon as lx
from lipunits import pipeline as pl
from lipunits import scoring as sc

from conftest import make_corpus
from test_cluster import replay_merges
from test_decoder import oracle_decode
from test_scoring import enumerate_alignments


def report(num, name, passed, detail=""):
    state = "PASS" if passed else "FAIL"
    print(f"[acceptance {num:02d}] {name}: {state} {detail}".rstrip())
    assert passed, f"criterion {num} ({name}) failed: {detail}"


# -- 1. clustering oracle ------------------------------------------------------


def test_criterion_01_clustering_oracle():
    t0 = time.monotonic()
    rng = np.random.default_rng(20240101)
    checked = 0
    for _ in range(100):
        n = int(rng.integers(3, 9))
        labels = tuple(f"x{k}" for k in range(n))
        n_vowels = int(rng.integers(1, n))
        cats = {l: (lx.VOWEL if k < n_vowels else lx.CONSONANT) for k, l in enumerate(labels)}
        counts = rng.integers(0, 10, (n, n))
        cm = cl.ConfusionMatrix(labels, counts)
        seed = int(rng.integers(2**31))
        family = cl.cluster_family(cm, cats, seed=seed)
        assert family.sizes == list(range(n, 1, -1))
        steps = replay_merges(cm, cats, seed=seed)
        assert len(steps) == len(family.trace.records)
        for rec, (a_set, b_set, q, tie) in zip(family.trace.records, steps):
            got = {
                family.maps[rec.size_before].members(rec.pair[0]),
                family.maps[rec.size_before].members(rec.pair[1]),
            }
            assert got == {a_set, b_set}, f"merge mismatch at size {rec.size_before}"
            assert rec.score == q
            assert rec.tie_broken == tie
            checked += 1
    elapsed = time.monotonic() - t0
    report(1, "clustering greedy = exhaustive search", elapsed < 5.0,
           f"({checked} merges over 100 matrices, {elapsed:.2f}s)")


# -- 2. worked merge example ---------------------------------------------------


def test_criterion_02_worked_example():
    counts = np.array([[8, 2, 0], [1, 9, 0], [0, 0, 10]])
    cm = cl.ConfusionMatrix(("p0", "p1", "p2"), counts)
    norm = cl.normalize_columns(cm)
    q01 = cl.merge_score(norm, 0, 1)
    expected = 2 / 11 + 1 / 9
    cats = {"p0": lx.CONSONANT, "p1": lx.CONSONANT, "p2": lx.CONSONANT}
    family = cl.cluster_family(cm, cats, seed=0)
    first = family.trace.records[0]
    merged = {
        family.maps[3].members(first.pair[0]),
        family.maps[3].members(first.pair[1]),
    }
    ok = abs(q01 - expected) < 1e-12 and merged == {frozenset(["p0"]), frozenset(["p1"])}
    report(2, "worked 3x3 example: q(0,1)=2/11+1/9, first merge {0,1}", ok,
           f"(q={q01!r})")


# -- 3. EM monotonicity --------------------------------------------------------


def _em_corpus(n_sentences, seed):
    rng = np.random.default_rng(seed)
    phones = [f"p{k}" for k in range(6)]
    inv = lx.parse_inventory("\n".join(f"{p} C" for p in phones))
    lex = lx.parse_lexicon("\n".join(f"W{k} {p}" for k, p in enumerate(phones)), inv)
    targets = {p: rng.normal(0, 3, 4) for p in phones}
    utts = make_corpus(targets, lex, n_sentences=n_sentences, seed=seed + 1,
                       noise=0.5, min_words=4, max_words=8)
    transcripts = [lx.expand_words(lex, u.words.labels) for u in utts]
    return phones, utts, transcripts


def test_criterion_03_em_monotonicity():
    t0 = time.monotonic()
    phones, utts, transcripts = _em_corpus(n_sentences=200, seed=301)
    cfg = hm.TrainConfig(iterations=11, seed=7)
    hset = hm.flat_start(utts, phones, (3, 5, 4), cfg)
    _, trace = hm.embedded_reestimate(hset, utts, transcripts, cfg)
    elapsed = time.monotonic() - t0
    steps_ok = all(
        cur >= prev - 1e-6 * abs(prev) for prev, cur in zip(trace, trace[1:])
    )
    report(3, "11-iteration log-likelihood non-decreasing", steps_ok and elapsed < 60.0,
           f"(LL {trace[0]:.1f} -> {trace[-1]:.1f}, {elapsed:.1f}s)")


# -- 4. parameter recovery -----------------------------------------------------


def test_criterion_04_parameter_recovery():
    t0 = time.monotonic()
    inv = lx.parse_inventory("pa C\npb C\n")
    lex = lx.parse_lexicon("KA pa\nKB pb\n", inv)
    targets = {"pa": np.array([0.0, 0.0]), "pb": np.array([5.0, 0.0])}
    assert np.linalg.norm(targets["pa"] - targets["pb"]) >= 5.0
    utts = make_corpus(targets, lex, n_sentences=500, seed=401, noise=0.5,
                       min_words=3, max_words=8)
    transcripts = [lx.expand_words(lex, u.words.labels) for u in utts]
    cfg = hm.TrainConfig(iterations=11, seed=4)
    hset = hm.flat_start(utts, ["pa", "pb"], (3, 1, 2), cfg)
    trained, _ = hm.embedded_reestimate(hset, utts, transcripts, cfg)
    errs = {
        label: float(np.abs(trained[label].means[:, 0, :] - target).max())
        for label, target in targets.items()
    }
    elapsed = time.monotonic() - t0
    report(4, "state means recover generator targets (Linf < 0.1)",
           max(errs.values()) < 0.1 and elapsed < 60.0,
           f"(errors {errs}, {elapsed:.1f}s)")


# -- 5. decode oracle ----------------------------------------------------------


def test_criterion_05_decode_oracle():
    from test_hmm import lr_model

    rng = np.random.default_rng(20240105)
    inv = lx.parse_inventory("pa V\npe V\nko C\ntu C\n")
    lex = lx.parse_lexicon("ONE ko pa\nTWO tu pe\nTHREE pa\n", inv)
    models = {p: lr_model(p, rng.normal(0, 3, 2).tolist(), stay=float(rng.uniform(0.3, 0.7)))
              for p in inv}
    hset = hm.HmmSet(models=models)
    seqs = [("ONE", "TWO"), ("THREE", "ONE"), ("TWO",), ("THREE", "TWO", "ONE")]
    lm = dc.estimate_bigram([lx.Transcript(lx.WORD, s) for s in seqs], discount=0.5)
    net = dc.build_network(lm, lex, None, lx.PHONEME, lx.WORD)
    params = dc.DecodeParams(grammar_scale=1.0, penalty=0.5)
    trials = 0
    for _ in range(40):
        frames = rng.normal(0, 3, (int(rng.integers(2, 9)), 1))
        want_seq, want_score = oracle_decode(hset, lex, lm, frames, params, max_len=3)
        got_seq, got_score = dc.decode(hset, net, frames, params)
        assert got_seq == want_seq, (got_seq, want_seq)
        assert abs(got_score - want_score) < 1e-9
        trials += 1
    report(5, "lattice Viterbi = exhaustive label-sequence search", True,
           f"({trials} random inputs)")


# -- 6. alignment oracle -------------------------------------------------------


def _oracle_min_cost(ref, hyp):
    """Independent plain-list DP for the minimum alignment cost."""
    nr, nh = len(ref), len(hyp)
    prev = [j * sc.INS_COST for j in range(nh + 1)]
    for i in range(1, nr + 1):
        cur = [i * sc.DEL_COST] + [0] * nh
        ri = ref[i - 1]
        for j in range(1, nh + 1):
            diag = prev[j - 1] + (0 if ri == hyp[j - 1] else sc.SUB_COST)
            cur[j] = min(diag, prev[j] + sc.DEL_COST, cur[j - 1] + sc.INS_COST)
        prev = cur
    return prev[nh]


def _counts_from_cost(cost, nr, nh):
    """Counts are unique at these costs: 10S + 7(D+I) with S <= 6 < 7."""
    for s in range(min(nr, nh) + 1):
        rest = cost - sc.SUB_COST * s
        if rest < 0 or rest % sc.DEL_COST:
            continue
        k = rest // sc.DEL_COST
        d = (k + nr - nh) // 2
        i = (k - nr + nh) // 2
        if d >= 0 and i >= 0 and (k + nr - nh) % 2 == 0 and s + d <= nr and s + i <= nh:
            return d, s, i
    raise AssertionError(f"no count solution for cost {cost} ({nr},{nh})")


def _canonical_refs(alphabet, max_len):
    """Sequences with symbols in first-occurrence order; every (ref, hyp)
    pair is a joint relabeling of one with a canonical ref."""
    out = [()]
    frontier = [()]
    for _ in range(max_len):
        nxt = []
        for seq in frontier:
            used = len(set(seq))
            for k in range(min(used + 1, len(alphabet))):
                nxt.append(seq + (alphabet[k],))
        out.extend(nxt)
        frontier = nxt
    return out


def test_criterion_06_alignment_oracle():
    alphabet = ("a", "b", "c")
    # validate the DP oracle itself against full alignment enumeration
    short = [
        tuple(s) for n in range(0, 4) for s in itertools.product(alphabet, repeat=n)
    ]
    for ref in short:
        for hyp in short:
            options = enumerate_alignments(ref, hyp)
            assert _oracle_min_cost(ref, hyp) == min(c for c, *_ in options)

    refs = _canonical_refs(alphabet, 6)
    hyps = [
        tuple(s) for n in range(0, 7) for s in itertools.product(alphabet, repeat=n)
    ]
    pairs = 0
    for ref in refs:
        for hyp in hyps:
            result = sc.align(ref, hyp)
            cost = _oracle_min_cost(ref, hyp)
            assert result.cost == cost, (ref, hyp)
            d, s, i = _counts_from_cost(cost, len(ref), len(hyp))
            assert (result.deletions, result.substitutions, result.insertions) == (d, s, i)
            if ref:
                assert result.correctness == (len(ref) - d - s) / len(ref)
            pairs += 1
    report(6, "DP alignment = exhaustive minimum over all short pairs", True,
           f"({pairs} canonical pairs, covering all 3-symbol pairs up to length 6)")


# -- 7. homophene reproduction -------------------------------------------------


def test_criterion_07_homophene_reproduction():
    lex = lx.demo_lexicon()
    ten = lx.bundled_p2v("speaker1_10units")
    tonnes = lx.unit_transcript_of_word("TONNES", lex, ten)
    since = lx.unit_transcript_of_word("SINCE", lex, ten)
    ok_pair = tonnes == since == ("v07", "v10", "v08", "v07")
    jeffers = lx.bundled_p2v("jeffers")
    groups = lx.homophene_groups(lex, jeffers)
    key = lx.unit_transcript_of_word("TALK", lex, jeffers)
    ok_four = groups.get(key) == ("DOG", "DUG", "TALK", "TONGUE")
    report(7, "tonnes/since and the four-word homophene group", ok_pair and ok_four,
           f"(tonnes -> {'/'.join(tonnes)})")


# -- 8. unit-size sweep shape ---------------------------------------------------


AC8_CONFIG = dict(
    synth_words=20, synth_sentences=100, synth_dim=3, synth_layout="anchored",
    synth_spread=1.1, synth_within=0.0, synth_noise=0.5,
    synth_min_words=1, synth_max_words=1, dur_min=4, dur_max=7,
    folds=10, test_size=20, seed=11, states=3, components=5, iterations=11,
    sizes="2-6,25,30,35,40,45", figures=False,
)


def test_criterion_08_size_sweep_shape(tmp_path):
    t0 = time.monotonic()
    cfg = pl.ExperimentConfig(out=str(tmp_path / "sweep"), **AC8_CONFIG)
    setup = pl.build_synth_setup(cfg)
    used = {p for pron in setup.lex.entries.values() for p in pron}
    assert len(setup.lex.entries) == 20 and used == set(setup.lex.inventory)
    _, summary = pl.run_discovery(cfg)
    elapsed = time.monotonic() - t0
    small = [r for r in summary if r["map_size"] <= 6]
    large = [r for r in summary if r["map_size"] >= 25]
    c6 = next(r["mean_C"] for r in summary if r["map_size"] == 6)
    within = all(
        abs(r["mean_C"] - r["homophene_ceiling"]) <= 2 * r["se"] for r in small
    )
    mean_large = float(np.mean([r["mean_C"] for r in large]))
    gap_ok = mean_large >= c6 + 0.1
    detail = (
        f"(small |C-ceiling| max {max(abs(r['mean_C'] - r['homophene_ceiling']) for r in small):.3f},"
        f" large mean C {mean_large:.3f} vs size-6 {c6:.3f}, {elapsed:.0f}s)"
    )
    report(8, "size sweep: ceiling-bound at <=6, +0.1 at >=25",
           within and gap_ok and elapsed < 600.0, detail)


# -- 9. hierarchical-training advantage ------------------------------------------


AC9_CONFIG = dict(
    synth_words=20, synth_dim=4, synth_layout="random", synth_spread=4.0,
    synth_clusters=12, synth_noise=0.6, synth_within=1.0,
    synth_sentences=36, synth_min_words=5, synth_max_words=8, test_size=7,
    components=1, dur_min=3, dur_max=6, folds=10, seed=23, states=3,
    iterations=11, figures=False,
)


def test_criterion_09_hierarchical_advantage(tmp_path):
    t0 = time.monotonic()
    cfg = pl.ExperimentConfig(out=str(tmp_path / "hier"), **AC9_CONFIG)
    run = pl.prepare_run(cfg)
    lex, utts, plan = run.lex, run.utts, run.plan
    pmap = run.cluster_map
    policy = cfg.policy()
    params = cfg.decode_params()
    hier_c, flat_c = [], []
    for fold in range(plan.n_folds):
        test, train = cp.split_fold(utts, plan, fold)
        tc = cfg.train_config(f"jitter/ac9/fold{fold}")
        hier, _, _ = hi.hierarchical_train(
            train, pmap, lex, tc, policy=policy,
            proto=(cfg.states, cfg.components), tie_after=cfg.tie_after,
        )
        flat = pl.train_fold_models(cfg, train, lex, lx.PHONEME, None, f"jitter/ac9/fold{fold}")
        net, _ = pl.build_fold_network(cfg, train, lex, lx.PHONEME, lx.PHONEME, None)
        hier_c.append(pl.score_fold(fold, test, hier, net, params, lx.PHONEME, lex).correctness)
        flat_c.append(pl.score_fold(fold, test, flat, net, params, lx.PHONEME, lex).correctness)
    elapsed = time.monotonic() - t0
    hier_arr, flat_arr = np.array(hier_c), np.array(flat_c)
    se = float(np.std(flat_arr, ddof=1) / np.sqrt(len(flat_arr)))
    wins = int(np.sum(hier_arr > flat_arr))
    mean_ok = hier_arr.mean() >= flat_arr.mean() - se
    detail = (
        f"(weak-learned {hier_arr.mean():.3f} vs flat {flat_arr.mean():.3f},"
        f" wins {wins}/10, 1se {se:.4f}, {elapsed:.0f}s)"
    )
    report(9, "weak-learned phonemes beat flat start", mean_ok and wins >= 7 and elapsed < 600.0, detail)


# -- 10. determinism -------------------------------------------------------------


def test_criterion_10_discover_determinism(tmp_path):
    base = dict(
        synth_words=12, synth_sentences=30, synth_dim=3, synth_clusters=14,
        synth_min_words=2, synth_max_words=3, dur_min=3, dur_max=5,
        folds=3, test_size=6, seed=99, components=1, iterations=5,
        sizes="8,5,3", figures=False,
    )
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    pl.run_discovery(pl.ExperimentConfig(out=str(out_a), **base))
    pl.run_discovery(pl.ExperimentConfig(out=str(out_b), **base))
    same = True
    compared = 0
    for name in ("results.csv", "summary.csv", "confusions.csv"):
        same &= (out_a / name).read_bytes() == (out_b / name).read_bytes()
        compared += 1
    for name in sorted(os.listdir(out_a / "family")):
        same &= (out_a / "family" / name).read_bytes() == (out_b / "family" / name).read_bytes()
        compared += 1
    report(10, "discover is byte-identical under a fixed master seed", same,
           f"({compared} files compared)")


# -- 11. optional data-gated check ------------------------------------------------


def test_criterion_11_rmav_features_optional():
    path = os.environ.get("LIPUNITS_RMAV_DIR")
    if not path or not os.path.isdir(path):
        print("[acceptance 11] per-speaker correctness on real features: SKIP "
              "(set LIPUNITS_RMAV_DIR to adapted feature corpora; optional, data-gated)")
        pytest.skip("RMAV-style features not available; optional criterion")
    speakers = sorted(
        f for f in os.listdir(path) if f.endswith(".txt")
    )
    assert speakers, f"no corpus files under {path}"
    results = {}
    for corpus_file in speakers:
        cfg = pl.ExperimentConfig(
            corpus=os.path.join(path, corpus_file),
            lexicon=os.path.join(path, "lexicon.dict"),
            folds=10, test_size=20, states=3, components=5, iterations=11,
            out=os.path.join(path, "out", corpus_file),
            figures=False,
            sizes="45",
        )
        run = pl.prepare_run(cfg)
        fold_results = []
        for fold in range(run.plan.n_folds):
            test, train = cp.split_fold(run.utts, run.plan, fold)
            hmms = pl.train_fold_models(cfg, train, run.lex, lx.PHONEME, None, f"jitter/{fold}")
            net, _ = pl.build_fold_network(cfg, train, run.lex, lx.PHONEME, lx.WORD, None)
            fold_results.append(
                pl.score_fold(fold, test, hmms, net, cfg.decode_params(), lx.WORD, run.lex)
            )
        results[corpus_file] = sc.pooled_correctness(fold_results).mean_correctness
    ok = all(0.04 <= c <= 0.08 for c in results.values())
    report(11, "per-speaker correctness within the published band", ok, f"({results})")
