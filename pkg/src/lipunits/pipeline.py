"""Experiment orchestration: discovery sweep, network-unit study, hierarchy study.

Every experiment is driven by an ExperimentConfig (flat key=value file, each
key overridable from the command line), runs on a fixed cross-validation plan
shared by all stages of a run, and emits per-fold CSV rows plus a per-setting
summary.  A master seed is split into labeled sub-streams per stage, so runs
are reproducible byte for byte.
"""

from __future__ import annotations

import dataclasses
import logging
import os
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import cluster as cl
from . import corpus as cp
from . import decoder as dc
from . import hierarchy as hi
from . import hmm as hm
from . import lexicon as lx
from . import scoring as sc
from .errors import ConfigError, LipunitsError
from .seeds import derive_seed, substream

log = logging.getLogger(__name__)

RESULT_COLUMNS = (
    "speaker", "map_size", "classifier_unit", "network_unit",
    "fold", "N", "D", "S", "I", "C", "C_raw",
)


@dataclass
class ExperimentConfig:
    # corpus source: a corpus file plus dictionary, or the synthetic setup
    corpus: str | None = None
    lexicon: str | None = None
    inventory: str | None = None
    synth_words: int = 20
    synth_sentences: int = 60
    synth_min_words: int = 3
    synth_max_words: int = 5
    synth_dim: int = 8
    synth_clusters: int = 28
    synth_layout: str = "random"   # random | ladder
    synth_spread: float = 4.0
    synth_within: float = 0.0
    synth_noise: float = 0.5
    synth_crossfade: int = 0
    dur_min: int = 3
    dur_max: int = 9
    # cross-validation
    folds: int = 10
    test_size: int = 20
    seed: int = 0
    # models
    states: int = 3
    components: int = 5
    iterations: int = 11
    floor_factor: float = 1e-4
    jitter_eps: float = 0.01
    sp_between: bool = True
    sil_edges: bool = False
    tie_after: int = 3
    # decoding
    grammar_scale: float = 1.0
    penalty: float = 0.5
    discount: float = 0.5
    # studies
    sizes: str = "11-35"
    classifier_unit: str = lx.PHONEME
    network_unit: str = lx.WORD
    map: str | None = None
    family_dir: str | None = None
    speaker: str = "s01"
    jobs: int = 1
    figures: bool = True
    out: str = "runs/out"

    def __post_init__(self):
        if self.folds < 1 or self.test_size < 1:
            raise ConfigError("folds and test_size must be >= 1")
        if self.dur_max < self.dur_min or self.dur_min < 1:
            raise ConfigError("bad duration range")
        if not parse_sizes(self.sizes):
            raise ConfigError(f"empty size range {self.sizes!r}")
        for path in (self.corpus, self.lexicon, self.inventory, self.map):
            if path is not None and not os.path.exists(path):
                raise ConfigError(f"configured file does not exist: {path}")

    def train_config(self, seed_label: str) -> hm.TrainConfig:
        return hm.TrainConfig(
            iterations=self.iterations,
            floor_factor=self.floor_factor,
            seed=derive_seed(self.seed, seed_label),
            jitter_eps=self.jitter_eps,
        )

    def policy(self) -> hi.TranscriptPolicy:
        return hi.TranscriptPolicy(sp_between=self.sp_between, sil_edges=self.sil_edges)

    def decode_params(self) -> dc.DecodeParams:
        return dc.DecodeParams(grammar_scale=self.grammar_scale, penalty=self.penalty)


_BOOLS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _coerce(name: str, annotation: str, raw: str):
    raw = raw.strip()
    if raw.lower() == "none":
        return None
    if "bool" in annotation:
        try:
            return _BOOLS[raw.lower()]
        except KeyError:
            raise ConfigError(f"key {name!r}: expected a boolean, got {raw!r}") from None
    try:
        if "int" in annotation:
            return int(raw)
        if "float" in annotation:
            return float(raw)
    except ValueError:
        raise ConfigError(f"key {name!r}: cannot parse {raw!r}") from None
    return raw


def load_config(path: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a flat key=value config file and apply command-line overrides."""
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    values: dict = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path} line {lineno}: expected key=value")
                key, _, val = line.partition("=")
                key = key.strip()
                if key not in fields:
                    raise ConfigError(f"{path} line {lineno}: unknown key {key!r}")
                values[key] = _coerce(key, str(fields[key].type), val)
    for key, val in (overrides or {}).items():
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        if val is None:
            continue
        if isinstance(val, str):
            val = _coerce(key, str(fields[key].type), val)
        values[key] = val
    return ExperimentConfig(**values)


def parse_sizes(spec: str) -> list[int]:
    """Parse "11-35" / "45,30,6-2" style size specs into a sorted list."""
    sizes: set[int] = set()
    for part in str(spec).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            a, _, b = part.partition("-")
            lo, hi = sorted((int(a), int(b)))
            sizes.update(range(lo, hi + 1))
        else:
            sizes.add(int(part))
    return sorted(sizes, reverse=True)


@dataclass
class SynthSetup:
    model: cp.SynthModel
    lex: lx.PronLexicon
    sentences: list[tuple[str, ...]]
    cluster_map: lx.P2VMap


def build_synth_setup(cfg: ExperimentConfig, inventory=None) -> SynthSetup:
    """Design a synthetic speaker: clustered phone targets and a lexicon.

    Phones are grouped into `synth_clusters` same-category clusters; targets
    within a cluster share a center (offset by `synth_within` when sub-unit
    distinctions should exist).  The lexicon covers every phone, then fills
    the remaining word budget with cluster-homophene siblings: word pairs
    that differ only within one cluster and therefore confuse on the lips.
    Sentences draw words uniformly so guessing baselines stay unbiased.

    The "anchored" layout instead builds words whose consonant slots come
    from a few anchor clusters shared across the lexicon, so word identity
    rides on one vowel drawn from a ladder of graded separations.
    """
    rng = substream(cfg.seed, "synth")
    if inventory is None:
        inventory = lx.load_inventory(cfg.inventory) if cfg.inventory else lx.default_inventory()
    if cfg.synth_layout == "anchored":
        return _anchored_setup(cfg, inventory, rng)
    vowels = sorted(p for p, ph in inventory.items() if ph.category == lx.VOWEL)
    consonants = sorted(p for p, ph in inventory.items() if ph.category == lx.CONSONANT)
    n_phones = len(vowels) + len(consonants)
    n_clusters = min(cfg.synth_clusters, n_phones)
    n_vowel_clusters = max(1, round(n_clusters * len(vowels) / n_phones))
    n_vowel_clusters = min(n_vowel_clusters, len(vowels))
    n_consonant_clusters = min(n_clusters - n_vowel_clusters, len(consonants))

    vs = list(vowels)
    cs = list(consonants)
    rng.shuffle(vs)
    rng.shuffle(cs)
    clusters = [vs[k::n_vowel_clusters] for k in range(n_vowel_clusters)]
    clusters += [cs[k::n_consonant_clusters] for k in range(n_consonant_clusters)]
    if cfg.synth_layout == "ladder":
        # Clusters of one category sit on a line; distance tracks ladder
        # position, so confusability falls off with separation and merged
        # units stay acoustically compact.
        centers = np.zeros((len(clusters), cfg.synth_dim))
        for k in range(len(clusters)):
            rank = k if k < n_vowel_clusters else k - n_vowel_clusters
            sign = 1.0 if k < n_vowel_clusters else -1.0
            centers[k, 0] = sign * (1 + rank) * cfg.synth_spread
    elif cfg.synth_layout == "random":
        centers = rng.normal(0.0, cfg.synth_spread, (len(clusters), cfg.synth_dim))
    else:
        raise ConfigError(f"unknown synth layout {cfg.synth_layout!r}")
    targets: dict[str, np.ndarray] = {}
    for center, members in zip(centers, clusters):
        for ph in members:
            off = rng.normal(0.0, 1.0, cfg.synth_dim)
            off *= cfg.synth_within / max(np.linalg.norm(off), 1e-12)
            targets[ph] = center + off

    # Base words: consume every phone once, alternating CVC / VCV patterns.
    cq, vq = deque(cs), deque(vs)
    prons: list[tuple[str, ...]] = []
    flip = True
    while cq or vq:
        want = ("C", "V", "C") if (flip and cq) or not vq else ("V", "C", "V")
        flip = not flip
        word = []
        for cat in want:
            q = cq if cat == "C" else vq
            if q:
                word.append(q.popleft())
        if not word:
            break
        if len(word) == 1:
            pool = vowels if word[0] in set(consonants) else consonants
            word.append(pool[int(rng.integers(len(pool)))])
        prons.append(tuple(word))

    # Sibling words: swap one phone for a same-cluster neighbour.
    cluster_of = {ph: k for k, members in enumerate(clusters) for ph in members}
    seen = set(prons)
    guard = 0
    while len(prons) < cfg.synth_words and guard < 1000:
        guard += 1
        base = prons[int(rng.integers(len(prons)))]
        pos = int(rng.integers(len(base)))
        siblings = [
            ph for ph in clusters[cluster_of[base[pos]]] if ph != base[pos]
        ]
        if not siblings:
            continue
        swap = siblings[int(rng.integers(len(siblings)))]
        candidate = base[:pos] + (swap,) + base[pos + 1:]
        if candidate in seen:
            continue
        seen.add(candidate)
        prons.append(candidate)
    prons = prons[: max(cfg.synth_words, len(prons))]

    entries = {f"W{k:02d}": pron for k, pron in enumerate(prons)}
    lex = lx.PronLexicon(entries=entries, inventory=inventory)
    words = sorted(entries)
    sentences = []
    for _ in range(cfg.synth_sentences):
        n = int(rng.integers(cfg.synth_min_words, cfg.synth_max_words + 1))
        sentences.append(tuple(words[int(rng.integers(len(words)))] for _ in range(n)))

    model = cp.SynthModel(
        base=np.zeros(cfg.synth_dim),
        modes=np.eye(cfg.synth_dim),
        coeffs=targets,
        noise_scale=cfg.synth_noise,
        duration_range=(cfg.dur_min, cfg.dur_max),
    )
    cluster_map = cl.map_from_clusters(clusters)
    return SynthSetup(model=model, lex=lex, sentences=sentences, cluster_map=cluster_map)


def _anchored_setup(cfg: ExperimentConfig, inventory, rng) -> SynthSetup:
    """Anchored-lexicon synthetic speaker (see build_synth_setup)."""
    vowels = sorted(p for p, ph in inventory.items() if ph.category == lx.VOWEL)
    consonants = sorted(p for p, ph in inventory.items() if ph.category == lx.CONSONANT)
    rng.shuffle(vowels)
    rng.shuffle(consonants)
    n_c = len(consonants)
    rest_n = max(0, n_c - 2 * ((n_c - 2) // 2)) if n_c > 4 else 0
    half = (n_c - rest_n) // 2
    anchor_a = consonants[:half]
    anchor_b = consonants[half : 2 * half]
    rest = consonants[2 * half :]

    targets: dict[str, np.ndarray] = {}
    for rank, v in enumerate(vowels):
        t = np.zeros(cfg.synth_dim)
        t[0] = (1 + rank) * cfg.synth_spread
        targets[v] = t
    for k, group in enumerate((anchor_a, anchor_b, rest)):
        center = np.zeros(cfg.synth_dim)
        center[0] = -(1 + k) * 6.0 * max(cfg.synth_spread, 1.0)
        for ph in group:
            off = rng.normal(0.0, 1.0, cfg.synth_dim)
            off *= cfg.synth_within / max(np.linalg.norm(off), 1e-12)
            targets[ph] = center + off

    # One ladder vowel per word between cycling anchors; leftover vowels ride
    # along on the last words, and the rest-cluster consonants replace the
    # closing anchor on the final few words.
    n_words = max(cfg.synth_words, 2)
    prons = []
    for i in range(n_words):
        c1 = anchor_a[i % len(anchor_a)]
        c2 = anchor_b[i % len(anchor_b)] if anchor_b else anchor_a[0]
        prons.append([c1, vowels[i % len(vowels)], c2])
    for j, v in enumerate(vowels[n_words:]):
        prons[n_words - 1 - j].append(v)
    for j, c in enumerate(rest):
        prons[n_words - 1 - j][2] = c
    seen = set()
    entries = {}
    for k, pron in enumerate(prons):
        key = tuple(pron)
        if key in seen:
            continue
        seen.add(key)
        entries[f"W{k:02d}"] = key
    lex = lx.PronLexicon(entries=entries, inventory=inventory)

    words = sorted(entries)
    sentences = []
    for _ in range(cfg.synth_sentences):
        n = int(rng.integers(cfg.synth_min_words, cfg.synth_max_words + 1))
        sentences.append(tuple(words[int(rng.integers(len(words)))] for _ in range(n)))

    model = cp.SynthModel(
        base=np.zeros(cfg.synth_dim),
        modes=np.eye(cfg.synth_dim),
        coeffs=targets,
        noise_scale=cfg.synth_noise,
        duration_range=(cfg.dur_min, cfg.dur_max),
    )
    clusters = [[v] for v in vowels] + [g for g in (anchor_a, anchor_b, rest) if g]
    return SynthSetup(
        model=model, lex=lex, sentences=sentences, cluster_map=cl.map_from_clusters(clusters)
    )


@dataclass
class PreparedRun:
    lex: lx.PronLexicon
    utts: list
    plan: cp.FoldPlan
    inventory: dict
    cluster_map: lx.P2VMap | None = None


def prepare_run(cfg: ExperimentConfig) -> PreparedRun:
    """Load or synthesize the corpus and fix the fold plan for all stages."""
    if cfg.corpus is not None:
        if cfg.lexicon is None:
            raise ConfigError("a corpus file needs a lexicon file")
        inventory = lx.load_inventory(cfg.inventory) if cfg.inventory else lx.default_inventory()
        lex = lx.read_lexicon(cfg.lexicon, inventory)
        utts = cp.read_corpus(cfg.corpus)
        cluster_map = None
    else:
        setup = build_synth_setup(cfg)
        inventory = setup.lex.inventory
        lex = setup.lex
        utts = cp.generate_corpus(
            setup.model,
            lex,
            setup.sentences,
            seed=derive_seed(cfg.seed, "corpus"),
            crossfade=cfg.synth_crossfade,
        )
        cluster_map = setup.cluster_map
    test_size = min(cfg.test_size, max(1, len(utts) // 5))
    if test_size != cfg.test_size:
        log.warning("test_size reduced to %d for a %d-utterance corpus", test_size, len(utts))
    plan = cp.plan_folds(utts, cfg.folds, test_size, seed=derive_seed(cfg.seed, "folds"))
    return PreparedRun(lex=lex, utts=utts, plan=plan, inventory=inventory, cluster_map=cluster_map)


def reference_labels(utt, network_unit: str, lex, pmap=None) -> tuple[str, ...]:
    if network_unit == lx.WORD:
        return utt.words.labels
    phones = lx.expand_words(lex, utt.words.labels)
    if network_unit == lx.PHONEME:
        return phones.labels
    return lx.phonemes_to_units(phones, pmap).labels


def train_fold_models(
    cfg: ExperimentConfig,
    train_utts,
    lex,
    classifier_unit: str,
    pmap,
    seed_label: str,
) -> hm.HmmSet:
    """Flat-start and re-estimate one fold's classifier set."""
    policy = cfg.policy()
    dim = train_utts[0].features.dim
    proto = (cfg.states, cfg.components, dim)
    if classifier_unit == lx.WORD:
        transcripts = [_word_training_transcript(u, policy) for u in train_utts]
        base_labels = sorted({w for u in train_utts for w in u.words.labels})
    elif classifier_unit == lx.PHONEME:
        transcripts = hi.training_transcripts(train_utts, lex, policy)
        base_labels = sorted({p for t in transcripts for p in t.labels} - {lx.SIL, lx.SP})
    else:
        covered = pmap.with_singletons(lex.phonemes_used())
        transcripts = hi.training_transcripts(train_utts, lex, policy, pmap=covered)
        base_labels = list(covered.unit_labels())
    labels = policy.labels(base_labels)
    hmms, _ = hi.train_stage(
        train_utts,
        transcripts,
        labels,
        proto,
        cfg.train_config(seed_label),
        tie_after=cfg.tie_after,
    )
    return hmms


def _word_training_transcript(utt, policy: hi.TranscriptPolicy) -> lx.Transcript:
    labels: list[str] = []
    if policy.sil_edges:
        labels.append(lx.SIL)
    for k, w in enumerate(utt.words.labels):
        if policy.sp_between and k > 0:
            labels.append(lx.SP)
        labels.append(w)
    if policy.sil_edges:
        labels.append(lx.SIL)
    return lx.Transcript(lx.WORD, tuple(labels))


def build_fold_network(
    cfg: ExperimentConfig,
    train_utts,
    lex,
    classifier_unit: str,
    network_unit: str,
    pmap,
):
    """Estimate the fold's bigram model and compose the decode network."""
    if network_unit == lx.WORD:
        seqs = [u.words for u in train_utts]
    elif network_unit == lx.PHONEME:
        seqs = [lx.expand_words(lex, u.words.labels) for u in train_utts]
    else:
        seqs = [
            lx.phonemes_to_units(lx.expand_words(lex, u.words.labels), pmap)
            for u in train_utts
        ]
    lm = dc.estimate_bigram(seqs, discount=cfg.discount)
    net = dc.build_network(lm, lex, pmap, classifier_unit, network_unit)
    return net, lm


def score_fold(
    fold: int,
    test_utts,
    hmms,
    net,
    params,
    network_unit,
    lex,
    pmap=None,
) -> sc.FoldResult:
    alignments = []
    for utt in test_utts:
        hyp, _ = dc.decode(hmms, net, utt.features, params)
        ref = reference_labels(utt, network_unit, lex, pmap)
        alignments.append(sc.align(ref, hyp))
    return sc.FoldResult(fold=fold, alignments=tuple(alignments))


def result_rows(cfg, map_size, classifier_unit, network_unit, fold_result) -> list[dict]:
    n, d, s, i = fold_result.pooled_counts()
    c_raw = fold_result.correctness
    return [{
        "speaker": cfg.speaker,
        "map_size": map_size,
        "classifier_unit": classifier_unit,
        "network_unit": network_unit,
        "fold": fold_result.fold,
        "N": n, "D": d, "S": s, "I": i,
        "C": max(c_raw, 0.0),
        "C_raw": c_raw,
    }]


def write_csv(path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_cell(row[c]) for c in columns) + "\n")


def append_csv(path, columns, rows, header: bool) -> None:
    mode = "w" if header else "a"
    with open(path, mode, encoding="utf-8") as fh:
        if header:
            fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_cell(row[c]) for c in columns) + "\n")
        fh.flush()


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _pool_map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Discovery: phoneme classification -> clustering -> unit-size sweep


def _phone_fold_job(args):
    cfg, lex, train_utts, test_utts, fold = args
    hmms = train_fold_models(cfg, train_utts, lex, lx.PHONEME, None, f"jitter/step1/fold{fold}")
    net, _ = build_fold_network(cfg, train_utts, lex, lx.PHONEME, lx.WORD, None)
    params = cfg.decode_params()
    vocab = sorted(lex.phonemes_used())
    word_alignments = []
    phone_alignments = []
    for utt in test_utts:
        hyp_words, _ = dc.decode(hmms, net, utt.features, params)
        word_alignments.append(sc.align(utt.words.labels, hyp_words))
        hyp_phones = [p for w in hyp_words for p in lex.pronunciation(w)]
        ref_phones = lx.expand_words(lex, utt.words.labels).labels
        phone_alignments.append(sc.align(ref_phones, hyp_phones))
    tally = sc.confusions_from_alignments(phone_alignments, vocab)
    return fold, sc.FoldResult(fold=fold, alignments=tuple(word_alignments)), tally.matrix


def _unit_fold_job(args):
    cfg, lex, train_utts, test_utts, fold, size, pmap = args
    covered = pmap.with_singletons(lex.phonemes_used())
    hmms = train_fold_models(
        cfg, train_utts, lex, lx.VISEME, pmap, f"jitter/step3/m{size}/fold{fold}"
    )
    net, _ = build_fold_network(cfg, train_utts, lex, lx.VISEME, lx.WORD, covered)
    fr = score_fold(fold, test_utts, hmms, net, cfg.decode_params(), lx.WORD, lex, covered)
    return size, fold, fr


def run_discovery(cfg: ExperimentConfig, run=None):
    """The three-step process: classify phonemes, cluster, sweep unit sizes.

    Emits results.csv (per-fold rows), summary.csv (per size: mean C, se, and
    both guessing baselines), the map family plus merge trace, and a figure.
    Rows for completed sizes are flushed as the sweep progresses.
    """
    os.makedirs(cfg.out, exist_ok=True)
    if run is None:
        run = prepare_run(cfg)
    lex, utts, plan = run.lex, run.utts, run.plan
    folds = [(fold, *cp.split_fold(utts, plan, fold)) for fold in range(plan.n_folds)]
    step1_rows: list[dict] = []

    # Step 1: phoneme classifiers under a word network, per fold.
    step1 = _pool_map(
        _phone_fold_job,
        [(cfg, lex, train, test, fold) for fold, test, train in folds],
        cfg.jobs,
    )
    step1.sort(key=lambda r: r[0])
    matrices = []
    results_path = os.path.join(cfg.out, "results.csv")
    first_flush = True
    for fold, fr, matrix in step1:
        step1_rows += result_rows(cfg, len(lex.phonemes_used()), lx.PHONEME, lx.WORD, fr)
        matrices.append(matrix)
    append_csv(results_path, RESULT_COLUMNS, step1_rows, header=first_flush)
    first_flush = False

    # Step 2: accumulate confusions and cluster.
    total = cl.accumulate(matrices).without_unused()
    if total.size == 0:
        raise LipunitsError("no phoneme was ever classified; cannot cluster")
    categories = lx.categories_of(run.inventory)
    family = cl.cluster_family(total, categories, seed=derive_seed(cfg.seed, "ties"))
    family_dir = os.path.join(cfg.out, "family")
    os.makedirs(family_dir, exist_ok=True)
    for size in family.sizes:
        lx.write_p2v(family.maps[size], os.path.join(family_dir, f"m{size:02d}.p2v"))
    cl.write_trace(family.trace, os.path.join(family_dir, "trace.txt"))
    cl.write_confusion_csv(total, os.path.join(cfg.out, "confusions.csv"))

    # Step 3: visual-unit classifiers at every requested size, same folds.
    sizes = [m for m in parse_sizes(cfg.sizes) if m in family.maps]
    summary_rows = []
    for size in sizes:
        pmap = family.maps[size]
        jobs = [
            (cfg, lex, train, test, fold, size, pmap)
            for fold, test, train in folds
        ]
        outcome = _pool_map(_unit_fold_job, jobs, cfg.jobs)
        outcome.sort(key=lambda r: r[1])
        fold_results = [fr for _, _, fr in outcome]
        size_rows = []
        for fr in fold_results:
            size_rows += result_rows(cfg, size, lx.VISEME, lx.WORD, fr)
        append_csv(results_path, RESULT_COLUMNS, size_rows, header=False)
        score = sc.pooled_correctness(fold_results)
        covered = pmap.with_singletons(lex.phonemes_used())
        unit_chance = 1.0 / pmap.size
        _, ceiling_covered = lx.guess_baselines(lex, covered)
        summary_rows.append({
            "map_size": size,
            "mean_C": score.mean_correctness,
            "se": score.standard_error,
            "unit_chance": unit_chance,
            "homophene_ceiling": ceiling_covered,
        })
    summary_path = os.path.join(cfg.out, "summary.csv")
    write_csv(
        summary_path,
        ("map_size", "mean_C", "se", "unit_chance", "homophene_ceiling"),
        summary_rows,
    )
    if cfg.figures:
        from . import plots
        plots.render_discovery(summary_rows, os.path.join(cfg.out, "discovery.png"))
    return family, summary_rows


# ---------------------------------------------------------------------------
# Network-unit study: the six classifier/network pairings on shared folds.


def _pairing_fold_job(args):
    cfg, lex, train_utts, test_utts, fold, pmap = args
    covered = pmap.with_singletons(lex.phonemes_used())
    sets = {}
    for unit in (lx.VISEME, lx.PHONEME, lx.WORD):
        sets[unit] = train_fold_models(
            cfg, train_utts, lex, unit, covered, f"jitter/net/{unit}/fold{fold}"
        )
    out = []
    for classifier, network in dc.UNIT_PAIRINGS:
        net, _ = build_fold_network(cfg, train_utts, lex, classifier, network, covered)
        fr = score_fold(
            fold, test_utts, sets[classifier], net, cfg.decode_params(), network, lex, covered
        )
        out.append((classifier, network, fr))
    return fold, out


def run_network_study(cfg: ExperimentConfig, run=None):
    """Score every Table-style classifier/network pairing on the same folds."""
    os.makedirs(cfg.out, exist_ok=True)
    if run is None:
        run = prepare_run(cfg)
    pmap = lx.read_p2v(cfg.map) if cfg.map else lx.bundled_p2v("jeffers")
    folds = [(fold, *cp.split_fold(run.utts, run.plan, fold)) for fold in range(run.plan.n_folds)]
    outcome = _pool_map(
        _pairing_fold_job,
        [(cfg, run.lex, train, test, fold, pmap) for fold, test, train in folds],
        cfg.jobs,
    )
    outcome.sort(key=lambda r: r[0])
    rows = []
    by_pairing: dict[tuple[str, str], list[sc.FoldResult]] = {}
    for fold, entries in outcome:
        for classifier, network, fr in entries:
            rows += result_rows(cfg, pmap.size, classifier, network, fr)
            by_pairing.setdefault((classifier, network), []).append(fr)
    write_csv(os.path.join(cfg.out, "results.csv"), RESULT_COLUMNS, rows)
    summary_rows = []
    for classifier, network in dc.UNIT_PAIRINGS:
        score = sc.pooled_correctness(by_pairing[(classifier, network)])
        summary_rows.append({
            "classifier_unit": classifier,
            "network_unit": network,
            "mean_C": score.mean_correctness,
            "se": score.standard_error,
        })
    write_csv(
        os.path.join(cfg.out, "summary.csv"),
        ("classifier_unit", "network_unit", "mean_C", "se"),
        summary_rows,
    )
    if cfg.figures:
        from . import plots
        plots.render_network_study(summary_rows, os.path.join(cfg.out, "netstudy.png"))
    return summary_rows


# ---------------------------------------------------------------------------
# Hierarchical-training study: unit models vs weak-learned phoneme models.


def _hier_fold_job(args):
    cfg, lex, train_utts, test_utts, fold, size, pmap = args
    covered = pmap.with_singletons(lex.phonemes_used())
    params = cfg.decode_params()
    unit_set = train_fold_models(
        cfg, lex=lex, train_utts=train_utts, classifier_unit=lx.VISEME,
        pmap=pmap, seed_label=f"jitter/hier/m{size}/fold{fold}",
    )
    phone_set, _, _ = hi.hierarchical_train(
        train_utts,
        pmap,
        lex,
        cfg.train_config(f"jitter/hier/m{size}/fold{fold}"),
        policy=cfg.policy(),
        proto=(cfg.states, cfg.components),
        tie_after=cfg.tie_after,
    )
    out = []
    for label, hmms, classifier in (
        ("viseme", unit_set, lx.VISEME),
        ("phoneme", phone_set, lx.PHONEME),
    ):
        for network in (lx.WORD, lx.PHONEME):
            net, _ = build_fold_network(cfg, train_utts, lex, classifier, network, covered)
            fr = score_fold(fold, test_utts, hmms, net, params, network, lex, covered)
            out.append((label, network, fr))
    return size, fold, out


def run_hierarchical_study(cfg: ExperimentConfig, run=None, family=None):
    """Four series per unit-set size: {units, weak-learned phonemes} x
    {word, phoneme} networks, on shared folds."""
    os.makedirs(cfg.out, exist_ok=True)
    if run is None:
        run = prepare_run(cfg)
    maps = _load_family_maps(cfg, run, family)
    sizes = [m for m in parse_sizes(cfg.sizes) if m in maps]
    if not sizes:
        raise ConfigError(f"no family map matches the size range {cfg.sizes!r}")
    folds = [(fold, *cp.split_fold(run.utts, run.plan, fold)) for fold in range(run.plan.n_folds)]
    clones_dir = os.path.join(cfg.out, "clones")
    os.makedirs(clones_dir, exist_ok=True)
    rows = []
    summary_rows = []
    results_path = os.path.join(cfg.out, "results.csv")
    for k, size in enumerate(sizes):
        covered = maps[size].with_singletons(run.lex.phonemes_used())
        record = hi.CloneRecord(
            assignments={unit: tuple(sorted(members)) for unit, members in covered.units}
        )
        with open(os.path.join(clones_dir, f"m{size:02d}.clones"), "w", encoding="utf-8") as fh:
            fh.write(hi.format_clone_record(record))
        jobs = [
            (cfg, run.lex, train, test, fold, size, maps[size])
            for fold, test, train in folds
        ]
        outcome = _pool_map(_hier_fold_job, jobs, cfg.jobs)
        outcome.sort(key=lambda r: r[1])
        by_series: dict[tuple[str, str], list[sc.FoldResult]] = {}
        size_rows = []
        for _, fold, entries in outcome:
            for classifier, network, fr in entries:
                size_rows += result_rows(cfg, size, classifier, network, fr)
                by_series.setdefault((classifier, network), []).append(fr)
        append_csv(results_path, RESULT_COLUMNS, size_rows, header=(k == 0))
        rows += size_rows
        entry = {"map_size": size}
        for (classifier, network), results in sorted(by_series.items()):
            score = sc.pooled_correctness(results)
            entry[f"C_{classifier}_{network}"] = score.mean_correctness
            entry[f"se_{classifier}_{network}"] = score.standard_error
        summary_rows.append(entry)
    columns = ["map_size"]
    for classifier in ("phoneme", "viseme"):
        for network in (lx.PHONEME, lx.WORD):
            columns += [f"C_{classifier}_{network}", f"se_{classifier}_{network}"]
    write_csv(os.path.join(cfg.out, "summary.csv"), columns, summary_rows)
    if cfg.figures:
        from . import plots
        plots.render_hierarchy_study(summary_rows, os.path.join(cfg.out, "hierstudy.png"))
    return summary_rows


def _load_family_maps(cfg: ExperimentConfig, run: PreparedRun, family) -> dict[int, lx.P2VMap]:
    if family is not None:
        return dict(family.maps)
    if cfg.family_dir:
        maps = {}
        for name in sorted(os.listdir(cfg.family_dir)):
            if name.endswith(".p2v"):
                pmap = lx.read_p2v(os.path.join(cfg.family_dir, name))
                maps[pmap.size] = pmap
        if not maps:
            raise ConfigError(f"no .p2v maps under {cfg.family_dir!r}")
        return maps
    log.info("no family configured; running the discovery pipeline first")
    family, _ = run_discovery(
        dataclasses.replace(cfg, out=os.path.join(cfg.out, "discovery"), figures=False),
        run=run,
    )
    return dict(family.maps)
