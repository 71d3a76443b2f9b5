"""Feature sequences, synthetic corpus generation, corpus I/O, and fold plans.

Synthetic utterances come from a linear model: every phone has a target
vector base + sum(coeff_i * mode_i); a phone occupies a uniformly drawn run
of frames at its target, optionally cross-faded into its neighbours, plus
isotropic Gaussian noise.  Generation is a pure function of (model,
sentences, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CorpusError
from .lexicon import PronLexicon, Transcript, WORD, expand_words

DEFAULT_FRAME_PERIOD = 0.04  # 25 frames per second


@dataclass(frozen=True)
class FeatureSequence:
    """A T x D matrix of real-valued frames at a fixed frame period."""

    frames: np.ndarray
    frame_period: float = DEFAULT_FRAME_PERIOD

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise CorpusError(f"feature matrix must be T x D with T >= 1, got shape {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise CorpusError("feature matrix contains non-finite values")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class Utterance:
    id: str
    features: FeatureSequence
    words: Transcript

    def __post_init__(self):
        if self.words.granularity != WORD:
            raise CorpusError(f"utterance {self.id!r}: transcript must be word-level")
        if not self.words.labels:
            raise CorpusError(f"utterance {self.id!r}: empty word transcript")


@dataclass(frozen=True)
class SynthModel:
    """Linear synthesis model: target(phone) = base + coeffs(phone) @ modes."""

    base: np.ndarray                      # (D,)
    modes: np.ndarray                     # (M, D)
    coeffs: dict[str, np.ndarray]         # phone -> (M,)
    noise_scale: float = 0.0
    duration_range: tuple[int, int] = (3, 9)

    def __post_init__(self):
        base = np.asarray(self.base, dtype=np.float64)
        modes = np.asarray(self.modes, dtype=np.float64)
        if modes.ndim != 2 or modes.shape[0] < 1:
            raise CorpusError("model needs at least one mode vector")
        if base.shape != (modes.shape[1],):
            raise CorpusError("base vector and modes disagree on dimension")
        if self.noise_scale < 0:
            raise CorpusError("noise scale must be >= 0")
        lo, hi = self.duration_range
        if lo < 1 or hi < lo:
            raise CorpusError(f"bad duration range {self.duration_range}")
        coeffs = {ph: np.asarray(c, dtype=np.float64) for ph, c in self.coeffs.items()}
        for ph, c in coeffs.items():
            if c.shape != (modes.shape[0],):
                raise CorpusError(f"phone {ph!r}: coefficient vector has wrong length")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def dim(self) -> int:
        return self.base.shape[0]

    def target(self, phone: str) -> np.ndarray:
        try:
            c = self.coeffs[phone]
        except KeyError:
            raise CorpusError(f"model has no coefficients for phone {phone!r}") from None
        return self.base + c @ self.modes


def targets_model(targets: dict[str, np.ndarray]) -> SynthModel:
    """Build a SynthModel whose mode basis is the identity, so that each
    phone's target equals its coefficient vector directly."""
    dim = len(next(iter(targets.values())))
    return SynthModel(
        base=np.zeros(dim),
        modes=np.eye(dim),
        coeffs={ph: np.asarray(t, dtype=np.float64) for ph, t in targets.items()},
    )


def generate_corpus(
    model: SynthModel,
    lex: PronLexicon,
    sentences,
    seed: int,
    crossfade: int = 0,
    noise_scale: float | None = None,
    sp_between: bool = False,
    sil_edges: bool = False,
) -> list[Utterance]:
    """Generate one utterance per sentence (a sequence of lexicon words).

    Each phone of the pronunciation expansion occupies a run of frames at its
    target vector; the first `crossfade` frames of every non-initial phone
    interpolate linearly from the previous target.  Zero-mean Gaussian noise
    of the configured scale is added everywhere.  Identical (model, sentences,
    seed) arguments give bit-identical corpora.
    """
    rng = np.random.default_rng(seed)
    sigma = model.noise_scale if noise_scale is None else noise_scale
    lo, hi = model.duration_range
    utts = []
    for idx, sentence in enumerate(sentences):
        words = tuple(w.upper() for w in sentence)
        phones = expand_words(lex, words, sp_between=sp_between, sil_edges=sil_edges).labels
        segments = []
        prev_target = None
        for ph in phones:
            target = model.target(ph)
            dur = int(rng.integers(lo, hi + 1))
            seg = np.tile(target, (dur, 1))
            if crossfade > 0 and prev_target is not None:
                ramp = min(crossfade, dur)
                alphas = (np.arange(1, ramp + 1) / (ramp + 1.0))[:, None]
                seg[:ramp] = prev_target + alphas * (target - prev_target)
            segments.append(seg)
            prev_target = target
        frames = np.concatenate(segments, axis=0)
        if sigma > 0:
            frames = frames + rng.normal(0.0, sigma, size=frames.shape)
        utts.append(
            Utterance(
                id=f"u{idx:04d}",
                features=FeatureSequence(frames),
                words=Transcript(WORD, words),
            )
        )
    return utts


def corpus_dim(utts) -> int:
    dims = {u.features.dim for u in utts}
    if len(dims) != 1:
        raise CorpusError(f"corpus mixes feature dimensions {sorted(dims)}")
    return dims.pop()


def write_corpus(utts, path) -> None:
    """Write a corpus as UTF-8 text; floats use shortest round-trip form."""
    if not utts:
        raise CorpusError("refusing to write an empty corpus")
    dim = corpus_dim(utts)
    rate = 1.0 / utts[0].features.frame_period
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"corpus dim {dim} rate {rate!r}\n")
        for utt in utts:
            frames = utt.features.frames
            fh.write(f"utt {utt.id} frames {frames.shape[0]} words {' '.join(utt.words.labels)}\n")
            for row in frames:
                fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def read_corpus(path) -> list[Utterance]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("corpus "):
        raise CorpusError(f"{path}: missing corpus header")
    header = lines[0].split()
    try:
        dim = int(header[header.index("dim") + 1])
        rate = float(header[header.index("rate") + 1])
    except (ValueError, IndexError):
        raise CorpusError(f"{path}: malformed header {lines[0]!r}") from None
    period = 1.0 / rate
    utts = []
    lineno = 1
    while lineno < len(lines):
        line = lines[lineno]
        if not line.strip():
            lineno += 1
            continue
        parts = line.split()
        if parts[0] != "utt" or "frames" not in parts or "words" not in parts:
            raise CorpusError(f"{path} line {lineno + 1}: expected utterance header, got {line!r}")
        utt_id = parts[1]
        n_frames = int(parts[parts.index("frames") + 1])
        words = tuple(parts[parts.index("words") + 1:])
        if n_frames < 1:
            raise CorpusError(f"{path} line {lineno + 1}: utterance {utt_id!r} has no frames")
        rows = np.empty((n_frames, dim), dtype=np.float64)
        for k in range(n_frames):
            lineno += 1
            if lineno >= len(lines):
                raise CorpusError(f"{path}: utterance {utt_id!r} truncated")
            tokens = lines[lineno].split()
            if len(tokens) != dim:
                raise CorpusError(
                    f"{path} line {lineno + 1}: utterance {utt_id!r} frame has"
                    f" {len(tokens)} values, expected {dim}"
                )
            try:
                rows[k] = [float(t) for t in tokens]
            except ValueError:
                raise CorpusError(
                    f"{path} line {lineno + 1}: utterance {utt_id!r} has a malformed numeric token"
                ) from None
        utts.append(
            Utterance(
                id=utt_id,
                features=FeatureSequence(rows, frame_period=period),
                words=Transcript(WORD, words),
            )
        )
        lineno += 1
    return utts


@dataclass(frozen=True)
class FoldPlan:
    """Cross-validation folds: per fold, disjoint test and train id tuples.

    Test draws are independent across folds ("with replacement" across the
    plan), so an utterance may be tested in several folds; within one fold
    test ids are distinct and never trained on.
    """

    folds: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]
    seed: int

    def __post_init__(self):
        for k, (test, train) in enumerate(self.folds):
            if len(set(test)) != len(test):
                raise CorpusError(f"fold {k}: duplicate test ids")
            if set(test) & set(train):
                raise CorpusError(f"fold {k}: test and train overlap")

    @property
    def n_folds(self) -> int:
        return len(self.folds)


def plan_folds(utts, k: int, test_size: int, seed: int) -> FoldPlan:
    """Draw k folds of `test_size` distinct test utterances each."""
    ids = [u.id for u in utts]
    if test_size > len(ids):
        raise CorpusError(f"test size {test_size} exceeds corpus size {len(ids)}")
    if test_size == len(ids):
        raise CorpusError("test size equals corpus size; training set would be empty")
    rng = np.random.default_rng(seed)
    folds = []
    for _ in range(k):
        chosen = rng.choice(len(ids), size=test_size, replace=False)
        test = set(ids[i] for i in chosen)
        folds.append(
            (tuple(sorted(test)), tuple(i for i in ids if i not in test))
        )
    return FoldPlan(folds=tuple(folds), seed=seed)


def split_fold(utts, plan: FoldPlan, fold: int) -> tuple[list[Utterance], list[Utterance]]:
    """Return (test utterances, train utterances) for one fold."""
    test_ids, train_ids = plan.folds[fold]
    by_id = {u.id: u for u in utts}
    return [by_id[i] for i in test_ids], [by_id[i] for i in train_ids]


def write_fold_plan(plan: FoldPlan, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"folds {plan.n_folds} seed {plan.seed}\n")
        for test, train in plan.folds:
            fh.write("test " + " ".join(test) + "\n")
            fh.write("train " + " ".join(train) + "\n")


def read_fold_plan(path) -> FoldPlan:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("folds "):
        raise CorpusError(f"{path}: missing fold-plan header")
    head = lines[0].split()
    n, seed = int(head[1]), int(head[3])
    folds = []
    for k in range(n):
        test = tuple(lines[1 + 2 * k].split()[1:])
        train = tuple(lines[2 + 2 * k].split()[1:])
        folds.append((test, train))
    return FoldPlan(folds=tuple(folds), seed=seed)
