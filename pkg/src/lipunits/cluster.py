"""Confusion-matrix accumulation and greedy merging into visual-unit families.

The count matrix K holds how often actual label i was predicted as label j.
Its column-normalized form P gives, per prediction, the probability of each
true label.  A merge candidate (r, s) scores q = P[r][s] + P[s][r]; the
highest-scoring pair whose members share a vowel/consonant category is merged
(rows and columns of K summed, P recomputed from the merged counts), and the
process repeats until no legal pair remains.  Every intermediate partition is
kept, giving a nested family of maps from the full label set down to one
vowel unit plus one consonant unit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ClusterError
from .lexicon import P2VMap, VOWEL, CONSONANT

COMMENT_PREFIX = ";;;"


@dataclass(frozen=True)
class ConfusionMatrix:
    """Square matrix of actual-vs-predicted counts over an ordered label set."""

    labels: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        labels = tuple(self.labels)
        counts = np.asarray(self.counts, dtype=np.int64)
        n = len(labels)
        if len(set(labels)) != n:
            raise ClusterError("confusion labels must be unique")
        if counts.shape != (n, n):
            raise ClusterError(f"counts must be {n}x{n}, got {counts.shape}")
        if np.any(counts < 0):
            raise ClusterError("confusion counts must be non-negative")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "counts", counts)

    @property
    def size(self) -> int:
        return len(self.labels)

    def total(self) -> int:
        return int(self.counts.sum())

    def without_unused(self) -> "ConfusionMatrix":
        """Drop labels that never appear as actual or predicted (omissions)."""
        used = (self.counts.sum(axis=0) + self.counts.sum(axis=1)) > 0
        keep = np.flatnonzero(used)
        return ConfusionMatrix(
            labels=tuple(self.labels[i] for i in keep),
            counts=self.counts[np.ix_(keep, keep)],
        )


@dataclass(frozen=True)
class NormalizedConfusion:
    """Column-stochastic confusion: P[i][j] = Pr(actual i | predicted j)."""

    labels: tuple[str, ...]
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=np.float64))


def accumulate(folds) -> ConfusionMatrix:
    """Element-wise sum of per-fold confusion matrices over identical labels."""
    folds = list(folds)
    if not folds:
        raise ClusterError("no matrices to accumulate")
    labels = folds[0].labels
    total = np.zeros_like(folds[0].counts)
    for cm in folds:
        if cm.labels != labels:
            raise ClusterError(f"label mismatch: {cm.labels} vs {labels}")
        total = total + cm.counts
    return ConfusionMatrix(labels=labels, counts=total)


def normalize_columns(cm: ConfusionMatrix) -> NormalizedConfusion:
    """Divide each column by its sum; all-zero columns stay all-zero."""
    counts = cm.counts.astype(np.float64)
    col = counts.sum(axis=0)
    probs = np.zeros_like(counts)
    nz = col > 0
    probs[:, nz] = counts[:, nz] / col[nz]
    return NormalizedConfusion(labels=cm.labels, probs=probs)


def merge_score(norm: NormalizedConfusion, r: int, s: int) -> float:
    """Score of merging label indices r and s: P[r][s] + P[s][r]."""
    if r == s:
        raise ClusterError("cannot score a label against itself")
    return float(norm.probs[r, s] + norm.probs[s, r])


@dataclass(frozen=True)
class MergeRecord:
    size_before: int
    pair: tuple[str, str]   # unit labels at that step
    score: float
    tie_broken: bool


@dataclass(frozen=True)
class MergeTrace:
    records: tuple[MergeRecord, ...]
    seed: int

    def __post_init__(self):
        sizes = [r.size_before for r in self.records]
        for a, b in zip(sizes, sizes[1:]):
            if b != a - 1:
                raise ClusterError("trace sizes must decrease by exactly 1 per merge")


@dataclass(frozen=True)
class P2VFamily:
    """Nested maps keyed by unit count, from the initial size down to the end."""

    maps: dict[int, P2VMap]
    trace: MergeTrace

    @property
    def sizes(self) -> list[int]:
        return sorted(self.maps, reverse=True)

    @property
    def max_size(self) -> int:
        return max(self.maps)

    @property
    def min_size(self) -> int:
        return min(self.maps)


def map_from_clusters(clusters) -> P2VMap:
    """Label clusters v01..vMM by descending member count, ties by first member."""
    ordered = sorted((list(c) for c in clusters), key=lambda c: (-len(c), sorted(c)[0]))
    units = tuple(
        (f"v{idx:02d}", frozenset(members)) for idx, members in enumerate(ordered, start=1)
    )
    return P2VMap(units)


def cluster_family(cm: ConfusionMatrix, categories: dict[str, str], seed: int) -> P2VFamily:
    """Greedily merge the most confused same-category pair until none remains.

    Ties on the top score are broken uniformly at random from a generator
    seeded with `seed` (no draw is consumed when the best pair is unique).
    Counts are merged by summing rows and columns; probabilities are always
    recomputed from the merged counts.
    """
    if cm.size == 0:
        raise ClusterError("empty confusion matrix")
    for label in cm.labels:
        if label not in categories:
            raise ClusterError(f"label {label!r} has no vowel/consonant category")
        if categories[label] not in (VOWEL, CONSONANT):
            raise ClusterError(f"label {label!r}: bad category {categories[label]!r}")

    rng = np.random.default_rng(seed)
    clusters = [[label] for label in cm.labels]
    cats = [categories[label] for label in cm.labels]
    counts = cm.counts.copy()

    maps: dict[int, P2VMap] = {len(clusters): map_from_clusters(clusters)}
    records: list[MergeRecord] = []

    while True:
        m = len(clusters)
        legal = [
            (i, j)
            for i in range(m)
            for j in range(i + 1, m)
            if cats[i] == cats[j]
        ]
        if not legal:
            break
        norm = normalize_columns(ConfusionMatrix(tuple(f"c{i}" for i in range(m)), counts))
        scores = [merge_score(norm, i, j) for i, j in legal]
        best = max(scores)
        candidates = [pair for pair, q in zip(legal, scores) if q == best]
        tie = len(candidates) > 1
        choice = candidates[int(rng.integers(len(candidates)))] if tie else candidates[0]
        i, j = choice

        name_map = maps[m]
        label_of = {frozenset(c): lab for lab, c in ((lab, mem) for lab, mem in name_map.units)}
        records.append(
            MergeRecord(
                size_before=m,
                pair=(label_of[frozenset(clusters[i])], label_of[frozenset(clusters[j])]),
                score=best,
                tie_broken=tie,
            )
        )

        counts[i, :] += counts[j, :]
        counts[:, i] += counts[:, j]
        counts = np.delete(np.delete(counts, j, axis=0), j, axis=1)
        clusters[i] = clusters[i] + clusters[j]
        del clusters[j]
        del cats[j]
        maps[len(clusters)] = map_from_clusters(clusters)

    return P2VFamily(maps=maps, trace=MergeTrace(records=tuple(records), seed=seed))


def format_trace(trace: MergeTrace) -> str:
    lines = []
    for rec in trace.records:
        a, b = rec.pair
        lines.append(f"m={rec.size_before} merge {a}+{b} q={rec.score!r} tie={int(rec.tie_broken)}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_trace(text: str, seed: int = 0) -> MergeTrace:
    records = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(COMMENT_PREFIX):
            continue
        parts = line.split()
        try:
            size = int(parts[0].removeprefix("m="))
            a, b = parts[2].split("+")
            score = float(parts[3].removeprefix("q="))
            tie = bool(int(parts[4].removeprefix("tie=")))
        except (ValueError, IndexError):
            raise ClusterError(f"trace line {lineno}: cannot parse {raw!r}") from None
        records.append(MergeRecord(size_before=size, pair=(a, b), score=score, tie_broken=tie))
    return MergeTrace(records=tuple(records), seed=seed)


def write_trace(trace: MergeTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_trace(trace))


def read_trace(path, seed: int = 0) -> MergeTrace:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh.read(), seed=seed)


def write_confusion_csv(cm: ConfusionMatrix, path) -> None:
    """CSV with a label header row and one 'actual' label per data row."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("actual," + ",".join(cm.labels) + "\n")
        for label, row in zip(cm.labels, cm.counts):
            fh.write(label + "," + ",".join(str(int(v)) for v in row) + "\n")


def read_confusion_csv(path) -> ConfusionMatrix:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ClusterError(f"{path}: empty confusion file")
    header = lines[0].split(",")
    if header[0] != "actual":
        raise ClusterError(f"{path}: first header cell must be 'actual'")
    labels = tuple(header[1:])
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != len(labels) + 1:
            raise ClusterError(f"{path} line {lineno}: expected {len(labels) + 1} cells")
        if cells[0] != labels[lineno - 2]:
            raise ClusterError(f"{path} line {lineno}: row label order must match header")
        rows.append([int(c) for c in cells[1:]])
    return ConfusionMatrix(labels=labels, counts=np.array(rows, dtype=np.int64))
