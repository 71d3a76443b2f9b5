"""Dynamic-programming string alignment and correctness scoring.

Alignment uses the toolkit-compatible costs: substitution 10, insertion 7,
deletion 7.  Correctness is C = (N - D - S) / N over a reference of length N;
insertions are ignored by C but reported, and accuracy (which subtracts them)
is available alongside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ScoringError
from .cluster import ConfusionMatrix

SUB_COST = 10
INS_COST = 7
DEL_COST = 7


@dataclass(frozen=True)
class AlignmentResult:
    """Counts and aligned pairs from one minimum-cost alignment.

    `pairs` holds (ref_label, hyp_label) tuples where one side is None for
    deletions (missing hyp) and insertions (missing ref).
    """

    n_ref: int
    deletions: int
    substitutions: int
    insertions: int
    pairs: tuple[tuple[str | None, str | None], ...]

    @property
    def matches(self) -> int:
        return self.n_ref - self.deletions - self.substitutions

    @property
    def correctness(self) -> float:
        if self.n_ref == 0:
            return 0.0
        return (self.n_ref - self.deletions - self.substitutions) / self.n_ref

    @property
    def accuracy(self) -> float:
        if self.n_ref == 0:
            return 0.0
        return (self.n_ref - self.deletions - self.substitutions - self.insertions) / self.n_ref

    @property
    def cost(self) -> int:
        return SUB_COST * self.substitutions + DEL_COST * self.deletions + INS_COST * self.insertions


def align(ref, hyp) -> AlignmentResult:
    """Minimum-cost alignment of a hypothesis against a reference.

    Either sequence may be empty.  At equal cost the backtrace prefers
    match > substitution > deletion > insertion.
    """
    ref = list(ref)
    hyp = list(hyp)
    nr, nh = len(ref), len(hyp)
    cost = np.zeros((nr + 1, nh + 1), dtype=np.int64)
    op = np.zeros((nr + 1, nh + 1), dtype=np.int8)  # 0 match, 1 sub, 2 del, 3 ins
    cost[:, 0] = DEL_COST * np.arange(nr + 1)
    op[1:, 0] = 2
    cost[0, :] = INS_COST * np.arange(nh + 1)
    op[0, 1:] = 3
    for i in range(1, nr + 1):
        for j in range(1, nh + 1):
            if ref[i - 1] == hyp[j - 1]:
                diag = cost[i - 1, j - 1]
                diag_op = 0
            else:
                diag = cost[i - 1, j - 1] + SUB_COST
                diag_op = 1
            best, best_op = diag, diag_op
            dele = cost[i - 1, j] + DEL_COST
            if dele < best:
                best, best_op = dele, 2
            ins = cost[i, j - 1] + INS_COST
            if ins < best:
                best, best_op = ins, 3
            cost[i, j] = best
            op[i, j] = best_op

    pairs = []
    d = s = ins_n = 0
    i, j = nr, nh
    while i > 0 or j > 0:
        o = op[i, j]
        if o in (0, 1):
            pairs.append((ref[i - 1], hyp[j - 1]))
            if o == 1:
                s += 1
            i, j = i - 1, j - 1
        elif o == 2:
            pairs.append((ref[i - 1], None))
            d += 1
            i -= 1
        else:
            pairs.append((None, hyp[j - 1]))
            ins_n += 1
            j -= 1
    return AlignmentResult(
        n_ref=nr,
        deletions=d,
        substitutions=s,
        insertions=ins_n,
        pairs=tuple(reversed(pairs)),
    )


@dataclass(frozen=True)
class FoldResult:
    """Per-utterance alignments of one cross-validation fold."""

    fold: int
    alignments: tuple[AlignmentResult, ...]

    def pooled_counts(self) -> tuple[int, int, int, int]:
        n = sum(a.n_ref for a in self.alignments)
        d = sum(a.deletions for a in self.alignments)
        s = sum(a.substitutions for a in self.alignments)
        i = sum(a.insertions for a in self.alignments)
        return n, d, s, i

    @property
    def correctness(self) -> float:
        n, d, s, _ = self.pooled_counts()
        if n == 0:
            raise ScoringError(f"fold {self.fold}: no reference tokens")
        return (n - d - s) / n


@dataclass(frozen=True)
class PooledScore:
    mean_correctness: float
    standard_error: float
    se_defined: bool


def pooled_correctness(results) -> PooledScore:
    """Mean of per-fold correctness (each from that fold's pooled counts) and
    the standard error of the fold values.  With a single fold the standard
    error is undefined and reported as 0 with `se_defined` False."""
    results = list(results)
    if not results:
        raise ScoringError("no fold results")
    values = [fr.correctness for fr in results]
    mean = sum(values) / len(values)
    if len(values) < 2:
        return PooledScore(mean_correctness=mean, standard_error=0.0, se_defined=False)
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return PooledScore(
        mean_correctness=mean,
        standard_error=math.sqrt(var) / math.sqrt(len(values)),
        se_defined=True,
    )


@dataclass(frozen=True)
class ConfusionTally:
    """Confusion counts plus the deletion/insertion events excluded from them."""

    matrix: ConfusionMatrix
    deletions: dict[str, int]
    insertions: dict[str, int]


def confusions_from_alignments(alignments, vocabulary) -> ConfusionTally:
    """Count matches and substitutions into K[actual][predicted].

    Deletions and insertions are classification non-events: they are kept out
    of the matrix and tallied separately per label.
    """
    labels = tuple(vocabulary)
    index = {label: k for k, label in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    dels: dict[str, int] = {}
    ins: dict[str, int] = {}
    for result in alignments:
        for ref_label, hyp_label in result.pairs:
            for lab in (ref_label, hyp_label):
                if lab is not None and lab not in index:
                    raise ScoringError(f"label {lab!r} not in vocabulary")
            if ref_label is not None and hyp_label is not None:
                counts[index[ref_label], index[hyp_label]] += 1
            elif ref_label is not None:
                dels[ref_label] = dels.get(ref_label, 0) + 1
            else:
                ins[hyp_label] = ins.get(hyp_label, 0) + 1
    return ConfusionTally(
        matrix=ConfusionMatrix(labels=labels, counts=counts),
        deletions=dels,
        insertions=ins,
    )
