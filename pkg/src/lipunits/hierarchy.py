"""Hierarchical training: visual-unit models cloned into phoneme models.

Stage one flat-starts and re-estimates models labeled by visual units; every
phoneme model is then initialized as a value-identical copy of its unit's
model (transitions included) and re-estimated on the same data relabeled at
phoneme granularity.  Silence and short-pause models carry over unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ModelError
from .hmm import HmmSet, TrainConfig, embedded_reestimate, flat_start, tie_sp
from .lexicon import (
    P2VMap,
    PronLexicon,
    SIL,
    SP,
    Transcript,
    expand_words,
    phonemes_to_units,
)


@dataclass(frozen=True)
class CloneRecord:
    """Which phoneme models were initialized from which unit model."""

    assignments: dict[str, tuple[str, ...]]

    def __post_init__(self):
        seen: dict[str, str] = {}
        for unit, phones in self.assignments.items():
            for ph in phones:
                if ph in seen:
                    raise ModelError(f"phoneme {ph!r} cloned from both {seen[ph]!r} and {unit!r}")
                seen[ph] = unit

    def phonemes(self) -> set[str]:
        return {ph for phones in self.assignments.values() for ph in phones}


def format_clone_record(record: CloneRecord) -> str:
    lines = [f"{unit}: {' '.join(phones)}" for unit, phones in record.assignments.items()]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_clone_record(text: str) -> CloneRecord:
    assignments = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        unit, _, rest = line.partition(":")
        assignments[unit.strip()] = tuple(rest.split())
    return CloneRecord(assignments=assignments)


def clone_models(visual_set: HmmSet, pmap: P2VMap) -> tuple[HmmSet, CloneRecord]:
    """Duplicate each unit model once per member phoneme.

    The clones differ from their source only in label; sil/sp (and any tie
    between them) are carried over as-is.
    """
    models = {}
    assignments: dict[str, tuple[str, ...]] = {}
    for unit, members in pmap.units:
        if unit not in visual_set.models:
            raise ModelError(f"no model for unit {unit!r}")
        source = visual_set.models[unit]
        phones = tuple(sorted(members))
        assignments[unit] = phones
        for ph in phones:
            models[ph] = source.copy(label=ph)
    for extra in (SIL, SP):
        if extra in visual_set.models and extra not in models:
            models[extra] = visual_set.models[extra].copy()
    ties = tuple(
        tie
        for tie in visual_set.ties
        if tie.owner[0] in models and all(alias[0] in models for alias in tie.aliases)
    )
    return HmmSet(models=models, ties=ties), CloneRecord(assignments=assignments)


@dataclass(frozen=True)
class TranscriptPolicy:
    """How word transcripts expand for training."""

    sp_between: bool = True
    sil_edges: bool = False

    def labels(self, base_labels) -> list[str]:
        extra = []
        if self.sp_between or self.sil_edges:
            extra.append(SIL)
            extra.append(SP)
        return list(base_labels) + extra


def training_transcripts(
    utts,
    lex: PronLexicon,
    policy: TranscriptPolicy,
    pmap: P2VMap | None = None,
) -> list[Transcript]:
    """Phoneme (or, given a map, visual-unit) training transcripts."""
    out = []
    for utt in utts:
        phones = expand_words(
            lex, utt.words.labels, sp_between=policy.sp_between, sil_edges=policy.sil_edges
        )
        if pmap is None:
            out.append(phones)
        else:
            keep_special = pmap.with_singletons([SIL, SP])
            out.append(phonemes_to_units(phones, keep_special))
    return out


def train_stage(
    train_utts,
    transcripts,
    labels,
    proto: tuple[int, int, int],
    cfg: TrainConfig,
    tie_after: int | None = 3,
):
    """Flat-start plus one full re-estimation schedule with optional sp tying.

    With tying enabled (and sil/sp in the label set), the first `tie_after`
    iterations run untied, the sp state is tied to the silence center state,
    and the remaining iterations continue with pooled statistics.
    """
    hmms = flat_start(train_utts, labels, proto, cfg)
    can_tie = tie_after is not None and SIL in hmms.models and SP in hmms.models
    if can_tie and 0 < tie_after < cfg.iterations:
        first = TrainConfig(
            iterations=tie_after,
            floor_factor=cfg.floor_factor,
            beam=cfg.beam,
            seed=cfg.seed,
            jitter_eps=cfg.jitter_eps,
        )
        rest = TrainConfig(
            iterations=cfg.iterations - tie_after,
            floor_factor=cfg.floor_factor,
            beam=cfg.beam,
            seed=cfg.seed,
            jitter_eps=cfg.jitter_eps,
        )
        hmms, trace_a = embedded_reestimate(hmms, train_utts, transcripts, first)
        hmms = tie_sp(hmms)
        hmms, trace_b = embedded_reestimate(hmms, train_utts, transcripts, rest)
        return hmms, trace_a + trace_b
    return embedded_reestimate(hmms, train_utts, transcripts, cfg)


def retrain_stage(hmms: HmmSet, train_utts, transcripts, cfg: TrainConfig):
    return embedded_reestimate(hmms, train_utts, transcripts, cfg)


def hierarchical_train(
    train_utts,
    pmap: P2VMap,
    lex: PronLexicon,
    cfg: TrainConfig,
    policy: TranscriptPolicy = TranscriptPolicy(),
    proto: tuple[int, int] = (3, 5),
    tie_after: int | None = 3,
):
    """The full two-level schedule; returns (phoneme set, clone record, traces).

    Visual-unit models are flat-started and re-estimated cfg.iterations times
    on unit transcripts (sp tying mid-schedule when configured), duplicated
    per member phoneme, then re-estimated cfg.iterations more times on the
    same utterances relabeled at phoneme granularity.
    """
    covered = pmap.with_singletons(lex.phonemes_used())
    dim = train_utts[0].features.dim
    full_proto = (proto[0], proto[1], dim)

    unit_trs = training_transcripts(train_utts, lex, policy, pmap=covered)
    unit_labels = covered.unit_labels()
    visual_set, unit_trace = train_stage(
        train_utts,
        unit_trs,
        policy.labels(unit_labels),
        full_proto,
        cfg,
        tie_after=tie_after,
    )

    clone_map = P2VMap(
        tuple((unit, members) for unit, members in covered.units if unit not in (SIL, SP))
    )
    phone_set, record = clone_models(visual_set, clone_map)
    phone_trs = training_transcripts(train_utts, lex, policy, pmap=None)
    phone_set, phone_trace = retrain_stage(phone_set, train_utts, phone_trs, cfg)
    return phone_set, record, {"units": unit_trace, "phonemes": phone_trace}
