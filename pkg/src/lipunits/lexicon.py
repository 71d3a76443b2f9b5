"""Pronunciation dictionaries, phoneme inventories, and phoneme-to-unit maps.

The phoneme inventory is a fixed set of short ASCII labels, each tagged as a
vowel (V) or consonant (C).  A pronunciation lexicon maps upper-case words to
phoneme sequences drawn from one inventory.  A P2VMap partitions (a subset of)
the inventory into labeled visual units; transcripts translate through it
position by position.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib import resources

from .errors import LexiconError, MappingError

log = logging.getLogger(__name__)

VOWEL = "V"
CONSONANT = "C"

# Transcript granularities.
WORD = "word"
PHONEME = "phoneme"
VISEME = "viseme"

COMMENT_PREFIX = ";;;"

SIL = "sil"
SP = "sp"


@dataclass(frozen=True)
class Phone:
    """One inventory symbol with its vowel/consonant class."""

    label: str
    category: str

    def __post_init__(self):
        if not self.label:
            raise LexiconError("phone label must be non-empty")
        if self.category not in (VOWEL, CONSONANT):
            raise LexiconError(
                f"phone {self.label!r}: category must be {VOWEL!r} or {CONSONANT!r},"
                f" got {self.category!r}"
            )


def load_inventory(path) -> dict[str, Phone]:
    """Read an inventory file of "label V|C" lines into a label->Phone dict."""
    with open(path, encoding="utf-8") as fh:
        return parse_inventory(fh.read())


def parse_inventory(text: str) -> dict[str, Phone]:
    phones: dict[str, Phone] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(COMMENT_PREFIX):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise LexiconError(f"inventory line {lineno}: expected 'label V|C', got {raw!r}")
        label, cat = parts
        if label in phones:
            raise LexiconError(f"inventory line {lineno}: duplicate phone {label!r}")
        phones[label] = Phone(label, cat)
    return phones


def default_inventory() -> dict[str, Phone]:
    """The bundled 45-phoneme British English inventory."""
    text = resources.files("lipunits.data").joinpath("inventory_uk45.txt").read_text("utf-8")
    return parse_inventory(text)


def categories_of(inventory: dict[str, Phone]) -> dict[str, str]:
    return {label: phone.category for label, phone in inventory.items()}


@dataclass(frozen=True)
class Transcript:
    """A label sequence at a stated granularity (word, phoneme, or viseme)."""

    granularity: str
    labels: tuple[str, ...]

    def __post_init__(self):
        if self.granularity not in (WORD, PHONEME, VISEME):
            raise LexiconError(f"unknown granularity {self.granularity!r}")
        object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self):
        return len(self.labels)


@dataclass(frozen=True)
class PronLexicon:
    """Word -> phoneme-sequence entries over one inventory.

    One pronunciation per word: duplicate dictionary lines keep the first
    pronunciation (alternatives are logged, not stored).
    """

    entries: dict[str, tuple[str, ...]]
    inventory: dict[str, Phone]

    def __post_init__(self):
        for word, pron in self.entries.items():
            if not pron:
                raise LexiconError(f"word {word!r} has an empty pronunciation")
            for ph in pron:
                if ph not in self.inventory:
                    raise LexiconError(f"word {word!r} uses unknown phoneme {ph!r}")

    def words(self) -> list[str]:
        return list(self.entries)

    def pronunciation(self, word: str) -> tuple[str, ...]:
        try:
            return self.entries[word.upper()]
        except KeyError:
            raise LexiconError(f"word {word!r} not in lexicon") from None

    def phonemes_used(self) -> set[str]:
        used: set[str] = set()
        for pron in self.entries.values():
            used.update(pron)
        return used


def parse_lexicon(text: str, inventory: dict[str, Phone]) -> PronLexicon:
    """Parse "WORD PH1 PH2 ..." dictionary lines against an inventory.

    Lines starting with ";;;" are comments.  Words are case-insensitive and
    normalized to upper case.  A repeated word keeps its first pronunciation
    and logs a warning.
    """
    entries: dict[str, tuple[str, ...]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(COMMENT_PREFIX):
            continue
        parts = line.split()
        word, pron = parts[0].upper(), tuple(parts[1:])
        if not pron:
            raise LexiconError(f"line {lineno}: word {word!r} has an empty pronunciation")
        for ph in pron:
            if ph not in inventory:
                raise LexiconError(f"line {lineno}: unknown phoneme {ph!r} in word {word!r}")
        if word in entries:
            log.warning("line %d: duplicate word %r keeps first pronunciation", lineno, word)
            continue
        entries[word] = pron
    return PronLexicon(entries=entries, inventory=inventory)


def read_lexicon(path, inventory: dict[str, Phone]) -> PronLexicon:
    with open(path, encoding="utf-8") as fh:
        return parse_lexicon(fh.read(), inventory)


def demo_lexicon() -> PronLexicon:
    """The bundled demonstration dictionary over the default inventory."""
    text = resources.files("lipunits.data").joinpath("demo.dict").read_text("utf-8")
    return parse_lexicon(text, default_inventory())


@dataclass(frozen=True)
class P2VMap:
    """An ordered partition of phoneme labels into labeled visual units."""

    units: tuple[tuple[str, frozenset[str]], ...]
    _unit_of: dict[str, str] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        units = tuple((label, frozenset(members)) for label, members in self.units)
        object.__setattr__(self, "units", units)
        seen_units: set[str] = set()
        unit_of: dict[str, str] = {}
        for label, members in units:
            if not label:
                raise MappingError("unit label must be non-empty")
            if label in seen_units:
                raise MappingError(f"duplicate unit label {label!r}")
            seen_units.add(label)
            if not members:
                raise MappingError(f"unit {label!r} has no phonemes")
            for ph in members:
                if ph in unit_of:
                    raise MappingError(f"phoneme {ph!r} appears in units {unit_of[ph]!r} and {label!r}")
                unit_of[ph] = label
        object.__setattr__(self, "_unit_of", unit_of)

    @property
    def size(self) -> int:
        return len(self.units)

    def unit_labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.units)

    def phonemes(self) -> set[str]:
        return set(self._unit_of)

    def unit_of(self, phoneme: str) -> str | None:
        return self._unit_of.get(phoneme)

    def members(self, unit: str) -> frozenset[str]:
        for label, mem in self.units:
            if label == unit:
                return mem
        raise MappingError(f"no unit {unit!r} in map")

    def with_singletons(self, phonemes) -> "P2VMap":
        """Extend with one singleton unit per uncovered phoneme (lenient mode).

        The appended units reuse the phoneme label itself, so transcription
        stays total over `phonemes` and covered behaviour is unchanged.
        """
        extra = [ph for ph in phonemes if ph not in self._unit_of]
        if not extra:
            return self
        taken = set(self.unit_labels())
        units = list(self.units)
        for ph in sorted(set(extra)):
            label = ph
            while label in taken:
                label = label + "'"
            taken.add(label)
            units.append((label, frozenset([ph])))
        return P2VMap(tuple(units))


def identity_map(phonemes) -> P2VMap:
    """Every phoneme its own unit, named after itself."""
    return P2VMap(tuple((ph, frozenset([ph])) for ph in sorted(set(phonemes))))


def validate_map_categories(pmap: P2VMap, categories: dict[str, str]) -> None:
    """Check that no unit mixes vowel and consonant phonemes."""
    for label, members in pmap.units:
        cats = set()
        for ph in members:
            if ph not in categories:
                raise MappingError(f"unit {label!r}: phoneme {ph!r} has no category")
            cats.add(categories[ph])
        if len(cats) > 1:
            raise MappingError(f"unit {label!r} mixes vowel and consonant phonemes")


def phonemes_to_units(transcript: Transcript, pmap: P2VMap, strict: bool = True) -> Transcript:
    """Translate a phoneme transcript into a visual-unit transcript.

    Position i of the output is the label of the unit containing position i
    of the input; length is preserved.  In strict mode an uncovered phoneme
    raises; otherwise it passes through as its own singleton label.
    """
    if transcript.granularity != PHONEME:
        raise MappingError(f"expected a phoneme transcript, got {transcript.granularity!r}")
    out = []
    for ph in transcript.labels:
        unit = pmap.unit_of(ph)
        if unit is None:
            if strict:
                raise MappingError(f"phoneme {ph!r} is not covered by the map")
            unit = ph
        out.append(unit)
    return Transcript(VISEME, tuple(out))


def unit_transcript_of_word(word: str, lex: PronLexicon, pmap: P2VMap) -> tuple[str, ...]:
    pron = Transcript(PHONEME, lex.pronunciation(word))
    return phonemes_to_units(pron, pmap).labels


def homophene_groups(lex: PronLexicon, pmap: P2VMap) -> dict[tuple[str, ...], tuple[str, ...]]:
    """Group lexicon words by their visual-unit transcript.

    Words sharing a key are homophenes: indistinguishable on the lips under
    this map.  Every word lands in exactly one group.
    """
    groups: dict[tuple[str, ...], list[str]] = {}
    for word in lex.entries:
        key = unit_transcript_of_word(word, lex, pmap)
        groups.setdefault(key, []).append(word)
    return {key: tuple(sorted(words)) for key, words in groups.items()}


def guess_baselines(lex: PronLexicon, pmap: P2VMap) -> tuple[float, float]:
    """Return (unit_chance, homophene_ceiling) for a lexicon under a map.

    unit_chance is 1/M for a map of M units.  The homophene ceiling is the
    expected word accuracy of a guesser that always identifies the correct
    homophene group and picks uniformly inside it: the mean over words of
    1/|group(word)|.
    """
    if pmap.size == 0:
        raise MappingError("empty map has no guessing baseline")
    if not lex.entries:
        raise LexiconError("homophene ceiling undefined for an empty lexicon")
    unit_chance = 1.0 / pmap.size
    groups = homophene_groups(lex, pmap)
    total = 0.0
    for words in groups.values():
        total += len(words) * (1.0 / len(words))
    ceiling = total / len(lex.entries)
    return unit_chance, ceiling


def expand_words(
    lex: PronLexicon,
    words,
    sp_between: bool = False,
    sil_edges: bool = False,
) -> Transcript:
    """Expand a word sequence into a phoneme transcript.

    Optionally inserts the short-pause label between words and the silence
    label at both utterance edges, for building training transcripts.
    """
    labels: list[str] = []
    if sil_edges:
        labels.append(SIL)
    for k, word in enumerate(words):
        if sp_between and k > 0:
            labels.append(SP)
        labels.extend(lex.pronunciation(word))
    if sil_edges:
        labels.append(SIL)
    return Transcript(PHONEME, tuple(labels))


def format_p2v(pmap: P2VMap) -> str:
    """Render a map in the "unitLabel: ph1 ph2 ..." file format."""
    lines = []
    for label, members in pmap.units:
        lines.append(f"{label}: {' '.join(sorted(members))}")
    return "\n".join(lines) + "\n"


def parse_p2v(text: str) -> P2VMap:
    units = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(COMMENT_PREFIX):
            continue
        if ":" not in line:
            raise MappingError(f"map line {lineno}: expected 'unit: ph1 ph2 ...', got {raw!r}")
        label, _, rest = line.partition(":")
        members = rest.split()
        if not members:
            raise MappingError(f"map line {lineno}: unit {label.strip()!r} has no phonemes")
        units.append((label.strip(), frozenset(members)))
    return P2VMap(tuple(units))


def write_p2v(pmap: P2VMap, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_p2v(pmap))


def read_p2v(path) -> P2VMap:
    with open(path, encoding="utf-8") as fh:
        return parse_p2v(fh.read())


def bundled_p2v(name: str) -> P2VMap:
    """Load a map shipped with the package (e.g. "jeffers", "speaker1_10units")."""
    text = resources.files("lipunits.data").joinpath(f"{name}.p2v").read_text("utf-8")
    return parse_p2v(text)
