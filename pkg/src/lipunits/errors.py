"""Exception types shared across the toolkit."""


class LipunitsError(Exception):
    """Base class for all toolkit errors."""


class LexiconError(LipunitsError):
    """Bad dictionary input: unknown phoneme, empty pronunciation, bad line."""


class MappingError(LipunitsError):
    """A phoneme is not covered by the phoneme-to-unit map in strict mode."""


class CorpusError(LipunitsError):
    """Malformed corpus file or inconsistent feature data."""


class ModelError(LipunitsError):
    """Invalid HMM structure, tying record, or model file."""


class TrainingError(LipunitsError):
    """Re-estimation cannot proceed (no usable utterances, numeric failure)."""


class AlignmentError(LipunitsError):
    """No admissible state path for the given features and transcript."""


class DecodeError(LipunitsError):
    """Network construction or Viterbi decoding failed."""


class LanguageModelError(LipunitsError):
    """Empty vocabulary or malformed language-model file."""


class ClusterError(LipunitsError):
    """Invalid confusion matrix or clustering input."""


class ScoringError(LipunitsError):
    """Out-of-vocabulary label or undefined score."""


class ConfigError(LipunitsError):
    """Bad experiment configuration; maps to CLI exit code 2."""
