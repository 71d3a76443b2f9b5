"""Data-driven visual speech units for lipreading.

Discovers visual units by greedily merging confused phonemes, trains
GMM-HMM recognizers over words, phonemes, or visual units with bigram
networks, and implements hierarchical unit-to-phoneme training, with a
synthetic-corpus harness for desk-scale verification.
"""

__version__ = "0.1.0"

from .lexicon import (  # noqa: F401
    P2VMap,
    Phone,
    PronLexicon,
    Transcript,
    default_inventory,
    guess_baselines,
    homophene_groups,
    parse_lexicon,
    phonemes_to_units,
)
from .corpus import (  # noqa: F401
    FeatureSequence,
    FoldPlan,
    SynthModel,
    Utterance,
    generate_corpus,
    plan_folds,
    read_corpus,
    write_corpus,
)
from .hmm import (  # noqa: F401
    GmmHmm,
    HmmSet,
    TrainConfig,
    embedded_reestimate,
    flat_start,
    forced_align,
    tie_sp,
)
from .decoder import (  # noqa: F401
    BigramModel,
    DecodeParams,
    UnitNetwork,
    build_network,
    decode,
    estimate_bigram,
)
from .cluster import (  # noqa: F401
    ConfusionMatrix,
    MergeTrace,
    P2VFamily,
    accumulate,
    cluster_family,
    merge_score,
    normalize_columns,
)
from .hierarchy import CloneRecord, clone_models, hierarchical_train  # noqa: F401
from .scoring import (  # noqa: F401
    AlignmentResult,
    FoldResult,
    align,
    confusions_from_alignments,
    pooled_correctness,
)
