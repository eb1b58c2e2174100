"""Phrase embeddings at desk scale: contrastive training of a mean-pooling
composer, pluggable pretrained vector files, an evaluation and
lexical-diversity suite, and a softmax-bottleneck topic model.
"""

__version__ = "0.1.0"

from .composer import (
    MASK_TOKEN,
    ComposerGrads,
    ComposerModel,
    ParamLayout,
    Phrase,
    composer_backward,
    load_composer,
    save_composer,
    tokenize,
)
from .contrastive import (
    ContextTriplet,
    PhraseTriplet,
    StopwordSet,
    TrainingHistory,
    build_context_triplets,
    build_phrase_triplets,
    corrupt_phrase,
    mask_context,
    train_contrastive,
    triplet_loss,
    triplet_loss_backward,
)
from .errors import (
    DataError,
    DegenerateInputError,
    InvalidArgumentError,
    NotFoundError,
    NumericError,
    ParseError,
    PhrasecraftError,
    UndefinedCorrelationError,
    UsageError,
)
from .evalsuite import (
    BirdItem,
    DiversityReport,
    PairClassifier,
    PairItem,
    TurneyItem,
    check_overlap_balance,
    diversity_report,
    eval_bird,
    eval_pair_classifier,
    eval_turney,
    filter_ppdb,
    levenshtein,
    longest_common_substring,
    pearson,
    spearman,
    train_pair_classifier,
)
from .numcore import (
    OptimState,
    TrainConfig,
    adam_step,
    finite_diff_check,
    lr_at,
    make_rng,
    warmup_steps,
)
from .topicmodel import (
    PntmConfig,
    TopicModel,
    assign_topic,
    correspondence_stats,
    interpret_topics,
    make_intrusion_items,
    orthogonality_penalty,
    pntm_loss,
    reconstruct,
    topic_distribution,
    train_pntm,
)
from .vecstore import (
    EmbeddingMatrix,
    NeighborList,
    Vocab,
    cosine,
    load_vectors,
    nearest_neighbors,
    save_vectors,
)
