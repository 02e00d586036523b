"""Decompose the linear mapping between word-level features and slow
multi-channel response signals into lexical, compositional, syntactic and
semantic score components."""

from .align import LaggedDesign, TrAssignment, bin_sum, design_matrix, lag_stack, nearest_tr
from .data import (
    AnnotatedToken,
    FeatureBundle,
    ParcellationTable,
    PhoneEvent,
    Sentence,
    SignalBundle,
    Transcript,
    average_subjects,
    load_parcellation,
    load_transcript,
)
from .decompose import DecompositionReport, decompose_scores, score_contrast
from .dten import TensorFormatError, load_tensor, store_tensor
from .encode import (
    RidgeConfig,
    RidgeLOO,
    ScoreTable,
    StoryScaler,
    brain_scores,
    fold_plan,
    pearson,
    pearson_columns,
    ridge_fit,
    robust_standardize,
    select_lambda,
)
from .phono import (
    PhoneVocabulary,
    control_match_length_sentences,
    control_random_words,
    control_shuffle_within_sentence,
    phone_category_onehot,
    phone_rate,
    phonological_features,
    word_rate,
)
from .probe import adjusted_balanced_accuracy, probe_decode
from .stats import fdr_bh, roi_average, wilcoxon_signed_rank
from .syntax import (
    EmbeddingProvider,
    FileProvider,
    Lexicon,
    SyntacticEmbedding,
    VariantSet,
    build_lexicon,
    convergence_curve,
    select_variants,
    synthesize_variants,
    syntactic_embedding,
    tree_pairwise_distances,
    tree_similarity,
)

__version__ = "0.1.0"
