"""Python bindings for the Hin-DPO preference alignment engine."""

from ._hindpo import (
    HindpoError,
    Policy,
    ProviderError,
    SchemaError,
    VocabularyError,
    bundled_corpus,
    demo,
    evaluate,
    final_score,
    finesse_scale,
    gradcheck,
    hin_dpo_loss,
    lcs_length,
    meteor,
    preference_score,
    rouge_l,
    rouge_n,
    sample_variance,
    semantic_score,
    standard_dpo_loss,
    tokenize,
    train_separable,
)

__all__ = [
    "HindpoError",
    "Policy",
    "ProviderError",
    "SchemaError",
    "VocabularyError",
    "bundled_corpus",
    "demo",
    "evaluate",
    "final_score",
    "finesse_scale",
    "gradcheck",
    "hin_dpo_loss",
    "lcs_length",
    "meteor",
    "preference_score",
    "rouge_l",
    "rouge_n",
    "sample_variance",
    "semantic_score",
    "standard_dpo_loss",
    "tokenize",
    "train_separable",
]
