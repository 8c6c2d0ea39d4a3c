"""Multi-exit code-retrieval encoder toolkit."""

from ._mosekit import (
    Model,
    Vocab,
    augment_code,
    clone_eval,
    desk_config,
    exact_jaccard,
    finetune_clone,
    finetune_retrieval,
    flops_per_exit,
    gen_corpus,
    gen_triplets,
    lsh_dedup,
    map_multi,
    mrr,
    ndcg_binary,
    paper_config,
    permutation_test,
    plant_near_duplicates,
    pretrain,
    recall_at_k,
    retrieval_eval,
)

__all__ = [
    "Model",
    "Vocab",
    "augment_code",
    "clone_eval",
    "desk_config",
    "exact_jaccard",
    "finetune_clone",
    "finetune_retrieval",
    "flops_per_exit",
    "gen_corpus",
    "gen_triplets",
    "lsh_dedup",
    "map_multi",
    "mrr",
    "ndcg_binary",
    "paper_config",
    "permutation_test",
    "plant_near_duplicates",
    "pretrain",
    "recall_at_k",
    "retrieval_eval",
]

__version__ = "0.1.0"
