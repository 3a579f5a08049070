"""Planning-ahead constrained beam search for generative retrieval."""

from planahead.decoder import (
    Ranking,
    brute_force_decode,
    build_prefix_prior,
    constrained_beam_search,
    flops_cost_model,
    planning_ahead_search,
)
from planahead.lexical import (
    SetDocId,
    SparseVector,
    build_inverted_index,
    extract_set_docid,
    flops_reg,
    log_sat_maxpool,
    simul_score,
    topn_simul,
)
from planahead.prefix_tree import build_tree, mask_g, valid_extensions
from planahead.rq_codebook import (
    CodebookSet,
    assign_unique_docids,
    rq_encode,
    rq_reconstruct,
    rq_train,
)
from planahead.scorer import QueryEncoding, ScorerConfig, prefix_score, seq_score, step_hidden, step_score

__version__ = "0.1.0"
