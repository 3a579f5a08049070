"""Surrogate scorers standing in for the generative model.

A scorer maps (query, DocID prefix) to the hidden vector used at the next
decoding step. Two kinds are provided:

``dot_product``
    The hidden vector is the dense query at every step, so a full DocID
    scores ``q . reconstruct(docid)``.
``prefix_mixing``
    The hidden vector is ``q + beta * unit(sum of the prefix's centroids)``,
    which makes the step score depend on what was decoded so far.

All batched helpers accumulate in position-ascending order with the
fixed-order kernels, so batch and single-query paths agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from planahead._kernels import rowdot
from planahead.errors import ValidationError
from planahead.lexical import SparseVector
from planahead.rq_codebook import CodebookSet

SCORER_KINDS = ("dot_product", "prefix_mixing")


@dataclass(frozen=True)
class QueryEncoding:
    dense: np.ndarray
    sparse: SparseVector
    query_id: str = ""

    def __post_init__(self):
        dense = np.asarray(self.dense, dtype=np.float64)
        if dense.ndim != 1 or not np.all(np.isfinite(dense)):
            raise ValidationError("dense query must be a finite 1-D vector")
        dense.setflags(write=False)
        object.__setattr__(self, "dense", dense)


@dataclass(frozen=True)
class ScorerConfig:
    kind: str = "dot_product"
    beta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SCORER_KINDS:
            raise ValidationError(f"unknown scorer kind {self.kind!r}; expected one of {SCORER_KINDS}")
        if not np.isfinite(self.beta):
            raise ValidationError("beta must be finite")


def hidden_batch(q_dense: np.ndarray, prefixes: np.ndarray, cb: CodebookSet, cfg: ScorerConfig) -> np.ndarray:
    """Hidden vectors for a batch of equal-length prefixes ``(B, i)``, ``i < L``."""
    prefixes = np.asarray(prefixes, dtype=np.int64)
    b, depth = prefixes.shape
    if depth >= cb.levels:
        raise ValidationError(f"prefix length {depth} must be < L={cb.levels}")
    h = np.broadcast_to(np.asarray(q_dense, dtype=np.float64), (b, cb.dim))
    if cfg.kind == "dot_product" or depth == 0:
        return h.copy()
    u = np.zeros((b, cb.dim), dtype=np.float64)
    for j in range(depth):
        u = u + cb.tables64[j][prefixes[:, j]]
    norm = np.sqrt(rowdot(u, u))
    safe = np.where(norm > 0, norm, 1.0)
    unit = np.where((norm > 0)[:, None], u / safe[:, None], 0.0)
    return h + cfg.beta * unit


def prefix_scores_batch(q_dense: np.ndarray, prefixes: np.ndarray, cb: CodebookSet, cfg: ScorerConfig) -> np.ndarray:
    """Accumulated step scores for a batch of equal-length prefixes."""
    prefixes = np.asarray(prefixes, dtype=np.int64)
    if prefixes.ndim != 2 or prefixes.shape[1] > cb.levels:
        raise ValidationError(f"prefixes must be (B, i) with i <= L, got {prefixes.shape}")
    if prefixes.size and (prefixes.min() < 0 or prefixes.max() >= cb.codebook_size):
        raise ValidationError(f"code out of range [0, {cb.codebook_size})")
    s = np.zeros(prefixes.shape[0], dtype=np.float64)
    for pos in range(prefixes.shape[1]):
        h = hidden_batch(q_dense, prefixes[:, :pos], cb, cfg)
        s = s + rowdot(h, cb.tables64[pos][prefixes[:, pos]])
    return s


def step_hidden(q: QueryEncoding, prefix: Sequence[int], cb: CodebookSet, cfg: ScorerConfig) -> np.ndarray:
    prefix = cb.check_codes(prefix, full=False)
    if prefix.shape[0] >= cb.levels:
        raise ValidationError(f"prefix length {prefix.shape[0]} must be < L={cb.levels}")
    return hidden_batch(q.dense, prefix[None, :], cb, cfg)[0]


def step_score(h: np.ndarray, cb: CodebookSet, position: int, code: int) -> float:
    """``E_position[code] . h`` with 1-based ``position``."""
    table = cb.table(position)
    if not 0 <= code < cb.codebook_size:
        raise ValidationError(f"code {code} outside [0, {cb.codebook_size})")
    return float(rowdot(np.asarray(h, dtype=np.float64)[None, :], table[code][None, :])[0])


def prefix_score(q: QueryEncoding, prefix: Sequence[int], cb: CodebookSet, cfg: ScorerConfig) -> float:
    prefix = cb.check_codes(prefix, full=False)
    if prefix.shape[0] < 1:
        raise ValidationError("prefix must contain at least one code")
    return float(prefix_scores_batch(q.dense, prefix[None, :], cb, cfg)[0])


def seq_score(q: QueryEncoding, docid: Sequence[int], cb: CodebookSet, cfg: ScorerConfig) -> float:
    codes = cb.check_codes(docid)
    return float(prefix_scores_batch(q.dense, codes[None, :], cb, cfg)[0])
