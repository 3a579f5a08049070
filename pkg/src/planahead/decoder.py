"""Brute-force, constrained beam, and planning-ahead decoding."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from planahead._kernels import rowdot
from planahead.errors import ValidationError
from planahead.prefix_tree import INVALID, Node, PrefixTree
from planahead.rq_codebook import CodebookSet
from planahead.scorer import QueryEncoding, ScorerConfig, hidden_batch, prefix_scores_batch

logger = logging.getLogger(__name__)

AGGREGATIONS = ("max", "mean", "min")


@dataclass(frozen=True)
class Hypothesis:
    prefix: tuple[int, ...]
    seq_score: float
    guided_score: float


@dataclass
class Ranking:
    """Documents in descending score order.

    ``seq_scores`` is filled by the planning-ahead decoder, where ``scores``
    holds the guided score and ``seq_scores`` the plain sequential score.
    """

    docs: np.ndarray
    scores: np.ndarray
    seq_scores: np.ndarray | None = None
    docids: list[tuple[int, ...]] = field(default_factory=list)

    def __post_init__(self):
        self.docs = np.asarray(self.docs, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.docs.shape != self.scores.shape:
            raise ValidationError("docs and scores must have the same length")

    def __len__(self) -> int:
        return int(self.docs.shape[0])

    def __iter__(self) -> Iterator[tuple[int, float]]:
        return zip(self.docs.tolist(), self.scores.tolist())

    def top(self, k: int) -> "Ranking":
        seq = None if self.seq_scores is None else self.seq_scores[:k]
        return Ranking(self.docs[:k], self.scores[:k], seq, self.docids[:k])

    def hypotheses(self) -> list[Hypothesis]:
        seq = self.scores if self.seq_scores is None else self.seq_scores
        return [
            Hypothesis(p, float(s), float(g))
            for p, s, g in zip(self.docids, seq.tolist(), self.scores.tolist())
        ]

    @classmethod
    def empty(cls) -> "Ranking":
        return cls(np.empty(0, np.int64), np.empty(0, np.float64), np.empty(0, np.float64))


@dataclass
class PrefixPrior:
    """Per-query map from DocID prefix to the aggregated simultaneous score."""

    table: dict[tuple[int, ...], float]
    docs: list[tuple[int, float]]
    aggregation: str = "max"

    def __post_init__(self):
        grouped: dict[tuple[int, ...], list[tuple[int, float]]] = {}
        for prefix, value in self.table.items():
            grouped.setdefault(prefix[:-1], []).append((prefix[-1], value))
        self._extensions = {}
        for parent, pairs in grouped.items():
            pairs.sort()
            self._extensions[parent] = (
                np.array([c for c, _ in pairs], dtype=np.int64),
                np.array([v for _, v in pairs], dtype=np.float64),
            )

    def __getitem__(self, prefix: Sequence[int]):
        return self.table.get(tuple(prefix), INVALID)

    def __len__(self) -> int:
        return len(self.table)

    def extensions(self, prefix: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """Codes ``x`` (ascending) with ``prefix + [x]`` in the table, and their prior values."""
        return self._extensions.get(tuple(prefix), (_NO_CODES, _NO_VALUES))


_NO_CODES = np.empty(0, dtype=np.int64)
_NO_VALUES = np.empty(0, dtype=np.float64)


class FlopsCost(NamedTuple):
    seq_flops: float
    simul_flops: float
    delta: float


def _sort_order(scores: np.ndarray, tiebreak: np.ndarray) -> np.ndarray:
    """Indices by descending score; ties by ascending rows of ``tiebreak`` (lexicographic)."""
    keys = [tiebreak[:, j] for j in reversed(range(tiebreak.shape[1]))]
    return np.lexsort((*keys, -scores))


def brute_force_decode(
    q: QueryEncoding,
    docids: np.ndarray,
    cb: CodebookSet,
    cfg: ScorerConfig,
    combine_simul: bool = False,
    simul_scores: Sequence[float] | None = None,
    limit: int | None = None,
) -> Ranking:
    """Score every document and sort (ties by lower ordinal).

    With ``combine_simul`` each document's score is ``seq + simul``.
    """
    docids = np.asarray(docids, dtype=np.int64)
    if docids.ndim != 2 or docids.shape[1] != cb.levels:
        raise ValidationError(f"docids must be (N, {cb.levels}), got {docids.shape}")
    scores = prefix_scores_batch(q.dense, docids, cb, cfg)
    if combine_simul:
        if simul_scores is None:
            raise ValidationError("combine_simul requires simul_scores")
        simul = np.asarray(simul_scores, dtype=np.float64)
        if simul.shape != scores.shape:
            raise ValidationError(f"need {scores.shape[0]} simultaneous scores, got {simul.shape}")
        scores = scores + simul
    order = np.lexsort((np.arange(scores.shape[0]), -scores))
    if limit is not None:
        order = order[:limit]
    return Ranking(order, scores[order], docids=[tuple(r) for r in docids[order].tolist()])


def _expand(beam_nodes: list[Node]) -> tuple[np.ndarray, np.ndarray, list[Node]]:
    """Every tree-valid one-token extension of the beam, in beam order."""
    hyp_idx, codes, children = [], [], []
    for b, node in enumerate(beam_nodes):
        n = node.codes.shape[0]
        hyp_idx.append(np.full(n, b, dtype=np.int64))
        codes.append(node.codes)
        children.extend(node.children)
    if not codes:
        return np.empty(0, np.int64), np.empty(0, np.int64), []
    return np.concatenate(hyp_idx), np.concatenate(codes), children


def _expand_guided(
    beam_nodes: list[Node], prefixes: np.ndarray, prior: PrefixPrior
) -> tuple[np.ndarray, np.ndarray, list[Node], np.ndarray]:
    """Extensions that stay inside the prior's sub-trie, with their prior values.

    Every other tree-valid extension has an invalid prior and could never be
    kept, so it is not generated at all.
    """
    hyp_idx, codes, values, children = [], [], [], []
    for b, (node, prefix) in enumerate(zip(beam_nodes, prefixes.tolist())):
        ext, vals = prior.extensions(prefix)
        if not ext.shape[0]:
            continue
        where = np.searchsorted(node.codes, ext)
        # the prior is built from stored DocIDs, so every extension is in the tree
        assert np.all(node.codes[np.minimum(where, node.codes.shape[0] - 1)] == ext)
        hyp_idx.append(np.full(ext.shape[0], b, dtype=np.int64))
        codes.append(ext)
        values.append(vals)
        children.extend(node.children[i] for i in where.tolist())
    if not codes:
        return _NO_CODES, _NO_CODES, [], _NO_VALUES
    return np.concatenate(hyp_idx), np.concatenate(codes), children, np.concatenate(values)


def _beam_search(
    q: QueryEncoding,
    tree: PrefixTree,
    cb: CodebookSet,
    cfg: ScorerConfig,
    k: int,
    prior: PrefixPrior | None,
) -> Ranking:
    if k < 1:
        raise ValidationError(f"beam size must be >= 1, got {k}")
    if tree.size == 0:
        return Ranking.empty()
    if tree.depth != cb.levels:
        raise ValidationError(f"tree depth {tree.depth} != codebook levels {cb.levels}")

    prefixes = np.empty((1, 0), dtype=np.int64)
    seq = np.zeros(1, dtype=np.float64)
    guided = np.zeros(1, dtype=np.float64)
    nodes = [tree.root]
    for pos in range(cb.levels):
        if prior is None:
            hyp, codes, children = _expand(nodes)
        else:
            hyp, codes, children, prior_vals = _expand_guided(nodes, prefixes, prior)
        if codes.shape[0] == 0:
            return Ranking.empty()
        h = hidden_batch(q.dense, prefixes, cb, cfg)
        cand_seq = seq[hyp] + rowdot(h[hyp], cb.tables64[pos][codes])
        cand_prefix = np.concatenate([prefixes[hyp], codes[:, None]], axis=1)
        cand_guided = cand_seq if prior is None else prior_vals + cand_seq
        sel = _sort_order(cand_guided, cand_prefix)[:k]
        prefixes, seq, guided = cand_prefix[sel], cand_seq[sel], cand_guided[sel]
        nodes = [children[i] for i in sel.tolist()]

    docs = np.array([n.doc for n in nodes], dtype=np.int64)
    assert np.unique(docs).shape[0] == docs.shape[0], "two hypotheses reached the same document"
    docids = [tuple(r) for r in prefixes.tolist()]
    if prior is None:
        return Ranking(docs, seq, docids=docids)
    return Ranking(docs, guided, seq_scores=seq, docids=docids)


def constrained_beam_search(
    q: QueryEncoding, tree: PrefixTree, cb: CodebookSet, cfg: ScorerConfig, k: int
) -> Ranking:
    """Beam search over tree-valid prefixes, pruning to the ``k`` best sequential scores."""
    return _beam_search(q, tree, cb, cfg, k, None)


def build_prefix_prior(
    topn: Sequence[tuple[int, float]], docids: np.ndarray, aggregation: str = "max"
) -> PrefixPrior:
    """Aggregate the simultaneous scores of ``topn`` over every prefix of their DocIDs."""
    if aggregation not in AGGREGATIONS:
        raise ValidationError(f"aggregation must be one of {AGGREGATIONS}, got {aggregation!r}")
    docids = np.asarray(docids, dtype=np.int64)
    groups: dict[tuple[int, ...], list[float]] = {}
    for doc, score in topn:
        if not 0 <= doc < docids.shape[0]:
            raise ValidationError(f"document {doc} has no sequential DocID")
        row = tuple(docids[doc].tolist())
        for i in range(1, len(row) + 1):
            groups.setdefault(row[:i], []).append(float(score))
    if aggregation == "max":
        table = {p: max(v) for p, v in groups.items()}
    elif aggregation == "min":
        table = {p: min(v) for p, v in groups.items()}
    else:
        table = {p: sum(v) / len(v) for p, v in groups.items()}
    return PrefixPrior(table, list(topn), aggregation)


def planning_ahead_search(
    q: QueryEncoding,
    tree: PrefixTree,
    cb: CodebookSet,
    cfg: ScorerConfig,
    prior: PrefixPrior,
    k: int,
) -> Ranking:
    """Constrained beam search that keeps the ``k`` best prefixes by prior + sequential score.

    ``scores`` of the result are the guided scores; ``seq_scores`` the plain
    sequential ones.
    """
    if len(prior) == 0:
        logger.warning("query %s: empty prefix prior, nothing to decode", q.query_id)
        return Ranking.empty()
    return _beam_search(q, tree, cb, cfg, k, prior)


def flops_cost_model(P_m: float, L: int, k: int, corpus_size: float, m: int) -> FlopsCost:
    """Closed-form FLOPs of sequential vs. simultaneous decoding."""
    if min(P_m, L, k, corpus_size, m) <= 0:
        raise ValidationError("all cost-model inputs must be positive")
    seq = L * k * P_m
    simul = P_m + corpus_size * m
    return FlopsCost(seq, simul, seq - simul)
