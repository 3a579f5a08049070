"""Set-based DocIDs, simultaneous document scoring and the inverted index."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from planahead.errors import ArtifactError, ValidationError
from planahead.rq_codebook import FORMAT_VERSION, _write

SETID_MAGIC = b"PAGS"


class PaddingWarning(UserWarning):
    """A document had fewer than ``m`` positive token weights."""


@dataclass(frozen=True)
class SparseVector:
    """Non-negative token weights over a vocabulary of ``vocab_size`` ids.

    Zero weights are dropped on construction.
    """

    weights: Mapping[int, float]
    vocab_size: int

    def __post_init__(self):
        clean = {}
        for tok, w in self.weights.items():
            tok, w = int(tok), float(w)
            if not 0 <= tok < self.vocab_size:
                raise ValidationError(f"token id {tok} outside vocabulary of {self.vocab_size}")
            if not math.isfinite(w) or w < 0:
                raise ValidationError(f"weight for token {tok} must be finite and >= 0, got {w}")
            if w > 0:
                clean[tok] = w
        object.__setattr__(self, "weights", clean)

    def __getitem__(self, tok: int) -> float:
        return self.weights.get(tok, 0.0)

    def __len__(self) -> int:
        return len(self.weights)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.vocab_size, dtype=np.float64)
        if self.weights:
            out[list(self.weights)] = list(self.weights.values())
        return out

    @classmethod
    def from_dense(cls, values: np.ndarray) -> "SparseVector":
        values = np.asarray(values, dtype=np.float64)
        nz = np.flatnonzero(values)
        return cls(dict(zip(nz.tolist(), values[nz].tolist())), values.shape[0])


@dataclass(frozen=True)
class SetDocId:
    """Unordered set of ``m`` token ids, kept as an ascending tuple."""

    tokens: tuple[int, ...]
    vocab_size: int

    def __post_init__(self):
        toks = tuple(sorted(int(t) for t in self.tokens))
        if len(set(toks)) != len(toks):
            raise ValidationError("set DocID contains duplicate tokens")
        if toks and not (0 <= toks[0] and toks[-1] < self.vocab_size):
            raise ValidationError(f"token ids must lie in [0, {self.vocab_size})")
        object.__setattr__(self, "tokens", toks)

    @property
    def m(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class InvertedIndex:
    postings: dict[int, np.ndarray]
    doc_count: int
    m: int
    vocab_size: int
    _doc_tokens: np.ndarray = field(repr=False, compare=False)

    def doc_tokens(self, doc: int) -> tuple[int, ...]:
        return tuple(int(t) for t in self._doc_tokens[doc])

    def set_docids(self) -> list[SetDocId]:
        return [SetDocId(tuple(row.tolist()), self.vocab_size) for row in self._doc_tokens]


def log_sat_maxpool(token_scores) -> SparseVector:
    """Query token weights from a ``V_T x |q|`` score matrix.

    ``out[t] = max_j log(1 + relu(token_scores[t, j]))``.
    """
    s = np.asarray(token_scores, dtype=np.float64)
    if s.ndim != 2 or s.size == 0:
        raise ValidationError(f"token_scores must be a non-empty V_T x |q| matrix, got {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValidationError("token_scores contain non-finite values")
    pooled = np.log1p(np.maximum(s, 0.0)).max(axis=1)
    return SparseVector.from_dense(pooled)


def extract_set_docid(h_d: SparseVector, m: int) -> SetDocId:
    """The ``m`` highest-weight tokens of a document (ties: lower id first).

    Documents with fewer than ``m`` positive weights are padded with the
    lowest unused token ids and a :class:`PaddingWarning` is issued.
    """
    if m < 1 or m > h_d.vocab_size:
        raise ValidationError(f"m must lie in [1, {h_d.vocab_size}], got {m}")
    ranked = sorted(h_d.weights.items(), key=lambda kv: (-kv[1], kv[0]))
    chosen = [tok for tok, _ in ranked[:m]]
    if len(chosen) < m:
        warnings.warn(
            f"only {len(chosen)} positive weights, padding set DocID to m={m}",
            PaddingWarning,
            stacklevel=2,
        )
        used = set(chosen)
        pad = (t for t in range(h_d.vocab_size) if t not in used)
        chosen.extend(next(pad) for _ in range(m - len(chosen)))
    return SetDocId(tuple(chosen), h_d.vocab_size)


def simul_score(h_q: SparseVector, t_d: SetDocId) -> float:
    """Sum of query weights over the document's token set, ascending token order."""
    if h_q.vocab_size != t_d.vocab_size:
        raise ValidationError(f"vocab mismatch: query {h_q.vocab_size}, doc {t_d.vocab_size}")
    acc = 0.0
    for tok in t_d.tokens:
        acc += h_q[tok]
    return acc


def build_inverted_index(set_docids: Sequence[SetDocId]) -> InvertedIndex:
    if not set_docids:
        raise ValidationError("cannot index an empty corpus")
    m, vocab = set_docids[0].m, set_docids[0].vocab_size
    for i, sd in enumerate(set_docids):
        if sd.m != m or sd.vocab_size != vocab:
            raise ValidationError(
                f"document {i}: (m={sd.m}, V_T={sd.vocab_size}) differs from (m={m}, V_T={vocab})"
            )
    doc_tokens = np.array([sd.tokens for sd in set_docids], dtype=np.int64).reshape(len(set_docids), m)
    flat_tok = doc_tokens.ravel()
    flat_doc = np.repeat(np.arange(len(set_docids)), m)
    order = np.lexsort((flat_doc, flat_tok))
    flat_tok, flat_doc = flat_tok[order], flat_doc[order]
    bounds = np.flatnonzero(np.diff(flat_tok)) + 1
    postings = {
        int(tok_block[0]): doc_block
        for tok_block, doc_block in zip(np.split(flat_tok, bounds), np.split(flat_doc, bounds))
    }
    for arr in postings.values():
        arr.setflags(write=False)
    doc_tokens.setflags(write=False)
    return InvertedIndex(postings, len(set_docids), m, vocab, doc_tokens)


def simul_scores_all(h_q: SparseVector, idx: InvertedIndex) -> np.ndarray:
    """Simultaneous score of every document via the postings lists.

    Query tokens are visited in ascending id order, so each document
    accumulates its terms in the same order as :func:`simul_score`.
    """
    if h_q.vocab_size != idx.vocab_size:
        raise ValidationError(f"vocab mismatch: query {h_q.vocab_size}, index {idx.vocab_size}")
    acc = np.zeros(idx.doc_count, dtype=np.float64)
    for tok in sorted(h_q.weights):
        docs = idx.postings.get(tok)
        if docs is not None:
            acc[docs] += h_q.weights[tok]
    return acc


def topn_simul(h_q: SparseVector, idx: InvertedIndex, n: int) -> list[tuple[int, float]]:
    """Top ``n`` documents by simultaneous score, ties broken by lower ordinal."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if idx.doc_count == 0:
        raise ValidationError("empty index")
    scores = simul_scores_all(h_q, idx)
    order = np.lexsort((np.arange(idx.doc_count), -scores))[:n]
    return list(zip(order.tolist(), scores[order].tolist()))


def flops_reg(batch: Sequence[SparseVector]) -> float:
    """FLOPs regularizer: sum over tokens of the squared mean activation."""
    if not batch:
        raise ValidationError("flops_reg needs a non-empty batch")
    vocab = batch[0].vocab_size
    mean = np.zeros(vocab, dtype=np.float64)
    for vec in batch:
        if vec.vocab_size != vocab:
            raise ValidationError("batch vectors have different vocabulary sizes")
        for tok, w in vec.weights.items():
            mean[tok] += w
    mean /= len(batch)
    return float(np.dot(mean, mean))


def save_set_docids(path, set_docids: Sequence[SetDocId]) -> None:
    if not set_docids:
        raise ValidationError("nothing to save")
    m, vocab = set_docids[0].m, set_docids[0].vocab_size
    if any(sd.m != m or sd.vocab_size != vocab for sd in set_docids):
        raise ValidationError("set DocIDs disagree on m or V_T")
    tokens = np.array([sd.tokens for sd in set_docids], dtype="<u4")
    _write(path, SETID_MAGIC, (len(set_docids), m, vocab), tokens)


def load_set_docids(path) -> list[SetDocId]:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing artifact: {path}")
    raw = path.read_bytes()
    if raw[:4] != SETID_MAGIC:
        raise ArtifactError(f"{path}: bad magic, expected {SETID_MAGIC!r}")
    version, n, m, vocab = np.frombuffer(raw[4:20], dtype="<u4").tolist()
    if version != FORMAT_VERSION:
        raise ArtifactError(f"{path}: unsupported format version {version}")
    body = np.frombuffer(raw[20:], dtype="<u4")
    if body.size != n * m:
        raise ArtifactError(f"{path}: expected {n * m} token ids, found {body.size}")
    return [SetDocId(tuple(row), vocab) for row in body.reshape(n, m).tolist()]

