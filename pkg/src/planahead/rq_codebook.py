"""Residual quantization codebooks and sequential DocID assignment.

Codebook tables are stored as float32 (the on-disk precision) and every
distance or score is computed in float64 from those stored values, so a
codebook that went through a save/load cycle behaves bit-identically.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from planahead._kernels import sq_dist_to_rows
from planahead.errors import (
    ArtifactError,
    CapacityError,
    CollisionError,
    InsufficientDataError,
    ValidationError,
)

logger = logging.getLogger(__name__)

SequentialDocId = tuple[int, ...]

CODEBOOK_MAGIC = b"PAGC"
DOCID_MAGIC = b"PAGI"
VECTOR_MAGIC = b"PAGV"
FORMAT_VERSION = 1

# max elements of the (chunk, V, D) difference tensor in _nearest
_NEAREST_BUDGET = 1 << 22


@dataclass(frozen=True)
class CodebookSet:
    """Per-position embedding tables, ``tables[i]`` is the ``V x D`` table of level ``i + 1``."""

    tables: np.ndarray

    def __post_init__(self):
        tables = np.ascontiguousarray(self.tables, dtype=np.float32)
        if tables.ndim != 3 or min(tables.shape) < 1:
            raise ValidationError(f"tables must have shape (L, V, D), got {tables.shape}")
        if not np.all(np.isfinite(tables)):
            raise ValidationError("codebook tables contain non-finite values")
        tables.setflags(write=False)
        object.__setattr__(self, "tables", tables)

    @property
    def levels(self) -> int:
        return self.tables.shape[0]

    @property
    def codebook_size(self) -> int:
        return self.tables.shape[1]

    @property
    def dim(self) -> int:
        return self.tables.shape[2]

    @cached_property
    def tables64(self) -> np.ndarray:
        out = self.tables.astype(np.float64)
        out.setflags(write=False)
        return out

    def table(self, position: int) -> np.ndarray:
        """float64 table at 1-based ``position``."""
        if not 1 <= position <= self.levels:
            raise ValidationError(f"position {position} outside [1, {self.levels}]")
        return self.tables64[position - 1]

    def check_codes(self, codes: Sequence[int] | np.ndarray, full: bool = True) -> np.ndarray:
        arr = np.asarray(codes, dtype=np.int64)
        if arr.ndim != 1:
            raise ValidationError("a DocID must be a flat sequence of codes")
        if full and arr.shape[0] != self.levels:
            raise ValidationError(f"DocID length {arr.shape[0]} != L={self.levels}")
        if arr.shape[0] > self.levels:
            raise ValidationError(f"prefix length {arr.shape[0]} exceeds L={self.levels}")
        if arr.size and (arr.min() < 0 or arr.max() >= self.codebook_size):
            raise ValidationError(f"code out of range [0, {self.codebook_size})")
        return arr


def _as_matrix(vectors) -> np.ndarray:
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"expected an (N, D) matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("input vectors contain non-finite values")
    return x


def _nearest(residuals: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Exact nearest-centroid codes, lowest index on ties.

    Uses the same elementwise accumulation as :func:`sq_dist_to_rows`, so a
    batched call returns exactly what per-vector calls would.
    """
    centroids = np.asarray(centroids, dtype=np.float64)
    out = np.empty(residuals.shape[0], dtype=np.int64)
    chunk = max(1, _NEAREST_BUDGET // centroids.size)
    for start in range(0, residuals.shape[0], chunk):
        r = residuals[start:start + chunk]
        diff = centroids[None, :, :] - r[:, None, :]
        dist = np.zeros(diff.shape[:2], dtype=np.float64)
        for j in range(diff.shape[2]):
            dist += diff[:, :, j] * diff[:, :, j]
        out[start:start + chunk] = np.argmin(dist, axis=1)
    return out


def _fast_assign(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # ||x||^2 is constant per row, so it is dropped from the argmin
    scores = (centroids * centroids).sum(axis=1)[None, :] - 2.0 * (x @ centroids.T)
    return np.argmin(scores, axis=1)


def _init_centroids(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    order = rng.permutation(x.shape[0])
    chosen, seen = [], set()
    for idx in order:
        key = x[idx].tobytes()
        if key not in seen:
            seen.add(key)
            chosen.append(idx)
            if len(chosen) == k:
                break
    if len(chosen) < k:
        # fewer distinct points than centroids: duplicates become empty clusters
        picked = set(chosen)
        chosen.extend(i for i in order if i not in picked)
        chosen = chosen[:k]
    return x[np.asarray(chosen)].copy()


def _update(x: np.ndarray, assign: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    k = centroids.shape[0]
    counts = np.bincount(assign, minlength=k)
    for empty in np.flatnonzero(counts == 0):
        # split the largest cluster: its farthest member seeds the empty one
        big = int(np.argmax(counts))
        if counts[big] < 2:
            break
        members = np.flatnonzero(assign == big)
        center = x[members].mean(axis=0)
        far = members[int(np.argmax(((x[members] - center) ** 2).sum(axis=1)))]
        assign[far] = empty
        counts[big] -= 1
        counts[empty] += 1
    sums = np.zeros_like(centroids)
    np.add.at(sums, assign, x)
    new = centroids.copy()
    nonempty = counts > 0
    new[nonempty] = sums[nonempty] / counts[nonempty, None]
    return new


def kmeans(x: np.ndarray, k: int, iters: int, rng: np.random.Generator) -> np.ndarray:
    """Lloyd's k-means with distinct-point init and empty-cluster splitting.

    Always finishes with a centroid update, so every non-empty centroid is
    the mean of the partition it was computed from.
    """
    centroids = _init_centroids(x, k, rng)
    for _ in range(max(iters, 1)):
        assign = _fast_assign(x, centroids)
        centroids = _update(x, assign, centroids)
    return centroids


def rq_train(vectors, L: int, V: int, kmeans_iters: int = 20, seed: int = 0) -> CodebookSet:
    """Train ``L`` residual k-means levels of ``V`` centroids each.

    Level ``i`` is fit to what is left of each vector after subtracting the
    centroids it was assigned at levels ``< i``. Assignments between levels
    use :func:`rq_encode`'s exact nearest-centroid rule, so the training
    residuals are exactly the ones the encoder will see.

    Raises:
        InsufficientDataError: if there are fewer vectors than ``V``.
        ValidationError: on non-finite input or non-positive sizes.
    """
    x = _as_matrix(vectors)
    if L < 1 or V < 1:
        raise ValidationError(f"L and V must be positive, got L={L}, V={V}")
    if x.shape[0] < V:
        raise InsufficientDataError(f"need at least V={V} vectors, got {x.shape[0]}")
    rng = np.random.default_rng(seed)
    residual = x.copy()
    tables = np.empty((L, V, x.shape[1]), dtype=np.float32)
    for level in range(L):
        tables[level] = kmeans(residual, V, kmeans_iters, rng).astype(np.float32)
        stored = tables[level].astype(np.float64)
        residual -= stored[_nearest(residual, stored)]
        logger.debug("rq level %d: mse %.6g", level + 1, float((residual**2).sum(axis=1).mean()))
    return CodebookSet(tables)


def _check_dim(x: np.ndarray, cb: CodebookSet) -> None:
    if x.shape[-1] != cb.dim:
        raise ValidationError(f"vector dim {x.shape[-1]} != codebook dim {cb.dim}")


def rq_encode_batch(vectors, cb: CodebookSet) -> np.ndarray:
    """Greedy residual codes for every row; returns an ``(N, L)`` int64 array."""
    x = _as_matrix(vectors)
    _check_dim(x, cb)
    residual = x.copy()
    codes = np.empty((x.shape[0], cb.levels), dtype=np.int64)
    for level in range(cb.levels):
        table = cb.tables[level].astype(np.float64)
        codes[:, level] = _nearest(residual, table)
        residual -= table[codes[:, level]]
    return codes


def rq_encode(vec, cb: CodebookSet) -> SequentialDocId:
    """Greedy residual assignment of a single vector."""
    v = np.asarray(vec, dtype=np.float64)
    if v.ndim != 1:
        raise ValidationError("rq_encode expects a single vector")
    return tuple(int(c) for c in rq_encode_batch(v[None, :], cb)[0])


def rq_reconstruct(docid: Sequence[int], cb: CodebookSet) -> np.ndarray:
    """Sum of the selected centroid at every level."""
    codes = cb.check_codes(docid)
    out = np.zeros(cb.dim, dtype=np.float64)
    for level, code in enumerate(codes):
        out = out + cb.tables[level, code].astype(np.float64)
    return out


def reconstruct_batch(codes: np.ndarray, cb: CodebookSet, levels: int | None = None) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    levels = cb.levels if levels is None else levels
    out = np.zeros((codes.shape[0], cb.dim), dtype=np.float64)
    for level in range(levels):
        out += cb.tables[level].astype(np.float64)[codes[:, level]]
    return out


def level_errors(vectors, cb: CodebookSet) -> np.ndarray:
    """Mean squared reconstruction error using the first ``i`` levels, for ``i = 1..L``."""
    x = _as_matrix(vectors)
    codes = rq_encode_batch(x, cb)
    return np.array([
        float(((x - reconstruct_batch(codes, cb, i)) ** 2).sum(axis=1).mean())
        for i in range(1, cb.levels + 1)
    ])


def assign_unique_docids(vectors, cb: CodebookSet) -> np.ndarray:
    """Greedy RQ codes made unique by moving colliders at the final position.

    Within a group of documents sharing a code sequence, the lowest ordinal
    keeps its codes. Each other member, in ordinal order, takes the
    next-nearest final-level centroid whose sequence is still free.

    Raises:
        CapacityError: if ``V ** L`` is smaller than the number of documents.
        CollisionError: if no final-level code is free for some collider.
    """
    x = _as_matrix(vectors)
    _check_dim(x, cb)
    n = x.shape[0]
    if cb.codebook_size ** cb.levels < n:
        raise CapacityError(f"V^L = {cb.codebook_size}^{cb.levels} < N = {n}")
    codes = rq_encode_batch(x, cb)

    taken: set[tuple[int, ...]] = set()
    colliders = []
    for doc in range(n):
        key = tuple(codes[doc].tolist())
        if key in taken:
            colliders.append(doc)
        else:
            taken.add(key)
    if not colliders:
        return codes

    last = cb.tables[-1].astype(np.float64)
    prefix_recon = reconstruct_batch(codes[colliders], cb, cb.levels - 1)
    for doc, recon in zip(colliders, prefix_recon):
        residual = x[doc] - recon
        order = np.argsort(sq_dist_to_rows(residual, last), kind="stable")
        head = tuple(codes[doc, :-1].tolist())
        for cand in order:
            key = head + (int(cand),)
            if key not in taken:
                taken.add(key)
                codes[doc, -1] = cand
                break
        else:
            raise CollisionError(f"document {doc}: all {cb.codebook_size} final codes are taken")
    logger.info("resolved %d DocID collisions", len(colliders))
    return codes


# --- persistence ---------------------------------------------------------

def _write(path, magic: bytes, header: Sequence[int], payload: np.ndarray) -> None:
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(magic)
            fh.write(struct.pack(f"<{len(header) + 1}I", FORMAT_VERSION, *header))
            fh.write(payload.tobytes(order="C"))
    except OSError as exc:
        raise ArtifactError(f"cannot write {path}: {exc}") from exc


def _read(path, magic: bytes, n_header: int, dtype: str):
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing artifact: {path}")
    raw = path.read_bytes()
    head_len = 4 + 4 * (n_header + 1)
    if len(raw) < head_len or raw[:4] != magic:
        raise ArtifactError(f"{path}: bad magic, expected {magic!r}")
    version, *header = struct.unpack(f"<{n_header + 1}I", raw[4:head_len])
    if version != FORMAT_VERSION:
        raise ArtifactError(f"{path}: unsupported format version {version}")
    body = np.frombuffer(raw[head_len:], dtype=dtype)
    if body.size != int(np.prod(header)):
        raise ArtifactError(f"{path}: payload size {body.size} does not match header {header}")
    return header, body


def save_codebooks(path, cb: CodebookSet) -> None:
    _write(path, CODEBOOK_MAGIC, cb.tables.shape, cb.tables.astype("<f4"))


def load_codebooks(path) -> CodebookSet:
    (L, V, D), body = _read(path, CODEBOOK_MAGIC, 3, "<f4")
    return CodebookSet(body.reshape(L, V, D))


def save_docids(path, codes: np.ndarray) -> None:
    codes = np.asarray(codes)
    _write(path, DOCID_MAGIC, codes.shape, codes.astype("<u4"))


def load_docids(path) -> np.ndarray:
    (n, L), body = _read(path, DOCID_MAGIC, 2, "<u4")
    return body.reshape(n, L).astype(np.int64)


def save_vectors(path, vectors: np.ndarray) -> None:
    """Dense matrix in the codebook layout: header {N, D}, then row-major f32."""
    vectors = np.asarray(vectors)
    _write(path, VECTOR_MAGIC, vectors.shape, vectors.astype("<f4"))


def load_vectors(path) -> np.ndarray:
    (n, d), body = _read(path, VECTOR_MAGIC, 2, "<f4")
    return body.reshape(n, d).astype(np.float64)
