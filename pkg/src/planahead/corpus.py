"""Experiment configuration and the seeded synthetic corpus."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from planahead.errors import ArtifactError, ValidationError
from planahead.lexical import SparseVector, log_sat_maxpool
from planahead.scorer import SCORER_KINDS, QueryEncoding, ScorerConfig

# Fields that only affect decoding; changing them never invalidates an index.
QUERY_TIME_FIELDS = frozenset(
    {"n", "k", "scorer", "beta", "aggregation", "output_dir", "corpus_dir", "workers"}
)


@dataclass
class ExperimentConfig:
    """Every hyper-parameter of a run.

    DocID and decoding defaults are the full-scale setting
    (L=8, V=2048, m=64, n=1000, k=100); corpus defaults are desk-sized.
    """

    L: int = 8
    V: int = 2048
    D: int = 64
    vocab_size: int = 4096
    m: int = 64
    n: int = 1000
    k: int = 100
    scorer: str = "prefix_mixing"
    beta: float = 0.5
    seed: int = 0
    corpus_size: int = 10_000
    num_queries: int = 200
    noise: float = 0.05
    n_clusters: int = 64
    intrinsic_dim: int = 16
    cluster_std: float = 1.0
    doc_terms: int = 160
    zipf_a: float = 1.0
    query_terms: int = 8
    query_noise_terms: int = 2
    kmeans_iters: int = 20
    aggregation: str = "max"
    workers: int = 1
    corpus_dir: str = "corpus"
    output_dir: str = "index"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("L", "V", "D", "vocab_size", "m", "n", "k", "corpus_size", "num_queries",
                     "n_clusters", "intrinsic_dim", "doc_terms", "query_terms", "kmeans_iters", "workers"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.query_noise_terms < 0:
            raise ValidationError("query_noise_terms must be >= 0")
        if self.scorer not in SCORER_KINDS:
            raise ValidationError(f"scorer must be one of {SCORER_KINDS}")
        if self.noise < 0 or self.cluster_std < 0:
            raise ValidationError("noise and cluster_std must be >= 0")
        if self.doc_terms > self.vocab_size or self.m > self.vocab_size:
            raise ValidationError("doc_terms and m must not exceed vocab_size")
        if self.intrinsic_dim > self.D:
            raise ValidationError("intrinsic_dim must not exceed D")
        if self.query_terms > self.doc_terms:
            raise ValidationError("query_terms must not exceed doc_terms")

    def scorer_config(self) -> ScorerConfig:
        return ScorerConfig(self.scorer, self.beta, self.seed)

    def index_hash(self) -> str:
        """Hash of every field that shapes the corpus or the index."""
        fields = {k: v for k, v in dataclasses.asdict(self).items() if k not in QUERY_TIME_FIELDS}
        return hashlib.sha256(json.dumps(fields, sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        """Parse a flat ``key = value`` file; ``#`` starts a comment."""
        values = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _coerce(types[key], value)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def to_file(self, path) -> None:
        lines = [f"{k} = {v}" for k, v in dataclasses.asdict(self).items()]
        Path(path).write_text("\n".join(lines) + "\n")


def _coerce(type_name, value: str):
    type_name = type_name if isinstance(type_name, str) else type_name.__name__
    if type_name == "int":
        return int(value)
    if type_name == "float":
        return float(value)
    return value


@dataclass
class SyntheticCorpus:
    doc_vectors: np.ndarray
    doc_terms: list[SparseVector]
    queries: list[QueryEncoding]
    qrels: dict[str, dict[int, int]]
    source_docs: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.doc_vectors.shape[0]


def _zipf_probs(vocab_size: int, a: float, rng: np.random.Generator) -> np.ndarray:
    p = 1.0 / np.arange(1, vocab_size + 1) ** a
    # common terms land on random ids, not on the lowest ones
    return rng.permutation(p / p.sum())


def gen_corpus(cfg: ExperimentConfig) -> SyntheticCorpus:
    """Seeded clustered corpus with Zipfian term weights and noisy queries.

    Documents are unit-normalised draws around Gaussian cluster centres in
    an ``intrinsic_dim``-dimensional subspace of R^D.
    Each query copies one source document's vector plus Gaussian noise of
    scale ``cfg.noise``, and lexically matches a weight-biased subset of the
    source's terms plus a few random Zipf terms. The source is the only
    relevant document.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n, d, vt = cfg.corpus_size, cfg.D, cfg.vocab_size

    r = cfg.intrinsic_dim
    centres = rng.standard_normal((cfg.n_clusters, r))
    centres /= np.linalg.norm(centres, axis=1, keepdims=True)
    cluster = rng.integers(0, cfg.n_clusters, size=n)
    latent = centres[cluster] + cfg.cluster_std * rng.standard_normal((n, r)) / np.sqrt(r)
    latent /= np.linalg.norm(latent, axis=1, keepdims=True)
    # embed the r-dimensional document manifold in R^D with a random isometry
    basis = np.linalg.qr(rng.standard_normal((d, r)))[0]
    docs = latent @ basis.T
    docs = docs.astype(np.float32).astype(np.float64)

    probs = _zipf_probs(vt, cfg.zipf_a, rng)
    doc_terms = []
    for _ in range(n):
        toks = rng.choice(vt, size=cfg.doc_terms, replace=False, p=probs)
        # rare terms weigh more, like a learned idf
        idf = np.log(1.0 / (probs[toks] * vt) + 1.0)
        weights = rng.gamma(2.0, 0.5, size=cfg.doc_terms) * (0.5 + idf)
        doc_terms.append(SparseVector(dict(zip(toks.tolist(), weights.tolist())), vt))

    sources = rng.choice(n, size=cfg.num_queries, replace=cfg.num_queries > n)
    queries, qrels = [], {}
    for qi, src in enumerate(sources.tolist()):
        qid = f"q{qi}"
        dense = docs[src] + cfg.noise * rng.standard_normal(d) / np.sqrt(d)
        terms = doc_terms[src].weights
        toks = np.fromiter(terms.keys(), dtype=np.int64)
        w = np.fromiter(terms.values(), dtype=np.float64)
        picked = rng.choice(toks.shape[0], size=cfg.query_terms, replace=False, p=w / w.sum())
        n_pos = cfg.query_terms + cfg.query_noise_terms
        scores = rng.normal(-2.0, 0.5, size=(vt, n_pos))
        for j, idx in enumerate(picked.tolist()):
            scores[toks[idx], j] = np.expm1(w[idx] * rng.uniform(0.5, 1.5))
        for j in range(cfg.query_terms, n_pos):
            scores[rng.choice(vt, p=probs), j] = np.expm1(rng.gamma(2.0, 0.5))
        queries.append(QueryEncoding(dense, log_sat_maxpool(scores), qid))
        qrels[qid] = {int(src): 1}
    return SyntheticCorpus(docs, doc_terms, queries, qrels, sources)


# --- persistence ---------------------------------------------------------

def _pack_sparse(vectors: list[SparseVector]) -> dict[str, np.ndarray]:
    offsets = np.zeros(len(vectors) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(v) for v in vectors])
    ids = np.fromiter((t for v in vectors for t in v.weights), dtype=np.int64, count=offsets[-1])
    vals = np.fromiter((w for v in vectors for w in v.weights.values()), dtype=np.float64, count=offsets[-1])
    return {"offsets": offsets, "ids": ids, "vals": vals}


def _unpack_sparse(offsets, ids, vals, vocab_size: int) -> list[SparseVector]:
    return [
        SparseVector(dict(zip(ids[a:b].tolist(), vals[a:b].tolist())), vocab_size)
        for a, b in zip(offsets[:-1], offsets[1:])
    ]


def save_corpus(corpus: SyntheticCorpus, directory, vocab_size: int) -> None:
    from planahead.metrics import write_qrels
    from planahead.rq_codebook import save_vectors

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_vectors(directory / "doc_vectors.pagv", corpus.doc_vectors)
    docs = _pack_sparse(corpus.doc_terms)
    qs = _pack_sparse([q.sparse for q in corpus.queries])
    np.savez(
        directory / "corpus.npz",
        vocab_size=vocab_size,
        doc_offsets=docs["offsets"], doc_ids=docs["ids"], doc_vals=docs["vals"],
        q_offsets=qs["offsets"], q_ids=qs["ids"], q_vals=qs["vals"],
        q_dense=np.stack([q.dense for q in corpus.queries]),
        q_names=np.array([q.query_id for q in corpus.queries]),
        sources=corpus.source_docs,
    )
    write_qrels(corpus.qrels, directory / "qrels.txt")


def load_corpus(directory) -> SyntheticCorpus:
    from planahead.metrics import read_qrels
    from planahead.rq_codebook import load_vectors

    directory = Path(directory)
    path = directory / "corpus.npz"
    if not path.exists():
        raise ArtifactError(f"missing artifact: {path} (run gen-corpus first)")
    z = np.load(path)
    vt = int(z["vocab_size"])
    doc_terms = _unpack_sparse(z["doc_offsets"], z["doc_ids"], z["doc_vals"], vt)
    q_sparse = _unpack_sparse(z["q_offsets"], z["q_ids"], z["q_vals"], vt)
    queries = [
        QueryEncoding(dense, sp, str(name))
        for dense, sp, name in zip(z["q_dense"], q_sparse, z["q_names"])
    ]
    return SyntheticCorpus(
        load_vectors(directory / "doc_vectors.pagv"),
        doc_terms,
        queries,
        read_qrels(directory / "qrels.txt"),
        z["sources"],
    )
