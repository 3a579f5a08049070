"""Index construction, query execution and beam/m sweeps."""

from __future__ import annotations

import hashlib
import json
import logging
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from planahead.corpus import ExperimentConfig, SyntheticCorpus
from planahead.decoder import (
    Ranking,
    brute_force_decode,
    build_prefix_prior,
    constrained_beam_search,
    planning_ahead_search,
)
from planahead.errors import ArtifactError, ValidationError
from planahead.lexical import (
    InvertedIndex,
    PaddingWarning,
    SetDocId,
    build_inverted_index,
    extract_set_docid,
    load_set_docids,
    save_set_docids,
    simul_scores_all,
    topn_simul,
)
from planahead.metrics import RunFile, evaluate
from planahead.prefix_tree import PrefixTree, build_tree
from planahead.rq_codebook import (
    CodebookSet,
    assign_unique_docids,
    load_codebooks,
    load_docids,
    rq_train,
    save_codebooks,
    save_docids,
)
from planahead.scorer import QueryEncoding

logger = logging.getLogger(__name__)

MODES = ("brute", "beam", "pag")
CODEBOOK_FILE = "codebooks.pagc"
DOCID_FILE = "docids.pagi"
SETID_FILE = "set_docids.pags"
MANIFEST_FILE = "manifest.json"


@dataclass
class Index:
    codebooks: CodebookSet
    docids: np.ndarray
    set_docids: list[SetDocId]
    inverted: InvertedIndex
    tree: PrefixTree

    @property
    def size(self) -> int:
        return self.docids.shape[0]

    @classmethod
    def from_parts(cls, codebooks: CodebookSet, docids: np.ndarray, set_docids: list[SetDocId]) -> "Index":
        return cls(codebooks, docids, set_docids, build_inverted_index(set_docids), build_tree(docids))

    def with_set_docids(self, set_docids: list[SetDocId]) -> "Index":
        return Index(self.codebooks, self.docids, set_docids, build_inverted_index(set_docids), self.tree)


def make_set_docids(corpus: SyntheticCorpus, m: int) -> list[SetDocId]:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", PaddingWarning)
        out = [extract_set_docid(h, m) for h in corpus.doc_terms]
    if caught:
        logger.warning("%d documents padded to m=%d", len(caught), m)
    return out


def build_index(corpus: SyntheticCorpus, cfg: ExperimentConfig) -> Index:
    codebooks = rq_train(corpus.doc_vectors, cfg.L, cfg.V, cfg.kmeans_iters, cfg.seed)
    docids = assign_unique_docids(corpus.doc_vectors, codebooks)
    return Index.from_parts(codebooks, docids, make_set_docids(corpus, cfg.m))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_index(index: Index, cfg: ExperimentConfig, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_codebooks(directory / CODEBOOK_FILE, index.codebooks)
    save_docids(directory / DOCID_FILE, index.docids)
    save_set_docids(directory / SETID_FILE, index.set_docids)
    manifest = {
        "config_hash": cfg.index_hash(),
        "L": cfg.L, "V": cfg.V, "D": cfg.D, "m": cfg.m,
        "vocab_size": cfg.vocab_size, "documents": index.size,
        "files": {name: _sha256(directory / name) for name in (CODEBOOK_FILE, DOCID_FILE, SETID_FILE)},
    }
    path = directory / MANIFEST_FILE
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_index(cfg: ExperimentConfig, directory) -> Index:
    """Load persisted artifacts, refusing ones built under a different config."""
    directory = Path(directory)
    mpath = directory / MANIFEST_FILE
    if not mpath.exists():
        raise ArtifactError(f"missing artifact: {mpath} (run build-index first)")
    manifest = json.loads(mpath.read_text())
    if manifest.get("config_hash") != cfg.index_hash():
        raise ArtifactError(
            f"{mpath}: index was built with config {manifest.get('config_hash')}, "
            f"current config is {cfg.index_hash()}"
        )
    for name, digest in manifest["files"].items():
        if not (directory / name).exists():
            raise ArtifactError(f"missing artifact: {directory / name}")
        if _sha256(directory / name) != digest:
            raise ArtifactError(f"{directory / name}: checksum differs from manifest")
    return Index.from_parts(
        load_codebooks(directory / CODEBOOK_FILE),
        load_docids(directory / DOCID_FILE),
        load_set_docids(directory / SETID_FILE),
    )


@dataclass
class QueryResult:
    ranking: Ranking
    simul_ms: float
    seq_ms: float

    @property
    def total_ms(self) -> float:
        return self.simul_ms + self.seq_ms


def run_query(
    q: QueryEncoding,
    index: Index,
    cfg: ExperimentConfig,
    mode: str,
    combine_simul: bool = False,
) -> QueryResult:
    """Decode one query; timings cover decoding only.

    For ``pag`` the simultaneous phase is top-n selection over the inverted
    index, and the sequential phase is prior construction plus guided beam
    search.
    """
    sc = cfg.scorer_config()
    if mode == "brute":
        t0 = time.perf_counter()
        simul = simul_scores_all(q.sparse, index.inverted) if combine_simul else None
        t1 = time.perf_counter()
        ranking = brute_force_decode(q, index.docids, index.codebooks, sc, combine_simul, simul)
        t2 = time.perf_counter()
        return QueryResult(ranking, (t1 - t0) * 1e3, (t2 - t1) * 1e3)
    if mode == "beam":
        t0 = time.perf_counter()
        ranking = constrained_beam_search(q, index.tree, index.codebooks, sc, cfg.k)
        return QueryResult(ranking, 0.0, (time.perf_counter() - t0) * 1e3)
    if mode == "pag":
        t0 = time.perf_counter()
        top = topn_simul(q.sparse, index.inverted, cfg.n)
        t1 = time.perf_counter()
        prior = build_prefix_prior(top, index.docids, cfg.aggregation)
        ranking = planning_ahead_search(q, index.tree, index.codebooks, sc, prior, cfg.k)
        t2 = time.perf_counter()
        return QueryResult(ranking, (t1 - t0) * 1e3, (t2 - t1) * 1e3)
    raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")


def latency_stats(values: Sequence[float]) -> dict[str, float]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return {"mean": 0.0, "p50": 0.0, "p95": 0.0}
    return {
        "mean": float(arr.mean()),
        "p50": float(np.percentile(arr, 50)),
        "p95": float(np.percentile(arr, 95)),
    }


def run_queries(
    queries: Sequence[QueryEncoding],
    index: Index,
    cfg: ExperimentConfig,
    mode: str,
    combine_simul: bool = False,
    depth: int = 100,
) -> tuple[RunFile, dict]:
    """Decode every query and collect a run plus latency statistics.

    ``cfg.workers > 1`` decodes queries concurrently; results are identical,
    only throughput and per-query latency change.
    """
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(lambda q: run_query(q, index, cfg, mode, combine_simul), queries))
    else:
        results = [run_query(q, index, cfg, mode, combine_simul) for q in queries]
    run = RunFile(tag=mode)
    for q, res in zip(queries, results):
        run.add(q.query_id, res.ranking.top(depth))
    stats = {
        "mode": mode,
        "queries": len(results),
        "latency_ms": latency_stats([r.total_ms for r in results]),
        "simul_latency_ms": latency_stats([r.simul_ms for r in results]),
        "seq_latency_ms": latency_stats([r.seq_ms for r in results]),
    }
    return run, stats


SWEEP_COLUMNS = ("mode", "m", "k", "mrr@10", "recall@10", "simul_ms", "seq_ms", "latency_ms", "error")


def sweep(
    corpus: SyntheticCorpus,
    index: Index,
    cfg: ExperimentConfig,
    k_values: Sequence[int],
    m_values: Sequence[int],
) -> list[dict]:
    """Metric and latency for vanilla beam (per k) and planning-ahead (per m, k).

    A failing cell is recorded with its error message and the sweep moves on.
    """
    rows = []

    def cell(mode, m, k, idx):
        row = dict.fromkeys(SWEEP_COLUMNS, "")
        row.update(mode=mode, m=m if mode == "pag" else "-", k=k)
        try:
            run, stats = run_queries(corpus.queries, idx, cfg.replace(k=k, m=m), mode)
            metrics = evaluate(run, corpus.qrels, 10)
            row.update({
                "mrr@10": metrics["mrr@10"],
                "recall@10": metrics["recall@10"],
                "simul_ms": stats["simul_latency_ms"]["mean"],
                "seq_ms": stats["seq_latency_ms"]["mean"],
                "latency_ms": stats["latency_ms"]["mean"],
            })
        except Exception as exc:  # noqa: BLE001 - recorded per cell
            logger.exception("sweep cell %s m=%s k=%s failed", mode, m, k)
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)

    for k in k_values:
        cell("beam", cfg.m, k, index)
    for m in m_values:
        idx = index if m == cfg.m else index.with_set_docids(make_set_docids(corpus, m))
        for k in k_values:
            cell("pag", m, k, idx)
    return rows


def _fmt(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def write_sweep(rows: list[dict], table_path, curve_path, curve_m: int) -> None:
    """Write the full table and a metric-vs-beam-size curve for plotting."""
    lines = ["\t".join(SWEEP_COLUMNS)]
    lines += ["\t".join(_fmt(r[c]) for c in SWEEP_COLUMNS) for r in rows]
    Path(table_path).write_text("\n".join(lines) + "\n")

    curve: dict[int, dict[str, str]] = {}
    for r in rows:
        if r["mode"] == "beam" or r["m"] == curve_m:
            curve.setdefault(r["k"], {})[r["mode"]] = _fmt(r["mrr@10"])
    out = ["k\tbeam_mrr@10\tpag_mrr@10"]
    out += [f"{k}\t{v.get('beam', '')}\t{v.get('pag', '')}" for k, v in sorted(curve.items())]
    Path(curve_path).write_text("\n".join(out) + "\n")
