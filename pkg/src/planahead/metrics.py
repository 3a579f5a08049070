"""Top-k ranking metrics plus TREC run/qrels file I/O."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from planahead.errors import ArtifactError, UndefinedMetricError, ValidationError

# query_id -> {doc ordinal -> grade}
QrelSet = Mapping[str, Mapping[int, int]]


@dataclass
class RunFile:
    queries: dict[str, list[tuple[int, float]]] = field(default_factory=dict)
    tag: str = "pag"

    def add(self, query_id: str, ranking: Iterable[tuple[int, float]]) -> None:
        entries = [(int(d), float(s)) for d, s in ranking]
        if len({d for d, _ in entries}) != len(entries):
            raise ValidationError(f"query {query_id}: duplicate documents in ranking")
        self.queries[query_id] = entries


def _doc_list(ranking) -> list[int]:
    return [int(d) for d, _ in ranking]


def _grades(qrels: QrelSet, query_id: str) -> Mapping[int, int]:
    return qrels.get(query_id, {})


def mrr_at_k(ranking, qrels: QrelSet, query_id: str, k: int = 10) -> float:
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    grades = _grades(qrels, query_id)
    for rank, doc in enumerate(_doc_list(ranking)[:k], start=1):
        if grades.get(doc, 0) >= 1:
            return 1.0 / rank
    return 0.0


def recall_at_k(ranking, qrels: QrelSet, query_id: str, k: int = 10) -> float:
    relevant = {d for d, g in _grades(qrels, query_id).items() if g >= 1}
    if not relevant:
        raise UndefinedMetricError(f"query {query_id} has no relevant documents")
    hits = len(relevant.intersection(_doc_list(ranking)[:k]))
    return hits / len(relevant)


def ndcg_at_k(ranking, qrels: QrelSet, query_id: str, k: int = 10) -> float:
    """NDCG with exponential gain ``2**grade - 1``."""
    grades = _grades(qrels, query_id)
    ideal = sorted((g for g in grades.values() if g > 0), reverse=True)[:k]
    if not ideal:
        raise UndefinedMetricError(f"query {query_id} has no positively graded documents")
    dcg = sum(
        (2 ** grades.get(doc, 0) - 1) / math.log2(rank + 1)
        for rank, doc in enumerate(_doc_list(ranking)[:k], start=1)
    )
    idcg = sum((2**g - 1) / math.log2(rank + 1) for rank, g in enumerate(ideal, start=1))
    return dcg / idcg


def evaluate(run: RunFile, qrels: QrelSet, k: int = 10) -> dict[str, float]:
    """Mean MRR/Recall/NDCG@k over queries that have at least one relevant document."""
    totals = {"mrr": 0.0, "recall": 0.0, "ndcg": 0.0}
    count = 0
    for qid, grades in qrels.items():
        if not any(g >= 1 for g in grades.values()):
            continue
        ranking = run.queries.get(qid, [])
        totals["mrr"] += mrr_at_k(ranking, qrels, qid, k)
        totals["recall"] += recall_at_k(ranking, qrels, qid, k)
        totals["ndcg"] += ndcg_at_k(ranking, qrels, qid, k)
        count += 1
    if count == 0:
        raise UndefinedMetricError("no query has a relevant document")
    out = {f"{name}@{k}": value / count for name, value in totals.items()}
    out["queries"] = count
    return out


def doc_name(ordinal: int) -> str:
    return f"d{ordinal}"


def parse_doc_name(name: str) -> int:
    return int(name[1:]) if name[:1] == "d" else int(name)


def format_score(x: float) -> str:
    """At least six decimals; more only when needed to round-trip exactly."""
    for digits in range(6, 18):
        text = f"{x:.{digits}f}"
        if float(text) == x:
            return text
    return repr(x)


def write_run(run: RunFile, path) -> None:
    """Six-column TREC run: ``query_id Q0 doc_id rank score tag``."""
    path = Path(path)
    lines = []
    for qid, entries in run.queries.items():
        for rank, (doc, score) in enumerate(entries, start=1):
            lines.append(f"{qid} Q0 {doc_name(doc)} {rank} {format_score(score)} {run.tag}\n")
    try:
        path.write_text("".join(lines))
    except OSError as exc:
        raise ArtifactError(f"cannot write run file {path}: {exc}") from exc


def read_run(path) -> RunFile:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing run file: {path}")
    run = RunFile(tag="")
    last_rank: dict[str, int] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 6:
            raise ArtifactError(f"{path}:{lineno}: expected 6 columns, got {len(parts)}")
        qid, _, doc, rank, score, tag = parts
        if int(rank) != last_rank.get(qid, 0) + 1:
            raise ArtifactError(f"{path}:{lineno}: ranks for {qid} are not contiguous")
        last_rank[qid] = int(rank)
        run.queries.setdefault(qid, []).append((parse_doc_name(doc), float(score)))
        run.tag = tag
    return run


def write_qrels(qrels: QrelSet, path) -> None:
    with open(path, "w") as fh:
        for qid, grades in qrels.items():
            for doc, grade in sorted(grades.items()):
                fh.write(f"{qid} 0 {doc_name(doc)} {grade}\n")


def read_qrels(path) -> dict[str, dict[int, int]]:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing qrels file: {path}")
    qrels: dict[str, dict[int, int]] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ArtifactError(f"{path}:{lineno}: expected 4 columns, got {len(parts)}")
        qid, _, doc, grade = parts
        if int(grade) < 0:
            raise ArtifactError(f"{path}:{lineno}: negative relevance grade")
        qrels.setdefault(qid, {})[parse_doc_name(doc)] = int(grade)
    return qrels
