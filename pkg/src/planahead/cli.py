"""Command-line entry point: ``planahead <command> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path

from planahead.corpus import ExperimentConfig, gen_corpus, load_corpus, save_corpus
from planahead.errors import ArtifactError, ValidationError
from planahead.harness import (
    MODES,
    build_index,
    load_index,
    run_queries,
    save_index,
    sweep,
    write_sweep,
)
from planahead.metrics import evaluate, read_qrels, read_run, write_run
from planahead.rq_codebook import load_vectors

logger = logging.getLogger("planahead")

CORPUS_STAMP = "corpus.json"


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat key = value config file")
    group = parser.add_argument_group("config overrides")
    for f in dataclasses.fields(ExperimentConfig):
        kind = {"int": int, "float": float}.get(f.type if isinstance(f.type, str) else f.type.__name__, str)
        group.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", type=kind, default=None)


def _config(args) -> ExperimentConfig:
    overrides = {
        f.name: getattr(args, f"cfg_{f.name}")
        for f in dataclasses.fields(ExperimentConfig)
        if getattr(args, f"cfg_{f.name}") is not None
    }
    if args.config is not None:
        return ExperimentConfig.from_file(args.config, **overrides)
    return ExperimentConfig(**overrides)


def _corpus_hash(cfg: ExperimentConfig) -> str:
    # L, V, m and k never reach the generator
    fields = dataclasses.asdict(cfg)
    keep = ("D", "vocab_size", "seed", "corpus_size", "num_queries", "noise", "n_clusters",
            "intrinsic_dim", "cluster_std", "doc_terms", "zipf_a", "query_terms", "query_noise_terms")
    blob = json.dumps({k: fields[k] for k in keep}, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _load_corpus(cfg: ExperimentConfig):
    stamp = Path(cfg.corpus_dir) / CORPUS_STAMP
    if not stamp.exists():
        raise ArtifactError(f"missing artifact: {stamp} (run gen-corpus first)")
    found = json.loads(stamp.read_text()).get("corpus_hash")
    if found != _corpus_hash(cfg):
        raise ArtifactError(f"{stamp}: corpus was generated with config {found}, current is {_corpus_hash(cfg)}")
    return load_corpus(cfg.corpus_dir)


def cmd_gen_corpus(args) -> dict:
    cfg = _config(args)
    corpus = gen_corpus(cfg)
    save_corpus(corpus, cfg.corpus_dir, cfg.vocab_size)
    Path(cfg.corpus_dir, CORPUS_STAMP).write_text(json.dumps({"corpus_hash": _corpus_hash(cfg)}) + "\n")
    return {"corpus_dir": cfg.corpus_dir, "documents": corpus.size, "queries": len(corpus.queries)}


def cmd_build_index(args) -> dict:
    cfg = _config(args)
    corpus = _load_corpus(cfg)
    if args.doc_vectors is not None:
        vectors = load_vectors(args.doc_vectors)
        if vectors.shape[0] != corpus.size:
            raise ValidationError(f"{args.doc_vectors}: {vectors.shape[0]} rows, corpus has {corpus.size}")
        corpus.doc_vectors = vectors
    index = build_index(corpus, cfg)
    manifest = save_index(index, cfg, cfg.output_dir)
    return {"manifest": str(manifest), "documents": index.size, "config_hash": cfg.index_hash()}


def cmd_query(args) -> dict:
    cfg = _config(args)
    corpus = _load_corpus(cfg)
    index = load_index(cfg, cfg.output_dir)
    run, stats = run_queries(corpus.queries, index, cfg, args.mode, args.combine_simul, args.depth)
    path = args.run or Path(cfg.output_dir) / f"run.{args.mode}.txt"
    write_run(run, path)
    stats["run"] = str(path)
    stats["metrics"] = evaluate(run, corpus.qrels, 10)
    return stats


def cmd_sweep(args) -> dict:
    cfg = _config(args)
    corpus = _load_corpus(cfg)
    index = load_index(cfg, cfg.output_dir)
    rows = sweep(corpus, index, cfg, args.k_values, args.m_values)
    out = Path(args.out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    curve_m = cfg.m if cfg.m in args.m_values else args.m_values[0]
    write_sweep(rows, out / "sweep.tsv", out / "sweep_curve.tsv", curve_m)
    failed = sum(1 for r in rows if r["error"])
    return {"table": str(out / "sweep.tsv"), "curve": str(out / "sweep_curve.tsv"),
            "cells": len(rows), "failed": failed}


def cmd_eval(args) -> dict:
    return evaluate(read_run(args.run), read_qrels(args.qrels), args.k)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="planahead", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate the seeded synthetic corpus")
    _add_config_flags(p)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("build-index", help="train codebooks and write DocID artifacts")
    _add_config_flags(p)
    p.add_argument("--doc-vectors", type=Path, help="PAGV matrix replacing the corpus dense vectors")
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("query", help="decode every query and write a run file")
    _add_config_flags(p)
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--combine-simul", action="store_true", help="brute mode: add simultaneous scores")
    p.add_argument("--depth", type=int, default=100, help="documents per query in the run file")
    p.add_argument("--run", type=Path, help="run file path (default: <output-dir>/run.<mode>.txt)")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("sweep", help="beam-size and m sweep")
    _add_config_flags(p)
    p.add_argument("--k-values", type=_int_list, default=[10, 100, 1000])
    p.add_argument("--m-values", type=_int_list, default=[16, 32, 64, 128])
    p.add_argument("--out-dir", type=Path)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="score a run file against qrels")
    p.add_argument("--run", type=Path, required=True)
    p.add_argument("--qrels", type=Path, required=True)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = args.func(args)
    except (ArtifactError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(result, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
