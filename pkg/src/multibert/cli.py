"""Command-line pipeline driver.

Subcommands compose the pipeline stages over a run directory::

    ingest          raw books (+reviews) -> corpus.jsonl
    build-codebook  corpus -> embeddings.semb + codebook.scbk
    train           corpus + codebook -> sequences.txt + checkpoint.mbrt + loss_history.txt
    embed           everything above -> docvecs.semb
    recommend       ranked neighbors of one book, printed as TSV
    evaluate        precision@k report for multi-bert and both baselines
    gradcheck       finite-difference check of the encoder gradients
    dump-sentences  the exact per-book sentences the pipeline embeds

Every command is a pure function of (config, input files): rerunning writes
byte-identical artifacts.  A manifest in the run directory records the
config digest and the SHA-256 of every artifact written.  Errors exit
nonzero with a single ``error: <Type>: <message>`` line on stderr.

Heavy numeric imports happen inside commands, after ``--threads`` has had a
chance to cap the BLAS thread pools via environment variables.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

ARTIFACTS = {
    "corpus": "corpus.jsonl",
    "embeddings": "embeddings.semb",
    "codebook": "codebook.scbk",
    "sequences": "sequences.txt",
    "checkpoint": "checkpoint.mbrt",
    "loss_history": "loss_history.txt",
    "docvecs": "docvecs.semb",
    "report": "report.txt",
    "details": "details.jsonl",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multibert",
        description="Cluster-token document embeddings and book recommendation.",
    )
    parser.add_argument("--config", help="JSON config file merged over the defaults")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config value (repeatable); value parsed as JSON",
    )
    parser.add_argument("--threads", type=int, help="cap numeric thread pools")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", help="load, merge, clean and genre-label the corpus")
    sub.add_parser("build-codebook", help="embed sentences and fit the cluster codebook")
    p_train = sub.add_parser("train", help="train the encoder on cluster-token sequences")
    p_train.add_argument(
        "--resume", action="store_true", help="continue from the existing checkpoint"
    )
    sub.add_parser("embed", help="compose and store document vectors")
    p_rec = sub.add_parser("recommend", help="rank books similar to a query book")
    p_rec.add_argument("--query", required=True, help="query book_id")
    p_rec.add_argument("--k", type=int, default=10, help="number of results")
    sub.add_parser("evaluate", help="run the genre-relevance precision@k benchmark")
    p_gc = sub.add_parser("gradcheck", help="finite-difference check on a tiny encoder")
    p_gc.add_argument("--step", type=float, default=1e-5, help="finite-difference step")
    p_gc.add_argument(
        "--fail-above", type=float, default=None, help="exit 1 if max relative error exceeds this"
    )
    p_dump = sub.add_parser(
        "dump-sentences", help="print book_id TAB sentence for every embedded sentence"
    )
    p_dump.add_argument("--output", help="write to a file instead of stdout")
    return parser


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _update_manifest(run_dir: Path, digest: str, written: dict[str, Path]) -> None:
    path = run_dir / "manifest.json"
    data: dict = {"config_digest": digest, "artifacts": {}}
    if path.exists():
        try:
            previous = json.loads(path.read_text(encoding="utf-8"))
            if isinstance(previous, dict):
                data["artifacts"] = dict(previous.get("artifacts", {}))
        except json.JSONDecodeError:
            pass
    data["config_digest"] = digest
    for name, artifact in written.items():
        data["artifacts"][name] = _sha256_file(artifact)
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _require(path: Path, producer: str) -> Path:
    from .errors import NotFoundError

    if not path.exists():
        raise NotFoundError(f"{path} does not exist; run `multibert {producer}` first")
    return path


class _Run:
    """Shared plumbing: merged config, run directory, artifact loading."""

    def __init__(self, args):
        from .config import apply_overrides, config_digest, load_config

        self.cfg = apply_overrides(load_config(args.config), args.overrides)
        self.digest = config_digest(self.cfg)
        self.run_dir = Path(self.cfg["paths"]["run_dir"])
        self.run_dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.run_dir / ARTIFACTS[name]

    def record_artifacts(self, **named: Path) -> None:
        _update_manifest(self.run_dir, self.digest, named)

    # -- loading helpers ---------------------------------------------------

    def load_corpus(self):
        from .corpus import load_books

        return load_books(_require(self.path("corpus"), "ingest")).records

    def load_raw_records(self):
        """The same cleaned records ingest would write, rebuilt from the raw
        inputs (used by dump-sentences so it has no run-dir dependency)."""
        from .corpus import fill_defaults, load_books, load_reviews, merge_reviews

        paths = self.cfg["paths"]
        records = load_books(paths["books"]).records
        if paths["reviews"]:
            reviews, _ = load_reviews(paths["reviews"])
            records = merge_reviews(records, reviews).records
        return fill_defaults(records, self.cfg["corpus"]["defaults"])

    def embedding_sets(self, records):
        from .embedstore import read_embeddings
        from .synthetic import embed_records

        emb = self.cfg["embeddings"]
        if emb["synthetic"]:
            return embed_records(
                records,
                emb["dim"],
                emb["seed"],
                correlated=emb["correlated"],
                noise=emb["noise"],
            )
        from .errors import ConfigError

        source = self.cfg["paths"]["embeddings"]
        if not source:
            raise ConfigError(
                "embeddings.synthetic is false but paths.embeddings is not set"
            )
        return read_embeddings(source)

    def sequences(self, records, codebook):
        from .corpus import build_documents
        from .embedstore import read_embeddings
        from .sequencer import encode_document

        sets = read_embeddings(_require(self.path("embeddings"), "build-codebook"))
        by_id = {s.book_id: s for s in sets}
        max_positions = self.cfg["encoder"]["max_positions"]
        documents = build_documents(records, self.cfg["corpus"]["include_reviews"])
        return [
            encode_document(by_id[d.book_id], codebook, max_positions)
            for d in documents
            if d.book_id in by_id
        ]

    def encoder_config(self, vocab_size: int):
        from .encoder import EncoderConfig

        e = self.cfg["encoder"]
        return EncoderConfig(
            vocab_size=vocab_size,
            hidden_size=e["hidden_size"],
            n_layers=e["n_layers"],
            n_heads=e["n_heads"],
            ffn_size=e["ffn_size"],
            max_positions=e["max_positions"],
            dropout=e["dropout"],
            seed=e["seed"],
        )

    def train_config(self):
        from .encoder import TrainConfig

        t = self.cfg["train"]
        return TrainConfig(
            epochs=t["epochs"],
            batch_size=t["batch_size"],
            learning_rate=t["learning_rate"],
            beta1=t["beta1"],
            beta2=t["beta2"],
            adam_eps=t["adam_eps"],
            clip_norm=t["clip_norm"],
            mask_probability=t["mask_probability"],
            shuffle=t["shuffle"],
            seed=t["seed"],
        )

    def relevance_config(self):
        from .evaluate import RelevanceConfig

        return RelevanceConfig(
            vocabulary=tuple(self.cfg["corpus"]["genre_vocabulary"]),
            threshold=self.cfg["evaluate"]["threshold"],
            rule=self.cfg["evaluate"]["rule"],
        )


def cmd_ingest(run: _Run, args) -> int:
    from .corpus import derive_genres, fill_defaults, load_books, load_reviews, merge_reviews, write_corpus

    paths = run.cfg["paths"]
    loaded = load_books(paths["books"])
    records = loaded.records
    matched = orphans = 0
    if paths["reviews"]:
        reviews, _ = load_reviews(paths["reviews"])
        merge = merge_reviews(records, reviews)
        records = merge.records
        orphans = merge.orphans
        matched = len(reviews) - orphans
    records = fill_defaults(records, run.cfg["corpus"]["defaults"])
    vocabulary = frozenset(run.cfg["corpus"]["genre_vocabulary"])
    if vocabulary:
        min_count = run.cfg["corpus"]["min_shelf_count"]
        records = [
            replace(r, genres=derive_genres(r, vocabulary, min_count)) for r in records
        ]
    write_corpus(records, run.path("corpus"))
    run.record_artifacts(corpus=run.path("corpus"))
    labeled = sum(1 for r in records if r.genres)
    print(
        f"books={len(records)} skipped={loaded.skipped} "
        f"reviews_matched={matched} review_orphans={orphans} genre_labeled={labeled}"
    )
    return 0


def cmd_build_codebook(run: _Run, args) -> int:
    import numpy as np

    from .codebook import kmeans_fit, write_codebook
    from .embedstore import write_embeddings

    records = run.load_corpus()
    sets = run.embedding_sets(records)
    if not sets:
        from .errors import EmptyCorpusError

        raise EmptyCorpusError("no document produced any sentence embeddings")
    write_embeddings(sets, run.path("embeddings"))
    pooled = np.concatenate([s.vectors for s in sets], axis=0)
    cb = run.cfg["codebook"]
    codebook = kmeans_fit(
        pooled, cb["k"], max_iter=cb["max_iter"], tol=cb["tol"], seed=cb["seed"]
    )
    write_codebook(codebook, run.path("codebook"))
    run.record_artifacts(embeddings=run.path("embeddings"), codebook=run.path("codebook"))
    print(
        f"sentences={pooled.shape[0]} k={codebook.k} "
        f"iterations={codebook.iterations_run} inertia={codebook.inertia:.6f}"
    )
    return 0


def cmd_train(run: _Run, args) -> int:
    from .codebook import read_codebook
    from .encoder import init_model, load_checkpoint, save_checkpoint, train, write_loss_history
    from .sequencer import write_sequences

    codebook = read_codebook(_require(run.path("codebook"), "build-codebook"))
    records = run.load_corpus()
    sequences = run.sequences(records, codebook)
    write_sequences(sequences, run.path("sequences"))

    if args.resume:
        model = load_checkpoint(_require(run.path("checkpoint"), "train"))
    else:
        model = init_model(run.encoder_config(vocab_size=codebook.k + 4))
    model, history = train(model, sequences, run.train_config())
    save_checkpoint(run.path("checkpoint"), model)
    write_loss_history(run.path("loss_history"), history, append=args.resume)
    run.record_artifacts(
        sequences=run.path("sequences"),
        checkpoint=run.path("checkpoint"),
        loss_history=run.path("loss_history"),
    )
    if history:
        print(
            f"sequences={len(sequences)} epochs={len(history)} "
            f"first_loss={history[0]:.6f} last_loss={history[-1]:.6f}"
        )
    else:
        print(f"sequences={len(sequences)} epochs=0 (checkpoint written at initialization)")
    return 0


def cmd_embed(run: _Run, args) -> int:
    from .codebook import read_codebook
    from .docvec import compose_all
    from .embedstore import read_embeddings
    from .encoder import load_checkpoint
    from .retrieval import build_index, save_index

    codebook = read_codebook(_require(run.path("codebook"), "build-codebook"))
    model = load_checkpoint(_require(run.path("checkpoint"), "train"))
    records = run.load_corpus()
    sequences = run.sequences(records, codebook)
    sets = read_embeddings(run.path("embeddings"))
    ids, matrix = compose_all(
        model,
        sequences,
        sets,
        pooling=run.cfg["docvec"]["pooling"],
        batch_size=run.cfg["train"]["batch_size"],
    )
    save_index(build_index(ids, matrix), run.path("docvecs"))
    run.record_artifacts(docvecs=run.path("docvecs"))
    print(f"documents={len(ids)} dim={matrix.shape[1]}")
    return 0


def _query_paths(run: _Run):
    from .retrieval import build_cluster_index, load_index

    index = load_index(_require(run.path("docvecs"), "embed"))
    r = run.cfg["retrieval"]
    if r["mode"] == "cluster":
        index = build_cluster_index(index, r["n_clusters"], seed=r["seed"])
    return index, r["mode"]


def cmd_recommend(run: _Run, args) -> int:
    from .retrieval import cluster_retrieve, format_results, top_k

    index, mode = _query_paths(run)
    records = run.load_corpus()
    titles = {r.book_id: r.title for r in records}
    if mode == "cluster":
        results = cluster_retrieve(index, args.query, args.k)
    else:
        results = top_k(index, args.query, args.k)
    sys.stdout.write(format_results(results, titles))
    return 0


def _tfidf_text(record, include_reviews: bool) -> str:
    parts = [record.title, record.description or ""]
    if include_reviews:
        parts.extend(record.reviews)
    return " ".join(p for p in parts if p)


def cmd_evaluate(run: _Run, args) -> int:
    from .embedstore import read_embeddings
    from .evaluate import (
        baseline_sentence_mean,
        format_report,
        run_benchmark,
        tfidf_index,
        write_details,
    )
    from .retrieval import load_index

    records = run.load_corpus()
    docvec_index = load_index(_require(run.path("docvecs"), "embed"))
    ids = docvec_index.book_ids
    by_id = {r.book_id: r for r in records}

    sets = read_embeddings(_require(run.path("embeddings"), "build-codebook"))
    sets = [s for s in sets if s.book_id in set(ids)]
    sbert_source = run.cfg["paths"]["sbert_docvecs"]
    if sbert_source:
        baseline = load_index(sbert_source)
    else:
        baseline = baseline_sentence_mean(sets)

    include_reviews = run.cfg["corpus"]["include_reviews"]
    texts = [_tfidf_text(by_id[bid], include_reviews) for bid in ids]
    tfidf, _terms = tfidf_index(list(ids), texts)

    r = run.cfg["retrieval"]
    report = run_benchmark(
        [by_id[bid] for bid in ids],
        {"multi-bert": docvec_index, "sbert-baseline": baseline, "tfidf": tfidf},
        run.relevance_config(),
        ks=run.cfg["evaluate"]["ks"],
        mode=r["mode"],
        n_clusters=r["n_clusters"],
        seed=r["seed"],
    )
    table = format_report(report)
    run.path("report").write_text(table, encoding="utf-8")
    write_details(report, run.path("details"))
    run.record_artifacts(report=run.path("report"), details=run.path("details"))
    sys.stdout.write(table)
    return 0


def cmd_gradcheck(run: _Run, args) -> int:
    import numpy as np

    from .encoder import EncoderConfig, gradient_check, init_model
    from .sequencer import TokenVocabulary

    config = EncoderConfig(
        vocab_size=8,
        hidden_size=4,
        n_layers=1,
        n_heads=1,
        ffn_size=8,
        max_positions=8,
        dropout=0.0,
        seed=run.cfg["encoder"]["seed"],
    )
    vocab = TokenVocabulary(4)
    tokens = np.array(
        [[vocab.bos, 0, 3, vocab.eos], [vocab.bos, 2, vocab.eos, vocab.pad]], dtype=np.int64
    )
    mask = np.array([[1.0, 1.0, 1.0, 1.0], [1.0, 1.0, 1.0, 0.0]])
    model = init_model(config, dtype=np.float64)
    report = gradient_check(model, tokens, mask, step=args.step)
    print(
        f"max_rel_err={report.max_rel_err:.3e} worst={report.worst_param}"
        f"{list(report.worst_index)} params={model.n_parameters()} checked={report.n_checked}"
    )
    if args.fail_above is not None and report.max_rel_err > args.fail_above:
        return 1
    return 0


def cmd_dump_sentences(run: _Run, args) -> int:
    from .corpus import build_documents

    if run.path("corpus").exists():
        records = run.load_corpus()
    else:
        records = run.load_raw_records()
    documents = build_documents(records, run.cfg["corpus"]["include_reviews"])
    lines = [f"{d.book_id}\t{s}" for d in documents for s in d.sentences]
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        print(f"documents={len(documents)} sentences={len(lines)}")
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "build-codebook": cmd_build_codebook,
    "train": cmd_train,
    "embed": cmd_embed,
    "recommend": cmd_recommend,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "dump-sentences": cmd_dump_sentences,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    from .errors import PipelineError

    try:
        run = _Run(args)
        return COMMANDS[args.command](run, args)
    except PipelineError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: FileNotFound: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
