"""Genre-relevance benchmark: precision@k over ranked recommendations.

Books carry derived genre sets; a retrieved book counts as relevant when
its genre overlap with the query exceeds the threshold (strictly greater
than 0.4 by default).  Every model under test is packaged as an embedding
index over the same book ids, queried for max(ks) neighbors per eligible
query book, and scored with precision at each k.  The from-scratch TF-IDF
vectorizer and the mean-sentence-embedding baseline live here too.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .docvec import sentence_docvec
from .embedstore import SentenceEmbeddingSet
from .errors import ContractError, EmptyVocabularyError
from .retrieval import EmbeddingIndex, build_cluster_index, build_index, cluster_retrieve, top_k

RATIO_RULES = ("query-fraction", "jaccard", "overlap-coefficient")
MODEL_ROW_ORDER = ("multi-bert", "sbert-baseline", "tfidf")
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class RelevanceConfig:
    vocabulary: tuple[str, ...]
    threshold: float = 0.4
    rule: str = "query-fraction"

    def __post_init__(self):
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        if not self.vocabulary:
            raise ContractError("genre vocabulary must be nonempty")
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise ContractError("genre vocabulary contains duplicates")
        if not 0.0 < self.threshold <= 1.0:
            raise ContractError(f"threshold must be in (0, 1], got {self.threshold}")
        if self.rule not in RATIO_RULES:
            raise ContractError(f"unknown ratio rule '{self.rule}', expected one of {RATIO_RULES}")


def one_hot_genres(genres: Iterable[str], vocabulary: Sequence[str]) -> np.ndarray:
    """Binary vector with bit i set iff vocabulary[i] is in genres."""
    index = {g: i for i, g in enumerate(vocabulary)}
    vec = np.zeros(len(vocabulary), dtype=np.uint8)
    for g in genres:
        if g not in index:
            raise ContractError(f"genre '{g}' not in the configured vocabulary")
        vec[index[g]] = 1
    return vec


def is_relevant(query_genres, candidate_genres, cfg: RelevanceConfig) -> bool:
    """Overlap ratio strictly above the threshold, computed on the one-hot
    encodings.  The query-fraction rule divides the intersection by the
    query's genre count; jaccard by the union; overlap-coefficient by the
    smaller set."""
    q = one_hot_genres(query_genres, cfg.vocabulary)
    c = one_hot_genres(candidate_genres, cfg.vocabulary)
    n_q = int(q.sum())
    n_c = int(c.sum())
    if n_q == 0:
        raise ContractError("query genre set must be nonempty")
    inter = int(q @ c)
    if cfg.rule == "query-fraction":
        ratio = inter / n_q
    elif cfg.rule == "jaccard":
        ratio = inter / (n_q + n_c - inter)
    else:  # overlap-coefficient
        if n_c == 0:
            return False
        ratio = inter / min(n_q, n_c)
    return ratio > cfg.threshold


def precision_at_k(ranked_ids: Sequence[str], labels: Sequence[bool], k: int) -> float:
    """(relevant among the first k) / k; a list shorter than k still divides
    by k, so missing results count as irrelevant."""
    if k <= 0:
        raise ContractError(f"k must be positive, got {k}")
    if len(labels) != len(ranked_ids):
        raise ContractError(f"{len(labels)} labels for {len(ranked_ids)} ranked ids")
    return float(sum(bool(x) for x in labels[:k]) / k)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def tfidf_vectorize(texts: Sequence[str]) -> tuple[sp.csr_matrix, list[str]]:
    """From-scratch TF-IDF with L2-normalized rows.

    tf = term count / document token count; idf = ln((1+N)/(1+df)) + 1.
    Returns the (n_docs, n_terms) sparse weight matrix and the term list in
    column order (sorted alphabetically).
    """
    if not texts:
        raise ContractError("corpus of texts must be nonempty")
    token_lists = [tokenize(t) for t in texts]
    terms = sorted({tok for toks in token_lists for tok in toks})
    if not terms:
        raise EmptyVocabularyError("no terms survive tokenization in any document")
    col_of = {t: i for i, t in enumerate(terms)}

    df = np.zeros(len(terms), dtype=np.int64)
    for toks in token_lists:
        for t in set(toks):
            df[col_of[t]] += 1
    idf = np.log((1.0 + len(texts)) / (1.0 + df)) + 1.0

    rows, cols, vals = [], [], []
    for i, toks in enumerate(token_lists):
        if not toks:
            continue
        counts: dict[int, int] = {}
        for t in toks:
            counts[col_of[t]] = counts.get(col_of[t], 0) + 1
        for col, count in counts.items():
            rows.append(i)
            cols.append(col)
            vals.append((count / len(toks)) * idf[col])
    matrix = sp.csr_matrix(
        (np.array(vals, dtype=np.float64), (rows, cols)),
        shape=(len(texts), len(terms)),
    )
    norms = np.sqrt(np.asarray(matrix.multiply(matrix).sum(axis=1))).ravel()
    scale = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 0.0)
    matrix = sp.diags(scale) @ matrix
    return matrix.tocsr(), terms


def tfidf_index(book_ids: Sequence[str], texts: Sequence[str]) -> tuple[EmbeddingIndex, list[str]]:
    """TF-IDF rows densified into a retrieval index (row order = input order)."""
    matrix, terms = tfidf_vectorize(texts)
    return build_index(book_ids, matrix.toarray()), terms


def baseline_sentence_mean(embedding_sets: Sequence[SentenceEmbeddingSet]) -> EmbeddingIndex:
    """Mean sentence embedding per book, packaged as a retrieval index."""
    if not embedding_sets:
        raise ContractError("no embedding sets for the baseline index")
    rows = np.stack([sentence_docvec(s.vectors) for s in embedding_sets])
    return build_index([s.book_id for s in embedding_sets], rows)


@dataclass
class EvalReport:
    precisions: dict[str, dict[int, float]]
    details: list[dict]
    n_books: int
    n_queries: int
    n_skipped: int
    genre_vocabulary_size: int
    mode: str
    ks: tuple[int, ...]
    cluster_recall: dict[str, float] | None = None


def run_benchmark(
    records,
    indexes: Mapping[str, EmbeddingIndex],
    cfg: RelevanceConfig,
    ks: Sequence[int] = (5, 10, 25),
    *,
    mode: str = "cosine",
    n_clusters: int | None = None,
    seed: int = 0,
) -> EvalReport:
    """Precision@k for every model over every eligible query book.

    Eligible queries have at least one genre and a nonzero vector in every
    index (others are counted as skipped).  Each model retrieves max(ks)
    candidates per query — by exact cosine scan, or cluster-restricted when
    mode="cluster", in which case per-model recall against the exact scan is
    measured as well.  Reported averages are computed from the per-query
    detail rows.
    """
    if mode not in ("cosine", "cluster"):
        raise ContractError(f"unknown retrieval mode '{mode}'")
    if not indexes:
        raise ContractError("no model indexes supplied")
    ks = tuple(sorted(int(k) for k in ks))
    kmax = max(ks)

    names = list(indexes)
    id_set = set(indexes[names[0]].book_ids)
    for name in names[1:]:
        if set(indexes[name].book_ids) != id_set:
            raise ContractError(f"index '{name}' covers different book ids than '{names[0]}'")
    if len(id_set) < kmax + 1:
        raise ContractError(f"need at least {kmax + 1} books to evaluate P@{kmax}")

    genres_of = {r.book_id: frozenset(r.genres) for r in records}
    missing = id_set - set(genres_of)
    if missing:
        raise ContractError(f"{len(missing)} indexed books missing from the corpus records")

    query_indexes = indexes
    exact_indexes = indexes
    if mode == "cluster":
        query_indexes = {
            name: build_cluster_index(ix, n_clusters, seed=seed) for name, ix in indexes.items()
        }

    ordered_ids = indexes[names[0]].book_ids
    eligible = []
    n_skipped = 0
    for bid in ordered_ids:
        nonzero = all(ix.norms[ix.row(bid)] > 0.0 for ix in indexes.values())
        if genres_of[bid] and nonzero:
            eligible.append(bid)
        else:
            n_skipped += 1

    details: list[dict] = []
    recall_sums = {name: 0.0 for name in names}
    for bid in eligible:
        for name in names:
            if mode == "cluster":
                results = cluster_retrieve(query_indexes[name], bid, kmax)
                exact = top_k(exact_indexes[name], bid, kmax)
                exact_ids = {r[0] for r in exact}
                got = {r[0] for r in results}
                recall_sums[name] += len(got & exact_ids) / max(1, len(exact_ids))
            else:
                results = top_k(query_indexes[name], bid, kmax)
            ranked_ids = [r[0] for r in results]
            labels = [is_relevant(genres_of[bid], genres_of[cid], cfg) for cid in ranked_ids]
            for k in ks:
                details.append(
                    {
                        "query_id": bid,
                        "model": name,
                        "k": k,
                        "precision": precision_at_k(ranked_ids, labels, k),
                        "retrieved": ranked_ids[:k],
                    }
                )

    precisions: dict[str, dict[int, float]] = {name: {} for name in names}
    for name in names:
        for k in ks:
            rows = [d["precision"] for d in details if d["model"] == name and d["k"] == k]
            precisions[name][k] = float(np.mean(rows)) if rows else float("nan")

    recall = None
    if mode == "cluster" and eligible:
        recall = {name: recall_sums[name] / len(eligible) for name in names}
    return EvalReport(
        precisions=precisions,
        details=details,
        n_books=len(id_set),
        n_queries=len(eligible),
        n_skipped=n_skipped,
        genre_vocabulary_size=len(cfg.vocabulary),
        mode=mode,
        ks=ks,
        cluster_recall=recall,
    )


def _row_order(names: Iterable[str]) -> list[str]:
    names = set(names)
    ordered = [n for n in MODEL_ROW_ORDER if n in names]
    ordered += sorted(names - set(ordered))
    return ordered


def format_report(report: EvalReport) -> str:
    """Aligned text table: one row per model, one precision column per k."""
    headers = ["model"] + [f"P@{k}" for k in report.ks]
    rows = [
        [name] + [f"{report.precisions[name][k]:.4f}" for k in report.ks]
        for name in _row_order(report.precisions)
    ]
    widths = [max(len(r[c]) for r in [headers] + rows) for c in range(len(headers))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(r, widths)).rstrip() for r in [headers] + rows]
    summary = (
        f"books: {report.n_books}  queries: {report.n_queries}  "
        f"skipped: {report.n_skipped}  genres: {report.genre_vocabulary_size}  "
        f"mode: {report.mode}"
    )
    lines.append(summary)
    if report.cluster_recall is not None:
        for name in _row_order(report.cluster_recall):
            lines.append(f"recall[{name}]: {report.cluster_recall[name]:.4f}")
    return "\n".join(lines) + "\n"


def write_details(report: EvalReport, path) -> None:
    """Per-query detail rows as line-delimited JSON with sorted keys."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in report.details:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
