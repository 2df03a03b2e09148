"""Seeded synthetic book corpora with recoverable genre structure.

Each book is assigned one genre round-robin; its description is built from
a genre-specific invented vocabulary (so lexical methods can see the genre)
and its shelf list carries the genre name (so genre derivation recovers it).
Paired with the genre-correlated synthetic embeddings, this yields corpora
where relevance is recoverable by construction — the substrate for the
end-to-end benchmark checks.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .corpus import BookRecord, split_sentences
from .embedstore import SentenceEmbeddingSet, correlated_embed, synthetic_embed
from .errors import ConfigError

_SYLLABLES = (
    "ba", "be", "bi", "bo", "bu", "da", "de", "di", "do", "du",
    "ka", "ke", "ki", "ko", "ku", "la", "le", "li", "lo", "lu",
    "ma", "me", "mi", "mo", "mu", "na", "ne", "ni", "no", "nu",
    "ra", "re", "ri", "ro", "ru", "sa", "se", "si", "so", "su",
    "ta", "te", "ti", "to", "tu", "va", "ve", "vi", "vo", "vu",
)
_FUNCTION_WORDS = ("the", "a", "and", "of", "in")


def _genre_words(genre: str, seed: int, n_words: int = 40) -> list[str]:
    digest = hashlib.sha256(genre.encode("utf-8")).digest()
    rng = np.random.default_rng([seed, int.from_bytes(digest[:4], "little"), 7])
    words = set()
    while len(words) < n_words:
        n_syl = int(rng.integers(2, 4))
        words.add("".join(_SYLLABLES[int(i)] for i in rng.integers(0, len(_SYLLABLES), n_syl)))
    return sorted(words)


def generate_corpus(
    n_books: int,
    genres: tuple[str, ...] = ("fantasy", "adventure", "mystery", "romance", "science"),
    *,
    seed: int = 0,
    sentences_per_book: tuple[int, int] = (4, 8),
    words_per_sentence: tuple[int, int] = (5, 9),
) -> list[BookRecord]:
    """Generate n_books records, genres assigned round-robin.

    Deterministic per (n_books, genres, seed).  Every description sentence
    draws its content words from the book's genre vocabulary; shelves are
    [(genre, 10), ("to-read", 100)] so a vocabulary of the given genres with
    min count 1 derives exactly the generating genre.
    """
    if n_books < 1:
        raise ConfigError(f"n_books must be >= 1, got {n_books}")
    if not genres:
        raise ConfigError("need at least one genre")
    rng = np.random.default_rng(seed)
    pools = {g: _genre_words(g, seed) for g in genres}
    records = []
    for i in range(n_books):
        genre = genres[i % len(genres)]
        pool = pools[genre]
        n_sent = int(rng.integers(sentences_per_book[0], sentences_per_book[1] + 1))
        sentences = []
        for _ in range(n_sent):
            n_words = int(rng.integers(words_per_sentence[0], words_per_sentence[1] + 1))
            words = []
            for w in range(n_words):
                if w % 3 == 2:
                    words.append(_FUNCTION_WORDS[int(rng.integers(0, len(_FUNCTION_WORDS)))])
                else:
                    words.append(pool[int(rng.integers(0, len(pool)))])
            sentences.append(" ".join(words).capitalize() + ".")
        title_words = [pool[int(j)] for j in rng.integers(0, len(pool), 2)]
        records.append(
            BookRecord(
                book_id=f"s{i:04d}",
                title=" ".join(title_words).title(),
                description=" ".join(sentences),
                authors=(f"Author {genre.title()}",),
                language_code="eng",
                is_ebook=bool(i % 2),
                average_rating=round(float(rng.uniform(2.5, 5.0)), 2),
                ratings_count=int(rng.integers(1, 5000)),
                shelves=((genre, 10), ("to-read", 100)),
                reviews=(),
                genres=frozenset({genre}),
            )
        )
    return records


def embed_records(
    records,
    dim: int,
    seed: int,
    *,
    correlated: bool = True,
    noise: float = 0.1,
) -> list[SentenceEmbeddingSet]:
    """Synthetic sentence embeddings for every record with a nonempty
    description.  In correlated mode a book's sentences share the unit base
    vector of its (first, alphabetically) genre."""
    sets = []
    for record in records:
        sentences = split_sentences(record.description or "")
        if not sentences:
            continue
        if correlated:
            genre = min(record.genres) if record.genres else ""
            vecs = [correlated_embed(s, genre, dim, seed, noise=noise) for s in sentences]
        else:
            vecs = [synthetic_embed(s, dim, seed) for s in sentences]
        sets.append(
            SentenceEmbeddingSet(book_id=record.book_id, dim=dim, vectors=np.stack(vecs))
        )
    return sets
