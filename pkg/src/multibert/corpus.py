"""Book corpus ingestion: load, merge, clean, sentence-split, genre labels.

The corpus lives in line-delimited JSON (one object per line, UTF-8), the
same shape the public Goodreads dumps ship in.  All functions here are pure:
they take immutable inputs and return new values, so they are safe to call
from multiple threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError, EmptyCorpusError

# Fields that may legitimately be null/missing in raw dumps and get filled
# by fill_defaults.  Everything else missing makes the line malformed.
NULLABLE_FIELDS = ("description", "language_code", "average_rating")

# Token must match exactly (case-sensitive) to suppress a sentence split.
ABBREVIATIONS = frozenset({"Mr.", "Mrs.", "Dr.", "St.", "vs."})

TERMINALS = frozenset(".!?")


@dataclass(frozen=True)
class BookRecord:
    """One merged book item with metadata, text, and derived genre labels."""

    book_id: str
    title: str
    description: str | None
    authors: tuple[str, ...]
    language_code: str | None
    is_ebook: bool
    average_rating: float | None
    ratings_count: int
    shelves: tuple[tuple[str, int], ...]
    reviews: tuple[str, ...] = ()
    genres: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Review:
    book_id: str
    text: str
    rating: float
    n_votes: int


@dataclass(frozen=True)
class Document:
    """A book reduced to its ordered, nonempty sentences."""

    book_id: str
    sentences: tuple[str, ...]


@dataclass(frozen=True)
class LoadResult:
    """Records in file order plus the count of malformed/duplicate lines."""

    records: list
    skipped: int


def _parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no", ""):
            return False
    if isinstance(value, int):
        return bool(value)
    raise ValueError(f"not a boolean: {value!r}")


def _parse_shelves(raw) -> tuple[tuple[str, int], ...]:
    shelves = []
    for entry in raw:
        name = str(entry["name"])
        count = int(entry["count"])
        if count < 0:
            raise ValueError(f"negative shelf count for {name!r}")
        shelves.append((name, count))
    return tuple(shelves)


def _parse_book(obj: dict) -> BookRecord:
    """Build a BookRecord from one decoded JSON object.

    Raises KeyError/ValueError/TypeError for anything malformed; the caller
    turns those into a skip.
    """
    book_id = str(obj["book_id"]).strip()
    if not book_id:
        raise ValueError("empty book_id")

    description = obj.get("description")
    if description is not None:
        description = str(description)

    language_code = obj.get("language_code")
    if language_code is not None:
        language_code = str(language_code)

    average_rating = obj.get("average_rating")
    if average_rating is not None and average_rating != "":
        average_rating = float(average_rating)
        if not 0.0 <= average_rating <= 5.0:
            raise ValueError(f"average_rating out of range: {average_rating}")
    else:
        average_rating = None

    ratings_count = int(obj["ratings_count"])
    if ratings_count < 0:
        raise ValueError(f"negative ratings_count: {ratings_count}")

    authors = obj["authors"]
    if isinstance(authors, str):
        authors = [authors]
    authors = tuple(str(a) for a in authors)

    return BookRecord(
        book_id=book_id,
        title=str(obj["title"]),
        description=description,
        authors=authors,
        language_code=language_code,
        is_ebook=_parse_bool(obj["is_ebook"]),
        average_rating=average_rating,
        ratings_count=ratings_count,
        shelves=_parse_shelves(obj["popular_shelves"]),
        reviews=tuple(str(r) for r in obj.get("reviews", ())),
        genres=frozenset(str(g) for g in obj.get("genres", ())),
    )


def load_books(path: str | Path) -> LoadResult:
    """Read a line-delimited book file, skipping malformed lines.

    A line is malformed when it is not valid JSON, lacks a required field,
    or carries an invariant-violating value (empty book_id, negative counts,
    rating outside [0, 5]).  A repeated book_id is skipped too so ids stay
    unique within the corpus.  Raises EmptyCorpusError when nothing at all
    parses; lets OSError propagate for unreadable paths.
    """
    records: list[BookRecord] = []
    seen: set[str] = set()
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                record = _parse_book(json.loads(line))
            except (json.JSONDecodeError, KeyError, ValueError, TypeError):
                skipped += 1
                continue
            if record.book_id in seen:
                skipped += 1
                continue
            seen.add(record.book_id)
            records.append(record)
    if not records:
        raise EmptyCorpusError(f"no well-formed records in {path}")
    return LoadResult(records=records, skipped=skipped)


def load_reviews(path: str | Path) -> tuple[list[Review], int]:
    """Read a line-delimited review file; returns (reviews, skipped count)."""
    reviews: list[Review] = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                reviews.append(
                    Review(
                        book_id=str(obj["book_id"]),
                        text=str(obj["review_text"]),
                        rating=float(obj["rating"]),
                        n_votes=int(obj["n_votes"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, ValueError, TypeError):
                skipped += 1
    return reviews, skipped


@dataclass(frozen=True)
class MergeResult:
    records: list
    orphans: int


def merge_reviews(books: list[BookRecord], reviews: list[Review]) -> MergeResult:
    """Attach review texts to their books by book_id.

    Matched reviews are appended after any reviews already on the record, in
    input order, which makes re-merging an already merged corpus with an
    empty review list a no-op.  Reviews whose book_id matches no book are
    counted as orphans and dropped.
    """
    by_book: dict[str, list[str]] = {b.book_id: [] for b in books}
    orphans = 0
    for review in reviews:
        if review.book_id in by_book:
            by_book[review.book_id].append(review.text)
        else:
            orphans += 1
    merged = [
        replace(b, reviews=b.reviews + tuple(by_book[b.book_id])) for b in books
    ]
    return MergeResult(records=merged, orphans=orphans)


def fill_defaults(records: list[BookRecord], defaults: dict) -> list[BookRecord]:
    """Replace null fields with configured defaults.

    Only the documented nullable fields are eligible.  A null field with no
    configured default raises ConfigError; present fields are untouched.
    """
    filled = []
    for record in records:
        updates = {}
        for name in NULLABLE_FIELDS:
            if getattr(record, name) is None:
                if name not in defaults:
                    raise ConfigError(
                        f"book {record.book_id}: field {name!r} is null and no "
                        f"default is configured"
                    )
                updates[name] = defaults[name]
        filled.append(replace(record, **updates) if updates else record)
    return filled


def split_sentences(text: str) -> list[str]:
    """Deterministic rule-based sentence segmentation.

    Whitespace runs are collapsed to single spaces, then the text is split
    after '.', '!' or '?' whenever the mark is followed by a space and an
    uppercase letter, or ends the text.  A '.' closing one of the tokens in
    ABBREVIATIONS never splits.  Never returns empty sentences.
    """
    normalized = " ".join(text.split())
    if not normalized:
        return []

    sentences = []
    start = 0
    for i, ch in enumerate(normalized):
        if ch not in TERMINALS:
            continue
        at_end = i == len(normalized) - 1
        if not at_end:
            if normalized[i + 1] != " " or i + 2 >= len(normalized):
                continue
            if not normalized[i + 2].isupper():
                continue
            if ch == ".":
                space = normalized.rfind(" ", start, i)
                token_start = space + 1 if space != -1 else start
                if normalized[token_start : i + 1] in ABBREVIATIONS:
                    continue
        sentences.append(normalized[start : i + 1])
        start = i + 2
    if start < len(normalized):
        sentences.append(normalized[start:])
    return sentences


def derive_genres(
    record: BookRecord, vocabulary: set[str] | frozenset[str], min_count: int = 1
) -> frozenset[str]:
    """Genres = lowercase shelf names found in the vocabulary with enough votes."""
    if not vocabulary:
        raise ConfigError("genre vocabulary is empty")
    return frozenset(
        name.lower()
        for name, count in record.shelves
        if name.lower() in vocabulary and count >= min_count
    )


def build_documents(
    records: list[BookRecord], include_reviews: bool = False
) -> list[Document]:
    """Sentence-split each book's text; books with no sentences are dropped.

    The embedded text is the description; reviews are appended when the
    corpus switch asks for them.
    """
    documents = []
    for record in records:
        text = record.description or ""
        if include_reviews and record.reviews:
            text = " ".join([text, *record.reviews]) if text else " ".join(record.reviews)
        sentences = split_sentences(text)
        if sentences:
            documents.append(Document(book_id=record.book_id, sentences=tuple(sentences)))
    return documents


def record_to_json(record: BookRecord) -> str:
    """Canonical single-line JSON for one record (stable key order)."""
    obj = {
        "book_id": record.book_id,
        "title": record.title,
        "description": record.description,
        "authors": list(record.authors),
        "language_code": record.language_code,
        "is_ebook": record.is_ebook,
        "average_rating": record.average_rating,
        "ratings_count": record.ratings_count,
        "popular_shelves": [
            {"name": name, "count": count} for name, count in record.shelves
        ],
        "reviews": list(record.reviews),
        "genres": sorted(record.genres),
    }
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def write_corpus(records: list[BookRecord], path: str | Path) -> None:
    """Write a merged corpus file, one canonical JSON object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record_to_json(record))
            fh.write("\n")
