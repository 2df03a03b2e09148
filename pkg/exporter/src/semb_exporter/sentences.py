"""Sentence extraction delegated to the pipeline CLI.

Splitting rules must stay bit-identical to what the pipeline embeds, so we
never reimplement them: ``multibert dump-sentences`` prints the exact
per-book sentences, and we parse its TAB-separated output.  The pipeline
package is only touched through that installed command.
"""

from __future__ import annotations

import json
import subprocess
import tempfile
from pathlib import Path

from .errors import SplitterError

SPLITTER_CLI = "multibert"


def corpus_book_ids(corpus: Path) -> list[str]:
    """Every book_id in file order (first occurrence wins).

    The corpus is line-delimited JSON; lines the pipeline would reject are
    skipped here too — only ids are needed, for skip reporting.
    """
    seen: dict[str, None] = {}
    with open(corpus, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                continue
            book_id = record.get("book_id") if isinstance(record, dict) else None
            if isinstance(book_id, str) and book_id and book_id not in seen:
                seen[book_id] = None
    return list(seen)


def dump_sentences(corpus: Path, cli: str = SPLITTER_CLI) -> dict[str, list[str]]:
    """book_id -> ordered sentences, exactly as the pipeline splits them."""
    if not corpus.exists():
        raise SplitterError(f"corpus not found: {corpus}")
    with tempfile.TemporaryDirectory(prefix="semb-export-") as tmp:
        config = Path(tmp) / "config.json"
        out = Path(tmp) / "sentences.tsv"
        config.write_text(
            json.dumps({"paths": {"books": str(corpus), "run_dir": str(Path(tmp) / "run")}}),
            encoding="utf-8",
        )
        argv = [cli, "--config", str(config), "dump-sentences", "--output", str(out)]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True)
        except FileNotFoundError as exc:
            raise SplitterError(f"sentence-dump command not found: {cli!r}") from exc
        if proc.returncode != 0:
            detail = proc.stderr.strip() or proc.stdout.strip() or "no output"
            raise SplitterError(f"{cli} dump-sentences failed ({proc.returncode}): {detail}")
        text = out.read_text(encoding="utf-8")

    by_book: dict[str, list[str]] = {}
    for n, line in enumerate(text.splitlines(), start=1):
        book_id, sep, sentence = line.partition("\t")
        if not sep or not book_id:
            raise SplitterError(f"unparsable sentence-dump line {n}: {line!r}")
        by_book.setdefault(book_id, []).append(sentence)
    return by_book
