"""Export job files: one JSON object describing a full export run.

Fields (``corpus``, ``model``, ``output`` required):

    corpus                      path to the book corpus (JSONL)
    model                       encoder identifier: a model-hub name or a
                                local directory saved by ``save_pretrained``
    revision                    pinned model revision; for local
                                directories this is the weight digest that
                                ``resolve_model`` reports (null = unpinned)
    output                      .semb file to write
    batch_size                  sentences per inference batch (default 32)
    device                      torch device selector (default "cpu")
    max_sentences_per_document  head-truncate longer books (null = keep all)
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import JobError

_REQUIRED = ("corpus", "model", "output")
_OPTIONAL = {
    "revision": None,
    "batch_size": 32,
    "device": "cpu",
    "max_sentences_per_document": None,
}


@dataclass(frozen=True)
class ExportJob:
    corpus: Path
    model: str
    output: Path
    revision: str | None = None
    batch_size: int = 32
    device: str = "cpu"
    max_sentences_per_document: int | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise JobError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_sentences_per_document is not None and self.max_sentences_per_document < 1:
            raise JobError(
                "max_sentences_per_document must be >= 1 or null, "
                f"got {self.max_sentences_per_document}"
            )

    @property
    def manifest_path(self) -> Path:
        return self.output.with_suffix(self.output.suffix + ".manifest.json")


def load_job(path: str | Path) -> ExportJob:
    path = Path(path)
    if not path.exists():
        raise JobError(f"job file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise JobError(f"job file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise JobError("job file must hold a JSON object")

    unknown = set(raw) - set(_REQUIRED) - set(_OPTIONAL)
    if unknown:
        raise JobError(f"unknown job fields: {', '.join(sorted(unknown))}")
    missing = [k for k in _REQUIRED if k not in raw]
    if missing:
        raise JobError(f"missing job fields: {', '.join(missing)}")

    merged = {**_OPTIONAL, **raw}
    return ExportJob(
        corpus=Path(merged["corpus"]),
        model=str(merged["model"]),
        output=Path(merged["output"]),
        revision=merged["revision"],
        batch_size=int(merged["batch_size"]),
        device=str(merged["device"]),
        max_sentences_per_document=merged["max_sentences_per_document"],
    )
