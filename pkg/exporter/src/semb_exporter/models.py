"""Sentence-encoder resolution and batched inference.

A model identifier is either a local directory produced by
``save_pretrained`` or a model-hub name; both load through the same
``transformers`` call.  Sentence vectors are attention-masked mean pooling
over the final hidden states — the standard sentence-encoder recipe — and
are returned exactly as pooled, unnormalized.

Local directories get a content-addressed revision: the SHA-256 over the
directory's files.  Pinning that digest in the job file makes "same
revision, same bytes" checkable with no registry involved.
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np

from .errors import ModelResolutionError


def directory_digest(path: Path) -> str:
    """SHA-256 over file names and contents, walk order fixed by sorting."""
    h = hashlib.sha256()
    for file in sorted(p for p in path.rglob("*") if p.is_file()):
        h.update(file.relative_to(path).as_posix().encode("utf-8"))
        h.update(b"\0")
        h.update(file.read_bytes())
    return h.hexdigest()


class EncoderHandle:
    """A loaded encoder plus everything the manifest needs to cite it."""

    def __init__(self, identifier: str, revision: str, tokenizer, model, device: str):
        self.identifier = identifier
        self.revision = revision
        self.tokenizer = tokenizer
        self.model = model
        self.device = device
        self.dim = int(model.config.hidden_size)

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        """(len(texts), dim) float32 mean-pooled vectors."""
        import torch

        encoded = self.tokenizer(
            texts,
            padding=True,
            truncation=True,
            max_length=self.model.config.max_position_embeddings,
            return_tensors="pt",
        ).to(self.device)
        with torch.no_grad():
            hidden = self.model(**encoded).last_hidden_state
        mask = encoded["attention_mask"].unsqueeze(-1).to(hidden.dtype)
        pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)
        return pooled.cpu().numpy().astype(np.float32)


def resolve_model(identifier: str, revision: str | None, device: str = "cpu") -> EncoderHandle:
    """Load the encoder behind an identifier, enforcing any pinned revision.

    Local paths resolve to their directory digest; hub names pass the
    revision through to the hub client.  Unresolvable identifiers, digest
    mismatches, and unavailable devices all raise ModelResolutionError.
    """
    looks_local = os.sep in identifier or identifier.startswith(".")
    path = Path(identifier)
    if looks_local and not path.is_dir():
        raise ModelResolutionError(f"model directory not found: {identifier}")

    try:
        from transformers import AutoModel, AutoTokenizer
    except ImportError as exc:  # pragma: no cover - dependency is declared
        raise ModelResolutionError(f"transformers is not importable: {exc}") from exc

    if path.is_dir():
        resolved = directory_digest(path)
        if revision is not None and revision != resolved:
            raise ModelResolutionError(
                f"revision mismatch for {identifier}: pinned {revision}, found {resolved}"
            )
        source_kwargs = {"local_files_only": True}
    else:
        resolved = revision or "main"
        source_kwargs = {"revision": revision} if revision else {}

    try:
        tokenizer = AutoTokenizer.from_pretrained(identifier, **source_kwargs)
        model = AutoModel.from_pretrained(identifier, **source_kwargs)
    except Exception as exc:
        raise ModelResolutionError(f"cannot load model {identifier!r}: {exc}") from exc

    import torch

    try:
        model = model.to(torch.device(device))
    except (RuntimeError, ValueError) as exc:
        raise ModelResolutionError(f"device {device!r} unavailable: {exc}") from exc
    model.eval()
    return EncoderHandle(identifier, resolved, tokenizer, model, device)


def create_reference_model(path: str | Path, *, hidden_size: int = 32, seed: int = 0) -> str:
    """Save a tiny deterministic BERT encoder under ``path``; returns its digest.

    Character-level WordPiece vocabulary plus seeded weights make a fully
    offline stand-in with real tokenizer/attention behavior.  Useful for
    tests and air-gapped runs; any hub checkpoint works the same way.
    """
    import torch
    from transformers import BertConfig, BertModel, BertTokenizerFast

    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    specials = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    letters = [chr(c) for c in range(ord("a"), ord("z") + 1)]
    digits = [str(d) for d in range(10)]
    pieces = letters + digits
    vocab = specials + pieces + [f"##{p}" for p in pieces] + [".", ",", "'", "-"]
    (path / "vocab.txt").write_text("\n".join(vocab) + "\n", encoding="utf-8")
    tokenizer = BertTokenizerFast(str(path / "vocab.txt"), do_lower_case=True)
    tokenizer.model_max_length = 256
    tokenizer.save_pretrained(path)

    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=hidden_size,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=hidden_size * 4,
        max_position_embeddings=256,
    )
    torch.manual_seed(seed)
    model = BertModel(config)
    model.eval()
    model.save_pretrained(path)
    return directory_digest(path)
