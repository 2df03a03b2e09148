"""Binary checkpoint format for the encoder (.mbrt files).

Layout, all little-endian:

    magic  b"MBRT"
    u32    format version (1)
    u32    vocab_size, u32 hidden_size, u32 n_layers, u32 n_heads,
    u32    ffn_size, u32 max_positions, f32 dropout, u32 seed
    u32    tensor count
    then per tensor, in canonical parameter order:
    u32    name length, utf-8 name bytes,
    u32    rank, u32 * rank dims, float32 data row-major

Weights are stored as float32 regardless of the in-memory dtype, and the
writer emits tensors in canonical order, so the same parameters always
produce byte-identical files.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .model import EncoderConfig, EncoderModel, parameter_names, parameter_shapes

MAGIC = b"MBRT"
VERSION = 1


def save_checkpoint(path, model: EncoderModel) -> None:
    cfg = model.config
    names = parameter_names(cfg)
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    blob += struct.pack(
        "<IIIIIIfI",
        cfg.vocab_size,
        cfg.hidden_size,
        cfg.n_layers,
        cfg.n_heads,
        cfg.ffn_size,
        cfg.max_positions,
        cfg.dropout,
        cfg.seed,
    )
    blob += struct.pack("<I", len(names))
    for name in names:
        data = np.ascontiguousarray(model.params[name], dtype=np.float32)
        encoded = name.encode("utf-8")
        blob += struct.pack("<I", len(encoded))
        blob += encoded
        blob += struct.pack("<I", data.ndim)
        blob += struct.pack(f"<{data.ndim}I", *data.shape)
        blob += data.tobytes(order="C")
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path) -> EncoderModel:
    raw = Path(path).read_bytes()
    offset = 0

    def take(n: int, what: str) -> bytes:
        nonlocal offset
        if offset + n > len(raw):
            raise FormatError(f"truncated checkpoint: reading {what} at byte {offset}")
        chunk = raw[offset : offset + n]
        offset += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise FormatError(f"not a checkpoint file: bad magic in {path}")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    vocab, hidden, layers, heads, ffn, positions, dropout, seed = struct.unpack(
        "<IIIIIIfI", take(32, "config")
    )
    config = EncoderConfig(
        vocab_size=vocab,
        hidden_size=hidden,
        n_layers=layers,
        n_heads=heads,
        ffn_size=ffn,
        max_positions=positions,
        dropout=float(dropout),
        seed=seed,
    )
    expected_names = parameter_names(config)
    expected_shapes = parameter_shapes(config)

    (count,) = struct.unpack("<I", take(4, "tensor count"))
    if count != len(expected_names):
        raise FormatError(f"expected {len(expected_names)} tensors, file declares {count}")
    params: dict[str, np.ndarray] = {}
    for expected in expected_names:
        (name_len,) = struct.unpack("<I", take(4, "tensor name length"))
        name = take(name_len, "tensor name").decode("utf-8")
        if name != expected:
            raise FormatError(f"tensor order mismatch: expected '{expected}', found '{name}'")
        (rank,) = struct.unpack("<I", take(4, "tensor rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "tensor dims"))
        if dims != expected_shapes[expected]:
            raise FormatError(
                f"tensor '{name}' has shape {dims}, expected {expected_shapes[expected]}"
            )
        size = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(take(4 * size, f"tensor '{name}' data"), dtype="<f4")
        params[name] = data.reshape(dims).copy()
    if offset != len(raw):
        raise FormatError(f"{len(raw) - offset} trailing bytes after last tensor")
    return EncoderModel(config=config, params=params, dtype=np.dtype(np.float32))


def write_loss_history(path, history: list[float], *, append: bool = False) -> None:
    """Write per-epoch losses as 'epoch<TAB>loss' lines, numbering epochs from
    1; with append=True numbering continues from the existing file."""
    path = Path(path)
    start = 0
    if append and path.exists():
        start = sum(1 for line in path.read_text(encoding="utf-8").splitlines() if line.strip())
    lines = [f"{start + i + 1}\t{loss:.17g}" for i, loss in enumerate(history)]
    text = "\n".join(lines) + ("\n" if lines else "")
    if append and path.exists():
        with path.open("a", encoding="utf-8") as fh:
            fh.write(text)
    else:
        path.write_text(text, encoding="utf-8")


def read_loss_history(path) -> list[float]:
    losses = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        epoch, loss = line.split("\t")
        losses.append(float(loss))
    return losses
