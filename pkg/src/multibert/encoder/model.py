"""Transformer encoder over the cluster-token vocabulary, in plain numpy.

Post-layer-norm encoder: learned token + position embeddings, then per layer
multi-head self-attention (scaled dot-product, PAD keys masked to -inf
before softmax) with residual and layer-norm, and a GELU feed-forward with
residual and layer-norm; a final layer-norm feeds the logits, which are the
hidden states times the transposed token-embedding table (tied weights).

Both the forward pass and the analytic backward pass are written out by
hand so gradients can be validated against finite differences and training
stays bit-for-bit reproducible.  Training math runs in float32; the model
is dtype-generic so the gradient-check harness can run it in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from ..errors import ConfigError, ContractError

LN_EPS = 1e-5


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    hidden_size: int
    n_layers: int = 6
    n_heads: int = 12
    ffn_size: int | None = None
    max_positions: int = 512
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.ffn_size is None:
            object.__setattr__(self, "ffn_size", 4 * self.hidden_size)
        if self.vocab_size < 5:
            raise ConfigError(f"vocab_size must be >= 5, got {self.vocab_size}")
        if self.max_positions < 2:
            raise ConfigError(f"max_positions must be >= 2, got {self.max_positions}")
        if self.hidden_size % self.n_heads != 0:
            raise ConfigError(
                f"hidden_size {self.hidden_size} not divisible by n_heads {self.n_heads}"
            )
        if self.n_layers < 1 or self.ffn_size < 1:
            raise ConfigError("n_layers and ffn_size must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if not 0 <= self.seed < 2**32:
            raise ConfigError("seed must fit in an unsigned 32-bit integer")


def parameter_names(config: EncoderConfig) -> list[str]:
    """Canonical parameter order; initialization, Adam, and checkpoints all
    walk parameters in this order."""
    names = ["tok_emb", "pos_emb"]
    for i in range(config.n_layers):
        prefix = f"layers.{i}"
        names += [
            f"{prefix}.attn.wq",
            f"{prefix}.attn.bq",
            f"{prefix}.attn.wk",
            f"{prefix}.attn.bk",
            f"{prefix}.attn.wv",
            f"{prefix}.attn.bv",
            f"{prefix}.attn.wo",
            f"{prefix}.attn.bo",
            f"{prefix}.ln1.gain",
            f"{prefix}.ln1.bias",
            f"{prefix}.ffn.w1",
            f"{prefix}.ffn.b1",
            f"{prefix}.ffn.w2",
            f"{prefix}.ffn.b2",
            f"{prefix}.ln2.gain",
            f"{prefix}.ln2.bias",
        ]
    names += ["final_ln.gain", "final_ln.bias"]
    return names


def parameter_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    V, H, F, P = config.vocab_size, config.hidden_size, config.ffn_size, config.max_positions
    shapes: dict[str, tuple[int, ...]] = {"tok_emb": (V, H), "pos_emb": (P, H)}
    for i in range(config.n_layers):
        prefix = f"layers.{i}"
        for proj in ("wq", "wk", "wv", "wo"):
            shapes[f"{prefix}.attn.{proj}"] = (H, H)
        for bias in ("bq", "bk", "bv", "bo"):
            shapes[f"{prefix}.attn.{bias}"] = (H,)
        shapes[f"{prefix}.ln1.gain"] = (H,)
        shapes[f"{prefix}.ln1.bias"] = (H,)
        shapes[f"{prefix}.ffn.w1"] = (H, F)
        shapes[f"{prefix}.ffn.b1"] = (F,)
        shapes[f"{prefix}.ffn.w2"] = (F, H)
        shapes[f"{prefix}.ffn.b2"] = (H,)
        shapes[f"{prefix}.ln2.gain"] = (H,)
        shapes[f"{prefix}.ln2.bias"] = (H,)
    shapes["final_ln.gain"] = (H,)
    shapes["final_ln.bias"] = (H,)
    return shapes


@dataclass(eq=False)
class EncoderModel:
    config: EncoderConfig
    params: dict[str, np.ndarray]
    dtype: np.dtype = field(default=np.dtype(np.float32))

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def astype(self, dtype) -> "EncoderModel":
        dtype = np.dtype(dtype)
        return EncoderModel(
            config=self.config,
            params={k: v.astype(dtype) for k, v in self.params.items()},
            dtype=dtype,
        )


def init_model(config: EncoderConfig, dtype=np.float32) -> EncoderModel:
    """Seeded initialization: weight matrices N(0, 0.02), every bias zero,
    layer-norm gains one.  Draws happen in canonical parameter order, so the
    same config always yields bit-identical parameters."""
    rng = np.random.default_rng(config.seed)
    dtype = np.dtype(dtype)
    shapes = parameter_shapes(config)
    params: dict[str, np.ndarray] = {}
    for name in parameter_names(config):
        shape = shapes[name]
        if name.endswith(".gain"):
            params[name] = np.ones(shape, dtype=dtype)
        elif name.endswith(".bias") or len(shape) == 1:
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            params[name] = rng.normal(0.0, 0.02, size=shape).astype(dtype)
    return EncoderModel(config=config, params=params, dtype=dtype)


def _erf(arg: np.ndarray) -> np.ndarray:
    # scipy's erf tops out at float64; for wider floats evaluate there and
    # let promotion keep the surrounding arithmetic in the wide dtype.
    if arg.dtype.itemsize > 8:
        return erf(arg.astype(np.float64))
    return erf(arg)


def gelu(u: np.ndarray) -> np.ndarray:
    return 0.5 * u * (1.0 + _erf(u / np.sqrt(2.0, dtype=u.dtype)))


def gelu_grad(u: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + _erf(u / np.sqrt(2.0, dtype=u.dtype)))
    pdf = np.exp(-0.5 * u * u) / np.sqrt(2.0 * np.pi).astype(u.dtype)
    return cdf + u * pdf


def _layer_norm(x, gain, bias):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(LN_EPS, dtype=x.dtype))
    xhat = xc * inv
    return gain * xhat + bias, (xhat, inv)


def _layer_norm_backward(dy, cache, gain):
    xhat, inv = cache
    dgain = (dy * xhat).sum(axis=(0, 1))
    dbias = dy.sum(axis=(0, 1))
    dxhat = dy * gain
    mean_dxhat = dxhat.mean(axis=-1, keepdims=True)
    mean_dxhat_xhat = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)
    return dx, dgain, dbias


def _split_heads(x, n_heads):
    B, L, H = x.shape
    return x.reshape(B, L, n_heads, H // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, nh, L, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, L, nh * dh)


def _softmax_last(scores):
    m = scores.max(axis=-1, keepdims=True)
    e = np.exp(scores - m)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model: EncoderModel, tokens, mask, *, return_details: bool = False):
    """Run the encoder on a padded batch.

    tokens: (B, L) int ids; mask: (B, L) with 1.0 on real tokens, 0.0 on PAD.
    Returns (hidden, logits); hidden is the final-layer-norm output
    (B, L, H), logits (B, L, V) via the tied embedding.  With
    return_details=True also returns the per-layer attention tensors and the
    backward cache.
    """
    cfg = model.config
    p = model.params
    tokens = np.asarray(tokens)
    mask = np.asarray(mask, dtype=model.dtype)
    if tokens.ndim != 2 or mask.shape != tokens.shape:
        raise ContractError("tokens and mask must be matching (B, L) arrays")
    B, L = tokens.shape
    if L > cfg.max_positions:
        raise ContractError(f"sequence length {L} exceeds max_positions {cfg.max_positions}")
    if tokens.min() < 0 or tokens.max() >= cfg.vocab_size:
        raise ContractError(
            f"token id out of range [0, {cfg.vocab_size}): "
            f"min {tokens.min()}, max {tokens.max()}"
        )

    scale = np.asarray(1.0 / math.sqrt(cfg.hidden_size // cfg.n_heads), dtype=model.dtype)
    neg_inf = np.asarray(-np.inf, dtype=model.dtype)
    key_mask = mask[:, None, None, :] > 0  # (B,1,1,L) on the key axis

    x = p["tok_emb"][tokens] + p["pos_emb"][:L][None, :, :]
    cache: dict = {"tokens": tokens, "mask": mask, "layers": []}
    attentions = []

    for i in range(cfg.n_layers):
        prefix = f"layers.{i}"
        lc: dict = {"x_in": x}

        q = x @ p[f"{prefix}.attn.wq"] + p[f"{prefix}.attn.bq"]
        k = x @ p[f"{prefix}.attn.wk"] + p[f"{prefix}.attn.bk"]
        v = x @ p[f"{prefix}.attn.wv"] + p[f"{prefix}.attn.bv"]
        qh, kh, vh = (_split_heads(t, cfg.n_heads) for t in (q, k, v))
        scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
        scores = np.where(key_mask, scores, neg_inf)
        probs = _softmax_last(scores)
        ctx = _merge_heads(probs @ vh)
        a = ctx @ p[f"{prefix}.attn.wo"] + p[f"{prefix}.attn.bo"]
        lc.update(qh=qh, kh=kh, vh=vh, probs=probs, ctx=ctx)
        attentions.append(probs)

        r1 = x + a
        x1, lc["ln1"] = _layer_norm(r1, p[f"{prefix}.ln1.gain"], p[f"{prefix}.ln1.bias"])
        lc["x1"] = x1

        u = x1 @ p[f"{prefix}.ffn.w1"] + p[f"{prefix}.ffn.b1"]
        g = gelu(u)
        f = g @ p[f"{prefix}.ffn.w2"] + p[f"{prefix}.ffn.b2"]
        lc.update(u=u, g=g)

        r2 = x1 + f
        x, lc["ln2"] = _layer_norm(r2, p[f"{prefix}.ln2.gain"], p[f"{prefix}.ln2.bias"])
        cache["layers"].append(lc)

    cache["x_final_in"] = x
    hidden, cache["final_ln"] = _layer_norm(x, p["final_ln.gain"], p["final_ln.bias"])
    logits = hidden @ p["tok_emb"].T
    cache["hidden"] = hidden

    if return_details:
        return hidden, logits, attentions, cache
    return hidden, logits


def backward(model: EncoderModel, cache: dict, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Analytic gradients of a scalar loss with upstream gradient dlogits.

    Mirrors forward() exactly; returns a dict with one gradient array per
    parameter (same shapes, same canonical names).
    """
    cfg = model.config
    p = model.params
    grads = {name: np.zeros_like(arr) for name, arr in p.items()}
    tokens = cache["tokens"]
    scale = np.asarray(1.0 / math.sqrt(cfg.hidden_size // cfg.n_heads), dtype=model.dtype)

    hidden = cache["hidden"]
    grads["tok_emb"] += np.einsum("blv,blh->vh", dlogits, hidden)
    dhidden = dlogits @ p["tok_emb"]

    dx, dgain, dbias = _layer_norm_backward(dhidden, cache["final_ln"], p["final_ln.gain"])
    grads["final_ln.gain"] += dgain
    grads["final_ln.bias"] += dbias

    for i in reversed(range(cfg.n_layers)):
        prefix = f"layers.{i}"
        lc = cache["layers"][i]

        dr2, dgain, dbias = _layer_norm_backward(dx, lc["ln2"], p[f"{prefix}.ln2.gain"])
        grads[f"{prefix}.ln2.gain"] += dgain
        grads[f"{prefix}.ln2.bias"] += dbias

        df = dr2
        dx1 = dr2.copy()

        # Feed-forward: f = gelu(x1 w1 + b1) w2 + b2
        dg = df @ p[f"{prefix}.ffn.w2"].T
        grads[f"{prefix}.ffn.w2"] += np.einsum("blf,blh->fh", lc["g"], df)
        grads[f"{prefix}.ffn.b2"] += df.sum(axis=(0, 1))
        du = dg * gelu_grad(lc["u"])
        grads[f"{prefix}.ffn.w1"] += np.einsum("blh,blf->hf", lc["x1"], du)
        grads[f"{prefix}.ffn.b1"] += du.sum(axis=(0, 1))
        dx1 += du @ p[f"{prefix}.ffn.w1"].T

        dr1, dgain, dbias = _layer_norm_backward(dx1, lc["ln1"], p[f"{prefix}.ln1.gain"])
        grads[f"{prefix}.ln1.gain"] += dgain
        grads[f"{prefix}.ln1.bias"] += dbias

        da = dr1
        dx = dr1.copy()

        # Attention: a = merge(softmax(qk^T * s) v) wo + bo
        dctx = da @ p[f"{prefix}.attn.wo"].T
        grads[f"{prefix}.attn.wo"] += np.einsum("blc,blh->ch", lc["ctx"], da)
        grads[f"{prefix}.attn.bo"] += da.sum(axis=(0, 1))
        dctx_h = _split_heads(dctx, cfg.n_heads)

        probs = lc["probs"]
        dprobs = dctx_h @ lc["vh"].transpose(0, 1, 3, 2)
        dvh = probs.transpose(0, 1, 3, 2) @ dctx_h
        dscores = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
        dqh = (dscores @ lc["kh"]) * scale
        dkh = (dscores.transpose(0, 1, 3, 2) @ lc["qh"]) * scale

        x_in = lc["x_in"]
        for name, dout in (("wq", dqh), ("wk", dkh), ("wv", dvh)):
            dmat = _merge_heads(dout)
            grads[f"{prefix}.attn.{name}"] += np.einsum("blh,blk->hk", x_in, dmat)
            grads[f"{prefix}.attn.b{name[1]}"] += dmat.sum(axis=(0, 1))
            dx += dmat @ p[f"{prefix}.attn.{name}"].T

    # Embedding lookups
    np.add.at(grads["tok_emb"], tokens, dx)
    L = tokens.shape[1]
    grads["pos_emb"][:L] += dx.sum(axis=0)
    return grads


def cross_entropy(logits, targets, loss_mask):
    """Mean cross-entropy over the positions selected by loss_mask.

    Returns (loss, dlogits).  loss_mask is (B, L) of {0,1}; at least one
    position must be selected.
    """
    loss_mask = np.asarray(loss_mask, dtype=logits.dtype)
    n = loss_mask.sum()
    if n == 0:
        raise ContractError("no positions selected for the loss")
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    sum_exp = np.exp(z).sum(axis=-1, keepdims=True)
    log_probs = z - np.log(sum_exp)
    B, L = targets.shape
    rows, cols = np.meshgrid(np.arange(B), np.arange(L), indexing="ij")
    nll = -log_probs[rows, cols, targets]
    # Keep the numpy scalar: callers doing extended-precision finite
    # differences need the full-width value, not a float64 rounding of it.
    loss = (nll * loss_mask).sum() / n

    dlogits = np.exp(log_probs)
    dlogits[rows, cols, targets] -= 1.0
    dlogits *= (loss_mask / n)[:, :, None]
    return loss, dlogits


def reconstruction_loss(logits, targets, mask) -> float:
    """Mean cross-entropy between logits and the input tokens themselves,
    counted at non-PAD positions (the identity-reconstruction objective)."""
    targets = np.asarray(targets)
    loss, _ = cross_entropy(logits, targets, np.asarray(mask))
    return float(loss)
