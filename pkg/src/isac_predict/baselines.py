"""Comparison predictors: LSTM, Transformer encoder, and CNN.

All three consume the exact same preprocessed views, emit de-normalized
[B, 2, K, Q] predictions, and train through the same loss/optimizer path as
the main model, so architecture is the only variable. Default sizes put
each within about +/-25% of the main model's trainable parameter count at
desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from .errors import ConfigError
from .layers import (Conv2d, LayerNorm, Linear, MultiHeadAttention,
                     FeedForward, sinusoidal_encoding)
from .params import ParamStore
from .tensor import Tensor, concat

BASELINE_KINDS = ("lstm", "transformer", "cnn")


@dataclass
class BaselineConfig:
    kind: str = "lstm"
    k: int = 16
    p: int = 10
    q: int = 5
    use_sensing: bool = True
    lstm_hidden: int = 24
    lstm_layers: int = 1
    tf_d_model: int = 32
    tf_layers: int = 1
    tf_heads: int = 4
    cnn_channels: int = 24
    cnn_layers: int = 3
    cnn_kernel: int = 3
    dtype: str = "float32"

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ConfigError(f"unknown baseline kind {self.kind!r}")
        for f in ("k", "p", "q", "lstm_hidden", "lstm_layers", "tf_d_model",
                  "tf_layers", "tf_heads", "cnn_channels", "cnn_layers"):
            if getattr(self, f) < 1:
                raise ConfigError(f"{f} must be >= 1")
        if self.tf_d_model % self.tf_heads != 0:
            raise ConfigError("tf_d_model must be divisible by tf_heads")

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    @property
    def in_width(self) -> int:
        """Per-slot feature width: delay+freq views, comm (+sensing)."""
        return (2 if self.use_sensing else 1) * 2 * (2 * self.k)


def _tokens(views: Dict[str, np.ndarray], cfg: BaselineConfig) -> np.ndarray:
    """Flatten views to per-slot token rows [B, P, in_width]."""
    keys = ["x_c_freq", "x_c_delay"]
    if cfg.use_sensing:
        keys += ["x_s_freq", "x_s_delay"]
    parts = []
    for key in keys:
        v = np.asarray(views[key], dtype=cfg.np_dtype)   # [B, 2, K, P]
        b, _, k, p = v.shape
        parts.append(v.transpose(0, 3, 1, 2).reshape(b, p, 2 * k))
    return np.concatenate(parts, axis=-1)


def _denorm(y: Tensor, views, cfg: BaselineConfig) -> Tensor:
    b = y.shape[0]
    y = y.reshape(b, cfg.q, 2, cfg.k).transpose(0, 2, 3, 1)
    mu = np.asarray(views["mu_c"], dtype=cfg.np_dtype)
    sigma = np.asarray(views["sigma_c"], dtype=cfg.np_dtype)
    return y * Tensor(sigma) + Tensor(mu)


class LstmPredictor:
    """Stacked dense LSTM over the P slots; head maps the last hidden state."""

    def __init__(self, cfg: BaselineConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        dtype = cfg.np_dtype
        self.store = ParamStore()
        self.layers: List[Linear] = []
        d_in = cfg.in_width
        for i in range(cfg.lstm_layers):
            self.layers.append(Linear(self.store, f"lstm{i}.gates",
                                      d_in + cfg.lstm_hidden,
                                      4 * cfg.lstm_hidden, rng, dtype))
            d_in = cfg.lstm_hidden
        self.head = Linear(self.store, "head", cfg.lstm_hidden,
                           2 * cfg.k * cfg.q, rng, dtype)

    def forward(self, views) -> Tensor:
        cfg = self.cfg
        x = Tensor(_tokens(views, cfg))                 # [B, P, W]
        b, p, _ = x.shape
        h_dim = cfg.lstm_hidden
        seq = [x[:, t] for t in range(p)]
        for gates in self.layers:
            z = np.zeros((b, h_dim), dtype=cfg.np_dtype)
            h, c = Tensor(z), Tensor(z.copy())
            outs = []
            for x_t in seq:
                g = gates(concat([x_t, h], axis=1))
                i = g[:, 0 * h_dim:1 * h_dim].sigmoid()
                f = g[:, 1 * h_dim:2 * h_dim].sigmoid()
                cand = g[:, 2 * h_dim:3 * h_dim].tanh()
                o = g[:, 3 * h_dim:4 * h_dim].sigmoid()
                c = f * c + i * cand
                h = o * c.tanh()
                outs.append(h)
            seq = outs
        y = self.head(seq[-1])                          # [B, 2KQ]
        return _denorm(y, views, cfg)


class TransformerPredictor:
    """Pre-norm encoder self-attention over P tokens, temporal map to Q."""

    def __init__(self, cfg: BaselineConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        dtype = cfg.np_dtype
        self.store = ParamStore()
        d = cfg.tf_d_model
        self.embed = Linear(self.store, "embed", cfg.in_width, d, rng, dtype)
        self.pos_enc = sinusoidal_encoding(cfg.p, d, dtype)
        self.blocks = []
        for i in range(cfg.tf_layers):
            self.blocks.append((
                LayerNorm(self.store, f"h{i}.ln1", d, dtype),
                MultiHeadAttention(self.store, f"h{i}.attn", d, cfg.tf_heads,
                                   rng, dtype),
                LayerNorm(self.store, f"h{i}.ln2", d, dtype),
                FeedForward(self.store, f"h{i}.ffn", d, rng, dtype),
            ))
        self.temporal = Linear(self.store, "head.temporal", cfg.p, cfg.q,
                               rng, dtype)
        self.head = Linear(self.store, "head.out", d, 2 * cfg.k, rng, dtype)

    def forward(self, views) -> Tensor:
        cfg = self.cfg
        x = self.embed(Tensor(_tokens(views, cfg))) + Tensor(self.pos_enc)
        for ln1, attn, ln2, ffn in self.blocks:
            h = ln1(x)
            x = x + attn(h, h, causal=False)
            x = x + ffn(ln2(x))
        x = self.temporal(x.transpose(0, 2, 1)).transpose(0, 2, 1)  # [B, Q, d]
        y = self.head(x).reshape(x.shape[0], cfg.q * 2 * cfg.k)
        return _denorm(y, views, cfg)


class CnnPredictor:
    """2D convolutions over the K x P plane, temporal linear map to Q."""

    def __init__(self, cfg: BaselineConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        dtype = cfg.np_dtype
        self.store = ParamStore()
        c_in = (2 if cfg.use_sensing else 1) * 4   # stream views as channels
        kern = (cfg.cnn_kernel, cfg.cnn_kernel)
        self.convs = []
        for i in range(cfg.cnn_layers):
            self.convs.append(Conv2d(self.store, f"conv{i}", c_in,
                                     cfg.cnn_channels, kern, rng, dtype))
            c_in = cfg.cnn_channels
        self.proj = Conv2d(self.store, "proj", cfg.cnn_channels, 2, (1, 1),
                           rng, dtype)
        self.temporal = Linear(self.store, "head.temporal", cfg.p, cfg.q,
                               rng, dtype)

    def forward(self, views) -> Tensor:
        cfg = self.cfg
        keys = ["x_c_freq", "x_c_delay"]
        if cfg.use_sensing:
            keys += ["x_s_freq", "x_s_delay"]
        x = Tensor(np.concatenate(
            [np.asarray(views[k], dtype=cfg.np_dtype) for k in keys], axis=1))
        for conv in self.convs:
            x = conv(x).gelu()
        x = self.proj(x)                                # [B, 2, K, P]
        y = self.temporal(x)                            # [B, 2, K, Q]
        mu = np.asarray(views["mu_c"], dtype=cfg.np_dtype)
        sigma = np.asarray(views["sigma_c"], dtype=cfg.np_dtype)
        return y * Tensor(sigma) + Tensor(mu)


def build_baseline(cfg: BaselineConfig, seed: int = 0):
    cls = {"lstm": LstmPredictor, "transformer": TransformerPredictor,
           "cnn": CnnPredictor}[cfg.kind]
    return cls(cfg, seed)
