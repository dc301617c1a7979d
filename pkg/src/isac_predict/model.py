"""The sensing-assisted predictor.

Per antenna, four normalized CSI views enter two ConvLSTM feature cascades
(one per stream), the comm features query the sensing features through
multi-head cross-attention, the fused tokens are linearly embedded with a
fixed sinusoidal positional encoding, run through a causal pre-norm
transformer backbone, and a two-stage head (temporal P->Q map, then
feature->2K map) emits de-normalized complex CSI for the Q future slots.

Ablation flags each disable exactly one stage; `fusion_mode` selects
between comm-queries-sensing cross-attention (default) and self-attention
over the summed streams.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from .channel import CsiSample
from .errors import ConfigError, ImportMismatchError
from .fourier import real_to_complex
from .layers import (Conv2d, ConvLSTMCell, FeedForward, LayerNorm, Linear,
                     MultiHeadAttention, sinusoidal_encoding)
from .params import ParamStore
from .preprocess import batch_views
from .tensor import Tensor, concat, no_grad

FUSION_MODES = ("cross_qkv", "sum_then_selfattn")


@dataclass
class ModelConfig:
    """Architecture hyperparameters and ablation switches."""
    k: int = 16                  # subcarriers
    p: int = 10                  # historical slots
    q: int = 5                   # predicted slots
    f: int = 64                  # backbone feature dim
    l: int = 2                   # backbone layers
    heads: int = 4
    c_h: int = 8                 # ConvLSTM hidden channels
    n1: int = 2                  # sensing-cascade depth
    n2: int = 2                  # comm-cascade depth
    kernel: int = 3
    fusion_mode: str = "cross_qkv"
    use_sensing: bool = True
    use_channel_attention: bool = True
    use_cross_attention: bool = True
    use_backbone: bool = True
    dtype: str = "float32"

    def __post_init__(self):
        for name in ("k", "p", "q", "f", "l", "heads", "c_h", "n1", "n2", "kernel"):
            if getattr(self, name) < (0 if name == "l" else 1):
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.f % self.heads != 0:
            raise ConfigError(f"f={self.f} not divisible by heads={self.heads}")
        if (2 * self.k) % self.heads != 0:
            raise ConfigError(f"fusion width 2K={2 * self.k} not divisible by "
                              f"heads={self.heads}")
        if self.fusion_mode not in FUSION_MODES:
            raise ConfigError(f"unknown fusion_mode {self.fusion_mode!r}")

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32


class ChannelAttentionCascade:
    """Cascaded ConvLSTM blocks over paired delay/frequency views.

    Each block unrolls a ConvLSTM across the P slots (spatial axis K),
    projects the hidden sequence back with a 1x1 conv, and adds a residual
    path (1x1-projected for the first block, identity afterwards). A final
    1x1 conv maps to 2 channels and the result is flattened to P tokens of
    width 2K.
    """

    def __init__(self, store: ParamStore, name: str, depth: int, c_h: int,
                 kernel: int, rng: np.random.Generator, dtype=np.float32):
        if depth < 1:
            raise ConfigError("cascade depth must be >= 1")
        self.blocks = []
        c_in = 4
        for i in range(depth):
            cell = ConvLSTMCell(store, f"{name}.block{i}.cell", c_in, c_h,
                                kernel, rng, dtype)
            out = Conv2d(store, f"{name}.block{i}.out", c_h, c_h, (1, 1), rng, dtype)
            res = Conv2d(store, f"{name}.block{i}.res", c_in, c_h, (1, 1),
                         rng, dtype) if c_in != c_h else None
            self.blocks.append((cell, out, res))
            c_in = c_h
        self.proj = Conv2d(store, f"{name}.proj", c_h, 2, (1, 1), rng, dtype)

    def __call__(self, x_delay: Tensor, x_freq: Tensor) -> Tensor:
        x = concat([x_delay, x_freq], axis=1)          # [B, 4, K, P]
        for cell, out, res in self.blocks:
            y = out(cell.run(x))
            x = y + (res(x) if res is not None else x)
        z = self.proj(x)                               # [B, 2, K, P]
        b, _, k, p = z.shape
        return z.transpose(0, 3, 1, 2).reshape(b, p, 2 * k)


def flatten_tokens(view: Tensor) -> Tensor:
    """Identity reshape of one [B, 2, K, P] view into [B, P, 2K] tokens."""
    b, _, k, p = view.shape
    return view.transpose(0, 3, 1, 2).reshape(b, p, 2 * k)


class Backbone:
    """Causal pre-norm transformer stack with a learnable positional embedding."""

    def __init__(self, store: ParamStore, cfg: ModelConfig,
                 rng: np.random.Generator, dtype=np.float32):
        self.pos_emb = store.add("backbone.pos_emb",
                                 np.zeros((cfg.p, cfg.f), dtype=dtype))
        self.blocks = []
        for i in range(cfg.l):
            pre = f"backbone.h{i}"
            self.blocks.append((
                LayerNorm(store, f"{pre}.ln1", cfg.f, dtype),
                MultiHeadAttention(store, f"{pre}.attn", cfg.f, cfg.heads, rng, dtype),
                LayerNorm(store, f"{pre}.ln2", cfg.f, dtype),
                FeedForward(store, f"{pre}.ffn", cfg.f, rng, dtype),
            ))

    def __call__(self, x: Tensor, causal: bool = True) -> Tensor:
        x = x + self.pos_emb
        for ln1, attn, ln2, ffn in self.blocks:
            h = ln1(x)
            x = x + attn(h, h, causal=causal)
            x = x + ffn(ln2(x))
        return x


class SensingAssistedPredictor:
    """Full per-antenna pipeline with named parameters in one ParamStore."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        dtype = cfg.np_dtype
        rng = np.random.default_rng(seed)
        self.store = ParamStore()
        d_tok = 2 * cfg.k

        if cfg.use_channel_attention:
            self.ca_s = ChannelAttentionCascade(self.store, "ca_s", cfg.n1,
                                                cfg.c_h, cfg.kernel, rng, dtype)
            self.ca_c = ChannelAttentionCascade(self.store, "ca_c", cfg.n2,
                                                cfg.c_h, cfg.kernel, rng, dtype)
        else:
            self.ca_s = self.ca_c = None

        if cfg.use_cross_attention:
            self.fuse = MultiHeadAttention(self.store, "fuse", d_tok, cfg.heads,
                                           rng, dtype, zero_out=True)
        else:
            self.fuse = None

        self.embed = Linear(self.store, "embed", d_tok, cfg.f, rng, dtype)
        self.pos_enc = sinusoidal_encoding(cfg.p, cfg.f, dtype)

        self.backbone = Backbone(self.store, cfg, rng, dtype) \
            if cfg.use_backbone else None

        self.head_temporal = Linear(self.store, "head.temporal", cfg.p, cfg.q,
                                    rng, dtype)
        self.head_out = Linear(self.store, "head.out", cfg.f, d_tok, rng, dtype)

    # -- forward -----------------------------------------------------------

    def _stream_features(self, cascade, delay: Tensor, freq: Tensor) -> Tensor:
        if cascade is not None:
            return cascade(delay, freq)
        return flatten_tokens(freq)

    def forward(self, views: Dict[str, np.ndarray]) -> Tensor:
        """Batched forward: views as produced by `preprocess.batch_views`.

        Returns de-normalized predictions [B, 2, K, Q].
        """
        cfg = self.cfg
        dtype = cfg.np_dtype
        x_cf = Tensor(np.ascontiguousarray(views["x_c_freq"], dtype=dtype))
        x_cd = Tensor(np.ascontiguousarray(views["x_c_delay"], dtype=dtype))
        if cfg.use_sensing:
            x_sf = Tensor(np.ascontiguousarray(views["x_s_freq"], dtype=dtype))
            x_sd = Tensor(np.ascontiguousarray(views["x_s_delay"], dtype=dtype))
        else:
            zeros = np.zeros_like(views["x_s_freq"], dtype=dtype)
            x_sf = Tensor(zeros)
            x_sd = Tensor(zeros.copy())

        f_c = self._stream_features(self.ca_c, x_cd, x_cf)    # [B, P, 2K]
        f_s = self._stream_features(self.ca_s, x_sd, x_sf)

        if self.fuse is None:
            fused = f_c + f_s
        elif cfg.fusion_mode == "cross_qkv":
            fused = f_c + self.fuse(f_c, f_s)
        else:  # sum_then_selfattn
            s = f_c + f_s
            fused = s + self.fuse(s, s)

        e = self.embed(fused) + Tensor(self.pos_enc)
        z = self.backbone(e) if self.backbone is not None else e

        # Temporal P->Q map on the token axis, then feature map F->2K.
        zq = self.head_temporal(z.transpose(0, 2, 1)).transpose(0, 2, 1)
        y = self.head_out(zq)                                  # [B, Q, 2K]
        b = y.shape[0]
        y = y.reshape(b, cfg.q, 2, cfg.k).transpose(0, 2, 3, 1)  # [B, 2, K, Q]

        mu = np.asarray(views["mu_c"], dtype=dtype)
        sigma = np.asarray(views["sigma_c"], dtype=dtype)
        return y * Tensor(sigma) + Tensor(mu)

    def predict(self, sample: CsiSample) -> np.ndarray:
        """Predict future comm CSI for every antenna: complex [N, K, Q]."""
        cfg = self.cfg
        if sample.comm.shape[1] != cfg.k or sample.sensing.shape[0] != cfg.p \
                or sample.comm.shape[0] != cfg.p + cfg.q:
            raise ConfigError(
                f"sample dims {sample.comm.shape}/{sample.sensing.shape} do not "
                f"match model config (K={cfg.k}, P={cfg.p}, Q={cfg.q})")
        views = batch_views([sample], dtype=cfg.np_dtype)
        with no_grad():
            out = self.forward(views)
        return np.stack([real_to_complex(row) for row in out.data])

    # -- parameter accounting ----------------------------------------------

    @staticmethod
    def param_count(cfg: ModelConfig) -> int:
        """Closed-form parameter count as a function of the config."""
        k2 = 2 * cfg.k
        total = 0
        if cfg.use_channel_attention:
            for depth in (cfg.n1, cfg.n2):
                c_in = 4
                for i in range(depth):
                    total += 4 * cfg.c_h * (c_in + cfg.c_h) * cfg.kernel + 4 * cfg.c_h
                    total += cfg.c_h * cfg.c_h + cfg.c_h          # out proj
                    if c_in != cfg.c_h:
                        total += cfg.c_h * c_in + cfg.c_h          # residual proj
                    c_in = cfg.c_h
                total += 2 * cfg.c_h + 2                           # final 1x1
        if cfg.use_cross_attention:
            total += 4 * (k2 * k2 + k2)
        total += k2 * cfg.f + cfg.f                                # embed
        if cfg.use_backbone:
            total += cfg.p * cfg.f                                 # pos emb
            per_layer = (4 * cfg.f                                 # two layer norms
                         + 4 * (cfg.f * cfg.f + cfg.f)             # attention
                         + cfg.f * 4 * cfg.f + 4 * cfg.f           # ffn fc1
                         + 4 * cfg.f * cfg.f + cfg.f)              # ffn fc2
            total += cfg.l * per_layer
        total += cfg.p * cfg.q + cfg.q                             # temporal head
        total += cfg.f * k2 + k2                                   # output head
        return total

    # -- backbone weight import / export ------------------------------------

    def backbone_tensor_map(self) -> Dict[str, tuple]:
        """Documented mapping: backbone tensor name -> shape for this config."""
        return {name: tuple(t.data.shape) for name, t in self.store.items()
                if name.startswith("backbone.")}

    def export_backbone_weights(self, path) -> None:
        from .archive import save_archive
        save_archive(path, {name: self.store[name].data
                            for name in self.backbone_tensor_map()})

    def import_backbone_weights(self, path) -> None:
        """Overwrite backbone tensors from an archive; everything else untouched."""
        from .archive import load_archive
        expected = self.backbone_tensor_map()
        loaded = load_archive(path)
        offenders: List[str] = []
        for name in sorted(set(expected) - set(loaded)):
            offenders.append(f"missing {name} {expected[name]}")
        for name in sorted(set(loaded) - set(expected)):
            offenders.append(f"unexpected {name} {loaded[name].shape}")
        for name in sorted(set(loaded) & set(expected)):
            if loaded[name].shape != expected[name]:
                offenders.append(f"shape mismatch {name}: archive "
                                 f"{loaded[name].shape} vs model {expected[name]}")
        if offenders:
            raise ImportMismatchError(offenders)
        for name in expected:
            t = self.store[name]
            t.data = loaded[name].astype(t.data.dtype)
