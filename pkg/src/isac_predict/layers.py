"""Network building blocks on top of the autodiff tensor.

Every layer registers its weights in a ParamStore under a dotted name
prefix; the store owns persistence and the optimizer, layers keep direct
references to their tensors. Token sequences use the layout [B, P, D]
(batch, slots, features).
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from .errors import ConfigError, DimensionError
from .params import ParamStore, glorot_uniform
from .tensor import Tensor, concat, conv2d, layer_norm, softmax

MASK_NEG = -1e30   # large enough that exp() underflows to exactly 0


class Linear:
    """Affine map over the last axis: [..., d_in] -> [..., d_out]."""

    def __init__(self, store: ParamStore, name: str, d_in: int, d_out: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.w = store.add(f"{name}.w",
                           glorot_uniform(rng, (d_in, d_out), d_in, d_out, dtype))
        self.b = store.add(f"{name}.b", np.zeros(d_out, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b


class LayerNorm:
    """Learnable layer norm over the last axis."""

    def __init__(self, store: ParamStore, name: str, d: int, dtype=np.float32,
                 eps: float = 1e-5):
        self.g = store.add(f"{name}.g", np.ones(d, dtype=dtype))
        self.b = store.add(f"{name}.b", np.zeros(d, dtype=dtype))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.g, self.b, axis=-1, eps=self.eps)


class Conv2d:
    """Same-padded conv2d with owned kernels and bias."""

    def __init__(self, store: ParamStore, name: str, c_in: int, c_out: int,
                 kernel: Tuple[int, int], rng: np.random.Generator,
                 dtype=np.float32):
        kh, kw = kernel
        fan_in = c_in * kh * kw
        fan_out = c_out * kh * kw
        self.w = store.add(f"{name}.w",
                           glorot_uniform(rng, (c_out, c_in, kh, kw),
                                          fan_in, fan_out, dtype))
        self.b = store.add(f"{name}.b", np.zeros(c_out, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.w, self.b)


class MultiHeadAttention:
    """Standard scaled dot-product attention with separate Q and K/V inputs."""

    def __init__(self, store: ParamStore, name: str, d_model: int, heads: int,
                 rng: np.random.Generator, dtype=np.float32,
                 zero_out: bool = False):
        if d_model % heads != 0:
            raise ConfigError(f"d_model {d_model} not divisible by heads {heads}")
        self.d_model = d_model
        self.heads = heads
        self.d_head = d_model // heads
        self.wq = Linear(store, f"{name}.wq", d_model, d_model, rng, dtype)
        self.wk = Linear(store, f"{name}.wk", d_model, d_model, rng, dtype)
        self.wv = Linear(store, f"{name}.wv", d_model, d_model, rng, dtype)
        self.wo = Linear(store, f"{name}.wo", d_model, d_model, rng, dtype)
        if zero_out:
            # residual-branch attention starts closed: the output projection
            # is zeroed so the layer is a no-op until training opens it
            self.wo.w.data[:] = 0.0

    def _split(self, x: Tensor) -> Tensor:
        b, p, _ = x.shape
        return x.reshape(b, p, self.heads, self.d_head).transpose(0, 2, 1, 3)

    def __call__(self, q_in: Tensor, kv_in: Tensor, causal: bool = False,
                 return_weights: bool = False):
        if q_in.shape[-1] != self.d_model or kv_in.shape[-1] != self.d_model:
            raise DimensionError("attention input width must equal d_model")
        q = self._split(self.wq(q_in))
        k = self._split(self.wk(kv_in))
        v = self._split(self.wv(kv_in))
        scores = q @ k.transpose(0, 1, 3, 2) * (1.0 / np.sqrt(self.d_head))
        if causal:
            p_q, p_k = scores.shape[-2], scores.shape[-1]
            mask = np.triu(np.full((p_q, p_k), MASK_NEG,
                                   dtype=scores.data.dtype), k=1)
            scores = scores + Tensor(mask)
        attn = softmax(scores, axis=-1)
        ctx = attn @ v
        b, _, p, _ = ctx.shape
        out = self.wo(ctx.transpose(0, 2, 1, 3).reshape(b, p, self.d_model))
        if return_weights:
            return out, attn.data
        return out


class FeedForward:
    """Position-wise MLP with GELU, hidden width `mult * d_model`."""

    def __init__(self, store: ParamStore, name: str, d_model: int,
                 rng: np.random.Generator, dtype=np.float32, mult: int = 4):
        self.fc1 = Linear(store, f"{name}.fc1", d_model, mult * d_model, rng, dtype)
        self.fc2 = Linear(store, f"{name}.fc2", mult * d_model, d_model, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.fc1(x).gelu())


class ConvLSTMCell:
    """LSTM cell whose gate transforms are convolutions over the K axis.

    Inputs per step are [B, C_in, K, 1]; the four gates come from one conv
    over the channel-concatenated (x_t, h_prev).
    """

    def __init__(self, store: ParamStore, name: str, c_in: int, c_hidden: int,
                 kernel: int, rng: np.random.Generator, dtype=np.float32):
        if kernel % 2 == 0:
            raise ConfigError(f"ConvLSTM kernel must be odd, got {kernel}")
        self.c_hidden = c_hidden
        self.gates = Conv2d(store, f"{name}.gates", c_in + c_hidden,
                            4 * c_hidden, (kernel, 1), rng, dtype)

    def init_state(self, batch: int, k: int, dtype=np.float32):
        z = np.zeros((batch, self.c_hidden, k, 1), dtype=dtype)
        return Tensor(z), Tensor(z.copy())

    def step(self, x_t: Tensor, h: Tensor, c: Tensor):
        if x_t.shape[2] != h.shape[2]:
            raise DimensionError("ConvLSTM spatial dim mismatch with state")
        ch = self.c_hidden
        g = self.gates(concat([x_t, h], axis=1))
        i = g[:, 0 * ch:1 * ch].sigmoid()
        f = g[:, 1 * ch:2 * ch].sigmoid()
        cand = g[:, 2 * ch:3 * ch].tanh()
        o = g[:, 3 * ch:4 * ch].sigmoid()
        c_new = f * c + i * cand
        h_new = o * c_new.tanh()
        return h_new, c_new

    def run(self, x_seq: Tensor) -> Tensor:
        """Unroll over the last axis: [B, C_in, K, P] -> [B, C_h, K, P]."""
        b, _, k, p = x_seq.shape
        h, c = self.init_state(b, k, x_seq.data.dtype)
        outs = []
        for t in range(p):
            h, c = self.step(x_seq[:, :, :, t:t + 1], h, c)
            outs.append(h)
        return concat(outs, axis=3)


def sinusoidal_encoding(p: int, d: int, dtype=np.float32) -> np.ndarray:
    """Fixed transformer positional encoding, [P, D]."""
    pos = np.arange(p)[:, None].astype(np.float64)
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    enc = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return enc.astype(dtype)
