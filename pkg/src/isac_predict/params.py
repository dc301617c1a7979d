"""Named parameter store with freeze flags and an Adam optimizer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from .archive import load_archive, save_archive
from .errors import TrainingError
from .tensor import Tensor


def glorot_uniform(rng: np.random.Generator, shape: Tuple[int, ...],
                   fan_in: int, fan_out: int, dtype=np.float32) -> np.ndarray:
    """Uniform Glorot draw for linear/conv kernels."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


@dataclass
class AdamState:
    """Per-tensor Adam moments; created lazily on the first step."""
    m: np.ndarray
    v: np.ndarray
    t: int = 0


class ParamStore:
    """Named real tensors with per-tensor trainable flags and Adam state."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self._tensors: Dict[str, Tensor] = {}
        self._trainable: Dict[str, bool] = {}
        self._adam: Dict[str, AdamState] = {}
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def add(self, name: str, value: np.ndarray, trainable: bool = True) -> Tensor:
        if name in self._tensors:
            raise TrainingError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(value), requires_grad=True)
        self._tensors[name] = t
        self._trainable[name] = trainable
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def names(self) -> Iterator[str]:
        return iter(self._tensors)

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self._tensors.items())

    def is_trainable(self, name: str) -> bool:
        return self._trainable[name]

    def set_trainable(self, name: str, flag: bool) -> None:
        self._trainable[name] = flag

    def n_params(self, trainable_only: bool = False) -> int:
        return sum(t.data.size for n, t in self._tensors.items()
                   if not trainable_only or self._trainable[n])

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def adam_step(self, lr: Optional[float] = None) -> None:
        """One Adam update with bias correction; frozen tensors untouched."""
        lr = self.lr if lr is None else lr
        for name, t in self._tensors.items():
            if not self._trainable[name]:
                continue
            if t.grad is None:
                raise TrainingError(f"missing gradient for trainable tensor {name!r}")
            st = self._adam.get(name)
            if st is None:
                st = AdamState(m=np.zeros_like(t.data), v=np.zeros_like(t.data))
                self._adam[name] = st
            g = t.grad
            st.t += 1
            st.m = self.beta1 * st.m + (1.0 - self.beta1) * g
            st.v = self.beta2 * st.v + (1.0 - self.beta2) * (g * g)
            m_hat = st.m / (1.0 - self.beta1 ** st.t)
            v_hat = st.v / (1.0 - self.beta2 ** st.t)
            t.data -= (lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(t.data.dtype)

    # -- persistence -------------------------------------------------------

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: t.data for name, t in self._tensors.items()}

    def save(self, path) -> None:
        save_archive(path, self.state_dict())

    def load(self, path) -> None:
        """Overwrite values from an archive; names and shapes must match."""
        loaded = load_archive(path)
        missing = set(self._tensors) - set(loaded)
        extra = set(loaded) - set(self._tensors)
        if missing or extra:
            raise TrainingError(f"checkpoint mismatch: missing={sorted(missing)}, "
                                f"unexpected={sorted(extra)}")
        for name, arr in loaded.items():
            t = self._tensors[name]
            if arr.shape != t.data.shape:
                raise TrainingError(f"shape mismatch for {name!r}: "
                                    f"{arr.shape} vs {t.data.shape}")
            t.data = arr.astype(t.data.dtype)
