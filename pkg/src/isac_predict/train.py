"""NMSE training loop with backbone freezing, validation and checkpointing."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DegenerateSampleError, TrainingError
from .params import ParamStore
from .preprocess import NO_NOISE, add_csi_noise, batch_views
from .tensor import Tensor, no_grad

FREEZE_POLICIES = ("paper_default", "none", "all_backbone")


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    snr_range_db: Optional[Tuple[float, float]] = None   # None = clean history
    freeze_policy: str = "paper_default"
    patience: int = 10
    cosine_decay: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.snr_range_db is not None:
            lo, hi = self.snr_range_db
            if lo > hi:
                raise ConfigError(f"bad SNR range {self.snr_range_db}")
        if self.freeze_policy not in FREEZE_POLICIES:
            raise ConfigError(f"unknown freeze policy {self.freeze_policy!r}")


@dataclass
class TrainReport:
    train_losses: List[float] = field(default_factory=list)
    val_losses: List[float] = field(default_factory=list)
    wall_time: float = 0.0
    best_epoch: int = -1
    best_val: float = float("inf")
    best_checkpoint: Optional[str] = None

    def to_dict(self):
        return {"train_losses": self.train_losses, "val_losses": self.val_losses,
                "wall_time": self.wall_time, "best_epoch": self.best_epoch,
                "best_val": self.best_val, "best_checkpoint": self.best_checkpoint}


def nmse_loss(pred: Tensor, truth: np.ndarray) -> Tensor:
    """Ratio-of-sums NMSE over the whole batch (real-stacked complex CSI)."""
    truth = np.asarray(truth, dtype=pred.data.dtype)
    denom = float((truth ** 2).sum())
    if denom == 0.0:
        raise DegenerateSampleError("NMSE truth is all-zero")
    err = pred - Tensor(truth)
    return (err * err).sum() * (1.0 / denom)


def nmse_metric(pred: np.ndarray, truth: np.ndarray) -> float:
    """NMSE of complex (or real-stacked) arrays as a plain number."""
    denom = float(np.sum(np.abs(truth) ** 2))
    if denom == 0.0:
        raise DegenerateSampleError("NMSE truth is all-zero")
    return float(np.sum(np.abs(pred - truth) ** 2) / denom)


def apply_freeze_policy(store: ParamStore, policy: str) -> None:
    """Set per-tensor trainable flags.

    paper_default freezes the backbone attention and feed-forward weights;
    layer norms, positional embedding and every non-backbone module stay
    trainable. all_backbone freezes the whole backbone.
    """
    if policy not in FREEZE_POLICIES:
        raise ConfigError(f"unknown freeze policy {policy!r}")
    for name in store.names():
        if policy == "none":
            frozen = False
        elif policy == "all_backbone":
            frozen = name.startswith("backbone.")
        else:
            frozen = name.startswith("backbone.") and \
                (".attn." in name or ".ffn." in name)
        store.set_trainable(name, not frozen)


def _epoch_lr(cfg: TrainConfig, epoch: int) -> float:
    if not cfg.cosine_decay:
        return cfg.lr
    return cfg.lr * 0.5 * (1.0 + np.cos(np.pi * epoch / cfg.epochs))


def _noisy_copy(samples, snr_range, rng: np.random.Generator):
    """Per-sample uniform SNR draw and seeded noise injection."""
    out = []
    for s in samples:
        snr = rng.uniform(*snr_range)
        out.append(add_csi_noise(s, snr, rng.integers(2 ** 63)))
    return out


def evaluate(net, samples: Sequence, snr_db: float = NO_NOISE, seed=0,
             chunk: int = 16) -> Tuple[float, float]:
    """Test NMSE of `net` on `samples`: (global ratio, per-sample mean)."""
    dtype = net.cfg.np_dtype
    num = den = 0.0
    per_sample = []
    for lo in range(0, len(samples), chunk):
        part = samples[lo:lo + chunk]
        views = batch_views(part, snr_db=snr_db, seed=(seed, lo), dtype=dtype)
        with no_grad():
            pred = net.forward(views).data
        err = ((pred - views["target"]) ** 2)
        n_ant = pred.shape[0] // len(part)
        for i in range(len(part)):
            sl = slice(i * n_ant, (i + 1) * n_ant)
            e = float(err[sl].sum())
            d = float((views["target"][sl] ** 2).sum())
            per_sample.append(e / d)
            num += e
            den += d
    return num / den, float(np.mean(per_sample))


def train(net, train_samples: Sequence, val_samples: Sequence,
          cfg: TrainConfig, out_dir=None, log=None) -> TrainReport:
    """Mini-batch Adam on the batch NMSE; checkpoints the best validation loss."""
    apply_freeze_policy(net.store, cfg.freeze_policy)
    rng = np.random.default_rng(cfg.seed)
    dtype = net.cfg.np_dtype
    report = TrainReport()
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    since_best = 0
    best_state = None

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_samples))
        lr = _epoch_lr(cfg, epoch)
        losses = []
        for lo in range(0, len(order), cfg.batch_size):
            batch = [train_samples[i] for i in order[lo:lo + cfg.batch_size]]
            if cfg.snr_range_db is not None:
                batch = _noisy_copy(batch, cfg.snr_range_db, rng)
            views = batch_views(batch, dtype=dtype)
            net.store.zero_grad()
            loss = nmse_loss(net.forward(views), views["target"])
            val = loss.item()
            if not np.isfinite(val):
                raise TrainingError(f"non-finite loss {val} at epoch {epoch}")
            loss.backward()
            net.store.adam_step(lr)
            losses.append(val)
        report.train_losses.append(float(np.mean(losses)))

        if cfg.snr_range_db is not None:
            val_snr = 0.5 * (cfg.snr_range_db[0] + cfg.snr_range_db[1])
        else:
            val_snr = NO_NOISE
        val_nmse, _ = evaluate(net, val_samples, snr_db=val_snr,
                               seed=cfg.seed + 1)
        report.val_losses.append(float(val_nmse))
        if log:
            log(f"epoch {epoch}: train {report.train_losses[-1]:.5f} "
                f"val {val_nmse:.5f} lr {lr:.2e}")

        if val_nmse < report.best_val:
            report.best_val = float(val_nmse)
            report.best_epoch = epoch
            since_best = 0
            best_state = {n: t.data.copy() for n, t in net.store.items()}
            if out_dir is not None:
                ckpt = out_dir / "best.ntar"
                net.store.save(ckpt)
                report.best_checkpoint = str(ckpt)
        else:
            since_best += 1
            if since_best > cfg.patience:
                break

    if best_state is not None:
        for n, t in net.store.items():
            t.data = best_state[n]
    report.wall_time = time.time() - t0
    if out_dir is not None:
        with open(out_dir / "report.json", "w") as f:
            json.dump(report.to_dict(), f, indent=2)
    return report
