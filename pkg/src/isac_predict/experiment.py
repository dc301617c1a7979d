"""Experiment orchestration: configs, result tables, sweeps and ablations."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .channel import OfdmGrid, ScenarioConfig, generate_dataset
from .errors import ConfigError
from .model import ModelConfig, SensingAssistedPredictor
from .preprocess import NO_NOISE
from .train import TrainConfig, evaluate, train

ABLATION_VARIANTS = ("full", "no_sensing", "no_channel_attention",
                     "no_cross_attention", "no_backbone")

CSV_FIELDS = ("scheme", "bin", "nmse_global", "nmse_mean", "n", "seed")


@dataclass
class ExperimentConfig:
    """Single source of truth for one run: scenario, grid, model, training."""
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    grid: OfdmGrid = field(default_factory=OfdmGrid)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    n_train: int = 600
    n_test: int = 60

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        tr = dict(d.get("train", {}))
        if tr.get("snr_range_db") is not None:
            tr["snr_range_db"] = tuple(tr["snr_range_db"])
        sc = dict(d.get("scenario", {}))
        if "speed_range_kmh" in sc:
            sc["speed_range_kmh"] = tuple(sc["speed_range_kmh"])
        return cls(scenario=ScenarioConfig(**sc),
                   grid=OfdmGrid(**d.get("grid", {})),
                   model=ModelConfig(**d.get("model", {})),
                   train=TrainConfig(**tr),
                   n_train=d.get("n_train", 600),
                   n_test=d.get("n_test", 60))

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def desk_config() -> ExperimentConfig:
    """Small profile that trains on a laptop CPU in minutes."""
    return ExperimentConfig(
        scenario=ScenarioConfig(n_v=2, n_h=2),
        grid=OfdmGrid(k=16),
        model=ModelConfig(k=16),
        train=TrainConfig(),
        n_train=600, n_test=60)


def paper_scale_config() -> ExperimentConfig:
    """Full-scale profile (hours of CPU); matches the large system setup."""
    return ExperimentConfig(
        scenario=ScenarioConfig(n_v=4, n_h=8),
        grid=OfdmGrid(k=48),
        model=ModelConfig(k=48, f=768, l=12, heads=12),
        train=TrainConfig(),
        n_train=6000, n_test=600)


PRESETS = {"desk": desk_config, "paper": paper_scale_config}


@dataclass
class ResultRow:
    scheme: str
    bin: str                 # speed bin label or SNR value
    nmse_global: float
    nmse_mean: float
    n: int
    seed: int


@dataclass
class ResultTable:
    rows: List[ResultRow] = field(default_factory=list)

    def add(self, **kw) -> None:
        self.rows.append(ResultRow(**kw))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in self.rows:
            w.writerow([r.scheme, r.bin, repr(r.nmse_global), repr(r.nmse_mean),
                        r.n, r.seed])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "ResultTable":
        text = Path(source).read_text() if isinstance(source, (str, Path)) \
            and "\n" not in str(source) else str(source)
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != CSV_FIELDS:
            raise ConfigError(f"unexpected CSV header {header}")
        table = cls()
        for row in reader:
            if not row:
                continue
            table.add(scheme=row[0], bin=row[1], nmse_global=float(row[2]),
                      nmse_mean=float(row[3]), n=int(row[4]), seed=int(row[5]))
        return table


def variant_config(base: ModelConfig, variant: str) -> ModelConfig:
    """Model config for one ablation variant (identical otherwise)."""
    if variant not in ABLATION_VARIANTS:
        raise ConfigError(f"unknown ablation variant {variant!r}")
    d = dataclasses.asdict(base)
    if variant == "no_sensing":
        d["use_sensing"] = False
    elif variant == "no_channel_attention":
        d["use_channel_attention"] = False
    elif variant == "no_cross_attention":
        d["use_cross_attention"] = False
    elif variant == "no_backbone":
        d["use_backbone"] = False
    return ModelConfig(**d)


def speed_bins_kmh(lo: float = 10.0, hi: float = 100.0,
                   width: float = 10.0) -> List[tuple]:
    edges = np.arange(lo, hi + width / 2, width)
    return [(float(a), float(b)) for a, b in zip(edges[:-1], edges[1:])]


def sweep_speed(nets: Dict[str, object], samples: Sequence, seed: int = 0,
                bins: Optional[List[tuple]] = None,
                snr_db: float = NO_NOISE, warn=None) -> ResultTable:
    """Bin test samples by MU speed and evaluate each scheme per bin."""
    bins = bins if bins is not None else speed_bins_kmh()
    table = ResultTable()
    speeds = np.array([s.speed * 3.6 for s in samples])   # km/h
    for lo, hi in bins:
        mask = (speeds >= lo) & (speeds < hi) if hi < bins[-1][1] \
            else (speeds >= lo) & (speeds <= hi)
        subset = [s for s, m in zip(samples, mask) if m]
        if not subset:
            if warn:
                warn(f"empty speed bin [{lo}, {hi}) km/h, row omitted")
            continue
        for scheme, net in nets.items():
            g, m = evaluate(net, subset, snr_db=snr_db, seed=seed)
            table.add(scheme=scheme, bin=f"{lo:g}-{hi:g}", nmse_global=g,
                      nmse_mean=m, n=len(subset), seed=seed)
    return table


def sweep_snr(nets: Dict[str, object], samples: Sequence,
              snr_list_db: Sequence[float] = (0, 5, 10, 15, 20, 25),
              seed: int = 0) -> ResultTable:
    """Evaluate each scheme with noisy historical CSI at each SNR."""
    table = ResultTable()
    for snr in snr_list_db:
        for scheme, net in nets.items():
            g, m = evaluate(net, samples, snr_db=float(snr), seed=seed)
            label = "clean" if snr == NO_NOISE else f"{snr:g}"
            table.add(scheme=scheme, bin=label, nmse_global=g, nmse_mean=m,
                      n=len(samples), seed=seed)
    return table


def run_ablation(cfg: ExperimentConfig, train_samples, val_samples,
                 test_samples, seed: int = 0, out_dir=None,
                 log=None) -> ResultTable:
    """Train and evaluate the five ablation variants under identical seeds."""
    table = ResultTable()
    eval_snr = NO_NOISE if cfg.train.snr_range_db is None else \
        0.5 * (cfg.train.snr_range_db[0] + cfg.train.snr_range_db[1])
    for variant in ABLATION_VARIANTS:
        mc = variant_config(cfg.model, variant)
        net = SensingAssistedPredictor(mc, seed=seed)
        tc = dataclasses.replace(cfg.train, seed=seed)
        sub = Path(out_dir) / variant if out_dir is not None else None
        train(net, train_samples, val_samples, tc, out_dir=sub, log=log)
        g, m = evaluate(net, test_samples, snr_db=eval_snr, seed=seed)
        table.add(scheme=variant, bin="all", nmse_global=g, nmse_mean=m,
                  n=len(test_samples), seed=seed)
        if log:
            log(f"ablation {variant}: test NMSE {g:.4f}")
    return table


def make_datasets(cfg: ExperimentConfig, out_dir, seed: int = 0):
    """Generate the train/test dataset pair for an experiment config."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_path = out_dir / "train.isac"
    test_path = out_dir / "test.isac"
    generate_dataset(train_path, cfg.scenario, cfg.grid, cfg.model.p,
                     cfg.model.q, cfg.n_train, seed)
    generate_dataset(test_path, cfg.scenario, cfg.grid, cfg.model.p,
                     cfg.model.q, cfg.n_test, seed + 1)
    return train_path, test_path
