"""Command-line harness: dataset generation, training, evaluation sweeps."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .channel import load_dataset
from .errors import IsacError
from .experiment import (ExperimentConfig, PRESETS, ResultTable, make_datasets,
                         run_ablation, sweep_snr, sweep_speed, variant_config)
from .model import SensingAssistedPredictor
from .preprocess import NO_NOISE
from .svgplot import line_chart
from .train import evaluate, train


def _limit_threads():
    cap = os.environ.get("ISAC_THREADS")
    if not cap:
        return
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(int(cap))
    except Exception:
        pass


def _load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = PRESETS[args.preset]()
    if args.seed is not None:
        cfg.train.seed = args.seed
    return cfg


def _data_seed(args) -> int:
    return args.seed if args.seed is not None else 0


def _echo_config(cfg: ExperimentConfig, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.save(out_dir / "config.json")


def _load_sets(cfg, data_dir: Path, seed: int):
    train_path = data_dir / "train.isac"
    test_path = data_dir / "test.isac"
    if not train_path.exists() or not test_path.exists():
        make_datasets(cfg, data_dir, seed=seed)
    _, train_samples = load_dataset(train_path)
    _, test_samples = load_dataset(test_path)
    return train_samples, test_samples


def _split_val(train_samples, frac: float = 0.1):
    n_val = max(1, int(len(train_samples) * frac))
    return train_samples[:-n_val], train_samples[-n_val:]


def _restore(cfg, checkpoint, variant="full"):
    net = SensingAssistedPredictor(variant_config(cfg.model, variant),
                                   seed=cfg.train.seed)
    net.store.load(checkpoint)
    return net


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    _echo_config(cfg, out)
    train_path, test_path = make_datasets(cfg, out, seed=_data_seed(args))
    hdr, _ = load_dataset(train_path)
    print(f"wrote {train_path} ({cfg.n_train} samples) and "
          f"{test_path} ({cfg.n_test} samples)")
    print(f"P={hdr.p} Q={hdr.q} K={hdr.k} N={hdr.n} "
          f"delta_f={hdr.delta_f:g} f_c={hdr.f_c:g} "
          f"slot={hdr.slot_duration:g}s")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    _echo_config(cfg, out)
    data_dir = Path(args.data) if args.data else out
    train_samples, _ = _load_sets(cfg, data_dir, _data_seed(args))
    tr, val = _split_val(train_samples)
    net = SensingAssistedPredictor(cfg.model, seed=cfg.train.seed)
    report = train(net, tr, val, cfg.train, out_dir=out, log=print)
    print(f"best val NMSE {report.best_val:.5f} at epoch {report.best_epoch}; "
          f"checkpoint {report.best_checkpoint}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    data_dir = Path(args.data) if args.data else Path(args.out)
    _, test_samples = _load_sets(cfg, data_dir, _data_seed(args))
    net = _restore(cfg, args.checkpoint)
    snr = NO_NOISE if args.snr_db is None else args.snr_db
    g, m = evaluate(net, test_samples, snr_db=snr, seed=cfg.train.seed)
    print(f"test NMSE: global {g:.5f}, per-sample mean {m:.5f} "
          f"({len(test_samples)} samples)")
    return 0


def _emit_table(table: ResultTable, out: Path, name: str, plot: bool,
                x_label: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{name}.csv"
    table.to_csv(csv_path)
    print(table.to_csv(), end="")
    print(f"wrote {csv_path}")
    if plot:
        series = {}
        for r in table.rows:
            x = float(r.bin.split("-")[0]) if "-" in r.bin else float(r.bin)
            series.setdefault(r.scheme, []).append((x, r.nmse_global))
        svg = out / f"{name}.svg"
        line_chart(series, svg, x_label=x_label)
        print(f"wrote {svg}")


def _sweep_nets(cfg, args):
    nets = {"full": _restore(cfg, args.checkpoint)}
    if args.checkpoint_no_sensing:
        nets["no_sensing"] = _restore(cfg, args.checkpoint_no_sensing,
                                      variant="no_sensing")
    return nets


def cmd_sweep_speed(args) -> int:
    cfg = _load_config(args)
    data_dir = Path(args.data) if args.data else Path(args.out)
    _, test_samples = _load_sets(cfg, data_dir, _data_seed(args))
    table = sweep_speed(_sweep_nets(cfg, args), test_samples,
                        seed=cfg.train.seed,
                        warn=lambda m: print(f"warning: {m}", file=sys.stderr))
    _emit_table(table, Path(args.out), "sweep_speed", args.plot, "speed (km/h)")
    return 0


def cmd_sweep_snr(args) -> int:
    cfg = _load_config(args)
    data_dir = Path(args.data) if args.data else Path(args.out)
    _, test_samples = _load_sets(cfg, data_dir, _data_seed(args))
    snrs = [float(s) for s in args.snr.split(",")] if args.snr \
        else [0, 5, 10, 15, 20, 25]
    table = sweep_snr(_sweep_nets(cfg, args), test_samples, snrs,
                      seed=cfg.train.seed)
    _emit_table(table, Path(args.out), "sweep_snr", args.plot, "SNR (dB)")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    _echo_config(cfg, out)
    data_dir = Path(args.data) if args.data else out
    train_samples, test_samples = _load_sets(cfg, data_dir, _data_seed(args))
    tr, val = _split_val(train_samples)
    table = run_ablation(cfg, tr, val, test_samples, seed=cfg.train.seed,
                         out_dir=out, log=print)
    csv_path = out / "ablation.csv"
    table.to_csv(csv_path)
    print(table.to_csv(), end="")
    print(f"wrote {csv_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="isac-predict",
                                 description="Sensing-assisted OFDM channel "
                                             "prediction harness")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--preset", default="desk", choices=sorted(PRESETS),
                       help="built-in config preset (if --config not given)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default="runs/out", help="output directory")
        p.add_argument("--data", default=None,
                       help="dataset directory (defaults to --out)")
        if checkpoint:
            p.add_argument("--checkpoint", required=True)
            p.add_argument("--checkpoint-no-sensing", default=None)
            p.add_argument("--plot", action="store_true",
                           help="emit an SVG chart next to the CSV")

    common(sub.add_parser("generate", help="synthesize train/test datasets"))
    common(sub.add_parser("train", help="train the predictor"))
    pe = sub.add_parser("eval", help="evaluate a checkpoint")
    common(pe)
    pe.add_argument("--checkpoint", required=True)
    pe.add_argument("--snr-db", type=float, default=None,
                    help="noisy-history SNR (default: clean)")
    ps = sub.add_parser("sweep-speed", help="NMSE vs MU speed")
    common(ps, checkpoint=True)
    pn = sub.add_parser("sweep-snr", help="NMSE vs historical-CSI SNR")
    common(pn, checkpoint=True)
    pn.add_argument("--snr", default=None, help="comma list of SNRs in dB")
    common(sub.add_parser("ablate", help="train and score ablation variants"))
    return ap


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval,
            "sweep-speed": cmd_sweep_speed, "sweep-snr": cmd_sweep_snr,
            "ablate": cmd_ablate}


def main(argv=None) -> int:
    _limit_threads()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except IsacError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
