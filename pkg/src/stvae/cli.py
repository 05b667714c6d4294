"""Command-line entry point: ``stvae <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import train as trainer
from ._backend import BACKEND
from .config import ConfigError, load_config, load_preset, preset_names
from .data import IsingConfig, generate_ising_masks, write_mask_cache, write_synthetic_dataset
from .distributions import RngState
from .metrics import METRICS_HEADER


def _config(arg: str):
    if Path(arg).exists():
        return load_config(arg)
    if arg in preset_names():
        return load_preset(arg)
    raise ConfigError(f"{arg}: no such config file or preset ({', '.join(preset_names())})")


def _print_rows(rows, out=None) -> None:
    stream = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.writer(stream)
        w.writerow(METRICS_HEADER)
        for row in rows:
            w.writerow([row[k] for k in METRICS_HEADER])
    finally:
        if out:
            stream.close()


def cmd_train(args) -> int:
    cfg = _config(args.config)
    ckpt = trainer.train(cfg, args.data_dir, args.out)
    print(f"best validation loss {ckpt.best_val_loss:.4f}; checkpoint {Path(args.out) / trainer.CHECKPOINT_NAME}")
    return 0


def cmd_eval(args) -> int:
    report = trainer.evaluate(args.checkpoint, args.data_dir, args.split)
    _print_rows(report.rows, args.out)
    print(f"mean negative ELBO {report.mean_neg_elbo:.4f}", file=sys.stderr)
    return 0


def cmd_impute(args) -> int:
    report = trainer.impute(args.checkpoint, args.data_dir, args.mask_seed, args.out, n_show=args.n)
    _print_rows(report.rows)
    return 0


def cmd_sample(args) -> int:
    trainer.sample(args.checkpoint, args.n, args.out, seed=args.seed, nu=args.nu)
    print(f"wrote {Path(args.out) / 'samples.pgm'}")
    return 0


def cmd_make_masks(args) -> int:
    cfg = IsingConfig(coupling=args.coupling, sweeps=args.sweeps, target_fraction=args.target_fraction)
    masks = generate_ising_masks(RngState(args.seed), cfg, args.count)
    write_mask_cache(args.out, masks)
    frac = masks.mean(axis=1)
    print(f"{args.count} masks, corrupted fraction mean {frac.mean():.4f} sd {frac.std():.4f}")
    return 0


def cmd_search(args) -> int:
    base = _config(args.config)
    ranked = trainer.random_search(base, args.trials, args.seed, args.data_dir, args.out)
    for rank, t in enumerate(ranked, 1):
        c = t.config
        print(f"{rank:3d}  val {t.best_val_loss:.4f}  enc {list(c.encoder_layers)} dec {list(c.decoder_layers)} "
              f"{c.activation} lr {c.lr:.2e} batch {c.batch_size}")
    return 0


def cmd_synth_data(args) -> int:
    path = write_synthetic_dataset(args.out, args.train, args.test, args.seed)
    print(f"wrote synthetic IDX files to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stvae", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file or preset name")
    p.add_argument("--config", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="mean SSIM and negative ELBO of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--out", help="write the CSV report here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("impute", help="export imputation grids for masked test images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--mask-seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("-n", type=int, default=11, help="images per grid")
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("sample", help="decode draws from the prior")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nu", type=float, help="prior degrees of freedom (Student-t models)")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("make-masks", help="write an Ising mask cache file")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--coupling", type=float, default=IsingConfig.coupling)
    p.add_argument("--sweeps", type=int, default=IsingConfig.sweeps)
    p.add_argument("--target-fraction", type=float, default=IsingConfig.target_fraction)
    p.set_defaults(func=cmd_make_masks)

    p = sub.add_parser("search", help="seeded random hyperparameter search")
    p.add_argument("--config", required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--data-dir", default="data")
    p.add_argument("--out", default="search_out")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("synth-data", help="write a synthetic garment dataset in IDX format")
    p.add_argument("--out", required=True)
    p.add_argument("--train", type=int, default=6000)
    p.add_argument("--test", type=int, default=1000)
    p.add_argument("--seed", type=int, default=2024)
    p.set_defaults(func=cmd_synth_data)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger(__name__).info("kernel backend: %s", BACKEND)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError, trainer.TrainingDiverged) as exc:
        print(f"stvae {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
