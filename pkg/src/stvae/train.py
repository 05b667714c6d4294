"""Training loop, evaluation, imputation export, sampling and random search."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import TrainConfig, format_config
from .data import (IsingConfig, ImageDataset, column_means, load_split, masks_for_split,
                   mean_impute, split_train_val)
from .distributions import RngState, student_t_latent
from .metrics import export_pgm_grid, ssim_batch, write_metrics_csv
from .model import VAE
from .objectives import elbo_loss
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)

LOG_HEADER = ("epoch", "train_loss", "val_loss", "recon", "kl", "wall_seconds")
CHECKPOINT_NAME = "best.tvae"
LOG_NAME = "train_log.csv"


class TrainingDiverged(RuntimeError):
    pass


# Integer tags for independent random streams derived from the config seed.
_INIT, _NOISE, _SHUFFLE, _VAL = 10, 11, 12, 13


@dataclass
class PreparedData:
    """Model inputs (mean-imputed when masking), targets and loss masks."""

    train: ImageDataset
    val: ImageDataset
    means: np.ndarray | None = None

    @staticmethod
    def inputs(ds: ImageDataset, means) -> np.ndarray:
        if ds.masks is None:
            return ds.images
        return mean_impute(ds.images, ds.masks, means)


def prepare_training_data(cfg: TrainConfig, data_dir) -> PreparedData:
    full = load_split(data_dir, "train", cfg.train_images)
    if cfg.masking is not None:
        full.masks = masks_for_split(cfg.masking, cfg.seed, "train", len(full))
    train_ds, val_ds = split_train_val(full, cfg.val_fraction, cfg.seed)
    means = None
    if cfg.masking is not None:
        means = column_means(train_ds.images, train_ds.masks)
        train_ds.column_means = val_ds.column_means = means
    return PreparedData(train_ds, val_ds, means)


def batch_loss(model: VAE, x_in: np.ndarray, x_target: np.ndarray, mask, rng: RngState):
    cfg = model.cfg
    return elbo_loss(x_target, mask, model.encode(x_in), model.decode, cfg.prior, rng,
                     mc_samples=cfg.kl_mc_samples, kl_weight=cfg.kl_weight)


def dataset_loss(model: VAE, ds: ImageDataset, means, rng: RngState, batch_size: int = 512):
    """Size-weighted mean (total, recon, kl) over a dataset; no gradients kept."""
    x_in = PreparedData.inputs(ds, means)
    totals = np.zeros(3)
    for start in range(0, len(ds), batch_size):
        sl = slice(start, start + batch_size)
        mask = None if ds.masks is None else ds.masks[sl]
        terms = batch_loss(model, x_in[sl], x_in[sl], mask, rng)
        r, k, t = terms.values()
        totals += np.array([t, r, k]) * x_in[sl].shape[0]
    return totals / len(ds)


def _snapshot(model: VAE, adam: AdamState, best: float, cfg: TrainConfig) -> Checkpoint:
    weights = [(W.value.copy(), b.value.copy()) for W, b in model.layers]
    state = AdamState(m=[a.copy() for a in adam.m], v=[a.copy() for a in adam.v], t=adam.t)
    return Checkpoint(cfg, weights, state, best, cfg.seed)


def train(cfg: TrainConfig, data_dir, out_dir, data: PreparedData | None = None) -> Checkpoint:
    """Train for ``cfg.epochs`` epochs, keeping the best-validation checkpoint.

    Writes ``best.tvae`` and ``train_log.csv`` into ``out_dir``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = data or prepare_training_data(cfg, data_dir)
    train_ds, val_ds, means = data.train, data.val, data.means
    x_train = PreparedData.inputs(train_ds, means)

    model = VAE.initialize(cfg, x_train.shape[1], RngState.derive(cfg.seed, _INIT))
    params = model.parameters
    adam = AdamState.zeros_like(params)
    noise = RngState.derive(cfg.seed, _NOISE)
    shuffle = np.random.default_rng(RngState.derive(cfg.seed, _SHUFFLE).seed)

    best = math.inf
    best_ckpt = None
    ckpt_path = out_dir / CHECKPOINT_NAME
    log_path = out_dir / LOG_NAME
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_HEADER)
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            sums = np.zeros(3)
            order = shuffle.permutation(len(train_ds))
            for start in range(0, len(order), cfg.batch_size):
                idx = np.sort(order[start:start + cfg.batch_size])
                mask = None if train_ds.masks is None else train_ds.masks[idx]
                terms = batch_loss(model, x_train[idx], x_train[idx], mask, noise)
                ad.backward(terms.total)
                grads = [p.grad for p in params]
                r, k, t = terms.values()
                if not all(math.isfinite(v) for v in (r, k, t)) or not all(np.isfinite(g).all() for g in grads):
                    fh.flush()
                    raise TrainingDiverged(f"non-finite loss at epoch {epoch}; last good checkpoint kept "
                                           f"at {ckpt_path if best_ckpt else '(none)'}")
                adam_step(params, grads, adam, cfg.lr)
                model.zero_grad()
                sums += np.array([t, r, k]) * len(idx)
            train_total, recon, kl = sums / len(train_ds)
            val_total = dataset_loss(model, val_ds, means, RngState.derive(cfg.eval_seed, _VAL))[0]
            wall = time.perf_counter() - t0
            writer.writerow([epoch, *(repr(float(v)) for v in (train_total, val_total, recon, kl)), f"{wall:.3f}"])
            fh.flush()
            log.info("epoch %d train %.4f val %.4f (recon %.4f kl %.4f) %.1fs",
                     epoch, train_total, val_total, recon, kl, wall)
            if not math.isfinite(val_total):
                raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
            if val_total < best:
                best = val_total
                best_ckpt = _snapshot(model, adam, best, cfg)
                save_checkpoint(ckpt_path, best_ckpt)
    return best_ckpt


def read_train_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class EvalReport:
    rows: list[dict]
    mean_neg_elbo: float
    per_image_ssim: np.ndarray = field(repr=False)
    baseline_ssim: np.ndarray | None = field(default=None, repr=False)


def _load(checkpoint) -> Checkpoint:
    return checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)


def reconstruct(model: VAE, x_in: np.ndarray, rng: RngState, batch_size: int = 512) -> np.ndarray:
    """Decoder means for one latent draw per image."""
    out = np.empty_like(x_in)
    for start in range(0, x_in.shape[0], batch_size):
        sl = slice(start, start + batch_size)
        enc = model.encode(x_in[sl])
        if model.cfg.prior == "gaussian":
            mu, log_var = enc
            z = mu.value + np.exp(0.5 * log_var.value) * rng.standard_normal(mu.shape)
        else:
            z = student_t_latent(*enc, rng).value
        out[sl] = model.decode_mean(z)
    return out


def _test_data(ckpt: Checkpoint, data_dir, split: str, mask_seed: int | None = None):
    cfg = ckpt.config
    ds = load_split(data_dir, split, cfg.test_images)
    if ds.images.shape[1] != ckpt.input_dim:
        raise ValueError(f"data has {ds.images.shape[1]} pixels but the checkpoint expects {ckpt.input_dim}")
    means = None
    if cfg.masking is not None:
        ds.masks = masks_for_split(cfg.masking, cfg.seed if mask_seed is None else mask_seed, split, len(ds))
        means = prepare_training_data(cfg, data_dir).means
    return ds, means


def evaluate(checkpoint, data_dir, split: str = "test") -> EvalReport:
    """Mean SSIM of reconstructions against the original images, plus mean negative ELBO.

    With masking on, a ``mean_impute`` row scores the imputed inputs themselves.
    """
    ckpt = _load(checkpoint)
    cfg = ckpt.config
    model = VAE.from_arrays(cfg, ckpt.weights)
    ds, means = _test_data(ckpt, data_dir, split)
    x_in = PreparedData.inputs(ds, means)
    recon = reconstruct(model, x_in, RngState(cfg.eval_seed))
    scores = ssim_batch(ds.images, recon)
    neg_elbo = dataset_loss(model, ds, means, RngState.derive(cfg.eval_seed, _VAL))[0]
    rows = [dict(model="model", split=split, mean_ssim=float(scores.mean()), n_images=len(ds), seed=cfg.eval_seed)]
    baseline = None
    if ds.masks is not None:
        baseline = ssim_batch(ds.images, x_in)
        rows.append(dict(model="mean_impute", split=split, mean_ssim=float(baseline.mean()),
                         n_images=len(ds), seed=cfg.eval_seed))
    return EvalReport(rows, float(neg_elbo), scores, baseline)


IMPUTE_GRIDS = ("originals", "masks", "corrupted", "mean_imputed", "reconstructions")


def impute(checkpoint, data_dir, mask_seed: int, out_dir, n_show: int = 11) -> EvalReport:
    """Write the five comparison grids and a metrics CSV for masked test images."""
    ckpt = _load(checkpoint)
    cfg = ckpt.config
    if cfg.masking is None:
        raise ValueError("impute needs a checkpoint trained with masking")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = VAE.from_arrays(cfg, ckpt.weights)
    ds, means = _test_data(ckpt, data_dir, "test", mask_seed)
    x_in = PreparedData.inputs(ds, means)
    recon = reconstruct(model, x_in, RngState(cfg.eval_seed))
    scores = ssim_batch(ds.images, recon)
    baseline = ssim_batch(ds.images, x_in)
    k = min(n_show, len(ds))
    grids = {
        "originals": ds.images[:k],
        "masks": ds.masks[:k].astype(np.float64),
        "corrupted": np.where(ds.masks[:k], 0.0, ds.images[:k]),
        "mean_imputed": x_in[:k],
        "reconstructions": recon[:k],
    }
    for name in IMPUTE_GRIDS:
        export_pgm_grid(list(grids[name]), k, out_dir / f"{name}.pgm")
    rows = [
        dict(model="model", split="test", mean_ssim=float(scores.mean()), n_images=len(ds), seed=mask_seed),
        dict(model="mean_impute", split="test", mean_ssim=float(baseline.mean()), n_images=len(ds), seed=mask_seed),
    ]
    write_metrics_csv(out_dir / "metrics.csv", rows)
    return EvalReport(rows, float("nan"), scores, baseline)


def prior_nu(model: VAE) -> float:
    """Degrees of freedom the nu head assigns to a blank image."""
    nu = model.encode(np.zeros((1, model.input_dim)))[2]
    return nu.item()


def sample(checkpoint, n: int, out_dir, seed: int = 0, nu: float | None = None, cols: int = 10) -> np.ndarray:
    """Decode ``n`` prior draws and write them as ``samples.pgm``."""
    ckpt = _load(checkpoint)
    model = VAE.from_arrays(ckpt.config, ckpt.weights)
    rng = RngState(seed)
    p = ckpt.config.latent_dim
    if ckpt.config.prior == "gaussian":
        z = rng.standard_normal((n, p))
    else:
        nu = prior_nu(model) if nu is None else float(nu)
        x = rng.standard_normal((n, p))
        g = 2.0 * rng.gamma(np.full((n, 1), 0.5 * nu))
        z = x / np.sqrt(g / nu)
    images = model.decode_mean(z)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    export_pgm_grid(list(images), min(cols, n), out_dir / "samples.pgm")
    return images


@dataclass(frozen=True)
class SearchSpace:
    hidden: tuple[int, int] = (64, 512)
    lr: tuple[float, float] = (1e-4, 3e-3)
    activations: tuple[str, ...] = ("relu", "tanh")
    batch_sizes: tuple[int, ...] = (64, 128, 256, 500)


@dataclass
class Trial:
    index: int
    config: TrainConfig
    best_val_loss: float = math.nan


def sample_trials(base: TrainConfig, n_trials: int, seed: int, space: SearchSpace = SearchSpace()) -> list[Trial]:
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    rng = np.random.default_rng(seed)
    trials = []
    p = base.latent_dim
    for i in range(n_trials):
        n_hidden = max(1, len(base.encoder_layers) - 1)
        enc = tuple(int(rng.integers(space.hidden[0], space.hidden[1] + 1)) for _ in range(n_hidden)) + (p,)
        dec = (p, int(rng.integers(space.hidden[0], space.hidden[1] + 1)))
        lr = float(math.exp(rng.uniform(math.log(space.lr[0]), math.log(space.lr[1]))))
        act = str(space.activations[rng.integers(len(space.activations))])
        bs = int(space.batch_sizes[rng.integers(len(space.batch_sizes))])
        cfg = base.replace(encoder_layers=enc, decoder_layers=dec, lr=lr, activation=act, batch_size=bs)
        trials.append(Trial(i, cfg))
    return trials


def random_search(base: TrainConfig, n_trials: int, seed: int, data_dir, out_dir,
                  space: SearchSpace = SearchSpace()) -> list[Trial]:
    """Train each sampled configuration and rank by best validation loss."""
    out_dir = Path(out_dir)
    trials = sample_trials(base, n_trials, seed, space)
    data_cache = {}
    for trial in trials:
        key = (trial.config.train_images, trial.config.seed, trial.config.masking, trial.config.val_fraction)
        if key not in data_cache:
            data_cache[key] = prepare_training_data(trial.config, data_dir)
        ckpt = train(trial.config, data_dir, out_dir / f"trial_{trial.index:03d}", data=data_cache[key])
        trial.best_val_loss = float(ckpt.best_val_loss) if ckpt is not None else math.inf
    ranked = sorted(trials, key=lambda t: t.best_val_loss)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "trials.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("rank", "trial", "best_val_loss", "encoder_layers", "decoder_layers", "activation",
                    "lr", "batch_size"))
        for rank, t in enumerate(ranked, 1):
            c = t.config
            w.writerow((rank, t.index, repr(float(t.best_val_loss)), " ".join(map(str, c.encoder_layers)),
                        " ".join(map(str, c.decoder_layers)), c.activation, repr(c.lr), c.batch_size))
    return ranked

