"""Image ingestion, splitting, Ising-like corruption masks and mean imputation."""
from __future__ import annotations

import functools
import gzip
import logging
import math
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._backend import kernels
from .distributions import RngState

log = logging.getLogger(__name__)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
MASK_MAGIC = b"TVMK"
SIDE = 28
PIXELS = SIDE * SIDE

SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxFormatError(ValueError):
    pass


@dataclass
class ImageDataset:
    images: np.ndarray
    labels: np.ndarray | None = None
    masks: np.ndarray | None = None
    column_means: np.ndarray | None = None

    def __len__(self) -> int:
        return self.images.shape[0]

    def subset(self, idx) -> ImageDataset:
        return ImageDataset(
            images=self.images[idx],
            labels=None if self.labels is None else self.labels[idx],
            masks=None if self.masks is None else self.masks[idx],
            column_means=self.column_means,
        )


def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def _read_idx(path, expected_magic: int) -> np.ndarray:
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise IdxFormatError(f"{path}: file too short for an IDX header ({len(raw)} bytes)")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise IdxFormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxFormatError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    need = math.prod(dims)
    if len(raw) - header < need:
        raise IdxFormatError(f"{path}: truncated payload, expected {need} bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, count=need, offset=header).reshape(dims)


def read_idx_bytes(path) -> np.ndarray:
    """Raw uint8 image tensor (N, 28, 28) from an IDX3 file."""
    return _read_idx(path, IMAGE_MAGIC)


def load_idx_images(path, labels_path=None) -> ImageDataset:
    """Images as an (N, 784) float matrix scaled by 1/255."""
    raw = read_idx_bytes(path)
    images = raw.reshape(raw.shape[0], -1).astype(np.float64) / 255.0
    labels = None
    if labels_path is not None:
        labels = load_idx_labels(labels_path)
        if labels.shape[0] != images.shape[0]:
            raise IdxFormatError(f"{labels_path}: {labels.shape[0]} labels for {images.shape[0]} images")
    return ImageDataset(images=images, labels=labels)


def load_idx_labels(path) -> np.ndarray:
    return _read_idx(path, LABEL_MAGIC).copy()


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.asarray(images)
    if images.dtype != np.uint8:
        images = np.round(np.clip(images, 0.0, 1.0) * 255.0).astype(np.uint8)
    images = images.reshape(images.shape[0], SIDE, SIDE)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, *images.shape))
        fh.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


def _find(data_dir: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (data_dir / name).exists():
            return data_dir / name
    raise FileNotFoundError(f"{data_dir / stem} (or .gz) not found")


def load_split(data_dir, split: str, limit: int = 0) -> ImageDataset:
    """Load the train or test split from a directory of MNIST-layout IDX files."""
    if split not in SPLIT_FILES:
        raise ValueError(f"unknown split {split!r}")
    data_dir = Path(data_dir)
    img_name, lab_name = SPLIT_FILES[split]
    img_path = _find(data_dir, img_name)
    try:
        lab_path = _find(data_dir, lab_name)
    except FileNotFoundError:
        lab_path = None
    ds = load_idx_images(img_path, lab_path)
    if limit:
        ds = ds.subset(slice(0, limit))
    return ds


def split_train_val(ds: ImageDataset, fraction: float, seed: int) -> tuple[ImageDataset, ImageDataset]:
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    n = len(ds)
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(round(n * fraction))
    val_idx = np.sort(order[:n_val])
    train_idx = np.sort(order[n_val:])
    return ds.subset(train_idx), ds.subset(val_idx)


# --- Ising masks -----------------------------------------------------------

@dataclass(frozen=True)
class IsingConfig:
    """Square-lattice spin model; spins of +1 mark corrupted pixels.

    ``external_field=None`` means calibrate the field so that the expected
    corrupted fraction matches ``target_fraction``.
    """

    coupling: float = 0.35
    external_field: float | None = None
    sweeps: int = 60
    target_fraction: float = 0.78

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if not 0.0 < self.target_fraction < 1.0:
            raise ValueError("target_fraction must be in (0, 1)")
        if self.coupling < 0:
            raise ValueError("coupling must be non-negative")


PILOT_MASKS = 64
PILOT_SEED = 0x15196


def _up_prob_table(coupling: float, field: float) -> np.ndarray:
    # P(s = +1 | neighbour sum k) for k = -4..4
    return np.array([1.0 / (1.0 + math.exp(-2.0 * (coupling * k + field))) for k in range(-4, 5)])


def _run_lattices(rng: RngState, count: int, coupling: float, field: float, sweeps: int,
                  init_fraction: float) -> np.ndarray:
    spins = np.where(rng.uniform((count, SIDE, SIDE)) < init_fraction, 1, -1).astype(np.int8)
    table = _up_prob_table(coupling, field)
    for _ in range(sweeps):
        kernels.ising_sweep(spins, table, rng.uniform((count, SIDE, SIDE)))
    return spins.reshape(count, PIXELS) > 0


@functools.lru_cache(maxsize=32)
def calibrate_field(coupling: float, sweeps: int, target_fraction: float, tol: float = 0.01) -> float:
    """Bisection on the field until a fixed pilot batch hits the target fraction."""
    lo, hi = -4.0, 4.0
    mid = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        frac = _run_lattices(RngState(PILOT_SEED), PILOT_MASKS, coupling, mid, sweeps, target_fraction).mean()
        if abs(frac - target_fraction) <= tol:
            break
        if frac < target_fraction:
            lo = mid
        else:
            hi = mid
    log.debug("calibrated field %.6f for J=%g", mid, coupling)
    return mid


def resolve_field(cfg: IsingConfig) -> float:
    if cfg.external_field is not None:
        return cfg.external_field
    return calibrate_field(cfg.coupling, cfg.sweeps, cfg.target_fraction)


def generate_ising_masks(rng: RngState, cfg: IsingConfig, count: int) -> np.ndarray:
    """(count, 784) boolean masks, True = corrupted."""
    return _run_lattices(rng, count, cfg.coupling, resolve_field(cfg), cfg.sweeps, cfg.target_fraction)


def generate_ising_mask(rng: RngState, cfg: IsingConfig) -> np.ndarray:
    return generate_ising_masks(rng, cfg, 1)[0]


def neighbor_agreement(masks: np.ndarray) -> np.ndarray:
    """Per-mask fraction of 4-neighbour pairs with equal bits."""
    m = np.asarray(masks, dtype=bool).reshape(-1, SIDE, SIDE)
    horiz = m[:, :, 1:] == m[:, :, :-1]
    vert = m[:, 1:, :] == m[:, :-1, :]
    pairs = horiz[0].size + vert[0].size
    return (horiz.sum(axis=(1, 2)) + vert.sum(axis=(1, 2))) / pairs


def masks_for_split(cfg: IsingConfig, seed: int, split: str, count: int) -> np.ndarray:
    """Fixed per-image masks: image i of a split always gets the same mask."""
    tag = {"train": 1, "test": 2}[split]
    return generate_ising_masks(RngState.derive(seed, tag), cfg, count)


def write_mask_cache(path, masks: np.ndarray) -> None:
    masks = np.asarray(masks, dtype=bool).reshape(-1, PIXELS)
    with open(path, "wb") as fh:
        fh.write(MASK_MAGIC)
        fh.write(struct.pack("<BI", 1, masks.shape[0]))
        fh.write(np.packbits(masks.ravel()).tobytes())


def read_mask_cache(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MASK_MAGIC:
        raise IdxFormatError(f"{path}: bad mask magic {raw[:4]!r}")
    version, count = struct.unpack("<BI", raw[4:9])
    if version != 1:
        raise IdxFormatError(f"{path}: unsupported mask cache version {version}")
    nbytes = (count * PIXELS + 7) // 8
    if len(raw) - 9 < nbytes:
        raise IdxFormatError(f"{path}: truncated mask payload")
    bits = np.unpackbits(np.frombuffer(raw, np.uint8, nbytes, 9), count=count * PIXELS)
    return bits.reshape(count, PIXELS).astype(bool)


# --- imputation -----------------------------------------------------------

def column_means(images: np.ndarray, masks: np.ndarray | None) -> np.ndarray:
    """Per-pixel mean over entries that are not masked."""
    images = np.asarray(images, dtype=np.float64)
    if masks is None:
        return images.mean(axis=0)
    keep = ~np.asarray(masks, dtype=bool)
    counts = keep.sum(axis=0)
    sums = (images * keep).sum(axis=0)
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    if np.any(counts == 0):
        fallback = sums.sum() / max(counts.sum(), 1)
        warnings.warn(f"{int((counts == 0).sum())} pixel(s) masked in every image; using global mean "
                      f"{fallback:.4f}", RuntimeWarning, stacklevel=2)
        means[counts == 0] = fallback
    return means


def mean_impute(batch: np.ndarray, masks: np.ndarray, means: np.ndarray) -> np.ndarray:
    if means is None:
        raise ValueError("column means are required for imputation")
    masks = np.asarray(masks, dtype=bool)
    return np.where(masks, np.broadcast_to(means, np.shape(batch)), batch)


# --- synthetic stand-in data -------------------------------------------------

def _blur(img: np.ndarray, sigma: float) -> np.ndarray:
    radius = max(1, int(3 * sigma + 0.5))
    k = np.exp(-0.5 * (np.arange(-radius, radius + 1) / sigma) ** 2)
    k /= k.sum()
    pad = np.pad(img, radius, mode="constant")
    tmp = np.apply_along_axis(lambda r: np.convolve(r, k, mode="valid"), 1, pad)
    return np.apply_along_axis(lambda c: np.convolve(c, k, mode="valid"), 0, tmp)


def _garment(cls: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:SIDE, 0:SIDE].astype(np.float64)
    s = rng.uniform(0.85, 1.1)
    cy = 14 + rng.uniform(-1.5, 1.5)
    cx = 14 + rng.uniform(-1.5, 1.5)
    y = (yy - cy) / s
    x = (xx - cx) / s
    w = rng.uniform(0.8, 1.2)

    def box(y0, y1, x0, x1):
        return (y >= y0) & (y <= y1) & (x >= x0) & (x <= x1)

    if cls in (0, 2, 4, 6):  # tops
        torso_w = 6.5 * w
        shape = box(-9, 11, -torso_w, torso_w)
        sleeve_len = 5 if cls == 0 else 19
        rise = 0.4 * (np.abs(x) - torso_w)
        sleeves = (np.abs(x) > torso_w - 1) & (np.abs(x) < torso_w + 4.5) & (y > -9 + rise) & (y < -9 + sleeve_len + rise)
        shape = shape | sleeves
        neck = ((x / 2.5) ** 2 + ((y + 9) / 2.0) ** 2) < 1
        shape &= ~neck
    elif cls == 1:  # trousers
        gap = rng.uniform(0.5, 1.5)
        leg = 3.5 * w
        shape = box(-11, -6, -leg - gap, leg + gap) | box(-6, 12, gap, gap + leg) | box(-6, 12, -gap - leg, -gap)
    elif cls == 3:  # dress
        half = 3.5 * w + (y + 10) * rng.uniform(0.18, 0.3)
        shape = (y > -10) & (y < 12) & (np.abs(x) < half)
    elif cls == 5:  # sandal
        base = box(4, 6, -11, 11)
        straps = (box(-2, 4, -9, 9)) & (np.sin(x * rng.uniform(1.0, 1.6)) > 0.2)
        shape = base | straps
    elif cls == 7:  # sneaker
        shape = box(1, 6, -12, 11) | (box(-4, 6, -4, 11) & (y > -4 + 0.3 * (11 - x) * 0))
        shape &= ~((x > 9) & (y < 2))
    elif cls == 8:  # bag
        body = box(-3, 10, -10 * w, 10 * w)
        r = np.hypot(x, y + 3)
        handle = (r > 5) & (r < 7) & (y < -3)
        shape = body | handle
    else:  # ankle boot
        shape = box(-10, 6, -2, 7) | box(1, 7, -11, 7)
    img = shape.astype(np.float64)
    base = rng.uniform(0.35, 0.95)
    texture = _blur(rng.normal(0.0, 0.25, (SIDE, SIDE)), 1.5)
    stripes = 0.0
    if rng.random() < 0.3:
        stripes = 0.2 * np.sin(yy * rng.uniform(0.8, 2.0) + rng.uniform(0, 6.28))
    shade = np.clip(base + texture + stripes + 0.01 * (y - 0) * rng.uniform(-1, 1), 0.05, 1.0)
    if cls in (4, 6):  # opening / button placket
        shade = np.where(np.abs(x) < 0.6, shade * 0.4, shade)
    img = _blur(img * shade, rng.uniform(0.5, 0.8))
    return np.clip(img, 0.0, 1.0)


def synthetic_fashion(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Garment-like 28x28 grayscale images (uint8) and class labels.

    Stand-in when the real Fashion-MNIST files are not available.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, n).astype(np.uint8)
    images = np.empty((n, SIDE, SIDE), dtype=np.uint8)
    for i, c in enumerate(labels):
        images[i] = np.round(_garment(int(c), rng) * 255.0).astype(np.uint8)
    return images, labels


def write_synthetic_dataset(data_dir, n_train: int = 6000, n_test: int = 1000, seed: int = 2024) -> Path:
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    for split, n, tag in (("train", n_train, 0), ("test", n_test, 1)):
        images, labels = synthetic_fashion(n, seed + tag)
        img_name, lab_name = SPLIT_FILES[split]
        write_idx_images(data_dir / img_name, images)
        write_idx_labels(data_dir / lab_name, labels)
    return data_dir
