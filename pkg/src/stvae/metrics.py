"""SSIM scoring, PGM image grids and the metrics CSV."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import DimensionError

SIDE = 28
METRICS_HEADER = ("model", "split", "mean_ssim", "n_images", "seed")


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    gaussian_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    def __post_init__(self):
        if self.window % 2 != 1 or not 1 <= self.window <= SIDE:
            raise ValueError(f"window must be odd and <= {SIDE}, got {self.window}")
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("k1 and k2 must be positive")


def _gauss_1d(cfg: SsimConfig) -> np.ndarray:
    r = cfg.window // 2
    k = np.exp(-0.5 * (np.arange(-r, r + 1) / cfg.gaussian_sigma) ** 2)
    return k / k.sum()


def _filter_valid(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    # Separable weighted mean over every window lying fully inside the frame.
    # img: (..., H, W)
    n = k.size
    h, w = img.shape[-2:]
    rows = sum(k[i] * img[..., i:h - n + 1 + i, :] for i in range(n))
    return sum(k[j] * rows[..., :, j:w - n + 1 + j] for j in range(n))


def ssim_map(a, b, cfg: SsimConfig = SsimConfig()) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"ssim: shapes {a.shape} and {b.shape} differ")
    if a.shape[-1] == SIDE * SIDE:
        a = a.reshape(a.shape[:-1] + (SIDE, SIDE))
        b = b.reshape(b.shape[:-1] + (SIDE, SIDE))
    k = _gauss_1d(cfg)
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    mu_a = _filter_valid(a, k)
    mu_b = _filter_valid(b, k)
    var_a = _filter_valid(a * a, k) - mu_a * mu_a
    var_b = _filter_valid(b * b, k) - mu_b * mu_b
    cov = _filter_valid(a * b, k) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, cfg: SsimConfig = SsimConfig()) -> float:
    """Mean SSIM over valid Gaussian windows of two 28x28 images in [0, 1]."""
    return float(ssim_map(a, b, cfg).mean())


def ssim_batch(a, b, cfg: SsimConfig = SsimConfig()) -> np.ndarray:
    """Per-pair SSIM for stacks of images, shape (N, 784) or (N, 28, 28)."""
    m = ssim_map(a, b, cfg)
    return m.reshape(m.shape[0], -1).mean(axis=1)


def mean_ssim(pairs, cfg: SsimConfig = SsimConfig()) -> float:
    pairs = list(pairs)
    if not pairs:
        raise ValueError("mean_ssim needs at least one pair")
    return float(np.mean([ssim(a, b, cfg) for a, b in pairs]))


def to_bytes(images) -> np.ndarray:
    return np.round(np.clip(np.asarray(images, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def export_pgm_grid(images, cols: int, path) -> None:
    """Binary P5 grid, ``cols`` tiles wide; unused cells stay black."""
    images = [np.asarray(im, dtype=np.float64).reshape(SIDE, SIDE) for im in images]
    if not images:
        raise ValueError("export_pgm_grid needs at least one image")
    if cols < 1:
        raise ValueError("cols must be >= 1")
    rows = math.ceil(len(images) / cols)
    canvas = np.zeros((rows * SIDE, cols * SIDE), dtype=np.uint8)
    for i, im in enumerate(images):
        r, c = divmod(i, cols)
        canvas[r * SIDE:(r + 1) * SIDE, c * SIDE:(c + 1) * SIDE] = to_bytes(im)
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{canvas.shape[1]} {canvas.shape[0]}\n255\n".encode("ascii"))
            fh.write(canvas.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write PGM grid to {path}: {exc}") from exc


def read_pgm(path) -> np.ndarray:
    """Parse a binary P5 PGM (maxval < 256) into a uint8 array."""
    raw = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        fields.append(raw[pos:end])
        pos = end
    pos += 1
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    width, height, maxval = (int(f) for f in fields[1:])
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PGM not supported")
    return np.frombuffer(raw, np.uint8, width * height, pos).reshape(height, width)


def write_metrics_csv(path, rows) -> None:
    """Rows are dicts or tuples in METRICS_HEADER order."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for row in rows:
            if isinstance(row, dict):
                row = [row[k] for k in METRICS_HEADER]
            w.writerow(row)
