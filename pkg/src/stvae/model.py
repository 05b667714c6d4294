"""MLP encoder/decoder pair with Gaussian or Student-t latent heads."""
from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .config import TrainConfig
from .distributions import RngState

# Initial degrees of freedom for the nu head (bias only); keeps early
# latent draws from being Cauchy-like.
NU_INIT = 5.0


def layer_shapes(cfg: TrainConfig, input_dim: int) -> list[tuple[int, int]]:
    """(fan_in, fan_out) per linear layer, in storage order.

    Order: encoder trunk, heads (mu, scale[, nu]), decoder layers, output.
    """
    p = cfg.latent_dim
    shapes = []
    width = input_dim
    for h in cfg.encoder_layers[:-1]:
        shapes.append((width, h))
        width = h
    shapes.append((width, p))
    shapes.append((width, p))
    if cfg.prior == "student_t":
        shapes.append((width, 1))
    width = p
    for h in cfg.decoder_layers[1:]:
        shapes.append((width, h))
        width = h
    shapes.append((width, input_dim))
    return shapes


def _init_limit(kind: str, fan_in: int, fan_out: int) -> float:
    if kind == "relu":
        return math.sqrt(6.0 / fan_in)
    return math.sqrt(6.0 / (fan_in + fan_out))


class VAE:
    """Weights live in ``layers`` as (W, b) leaf nodes reused by every batch graph."""

    def __init__(self, cfg: TrainConfig, input_dim: int, layers: list[tuple[Node, Node]]):
        self.cfg = cfg
        self.input_dim = input_dim
        self.layers = layers
        n_trunk = len(cfg.encoder_layers) - 1
        n_heads = 3 if cfg.prior == "student_t" else 2
        self._trunk = layers[:n_trunk]
        self._heads = layers[n_trunk:n_trunk + n_heads]
        self._decoder = layers[n_trunk + n_heads:]

    @classmethod
    def initialize(cls, cfg: TrainConfig, input_dim: int, rng: RngState) -> VAE:
        layers = []
        shapes = layer_shapes(cfg, input_dim)
        n_trunk = len(cfg.encoder_layers) - 1
        for i, (fan_in, fan_out) in enumerate(shapes):
            hidden = i < n_trunk or i >= n_trunk + (3 if cfg.prior == "student_t" else 2)
            is_output = i == len(shapes) - 1
            kind = cfg.activation if hidden and not is_output else "identity"
            lim = _init_limit(kind, fan_in, fan_out)
            W = rng.uniform((fan_in, fan_out)) * (2.0 * lim) - lim
            b = np.zeros((1, fan_out))
            layers.append((Node(W), Node(b)))
        if cfg.prior == "student_t":
            nu_bias = layers[n_trunk + 2][1]
            nu_bias.value[:] = math.log(math.expm1(NU_INIT - cfg.nu_min))
        return cls(cfg, input_dim, layers)

    @classmethod
    def from_arrays(cls, cfg: TrainConfig, arrays: list[tuple[np.ndarray, np.ndarray]]) -> VAE:
        input_dim = arrays[0][0].shape[0]
        expected = layer_shapes(cfg, input_dim)
        got = [w.shape for w, _ in arrays]
        if got != expected:
            raise ValueError(f"layer shapes {got} do not match config {expected}")
        return cls(cfg, input_dim, [(Node(w.copy()), Node(b.reshape(1, -1).copy())) for w, b in arrays])

    @property
    def parameters(self) -> list[Node]:
        return [n for pair in self.layers for n in pair]

    def zero_grad(self) -> None:
        for p in self.parameters:
            p.zero_grad()

    def encode(self, x) -> tuple[Node, ...]:
        h = ad.constant(x)
        if h.shape[1] != self.input_dim:
            raise ad.DimensionError(f"input width {h.shape[1]} != model input {self.input_dim}")
        for W, b in self._trunk:
            h = ad.activation(ad.affine(h, W, b), self.cfg.activation)
        mu = ad.affine(h, *self._heads[0])
        raw_scale = ad.affine(h, *self._heads[1])
        if self.cfg.prior == "gaussian":
            return mu, raw_scale  # log-variance
        sigma = ad.exp(raw_scale)
        nu = ad.softplus(ad.affine(h, *self._heads[2])) + self.cfg.nu_min
        return mu, sigma, nu

    def decode(self, z) -> Node:
        """Bernoulli logits for each pixel."""
        h = ad.constant(z)
        for W, b in self._decoder[:-1]:
            h = ad.activation(ad.affine(h, W, b), self.cfg.activation)
        return ad.affine(h, *self._decoder[-1])

    def decode_mean(self, z) -> np.ndarray:
        return ad._sigmoid(self.decode(z).value)
