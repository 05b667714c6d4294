"""Samplers and reparameterized stochastic nodes.

The Student-t latent is built as ``mu + sigma * x / sqrt(g / nu)`` with
``x ~ N(0, I)`` and ``g ~ chi^2_nu = 2 * Gamma(nu / 2, rate 1)``.  Gradients
reach ``nu`` both through the explicit ``nu`` and through ``g`` itself, the
latter via the implicit derivative of the Gamma CDF.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import special
from ._backend import kernels
from .autodiff import Node, constant

log = logging.getLogger(__name__)

GRAD_CLAMP = 1e6


class RngState:
    """Seeded random stream (PCG64) shared by every sampler in this package."""

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.bit_generator = np.random.PCG64(self.seed)
        self.generator = np.random.Generator(self.bit_generator)

    @classmethod
    def derive(cls, seed: int, *tags: int) -> RngState:
        """Independent stream keyed by ``seed`` and integer tags."""
        ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *tags])
        return cls(int(ss.generate_state(1, np.uint64)[0]))

    @property
    def position(self) -> dict:
        return self.bit_generator.state

    def standard_normal(self, shape) -> np.ndarray:
        return self.generator.standard_normal(shape)

    def uniform(self, shape) -> np.ndarray:
        return self.generator.random(shape)

    def gamma(self, alpha) -> np.ndarray:
        """Gamma(alpha, rate 1) draws, one per entry of ``alpha``."""
        return kernels.sample_gamma(self.bit_generator, np.asarray(alpha, dtype=np.float64))


@dataclass
class TDistParams:
    """Location ``mu`` (p,), diagonal scale ``sigma`` (p,), scalar ``nu``."""

    mu: np.ndarray
    sigma: np.ndarray
    nu: float
    nu_min: float = 0.0

    def __post_init__(self):
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        self.sigma = np.atleast_1d(np.asarray(self.sigma, dtype=np.float64))
        self.nu = float(self.nu)
        if self.mu.shape != self.sigma.shape or self.mu.ndim != 1:
            raise ValueError(f"mu {self.mu.shape} and sigma {self.sigma.shape} must be equal-length vectors")
        if not np.all(self.sigma > 0):
            raise ValueError("sigma must be strictly positive")
        if not self.nu > self.nu_min:
            raise ValueError(f"nu must exceed nu_min={self.nu_min}, got {self.nu}")

    @property
    def p(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class GammaSample:
    z: float
    alpha: float


def sample_standard_normal(rng: RngState, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.standard_normal(n)


def sample_gamma(rng: RngState, alpha: float) -> GammaSample:
    """Marsaglia-Tsang draw; shapes below one use the z * U**(1/alpha) boost."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    z = float(rng.gamma(np.array([alpha]))[0])
    return GammaSample(z=z, alpha=float(alpha))


def gamma_implicit_grad(sample: GammaSample) -> float:
    """dz/dalpha holding the CDF level F(z; alpha) fixed.

    Equal to -(dF/dalpha) / (dF/dz).  Values beyond 1e6 in magnitude
    (extreme tail, vanishing density) are clamped and logged.
    """
    if not sample.z > 0:
        raise ValueError("sample.z must be positive")
    g, flagged = kernels.implicit_grad(sample.z, sample.alpha)
    if flagged:
        log.warning("implicit gradient clamped at z=%g, alpha=%g", sample.z, sample.alpha)
    return g


def implicit_grad_array(z: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    g, flagged = kernels.implicit_grad_array(z, alpha)
    if flagged:
        log.warning("%d implicit gradients clamped at |dz/dalpha| = %g", flagged, GRAD_CLAMP)
    return g


def student_t_latent(mu, sigma, nu, rng: RngState, repeats: int = 1, noise=None) -> Node:
    """Reparameterized draws ``mu + sigma * t`` with ``t ~ St(0, I, nu)``.

    ``mu`` and ``sigma`` are (B, p) nodes, ``nu`` is (B, 1).  The result has
    ``repeats * B`` rows, copy-major: rows ``k*B .. (k+1)*B - 1`` hold the
    k-th draw for every datum.  ``noise=(x, g)`` forces the normal draws
    (shape (repeats*B, p)) and chi-square draws (shape (repeats*B, 1)); the
    forced ``g`` then contributes no implicit gradient.
    """
    mu, sigma, nu = constant(mu), constant(sigma), constant(nu)
    if mu.shape != sigma.shape:
        raise ValueError(f"mu {mu.shape} and sigma {sigma.shape} differ")
    batch, p = mu.shape
    if nu.shape != (batch, 1):
        raise ValueError(f"nu must have shape ({batch}, 1), got {nu.shape}")
    n = repeats * batch
    nu_t = np.tile(nu.value, (repeats, 1))
    if noise is None:
        x = rng.standard_normal((n, p))
        alpha = 0.5 * nu_t
        half_g = rng.gamma(alpha)
        g = 2.0 * half_g
        # dg/dnu = 2 * dz/dalpha * dalpha/dnu = dz/dalpha
        dg_dnu = implicit_grad_array(half_g, alpha)
    else:
        x, g = (np.asarray(a, dtype=np.float64) for a in noise)
        x = x.reshape(n, p)
        g = g.reshape(n, 1)
        dg_dnu = np.zeros_like(g)
    t = x * np.sqrt(nu_t / g)
    mu_t = np.tile(mu.value, (repeats, 1))
    sigma_t = np.tile(sigma.value, (repeats, 1))
    latent = mu_t + sigma_t * t
    # dt/dnu = t / (2 nu) - t / (2 g) * dg/dnu
    dt_dnu = t * (0.5 / nu_t - 0.5 * dg_dnu / g)

    def rule(grad):
        mu.grad += grad.reshape(repeats, batch, p).sum(axis=0)
        sigma.grad += (grad * t).reshape(repeats, batch, p).sum(axis=0)
        dnu = (grad * sigma_t * dt_dnu).sum(axis=1, keepdims=True)
        nu.grad += dnu.reshape(repeats, batch, 1).sum(axis=0)

    out = Node(latent, (mu, sigma, nu), rule)
    return out


def sample_student_t_latent(params: TDistParams, rng: RngState, n: int = 1) -> np.ndarray:
    """``n`` draws (rows) from St(mu, sigma, nu) as a plain array."""
    node = student_t_latent(params.mu[None, :], params.sigma[None, :], [[params.nu]], rng, repeats=n)
    return node.value


def student_t_logpdf(z, params: TDistParams) -> float | np.ndarray:
    """Log density of the p-variate t with diagonal scale.

    ``z`` may be a single (p,) point or an (n, p) stack.
    """
    z = np.asarray(z, dtype=np.float64)
    p, nu = params.p, params.nu
    maha = (((z - params.mu) / params.sigma) ** 2).sum(axis=-1)
    norm = (special.lgamma(0.5 * (nu + p)) - special.lgamma(0.5 * nu)
            - 0.5 * p * math.log(math.pi * nu) - np.log(params.sigma).sum())
    out = norm - 0.5 * (nu + p) * np.log1p(maha / nu)
    return float(out) if np.ndim(out) == 0 else out
