"""ELBO assembly: reconstruction cross-entropy and the two KL terms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node, constant
from .distributions import RngState, TDistParams, student_t_latent


@dataclass
class ElboTerms:
    """Batch-averaged loss terms; ``total`` is what gets minimized."""

    recon: Node
    kl: Node
    total: Node
    kl_weight: float = 1.0

    def values(self) -> tuple[float, float, float]:
        return self.recon.item(), self.kl.item(), self.total.item()


@dataclass
class GaussParams:
    mu: np.ndarray
    log_var: np.ndarray


def kl_gaussian(mu, log_var=None) -> Node:
    """KL(N(mu, diag e^log_var) || N(0, I)) summed over dims, averaged over rows."""
    if isinstance(mu, GaussParams):
        mu, log_var = mu.mu, mu.log_var
    mu, log_var = constant(mu), constant(log_var)
    per_elem = ad.square(mu) + ad.exp(log_var) - 1.0 - log_var
    return ad.sum(per_elem) * (0.5 / mu.shape[0])


def kl_student_t_terms(mu, sigma, nu, rng: RngState, mc_samples: int, latents: Node | None = None):
    """KL(St(mu, sigma, nu) || St(0, I, nu)) with the prior's nu tied per datum.

    The expectation of log(1 + Mahalanobis/nu) under q is replaced by its
    digamma closed form; the expectation of log(1 + z'z/nu) is estimated
    from ``mc_samples`` reparameterized draws per datum.  ``latents`` may
    supply those draws (shape (mc_samples*B, p), copy-major) so the
    reconstruction sample is reused.

    Returns the batch-averaged KL node and the (mc_samples*B,) array of
    per-draw Monte-Carlo summands, useful for standard errors.
    """
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    mu, sigma, nu = constant(mu), constant(sigma), constant(nu)
    batch, p = mu.shape
    if latents is None:
        latents = student_t_latent(mu, sigma, nu, rng, repeats=mc_samples)
    elif latents.shape != (mc_samples * batch, p):
        raise ValueError(f"latents shape {latents.shape} != {(mc_samples * batch, p)}")
    half = (nu + float(p)) * 0.5
    closed = half * (ad.digamma(half) - ad.digamma(nu * 0.5))
    log_det = ad.sum(ad.log(sigma), axis=1)
    nu_rep = ad.tile_rows(nu, mc_samples)
    half_rep = ad.tile_rows(half, mc_samples)
    sq = ad.sum(ad.square(latents), axis=1)
    mc = half_rep * ad.log1p(sq / nu_rep)
    kl = (ad.sum(mc) * (1.0 / mc_samples) - ad.sum(log_det) - ad.sum(closed)) * (1.0 / batch)
    return kl, mc.value.ravel()


def kl_student_t(params, mc_samples: int, rng: RngState, latents: Node | None = None) -> Node:
    """Student-t KL node; ``params`` is a TDistParams or a (mu, sigma, nu) node triple."""
    if isinstance(params, TDistParams):
        params = (params.mu[None, :], params.sigma[None, :], [[params.nu]])
    kl, _ = kl_student_t_terms(*params, rng, mc_samples, latents=latents)
    return kl


def kl_student_t_estimate(params: TDistParams, mc_samples: int, rng: RngState) -> tuple[float, float]:
    """(estimate, Monte-Carlo standard error) of the Student-t KL for one datum."""
    kl, terms = kl_student_t_terms(params.mu[None, :], params.sigma[None, :], [[params.nu]],
                                   rng, mc_samples)
    se = terms.std(ddof=1) / np.sqrt(mc_samples) if mc_samples > 1 else float("nan")
    return kl.item(), float(se)


def bce_reconstruction(x, logits, mask=None) -> Node:
    """Summed Bernoulli cross-entropy over kept pixels, divided by the batch size.

    ``mask`` is True where a pixel is missing; those entries are excluded.
    ``x`` holds gray levels in [0, 1] and is not binarized.
    """
    x = np.asarray(x, dtype=np.float64)
    logits = constant(logits)
    if x.shape != logits.shape:
        raise ad.DimensionError(f"bce: targets {x.shape} and logits {logits.shape} differ")
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise ValueError("bce targets must lie in [0, 1]")
    keep = np.ones_like(x) if mask is None else (~np.asarray(mask, dtype=bool)).astype(np.float64)
    batch = x.shape[0]
    lv = logits.value
    # softplus(l) - x*l, stable for large |l|
    per = np.maximum(lv, 0.0) + np.log1p(np.exp(-np.abs(lv))) - x * lv
    value = (per * keep).sum() / batch
    sig = ad._sigmoid(lv)

    def rule(g):
        logits.grad += g * (sig - x) * keep / batch

    return Node(value, (logits,), rule)


def elbo_loss(x, mask, encoder_out, decode, prior_kind: str, rng: RngState,
              mc_samples: int = 4, kl_weight: float = 1.0) -> ElboTerms:
    """Negative ELBO for a batch.

    ``encoder_out`` is (mu, log_var) for the Gaussian prior or
    (mu, sigma, nu) for the Student-t prior; ``decode`` maps a latent node
    to logits.  One latent per datum feeds the reconstruction term; the
    Student-t KL reuses it and adds ``mc_samples - 1`` more.
    """
    batch = np.shape(x)[0]
    if prior_kind == "gaussian":
        mu, log_var = encoder_out
        eps = rng.standard_normal(mu.shape)
        latent = mu + ad.exp(log_var * 0.5) * eps
        kl = kl_gaussian(mu, log_var)
    elif prior_kind == "student_t":
        mu, sigma, nu = encoder_out
        draws = student_t_latent(mu, sigma, nu, rng, repeats=mc_samples)
        latent = ad.slice_rows(draws, 0, batch) if mc_samples > 1 else draws
        kl = kl_student_t((mu, sigma, nu), mc_samples, rng, latents=draws)
    else:
        raise ValueError(f"unknown prior {prior_kind!r}")
    recon = bce_reconstruction(x, decode(latent), mask)
    total = recon + kl * kl_weight
    return ElboTerms(recon=recon, kl=kl, total=total, kl_weight=kl_weight)
