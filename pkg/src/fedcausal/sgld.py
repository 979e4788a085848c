"""Stochastic gradient Langevin dynamics.

The update is::

    theta <- theta + (eps / 2) * ((N / n) * grad_loglik(theta, batch) + grad_prior(theta)) + noise

with ``noise ~ N(0, eps I)``. All randomness comes from one
``numpy.random.Generator`` seeded from ``SgldConfig.seed``, so a chain is a pure
function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np


class NonFiniteIterate(FloatingPointError):
    """The chain produced inf/nan, almost always a learning rate that is too large."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite SGLD iterate at step {step}")


def stream_seed(master_seed: int, *keys: int) -> int:
    """Derive an independent 64-bit seed for the stream identified by ``keys``.

    The splitting rule is ``SeedSequence(master_seed, spawn_key=keys)``, so e.g.
    ``(replication, client, round)`` tuples map to statistically independent
    streams regardless of the order in which they are requested.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(hi) << 32 | int(lo)


@dataclass(frozen=True)
class SgldConfig:
    """Chain settings.

    ``noise_mode`` chooses whether ``eps`` is the noise variance (default) or its
    standard deviation. ``noise_scale`` multiplies the noise; 0 turns the chain
    into plain gradient ascent. ``lr_decay`` > 0 gives the polynomial schedule
    ``eps_t = eps * (1 + t) ** -lr_decay``.
    """

    steps: int = 700
    learning_rate: float = 0.05
    burn_in: int = 100
    batch_fraction: float = 0.9
    seed: int = 0
    noise_mode: str = "variance"
    noise_scale: float = 1.0
    lr_decay: float = 0.0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if not 0 <= self.burn_in < self.steps:
            raise ValueError("burn_in must satisfy 0 <= burn_in < steps")
        if not 0 < self.batch_fraction <= 1:
            raise ValueError("batch_fraction must lie in (0, 1]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.noise_mode not in ("variance", "std"):
            raise ValueError("noise_mode must be 'variance' or 'std'")
        if self.noise_scale < 0 or self.lr_decay < 0:
            raise ValueError("noise_scale and lr_decay must be non-negative")

    def batch_size(self, n_total: int) -> int:
        return max(1, int(np.floor(self.batch_fraction * n_total)))

    def with_seed(self, seed: int) -> "SgldConfig":
        return replace(self, seed=int(seed))


@dataclass(frozen=True, eq=False)
class SampleSummary:
    mean: np.ndarray
    sample_cov: np.ndarray
    n_retained: int
    last: np.ndarray  # final iterate, for continuing the chain


def _draw_batch(rng: np.random.Generator, n_total: int, n: int) -> np.ndarray | None:
    if n >= n_total:
        return None
    return rng.permutation(n_total)[:n]


def run(
    grad_loglik: Callable[[np.ndarray, np.ndarray | None], np.ndarray],
    grad_prior: Callable[[np.ndarray], np.ndarray],
    n_total: int,
    theta0,
    cfg: SgldConfig,
) -> SampleSummary:
    """Run one chain and summarize the post-burn-in samples.

    Parameters
    ----------
    grad_loglik : callable
        ``grad_loglik(theta, batch)`` returns the log-likelihood gradient summed
        over the row indices in ``batch``; ``batch is None`` means all rows.
    grad_prior : callable
        Gradient of the log prior (or cavity) density.
    n_total : int
        Number of rows the likelihood is defined over.
    theta0 : array_like
        Starting point.
    cfg : SgldConfig

    Returns
    -------
    SampleSummary
        Mean and covariance of the ``steps - burn_in`` retained iterates.
    """
    theta = np.array(theta0, dtype=float).reshape(-1)
    if not np.isfinite(theta).all():
        raise ValueError("theta0 must be finite")
    d = theta.size
    rng = np.random.default_rng(cfg.seed)
    n = cfg.batch_size(n_total)

    kept = np.empty((cfg.steps - cfg.burn_in, d))
    with np.errstate(over="ignore", invalid="ignore"):
        _iterate(grad_loglik, grad_prior, theta, n_total, n, cfg, rng, kept)

    mean = kept.mean(axis=0)
    if kept.shape[0] > 1:
        cov = np.cov(kept, rowvar=False).reshape(d, d)
    else:
        cov = np.zeros((d, d))
    return SampleSummary(mean, 0.5 * (cov + cov.T), kept.shape[0], kept[-1].copy())


def _iterate(grad_loglik, grad_prior, theta, n_total, n, cfg, rng, kept):
    """Fill ``kept`` in place; overflow surfaces as ``NonFiniteIterate``."""
    d = theta.size
    scale = n_total / n
    for t in range(cfg.steps):
        eps = cfg.learning_rate if cfg.lr_decay == 0 else cfg.learning_rate * (1.0 + t) ** -cfg.lr_decay
        batch = _draw_batch(rng, n_total, n)
        drift = scale * grad_loglik(theta, batch) + grad_prior(theta)
        noise_sd = np.sqrt(eps) if cfg.noise_mode == "variance" else eps
        theta = theta + 0.5 * eps * drift + cfg.noise_scale * noise_sd * rng.standard_normal(d)
        if not np.isfinite(theta).all():
            raise NonFiniteIterate(t)
        if t >= cfg.burn_in:
            kept[t - cfg.burn_in] = theta
