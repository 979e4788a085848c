"""Comparison methods: per-client fits, a pooled fit and Ditto.

``individual_fit`` and ``centralized_fit`` run the same SGLD chain as the
federated engine, under a broad ``N(0, 1/prior_precision)`` prior, on one
client's rows or on all rows concatenated.

``ditto_fit`` first trains a shared model with FedAvg and then fits one
personalized model per client, proximally tied to the shared one. Both
phases maximize the *mean* log-likelihood so the Ditto learning rates do not
depend on sample size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import gauss_np as gnp
from . import sgld
from .model import ClientDataset, grad_log_likelihood


def _sgld_fit(data: ClientDataset, cfg: sgld.SgldConfig, prior_precision: float) -> np.ndarray:
    prior = gnp.NaturalGaussian.isotropic(data.d, prior_precision)
    summary = sgld.run(
        lambda th, batch: grad_log_likelihood(data, th, batch),
        lambda th: gnp.grad_log_density(prior, th),
        data.n,
        np.zeros(data.d),
        cfg,
    )
    return summary.mean


def individual_fit(data: ClientDataset, cfg: sgld.SgldConfig, prior_precision: float = 1e-6) -> np.ndarray:
    """Posterior-mean estimate from the client's own rows only."""
    return _sgld_fit(data, cfg, prior_precision)


def pool(datasets: Sequence[ClientDataset]) -> ClientDataset:
    if len(datasets) < 1:
        raise ValueError("need at least one client")
    if len(datasets) == 1:
        return datasets[0]
    parts = dict(
        x=np.vstack([ds.x for ds in datasets]),
        w=np.concatenate([ds.w for ds in datasets]),
        y=np.concatenate([ds.y for ds in datasets]),
    )
    if all(ds.has_potential_outcomes for ds in datasets):
        parts["y0"] = np.concatenate([ds.y0 for ds in datasets])
        parts["y1"] = np.concatenate([ds.y1 for ds in datasets])
    return ClientDataset(**parts)


def centralized_fit(
    datasets: Sequence[ClientDataset], cfg: sgld.SgldConfig, prior_precision: float = 1e-6
) -> np.ndarray:
    """One estimate from all clients' rows pooled (the non-private reference)."""
    return _sgld_fit(pool(datasets), cfg, prior_precision)


@dataclass(frozen=True)
class DittoConfig:
    """Ditto settings.

    The shared model is trained for ``rounds`` FedAvg rounds of
    ``global_steps`` ascent steps at ``global_lr`` on every client. Each client
    then takes ``local_steps`` proximal steps at ``local_lr`` on
    ``mean log p_k(theta) - lambda_prox / 2 * |theta - theta_global|^2``.
    """

    rounds: int = 20
    local_lr: float = 0.005
    global_lr: float = 0.005
    local_steps: int = 500
    global_steps: int = 500
    lambda_prox: float = 0.1
    batch_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 1 or self.local_steps < 1 or self.global_steps < 1:
            raise ValueError("rounds and step counts must be positive")
        if self.local_lr <= 0 or self.global_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.lambda_prox < 0:
            raise ValueError("lambda_prox must be non-negative")
        if not 0 < self.batch_fraction <= 1:
            raise ValueError("batch_fraction must lie in (0, 1]")


class DittoDiverged(FloatingPointError):
    def __init__(self, client_id: int, phase: str):
        self.client_id = client_id
        super().__init__(f"client {client_id}: non-finite iterate during {phase}")


def _mean_grad(data: ClientDataset, theta, rng, batch_fraction):
    if batch_fraction >= 1:
        return grad_log_likelihood(data, theta) / data.n
    n = max(1, int(np.floor(batch_fraction * data.n)))
    batch = rng.permutation(data.n)[:n]
    return grad_log_likelihood(data, theta, batch) / n


def local_ascent(
    data: ClientDataset,
    theta0,
    lr: float,
    steps: int,
    rng: Optional[np.random.Generator] = None,
    batch_fraction: float = 1.0,
    anchor=None,
    lambda_prox: float = 0.0,
) -> np.ndarray:
    """Gradient ascent on the mean log-likelihood, optionally with a proximal pull.

    The proximal term is applied implicitly,
    ``theta <- (theta + lr * g + lr * lam * anchor) / (1 + lr * lam)``, which
    stays stable for arbitrarily large ``lambda_prox``.
    """
    theta = np.array(theta0, dtype=float)
    shrink = 1.0 + lr * lambda_prox
    for _ in range(steps):
        step = theta + lr * _mean_grad(data, theta, rng, batch_fraction)
        theta = step if anchor is None else (step + lr * lambda_prox * anchor) / shrink
    return theta


def fedavg(datasets: Sequence[ClientDataset], cfg: DittoConfig, theta0=None) -> np.ndarray:
    """Shared model: local ascent from the broadcast, then an ``N_k``-weighted average."""
    d = datasets[0].d
    theta_g = np.zeros(d) if theta0 is None else np.array(theta0, dtype=float)
    sizes = np.array([ds.n for ds in datasets], dtype=float)
    weights = sizes / sizes.sum()
    for r in range(cfg.rounds):
        local = []
        for k, ds in enumerate(datasets, 1):
            rng = np.random.default_rng(sgld.stream_seed(cfg.seed, k, r, 0))
            th = local_ascent(ds, theta_g, cfg.global_lr, cfg.global_steps, rng, cfg.batch_fraction)
            if not np.isfinite(th).all():
                raise DittoDiverged(k, f"FedAvg round {r + 1}")
            local.append(th)
        theta_g = np.einsum("k,kd->d", weights, np.asarray(local))
    return theta_g


def ditto_fit(datasets: Sequence[ClientDataset], cfg: DittoConfig) -> tuple[list[np.ndarray], np.ndarray]:
    """Return the personalized parameters per client and the shared FedAvg model."""
    if len(datasets) < 1:
        raise ValueError("need at least one client")
    theta_g = fedavg(datasets, cfg)
    personal = []
    for k, ds in enumerate(datasets, 1):
        rng = np.random.default_rng(sgld.stream_seed(cfg.seed, k, cfg.rounds, 1))
        th = local_ascent(
            ds, theta_g, cfg.local_lr, cfg.local_steps, rng, cfg.batch_fraction,
            anchor=theta_g, lambda_prox=cfg.lambda_prox,
        )
        if not np.isfinite(th).all():
            raise DittoDiverged(k, "personalization")
        personal.append(th)
    return personal, theta_g
