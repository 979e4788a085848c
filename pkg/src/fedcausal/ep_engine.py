"""Federated expectation propagation with SGLD tilted fits.

The server holds ``q_global = prior * prod_k q_k``. Each round it broadcasts
``q_global``; every client divides out its own site factor (the cavity), fits
a Gaussian to ``likelihood_k * cavity`` with SGLD and replies with the natural
parameter increment ``q_hat_k / q_global``. Both sides then apply the update
damped by ``delta``. Clients never send anything except a ``DeltaMessage``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import gauss_np as gnp
from . import sgld
from .gauss_np import NaturalGaussian
from .model import ClientDataset, grad_log_likelihood

log = logging.getLogger(__name__)


class CovMode(str, Enum):
    SAMPLE_COV_PLUS_ALPHA = "sample"
    SCALED_IDENTITY_ALPHA = "identity"


class Estimator(str, Enum):
    """Which Gaussian a client reports as its parameter estimate after the run."""

    PERSONALIZED = "personalized"  # last cavity times the refreshed site factor
    SITE = "site"                  # the site factor alone, prior included
    TILTED = "tilted"              # mean of the last tilted chain


class ClientFitError(RuntimeError):
    def __init__(self, client_id: int, round_: Optional[int], cause: Exception):
        self.client_id = client_id
        self.round = round_
        where = f"client {client_id}" + (f", round {round_}" if round_ is not None else "")
        super().__init__(f"{where}: {cause}")


@dataclass(frozen=True)
class EpConfig:
    rounds: int = 20
    damping: Optional[float] = None  # None -> 1/K
    alpha: float = 1e-20
    cov_mode: CovMode = CovMode.SAMPLE_COV_PLUS_ALPHA
    prior_precision: float = 1e-6
    sgld: sgld.SgldConfig = field(default_factory=sgld.SgldConfig)
    psd_floor: float = gnp.DEFAULT_PSD_FLOOR
    warm_start: bool = True
    estimator: Estimator = Estimator.PERSONALIZED
    shared_streams: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")
        if self.damping is not None and not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.alpha <= 0 or self.prior_precision <= 0 or self.psd_floor <= 0:
            raise ValueError("alpha, prior_precision and psd_floor must be positive")
        object.__setattr__(self, "cov_mode", CovMode(self.cov_mode))
        object.__setattr__(self, "estimator", Estimator(self.estimator))

    def damping_for(self, K: int) -> float:
        return 1.0 / K if self.damping is None else self.damping

    def prior(self, d: int) -> NaturalGaussian:
        return NaturalGaussian.isotropic(d, self.prior_precision)


@dataclass(frozen=True, eq=False, slots=True)
class DeltaMessage:
    """Client -> server payload. Holds one natural-parameter pair and nothing else."""

    client_id: int
    d_eta: np.ndarray
    d_lam: np.ndarray

    def as_factor(self) -> NaturalGaussian:
        return NaturalGaussian(self.d_eta, self.d_lam)

    def nbytes(self) -> int:
        return int(np.asarray(self.d_eta).nbytes + np.asarray(self.d_lam).nbytes)


@dataclass(frozen=True, eq=False)
class ServerState:
    q_global: NaturalGaussian
    round: int = 0


@dataclass(eq=False)
class ClientState:
    id: int
    data: ClientDataset
    q_k: NaturalGaussian
    last_cavity: Optional[NaturalGaussian] = None
    last_tilted_mean: Optional[np.ndarray] = None
    chain_state: Optional[np.ndarray] = None

    @classmethod
    def initial(cls, client_id: int, data: ClientDataset) -> "ClientState":
        return cls(client_id, data, NaturalGaussian.zero(data.d))

    def personalized(self, q_global: NaturalGaussian) -> NaturalGaussian:
        """The client's own posterior: its last cavity times its refreshed site.

        Before any round has run this is just ``q_global``.
        """
        if self.last_cavity is None:
            return q_global
        return gnp.product(self.last_cavity, self.q_k)


@dataclass(frozen=True)
class TelemetryRecord:
    round: int
    client_id: int
    delta_eta_norm: float
    delta_lam_fro: float
    tilted_mean: tuple


@dataclass
class Transcript:
    """Everything that crossed the client/server boundary."""

    broadcasts: list = field(default_factory=list)
    deltas: list = field(default_factory=list)

    def payload_bytes(self) -> int:
        b = sum(int(g.eta.nbytes + g.lam.nbytes) for g in self.broadcasts)
        return b + sum(m.nbytes() for m in self.deltas)


def cavity(server: ServerState, client: ClientState) -> NaturalGaussian:
    return gnp.quotient(server.q_global, client.q_k)


def tilted_gaussian(summary: sgld.SampleSummary, cfg: EpConfig) -> NaturalGaussian:
    d = summary.mean.size
    if cfg.cov_mode is CovMode.SCALED_IDENTITY_ALPHA:
        cov = cfg.alpha * np.eye(d)
    else:
        cov = summary.sample_cov + cfg.alpha * np.eye(d)
    cov = gnp.psd_repair(cov, cfg.psd_floor)
    return NaturalGaussian.from_moments(summary.mean, cov)


def fit_tilted(
    client: ClientState,
    cav: NaturalGaussian,
    cfg: EpConfig,
    seed: Optional[int] = None,
    theta0=None,
) -> tuple[NaturalGaussian, sgld.SampleSummary]:
    """Approximate ``likelihood_k * cavity`` by a Gaussian.

    Returns the fitted factor in natural form and the SGLD summary it was
    built from.
    """
    data = client.data
    if cav.d != data.d:
        raise ValueError(f"cavity dimension {cav.d} does not match data dimension {data.d}")
    chain_cfg = cfg.sgld if seed is None else cfg.sgld.with_seed(seed)
    start = np.zeros(data.d) if theta0 is None else theta0
    summary = sgld.run(
        lambda th, batch: grad_log_likelihood(data, th, batch),
        lambda th: gnp.grad_log_density(cav, th),
        data.n,
        start,
        chain_cfg,
    )
    return tilted_gaussian(summary, cfg), summary


def _client_step(server: ServerState, client: ClientState, cfg: EpConfig, seed: int):
    cav = cavity(server, client)
    theta0 = client.chain_state if cfg.warm_start else None
    q_hat, summary = fit_tilted(client, cav, cfg, seed=seed, theta0=theta0)
    delta = gnp.quotient(q_hat, server.q_global)
    return cav, summary, DeltaMessage(client.id, delta.eta.copy(), delta.lam.copy())


def apply_round(
    server: ServerState,
    clients: Sequence[ClientState],
    messages: Sequence[DeltaMessage],
    damping: float,
    psd_floor: float = gnp.DEFAULT_PSD_FLOOR,
) -> tuple[ServerState, list[ClientState]]:
    """Damped update of every site factor and of the global approximation."""
    by_id = {m.client_id: m for m in messages}
    new_clients = []
    total_eta = np.zeros(server.q_global.d)
    total_lam = np.zeros((server.q_global.d,) * 2)
    for c in sorted(clients, key=lambda c: c.id):
        m = by_id[c.id]
        total_eta = total_eta + m.d_eta
        total_lam = total_lam + m.d_lam
        step = m.as_factor().scale(damping)
        new_clients.append(replace(c, q_k=gnp.product(c.q_k, step)))
    g = server.q_global
    lam = g.lam + damping * total_lam
    if np.linalg.eigvalsh(lam).min() <= 0:
        log.warning("round %d: global precision indefinite, repairing", server.round + 1)
        lam = gnp.psd_repair(lam, psd_floor)
    q_new = NaturalGaussian(g.eta + damping * total_eta, lam)
    order = {c.id: i for i, c in enumerate(clients)}
    new_clients.sort(key=lambda c: order[c.id])
    return ServerState(q_new, server.round + 1), new_clients


def run_round(
    server: ServerState,
    clients: Sequence[ClientState],
    cfg: EpConfig,
    seeds: Optional[dict] = None,
    workers: int = 1,
    transcript: Optional[Transcript] = None,
    telemetry: Optional[list] = None,
) -> tuple[ServerState, list[ClientState]]:
    """One synchronous round: broadcast, local fits, damped reduction.

    ``seeds`` maps client id to that client's SGLD seed for this round; by
    default seeds are derived from ``cfg.seed``, the round and the client id.
    With ``cfg.shared_streams`` every client uses the same stream in a given
    round, so clients holding identical data run identical chains.
    """
    r = server.round + 1
    if seeds is None:
        if cfg.shared_streams:
            seeds = {c.id: sgld.stream_seed(cfg.seed, 0, r) for c in clients}
        else:
            seeds = {c.id: sgld.stream_seed(cfg.seed, c.id, r) for c in clients}
    if transcript is not None:
        transcript.broadcasts.append(server.q_global)

    def work(c: ClientState):
        try:
            return _client_step(server, c, cfg, seeds[c.id])
        except (sgld.NonFiniteIterate, gnp.NotPositiveDefinite, ValueError) as exc:
            raise ClientFitError(c.id, r, exc) from exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, clients))
    else:
        results = [work(c) for c in clients]

    messages = [msg for _, _, msg in results]
    if transcript is not None:
        transcript.deltas.extend(messages)
    if telemetry is not None:
        for (_, summary, msg) in sorted(results, key=lambda t: t[2].client_id):
            telemetry.append(
                TelemetryRecord(
                    r,
                    msg.client_id,
                    float(np.linalg.norm(msg.d_eta)),
                    float(np.linalg.norm(msg.d_lam)),
                    tuple(float(v) for v in summary.mean),
                )
            )

    damping = cfg.damping_for(len(clients))
    new_server, new_clients = apply_round(server, clients, messages, damping, cfg.psd_floor)
    for c, (cav, summary, _) in zip(new_clients, results):
        c.last_cavity = cav
        c.last_tilted_mean = summary.mean
        c.chain_state = summary.last
    return new_server, new_clients


@dataclass(eq=False)
class EpResult:
    posteriors: list[NaturalGaussian]
    server: ServerState
    clients: list[ClientState]
    telemetry: list[TelemetryRecord]
    transcript: Transcript

    @property
    def theta_hat(self) -> list[np.ndarray]:
        # site factors alone need not be positive definite, so plain solve
        return [np.linalg.solve(p.lam, p.eta) for p in self.posteriors]


def run(
    datasets: Sequence[ClientDataset],
    cfg: EpConfig,
    workers: int = 1,
    telemetry: bool = False,
) -> EpResult:
    """Run ``cfg.rounds`` rounds and return each client's personalized posterior.

    Client ids are 1-based positions in ``datasets``.
    """
    if len(datasets) < 1:
        raise ValueError("need at least one client")
    d = datasets[0].d
    if any(ds.d != d for ds in datasets):
        raise ValueError("all clients must share the covariate dimension")
    prior = cfg.prior(d)
    server = ServerState(prior)
    clients = [ClientState.initial(k, ds) for k, ds in enumerate(datasets, 1)]
    records: list = []
    transcript = Transcript()
    for _ in range(cfg.rounds):
        server, clients = run_round(
            server, clients, cfg, workers=workers, transcript=transcript,
            telemetry=records if telemetry else None,
        )
    return EpResult(_estimates(server, clients, cfg), server, clients, records, transcript)


def _estimates(server: ServerState, clients: Sequence[ClientState], cfg: EpConfig) -> list[NaturalGaussian]:
    if cfg.estimator is Estimator.PERSONALIZED or cfg.rounds == 0:
        return [c.personalized(server.q_global) for c in clients]
    if cfg.estimator is Estimator.SITE:
        prior = cfg.prior(server.q_global.d)
        return [gnp.product(prior, c.q_k) for c in clients]
    # a point mass is not representable, so keep the personalized precision
    out = []
    for c in clients:
        p = c.personalized(server.q_global)
        out.append(NaturalGaussian(p.lam @ c.last_tilted_mean, p.lam))
    return out
