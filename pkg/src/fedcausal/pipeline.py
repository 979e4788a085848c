"""Experiment orchestration: generate, fit, match, estimate, score.

Every random stream is derived from the master seed with
``stream_seed(master, replication, ...)``, so a replication's result does not
depend on which worker ran it or in what order.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import causal, ep_engine, synth
from .baselines import DittoConfig, centralized_fit, ditto_fit, individual_fit
from .csvio import CsvFormatError
from .metrics import ExperimentReport, ReplicationResult
from .model import ClientDataset, propensity_score
from .sgld import stream_seed

METHODS = ("xfbci", "individual", "ditto", "central")
FEDERATED_METHODS = ("xfbci", "ditto", "central")

# stream keys below the replication level
_WORLD, _FIT = 0, 1


@dataclass(frozen=True)
class MethodSettings:
    ep: ep_engine.EpConfig
    ditto: DittoConfig
    central_lr: Optional[float] = None
    caliper: Optional[float] = None

    def central_sgld(self, sizes: Sequence[int]):
        """Pooled-fit chain settings.

        Unless set explicitly, the step size is the federated one scaled by
        ``mean(N_k) / sum(N_k)``: the pooled log-likelihood is about K times as
        curved as a single client's, and the unscaled step is unstable on it.
        """
        lr = self.central_lr
        if lr is None:
            lr = self.ep.sgld.learning_rate * float(np.mean(sizes)) / float(np.sum(sizes))
        return replace(self.ep.sgld, learning_rate=lr)


def fit_parameters(
    method: str,
    datasets: Sequence[ClientDataset],
    settings: MethodSettings,
    seed: int,
    telemetry: Optional[list] = None,
) -> list[np.ndarray]:
    """Per-client parameter estimates from ``method``."""
    if method == "xfbci":
        result = ep_engine.run(datasets, replace(settings.ep, seed=stream_seed(seed, 1)),
                               telemetry=telemetry is not None)
        if telemetry is not None:
            telemetry.extend(result.telemetry)
        return result.theta_hat
    if method == "individual":
        sg = settings.ep.sgld
        return [
            individual_fit(ds, sg.with_seed(stream_seed(seed, 2, k)), settings.ep.prior_precision)
            for k, ds in enumerate(datasets, 1)
        ]
    if method == "central":
        cfg = settings.central_sgld([ds.n for ds in datasets]).with_seed(stream_seed(seed, 3))
        theta = centralized_fit(datasets, cfg, settings.ep.prior_precision)
        return [theta.copy() for _ in datasets]
    if method == "ditto":
        personal, _ = ditto_fit(datasets, replace(settings.ditto, seed=stream_seed(seed, 4)))
        return personal
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def match_and_estimate(data: ClientDataset, theta, caliper=None, client_id: Optional[int] = None):
    scores = propensity_score(data.x, theta)
    try:
        pairs = causal.nnm_match(scores, data.w, caliper)
        return causal.estimate_ate(data, pairs), pairs
    except (causal.NoTreated, causal.NoControls) as exc:
        if client_id is None:
            raise
        raise type(exc)(f"client {client_id}: {exc}") from None


@dataclass(frozen=True)
class ReplicationTask:
    case: str
    method: str
    replication: int
    master_seed: int
    settings: MethodSettings
    intercept: bool = False
    telemetry: bool = False


def run_replication(task: ReplicationTask) -> tuple[ReplicationResult, list]:
    spec = synth.case_spec(task.case, seed=stream_seed(task.master_seed, task.replication, _WORLD),
                           intercept=task.intercept)
    world = synth.generate(spec)
    records: Optional[list] = [] if task.telemetry else None
    thetas = fit_parameters(task.method, world.clients, task.settings,
                            stream_seed(task.master_seed, task.replication, _FIT), records)
    taus = [match_and_estimate(ds, th, task.settings.caliper, k)[0].tau_hat
            for k, (ds, th) in enumerate(zip(world.clients, thetas), 1)]
    result = ReplicationResult(
        task.replication, task.method,
        [np.asarray(t, dtype=float) for t in thetas],
        [np.asarray(t, dtype=float) for t in world.true_theta],
        taus, list(world.true_ate),
    )
    return result, records or []


def simulate(
    case: str,
    method: str,
    replications: int,
    master_seed: int,
    settings: MethodSettings,
    jobs: int = 1,
    intercept: bool = False,
    telemetry: bool = False,
) -> tuple[ExperimentReport, list]:
    """Run ``replications`` independent replications of one method on one case.

    Returns the report and ``(replication, TelemetryRecord)`` pairs.
    """
    if replications < 1:
        raise ValueError("replications must be positive")
    tasks = [ReplicationTask(case, method, r, master_seed, settings, intercept, telemetry)
             for r in range(1, replications + 1)]
    start = time.perf_counter()
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            outputs = list(pool.map(run_replication, tasks))
    else:
        outputs = [run_replication(t) for t in tasks]
    elapsed = time.perf_counter() - start
    report = ExperimentReport(method, case, [res for res, _ in outputs], elapsed)
    records = [(res.replication, rec) for res, recs in outputs for rec in recs]
    return report, records


@dataclass(frozen=True)
class AnalyzeRow:
    treatment: str
    client: int
    method: str
    ate: float
    mse_before: float
    mse_after: float
    n_pairs: int


def _treatment_column(values: np.ndarray, rule, name: str, client: int) -> np.ndarray:
    if rule == "auto":
        if np.isin(values, (0.0, 1.0)).all():
            w = values.astype(np.int8)
            if w.min() == w.max():
                raise CsvFormatError(f"client {client}: treatment column {name!r} is constant")
            return w
        rule = "median"
    try:
        w = causal.binarize_treatment(values, rule)
    except ValueError as exc:
        raise CsvFormatError(f"client {client}: treatment column {name!r}: {exc}") from None
    if w.min() == w.max():
        raise CsvFormatError(f"client {client}: treatment column {name!r} puts every row in one arm")
    return w


def analyze(
    tables: Sequence[tuple[list[str], np.ndarray]],
    outcome: str,
    treatments: Optional[Sequence[str]],
    method: str,
    settings: MethodSettings,
    seed: int = 0,
    rule="auto",
    standardize: bool = True,
    intercept: bool = False,
) -> list[AnalyzeRow]:
    """Treatment-effect and before/after-matching MSE per (treatment, client).

    Each treatment column in turn is binarized and the remaining non-outcome
    columns become covariates. Federated methods see each client's rows
    separately; only ``central`` concatenates them, by definition.
    """
    if method in ("xfbci", "ditto") and len(tables) < 2:
        raise CsvFormatError(f"method {method!r} needs at least two client files")
    if not tables:
        raise CsvFormatError("no client files given")
    header = tables[0][0]
    for k, (h, _) in enumerate(tables, 1):
        if h != header:
            raise CsvFormatError(f"client {k}: header {h} differs from client 1's {header}")
    if outcome not in header:
        raise CsvFormatError(f"missing outcome column {outcome!r}")
    names = list(treatments) if treatments else [h for h in header if h != outcome]
    for t in names:
        if t not in header:
            raise CsvFormatError(f"missing treatment column {t!r}")
        if t == outcome:
            raise CsvFormatError("the outcome cannot also be a treatment")

    rows = []
    for ti, t in enumerate(names):
        datasets, plain = [], []
        for k, (h, values) in enumerate(tables, 1):
            idx = {c: j for j, c in enumerate(h)}
            cov = [c for c in h if c not in (t, outcome)]
            x = values[:, [idx[c] for c in cov]]
            if standardize:
                sd = x.std(axis=0)
                sd[sd == 0] = 1.0
                x = (x - x.mean(axis=0)) / sd
            ds = ClientDataset(x, _treatment_column(values[:, idx[t]], rule, t, k), values[:, idx[outcome]])
            plain.append(ds)
            datasets.append(ds.with_intercept() if intercept else ds)
        thetas = fit_parameters(method, datasets, settings, stream_seed(seed, ti))
        for k, (fit_ds, ds, th) in enumerate(zip(datasets, plain, thetas), 1):
            est, pairs = match_and_estimate(fit_ds, th, settings.caliper, k)
            # the regression adds its own constant, so it uses the plain covariates
            before = causal.regression_mse_eval(ds)
            after = causal.regression_mse_eval(ds, pairs)
            rows.append(AnalyzeRow(t, k, method, est.tau_hat, before, after, est.n_pairs))
    return rows
