"""Evaluation metrics and replication aggregation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

METRICS = ("a_rmse_theta", "a_ate", "ate_error", "a_rmse_ate")


def a_rmse_theta(estimates: Sequence, truths: Sequence) -> float:
    """Mean over clients of the per-client coordinate RMSE."""
    est = [np.asarray(e, dtype=float) for e in estimates]
    tru = [np.asarray(t, dtype=float) for t in truths]
    if len(est) != len(tru) or len(est) == 0:
        raise ValueError("need one truth per estimate")
    errs = []
    for e, t in zip(est, tru):
        if e.shape != t.shape:
            raise ValueError(f"shape mismatch {e.shape} vs {t.shape}")
        errs.append(math.sqrt(float(np.mean((e - t) ** 2))))
    return float(np.mean(errs))


def a_ate(taus: Sequence[float]) -> float:
    if len(taus) == 0:
        raise ValueError("no estimates")
    return float(np.mean(taus))


def ate_error(a_ate_per_rep: Sequence[float], true_ate_per_rep: Sequence[float]) -> float:
    """``|mean_r(A-ATE_r - trueATE_r)|`` -- signed differences are averaged first."""
    a = np.asarray(a_ate_per_rep, dtype=float)
    t = np.asarray(true_ate_per_rep, dtype=float)
    if a.shape != t.shape or a.size == 0:
        raise ValueError("need one true ATE per replication")
    return float(abs(np.mean(a - t)))


def a_rmse_ate(taus: Sequence[float], truths: Sequence[float]) -> float:
    """Root mean squared deviation of per-client ATEs from per-client truths."""
    a = np.asarray(taus, dtype=float)
    t = np.asarray(truths, dtype=float)
    if a.shape != t.shape or a.size == 0:
        raise ValueError("need one truth per client")
    return float(np.sqrt(np.mean((a - t) ** 2)))


def mean_and_stderr(values: Iterable[float]) -> tuple[float, float]:
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    se = float(np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return float(np.mean(v)), se


@dataclass
class ReplicationResult:
    replication: int
    method: str
    theta_hat: list
    true_theta: list
    tau_hat: list
    true_ate: list

    @property
    def a_rmse_theta(self) -> float:
        return a_rmse_theta(self.theta_hat, self.true_theta)

    @property
    def a_ate(self) -> float:
        return a_ate(self.tau_hat)

    @property
    def true_a_ate(self) -> float:
        return a_ate(self.true_ate)

    @property
    def a_rmse_ate(self) -> float:
        return a_rmse_ate(self.tau_hat, self.true_ate)


@dataclass
class ExperimentReport:
    method: str
    case: str
    replications: list[ReplicationResult] = field(default_factory=list)
    runtime_seconds: float = 0.0

    def metric_values(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.replications]

    def ate_error(self) -> float:
        return ate_error(self.metric_values("a_ate"), self.metric_values("true_a_ate"))

    def aggregate(self) -> dict[str, tuple[float, float]]:
        """Mean and standard error per metric; ``ate_error`` has no spread."""
        return aggregate_rows(tidy_rows(self))


def tidy_rows(report: ExperimentReport) -> list[dict]:
    """One row per (replication, client, metric). Client 0 holds replication-level values."""
    rows = []
    for rep in report.replications:
        for k, (th, tt, tau, ta) in enumerate(
            zip(rep.theta_hat, rep.true_theta, rep.tau_hat, rep.true_ate), 1
        ):
            err = math.sqrt(float(np.mean((np.asarray(th) - np.asarray(tt)) ** 2)))
            rows += [
                _row(report, rep.replication, k, "rmse_theta", err),
                _row(report, rep.replication, k, "tau_hat", tau),
                _row(report, rep.replication, k, "true_ate", ta),
            ]
        rows += [
            _row(report, rep.replication, 0, "a_rmse_theta", rep.a_rmse_theta),
            _row(report, rep.replication, 0, "a_ate", rep.a_ate),
            _row(report, rep.replication, 0, "true_a_ate", rep.true_a_ate),
            _row(report, rep.replication, 0, "a_rmse_ate", rep.a_rmse_ate),
        ]
    return rows


def _row(report, rep, client, metric, value) -> dict:
    return dict(case=report.case, method=report.method, replication=rep,
                client=client, metric=metric, value=float(value))


def aggregate_rows(rows: Iterable[dict]) -> dict[str, tuple[float, float]]:
    """Recompute the aggregate block from tidy per-replication rows."""
    by_metric: dict[str, dict[int, float]] = {}
    for r in rows:
        if int(r["client"]) != 0:
            continue
        by_metric.setdefault(r["metric"], {})[int(r["replication"])] = float(r["value"])
    out = {}
    for name in ("a_rmse_theta", "a_ate", "a_rmse_ate"):
        if name in by_metric:
            out[name] = mean_and_stderr(v for _, v in sorted(by_metric[name].items()))
    if "a_ate" in by_metric and "true_a_ate" in by_metric:
        reps = sorted(by_metric["a_ate"])
        out["ate_error"] = (
            ate_error([by_metric["a_ate"][r] for r in reps], [by_metric["true_a_ate"][r] for r in reps]),
            float("nan"),
        )
    return out


FIELDS = ("case", "method", "replication", "client", "metric", "value")
AGG_FIELDS = ("case", "method", "metric", "mean", "stderr", "replications")


def write_tidy_csv(reports: Sequence[ExperimentReport], path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.DictWriter(fh, fieldnames=FIELDS, lineterminator="\n")
        wr.writeheader()
        for rep in reports:
            for row in tidy_rows(rep):
                wr.writerow({**row, "value": repr(row["value"])})
    return path


def read_tidy_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [
            {**r, "replication": int(r["replication"]), "client": int(r["client"]), "value": float(r["value"])}
            for r in csv.DictReader(fh)
        ]


def write_aggregate_csv(reports: Sequence[ExperimentReport], path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        wr = csv.DictWriter(fh, fieldnames=AGG_FIELDS, lineterminator="\n")
        wr.writeheader()
        for rep in reports:
            for name, (m, se) in rep.aggregate().items():
                wr.writerow(dict(case=rep.case, method=rep.method, metric=name, mean=repr(m),
                                 stderr=repr(se), replications=len(rep.replications)))
    return path
