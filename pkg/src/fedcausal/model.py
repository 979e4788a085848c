"""Logistic treatment-assignment model shared by every fitting method."""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Optional

import numpy as np


def sigmoid(z):
    """Logistic function, branch-stable for large ``|z|``."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def softplus(z):
    """``log(1 + e^z)`` without overflow."""
    z = np.asarray(z, dtype=float)
    out = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    return out if out.ndim else float(out)


def log_sigmoid(z):
    """``log sigmoid(z) = -softplus(-z)``."""
    return -softplus(-np.asarray(z, dtype=float))


@dataclass(frozen=True, eq=False)
class ClientDataset:
    """One client's observations.

    ``x`` holds one sample per row. ``y0``/``y1`` are the potential outcomes and
    are only available for simulated data.
    """

    x: np.ndarray
    w: np.ndarray
    y: np.ndarray
    y0: Optional[np.ndarray] = None
    y1: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        n = x.shape[0]
        w = np.asarray(self.w).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if n < 1:
            raise ValueError("dataset needs at least one row")
        if w.shape != (n,) or y.shape != (n,):
            raise ValueError(f"w and y must have length {n}")
        if not np.isin(w, (0, 1)).all():
            raise ValueError("treatment indicator must be 0/1")
        if not np.isfinite(x).all():
            raise ValueError("covariates must be finite")
        w = w.astype(np.int8)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "y", y)
        if (self.y0 is None) != (self.y1 is None):
            raise ValueError("y0 and y1 must be given together")
        if self.y0 is not None:
            y0 = np.asarray(self.y0, dtype=float).reshape(-1)
            y1 = np.asarray(self.y1, dtype=float).reshape(-1)
            if y0.shape != (n,) or y1.shape != (n,):
                raise ValueError(f"potential outcomes must have length {n}")
            if not np.array_equal(y, np.where(w == 1, y1, y0)):
                raise ValueError("observed outcome disagrees with potential outcomes")
            object.__setattr__(self, "y0", y0)
            object.__setattr__(self, "y1", y1)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def has_potential_outcomes(self) -> bool:
        return self.y0 is not None

    def with_intercept(self) -> "ClientDataset":
        """Copy with a constant-1 column prepended to the covariates."""
        x = np.hstack([np.ones((self.n, 1)), self.x])
        return ClientDataset(x, self.w, self.y, self.y0, self.y1)


def _check_theta(data: ClientDataset, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (data.d,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({data.d},)")
    return theta


def log_likelihood(data: ClientDataset, theta) -> float:
    theta = _check_theta(data, theta)
    z = data.x @ theta
    # w log s(z) + (1-w) log s(-z)
    return float(np.sum(np.where(data.w == 1, log_sigmoid(z), log_sigmoid(-z))))


def grad_log_likelihood(data: ClientDataset, theta, batch=None) -> np.ndarray:
    """Exact gradient of the log-likelihood summed over ``batch`` (all rows if None)."""
    theta = _check_theta(data, theta)
    for audit in _AUDITS:
        audit.record(data.n)
    if batch is None:
        x, w = data.x, data.w
    else:
        batch = np.asarray(batch)
        if batch.size == 0:
            raise ValueError("empty batch")
        x, w = data.x[batch], data.w[batch]
    return x.T @ (w - sigmoid(x @ theta))


def propensity_score(x, theta_hat):
    """``P(W = 1 | x)`` under the fitted logistic model; ``x`` may be a row or a matrix."""
    x = np.asarray(x, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    if x.shape[-1] != theta_hat.shape[0]:
        raise ValueError("length mismatch between covariates and parameters")
    return sigmoid(x @ theta_hat)


class RowAudit:
    """Largest dataset any likelihood gradient was evaluated on while active."""

    def __init__(self):
        self.max_rows = 0
        self.calls = 0

    def record(self, n: int) -> None:
        self.calls += 1
        self.max_rows = max(self.max_rows, int(n))


_AUDITS: list[RowAudit] = []


@contextmanager
def row_audit():
    """Collect a ``RowAudit`` over the enclosed block (single-process only)."""
    audit = RowAudit()
    _AUDITS.append(audit)
    try:
        yield audit
    finally:
        _AUDITS.remove(audit)
