"""Propensity-score matching and treatment-effect estimation.

Matching is one-to-one nearest neighbour on the score, with replacement: each
treated unit gets the control whose score is closest, and a control may be
reused. The effect estimate averages treated-minus-control outcome
differences over the matched pairs. Strictly that is an effect on the treated;
it is reported as the ATE to keep the usual naming.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .model import ClientDataset


class NoTreated(ValueError):
    pass


class NoControls(ValueError):
    pass


class PotentialOutcomesMissing(ValueError):
    pass


class DegenerateDesign(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MatchedPairs:
    treated: np.ndarray   # row indices of treated units, ascending
    control: np.ndarray   # matched control row index for each treated unit
    scores_treated: np.ndarray
    scores_control: np.ndarray

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.treated.tolist(), self.control.tolist()))

    def __len__(self) -> int:
        return self.treated.size

    def rows(self) -> np.ndarray:
        """Treated rows followed by matched control rows, with multiplicity."""
        return np.concatenate([self.treated, self.control])


@dataclass(frozen=True)
class AteEstimate:
    tau_hat: float
    n_pairs: int


def nnm_match(scores, w, caliper: Optional[float] = None) -> MatchedPairs:
    """Match every treated unit to its nearest control on the propensity score.

    Ties go to the control with the lowest row index. With ``caliper`` set,
    treated units farther than ``caliper`` from every control are dropped.

    Runs in ``O(n log n)``: controls are sorted once (stably, so equal scores
    keep row order) and each treated score is located by binary search.
    """
    scores = np.asarray(scores, dtype=float)
    w = np.asarray(w)
    if scores.shape != w.shape:
        raise ValueError("scores and w must have the same length")
    treated = np.flatnonzero(w == 1)
    controls = np.flatnonzero(w == 0)
    if treated.size == 0:
        raise NoTreated("no treated units to match")
    if controls.size == 0:
        raise NoControls("no control units to match against")

    order = np.argsort(scores[controls], kind="stable")
    c_sorted = scores[controls][order]
    c_index = controls[order]
    # first occurrence of every distinct score carries the lowest row index
    uniq, first = np.unique(c_sorted, return_index=True)
    lowest = np.minimum.reduceat(c_index, first)

    s_t = scores[treated]
    pos = np.searchsorted(uniq, s_t)
    left = np.clip(pos - 1, 0, uniq.size - 1)
    right = np.clip(pos, 0, uniq.size - 1)
    d_left = np.abs(s_t - uniq[left])
    d_right = np.abs(s_t - uniq[right])
    pick_left = (d_left < d_right) | ((d_left == d_right) & (lowest[left] <= lowest[right]))
    slot = np.where(pick_left, left, right)
    matched = lowest[slot]

    if caliper is not None:
        keep = np.minimum(d_left, d_right) <= caliper
        treated, matched = treated[keep], matched[keep]
    return MatchedPairs(treated, matched, scores[treated], scores[matched])


def nnm_match_bruteforce(scores, w) -> MatchedPairs:
    """Exhaustive ``O(n_t * n_c)`` matching; reference implementation for tests."""
    scores = np.asarray(scores, dtype=float)
    w = np.asarray(w)
    treated = np.flatnonzero(w == 1)
    controls = np.flatnonzero(w == 0)
    if treated.size == 0:
        raise NoTreated("no treated units to match")
    if controls.size == 0:
        raise NoControls("no control units to match against")
    matched = []
    for m in treated:
        best, best_d = None, np.inf
        for j in controls:
            dist = abs(scores[m] - scores[j])
            if dist < best_d:
                best, best_d = j, dist
        matched.append(best)
    matched = np.asarray(matched, dtype=int)
    return MatchedPairs(treated, matched, scores[treated], scores[matched])


def estimate_ate(data: ClientDataset, pairs: MatchedPairs) -> AteEstimate:
    if len(pairs) == 0:
        raise ValueError("no matched pairs")
    diff = data.y[pairs.treated] - data.y[pairs.control]
    return AteEstimate(float(np.mean(diff)), len(pairs))


def true_ate(data: ClientDataset) -> float:
    if not data.has_potential_outcomes:
        raise PotentialOutcomesMissing("dataset carries no potential outcomes")
    return float(np.mean(data.y1 - data.y0))


def _ols_mse(design: np.ndarray, y: np.ndarray) -> float:
    rank = np.linalg.matrix_rank(design)
    if rank < design.shape[1]:
        raise DegenerateDesign(
            f"design matrix has rank {rank} < {design.shape[1]} columns"
        )
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = design @ coef - y
    return float(np.mean(resid**2))


def regression_design(data: ClientDataset, rows=None) -> np.ndarray:
    """``[1, x, w]`` for the selected rows (all rows if ``rows`` is None)."""
    x, w = data.x, data.w
    if rows is not None:
        x, w = x[rows], w[rows]
    return np.column_stack([np.ones(len(w)), x, w.astype(float)])


def regression_mse_eval(data: ClientDataset, pairs: Optional[MatchedPairs] = None) -> float:
    """In-sample MSE of an OLS fit of ``y`` on ``(1, x, w)``.

    Without ``pairs`` the fit uses every row ("before matching"); with pairs it
    uses the matched treated and control rows, repeated as often as they were
    matched ("after matching").
    """
    if data.n < data.d + 2:
        raise ValueError(f"need at least {data.d + 2} rows, got {data.n}")
    rows = None if pairs is None else pairs.rows()
    y = data.y if rows is None else data.y[rows]
    return _ols_mse(regression_design(data, rows), y)


Rule = Union[str, float]


def binarize_treatment(column, rule: Rule = "median") -> np.ndarray:
    """Turn a numeric column into a 0/1 treatment.

    ``rule="median"`` treats values strictly above the median; a number ``t``
    treats values strictly above ``t``.
    """
    column = np.asarray(column, dtype=float)
    if not np.isfinite(column).all():
        raise ValueError("treatment column contains non-finite values")
    if isinstance(rule, str):
        if rule.lower() != "median":
            raise ValueError(f"unknown binarization rule {rule!r}")
        if np.all(column == column[0]):
            raise ValueError("cannot median-split a constant column")
        threshold = np.median(column)
    else:
        threshold = float(rule)
    return (column > threshold).astype(np.int8)
