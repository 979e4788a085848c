"""Gaussian factors in natural-parameter form.

A factor ``N(theta; eta, lam)`` is stored as the natural mean ``eta = S^-1 mu``
and the precision ``lam = S^-1``. Products and quotients of densities become
sums and differences of the parameters, which is all the bookkeeping an
expectation-propagation loop needs. Site factors may be improper (zero or
indefinite precision); only conversion to moment form demands positive
definiteness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_PSD_FLOOR = 1e-6


class NotPositiveDefinite(ValueError):
    """Raised when a precision matrix must be inverted but has eigenvalues <= 0."""


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


@dataclass(frozen=True, eq=False)
class NaturalGaussian:
    """Unnormalized Gaussian ``exp(eta.theta - theta.lam.theta / 2)``."""

    eta: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        eta = np.array(self.eta, dtype=float).reshape(-1)
        lam = np.array(self.lam, dtype=float)
        if lam.shape != (eta.size, eta.size):
            raise ValueError(
                f"precision shape {lam.shape} does not match natural mean of length {eta.size}"
            )
        lam = _symmetrize(lam)
        eta.flags.writeable = False
        lam.flags.writeable = False
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "lam", lam)

    @property
    def d(self) -> int:
        return self.eta.size

    @classmethod
    def zero(cls, d: int) -> "NaturalGaussian":
        """The flat factor (eta = 0, lam = 0); identity element of ``product``."""
        return cls(np.zeros(d), np.zeros((d, d)))

    @classmethod
    def isotropic(cls, d: int, precision: float, mean=None) -> "NaturalGaussian":
        lam = precision * np.eye(d)
        mu = np.zeros(d) if mean is None else np.asarray(mean, dtype=float)
        return cls(lam @ mu, lam)

    @classmethod
    def from_moments(cls, mu, sigma) -> "NaturalGaussian":
        mu = np.asarray(mu, dtype=float).reshape(-1)
        sigma = _symmetrize(np.asarray(sigma, dtype=float))
        chol = _cholesky(sigma)
        lam = _chol_inverse(chol)
        return cls(lam @ mu, lam)

    def to_moments(self) -> tuple[np.ndarray, np.ndarray]:
        return to_moments(self)

    def mean(self) -> np.ndarray:
        """Mode of the factor, ``lam^-1 eta``; requires positive-definite ``lam``."""
        chol = _cholesky(self.lam)
        return _chol_solve(chol, self.eta)

    def log_density(self, theta) -> float:
        """Unnormalized log density ``eta.theta - theta.lam.theta / 2``."""
        theta = np.asarray(theta, dtype=float)
        return float(self.eta @ theta - 0.5 * theta @ self.lam @ theta)

    def scale(self, factor: float) -> "NaturalGaussian":
        """Raise the density to a power, i.e. multiply both parameters."""
        return NaturalGaussian(factor * self.eta, factor * self.lam)

    def allclose(self, other: "NaturalGaussian", rtol=1e-8, atol=1e-8) -> bool:
        return bool(
            np.allclose(self.eta, other.eta, rtol=rtol, atol=atol)
            and np.allclose(self.lam, other.lam, rtol=rtol, atol=atol)
        )

    def __mul__(self, other: "NaturalGaussian") -> "NaturalGaussian":
        return product(self, other)

    def __truediv__(self, other: "NaturalGaussian") -> "NaturalGaussian":
        return quotient(self, other)

    def __repr__(self) -> str:
        return f"NaturalGaussian(d={self.d}, eta={np.array2string(self.eta, precision=4)})"


def _check_dims(a: NaturalGaussian, b: NaturalGaussian) -> None:
    if a.d != b.d:
        raise ValueError(f"dimension mismatch: {a.d} vs {b.d}")


def product(a: NaturalGaussian, b: NaturalGaussian) -> NaturalGaussian:
    _check_dims(a, b)
    return NaturalGaussian(a.eta + b.eta, a.lam + b.lam)


def quotient(a: NaturalGaussian, b: NaturalGaussian) -> NaturalGaussian:
    _check_dims(a, b)
    return NaturalGaussian(a.eta - b.eta, a.lam - b.lam)


def _cholesky(m: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        eig = np.linalg.eigvalsh(m)
        raise NotPositiveDefinite(
            f"matrix is not positive definite (min eigenvalue {eig.min():.3e})"
        ) from None


def _chol_solve(chol: np.ndarray, b: np.ndarray) -> np.ndarray:
    y = np.linalg.solve(chol, b)
    return np.linalg.solve(chol.T, y)


def _chol_inverse(chol: np.ndarray) -> np.ndarray:
    inv_l = np.linalg.solve(chol, np.eye(chol.shape[0]))
    return _symmetrize(inv_l.T @ inv_l)


def to_moments(g: NaturalGaussian) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(mu, sigma)``.

    Raises
    ------
    NotPositiveDefinite
        If ``g.lam`` has any eigenvalue <= 0.
    """
    chol = _cholesky(g.lam)
    sigma = _chol_inverse(chol)
    mu = _chol_solve(chol, g.eta)
    return mu, sigma


def psd_repair(m, floor: float = DEFAULT_PSD_FLOOR) -> np.ndarray:
    """Clip the spectrum of a symmetric matrix from below at ``floor``.

    The matrix is eigendecomposed and every eigenvalue under ``floor`` is
    replaced by ``floor``; eigenvectors are kept. Matrices whose spectrum is
    already above the floor are returned unchanged.
    """
    if floor <= 0:
        raise ValueError("floor must be positive")
    m = _symmetrize(np.asarray(m, dtype=float))
    vals, vecs = np.linalg.eigh(m)
    if vals.min() >= floor:
        return m
    vals = np.maximum(vals, floor)
    out = _symmetrize((vecs * vals) @ vecs.T)
    # reconstruction roundoff can land a hair under the floor; shift it back
    for _ in range(3):
        low = np.linalg.eigvalsh(out).min()
        if low >= floor:
            break
        out = out + (floor - low + np.finfo(float).eps * abs(floor)) * np.eye(out.shape[0])
    return out


def grad_log_density(g: NaturalGaussian, theta) -> np.ndarray:
    """Gradient ``eta - lam theta`` of the unnormalized log density.

    Well defined for improper and indefinite factors, which is why cavities
    are consumed only through this function.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (g.d,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({g.d},)")
    return g.eta - g.lam @ theta
