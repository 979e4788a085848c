"""Simulated multi-client benchmark worlds.

Every case draws covariates per client, a treatment from
``Bern(sigmoid(a0 + x.a1))`` and potential outcomes from
``N(softplus(b0 + x.b1), s0^2)`` / ``N(softplus(c0 + x.c1), s1^2)``. Cases
differ in client count, dimension, sample sizes and in how covariates and
coefficients are distributed across client groups.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .model import ClientDataset, sigmoid, softplus
from .sgld import stream_seed

__all__ = [
    "Law",
    "ClientGroup",
    "CaseSpec",
    "GeneratedWorld",
    "CASE_IDS",
    "case_spec",
    "generate",
    "sigmoid",
    "softplus",
]


@dataclass(frozen=True)
class Law:
    """Per-coordinate i.i.d. distribution.

    ``kind`` is one of ``const`` (value ``a``), ``uniform`` on ``[a, b]``,
    ``normal`` with mean ``a`` and *variance* ``b``, or ``beta`` with shapes
    ``(a, b)``.
    """

    kind: str
    a: float
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ("const", "uniform", "normal", "beta"):
            raise ValueError(f"unknown law {self.kind!r}")
        if self.kind == "uniform" and not self.a < self.b:
            raise ValueError("uniform law needs a < b")
        if self.kind == "normal" and self.b < 0:
            raise ValueError("normal variance must be non-negative")
        if self.kind == "beta" and (self.a <= 0 or self.b <= 0):
            raise ValueError("beta shapes must be positive")

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "const":
            return np.full(size, float(self.a))
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b, size)
        if self.kind == "normal":
            return rng.normal(self.a, np.sqrt(self.b), size)
        return rng.beta(self.a, self.b, size)


def const(v):
    return Law("const", v)


def uniform(lo, hi):
    return Law("uniform", lo, hi)


def normal(mean, var):
    return Law("normal", mean, var)


def beta(a, b):
    return Law("beta", a, b)


@dataclass(frozen=True)
class ClientGroup:
    """Clients ``first..last`` (1-based, inclusive) sharing one generating law."""

    first: int
    last: int
    covariates: Law
    intercepts: tuple[float, float, float]  # (a0, b0, c0)
    a1: Law
    b1: Law
    c1: Law


@dataclass(frozen=True)
class CaseSpec:
    case_id: str
    K: int
    d: int
    sizes: tuple[int, ...]
    groups: tuple[ClientGroup, ...]
    sigma0: float
    sigma1: float
    seed: int = 0
    intercept: bool = False

    def __post_init__(self):
        if len(self.sizes) != self.K or min(self.sizes) < 1:
            raise ValueError("sizes must list K positive sample counts")
        covered = []
        for g in sorted(self.groups, key=lambda g: g.first):
            covered.extend(range(g.first, g.last + 1))
        if covered != list(range(1, self.K + 1)):
            raise ValueError("client groups must partition 1..K")
        if self.sigma0 < 0 or self.sigma1 < 0:
            raise ValueError("noise scales must be non-negative")

    def group_of(self, k: int) -> ClientGroup:
        for g in self.groups:
            if g.first <= k <= g.last:
                return g
        raise IndexError(k)

    def with_seed(self, seed: int) -> "CaseSpec":
        return replace(self, seed=int(seed))


@dataclass(frozen=True, eq=False)
class GeneratedWorld:
    spec: CaseSpec
    clients: list[ClientDataset]
    true_theta: list[np.ndarray]
    true_ate: list[float]
    coefficients: list[dict] = field(default_factory=list)


def _sizes(base: int, step: int, K: int) -> tuple[int, ...]:
    return tuple(base - step * (k - 1) for k in range(1, K + 1))


def _case_1() -> dict:
    g = ClientGroup(1, 5, uniform(-1, 1), (0.6, 6.0, 30.0), const(0.0), const(10.0), const(15.0))
    return dict(K=5, d=5, sizes=_sizes(1000, 0, 5), groups=(g,), sigma0=0.0, sigma1=0.0)


def _case_2(step=0) -> dict:
    g = ClientGroup(1, 5, uniform(-1, 1), (0.6, 6.0, 30.0), normal(0, 2), normal(10, 2), normal(15, 2))
    return dict(K=5, d=5, sizes=_sizes(1000, step, 5), groups=(g,), sigma0=1.0, sigma1=1.0)


def _case_4(step=0) -> dict:
    groups = (
        ClientGroup(1, 3, uniform(-1, 1), (0.5, 1.0, 2.0), normal(0, 2), normal(6, 2), normal(6, 2)),
        ClientGroup(4, 6, normal(2, 2), (-5.0, 2.0, 4.0), beta(5, 1), normal(3, 3), normal(3, 3)),
        ClientGroup(7, 10, normal(4, 2), (-10.0, 6.0, 8.0), beta(10, 5), normal(5, 5), normal(5, 5)),
    )
    return dict(K=10, d=5, sizes=_sizes(300, step, 10), groups=groups, sigma0=1.0, sigma1=1.0)


def _case_6(step=0) -> dict:
    groups = (
        ClientGroup(1, 10, uniform(-1, 1), (0.5, 1.0, 2.0), normal(0, 2), normal(0, 1), normal(0, 1)),
        ClientGroup(11, 20, normal(0, 1), (0.5, 1.0, 2.0), normal(0, 2), normal(0, 1), normal(0, 1)),
    )
    return dict(K=20, d=10, sizes=_sizes(300, step, 20), groups=groups, sigma0=1.0, sigma1=1.0)


def _case_extreme() -> dict:
    groups = (
        ClientGroup(1, 4, uniform(0, 30), (-2.0, 4.0, 6.0), normal(0, 3), normal(4, 3), normal(4, 3)),
        ClientGroup(5, 10, normal(2, 2), (-2.0, 2.0, 4.0), beta(10, 15), normal(3, 3), normal(3, 3)),
    )
    return dict(K=10, d=10, sizes=_sizes(300, 0, 10), groups=groups, sigma0=1.0, sigma1=1.0)


_CASES = {
    "c1": _case_1,
    "c2": _case_2,
    "c3": lambda: _case_2(step=200),
    "c4": _case_4,
    "c5": lambda: _case_4(step=20),
    "c6": _case_6,
    "c7": lambda: _case_6(step=10),
    "extreme": _case_extreme,
}
CASE_IDS = tuple(_CASES)


def case_spec(case_id: str, seed: int = 0, intercept: bool = False) -> CaseSpec:
    """Built-in benchmark case (``c1``..``c7`` or ``extreme``)."""
    key = case_id.lower()
    if key not in _CASES:
        raise ValueError(f"unknown case {case_id!r}; choose from {', '.join(CASE_IDS)}")
    return CaseSpec(case_id=key, seed=int(seed), intercept=intercept, **_CASES[key]())


def generate(spec: CaseSpec) -> GeneratedWorld:
    """Draw one replication of ``spec``. Client ``k`` uses its own seed stream."""
    clients, thetas, ates, coefs = [], [], [], []
    for k in range(1, spec.K + 1):
        g = spec.group_of(k)
        rng = np.random.default_rng(stream_seed(spec.seed, k))
        n, d = spec.sizes[k - 1], spec.d
        a0, b0, c0 = g.intercepts
        a1 = g.a1.sample(rng, d)
        b1 = g.b1.sample(rng, d)
        c1 = g.c1.sample(rng, d)
        x = g.covariates.sample(rng, (n, d))
        w = (rng.random(n) < sigmoid(a0 + x @ a1)).astype(np.int8)
        y0 = softplus(b0 + x @ b1) + spec.sigma0 * rng.standard_normal(n)
        y1 = softplus(c0 + x @ c1) + spec.sigma1 * rng.standard_normal(n)
        y = np.where(w == 1, y1, y0)
        clients.append(ClientDataset(x, w, y, y0, y1))
        thetas.append(np.concatenate([[a0], a1]) if spec.intercept else a1)
        ates.append(float(np.mean(y1 - y0)))
        coefs.append(dict(a0=a0, b0=b0, c0=c0, a1=a1, b1=b1, c1=c1))
    if spec.intercept:
        clients = [c.with_intercept() for c in clients]
    return GeneratedWorld(spec, clients, thetas, ates, coefs)


def dump(world: GeneratedWorld, out_dir) -> list:
    """Write ``client_<k>.csv`` and ``truths_<k>.csv`` for every client."""
    from .csvio import write_client_csv, write_truths_csv

    paths = []
    for k, (data, theta, ate) in enumerate(zip(world.clients, world.true_theta, world.true_ate), 1):
        paths.append(write_client_csv(data, out_dir, k))
        paths.append(write_truths_csv(theta, ate, out_dir, k))
    return paths


def treated_fraction_bounds(p: float, n: int, z: float = 5.0) -> tuple[float, float]:
    """``p +/- z`` binomial standard errors for a sample of ``n``."""
    se = np.sqrt(p * (1 - p) / n)
    return p - z * se, p + z * se



EHD_VARIABLES = ("voltage", "frequency", "duty_ratio", "speed", "standoff", "nozzle")
EHD_OUTCOME = "line_width"

# per-variable (centre, spread, loading on the shared regime, effect on width)
_EHD_LAYOUT = (
    (2.0, 0.30, 0.8, 9.0),      # kV
    (400.0, 80.0, 0.6, -0.03),  # Hz
    (50.0, 10.0, -0.5, 0.4),    # %
    (2.0, 0.50, -0.7, -8.0),    # mm/s
    (200.0, 40.0, 0.4, 0.05),   # um
    (100.0, 20.0, 0.6, 0.35),   # um
)


def ehd_analog(seed: int = 0, n_per_client: int = 105, clients: int = 2) -> list[dict]:
    """Semi-synthetic printer tables with six confounded process variables.

    A latent per-run regime ``z`` moves all six settings together, so each
    variable is confounded by the others. The line width responds linearly to
    every setting, with an effect that also grows with the regime, plus a
    quadratic regime term; the constant-effect linear model is therefore
    misspecified away from the treated/control overlap. The second client runs
    a shifted regime.

    Returns one ``{column name: values}`` dict per client, outcome included.
    """
    tables = []
    for k in range(1, clients + 1):
        rng = np.random.default_rng(stream_seed(seed, 1000 + k))
        z = rng.standard_normal(n_per_client) + 0.5 * (k - 1)
        cols, width = {}, np.full(n_per_client, 40.0)
        for name, (centre, spread, load, effect) in zip(EHD_VARIABLES, _EHD_LAYOUT):
            u = load * z + np.sqrt(1 - load**2) * rng.standard_normal(n_per_client)
            v = centre + spread * u
            cols[name] = v
            width += effect * (v - centre) * (1.0 + 0.5 * z)
        width += 6.0 * z**2 + 2.0 * rng.standard_normal(n_per_client)
        cols[EHD_OUTCOME] = width
        tables.append(cols)
    return tables
