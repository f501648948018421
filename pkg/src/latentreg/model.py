"""Domain types and sample-covariance primitives shared by the whole pipeline.

The data model is the latent factor regression

    Y = Z'beta + eps,        X = A Z + W,

observed through n i.i.d. rows of (X, Y). Everything downstream works off the
sample covariance Sigma_hat = X'X/n and cross-covariance X'y/n, so those two
reductions live here together with the containers every module consumes.

All containers are frozen dataclasses: immutable after construction and safe
to share across worker processes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

__all__ = [
    "Dataset",
    "CovarianceSummary",
    "PurePartition",
    "FittedModel",
    "InferenceReport",
    "SimulationTruth",
    "center",
    "sample_covariance",
    "delta_default",
]


@dataclass(frozen=True)
class Dataset:
    """Observed n x p design and response, with a centering flag.

    Parameters
    ----------
    x : ndarray, shape (n, p)
    y : ndarray, shape (n,)
    centered : bool
        True once every column of x and y has empirical mean zero.
    """

    x: np.ndarray
    y: np.ndarray
    centered: bool = False

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if x.ndim != 2:
            raise ValidationError("x must be a 2-d array")
        n, p = x.shape
        if n < 2 or p < 2:
            raise ValidationError(f"need n >= 2 and p >= 2, got n={n}, p={p}")
        if y.shape[0] != n:
            raise ValidationError(f"x has {n} rows but y has {y.shape[0]}")
        if self.centered:
            scale = max(float(np.abs(x).max(initial=0.0)), float(np.abs(y).max(initial=0.0)), 1.0)
            if (np.abs(x.mean(axis=0)).max() > 1e-10 * scale
                    or abs(float(y.mean())) > 1e-10 * scale):
                raise ValidationError("centered flag set but column means are not ~0")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class CovarianceSummary:
    """Sample second moments: Sigma_hat = X'X/n, sigma_xy_hat = X'y/n, yy_hat = y'y/n."""

    sigma_hat: np.ndarray
    sigma_xy_hat: np.ndarray
    yy_hat: float

    def __post_init__(self):
        s = np.asarray(self.sigma_hat, dtype=float)
        if not np.allclose(s, s.T, atol=1e-12):
            raise ValidationError("sigma_hat is not symmetric")
        if np.any(np.diag(s) < 0):
            raise ValidationError("sigma_hat has a negative diagonal entry")


@dataclass(frozen=True)
class PurePartition:
    """Estimated number of factors and the ordered pure-variable groups.

    groups are pairwise disjoint, each nonempty, in first-discovery order;
    indices within a group are sorted ascending. Groups of size 1 are legal
    here and rejected at consumption time by the factor-covariance estimator.
    """

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        seen: set[int] = set()
        for g in groups:
            if not g:
                raise ValidationError("empty group in partition")
            if seen & set(g):
                raise ValidationError("partition groups are not disjoint")
            seen |= set(g)

    @property
    def k_hat(self) -> int:
        return len(self.groups)

    @property
    def pure_set(self) -> tuple[int, ...]:
        return tuple(sorted(i for g in self.groups for i in g))

    @property
    def group_sizes(self) -> tuple[int, ...]:
        return tuple(len(g) for g in self.groups)


@dataclass(frozen=True)
class FittedModel:
    """All plug-in estimates produced by one fit.

    a_hat has one row per observed coordinate and one column per detected
    factor; pure rows are signed canonical basis vectors. gamma_hat holds the
    pure-set noise variances (0 off the pure set); tau_sq_hat holds the
    noise-variance plug-ins for every coordinate. ridge_t records the ridge
    actually applied when inverting theta_hat' theta_hat.
    """

    a_hat: np.ndarray
    sigma_z_hat: np.ndarray
    gamma_hat: np.ndarray
    theta_hat: np.ndarray
    beta_hat: np.ndarray
    sigma_sq_hat: float
    tau_sq_hat: np.ndarray
    partition: PurePartition
    estimator_kind: str = "main"
    ridge_t: float = 0.0
    clip_counts: dict = field(default_factory=dict)

    @property
    def k_hat(self) -> int:
        return self.partition.k_hat


@dataclass(frozen=True)
class InferenceReport:
    """Per-coordinate interval: estimate, variance, z statistic and CI bounds."""

    coordinate: int
    estimate: float
    variance: float
    std_error: float
    z_stat: float
    ci_lower: float
    ci_upper: float
    level: float
    variance_formula: str


@dataclass(frozen=True)
class SimulationTruth:
    """Ground-truth parameters of a synthetic instance plus two diagnostics.

    lambda_k is the smallest nonzero eigenvalue of the signal A Sigma_Z A';
    rho_bar_sq quantifies the mass of quasi-pure rows (non-pure rows whose
    largest absolute loading exceeds ``quasi_pure_threshold``) relative to
    the pure groups they shadow.
    """

    a_true: np.ndarray
    sigma_z_true: np.ndarray
    gamma_true: np.ndarray
    beta_true: np.ndarray
    sigma_sq_true: float
    partition_true: PurePartition
    lambda_k: float
    rho_bar_sq: float
    quasi_pure_threshold: float = 0.9


def center(dataset: Dataset) -> Dataset:
    """Subtract column means from x and y; warns on constant columns.

    Idempotent: centering a centered dataset changes nothing (to fp error).
    """
    x = dataset.x - dataset.x.mean(axis=0)
    y = dataset.y - dataset.y.mean()
    col_scale = np.abs(dataset.x).max(axis=0, initial=0.0)
    dead = np.abs(x).max(axis=0) <= 1e-12 * np.maximum(col_scale, 1.0)
    if dead.any():
        warnings.warn(
            f"constant column(s) {np.where(dead)[0].tolist()} became identically zero",
            stacklevel=2,
        )
    if np.abs(y).max(initial=0.0) <= 1e-12 * max(np.abs(dataset.y).max(initial=0.0), 1.0):
        warnings.warn("response is constant and became identically zero", stacklevel=2)
    return Dataset(x=x, y=y, centered=True)


def sample_covariance(dataset: Dataset) -> CovarianceSummary:
    """Second-moment summary with divisor n (not n-1).

    Downstream identities assume Sigma_hat = X'X/n exactly, so the dataset
    must already be centered.
    """
    if not dataset.centered:
        raise ValidationError("sample_covariance requires a centered dataset")
    n = dataset.n
    sigma = dataset.x.T @ dataset.x / n
    sigma = (sigma + sigma.T) / 2.0
    return CovarianceSummary(
        sigma_hat=sigma,
        sigma_xy_hat=dataset.x.T @ dataset.y / n,
        yy_hat=float(dataset.y @ dataset.y) / n,
    )


def delta_default(n: int, p: int, c: float = 1.0) -> float:
    """Covariance-comparison tolerance at its theoretical rate: c*sqrt(log(max(p,n))/n)."""
    if n < 2:
        raise ValidationError("delta_default requires n >= 2")
    if c <= 0:
        raise ValidationError("delta_default requires c > 0")
    return c * float(np.sqrt(np.log(max(p, n)) / n))
