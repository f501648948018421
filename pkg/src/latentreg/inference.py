"""Asymptotic variances of the beta estimators and per-coordinate intervals.

The scaled estimation error sqrt(n)(beta_hat_k - beta_k) is asymptotically
Gaussian; its variance has a closed form in the model parameters, estimated
here by plugging in the fitted quantities. Three forms are provided:

* the general expression, valid for heterogeneous noise variances and group
  sizes (the default for real fits),
* the simplified expression under a common noise variance and group size,
  in a "full" and a "large-signal" flavor,
* the analogue for the pure-subset estimator of beta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import (
    GroupTooSmall,
    HeterogeneousInputs,
    NonpositiveVariance,
    SingularSigmaZ,
    ValidationError,
)
from .model import Dataset, FittedModel, InferenceReport, PurePartition

__all__ = [
    "VarianceInputs",
    "estimate_sigma_sq",
    "estimate_h",
    "variance_vk_general",
    "variance_vk_simplified",
    "variance_uk",
    "confidence_interval",
]

# relative spread allowed before the simplified formulas refuse to run
_HOMOGENEITY_TOL = 0.10


@dataclass(frozen=True)
class VarianceInputs:
    """Everything the variance formulas need, bundled.

    omega_hat is the inverse of sigma_z_hat; theta_pinv is
    (Theta'Theta)^{-1}Theta'. Group sizes must all be >= 2 (the formulas
    divide by m(m-1)).
    """

    theta_hat: np.ndarray
    sigma_z_hat: np.ndarray
    beta_hat: np.ndarray
    tau_sq_hat: np.ndarray
    sigma_sq_hat: float
    partition: PurePartition
    h_hat: np.ndarray | None = None

    def __post_init__(self):
        for k, g in enumerate(self.partition.groups):
            if len(g) < 2:
                raise GroupTooSmall(k, len(g))
        try:
            omega = np.linalg.inv(self.sigma_z_hat)
        except np.linalg.LinAlgError as exc:
            raise SingularSigmaZ(str(exc)) from exc
        gram = self.theta_hat.T @ self.theta_hat
        try:
            gram_inv = np.linalg.inv(gram)
        except np.linalg.LinAlgError as exc:
            raise SingularSigmaZ(f"Theta'Theta not invertible: {exc}") from exc
        object.__setattr__(self, "omega_hat", omega)
        object.__setattr__(self, "gram_inv", gram_inv)
        object.__setattr__(self, "theta_pinv", gram_inv @ self.theta_hat.T)

    @classmethod
    def from_model(cls, model: FittedModel, sigma_sq_hat: float,
                   h_hat: np.ndarray | None = None) -> "VarianceInputs":
        return cls(theta_hat=model.theta_hat, sigma_z_hat=model.sigma_z_hat,
                   beta_hat=model.beta_hat, tau_sq_hat=model.tau_sq_hat,
                   sigma_sq_hat=sigma_sq_hat, partition=model.partition,
                   h_hat=h_hat)

    def _homogeneous(self):
        """Common (m, tau_sq) after the 10% spread gate, else raise."""
        sizes = np.asarray(self.partition.group_sizes, dtype=float)
        if (sizes.max() - sizes.min()) > _HOMOGENEITY_TOL * sizes.mean():
            raise HeterogeneousInputs(
                f"group sizes {self.partition.group_sizes} spread beyond 10%; "
                "use the general variance formula"
            )
        tau = self.tau_sq_hat
        spread = tau.max() - tau.min()
        if spread > _HOMOGENEITY_TOL * max(tau.mean(), np.finfo(float).tiny):
            raise HeterogeneousInputs(
                "per-coordinate noise variances spread beyond 10%; "
                "use the general variance formula"
            )
        return float(sizes.mean()), float(tau.mean())


def estimate_h(dataset: Dataset, partition: PurePartition,
               a_hat_pure: np.ndarray) -> np.ndarray:
    """Group-averaged covariance with the response:
    h = n^{-1}(A_I'A_I)^{-1} A_I' X_I' y."""
    pure = list(partition.pure_set)
    m = np.asarray(partition.group_sizes, dtype=float)
    return (a_hat_pure.T @ (dataset.x[:, pure].T @ dataset.y)) / m / dataset.n


def estimate_sigma_sq(dataset: Dataset, partition: PurePartition,
                      a_hat_pure: np.ndarray, sigma_z_hat: np.ndarray,
                      beta_hat: np.ndarray, return_clip: bool = False):
    """Residual variance plug-in: y'y/n - 2 beta'h + beta'Sigma_Z beta, clipped at 0."""
    for k, g in enumerate(partition.groups):
        if len(g) < 2:
            raise GroupTooSmall(k, len(g))
    h = estimate_h(dataset, partition, a_hat_pure)
    raw = (float(dataset.y @ dataset.y) / dataset.n
           - 2.0 * float(beta_hat @ h)
           + float(beta_hat @ sigma_z_hat @ beta_hat))
    out = max(raw, 0.0)
    return (out, raw < 0) if return_clip else out


def variance_vk_general(inputs: VarianceInputs, k: int) -> float:
    """General asymptotic variance of the main estimator's k-th coordinate.

    Heterogeneous noise variances tau_i^2 and group sizes m_l enter exactly
    as displayed: a noise-level factor times a precision bracket, plus a
    per-group correction driven by the within-group spread of tau_i^2.
    """
    part = inputs.partition
    beta = inputs.beta_hat
    tau = inputs.tau_sq_hat
    tp = inputs.theta_pinv

    level = inputs.sigma_sq_hat
    for l, group in enumerate(part.groups):
        level += beta[l] ** 2 * tau[list(group)].sum() / len(group) ** 2

    bracket = inputs.omega_hat[k, k] + float((tp[k] ** 2 * tau).sum())

    correction = 0.0
    for l, group in enumerate(part.groups):
        g = list(group)
        ml = len(g)
        total = tau[g].sum()
        inner = float(np.sum(tau[g] * ((total - tau[g]) / (ml - 1) ** 2 - total / ml ** 2)))
        correction += beta[l] ** 2 / ml * float((tp[k, g] ** 2).sum()) * inner
    return float(level * bracket + correction)


def variance_vk_simplified(inputs: VarianceInputs, k: int, mode: str = "full") -> float:
    """Simplified variance under common group size m and noise variance tau^2.

    mode "full" keeps the precision correction and the m(m-1) term; mode
    "large-signal" keeps only (sigma^2 + tau^2 ||beta||^2 / m) Omega_kk.

    Raises
    ------
    HeterogeneousInputs
        When group sizes or noise variances spread more than 10% relative.
    """
    if mode not in ("full", "large-signal"):
        raise ValidationError(f"unknown mode {mode!r}")
    m, tau_sq = inputs._homogeneous()
    beta = inputs.beta_hat
    level = inputs.sigma_sq_hat + tau_sq * float(beta @ beta) / m
    if mode == "large-signal":
        return float(level * inputs.omega_hat[k, k])
    bracket = inputs.omega_hat[k, k] + tau_sq * inputs.gram_inv[k, k]
    tail = 0.0
    for l, group in enumerate(inputs.partition.groups):
        tail += beta[l] ** 2 * float((inputs.theta_pinv[k, list(group)] ** 2).sum())
    return float(level * bracket + tau_sq ** 2 / (m * (m - 1)) * tail)


def variance_uk(inputs: VarianceInputs, k: int) -> float:
    """Asymptotic variance of the pure-subset estimator's k-th coordinate.

    Requires homogeneous group size and noise variance; beta_hat in the
    inputs should be the pure-subset estimate.
    """
    m, tau_sq = inputs._homogeneous()
    beta = inputs.beta_hat
    omega = inputs.omega_hat
    level = inputs.sigma_sq_hat + tau_sq * float(beta @ beta) / m
    bracket = omega[k, k] + tau_sq * float(omega[k] @ omega[k]) / m
    tail = float(np.sum(beta ** 2 * omega[k] ** 2))
    return float(level * bracket + tau_sq ** 2 / (m ** 2 * (m - 1)) * tail)


def confidence_interval(beta_hat_k: float, variance: float, n: int,
                        level: float = 0.95, coordinate: int = 0,
                        variance_formula: str = "general") -> InferenceReport:
    """Normal interval beta_hat_k +- z_{(1+level)/2} sqrt(variance/n)."""
    if variance <= 0:
        raise NonpositiveVariance(f"variance {variance!r} for coordinate {coordinate}")
    if not 0.0 < level < 1.0:
        raise ValidationError("level must be in (0, 1)")
    se = float(np.sqrt(variance / n))
    z = float(norm.ppf((1.0 + level) / 2.0))
    half = z * se
    return InferenceReport(
        coordinate=coordinate,
        estimate=float(beta_hat_k),
        variance=float(variance),
        std_error=se,
        z_stat=float(beta_hat_k) / se,
        ci_lower=float(beta_hat_k) - half,
        ci_upper=float(beta_hat_k) + half,
        level=level,
        variance_formula=variance_formula,
    )
