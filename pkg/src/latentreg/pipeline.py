"""End-to-end drivers tying detection, estimation and inference together."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormulaMismatch, GroupTooSmall, HeterogeneousInputs, ValidationError
from .estimation import (
    EstimationConfig,
    estimate_a_nonpure_dantzig,
    estimate_a_pure,
    estimate_beta,
    estimate_beta_a,
    estimate_beta_i,
    estimate_beta_naive,
    estimate_gamma_pure,
    estimate_sigma_z,
    estimate_tau_sq,
    estimate_theta,
)
from .inference import VarianceInputs, confidence_interval, estimate_sigma_sq
from .inference import variance_uk, variance_vk_general, variance_vk_simplified
from .model import Dataset, FittedModel, center, sample_covariance
from .purevar import CvReport, cv_select_delta, pure_var

__all__ = ["FitResult", "fit_model", "infer_model"]

ESTIMATOR_KINDS = ("main", "A-based", "I-based", "naive")


@dataclass(frozen=True)
class FitResult:
    model: FittedModel
    delta_used: float
    cv_report: CvReport | None = None


def fit_model(dataset: Dataset, delta="cv", config: EstimationConfig = EstimationConfig(),
              delta_grid=None, estimator: str = "main") -> FitResult:
    """Run the full chain on one dataset and return the fitted model.

    delta may be a number or "cv" (data-splitting selection). The returned
    model's beta_hat holds the requested estimator; sigma_sq_hat is the
    residual-variance plug-in computed with that estimate.
    """
    if estimator not in ESTIMATOR_KINDS:
        raise ValidationError(f"unknown estimator {estimator!r}; pick one of {ESTIMATOR_KINDS}")
    if not dataset.centered:
        dataset = center(dataset)
    cov = sample_covariance(dataset)

    cv_report = None
    if isinstance(delta, str):
        if delta != "cv":
            raise ValidationError(f"delta must be a number or 'cv', got {delta!r}")
        cv_report = cv_select_delta(dataset, grid=delta_grid, rng_seed=config.rng_seed)
        delta_used = cv_report.chosen_delta
    else:
        delta_used = float(delta)

    partition = pure_var(cov.sigma_hat, delta_used)
    a_pure = estimate_a_pure(cov.sigma_hat, partition,
                             anchor_rule=config.anchor_rule, rng_seed=config.rng_seed)
    sigma_z = estimate_sigma_z(cov.sigma_hat, partition, a_pure)
    gamma_pure, gamma_clips = estimate_gamma_pure(
        cov.sigma_hat, sigma_z, a_pure, partition, return_clip_count=True)
    theta = estimate_theta(cov.sigma_hat, gamma_pure, a_pure, partition)
    beta_main, ridge_t = estimate_beta(theta, cov.sigma_xy_hat, config)

    a_full = estimate_a_nonpure_dantzig(sigma_z, cov.sigma_hat, partition, a_pure,
                                        c=config.dantzig_c, n=dataset.n, p=dataset.p)
    tau_sq, tau_clips = estimate_tau_sq(cov.sigma_hat, sigma_z, a_full,
                                        return_clip_count=True)

    if estimator == "main":
        beta = beta_main
    elif estimator == "A-based":
        beta = estimate_beta_a(a_full, cov.sigma_hat, tau_sq, cov.sigma_xy_hat,
                               sigma_z_hat=sigma_z, gamma_mode=config.gamma_mode)
    elif estimator == "I-based":
        pure = list(partition.pure_set)
        beta = estimate_beta_i(sigma_z, a_pure, partition, cov.sigma_xy_hat[pure])
    else:
        beta = estimate_beta_naive(dataset, a_full)

    sigma_sq, sigma_clip = estimate_sigma_sq(dataset, partition, a_pure, sigma_z,
                                             beta, return_clip=True)

    gamma_all = np.zeros(dataset.p)
    gamma_all[list(partition.pure_set)] = gamma_pure
    model = FittedModel(
        a_hat=a_full,
        sigma_z_hat=sigma_z,
        gamma_hat=gamma_all,
        theta_hat=theta,
        beta_hat=beta,
        sigma_sq_hat=sigma_sq,
        tau_sq_hat=tau_sq,
        partition=partition,
        estimator_kind=estimator,
        ridge_t=ridge_t,
        clip_counts={"gamma": int(gamma_clips), "tau_sq": int(tau_clips),
                     "sigma_sq": int(sigma_clip)},
    )
    return FitResult(model=model, delta_used=delta_used, cv_report=cv_report)


def infer_model(model: FittedModel, dataset: Dataset, level: float = 0.95,
                formula: str = "general"):
    """Per-coordinate confidence intervals for a fitted model.

    formula: "general", "simplified", "large-signal" (all for the main-chain
    variance) or "I-based" (variance of the pure-subset estimator; the model
    should have been fitted with estimator="I-based").
    """
    if not dataset.centered:
        dataset = center(dataset)
    if formula == "I-based" and model.estimator_kind != "I-based":
        raise FormulaMismatch(
            f"I-based variance requested for a model fitted with "
            f"estimator_kind={model.estimator_kind!r}")
    inputs = VarianceInputs.from_model(model, model.sigma_sq_hat)
    reports = []
    for k in range(model.k_hat):
        try:
            if formula == "general":
                v = variance_vk_general(inputs, k)
            elif formula in ("simplified", "large-signal"):
                mode = "full" if formula == "simplified" else "large-signal"
                v = variance_vk_simplified(inputs, k, mode=mode)
            elif formula == "I-based":
                v = variance_uk(inputs, k)
            else:
                raise ValidationError(f"unknown variance formula {formula!r}")
        except HeterogeneousInputs as exc:
            raise FormulaMismatch(str(exc)) from exc
        reports.append(confidence_interval(
            float(model.beta_hat[k]), v, dataset.n, level=level,
            coordinate=k, variance_formula=formula))
    return reports
