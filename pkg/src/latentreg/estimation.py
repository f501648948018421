"""Plug-in estimation of the factor covariance, loadings, Theta and beta.

The chain, starting from a detected pure-variable partition:

  1. factor covariance Sigma_Z from within/between-group covariance averages,
  2. signed canonical loadings for the pure rows,
  3. pure-row noise variances by subtracting the common part,
  4. Theta = (Sigma[:, I] - Gamma[:, I]) A_I (A_I'A_I)^{-1} and
     beta = (Theta'Theta)^{-1} Theta' (X'y/n), with a ridge fallback.

Non-pure loading rows come from an l1-minimal program with a sup-norm
feasibility band (one small LP per row, solved in one batched call).
Alternative estimators of beta (loading-based, pure-subset, naive cluster
averages, oracle least squares) live here as well for benchmarking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import (
    GroupTooSmall,
    LpInfeasible,
    SingularAfterRidge,
    SingularGram,
    SingularInner,
    SingularMiddle,
    SingularSigmaZ,
    ValidationError,
    ZeroCovariance,
)
from .model import Dataset, PurePartition, delta_default

__all__ = [
    "EstimationConfig",
    "estimate_sigma_z",
    "estimate_a_pure",
    "estimate_gamma_pure",
    "estimate_tau_sq",
    "estimate_theta",
    "estimate_beta",
    "estimate_a_nonpure_dantzig",
    "estimate_beta_a",
    "estimate_beta_i",
    "estimate_beta_naive",
    "estimate_beta_oracle",
    "predict_z_blp",
]


@dataclass(frozen=True)
class EstimationConfig:
    """Knobs for the estimation chain.

    ridge_t=0 means "automatic": when Theta'Theta is ill-conditioned, use
    t = 1e-8 * trace(Theta'Theta)/K. dantzig_c scales the feasibility band
    c*sqrt(log(max(p,n))/n) of the l1 program for non-pure rows.
    """

    ridge_t: float = 0.0
    cond_threshold: float = 1e10
    dantzig_c: float = 0.5
    anchor_rule: str = "first-index"
    rng_seed: int = 0
    gamma_mode: str = "diagonal"  # for beta_a: "diagonal" or "full-residual"

    def __post_init__(self):
        if self.ridge_t < 0:
            raise ValidationError("ridge_t must be >= 0")
        if self.cond_threshold <= 1:
            raise ValidationError("cond_threshold must be > 1")
        if self.dantzig_c <= 0:
            raise ValidationError("dantzig_c must be > 0")
        if self.anchor_rule not in ("first-index", "seeded-random"):
            raise ValidationError(f"unknown anchor_rule {self.anchor_rule!r}")
        if self.gamma_mode not in ("diagonal", "full-residual"):
            raise ValidationError(f"unknown gamma_mode {self.gamma_mode!r}")


def _group_sizes(partition: PurePartition) -> np.ndarray:
    return np.asarray(partition.group_sizes, dtype=float)


def estimate_a_pure(sigma_hat: np.ndarray, partition: PurePartition,
                    anchor_rule: str = "first-index", rng_seed: int = 0) -> np.ndarray:
    """Signed canonical loading rows for the pure set.

    One anchor per group gets +e_k; every other member j gets
    sign(sigma_hat[anchor, j]) e_k. Rows are ordered by ascending pure index.

    Raises
    ------
    ZeroCovariance
        If an in-group covariance with the anchor is exactly zero.
    """
    pure = partition.pure_set
    pos = {i: r for r, i in enumerate(pure)}
    out = np.zeros((len(pure), partition.k_hat))
    rng = np.random.default_rng(rng_seed) if anchor_rule == "seeded-random" else None
    for k, group in enumerate(partition.groups):
        anchor = group[0] if rng is None else int(group[int(rng.integers(len(group)))])
        out[pos[anchor], k] = 1.0
        for j in group:
            if j == anchor:
                continue
            s = sigma_hat[anchor, j]
            if s == 0.0:
                raise ZeroCovariance(anchor, j)
            out[pos[j], k] = np.sign(s)
    return out


def estimate_sigma_z(sigma_hat: np.ndarray, partition: PurePartition,
                     a_hat_pure: np.ndarray) -> np.ndarray:
    """Factor covariance from covariance averages over pure groups.

    Diagonal entries average |sigma_ij| over ordered in-group pairs i != j;
    off-diagonal entries average the sign-corrected cross-group covariances.

    Raises
    ------
    GroupTooSmall
        If any group has fewer than 2 members.
    """
    for k, g in enumerate(partition.groups):
        if len(g) < 2:
            raise GroupTooSmall(k, len(g))
    pure = list(partition.pure_set)
    m = _group_sizes(partition)
    s_pp = sigma_hat[np.ix_(pure, pure)]
    out = (a_hat_pure.T @ s_pp @ a_hat_pure) / np.outer(m, m)
    pos = {i: r for r, i in enumerate(pure)}
    for k, g in enumerate(partition.groups):
        rows = [pos[i] for i in g]
        sub = np.abs(s_pp[np.ix_(rows, rows)])
        out[k, k] = (sub.sum() - np.trace(sub)) / (len(g) * (len(g) - 1))
    return (out + out.T) / 2.0


def estimate_gamma_pure(sigma_hat: np.ndarray, sigma_z_hat: np.ndarray,
                        a_hat_pure: np.ndarray, partition: PurePartition,
                        return_clip_count: bool = False):
    """Noise variances on the pure set: sigma_ii minus the common part, clipped at 0.

    Returns a vector aligned with ascending pure index (and optionally the
    number of negative values that were clipped).
    """
    pure = np.asarray(partition.pure_set)
    quad = np.einsum("rk,kl,rl->r", a_hat_pure, sigma_z_hat, a_hat_pure)
    raw = np.diag(sigma_hat)[pure] - quad
    clipped = int((raw < 0).sum())
    gamma = np.maximum(raw, 0.0)
    return (gamma, clipped) if return_clip_count else gamma


def estimate_tau_sq(sigma_hat: np.ndarray, sigma_z_hat: np.ndarray,
                    a_hat_full: np.ndarray, return_clip_count: bool = False):
    """Noise variances for every coordinate from the full loading matrix, clipped at 0."""
    quad = np.einsum("jk,kl,jl->j", a_hat_full, sigma_z_hat, a_hat_full)
    raw = np.diag(sigma_hat) - quad
    clipped = int((raw < 0).sum())
    tau = np.maximum(raw, 0.0)
    return (tau, clipped) if return_clip_count else tau


def estimate_theta(sigma_hat: np.ndarray, gamma_pure: np.ndarray,
                   a_hat_pure: np.ndarray, partition: PurePartition) -> np.ndarray:
    """Theta = (Sigma[:, I] - Gamma[:, I]) A_I (A_I'A_I)^{-1}.

    A_I'A_I is diagonal with the group sizes, so the inverse is entrywise.
    """
    pure = list(partition.pure_set)
    smg = sigma_hat[:, pure].copy()
    for col, i in enumerate(pure):
        smg[i, col] -= gamma_pure[col]
    m = _group_sizes(partition)
    return smg @ (a_hat_pure / m[None, :])


def estimate_beta(theta_hat: np.ndarray, sigma_xy_hat: np.ndarray,
                  config: EstimationConfig = EstimationConfig()):
    """beta = (Theta'Theta + t I)^{-1} Theta' (X'y/n), ridge only when needed.

    t stays 0 while cond(Theta'Theta) <= config.cond_threshold; otherwise the
    configured (or automatic) t is applied and returned.

    Returns
    -------
    (beta, ridge_t_applied)
    """
    gram = theta_hat.T @ theta_hat
    k = gram.shape[0]
    t = 0.0
    if np.linalg.cond(gram) > config.cond_threshold:
        t = config.ridge_t if config.ridge_t > 0 else 1e-8 * float(np.trace(gram)) / k
        if t <= 0:
            raise SingularAfterRidge("automatic ridge collapsed to 0 on a zero Gram matrix")
    reg = gram + t * np.eye(k)
    if np.linalg.cond(reg) > max(config.cond_threshold, 1e14):
        raise SingularAfterRidge(f"Gram matrix still singular after ridge t={t!r}")
    try:
        beta = np.linalg.solve(reg, theta_hat.T @ sigma_xy_hat)
    except np.linalg.LinAlgError as exc:
        raise SingularAfterRidge(str(exc)) from exc
    return beta, t


def _dantzig_targets(sigma_z_hat, sigma_hat, partition, a_hat_pure, nonpure):
    pure = list(partition.pure_set)
    m = _group_sizes(partition)
    return (a_hat_pure.T @ sigma_hat[np.ix_(pure, nonpure)]) / m[:, None]


def estimate_a_nonpure_dantzig(sigma_z_hat: np.ndarray, sigma_hat: np.ndarray,
                               partition: PurePartition, a_hat_pure: np.ndarray,
                               c: float, n: int, p: int) -> np.ndarray:
    """Full loading matrix: signed canonical pure rows plus l1-minimal non-pure rows.

    Each non-pure row solves

        min ||b||_1  s.t.  || Sigma_Z b - target_j ||_inf <= c sqrt(log(max(p,n))/n)

    written as a linear program in the positive/negative parts of b. All rows
    are independent, so they are stacked into one block-diagonal LP. At radius
    0 the feasible set is the single exact solution.

    Raises
    ------
    LpInfeasible
        If the solver reports infeasibility for some row (cannot happen for
        c > 0 when the band is honest; surfaced defensively).
    """
    k = sigma_z_hat.shape[0]
    pure_set = set(partition.pure_set)
    nonpure = [j for j in range(p) if j not in pure_set]
    a_full = np.zeros((p, k))
    for row, i in enumerate(partition.pure_set):
        a_full[i] = a_hat_pure[row]
    if not nonpure:
        return a_full
    targets = _dantzig_targets(sigma_z_hat, sigma_hat, partition, a_hat_pure, nonpure)
    radius = delta_default(n, p, c) if c > 0 else 0.0
    if radius == 0.0:
        try:
            a_full[nonpure] = np.linalg.solve(sigma_z_hat, targets).T
        except np.linalg.LinAlgError as exc:
            raise SingularSigmaZ(str(exc)) from exc
        return a_full

    nj = len(nonpure)
    block = np.block([[sigma_z_hat, -sigma_z_hat], [-sigma_z_hat, sigma_z_hat]])
    a_ub = sp.block_diag([block] * nj, format="csc")
    b_ub = np.concatenate([np.concatenate([t + radius, radius - t]) for t in targets.T])
    res = linprog(np.ones(2 * k * nj), A_ub=a_ub, b_ub=b_ub,
                  bounds=(0, None), method="highs")
    if res.status == 0:
        sol = res.x.reshape(nj, 2 * k)
        a_full[nonpure] = sol[:, :k] - sol[:, k:]
        return a_full
    # batched solve failed; retry row by row to identify the offender
    for idx, j in enumerate(nonpure):
        t = targets[:, idx]
        r = linprog(np.ones(2 * k), A_ub=block,
                    b_ub=np.concatenate([t + radius, radius - t]),
                    bounds=(0, None), method="highs")
        if r.status != 0:
            raise LpInfeasible(j, f"(solver status {r.status})")
        a_full[j] = r.x[:k] - r.x[k:]
    return a_full


def estimate_beta_a(a_hat_full: np.ndarray, sigma_hat: np.ndarray,
                    tau_sq_hat: np.ndarray, sigma_xy_hat: np.ndarray,
                    sigma_z_hat: np.ndarray | None = None,
                    gamma_mode: str = "diagonal") -> np.ndarray:
    """Loading-based estimator: [B'(Sigma - Gamma)B]^{-1} B'(X'y/n), B = A(A'A)^{-1}.

    gamma_mode "diagonal" uses diag(tau_sq_hat); "full-residual" uses the
    whole residual Sigma - A Sigma_Z A' (requires sigma_z_hat), which makes
    this estimator coincide with Sigma_Z^{-1}(A'A)^{-1}A'(X'y/n).
    """
    gram = a_hat_full.T @ a_hat_full
    try:
        b = np.linalg.solve(gram, a_hat_full.T).T
    except np.linalg.LinAlgError as exc:
        raise SingularGram(str(exc)) from exc
    if gamma_mode == "full-residual":
        if sigma_z_hat is None:
            raise ValidationError("full-residual gamma_mode needs sigma_z_hat")
        gamma = sigma_hat - a_hat_full @ sigma_z_hat @ a_hat_full.T
        inner = b.T @ (sigma_hat - gamma) @ b
    else:
        inner = b.T @ (sigma_hat - np.diag(tau_sq_hat)) @ b
    try:
        return np.linalg.solve(inner, b.T @ sigma_xy_hat)
    except np.linalg.LinAlgError as exc:
        raise SingularInner(str(exc)) from exc


def estimate_beta_i(sigma_z_hat: np.ndarray, a_hat_pure: np.ndarray,
                    partition: PurePartition, sigma_xy_pure: np.ndarray) -> np.ndarray:
    """Pure-subset estimator: Sigma_Z^{-1}(A_I'A_I)^{-1}A_I'(X_I'y/n)."""
    m = _group_sizes(partition)
    rhs = (a_hat_pure.T @ sigma_xy_pure) / m
    try:
        return np.linalg.solve(sigma_z_hat, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSigmaZ(str(exc)) from exc


def estimate_beta_naive(dataset: Dataset, a_hat_full: np.ndarray) -> np.ndarray:
    """OLS of y on the weighted cluster averages X A (A'A)^{-1}."""
    gram = a_hat_full.T @ a_hat_full
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise SingularGram("A'A is rank deficient")
    xbar = dataset.x @ np.linalg.solve(gram, a_hat_full.T).T
    g2 = xbar.T @ xbar
    if np.linalg.matrix_rank(g2) < g2.shape[0]:
        raise SingularGram("averaged design is rank deficient")
    return np.linalg.solve(g2, xbar.T @ dataset.y)


def estimate_beta_oracle(z_true: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least squares on the true latent design (benchmark only)."""
    gram = z_true.T @ z_true
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise SingularGram("Z'Z is rank deficient")
    return np.linalg.solve(gram, z_true.T @ y)


def predict_z_blp(dataset: Dataset, theta_hat: np.ndarray,
                  sigma_hat: np.ndarray) -> np.ndarray:
    """Plug-in best linear predictor of the latent rows:
    Z_hat = X Theta (Theta' Sigma Theta)^{-1} Theta'Theta.

    OLS of y on this matrix reproduces estimate_beta exactly.
    """
    middle = theta_hat.T @ sigma_hat @ theta_hat
    try:
        core = np.linalg.solve(middle, theta_hat.T @ theta_hat)
    except np.linalg.LinAlgError as exc:
        raise SingularMiddle(str(exc)) from exc
    return dataset.x @ theta_hat @ core
