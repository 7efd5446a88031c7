"""Weighting matrices for reconciliation: OLS, WLS and MinT with shrinkage."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

METHODS = ("ols", "wls", "mint_shr")


class NotPositiveDefinite(ValueError):
    pass


@dataclass(frozen=True)
class CovarianceSpec:
    method: str = "mint_shr"
    variance_floor: float = 1e-10
    lambda_override: float | None = None
    center: bool = True

    def __post_init__(self):
        method = self.method.replace("-", "_")
        if method not in METHODS:
            raise ValueError(f"unknown covariance method {self.method!r}; choose from {METHODS}")
        object.__setattr__(self, "method", method)
        if self.variance_floor < 0:
            raise ValueError("variance_floor must be >= 0")
        if self.lambda_override is not None and not 0.0 <= self.lambda_override <= 1.0:
            raise ValueError("lambda_override must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    W: np.ndarray
    method: str
    diag_W1: np.ndarray
    lam: float | None = None


def _check_residuals(residuals, min_rows):
    E = np.asarray(residuals, dtype=float)
    if E.ndim != 2:
        raise ValueError("residuals must be a 2-d (T_r x n) array")
    if E.shape[0] < min_rows:
        raise ValueError(f"need at least {min_rows} residual rows, got {E.shape[0]}")
    if not np.all(np.isfinite(E)):
        raise ValueError("residuals contain non-finite entries")
    return E


def sample_covariance(residuals, center: bool = True) -> np.ndarray:
    """``E'E / T_r`` of the (column-centred) residual matrix."""
    E = _check_residuals(residuals, 2)
    if center:
        E = E - E.mean(axis=0)
    W1 = E.T @ E / E.shape[0]
    return (W1 + W1.T) / 2


def estimate_shrinkage_intensity(residuals, center: bool = True) -> float:
    """Shrinkage intensity towards the diagonal target (Schafer & Strimmer, 2005).

    With ``x`` the standardised residual columns and ``w_kij = x_ki x_kj``::

        r_ij      = T/(T-1) * mean_k w_kij
        Var(r_ij) = T/(T-1)**3 * sum_k (w_kij - mean_k w_kij)**2
        lambda    = sum_{i!=j} Var(r_ij) / sum_{i!=j} r_ij**2

    clipped to ``[0, 1]``. A zero denominator gives ``lambda = 1``.
    """
    E = _check_residuals(residuals, 3)
    T = E.shape[0]
    if center:
        E = E - E.mean(axis=0)
    sd = np.sqrt((E**2).sum(axis=0) / (T - 1))
    if np.any(sd == 0):
        bad = np.flatnonzero(sd == 0).tolist()
        raise ValueError(f"zero-variance residual columns {bad}; floor or drop them first")
    X = E / sd
    w_bar = X.T @ X / T
    w2_bar = (X**2).T @ (X**2) / T
    # sum_k (w_kij - w_bar_ij)^2 = T * (mean_k w_kij^2 - w_bar_ij^2)
    var_r = T / (T - 1) ** 3 * T * (w2_bar - w_bar**2)
    r = T / (T - 1) * w_bar
    off = ~np.eye(E.shape[1], dtype=bool)
    num = var_r[off].sum()
    den = (r[off] ** 2).sum()
    if den <= 0:
        return 1.0
    return float(np.clip(num / den, 0.0, 1.0))


def _floored_diagonal(d, floor):
    top = d.max() if d.size else 0.0
    if top <= 0:
        # all-zero residuals: any common scale gives the same reconciliation
        return np.ones_like(d)
    return np.maximum(d, floor * top)


def make_weight_matrix(residuals, spec: CovarianceSpec, n: int | None = None) -> CovarianceEstimate:
    """Build ``W`` for the chosen method.

    ``ols`` is the identity (any positive scale reconciles identically);
    ``wls`` is the floored diagonal of the residual covariance; ``mint_shr``
    keeps that diagonal and scales the off-diagonal covariances by
    ``1 - lambda``.
    """
    if spec.method == "ols":
        if n is None:
            n = np.asarray(residuals).shape[1]
        return CovarianceEstimate(W=np.eye(n), method="ols", diag_W1=np.ones(n))

    W1 = sample_covariance(residuals, center=spec.center)
    d = _floored_diagonal(np.diag(W1).copy(), spec.variance_floor)

    if spec.method == "wls":
        W = np.diag(d)
        lam = None
    else:
        E = np.asarray(residuals, dtype=float)
        if E.shape[0] < E.shape[1] / 2:
            warnings.warn(
                f"only {E.shape[0]} residual rows for {E.shape[1]} series; "
                "shrinkage estimate may be unstable",
                stacklevel=2,
            )
        if spec.lambda_override is not None:
            lam = float(spec.lambda_override)
        else:
            # constant columns have zero covariances and carry no correlation information
            live = np.diag(W1) > 0
            lam = estimate_shrinkage_intensity(E[:, live], center=spec.center) if live.sum() >= 2 else 1.0
        W = (1.0 - lam) * W1
        np.fill_diagonal(W, d)

    try:
        np.linalg.cholesky(W)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(
            f"{spec.method} weight matrix is not positive definite after flooring"
        ) from None
    W.setflags(write=False)
    return CovarianceEstimate(W=W, method=spec.method, diag_W1=d, lam=lam)
