"""Constrained least-squares reconciliation onto ``U_full @ y = 0``.

For base forecasts ``y_hat`` and weight ``W`` the reconciled vector is

    y_tilde = y_hat - W U (U' W U)^{-1} U' y_hat

with ``U = U_full.T`` (``n x K``). The ``K x K`` system is solved by
Cholesky; no inverse is formed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .covariance import CovarianceEstimate

COHERENCE_TOL = 1e-8
COND_LIMIT = 1e12


class ReconciliationError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class ReconciliationResult:
    series_names: tuple[str, ...]
    horizons: tuple[int, ...]
    y_tilde: np.ndarray  # H x n
    max_constraint_violation: np.ndarray  # length H
    method: str


def _weight(W) -> np.ndarray:
    return W.W if isinstance(W, CovarianceEstimate) else np.asarray(W, dtype=float)


class _Solver:
    """Factorisation shared by all right-hand sides.

    Normally a Cholesky factor of ``U'WU``. When that matrix is too
    ill-conditioned, a pivoted QR of the KKT system
    ``[[I, WU], [U', 0]] [y; z] = [y_hat; 0]`` is used instead.
    """

    def __init__(self, system, W):
        self.U = system.U_full.T.astype(float)
        self.W = _weight(W)
        n = self.U.shape[0]
        if self.W.shape != (n, n):
            raise ValueError(f"W has shape {self.W.shape}, expected ({n}, {n})")
        self.WU = self.W @ self.U
        A = self.U.T @ self.WU
        A = (A + A.T) / 2
        self.cond = np.linalg.cond(A)
        self.kkt = None
        if self.cond > COND_LIMIT:
            warnings.warn(
                f"U'WU is ill-conditioned (cond ~ {self.cond:.2e}); using QR fallback",
                stacklevel=3,
            )
            K = self.U.shape[1]
            kkt = np.block([[np.eye(n), self.WU], [self.U.T, np.zeros((K, K))]])
            self.kkt = linalg.qr(kkt, pivoting=True)
        else:
            try:
                self.cho = linalg.cho_factor(A, lower=True)
            except linalg.LinAlgError:
                raise ReconciliationError(
                    "Cholesky of U'WU failed: W not positive definite or constraints rank deficient"
                ) from None

    def project(self, y_hat):
        """Reconciled values for one vector or the columns of a matrix."""
        if self.kkt is None:
            return y_hat - self.WU @ linalg.cho_solve(self.cho, self.U.T @ y_hat)
        Q, R, piv = self.kkt
        n, K = self.U.shape
        rhs = np.concatenate([y_hat, np.zeros((K,) + y_hat.shape[1:])])
        x = np.empty_like(rhs)
        x[piv] = linalg.solve_triangular(R, Q.T @ rhs)
        return x[:n]


def _violation(y_tilde, U, y_hat):
    return np.abs(U.T @ y_tilde).max() / max(1.0, np.abs(y_hat).max())


def _reconcile_one(solver, y_hat):
    if not (solver.U.T @ y_hat).any():
        return y_hat.copy(), 0.0
    y_tilde = solver.project(y_hat)
    viol = _violation(y_tilde, solver.U, y_hat)
    if viol > COHERENCE_TOL:
        raise ReconciliationError(
            f"reconciled forecasts violate constraints by {viol:.3e} (cond(U'WU) ~ {solver.cond:.2e})"
        )
    return y_tilde, viol


def reconcile(y_hat, system, W) -> np.ndarray:
    """Reconcile one length-n vector of base forecasts."""
    y_hat = np.asarray(y_hat, dtype=float)
    if y_hat.shape != (system.n,):
        raise ValueError(f"y_hat must have shape ({system.n},), got {y_hat.shape}")
    return _reconcile_one(_Solver(system, W), y_hat)[0]


def reconcile_batch(base, system, W) -> ReconciliationResult:
    """Reconcile every horizon of a :class:`BaseForecastSet` with the same ``W``."""
    if tuple(base.series_names) != system.ordering:
        raise ValueError("base forecast columns do not match the system ordering")
    solver = _Solver(system, W)
    rows, viols = [], []
    for y_hat in base.forecasts:
        y_tilde, v = _reconcile_one(solver, np.array(y_hat))
        rows.append(y_tilde)
        viols.append(v)
    method = W.method if isinstance(W, CovarianceEstimate) else "custom"
    return ReconciliationResult(
        series_names=system.ordering,
        horizons=tuple(base.horizons),
        y_tilde=np.vstack(rows),
        max_constraint_violation=np.array(viols),
        method=method,
    )


def projection_matrix(system, W) -> np.ndarray:
    """Dense ``M = I - W U (U'WU)^{-1} U'`` so that ``y_tilde = M @ y_hat``."""
    return _Solver(system, W).project(np.eye(system.n))
