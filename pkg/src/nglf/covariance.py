"""Covariance estimation from fitted factor models, plus baselines.

The fitted model implies a diagonal-plus-rank-m covariance in standardized
units: Sigma_hat = diag(d) + V V^T with V_ij = B_ji/(1 + r_i) and
d_i = 1 - sum_j V_ij^2, so the diagonal is exactly 1. The factored form is
kept unmaterialized; log-determinants use the matrix determinant lemma and
solves use the Woodbury identity, O(p m^2) per test sample.

All estimates live in standardized space and carry the training means and
scales used to map held-out data into that space (standardizing test data
with its own statistics would leak them). Baseline estimators take data
already expressed in estimate units and compute plain second moments about
the given origin; the pipeline always feeds training-standardized data,
whose columns are exactly zero-mean unit-variance, so the second moment is
the maximum-likelihood covariance there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solver import FactorModel, NumericError

__all__ = [
    "CovarianceEstimate",
    "NotPositiveDefiniteError",
    "factor_covariance",
    "gaussian_nll",
    "empirical_covariance",
    "diagonal_covariance",
    "shrinkage_covariance",
    "ground_truth_covariance",
    "D_FLOOR",
]

D_FLOOR = 1e-6

_KINDS = ("factor", "empirical", "diagonal", "shrinkage", "ground_truth")


class NotPositiveDefiniteError(NumericError):
    """The covariance estimate is not positive definite (e.g. empirical with n < p)."""


@dataclass(frozen=True)
class CovarianceEstimate:
    """A p x p covariance estimate in standardized units.

    kind "factor" stores (V, d) for diag(d) + V V^T; the dense kinds store
    the explicit matrix. means/scales map original-unit data into estimate
    units. clamped counts d entries raised to the positive-definiteness
    floor (factor kind only).
    """

    kind: str
    means: np.ndarray
    scales: np.ndarray
    V: np.ndarray | None = None
    d: np.ndarray | None = None
    dense: np.ndarray | None = None
    clamped: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown estimate kind {self.kind!r}")
        if self.kind == "factor":
            if self.V is None or self.d is None or self.dense is not None:
                raise ValueError("factor kind stores (V, d), not a dense matrix")
        elif self.dense is None or self.V is not None or self.d is not None:
            raise ValueError(f"{self.kind} kind stores a dense matrix only")

    @property
    def p(self) -> int:
        return len(self.means)

    def matrix(self) -> np.ndarray:
        """Materialize the p x p standardized-unit matrix (on demand only)."""
        if self.kind == "factor":
            out = self.V @ self.V.T
            out[np.diag_indices_from(out)] += self.d
            return out
        return self.dense.copy()

    def standardize(self, test: np.ndarray) -> np.ndarray:
        """Map original-unit rows into estimate units with the training stats."""
        test = np.asarray(test, dtype=float)
        if test.ndim != 2 or test.shape[1] != self.p:
            raise ValueError(f"test must be n' x {self.p}, got {test.shape}")
        return (test - self.means) / self.scales


def factor_covariance(model: FactorModel) -> CovarianceEstimate:
    """Diagonal-plus-rank-m covariance implied by a fitted model.

    V_ij = B_ji / (1 + r_i); d_i = 1 - sum_j V_ij^2 so the standardized
    diagonal is exactly 1. Off-diagonals equal
    (B^T B)_il / ((1 + r_i)(1 + r_l)). d is floored at D_FLOOR to keep the
    estimate positive definite at finite samples; the number of floored
    entries is reported on the estimate.
    """
    ms = model.moments
    v = (ms.B / (1.0 + ms.r)[None, :]).T
    d = 1.0 - np.einsum("ij,ij->i", v, v)
    clamped = int(np.sum(d < D_FLOOR))
    d = np.maximum(d, D_FLOOR)
    return CovarianceEstimate(
        kind="factor",
        means=model.means.copy(),
        scales=model.scales.copy(),
        V=v,
        d=d,
        clamped=clamped,
    )


def _second_moment_estimate(
    kind: str,
    dense: np.ndarray,
    means: np.ndarray | None,
    scales: np.ndarray | None,
    p: int,
) -> CovarianceEstimate:
    means = np.zeros(p) if means is None else np.asarray(means, dtype=float)
    scales = np.ones(p) if scales is None else np.asarray(scales, dtype=float)
    return CovarianceEstimate(kind=kind, means=means, scales=scales, dense=dense)


def empirical_covariance(
    data: np.ndarray, means: np.ndarray | None = None, scales: np.ndarray | None = None
) -> CovarianceEstimate:
    """1/n second-moment estimator of data already in estimate units.

    Singular for n < p; construction succeeds, gaussian_nll then rejects.
    means/scales record the training standardization (identity if omitted).
    """
    data = np.asarray(data, dtype=float)
    dense = data.T @ data / data.shape[0]
    return _second_moment_estimate("empirical", dense, means, scales, data.shape[1])


def diagonal_covariance(
    data: np.ndarray, means: np.ndarray | None = None, scales: np.ndarray | None = None
) -> CovarianceEstimate:
    """Independent-variables baseline: diagonal of column second moments."""
    data = np.asarray(data, dtype=float)
    dense = np.diag(np.mean(data * data, axis=0))
    return _second_moment_estimate("diagonal", dense, means, scales, data.shape[1])


def shrinkage_covariance(
    data: np.ndarray,
    lam: float,
    means: np.ndarray | None = None,
    scales: np.ndarray | None = None,
) -> CovarianceEstimate:
    """(1 - lambda) empirical + lambda diagonal, fixed shrinkage intensity."""
    if not (0.0 <= lam <= 1.0):
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    data = np.asarray(data, dtype=float)
    emp = data.T @ data / data.shape[0]
    dense = (1.0 - lam) * emp + lam * np.diag(np.diag(emp))
    return _second_moment_estimate("shrinkage", dense, means, scales, data.shape[1])


def ground_truth_covariance(
    sigma_std: np.ndarray, means: np.ndarray | None = None, scales: np.ndarray | None = None
) -> CovarianceEstimate:
    """Wrap a known population covariance (standardized units) as an estimate.

    Used by the covariance sweep to include the oracle curve; scales should
    be the population scales so test data maps into the same units.
    """
    sigma_std = np.asarray(sigma_std, dtype=float)
    return _second_moment_estimate(
        "ground_truth", sigma_std.copy(), means, scales, sigma_std.shape[0]
    )


def _factor_nll_terms(est: CovarianceEstimate, xs: np.ndarray) -> tuple[float, np.ndarray]:
    """(log det, per-row quadratic forms) for diag(d) + V V^T, never p x p.

    log det = sum log d + log det(I_m + V^T D^-1 V)  (matrix determinant lemma)
    Sigma^-1 = D^-1 - D^-1 V (I_m + V^T D^-1 V)^-1 V^T D^-1  (Woodbury)
    """
    v, d = est.V, est.d
    dinv_v = v / d[:, None]
    k = v.T @ dinv_v
    k[np.diag_indices_from(k)] += 1.0
    sign, logdet_k = np.linalg.slogdet(k)
    if sign <= 0:
        raise NotPositiveDefiniteError("factor estimate capacitance not PD")
    logdet = float(np.sum(np.log(d)) + logdet_k)
    xd = xs / d[None, :]
    quad = np.einsum("ij,ij->i", xs, xd)
    y = xs @ dinv_v
    quad -= np.einsum("ij,ij->i", y, np.linalg.solve(k, y.T).T)
    return logdet, quad


def _dense_nll_terms(est: CovarianceEstimate, xs: np.ndarray) -> tuple[float, np.ndarray]:
    sigma = est.dense
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            f"{est.kind} covariance estimate is not positive definite"
        ) from None
    logdet = float(2.0 * np.sum(np.log(np.diag(chol))))
    half = np.linalg.solve(chol, xs.T)
    quad = np.einsum("ij,ij->j", half, half)
    return logdet, quad


def gaussian_nll(est: CovarianceEstimate, test: np.ndarray) -> float:
    """Mean Gaussian negative log-likelihood per test sample, in nats.

    test is in original units; it is standardized with the training
    means/scales carried by the estimate, and the Jacobian of that map
    (sum log scale) is added back so the value refers to the original-unit
    density. Factor estimates are evaluated in O(p m^2) per sample via
    Woodbury; dense estimates via one Cholesky factorization. A non-PD
    estimate raises NotPositiveDefiniteError rather than returning NaN.
    """
    xs = est.standardize(test)
    p = est.p
    if est.kind == "factor":
        logdet, quad = _factor_nll_terms(est, xs)
    else:
        logdet, quad = _dense_nll_terms(est, xs)
    nll_std = 0.5 * (p * np.log(2.0 * np.pi) + logdet + float(np.mean(quad)))
    return float(nll_std + np.sum(np.log(est.scales)))
