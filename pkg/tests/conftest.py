"""Shared oracles: independent recomputations of the solver's moment algebra.

Everything here goes through explicit dense matrices and explicit
inversion — the paths the production code exists to avoid — so agreement
is evidence, not tautology.
"""

import numpy as np
import pytest

from nglf.model_synth import NglfSpec, population_covariance


def unit_sigma(spec: NglfSpec) -> np.ndarray:
    """Population covariance rescaled to unit diagonal (correlation matrix)."""
    return population_covariance(spec) / (1.0 + spec.snr)


def moments_from_R(R: np.ndarray, sigma: np.ndarray):
    """Recompute (z2, r, q) from correlations alone, via an explicit inverse.

    R Lambda R^T has diagonal t_j = (z2_j - 1)/z2_j, so z2 = 1/(1 - t); the
    off-diagonal entries are the normalized latent second moments. The
    production code never forms Lambda = Sigma^{-1}.
    """
    lam = np.linalg.inv(sigma)
    rlr = R @ lam @ R.T
    t = np.diag(rlr).copy()
    z2 = 1.0 / (1.0 - t)
    b = R / (1.0 - R * R)
    r = np.sum(R * b, axis=0)
    mfull = rlr.copy()
    np.fill_diagonal(mfull, 1.0)
    q = np.sum((mfull @ b) * b, axis=0)
    return z2, r, q


def obj_from_R(R: np.ndarray, sigma: np.ndarray) -> float:
    """Objective as a function of R at fixed Sigma (for finite differencing)."""
    z2, r, q = moments_from_R(R, sigma)
    v = 1.0 + q - r * r
    return float(
        0.5 * np.sum(np.log(v)) - np.sum(np.log1p(r)) + 0.5 * np.sum(np.log(z2))
    )


def obj_direct_expansion(w: np.ndarray, sigma: np.ndarray) -> float:
    """Objective evaluated by expanding <(X_i - nu_i)^2> against the explicit
    joint covariance of (X, Z) — no unit-diagonal shortcut, no q/r identity.

    nu_i = sum_j B_ji Zbar_j / (1 + r_i) with Zbar_j = Z_j / sqrt(z2_j);
    the expectation is a literal quadratic form in Cov(X, Zbar), Cov(Zbar).
    """
    w = np.asarray(w, dtype=float)
    wsw = w @ sigma @ w.T
    z2 = np.diag(wsw) + 1.0
    s = np.sqrt(z2)
    cov_zz = (wsw + np.eye(w.shape[0])) / np.outer(s, s)  # Cov(Zbar), unit diag
    cov_xz = (sigma @ w.T) / s[None, :]  # p x m, Cov(X_i, Zbar_j) = R_ji
    R = cov_xz.T
    b = R / (1.0 - R * R)
    r = np.sum(R * b, axis=0)
    coeff = b / (1.0 + r)[None, :]  # nu_i = sum_j coeff_ji Zbar_j
    resid = (
        np.diag(sigma)
        - 2.0 * np.einsum("ij,ji->i", cov_xz, coeff)
        + np.einsum("ji,jk,ki->i", coeff, cov_zz, coeff)
    )
    return float(0.5 * np.sum(np.log(resid)) + 0.5 * np.sum(np.log(z2)))


def dpr1_direction(g: np.ndarray, R: np.ndarray, z2: np.ndarray, sigma: np.ndarray):
    """Update direction through the explicit DPR1 Hessian-block inverse.

    Row j: sqrt(z2_j) * G_j A_j^{-1} Lambda with
    A_j^{-1} = (1 - t_j) (Sigma - 2 R_j R_j^T / (1 + t_j)), t_j = (z2_j-1)/z2_j.
    """
    lam = np.linalg.inv(sigma)
    out = np.zeros_like(g)
    for j in range(g.shape[0]):
        t_j = (z2[j] - 1.0) / z2[j]
        ainv = (1.0 - t_j) * (sigma - 2.0 * np.outer(R[j], R[j]) / (1.0 + t_j))
        out[j] = np.sqrt(z2[j]) * (g[j] @ ainv @ lam)
    return out


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240817))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo one PASS/FAIL line per acceptance criterion after every run.

    The acceptance tests record verdicts as they execute; printing them here
    keeps the lines visible even though pytest captures in-test output.
    """
    import sys

    acceptance = sys.modules.get("test_acceptance")
    verdicts = getattr(acceptance, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for num, label, ok in sorted(verdicts):
        terminalreporter.write_line(
            f"ACCEPTANCE {num} {label}: {'PASS' if ok else 'FAIL'}"
        )
