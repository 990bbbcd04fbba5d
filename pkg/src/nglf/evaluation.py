"""Cluster extraction, NMI scoring, and information diagnostics.

Variables are clustered by the factor with the largest correlation
magnitude |R_ji| (R is the Z-scale-invariant quantity, so the assignment is
unchanged by positive rescaling of any weight row). Agreement with ground
truth is scored by normalized mutual information with the geometric-mean
normalization I(a;b)/sqrt(H(a) H(b)), which is 1 exactly when the two
partitions coincide up to relabeling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solver import FactorModel, MomentSet, objective

__all__ = [
    "ClusterAssignment",
    "cluster_assignment",
    "nmi",
    "tc_lower_bound",
    "exact_conditional_mean_oracle",
]


@dataclass(frozen=True)
class ClusterAssignment:
    """labels[i] is the factor index owning variable i; strengths[i] its |R|."""

    labels: np.ndarray
    strengths: np.ndarray


def cluster_assignment(model: FactorModel) -> ClusterAssignment:
    """Assign each variable to argmax_j |R_ji|, ties to the lowest factor index.

    An all-zero column degenerates to label 0 with strength 0.
    """
    absr = np.abs(model.moments.R)
    labels = np.argmax(absr, axis=0)  # np.argmax takes the first max: lowest index
    strengths = absr[labels, np.arange(absr.shape[1])]
    return ClusterAssignment(labels=labels, strengths=strengths)


def _labels_of(x) -> np.ndarray:
    arr = np.asarray(getattr(x, "labels", x))
    if arr.ndim != 1:
        raise ValueError(f"labels must be one-dimensional, got shape {arr.shape}")
    return arr


def _entropy(counts: np.ndarray, n: int) -> float:
    # Sorted before summing so the value is identical for any presentation
    # order of the same multiset of counts (exact nmi symmetry).
    c = np.sort(counts[counts > 0])
    pr = c / n
    return float(-np.sum(pr * np.log(pr)))


def nmi(a, b) -> float:
    """Normalized mutual information I(a;b)/sqrt(H(a) H(b)) in [0, 1].

    Computed from the empirical joint distribution of the two labelings;
    invariant to label permutations, exactly symmetric in its arguments,
    and exactly 1 iff the partitions are identical up to relabeling.
    Zero-entropy conventions: constant vs constant is 1, constant vs
    non-constant is 0.
    """
    la, lb = _labels_of(a), _labels_of(b)
    if la.shape != lb.shape:
        raise ValueError(f"label lengths differ: {la.shape} vs {lb.shape}")
    n = la.size
    if n == 0:
        raise ValueError("empty labelings")
    _, ea = np.unique(la, return_inverse=True)
    _, eb = np.unique(lb, return_inverse=True)
    na, nb = ea.max() + 1, eb.max() + 1
    ca = np.bincount(ea, minlength=na)
    cb = np.bincount(eb, minlength=nb)
    if na == 1 and nb == 1:
        return 1.0
    if na == 1 or nb == 1:
        return 0.0
    cab = np.bincount(ea * nb + eb, minlength=na * nb)
    cab = cab[cab > 0]
    # Identical partitions up to relabeling <=> the joint table has the same
    # count multiset as both marginals (no block is split); exact 1.0 there.
    if len(cab) == na == nb and np.array_equal(np.sort(cab), np.sort(ca)):
        if np.array_equal(np.sort(cab), np.sort(cb)):
            return 1.0
    ha, hb, hab = _entropy(ca, n), _entropy(cb, n), _entropy(cab, n)
    val = (ha + hb - hab) / np.sqrt(ha * hb)
    return float(min(1.0, max(0.0, val)))


def tc_lower_bound(ms: MomentSet) -> float:
    """Lower-bound diagnostic on the total correlation of X.

    sum_i I(X_i; Z) - sum_j I(Z_j; X), with I(Z_j; X) = 1/2 log z2_j (unit
    latent noise) and I(X_i; Z) = -1/2 log[(1 + q_i - r_i^2)/(1 + r_i)^2]
    through the same conditional-variance surrogate the objective uses —
    so this is exactly the negated objective. At W = 0 it is 0; after a
    converged fit it approaches TC(X). Mid-optimization it is a diagnostic,
    not a certified bound, because the surrogate I(X_i; Z) is itself an
    estimate.
    """
    return -objective(ms)


def exact_conditional_mean_oracle(w: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Exact per-variable conditional variances Var(X_i | Z) by joint inversion.

    Z_j = W_j . X + noise(0, 1); sigma is the standardized covariance of X.
    Test-only oracle (the solver exists to avoid this inversion): p <= 200.

    Var(X_i | Z) = sigma_ii - [Sigma W^T (W Sigma W^T + I)^-1 W Sigma]_ii
    """
    w = np.asarray(w, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    p = sigma.shape[0]
    if p > 200:
        raise ValueError(f"oracle is for small p (<= 200), got p={p}")
    if sigma.shape != (p, p) or w.shape[1] != p:
        raise ValueError("shape mismatch between w and sigma")
    czz = w @ sigma @ w.T
    czz[np.diag_indices_from(czz)] += 1.0
    cxz = sigma @ w.T  # p x m
    sol = np.linalg.solve(czz, cxz.T)  # m x p
    return np.diag(sigma) - np.einsum("im,mi->i", cxz, sol)
