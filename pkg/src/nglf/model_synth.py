"""Non-overlapping Gaussian latent factor (NGLF) generative model.

An NGLF model has m independent latent factors and p observed variables,
each observed variable having exactly one latent parent:

    X_i = Z_{pa(i)} + eta_i,   Z_j ~ N(0, b),   eta_i ~ N(0, a),

all independent. Only the signal-to-noise ratio s = b/a matters for
structure recovery, so we fix a = 1 and b = snr throughout.

Sampling uses numpy's Generator/PCG64 (ziggurat standard normals), so the
same seed reproduces the same dataset bit-for-bit on any platform with the
same numpy version.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NglfSpec",
    "SyntheticDataset",
    "StandardizedData",
    "DegenerateColumnError",
    "generate_nglf",
    "population_covariance",
    "standardize",
]


class DegenerateColumnError(ValueError):
    """Raised when a data column has zero sample variance."""

    def __init__(self, column: int):
        self.column = column
        super().__init__(f"column {column} has zero sample variance; cannot standardize")


def _default_partition(p: int, m: int) -> tuple[int, ...]:
    """Contiguous equal blocks [0,...,0,1,...,1,...]; requires m | p."""
    if p % m != 0:
        raise ValueError(
            f"no partition supplied and m={m} does not divide p={p}; "
            "equal groups need m | p"
        )
    return tuple(j for j in range(m) for _ in range(p // m))


@dataclass(frozen=True)
class NglfSpec:
    """Ground-truth generative model parameters.

    Parameters
    ----------
    p : int
        Number of observed variables.
    m : int
        Number of latent factors.
    snr : float
        Signal-to-noise ratio s = b/a (latent variance over noise variance).
    partition : tuple of int, optional
        partition[i] is the parent factor of X_i, in [0, m). Defaults to
        contiguous equal blocks when m divides p.
    """

    p: int
    m: int
    snr: float
    partition: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not (self.p >= self.m >= 1):
            raise ValueError(f"need p >= m >= 1, got p={self.p}, m={self.m}")
        if not self.snr > 0:
            raise ValueError(f"need snr > 0, got {self.snr}")
        if len(self.partition) == 0:
            object.__setattr__(self, "partition", _default_partition(self.p, self.m))
        if len(self.partition) != self.p:
            raise ValueError(
                f"partition has length {len(self.partition)}, expected p={self.p}"
            )
        part = tuple(int(j) for j in self.partition)
        if any(j < 0 or j >= self.m for j in part):
            raise ValueError(f"partition entries must lie in [0, {self.m})")
        object.__setattr__(self, "partition", part)

    @property
    def a(self) -> float:
        """Noise variance (fixed to 1)."""
        return 1.0

    @property
    def b(self) -> float:
        """Latent variance (= snr, since a = 1)."""
        return float(self.snr)

    def is_equal_groups(self) -> bool:
        """True if every factor has exactly p/m children."""
        if self.p % self.m != 0:
            return False
        counts = np.bincount(np.asarray(self.partition), minlength=self.m)
        return bool(np.all(counts == self.p // self.m))


@dataclass(frozen=True)
class SyntheticDataset:
    """Samples drawn from an NGLF model.

    data is n x p, latents is n x m, labels is the generating partition.
    """

    data: np.ndarray
    latents: np.ndarray
    labels: tuple[int, ...]
    spec: NglfSpec


@dataclass(frozen=True)
class StandardizedData:
    """n x p matrix with column mean 0 and variance 1 (1/n convention).

    means and scales are in original units, so
    original = data * scales + means.
    """

    data: np.ndarray
    means: np.ndarray
    scales: np.ndarray

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]


def generate_nglf(spec: NglfSpec, n: int, seed: int) -> SyntheticDataset:
    """Draw n i.i.d. samples x_i = z_{pa(i)} + eta_i.

    Var(z_j) = b = snr, Var(eta_i) = a = 1. Deterministic given seed.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    z = rng.standard_normal((n, spec.m)) * np.sqrt(spec.b)
    eta = rng.standard_normal((n, spec.p))
    x = z[:, list(spec.partition)] + eta
    return SyntheticDataset(data=x, latents=z, labels=spec.partition, spec=spec)


def population_covariance(spec: NglfSpec) -> np.ndarray:
    """Population covariance Sigma_ij = b * [pa(i) = pa(j)] + a * [i = j].

    Block DPR1 under any ordering that sorts variables by parent: each
    block is a*I + b*11^T. Symmetric positive definite (eigenvalues >= a).
    """
    part = np.asarray(spec.partition)
    same_parent = (part[:, None] == part[None, :]).astype(float)
    return spec.b * same_parent + spec.a * np.eye(spec.p)


def standardize(raw: np.ndarray) -> StandardizedData:
    """Center and scale each column to mean 0, variance 1 (1/n convention).

    Raises DegenerateColumnError naming the first constant column.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] < 2:
        raise ValueError(f"need an n x p matrix with n >= 2, got shape {raw.shape}")
    means = raw.mean(axis=0)
    centered = raw - means
    scales = np.sqrt(np.mean(centered**2, axis=0))
    bad = np.flatnonzero(scales == 0.0)
    if bad.size:
        raise DegenerateColumnError(int(bad[0]))
    return StandardizedData(data=centered / scales, means=means, scales=scales)
