"""Quasi-Newton solver for the latent-factor information objective.

The model is Z_j | x ~ N(W_j . x, 1): m latent factors as noisy linear
functions of the p standardized observed variables. Minimizing

    O = sum_i 1/2 log <(X_i - nu_i)^2>  +  sum_j 1/2 log <Z_j^2>

(with nu_i the factor-model surrogate for the conditional mean of X_i
given Z) drives the joint distribution toward a model in which each
observed variable depends on a single latent factor.

Three coordinate systems are involved; the mapping is the core trick and
is documented here once:

- W (m x p): the stored parameters.
- R (m x p): correlations R_ji = <X_i Z_j>/sqrt(<Z_j^2>). Derivatives are
  taken with respect to R, where the objective has closed pairwise form.
- U = R.Lambda (Lambda = Sigma^{-1}): the update coordinates. Since
  U = W / sqrt(z2) row-wise and R = U.Sigma, every Lambda-bearing identity
  reduces to products with Sigma, and nothing is ever inverted.

Annealing replaces Sigma by Sigma_eps = (1-eps^2) Sigma + eps^2 I and
shrinks eps to 0 across stages (the noisy variable sqrt(1-eps^2) X + eps E
still has unit variance, so the moment algebra is unchanged). All products
against Sigma_eps stream through the raw data — the p x p covariance is
never formed in the data-backed path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model_synth import StandardizedData

__all__ = [
    "SolverConfig",
    "MomentSet",
    "SecondMoment",
    "SolverState",
    "FactorModel",
    "StageTrace",
    "FitTrace",
    "NumericError",
    "StepRejected",
    "DEFAULT_ANNEAL_SCHEDULE",
    "init_weights",
    "compute_moments",
    "objective",
    "gradient",
    "qn_direction",
    "recover_weights",
    "line_search",
    "fit",
]

DEFAULT_ANNEAL_SCHEDULE: tuple[float, ...] = (0.6, 0.36, 0.216, 0.1296, 0.07776, 0.0)


class NumericError(RuntimeError):
    """A moment or objective computation left the valid numeric domain.

    index is the offending factor (row) or variable (column) when known.
    """

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class StepRejected(Exception):
    """Signal that a proposed U-step leaves the feasible region (U_j Sigma U_j^T >= 1).

    Consumed by the line search, which shrinks the step; never fatal.
    """


@dataclass(frozen=True)
class SolverConfig:
    """Optimizer settings.

    anneal_schedule must end at 0 (the final stage fits the raw covariance).
    r_clip bounds |R| away from 1 so B = R/(1-R^2) stays finite; annealing is
    the primary mitigation for near-deterministic factors, clipping the backstop.
    """

    m: int
    anneal_schedule: tuple[float, ...] = DEFAULT_ANNEAL_SCHEDULE
    max_iters_per_stage: int = 10_000
    rel_tol: float = 1e-8
    armijo_c1: float = 1e-4
    ls_shrink: float = 0.5
    r_clip: float = 1.0 - 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"need m >= 1, got {self.m}")
        sched = tuple(float(e) for e in self.anneal_schedule)
        if len(sched) == 0 or sched[-1] != 0.0:
            raise ValueError("anneal_schedule must be non-empty and end at 0")
        if any(not (0.0 <= e <= 1.0) for e in sched):
            raise ValueError("anneal_schedule entries must lie in [0, 1]")
        object.__setattr__(self, "anneal_schedule", sched)
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be > 0")
        if not (0.0 < self.armijo_c1 < 1.0):
            raise ValueError("armijo_c1 must lie in (0, 1)")
        if not (0.0 < self.ls_shrink < 1.0):
            raise ValueError("ls_shrink must lie in (0, 1)")
        if not (0.0 < self.r_clip < 1.0):
            raise ValueError("r_clip must lie in (0, 1)")


class SecondMoment:
    """Right-multiplication by the (annealed) second-moment matrix Sigma_eps.

    Data-backed: A @ Sigma_eps = (1-eps^2)/n * (A @ X^T) @ X + eps^2 * A,
    O(k n p) per call with no p x p intermediate. The dense path exists for
    population-level runs and small tests, at O(k p^2) per call.
    """

    def __init__(self, data: np.ndarray | None = None, cov: np.ndarray | None = None):
        if (data is None) == (cov is None):
            raise ValueError("provide exactly one of data, cov")
        self._data = data
        self._cov = cov

    @classmethod
    def from_data(cls, sd: StandardizedData) -> "SecondMoment":
        return cls(data=sd.data)

    @classmethod
    def from_covariance(cls, sigma: np.ndarray) -> "SecondMoment":
        """Dense second moment for population-level fits.

        sigma must be in standardized units (unit diagonal): the moment
        algebra assumes <X_i^2> = 1.
        """
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise ValueError(f"covariance must be square, got shape {sigma.shape}")
        if not np.allclose(np.diag(sigma), 1.0, atol=1e-8):
            raise ValueError("covariance diagonal must be 1 (standardized units)")
        return cls(cov=sigma)

    @property
    def p(self) -> int:
        return self._data.shape[1] if self._data is not None else self._cov.shape[0]

    @property
    def n(self) -> int | None:
        return self._data.shape[0] if self._data is not None else None

    def dot(self, a: np.ndarray, eps: float) -> np.ndarray:
        """Return a @ Sigma_eps for a k x p matrix a."""
        e2 = eps * eps
        if self._data is not None:
            x = self._data
            base = (a @ x.T) @ x / x.shape[0]
        else:
            base = a @ self._cov
        if e2 == 0.0:
            return base
        return (1.0 - e2) * base + e2 * a


def _as_second_moment(source: StandardizedData | SecondMoment) -> SecondMoment:
    if isinstance(source, SecondMoment):
        return source
    if isinstance(source, StandardizedData):
        return SecondMoment.from_data(source)
    raise TypeError(
        "expected StandardizedData or SecondMoment, got " + type(source).__name__
    )


@dataclass(frozen=True)
class MomentSet:
    """Pairwise statistics consumed by the objective and gradient.

    z2 : (m,)   <Z_j^2> = (W Sigma_eps W^T)_jj + 1, always >= 1.
    R  : (m, p) correlations, clipped to |R| <= r_clip.
    B  : (m, p) R / (1 - R^2).
    r  : (p,)   sum_j R_ji B_ji.
    M  : (m, m) (<Z_j Z_k> - delta_jk)/sqrt(z2_j z2_k); diagonal (z2-1)/z2.
    Q  : (m, p) Mfull @ B, where Mfull = M + diag(1/z2) is the full
         normalized second moment with unit diagonal (<Z_j^2>/z2_j = 1).
         The unit diagonal is essential: it is what makes the closed-form
         objective equal the conditional-variance form (see `objective`).
    q  : (p,)   sum_j Q_ji B_ji.
    ws : (m, p) cached W @ Sigma_eps (reused by gradient and line search).

    Every field is recomputable from (W, data, eps) alone.
    """

    z2: np.ndarray
    R: np.ndarray
    B: np.ndarray
    r: np.ndarray
    M: np.ndarray
    Q: np.ndarray
    q: np.ndarray
    ws: np.ndarray


def init_weights(p: int, m: int, seed: int) -> np.ndarray:
    """Gaussian init with entry std 1/sqrt(p), so row norms concentrate near 1.

    Deterministic given seed (Generator/PCG64 standard normals).
    """
    if not (p >= m >= 1):
        raise ValueError(f"need p >= m >= 1, got p={p}, m={m}")
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.standard_normal((m, p)) / np.sqrt(p)


def _moments_from_ws(w: np.ndarray, ws: np.ndarray, r_clip: float) -> MomentSet:
    if not np.all(np.isfinite(ws)):
        bad = int(np.flatnonzero(~np.isfinite(ws).all(axis=1))[0])
        raise NumericError(f"non-finite moments for factor {bad}", index=bad)
    wsw = ws @ w.T
    z2 = np.einsum("ji,ji->j", ws, w) + 1.0
    s = np.sqrt(z2)
    rmat = np.clip(ws / s[:, None], -r_clip, r_clip)
    b = rmat / (1.0 - rmat * rmat)
    r = np.einsum("ji,ji->i", rmat, b)
    mlat = wsw / np.outer(s, s)  # diagonal lands at (z2 - 1)/z2
    mfull = mlat.copy()
    np.fill_diagonal(mfull, 1.0)
    qmat = mfull @ b
    q = np.einsum("ji,ji->i", qmat, b)
    return MomentSet(z2=z2, R=rmat, B=b, r=r, M=mlat, Q=qmat, q=q, ws=ws)


def compute_moments(
    w: np.ndarray,
    source: StandardizedData | SecondMoment,
    eps: float = 0.0,
    r_clip: float = 1.0 - 1e-6,
) -> MomentSet:
    """All pairwise statistics of (X, Z) under Sigma_eps, streamed from data.

    Uses W Sigma_eps = (1-eps^2)/n (W X^T) X + eps^2 W and
    W Sigma_eps W^T without ever forming the p x p covariance.
    """
    if not (-1.0 <= eps <= 1.0):
        raise ValueError(f"need |eps| <= 1, got {eps}")
    sm = _as_second_moment(source)
    ws = sm.dot(np.asarray(w, dtype=float), eps)
    return _moments_from_ws(np.asarray(w, dtype=float), ws, r_clip)


def objective(ms: MomentSet) -> float:
    """Closed-form objective.

    O = sum_i [ 1/2 log(1 + q_i - r_i^2) - log(1 + r_i) ] + sum_j 1/2 log z2_j.

    The first two terms are 1/2 log <(X_i - nu_i)^2> with
    nu_i = (1+r_i)^{-1} sum_j B_ji Z_j / sqrt(z2_j): expanding that square
    gives numerator 1 + q_i - r_i^2 (with q built on the unit-diagonal
    normalized second moment) over denominator (1 + r_i)^2.
    """
    vm1 = ms.q - ms.r * ms.r  # v - 1, kept in this form for log1p precision
    v = 1.0 + vm1
    if np.any(v <= 0.0) or not np.all(np.isfinite(v)):
        i = int(np.argmin(np.where(np.isfinite(v), v, -np.inf)))
        raise NumericError(
            f"conditional variance term non-positive at variable {i}", index=i
        )
    if np.any(1.0 + ms.r <= 0.0):
        i = int(np.argmin(ms.r))
        raise NumericError(f"1 + r non-positive at variable {i}", index=i)
    return float(
        0.5 * np.sum(np.log1p(vm1))
        - np.sum(np.log1p(ms.r))
        + 0.5 * np.sum(np.log(ms.z2))
    )


def gradient(ms: MomentSet, w: np.ndarray) -> np.ndarray:
    """dO/dR, holding the second-moment matrix fixed.

    Four terms, all O(m^2 p) or cheaper:
      (1) [(1+R^2) Q - 2 R r] / [(1-R^2)^2 v]   — B- and q-channel,
      (2) -2R / [(1-R^2)^2 (1+r)]               — the singularity-free form
          of -2B^2/(R (1+r)), exact at R = 0,
      (3) sqrt(z2)_j W_ji                        — from 1/2 log z2_j,
      (4) (C U)_ji with C_jk = sum_l B_jl B_kl / v_l (j != k), U = W/sqrt(z2)
          — the cross-factor coupling from the off-diagonal entries of the
          normalized latent second moment, which vary with R.
    """
    rmat, b, qmat = ms.R, ms.B, ms.Q
    one_m_r2 = 1.0 - rmat * rmat
    v = 1.0 + ms.q - ms.r * ms.r
    g = ((1.0 + rmat * rmat) * qmat - 2.0 * rmat * ms.r) / (one_m_r2**2 * v)
    g -= 2.0 * rmat / (one_m_r2**2 * (1.0 + ms.r))
    s = np.sqrt(ms.z2)
    g += s[:, None] * w
    u = w / s[:, None]
    c = (b / v) @ b.T
    np.fill_diagonal(c, 0.0)
    g += c @ u
    return g


def qn_direction(g: np.ndarray, ms: MomentSet, w: np.ndarray) -> np.ndarray:
    """Quasi-Newton step in U-coordinates (applied as U <- U - alpha * Delta).

    Delta_U,ji = G_ji / sqrt(z2_j) - (R G^T)_jj W_ji / (z2_j - 1/2).

    Row j equals sqrt(z2_j) times the analytic inverse of the
    diagonal-plus-rank-one Hessian block applied to G_j and mapped through
    Lambda; z2 >= 1 keeps the denominator >= 1/2.
    """
    rg = np.einsum("ji,ji->j", ms.R, g)
    return g / np.sqrt(ms.z2)[:, None] - (rg / (ms.z2 - 0.5))[:, None] * w


def recover_weights(
    u: np.ndarray, source: StandardizedData | SecondMoment, eps: float = 0.0
) -> np.ndarray:
    """Map update coordinates back to weights: W_j = U_j / sqrt(1 - U_j Sigma_eps U_j^T).

    Raises StepRejected when any radicand is <= 0 (the step left the
    feasible region); the line search consumes that and shrinks.
    """
    sm = _as_second_moment(source)
    us = sm.dot(u, eps)
    t = np.einsum("ji,ji->j", us, u)
    if not np.all(np.isfinite(t)) or np.any(t >= 1.0):
        raise StepRejected("step leaves U_j Sigma U_j^T < 1 region")
    return u / np.sqrt(1.0 - t)[:, None]


@dataclass(frozen=True)
class SolverState:
    """One accepted point: weights with their moments and objective value."""

    W: np.ndarray
    moments: MomentSet
    objective: float


def _evaluate_u(
    u: np.ndarray, sm: SecondMoment, eps: float, r_clip: float
) -> SolverState:
    """recover_weights + compute_moments fused: reuses U Sigma_eps for W Sigma_eps."""
    us = sm.dot(u, eps)
    t = np.einsum("ji,ji->j", us, u)
    if not np.all(np.isfinite(t)) or np.any(t >= 1.0):
        raise StepRejected("step leaves U_j Sigma U_j^T < 1 region")
    scale = 1.0 / np.sqrt(1.0 - t)
    w = u * scale[:, None]
    ms = _moments_from_ws(w, us * scale[:, None], r_clip)
    return SolverState(W=w, moments=ms, objective=objective(ms))


_ALPHA_FLOOR = 1e-10


def _backtrack(
    state: SolverState,
    direction: np.ndarray,
    slope: float,
    sm: SecondMoment,
    eps: float,
    cfg: SolverConfig,
) -> tuple[float, SolverState] | None:
    """Armijo backtracking along U <- U - alpha * direction; None if alpha underflows.

    Sufficient decrease uses max(slope, 0): a step is only ever accepted if
    the objective does not increase, keeping accepted sequences monotone
    even if the quasi-Newton direction is locally non-descent.
    """
    u0 = state.W / np.sqrt(state.moments.z2)[:, None]
    dec = cfg.armijo_c1 * max(slope, 0.0)
    alpha = 1.0
    while alpha >= _ALPHA_FLOOR:
        try:
            cand = _evaluate_u(u0 - alpha * direction, sm, eps, cfg.r_clip)
        except (StepRejected, NumericError):
            alpha *= cfg.ls_shrink
            continue
        if cand.objective <= state.objective - dec * alpha:
            return alpha, cand
        alpha *= cfg.ls_shrink
    return None


def line_search(
    state: SolverState,
    delta_u: np.ndarray,
    g: np.ndarray,
    sm: SecondMoment,
    eps: float,
    cfg: SolverConfig,
) -> tuple[float, SolverState, bool]:
    """Backtracking line search in U-coordinates.

    Starts at alpha = 1 and multiplies by ls_shrink until the Armijo
    condition holds and the weight recovery succeeds. The slope term uses
    the U-space gradient G Sigma_eps (R = U Sigma_eps is linear, so the
    R-gradient maps through Sigma_eps). If alpha underflows below 1e-10,
    retries once along the raw U-space gradient; if that also fails,
    reports the stage as stalled (third return value).
    """
    if not np.any(delta_u):
        return 1.0, state, False
    gs = sm.dot(g, eps)
    got = _backtrack(state, delta_u, float(np.vdot(gs, delta_u)), sm, eps, cfg)
    if got is None:
        got = _backtrack(state, gs, float(np.vdot(gs, gs)), sm, eps, cfg)
        if got is None:
            return 0.0, state, True
    alpha, new_state = got
    return alpha, new_state, False


@dataclass
class StageTrace:
    """Objective values accepted during one annealing stage.

    objectives[0] is the stage's starting value (alphas[0] = 0); entry k is
    the value after the k-th accepted step.
    """

    eps: float
    objectives: list[float] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    converged: bool = False
    stalled: bool = False


@dataclass
class FitTrace:
    """Per-stage iteration history of one fit."""

    stages: list[StageTrace] = field(default_factory=list)

    @property
    def any_stalled(self) -> bool:
        return any(st.stalled for st in self.stages)

    def rows(self) -> list[tuple[int, int, float, float]]:
        """Flatten to (stage, iter, objective, alpha) rows."""
        out = []
        for k, st in enumerate(self.stages):
            for it, (obj, al) in enumerate(zip(st.objectives, st.alphas)):
                out.append((k, it, obj, al))
        return out


@dataclass(frozen=True)
class FactorModel:
    """A fitted model: weights plus the eps = 0 moment statistics.

    means/scales are the training standardization (original units), carried
    so that downstream consumers standardize new data consistently.
    """

    W: np.ndarray
    z2: np.ndarray
    moments: MomentSet
    means: np.ndarray
    scales: np.ndarray
    config: SolverConfig
    objective: float

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def p(self) -> int:
        return self.W.shape[1]


def fit(
    source: StandardizedData | SecondMoment,
    cfg: SolverConfig,
    w0: np.ndarray | None = None,
) -> tuple[FactorModel, FitTrace]:
    """Annealed quasi-Newton fit.

    For each eps in the schedule: iterate moments -> gradient ->
    quasi-Newton direction -> line search until the relative objective
    change drops below rel_tol or max_iters_per_stage is hit, then
    warm-start the next stage from the current W. The final stage has
    eps = 0 and its moments are returned on the model.

    source may be StandardizedData (streaming products, O(mnp) per
    iteration) or a SecondMoment built from a dense standardized
    covariance (population-level fits). w0 overrides the random init
    (tests, warm starts).

    Stalled stages are recorded in the trace, not raised.
    """
    sm = _as_second_moment(source)
    p = sm.p
    if isinstance(source, StandardizedData):
        means, scales = source.means, source.scales
    else:
        means, scales = np.zeros(p), np.ones(p)
    w = init_weights(p, cfg.m, cfg.seed) if w0 is None else np.array(w0, dtype=float)
    if w.shape != (cfg.m, p):
        raise ValueError(f"w0 must be m x p = {(cfg.m, p)}, got {w.shape}")

    trace = FitTrace()
    state = None
    for eps in cfg.anneal_schedule:
        ms = compute_moments(w, sm, eps, cfg.r_clip)
        state = SolverState(W=w, moments=ms, objective=objective(ms))
        st = StageTrace(eps=eps, objectives=[state.objective], alphas=[0.0])
        for _ in range(cfg.max_iters_per_stage):
            g = gradient(state.moments, state.W)
            delta_u = qn_direction(g, state.moments, state.W)
            alpha, new_state, stalled = line_search(state, delta_u, g, sm, eps, cfg)
            if stalled:
                st.stalled = True
                break
            rel = abs(new_state.objective - state.objective) / max(
                1.0, abs(state.objective)
            )
            state = new_state
            st.objectives.append(state.objective)
            st.alphas.append(alpha)
            if rel < cfg.rel_tol:
                st.converged = True
                break
        trace.stages.append(st)
        w = state.W

    model = FactorModel(
        W=state.W,
        z2=state.moments.z2,
        moments=state.moments,
        means=np.asarray(means, dtype=float),
        scales=np.asarray(scales, dtype=float),
        config=cfg,
        objective=state.objective,
    )
    return model, trace
