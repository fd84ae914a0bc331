"""Entropic and exact squared-distance optimal transport between point sets.

Measures are uniform empirical measures: K points weighted 1/K against L
points weighted 1/L. The entropic solver runs log-domain Sinkhorn with an
annealing ladder on the regularization strength, which keeps the iteration
stable at the very small final entropy weight used by the patch loss. The
exact solver handles equal-size problems (an assignment problem) by
dynamic programming over column subsets and serves as the oracle for the
entropic path in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_LAMBDA_E = 1e-6
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITERS = 10_000


@dataclass(frozen=True)
class SinkhornConfig:
    lambda_e: float = DEFAULT_LAMBDA_E
    tol: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS
    anneal: bool = True

    def __post_init__(self):
        if self.lambda_e <= 0:
            raise ValueError("lambda_e must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


def squared_distance_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, (K, L) for (K, d) and (L, d).

    Uses the |x|^2 + |y|^2 - 2 x.y expansion so memory stays O(K*L) even
    for large feature dimension; negatives from cancellation are clipped.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2:
        raise ValueError("point sets must be 2-d arrays of shape (n, d)")
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise ValueError("point sets must be non-empty")
    if x.shape[1] != y.shape[1]:
        raise ValueError("point sets must share feature dimension")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("point sets must be finite")
    sq = (x * x).sum(axis=1)[:, None] + (y * y).sum(axis=1)[None, :] - 2.0 * (x @ y.T)
    return np.maximum(sq, 0.0)


def entropic_objective(plan: np.ndarray, cost_matrix: np.ndarray, lambda_e: float) -> float:
    """Transport cost plus lambda_e * sum(pi log pi), with 0 log 0 = 0."""
    lin = float((plan * cost_matrix).sum())
    p = plan[plan > 0]
    return lin + lambda_e * float((p * np.log(p)).sum())


@dataclass(frozen=True)
class SinkhornResult:
    cost: float  # entropic objective at the returned plan
    transport_cost: float  # linear part sum(pi * C) alone
    plan: np.ndarray
    f: np.ndarray
    g: np.ndarray
    converged: bool
    iterations: int
    max_violation: float
    # entropic objective after each annealing stage, always evaluated at
    # the final entropy weight so the sequence is comparable across stages;
    # non-increasing when the stages converged (see stage_converged)
    stage_costs: list[float] = field(default_factory=list)
    stage_converged: list[bool] = field(default_factory=list)


def _logsumexp(m: np.ndarray, axis: int) -> np.ndarray:
    hi = m.max(axis=axis, keepdims=True)
    return (hi + np.log(np.exp(m - hi).sum(axis=axis, keepdims=True))).squeeze(axis)


def sinkhorn_transport(x: np.ndarray, y: np.ndarray, cfg: SinkhornConfig | None = None) -> SinkhornResult:
    """Entropic transport between uniform point clouds x (K, d) and y (L, d).

    Marginals are 1/K per row and 1/L per column. With annealing on, the
    entropy weight ladder starts at max(C)/10 and halves down to lambda_e,
    re-using the dual potentials across stages. max_iters is a global
    budget: intermediate stages only warm the potentials and are capped at
    an even share of half the budget (they may stop early at the
    tolerance), leaving at least half for the final stage. The result
    counts as converged when the final stage's worst row-marginal
    violation reaches tol.
    """
    if cfg is None:
        cfg = SinkhornConfig()
    c = squared_distance_matrix(x, y)
    k_n, l_n = c.shape
    log_a = np.full(k_n, -np.log(k_n))
    log_b = np.full(l_n, -np.log(l_n))

    ladder = []
    if cfg.anneal:
        lam = max(float(c.max()) / 10.0, cfg.lambda_e)
        while lam > cfg.lambda_e:
            ladder.append(lam)
            lam /= 2.0
    ladder.append(cfg.lambda_e)
    n_stages = len(ladder)
    stage_cap = max(1, cfg.max_iters // (2 * max(1, n_stages - 1)))

    f = np.zeros(k_n)
    g = np.zeros(l_n)
    plan = np.full((k_n, l_n), 1.0 / (k_n * l_n))
    iters_used = 0
    converged = False
    max_violation = np.inf
    stage_costs: list[float] = []
    stage_converged: list[bool] = []

    for si, lam in enumerate(ladder):
        final = si == n_stages - 1
        remaining = cfg.max_iters - iters_used
        budget = remaining if final else min(stage_cap, remaining)
        converged = False
        for _ in range(budget):
            f = lam * (log_a - _logsumexp((g[None, :] - c) / lam, axis=1))
            g = lam * (log_b - _logsumexp((f[:, None] - c) / lam, axis=0))
            iters_used += 1
            plan = np.exp((f[:, None] + g[None, :] - c) / lam)
            max_violation = float(np.abs(plan.sum(axis=1) - 1.0 / k_n).max())
            if max_violation <= cfg.tol:
                converged = True
                break
        stage_costs.append(entropic_objective(plan, c, cfg.lambda_e))
        stage_converged.append(converged)

    transport_cost = float((plan * c).sum())
    return SinkhornResult(
        cost=entropic_objective(plan, c, cfg.lambda_e),
        transport_cost=transport_cost,
        plan=plan,
        f=f,
        g=g,
        converged=converged,
        iterations=iters_used,
        max_violation=max_violation,
        stage_costs=stage_costs,
        stage_converged=stage_converged,
    )


def sinkhorn_grad_source(x: np.ndarray, y: np.ndarray, plan: np.ndarray) -> np.ndarray:
    """Gradient of the transport cost w.r.t. the source points x.

    With the plan held fixed (envelope theorem at the converged plan),
    d/dx_k sum_kl pi_kl |x_k - y_l|^2 = 2 (rowsum_k x_k - (pi y)_k).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[1] != y.shape[1]:
        raise ValueError("point sets must share feature dimension")
    if plan.shape != (x.shape[0], y.shape[0]):
        raise ValueError("plan shape must be (K, L)")
    rowsum = plan.sum(axis=1)
    return 2.0 * (rowsum[:, None] * x - plan @ y)


@dataclass(frozen=True)
class ExactResult:
    cost: float
    plan: np.ndarray
    assignment: np.ndarray


EXACT_MAX_POINTS = 16


def exact_transport(x: np.ndarray, y: np.ndarray) -> ExactResult:
    """Exact uniform W2^2 for equal-size clouds (K = L <= 16).

    Uniform equal-size transport is an assignment problem (the feasible
    polytope's vertices are scaled permutation matrices), solved here by
    dynamic programming over subsets of assigned columns. Among optimal
    assignments, rows are matched in order, each taking the lowest column
    index that still attains the optimum, so ties break deterministically
    toward the lowest-index permutation.
    """
    c = squared_distance_matrix(x, y)
    k_n, l_n = c.shape
    if k_n != l_n:
        raise ValueError("exact transport requires equal-size point sets")
    if k_n > EXACT_MAX_POINTS:
        raise ValueError(f"exact transport supports at most {EXACT_MAX_POINTS} points")

    full = (1 << l_n) - 1
    # g[mask] = optimal cost of assigning rows popcount(mask)..K-1 to the
    # columns outside mask; filled in decreasing popcount order
    g = np.full(1 << l_n, np.inf)
    g[full] = 0.0
    for mask in sorted(range(full), key=lambda m: m.bit_count(), reverse=True):
        row = mask.bit_count()
        best = np.inf
        for col in range(l_n):
            if mask >> col & 1:
                continue
            cand = c[row, col] + g[mask | (1 << col)]
            if cand < best:
                best = cand
        g[mask] = best

    assignment = np.empty(k_n, dtype=np.int64)
    mask = 0
    for row in range(k_n):
        for col in range(l_n):
            if mask >> col & 1:
                continue
            # reconstruction by exact equality: g[mask] was computed as a
            # min over these same float candidates, so one of them matches
            if c[row, col] + g[mask | (1 << col)] == g[mask]:
                assignment[row] = col
                mask |= 1 << col
                break
        else:
            raise AssertionError("assignment reconstruction failed")

    plan = np.zeros((k_n, l_n))
    plan[np.arange(k_n), assignment] = 1.0 / k_n
    return ExactResult(cost=float(g[0]) / k_n, plan=plan, assignment=assignment)
