"""Multilevel Monte Carlo over a geometric mesh hierarchy.

Estimates E[f] by telescoping level corrections Delta_l = f_l - f_{l-1},
where both functional values in a correction are computed from the same
random realization. Sample counts follow the variance/cost-optimal
allocation; the number of levels is chosen from the fitted weak-error
decay. All sampling is driven by counter-based streams keyed on
(seed, level, sample index), so results are independent of thread count
and scheduling order.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import stream_for


class MlmcError(RuntimeError):
    pass


class SampleEvaluationError(RuntimeError):
    def __init__(self, level, stream, cause):
        super().__init__(f"sample failed at level {level}, stream {stream}: {cause}")
        self.level = level
        self.stream = stream
        self.cause = cause


@dataclass(frozen=True)
class LevelHierarchy:
    """Nested meshes h_l = q^{-l} h0 with n_l = round(1/h_l) boundary nodes."""

    h0: float = 1.0 / 8.0
    q: int = 2
    max_level: int = 10

    def __post_init__(self):
        if self.q < 2:
            raise ValueError("refinement factor q must be >= 2")
        if not 0 < self.h0 < 1:
            raise ValueError("h0 must lie in (0, 1)")

    def h(self, level):
        return self.h0 * self.q ** (-level)

    def n_nodes(self, level):
        return int(round(1.0 / self.h(level)))


@dataclass
class LevelCorrection:
    level: int
    delta: float
    fine: float
    coarse: float
    cost_model: float
    cost_seconds: float
    stream_id: int


@dataclass
class MlmcPlan:
    eps: float
    eps_i: float
    eps_ii: float
    alpha_assumed: float
    pilot_samples: int
    levels: int
    weights: np.ndarray
    samples: np.ndarray


@dataclass
class MlmcResult:
    estimate: float
    eps: float
    levels: list
    alpha_hat: float
    beta_hat: float
    rho_hat: float
    bias_constant: float
    mse_budget: float
    total_cost_model: float
    total_cost_seconds: float
    plan: MlmcPlan
    seed: int


def coupled_sample(level, hierarchy, problem, stream):
    """One level correction from a single realization.

    Draws one realization from the stream, evaluates the functional at the
    level-l and (for l > 0) level-(l-1) discretizations of that same
    realization, and returns f_l - f_{l-1} with its cost.
    """
    tic = time.perf_counter()
    try:
        realization = problem.draw(stream.generator())
        fine, cost_f = problem.level_value(realization, hierarchy, level)
        if level > 0:
            coarse, cost_c = problem.level_value(realization, hierarchy, level - 1)
        else:
            coarse, cost_c = 0.0, 0.0
    except Exception as exc:
        raise SampleEvaluationError(level, stream.stream_id, exc) from exc
    return LevelCorrection(
        level=level,
        delta=fine - coarse,
        fine=fine,
        coarse=coarse,
        cost_model=cost_f + cost_c,
        cost_seconds=time.perf_counter() - tic,
        stream_id=stream.stream_id,
    )


def _run_level_samples(hierarchy, problem, level, indices, seed, threads):
    """Evaluate coupled samples for given sample indices, in any order;
    results land in index position so reductions are schedule-independent."""
    out = [None] * len(indices)

    def job(slot, idx):
        out[slot] = coupled_sample(level, hierarchy, problem, stream_for(seed, level, idx))

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(job, slot, idx) for slot, idx in enumerate(indices)]
            for f in futures:
                f.result()
    else:
        for slot, idx in enumerate(indices):
            job(slot, idx)
    return out


@dataclass
class LevelStats:
    level: int
    h: float
    deltas: np.ndarray = field(default_factory=lambda: np.empty(0))
    cost_model: float = 0.0  # per-sample model cost (deterministic)
    cost_seconds: float = 0.0  # total wall seconds spent

    @property
    def samples(self):
        return len(self.deltas)

    @property
    def mean(self):
        return float(np.mean(self.deltas))

    @property
    def mean_abs(self):
        return float(np.mean(np.abs(self.deltas)))

    @property
    def variance(self):
        if len(self.deltas) < 2:
            return 0.0
        return float(np.var(self.deltas, ddof=1))


def pilot_run(hierarchy, problem, m_pilot, seed, levels=None, threads=None):
    """Sample variance and per-sample cost of the corrections at each level."""
    if m_pilot < 2:
        raise ValueError("need at least 2 pilot samples per level")
    levels = list(range(levels + 1)) if isinstance(levels, int) else list(levels)
    stats = {}
    for level in levels:
        corr = _run_level_samples(hierarchy, problem, level, range(m_pilot), seed, threads)
        stats[level] = LevelStats(
            level=level,
            h=hierarchy.h(level),
            deltas=np.array([c.delta for c in corr]),
            cost_model=corr[0].cost_model,
            cost_seconds=sum(c.cost_seconds for c in corr),
        )
    return stats


def allocate_samples(v, c, eps_ii):
    """Cost-optimal per-level sample counts for a sampling budget eps_ii.

    M_l = ceil(eps_ii^-2 sqrt(V_l/C_l) sum_k sqrt(C_k V_k)), floored at 1;
    the resulting sum V_l/M_l never exceeds eps_ii^2.
    """
    v = np.asarray(v, dtype=float)
    c = np.asarray(c, dtype=float)
    if np.any(v < 0) or np.any(c <= 0) or eps_ii <= 0:
        raise ValueError("need V >= 0, C > 0, eps_ii > 0")
    total = np.sum(np.sqrt(c * v))
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.ceil(np.sqrt(v / c) * total / eps_ii**2)
    m = np.where(np.isfinite(m), m, 1.0)
    m = np.maximum(m, 1.0).astype(int)
    vm = np.sum(v / m)
    if vm > eps_ii**2 * (1 + 1e-12) and total > 0:
        raise MlmcError(f"allocation failed the variance budget: {vm} > {eps_ii**2}")
    return m

def choose_levels(h0, q, alpha, eps_i, bias_constant):
    """Smallest L with bias_constant * h_L^alpha <= eps_i."""
    if alpha <= 0 or eps_i <= 0:
        raise ValueError("need alpha > 0 and eps_i > 0")
    if bias_constant * h0**alpha <= eps_i:
        return 0
    ratio = (bias_constant / eps_i) ** (1.0 / alpha) * h0
    return max(0, math.ceil(math.log(ratio) / math.log(q) - 1e-12))


def fit_rates(hs, e_abs_delta, v, c):
    """Least-squares decay/growth exponents (alpha, beta, rho).

    alpha and beta are slopes of log E|Delta_l| and log V_l against log h_l
    over levels >= 1; rho is the slope of log C_l against log(1/h_l) over
    all levels.
    """
    hs = np.asarray(hs, dtype=float)
    if len(hs) < 4:
        raise ValueError("need at least 3 levels beyond level 0 to fit rates")
    lh = np.log(hs[1:])
    alpha = np.polyfit(lh, np.log(np.asarray(e_abs_delta[1:])), 1)[0]
    beta = np.polyfit(lh, np.log(np.asarray(v[1:])), 1)[0]
    rho = np.polyfit(np.log(1.0 / hs), np.log(np.asarray(c)), 1)[0]
    return float(alpha), float(beta), float(rho)


def _weak_fit(stats):
    """Slope and intercept of log E|Delta_l| vs log h_l over levels >= 1."""
    levels = sorted(stats)[1:]
    lh = np.array([math.log(stats[l].h) for l in levels])
    le = np.array([math.log(max(stats[l].mean_abs, 1e-300)) for l in levels])
    slope, intercept = np.polyfit(lh, le, 1)
    return float(slope), float(math.exp(intercept))


def _bias_model(stats, alpha_ceiling):
    """Conservative weak-error model c * h^alpha from pilot corrections.

    Pilot means at transition levels are heavy-tailed, so the raw fitted
    slope can be wild; the decay exponent used for choosing L is clamped
    to [0.75, alpha_ceiling] and the constant is the envelope of the
    observed corrections under that exponent.
    """
    alpha_hat, _ = _weak_fit(stats)
    alpha_used = min(max(alpha_hat, 0.75), alpha_ceiling)
    c = max(stats[l].mean_abs / stats[l].h**alpha_used for l in sorted(stats)[1:])
    return alpha_hat, alpha_used, c


def plain_mc(hierarchy, problem, level, m, seed, threads=None):
    """Single-level Monte Carlo mean of f_level; reference/oracle runs.

    Returns (mean, sample variance, m). Uses the same per-sample streams
    as the multilevel estimator at that level.
    """
    values = np.empty(m)

    def job(idx):
        stream = stream_for(seed, level, idx)
        realization = problem.draw(stream.generator())
        values[idx], _ = problem.level_value(realization, hierarchy, level)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for f in [pool.submit(job, i) for i in range(m)]:
                f.result()
    else:
        for i in range(m):
            job(i)
    return float(np.mean(values)), float(np.var(values, ddof=1)), m


@dataclass(frozen=True)
class MlmcConfig:
    seed: int = 0
    eps_split: float = 0.5  # fraction of eps given to the discretization bias
    pilot_samples: int = 32
    pilot_levels: int = 3
    threads: int = 1
    alpha_assumed: float = 2.0
    variance_floor: float = np.finfo(float).eps


def mlmc_estimate(problem, eps, hierarchy=None, config=None):
    """Full estimator: pilot, rate fit, level choice, allocation, estimate.

    The pilot samples are the first samples of each level's stream and are
    reused in the final averages; sample counts are computed once from the
    pilot statistics (no adaptive continuation).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    hierarchy = hierarchy or LevelHierarchy()
    config = config or MlmcConfig()
    eps_i = config.eps_split * eps
    eps_ii = eps - eps_i

    stats = pilot_run(
        hierarchy, problem, config.pilot_samples, config.seed,
        levels=config.pilot_levels, threads=config.threads,
    )

    # choose the finest level from the remaining-bias proxy
    # E|Delta_L| / (q^alpha - 1) <= eps_i, extending the pilot one level at
    # a time; this stays robust when the corrections decay faster than any
    # fitted power law (a global c h^alpha extrapolation then misleads)
    while True:
        alpha_hat, alpha_used, bias_const = _bias_model(stats, config.alpha_assumed)
        gain = hierarchy.q**alpha_used - 1.0
        level_count = None
        pilot_levels = sorted(stats)[1:]
        for l in pilot_levels:
            if all(stats[k].mean_abs / gain <= eps_i for k in pilot_levels if k >= l):
                level_count = l
                break
        if level_count is not None:
            break
        stochastic = [l for l in pilot_levels if stats[l].variance > config.variance_floor]
        if len(stochastic) >= 3:
            decay = np.polyfit(
                [math.log(stats[l].h) for l in stochastic],
                [math.log(stats[l].variance) for l in stochastic],
                1,
            )[0]
            if decay <= 0:
                raise MlmcError(
                    "pilot variances do not decay with the mesh (beta_hat <= 0); "
                    "inspect the discretization and the functional coupling"
                )
        if max(stats) + 1 > hierarchy.max_level:
            raise MlmcError(
                f"bias target not reached at max_level {hierarchy.max_level}"
            )
        stats.update(
            pilot_run(
                hierarchy, problem, config.pilot_samples, config.seed,
                levels=[max(stats) + 1], threads=config.threads,
            )
        )

    levels = list(range(level_count + 1))
    v_pilot = np.array([max(stats[l].variance, config.variance_floor) for l in levels])
    stochastic = [l for l in levels[1:] if stats[l].variance > config.variance_floor]
    if len(stochastic) >= 3:
        beta_check = np.polyfit(
            [math.log(stats[l].h) for l in stochastic],
            [math.log(stats[l].variance) for l in stochastic],
            1,
        )[0]
        if beta_check <= 0:
            raise MlmcError(
                "pilot variances do not decay with the mesh (beta_hat <= 0); "
                "inspect the discretization and the functional coupling"
            )
    c_model = np.array([stats[l].cost_model for l in levels])
    m_alloc = allocate_samples(v_pilot, c_model, eps_ii)
    weights = np.sqrt(c_model * v_pilot)
    weights = weights / weights.sum() if weights.sum() > 0 else np.full(len(levels), 1.0 / len(levels))
    plan = MlmcPlan(
        eps=eps,
        eps_i=eps_i,
        eps_ii=eps_ii,
        alpha_assumed=config.alpha_assumed,
        pilot_samples=config.pilot_samples,
        levels=level_count,
        weights=weights,
        samples=m_alloc.copy(),
    )

    for level in levels:
        extra = m_alloc[level] - stats[level].samples
        if extra > 0:
            corr = _run_level_samples(
                hierarchy, problem, level,
                range(stats[level].samples, m_alloc[level]),
                config.seed, config.threads,
            )
            stats[level].deltas = np.concatenate(
                [stats[level].deltas, [c.delta for c in corr]]
            )
            stats[level].cost_seconds += sum(c.cost_seconds for c in corr)

    estimate = float(sum(stats[l].mean for l in levels))
    e_abs = np.array([stats[l].mean_abs for l in levels])
    v_final = np.array([stats[l].variance for l in levels])
    m_used = np.array([stats[l].samples for l in levels])
    if len(levels) >= 4:
        alpha_hat, beta_hat, rho_hat = fit_rates(
            [stats[l].h for l in levels], e_abs, np.maximum(v_final, config.variance_floor),
            c_model,
        )
    else:
        beta_hat = rho_hat = float("nan")
    bias = stats[levels[-1]].mean_abs / (hierarchy.q**alpha_used - 1.0)
    mse_budget = float(np.sum(np.maximum(v_final, 0.0) / m_used) + bias**2)
    per_level = [
        dict(
            level=l,
            h=stats[l].h,
            n_nodes=hierarchy.n_nodes(l),
            samples=int(m_used[l]),
            mean_delta=stats[l].mean,
            mean_abs_delta=stats[l].mean_abs,
            variance=v_final[l],
            cost_model=float(c_model[l]),
            cost_seconds=stats[l].cost_seconds,
        )
        for l in levels
    ]
    return MlmcResult(
        estimate=estimate,
        eps=eps,
        levels=per_level,
        alpha_hat=float(alpha_hat),
        beta_hat=float(beta_hat),
        rho_hat=float(rho_hat),
        bias_constant=float(bias_const),
        mse_budget=mse_budget,
        total_cost_model=float(np.sum(c_model * m_used)),
        total_cost_seconds=float(sum(stats[l].cost_seconds for l in levels)),
        plan=plan,
        seed=config.seed,
    )
