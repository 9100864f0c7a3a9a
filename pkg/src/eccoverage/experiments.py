"""Monte-Carlo harnesses for the convergence claims.

``variance_decay`` runs exploration-only trials and tracks how often the
largest grid variance has fallen below a level.  ``rkhs_consistency`` refits
a Tikhonov-regularized estimator with a decaying regularization weight on
growing prefixes of an exploration archive and measures the sup-norm error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidAlpha
from .field import regularized_estimator
from .geometry import grid_nodes
from .sim import ScenarioConfig, derive_seed, run_ec


@dataclass
class VarianceDecayResult:
    t: np.ndarray  # measurement rounds completed; 0 is the prior
    fraction: np.ndarray
    mean_max_variance: np.ndarray
    max_variance: np.ndarray  # (trials, len(t))
    seeds: list

    def first_hit(self, epsilon: float) -> list:
        """Per trial, the first t with max variance <= epsilon (None if never)."""
        out = []
        for row in self.max_variance:
            hit = np.flatnonzero(row <= epsilon)
            out.append(int(self.t[hit[0]]) if len(hit) else None)
        return out


def trial_seeds(config: ScenarioConfig, trials: int) -> list:
    return [derive_seed(config.seed, "trial", j) for j in range(trials)]


def variance_decay(
    config: ScenarioConfig, trials: int, epsilon: float, iters: int | None = None
) -> VarianceDecayResult:
    """Exploration-only trials tracking the largest grid variance per round.

    Posterior variance never increases with data, so a trial is stopped at
    the first round where it reaches ``epsilon``; later entries repeat that
    value, which bounds the true curve from above and leaves the success
    fraction exact.  The archive cap is raised to ``iters * agent_count`` if
    needed, since only trials that never succeed use the whole horizon.
    """
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    iters = config.max_iters if iters is None else int(iters)
    cap = max(config.max_measurements, iters * config.agent_count)
    seeds = trial_seeds(config, trials)
    lam = config.kernel.prior_variance
    curves = np.empty((trials, iters + 1))
    for j, s in enumerate(seeds):
        cfg = config.replace(seed=s, max_iters=iters, max_measurements=cap)
        run = run_ec(cfg, phase_one_only=True, compute_ideal=False, until=lambda r: r.var_max <= epsilon)
        v = [r.var_max for r in run.records]
        curves[j, 0] = lam
        curves[j, 1 : len(v) + 1] = v
        curves[j, len(v) + 1 :] = v[-1]
    frac = (curves <= epsilon).mean(axis=0)
    return VarianceDecayResult(np.arange(iters + 1), frac, curves.mean(axis=0), curves, seeds)


@dataclass
class ConsistencyRow:
    trial: int
    t: int
    gamma: float
    sup_error: float
    mean_error: float


def decaying_gamma(gamma0: float, t: int, alpha: float) -> float:
    return math.inf if t == 0 else gamma0 * t ** (-alpha)


def rkhs_consistency(
    config: ScenarioConfig,
    alpha: float,
    t_list,
    gamma0: float | None = None,
    trials: int = 1,
) -> list:
    """Sup- and mean-abs grid error of the regularized fit on the first t samples.

    Samples come from an exploration-only run, in arrival order.  The
    regularization weight is ``gamma0 * t**-alpha`` (``gamma0`` defaults to the
    noise variance).  With trials > 1 each trial uses a derived seed; a single
    trial uses the configured seed.
    """
    if not 0 < alpha < 0.5:
        raise InvalidAlpha(f"alpha must lie in (0, 1/2), got {alpha}")
    t_list = [int(t) for t in t_list]
    if any(t < 0 for t in t_list):
        raise ConfigError("t values must be nonnegative")
    gamma0 = config.noise_var if gamma0 is None else float(gamma0)
    if not gamma0 > 0:
        raise ConfigError("gamma0 must be positive")
    t_max = max(t_list, default=0)
    n_iters = max(1, math.ceil(t_max / config.agent_count))
    if n_iters * config.agent_count > config.max_measurements:
        raise ConfigError(f"t={t_max} needs more than max_measurements samples")

    grid = grid_nodes(config.domain, config.grid_step)
    truth = config.true_field(grid.nodes)
    seeds = [config.seed] if trials == 1 else trial_seeds(config, trials)
    rows = []
    for j, s in enumerate(seeds):
        run = run_ec(config.replace(seed=s, max_iters=n_iters), phase_one_only=True, compute_ideal=False)
        X, y = run.model.locations, run.model.values
        for t in t_list:
            gamma = decaying_gamma(gamma0, t, alpha)
            if t == 0:
                est = np.zeros(len(grid))
            else:
                est = regularized_estimator(config.kernel, X[:t], y[:t], gamma).posterior_mean(grid.nodes)
            err = np.abs(est - truth)
            rows.append(ConsistencyRow(j, t, gamma, float(err.max()), float(err.mean())))
    return rows
