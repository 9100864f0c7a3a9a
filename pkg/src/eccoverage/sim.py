"""The estimation + coverage loop.

Each iteration: every agent measures the true field with Gaussian noise, the
field model absorbs the new batch, the exploration weight ``a`` is read off
the largest grid variance, and each agent takes a Phase-I random step or, once
the switch has latched, a Lloyd step on the estimate frozen at switch time.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .coverage import DensityField, cell_statistics, coverage_value, lloyd_step, run_lloyd
from .dynamics import AgentState, Phase, PhaseIParams, a_schedule, phase1_step, select_phase
from .errors import ConfigError, NonConvergence, ZeroMass
from .field import DEFAULT_MAX_MEASUREMENTS, GaussianFieldModel, RadialKernel
from .geometry import ConvexPolygon, as_points, contains_points, grid_nodes, voronoi_partition

log = logging.getLogger(__name__)

# sub-stream tags; changing these changes every trajectory
_PURPOSES = {"init": 0, "noise": 1, "motion": 2, "trial": 3}


def stream(seed: int, purpose: str, *keys: int) -> np.random.Generator:
    """Independent generator for one (purpose, keys...) slot of a master seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_PURPOSES[purpose], *map(int, keys)))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, purpose: str, *keys: int) -> int:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_PURPOSES[purpose], *map(int, keys)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class Bump:
    weight: float
    center: tuple
    width_sq: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.width_sq > 0:
            raise ConfigError("bump width_sq must be positive")


@dataclass(frozen=True)
class TrueField:
    """Sum of isotropic Gaussian bumps ``w * exp(-|x - c|^2 / width_sq)``."""

    bumps: tuple

    def __post_init__(self):
        if len(self.bumps) < 1:
            raise ConfigError("a true field needs at least one bump")

    def __call__(self, x):
        return true_field_eval(self, x)


def true_field_eval(tf: TrueField, x):
    single = np.ndim(x) == 1
    pts = as_points(x)
    out = np.zeros(len(pts))
    for b in tf.bumps:
        d2 = ((pts - np.asarray(b.center)) ** 2).sum(axis=1)
        out += b.weight * np.exp(-d2 / b.width_sq)
    return float(out[0]) if single else out


# Four bumps, all with decaying exponents.
FOUR_BUMP_FIELD = TrueField(
    (
        Bump(20.0, (0.2, 0.2), 0.04),
        Bump(20.0, (0.8, 0.8), 0.04),
        Bump(5.0, (0.8, 0.2), 0.04),
        Bump(5.0, (0.2, 0.8), 0.04),
    )
)


@dataclass(frozen=True)
class ScenarioConfig:
    """Every tunable of a run.  ``noise_var`` defaults to 0.1 (an assumption)."""

    domain: ConvexPolygon = field(default_factory=ConvexPolygon.unit_square)
    agent_count: int = 8
    kernel: RadialKernel = RadialKernel()
    noise_var: float = 0.1
    grid_step: float = 0.05
    phase1: PhaseIParams = PhaseIParams()
    true_field: TrueField = FOUR_BUMP_FIELD
    max_iters: int = 500
    seed: int = 0
    max_measurements: int = DEFAULT_MAX_MEASUREMENTS
    initial_positions: tuple | None = None

    def __post_init__(self):
        if int(self.agent_count) < 1:
            raise ConfigError("agent_count must be at least 1")
        if not self.noise_var > 0:
            raise ConfigError(f"noise_var must be strictly positive, got {self.noise_var}")
        if not self.grid_step > 0:
            raise ConfigError("grid_step must be positive")
        if int(self.max_iters) < 1:
            raise ConfigError("max_iters must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.initial_positions is not None:
            pts = as_points(self.initial_positions)
            if len(pts) != self.agent_count:
                raise ConfigError("initial_positions must list one point per agent")
            if not contains_points(self.domain, pts).all():
                raise ConfigError("initial_positions must lie in the domain")
            object.__setattr__(self, "initial_positions", tuple(map(tuple, pts.tolist())))

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "domain": self.domain.vertices.tolist(),
            "agent_count": self.agent_count,
            "kernel_lengthscale_sq": self.kernel.lengthscale_sq,
            "kernel_amplitude": self.kernel.amplitude,
            "noise_var": self.noise_var,
            "grid_step": self.grid_step,
            "sigma_C_sq": self.phase1.sigma_C_sq,
            "sigma_Delta_sq": self.phase1.sigma_Delta_sq,
            "rho_scale": self.phase1.rho_scale,
            "a_exponent": self.phase1.a_exponent,
            "switch_threshold": self.phase1.switch_threshold,
            "bumps": [[b.weight, *b.center, b.width_sq] for b in self.true_field.bumps],
            "max_iters": self.max_iters,
            "seed": self.seed,
            "max_measurements": self.max_measurements,
            "initial_positions": None
            if self.initial_positions is None
            else [list(p) for p in self.initial_positions],
        }

    def digest(self) -> str:
        """Short hash of every setting except the seed."""
        d = self.to_dict()
        d.pop("seed")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def measurement_noise(seed: int, iteration: int, n: int) -> np.ndarray:
    """Standard-normal noise for the n measurements of one iteration."""
    return stream(seed, "noise", iteration).standard_normal(n)


def initial_positions(config: ScenarioConfig) -> np.ndarray:
    if config.initial_positions is not None:
        return np.array(config.initial_positions, dtype=float)
    rng = stream(config.seed, "init")
    xmin, ymin, xmax, ymax = config.domain.bounds
    out = []
    while len(out) < config.agent_count:
        p = rng.uniform((xmin, ymin), (xmax, ymax))
        if contains_points(config.domain, p[None, :])[0]:
            out.append(p)
    return np.array(out)


@dataclass
class IterationRecord:
    iteration: int
    positions: np.ndarray
    phase: Phase
    a: float
    var_max: float
    var_mean: float
    var_min: float
    coverage_estimate: float
    coverage_true: float


@dataclass
class RunLog:
    config: ScenarioConfig
    records: list = field(default_factory=list)
    switch_iteration: int | None = None
    converged: bool = False
    final_positions: np.ndarray | None = None
    ideal_positions: np.ndarray | None = None
    ideal_converged: bool | None = None
    snapshots: dict = field(default_factory=dict)
    grid: object = None
    model: GaussianFieldModel | None = None

    @property
    def switched(self) -> bool:
        return self.switch_iteration is not None

    def variance_curves(self) -> np.ndarray:
        """(iterations, 3) array of max, mean and min grid variance."""
        return np.array([[r.var_max, r.var_mean, r.var_min] for r in self.records])

    def final_coverage(self, density: DensityField | None = None) -> float:
        if density is None:
            density = true_density(self.config)
        return coverage_value(self.final_positions, density)

    def ideal_coverage(self, density: DensityField | None = None) -> float:
        if density is None:
            density = true_density(self.config)
        return coverage_value(self.ideal_positions, density)


def true_density(config: ScenarioConfig, grid=None) -> DensityField:
    grid = grid_nodes(config.domain, config.grid_step) if grid is None else grid
    return DensityField.from_estimate(grid, config.true_field(grid.nodes))


def _coverage_and_centroids(positions, density: DensityField | None, labels):
    """H and per-cell centroids, with None for cells that hold no mass."""
    n = len(positions)
    if density is None:
        return math.nan, [None] * n
    h, cents, mass = cell_statistics(labels, density, n)
    return h, [c if m > 0 else None for c, m in zip(cents, mass)]


def run_ec(
    config: ScenarioConfig,
    snapshots=(),
    phase_one_only: bool = False,
    compute_ideal: bool = True,
    until=None,
) -> RunLog:
    """Run the estimation + coverage loop until Phase II settles or ``max_iters``.

    ``phase_one_only`` disables the switch (used by the experiments).
    ``snapshots`` lists iterations whose grid mean/variance are kept.
    ``until``, if given, is called with each new record and ends the run
    as soon as it returns true.
    """
    domain = config.domain
    grid = grid_nodes(domain, config.grid_step)
    model = GaussianFieldModel(
        config.kernel,
        config.noise_var,
        grid=grid,
        domain=domain,
        max_measurements=config.max_measurements,
    )
    lam = model.lam
    try:
        truth = true_density(config, grid)
    except ZeroMass:
        truth = None  # a field that vanishes on the grid has no coverage target
    params = config.phase1
    noise_sd = math.sqrt(config.noise_var)
    snapshots = set(int(s) for s in snapshots)

    x = initial_positions(config)
    n = len(x)
    run = RunLog(config, grid=grid, model=model)
    phase = Phase.I
    frozen = None
    tol = config.grid_step * 1e-2

    for k in range(config.max_iters):
        y = config.true_field(x) + noise_sd * measurement_noise(config.seed, k, n)
        model.add_measurements(x, y)

        var = model.grid_variance
        mean = model.grid_mean
        v_max = float(var.max())
        a = a_schedule(v_max, lam, params.a_exponent)
        if not phase_one_only:
            new_phase = select_phase(a, params.switch_threshold, phase)
            if new_phase == Phase.II and phase == Phase.I:
                run.switch_iteration = k
                frozen = DensityField.from_estimate(grid, mean)
                log.info("switched to phase II at iteration %d (a=%.4f)", k, a)
            phase = new_phase

        if phase == Phase.II:
            density = frozen
        else:
            try:
                density = DensityField.from_estimate(grid, mean)
            except ZeroMass:
                density = None  # estimate nonpositive everywhere
        part = voronoi_partition(x, domain)
        labels = part.locate(grid.nodes)
        h_est, cents = _coverage_and_centroids(x, density, labels)
        h_true, _ = _coverage_and_centroids(x, truth, labels)

        run.records.append(
            IterationRecord(
                k, x.copy(), phase, a, v_max, float(var.mean()), float(var.min()), h_est, h_true
            )
        )
        if k in snapshots:
            run.snapshots[k] = (mean, var)
        if until is not None and until(run.records[-1]):
            break

        if phase == Phase.I:
            grads = model.variance_gradient(x)
            nxt = np.empty_like(x)
            for i in range(n):
                agent = AgentState(i, x[i])
                rng = stream(config.seed, "motion", k, i)
                nxt[i] = phase1_step(
                    agent, model, cents[i], a, params, domain, rng, var_grad=grads[i]
                ).position
            x = nxt
        else:
            nxt = lloyd_step(x, frozen, domain)
            moved = float(np.sqrt(((nxt - x) ** 2).sum(axis=1)).max())
            x = nxt
            if moved < tol:
                run.converged = True
                break

    last = run.records[-1].iteration
    if last not in run.snapshots:
        run.snapshots[last] = (model.grid_mean, model.grid_variance)
    run.final_positions = x
    if compute_ideal and truth is not None:
        try:
            run.ideal_positions = ideal_configuration(config, x, truth)
            run.ideal_converged = True
        except NonConvergence as exc:
            run.ideal_positions = exc.positions
            run.ideal_converged = False
    return run


def ideal_configuration(config: ScenarioConfig, start=None, density: DensityField | None = None):
    """Lloyd fixed point for the true field, started from ``start``.

    Raises NonConvergence (carrying the last iterate) after 500 steps.
    """
    if density is None:
        density = true_density(config)
    if start is None:
        start = initial_positions(config)
    res = run_lloyd(start, density, config.domain, max_iters=500, raise_on_cap=True)
    return res.positions


def run_violations(run: RunLog, tol: float = 1e-10) -> list:
    """Invariant breaches in a finished run, as human-readable strings."""
    out = []
    cfg = run.config
    lam = cfg.kernel.prior_variance
    for rec in run.records:
        if not contains_points(cfg.domain, rec.positions).all():
            out.append(f"iteration {rec.iteration}: agent outside the domain")
        if not 0.0 <= rec.var_min <= rec.var_max <= lam:
            out.append(f"iteration {rec.iteration}: grid variance outside [0, {lam}]")
    curves = run.variance_curves()
    if len(curves) > 1:
        rises = np.flatnonzero(np.diff(curves, axis=0).max(axis=1) > tol)
        for i in rises:
            out.append(f"iteration {i + 1}: posterior variance increased")
    phase = [int(r.phase) for r in run.records]
    if any(b < a for a, b in zip(phase, phase[1:])):
        out.append("phase went back from II to I")
    h2 = [r.coverage_estimate for r in run.records if r.phase == Phase.II]
    for i, (a, b) in enumerate(zip(h2, h2[1:])):
        if b > a + 1e-9:
            out.append(f"phase II step {i + 1}: coverage on the frozen estimate increased")
    return out
