"""Two-phase agent control.

Phase I moves each agent by a random displacement ``rho * (cos theta, sin theta)``
whose heading mixes a pull toward the estimated cell centroid with a push up
the posterior-variance gradient; the mixing weight ``a`` falls as the largest
posterior variance falls.  Phase II jumps straight to the estimated centroid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy.special import erf

from .errors import ConfigError
from .geometry import ConvexPolygon, as_point, contains, project_feasible

TWO_PI = 2.0 * math.pi
THETA_BINS = 4096
CENTROID_TOL = 1e-9


class Phase(IntEnum):
    I = 1  # noqa: E741
    II = 2


@dataclass(frozen=True)
class PhaseIParams:
    sigma_C_sq: float = 0.1
    sigma_Delta_sq: float = 0.1
    rho_scale: float = 0.05
    a_exponent: float = 1.0
    switch_threshold: float = 0.3
    # Strip the outward component of the variance gradient within rho_scale of
    # an edge.  Without it an agent whose gradient points out of the domain has
    # every step rejected and never moves again.
    wall_slide: bool = True

    def __post_init__(self):
        for name in ("sigma_C_sq", "sigma_Delta_sq", "rho_scale", "a_exponent"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.switch_threshold < 1:
            raise ConfigError("switch_threshold must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class AgentState:
    id: int
    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", as_point(self.position))


def a_schedule(v_max: float, lam: float, exponent: float = 1.0) -> float:
    """Exploration weight ``(v_max / lam) ** exponent``, clipped to [0, 1]."""
    if not lam > 0:
        raise ValueError("prior variance must be positive")
    r = min(max(v_max / lam, 0.0), 1.0)
    return r**exponent


def select_phase(a_value: float, threshold: float, current_phase: Phase) -> Phase:
    """Latching switch: once in Phase II, stay there."""
    if current_phase == Phase.II or a_value < threshold:
        return Phase.II
    return Phase.I


def _component_cdf(theta, mode, var_):
    """CDF on [0, 2pi] of a Gaussian bump truncated to that interval; uniform if mode is None."""
    theta = np.clip(theta, 0.0, TWO_PI)
    if mode is None:
        return theta / TWO_PI
    s = math.sqrt(var_)
    lo = erf((0.0 - mode) / s)
    hi = erf((TWO_PI - mode) / s)
    return (erf((theta - mode) / s) - lo) / (hi - lo)


def _component_pdf(theta, mode, var_):
    if mode is None:
        return np.full(np.shape(theta), 1.0 / TWO_PI)
    s = math.sqrt(var_)
    norm = 0.5 * math.sqrt(math.pi) * s * (erf((TWO_PI - mode) / s) - erf((0.0 - mode) / s))
    return np.exp(-((theta - mode) ** 2) / var_) / norm


def theta_density(theta, theta_C, theta_Delta, a: float, params: PhaseIParams):
    """Heading density: truncated-Gaussian mixture on [0, 2pi], zero outside.

    ``theta_C`` or ``theta_Delta`` may be None, in which case that component
    is uniform on [0, 2pi] (used when the direction is undefined).
    """
    th = np.asarray(theta, dtype=float)
    p = (1.0 - a) * _component_pdf(th, theta_C, params.sigma_C_sq) + a * _component_pdf(
        th, theta_Delta, params.sigma_Delta_sq
    )
    p = np.where((th >= 0.0) & (th <= TWO_PI), p, 0.0)
    return float(p) if p.ndim == 0 else p


def theta_cdf(theta, theta_C, theta_Delta, a: float, params: PhaseIParams):
    th = np.asarray(theta, dtype=float)
    return (1.0 - a) * _component_cdf(th, theta_C, params.sigma_C_sq) + a * _component_cdf(
        th, theta_Delta, params.sigma_Delta_sq
    )


def sample_theta(theta_C, theta_Delta, a: float, params: PhaseIParams, rng, size=None):
    """Inverse-CDF draw from :func:`theta_density` using a 4096-bin table.

    The CDF is exact at the bin edges and linear inside each bin.
    """
    edges = np.linspace(0.0, TWO_PI, THETA_BINS + 1)
    cdf = theta_cdf(edges, theta_C, theta_Delta, a, params)
    cdf[0], cdf[-1] = 0.0, 1.0
    u = rng.random(size)
    k = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, THETA_BINS - 1)
    width = cdf[k + 1] - cdf[k]
    frac = np.divide(u - cdf[k], width, out=np.full(np.shape(u), 0.5), where=width > 0)
    out = edges[k] + np.clip(frac, 0.0, 1.0) * (edges[k + 1] - edges[k])
    return float(out) if size is None else out


def sample_rho(params: PhaseIParams, rng, size=None):
    """Half-normal step length ``|g| * rho_scale``."""
    r = np.abs(rng.standard_normal(size)) * params.rho_scale
    # a draw of exactly 0.0 has probability ~0 but would break strict positivity
    r = np.where(r > 0, r, np.nextafter(0.0, 1.0))
    return float(r) if size is None else r


def heading(vec) -> float | None:
    """Angle of ``vec`` in [0, 2pi), or None for the zero vector."""
    vx, vy = float(vec[0]), float(vec[1])
    if vx == 0.0 and vy == 0.0:
        return None
    return math.atan2(vy, vx) % TWO_PI


def phase1_control(
    position,
    model,
    est_centroid,
    a: float,
    params: PhaseIParams,
    rng,
    domain: ConvexPolygon | None = None,
    var_grad=None,
) -> np.ndarray:
    """Random displacement for one agent: heading first, then step length.

    ``var_grad`` short-circuits the gradient query when the caller has
    already evaluated it for all agents at once.
    """
    x = as_point(position)
    theta_C = None
    if est_centroid is not None:
        to_c = as_point(est_centroid) - x
        if math.hypot(*to_c) > CENTROID_TOL:
            theta_C = heading(to_c)
    grad = model.variance_gradient(x) if var_grad is None else as_point(var_grad)
    if params.wall_slide and domain is not None:
        grad = project_feasible(domain, x, grad, params.rho_scale)
    theta_D = heading(grad)
    theta = sample_theta(theta_C, theta_D, a, params, rng)
    rho = sample_rho(params, rng)
    return np.array([rho * math.cos(theta), rho * math.sin(theta)])


def phase1_step(
    agent: AgentState,
    model,
    est_centroid,
    a: float,
    params: PhaseIParams,
    domain: ConvexPolygon,
    rng,
    var_grad=None,
) -> AgentState:
    """Apply a Phase-I displacement; moves that would leave the domain are rejected."""
    u = phase1_control(agent.position, model, est_centroid, a, params, rng, domain, var_grad)
    target = agent.position + u
    if contains(domain, target):
        return AgentState(agent.id, target)
    return agent


def phase2_step(agent: AgentState, est_centroid) -> AgentState:
    return AgentState(agent.id, as_point(est_centroid).copy())
