"""Flat TOML configuration files.

Every key sits at the top level; unknown keys are errors so that a typo in a
sweep fails loudly instead of silently running the default.  See
the ``default.toml`` shipped with the package for a commented example.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .dynamics import PhaseIParams
from .errors import ConfigError
from .field import RadialKernel
from .geometry import ConvexPolygon
from .sim import Bump, ScenarioConfig, TrueField

SCENARIO_KEYS = {
    "domain",
    "agent_count",
    "kernel_lengthscale_sq",
    "kernel_amplitude",
    "noise_var",
    "grid_step",
    "sigma_C_sq",
    "sigma_Delta_sq",
    "rho_scale",
    "a_exponent",
    "switch_threshold",
    "wall_slide",
    "bumps",
    "max_iters",
    "seed",
    "max_measurements",
    "initial_positions",
}
RUN_KEYS = {"out_dir", "snapshots", "trials", "epsilon", "alpha", "gamma0", "t_list"}


@dataclass
class CliConfig:
    scenario: ScenarioConfig
    out_dir: str = "out"
    snapshots: list = field(default_factory=lambda: [0])
    trials: int = 10
    epsilon: float = 0.3
    alpha: float = 0.4
    gamma0: float | None = None
    t_list: list = field(default_factory=lambda: [50, 200, 800])


def _scenario(d: dict) -> ScenarioConfig:
    base = ScenarioConfig()
    try:
        domain = ConvexPolygon(np.array(d["domain"], float)) if "domain" in d else base.domain
        kernel = RadialKernel(
            lengthscale_sq=float(d.get("kernel_lengthscale_sq", base.kernel.lengthscale_sq)),
            amplitude=float(d.get("kernel_amplitude", base.kernel.amplitude)),
        )
        p = base.phase1
        phase1 = PhaseIParams(
            sigma_C_sq=float(d.get("sigma_C_sq", p.sigma_C_sq)),
            sigma_Delta_sq=float(d.get("sigma_Delta_sq", p.sigma_Delta_sq)),
            rho_scale=float(d.get("rho_scale", p.rho_scale)),
            a_exponent=float(d.get("a_exponent", p.a_exponent)),
            switch_threshold=float(d.get("switch_threshold", p.switch_threshold)),
            wall_slide=bool(d.get("wall_slide", p.wall_slide)),
        )
        if "bumps" in d:
            bumps = []
            for row in d["bumps"]:
                if len(row) != 4:
                    raise ConfigError("each bump is [weight, center_x, center_y, width_sq]")
                w, cx, cy, s = map(float, row)
                bumps.append(Bump(w, (cx, cy), s))
            true_field = TrueField(tuple(bumps))
        else:
            true_field = base.true_field
        init = d.get("initial_positions")
        return ScenarioConfig(
            domain=domain,
            agent_count=int(d.get("agent_count", base.agent_count)),
            kernel=kernel,
            noise_var=float(d.get("noise_var", base.noise_var)),
            grid_step=float(d.get("grid_step", base.grid_step)),
            phase1=phase1,
            true_field=true_field,
            max_iters=int(d.get("max_iters", base.max_iters)),
            seed=int(d.get("seed", base.seed)),
            max_measurements=int(d.get("max_measurements", base.max_measurements)),
            initial_positions=None if init is None else tuple(map(tuple, init)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(d: dict) -> CliConfig:
    unknown = set(d) - SCENARIO_KEYS - RUN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = CliConfig(_scenario({k: v for k, v in d.items() if k in SCENARIO_KEYS}))
    if "out_dir" in d:
        cfg.out_dir = str(d["out_dir"])
    if "snapshots" in d:
        cfg.snapshots = [int(s) for s in d["snapshots"]]
    if "trials" in d:
        cfg.trials = int(d["trials"])
    if "epsilon" in d:
        cfg.epsilon = float(d["epsilon"])
    if "alpha" in d:
        cfg.alpha = float(d["alpha"])
    if "gamma0" in d:
        cfg.gamma0 = float(d["gamma0"])
    if "t_list" in d:
        cfg.t_list = [int(t) for t in d["t_list"]]
    return cfg


def load_config(path) -> CliConfig:
    try:
        with open(path, "rb") as fh:
            d = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(d)


def default_config_path() -> Path:
    return Path(__file__).with_name("default.toml")
