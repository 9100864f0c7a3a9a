import math

import numpy as np
import pytest

from eccoverage import sim
from eccoverage.coverage import DensityField, lloyd_step
from eccoverage.dynamics import Phase
from eccoverage.errors import ConfigError
from eccoverage.geometry import ConvexPolygon
from eccoverage.sim import (
    FOUR_BUMP_FIELD,
    Bump,
    ScenarioConfig,
    TrueField,
    ideal_configuration,
    measurement_noise,
    run_ec,
    run_violations,
    stream,
    true_field_eval,
)

NEARLY_FLAT = TrueField((Bump(1.0, (0.5, 0.5), 1e6),))


# -- true field -------------------------------------------------------------


def test_four_bump_field_at_first_center():
    want = 20 + 20 * math.exp(-0.72 / 0.04) + 2 * 5 * math.exp(-0.36 / 0.04)
    got = true_field_eval(FOUR_BUMP_FIELD, (0.2, 0.2))
    assert got == pytest.approx(want, rel=1e-15)
    assert got == pytest.approx(20.0012344, abs=1e-7)


def test_single_bump_peak_and_tail():
    f = TrueField((Bump(3.5, (0.1, 0.9), 0.04),))
    assert f((0.1, 0.9)) == 3.5
    assert abs(f((3.0, -2.0))) < 1e-6
    assert f(np.array([[0.1, 0.9], [0.1, 0.9]])).shape == (2,)


# -- config -----------------------------------------------------------------


@pytest.mark.parametrize(
    "changes",
    [
        {"noise_var": 0.0},
        {"agent_count": 0},
        {"grid_step": -0.1},
        {"max_iters": 0},
        {"seed": -1},
        {"initial_positions": ((0.5, 0.5),)},
    ],
)
def test_config_validation(changes):
    with pytest.raises(ConfigError):
        ScenarioConfig(**changes)


def test_digest_ignores_seed_only():
    base = ScenarioConfig()
    assert base.digest() == base.replace(seed=99).digest()
    assert base.digest() != base.replace(noise_var=0.2).digest()


# -- random streams ---------------------------------------------------------


def test_streams_are_keyed():
    a = stream(5, "motion", 3, 1).random(4)
    assert np.array_equal(a, stream(5, "motion", 3, 1).random(4))
    assert not np.array_equal(a, stream(5, "motion", 3, 2).random(4))
    assert not np.array_equal(a, stream(5, "noise", 3, 1).random(4))
    assert not np.array_equal(a, stream(6, "motion", 3, 1).random(4))


def test_noise_is_uncorrelated():
    z = np.concatenate([measurement_noise(11, k, 8) for k in range(1250)])
    assert len(z) == 10_000
    z = (z - z.mean()) / z.std()
    assert abs(np.mean(z[1:] * z[:-1])) < 0.05
    # same agent across iterations
    per_agent = z.reshape(1250, 8)
    for i in range(8):
        col = per_agent[:, i] - per_agent[:, i].mean()
        assert abs(np.mean(col[1:] * col[:-1]) / col.var()) < 0.1


def test_logged_residuals_are_the_noise_draws():
    cfg = ScenarioConfig(seed=4, max_iters=20)
    run = run_ec(cfg, phase_one_only=True, compute_ideal=False)
    resid = (run.model.values - cfg.true_field(run.model.locations)) / math.sqrt(cfg.noise_var)
    want = np.concatenate([measurement_noise(4, k, 8) for k in range(20)])
    np.testing.assert_allclose(resid, want, atol=1e-12)


# -- the loop ---------------------------------------------------------------


def _same_runs(a, b):
    assert len(a.records) == len(b.records)
    for ra, rb in zip(a.records, b.records):
        assert np.array_equal(ra.positions, rb.positions)
        assert (ra.phase, ra.a, ra.var_max, ra.var_mean, ra.var_min) == (
            rb.phase,
            rb.a,
            rb.var_max,
            rb.var_mean,
            rb.var_min,
        )
        assert ra.coverage_estimate == rb.coverage_estimate or (
            math.isnan(ra.coverage_estimate) and math.isnan(rb.coverage_estimate)
        )
    assert np.array_equal(a.final_positions, b.final_positions)


def test_runs_are_reproducible():
    cfg = ScenarioConfig(seed=12, max_iters=40)
    _same_runs(run_ec(cfg), run_ec(cfg))
    other = run_ec(cfg.replace(seed=13))
    assert not np.array_equal(other.records[-1].positions, run_ec(cfg).records[-1].positions)


def test_single_agent_on_flat_field():
    cfg = ScenarioConfig(
        agent_count=1,
        true_field=TrueField((Bump(0.0, (0.5, 0.5), 0.04),)),
        noise_var=1e-4,
        max_iters=50,
        seed=2,
    )
    run = run_ec(cfg)
    assert run.ideal_positions is None
    visited = run.model.locations
    assert len(visited) == 50
    assert np.all(run.model.posterior_variance(visited) < 2 * cfg.noise_var)


def test_full_run_switches_and_keeps_invariants():
    run = run_ec(ScenarioConfig(seed=3))
    assert run.switched and run.converged
    assert run_violations(run) == []
    phases = [r.phase for r in run.records]
    k = run.switch_iteration
    assert all(p == Phase.I for p in phases[:k]) and all(p == Phase.II for p in phases[k:])
    assert run.records[k].a < 0.3 <= run.records[k - 1].a
    assert run.ideal_converged
    assert run.final_coverage() <= 1.25 * run.ideal_coverage()
    assert set(run.snapshots) == {run.records[-1].iteration}


def test_snapshots_are_kept():
    run = run_ec(ScenarioConfig(seed=1, max_iters=12), snapshots=[0, 5], compute_ideal=False)
    assert set(run.snapshots) == {0, 5, 11}
    mean0, var0 = run.snapshots[0]
    assert var0.shape == (400,) and mean0.shape == (400,)
    assert np.all(run.snapshots[5][1] <= var0 + 1e-12)


def test_violations_are_reported():
    run = run_ec(ScenarioConfig(seed=1, max_iters=6), compute_ideal=False)
    run.records[3].var_max = run.records[2].var_max + 0.1
    run.records[4].positions = run.records[4].positions + 2.0
    run.records[4].phase = Phase.II
    msgs = " | ".join(run_violations(run))
    assert "variance increased" in msgs
    assert "outside the domain" in msgs
    assert "phase went back" in msgs


def test_estimate_never_sees_future_measurements(monkeypatch):
    reads = []

    class Recording(sim.GaussianFieldModel):
        @property
        def grid_mean(self):
            reads.append(self.n_measurements)
            return super().grid_mean

    monkeypatch.setattr(sim, "GaussianFieldModel", Recording)
    cfg = ScenarioConfig(agent_count=3, max_iters=15, seed=8)
    run = run_ec(cfg, phase_one_only=True, compute_ideal=False)
    n = cfg.agent_count
    assert reads[: len(run.records)] == [n * (k + 1) for k in range(len(run.records))]
    for rec in run.records:
        k = rec.iteration
        assert np.array_equal(run.model.locations[n * k : n * (k + 1)], rec.positions)


# -- ideal configuration ----------------------------------------------------


def test_ideal_on_flat_field_is_quadrants():
    cfg = ScenarioConfig(agent_count=4, true_field=NEARLY_FLAT)
    quads = np.array([(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)])
    start = quads + np.random.default_rng(0).uniform(-0.08, 0.08, quads.shape)
    x = ideal_configuration(cfg, start=start)
    d = np.sqrt(((x[:, None] - quads[None]) ** 2).sum(-1))
    assert np.all(d.min(axis=1) < 0.05)
    assert sorted(d.argmin(axis=1)) == [0, 1, 2, 3]


def test_ideal_single_agent_is_the_centroid():
    cfg = ScenarioConfig(agent_count=1)
    dens = sim.true_density(cfg)
    want = (dens.values @ dens.nodes) / dens.values.sum()
    x = ideal_configuration(cfg, start=[(0.9, 0.1)])
    assert np.allclose(x[0], want, atol=1e-12)


def test_ideal_is_a_fixed_point():
    cfg = ScenarioConfig(seed=5)
    dens = sim.true_density(cfg)
    x = ideal_configuration(cfg)
    assert np.sqrt(((lloyd_step(x, dens) - x) ** 2).sum(1)).max() < cfg.grid_step * 1e-2


def test_true_density_on_triangle_domain():
    tri = ConvexPolygon([(0, 0), (1, 0), (0, 1)])
    cfg = ScenarioConfig(domain=tri, agent_count=3, max_iters=30, seed=1)
    run = run_ec(cfg)
    assert run_violations(run) == []
    assert isinstance(sim.true_density(cfg), DensityField)
