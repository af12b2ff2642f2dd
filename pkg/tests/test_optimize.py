import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sarreflect.geometry import BORESIGHT_INCIDENCE
from sarreflect.optimize import (
    FIXED_AZIMUTH,
    FIXED_BOTH,
    FIXED_INCIDENCE,
    FREE,
    AngleVariant,
    Bounds,
    DEConfig,
    ObjectiveFailure,
    PSOConfig,
    minimize_de,
    minimize_pso,
)

BOX13 = Bounds(np.full(13, -5.0), np.full(13, 5.0))


def sphere(x):
    return float(np.sum(x * x))


def test_sphere_de_and_pso():
    de = minimize_de(sphere, BOX13, DEConfig())
    pso = minimize_pso(sphere, BOX13, PSOConfig())
    assert de.best_loss < 1e-2
    assert pso.best_loss < 1e-2
    assert de.evaluation_count == 40 * 61 == pso.evaluation_count


def test_degenerate_box_returns_the_point():
    b = Bounds(np.array([1.0, 2.0]), np.array([1.0, 2.0]))
    for run in (minimize_de, minimize_pso):
        t = run(sphere, b)
        np.testing.assert_array_equal(t.best_params, [1.0, 2.0])
        assert t.best_loss == 5.0 and len(t.best_loss_per_iteration) == 1


def test_bit_identical_reruns():
    cfg = DEConfig(population_size=10, max_iterations=8, seed=123)
    a, b = minimize_de(sphere, BOX13, cfg), minimize_de(sphere, BOX13, cfg)
    assert a.best_loss_per_iteration == b.best_loss_per_iteration
    np.testing.assert_array_equal(a.best_params, b.best_params)
    p = PSOConfig(particle_count=10, max_iterations=8, seed=123)
    a, b = minimize_pso(sphere, BOX13, p), minimize_pso(sphere, BOX13, p)
    assert a.best_loss_per_iteration == b.best_loss_per_iteration
    c = minimize_pso(sphere, BOX13, PSOConfig(particle_count=10, max_iterations=8, seed=124))
    assert c.best_loss_per_iteration != a.best_loss_per_iteration


def test_threaded_evaluation_matches_serial():
    cfg = DEConfig(population_size=8, max_iterations=4, seed=5)
    a = minimize_de(sphere, BOX13, cfg, workers=1)
    b = minimize_de(sphere, BOX13, cfg, workers=3)
    assert a.best_loss_per_iteration == b.best_loss_per_iteration


def test_single_particle_stays_in_bounds():
    seen = []
    b = Bounds(np.zeros(3), np.ones(3))

    def f(x):
        seen.append(x)
        return float(np.sum((x - 2.0) ** 2))

    t = minimize_pso(f, b, PSOConfig(particle_count=1, max_iterations=30))
    assert all(np.all((x >= 0) & (x <= 1)) for x in seen)
    assert t.best_loss <= f(np.full(3, 0.5))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 6), st.sampled_from(["de", "pso"]))
def test_trace_invariants(seed, dim, which):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-3, 0, dim)
    b = Bounds(lo, lo + rng.uniform(0.1, 3, dim))
    centre = rng.normal(size=dim)
    calls = []

    def f(x):
        assert b.contains(x)
        calls.append(1)
        return float(np.sum(np.abs(x - centre)))

    if which == "de":
        t = minimize_de(f, b, DEConfig(population_size=6, max_iterations=5, seed=seed))
    else:
        t = minimize_pso(f, b, PSOConfig(particle_count=6, max_iterations=5, seed=seed))
    trace = t.best_loss_per_iteration
    assert all(x >= y for x, y in zip(trace, trace[1:]))
    assert len(calls) == t.evaluation_count <= 6 * (5 + 1)
    assert f(t.best_params) == trace[-1]


def test_objective_failure_keeps_partial_trace():
    count = [0]

    def f(x):
        count[0] += 1
        if count[0] > 25:
            raise RuntimeError("boom")
        return sphere(x)

    with pytest.raises(ObjectiveFailure) as exc:
        minimize_de(f, BOX13, DEConfig(population_size=10, max_iterations=5))
    assert len(exc.value.trace.best_loss_per_iteration) == 2
    with pytest.raises(ObjectiveFailure):
        minimize_pso(lambda x: math.nan, BOX13, PSOConfig(particle_count=4, max_iterations=2))


def test_trace_csv(tmp_path):
    t = minimize_de(sphere, BOX13, DEConfig(population_size=5, max_iterations=2))
    t.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iteration,best_loss" and len(lines) == 4


def test_config_validation():
    with pytest.raises(ValueError):
        DEConfig(population_size=3)
    with pytest.raises(ValueError):
        DEConfig(mutation_probability=1.5)
    with pytest.raises(ValueError):
        Bounds(np.array([1.0]), np.array([0.0]))
    assert DEConfig().mutation_probability == 0.8 and DEConfig().recombination_probability == 0.9
    p = PSOConfig()
    assert (p.particle_count, p.cognitive_rate, p.social_rate, p.inertia_weight) == (40, 0.6, 1.0,
                                                                                     0.8)


@pytest.mark.parametrize("config,dim", [(FREE, 13), (FIXED_INCIDENCE, 9), (FIXED_AZIMUTH, 12),
                                        (FIXED_BOTH, 8)])
def test_angle_variant_dimensions(config, dim):
    v = AngleVariant(4, config)
    assert v.dimension == dim == v.bounds().dimension
    z = v.bounds().lower + 0.3 * v.bounds().span
    full = v.expand(z)
    assert full.size == 13
    np.testing.assert_array_equal(v.reduce(full), z)
    if v.fixes_incidence:
        np.testing.assert_array_equal(full[8:12], np.full(4, BORESIGHT_INCIDENCE))
        assert BORESIGHT_INCIDENCE == pytest.approx(math.atan(math.sqrt(2)))
    if v.fixes_azimuth:
        assert full[12] == 0.0
