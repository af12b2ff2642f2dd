import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import Z0, general_far_field, lit_fraction_by_rays, shoelace
from sarreflect.geometry import BoresightAngles, TrihedralGeometry
from sarreflect.scattering import (
    PATHS,
    BackfaceIllumination,
    backscatter_amplitude,
    bounce_path,
    closed_form_terms,
    far_field_integral,
    incident_wave,
    phase_constant,
    polygon_exp_integral,
    reflect,
    surface_current,
    total_scatter,
    trihedral_far_field,
    trihedral_far_field_reference,
    triangle_exp_integral,
)

A = 0.3
K = phase_constant(9.6e9)
GEOM = TrihedralGeometry(A)
BORESIGHT = BoresightAngles(math.atan(math.sqrt(2)), math.pi / 4)
inner = st.floats(0.01, math.pi / 2 - 0.01)


def test_incident_wave_examples():
    w = incident_wave(BoresightAngles(0.0, 0.7))
    np.testing.assert_allclose(w.direction, [0, 0, -1], atol=1e-15)
    np.testing.assert_allclose(w.polarization, [math.cos(0.7), math.sin(0.7), 0], atol=1e-15)
    w = incident_wave(BORESIGHT)
    np.testing.assert_allclose(w.direction, -np.ones(3) / math.sqrt(3), atol=1e-15)


def test_reflect_normal_incidence():
    w = reflect(incident_wave(BoresightAngles(0.0, 0.0)), [0, 0, 1])
    np.testing.assert_allclose(w.direction, [0, 0, 1])


def test_surface_current():
    w = incident_wave(BoresightAngles(0.4, 0.3), amplitude=2.0, phase_constant=K)
    j = surface_current(w, [0, 0, 1])
    for r in ([0, 0, 0], [0.1, 0.2, 0], [0.3, 0.3, 0]):
        assert np.linalg.norm(j(np.array(r, dtype=float))) == pytest.approx(
            2 * 2.0 / Z0 * np.linalg.norm(np.cross([0, 0, 1], w.polarization)))
    with pytest.raises(BackfaceIllumination):
        surface_current(w, [0, 0, -1])


def test_triangle_integral_matches_quadrature():
    from oracles import gauss_legendre_polygon
    rng = np.random.default_rng(3)
    for _ in range(20):
        p = rng.uniform(-0.3, 0.3, size=(3, 2))
        c = rng.normal(scale=rng.choice([1e-6, 1.0, 50.0, 400.0]), size=2)
        exact = triangle_exp_integral(p[0], p[1], p[2], c)
        quad = gauss_legendre_polygon(p, lambda u, v: np.exp(1j * (c[0] * u + c[1] * v)), 256)
        assert abs(exact - quad) <= 1e-9 * max(abs(quad), 1e-12) + 1e-15
    sq = [[0, 0], [1, 0], [1, 1], [0, 1]]
    assert polygon_exp_integral(sq, [0.0, 0.0]) == pytest.approx(1.0)


@pytest.mark.parametrize("path", PATHS, ids=lambda p: "".join(map(str, p)))
def test_closed_forms_match_general_integrand(path):
    grid = np.linspace(0, math.pi / 2, 11)[1:-1]
    worst = 0.0
    for th in grid:
        for ph in grid:
            ang = BoresightAngles(th, ph)
            _, lit = bounce_path(incident_wave(ang, 1.0, K), path, GEOM)
            got = far_field_integral(path, ang, GEOM, 1.0, K)
            if lit is None:
                assert got.n_theta == 0 and got.n_phi == 0
                continue
            nt, nphi = general_far_field(path, th, ph, lit.vertices, K)
            ref = max(abs(nt), abs(nphi), 1e-300)
            worst = max(worst, abs(got.n_theta - nt) / ref, abs(got.n_phi - nphi) / ref)
    assert worst < 1e-6


@settings(max_examples=200)
@given(inner, inner)
def test_single_and_triple_theta_components_vanish(th, ph):
    for path in PATHS:
        if len(path) == 2:
            continue
        assert closed_form_terms(path, th, ph)[0] == 0.0
        n = far_field_integral(path, BoresightAngles(th, ph), GEOM, 1.0, K)
        assert abs(n.n_theta) < 1e-12 * abs(n.n_phi) + 1e-300


def test_path1_normal_incidence_is_plate_area():
    n = far_field_integral((1,), BoresightAngles(0.0, 0.4), GEOM, 1.0, K)
    assert n.n_phi == pytest.approx(2 / Z0 * A * A, rel=1e-12)


def test_path123_at_boresight():
    ang = BORESIGHT
    _, lit = bounce_path(incident_wave(ang, 1.0, K), (1, 2, 3), GEOM)
    area = shoelace(GEOM.plane_coords(3, lit.vertices))
    n = far_field_integral((1, 2, 3), ang, GEOM, 1.0, K)
    expect = 2 / Z0 * math.sin(ang.incidence) * math.sin(ang.azimuth) * area
    assert abs(n.n_phi) == pytest.approx(expect, rel=1e-12)
    _, nq = general_far_field((1, 2, 3), ang.incidence, ang.azimuth, lit.vertices, K)
    assert abs(abs(nq) - expect) / expect < 1e-6


def test_lit_fraction_matches_ray_tracing():
    rng = np.random.default_rng(0)
    for path in [(1, 2), (2, 3), (1, 2, 3), (3, 2, 1)]:
        _, lit = bounce_path(incident_wave(BORESIGHT, 1.0, K), path, GEOM)
        assert lit is not None
        frac = shoelace(GEOM.plane_coords(path[-1], lit.vertices)) / A ** 2
        rays = lit_fraction_by_rays(path, BORESIGHT.incidence, BORESIGHT.azimuth, A, 10**4, rng)
        assert frac == pytest.approx(rays, abs=0.02)


@settings(max_examples=60)
@given(inner, inner)
def test_reciprocal_paths_have_equal_beam_cross_section(th, ph):
    """Paths pq and qp carry the same ray tube, so lit area times the arrival
    obliquity on the final plate agrees."""
    wave = incident_wave(BoresightAngles(th, ph), 1.0, K)

    def tube(path):
        final, lit = bounce_path(wave, path, GEOM)
        if lit is None:
            return 0.0
        return lit.area * abs(final.direction @ GEOM.normal(path[-1]))

    for p, q in [(1, 2), (1, 3), (2, 3)]:
        assert tube((p, q)) == pytest.approx(tube((q, p)), rel=1e-9, abs=1e-15)


@settings(max_examples=40)
@given(inner, inner)
def test_mirror_symmetry_about_diagonal(th, ph):
    """Swapping plates 2 and 3 is the mirror x <-> y, i.e. phi -> pi/2 - phi."""
    a = total_scatter(BoresightAngles(th, ph), GEOM, 100.0, 1.0, K).amplitude_magnitude
    b = total_scatter(BoresightAngles(th, math.pi / 2 - ph), GEOM, 100.0, 1.0, K).amplitude_magnitude
    assert a == pytest.approx(b, rel=1e-9, abs=1e-18)


def test_outside_window_is_zero():
    for th, ph in [(0.5, -0.1), (0.5, 2.0), (0.5, 4.0)]:
        assert total_scatter(BoresightAngles(th, ph), GEOM, 100.0, 1.0, K).amplitude_magnitude == 0.0


def test_range_scaling():
    a = total_scatter(BORESIGHT, GEOM, 100.0, 1.0, K).amplitude_magnitude
    b = total_scatter(BORESIGHT, GEOM, 200.0, 1.0, K).amplitude_magnitude
    assert b == pytest.approx(a / 2, rel=1e-12)
    with pytest.raises(ValueError):
        total_scatter(BORESIGHT, GEOM, 0.0, 1.0, K)


def test_boresight_beats_off_axis():
    on = total_scatter(BORESIGHT, GEOM, 100.0, 1.0, K).amplitude_magnitude
    off = total_scatter(BoresightAngles(BORESIGHT.incidence, math.radians(5)), GEOM, 100.0, 1.0,
                        K).amplitude_magnitude
    assert on > off


def test_vectorised_entry_matches_reference():
    rng = np.random.default_rng(1)
    th = rng.uniform(-0.2, 1.8, 200)
    ph = rng.uniform(-1, 7, 200)
    fast = trihedral_far_field(th, ph, A, K)
    ref = trihedral_far_field_reference(th, ph, A, K)
    np.testing.assert_allclose(fast, ref, rtol=1e-9, atol=1e-14)
    amp = backscatter_amplitude(th, ph, A, K, 1.0, "total")
    for t, p, a in zip(th, ph, amp):
        if 0 <= t <= math.pi / 2:
            d = total_scatter(BoresightAngles(t, p), GEOM, 1.0, 1.0, K).amplitude_magnitude
            assert a == pytest.approx(d, rel=1e-9, abs=1e-15)
