import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sarreflect.geometry import (
    BORESIGHT_INCIDENCE,
    AspectAngles,
    DegenerateProjection,
    NotCoplanar,
    PlatformPath,
    Polygon3,
    ReflectorConfig,
    TrihedralGeometry,
    clip_polygons,
    platform_position,
    project_polygon,
    to_boresight_frame,
)
from oracles import shoelace

angle = st.floats(0.0, math.pi / 2)
azim = st.floats(0.0, 2 * math.pi, exclude_max=True)


def square(z=0.0, x0=0.0, y0=0.0, side=1.0):
    return Polygon3([(x0, y0, z), (x0 + side, y0, z), (x0 + side, y0 + side, z),
                     (x0, y0 + side, z)])


# -- aspect angles and the platform path ------------------------------------

def test_aspect_azimuth_is_normalised():
    a = AspectAngles(0.5, -0.25 * math.pi)
    assert a.azimuth == pytest.approx(1.75 * math.pi)
    with pytest.raises(ValueError):
        AspectAngles(2.0, 0.0)


def test_platform_position_examples():
    p = platform_position(PlatformPath(5000, 50, 0.0, math.pi / 2), 0.0)
    np.testing.assert_allclose(p, [5000, 0, 0], atol=1e-9)
    p = platform_position(PlatformPath(5000, 50, 0.0, 0.0), 1.0)
    np.testing.assert_allclose(p, [0, 50, 5000], atol=1e-9)
    p = platform_position(PlatformPath(4500, 50, math.pi / 3, math.radians(75)), 0.2)
    assert np.linalg.norm(p) == pytest.approx(math.hypot(4500, 10), rel=1e-14)


@given(angle, azim, st.floats(-3.0, 3.0), st.floats(100.0, 1e4), st.floats(1.0, 300.0))
def test_platform_range_identity(inc, az, eta, r0, v):
    p = platform_position(PlatformPath(r0, v, az, inc), eta)
    assert np.linalg.norm(p) == pytest.approx(math.hypot(r0, eta * v), rel=1e-12)


@given(angle, azim, st.floats(100.0, 1e4))
def test_platform_at_centre_of_aperture_is_at_standoff(inc, az, r0):
    p = platform_position(PlatformPath(r0, 50.0, az, inc), 0.0)
    assert np.linalg.norm(p) == pytest.approx(r0, rel=1e-14)


def test_boresight_frame_examples():
    a = AspectAngles(math.radians(60), math.radians(100))
    b = to_boresight_frame(a, math.radians(40), math.radians(100))
    assert b.azimuth == pytest.approx(math.pi / 4)
    b = to_boresight_frame(a, math.radians(60), 0.3)
    assert b.incidence == pytest.approx(0.955317, abs=1e-6)
    # reflector 2 of the published layout seen from (75, 71.2) degrees
    b = to_boresight_frame(AspectAngles.from_degrees(75, 71.2), math.radians(65), math.radians(106.3))
    assert math.degrees(b.azimuth) == pytest.approx(9.9, abs=1e-9)


@given(angle, azim, angle, azim, st.floats(-0.2, 0.2))
def test_boresight_frame_is_shift_invariant(inc, az, b_inc, b_az, d):
    base = to_boresight_frame(AspectAngles(inc, az), b_inc, b_az)
    moved = to_boresight_frame(AspectAngles(inc, az + d), b_inc, b_az + d)
    assert math.remainder(moved.azimuth - base.azimuth, 2 * math.pi) == pytest.approx(0, abs=1e-9)
    if 0 <= inc + d <= math.pi / 2:
        moved = to_boresight_frame(AspectAngles(inc + d, az), b_inc + d, b_az)
        assert moved.incidence == pytest.approx(base.incidence, abs=1e-12)


def test_reflector_config_rejects_bad_incidence():
    ReflectorConfig(0, 0, BORESIGHT_INCIDENCE, 0.0)
    with pytest.raises(ValueError):
        ReflectorConfig(0, 0, -0.1, 0.0)


# -- projection and clipping ------------------------------------------------

def test_project_square_down():
    out = project_polygon(square(1.0), [0, 0, -1], square(0.0))
    np.testing.assert_allclose(out.vertices, square(0.0).vertices, atol=1e-15)


def test_projection_parallel_raises():
    with pytest.raises(DegenerateProjection):
        project_polygon(square(1.0), [1, 0, 0], square(0.0))


@settings(max_examples=60)
@given(st.integers(3, 8), st.floats(0.05, 1.4), st.floats(0, 2 * math.pi), st.integers(0, 10**6))
def test_oblique_projection_area_ratio(n, tilt, az, seed):
    rng = np.random.default_rng(seed)
    ang = np.sort(rng.uniform(0, 2 * math.pi, n))
    src = Polygon3(np.column_stack([np.cos(ang), np.sin(ang), np.full(n, 2.0)]))
    d = np.array([math.sin(tilt) * math.cos(az), math.sin(tilt) * math.sin(az), -math.cos(tilt)])
    tgt_normal = np.array([0.3, -0.2, 1.0]) / np.linalg.norm([0.3, -0.2, 1.0])
    tgt = Polygon3([[0, 0, 0], [1, 0, -0.3], [0, 1, 0.2]], tgt_normal, 0.0)
    out = project_polygon(src, d, tgt)
    assert len(out) == n
    ratio = abs(d @ src.normal) / abs(d @ tgt.normal)
    assert out.area / src.area == pytest.approx(ratio, rel=1e-9)
    # winding kept: the 2D signed orientation seen along the projection matches
    assert np.sign(np.cross(out.vertices[1] - out.vertices[0], out.vertices[2] - out.vertices[0]) @ d) \
        == np.sign(np.cross(src.vertices[1] - src.vertices[0], src.vertices[2] - src.vertices[0]) @ d)


def test_clip_examples():
    a = square()
    assert clip_polygons(a, a).area == pytest.approx(1.0, rel=1e-12)
    assert clip_polygons(a, square(x0=3.0)) is None
    half = clip_polygons(a, square(x0=0.5))
    # Monte-Carlo area oracle
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.5, 2.0, size=(10**6, 2))
    inside = (pts[:, 0] >= 0.5) & (pts[:, 0] <= 1) & (pts[:, 1] >= 0) & (pts[:, 1] <= 1)
    assert half.area == pytest.approx(inside.mean() * 2.5 ** 2, abs=1e-2)
    assert half.area == pytest.approx(0.5, abs=1e-3)


def test_clip_requires_coplanar():
    with pytest.raises(NotCoplanar):
        clip_polygons(square(0.1), square(0.0))


@settings(max_examples=80)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.1, 2), st.floats(0, math.pi))
def test_clip_area_bounded(x0, y0, side, rot):
    c, s = math.cos(rot), math.sin(rot)
    base = np.array([[0, 0], [side, 0], [side, side], [0, side]]) + [x0, y0]
    r = base @ np.array([[c, s], [-s, c]])
    sub = Polygon3(np.column_stack([r, np.zeros(4)]))
    out = clip_polygons(sub, square())
    area = 0.0 if out is None else out.area
    assert area <= min(sub.area, 1.0) + 1e-12
    assert clip_polygons(sub, sub).area == pytest.approx(sub.area, rel=1e-9)


@settings(max_examples=40)
@given(st.floats(0, 2 * math.pi), st.floats(0.1, 1.2), st.floats(0, 2 * math.pi))
def test_project_then_clip_rotation_invariant(rot, tilt, az):
    """Rotating the whole scene about the target normal leaves the lit area unchanged."""
    def rz(t):
        c, s = math.cos(t), math.sin(t)
        return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])

    src = square(1.0, -0.3, -0.2, 0.8)
    tgt = square(0.0)
    d = np.array([math.sin(tilt) * math.cos(az), math.sin(tilt) * math.sin(az), -math.cos(tilt)])
    a = clip_polygons(project_polygon(src, d, tgt), tgt)
    R = rz(rot)
    src_r = Polygon3(src.vertices @ R.T)
    tgt_r = Polygon3(tgt.vertices @ R.T)
    b = clip_polygons(project_polygon(src_r, R @ d, tgt_r), tgt_r)
    assert (a is None) == (b is None)
    if a is not None:
        assert b.area == pytest.approx(a.area, rel=1e-9, abs=1e-14)


def test_trihedral_plates():
    g = TrihedralGeometry(0.3)
    for p in (1, 2, 3):
        assert g.plates[p].area == pytest.approx(0.09)
        uv = g.plane_coords(p, g.plates[p].vertices)
        assert shoelace(uv) == pytest.approx(0.09)
    n = np.array([g.normal(p) for p in (1, 2, 3)])
    np.testing.assert_allclose(n @ n.T, np.eye(3))
    with pytest.raises(ValueError):
        TrihedralGeometry(0.0)
