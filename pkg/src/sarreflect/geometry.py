"""Frames, platform trajectory, trihedral plates and convex polygon machinery.

All angles are radians. Polygons are convex, planar and stored as ordered
``(n, 3)`` vertex arrays together with their support plane.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

TWO_PI = 2.0 * np.pi
HALF_PI = 0.5 * np.pi
#: Boresight incidence of a trihedral resting on its base plate.
BORESIGHT_INCIDENCE = float(np.arctan(np.sqrt(2.0)))
BORESIGHT_AZIMUTH = 0.25 * np.pi

COPLANAR_TOL = 1e-9
PARALLEL_TOL = 1e-12


class GeometryError(ValueError):
    pass


class DegenerateProjection(GeometryError):
    """Projection direction is parallel to the target plane."""


class NotCoplanar(GeometryError):
    """Polygons handed to the clipper do not share a plane."""


@dataclass(frozen=True)
class AspectAngles:
    """Platform incidence (from vertical) and azimuth seen from the scene."""

    incidence: float
    azimuth: float

    def __post_init__(self):
        inc = float(self.incidence)
        if not (-1e-12 <= inc <= HALF_PI + 1e-12):
            raise ValueError(f"incidence {inc!r} outside [0, pi/2]")
        object.__setattr__(self, "incidence", min(max(inc, 0.0), HALF_PI))
        object.__setattr__(self, "azimuth", float(np.mod(self.azimuth, TWO_PI)))

    @classmethod
    def from_degrees(cls, incidence: float, azimuth: float) -> "AspectAngles":
        return cls(np.deg2rad(incidence), np.deg2rad(azimuth))


@dataclass(frozen=True)
class BoresightAngles:
    """Aspect angles expressed in a reflector's plate-aligned frame."""

    incidence: float
    azimuth: float

    @property
    def in_window(self) -> bool:
        return 0.0 <= self.incidence <= HALF_PI and 0.0 <= self.azimuth <= HALF_PI


@dataclass(frozen=True)
class ReflectorConfig:
    """Ground position (m, relative to the anchor point) and boresight angles of one trihedral."""

    x: float
    y: float
    incidence: float
    azimuth: float

    def __post_init__(self):
        if not (-1e-12 <= self.incidence <= HALF_PI + 1e-12):
            raise ValueError(f"boresight incidence {self.incidence!r} outside [0, pi/2]")


@dataclass(frozen=True)
class PlatformPath:
    standoff_range: float
    speed: float
    azimuth: float
    incidence: float

    def __post_init__(self):
        if self.standoff_range <= 0:
            raise ValueError("standoff_range must be positive")
        if self.speed <= 0:
            raise ValueError("speed must be positive")


def los_basis(azimuth: float) -> tuple[np.ndarray, np.ndarray]:
    """Ground unit vectors toward the platform and along its track."""
    c, s = np.cos(azimuth), np.sin(azimuth)
    return np.array([c, s, 0.0]), np.array([-s, c, 0.0])


def platform_position(path: PlatformPath, slow_time) -> np.ndarray:
    """Platform position(s) at slow time ``slow_time`` (scalar or array).

    The track is straight, at standoff range ``r0`` and perpendicular to the
    line of sight at ``slow_time == 0``.
    """
    eta = np.asarray(slow_time, dtype=float)
    local = np.stack(
        np.broadcast_arrays(
            path.standoff_range * np.sin(path.incidence),
            eta * path.speed,
            path.standoff_range * np.cos(path.incidence),
        ),
        axis=-1,
    )
    c, s = np.cos(path.azimuth), np.sin(path.azimuth)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return local @ rot.T


def to_boresight_frame(aspect: AspectAngles, boresight_incidence: float,
                       boresight_azimuth: float) -> BoresightAngles:
    """Shift aspect angles into the reflector frame. No wrapping, no clamping."""
    return BoresightAngles(
        incidence=aspect.incidence - (boresight_incidence - BORESIGHT_INCIDENCE),
        azimuth=aspect.azimuth - (boresight_azimuth - BORESIGHT_AZIMUTH),
    )


def wrap_azimuth(phi):
    """Reduce azimuth differences to [-pi, pi)."""
    return np.mod(np.asarray(phi) + np.pi, TWO_PI) - np.pi


# ---------------------------------------------------------------------------
# polygons


def _newell_normal(vertices: np.ndarray) -> np.ndarray:
    v = vertices
    w = np.roll(v, -1, axis=0)
    n = np.array([
        np.sum((v[:, 1] - w[:, 1]) * (v[:, 2] + w[:, 2])),
        np.sum((v[:, 2] - w[:, 2]) * (v[:, 0] + w[:, 0])),
        np.sum((v[:, 0] - w[:, 0]) * (v[:, 1] + w[:, 1])),
    ])
    norm = np.linalg.norm(n)
    if norm == 0.0:
        raise GeometryError("degenerate polygon (zero area)")
    return n / norm


@dataclass(frozen=True)
class Polygon3:
    """Planar convex polygon in 3D.

    ``normal`` and ``offset`` describe the support plane ``normal . r = offset``.
    When omitted they are derived from the vertex winding (Newell's method).
    """

    vertices: np.ndarray
    normal: Optional[np.ndarray] = None
    offset: Optional[float] = None

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float).reshape(-1, 3)
        if len(v) < 3:
            raise GeometryError("polygon needs at least 3 vertices")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        if self.normal is None:
            n = _newell_normal(v)
        else:
            n = np.asarray(self.normal, dtype=float)
            n = n / np.linalg.norm(n)
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        if self.offset is None:
            object.__setattr__(self, "offset", float(np.mean(v @ n)))
        dev = np.abs(v @ n - self.offset)
        if dev.max() > COPLANAR_TOL:
            raise GeometryError(f"vertices leave the support plane by {dev.max():.3g} m")

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def area(self) -> float:
        v = self.vertices
        return 0.5 * abs(float(np.cross(v, np.roll(v, -1, axis=0)).sum(axis=0) @ self.normal))

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)


def project_polygon(source: Polygon3, direction, target: Polygon3) -> Polygon3:
    """Slide every vertex of ``source`` along ``direction`` onto ``target``'s plane."""
    d = np.asarray(direction, dtype=float)
    denom = float(d @ target.normal)
    if abs(denom) <= PARALLEL_TOL:
        raise DegenerateProjection("direction is parallel to the target plane")
    mu = (target.offset - source.vertices @ target.normal) / denom
    moved = source.vertices + mu[:, None] * d
    # snap exactly onto the plane to keep later coplanarity checks tight
    moved -= ((moved @ target.normal) - target.offset)[:, None] * target.normal
    return Polygon3(moved, target.normal, target.offset)


def _plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.eye(3)[int(np.argmin(np.abs(normal)))]
    u = np.cross(normal, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(normal, u)


def _signed_area_2d(p: np.ndarray) -> float:
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def clip_convex_2d(subject: np.ndarray, clip: np.ndarray, eps: float = 1e-15) -> np.ndarray:
    """Sutherland-Hodgman clip of a 2D polygon against a convex polygon.

    Returns an ``(n, 2)`` array; ``n < 3`` means empty.
    """
    if _signed_area_2d(clip) < 0:
        clip = clip[::-1]
    out = [tuple(p) for p in subject]
    m = len(clip)
    for i in range(m):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % m]
        ex, ey = bx - ax, by - ay
        scale = eps * max(1.0, abs(ex) + abs(ey))

        def side(q):
            return ex * (q[1] - ay) - ey * (q[0] - ax)

        inp, out = out, []
        prev = inp[-1]
        sp = side(prev)
        for cur in inp:
            sc = side(cur)
            if sc >= -scale:
                if sp < -scale:
                    t = sp / (sp - sc)
                    out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
                out.append(cur)
            elif sp >= -scale:
                t = sp / (sp - sc)
                out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
            prev, sp = cur, sc
    return _dedupe(np.array(out, dtype=float).reshape(-1, 2))


def _dedupe(p: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    if len(p) < 2:
        return p
    keep = np.linalg.norm(p - np.roll(p, 1, axis=0), axis=1) > tol
    if not keep.any():
        return p[:1]
    return p[keep]


def clip_polygons(subject: Polygon3, clip: Polygon3) -> Optional[Polygon3]:
    """Intersection of two coplanar convex polygons, ``None`` when empty."""
    n = clip.normal
    same = abs(abs(float(subject.normal @ n)) - 1.0) <= COPLANAR_TOL
    if not same or np.abs(subject.vertices @ n - clip.offset).max() > COPLANAR_TOL:
        raise NotCoplanar("subject does not lie in the clip polygon's plane")
    u, w = _plane_basis(n)
    sub2 = np.column_stack([subject.vertices @ u, subject.vertices @ w])
    clp2 = np.column_stack([clip.vertices @ u, clip.vertices @ w])
    res = clip_convex_2d(sub2, clp2)
    if len(res) < 3 or abs(_signed_area_2d(res)) <= 1e-24:
        return None
    pts = res[:, :1] * u + res[:, 1:] * w + clip.offset * n
    return Polygon3(pts, n, clip.offset)


# ---------------------------------------------------------------------------
# trihedral

#: plate index -> (normal axis, in-plane axes) in the reflector frame
PLATE_AXES = {1: (2, (0, 1)), 2: (0, (1, 2)), 3: (1, (0, 2))}


@dataclass(frozen=True)
class TrihedralGeometry:
    """Square trihedral with its corner at the origin.

    Plate 1 spans the x-y plane, plate 2 the y-z plane and plate 3 the x-z
    plane, each covering ``[0, a]^2`` in its two in-plane coordinates.
    """

    plate_side: float = 0.3
    plates: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a = float(self.plate_side)
        if a <= 0:
            raise ValueError("plate_side must be positive")
        plates = {}
        for idx, (ax, (i, j)) in PLATE_AXES.items():
            square = np.zeros((4, 3))
            square[:, i] = [0.0, a, a, 0.0]
            square[:, j] = [0.0, 0.0, a, a]
            plates[idx] = Polygon3(square, np.eye(3)[ax], 0.0)
        object.__setattr__(self, "plates", plates)

    def normal(self, plate: int) -> np.ndarray:
        return np.eye(3)[PLATE_AXES[plate][0]]

    def plane_coords(self, plate: int, points: np.ndarray) -> np.ndarray:
        """In-plane 2D coordinates of 3D points lying on ``plate``."""
        i, j = PLATE_AXES[plate][1]
        return np.asarray(points)[..., [i, j]]
