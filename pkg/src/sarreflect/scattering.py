"""Physical-optics / geometrical-optics backscatter of a square trihedral.

Every reflection path ends on one plate whose induced PO current radiates
back toward the radar. Intermediate bounces are specular (GO): the travel
direction and the magnetic field are mirrored about the plate normal, and
the lit region is carried forward by projecting it onto the next plate and
clipping. The far-field integrals over the final lit polygon are evaluated
in closed form (exact integration of a phase-linear exponential).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import (
    HALF_PI,
    TWO_PI,
    BoresightAngles,
    Polygon3,
    TrihedralGeometry,
    clip_polygons,
    project_polygon,
)

FREE_SPACE_IMPEDANCE = 376.730313668
LIGHT_SPEED = 299792458.0

PATHS: tuple[tuple[int, ...], ...] = (
    (1,), (2,), (3,),
    (1, 2), (2, 1), (1, 3), (3, 1), (2, 3), (3, 2),
    (1, 2, 3), (1, 3, 2), (2, 1, 3), (2, 3, 1), (3, 1, 2), (3, 2, 1),
)


class BackfaceIllumination(ValueError):
    """The wave hits the back of the plate, so PO assigns it no current."""


def path_label(path) -> str:
    return "".join(str(p) for p in path)


def phase_constant(frequency: float) -> float:
    return 2.0 * np.pi * frequency / LIGHT_SPEED


@dataclass(frozen=True)
class PlaneWave:
    direction: np.ndarray
    polarization: np.ndarray
    amplitude: float = 1.0
    phase_constant: float = 1.0

    def __post_init__(self):
        k = np.asarray(self.direction, dtype=float)
        h = np.asarray(self.polarization, dtype=float)
        if abs(np.linalg.norm(k) - 1) > 1e-12 or abs(np.linalg.norm(h) - 1) > 1e-12:
            raise ValueError("direction and polarization must be unit vectors")
        if abs(k @ h) > 1e-9:
            raise ValueError("polarization must be orthogonal to the travel direction")
        object.__setattr__(self, "direction", k)
        object.__setattr__(self, "polarization", h)


@dataclass(frozen=True)
class FarFieldComponents:
    n_theta: complex
    n_phi: complex

    def __add__(self, other: "FarFieldComponents") -> "FarFieldComponents":
        return FarFieldComponents(self.n_theta + other.n_theta, self.n_phi + other.n_phi)


ZERO_FIELD = FarFieldComponents(0j, 0j)


@dataclass(frozen=True)
class ScatterResult:
    e_theta: complex
    e_phi: complex

    @property
    def amplitude_magnitude(self) -> float:
        return float(np.hypot(abs(self.e_theta), abs(self.e_phi)))


def incident_wave(angles: BoresightAngles, amplitude: float = 1.0,
                  phase_constant: float = 1.0) -> PlaneWave:
    st, ct = np.sin(angles.incidence), np.cos(angles.incidence)
    sp, cp = np.sin(angles.azimuth), np.cos(angles.azimuth)
    return PlaneWave(
        direction=-np.array([st * cp, st * sp, ct]),
        polarization=np.array([ct * cp, ct * sp, -st]),
        amplitude=amplitude,
        phase_constant=phase_constant,
    )


def reflect(wave: PlaneWave, normal) -> PlaneWave:
    """Specular reflection from a perfect conductor.

    The normal component of the travel direction flips; for the magnetic
    field the tangential part is kept and the normal part flips.
    """
    n = np.asarray(normal, dtype=float)
    k = wave.direction - 2.0 * (wave.direction @ n) * n
    h = wave.polarization - 2.0 * (wave.polarization @ n) * n
    return PlaneWave(k, h, wave.amplitude, wave.phase_constant)


def bounce_path(wave: PlaneWave, path, geometry: TrihedralGeometry
                ) -> tuple[PlaneWave, Optional[Polygon3]]:
    """Carry ``wave`` through the intermediate bounces of ``path``.

    Returns the wave incident on the final plate and the lit polygon on that
    plate (``None`` when nothing reaches it). Single-plate paths return the
    whole plate, provided its front face sees the wave.
    """
    first = path[0]
    if wave.direction @ geometry.normal(first) >= 0.0:
        return wave, None
    lit: Optional[Polygon3] = geometry.plates[first]
    for prev, nxt in zip(path[:-1], path[1:]):
        wave = reflect(wave, geometry.normal(prev))
        if wave.direction @ geometry.normal(nxt) >= 0.0:
            return wave, None
        target = geometry.plates[nxt]
        lit = clip_polygons(project_polygon(lit, wave.direction, target), target)
        if lit is None:
            return wave, None
    return wave, lit


@dataclass(frozen=True)
class SurfaceCurrent:
    """PO current ``J(r) = 2 n x H(r)`` induced by a plane wave on a PEC plate."""

    vector: np.ndarray
    direction: np.ndarray
    phase_constant: float

    def __call__(self, points) -> np.ndarray:
        r = np.asarray(points, dtype=float)
        phase = np.exp(-1j * self.phase_constant * (r @ self.direction))
        return phase[..., None] * self.vector


def surface_current(wave: PlaneWave, plate_normal) -> SurfaceCurrent:
    n = np.asarray(plate_normal, dtype=float)
    if wave.direction @ n >= 0.0:
        raise BackfaceIllumination("wave does not illuminate the plate's front face")
    vec = 2.0 * np.cross(n, wave.polarization) * wave.amplitude / FREE_SPACE_IMPEDANCE
    return SurfaceCurrent(vec.astype(complex), wave.direction, wave.phase_constant)


# ---------------------------------------------------------------------------
# closed forms


def closed_form_terms(path, incidence: float, azimuth: float):
    """Closed-form factors of one path's far-field integrals.

    Returns ``(c_theta, c_phi, w)`` such that, with the lit polygon expressed
    in the final plate's in-plane coordinates ``u``,

        N_theta = (2 A / Z0) * c_theta * I,   N_phi = (2 A / Z0) * c_phi * I,
        I = integral over the lit polygon of exp(1j * k * w . u).

    Coordinates are (x, y) on plate 1, (y, z) on plate 2 and (x, z) on plate 3.
    """
    st, ct = np.sin(incidence), np.cos(incidence)
    sp, cp = np.sin(azimuth), np.cos(azimuth)
    label = path_label(path)
    if label == "1":
        return 0.0, ct, (2 * st * cp, 2 * st * sp)
    if label == "2":
        return 0.0, st * cp, (2 * st * sp, 2 * ct)
    if label == "3":
        return 0.0, st * sp, (2 * st * cp, 2 * ct)
    if label == "12":
        return -2 * st * ct * sp, -st * cp, (2 * st * sp, 0.0)
    if label == "21":
        return -2 * ct * ct * sp * cp, -ct * (cp * cp - sp * sp), (0.0, 2 * st * sp)
    if label == "13":
        return 2 * st * ct * cp, -st * sp, (2 * st * cp, 0.0)
    if label == "31":
        return 2 * ct * ct * sp * cp, ct * (cp * cp - sp * sp), (2 * st * cp, 0.0)
    if label == "23":
        return -2 * st * ct * cp, st * sp, (0.0, 2 * ct)
    if label == "32":
        return 2 * st * ct * sp, st * cp, (0.0, 2 * ct)
    # triple bounces: two mirrorings cancel the phase gradient on the last plate
    if label in ("123", "213"):
        return 0.0, -st * sp, (0.0, 0.0)
    if label in ("132", "312"):
        return 0.0, -st * cp, (0.0, 0.0)
    if label in ("231", "321"):
        return 0.0, -ct, (0.0, 0.0)
    raise ValueError(f"unknown reflection path {label!r}")


def _phi1(x: float) -> complex:
    """(exp(1j x) - 1) / (1j x) without cancellation."""
    if abs(x) < 1e-8:
        return 1.0 + 0.5j * x
    s = np.sin(0.5 * x)
    return complex(-2.0 * s * s, np.sin(x)) / complex(0.0, x)


def _divided_exp(d1: float, d2: float) -> complex:
    """Second divided difference of ``exp`` at (0, 1j d1, 1j d2), d1 <= 0 <= d2."""
    span = d2 - d1
    if span < 0.1:
        w1, w2 = 1j * d1, 1j * d2
        total, fact = 0j, 2.0
        pw1 = [1.0 + 0j]
        for _ in range(16):
            pw1.append(pw1[-1] * w1)
        for n in range(16):
            # complete homogeneous polynomial of degree n in (w1, w2)
            h = sum(pw1[i] * w2 ** (n - i) for i in range(n + 1))
            total += h / fact
            fact *= n + 3
        return total
    return (_phi1(d2) - _phi1(d1)) / complex(0.0, span)


def triangle_exp_integral(p0, p1, p2, c) -> complex:
    """Exact integral of ``exp(1j c . u)`` over a 2D triangle."""
    p0, p1, p2, c = (np.asarray(v, dtype=float) for v in (p0, p1, p2, c))
    e1, e2 = p1 - p0, p2 - p0
    twice_area = abs(e1[0] * e2[1] - e1[1] * e2[0])
    if twice_area == 0.0:
        return 0j
    lo, mid, hi = sorted((float(c @ p0), float(c @ p1), float(c @ p2)))
    return twice_area * np.exp(1j * mid) * _divided_exp(lo - mid, hi - mid)


def polygon_exp_integral(vertices2d, c) -> complex:
    """Exact integral of ``exp(1j c . u)`` over a convex 2D polygon (fan split)."""
    v = np.asarray(vertices2d, dtype=float)
    total = 0j
    for i in range(1, len(v) - 1):
        total += triangle_exp_integral(v[0], v[i], v[i + 1], c)
    return total


def far_field_integral(path, angles: BoresightAngles, geometry: TrihedralGeometry,
                       amplitude: float = 1.0, phase_constant: float = 1.0
                       ) -> FarFieldComponents:
    """Far-field integrals of one reflection path via the closed forms."""
    wave = incident_wave(angles, amplitude, phase_constant)
    _, lit = bounce_path(wave, path, geometry)
    if lit is None:
        return ZERO_FIELD
    c_theta, c_phi, w = closed_form_terms(path, angles.incidence, angles.azimuth)
    uv = geometry.plane_coords(path[-1], lit.vertices)
    integral = polygon_exp_integral(uv, phase_constant * np.asarray(w))
    scale = 2.0 * amplitude / FREE_SPACE_IMPEDANCE
    return FarFieldComponents(scale * c_theta * integral, scale * c_phi * integral)


def _in_window(incidence, azimuth):
    return (incidence >= 0.0) & (incidence <= HALF_PI) & (azimuth >= 0.0) & (azimuth <= HALF_PI)


def total_far_field(angles: BoresightAngles, geometry: TrihedralGeometry,
                    amplitude: float = 1.0, phase_constant: float = 1.0
                    ) -> FarFieldComponents:
    """Sum of the fifteen path integrals in fixed path order."""
    inc, az = angles.incidence, float(np.mod(angles.azimuth, TWO_PI))
    if not _in_window(inc, az):
        return ZERO_FIELD
    angles = BoresightAngles(inc, az)
    total = ZERO_FIELD
    for path in PATHS:
        total = total + far_field_integral(path, angles, geometry, amplitude, phase_constant)
    return total


def far_field_to_electric(n: FarFieldComponents, range_: float,
                          phase_constant: float) -> ScatterResult:
    if range_ <= 0:
        raise ValueError("range must be positive")
    k = phase_constant
    pref = -1j * k * FREE_SPACE_IMPEDANCE / (4 * np.pi) * np.exp(-1j * k * range_) / range_
    return ScatterResult(pref * n.n_theta, pref * n.n_phi)


def total_scatter(angles: BoresightAngles, geometry: TrihedralGeometry, range_: float,
                  amplitude: float = 1.0, phase_constant: float = 1.0) -> ScatterResult:
    """Backscattered spherical field components at distance ``range_``.

    Zero outside the visibility window ``[0, pi/2]^2``; the azimuth is taken
    modulo 2 pi first.
    """
    n = total_far_field(angles, geometry, amplitude, phase_constant)
    return far_field_to_electric(n, range_, phase_constant)


# ---------------------------------------------------------------------------
# vectorised entry point (compiled when available)


def trihedral_far_field_reference(incidence, azimuth, plate_side: float,
                                  phase_constant: float) -> np.ndarray:
    """Pure-Python evaluation of the summed, normalised far-field integrals.

    Returns an ``(n, 2)`` complex array of ``(N_theta, N_phi) / (2 A / Z0)``.
    """
    geom = TrihedralGeometry(plate_side)
    inc = np.atleast_1d(np.asarray(incidence, dtype=float))
    az = np.atleast_1d(np.asarray(azimuth, dtype=float))
    inc, az = np.broadcast_arrays(inc, az)
    out = np.zeros(inc.shape + (2,), dtype=complex)
    norm = FREE_SPACE_IMPEDANCE / 2.0
    for idx in np.ndindex(inc.shape):
        n = total_far_field(BoresightAngles(inc[idx], az[idx]), geom, 1.0, phase_constant)
        out[idx] = (n.n_theta * norm, n.n_phi * norm)
    return out


def trihedral_far_field(incidence, azimuth, plate_side: float = 0.3,
                        phase_constant: float = 1.0) -> np.ndarray:
    """Summed far-field integrals for arrays of boresight-frame angles.

    Same contract as :func:`trihedral_far_field_reference`, routed through the
    compiled kernel when it is available.
    """
    from . import kernels

    return kernels.trihedral_far_field(incidence, azimuth, plate_side, phase_constant)


def backscatter_amplitude(incidence, azimuth, plate_side: float, phase_constant: float,
                          tx_amplitude: float = 1.0, polarization: str = "HH"):
    """Range-free backscatter magnitude ``r * |E|`` for arrays of angles.

    ``HH`` keeps only ``|E_phi|``; ``"total"`` returns the quadrature sum.
    """
    n = trihedral_far_field(incidence, azimuth, plate_side, phase_constant)
    scale = phase_constant * tx_amplitude / (2.0 * np.pi)  # k Z0 / 4pi * 2 A / Z0
    if polarization == "HH":
        return scale * np.abs(n[..., 1])
    if polarization == "total":
        return scale * np.hypot(np.abs(n[..., 0]), np.abs(n[..., 1]))
    raise ValueError(f"unsupported polarization {polarization!r}")

