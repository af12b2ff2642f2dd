"""Simulated SAR measurement chain and image formation.

The baseband echo of a point reflector is synthesised pulse by pulse, range
compressed with a chirp matched filter, transformed to the range-Doppler
domain, corrected for range-cell migration, azimuth compressed and finally
resampled onto a square ground grid of ``chip_size`` pixels.

Chip convention: the row index grows with ground range *toward* the radar
(the near edge of the target sits at the bottom of the chip) and the column
index grows along the flight direction.
"""
from __future__ import annotations

import dataclasses
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import fft as sfft
from scipy import optimize

from . import kernels
from .geometry import (
    AspectAngles,
    PlatformPath,
    ReflectorConfig,
    los_basis,
    platform_position,
    to_boresight_frame,
)
from .scattering import LIGHT_SPEED, backscatter_amplitude

log = logging.getLogger(__name__)

RCMC_TAPS = 8
# the final range resample sees content up to Nyquist, where 8 taps broaden the
# response by up to 10% depending on the sub-bin position
RESAMPLE_TAPS = 16
PSF_OVERSAMPLE = 8
PSF_HALF_WIDTH = 32


class OutOfSwath(ValueError):
    """A scatterer's echo falls outside the recorded fast-time window."""


@dataclass(frozen=True)
class SarSystemSpec:
    """Platform and waveform constants of the simulated sensor."""

    standoff_range: float = 5000.0
    platform_speed: float = 50.0
    center_frequency: float = 9.6e9
    bandwidth: float = 591e6
    pulse_duration: float = 5e-6
    sample_rate: float = 500e6
    prf: float = 1200.0
    ground_sample_distance: tuple[float, float] = (0.3, 0.3)
    polarization: str = "HH"
    tx_amplitude: float = 1.0
    chip_size: int = 128
    swath_margin: int = PSF_HALF_WIDTH

    def __post_init__(self):
        for name in ("standoff_range", "platform_speed", "center_frequency", "bandwidth",
                     "pulse_duration", "sample_rate", "prf"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.polarization != "HH":
            raise ValueError("only HH polarization is modelled")
        if self.chip_size < 2:
            raise ValueError("chip_size must be at least 2")
        object.__setattr__(self, "ground_sample_distance",
                           tuple(float(v) for v in self.ground_sample_distance))
        if self.sample_rate < self.bandwidth:
            # complex sampling below the chirp bandwidth folds the spectrum; the
            # matched filter still compresses it
            log.debug("sample rate %.3g Hz is below the chirp bandwidth %.3g Hz",
                      self.sample_rate, self.bandwidth)

    def replace(self, **changes) -> "SarSystemSpec":
        return dataclasses.replace(self, **changes)

    @property
    def chirp_rate(self) -> float:
        return self.bandwidth / self.pulse_duration

    @property
    def wavelength(self) -> float:
        return LIGHT_SPEED / self.center_frequency

    @property
    def phase_constant(self) -> float:
        return 2.0 * np.pi / self.wavelength

    @property
    def range_bin(self) -> float:
        """Slant-range spacing of fast-time samples."""
        return LIGHT_SPEED / (2.0 * self.sample_rate)

    @property
    def pulse_samples(self) -> int:
        return int(round(self.pulse_duration * self.sample_rate))

    @property
    def aperture_length(self) -> float:
        """Track length giving an azimuth resolution of one ground sample."""
        return self.wavelength * self.standoff_range / (2.0 * self.ground_sample_distance[1])

    @property
    def pulse_count(self) -> int:
        n = int(np.ceil(self.aperture_length / self.platform_speed * self.prf))
        return n + 1 - n % 2  # odd, so that eta = 0 is a pulse

    @property
    def slow_times(self) -> np.ndarray:
        n = self.pulse_count
        return (np.arange(n) - (n - 1) / 2) / self.prf


@dataclass(frozen=True)
class EchoMatrix:
    """Baseband samples, one row per pulse (slow time) and one column per fast-time sample."""

    samples: np.ndarray
    fast_time_origin: float
    slow_times: np.ndarray
    sample_rate: float

    @property
    def slow_time_span(self) -> float:
        return float(self.slow_times[-1] - self.slow_times[0])

    def __add__(self, other: "EchoMatrix") -> "EchoMatrix":
        return dataclasses.replace(self, samples=self.samples + other.samples)

    def scaled(self, factor: complex) -> "EchoMatrix":
        return dataclasses.replace(self, samples=self.samples * factor)


class GeometryMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ComplexImage:
    pixels: np.ndarray
    ground_spacing: tuple[float, float] = (0.3, 0.3)

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 2 or min(p.shape) < 1:
            raise ValueError("pixels must be a non-empty 2D array")
        object.__setattr__(self, "pixels", p.astype(np.complex128, copy=False))

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.pixels)

    def __add__(self, other: "ComplexImage") -> "ComplexImage":
        if self.shape != other.shape:
            raise GeometryMismatch(f"{self.shape} vs {other.shape}")
        return ComplexImage(self.pixels + other.pixels, self.ground_spacing)


# ---------------------------------------------------------------------------
# acquisition geometry


class ImagingGeometry:
    """Fast-time window and ground-grid mapping for one incidence angle.

    Ground offsets are expressed as ``g`` (toward the radar) and ``s`` (along
    track). The swath covers the chip plus ``spec.swath_margin`` pixels on each
    side, plus the range migration over the aperture.
    """

    def __init__(self, spec: SarSystemSpec, incidence: float):
        self.spec = spec
        self.incidence = float(incidence)
        n = spec.chip_size
        self.center = n // 2
        gr, ga = spec.ground_sample_distance
        half_g = (max(self.center, n - 1 - self.center) + spec.swath_margin) * gr
        half_s = (max(self.center, n - 1 - self.center) + spec.swath_margin) * ga
        self.half_extent = (half_g, half_s)
        r_hi = self.closest_range(-half_g)
        r_lo = self.closest_range(half_g)
        eta_max = np.abs(spec.slow_times).max()
        migration = np.hypot(r_hi, eta_max * spec.platform_speed + half_s) - r_hi
        pad = 4 * spec.range_bin
        self.range_near = r_lo - pad
        self.bin_count = int(np.ceil((r_hi + migration + pad - self.range_near) / spec.range_bin)) + 1
        self.fast_time_origin = 2.0 * self.range_near / LIGHT_SPEED - 0.5 * spec.pulse_duration
        self.fast_count = self.bin_count + spec.pulse_samples - 1

    def closest_range(self, g):
        """Closest-approach slant range of ground-range offset ``g``."""
        r0, th = self.spec.standoff_range, self.incidence
        return np.hypot(r0 * np.sin(th) - np.asarray(g, dtype=float), r0 * np.cos(th))

    @property
    def bin_ranges(self) -> np.ndarray:
        return self.range_near + np.arange(self.bin_count) * self.spec.range_bin

    @property
    def fast_times(self) -> np.ndarray:
        return self.fast_time_origin + np.arange(self.fast_count) / self.spec.sample_rate

    def grid_offsets(self) -> tuple[np.ndarray, np.ndarray]:
        gr, ga = self.spec.ground_sample_distance
        idx = np.arange(self.spec.chip_size) - self.center
        return idx * gr, idx * ga

    def in_swath(self, g, s) -> np.ndarray:
        hg, hs = self.half_extent
        return (np.abs(g) <= hg) & (np.abs(s) <= hs)

    def ground_offsets(self, points, azimuth: float) -> tuple[np.ndarray, np.ndarray]:
        u, w = los_basis(azimuth)
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if p.shape[-1] == 2:
            p = np.concatenate([p, np.zeros(p.shape[:-1] + (1,))], axis=-1)
        return p @ u, p @ w

    def pixel_of(self, g, s) -> tuple[np.ndarray, np.ndarray]:
        gr, ga = self.spec.ground_sample_distance
        return self.center + np.asarray(g) / gr, self.center + np.asarray(s) / ga


def scene_to_pixel(points, aspect: AspectAngles, spec: SarSystemSpec):
    """(row, col) chip coordinates of ground points (x, y[, z])."""
    geo = ImagingGeometry(spec, aspect.incidence)
    return geo.pixel_of(*geo.ground_offsets(points, aspect.azimuth))


def pixel_to_scene(row, col, aspect: AspectAngles, spec: SarSystemSpec) -> np.ndarray:
    """Ground (x, y) of chip coordinates; inverse of :func:`scene_to_pixel`."""
    gr, ga = spec.ground_sample_distance
    c = spec.chip_size // 2
    g = (np.asarray(row, dtype=float) - c) * gr
    s = (np.asarray(col, dtype=float) - c) * ga
    u, w = los_basis(aspect.azimuth)
    return np.stack([g * u[0] + s * w[0], g * u[1] + s * w[1]], axis=-1)


# ---------------------------------------------------------------------------
# transmit pulse and echoes


def chirp(spec: SarSystemSpec, t) -> np.ndarray:
    """Real transmitted pulse ``A rect(t/T) cos(2 pi f0 t + pi K t^2)``."""
    t = np.asarray(t, dtype=float)
    live = np.abs(t) <= 0.5 * spec.pulse_duration
    phase = 2 * np.pi * spec.center_frequency * t + np.pi * spec.chirp_rate * t * t
    return np.where(live, spec.tx_amplitude * np.cos(phase), 0.0)


def reflector_strength(reflector: ReflectorConfig, aspect: AspectAngles, spec: SarSystemSpec,
                       plate_side: float = 0.3) -> float:
    """Range-free HH amplitude ``r |E_phi|`` at the aperture-centre angles."""
    b = to_boresight_frame(aspect, reflector.incidence, reflector.azimuth)
    return float(np.ravel(backscatter_amplitude(b.incidence, b.azimuth, plate_side,
                                                spec.phase_constant, spec.tx_amplitude))[0])


def _ranges(spec: SarSystemSpec, aspect: AspectAngles, ground_xy, slow_times) -> np.ndarray:
    path = PlatformPath(spec.standoff_range, spec.platform_speed, aspect.azimuth, aspect.incidence)
    pos = platform_position(path, slow_times)
    p = np.array([ground_xy[0], ground_xy[1], 0.0])
    return np.linalg.norm(pos - p, axis=-1)


def _check_swath(geo: ImagingGeometry, ranges: np.ndarray, g: float, s: float):
    t_lo = 2 * ranges.min() / LIGHT_SPEED - 0.5 * geo.spec.pulse_duration
    t_hi = 2 * ranges.max() / LIGHT_SPEED + 0.5 * geo.spec.pulse_duration
    t_end = geo.fast_time_origin + (geo.fast_count - 1) / geo.spec.sample_rate
    if t_lo < geo.fast_time_origin or t_hi > t_end or not geo.in_swath(g, s):
        raise OutOfSwath(f"scatterer at ground offset (g={g:.2f} m, s={s:.2f} m) "
                         "is outside the imaged swath")


def synthesize_point_echo(ground_xy, strength: float, aspect: AspectAngles, spec: SarSystemSpec,
                          pulses: Optional[slice] = None, geometry: Optional[ImagingGeometry] = None,
                          out: Optional[np.ndarray] = None) -> EchoMatrix:
    """Demodulated echo of a point scatterer with range-free amplitude ``strength``.

    Each pulse holds ``(strength / r) rect((t - tau)/T) exp(j pi [2 f0 tau - K (t - tau)^2])``.
    """
    geo = geometry or ImagingGeometry(spec, aspect.incidence)
    eta = spec.slow_times if pulses is None else spec.slow_times[pulses]
    g, s = geo.ground_offsets(ground_xy, aspect.azimuth)
    r = _ranges(spec, aspect, ground_xy, eta)
    _check_swath(geo, r, float(g[0]), float(s[0]))
    if out is None:
        out = np.zeros((len(eta), geo.fast_count), dtype=np.complex128)
    if strength != 0.0:
        kernels.chirp_echo_accumulate(out, geo.fast_time_origin, spec.sample_rate,
                                      2.0 * r / LIGHT_SPEED, strength / r,
                                      spec.center_frequency, spec.chirp_rate, spec.pulse_duration)
    return EchoMatrix(out, geo.fast_time_origin, eta, spec.sample_rate)


def synthesize_echo(reflector: ReflectorConfig, aspect: AspectAngles, spec: SarSystemSpec,
                    aperture_length: Optional[int] = None, anchor_xy=(0.0, 0.0)) -> EchoMatrix:
    """Baseband echo matrix of one trihedral reflector.

    ``aperture_length`` optionally restricts synthesis to that many central pulses.
    """
    pulses = None
    if aperture_length is not None:
        n = spec.pulse_count
        lo = max(0, (n - int(aperture_length)) // 2)
        pulses = slice(lo, lo + int(aperture_length))
    xy = (anchor_xy[0] + reflector.x, anchor_xy[1] + reflector.y)
    return synthesize_point_echo(xy, reflector_strength(reflector, aspect, spec), aspect, spec, pulses)


def synthesize_raw_echo(ground_xy, strength: float, aspect: AspectAngles, spec: SarSystemSpec,
                        fast_times, slow_times) -> np.ndarray:
    """Real RF echo (HH channel) sampled at arbitrary fast times; used to check demodulation."""
    r = _ranges(spec, aspect, ground_xy, np.asarray(slow_times, dtype=float))
    tau = 2.0 * r[:, None] / LIGHT_SPEED
    dt = np.asarray(fast_times, dtype=float)[None, :] - tau
    live = np.abs(dt) <= 0.5 * spec.pulse_duration
    phase = 2 * np.pi * spec.center_frequency * dt + np.pi * spec.chirp_rate * dt * dt
    return np.where(live, (strength / r)[:, None] * np.cos(phase), 0.0)


def quadrature_demodulate(raw, fast_times, spec: SarSystemSpec, decimate: int = 1) -> np.ndarray:
    """Complex baseband of real RF samples.

    The carrier ``exp(-j 2 pi f0 t)`` is mixed in, an ideal low-pass (cutoff
    1.1 B/2) isolates the baseband, and the result is conjugated and doubled
    so that a point echo matches ``A rect(.) exp(j pi [2 f0 tau - K (t - tau)^2])``.
    """
    raw = np.asarray(raw, dtype=float)
    t = np.asarray(fast_times, dtype=float)
    fs = 1.0 / (t[1] - t[0])
    mixed = raw * np.exp(-2j * np.pi * spec.center_frequency * t)
    spec_f = sfft.fft(mixed, axis=-1)
    freqs = sfft.fftfreq(t.size, 1.0 / fs)
    spec_f[..., np.abs(freqs) > 0.55 * spec.bandwidth] = 0.0
    base = 2.0 * np.conj(sfft.ifft(spec_f, axis=-1))
    return base[..., ::decimate]


# ---------------------------------------------------------------------------
# range-Doppler focusing


def _range_replica_spectrum(spec: SarSystemSpec, n_fft: int) -> np.ndarray:
    m = np.arange(spec.pulse_samples)
    tr = m / spec.sample_rate - 0.5 * spec.pulse_duration
    ref = np.exp(-1j * np.pi * spec.chirp_rate * tr * tr)
    return np.conj(sfft.fft(ref, n_fft))


def range_compress(samples: np.ndarray, spec: SarSystemSpec, bin_count: int,
                   workers: int = 1) -> np.ndarray:
    """Matched filtering in fast time; output bin ``l`` holds delay ``t0 + T/2 + l/fs``."""
    n_fast = samples.shape[-1]
    n_fft = sfft.next_fast_len(n_fast)
    h = _range_replica_spectrum(spec, n_fft)
    spec_s = sfft.fft(samples, n_fft, axis=-1, workers=workers)
    return sfft.ifft(spec_s * h, axis=-1, workers=workers)[..., :bin_count]


def _rd_focus(compressed: np.ndarray, geo: ImagingGeometry, workers: int = 1) -> np.ndarray:
    """Azimuth FFT, RCMC, azimuth matched filter and inverse FFT."""
    spec = geo.spec
    n_pulses = compressed.shape[0]
    n_fft = sfft.next_fast_len(n_pulses + n_pulses // 4)
    rd = sfft.fft(compressed, n_fft, axis=0, workers=workers)
    f = sfft.fftfreq(n_fft, 1.0 / spec.prf)
    d = np.sqrt(1.0 - (spec.wavelength * f / (2.0 * spec.platform_speed)) ** 2)
    r = geo.bin_ranges
    pos = (r[None, :] / d[:, None] - geo.range_near) / spec.range_bin
    rd = kernels.sinc_interp(rd, pos, RCMC_TAPS)
    rd *= np.exp(4j * np.pi * r[None, :] * (1.0 - d[:, None]) / spec.wavelength)
    return sfft.ifft(rd, axis=0, workers=workers)[:n_pulses]


def _resample(focused: np.ndarray, geo: ImagingGeometry, g, s) -> np.ndarray:
    """Sample the focused range/slow-time raster at ground offsets ``g`` (rows) x ``s`` (cols)."""
    spec = geo.spec
    n_pulses = focused.shape[0]
    az_pos = np.asarray(s) / spec.platform_speed * spec.prf + (n_pulses - 1) / 2
    cols = kernels.sinc_interp(np.ascontiguousarray(focused.T),
                               np.broadcast_to(az_pos, (focused.shape[1], len(az_pos))).copy(),
                               RCMC_TAPS)  # [bins, n_s]
    rg_pos = (geo.closest_range(g) - geo.range_near) / spec.range_bin
    rows = kernels.sinc_interp(np.ascontiguousarray(cols.T),
                               np.broadcast_to(rg_pos, (len(az_pos), len(rg_pos))).copy(),
                               RESAMPLE_TAPS)  # [n_s, n_g]
    return rows.T


def focus_rda(echo: EchoMatrix, spec: SarSystemSpec, incidence: float,
              workers: int = 1) -> ComplexImage:
    """Focus a full baseband echo matrix into a ground-grid chip."""
    geo = ImagingGeometry(spec, incidence)
    if echo.samples.shape[1] != geo.fast_count:
        raise GeometryMismatch("echo fast-time length does not match the imaging geometry")
    comp = range_compress(echo.samples, spec, geo.bin_count, workers)
    return _image_from_compressed(comp, geo, workers)


def _image_from_compressed(comp, geo, workers=1, g=None, s=None) -> ComplexImage:
    focused = _rd_focus(comp, geo, workers)
    if g is None:
        g, s = geo.grid_offsets()
    return ComplexImage(_resample(focused, geo, g, s), geo.spec.ground_sample_distance)


def compressed_points(points_xy: Sequence, strengths: Sequence[float], aspect: AspectAngles,
                      spec: SarSystemSpec, block: int = 512, workers: int = 1) -> np.ndarray:
    """Range-compressed data of several point scatterers, synthesised in pulse blocks."""
    geo = ImagingGeometry(spec, aspect.incidence)
    n = spec.pulse_count
    out = np.zeros((n, geo.bin_count), dtype=np.complex128)
    for lo in range(0, n, block):
        sl = slice(lo, min(n, lo + block))
        buf = np.zeros((sl.stop - sl.start, geo.fast_count), dtype=np.complex128)
        for xy, a in zip(points_xy, strengths):
            synthesize_point_echo(xy, a, aspect, spec, sl, geo, buf)
        out[sl] = range_compress(buf, spec, geo.bin_count, workers)
    return out


def image_points(points_xy: Sequence, strengths: Sequence[float], aspect: AspectAngles,
                 spec: SarSystemSpec, workers: int = 1) -> ComplexImage:
    """Full-chain image of point scatterers with range-free amplitudes ``strengths``."""
    geo = ImagingGeometry(spec, aspect.incidence)
    comp = compressed_points(points_xy, strengths, aspect, spec, workers=workers)
    return _image_from_compressed(comp, geo, workers)


def image_perturbation(reflectors: Iterable[ReflectorConfig], aspect: AspectAngles,
                       spec: SarSystemSpec, anchor_xy=(0.0, 0.0), plate_side: float = 0.3,
                       workers: int = 1) -> ComplexImage:
    """Full-chain image of a set of trihedral reflectors placed relative to ``anchor_xy``."""
    reflectors = list(reflectors)
    if not reflectors:
        return ComplexImage(np.zeros((spec.chip_size,) * 2, dtype=np.complex128),
                            spec.ground_sample_distance)
    pts = [(anchor_xy[0] + r.x, anchor_xy[1] + r.y) for r in reflectors]
    amps = [reflector_strength(r, aspect, spec, plate_side) for r in reflectors]
    return image_points(pts, amps, aspect, spec, workers)


# ---------------------------------------------------------------------------
# fast point-spread renderer


class PointSpreadRenderer:
    """Renders point scatterers by translating precomputed impulse responses.

    Unit point responses are computed through the full chain and sampled on a
    grid oversampled ``oversample`` times. Because the range samples are not
    commensurate with the ground grid (and the chirp is under-sampled), the
    response also depends on where the scatterer falls between two range
    bins, so one table is kept per ``range_phases`` fraction of a bin.

    A scatterer at ground offset ``(g, s)`` is rendered as the table patch at
    its quantised pixel position, scaled by its closest-approach ``1/r`` and
    two-way carrier phase, with the linear azimuth phase of its Doppler
    centroid.
    """

    def __init__(self, spec: SarSystemSpec, incidence: float, half_width: int = PSF_HALF_WIDTH,
                 oversample: int = PSF_OVERSAMPLE, range_phases: int = PSF_OVERSAMPLE,
                 doppler_ramp: bool = True, workers: int = 1):
        self.spec = spec
        self.geometry = geo = ImagingGeometry(spec, incidence)
        self.half_width = h = int(half_width)
        self.oversample = q = int(oversample)
        self.range_phases = nb = int(range_phases)
        self.doppler_ramp = doppler_ramp
        gr, ga = spec.ground_sample_distance
        aspect = AspectAngles(incidence, 0.0)
        offs = np.arange(-q * h - (q - 1), q * h + 1) / q  # every offset m/q a patch needs
        i = np.arange(2 * h + 1)
        fr = np.arange(q)
        idx = q * i[None, :] - fr[:, None] + (q - 1)  # [fr, i] -> index into offs
        r_centre = float(geo.closest_range(0.0))
        base = np.floor((r_centre - geo.range_near) / spec.range_bin)
        self.table = np.empty((nb, q, q, 2 * h + 1, 2 * h + 1), dtype=np.complex128)
        self.reference_range = np.empty(nb)
        for b in range(nb):
            r_t = geo.range_near + (base + b / nb) * spec.range_bin
            g_t = r0_to_ground(r_t, spec.standoff_range, incidence)
            comp = compressed_points([(g_t, 0.0)], [1.0], aspect, spec, workers=workers)
            img = _image_from_compressed(comp, geo, workers, g_t + offs * gr, offs * ga).pixels
            self.reference_range[b] = r_t
            # store with unit spreading and zero carrier phase so nodes can be blended
            img = img * (r_t * np.exp(-4j * np.pi * r_t / spec.wavelength))
            self.table[b] = img[idx[:, None, :, None], idx[None, :, None, :]]

    @property
    def peak(self) -> float:
        """Largest on-node response magnitude of a unit scatterer at scene centre."""
        r = self.geometry.closest_range(0.0)
        return float(np.abs(self.table[:, 0, 0]).max() / r)

    def render(self, points_xy, strengths, azimuth: float, out: Optional[np.ndarray] = None,
               out_of_swath: str = "raise") -> np.ndarray:
        """Complex chip of scatterers at ground ``points_xy`` (relative to scene centre)."""
        spec, geo, q, h, nb = self.spec, self.geometry, self.oversample, self.half_width, self.range_phases
        n = spec.chip_size
        if out is None:
            out = np.zeros((n, n), dtype=np.complex128)
        pts = np.asarray(points_xy, dtype=float).reshape(-1, 2)
        amp = np.asarray(strengths, dtype=float).reshape(-1)
        if len(pts) == 0:
            return out
        g, s = geo.ground_offsets(pts, azimuth)
        inside = geo.in_swath(g, s)
        if not inside.all():
            if out_of_swath == "raise":
                k = int(np.flatnonzero(~inside)[0])
                raise OutOfSwath(f"scatterer at ground offset (g={g[k]:.2f} m, s={s[k]:.2f} m) "
                                 "is outside the imaged swath")
            g, s, amp = g[inside], s[inside], amp[inside]
        live = amp != 0.0
        g, s, amp = g[live], s[live], amp[live]
        if len(amp) == 0:
            return out
        row, col = geo.pixel_of(g, s)
        rng = geo.closest_range(g)
        value = (amp / rng) * np.exp(4j * np.pi * rng / spec.wavelength)
        ramp = np.zeros_like(rng)
        if self.doppler_ramp:
            # Doppler centroid of a scatterer off the aperture centre
            ramp = -2.0 * np.pi * (2.0 * s / (spec.wavelength * rng)) * spec.ground_sample_distance[1]
        # trilinear blend over range-bin phase, row and column sub-pixel nodes
        bpos = (rng - geo.range_near) / spec.range_bin * nb
        b0 = np.floor(bpos)
        wb = bpos - b0
        rq, cq = row * q, col * q
        r0, c0 = np.floor(rq), np.floor(cq)
        wr, wc = rq - r0, cq - c0
        entries = []
        for db, fb in ((0, 1 - wb), (1, wb)):
            pb = (b0.astype(np.int64) + db) % nb
            for dr, fr_ in ((0, 1 - wr), (1, wr)):
                rr = r0.astype(np.int64) + dr
                ri = np.floor_divide(rr, q)
                for dc, fc_ in ((0, 1 - wc), (1, wc)):
                    cc = c0.astype(np.int64) + dc
                    ci = np.floor_divide(cc, q)
                    entries.append((pb, ri - h, ci - h, rr - q * ri, cc - q * ci,
                                    value * (fb * fr_ * fc_), col - (ci - h)))
        cols = [np.concatenate(c) for c in zip(*entries)]
        kernels.splat_patches(out, self.table, cols[0], cols[1], cols[2], cols[3], cols[4],
                              cols[5], np.tile(ramp, 8), cols[6])
        return out

    def render_reflectors(self, reflectors: Iterable[ReflectorConfig], aspect: AspectAngles,
                          anchor_xy=(0.0, 0.0), plate_side: float = 0.3,
                          out_of_swath: str = "raise",
                          tx_amplitude: Optional[float] = None) -> ComplexImage:
        """Trihedral reflectors placed relative to ``anchor_xy``.

        ``tx_amplitude`` overrides the transmit amplitude of the renderer's spec.
        """
        reflectors = list(reflectors)
        pts = [(anchor_xy[0] + r.x, anchor_xy[1] + r.y) for r in reflectors]
        spec = self.spec if tx_amplitude is None else self.spec.replace(tx_amplitude=tx_amplitude)
        amps = reflector_strengths(reflectors, aspect, spec, plate_side)
        img = self.render(pts, amps, aspect.azimuth, out_of_swath=out_of_swath)
        return ComplexImage(img, self.spec.ground_sample_distance)


def r0_to_ground(r, standoff_range: float, incidence: float) -> float:
    """Ground-range offset whose closest-approach slant range is ``r``."""
    h = standoff_range * np.cos(incidence)
    return float(standoff_range * np.sin(incidence) - np.sqrt(r * r - h * h))


def reflector_strengths(reflectors: Sequence[ReflectorConfig], aspect: AspectAngles,
                        spec: SarSystemSpec, plate_side: float = 0.3) -> np.ndarray:
    if not reflectors:
        return np.zeros(0)
    inc = np.array([aspect.incidence - (r.incidence - np.arctan(np.sqrt(2.0))) for r in reflectors])
    az = np.array([aspect.azimuth - (r.azimuth - 0.25 * np.pi) for r in reflectors])
    return backscatter_amplitude(inc, az, plate_side, spec.phase_constant, spec.tx_amplitude)


_RENDERERS: dict = {}


def renderer_for(spec: SarSystemSpec, incidence: float) -> PointSpreadRenderer:
    """Process-wide cache of point-spread renderers.

    Tables do not depend on the transmit amplitude, so specs differing only in
    ``tx_amplitude`` share one renderer (built with unit amplitude).
    """
    unit = spec.replace(tx_amplitude=1.0)
    key = (unit, round(float(incidence), 12))
    if key not in _RENDERERS:
        _RENDERERS[key] = PointSpreadRenderer(unit, incidence)
    return _RENDERERS[key]


def calibrate_tx_amplitude(target_peak: float, spec: SarSystemSpec, incidence: float,
                           plate_side: float = 0.3) -> float:
    """Transmit amplitude making a boresight trihedral's focused peak equal ``target_peak``."""
    if target_peak <= 0:
        raise ValueError("target_peak must be positive")
    ren = renderer_for(spec, incidence)
    refl = ReflectorConfig(0.0, 0.0, incidence, 0.25 * np.pi)
    aspect = AspectAngles(incidence, 0.25 * np.pi)

    def peak(a: float) -> float:
        s = reflector_strengths([refl], aspect, spec.replace(tx_amplitude=a), plate_side)
        return float(np.abs(ren.render([(0.0, 0.0)], s, aspect.azimuth)).max())

    hi = 1.0
    while peak(hi) < target_peak:
        hi *= 2.0
    lo = 0.0
    return float(optimize.bisect(lambda a: peak(a) - target_peak, lo, hi, xtol=1e-14 * hi,
                                 rtol=1e-12, maxiter=200))


# ---------------------------------------------------------------------------
# I/O

CIMG_MAGIC = b"CIMG"


def write_cimg(image: ComplexImage, path) -> None:
    rows, cols = image.shape
    data = np.empty((rows, cols, 2), dtype="<f8")
    data[..., 0] = image.pixels.real
    data[..., 1] = image.pixels.imag
    with open(path, "wb") as fh:
        fh.write(CIMG_MAGIC + struct.pack("<III", rows, cols, 0))
        fh.write(data.tobytes())


def encode_cimg(image: ComplexImage) -> bytes:
    rows, cols = image.shape
    data = np.empty((rows, cols, 2), dtype="<f8")
    data[..., 0] = image.pixels.real
    data[..., 1] = image.pixels.imag
    return CIMG_MAGIC + struct.pack("<III", rows, cols, 0) + data.tobytes()


def decode_cimg(blob: bytes, spacing=(0.3, 0.3)) -> ComplexImage:
    if len(blob) < 16 or blob[:4] != CIMG_MAGIC:
        raise ValueError("not a CIMG stream")
    rows, cols, _ = struct.unpack("<III", blob[4:16])
    need = 16 + rows * cols * 16
    if len(blob) < need:
        raise ValueError(f"CIMG payload truncated: {len(blob)} of {need} bytes")
    data = np.frombuffer(blob, dtype="<f8", count=rows * cols * 2, offset=16).reshape(rows, cols, 2)
    return ComplexImage(data[..., 0] + 1j * data[..., 1], spacing)


def read_cimg(path, spacing=(0.3, 0.3)) -> ComplexImage:
    return decode_cimg(Path(path).read_bytes(), spacing)


def log_magnitude_u8(magnitude: np.ndarray, floor_db: float = -40.0) -> np.ndarray:
    """8-bit grayscale of ``20 log10(|x| / max)`` clipped at ``floor_db``."""
    mag = np.abs(np.asarray(magnitude, dtype=float))
    peak = mag.max()
    if peak <= 0:
        return np.zeros(mag.shape, dtype=np.uint8)
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag / peak)
    x = np.clip((db - floor_db) / -floor_db, 0.0, 1.0)
    return np.round(255.0 * x).astype(np.uint8)


def write_png(magnitude: np.ndarray, path, floor_db: float = -40.0) -> None:
    from PIL import Image

    Image.fromarray(log_magnitude_u8(magnitude, floor_db), mode="L").save(path, format="PNG",
                                                                          optimize=False)
