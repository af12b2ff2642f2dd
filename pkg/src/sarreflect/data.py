"""Samples, dataset indexing, MSTAR ingestion, synthetic scenes and azimuth sampling."""
from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import AspectAngles
from .imaging import (
    ComplexImage,
    SarSystemSpec,
    read_cimg,
    renderer_for,
    write_cimg,
)

CHIP = 128
MSTAR_ENV = "MSTAR_DIR"


class MalformedHeader(ValueError):
    pass


class TruncatedData(ValueError):
    pass


class UnknownClass(KeyError):
    pass


@dataclass(frozen=True)
class SarSample:
    chip: np.ndarray
    incidence: float  # degrees
    azimuth: float  # degrees
    class_label: str
    source_id: str

    def __post_init__(self):
        chip = np.asarray(self.chip, dtype=float)
        if chip.ndim != 2 or np.any(chip < 0) or not np.all(np.isfinite(chip)):
            raise ValueError("chip must be a finite nonnegative matrix")
        if not 0.0 <= self.incidence <= 90.0:
            raise ValueError(f"incidence {self.incidence} outside [0, 90] degrees")
        object.__setattr__(self, "chip", chip)

    @property
    def aspect(self) -> AspectAngles:
        return AspectAngles.from_degrees(self.incidence, self.azimuth)


class DatasetIndex:
    """Samples grouped by ``(class_label, incidence)``, each group sorted by azimuth."""

    def __init__(self, samples: Iterable[SarSample]):
        self.samples = tuple(samples)
        groups: dict = {}
        for s in self.samples:
            groups.setdefault((s.class_label, s.incidence), []).append(s)
        self.groups = {k: tuple(sorted(v, key=lambda s: (s.azimuth % 360.0, s.source_id)))
                       for k, v in sorted(groups.items())}

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def classes(self) -> list[str]:
        return sorted({k[0] for k in self.groups})

    def incidences(self, class_label: str) -> list[float]:
        return sorted(k[1] for k in self.groups if k[0] == class_label)

    def group(self, class_label: str, incidence: float) -> tuple:
        return self.groups[(class_label, incidence)]

    def of_class(self, class_label: str) -> list[SarSample]:
        if class_label not in self.classes:
            raise UnknownClass(class_label)
        return [s for k, g in self.groups.items() if k[0] == class_label for s in g]


# ---------------------------------------------------------------------------
# azimuth sampling


@dataclass
class SubsetReport:
    steps: int = 0
    skipped: int = 0


def _circular_gap(a, b):
    d = np.mod(np.asarray(a) - b, 360.0)
    return np.minimum(d, 360.0 - d)


def sample_subset(index: DatasetIndex, class_label: str, spacing: float, tolerance: float,
                  seed: int, report: Optional[SubsetReport] = None) -> list[SarSample]:
    """Pick roughly one sample every ``spacing`` degrees of azimuth per incidence angle.

    For each incidence group a random start ``phi0 ~ U(0, spacing)`` is drawn
    and the walk visits ``phi0, phi0 + spacing, ...`` below 360 degrees. At
    each stop one sample within ``tolerance`` (circular distance) is drawn at
    random; stops with no such sample are skipped and counted in ``report``.
    """
    if spacing <= 0 or tolerance < 0:
        raise ValueError("spacing must be positive and tolerance nonnegative")
    if class_label not in index.classes:
        raise UnknownClass(class_label)
    report = report if report is not None else SubsetReport()
    incs = index.incidences(class_label)
    streams = np.random.SeedSequence(int(seed) & (2**64 - 1)).spawn(len(incs))
    out = []
    for inc, ss in zip(incs, streams):
        rng = np.random.default_rng(ss)
        group = index.group(class_label, inc)
        az = np.array([s.azimuth for s in group])
        used = np.zeros(len(group), dtype=bool)
        phi = rng.uniform(0.0, spacing)
        while phi < 360.0:
            report.steps += 1
            hits = np.flatnonzero((_circular_gap(az, phi) <= tolerance) & ~used)
            if len(hits):
                k = int(rng.choice(hits))
                used[k] = True
                out.append(group[k])
            else:
                report.skipped += 1
            phi += spacing
    return out


# ---------------------------------------------------------------------------
# MSTAR Phoenix files

_HEADER_START = b"[PhoenixHeader"
_HEADER_END = b"[EndofPhoenixHeader]"


def _center_fit(a: np.ndarray, size: int = CHIP) -> np.ndarray:
    out = np.zeros((size, size), dtype=a.dtype)
    r, c = a.shape
    sr, dr = max(0, (r - size) // 2), max(0, (size - r) // 2)
    sc, dc = max(0, (c - size) // 2), max(0, (size - c) // 2)
    h, w = min(r, size), min(c, size)
    out[dr:dr + h, dc:dc + w] = a[sr:sr + h, sc:sc + w]
    return out


def parse_phoenix_header(blob: bytes) -> tuple[dict, int]:
    """Header key/value pairs and the byte offset of the image payload."""
    if not blob.startswith(_HEADER_START):
        raise MalformedHeader("missing Phoenix header")
    end = blob.find(_HEADER_END)
    if end < 0:
        raise MalformedHeader("unterminated Phoenix header")
    text = blob[:end].decode("ascii", errors="replace")
    fields = {}
    for line in text.splitlines()[1:]:
        if "=" in line:
            k, v = line.split("=", 1)
            fields[k.strip()] = v.strip()
    eol = blob.find(b"\n", end)
    offset = len(blob) if eol < 0 else eol + 1
    if "PhoenixHeaderLength" in fields:
        try:
            offset = int(fields["PhoenixHeaderLength"]) + int(fields.get("native_header_length", 0))
        except ValueError as exc:
            raise MalformedHeader(f"bad header length: {exc}") from None
    return fields, offset


def _field(fields: dict, *names, cast=float):
    for n in names:
        if n in fields:
            try:
                return cast(fields[n])
            except ValueError:
                raise MalformedHeader(f"header field {n}={fields[n]!r} is not numeric") from None
    raise MalformedHeader(f"header lacks {' / '.join(names)}")


def read_mstar_chip(blob: bytes, source_id: str = "", crop: bool = True) -> SarSample:
    """Parse one MSTAR chip; the phase block is read past and discarded."""
    fields, offset = parse_phoenix_header(blob)
    cols = _field(fields, "NumberOfColumns", cast=int)
    rows = _field(fields, "NumberOfRows", cast=int)
    azimuth = _field(fields, "TargetAz")
    if "Incidence" in fields:
        incidence = _field(fields, "Incidence")
    else:
        incidence = 90.0 - _field(fields, "DesiredDepression", "MeasuredDepression")
    need = offset + 2 * rows * cols * 4
    if len(blob) < need:
        raise TruncatedData(f"payload needs {need} bytes, file has {len(blob)}")
    mag = np.frombuffer(blob, dtype=">f4", count=rows * cols, offset=offset).reshape(rows, cols)
    mag = mag.astype(float)
    if crop:
        mag = _center_fit(mag)
    label = fields.get("TargetType", "unknown").strip()
    return SarSample(mag, incidence, azimuth, label, source_id or fields.get("Filename", ""))


def write_mstar_chip(sample: SarSample) -> bytes:
    """Serialise a sample as a Phoenix-header file (zero phase block)."""
    rows, cols = sample.chip.shape
    body = (f"NumberOfColumns= {cols}\nNumberOfRows= {rows}\nTargetAz= {sample.azimuth!r}\n"
            f"Incidence= {sample.incidence!r}\nTargetType= {sample.class_label}\n"
            f"Filename= {sample.source_id}\n")
    head = f"[PhoenixHeaderVer01.04]\n{body}[EndofPhoenixHeader]\n".encode("ascii")
    mag = np.asarray(sample.chip, dtype=">f4").tobytes()
    return head + mag + bytes(len(mag))


_NORMALISE = re.compile(r"[^a-z0-9]")


def _same_class(a: str, b: str) -> bool:
    return _NORMALISE.sub("", a.lower()) == _NORMALISE.sub("", b.lower())


def load_mstar_class(class_label: str, root: Optional[os.PathLike] = None) -> list[SarSample]:
    """All chips of one class below ``root`` (default: the ``MSTAR_DIR`` environment variable)."""
    root = Path(root or os.environ.get(MSTAR_ENV, ""))
    if not str(root) or not root.is_dir():
        raise FileNotFoundError(f"MSTAR directory {str(root)!r} not found")
    out = []
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        with open(path, "rb") as fh:
            if fh.read(len(_HEADER_START)) != _HEADER_START:
                continue
        sample = read_mstar_chip(path.read_bytes(), str(path.relative_to(root)))
        if _same_class(sample.class_label, class_label):
            out.append(sample)
    return out


# ---------------------------------------------------------------------------
# synthetic scenes


@dataclass(frozen=True)
class PointScatterer:
    x: float
    y: float
    amplitude: float = 1.0
    lobe_center: float = 0.0  # degrees of aspect azimuth
    lobe_width: float = math.inf  # degrees (Gaussian standard deviation)

    def gain(self, azimuth_deg) -> np.ndarray:
        if not math.isfinite(self.lobe_width):
            return np.ones_like(np.asarray(azimuth_deg, dtype=float))
        d = _circular_gap(azimuth_deg, self.lobe_center)
        return np.exp(-0.5 * (d / self.lobe_width) ** 2)


@dataclass(frozen=True)
class SyntheticTargetModel:
    name: str
    scatterers: tuple
    clutter_level: float = 0.0
    footprint: tuple = (6.0, 3.0)  # length along x, width along y (m)

    def __post_init__(self):
        if not self.scatterers:
            raise ValueError("a synthetic target needs at least one scatterer")
        if self.clutter_level < 0:
            raise ValueError("clutter_level must be nonnegative")


def render_synthetic_complex(target: SyntheticTargetModel, aspect: AspectAngles,
                             spec: SarSystemSpec, seed: int) -> ComplexImage:
    """Complex chip of a synthetic target plus complex Gaussian clutter.

    Amplitudes are scaled so a unit scatterer at its best range-bin phase
    peaks at 1; other phases lose up to about 8% to range scalloping.
    """
    ren = renderer_for(spec, aspect.incidence)
    az = math.degrees(aspect.azimuth)
    pts = np.array([(s.x, s.y) for s in target.scatterers])
    amp = np.array([s.amplitude * float(s.gain(az)) for s in target.scatterers]) / ren.peak
    img = ren.render(pts, amp, aspect.azimuth)
    if target.clutter_level > 0:
        rng = np.random.default_rng(int(seed) & (2**64 - 1))
        noise = rng.standard_normal(img.shape + (2,)) @ np.array([1.0, 1j]) / math.sqrt(2.0)
        img = img + target.clutter_level * noise
    return ComplexImage(img, spec.ground_sample_distance)


def render_synthetic_sample(target: SyntheticTargetModel, aspect: AspectAngles,
                            spec: SarSystemSpec, seed: int, source_id: str = "") -> SarSample:
    img = render_synthetic_complex(target, aspect, spec, seed)
    return SarSample(img.magnitude, math.degrees(aspect.incidence), math.degrees(aspect.azimuth),
                     target.name, source_id)


def default_targets(clutter_level: float = 0.02) -> list[SyntheticTargetModel]:
    """Four vehicle-sized point constellations with distinct layouts and lobes."""
    P = PointScatterer
    return [
        SyntheticTargetModel("alpha", (
            P(-3.0, -1.5, 1.0), P(3.0, 1.5, 0.9), P(0.0, 0.0, 0.6, 90.0, 40.0),
        ), clutter_level, (6.0, 3.0)),
        SyntheticTargetModel("bravo", (
            P(-3.0, 0.0, 0.8), P(0.0, 0.0, 1.0), P(3.0, 0.0, 0.8), P(1.5, 1.5, 0.6, 180.0, 50.0),
        ), clutter_level, (6.0, 3.0)),
        SyntheticTargetModel("charlie", (
            P(-3.5, -1.8, 0.7), P(-3.5, 1.8, 0.7), P(3.5, -1.8, 0.7), P(3.5, 1.8, 0.7),
            P(0.0, 0.0, 1.0, 270.0, 60.0),
        ), clutter_level, (7.0, 3.6)),
        SyntheticTargetModel("delta", (
            P(-2.5, -1.2, 1.0), P(2.5, -1.2, 0.9), P(0.0, 1.2, 0.8), P(-1.0, 1.2, 0.5, 45.0, 45.0),
            P(1.0, -1.2, 0.6, 225.0, 45.0),
        ), clutter_level, (5.0, 2.4)),
    ]


def extended_target(name: str, length: float = 6.0, width: float = 3.0, spacing: float = 0.45,
                    clutter_level: float = 0.02, seed: int = 0) -> SyntheticTargetModel:
    """Target whose footprint is filled with a grid of random-amplitude scatterers.

    Unlike the sparse constellations of :func:`default_targets`, the bright
    region is connected, which is what box estimation expects of a vehicle.
    """
    rng = np.random.default_rng(seed)
    xs = np.arange(-0.5 * length, 0.5 * length + 1e-9, spacing)
    ys = np.arange(-0.5 * width, 0.5 * width + 1e-9, spacing)
    pts = tuple(PointScatterer(float(x), float(y), float(rng.uniform(0.3, 1.0)))
                for x in xs for y in ys)
    return SyntheticTargetModel(name, pts, clutter_level, (length, width))


def build_synthetic_dataset(targets: Optional[Sequence[SyntheticTargetModel]] = None,
                            spec: SarSystemSpec = SarSystemSpec(), incidence_deg: float = 75.0,
                            azimuth_step: float = 1.0, azimuth_offset: float = 0.0,
                            seed: int = 0) -> DatasetIndex:
    """Dense synthetic dataset: every target at every ``azimuth_step`` degrees."""
    targets = default_targets() if targets is None else list(targets)
    n = int(round(360.0 / azimuth_step))
    seeds = np.random.SeedSequence(int(seed) & (2**64 - 1)).generate_state(len(targets) * n)
    out = []
    for t_i, t in enumerate(targets):
        for k in range(n):
            az = (azimuth_offset + k * azimuth_step) % 360.0
            aspect = AspectAngles.from_degrees(incidence_deg, az)
            sid = f"{t.name}_{incidence_deg:g}_{az:08.3f}"
            out.append(render_synthetic_sample(t, aspect, spec, int(seeds[t_i * n + k]), sid))
    return DatasetIndex(out)


def footprint_rect_pixels(target: SyntheticTargetModel, azimuth_deg: float,
                          spec: SarSystemSpec = SarSystemSpec()):
    """Ground-truth footprint of a synthetic target as ``(cx, cy, w, h, rotation)`` in pixels.

    Pixel coordinates are ``(col, row)`` with the rotation measured from the
    column axis toward the row axis. The target's x axis maps to the rows at
    zero azimuth and turns with the aspect azimuth.
    """
    gr, ga = spec.ground_sample_distance
    c = float(spec.chip_size // 2)
    return (c, c, target.footprint[0] / math.sqrt(gr * ga), target.footprint[1] / math.sqrt(gr * ga),
            0.5 * math.pi + math.radians(azimuth_deg))


# ---------------------------------------------------------------------------
# persistence


def save_dataset(index: DatasetIndex, directory: os.PathLike) -> Path:
    """Write chips as CIMG files plus an ``index.jsonl`` manifest."""
    d = Path(directory)
    (d / "chips").mkdir(parents=True, exist_ok=True)
    lines = []
    for i, s in enumerate(index.samples):
        rel = f"chips/{i:06d}.cimg"
        write_cimg(ComplexImage(s.chip.astype(np.complex128)), d / rel)
        lines.append(json.dumps({"class_label": s.class_label, "incidence_deg": s.incidence,
                                 "azimuth_deg": s.azimuth, "path": rel,
                                 "source_id": s.source_id}, sort_keys=True))
    (d / "index.jsonl").write_text("\n".join(lines) + "\n")
    return d


def load_dataset(directory: os.PathLike) -> DatasetIndex:
    d = Path(directory)
    path = d / "index.jsonl"
    if not path.is_file():
        raise FileNotFoundError(f"no index.jsonl in {d}")
    out = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        chip = read_cimg(d / rec["path"]).pixels.real
        out.append(SarSample(np.maximum(chip, 0.0), float(rec["incidence_deg"]),
                             float(rec["azimuth_deg"]), rec["class_label"],
                             rec.get("source_id", rec["path"])))
    return DatasetIndex(out)


@dataclass
class SplitDatasets:
    train: DatasetIndex
    test: DatasetIndex
    targets: list = field(default_factory=list)


def synthetic_splits(spec: SarSystemSpec = SarSystemSpec(), clutter_level: float = 0.02,
                     seed: int = 0) -> SplitDatasets:
    """Dense train set on whole degrees and test set on half degrees with fresh clutter."""
    targets = default_targets(clutter_level)
    train = build_synthetic_dataset(targets, spec, seed=seed)
    test = build_synthetic_dataset(targets, spec, azimuth_offset=0.5, seed=seed + 1)
    return SplitDatasets(train, test, targets)
