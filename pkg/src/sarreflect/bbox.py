"""Target bounding boxes from azimuth-aligned composites.

Pixel coordinates are ``(x, y) = (col, row)`` with the row index growing
toward the radar, so the bottom of a chip is the side of the target facing
the sensor. Rotations are measured from the column axis toward the row axis.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull

from .geometry import clip_convex_2d


class EmptyGroup(ValueError):
    pass


class NoForeground(ValueError):
    pass


@dataclass(frozen=True)
class RotatedRect:
    cx: float
    cy: float
    width: float
    height: float
    rotation: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("rectangle sides must be positive")

    def corners(self) -> np.ndarray:
        """Corner points ``(x, y)`` in counter-clockwise order of the (x, y) frame."""
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        u = np.array([c, s]) * 0.5 * self.width
        v = np.array([-s, c]) * 0.5 * self.height
        ctr = np.array([self.cx, self.cy])
        return np.array([ctr - u - v, ctr + u - v, ctr + u + v, ctr - u + v])

    @property
    def area(self) -> float:
        return self.width * self.height

    def moved(self, cx: float, cy: float, rotation: float | None = None) -> "RotatedRect":
        return RotatedRect(cx, cy, self.width, self.height,
                           self.rotation if rotation is None else rotation)


@dataclass(frozen=True)
class BBoxConfig:
    threshold: float = 0.7
    vertical_exponent: float = 1.5
    distance_exponent: float = 0.5
    distance_weight: float = 0.1
    max_shift: tuple = (32, 32)

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if self.vertical_exponent <= 0 or self.distance_exponent <= 0:
            raise ValueError("exponents must be positive")
        if self.distance_weight < 0:
            raise ValueError("distance_weight must be nonnegative")


def iou(a: RotatedRect, b: RotatedRect) -> float:
    """Intersection over union of two rotated rectangles."""
    inter = clip_convex_2d(a.corners(), b.corners())
    if len(inter) < 3:
        return 0.0
    x, y = inter[:, 0], inter[:, 1]
    ai = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    return float(ai / (a.area + b.area - ai))


# ---------------------------------------------------------------------------
# composite and reference rectangle


def log_normalize(image: np.ndarray, floor_db: float = -40.0) -> np.ndarray:
    """Log scale (floored ``floor_db`` below the maximum) and min-max normalise to [0, 1]."""
    image = np.asarray(image, dtype=float)
    peak = image.max()
    if peak <= 0:
        return np.zeros_like(image)
    with np.errstate(divide="ignore"):
        db = np.maximum(20.0 * np.log10(image / peak), floor_db)
    lo, hi = db.min(), db.max()
    return (db - lo) / (hi - lo) if hi > lo else np.zeros_like(db)


def rotate_chip(chip: np.ndarray, angle: float) -> np.ndarray:
    """Rotate chip content by ``angle`` (radians, col toward row) about the chip centre, bilinear."""
    chip = np.asarray(chip, dtype=float)
    c, s = math.cos(angle), math.sin(angle)
    centre = np.array([chip.shape[0] // 2, chip.shape[1] // 2], dtype=float)
    # output (row, col) samples input at R(-angle) applied to the offset; in (row, col)
    # order the (x=col, y=row) rotation matrix is transposed
    inv = np.array([[c, -s], [s, c]])
    offset = centre - inv @ centre
    return ndimage.affine_transform(chip, inv, offset=offset, order=1, mode="constant", cval=0.0)


def composite_image(samples: Sequence, floor_db: float = -40.0) -> np.ndarray:
    """Mean of azimuth-aligned chips (rotated by minus their azimuth), log-normalised."""
    samples = list(samples)
    if not samples:
        raise EmptyGroup("composite needs at least one sample")
    acc = np.zeros_like(np.asarray(samples[0].chip, dtype=float))
    for smp in samples:
        acc += rotate_chip(smp.chip, -math.radians(smp.azimuth))
    return log_normalize(acc / len(samples), floor_db)


def min_area_rect(points: np.ndarray) -> RotatedRect:
    """Minimum-area enclosing rectangle by rotating calipers over the convex hull.

    The width is the longer side and the rotation lies in ``[-pi/2, pi/2)``.
    """
    pts = np.asarray(points, dtype=float)
    hull = pts[ConvexHull(pts).vertices]
    best = None
    for i in range(len(hull)):
        e = hull[(i + 1) % len(hull)] - hull[i]
        ang = math.atan2(e[1], e[0])
        c, s = math.cos(ang), math.sin(ang)
        proj = hull @ np.array([[c, -s], [s, c]])
        lo, hi = proj.min(axis=0), proj.max(axis=0)
        area = float(np.prod(hi - lo))
        if best is None or area < best[0] - 1e-12:
            best = (area, ang, lo, hi)
    _, ang, lo, hi = best
    mid = 0.5 * (lo + hi)
    c, s = math.cos(ang), math.sin(ang)
    ctr = np.array([[c, -s], [s, c]]) @ mid
    w, h = hi - lo
    if h > w:
        w, h, ang = h, w, ang + 0.5 * math.pi
    ang = (ang + 0.5 * math.pi) % math.pi - 0.5 * math.pi
    return RotatedRect(float(ctr[0]), float(ctr[1]), float(w), float(h), float(ang))


def reference_rect(composite: np.ndarray, threshold: float = 0.7) -> RotatedRect:
    """Minimum-area rectangle around the largest connected region above ``threshold``."""
    mask = np.asarray(composite) >= threshold
    labels, n = ndimage.label(mask)
    if n == 0:
        raise NoForeground(f"no pixel reaches the threshold {threshold}")
    sizes = ndimage.sum_labels(mask, labels, index=np.arange(1, n + 1))
    rows, cols = np.nonzero(labels == int(np.argmax(sizes)) + 1)
    # use pixel corners so a single pixel has unit extent
    pts = np.concatenate([np.stack([cols + dx, rows + dy], axis=1)
                          for dx in (-0.5, 0.5) for dy in (-0.5, 0.5)])
    return min_area_rect(pts)


# ---------------------------------------------------------------------------
# per-sample localisation


def preprocess(chip: np.ndarray, threshold: float = 0.5, gamma: float = 1.5,
               floor_db: float = -40.0) -> np.ndarray:
    """Log scale, zero values below ``threshold``, then raise to ``gamma``."""
    x = log_normalize(chip, floor_db)
    x = np.where(x >= threshold, x, 0.0)
    return x ** gamma


class BoxLoss:
    """Pixel plus distance loss of a fixed-size rectangle over integer centre shifts."""

    def __init__(self, image: np.ndarray, ref: RotatedRect, cfg: BBoxConfig):
        self.image = np.asarray(image, dtype=float)
        self.ref = ref
        self.cfg = cfg
        # kernel of the rectangle at the reference centre: mask times vertical weight
        rows, cols = self.image.shape
        corners = ref.corners()
        x0 = int(math.floor(corners[:, 0].min())) - 1
        x1 = int(math.ceil(corners[:, 0].max())) + 1
        y0 = int(math.floor(corners[:, 1].min())) - 1
        y1 = int(math.ceil(corners[:, 1].max())) + 1
        yy, xx = np.mgrid[y0:y1 + 1, x0:x1 + 1].astype(float)
        c, s = math.cos(ref.rotation), math.sin(ref.rotation)
        du, dv = xx - ref.cx, yy - ref.cy
        inside = ((np.abs(du * c + dv * s) <= 0.5 * ref.width)
                  & (np.abs(-du * s + dv * c) <= 0.5 * ref.height))
        ymin, ymax = corners[:, 1].min(), corners[:, 1].max()
        d = np.clip((yy - ymin) / (ymax - ymin), 0.0, 1.0)
        self.kernel = np.where(inside, d ** cfg.vertical_exponent, 0.0)
        self.count = max(int(inside.sum()), 1)
        self.origin = (y0, x0)
        self.d_max = math.hypot(*cfg.max_shift)

    def pixel_loss(self, dx: int, dy: int) -> float:
        y0, x0 = self.origin[0] + dy, self.origin[1] + dx
        kh, kw = self.kernel.shape
        rows, cols = self.image.shape
        ys, xs = max(0, y0), max(0, x0)
        ye, xe = min(rows, y0 + kh), min(cols, x0 + kw)
        if ys >= ye or xs >= xe:
            return 0.0
        patch = self.image[ys:ye, xs:xe]
        k = self.kernel[ys - y0:ye - y0, xs - x0:xe - x0]
        return -float(np.sum(patch * k)) / self.count

    def distance_loss(self, dx: int, dy: int) -> float:
        return ((dx * dx + dy * dy) / self.d_max) ** self.cfg.distance_exponent

    def __call__(self, dx: int, dy: int) -> float:
        return self.pixel_loss(dx, dy) + self.cfg.distance_weight * self.distance_loss(dx, dy)


def _argmin(values: dict) -> tuple:
    # ties: smaller shift norm, then row-major order
    return min(values, key=lambda k: (values[k], k[0] ** 2 + k[1] ** 2, k[1], k[0]))


def search_exhaustive(loss: BoxLoss) -> tuple[int, int]:
    xm, ym = loss.cfg.max_shift
    vals = {(dx, dy): loss(dx, dy) for dy in range(-ym, ym + 1) for dx in range(-xm, xm + 1)}
    return _argmin(vals)


def search_coarse_to_fine(loss: BoxLoss, stride: int = 4, keep: int = 4) -> tuple[int, int]:
    """Grid search at ``stride`` pixels, then unit-stride refinement around the best cells."""
    xm, ym = loss.cfg.max_shift
    cache: dict = {}

    def f(dx, dy):
        if (dx, dy) not in cache:
            cache[(dx, dy)] = loss(dx, dy)
        return cache[(dx, dy)]

    xs = sorted(set(list(range(-xm, xm + 1, stride)) + [0, xm]))
    ys = sorted(set(list(range(-ym, ym + 1, stride)) + [0, ym]))
    coarse = {(dx, dy): f(dx, dy) for dy in ys for dx in xs}
    seeds = sorted(coarse, key=lambda k: (coarse[k], k[0] ** 2 + k[1] ** 2, k[1], k[0]))[:keep]
    h = stride - 1
    for sx, sy in seeds:
        for dy in range(max(-ym, sy - h), min(ym, sy + h) + 1):
            for dx in range(max(-xm, sx - h), min(xm, sx + h) + 1):
                f(dx, dy)
    return _argmin(cache)


def localize_box(chip: np.ndarray, azimuth_deg: float, ref: RotatedRect,
                 cfg: BBoxConfig = BBoxConfig(), method: str = "exhaustive",
                 preprocessed: bool = False) -> RotatedRect:
    """Place the reference rectangle on one chip.

    The rectangle keeps the reference size, turns with the sample azimuth
    and is shifted to minimise pixel loss plus weighted distance loss.
    """
    rot = ref.rotation + math.radians(azimuth_deg)
    img = chip if preprocessed else preprocess(chip)
    centre = (chip.shape[1] // 2, chip.shape[0] // 2)
    # the reference centre in the aligned composite maps through the same rotation
    c, s = math.cos(math.radians(azimuth_deg)), math.sin(math.radians(azimuth_deg))
    ox, oy = ref.cx - centre[0], ref.cy - centre[1]
    start = ref.moved(centre[0] + c * ox - s * oy, centre[1] + s * ox + c * oy, rot)
    loss = BoxLoss(img, start, cfg)
    if method == "exhaustive":
        dx, dy = search_exhaustive(loss)
    elif method == "coarse":
        dx, dy = search_coarse_to_fine(loss)
    else:
        raise ValueError(f"unknown search method {method!r}")
    return start.moved(start.cx + dx, start.cy + dy)


def write_boxes_csv(rows: Iterable[tuple[str, RotatedRect]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source_id", "cx", "cy", "w", "h", "rot_deg"])
        for sid, r in rows:
            w.writerow([sid, repr(r.cx), repr(r.cy), repr(r.width), repr(r.height),
                        repr(math.degrees(r.rotation))])
