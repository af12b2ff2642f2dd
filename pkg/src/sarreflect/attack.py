"""Reflector parameter vector, adversarial composition and attack losses.

The parameter vector of an ``m``-reflector attack is
``[x_1..x_m, y_1..y_m, theta_1..theta_m, phi_1]``; reflector ``i`` points its
boresight at azimuth ``phi_1 + (i - 1) 2 pi / m`` so the set covers every
viewing azimuth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .classify import TargetModel, check_probabilities, cross_entropy
from .geometry import (
    BORESIGHT_AZIMUTH,
    HALF_PI,
    TWO_PI,
    AspectAngles,
    ReflectorConfig,
)
from .imaging import ComplexImage, GeometryMismatch, SarSystemSpec, renderer_for

DEFAULT_SCENE = 38.4  # ground footprint of a 128-pixel chip at 0.3 m


class ConstraintViolation(ValueError):
    def __init__(self, violations: Sequence[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


@dataclass(frozen=True)
class AttackParams:
    reflector_count: int
    theta: np.ndarray
    scene_width: float = DEFAULT_SCENE
    scene_height: float = DEFAULT_SCENE

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float).reshape(-1).copy())
        self.theta.setflags(write=False)

    @property
    def m(self) -> int:
        return self.reflector_count

    @property
    def x(self) -> np.ndarray:
        return self.theta[: self.m]

    @property
    def y(self) -> np.ndarray:
        return self.theta[self.m: 2 * self.m]

    @property
    def incidences(self) -> np.ndarray:
        return self.theta[2 * self.m: 3 * self.m]

    @property
    def phi1(self) -> float:
        return float(self.theta[3 * self.m])

    @property
    def azimuths(self) -> np.ndarray:
        return self.phi1 + np.arange(self.m) * (TWO_PI / self.m)

    def violations(self) -> list[str]:
        m = self.reflector_count
        out = []
        if m < 1:
            return [f"reflector count {m} must be positive"]
        if self.theta.size != 3 * m + 1:
            return [f"theta has {self.theta.size} entries, expected {3 * m + 1}"]
        hw, hh = 0.5 * self.scene_width, 0.5 * self.scene_height
        for i in range(m):
            if not -hw <= self.x[i] <= hw:
                out.append(f"x_{i + 1}={self.x[i]:.6g} outside [{-hw:g}, {hw:g}]")
            if not -hh <= self.y[i] <= hh:
                out.append(f"y_{i + 1}={self.y[i]:.6g} outside [{-hh:g}, {hh:g}]")
            if not 0.0 <= self.incidences[i] <= HALF_PI:
                out.append(f"theta_{i + 1}={self.incidences[i]:.6g} outside [0, pi/2]")
        if not 0.0 <= self.phi1 <= TWO_PI / m:
            out.append(f"phi_1={self.phi1:.6g} outside [0, 2pi/{m}]")
        return out

    def bounds(self):
        from .optimize import AngleVariant

        return AngleVariant(self.m, 1, self.scene_width, self.scene_height).bounds()

    def reflectors(self) -> list[ReflectorConfig]:
        """Per-reflector configurations (raises :class:`ConstraintViolation`)."""
        bad = self.violations()
        if bad:
            raise ConstraintViolation(bad)
        return [ReflectorConfig(float(a), float(b), float(t), float(p))
                for a, b, t, p in zip(self.x, self.y, self.incidences, self.azimuths)]

    @classmethod
    def from_reflectors(cls, reflectors: Sequence[ReflectorConfig],
                        scene_width: float = DEFAULT_SCENE,
                        scene_height: float = DEFAULT_SCENE) -> "AttackParams":
        r = list(reflectors)
        theta = np.concatenate([[c.x for c in r], [c.y for c in r], [c.incidence for c in r],
                                [r[0].azimuth]])
        return cls(len(r), theta, scene_width, scene_height)

    def to_text(self) -> str:
        lines = [f"reflector_count = {self.m}", f"scene_width = {self.scene_width!r}",
                 f"scene_height = {self.scene_height!r}",
                 "# index x_m y_m theta_deg phi_deg"]
        for i, (a, b, t, p) in enumerate(zip(self.x, self.y, self.incidences, self.azimuths)):
            lines.append(f"{i + 1} {float(a)!r} {float(b)!r} {math.degrees(t)!r} "
                         f"{math.degrees(p)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "AttackParams":
        meta, rows = {}, []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                k, v = (s.strip() for s in line.split("=", 1))
                meta[k] = float(v)
            else:
                rows.append([float(v) for v in line.split()])
        if not rows:
            raise ValueError("no reflector lines")
        rows.sort(key=lambda r: r[0])
        a = np.array(rows)
        theta = np.concatenate([a[:, 1], a[:, 2], np.radians(a[:, 3]), np.radians(a[:, 4:5])[0]])
        m = int(meta.get("reflector_count", len(rows)))
        if m != len(rows):
            raise ValueError(f"reflector_count {m} does not match {len(rows)} lines")
        return cls(m, theta, meta.get("scene_width", DEFAULT_SCENE),
                   meta.get("scene_height", DEFAULT_SCENE))


def expand_params(params: AttackParams) -> list[ReflectorConfig]:
    return params.reflectors()


def boresight_azimuths(params: AttackParams, aspect_azimuth: float) -> np.ndarray:
    """Each reflector's boresight-relative azimuth for a viewing azimuth, wrapped to [0, 2pi)."""
    return np.mod(aspect_azimuth - (params.azimuths - BORESIGHT_AZIMUTH), TWO_PI)


def covers(params: AttackParams, aspect_azimuth: float) -> bool:
    """True when some reflector's relative azimuth lies in its response window [0, pi/2]."""
    return bool(np.any(boresight_azimuths(params, aspect_azimuth) <= HALF_PI + 1e-12))


# ---------------------------------------------------------------------------
# composition and losses


def _magnitude(chip) -> np.ndarray:
    if isinstance(chip, ComplexImage):
        return chip.magnitude
    a = np.asarray(chip)
    return np.abs(a) if np.iscomplexobj(a) else a.astype(float, copy=False)


def compose_adversarial(clean, perturbation) -> np.ndarray:
    """Adversarial magnitude chip: clean magnitude plus perturbation magnitude."""
    c = _magnitude(clean)
    p = _magnitude(perturbation)
    if c.shape != p.shape:
        raise GeometryMismatch(f"clean chip {c.shape} and perturbation {p.shape} differ")
    return c + p


def compose_complex(clean: ComplexImage, perturbation: ComplexImage) -> np.ndarray:
    """Magnitude of the complex sum, for fully synthetic scenes."""
    return (clean + perturbation).magnitude


@dataclass(frozen=True)
class Observation:
    """One view of the scene: aspect, clean chip and where the reflector origin sits.

    ``anchor_xy`` is the ground position (m, scene frame) of the target
    bounding-box centre that reflector positions are measured from.
    """

    aspect: AspectAngles
    chip: np.ndarray
    class_label: str
    anchor_xy: tuple = (0.0, 0.0)


@dataclass
class ObservationSet:
    observations: list = field(default_factory=list)

    def __post_init__(self):
        if not self.observations:
            raise ValueError("an observation set needs at least one observation")
        shapes = {_magnitude(o.chip).shape for o in self.observations}
        if len(shapes) != 1:
            raise GeometryMismatch(f"observation chips differ in shape: {sorted(shapes)}")

    def __len__(self) -> int:
        return len(self.observations)

    def __iter__(self):
        return iter(self.observations)


def render_perturbation(reflectors: Sequence[ReflectorConfig], aspect: AspectAngles,
                        spec: SarSystemSpec, anchor_xy=(0.0, 0.0),
                        out_of_swath: str = "raise") -> ComplexImage:
    """Complex perturbation chip rendered with the cached point-spread renderer."""
    return renderer_for(spec, aspect.incidence).render_reflectors(
        reflectors, aspect, anchor_xy, out_of_swath=out_of_swath, tx_amplitude=spec.tx_amplitude)


def adversarial_chips(reflectors: Sequence[ReflectorConfig], observations: ObservationSet,
                      spec: SarSystemSpec, out_of_swath: str = "raise") -> np.ndarray:
    return np.stack([
        compose_adversarial(o.chip, render_perturbation(reflectors, o.aspect, spec, o.anchor_xy,
                                                        out_of_swath))
        for o in observations])


def mean_cross_entropy(model: TargetModel, chips: np.ndarray, class_label: str) -> float:
    k = list(model.classes).index(class_label)
    p = check_probabilities(model.predict_proba(chips))
    return math.fsum(cross_entropy(row, k) for row in p) / len(p)


def attack_loss(params: AttackParams, observations: ObservationSet, model: TargetModel,
                class_label: str, spec: SarSystemSpec, out_of_swath: str = "raise") -> float:
    """Negative mean cross-entropy of the adversarial chips (lower is a stronger attack)."""
    chips = adversarial_chips(params.reflectors(), observations, spec, out_of_swath)
    return -mean_cross_entropy(model, chips, class_label)


@dataclass(frozen=True)
class KnownAspectAttack:
    """Single reflector aimed at an estimated aspect; only its position is free."""

    estimated_azimuth: float
    estimated_incidence: float
    uncertainty: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.uncertainty <= HALF_PI + 1e-12:
            raise ValueError("uncertainty must lie in [0, pi/2]")
        if not 0.0 <= self.estimated_incidence <= HALF_PI:
            raise ValueError("estimated incidence must lie in [0, pi/2]")

    def reflector(self, x: float, y: float) -> ReflectorConfig:
        return ReflectorConfig(float(x), float(y), self.estimated_incidence,
                               self.estimated_azimuth)


def known_aspect_loss(kaa: KnownAspectAttack, position, observation: Observation,
                      model: TargetModel, class_label: str, spec: SarSystemSpec) -> float:
    """Attack loss of a single reflector at ``position`` on one training observation."""
    refl = [kaa.reflector(*np.asarray(position, dtype=float))]
    chips = adversarial_chips(refl, ObservationSet([observation]), spec)
    return -mean_cross_entropy(model, chips, class_label)


def adversarial_fn(reflectors: Sequence[ReflectorConfig], spec: SarSystemSpec,
                   anchor: Optional[callable] = None, out_of_swath: str = "drop"):
    """Per-sample attack callable for fooling-rate evaluation.

    ``anchor(sample)`` gives the reflector origin for a sample (scene centre by
    default).
    """
    reflectors = list(reflectors)

    def attack(sample) -> np.ndarray:
        aspect = AspectAngles.from_degrees(sample.incidence, sample.azimuth)
        xy = (0.0, 0.0) if anchor is None else anchor(sample)
        pert = render_perturbation(reflectors, aspect, spec, xy, out_of_swath)
        return compose_adversarial(sample.chip, pert)

    return attack
