"""End-to-end attack experiments on a prepared dataset.

Ties the pieces together: transmit-amplitude calibration against the data,
azimuth-spaced training subsets, reflector-layout optimisation, a random
placement baseline and the known-aspect single-reflector protocol.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .attack import (
    DEFAULT_SCENE,
    AttackParams,
    KnownAspectAttack,
    Observation,
    ObservationSet,
    adversarial_fn,
    attack_loss,
    known_aspect_loss,
)
from .classify import (
    FoolingReport,
    FoolingResult,
    TargetModel,
    fooling_rate,
    partial_knowledge_evaluate,
    predict,
)
from .data import DatasetIndex, sample_subset
from .imaging import SarSystemSpec, calibrate_tx_amplitude
from .optimize import FREE, AngleVariant, Bounds, DEConfig, OptimizeTrace, minimize_de

log = logging.getLogger(__name__)

TRAIN_SPACING = 10.0
TRAIN_TOLERANCE = 2.0


def dataset_peak(index: DatasetIndex) -> float:
    """Mean over classes of the per-class mean maximum pixel."""
    per_class = [np.mean([s.chip.max() for s in index.of_class(c)]) for c in index.classes]
    return float(np.mean(per_class))


def calibrated_spec(index: DatasetIndex, spec: SarSystemSpec = SarSystemSpec(),
                    incidence_deg: Optional[float] = None) -> SarSystemSpec:
    """``spec`` with the transmit amplitude matched to the dataset's peak intensity.

    A boresight trihedral then focuses to the mean per-class maximum pixel.
    """
    if incidence_deg is None:
        incidence_deg = float(np.median([s.incidence for s in index.samples]))
    a = calibrate_tx_amplitude(dataset_peak(index), spec, math.radians(incidence_deg))
    return spec.replace(tx_amplitude=a)


def observations(samples: Sequence) -> ObservationSet:
    return ObservationSet([Observation(s.aspect, s.chip, s.class_label) for s in samples])


@dataclass
class AttackResult:
    class_label: str
    params: AttackParams
    trace: OptimizeTrace
    training_ids: list = field(default_factory=list)

    def attack_fn(self, spec: SarSystemSpec):
        return adversarial_fn(self.params.reflectors(), spec)


def optimize_attack(model: TargetModel, train: DatasetIndex, class_label: str,
                    spec: SarSystemSpec, reflector_count: int = 4, configuration: int = FREE,
                    de: DEConfig = DEConfig(), spacing: float = TRAIN_SPACING,
                    tolerance: float = TRAIN_TOLERANCE, workers: int = 1,
                    callback: Optional[Callable] = None) -> AttackResult:
    """Optimise one reflector layout against ``class_label`` on an azimuth-spaced subset.

    ``spec`` must already carry the calibrated transmit amplitude. Reflectors
    that leave the imaged swath at some aspect simply drop out of that view.
    """
    subset = sample_subset(train, class_label, spacing, tolerance, seed=de.seed)
    obs = observations(subset)
    variant = AngleVariant(reflector_count, configuration, DEFAULT_SCENE, DEFAULT_SCENE)

    def objective(z):
        params = AttackParams(reflector_count, variant.expand(z))
        return attack_loss(params, obs, model, class_label, spec, out_of_swath="drop")

    trace = minimize_de(objective, variant.bounds(), de, workers, callback)
    params = AttackParams(reflector_count, variant.expand(trace.best_params))
    return AttackResult(class_label, params, trace, [s.source_id for s in subset])


def random_params(reflector_count: int, rng: np.random.Generator) -> AttackParams:
    b = AngleVariant(reflector_count, FREE).bounds()
    return AttackParams(reflector_count, b.lower + rng.random(b.dimension) * b.span)


def random_baseline(model: TargetModel, samples: Sequence, class_label: str,
                    spec: SarSystemSpec, reflector_count: int = 4, draws: int = 20,
                    seed: int = 0) -> tuple[FoolingResult, AttackParams]:
    """Best fooling result over ``draws`` uniformly random layouts."""
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(draws):
        p = random_params(reflector_count, rng)
        r = fooling_rate(model, adversarial_fn(p.reflectors(), spec), samples, class_label)
        if best is None or r.rate > best[0].rate:
            best = (r, p)
    return best


def evaluate(model: TargetModel, results: Sequence[AttackResult], samples: Sequence,
             spec: SarSystemSpec) -> FoolingReport:
    return FoolingReport({r.class_label: fooling_rate(model, r.attack_fn(spec), samples,
                                                      r.class_label) for r in results})


# ---------------------------------------------------------------------------
# known aspect angles


KNOWN_ASPECT_DE = DEConfig(population_size=40, max_iterations=15)


@dataclass
class KnownAspectResult:
    sample: object
    attack: KnownAspectAttack
    position: np.ndarray
    trace: OptimizeTrace

    def reflectors(self):
        return [self.attack.reflector(*self.position)]

    def attack_fn(self, spec: SarSystemSpec):
        return adversarial_fn(self.reflectors(), spec)


def optimize_known_aspect(model: TargetModel, sample, spec: SarSystemSpec,
                          de: DEConfig = KNOWN_ASPECT_DE, workers: int = 1) -> KnownAspectResult:
    """Place one reflector aimed at ``sample``'s aspect to fool the model on that sample."""
    kaa = KnownAspectAttack(math.radians(sample.azimuth % 360.0), math.radians(sample.incidence))
    obs = Observation(sample.aspect, sample.chip, sample.class_label)
    h = 0.5 * DEFAULT_SCENE
    bounds = Bounds(np.array([-h, -h]), np.array([h, h]))
    trace = minimize_de(lambda z: known_aspect_loss(kaa, z, obs, model, sample.class_label, spec),
                        bounds, de, workers)
    return KnownAspectResult(sample, kaa, np.asarray(trace.best_params), trace)


def known_aspect_candidates(model: TargetModel, index: DatasetIndex, class_label: str,
                            spacing: float, seed: int = 0) -> list:
    """Clean-correct samples of a class, roughly ``spacing`` degrees apart."""
    subset = sample_subset(index, class_label, spacing, TRAIN_TOLERANCE, seed=seed)
    if not subset:
        return []
    k = list(model.classes).index(class_label)
    ok = predict(model, np.stack([s.chip for s in subset])) == k
    return [s for s, good in zip(subset, ok) if good]


@dataclass
class UncertaintySweep:
    deltas_deg: list
    per_class: dict  # class -> list of mean rates, one per delta

    @property
    def average(self) -> list:
        return [float(np.mean([v[i] for v in self.per_class.values()]))
                for i in range(len(self.deltas_deg))]


def uncertainty_sweep(model: TargetModel, pool: DatasetIndex, spec: SarSystemSpec,
                      deltas_deg: Sequence[float] = (0.0, 22.5, 45.0, 90.0),
                      spacing: float = 30.0, seed: int = 0,
                      de: DEConfig = KNOWN_ASPECT_DE) -> UncertaintySweep:
    """Known-aspect attacks trained on single samples, evaluated inside growing windows.

    For each class, samples roughly ``spacing`` degrees apart each get their
    own reflector; each attack is scored over the pool samples whose aspect
    lies within ``delta`` of the training aspect, and per-class rates are the
    mean over that class's attacks.
    """
    per_class = {}
    for c in pool.classes:
        rates = [[] for _ in deltas_deg]
        for sample in known_aspect_candidates(model, pool, c, spacing, seed):
            res = optimize_known_aspect(model, sample, spec, de)
            atk = res.attack_fn(spec)
            for i, d in enumerate(deltas_deg):
                r = partial_knowledge_evaluate(res.attack.estimated_azimuth,
                                               res.attack.estimated_incidence, math.radians(d),
                                               pool.of_class(c), model, c, atk)
                rates[i].append(r.rate)
        per_class[c] = [float(np.mean(r)) if r else 0.0 for r in rates]
    return UncertaintySweep(list(deltas_deg), per_class)
