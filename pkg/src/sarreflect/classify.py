"""Target models, cross-entropy and fooling-rate evaluation.

A target model is anything with a ``classes`` sequence and a
``predict_proba(chips)`` method mapping an ``(N, rows, cols)`` stack of
magnitude chips to an ``(N, len(classes))`` array of probabilities.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import subprocess
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .geometry import wrap_azimuth
from .imaging import ComplexImage, encode_cimg

log = logging.getLogger(__name__)

PROBABILITY_FLOOR = 1e-12
SUM_TOLERANCE = 1e-6


class InvalidProbabilities(ValueError):
    pass


class EmptyClass(ValueError):
    pass


class EmptyEvaluationSet(ValueError):
    pass


class TargetModel(Protocol):
    classes: Sequence[str]

    def predict_proba(self, chips: np.ndarray) -> np.ndarray: ...


def check_probabilities(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim == 0 or not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InvalidProbabilities("probabilities must be finite and nonnegative")
    sums = p.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > SUM_TOLERANCE):
        raise InvalidProbabilities(f"probabilities sum to {np.ravel(sums)[0]!r}, not 1")
    return p


def cross_entropy(probabilities, true_index: int) -> float:
    """``-ln p[true_index]`` with ``p`` floored at 1e-12."""
    p = check_probabilities(probabilities)
    return -math.log(max(float(p[true_index]), PROBABILITY_FLOOR))


def predict(model: TargetModel, chips) -> np.ndarray:
    """Predicted class indices for a stack of chips."""
    return np.argmax(check_probabilities(model.predict_proba(np.asarray(chips))), axis=1)


# ---------------------------------------------------------------------------
# desk-scale reference model


def log_features(chips: np.ndarray, downsample: int = 4, floor_db: float = -40.0) -> np.ndarray:
    """Per-chip max-normalised log magnitude, block-averaged and L2-normalised."""
    chips = np.asarray(chips, dtype=float)
    if chips.ndim == 2:
        chips = chips[None]
    n, r, c = chips.shape
    peak = chips.reshape(n, -1).max(axis=1)
    peak = np.where(peak > 0, peak, 1.0)[:, None, None]
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(chips / peak)
    x = (np.maximum(db, floor_db) - floor_db) / -floor_db
    f = downsample
    x = x[:, : r - r % f, : c - c % f].reshape(n, r // f, f, c // f, f).mean(axis=(2, 4))
    x = x.reshape(n, -1)
    norm = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norm > 0, norm, 1.0)


@dataclass
class ReferencePrototypeModel:
    """Nearest-prototype classifier over azimuth bins.

    Each class keeps one L2-normalised prototype per populated azimuth bin.
    The class score is the distance to that class's nearest prototype, and
    probabilities are ``softmax(-distance / temperature)``.
    """

    classes: list
    prototypes: np.ndarray  # (P, features)
    prototype_class: np.ndarray  # (P,) class index
    prototype_bin: np.ndarray  # (P,) bin index
    bin_width: float = 10.0
    temperature: float = 0.05  # replaced by the fitted value in train_reference
    downsample: int = 4
    floor_db: float = -40.0

    def features(self, chips) -> np.ndarray:
        return log_features(chips, self.downsample, self.floor_db)

    def class_distances(self, chips) -> np.ndarray:
        x = self.features(chips)
        d2 = (np.sum(x * x, axis=1)[:, None] + np.sum(self.prototypes ** 2, axis=1)[None, :]
              - 2.0 * x @ self.prototypes.T)
        d = np.sqrt(np.maximum(d2, 0.0))
        out = np.full((len(x), len(self.classes)), np.inf)
        for k in range(len(self.classes)):
            out[:, k] = d[:, self.prototype_class == k].min(axis=1)
        return out

    def predict_proba(self, chips) -> np.ndarray:
        z = -self.class_distances(chips) / self.temperature
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)


def train_reference(samples: Iterable, bin_width: float = 10.0,
                    temperature: float | str = "auto", downsample: int = 4,
                    floor_db: float = -40.0,
                    classes: Sequence[str] | None = None) -> ReferencePrototypeModel:
    """Fit a :class:`ReferencePrototypeModel` on samples with ``chip``, ``azimuth`` and ``class_label``.

    Empty azimuth bins are skipped, so a class's prototypes always come from
    the nearest populated bins. ``temperature="auto"`` fits the softmax scale
    by leave-one-out likelihood, see :func:`fit_temperature`.
    """
    samples = list(samples)
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    labels = sorted({s.class_label for s in samples}) if classes is None else list(classes)
    nbins = max(1, int(math.ceil(360.0 / bin_width - 1e-9)))
    feats = log_features(np.stack([s.chip for s in samples]), downsample, floor_db) if samples \
        else np.zeros((0, 0))
    protos, sums, pcls, pbin = [], [], [], []
    owner = np.full(len(samples), -1)
    for k, lab in enumerate(labels):
        idx = np.array([i for i, s in enumerate(samples) if s.class_label == lab], dtype=int)
        if not idx.size:
            raise EmptyClass(f"no training samples for class {lab!r}")
        bins = np.array([int(np.floor((samples[i].azimuth % 360.0) / bin_width)) % nbins
                         for i in idx])
        for b in np.unique(bins):
            members = idx[bins == b]
            owner[members] = len(protos)
            total = feats[members].sum(axis=0)
            sums.append(total)
            protos.append(total / np.linalg.norm(total))
            pcls.append(k)
            pbin.append(int(b))
    model = ReferencePrototypeModel(labels, np.array(protos), np.array(pcls), np.array(pbin),
                                    bin_width, 1.0, downsample, floor_db)
    if temperature == "auto":
        temperature = fit_temperature(model, feats, owner, np.array(sums),
                                      np.array([labels.index(s.class_label) for s in samples]))
    model.temperature = float(temperature)
    if not model.temperature > 0:
        raise ValueError("temperature must be positive")
    return model


def _leave_one_out_distances(model: ReferencePrototypeModel, feats, owner, sums) -> np.ndarray:
    """Class distances of training features with each sample removed from its own prototype."""
    d = np.sqrt(np.maximum(2.0 - 2.0 * feats @ model.prototypes.T, 0.0))
    rows = np.arange(len(feats))
    rest = sums[owner] - feats
    norm = np.linalg.norm(rest, axis=1)
    own = np.full(len(feats), np.inf)  # a singleton bin has no prototype left
    ok = norm > 1e-12
    own[ok] = np.sqrt(np.maximum(2.0 - 2.0 * np.sum(feats[ok] * rest[ok], axis=1) / norm[ok], 0.0))
    d[rows, owner] = own
    out = np.empty((len(feats), len(model.classes)))
    for k in range(len(model.classes)):
        out[:, k] = d[:, model.prototype_class == k].min(axis=1)
    return out


def fit_temperature(model: ReferencePrototypeModel, feats, owner, sums, labels) -> float:
    """Softmax temperature minimising the leave-one-out negative log-likelihood.

    This is ordinary temperature scaling; it leaves predictions unchanged and
    only calibrates the probabilities.
    """
    from scipy import optimize
    from scipy.special import logsumexp

    d = _leave_one_out_distances(model, feats, owner, sums)
    finite = np.all(np.isfinite(d), axis=1) if len(model.classes) > 1 else np.zeros(len(d), bool)
    if not finite.any():
        return 0.05
    d, y = d[finite], np.asarray(labels)[finite]

    def nll(log_t: float) -> float:
        z = -d / math.exp(log_t)
        return float(np.mean(logsumexp(z, axis=1) - z[np.arange(len(y)), y]))

    res = optimize.minimize_scalar(nll, bounds=(math.log(1e-4), math.log(10.0)), method="bounded",
                                   options={"xatol": 1e-6})
    return float(math.exp(res.x))


# ---------------------------------------------------------------------------
# external models


class SubprocessModel:
    """Target model served by an external command, one process per chip.

    The chip goes to the command's standard input as a CIMG stream (magnitude
    in the real part); the command prints a JSON list of probabilities.
    """

    def __init__(self, command: Sequence[str], classes: Sequence[str], timeout: float = 60.0):
        self.command = list(command)
        self.classes = list(classes)
        self.timeout = timeout

    def _one(self, chip: np.ndarray) -> np.ndarray:
        blob = encode_cimg(ComplexImage(np.asarray(chip, dtype=np.complex128)))
        res = subprocess.run(self.command, input=blob, capture_output=True,
                             timeout=self.timeout, check=True)
        p = np.asarray(json.loads(res.stdout.decode().strip().splitlines()[-1]), dtype=float)
        if p.shape != (len(self.classes),):
            raise InvalidProbabilities(f"expected {len(self.classes)} probabilities, got {p.shape}")
        return p

    def predict_proba(self, chips) -> np.ndarray:
        chips = np.asarray(chips)
        if chips.ndim == 2:
            chips = chips[None]
        return check_probabilities(np.stack([self._one(c) for c in chips]))


# ---------------------------------------------------------------------------
# fooling metrics

AttackFn = Callable[[object], np.ndarray]


@dataclass(frozen=True)
class FoolingResult:
    rate: float
    clean_correct: int
    flipped: int


def fooling_rate(model: TargetModel, attack: AttackFn, samples: Iterable,
                 class_label: str, batch: int = 256) -> FoolingResult:
    """Share of clean-correct samples of ``class_label`` whose adversarial prediction changes.

    ``attack(sample)`` returns the adversarial magnitude chip. The rate is 0
    (with a warning) when no sample is classified correctly to begin with.
    """
    own = [s for s in samples if s.class_label == class_label]
    k = list(model.classes).index(class_label)
    correct = flipped = 0
    for lo in range(0, len(own), batch):
        part = own[lo:lo + batch]
        clean = predict(model, np.stack([s.chip for s in part])) == k
        if not clean.any():
            continue
        adv = predict(model, np.stack([attack(s) for s, c in zip(part, clean) if c]))
        correct += int(clean.sum())
        flipped += int(np.sum(adv != k))
    if correct == 0:
        log.warning("no clean-correct samples for class %s; fooling rate set to 0", class_label)
        return FoolingResult(0.0, 0, 0)
    return FoolingResult(flipped / correct, correct, flipped)


@dataclass
class FoolingReport:
    per_class: dict = field(default_factory=dict)  # class -> FoolingResult

    @property
    def per_class_rates(self) -> dict:
        return {k: v.rate for k, v in self.per_class.items()}

    @property
    def average_rate(self) -> float:
        rates = list(self.per_class_rates.values())
        return math.fsum(rates) / len(rates) if rates else 0.0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["class_label", "rate", "clean_correct", "flipped"])
            for k, v in self.per_class.items():
                w.writerow([k, repr(v.rate), v.clean_correct, v.flipped])
            w.writerow(["average", repr(self.average_rate), "", ""])


def fooling_report(model: TargetModel, attacks: Mapping[str, AttackFn],
                   samples: Sequence) -> FoolingReport:
    """Per-class fooling rates, each class attacked by its own perturbation."""
    return FoolingReport({lab: fooling_rate(model, atk, samples, lab)
                          for lab, atk in attacks.items()})


def transfer_matrix(surrogates: Sequence[TargetModel], targets: Sequence[TargetModel],
                    attacks: Sequence[Mapping[str, AttackFn]], samples: Sequence) -> np.ndarray:
    """Average fooling rate of each surrogate's attacks (rows) on each target (columns)."""
    if len(attacks) != len(surrogates):
        raise ValueError("need one attack set per surrogate")
    out = np.zeros((len(surrogates), len(targets)))
    for i, atk in enumerate(attacks):
        for j, tgt in enumerate(targets):
            out[i, j] = fooling_report(tgt, atk, samples).average_rate
    return out


def write_matrix_csv(matrix: np.ndarray, row_names: Sequence[str], col_names: Sequence[str],
                     path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["surrogate"] + list(col_names))
        for name, row in zip(row_names, matrix):
            w.writerow([name] + [repr(float(v)) for v in row])


def within_uncertainty(samples: Iterable, azimuth_hat: float, incidence_hat: float,
                       uncertainty: float) -> list:
    """Samples whose aspect lies within ``uncertainty`` (radians) of the estimate.

    Sample angles are in degrees; the azimuth distance is circular.
    """
    out = []
    for s in samples:
        daz = abs(float(wrap_azimuth(np.radians(s.azimuth) - azimuth_hat)))
        dinc = abs(np.radians(s.incidence) - incidence_hat)
        if daz <= uncertainty + 1e-12 and dinc <= uncertainty + 1e-12:
            out.append(s)
    return out


def partial_knowledge_evaluate(azimuth_hat: float, incidence_hat: float, uncertainty: float,
                               samples: Iterable, model: TargetModel, class_label: str,
                               attack: AttackFn) -> FoolingResult:
    """Fooling rate over the class samples inside the aspect-uncertainty window."""
    if not 0.0 <= uncertainty <= 0.5 * np.pi + 1e-12:
        raise ValueError("uncertainty must lie in [0, pi/2]")
    own = [s for s in samples if s.class_label == class_label]
    sel = within_uncertainty(own, azimuth_hat, incidence_hat, uncertainty)
    if not sel:
        raise EmptyEvaluationSet(f"no {class_label} samples within {np.degrees(uncertainty):g} deg")
    return fooling_rate(model, attack, sel, class_label)
