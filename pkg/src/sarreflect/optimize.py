"""Bounded black-box minimisers: differential evolution and particle swarm.

Both optimisers draw all randomness from one seeded ``SeedSequence`` that is
split into one stream per individual (or particle), so a run is reproducible
bit for bit regardless of how objective evaluations are scheduled.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import BORESIGHT_INCIDENCE, HALF_PI, TWO_PI

Objective = Callable[[np.ndarray], float]


class ObjectiveFailure(RuntimeError):
    """The objective raised or returned a non-finite value.

    ``trace`` holds the best result found before the failure.
    """

    def __init__(self, message: str, trace: "OptimizeTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class Bounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError(f"bounds length mismatch: {lo.size} vs {hi.size}")
        if np.any(lo > hi) or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite with lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dimension(self) -> int:
        return self.lower.size

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(x, self.lower), self.upper)

    def contains(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


@dataclass(frozen=True)
class DEConfig:
    population_size: int = 40
    max_iterations: int = 60
    mutation_factor: float = 0.5
    recombination_probability: float = 0.9
    mutation_probability: float = 0.8
    tournament_size: int = 3
    crowding: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 4:
            raise ValueError("population_size must be at least 4")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")
        for name in ("recombination_probability", "mutation_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.tournament_size < 1 or self.crowding < 1:
            raise ValueError("tournament_size and crowding must be positive")


@dataclass(frozen=True)
class PSOConfig:
    particle_count: int = 40
    max_iterations: int = 60
    cognitive_rate: float = 0.6
    social_rate: float = 1.0
    inertia_weight: float = 0.8
    velocity_clamp: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.particle_count < 1:
            raise ValueError("particle_count must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")


@dataclass
class OptimizeTrace:
    """Best loss after initialisation (entry 0) and after every iteration."""

    best_loss_per_iteration: list = field(default_factory=list)
    best_params: Optional[np.ndarray] = None
    evaluation_count: int = 0

    @property
    def best_loss(self) -> float:
        return self.best_loss_per_iteration[-1] if self.best_loss_per_iteration else math.inf

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "best_loss"])
            for i, v in enumerate(self.best_loss_per_iteration):
                w.writerow([i, repr(float(v))])


class _Evaluator:
    """Counts evaluations, enforces the box and maps over a batch in order."""

    def __init__(self, objective: Objective, bounds: Bounds, trace: OptimizeTrace,
                 workers: int):
        self.objective = objective
        self.bounds = bounds
        self.trace = trace
        self.workers = max(1, int(workers))

    def _one(self, x: np.ndarray) -> float:
        assert self.bounds.contains(x), "candidate outside the search box"
        return float(self.objective(x.copy()))

    def __call__(self, xs: Sequence[np.ndarray]) -> np.ndarray:
        try:
            if self.workers == 1:
                vals = [self._one(x) for x in xs]
            else:
                with ThreadPoolExecutor(self.workers) as pool:
                    vals = list(pool.map(self._one, xs))
        except AssertionError:
            raise
        except Exception as exc:
            raise ObjectiveFailure(f"objective raised {exc!r}", self.trace) from exc
        self.trace.evaluation_count += len(vals)
        out = np.asarray(vals, dtype=float)
        if not np.all(np.isfinite(out)):
            raise ObjectiveFailure("objective returned a non-finite value", self.trace)
        return out


def _streams(seed: int, n: int) -> tuple[np.random.Generator, list[np.random.Generator]]:
    root = np.random.SeedSequence(int(seed) & (2**64 - 1))
    children = root.spawn(n + 1)
    return np.random.default_rng(children[0]), [np.random.default_rng(c) for c in children[1:]]


def _record(trace: OptimizeTrace, x: np.ndarray, f: float) -> None:
    if not trace.best_loss_per_iteration or f < trace.best_loss_per_iteration[-1]:
        trace.best_params = x.copy()
        trace.best_loss_per_iteration.append(f)
    else:
        trace.best_loss_per_iteration.append(trace.best_loss_per_iteration[-1])


def _degenerate(objective: Objective, bounds: Bounds, trace: OptimizeTrace,
                workers: int) -> Optional[OptimizeTrace]:
    if np.any(bounds.span > 0):
        return None
    f = _Evaluator(objective, bounds, trace, workers)([bounds.lower.copy()])
    _record(trace, bounds.lower, float(f[0]))
    return trace


def minimize_de(objective: Objective, bounds: Bounds, config: DEConfig = DEConfig(),
                workers: int = 1,
                callback: Optional[Callable[[int, OptimizeTrace], None]] = None) -> OptimizeTrace:
    """Differential evolution with tournament parent selection and crowding replacement.

    Each generation builds one trial per individual: the base vector is the
    winner of a size ``tournament_size`` tournament, and with probability
    ``mutation_probability`` it is moved by ``F`` times the difference of two
    other random members. Binomial crossover with the target individual (at
    rate ``recombination_probability``) follows. A trial then competes with
    the worst member among its ``crowding`` nearest neighbours (distances
    scaled by the box span) and replaces it when better.
    """
    trace = OptimizeTrace()
    done = _degenerate(objective, bounds, trace, workers)
    if done is not None:
        return done
    n, d = config.population_size, bounds.dimension
    span = np.where(bounds.span > 0, bounds.span, 1.0)
    evaluate = _Evaluator(objective, bounds, trace, workers)
    _, rngs = _streams(config.seed, n)

    pop = np.array([bounds.lower + r.random(d) * bounds.span for r in rngs])
    pop = bounds.clip(pop)
    fit = evaluate(list(pop))
    best = int(np.argmin(fit))
    _record(trace, pop[best], float(fit[best]))
    k = min(config.crowding, n)
    for it in range(config.max_iterations):
        trials = np.empty_like(pop)
        for i, r in enumerate(rngs):
            entrants = r.choice(n, size=min(config.tournament_size, n), replace=False)
            base = int(entrants[np.argmin(fit[entrants])])
            mutant = pop[base].copy()
            if r.random() < config.mutation_probability:
                others = [j for j in range(n) if j != base]
                a, b = r.choice(others, size=2, replace=False)
                mutant += config.mutation_factor * (pop[a] - pop[b])
            cross = r.random(d) < config.recombination_probability
            cross[r.integers(d)] = True
            trials[i] = bounds.clip(np.where(cross, mutant, pop[i]))
        tfit = evaluate(list(trials))
        # sequential replacement in individual order keeps the result schedule-free
        for i in range(n):
            dist = np.sum(((pop - trials[i]) / span) ** 2, axis=1)
            near = np.argsort(dist, kind="stable")[:k]
            worst = int(near[np.argmax(fit[near])])
            if tfit[i] < fit[worst]:
                pop[worst] = trials[i]
                fit[worst] = tfit[i]
        best = int(np.argmin(fit))
        _record(trace, pop[best], float(fit[best]))
        if callback is not None:
            callback(it + 1, trace)
    return trace


def minimize_pso(objective: Objective, bounds: Bounds, config: PSOConfig = PSOConfig(),
                 workers: int = 1,
                 callback: Optional[Callable[[int, OptimizeTrace], None]] = None) -> OptimizeTrace:
    """Global-best particle swarm with inertia, velocity clamping and position clipping."""
    trace = OptimizeTrace()
    done = _degenerate(objective, bounds, trace, workers)
    if done is not None:
        return done
    n, d = config.particle_count, bounds.dimension
    vmax = config.velocity_clamp * bounds.span
    evaluate = _Evaluator(objective, bounds, trace, workers)
    _, rngs = _streams(config.seed, n)

    x = bounds.clip(np.array([bounds.lower + r.random(d) * bounds.span for r in rngs]))
    v = np.array([(2.0 * r.random(d) - 1.0) * vmax for r in rngs])
    f = evaluate(list(x))
    pbest, pfit = x.copy(), f.copy()
    g = int(np.argmin(pfit))
    _record(trace, pbest[g], float(pfit[g]))
    for it in range(config.max_iterations):
        gbest = pbest[g].copy()
        for i, r in enumerate(rngs):
            r1, r2 = r.random(d), r.random(d)
            v[i] = (config.inertia_weight * v[i]
                    + config.cognitive_rate * r1 * (pbest[i] - x[i])
                    + config.social_rate * r2 * (gbest - x[i]))
        v = np.clip(v, -vmax, vmax)
        x = bounds.clip(x + v)
        f = evaluate(list(x))
        better = f < pfit
        pbest[better], pfit[better] = x[better], f[better]
        g = int(np.argmin(pfit))
        _record(trace, pbest[g], float(pfit[g]))
        if callback is not None:
            callback(it + 1, trace)
    return trace


# ---------------------------------------------------------------------------
# reduced search spaces with fixed reflector angles

FREE = 1
FIXED_INCIDENCE = 2
FIXED_AZIMUTH = 3
FIXED_BOTH = 4


@dataclass(frozen=True)
class AngleVariant:
    """Search-vector layout for one of the four angle-fixing configurations.

    The full parameter vector is ``[x_1..x_m, y_1..y_m, theta_1..theta_m, phi_1]``.
    Fixed incidences are ``arctan(sqrt 2)``; a fixed azimuth means ``phi_1 = 0``.
    """

    reflector_count: int
    configuration: int = FREE
    scene_width: float = 38.4
    scene_height: float = 38.4

    def __post_init__(self):
        if self.configuration not in (FREE, FIXED_INCIDENCE, FIXED_AZIMUTH, FIXED_BOTH):
            raise ValueError(f"unknown configuration {self.configuration}")
        if self.reflector_count < 1:
            raise ValueError("reflector_count must be positive")

    @property
    def fixes_incidence(self) -> bool:
        return self.configuration in (FIXED_INCIDENCE, FIXED_BOTH)

    @property
    def fixes_azimuth(self) -> bool:
        return self.configuration in (FIXED_AZIMUTH, FIXED_BOTH)

    @property
    def dimension(self) -> int:
        m = self.reflector_count
        return 2 * m + (0 if self.fixes_incidence else m) + (0 if self.fixes_azimuth else 1)

    def bounds(self) -> Bounds:
        m = self.reflector_count
        hw, hh = 0.5 * self.scene_width, 0.5 * self.scene_height
        lo = [-hw] * m + [-hh] * m
        hi = [hw] * m + [hh] * m
        if not self.fixes_incidence:
            lo += [0.0] * m
            hi += [HALF_PI] * m
        if not self.fixes_azimuth:
            lo.append(0.0)
            hi.append(TWO_PI / m)
        return Bounds(np.array(lo), np.array(hi))

    def expand(self, z) -> np.ndarray:
        """Full ``3m + 1`` parameter vector from a reduced search vector."""
        z = np.asarray(z, dtype=float).reshape(-1)
        if z.size != self.dimension:
            raise ValueError(f"expected {self.dimension} values, got {z.size}")
        m = self.reflector_count
        pos, rest = z[:2 * m], z[2 * m:]
        if self.fixes_incidence:
            inc = np.full(m, BORESIGHT_INCIDENCE)
        else:
            inc, rest = rest[:m], rest[m:]
        phi1 = np.zeros(1) if self.fixes_azimuth else rest[:1]
        return np.concatenate([pos, inc, phi1])

    def reduce(self, theta) -> np.ndarray:
        """Inverse of :meth:`expand` (drops the fixed coordinates)."""
        theta = np.asarray(theta, dtype=float).reshape(-1)
        m = self.reflector_count
        parts = [theta[:2 * m]]
        if not self.fixes_incidence:
            parts.append(theta[2 * m:3 * m])
        if not self.fixes_azimuth:
            parts.append(theta[3 * m:])
        return np.concatenate(parts)


def fixed_angle_variant(reflector_count: int, configuration: int, scene_width: float = 38.4,
                        scene_height: float = 38.4) -> AngleVariant:
    return AngleVariant(reflector_count, configuration, scene_width, scene_height)
