"""Particle swarm search for the ASTFT window schedule.

Each particle is a 16-vector of continuous window lengths. Positions are
rounded to integers only when a schedule is scored. The score is the
negative L1 distance between the unit-sum ASTFT magnitude and the
unit-sum Wigner-Ville magnitude of the same signal, so 0 is a perfect
match and everything else is negative.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tfa import (DEFAULT_HOP, DEFAULT_SIGMA, L_MAX, L_MIN, N_SECTIONS, AstftPlan, TFGrid,
                  WindowSchedule, resample_array, wvd)

# Lag FFT size of the target WVD: lags |m| <= 63 span 127 samples, the
# longest admissible window, so the target never asks for finer frequency
# detail than some schedule can deliver.
AIM_NFFT = 128


@dataclass(frozen=True)
class SwarmConfig:
    swarm_size: int = 30
    max_iterations: int = 20
    inertia: float = 0.729
    cognitive: float = 1.49445
    social: float = 1.49445
    bounds: tuple[int, int] = (L_MIN, L_MAX)
    repeats: int = 10
    seed: int = 0
    patience: int = 5
    hop: int = DEFAULT_HOP
    sigma: float = DEFAULT_SIGMA

    def __post_init__(self):
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be >= 2")
        if not 0.0 < self.inertia < 1.0:
            raise ValueError("inertia must lie in (0, 1)")
        if self.cognitive < 0 or self.social < 0:
            raise ValueError("acceleration constants must be >= 0")
        if self.max_iterations < 1 or self.repeats < 1 or self.patience < 1:
            raise ValueError("max_iterations, repeats and patience must be >= 1")
        lo, hi = self.bounds
        if not L_MIN <= lo <= hi <= L_MAX:
            raise ValueError(f"bounds must lie within [{L_MIN}, {L_MAX}]")

    @property
    def velocity_limit(self) -> float:
        return (self.bounds[1] - self.bounds[0]) / 4.0


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    best_position: np.ndarray
    best_fitness: float


@dataclass(frozen=True)
class PsoResult:
    best_schedule: WindowSchedule
    best_fitness: float
    fitness_trace: tuple[float, ...]
    evaluations: int = 0
    seed: int = 0


# --- fitness ----------------------------------------------------------------


def _unit_sum(values: np.ndarray) -> np.ndarray:
    total = values.sum()
    if total <= 0:
        return np.full(values.shape, 1.0 / values.size)
    return values / total


def grid_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Negative L1 distance between two grids after scaling each to unit sum."""
    return -float(np.abs(_unit_sum(a) - _unit_sum(b)).sum())


def aim_distribution(signal, hop: int = DEFAULT_HOP, n_fft: int = AIM_NFFT) -> TFGrid:
    """Target WVD magnitude sampled on the same frame centres as the ASTFT."""
    x = np.asarray(signal, dtype=np.float64)
    x = np.pad(x, (0, (-x.size) % N_SECTIONS))
    return wvd(x, n_fft=min(n_fft, x.size + x.size % 2), hop=hop)


def fitness(schedule, signal, aim: TFGrid, hop: int = DEFAULT_HOP, sigma: float = DEFAULT_SIGMA) -> float:
    """F(L) = -sum |P_astft - P_aim| with both grids resampled to the aim and unit-sum."""
    if not isinstance(schedule, WindowSchedule):
        schedule = WindowSchedule(tuple(int(v) for v in schedule))
    return FitnessEvaluator(signal, aim, hop, sigma)(schedule)


class FitnessEvaluator:
    """Scores schedules for one signal, reusing per-length spectrograms and memoizing results."""

    def __init__(self, signal, aim: TFGrid | None = None, hop: int = DEFAULT_HOP,
                 sigma: float = DEFAULT_SIGMA):
        self.plan = AstftPlan(signal, hop, sigma)
        if aim is None:
            aim = aim_distribution(self.plan.signal, hop)
        self.aim_shape = aim.shape
        self.aim = _unit_sum(np.asarray(aim.values, dtype=np.float64))
        self.memo: dict[tuple[int, ...], float] = {}

    def __call__(self, schedule) -> float:
        key = tuple(int(v) for v in schedule)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        if not isinstance(schedule, WindowSchedule):
            schedule = WindowSchedule(key)
        grid = self.plan.grid_values(schedule)
        grid = np.maximum(resample_array(grid, *self.aim_shape), 0.0)
        value = -float(np.abs(_unit_sum(grid) - self.aim).sum())
        self.memo[key] = value
        return value

    @property
    def evaluations(self) -> int:
        return len(self.memo)


def uniform_sweep(evaluator: FitnessEvaluator, lo: int = L_MIN, hi: int = L_MAX) -> np.ndarray:
    """Fitness of every uniform schedule L = lo..hi (exhaustive oracle)."""
    return np.array([evaluator(WindowSchedule.uniform(L)) for L in range(lo, hi + 1)])


# --- swarm ------------------------------------------------------------------


def _round_clip(pos: np.ndarray, lo: int, hi: int) -> np.ndarray:
    return np.clip(np.rint(pos), lo, hi).astype(int)


def pso_optimize(signal, config: SwarmConfig = SwarmConfig(), *, evaluator: FitnessEvaluator | None = None,
                 seed: int | None = None, observer=None) -> PsoResult:
    """One swarm run. Returns the global best schedule and its per-iteration trace.

    Trace entry 0 is the best of the random initial swarm; entry k is the
    global best after update k. The run stops after ``max_iterations``
    updates or ``patience`` updates in a row without improvement.
    ``observer(k, positions, velocities)`` sees the swarm after every step,
    k = 0 being the initial state.
    """
    seed = config.seed if seed is None else seed
    if evaluator is None:
        evaluator = FitnessEvaluator(signal, hop=config.hop, sigma=config.sigma)
    rng = np.random.default_rng(seed)
    lo, hi = config.bounds
    vmax = config.velocity_limit
    n, d = config.swarm_size, N_SECTIONS

    pos = rng.uniform(lo, hi, size=(n, d))
    vel = np.zeros((n, d))
    if observer is not None:
        observer(0, pos.copy(), vel.copy())
    scores = np.array([evaluator(_round_clip(p, lo, hi)) for p in pos])
    best_pos = pos.copy()
    best_score = scores.copy()
    g = int(np.argmax(best_score))
    g_pos, g_score = best_pos[g].copy(), float(best_score[g])
    trace = [g_score]

    stagnant = 0
    for k in range(1, config.max_iterations + 1):
        r1 = rng.random((n, d))
        r2 = rng.random((n, d))
        vel = (config.inertia * vel
               + config.cognitive * r1 * (best_pos - pos)
               + config.social * r2 * (g_pos - pos))
        np.clip(vel, -vmax, vmax, out=vel)
        pos = np.clip(pos + vel, lo, hi)
        if observer is not None:
            observer(k, pos.copy(), vel.copy())
        scores = np.array([evaluator(_round_clip(p, lo, hi)) for p in pos])
        better = scores > best_score
        best_pos[better] = pos[better]
        best_score[better] = scores[better]
        g = int(np.argmax(best_score))
        if best_score[g] > g_score:
            g_pos, g_score = best_pos[g].copy(), float(best_score[g])
            stagnant = 0
        else:
            stagnant += 1
        trace.append(g_score)
        if stagnant >= config.patience:
            break

    schedule = WindowSchedule(tuple(int(v) for v in _round_clip(g_pos, lo, hi)))
    return PsoResult(schedule, g_score, tuple(trace), evaluator.evaluations, seed)


def mode_schedule(schedules) -> WindowSchedule:
    """Elementwise mode of several schedules; ties go to the smaller length."""
    rows = [tuple(s) for s in schedules]
    if not rows:
        raise ValueError("need at least one schedule")
    out = []
    for column in zip(*rows):
        counts = Counter(column)
        top = max(counts.values())
        out.append(min(v for v, c in counts.items() if c == top))
    return WindowSchedule(tuple(out))


def repeated_runs(signal, config: SwarmConfig = SwarmConfig(), *,
                  seeds=None, evaluator: FitnessEvaluator | None = None) -> list[PsoResult]:
    if evaluator is None:
        evaluator = FitnessEvaluator(signal, hop=config.hop, sigma=config.sigma)
    if seeds is None:
        seeds = range(config.seed, config.seed + config.repeats)
    return [pso_optimize(signal, config, evaluator=evaluator, seed=s) for s in seeds]


def repeated_mode(signal, config: SwarmConfig = SwarmConfig(), *, seeds=None,
                  evaluator: FitnessEvaluator | None = None) -> WindowSchedule:
    """Mode over ``config.repeats`` runs seeded seed, seed+1, ..."""
    runs = repeated_runs(signal, config, seeds=seeds, evaluator=evaluator)
    return mode_schedule(r.best_schedule for r in runs)


# --- export -----------------------------------------------------------------


def schedule_text(schedule: WindowSchedule) -> str:
    return ",".join(str(v) for v in schedule)


def parse_schedule(text: str) -> WindowSchedule:
    return WindowSchedule(tuple(int(v) for v in text.strip().split(",")))


def write_trace_csv(result: PsoResult, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "best_fitness"])
        for i, f in enumerate(result.fitness_trace):
            w.writerow([i, repr(float(f))])


def read_trace_csv(path) -> list[tuple[int, float]]:
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    return [(int(a), float(b)) for a, b in rows[1:]]
