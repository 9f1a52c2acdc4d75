"""Dataset -> window schedule -> paired time-frequency images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fusion import FeatureConfig, FeatureSet, prepare_features
from .pso import FitnessEvaluator, SwarmConfig, mode_schedule, repeated_mode, repeated_runs
from .signal import DatasetSplit
from .tfa import WindowSchedule


@dataclass(frozen=True)
class ScheduleSearch:
    class_schedules: tuple[WindowSchedule, ...]
    pooled: WindowSchedule
    representatives: tuple[int, ...]     # training-set index used for each class


def representative_indices(labels: np.ndarray, class_count: int) -> list[int]:
    """First training sample of every class."""
    out = []
    for k in range(class_count):
        hits = np.nonzero(labels == k)[0]
        if hits.size == 0:
            raise ValueError(f"class {k} has no training samples")
        out.append(int(hits[0]))
    return out


def search_schedule(ds: DatasetSplit, swarm: SwarmConfig = SwarmConfig()) -> ScheduleSearch:
    """Run the repeated PSO on one channel-V training segment per class.

    Each class yields ``swarm.repeats`` schedules; the class schedule is
    their elementwise mode and the pooled schedule is the mode over every
    run of every class. Only training data is looked at, and every sample
    is later transformed with the same pooled schedule, so the schedule
    carries no label information into validation or test images.
    """
    reps = representative_indices(ds.train.labels, ds.class_count)
    per_class, all_runs = [], []
    for idx in reps:
        v = np.asarray(ds.train.v[idx], dtype=np.float64)
        ev = FitnessEvaluator(v, hop=swarm.hop, sigma=swarm.sigma)
        runs = repeated_runs(v, swarm, evaluator=ev)
        per_class.append(mode_schedule(r.best_schedule for r in runs))
        all_runs.extend(r.best_schedule for r in runs)
    return ScheduleSearch(tuple(per_class), mode_schedule(all_runs), tuple(reps))


def build_features(ds: DatasetSplit, schedule: WindowSchedule, fcfg: FeatureConfig = FeatureConfig(),
                   workers: int = 1) -> dict[str, FeatureSet]:
    return {name: prepare_features(sub.h, sub.v, sub.labels, schedule, fcfg, workers)
            for name, sub in ds.splits().items()}


def build_features_per_sample(ds: DatasetSplit, swarm: SwarmConfig = SwarmConfig(),
                              fcfg: FeatureConfig = FeatureConfig()) -> dict[str, FeatureSet]:
    """Slow path: every sample gets its own repeated-PSO schedule."""
    out = {}
    for name, sub in ds.splits().items():
        parts = []
        for i in range(len(sub)):
            v = np.asarray(sub.v[i], np.float64)
            sched = repeated_mode(v, swarm)
            parts.append(prepare_features(sub.h[i:i + 1], sub.v[i:i + 1], sub.labels[i:i + 1], sched, fcfg))
        out[name] = FeatureSet(*(np.concatenate([getattr(p, k) for p in parts])
                                 for k in ("astft", "dtcwt", "raw_h", "raw_v", "labels")))
    return out
