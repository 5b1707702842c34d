"""
metrics.py

Post-hoc analysis of container snapshots:
 - coverage given minimum performance on a 50 x 50 grid over a task's
   descriptor space, and coverage curves over a sweep of thresholds
   (per snapshot, or on a fixed per-task grid shared by every run)
 - plug-in histogram entropy, used to check H(descriptor) <= H(trajectory),
   directly on a run or on a stored snapshot by re-simulating its genotypes

Snapshots are the DataFrames produced by Container.to_frame / load_snapshot.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import pandas as pd

from aurora_qd.container import snapshot_genotypes
from aurora_qd.core import Task, UnfittedModelError, Variant
from aurora_qd.dimred import EncoderModel, encode
from aurora_qd.env import DT, N_STEPS, TRAJECTORY_SIZE, V_MAX, evaluate_trajectory, rollout_batch, stream_bounds_flat

logger = logging.getLogger(__name__)

# --- CONFIG ---
GRID_RESOLUTION = 50
ENTROPY_BINS = 10
ENTROPY_TOLERANCE = 1e-9
SNAPSHOT_GRID = "snapshot"
TASK_GRID = "task"

# Attainable score range per task: heading errors lie in [-pi, 0], and the
# final x of a forward run cannot exceed V_MAX times the episode length.
SCORE_RANGES = {
    Task.NAV: (-np.pi, 0.0),
    Task.FORW: (-V_MAX * N_STEPS * DT, V_MAX * N_STEPS * DT),
    Task.TURN: (-np.pi, 0.0),
}


@dataclass(frozen=True)
class CoverageCurve:
    task: Task
    thresholds: np.ndarray
    coverage: np.ndarray
    resolution: int = GRID_RESOLUTION
    bounds: tuple[float, float] = (0.0, 1.0)

    @property
    def total(self) -> int:
        """Coverage with no score requirement (the -inf threshold)."""
        return int(self.coverage[0])

    def to_frame(self, seed: int | None = None, variant: str | None = None) -> pd.DataFrame:
        return pd.DataFrame({
            "threshold": self.thresholds,
            "coverage": self.coverage.astype(int),
            "seed": seed,
            "variant": variant,
        })


def _task_arrays(snapshot: pd.DataFrame, task: Task) -> tuple[np.ndarray, np.ndarray]:
    task = Task(task)
    bds = snapshot[[f"bd_{task.value}_0", f"bd_{task.value}_1"]].to_numpy(dtype=float)
    scores = snapshot[f"f_{task.value}"].to_numpy(dtype=float)
    return bds, scores


def grid_cells(bds: np.ndarray, resolution: int = GRID_RESOLUTION) -> np.ndarray:
    """Flat cell index of each 2-D descriptor in [0, 1]^2."""
    idx = np.clip(np.floor(np.asarray(bds, dtype=float) * resolution), 0, resolution - 1).astype(int)
    return idx[:, 0] * resolution + idx[:, 1]


def coverage(snapshot: pd.DataFrame, task: Task, f_min: float = -np.inf) -> int:
    """Number of grid cells holding at least one entry scoring above f_min."""
    bds, scores = _task_arrays(snapshot, task)
    keep = scores > f_min
    return int(np.unique(grid_cells(bds[keep])).size) if keep.any() else 0


def task_thresholds(task: Task, n_thresholds: int = 50) -> np.ndarray:
    """Thresholds spread over the whole attainable score range of `task`."""
    if n_thresholds < 2:
        raise ValueError("n_thresholds must be >= 2")
    low, high = SCORE_RANGES[Task(task)]
    return np.linspace(low, high, n_thresholds)


def coverage_curve(snapshot: pd.DataFrame, task: Task, n_thresholds: int = 50,
                   grid: str = SNAPSHOT_GRID) -> CoverageCurve:
    """
    Coverage at -inf and at n_thresholds scores. The snapshot grid spaces them
    from the lowest to the highest stored score; the task grid uses the task's
    fixed score range, so curves of different runs share their thresholds.
    """
    if n_thresholds < 2:
        raise ValueError("n_thresholds must be >= 2")
    if grid not in (SNAPSHOT_GRID, TASK_GRID):
        raise ValueError(f"unknown threshold grid {grid!r}")
    if snapshot.empty:
        raise ValueError("cannot build a coverage curve from an empty snapshot")
    bds, scores = _task_arrays(snapshot, task)
    best = pd.Series(scores).groupby(grid_cells(bds)).max().to_numpy()
    if grid == TASK_GRID:
        spaced = task_thresholds(task, n_thresholds)
    else:
        spaced = np.linspace(scores.min(), scores.max(), n_thresholds)
    thresholds = np.concatenate([[-np.inf], spaced])
    counts = np.array([(best > t).sum() for t in thresholds])
    return CoverageCurve(Task(task), thresholds, counts)


def projection_curve(snapshot: pd.DataFrame, task: Task, variant: Variant, n_thresholds: int = 50,
                     grid: str = SNAPSHOT_GRID) -> CoverageCurve:
    """
    Curve for `task` under the cross-projection rule: an HC container built
    for another task is reported as total coverage only.
    """
    variant, task = Variant(variant), Task(task)
    curve = coverage_curve(snapshot, task, n_thresholds, grid)
    foreign = variant.hand_coded_task is not None and variant.hand_coded_task is not task
    if foreign:
        return CoverageCurve(task, curve.thresholds[:1], curve.coverage[:1])
    return curve


# --- ENTROPY ---

def empirical_entropy(samples, bins_per_dim: int, bounds) -> float:
    """Plug-in Shannon entropy (nats) of samples binned on a regular grid."""
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    if x.shape[0] == 0:
        raise ValueError("need at least one sample")
    low, high = (np.broadcast_to(np.asarray(b, dtype=float), x.shape[1:]) for b in bounds)
    cells = np.clip(np.floor((x - low) / (high - low) * bins_per_dim), 0, bins_per_dim - 1).astype(np.int64)
    _, counts = np.unique(cells, axis=0, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


@dataclass(frozen=True)
class EntropyReport:
    h_trajectory: float
    h_descriptor: float
    n_samples: int

    @property
    def holds(self) -> bool:
        return self.h_descriptor <= self.h_trajectory + ENTROPY_TOLERANCE

    def to_frame(self, seed: int | None = None, variant: str | None = None) -> pd.DataFrame:
        return pd.DataFrame([{
            "seed": seed,
            "variant": variant,
            "n_samples": self.n_samples,
            "H_s": self.h_trajectory,
            "H_b": self.h_descriptor,
            "holds": self.holds,
        }])


def entropy_inequality_report(trajectories, descriptor_fn: Callable[[np.ndarray], np.ndarray],
                              bins: int = ENTROPY_BINS) -> EntropyReport:
    """
    Compare the binned entropy of flat trajectories with the binned entropy
    of their descriptors (assumed in [0, 1]^d). Descriptors are a function of
    the trajectories, so H_b > H_s beyond binning artifacts is a defect.
    """
    trajectories = np.atleast_2d(np.asarray(trajectories, dtype=float))
    descriptors = np.atleast_2d(np.asarray(descriptor_fn(trajectories), dtype=float))
    h_s = empirical_entropy(trajectories, bins, stream_bounds_flat())
    h_b = empirical_entropy(descriptors, bins, (0.0, 1.0))
    report = EntropyReport(h_s, h_b, trajectories.shape[0])
    if not report.holds:
        logger.warning("Entropy inequality violated: H_b=%.6f > H_s=%.6f", h_b, h_s)
    return report


def snapshot_trajectories(genotypes: np.ndarray) -> np.ndarray:
    """Flat trajectories for stored genotypes; episodes are deterministic, so this is exact."""
    if len(genotypes) == 0:
        return np.empty((0, TRAJECTORY_SIZE))
    return rollout_batch(genotypes).reshape(len(genotypes), TRAJECTORY_SIZE)


def snapshot_descriptor_fn(variant: Variant, encoder: EncoderModel | None = None
                           ) -> Callable[[np.ndarray], np.ndarray]:
    """The descriptor a variant's run used, as a function of flat trajectories."""
    variant = Variant(variant)
    if variant is Variant.AURORA:
        if encoder is None:
            raise UnfittedModelError("AURORA snapshots are described by their encoder; none was given")
        return lambda trajs: encode(encoder, trajs)
    if variant is Variant.MES:
        return lambda trajs: np.vstack([evaluate_trajectory(t).bd_mes for t in trajs])
    task = variant.hand_coded_task
    return lambda trajs: np.vstack([evaluate_trajectory(t).descriptor(task) for t in trajs])


def snapshot_entropy_report(snapshot: pd.DataFrame, variant: Variant, encoder: EncoderModel | None = None,
                            bins: int = ENTROPY_BINS) -> EntropyReport:
    """Entropy report for a stored container, re-simulating each genotype's episode."""
    trajectories = snapshot_trajectories(snapshot_genotypes(snapshot))
    return entropy_inequality_report(trajectories, snapshot_descriptor_fn(variant, encoder), bins)
