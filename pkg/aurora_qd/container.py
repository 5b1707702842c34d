"""
container.py

Unstructured behavioural archive.

A candidate is added when its descriptor lies farther than the threshold l
from every stored descriptor, replaces its nearest neighbour when it is
closer but strictly fitter, and is rejected otherwise. `update` rescales l
toward a target size and rebuilds the archive in descending-fitness order.

Snapshot CSV layout (one row per entry):
  variant, fitness, bd_0..bd_{d-1}, bd_nav_0/1, bd_forw_0/1, bd_turn_0/1,
  bd_mes_0..5, f_nav, f_forw, f_turn, genotype (semicolon-joined)
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from aurora_qd.core import GENOTYPE_SIZE, DimensionError, SnapshotError, Task, Variant
from aurora_qd.env import Evaluation, TRAJECTORY_SIZE

logger = logging.getLogger(__name__)

# --- CONFIG ---
DEFAULT_THRESHOLD = 0.01
DEFAULT_K = 15
FLOAT_FORMAT = "%.17g"

TASK_COLUMNS = [f"bd_{t.value}_{i}" for t in Task for i in range(2)]
MES_COLUMNS = [f"bd_mes_{i}" for i in range(6)]
SCORE_COLUMNS = [f"f_{t.value}" for t in Task]


class AddStatus(enum.Enum):
    ADDED = "added"
    REPLACED_NEAREST = "replaced_nearest"
    REJECTED = "rejected"


@dataclass(frozen=True)
class ContainerEntry:
    genotype: np.ndarray
    bd: np.ndarray
    evaluation: Evaluation
    fitness: float


class Container:
    """
    Archive of ContainerEntry objects with a lazily rebuilt cKDTree over
    their descriptors. Entry order is deterministic: additions append,
    replacements take the slot of the entry they evict.
    """

    def __init__(self, threshold: float = DEFAULT_THRESHOLD, k: int = DEFAULT_K, dim: int | None = None):
        if threshold <= 0:
            raise ValueError("threshold must be > 0")
        if k < 1:
            raise ValueError("k must be >= 1")
        self.threshold = float(threshold)
        self.k = int(k)
        self.dim = dim
        self.entries: list[ContainerEntry] = []
        self._tree: cKDTree | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def descriptors(self) -> np.ndarray:
        if not self.entries:
            return np.empty((0, self.dim or 0))
        return np.vstack([e.bd for e in self.entries])

    def fitnesses(self) -> np.ndarray:
        return np.array([e.fitness for e in self.entries], dtype=float)

    def trajectories(self) -> np.ndarray:
        if not self.entries:
            return np.empty((0, TRAJECTORY_SIZE))
        return np.vstack([e.evaluation.flat_trajectory for e in self.entries])

    def _check_dim(self, bd: np.ndarray) -> np.ndarray:
        bd = np.asarray(bd, dtype=float).reshape(-1)
        if self.dim is None:
            self.dim = bd.shape[0]
        elif bd.shape[0] != self.dim:
            raise DimensionError(f"descriptor has dimension {bd.shape[0]}, container holds {self.dim}")
        return bd

    def _index(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.descriptors())
        return self._tree

    def nearest(self, bd) -> tuple[float, int]:
        """Distance to, and position of, the nearest stored descriptor."""
        bd = self._check_dim(bd)
        if not self.entries:
            return float("inf"), -1
        dist, idx = self._index().query(bd, k=1)
        return float(dist), int(idx)

    def novelty(self, bd) -> float:
        """Mean distance to the min(k, |C|) nearest stored descriptors."""
        bd = self._check_dim(bd)
        if not self.entries:
            return float("inf")
        k = min(self.k, len(self.entries))
        dist, _ = self._index().query(bd, k=list(range(1, k + 1)))
        return float(np.mean(dist))

    def try_add(self, candidate: ContainerEntry) -> AddStatus:
        bd = self._check_dim(candidate.bd)
        dist, idx = self.nearest(bd)
        if dist > self.threshold:
            self.entries.append(candidate)
            self._tree = None
            return AddStatus.ADDED
        if candidate.fitness > self.entries[idx].fitness:
            self.entries[idx] = candidate
            self._tree = None
            return AddStatus.REPLACED_NEAREST
        return AddStatus.REJECTED

    def _rebuild(self, entries: list[ContainerEntry]) -> None:
        order = sorted(range(len(entries)), key=lambda i: -entries[i].fitness)
        self.entries = []
        self._tree = None
        for i in order:
            self.try_add(entries[i])

    def update(self, target: int) -> float:
        """Rescale the threshold toward `target` entries, then rebuild."""
        if target < 1:
            raise ValueError("target must be >= 1")
        if not self.entries:
            return self.threshold
        before = len(self.entries)
        self.threshold *= (before / target) ** (1.0 / self.dim)
        self._rebuild(list(self.entries))
        logger.debug("Container update: %d -> %d entries, l=%.6g", before, len(self), self.threshold)
        return self.threshold

    def refresh_descriptors(self, bd_fn: Callable[[Evaluation], np.ndarray]) -> "Container":
        """Recompute every descriptor from its cached evaluation and rebuild under the current l."""
        refreshed = [replace(e, bd=np.asarray(bd_fn(e.evaluation), dtype=float).reshape(-1)) for e in self.entries]
        if refreshed:
            self.dim = refreshed[0].bd.shape[0]
        self._rebuild(refreshed)
        return self

    def refresh_from_array(self, bds: np.ndarray) -> "Container":
        """Same as refresh_descriptors, with descriptors already computed in entry order."""
        bds = np.asarray(bds, dtype=float)
        refreshed = [replace(e, bd=bds[i]) for i, e in enumerate(self.entries)]
        if refreshed:
            self.dim = bds.shape[1]
        self._rebuild(refreshed)
        return self

    def to_frame(self, variant: str) -> pd.DataFrame:
        rows = []
        for e in self.entries:
            ev = e.evaluation
            row = {"variant": variant, "fitness": e.fitness}
            row.update({f"bd_{i}": v for i, v in enumerate(e.bd)})
            for task in Task:
                row.update({f"bd_{task.value}_{i}": v for i, v in enumerate(ev.descriptor(task))})
            row.update({c: v for c, v in zip(MES_COLUMNS, ev.bd_mes)})
            row.update({f"f_{task.value}": ev.score(task) for task in Task})
            row["genotype"] = ";".join(format(float(g), ".17g") for g in e.genotype)
            rows.append(row)
        columns = (["variant", "fitness"] + [f"bd_{i}" for i in range(self.dim or 0)]
                   + TASK_COLUMNS + MES_COLUMNS + SCORE_COLUMNS + ["genotype"])
        return pd.DataFrame(rows, columns=columns)


# --- SNAPSHOT I/O ---

def export_snapshot(container: Container, path: str | Path, variant: str) -> Path:
    path = Path(path)
    container.to_frame(variant).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def parse_genotype(text: str) -> np.ndarray:
    genes = np.array([float(g) for g in str(text).split(";")])
    if genes.shape[0] != GENOTYPE_SIZE:
        raise ValueError(f"genotype has {genes.shape[0]} genes, expected {GENOTYPE_SIZE}")
    return genes


def load_snapshot(path: str | Path) -> pd.DataFrame:
    """Read and validate a snapshot CSV; raises SnapshotError naming the bad row."""
    path = Path(path)
    if not path.exists():
        raise SnapshotError(f"snapshot not found: {path}")
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as err:
        raise SnapshotError(f"{path} is empty") from err
    except pd.errors.ParserError as err:
        match = re.search(r"line (\d+)", str(err))
        raise SnapshotError(str(err), row=int(match.group(1)) - 1 if match else 0) from err

    required = ["variant", "fitness", "genotype"] + TASK_COLUMNS + SCORE_COLUMNS
    missing = [c for c in required if c not in raw.columns]
    if missing:
        raise SnapshotError(f"missing columns: {', '.join(missing)}")

    frame = raw.copy()
    numeric = [c for c in raw.columns if c not in ("variant", "genotype")]
    for col in numeric:
        frame[col] = pd.to_numeric(raw[col], errors="coerce")
    bad = ~np.isfinite(frame[numeric].to_numpy(dtype=float)).all(axis=1)
    bad |= ~raw["variant"].isin([v.value for v in Variant]).to_numpy()
    for i, text in enumerate(raw["genotype"]):
        try:
            parse_genotype(text)
        except ValueError:
            bad[i] = True
    if bad.any():
        row = int(np.flatnonzero(bad)[0]) + 1
        raise SnapshotError("unknown variant, or non-numeric, missing or non-finite value", row=row)
    return frame


def snapshot_genotypes(snapshot: pd.DataFrame) -> np.ndarray:
    if snapshot.empty:
        return np.empty((0, GENOTYPE_SIZE))
    return np.vstack([parse_genotype(t) for t in snapshot["genotype"]])
