"""
loop.py

Runs one experiment for any variant.

AURORA alternates QD iterations with encoder phases at iterations
first * k(k+1)/2; HC-x and MeS are the same QD loop with a fixed descriptor.

Outputs (in <out_dir>/<variant>_seed<seed>/):
 - container.csv        final container snapshot
 - progress.csv         one row per QD iteration (0 = bootstrap)
 - encoder_phases.csv   one row per encoder phase (AURORA only)
 - encoder.bin          final encoder model (AURORA only)
 - coverage_<task>.csv  coverage per minimum performance, per task
 - entropy.csv          H(trajectory) vs H(descriptor)
 - manifest.json        config echo, counts, timings, git-style file hashes
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from aurora_qd import dimred
from aurora_qd.container import AddStatus, Container, ContainerEntry, FLOAT_FORMAT, export_snapshot
from aurora_qd.core import AuroraError, ExperimentConfig, RngState, Variant, config_to_dict, rng_split
from aurora_qd.env import Evaluation, TRAJECTORY_SIZE, simulate_batch
from aurora_qd.metrics import entropy_inequality_report, projection_curve, snapshot_descriptor_fn
from aurora_qd.variation import MutationParams, polynomial_mutate, random_genotypes, select_uniform

logger = logging.getLogger(__name__)

# --- CONFIG ---
SNAPSHOT_FILE = "container.csv"
PROGRESS_FILE = "progress.csv"
PHASES_FILE = "encoder_phases.csv"
ENCODER_FILE = "encoder.bin"
ENTROPY_FILE = "entropy.csv"
MANIFEST_FILE = "manifest.json"
N_THRESHOLDS = 50


@dataclass
class RunState:
    config: ExperimentConfig
    rng: RngState
    container: Container
    mutation: MutationParams
    iteration: int = 0
    encoder: dimred.EncoderModel | None = None
    update_index: int = 1
    next_update: int | None = None
    evaluations: int = 0
    encoder_phases: list[int] = field(default_factory=list)
    progress: list[dict] = field(default_factory=list)
    phase_log: list[dict] = field(default_factory=list)


def run_dir(config: ExperimentConfig, out_dir: str | Path | None = None) -> Path:
    base = Path(out_dir if out_dir is not None else config.out_dir)
    return base / f"{config.variant.value}_seed{config.seed}"


# --- EVALUATION ---

def evaluate_genotypes(genotypes: Sequence[np.ndarray], threads: int = 1) -> list[Evaluation]:
    """
    Simulate a batch, split across `threads` workers. Results come back in
    offspring order and are identical to a single-threaded call.
    """
    genotypes = np.asarray(genotypes, dtype=float)
    if threads <= 1 or len(genotypes) < 2:
        return simulate_batch(genotypes)
    chunks = [c for c in np.array_split(genotypes, min(threads, len(genotypes))) if len(c)]
    with ThreadPoolExecutor(max_workers=len(chunks)) as executor:
        return [ev for part in executor.map(simulate_batch, chunks) for ev in part]


def descriptor_fn(state: RunState) -> Callable[[list[Evaluation]], np.ndarray]:
    """Active descriptor for a list of evaluations, as an (n, d) array."""
    variant = state.config.variant
    if variant is Variant.AURORA:
        return lambda evs: np.atleast_2d(
            dimred.encode(state.encoder, np.vstack([ev.flat_trajectory for ev in evs]))
        )
    if variant is Variant.MES:
        return lambda evs: np.vstack([ev.bd_mes for ev in evs])
    task = variant.hand_coded_task
    return lambda evs: np.vstack([ev.descriptor(task) for ev in evs])


def _offer(state: RunState, genotypes, evaluations: list[Evaluation]) -> dict[str, int]:
    counts = {status.value: 0 for status in AddStatus}
    if not evaluations:
        return counts
    bds = descriptor_fn(state)(evaluations)
    task = state.config.active_task
    for genotype, ev, bd in zip(genotypes, evaluations, bds):
        entry = ContainerEntry(np.asarray(genotype, dtype=float), bd, ev, ev.score(task))
        counts[state.container.try_add(entry).value] += 1
    return counts


def _record(state: RunState, counts: dict[str, int]) -> None:
    state.progress.append({
        "iteration": state.iteration,
        "size": len(state.container),
        "threshold": state.container.threshold,
        "added": counts["added"],
        "replaced": counts["replaced_nearest"],
        "rejected": counts["rejected"],
        "evaluations": state.evaluations,
    })


# --- PHASES ---

def init_run(config: ExperimentConfig) -> RunState:
    """Evaluate the bootstrap population and seed the container (and encoder)."""
    config.validate()
    root = RngState(config.seed)
    state = RunState(
        config=config,
        rng=root,
        container=Container(threshold=config.initial_threshold, k=config.novelty_k),
        mutation=MutationParams(eta=config.mutation_eta, rate=config.mutation_rate),
    )
    genotypes = random_genotypes(config.bootstrap_size, rng_split(root, "bootstrap").generator(), state.mutation)
    evaluations = evaluate_genotypes(genotypes, config.threads)
    state.evaluations = len(evaluations)

    if config.variant is Variant.AURORA:
        encoder_rng = rng_split(root, "encoder", 0).generator()
        state.encoder = dimred.new_encoder(config.encoder, TRAJECTORY_SIZE, config.latent_dim, encoder_rng)
        bootstrap = np.vstack([ev.flat_trajectory for ev in evaluations])
        state.encoder = dimred.fit_encoder(state.encoder, bootstrap, encoder_rng, config.encoder)
        state.next_update = dimred.schedule_next_update(1, config.encoder.first_update)

    counts = _offer(state, genotypes, evaluations)
    _record(state, counts)
    logger.info("Bootstrap: %d policies evaluated, %d kept", len(evaluations), len(state.container))
    return state


def qd_iteration(state: RunState) -> RunState:
    """Select, mutate, evaluate and offer one batch; periodic container update."""
    config = state.config
    state.iteration += 1
    selection = rng_split(state.rng, "selection", state.iteration).generator()
    variation = rng_split(state.rng, "variation", state.iteration).generator()

    parents = select_uniform(state.container, config.batch_size, selection)
    children = [polynomial_mutate(p, state.mutation, variation) for p in parents]
    evaluations = evaluate_genotypes(children, config.threads)
    state.evaluations += len(evaluations)
    counts = _offer(state, children, evaluations)

    if state.iteration % config.container_update_period == 0:
        state.container.update(config.target_size)
    _record(state, counts)
    return state


def encoder_phase(state: RunState) -> RunState:
    """Retrain the encoder on the container, then recompute every descriptor."""
    config = state.config
    if config.variant is not Variant.AURORA:
        raise AuroraError(f"{config.variant.value} runs have no encoder")
    size_before = len(state.container)
    rng = rng_split(state.rng, "encoder", state.update_index).generator()
    state.encoder = dimred.fit_encoder(state.encoder, state.container, rng, config.encoder)
    state.container.refresh_from_array(dimred.encode(state.encoder, state.container.trajectories()))

    fit = state.encoder.history[-1]
    state.encoder_phases.append(state.iteration)
    state.phase_log.append({
        "iteration": state.iteration,
        "n_samples": fit.n_samples,
        "loss_before": fit.loss_before,
        "loss_after": fit.loss_after,
        "size_before": size_before,
        "size_after": len(state.container),
    })
    state.update_index += 1
    state.next_update = dimred.schedule_next_update(state.update_index, config.encoder.first_update)
    logger.info("Encoder phase at iteration %d: container %d -> %d",
                state.iteration, size_before, len(state.container))
    return state


def run_iterations(state: RunState, progress_bar: bool = False) -> RunState:
    config = state.config
    for _ in tqdm(range(state.iteration, config.n_iterations), desc=config.variant.value,
                  disable=not progress_bar, leave=False):
        qd_iteration(state)
        if state.next_update is not None and state.iteration == state.next_update:
            encoder_phase(state)
    return state


# --- ARTIFACTS ---

def git_blob_hash(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def content_hash(files: dict[str, str]) -> str:
    listing = "".join(f"{name} {digest}\n" for name, digest in sorted(files.items()))
    return hashlib.sha1(listing.encode()).hexdigest()


@dataclass
class RunManifest:
    status: str
    variant: str
    seed: int
    config: dict
    evaluations: int = 0
    iterations: int = 0
    final_container_size: int = 0
    final_threshold: float = 0.0
    encoder_phase_iterations: list[int] = field(default_factory=list)
    files: dict[str, str] = field(default_factory=dict)
    content_hash: str = ""
    timings: dict[str, object] = field(default_factory=dict)
    error: dict[str, str] | None = None

    def write(self, directory: Path) -> Path:
        path = directory / MANIFEST_FILE
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def read(cls, path: str | Path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


def verify_manifest(path: str | Path) -> bool:
    """True when every listed file still hashes to the recorded digest."""
    path = Path(path)
    manifest = RunManifest.read(path)
    current = {name: git_blob_hash((path.parent / name).read_bytes()) for name in manifest.files}
    return current == manifest.files and content_hash(current) == manifest.content_hash


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_artifacts(state: RunState, directory: Path, plot: bool = False) -> list[Path]:
    config = state.config
    directory.mkdir(parents=True, exist_ok=True)
    variant = config.variant.value
    written = [export_snapshot(state.container, directory / SNAPSHOT_FILE, variant)]

    _write_csv(pd.DataFrame(state.progress), directory / PROGRESS_FILE)
    written.append(directory / PROGRESS_FILE)

    snapshot = state.container.to_frame(variant)
    for task in config.tasks:
        path = directory / f"coverage_{task.value}.csv"
        curve = projection_curve(snapshot, task, config.variant, N_THRESHOLDS, config.coverage_grid)
        _write_csv(curve.to_frame(config.seed, variant), path)
        written.append(path)

    if state.encoder is not None:
        columns = ["iteration", "n_samples", "loss_before", "loss_after", "size_before", "size_after"]
        _write_csv(pd.DataFrame(state.phase_log, columns=columns), directory / PHASES_FILE)
        written.append(directory / PHASES_FILE)
        written.append(dimred.save_model(state.encoder, directory / ENCODER_FILE))
    describe = snapshot_descriptor_fn(config.variant, state.encoder)
    report = entropy_inequality_report(state.container.trajectories(), describe)
    _write_csv(report.to_frame(config.seed, variant), directory / ENTROPY_FILE)
    written.append(directory / ENTROPY_FILE)

    if plot:
        from aurora_qd.plotting import plot_snapshot

        for task in config.tasks:
            plot_snapshot(snapshot, task, directory / f"container_{task.value}.svg")
    return written


def run(config: ExperimentConfig, out_dir: str | Path | None = None,
        plot: bool = False, progress_bar: bool = False) -> tuple[RunState, Path]:
    """Full run plus artifacts; a failed run still leaves a diagnostic manifest."""
    directory = run_dir(config, out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    clock = time.perf_counter()
    manifest = RunManifest(status="running", variant=config.variant.value, seed=config.seed,
                           config=config_to_dict(config))
    state = None
    try:
        state = init_run(config)
        run_iterations(state, progress_bar=progress_bar)
        written = write_artifacts(state, directory, plot=plot)
    except AuroraError as err:
        manifest.status = "failed"
        manifest.error = {"type": type(err).__name__, "message": str(err)}
        if state is not None:
            manifest.iterations = state.iteration
            manifest.evaluations = state.evaluations
        manifest.timings = {"started_at": started, "wall_clock_s": round(time.perf_counter() - clock, 3)}
        manifest.write(directory)
        raise

    manifest.status = "ok"
    manifest.iterations = state.iteration
    manifest.evaluations = state.evaluations
    manifest.final_container_size = len(state.container)
    manifest.final_threshold = state.container.threshold
    manifest.encoder_phase_iterations = list(state.encoder_phases)
    manifest.files = {p.name: git_blob_hash(p.read_bytes()) for p in written}
    manifest.content_hash = content_hash(manifest.files)
    manifest.timings = {"started_at": started, "wall_clock_s": round(time.perf_counter() - clock, 3)}
    manifest.write(directory)
    return state, directory
