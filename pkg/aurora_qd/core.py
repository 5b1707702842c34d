"""
core.py

Shared domain types for the toolkit: the exception hierarchy, variant and
task labels, controller sizing, seeded random substreams and the experiment
configuration (YAML on disk).
"""

from __future__ import annotations

import dataclasses
import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

logger = logging.getLogger(__name__)

# --- CONTROLLER LAYOUT ---
N_OBSERVATIONS = 6
N_HIDDEN = 8
N_COMMANDS = 2
GENE_LOW = -1.0
GENE_HIGH = 1.0

# Fixed label set for random substreams
RNG_PURPOSES = ("bootstrap", "selection", "variation", "evaluation", "encoder")


class AuroraError(Exception):
    """Base class for every error raised by the toolkit."""


class ConfigError(AuroraError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class GenotypeError(AuroraError, ValueError):
    """Genotype of the wrong length or with genes outside their bounds."""


class DimensionError(AuroraError, ValueError):
    """Descriptor whose dimension does not match the container."""


class UnfittedModelError(AuroraError):
    """Encoder used before it was fitted."""


class EncoderFitError(AuroraError, ValueError):
    """Encoder cannot be fitted on, or loaded from, the data it was given."""


class DivergenceError(AuroraError):
    """Autoencoder training produced a non-finite loss."""

    def __init__(self, message: str, step: int = -1, last_loss: float = float("nan")):
        super().__init__(message)
        self.step = step
        self.last_loss = last_loss


class SnapshotError(AuroraError):
    """Malformed container snapshot; `row` is the 1-based data row (0 = header)."""

    def __init__(self, message: str, row: int = 0):
        super().__init__(f"row {row}: {message}" if row else message)
        self.row = row


class Task(str, enum.Enum):
    NAV = "nav"
    FORW = "forw"
    TURN = "turn"


class Variant(str, enum.Enum):
    AURORA = "AURORA"
    HC_NAV = "HC-Nav"
    HC_FORW = "HC-Forw"
    HC_TURN = "HC-Turn"
    MES = "MeS"

    @property
    def hand_coded_task(self) -> Task | None:
        """Task whose descriptor an HC variant uses; None for AURORA and MeS."""
        return _HC_TASKS.get(self)


_HC_TASKS = {Variant.HC_NAV: Task.NAV, Variant.HC_FORW: Task.FORW, Variant.HC_TURN: Task.TURN}


def controller_param_count(n_in: int, n_hidden: int, n_out: int) -> int:
    """Parameter count of a one-hidden-layer perceptron with biases."""
    if min(n_in, n_hidden, n_out) < 1:
        raise ValueError("layer sizes must be >= 1")
    return (n_in + 1) * n_hidden + (n_hidden + 1) * n_out


GENOTYPE_SIZE = controller_param_count(N_OBSERVATIONS, N_HIDDEN, N_COMMANDS)


# --- RANDOMNESS ---

@dataclass(frozen=True)
class RngState:
    """
    Seed plus a spawn key naming one substream.

    Generators are built from a counter-based Philox bit generator, so a
    given (seed, key) always yields the same draws no matter which thread
    asks for them.
    """

    seed: int
    key: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(int(self.seed), spawn_key=self.key)
        return np.random.Generator(np.random.Philox(sequence))


def rng_split(rng: RngState, purpose: str, index: int = 0) -> RngState:
    """Independent substream of `rng` for `purpose`, numbered by `index`."""
    if purpose not in RNG_PURPOSES:
        raise ValueError(f"unknown rng purpose {purpose!r}; expected one of {RNG_PURPOSES}")
    if index < 0:
        raise ValueError("substream index must be >= 0")
    return RngState(rng.seed, rng.key + (RNG_PURPOSES.index(purpose), int(index)))


# --- CONFIGURATION ---

@dataclass(frozen=True)
class EncoderSettings:
    kind: str = "ae"
    hidden: int = 64
    n_steps: int = 3000
    batch_size: int = 256
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    first_update: int = 10


@dataclass(frozen=True)
class ExperimentConfig:
    variant: Variant = Variant.AURORA
    tasks: tuple[Task, ...] = (Task.NAV, Task.FORW, Task.TURN)
    scoring_task: Task = Task.NAV
    n_iterations: int = 15000
    batch_size: int = 64
    bootstrap_size: int = 256
    container_target: int | None = None
    container_update_period: int = 10
    initial_threshold: float = 0.01
    novelty_k: int = 15
    mutation_eta: float = 10.0
    mutation_rate: float = 0.3
    latent_dim: int = 2
    seed: int = 0
    threads: int = 1
    out_dir: str = "runs"
    coverage_grid: str = "task"
    encoder: EncoderSettings = field(default_factory=EncoderSettings)

    @property
    def focus_task(self) -> Task:
        """Task a run is judged on: the HC task, otherwise the scoring task."""
        return self.variant.hand_coded_task or self.scoring_task

    @property
    def active_task(self) -> Task:
        """Task whose score drives replacement during the run."""
        return self.focus_task

    @property
    def target_size(self) -> int:
        if self.container_target is not None:
            return self.container_target
        return 1500 if self.focus_task is Task.NAV else 5000

    def validate(self) -> "ExperimentConfig":
        from aurora_qd.env import TRAJECTORY_SIZE

        pca_limit = min(self.bootstrap_size, TRAJECTORY_SIZE)
        checks = [
            (self.n_iterations >= 0, "n_iterations must be >= 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.bootstrap_size >= 1, "bootstrap_size must be >= 1"),
            (self.container_target is None or self.container_target > 0, "container_target must be > 0"),
            (self.container_update_period >= 1, "container_update_period must be >= 1"),
            (self.initial_threshold > 0, "initial_threshold must be > 0"),
            (self.novelty_k >= 1, "novelty_k must be >= 1"),
            (self.mutation_eta > 0, "mutation_eta must be > 0"),
            (0 < self.mutation_rate <= 1, "mutation_rate must be in (0, 1]"),
            (self.latent_dim >= 1, "latent_dim must be >= 1"),
            (0 <= self.seed < 2**64, "seed must be a 64-bit unsigned integer"),
            (self.threads >= 1, "threads must be >= 1"),
            (len(self.tasks) >= 1, "tasks must name at least one task"),
            (self.coverage_grid in ("task", "snapshot"), "coverage_grid must be 'task' or 'snapshot'"),
            (self.encoder.kind in ("ae", "pca"), "encoder.kind must be 'ae' or 'pca'"),
            (self.encoder.kind != "pca" or self.latent_dim <= pca_limit,
             f"latent_dim must be <= min(bootstrap_size, {TRAJECTORY_SIZE}) = {pca_limit} for a PCA encoder"),
            (self.encoder.hidden >= 1, "encoder.hidden must be >= 1"),
            (self.encoder.n_steps >= 0, "encoder.n_steps must be >= 0"),
            (self.encoder.batch_size >= 1, "encoder.batch_size must be >= 1"),
            (self.encoder.learning_rate > 0, "encoder.learning_rate must be > 0"),
            (0 <= self.encoder.beta1 < 1 and 0 <= self.encoder.beta2 < 1, "encoder betas must be in [0, 1)"),
            (self.encoder.eps > 0, "encoder.eps must be > 0"),
            (self.encoder.first_update >= 1, "encoder.first_update must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        return self


def _build(cls, data: Mapping[str, Any], prefix: str = ""):
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown configuration key: {prefix}{unknown[0]}")
    kwargs = {}
    for name, value in data.items():
        try:
            if name == "encoder":
                if not isinstance(value, Mapping):
                    raise ConfigError("encoder must be a mapping")
                value = _build(EncoderSettings, value, prefix="encoder.")
            elif name == "variant":
                value = Variant(value)
            elif name == "scoring_task":
                value = Task(value)
            elif name == "tasks":
                value = tuple(Task(t) for t in value)
            elif name in ("kind", "out_dir", "coverage_grid"):
                value = str(value)
            elif name == "container_target":
                value = None if value is None else int(value)
            elif isinstance(known[name].default, int):
                value = int(value)
            elif isinstance(known[name].default, float):
                value = float(value)
        except (TypeError, ValueError) as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError(f"bad value for {prefix}{name}: {value!r} ({err})") from err
        kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: Mapping[str, Any] | None) -> ExperimentConfig:
    return _build(ExperimentConfig, data or {}).validate()


def config_to_dict(config: ExperimentConfig) -> dict[str, Any]:
    """Plain YAML-safe mapping holding every configuration field."""
    out = dataclasses.asdict(config)
    out["variant"] = config.variant.value
    out["scoring_task"] = config.scoring_task.value
    out["tasks"] = [t.value for t in config.tasks]
    return out


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as err:
        raise ConfigError(f"cannot parse {path}: {err}") from err
    if data is not None and not isinstance(data, Mapping):
        raise ConfigError(f"{path} must hold a mapping at the top level")
    config = config_from_dict(data)
    logger.debug("Loaded config %s (variant %s)", path, config.variant.value)
    return config


def dump_config(config: ExperimentConfig, path: str | Path | None = None) -> str:
    text = yaml.safe_dump(config_to_dict(config), sort_keys=True)
    if path is not None:
        Path(path).write_text(text)
    return text


def override_config(config: ExperimentConfig, **overrides: Any) -> ExperimentConfig:
    """Apply non-None command-line overrides and re-validate."""
    changes = {k: v for k, v in overrides.items() if v is not None}
    if not changes:
        return config
    merged = config_to_dict(config)
    merged.update({k: (v.value if isinstance(v, enum.Enum) else v) for k, v in changes.items()})
    return config_from_dict(merged)
