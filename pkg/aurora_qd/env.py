"""
env.py

Deterministic planar unicycle driven by a one-hidden-layer tanh perceptron.

An episode lasts 3 s at a 50 Hz control rate (150 explicit Euler steps).
Every 5th step the state (x, y, cos theta, sin theta, v, omega) is
recorded, giving 6 streams x 30 samples. The three hand-coded tasks (Nav,
Forw, Turn) and the mean-streams descriptor are computed from that record
alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from aurora_qd.core import (
    GENOTYPE_SIZE,
    N_COMMANDS,
    N_HIDDEN,
    N_OBSERVATIONS,
    GenotypeError,
    Task,
)

# --- CONFIG ---
DT = 0.02             # s, control period (50 Hz)
N_STEPS = 150         # 3 s episode
RECORD_EVERY = 5      # 10 Hz recording
N_SAMPLES = N_STEPS // RECORD_EVERY
N_STREAMS = 6
TRAJECTORY_SIZE = N_STREAMS * N_SAMPLES

V_MAX = 1.0           # m/s
OMEGA_MAX = 2.0       # rad/s
TAU = 0.2             # s, first-order actuator lag
ARENA = 3.0           # m, arena half-width used for normalization

STREAM_NAMES = ("x", "y", "cos_theta", "sin_theta", "v", "omega")
STREAM_LOW = np.array([-ARENA, -ARENA, -1.0, -1.0, -V_MAX, -OMEGA_MAX])
STREAM_HIGH = -STREAM_LOW


def wrap_angle(angle):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2.0 * np.pi)


def _unit(value, low, high):
    return np.clip((np.asarray(value, dtype=float) - low) / (high - low), 0.0, 1.0)


@dataclass(frozen=True)
class Evaluation:
    """Everything one episode says about a genotype."""

    trajectory: np.ndarray  # (6, 30)
    bd_nav: np.ndarray
    bd_forw: np.ndarray
    bd_turn: np.ndarray
    bd_mes: np.ndarray
    f_nav: float
    f_forw: float
    f_turn: float

    @property
    def flat_trajectory(self) -> np.ndarray:
        return self.trajectory.reshape(TRAJECTORY_SIZE)

    def descriptor(self, task: Task) -> np.ndarray:
        return {Task.NAV: self.bd_nav, Task.FORW: self.bd_forw, Task.TURN: self.bd_turn}[Task(task)]

    def score(self, task: Task) -> float:
        return {Task.NAV: self.f_nav, Task.FORW: self.f_forw, Task.TURN: self.f_turn}[Task(task)]


# --- CONTROLLER ---

def unpack_genotype(genotypes: np.ndarray):
    """
    Split genotypes of shape (B, 74) into per-row layer parameters.

    Layout: W1 (6 x 8, row-major), b1 (8), W2 (8 x 2, row-major), b2 (2).
    """
    g = np.asarray(genotypes, dtype=float)
    if g.ndim != 2 or g.shape[1] != GENOTYPE_SIZE:
        raise GenotypeError(f"expected genotypes of length {GENOTYPE_SIZE}, got shape {g.shape}")
    n1 = N_OBSERVATIONS * N_HIDDEN
    n2 = n1 + N_HIDDEN
    n3 = n2 + N_HIDDEN * N_COMMANDS
    w1 = g[:, :n1].reshape(-1, N_OBSERVATIONS, N_HIDDEN)
    b1 = g[:, n1:n2]
    w2 = g[:, n2:n3].reshape(-1, N_HIDDEN, N_COMMANDS)
    b2 = g[:, n3:]
    return w1, b1, w2, b2


def _forward(params, obs: np.ndarray) -> np.ndarray:
    # Explicit accumulation keeps every row's arithmetic independent of batch size.
    w1, b1, w2, b2 = params
    hidden = b1.copy()
    for i in range(N_OBSERVATIONS):
        hidden += obs[:, i, None] * w1[:, i, :]
    hidden = np.tanh(hidden)
    out = b2.copy()
    for j in range(N_HIDDEN):
        out += hidden[:, j, None] * w2[:, j, :]
    return np.tanh(out)


def controller_forward(genotype, observation) -> np.ndarray:
    """Commands (c_v, c_omega) in [-1, 1] for one observation."""
    g = np.asarray(genotype, dtype=float)
    if g.ndim != 1 or g.shape[0] != GENOTYPE_SIZE:
        raise GenotypeError(f"expected a genotype of length {GENOTYPE_SIZE}, got shape {g.shape}")
    obs = np.asarray(observation, dtype=float).reshape(1, N_OBSERVATIONS)
    return _forward(unpack_genotype(g[None, :]), obs)[0]


# --- SIMULATION ---

def rollout_batch(genotypes) -> np.ndarray:
    """Recorded trajectories, shape (B, 6, 30), for a batch of genotypes."""
    params = unpack_genotype(np.atleast_2d(genotypes))
    batch = params[0].shape[0]
    x, y, theta, v, omega = (np.zeros(batch) for _ in range(5))
    record = np.empty((batch, N_STREAMS, N_SAMPLES))

    for step in range(1, N_STEPS + 1):
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        obs = np.stack([x / ARENA, y / ARENA, cos_t, sin_t, v / V_MAX, omega / OMEGA_MAX], axis=1)
        commands = _forward(params, np.clip(obs, -1.0, 1.0))

        # Explicit Euler: every derivative taken at the start of the step
        dv = (commands[:, 0] * V_MAX - v) / TAU
        domega = (commands[:, 1] * OMEGA_MAX - omega) / TAU
        x = x + DT * v * cos_t
        y = y + DT * v * sin_t
        theta = wrap_angle(theta + DT * omega)
        v = np.clip(v + DT * dv, -V_MAX, V_MAX)
        omega = np.clip(omega + DT * domega, -OMEGA_MAX, OMEGA_MAX)

        if step % RECORD_EVERY == 0:
            record[:, :, step // RECORD_EVERY - 1] = np.stack(
                [x, y, np.cos(theta), np.sin(theta), v, omega], axis=1
            )
    return record


def evaluate_trajectory(trajectory: np.ndarray) -> Evaluation:
    trajectory = np.asarray(trajectory, dtype=float).reshape(N_STREAMS, N_SAMPLES)
    bd_nav, f_nav = task_nav(trajectory)
    bd_forw, f_forw = task_forw(trajectory)
    bd_turn, f_turn = task_turn(trajectory)
    return Evaluation(
        trajectory=trajectory,
        bd_nav=bd_nav,
        bd_forw=bd_forw,
        bd_turn=bd_turn,
        bd_mes=mes_descriptor(trajectory),
        f_nav=f_nav,
        f_forw=f_forw,
        f_turn=f_turn,
    )


def simulate_batch(genotypes) -> list[Evaluation]:
    return [evaluate_trajectory(t) for t in rollout_batch(genotypes)]


def simulate_episode(genotype) -> Evaluation:
    g = np.asarray(genotype, dtype=float)
    if g.ndim != 1:
        raise GenotypeError("simulate_episode takes a single genotype")
    return simulate_batch(g[None, :])[0]


# --- TASKS ---

def _final_pose(trajectory):
    t = np.asarray(trajectory, dtype=float).reshape(N_STREAMS, N_SAMPLES)
    x, y, cos_t, sin_t, v, omega = t[:, -1]
    return x, y, float(np.arctan2(sin_t, cos_t)), v, omega


def task_nav(trajectory) -> tuple[np.ndarray, float]:
    """Final position descriptor; score is the heading error against a circular arc."""
    x, y, theta, _, _ = _final_pose(trajectory)
    bd = _unit([x, y], -ARENA, ARENA)
    desired = 0.0 if x == 0.0 and y == 0.0 else 2.0 * np.arctan2(y, x)
    return bd, -abs(float(wrap_angle(theta - desired)))


def task_forw(trajectory) -> tuple[np.ndarray, float]:
    """Mean actuation factors of v and omega; score is the final x."""
    t = np.asarray(trajectory, dtype=float).reshape(N_STREAMS, N_SAMPLES)
    bd = np.array([
        np.mean((t[4] / V_MAX + 1.0) / 2.0),
        np.mean((t[5] / OMEGA_MAX + 1.0) / 2.0),
    ])
    return np.clip(bd, 0.0, 1.0), float(t[0, -1])


def task_turn(trajectory) -> tuple[np.ndarray, float]:
    """Final velocities descriptor; score rewards ending with heading pi."""
    _, _, theta, v, omega = _final_pose(trajectory)
    bd = np.array([_unit(v, -V_MAX, V_MAX), _unit(omega, -OMEGA_MAX, OMEGA_MAX)])
    return bd, -abs(float(wrap_angle(theta - np.pi)))


def mes_descriptor(trajectory) -> np.ndarray:
    t = np.asarray(trajectory, dtype=float).reshape(N_STREAMS, N_SAMPLES)
    return _unit(t.mean(axis=1), STREAM_LOW, STREAM_HIGH)


def stream_bounds_flat() -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate bounds of a flattened (stream-major) trajectory."""
    return np.repeat(STREAM_LOW, N_SAMPLES), np.repeat(STREAM_HIGH, N_SAMPLES)
