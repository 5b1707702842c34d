"""
dimred.py

Dimensionality reduction for learned descriptors.

Two backends share one EncoderModel type:
 - PCA: mean vector plus d orthonormal component rows.
 - AE:  fully connected autoencoder D -> hidden -> d -> hidden -> D with
        leaky-rectifier hidden layers, trained on reconstruction MSE with
        Adam and hand-written backpropagation.

Raw latents are mapped into [0, 1]^d with per-dimension min/max learned on
the training set, so the container threshold means the same thing whatever
the backend.

Binary model file (little-endian):
  magic 'AURQDENC', u16 version, u8 kind (0 PCA, 1 AE), u32 input_dim,
  u32 hidden, u32 latent_dim, u8 has_norm, then float64 arrays in a fixed
  order (see _ARRAY_ORDER).
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from aurora_qd.core import DivergenceError, EncoderFitError, EncoderSettings, UnfittedModelError

logger = logging.getLogger(__name__)

# --- CONFIG ---
PCA = "pca"
AE = "ae"
LEAKY_SLOPE = 0.01
NORM_EPS = 1e-9
MAX_TRAIN_BATCH = 256

MAGIC = b"AURQDENC"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sHBIIIB")
_KIND_TAGS = {PCA: 0, AE: 1}
_ARRAY_ORDER = {
    PCA: ("mean", "components"),
    AE: ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4"),
}


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], **hyper) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            **hyper,
        )


@dataclass
class FitRecord:
    n_samples: int
    loss_before: float
    loss_after: float


@dataclass
class EncoderModel:
    kind: str
    input_dim: int
    latent_dim: int
    hidden: int = 0
    params: dict[str, np.ndarray] = field(default_factory=dict)
    norm_min: np.ndarray | None = None
    norm_max: np.ndarray | None = None
    degenerate: bool = False
    optimizer: AdamState | None = None
    history: list[FitRecord] = field(default_factory=list)

    @property
    def fitted(self) -> bool:
        return self.norm_min is not None and self.norm_max is not None


def _leaky(a):
    return np.where(a > 0, a, LEAKY_SLOPE * a)


def _leaky_grad(a):
    return np.where(a > 0, 1.0, LEAKY_SLOPE)


# --- PCA ---

def pca_fit(dataset, d: int) -> EncoderModel:
    """Top-d principal directions of the (biased) sample covariance."""
    data = np.asarray(dataset, dtype=float)
    n, dim = data.shape
    if d < 1 or n < d or d > dim:
        raise EncoderFitError(f"pca_fit needs n >= d >= 1 and d <= {dim}, got n={n}, d={d}")
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals, kind="stable")[::-1][:d]
    components = eigvecs[:, order].T.copy()
    # Sign convention: the largest-magnitude coordinate of each row is positive
    pivots = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(d), pivots])
    components *= np.where(signs == 0, 1.0, signs)[:, None]

    degenerate = bool(np.allclose(centered, 0.0))
    if degenerate:
        logger.warning("PCA on %d identical rows: components are an arbitrary orthonormal basis", n)
    model = EncoderModel(PCA, dim, d, params={"mean": mean, "components": components}, degenerate=degenerate)
    return fit_normalization(model, data)


# --- AUTOENCODER ---

def init_autoencoder(input_dim: int, hidden: int, latent_dim: int, rng: np.random.Generator) -> EncoderModel:
    """Glorot-uniform weights, zero biases."""
    shapes = {"w1": (input_dim, hidden), "w2": (hidden, latent_dim),
              "w3": (latent_dim, hidden), "w4": (hidden, input_dim)}
    params = {}
    for i, (name, (fan_in, fan_out)) in enumerate(shapes.items(), start=1):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params[f"b{i}"] = np.zeros(fan_out)
    params = {k: params[k] for k in _ARRAY_ORDER[AE]}
    return EncoderModel(AE, input_dim, latent_dim, hidden=hidden, params=params)


def _ae_pass(params, x):
    a1 = x @ params["w1"] + params["b1"]
    h1 = _leaky(a1)
    z = h1 @ params["w2"] + params["b2"]
    a2 = z @ params["w3"] + params["b3"]
    h2 = _leaky(a2)
    recon = h2 @ params["w4"] + params["b4"]
    return a1, h1, z, a2, h2, recon


def ae_forward(model: EncoderModel, inputs) -> tuple[np.ndarray, np.ndarray]:
    """(latent, reconstruction) for one input vector or a batch of rows."""
    if model.kind != AE:
        raise ValueError("ae_forward needs an autoencoder model")
    x = np.asarray(inputs, dtype=float)
    _, _, z, _, _, recon = _ae_pass(model.params, np.atleast_2d(x))
    if x.ndim == 1:
        return z[0], recon[0]
    return z, recon


def ae_loss_and_grads(params: dict[str, np.ndarray], batch) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared reconstruction error over batch and coordinates, and its gradient."""
    x = np.atleast_2d(np.asarray(batch, dtype=float))
    a1, h1, z, a2, h2, recon = _ae_pass(params, x)
    err = recon - x
    loss = float(np.mean(err**2))

    d_recon = 2.0 * err / err.size
    grads = {"w4": h2.T @ d_recon, "b4": d_recon.sum(axis=0)}
    d_a2 = (d_recon @ params["w4"].T) * _leaky_grad(a2)
    grads["w3"] = z.T @ d_a2
    grads["b3"] = d_a2.sum(axis=0)
    d_z = d_a2 @ params["w3"].T
    grads["w2"] = h1.T @ d_z
    grads["b2"] = d_z.sum(axis=0)
    d_a1 = (d_z @ params["w2"].T) * _leaky_grad(a1)
    grads["w1"] = x.T @ d_a1
    grads["b1"] = d_a1.sum(axis=0)
    return loss, grads


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], adam: AdamState) -> None:
    """Bias-corrected Adam update, in place."""
    adam.step += 1
    c1 = 1.0 - adam.beta1**adam.step
    c2 = 1.0 - adam.beta2**adam.step
    for name, g in grads.items():
        adam.m[name] = adam.beta1 * adam.m[name] + (1.0 - adam.beta1) * g
        adam.v[name] = adam.beta2 * adam.v[name] + (1.0 - adam.beta2) * g * g
        params[name] -= adam.lr * (adam.m[name] / c1) / (np.sqrt(adam.v[name] / c2) + adam.eps)


def ae_train_step(model: EncoderModel, adam: AdamState, batch) -> tuple[EncoderModel, AdamState, float]:
    loss, grads = ae_loss_and_grads(model.params, batch)
    if not np.isfinite(loss):
        last = model.history[-1].loss_after if model.history else float("nan")
        raise DivergenceError(f"non-finite reconstruction loss at Adam step {adam.step + 1}",
                              step=adam.step + 1, last_loss=last)
    adam_step(model.params, grads, adam)
    return model, adam, loss


# --- ENCODING ---

def raw_latent(model: EncoderModel, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=float)
    if model.kind == PCA:
        return (x - model.params["mean"]) @ model.params["components"].T
    return ae_forward(model, x)[0]


def reconstruct(model: EncoderModel, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=float)
    if model.kind == PCA:
        return model.params["mean"] + raw_latent(model, x) @ model.params["components"]
    return ae_forward(model, x)[1]


def reconstruction_mse(model: EncoderModel, data) -> float:
    data = np.atleast_2d(np.asarray(data, dtype=float))
    return float(np.mean((reconstruct(model, data) - data) ** 2))


def fit_normalization(model: EncoderModel, data) -> EncoderModel:
    z = np.atleast_2d(raw_latent(model, np.atleast_2d(data)))
    low, high = z.min(axis=0), z.max(axis=0)
    flat = (high - low) < NORM_EPS
    model.norm_min = np.where(flat, low - NORM_EPS / 2, low)
    model.norm_max = np.where(flat, high + NORM_EPS / 2, high)
    return model


def encode(model: EncoderModel, trajectory) -> np.ndarray:
    """Descriptor(s) in [0, 1]^d for one flat trajectory or a batch of rows."""
    if not model.fitted:
        raise UnfittedModelError("encoder has no normalization; fit it first")
    z = raw_latent(model, trajectory)
    return np.clip((z - model.norm_min) / (model.norm_max - model.norm_min), 0.0, 1.0)


# --- ENCODER PHASES ---

def schedule_next_update(k: int, first: int = 10) -> int:
    """Iteration of the k-th encoder update: first * k(k+1)/2 (10, 30, 60, 100, ...)."""
    if k < 1:
        raise ValueError("update index starts at 1")
    return first * k * (k + 1) // 2


def new_encoder(settings: EncoderSettings, input_dim: int, latent_dim: int, rng: np.random.Generator) -> EncoderModel:
    if settings.kind == PCA:
        return EncoderModel(PCA, input_dim, latent_dim)
    model = init_autoencoder(input_dim, settings.hidden, latent_dim, rng)
    model.optimizer = AdamState.for_params(
        model.params, lr=settings.learning_rate, beta1=settings.beta1, beta2=settings.beta2, eps=settings.eps
    )
    return model


def fit_encoder(model: EncoderModel, container, rng: np.random.Generator,
                settings: EncoderSettings | None = None) -> EncoderModel:
    """
    Train on every stored trajectory, then recompute the normalization.

    PCA refits from scratch. The AE continues from its current weights with
    n_steps Adam steps on minibatches of min(batch_size, n) rows drawn with
    replacement.
    """
    settings = settings or EncoderSettings()
    data = container.trajectories() if hasattr(container, "trajectories") else np.asarray(container, dtype=float)
    n = data.shape[0]
    if n == 0:
        raise EncoderFitError("cannot fit an encoder on an empty container")

    before = reconstruction_mse(model, data) if model.kind == AE or model.params else float("nan")
    if model.kind == PCA:
        if n >= model.latent_dim:
            history = model.history
            model = pca_fit(data, model.latent_dim)
            model.history = history
        elif not model.params:
            raise EncoderFitError(f"PCA needs at least {model.latent_dim} trajectories, got {n}")
        else:
            logger.warning("Only %d trajectories for a %d-component PCA; keeping previous components",
                           n, model.latent_dim)
    else:
        if model.optimizer is None:
            model.optimizer = AdamState.for_params(
                model.params, lr=settings.learning_rate, beta1=settings.beta1, beta2=settings.beta2, eps=settings.eps
            )
        batch = min(settings.batch_size, MAX_TRAIN_BATCH, n)
        for _ in range(settings.n_steps):
            rows = rng.integers(0, n, size=batch)
            ae_train_step(model, model.optimizer, data[rows])
    after = reconstruction_mse(model, data)
    model = fit_normalization(model, data)
    model.history.append(FitRecord(n, before, after))
    logger.info("Encoder (%s) fitted on %d trajectories: MSE %.6g -> %.6g", model.kind, n, before, after)
    return model


# --- SERIALIZATION ---

def save_model(model: EncoderModel, path: str | Path) -> Path:
    path = Path(path)
    has_norm = model.fitted
    chunks = [_HEADER.pack(MAGIC, FORMAT_VERSION, _KIND_TAGS[model.kind],
                           model.input_dim, model.hidden, model.latent_dim, int(has_norm))]
    for name in _ARRAY_ORDER[model.kind]:
        chunks.append(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())
    if has_norm:
        chunks.append(np.asarray(model.norm_min, dtype="<f8").tobytes())
        chunks.append(np.asarray(model.norm_max, dtype="<f8").tobytes())
    path.write_bytes(b"".join(chunks))
    return path


def _array_shapes(kind, input_dim, hidden, latent_dim):
    if kind == PCA:
        return {"mean": (input_dim,), "components": (latent_dim, input_dim)}
    return {"w1": (input_dim, hidden), "b1": (hidden,), "w2": (hidden, latent_dim), "b2": (latent_dim,),
            "w3": (latent_dim, hidden), "b3": (hidden,), "w4": (hidden, input_dim), "b4": (input_dim,)}


def load_model(path: str | Path) -> EncoderModel:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise EncoderFitError(f"{path} is not an encoder model file")
    magic, version, tag, input_dim, hidden, latent_dim, has_norm = _HEADER.unpack_from(blob)
    kinds = {v: k for k, v in _KIND_TAGS.items()}
    if magic != MAGIC or version != FORMAT_VERSION or tag not in kinds:
        raise EncoderFitError(f"{path} is not an encoder model file")
    kind = kinds[tag]
    shapes = _array_shapes(kind, input_dim, hidden, latent_dim)
    expected = _HEADER.size + 8 * (sum(int(np.prod(s)) for s in shapes.values()) + 2 * latent_dim * bool(has_norm))
    if len(blob) != expected:
        raise EncoderFitError(f"{path} holds {len(blob)} bytes, expected {expected}")
    offset = _HEADER.size
    params = {}
    for name, shape in shapes.items():
        count = int(np.prod(shape))
        params[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).astype(float)
        offset += 8 * count
    model = EncoderModel(kind, input_dim, latent_dim, hidden=hidden, params=params)
    if has_norm:
        model.norm_min = np.frombuffer(blob, dtype="<f8", count=latent_dim, offset=offset).astype(float)
        model.norm_max = np.frombuffer(blob, dtype="<f8", count=latent_dim, offset=offset + 8 * latent_dim).astype(float)
    return model
