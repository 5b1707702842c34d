"""
variation.py

Uniform selection from the archive and bounded polynomial mutation.

The mutation is the unbounded-polynomial form (the perturbation does not
depend on the distance to the bounds) followed by clipping to [low, high].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from aurora_qd.core import GENE_HIGH, GENE_LOW, GENOTYPE_SIZE, GenotypeError


@dataclass(frozen=True)
class MutationParams:
    eta: float = 10.0
    rate: float = 0.3
    low: float = GENE_LOW
    high: float = GENE_HIGH

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be > 0 for polynomial mutation")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("rate must be in [0, 1]")
        if not np.all(np.asarray(self.low) < np.asarray(self.high)):
            raise ValueError("every gene needs low < high")


def select_uniform(container, n: int, rng: np.random.Generator) -> list[np.ndarray]:
    """n parents drawn uniformly with replacement."""
    if len(container) == 0:
        raise ValueError("cannot select from an empty container")
    picks = rng.integers(0, len(container), size=n)
    return [container.entries[i].genotype for i in picks]


def polynomial_delta(u, eta: float):
    """Perturbation for uniform draws u in [0, 1); delta(0.5) = 0."""
    u = np.asarray(u, dtype=float)
    power = 1.0 / (eta + 1.0)
    low_branch = np.power(2.0 * u, power) - 1.0
    high_branch = 1.0 - np.power(np.maximum(2.0 * (1.0 - u), 0.0), power)
    return np.where(u < 0.5, low_branch, high_branch)


def polynomial_mutate(genotype, params: MutationParams, rng: np.random.Generator) -> np.ndarray:
    x = np.asarray(genotype, dtype=float)
    if np.any(x < params.low) or np.any(x > params.high):
        raise GenotypeError("gene outside its bounds before mutation")
    mask = rng.random(x.shape) < params.rate
    u = rng.random(x.shape)
    mutated = np.clip(x + polynomial_delta(u, params.eta) * (params.high - params.low), params.low, params.high)
    return np.where(mask, mutated, x)


def random_genotypes(n: int, rng: np.random.Generator, params: MutationParams | None = None) -> np.ndarray:
    """Uniform genotypes inside the gene bounds."""
    params = params or MutationParams()
    return rng.uniform(params.low, params.high, size=(n, GENOTYPE_SIZE))
