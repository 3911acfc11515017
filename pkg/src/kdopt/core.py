"""Numeric substrate: dense parameter vectors, seeded RNG streams, minibatch sampling.

Parameter vectors are plain float64 numpy arrays. All randomness flows through
numpy's PCG64 generator; identical seeds reproduce identical streams, and
per-component sub-streams are derived with SeedSequence.spawn so concurrent
trajectories never share state.
"""

from dataclasses import dataclass

import numpy as np

RNG_ALGORITHM = "PCG64"


def make_rng(seed):
    """Deterministic generator for a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed, n):
    """n independent sub-stream generators derived from one seed."""
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n)]


def as_param_vector(values):
    """Validate and return a flat finite float64 vector."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("parameter vector contains non-finite entries")
    return x


@dataclass(frozen=True)
class Minibatch:
    """Indices into a dataset plus the uniform averaging weight 1/|batch|."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.size == 0:
            raise ValueError("minibatch must be nonempty")
        object.__setattr__(self, "indices", idx)

    @property
    def weight(self):
        return 1.0 / self.indices.size

    def __len__(self):
        return self.indices.size


def sample_minibatch(dataset_size, batch_size, rng, with_replacement=True):
    """Uniform minibatch of indices; each index has marginal probability 1/dataset_size.

    With replacement (the default) the minibatch gradient is an unbiased
    estimator of the full gradient. Without replacement is offered for
    epoch-style runs; use shuffled_epoch for full epochs.
    """
    if batch_size < 1 or batch_size > dataset_size:
        raise ValueError(f"batch_size must be in [1, {dataset_size}], got {batch_size}")
    if with_replacement:
        idx = rng.integers(0, dataset_size, size=batch_size)
    else:
        idx = rng.choice(dataset_size, size=batch_size, replace=False)
    return Minibatch(idx)


def shuffled_epoch(dataset_size, batch_size, rng):
    """Partition a shuffled permutation into minibatches (last one may be short)."""
    perm = rng.permutation(dataset_size)
    return [Minibatch(perm[i:i + batch_size]) for i in range(0, dataset_size, batch_size)]


def dot(a, b):
    if a.shape != b.shape:
        raise ValueError("length mismatch in dot")
    return float(np.dot(a, b))


def axpy(alpha, a, b):
    """alpha * a + b."""
    if a.shape != b.shape:
        raise ValueError("length mismatch in axpy")
    return alpha * a + b


def norm_sq(a):
    return float(np.dot(a, a))
