"""Unbiased compression operators applied to optimizer iterates.

Rand-k keeps a uniformly random k-subset of coordinates scaled by d/k
(variance parameter omega = d/k - 1). Stochastic quantization rounds each
entry to a uniform grid scaled by the max-norm with unbiased randomized
rounding. The fixed mask is BIASED (no rescaling) and exists only for the
pruning experiment; it is flagged accordingly and fails the unbiasedness
check by construction.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np


class IdentityCompressor:
    kind = "identity"
    biased = False
    omega = 0.0

    def compress(self, x, rng):
        return x


class RandK:
    """Keep k uniformly chosen coordinates, scaled by d/k; zero the rest."""

    kind = "rand_k"
    biased = False

    def __init__(self, k, d):
        if not 1 <= k <= d:
            raise ValueError(f"k must be in [1, {d}], got {k}")
        self.k = k
        self.d = d

    @property
    def omega(self):
        return self.d / self.k - 1.0

    def compress(self, x, rng):
        if x.shape != (self.d,):
            raise ValueError("dimension mismatch")
        keep = rng.choice(self.d, size=self.k, replace=False)
        out = np.zeros_like(x)
        out[keep] = x[keep] * (self.d / self.k)
        return out

    def enumerate_moments(self, x):
        """Exact E[C(x)] and E||C(x) - x||^2 over all k-subsets (small d)."""
        mean = np.zeros_like(x)
        var = 0.0
        subsets = list(combinations(range(self.d), self.k))
        for keep in subsets:
            out = np.zeros_like(x)
            out[list(keep)] = x[list(keep)] * (self.d / self.k)
            mean += out
            var += float(np.sum((out - x) ** 2))
        return mean / len(subsets), var / len(subsets)


class FixedMask:
    """Elementwise binary mask, no rescaling. Biased: violates the unbiased
    compression assumption; used only for the fixed-sparsity pruning study."""

    kind = "fixed_mask"
    biased = True

    def __init__(self, mask):
        self.mask = np.asarray(mask, dtype=np.float64)
        if not np.all(np.isin(self.mask, (0.0, 1.0))):
            raise ValueError("mask entries must be 0 or 1")

    @property
    def omega(self):
        # declared nominal value; the operator does not satisfy the variance
        # bound in the unbiased sense
        return float(np.mean(self.mask == 0.0))

    @staticmethod
    def random(d, sparsity, rng):
        n_zero = int(round(sparsity * d))
        mask = np.ones(d)
        mask[rng.choice(d, size=n_zero, replace=False)] = 0.0
        return FixedMask(mask)

    def compress(self, x, rng):
        if x.shape != self.mask.shape:
            raise ValueError("dimension mismatch")
        return x * self.mask


class StochasticQuantize:
    """Per-entry randomized rounding to a max-norm-scaled uniform grid with
    `levels` intervals. Unbiased per entry; per-entry rounding variance is at
    most (scale/levels)^2/4, giving the conservative omega = d/(4 levels^2)."""

    kind = "stochastic_quantize"
    biased = False

    def __init__(self, levels, d):
        if levels < 1:
            raise ValueError("levels must be >= 1")
        self.levels = levels
        self.d = d

    @property
    def omega(self):
        return self.d / (4.0 * self.levels ** 2)

    def compress(self, x, rng):
        if x.shape != (self.d,):
            raise ValueError("dimension mismatch")
        scale = float(np.max(np.abs(x)))
        if scale == 0.0:
            return x.copy()
        u = np.abs(x) / scale * self.levels
        lower = np.floor(u)
        prob_up = u - lower
        level = lower + (rng.random(x.shape) < prob_up)
        return np.sign(x) * level * (scale / self.levels)


@dataclass
class CompressionStats:
    """Monte-Carlo verification summary for a compressor."""

    mean_error: np.ndarray
    max_abs_mean_error: float
    mean_error_sigmas: float
    variance_ratio: float
    declared_omega: float
    unbiased_ok: bool
    variance_ok: bool
    biased_flag: bool


def verify_compressor(compressor, test_points, trials, rng, mc_slack=0.25):
    """Empirically check unbiasedness and the declared variance bound.

    The mean-error test accepts when every coordinate's Monte-Carlo mean error
    is within 4 standard errors of zero; the variance test accepts when the
    worst observed E||C(x)-x||^2 / ||x||^2 is at most omega * (1 + mc_slack).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    worst_ratio = 0.0
    worst_mean = np.zeros_like(np.asarray(test_points[0], dtype=np.float64))
    worst_abs = -1.0
    worst_sigmas = 0.0
    for x in test_points:
        x = np.asarray(x, dtype=np.float64)
        errs = np.stack([compressor.compress(x, rng) - x for _ in range(trials)])
        mean_err = errs.mean(axis=0)
        se = errs.std(axis=0, ddof=1) / np.sqrt(trials) if trials > 1 else np.zeros_like(x)
        sigmas = float(np.max(np.abs(mean_err) / np.maximum(se, 1e-300))) if trials > 1 else 0.0
        xsq = float(x @ x)
        if xsq > 0.0:
            ratio = float(np.mean(np.einsum("td,td->t", errs, errs))) / xsq
            worst_ratio = max(worst_ratio, ratio)
        if float(np.max(np.abs(mean_err))) > worst_abs:
            worst_abs = float(np.max(np.abs(mean_err)))
            worst_mean = mean_err
        worst_sigmas = max(worst_sigmas, sigmas)
    unbiased_ok = (not compressor.biased) and worst_sigmas <= 4.0
    variance_ok = worst_ratio <= compressor.omega * (1.0 + mc_slack) + 1e-12
    return CompressionStats(
        mean_error=worst_mean,
        max_abs_mean_error=worst_abs,
        mean_error_sigmas=worst_sigmas,
        variance_ratio=worst_ratio,
        declared_omega=compressor.omega,
        unbiased_ok=unbiased_ok,
        variance_ok=variance_ok,
        biased_flag=compressor.biased,
    )
