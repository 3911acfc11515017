"""Measurement instruments and their CSV serialization.

Gradient variance is measured on the method's stochastic update direction
around the direction's own mean (the noise the analysis dampens); the probe
exposes both exact enumeration over single-sample batches and a Monte-Carlo
mode. Gap statistics quantify how far the linear-model distillation formula
is from the exact backprop gradient on an MLP.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import core, distillation
from .errors import UndefinedRatioError

TRACE_HEADER = ["epoch", "run_id", "seed", "mode", "lambda", "gamma",
                "loss_running", "loss_full", "grad_variance",
                "cosine", "l2", "snr", "test_acc"]


@dataclass
class EpochStats:
    epoch: int
    run_id: str
    seed: int
    mode: str
    lam: float
    gamma: float
    loss_running: float
    loss_full: float
    grad_variance: float = None
    cosine: float = None
    l2: float = None
    snr: float = None
    test_acc: float = None


def grad_variance_probe(obj, x, direction_fn, mode="exact", trials=None, rng=None):
    """Variance of a stochastic direction around its own mean.

    direction_fn maps a Minibatch to the method's update direction. Exact
    mode enumerates all single-sample batches; Monte-Carlo mode draws
    `trials` batches from rng and returns the unbiased sample variance.
    """
    if mode == "exact":
        dirs = np.stack([direction_fn(core.Minibatch([n])) for n in range(obj.n_samples)])
        mean = dirs.mean(axis=0)
        diff = dirs - mean
        return float(np.mean(np.einsum("nd,nd->n", diff, diff)))
    if mode == "mc":
        if trials is None or trials < 2:
            raise ValueError("Monte-Carlo mode needs trials >= 2")
        dirs = np.stack([direction_fn(core.sample_minibatch(obj.n_samples, 1, rng))
                         for _ in range(trials)])
        mean = dirs.mean(axis=0)
        diff = dirs - mean
        return float(np.sum(np.einsum("nd,nd->n", diff, diff)) / (trials - 1))
    raise ValueError(f"unknown probe mode {mode!r}")


def approx_gap_stats(mlp_obj, x, theta, lam, batch):
    """(cosine, l2, snr) between the exact and approximated distillation
    gradients, averaged over the batch. snr is l2 over the exact gradient
    norm. Cosine is None (missing) when the exact gradient vanishes."""
    cfg = distillation.KDConfig(lam=lam, gamma=1.0, teacher=theta)
    true = np.zeros(mlp_obj.param_dim)
    approx = np.zeros(mlp_obj.param_dim)
    for n in batch.indices:
        true += distillation.true_kd_grad(mlp_obj, x, cfg, int(n))
        approx += distillation.approx_kd_grad(mlp_obj, x, cfg, int(n))
    true /= len(batch)
    approx /= len(batch)
    l2 = float(np.linalg.norm(true - approx))
    true_norm = float(np.linalg.norm(true))
    if true_norm == 0.0:
        return None, l2, None
    approx_norm = float(np.linalg.norm(approx))
    cosine = None if approx_norm == 0.0 else float(true @ approx) / (true_norm * approx_norm)
    return cosine, l2, l2 / true_norm


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_trace(records, path):
    """Fixed-header CSV; floats at 17 significant digits, missing fields empty."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_HEADER)
        for r in records:
            writer.writerow([_fmt(v) for v in (
                r.epoch, r.run_id, r.seed, r.mode, r.lam, r.gamma,
                r.loss_running, r.loss_full, r.grad_variance,
                r.cosine, r.l2, r.snr, r.test_acc)])


def read_trace(path):
    """Reparse a trace CSV into EpochStats (exact float round-trip)."""
    out = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {header}")
        for row in reader:
            opt = lambda s: None if s == "" else float(s)
            out.append(EpochStats(
                epoch=int(row[0]), run_id=row[1], seed=int(row[2]), mode=row[3],
                lam=float(row[4]), gamma=float(row[5]),
                loss_running=float(row[6]), loss_full=float(row[7]),
                grad_variance=opt(row[8]), cosine=opt(row[9]),
                l2=opt(row[10]), snr=opt(row[11]), test_acc=opt(row[12])))
    return out
