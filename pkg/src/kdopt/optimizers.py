"""Training dynamics: plain SGD, distillation SGD, the bias-corrected variant
with periodic teacher refresh, and compressed-iterate distillation.

Step functions are the contract surface; `run` drives them over epochs,
records per-epoch statistics, and handles teacher refresh phases. The same
minibatch is used for the student and teacher gradient evaluations inside a
distillation step, so the two stochastic terms share their randomness.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import core
from .errors import DivergedError

DIVERGENCE_THRESHOLD = 1e12

MODES = ("sgd", "kd", "unbiased_kd", "compressed_kd")


@dataclass
class TrainerState:
    """Current iterate, step counter, RNG stream and phase bookkeeping."""

    x: np.ndarray
    t: int = 0
    rng: np.random.Generator = None
    cached_full_teacher_grad: np.ndarray = None
    phase_index: int = 0


@dataclass
class RunSchedule:
    """Everything `run` needs to drive a trajectory."""

    total_steps: int
    gamma: float
    batch_size: int = 1
    mode: str = "sgd"
    lam: float = 0.0
    tau: int = None  # teacher refresh period for self-refresh runs
    sampling: str = "with_replacement"  # or "shuffle"
    track_variance: bool = False
    epoch_length: int = None  # defaults to ceil(N / batch_size)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")
        if self.tau is not None and self.tau < 1:
            raise ValueError("tau must be >= 1")


@dataclass
class TraceRecord:
    """Per-epoch measurements."""

    epoch: int
    running_avg_loss: float
    full_loss: float
    full_grad_norm: float
    grad_variance: float = None
    test_accuracy: float = None


@dataclass
class RunResult:
    trace: list
    x_final: np.ndarray
    phase_losses: list = field(default_factory=list)  # full loss at phase starts
    lam: float = 0.0


def _check_finite(x, state, trace):
    if not np.all(np.isfinite(x)):
        raise DivergedError("non-finite iterate", state=state, trace=trace)


def sgd_step(obj, state, gamma, batch):
    """x <- x - gamma * minibatch_grad(x)."""
    x = state.x - gamma * obj.minibatch_grad(state.x, batch)
    _check_finite(x, state, None)
    return replace(state, x=x, t=state.t + 1)


def kd_step(obj, state, cfg, batch):
    """x <- x - gamma * (g_xi(x) - lam * g_xi(theta)), same batch both terms."""
    if cfg.teacher.shape != state.x.shape:
        raise ValueError("student/teacher dimension mismatch")
    direction = obj.minibatch_grad(state.x, batch) - cfg.lam * obj.minibatch_grad(cfg.teacher, batch)
    x = state.x - cfg.gamma * direction
    _check_finite(x, state, None)
    return replace(state, x=x, t=state.t + 1)


def unbiased_kd_step(obj, state, cfg, batch):
    """Bias-corrected update: adds lam * grad f(theta) to the kd direction.

    Requires the full teacher gradient cached on the state; its conditional
    expectation then equals grad f(x)."""
    if state.cached_full_teacher_grad is None:
        raise ValueError("unbiased step requires cached_full_teacher_grad")
    direction = (obj.minibatch_grad(state.x, batch)
                 - cfg.lam * obj.minibatch_grad(cfg.teacher, batch)
                 + cfg.lam * state.cached_full_teacher_grad)
    x = state.x - cfg.gamma * direction
    _check_finite(x, state, None)
    return replace(state, x=x, t=state.t + 1)


def compressed_kd_step(obj, state, cfg, compressor, batch):
    """x <- C(x - gamma * (g_xi(x) - lam * g_xi(theta))); compression applies
    to the post-update iterate."""
    direction = obj.minibatch_grad(state.x, batch) - cfg.lam * obj.minibatch_grad(cfg.teacher, batch)
    x = compressor.compress(state.x - cfg.gamma * direction, state.rng)
    _check_finite(x, state, None)
    return replace(state, x=x, t=state.t + 1)


class _TeacherCache:
    """Per-sample teacher gradients, computed once per teacher setting."""

    def __init__(self, obj, theta):
        self.grads = obj.per_sample_grads(theta)
        self.full = self.grads.mean(axis=0)

    def batch_grad(self, indices):
        if indices.size == 1:
            return self.grads[indices[0]]
        return self.grads[indices].mean(axis=0)


def run(obj, schedule, init, teacher=None, seed=0, compressor=None, eval_fn=None):
    """Drive a full trajectory; one TraceRecord per epoch.

    teacher: a fixed parameter vector, or the string "self" for phase-wise
    self-refresh (theta <- current iterate every schedule.tau steps, the
    bias-corrected loop). Returns a RunResult; raises DivergedError (carrying
    the partial trace) on non-finite or exploding loss.
    """
    n = obj.n_samples
    epoch_length = schedule.epoch_length or -(-n // schedule.batch_size)
    rng_sample, rng_compress = core.spawn_rngs(seed, 2)
    x = np.array(init, dtype=np.float64)
    mode, lam, gamma = schedule.mode, schedule.lam, schedule.gamma
    if mode == "sgd":
        lam = 0.0
    if mode == "compressed_kd" and compressor is None:
        raise ValueError("compressed_kd mode needs a compressor")

    self_refresh = isinstance(teacher, str) and teacher == "self"
    if teacher is None and (mode in ("kd", "unbiased_kd") or (mode == "compressed_kd" and lam != 0.0)):
        raise ValueError(f"mode {mode} with lambda {lam} needs a teacher")
    theta = x.copy() if self_refresh else (None if teacher is None else np.asarray(teacher, dtype=np.float64))
    cache = _TeacherCache(obj, theta) if theta is not None else None

    trace = []
    phase_losses = [obj.full_loss(x)] if (self_refresh or schedule.tau) else []
    phase_index = 0

    loss_sum = 0.0
    var_sum = 0.0
    steps_in_epoch = 0
    epoch = 0
    batches = None  # shuffle mode buffer

    for t in range(schedule.total_steps):
        # teacher refresh at phase boundaries
        if self_refresh and schedule.tau and t > 0 and t % schedule.tau == 0:
            theta = x.copy()
            cache = _TeacherCache(obj, theta)
            phase_index += 1
            phase_losses.append(obj.full_loss(x))

        if schedule.sampling == "shuffle":
            if not batches:
                batches = core.shuffled_epoch(n, schedule.batch_size, rng_sample)[::-1]
            batch = batches.pop()
        else:
            batch = core.sample_minibatch(n, schedule.batch_size, rng_sample)

        g = obj.minibatch_grad(x, batch)
        if mode == "sgd" or cache is None:
            direction = g
        else:
            direction = g - lam * cache.batch_grad(batch.indices)
            if mode == "unbiased_kd":
                direction = direction + lam * cache.full

        loss_sum += obj.minibatch_loss(x, batch)
        if schedule.track_variance:
            mean_dir = obj.full_grad(x)
            if mode in ("kd", "compressed_kd") and cache is not None:
                mean_dir = mean_dir - lam * cache.full
            d = direction - mean_dir
            var_sum += float(d @ d)
        steps_in_epoch += 1

        x = x - gamma * direction
        if mode == "compressed_kd":
            x = compressor.compress(x, rng_compress)

        if not np.all(np.isfinite(x)):
            raise DivergedError("non-finite iterate", state=TrainerState(x=x, t=t), trace=trace)

        if steps_in_epoch == epoch_length or t == schedule.total_steps - 1:
            full_loss = obj.full_loss(x)
            if not np.isfinite(full_loss) or full_loss > DIVERGENCE_THRESHOLD:
                raise DivergedError("loss diverged", state=TrainerState(x=x, t=t), trace=trace)
            fg = obj.full_grad(x)
            trace.append(TraceRecord(
                epoch=epoch,
                running_avg_loss=loss_sum / steps_in_epoch,
                full_loss=full_loss,
                full_grad_norm=float(np.sqrt(fg @ fg)),
                grad_variance=(var_sum / steps_in_epoch) if schedule.track_variance else None,
                test_accuracy=eval_fn(x) if eval_fn is not None else None,
            ))
            epoch += 1
            loss_sum = 0.0
            var_sum = 0.0
            steps_in_epoch = 0

    if self_refresh or schedule.tau:
        phase_losses.append(obj.full_loss(x))

    return RunResult(trace=trace, x_final=x, phase_losses=phase_losses, lam=lam)
