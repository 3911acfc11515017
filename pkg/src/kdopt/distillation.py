"""Distillation gradients, soft labels, and the optimal-weight machinery.

The core identity: for linear regression, binary logistic and linear softmax
models, the per-sample gradient of the distillation loss
(1-lam) * loss(x, b_n) + lam * loss(x, teacher_output_n) equals
grad_n(x) - lam * grad_n(teacher). For generic softmax networks the identity
is only approximate; the exact gradient is obtained by backpropagating the
soft label through the student, and both forms are exposed so the gap can be
measured.

All expectations over sampling are computed by exact enumeration of
single-sample minibatches (uniform over the N data points), which makes the
optimal-weight identities exactly testable.
"""

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedRatioError
from .objectives import MLPRelu

EXACT_KINDS = ("linear_regression", "binary_logistic", "softmax_linear")

# Moments below this are treated as exactly zero when they appear in a
# denominator: a numerically solved interpolating optimum leaves residual
# gradients of order 1e-15, i.e. squared moments of order 1e-30.
DEGENERATE_MOMENT = 1e-24


@dataclass
class KDConfig:
    """Distillation weight, step size, teacher parameters, and the positive
    constant c entering the neighborhood function (analysis-dependent)."""

    lam: float
    gamma: float
    teacher: np.ndarray
    c: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")
        if self.c <= 0.0:
            raise ValueError("c must be positive")


@dataclass
class TeacherStats:
    """Exact gradient moments at the teacher and the optimum.

    full_grad_norm_sq: ||grad f(theta)||^2
    second_moment:     E ||grad f_xi(theta)||^2
    cross_moment:      E <grad f_xi(x*), grad f_xi(theta)>
    sigma_star_sq:     E ||grad f_xi(x*)||^2
    """

    full_grad_norm_sq: float
    second_moment: float
    cross_moment: float
    sigma_star_sq: float

    def __post_init__(self):
        if self.second_moment < self.full_grad_norm_sq - 1e-9 * max(1.0, self.second_moment):
            raise ValueError("second moment below squared mean gradient")
        if self.sigma_star_sq < 0.0:
            raise ValueError("sigma_star_sq must be nonnegative")


def soft_label(b, teacher_out, lam):
    """(1 - lam) * b + lam * teacher_out."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    b = np.asarray(b, dtype=np.float64)
    t = np.asarray(teacher_out, dtype=np.float64)
    if b.shape != t.shape:
        raise ValueError("target and teacher output shapes differ")
    out = (1.0 - lam) * b + lam * t
    return float(out) if out.ndim == 0 else out


def kd_loss(obj, x, cfg, n):
    """Per-sample distillation loss: the convex combination of the data loss
    and the loss against the teacher's output on the same sample."""
    teacher_out = obj.predict(cfg.teacher, n)
    return (1.0 - cfg.lam) * obj.loss(x, n) + cfg.lam * obj.loss(x, n, target=teacher_out)


def distillation_grad(obj, x, cfg, n):
    """grad_n(x) - lam * grad_n(theta); exact for the three linear-model kinds."""
    if obj.kind not in EXACT_KINDS:
        raise ValueError(
            f"closed-form distillation gradient is exact only for {EXACT_KINDS}; "
            "use true_kd_grad/approx_kd_grad for MLP objectives")
    if x.shape != cfg.teacher.shape:
        raise ValueError("student/teacher dimension mismatch")
    return obj.grad(x, n) - cfg.lam * obj.grad(cfg.teacher, n)


def true_kd_grad(obj, x, cfg, n):
    """Exact gradient of the distillation loss for an MLP: backprop of the
    soft label through the student's own network."""
    if not isinstance(obj, MLPRelu):
        raise ValueError("true_kd_grad applies to MLP objectives only")
    s = soft_label(obj.onehot[n], obj.predict(cfg.teacher, n), cfg.lam)
    return obj.grad(x, n, target=s)


def approx_kd_grad(obj, x, cfg, n):
    """The linear-model formula grad_n(x) - lam * grad_n(theta) applied to an
    MLP verbatim; differs from true_kd_grad because the second term carries
    the teacher's Jacobian."""
    if not isinstance(obj, MLPRelu):
        raise ValueError("approx_kd_grad applies to MLP objectives only")
    return obj.grad(x, n) - cfg.lam * obj.grad(cfg.teacher, n)


def teacher_stats(obj, x_star, theta):
    """Exact TeacherStats by enumerating all single-sample gradients."""
    g_theta = obj.per_sample_grads(theta)
    g_star = obj.per_sample_grads(x_star)
    mean_theta = g_theta.mean(axis=0)
    return TeacherStats(
        full_grad_norm_sq=float(mean_theta @ mean_theta),
        second_moment=float(np.mean(np.einsum("nd,nd->n", g_theta, g_theta))),
        cross_moment=float(np.mean(np.einsum("nd,nd->n", g_star, g_theta))),
        sigma_star_sq=float(np.mean(np.einsum("nd,nd->n", g_star, g_star))),
    )


def beta_snr(obj, theta):
    """Signal-to-noise ratio ||grad f(theta)||^2 / E ||grad f_xi(theta)||^2."""
    g = obj.per_sample_grads(theta)
    second = float(np.mean(np.einsum("nd,nd->n", g, g)))
    if second <= DEGENERATE_MOMENT:
        raise UndefinedRatioError("teacher gradient second moment is zero")
    mean = g.mean(axis=0)
    return float(mean @ mean) / second


def rho_correlation(obj, x_star, theta):
    """Correlation of stochastic gradients at the optimum and at the teacher.

    Uses grad f(x*) = 0, so the covariance reduces to the raw cross moment.
    """
    stats = teacher_stats(obj, x_star, theta)
    var_theta = stats.second_moment - stats.full_grad_norm_sq
    if stats.sigma_star_sq <= DEGENERATE_MOMENT or var_theta <= DEGENERATE_MOMENT:
        raise UndefinedRatioError("zero gradient variance at x* or theta")
    return stats.cross_moment / np.sqrt(stats.sigma_star_sq * var_theta)


def neighborhood_N(lam, cfg, stats):
    """Stationary-neighborhood size as a function of the distillation weight:

        N(lam) = lam^2 G + c * gamma * (sigma*^2 - 2 lam X + lam^2 M)

    with G the squared full teacher gradient, X the cross moment and M the
    teacher second moment. N(0) = c * gamma * sigma*^2 is the plain-SGD value.
    """
    g, x, m = stats.full_grad_norm_sq, stats.cross_moment, stats.second_moment
    return lam * lam * g + cfg.c * cfg.gamma * (stats.sigma_star_sq - 2.0 * lam * x + lam * lam * m)


def optimal_lambda(cfg, stats):
    """Unconstrained minimizer of neighborhood_N.

    Returns (lambda_star, clamped) where clamped is True when lambda_star
    falls outside [0, 1] and would need clamping before use in KDConfig.
    """
    denom = stats.second_moment + stats.full_grad_norm_sq / (cfg.c * cfg.gamma)
    if denom <= 0.0:
        raise UndefinedRatioError("optimal lambda undefined: zero denominator")
    lam = stats.cross_moment / denom
    return lam, not 0.0 <= lam <= 1.0


def reduction_ratio(cfg, stats):
    """N(lambda*) / N(0) in closed form:

        1 - rho^2 * (1 - beta) / (1 + beta / (c * gamma))
    """
    if stats.sigma_star_sq <= DEGENERATE_MOMENT:
        raise UndefinedRatioError("sigma*^2 = 0: plain SGD is already noise-free")
    var_theta = stats.second_moment - stats.full_grad_norm_sq
    if stats.second_moment <= DEGENERATE_MOMENT or var_theta <= DEGENERATE_MOMENT:
        raise UndefinedRatioError("zero teacher gradient variance")
    beta = stats.full_grad_norm_sq / stats.second_moment
    rho_sq = stats.cross_moment ** 2 / (stats.sigma_star_sq * var_theta)
    return 1.0 - rho_sq * (1.0 - beta) / (1.0 + beta / (cfg.c * cfg.gamma))
