"""Exact ground truth for solvable problems.

For linear regression the minimizer, optimal value and the curvature
constants are spectral quantities of the data Gram matrix and are computed in
closed form. For other objectives the expected-smoothness constant is only
available empirically (max observed ratio over sampled points) and is marked
as such. A golden-section minimizer over the enumerated neighborhood function
serves as the independent numeric check for the analytic optimal weight.
"""

from dataclasses import dataclass

import numpy as np

from . import distillation


@dataclass
class ExactConstants:
    """x*, f*, and the curvature/noise constants mu <= L <= L_expected."""

    x_star: np.ndarray
    f_star: float
    mu: float
    l_full: float
    l_expected: float
    sigma_star_sq: float
    rank_deficient: bool = False
    empirical: bool = False


def solve_linear_regression(obj):
    """Closed-form constants for a linear-regression objective.

    x* solves the normal equations (dense symmetric eigendecomposition, so a
    rank-deficient Gram matrix falls back to the minimum-norm solution with
    mu = 0 flagged). mu and L are the extreme eigenvalues of the Hessian
    (2/N) Abar^T Abar; the expected-smoothness constant for single-sample
    uniform subsampling is 2 * max_n ||abar_n||^2.
    """
    if obj.kind != "linear_regression":
        raise ValueError("exact constants implemented for linear regression only")
    a, b = obj.abar, obj.b
    n = a.shape[0]
    hess = (2.0 / n) * (a.T @ a)
    evals, evecs = np.linalg.eigh(hess)
    l_full = float(evals[-1])
    pivot = 1e-12 * max(l_full, 1.0)
    rank_deficient = bool(evals[0] <= pivot)
    mu = 0.0 if rank_deficient else float(evals[0])
    rhs = (2.0 / n) * (a.T @ b)
    inv = np.divide(1.0, evals, out=np.zeros_like(evals), where=evals > pivot)
    x_star = evecs @ (inv * (evecs.T @ rhs))
    # one Newton-style refinement pass against the normal equations
    if not rank_deficient:
        resid = rhs - hess @ x_star
        x_star = x_star + evecs @ ((evecs.T @ resid) / evals)
    l_expected = 2.0 * float(np.max(np.einsum("nd,nd->n", a, a)))
    g_star = obj.per_sample_grads(x_star)
    sigma_star_sq = float(np.mean(np.einsum("nd,nd->n", g_star, g_star)))
    return ExactConstants(
        x_star=x_star,
        f_star=obj.full_loss(x_star),
        mu=mu,
        l_full=l_full,
        l_expected=l_expected,
        sigma_star_sq=sigma_star_sq,
        rank_deficient=rank_deficient,
    )


def empirical_expected_smoothness(obj, x_star, samples, rng, radius=1.0):
    """Max observed ratio of E||g_xi(x) - g_xi(x*)||^2 to 2 (f(x) - f*) over
    random points; a lower bound on the true constant, marked empirical."""
    f_star = obj.full_loss(x_star)
    g_star = obj.per_sample_grads(x_star)
    best = 0.0
    for _ in range(samples):
        x = x_star + radius * rng.standard_normal(obj.param_dim)
        gap = obj.full_loss(x) - f_star
        if gap <= 1e-14:
            continue
        diff = obj.per_sample_grads(x) - g_star
        best = max(best, float(np.mean(np.einsum("nd,nd->n", diff, diff))) / (2.0 * gap))
    return best


def expected_smoothness_check(obj, constants, samples, rng, radius=1.0):
    """Verify E||g_xi(x) - g_xi(x*)||^2 <= 2 L_expected (f(x) - f*) at random
    points. Returns (max_ratio, violations); raises on a witness violation."""
    max_ratio = 0.0
    violations = []
    g_star = obj.per_sample_grads(constants.x_star)
    for _ in range(samples):
        x = constants.x_star + radius * rng.standard_normal(obj.param_dim)
        gap = obj.full_loss(x) - constants.f_star
        if gap <= 1e-14:
            continue
        diff = obj.per_sample_grads(x) - g_star
        ratio = float(np.mean(np.einsum("nd,nd->n", diff, diff))) / (2.0 * gap)
        max_ratio = max(max_ratio, ratio)
        if ratio > constants.l_expected * (1.0 + 1e-9):
            violations.append(x)
    if violations:
        raise ValueError(
            f"expected-smoothness violated at {len(violations)} points; "
            f"max ratio {max_ratio:.6g} > declared {constants.l_expected:.6g}")
    return max_ratio, violations


def golden_section_lambda(obj, theta, gamma, c, x_star, interval=(-2.0, 2.0), tol=1e-10):
    """Numeric minimizer of the enumerated neighborhood function over an
    interval; independent of the analytic optimal-weight formula."""
    stats = distillation.teacher_stats(obj, x_star, theta)
    cfg = distillation.KDConfig(lam=0.0, gamma=gamma, teacher=theta, c=c)

    def n_of(lam):
        return distillation.neighborhood_N(lam, cfg, stats)

    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    lo, hi = interval
    a, b = hi - invphi * (hi - lo), lo + invphi * (hi - lo)
    fa, fb = n_of(a), n_of(b)
    while hi - lo > tol:
        if fa < fb:
            hi, b, fb = b, a, fa
            a = hi - invphi * (hi - lo)
            fa = n_of(a)
        else:
            lo, a, fa = a, b, fb
            b = lo + invphi * (hi - lo)
            fb = n_of(b)
    return 0.5 * (lo + hi)


def make_teacher(obj, constants, quality, direction, tol=1e-10):
    """Teacher at a prescribed suboptimality: theta = x* + alpha * direction
    with alpha found by bisection so that f(theta) - f* = quality."""
    if quality < 0.0:
        raise ValueError("quality must be nonnegative")
    u = np.asarray(direction, dtype=np.float64)
    u = u / np.linalg.norm(u)
    if quality == 0.0:
        return constants.x_star.copy()

    def gap(alpha):
        return obj.full_loss(constants.x_star + alpha * u) - constants.f_star

    hi = 1.0
    while gap(hi) < quality:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("cannot reach requested suboptimality along direction")
    lo = 0.0
    while hi - lo > tol * max(1.0, hi) or abs(gap(0.5 * (lo + hi)) - quality) > tol:
        mid = 0.5 * (lo + hi)
        if gap(mid) < quality:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16 * max(1.0, hi):
            break
    return constants.x_star + 0.5 * (lo + hi) * u
