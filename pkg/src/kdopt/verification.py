"""Self-contained property suite behind the `verify` CLI subcommand.

Each check returns a PropertyResult with the observed value and its
tolerance; the suite passes only if every property passes. Deliberate
breakage hooks (mutated gradient / wrong rand-k scaling) are exposed for
mutation testing of the suite itself.
"""

from dataclasses import dataclass

import numpy as np

from . import compression, core, data_io, distillation, numcheck, objectives, oracle, telemetry
from .optimizers import RunSchedule, run


@dataclass
class PropertyResult:
    name: str
    observed: float
    tolerance: float
    passed: bool

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: observed={self.observed:.3e} tolerance={self.tolerance:.3e}"


def _random_instance(kind, rng, n=5, d=4, k=3):
    if kind == "linear_regression":
        ds, _ = data_io.synth("linear_gaussian", n, d, 1.0, int(rng.integers(1 << 30)))
        return objectives.LinearRegression(ds)
    if kind == "binary_logistic":
        ds = data_io.synth("logistic_noisy", n, d, 1.0, int(rng.integers(1 << 30)))
        return objectives.BinaryLogistic(ds)
    if kind == "softmax_linear":
        ds = data_io.synth_blobs(n, d, k, 1.0, int(rng.integers(1 << 30)))
        return objectives.SoftmaxLinear(ds)
    ds = data_io.synth_blobs(n, d, k, 1.0, int(rng.integers(1 << 30)))
    return objectives.MLPRelu(ds, hidden=4)


def check_gradients(rng, trials=20, tol=1e-5, mutate=False):
    """Per-sample analytic gradients vs central differences, all kinds."""
    worst = 0.0
    for kind in ("linear_regression", "binary_logistic", "softmax_linear", "mlp_relu"):
        for _ in range(trials):
            obj = _random_instance(kind, rng)
            x = rng.standard_normal(obj.param_dim) * 0.5
            n = int(rng.integers(obj.n_samples))
            g = obj.grad(x, n)
            if mutate:
                g = -g
            fd = numcheck.central_difference(lambda v: obj.loss(v, n), x)
            worst = max(worst, numcheck.rel_error(g, fd))
    return PropertyResult("per_sample_gradient_vs_finite_difference", worst, tol, worst <= tol)


def check_distillation_grad(rng, trials=20, tol=1e-5, mutate=False):
    """Closed-form distillation gradient vs finite differences of the
    composite distillation loss, exact model kinds."""
    worst = 0.0
    for kind in distillation.EXACT_KINDS:
        for _ in range(trials):
            obj = _random_instance(kind, rng)
            x = rng.standard_normal(obj.param_dim) * 0.5
            theta = rng.standard_normal(obj.param_dim) * 0.5
            lam = float(rng.uniform(0.0, 1.0))
            n = int(rng.integers(obj.n_samples))
            cfg = distillation.KDConfig(lam=lam, gamma=0.1, teacher=theta)
            g = distillation.distillation_grad(obj, x, cfg, n)
            if mutate:
                g = obj.grad(x, n) + lam * obj.grad(theta, n)
            fd = numcheck.central_difference(lambda v: distillation.kd_loss(obj, v, cfg, n), x)
            worst = max(worst, numcheck.rel_error(g, fd))
    return PropertyResult("distillation_gradient_vs_finite_difference", worst, tol, worst <= tol)


def check_lemma_identities(rng, instances=20, tol_lambda=1e-8, tol_ratio=1e-10):
    """Analytic optimal weight vs golden-section minimizer, and the
    closed-form reduction ratio vs the direct quotient."""
    worst_lam = 0.0
    worst_ratio = 0.0
    for _ in range(instances):
        ds, _ = data_io.synth("linear_gaussian", 8, 4, 1.0, int(rng.integers(1 << 30)))
        obj = objectives.LinearRegression(ds)
        constants = oracle.solve_linear_regression(obj)
        theta = constants.x_star + 0.5 * rng.standard_normal(obj.param_dim)
        gamma, c = 0.05, 1.0
        cfg = distillation.KDConfig(lam=0.0, gamma=gamma, teacher=theta, c=c)
        stats = distillation.teacher_stats(obj, constants.x_star, theta)
        lam_analytic, _ = distillation.optimal_lambda(cfg, stats)
        lam_numeric = oracle.golden_section_lambda(obj, theta, gamma, c, constants.x_star)
        worst_lam = max(worst_lam, abs(lam_analytic - lam_numeric))
        ratio_closed = distillation.reduction_ratio(cfg, stats)
        ratio_direct = (distillation.neighborhood_N(lam_analytic, cfg, stats)
                        / distillation.neighborhood_N(0.0, cfg, stats))
        worst_ratio = max(worst_ratio, abs(ratio_closed - ratio_direct))
    results = [
        PropertyResult("optimal_lambda_vs_golden_section", worst_lam, tol_lambda,
                       worst_lam <= tol_lambda),
        PropertyResult("reduction_ratio_closed_form_vs_quotient", worst_ratio, tol_ratio,
                       worst_ratio <= tol_ratio),
    ]
    return results


def check_rand_k(tol=1e-12, wrong_scaling=False):
    """Exhaustive rand-k identities: E[C(x)] = x, E||C(x)-x||^2 = (d/k-1)||x||^2."""
    worst = 0.0
    for d in (4, 6, 8):
        for k in (1, d // 2, d):
            comp = compression.RandK(k, d)
            x = np.linspace(-1.0, 2.0, d)
            mean, var = comp.enumerate_moments(x)
            if wrong_scaling:
                mean = mean * (d / max(k - 1, 1)) / (d / k)
            worst = max(worst, float(np.max(np.abs(mean - x))))
            worst = max(worst, abs(var - comp.omega * float(x @ x)))
    return PropertyResult("rand_k_exhaustive_identities", worst, tol, worst <= tol)


def check_unbiasedness(rng, tol=1e-12):
    """Enumeration-averaged unbiased distillation direction equals the full
    gradient."""
    ds, _ = data_io.synth("linear_gaussian", 16, 5, 1.0, int(rng.integers(1 << 30)))
    obj = objectives.LinearRegression(ds)
    x = rng.standard_normal(obj.param_dim)
    theta = rng.standard_normal(obj.param_dim)
    lam = 0.7
    g_theta = obj.per_sample_grads(theta)
    full_theta = g_theta.mean(axis=0)
    dirs = np.stack([obj.grad(x, n) - lam * g_theta[n] + lam * full_theta
                     for n in range(obj.n_samples)])
    err = float(np.max(np.abs(dirs.mean(axis=0) - obj.full_grad(x))))
    return PropertyResult("unbiased_direction_enumeration_mean", err, tol, err <= tol)


def check_compressors(rng):
    """Monte-Carlo unbiasedness/variance contract for each unbiased kind, and
    the fixed mask failing the mean test."""
    d = 16
    points = [rng.standard_normal(d) for _ in range(3)]
    results = []
    for comp in (compression.IdentityCompressor(),
                 compression.RandK(4, d),
                 compression.StochasticQuantize(4, d)):
        stats = compression.verify_compressor(comp, points, trials=4000, rng=rng)
        ok = stats.unbiased_ok and stats.variance_ok
        results.append(PropertyResult(
            f"compressor_contract_{comp.kind}", stats.variance_ratio,
            comp.omega * 1.25 + 1e-12, ok))
    mask = compression.FixedMask.random(d, 0.5, rng)
    stats = compression.verify_compressor(mask, points, trials=100, rng=rng)
    results.append(PropertyResult(
        "fixed_mask_flagged_biased", stats.max_abs_mean_error, 0.0,
        stats.biased_flag and not stats.unbiased_ok))
    return results


def check_sgd_convergence(rng, tol=1e-6):
    """Deterministic full-batch descent on a solvable quadratic reaches x*."""
    ds, _ = data_io.synth("linear_gaussian", 30, 5, 0.5, int(rng.integers(1 << 30)))
    obj = objectives.LinearRegression(ds)
    constants = oracle.solve_linear_regression(obj)
    # linear contraction (1 - mu/L) per step: size the budget from kappa
    kappa = constants.l_full / constants.mu
    norm0 = max(float(np.linalg.norm(constants.x_star)), 1.0)
    steps = int(np.ceil(kappa * np.log(norm0 / (0.01 * tol)))) + 10
    sched = RunSchedule(total_steps=steps, gamma=1.0 / constants.l_full,
                        batch_size=obj.n_samples, mode="sgd", sampling="shuffle")
    result = run(obj, sched, np.zeros(obj.param_dim), seed=0)
    err = float(np.linalg.norm(result.x_final - constants.x_star))
    return PropertyResult("full_batch_descent_reaches_optimum", err, tol, err <= tol)


def run_suite(seed=20240901):
    """Full property suite; returns (results, all_passed)."""
    rng = core.make_rng(seed)
    results = [check_gradients(rng), check_distillation_grad(rng)]
    results += check_lemma_identities(rng)
    results.append(check_rand_k())
    results.append(check_unbiasedness(rng))
    results += check_compressors(rng)
    results.append(check_sgd_convergence(rng))
    return results, all(r.passed for r in results)
