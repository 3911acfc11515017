import numpy as np
import pytest

from kdopt import core, data_io, numcheck, objectives


def _instance(kind, seed, n=6, d=4, k=3):
    rng = core.make_rng(seed)
    if kind == "linear_regression":
        ds, _ = data_io.synth("linear_gaussian", n, d, 1.0, seed)
        return objectives.LinearRegression(ds)
    if kind == "binary_logistic":
        ds = data_io.synth("logistic_noisy", n, d, 1.0, seed)
        return objectives.BinaryLogistic(ds)
    if kind == "softmax_linear":
        return objectives.SoftmaxLinear(data_io.synth_blobs(n, d, k, 1.0, seed))
    return objectives.MLPRelu(data_io.synth_blobs(n, d, k, 1.0, seed), hidden=4)


def test_linear_regression_zero_residual_loss():
    ds = objectives.Dataset(inputs=[[1.0]], targets=[0.0])
    obj = objectives.LinearRegression(ds)
    assert obj.loss(np.zeros(2), 0) == 0.0
    assert np.array_equal(obj.grad(np.zeros(2), 0), np.zeros(2))


def test_binary_logistic_loss_at_zero():
    ds = objectives.Dataset(inputs=[[1.0]], targets=[1.0])
    obj = objectives.BinaryLogistic(ds)
    assert obj.loss(np.zeros(2), 0) == pytest.approx(np.log(2.0), abs=1e-15)
    # sigma(0) - 1 = -0.5 on the lifted input [1, 1]
    assert np.allclose(obj.grad(np.zeros(2), 0), [-0.5, -0.5], atol=1e-15)


def test_softmax_loss_at_zero():
    ds = objectives.Dataset(inputs=np.ones((1, 2)), targets=[3], n_classes=10)
    obj = objectives.SoftmaxLinear(ds)
    assert obj.loss(np.zeros(obj.param_dim), 0) == pytest.approx(np.log(10.0), abs=1e-12)


def test_predict_examples():
    blog = objectives.BinaryLogistic(objectives.Dataset(inputs=[[2.0]], targets=[1.0]))
    assert blog.predict(np.zeros(2), 0) == 0.5

    soft = objectives.SoftmaxLinear(
        objectives.Dataset(inputs=[[1.0, 1.0]], targets=[0], n_classes=4))
    p = soft.predict(np.zeros(soft.param_dim), 0)
    assert np.allclose(p, 0.25, atol=1e-15)

    lin = objectives.LinearRegression(objectives.Dataset(inputs=[[3.0]], targets=[0.0]))
    assert lin.predict(np.array([2.0, 1.0]), 0) == 7.0


def test_softmax_predict_normalized():
    obj = _instance("softmax_linear", 1)
    rng = core.make_rng(2)
    for _ in range(20):
        p = obj.predict(rng.standard_normal(obj.param_dim), int(rng.integers(obj.n_samples)))
        assert abs(p.sum() - 1.0) <= 1e-12
        assert np.all(p > 0.0) and np.all(p < 1.0)


@pytest.mark.parametrize("kind", ["linear_regression", "binary_logistic",
                                  "softmax_linear", "mlp_relu"])
def test_gradient_matches_finite_differences(kind):
    # 100 random (x, n) pairs per objective kind
    rng = core.make_rng(17)
    worst = 0.0
    for trial in range(25):
        obj = _instance(kind, 1000 + trial)
        for _ in range(4):
            x = rng.standard_normal(obj.param_dim) * 0.5
            n = int(rng.integers(obj.n_samples))
            fd = numcheck.central_difference(lambda v: obj.loss(v, n), x)
            worst = max(worst, numcheck.rel_error(obj.grad(x, n), fd))
    assert worst <= 1e-5


def test_full_grad_equals_batch_of_all_indices():
    obj = _instance("binary_logistic", 3)
    x = core.make_rng(4).standard_normal(obj.param_dim)
    batch = core.Minibatch(np.arange(obj.n_samples))
    assert np.allclose(obj.minibatch_grad(x, batch), obj.full_grad(x), atol=1e-14)


def test_singleton_batch_equals_per_sample_grad():
    obj = _instance("softmax_linear", 5)
    x = core.make_rng(6).standard_normal(obj.param_dim)
    assert np.allclose(obj.minibatch_grad(x, core.Minibatch([2])), obj.grad(x, 2), atol=1e-15)


def test_minibatch_grad_unbiased_monte_carlo():
    obj = _instance("linear_regression", 7, n=10)
    rng = core.make_rng(8)
    x = rng.standard_normal(obj.param_dim)
    grads = np.stack([obj.minibatch_grad(x, core.sample_minibatch(obj.n_samples, 3, rng))
                      for _ in range(10_000)])
    se = grads.std(axis=0, ddof=1) / np.sqrt(grads.shape[0])
    assert np.all(np.abs(grads.mean(axis=0) - obj.full_grad(x)) <= 3.0 * np.maximum(se, 1e-12))


def test_linear_regression_full_grad_affine():
    # grad(ax + by) = a grad(x) + b grad(y) - (a + b - 1) grad(0)
    obj = _instance("linear_regression", 9)
    rng = core.make_rng(10)
    x, y = rng.standard_normal(obj.param_dim), rng.standard_normal(obj.param_dim)
    a, b = 0.7, -1.3
    lhs = obj.full_grad(a * x + b * y)
    rhs = (a * obj.full_grad(x) + b * obj.full_grad(y)
           - (a + b - 1.0) * obj.full_grad(np.zeros(obj.param_dim)))
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


def test_per_sample_grads_consistent():
    for kind in ("linear_regression", "binary_logistic", "softmax_linear", "mlp_relu"):
        obj = _instance(kind, 11)
        x = core.make_rng(12).standard_normal(obj.param_dim) * 0.3
        g = obj.per_sample_grads(x)
        for n in range(obj.n_samples):
            assert np.allclose(g[n], obj.grad(x, n), atol=1e-14)


def test_index_out_of_range():
    obj = _instance("linear_regression", 13)
    with pytest.raises(ValueError):
        obj.loss(np.zeros(obj.param_dim), obj.n_samples)
    with pytest.raises(ValueError):
        obj.grad(np.zeros(obj.param_dim), -1)


def test_dataset_invariants():
    with pytest.raises(ValueError):
        objectives.Dataset(inputs=np.ones((2, 2)), targets=[1.0])
    with pytest.raises(ValueError):
        objectives.Dataset(inputs=[[np.inf]], targets=[0.0])
    with pytest.raises(ValueError):
        objectives.Dataset(inputs=np.ones((2, 2)), targets=np.array([0, 5]), n_classes=3)


def test_make_objective_unknown_kind():
    ds = objectives.Dataset(inputs=[[1.0]], targets=[0.0])
    with pytest.raises(ValueError):
        objectives.make_objective("nope", ds)


def test_mlp_accuracy_and_soft_targets():
    obj = _instance("mlp_relu", 14)
    x = obj.init_params(core.make_rng(15))
    acc = obj.accuracy(x)
    assert 0.0 <= acc <= 1.0
    # soft-target loss at the target equal to the model's own output is minimal
    # in the target argument direction: just check it is finite and >= 0 shifted
    s = obj.predict(x, 0)
    assert np.isfinite(obj.loss(x, 0, target=s))
