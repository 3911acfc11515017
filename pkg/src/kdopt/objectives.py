"""Finite-sum objectives with per-sample loss/gradient oracles.

Four model families: linear regression (squared loss), binary logistic
regression, K-class linear softmax, and a one-hidden-layer ReLU MLP with a
softmax head. Regression and binary logistic lift inputs to [a 1] internally
so the bias is an ordinary coordinate; the softmax models operate on raw
inputs. All losses accept an optional soft target so distillation losses can
be evaluated (and finite-differenced) directly.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit, logsumexp


@dataclass
class Dataset:
    """Inputs as an N x d matrix plus length-N targets.

    Targets are real scalars for regression, values in [0, 1] for binary
    logistic, and integer class indices for softmax models.
    """

    inputs: np.ndarray
    targets: np.ndarray
    n_classes: int | None = None

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        self.targets = np.asarray(self.targets)
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets disagree on N")
        if self.inputs.shape[0] < 1:
            raise ValueError("dataset must contain at least one sample")
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("non-finite input entries")
        if self.n_classes is not None and self.targets.dtype.kind in "iu":
            if self.targets.min() < 0 or self.targets.max() >= self.n_classes:
                raise ValueError("class index out of range")

    @property
    def n_samples(self):
        return self.inputs.shape[0]

    @property
    def input_dim(self):
        return self.inputs.shape[1]


def _lift(inputs):
    return np.hstack([inputs, np.ones((inputs.shape[0], 1))])


def _one_hot(targets, k):
    out = np.zeros((targets.shape[0], k))
    out[np.arange(targets.shape[0]), targets.astype(int)] = 1.0
    return out


class Objective:
    """Common interface: per-sample loss/grad, batch and full reductions."""

    kind = None
    dataset = None
    param_dim = None

    @property
    def n_samples(self):
        return self.dataset.n_samples

    def _check(self, x, n):
        if x.shape != (self.param_dim,):
            raise ValueError(f"expected parameter vector of length {self.param_dim}")
        if not 0 <= n < self.n_samples:
            raise ValueError(f"sample index {n} out of range")

    def loss(self, x, n, target=None):
        raise NotImplementedError

    def grad(self, x, n, target=None):
        raise NotImplementedError

    def predict(self, x, n):
        raise NotImplementedError

    def minibatch_loss(self, x, batch):
        return float(np.mean([self.loss(x, int(n)) for n in batch.indices]))

    def minibatch_grad(self, x, batch):
        g = np.zeros(self.param_dim)
        for n in batch.indices:
            g += self.grad(x, int(n))
        return g / len(batch)

    def full_loss(self, x):
        return float(np.mean([self.loss(x, n) for n in range(self.n_samples)]))

    def full_grad(self, x):
        return self.per_sample_grads(x).mean(axis=0)

    def per_sample_grads(self, x):
        """N x param_dim matrix of per-sample gradients."""
        return np.stack([self.grad(x, n) for n in range(self.n_samples)])


class LinearRegression(Objective):
    """f_n(x) = (x . abar_n - b_n)^2 on lifted inputs abar = [a 1]."""

    kind = "linear_regression"

    def __init__(self, dataset, lift=True):
        self.dataset = dataset
        self.abar = _lift(dataset.inputs) if lift else dataset.inputs.copy()
        self.b = np.asarray(dataset.targets, dtype=np.float64)
        self.param_dim = self.abar.shape[1]

    def predict(self, x, n):
        self._check(x, n)
        return float(self.abar[n] @ x)

    def loss(self, x, n, target=None):
        self._check(x, n)
        t = self.b[n] if target is None else float(target)
        return float((self.abar[n] @ x - t) ** 2)

    def grad(self, x, n, target=None):
        self._check(x, n)
        t = self.b[n] if target is None else float(target)
        return 2.0 * (self.abar[n] @ x - t) * self.abar[n]

    def minibatch_grad(self, x, batch):
        a = self.abar[batch.indices]
        r = a @ x - self.b[batch.indices]
        return 2.0 * (r @ a) / len(batch)

    def minibatch_loss(self, x, batch):
        r = self.abar[batch.indices] @ x - self.b[batch.indices]
        return float(np.mean(r * r))

    def full_loss(self, x):
        r = self.abar @ x - self.b
        return float(np.mean(r * r))

    def full_grad(self, x):
        r = self.abar @ x - self.b
        return 2.0 * (r @ self.abar) / self.n_samples

    def per_sample_grads(self, x):
        r = self.abar @ x - self.b
        return 2.0 * r[:, None] * self.abar


class BinaryLogistic(Objective):
    """Cross-entropy of sigmoid(x . abar_n) against targets in [0, 1]."""

    kind = "binary_logistic"

    def __init__(self, dataset, lift=True):
        self.dataset = dataset
        self.abar = _lift(dataset.inputs) if lift else dataset.inputs.copy()
        self.b = np.asarray(dataset.targets, dtype=np.float64)
        self.param_dim = self.abar.shape[1]

    def predict(self, x, n):
        self._check(x, n)
        return float(expit(self.abar[n] @ x))

    def loss(self, x, n, target=None):
        self._check(x, n)
        t = self.b[n] if target is None else float(target)
        z = self.abar[n] @ x
        # -t*log(sigma(z)) - (1-t)*log(1-sigma(z)), computed from logits
        return float(-t * log_expit(z) - (1.0 - t) * log_expit(-z))

    def grad(self, x, n, target=None):
        self._check(x, n)
        t = self.b[n] if target is None else float(target)
        return (expit(self.abar[n] @ x) - t) * self.abar[n]

    def minibatch_grad(self, x, batch):
        a = self.abar[batch.indices]
        r = expit(a @ x) - self.b[batch.indices]
        return (r @ a) / len(batch)

    def minibatch_loss(self, x, batch):
        z = self.abar[batch.indices] @ x
        t = self.b[batch.indices]
        return float(np.mean(-t * log_expit(z) - (1.0 - t) * log_expit(-z)))

    def full_loss(self, x):
        z = self.abar @ x
        return float(np.mean(-self.b * log_expit(z) - (1.0 - self.b) * log_expit(-z)))

    def full_grad(self, x):
        r = expit(self.abar @ x) - self.b
        return (r @ self.abar) / self.n_samples

    def per_sample_grads(self, x):
        r = expit(self.abar @ x) - self.b
        return r[:, None] * self.abar


def _softmax(z):
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class SoftmaxLinear(Objective):
    """K-class linear softmax on raw inputs; parameters are the d x K weight
    matrix flattened column-major (one contiguous block per class)."""

    kind = "softmax_linear"

    def __init__(self, dataset):
        if dataset.n_classes is None:
            raise ValueError("softmax objective needs dataset.n_classes")
        self.dataset = dataset
        self.a = dataset.inputs
        self.k = dataset.n_classes
        self.onehot = _one_hot(dataset.targets, self.k)
        self.param_dim = self.a.shape[1] * self.k

    def _weights(self, x):
        return x.reshape(self.a.shape[1], self.k, order="F")

    def logits(self, x, n):
        return self.a[n] @ self._weights(x)

    def predict(self, x, n):
        self._check(x, n)
        return _softmax(self.logits(x, n))

    def loss(self, x, n, target=None):
        self._check(x, n)
        s = self.onehot[n] if target is None else np.asarray(target, dtype=np.float64)
        z = self.logits(x, n)
        return float(logsumexp(z) - s @ z)

    def grad(self, x, n, target=None):
        self._check(x, n)
        s = self.onehot[n] if target is None else np.asarray(target, dtype=np.float64)
        r = _softmax(self.logits(x, n)) - s
        return np.outer(self.a[n], r).ravel(order="F")

    def minibatch_grad(self, x, batch):
        a = self.a[batch.indices]
        r = _softmax(a @ self._weights(x)) - self.onehot[batch.indices]
        return (a.T @ r).ravel(order="F") / len(batch)

    def minibatch_loss(self, x, batch):
        a = self.a[batch.indices]
        z = a @ self._weights(x)
        s = self.onehot[batch.indices]
        return float(np.mean(logsumexp(z, axis=1) - np.sum(s * z, axis=1)))

    def full_loss(self, x):
        z = self.a @ self._weights(x)
        return float(np.mean(logsumexp(z, axis=1) - np.sum(self.onehot * z, axis=1)))

    def full_grad(self, x):
        r = _softmax(self.a @ self._weights(x)) - self.onehot
        return (self.a.T @ r).ravel(order="F") / self.n_samples

    def per_sample_grads(self, x):
        r = _softmax(self.a @ self._weights(x)) - self.onehot
        # grad_n = outer(a_n, r_n) flattened column-major
        return np.einsum("nk,nd->nkd", r, self.a).reshape(self.n_samples, -1)

    def accuracy(self, x):
        z = self.a @ self._weights(x)
        return float(np.mean(np.argmax(z, axis=1) == np.asarray(self.dataset.targets)))


class MLPRelu(Objective):
    """One hidden layer, ReLU activation, linear output and softmax head.

    Parameter layout: [W1 (h x d_in), b1 (h), W2 (K x h), b2 (K)], all
    flattened row-major in that order. ReLU subgradient at 0 is taken as 0.
    """

    kind = "mlp_relu"

    def __init__(self, dataset, hidden=100):
        if dataset.n_classes is None:
            raise ValueError("mlp objective needs dataset.n_classes")
        self.dataset = dataset
        self.a = dataset.inputs
        self.k = dataset.n_classes
        self.hidden = hidden
        self.onehot = _one_hot(dataset.targets, self.k)
        d = self.a.shape[1]
        self.shapes = [(hidden, d), (hidden,), (self.k, hidden), (self.k,)]
        self.param_dim = sum(int(np.prod(s)) for s in self.shapes)

    def unpack(self, x):
        out, i = [], 0
        for s in self.shapes:
            size = int(np.prod(s))
            out.append(x[i:i + size].reshape(s))
            i += size
        return out

    def init_params(self, rng, scale=0.1):
        return rng.normal(0.0, scale, size=self.param_dim)

    def _forward(self, x, n):
        w1, b1, w2, b2 = self.unpack(x)
        pre = w1 @ self.a[n] + b1
        h = np.maximum(pre, 0.0)
        return pre, h, w2 @ h + b2

    def logits(self, x, n):
        return self._forward(x, n)[2]

    def predict(self, x, n):
        self._check(x, n)
        return _softmax(self.logits(x, n))

    def loss(self, x, n, target=None):
        self._check(x, n)
        s = self.onehot[n] if target is None else np.asarray(target, dtype=np.float64)
        z = self.logits(x, n)
        return float(logsumexp(z) - s @ z)

    def logits_vjp(self, x, n, r):
        """Backpropagate a length-K cotangent r through the logits: J_psi(x) @ r."""
        w1, b1, w2, b2 = self.unpack(x)
        pre, h, _ = self._forward(x, n)
        dh = (w2.T @ r) * (pre > 0.0)
        return np.concatenate([
            np.outer(dh, self.a[n]).ravel(), dh, np.outer(r, h).ravel(), r,
        ])

    def grad(self, x, n, target=None):
        self._check(x, n)
        s = self.onehot[n] if target is None else np.asarray(target, dtype=np.float64)
        r = _softmax(self.logits(x, n)) - s
        return self.logits_vjp(x, n, r)

    def accuracy(self, x):
        preds = [int(np.argmax(self.logits(x, n))) for n in range(self.n_samples)]
        return float(np.mean(np.asarray(preds) == np.asarray(self.dataset.targets)))


_KINDS = {
    "linear_regression": LinearRegression,
    "binary_logistic": BinaryLogistic,
    "softmax_linear": SoftmaxLinear,
    "mlp_relu": MLPRelu,
}


def make_objective(kind, dataset, **kwargs):
    if kind not in _KINDS:
        raise ValueError(f"unknown objective kind {kind!r}")
    return _KINDS[kind](dataset, **kwargs)
