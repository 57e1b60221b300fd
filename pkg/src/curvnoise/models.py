"""Small analytic model families with exact per-sample derivatives.

Each family exposes the negative log-likelihood of its conditional model
distribution together with the exact gradient, per-sample Hessian (finite
differences of the analytic gradient for the one-hidden-layer net) and the
gradient of the loss with respect to the input.

Parameter packing is flat and documented per family (weights row-major,
then biases) so serialized runs are reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .linalg import NumericalFailure, SymMatrix

LOG_2PI = float(np.log(2.0 * np.pi))


class UnsupportedFamilyError(TypeError):
    """Operation requested on a family that does not support it."""


class DivergenceError(RuntimeError):
    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"training diverged at step {step}")


@dataclass(frozen=True)
class PerSampleDerivatives:
    loss: float
    grad: np.ndarray
    hess: SymMatrix
    input_grad: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Inputs and (optional) targets.

    ``targets`` is an integer array of class labels for classification
    families, a float array for scalar regression, or None when the family
    defines a density over the inputs alone.
    """

    inputs: np.ndarray
    targets: np.ndarray | None = None

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        if x.shape[0] < 1:
            raise ValueError("dataset must contain at least one sample")
        object.__setattr__(self, "inputs", x)
        if self.targets is not None:
            t = np.asarray(self.targets)
            if t.shape[0] != x.shape[0]:
                raise ValueError("inputs and targets disagree on sample count")
            object.__setattr__(self, "targets", t)

    @property
    def size(self) -> int:
        return self.inputs.shape[0]

    @property
    def d_in(self) -> int:
        return self.inputs.shape[1]

    def target(self, n: int):
        return None if self.targets is None else self.targets[n]

    def to_csv(self, path) -> None:
        """Header ``x_0,...,x_{d-1},y``; y written as ``nan`` if absent."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x_{i}" for i in range(self.d_in)] + ["y"])
            for n in range(self.size):
                y = self.target(n)
                writer.writerow(
                    [repr(float(v)) for v in self.inputs[n]]
                    + ["nan" if y is None else (str(int(y)) if np.issubdtype(type(y), np.integer) else repr(float(y)))]
                )

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            d = len(header) - 1
            xs, ys = [], []
            for row in reader:
                xs.append([float(v) for v in row[:d]])
                ys.append(row[d])
        if all(y == "nan" for y in ys):
            return cls(np.array(xs), None)
        if all("." not in y and "e" not in y and "n" not in y for y in ys):
            return cls(np.array(xs), np.array([int(y) for y in ys]))
        return cls(np.array(xs), np.array([float(y) for y in ys]))


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


class LossOracle:
    """Base class: a parametric family with loss = negative log-likelihood."""

    theta: np.ndarray
    d_in: int

    @property
    def dim(self) -> int:
        return self.theta.size

    @property
    def is_classification(self) -> bool:
        return False

    def with_theta(self, theta: np.ndarray) -> "LossOracle":
        raise NotImplementedError

    def eval(self, x, y=None) -> PerSampleDerivatives:
        raise NotImplementedError

    def label_distribution(self, x) -> np.ndarray:
        raise UnsupportedFamilyError(
            f"{type(self).__name__} is not a classification family"
        )

    def sample_label(self, x, rng: np.random.Generator):
        raise NotImplementedError

    def batch_loss_grad(self, data: Dataset) -> tuple[float, np.ndarray]:
        """Mean loss and mean gradient over a dataset (used by training)."""
        losses = 0.0
        grad = np.zeros(self.dim)
        for n in range(data.size):
            d = self.eval(data.inputs[n], data.target(n))
            losses += d.loss
            grad += d.grad
        return losses / data.size, grad / data.size

    def mean_loss(self, data: Dataset) -> float:
        return self.batch_loss_grad(data)[0]


class GaussianMean(LossOracle):
    """Isotropic Gaussian density over the inputs, N(x; theta, I)."""

    def __init__(self, theta):
        self.theta = np.asarray(theta, dtype=float).copy()
        self.d_in = self.theta.size

    def with_theta(self, theta):
        return GaussianMean(theta)

    def eval(self, x, y=None) -> PerSampleDerivatives:
        x = np.asarray(x, dtype=float)
        r = x - self.theta
        loss = 0.5 * float(r @ r) + 0.5 * self.d_in * LOG_2PI
        return PerSampleDerivatives(
            loss=loss,
            grad=-r,
            hess=SymMatrix.identity(self.d_in),
            input_grad=r.copy(),
        )

    def sample_label(self, x, rng: np.random.Generator):
        # The "label" of this family is the observation itself.
        return self.theta + rng.standard_normal(self.d_in)

    def batch_loss_grad(self, data: Dataset):
        r = data.inputs - self.theta
        loss = 0.5 * float(np.mean(np.sum(r * r, axis=1))) + 0.5 * self.d_in * LOG_2PI
        return loss, -np.mean(r, axis=0)


class OLS(LossOracle):
    """Linear-Gaussian regression, q(y|x) = N(y; W x, I).

    theta packs W (d_out x d_in) row-major.
    """

    def __init__(self, theta, d_in: int, d_out: int):
        self.theta = np.asarray(theta, dtype=float).copy()
        self.d_in = d_in
        self.d_out = d_out
        if self.theta.size != d_in * d_out:
            raise ValueError("theta size inconsistent with (d_in, d_out)")

    @property
    def W(self) -> np.ndarray:
        return self.theta.reshape(self.d_out, self.d_in)

    def with_theta(self, theta):
        return OLS(theta, self.d_in, self.d_out)

    def eval(self, x, y) -> PerSampleDerivatives:
        x = np.asarray(x, dtype=float)
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if y.shape != (self.d_out,):
            raise ValueError(f"target of shape ({self.d_out},) expected")
        r = self.W @ x - y
        loss = 0.5 * float(r @ r) + 0.5 * self.d_out * LOG_2PI
        grad = np.outer(r, x).ravel()
        hess = np.kron(np.eye(self.d_out), np.outer(x, x))
        return PerSampleDerivatives(
            loss=loss,
            grad=grad,
            hess=SymMatrix(hess),
            input_grad=self.W.T @ r,
        )

    def sample_label(self, x, rng: np.random.Generator):
        return self.W @ np.asarray(x, dtype=float) + rng.standard_normal(self.d_out)

    def batch_loss_grad(self, data: Dataset):
        X = data.inputs
        Y = np.asarray(data.targets, dtype=float).reshape(data.size, self.d_out)
        R = X @ self.W.T - Y
        loss = 0.5 * float(np.mean(np.sum(R * R, axis=1))) + 0.5 * self.d_out * LOG_2PI
        grad = (R.T @ X / data.size).ravel()
        return loss, grad


class SoftmaxLinear(LossOracle):
    """Multinomial logistic regression.

    theta packs W (K x d_in) row-major, then the bias b (K).
    """

    def __init__(self, theta, d_in: int, n_classes: int):
        self.theta = np.asarray(theta, dtype=float).copy()
        self.d_in = d_in
        self.n_classes = n_classes
        if self.theta.size != n_classes * (d_in + 1):
            raise ValueError("theta size inconsistent with (d_in, n_classes)")

    @property
    def is_classification(self):
        return True

    @property
    def W(self) -> np.ndarray:
        return self.theta[: self.n_classes * self.d_in].reshape(self.n_classes, self.d_in)

    @property
    def b(self) -> np.ndarray:
        return self.theta[self.n_classes * self.d_in :]

    def with_theta(self, theta):
        return SoftmaxLinear(theta, self.d_in, self.n_classes)

    def label_distribution(self, x) -> np.ndarray:
        q = _softmax(self.W @ np.asarray(x, dtype=float) + self.b)
        if not np.all(np.isfinite(q)):
            raise NumericalFailure("non-finite softmax probabilities")
        return q

    def _check_label(self, y) -> int:
        y = int(y)
        if not 0 <= y < self.n_classes:
            raise ValueError(f"label {y} outside 0..{self.n_classes - 1}")
        return y

    def eval(self, x, y) -> PerSampleDerivatives:
        x = np.asarray(x, dtype=float)
        y = self._check_label(y)
        q = self.label_distribution(x)
        loss = -float(np.log(q[y]))
        dz = q.copy()
        dz[y] -= 1.0
        grad = np.concatenate([np.outer(dz, x).ravel(), dz])
        hess = self._hessian_blocks(x, q)
        return PerSampleDerivatives(
            loss=loss,
            grad=grad,
            hess=SymMatrix(hess),
            input_grad=self.W.T @ dz,
        )

    def _hessian_blocks(self, x: np.ndarray, q: np.ndarray) -> np.ndarray:
        # d2 loss / dz2 = diag(q) - q q', lifted to (W, b) coordinates.
        K, d = self.n_classes, self.d_in
        A = np.diag(q) - np.outer(q, q)
        xx = np.outer(x, x)
        H = np.empty((K * d + K, K * d + K))
        Hww = np.einsum("kl,ij->kilj", A, xx).reshape(K * d, K * d)
        Hwb = np.einsum("kl,i->kil", A, x).reshape(K * d, K)
        H[: K * d, : K * d] = Hww
        H[: K * d, K * d :] = Hwb
        H[K * d :, : K * d] = Hwb.T
        H[K * d :, K * d :] = A
        return H

    def expected_hessian(self, x) -> SymMatrix:
        """Per-sample Hessian averaged under the model distribution.

        For this family the Hessian does not depend on the label, so this
        is simply the per-sample Hessian.
        """
        q = self.label_distribution(x)
        return SymMatrix(self._hessian_blocks(np.asarray(x, dtype=float), q))

    def sample_label(self, x, rng: np.random.Generator) -> int:
        q = self.label_distribution(x)
        return int(rng.choice(self.n_classes, p=q))

    def batch_loss_grad(self, data: Dataset):
        X = data.inputs
        y = np.asarray(data.targets, dtype=int)
        Q = _softmax(X @ self.W.T + self.b)
        loss = -float(np.mean(np.log(Q[np.arange(data.size), y])))
        dZ = Q
        dZ[np.arange(data.size), y] -= 1.0
        gW = dZ.T @ X / data.size
        gb = np.mean(dZ, axis=0)
        return loss, np.concatenate([gW.ravel(), gb])


class SoftmaxMLP1(LossOracle):
    """One-hidden-layer tanh network with a softmax output.

    theta packs W1 (m x d_in), b1 (m), W2 (K x m), b2 (K), all row-major.
    The per-sample Hessian is computed by central finite differences of the
    analytic gradient with per-coordinate step 1e-4 * (1 + |theta_i|).
    """

    FD_SCALE = 1e-4

    def __init__(self, theta, d_in: int, hidden: int, n_classes: int):
        self.theta = np.asarray(theta, dtype=float).copy()
        self.d_in = d_in
        self.hidden = hidden
        self.n_classes = n_classes
        expect = hidden * d_in + hidden + n_classes * hidden + n_classes
        if self.theta.size != expect:
            raise ValueError("theta size inconsistent with layer shapes")

    @property
    def is_classification(self):
        return True

    def with_theta(self, theta):
        return SoftmaxMLP1(theta, self.d_in, self.hidden, self.n_classes)

    def _unpack(self, theta=None):
        t = self.theta if theta is None else theta
        m, d, K = self.hidden, self.d_in, self.n_classes
        i0 = m * d
        W1 = t[:i0].reshape(m, d)
        b1 = t[i0 : i0 + m]
        W2 = t[i0 + m : i0 + m + K * m].reshape(K, m)
        b2 = t[i0 + m + K * m :]
        return W1, b1, W2, b2

    def label_distribution(self, x) -> np.ndarray:
        W1, b1, W2, b2 = self._unpack()
        a = np.tanh(W1 @ np.asarray(x, dtype=float) + b1)
        q = _softmax(W2 @ a + b2)
        if not np.all(np.isfinite(q)):
            raise NumericalFailure("non-finite softmax probabilities")
        return q

    def _loss_grad(self, theta, x, y):
        W1, b1, W2, b2 = self._unpack(theta)
        a = np.tanh(W1 @ x + b1)
        q = _softmax(W2 @ a + b2)
        loss = -float(np.log(q[y]))
        dz = q.copy()
        dz[y] -= 1.0
        da = W2.T @ dz
        dpre = da * (1.0 - a * a)
        grad = np.concatenate(
            [np.outer(dpre, x).ravel(), dpre, np.outer(dz, a).ravel(), dz]
        )
        return loss, grad, dpre, W1

    def eval(self, x, y) -> PerSampleDerivatives:
        x = np.asarray(x, dtype=float)
        y = int(y)
        if not 0 <= y < self.n_classes:
            raise ValueError(f"label {y} outside 0..{self.n_classes - 1}")
        loss, grad, dpre, W1 = self._loss_grad(self.theta, x, y)
        if not np.all(np.isfinite(grad)):
            raise NumericalFailure("non-finite gradient")
        d = self.dim
        H = np.empty((d, d))
        for i in range(d):
            h = self.FD_SCALE * (1.0 + abs(self.theta[i]))
            tp = self.theta.copy()
            tp[i] += h
            tm = self.theta.copy()
            tm[i] -= h
            gp = self._loss_grad(tp, x, y)[1]
            gm = self._loss_grad(tm, x, y)[1]
            H[:, i] = (gp - gm) / (2.0 * h)
        return PerSampleDerivatives(
            loss=loss,
            grad=grad,
            hess=SymMatrix((H + H.T) / 2.0),
            input_grad=W1.T @ dpre,
        )

    def sample_label(self, x, rng: np.random.Generator) -> int:
        return int(rng.choice(self.n_classes, p=self.label_distribution(x)))

    def batch_loss_grad(self, data: Dataset):
        W1, b1, W2, b2 = self._unpack()
        X = data.inputs
        y = np.asarray(data.targets, dtype=int)
        A = np.tanh(X @ W1.T + b1)
        Q = _softmax(A @ W2.T + b2)
        loss = -float(np.mean(np.log(Q[np.arange(data.size), y])))
        dZ = Q
        dZ[np.arange(data.size), y] -= 1.0
        dA = dZ @ W2
        dPre = dA * (1.0 - A * A)
        N = data.size
        grad = np.concatenate(
            [
                (dPre.T @ X / N).ravel(),
                np.mean(dPre, axis=0),
                (dZ.T @ A / N).ravel(),
                np.mean(dZ, axis=0),
            ]
        )
        return loss, grad


def train(
    oracle: LossOracle,
    data: Dataset,
    steps: int,
    stepsize: float,
    batch: int | None = None,
    momentum: float = 0.0,
    rng: np.random.Generator | None = None,
) -> LossOracle:
    """Mini-batch SGD with momentum; returns a new oracle, input untouched.

    ``batch=None`` (or >= N) means full-batch gradient descent.  Batches are
    drawn as random subsets from ``rng``; with no rng a fixed seed is used so
    the run is reproducible by default.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    rng = rng if rng is not None else np.random.default_rng(0)
    theta = oracle.theta.copy()
    velocity = np.zeros_like(theta)
    full = batch is None or batch >= data.size
    for step in range(steps):
        cur = oracle.with_theta(theta)
        if full:
            loss, grad = cur.batch_loss_grad(data)
        else:
            idx = rng.choice(data.size, size=batch, replace=False)
            sub = Dataset(
                data.inputs[idx],
                None if data.targets is None else data.targets[idx],
            )
            loss, grad = cur.batch_loss_grad(sub)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise DivergenceError(step)
        velocity = momentum * velocity + grad
        theta = theta - stepsize * velocity
    result = oracle.with_theta(theta)
    if not np.isfinite(result.mean_loss(data)):
        raise DivergenceError(steps)
    return result


def gaussian_mixture_dataset(
    n: int,
    d_in: int,
    n_classes: int,
    rng: np.random.Generator,
    separation: float = 2.0,
    corruption: float = 0.0,
) -> Dataset:
    """K-class Gaussian mixture with optional label randomization.

    Class means sit at ``separation`` times random unit directions; a
    ``corruption`` fraction of labels is replaced by uniform random classes.
    """
    if not 0.0 <= corruption <= 1.0:
        raise ValueError("corruption must lie in [0, 1]")
    means = rng.standard_normal((n_classes, d_in))
    means *= separation / np.linalg.norm(means, axis=1, keepdims=True)
    labels = rng.integers(0, n_classes, size=n)
    inputs = means[labels] + rng.standard_normal((n, d_in))
    corrupt = rng.random(n) < corruption
    labels = np.where(corrupt, rng.integers(0, n_classes, size=n), labels)
    return Dataset(inputs, labels)


def replace_theta(oracle: LossOracle, theta) -> LossOracle:
    return oracle.with_theta(theta)
