"""The four information matrices of a model at a parameter point.

H: expected per-sample Hessian over the data.
C: expected gradient outer product over the data (the noise matrix; this
   package never calls it "empirical Fisher").
F: expected gradient outer product under the model's own conditional
   distribution, by exact label enumeration or Monte Carlo.
S: the centered gradient covariance, C minus the mean-gradient outer
   product.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .linalg import SymMatrix, frobenius_norm, trace
from .models import Dataset, GaussianMean, LossOracle, OLS, SoftmaxLinear, UnsupportedFamilyError


@dataclass(frozen=True)
class InfoMatrixSet:
    H: SymMatrix
    F: SymMatrix
    C: SymMatrix
    S: SymMatrix
    N: int
    fisher_mc_draws: int = 0  # 0 means exact enumeration / closed form

    def to_json(self) -> str:
        return json.dumps(
            {
                "dim": self.H.dim,
                "N": self.N,
                "fisher_mc_draws": self.fisher_mc_draws,
                "H": self.H.a.tolist(),
                "F": self.F.a.tolist(),
                "C": self.C.a.tolist(),
                "S": self.S.a.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "InfoMatrixSet":
        doc = json.loads(text)
        return cls(
            H=SymMatrix(np.array(doc["H"])),
            F=SymMatrix(np.array(doc["F"])),
            C=SymMatrix(np.array(doc["C"])),
            S=SymMatrix(np.array(doc["S"])),
            N=int(doc["N"]),
            fisher_mc_draws=int(doc["fisher_mc_draws"]),
        )


def _gradients(oracle: LossOracle, data: Dataset) -> np.ndarray:
    return np.stack(
        [oracle.eval(data.inputs[n], data.target(n)).grad for n in range(data.size)]
    )


def compute_H(oracle: LossOracle, data: Dataset) -> SymMatrix:
    """Mean per-sample Hessian over the dataset."""
    acc = np.zeros((oracle.dim, oracle.dim))
    for n in range(data.size):
        acc += oracle.eval(data.inputs[n], data.target(n)).hess.a
    return SymMatrix(acc / data.size)


def compute_C(oracle: LossOracle, data: Dataset) -> SymMatrix:
    """Mean gradient outer product over the dataset."""
    G = _gradients(oracle, data)
    return SymMatrix(G.T @ G / data.size)


def compute_S(oracle: LossOracle, data: Dataset) -> SymMatrix:
    """Centered gradient covariance: C minus the mean-gradient outer product."""
    G = _gradients(oracle, data)
    gbar = np.mean(G, axis=0)
    return SymMatrix(G.T @ G / data.size - np.outer(gbar, gbar))


def compute_F(
    oracle: LossOracle,
    data: Dataset,
    mode: str = "exact",
    draws: int = 0,
    rng: np.random.Generator | None = None,
) -> SymMatrix:
    """Model-distribution gradient covariance.

    mode="exact" enumerates the label set for classification families and
    uses the known closed forms for the regression families (identity for
    the Gaussian-mean family; equal to H for linear-Gaussian regression,
    whose per-sample Hessian does not depend on the target).
    mode="mc" replaces the enumeration with ``draws`` sampled labels per
    input, deterministic given the rng seed.
    """
    if mode not in ("exact", "mc"):
        raise ValueError(f"unknown fisher mode {mode!r}")
    if isinstance(oracle, GaussianMean):
        return SymMatrix.identity(oracle.dim)
    if isinstance(oracle, OLS):
        if mode == "mc":
            raise UnsupportedFamilyError(
                "Monte Carlo Fisher needs a finite label set; "
                "linear-Gaussian regression uses its closed form"
            )
        return compute_H(oracle, data)
    if not oracle.is_classification:
        raise UnsupportedFamilyError("exact enumeration needs a finite label set")
    d = oracle.dim
    acc = np.zeros((d, d))
    if mode == "exact":
        for n in range(data.size):
            x = data.inputs[n]
            q = oracle.label_distribution(x)
            for y, qy in enumerate(q):
                g = oracle.eval(x, y).grad
                acc += qy * np.outer(g, g)
        return SymMatrix(acc / data.size)
    if draws < 1:
        raise ValueError("mc mode requires draws >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    for n in range(data.size):
        x = data.inputs[n]
        for _ in range(draws):
            y = oracle.sample_label(x, rng)
            g = oracle.eval(x, y).grad
            acc += np.outer(g, g)
    return SymMatrix(acc / (data.size * draws))


def compute_F_from_hessians(oracle: SoftmaxLinear, data: Dataset) -> SymMatrix:
    """Independent route to F: model-expected per-sample Hessians."""
    acc = np.zeros((oracle.dim, oracle.dim))
    for n in range(data.size):
        acc += oracle.expected_hessian(data.inputs[n]).a
    return SymMatrix(acc / data.size)


def compute_all(
    oracle: LossOracle,
    data: Dataset,
    fisher_mode: str = "exact",
    draws: int = 0,
    rng: np.random.Generator | None = None,
) -> InfoMatrixSet:
    return InfoMatrixSet(
        H=compute_H(oracle, data),
        F=compute_F(oracle, data, fisher_mode, draws, rng),
        C=compute_C(oracle, data),
        S=compute_S(oracle, data),
        N=data.size,
        fisher_mc_draws=draws if fisher_mode == "mc" else 0,
    )


def ols_closed_forms(
    X: np.ndarray, noise_cov: SymMatrix
) -> tuple[SymMatrix, SymMatrix, SymMatrix]:
    """Population matrices of linear-Gaussian regression at the true weights.

    With empirical input second moment E[xx'] and target-noise covariance
    Sigma (d_out x d_out): H = F = I kron E[xx'] and C = Sigma kron E[xx'],
    in the row-major weight packing of :class:`~curvnoise.models.OLS`.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    xx = X.T @ X / X.shape[0]
    p = noise_cov.dim
    H = SymMatrix(np.kron(np.eye(p), xx))
    C = SymMatrix(np.kron(noise_cov.a, xx))
    return H, H, C


def similarity_r(a: SymMatrix, b: SymMatrix) -> float:
    """Scale similarity: ratio of traces."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    tb = trace(b)
    if tb == 0.0:
        raise ZeroDivisionError("trace of second matrix is zero")
    return trace(a) / tb


def similarity_s(a: SymMatrix, b: SymMatrix) -> float:
    """Angle similarity: Frobenius cosine between the matrices."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    na, nb = frobenius_norm(a), frobenius_norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroDivisionError("zero-norm matrix has no direction")
    return float(np.sum(a.a * b.a)) / (na * nb)
