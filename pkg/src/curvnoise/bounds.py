"""Divergence-weighted bounds between the information matrices.

Over a finite discrete support both sides of each inequality are exactly
computable, so the checks are sharp rather than statistical.  Both
divergence directions are implemented and labeled explicitly: "backward"
weights the model-side second moments by chi2(p||q), "forward" weights the
data-side moments by chi2(q||p).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import SymMatrix, frobenius_dist_sq
from .models import LossOracle


class AbsoluteContinuityError(ZeroDivisionError):
    """The reference distribution has a zero-mass support point."""


@dataclass(frozen=True)
class DiscreteJoint:
    """A distribution over finitely many (input, label) atoms."""

    support: tuple
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if len(self.support) != probs.size:
            raise ValueError("support and probs length mismatch")
        if np.any(probs < 0.0):
            raise ValueError("negative probability mass")
        if abs(float(np.sum(probs)) - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to one")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "support", tuple(self.support))


@dataclass(frozen=True)
class BoundReport:
    lhs_FH: float
    lhs_FC: float
    lhs_CH: float
    chi2: float
    direction: str
    beta1: float
    beta2: float
    slack_FH: float
    slack_FC: float
    slack_CH: float


def chi_square(p: DiscreteJoint, q: DiscreteJoint) -> float:
    """chi2(p || q) = sum (p_i - q_i)^2 / q_i over a shared support."""
    if len(p.support) != len(q.support):
        raise ValueError("distributions must share their support")
    if np.any(q.probs == 0.0):
        raise AbsoluteContinuityError("q has a zero-mass support point")
    diff = p.probs - q.probs
    return float(np.sum(diff * diff / q.probs))


def model_joint(oracle: LossOracle, p: DiscreteJoint) -> DiscreteJoint:
    """The model distribution sharing p's input marginal.

    For every atom (x, y) of p the mass is p(x) * q_theta(y | x), where
    p(x) sums p over all atoms with that input.  Requires a classification
    oracle; the support must list every label for each distinct input for
    the result to be normalized.
    """
    marginal: dict[bytes, float] = {}
    for (x, _), w in zip(p.support, p.probs):
        key = np.asarray(x, dtype=float).tobytes()
        marginal[key] = marginal.get(key, 0.0) + float(w)
    probs = []
    for (x, y) in p.support:
        key = np.asarray(x, dtype=float).tobytes()
        probs.append(marginal[key] * oracle.label_distribution(x)[int(y)])
    return DiscreteJoint(p.support, np.array(probs))


def _moment_matrices(oracle: LossOracle, dist: DiscreteJoint):
    """Expectations of hess, grad-outer, and their squared Frobenius norms."""
    d = oracle.dim
    H = np.zeros((d, d))
    G = np.zeros((d, d))
    b1 = b2 = 0.0
    for (x, y), w in zip(dist.support, dist.probs):
        der = oracle.eval(x, y)
        H += w * der.hess.a
        gg = np.outer(der.grad, der.grad)
        G += w * gg
        b1 += w * float(np.sum(der.hess.a**2))
        b2 += w * float(np.sum(gg**2))
    return SymMatrix(H), SymMatrix(G), b1, b2


def beta_moments(oracle: LossOracle, q: DiscreteJoint) -> tuple[float, float]:
    """Second moments of the per-sample matrices under q.

    Returns (E_q ||hess||_F^2, E_q ||grad grad'||_F^2).
    """
    _, _, b1, b2 = _moment_matrices(oracle, q)
    return b1, b2


def verify_bounds(
    oracle: LossOracle,
    p: DiscreteJoint,
    q: DiscreteJoint,
    direction: str = "backward",
) -> BoundReport:
    """Exact check of the three Frobenius-distance inequalities.

    H and C are expectations under p; F is the gradient covariance under q.
    direction="backward": rhs = beta(q-moments) * chi2(p||q).
    direction="forward":  rhs = beta(p-moments) * chi2(q||p).
    """
    if direction not in ("backward", "forward"):
        raise ValueError(f"unknown direction {direction!r}")
    H, C, b1_p, b2_p = _moment_matrices(oracle, p)
    _, F, b1_q, b2_q = _moment_matrices(oracle, q)
    if direction == "backward":
        div = chi_square(p, q)
        b1, b2 = b1_q, b2_q
    else:
        div = chi_square(q, p)
        b1, b2 = b1_p, b2_p
    lhs_FH = frobenius_dist_sq(F, H)
    lhs_FC = frobenius_dist_sq(F, C)
    lhs_CH = frobenius_dist_sq(C, H)
    return BoundReport(
        lhs_FH=lhs_FH,
        lhs_FC=lhs_FC,
        lhs_CH=lhs_CH,
        chi2=div,
        direction=direction,
        beta1=b1,
        beta2=b2,
        slack_FH=b1 * div - lhs_FH,
        slack_FC=b2 * div - lhs_FC,
        slack_CH=(b1 + b2) * div - lhs_CH,
    )
