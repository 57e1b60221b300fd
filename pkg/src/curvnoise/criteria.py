"""Generalization-gap estimators and the synthetic sweep that compares them.

The headline criterion is the trace of (truncated-inverse curvature times
gradient covariance) divided by the sample count, together with its two
cheaper stand-ins (Fisher in place of the Hessian, and the plain trace
ratio), the parameter-count baseline, flatness (Hessian trace) and input
sensitivity.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .infomat import compute_C, compute_H
from .linalg import SymMatrix, matmul, trace, truncated_pinv
from .models import (
    Dataset,
    DivergenceError,
    LossOracle,
    SoftmaxLinear,
    SoftmaxMLP1,
    gaussian_mixture_dataset,
    train,
)

DEFAULT_REL_CUTOFF = 1e-3


def tic(
    H: SymMatrix, C: SymMatrix, N: int, rel_cutoff: float = DEFAULT_REL_CUTOFF
) -> tuple[float, int]:
    """(1/N) Tr(pinv(H) C) on the retained eigensubspace of H.

    Returns the criterion value and the retained rank.
    """
    if H.dim != C.dim:
        raise ValueError("dimension mismatch")
    if N < 1:
        raise ValueError("N must be >= 1")
    pinv, rank = truncated_pinv(H, rel_cutoff)
    return float(np.trace(matmul(pinv, C))) / N, rank


def tic_fisher(
    F: SymMatrix, C: SymMatrix, N: int, rel_cutoff: float = DEFAULT_REL_CUTOFF
) -> tuple[float, int]:
    """Same criterion with the model-side curvature matrix in place of H."""
    return tic(F, C, N, rel_cutoff)


def trace_ratio_criterion(C: SymMatrix, F: SymMatrix, N: int) -> float:
    """d-scaled trace ratio: (d/N) Tr(C)/Tr(F).

    With C = a F exactly this equals d a / N, the full-dimension analogue
    of the inversion-free criterion.
    """
    tf = trace(F)
    if tf == 0.0:
        raise ZeroDivisionError("trace of F is zero")
    return C.dim * trace(C) / tf / N


def raw_trace_ratio(C: SymMatrix, F: SymMatrix) -> float:
    """Unscaled Tr(C)/Tr(F), emitted alongside for plotting."""
    tf = trace(F)
    if tf == 0.0:
        raise ZeroDivisionError("trace of F is zero")
    return trace(C) / tf


def aic(d: int, N: int) -> float:
    """Parameter count over sample count."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return d / N


def flatness(H: SymMatrix) -> float:
    """Trace of the curvature matrix."""
    return trace(H)


def sensitivity(oracle: LossOracle, data: Dataset) -> float:
    """Mean squared norm of the loss gradient with respect to the input."""
    acc = 0.0
    for n in range(data.size):
        g = oracle.eval(data.inputs[n], data.target(n)).input_grad
        acc += float(g @ g)
    return acc / data.size


def spearman(xs, ys) -> float:
    """Rank correlation with average-rank tie handling."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.size < 3:
        raise ValueError("need two equal-length sequences of length >= 3")
    if np.all(xs == xs[0]) or np.all(ys == ys[0]):
        raise ValueError("rank correlation undefined for a constant sequence")
    rx, ry = _average_ranks(xs), _average_ranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    return float(rx @ ry / np.sqrt((rx @ rx) * (ry @ ry)))


def _average_ranks(v: np.ndarray) -> np.ndarray:
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size)
    sv = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


@dataclass(frozen=True)
class GapReport:
    corruption: float
    seed: int
    status: str  # "ok" or "diverged"
    train_loss: float
    test_loss: float
    gap: float
    tic: float
    tic_fisher: float
    trace_ratio: float
    aic: float
    flatness: float
    sensitivity: float
    retained_rank: int
    rel_cutoff: float
    N: int


@dataclass(frozen=True)
class GapSweepConfig:
    """Synthetic label-corruption sweep on tiny softmax models."""

    root_seed: int = 0
    corruption_levels: tuple = tuple(round(0.1 * i, 2) for i in range(11))
    seeds_per_level: int = 3
    d_in: int = 4
    n_classes: int = 3
    hidden: int | None = None  # None: linear softmax model
    n_train: int = 60
    n_test: int = 600
    separation: float = 3.0
    steps: int = 1500
    stepsize: float = 0.3
    batch: int | None = None
    momentum: float = 0.9
    rel_cutoff: float = DEFAULT_REL_CUTOFF
    eval_on: str = "test"  # matrices for the criteria: "test" or "train"


def _fresh_model(cfg: GapSweepConfig, rng: np.random.Generator) -> LossOracle:
    if cfg.hidden is None:
        size = cfg.n_classes * (cfg.d_in + 1)
        return SoftmaxLinear(0.01 * rng.standard_normal(size), cfg.d_in, cfg.n_classes)
    size = cfg.hidden * (cfg.d_in + 1) + cfg.n_classes * (cfg.hidden + 1)
    return SoftmaxMLP1(
        0.1 * rng.standard_normal(size), cfg.d_in, cfg.hidden, cfg.n_classes
    )


def gap_experiment(cfg: GapSweepConfig) -> list[GapReport]:
    """Train one model per (corruption level, seed) and score every criterion.

    Curvature/covariance matrices are evaluated on held-out data by default
    (``eval_on="train"`` switches to the training set).  Training failures
    are recorded in the report rather than aborting the sweep.
    """
    reports = []
    for level in cfg.corruption_levels:
        for seed_idx in range(cfg.seeds_per_level):
            ss = np.random.SeedSequence(
                entropy=cfg.root_seed, spawn_key=(int(round(level * 100)), seed_idx)
            )
            rng = np.random.default_rng(ss)
            train_set = gaussian_mixture_dataset(
                cfg.n_train, cfg.d_in, cfg.n_classes, rng, cfg.separation, float(level)
            )
            test_set = gaussian_mixture_dataset(
                cfg.n_test, cfg.d_in, cfg.n_classes, rng, cfg.separation, 0.0
            )
            model = _fresh_model(cfg, rng)
            try:
                model = train(
                    model,
                    train_set,
                    cfg.steps,
                    cfg.stepsize,
                    cfg.batch,
                    cfg.momentum,
                    rng,
                )
            except DivergenceError:
                reports.append(
                    GapReport(
                        corruption=float(level),
                        seed=seed_idx,
                        status="diverged",
                        train_loss=float("nan"),
                        test_loss=float("nan"),
                        gap=float("nan"),
                        tic=float("nan"),
                        tic_fisher=float("nan"),
                        trace_ratio=float("nan"),
                        aic=aic(model.dim, cfg.n_train),
                        flatness=float("nan"),
                        sensitivity=float("nan"),
                        retained_rank=0,
                        rel_cutoff=cfg.rel_cutoff,
                        N=cfg.n_train,
                    )
                )
                continue
            reports.append(
                score_model(model, train_set, test_set, cfg, float(level), seed_idx)
            )
    return reports


def score_model(
    model: LossOracle,
    train_set: Dataset,
    test_set: Dataset,
    cfg: GapSweepConfig,
    corruption: float,
    seed: int,
) -> GapReport:
    from .infomat import compute_F

    train_loss = model.mean_loss(train_set)
    test_loss = model.mean_loss(test_set)
    eval_set = test_set if cfg.eval_on == "test" else train_set
    H = compute_H(model, eval_set)
    C = compute_C(model, eval_set)
    F = compute_F(model, eval_set)
    tic_val, rank = tic(H, C, cfg.n_train, cfg.rel_cutoff)
    ticf_val, _ = tic_fisher(F, C, cfg.n_train, cfg.rel_cutoff)
    return GapReport(
        corruption=corruption,
        seed=seed,
        status="ok",
        train_loss=train_loss,
        test_loss=test_loss,
        gap=test_loss - train_loss,
        tic=tic_val,
        tic_fisher=ticf_val,
        trace_ratio=trace_ratio_criterion(C, F, cfg.n_train),
        aic=aic(model.dim, cfg.n_train),
        flatness=flatness(H),
        sensitivity=sensitivity(model, eval_set),
        retained_rank=rank,
        rel_cutoff=cfg.rel_cutoff,
        N=cfg.n_train,
    )


def report_rows(reports: list[GapReport]) -> list[dict]:
    return [asdict(r) for r in reports]
