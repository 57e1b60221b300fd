"""Gap criteria: TIC identities, rank correlation, the synthetic sweep."""

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from curvnoise.criteria import (
    GapSweepConfig,
    aic,
    flatness,
    gap_experiment,
    report_rows,
    score_model,
    sensitivity,
    spearman,
    tic,
    tic_fisher,
    trace_ratio_criterion,
    raw_trace_ratio,
)
from curvnoise.linalg import SymMatrix
from curvnoise.models import SoftmaxLinear, gaussian_mixture_dataset


def random_spd(rng, d, spread=1.0):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    vals = np.exp(spread * rng.standard_normal(d))
    return SymMatrix(q @ np.diag(vals) @ q.T)


class TestTic:
    def test_equals_aic_when_C_is_H(self):
        rng = np.random.default_rng(40)
        H = random_spd(rng, 5, spread=0.5)
        value, rank = tic(H, H, N=50)
        assert rank == 5
        assert value == pytest.approx(aic(5, 50), abs=1e-10)

    def test_fisher_identity_with_truncation(self):
        # C = a F: the criterion equals (retained rank) * a / N exactly.
        F = SymMatrix.diagonal([1.0, 0.5, 1e-8])  # last mode truncated
        a, N = 0.3, 40
        C = SymMatrix(a * F.a)
        value, rank = tic_fisher(F, C, N)
        assert rank == 2
        assert value == pytest.approx(rank * a / N, abs=1e-12)

    def test_trace_ratio_identity(self):
        rng = np.random.default_rng(41)
        F = random_spd(rng, 4)
        a, N = 1.7, 25
        C = SymMatrix(a * F.a)
        assert trace_ratio_criterion(C, F, N) == pytest.approx(4 * a / N, rel=1e-12)
        assert raw_trace_ratio(C, F) == pytest.approx(a, rel=1e-12)

    def test_input_validation(self):
        H = SymMatrix.identity(3)
        with pytest.raises(ValueError):
            tic(H, SymMatrix.identity(2), 10)
        with pytest.raises(ValueError):
            tic(H, H, 0)
        with pytest.raises(ZeroDivisionError):
            trace_ratio_criterion(H, SymMatrix.zeros(3), 10)


class TestScalarCriteria:
    def test_aic_and_flatness(self):
        assert aic(6, 30) == pytest.approx(0.2)
        assert flatness(SymMatrix.diagonal([1.0, 2.0, 3.0])) == pytest.approx(6.0)

    def test_sensitivity_on_known_model(self):
        rng = np.random.default_rng(42)
        data = gaussian_mixture_dataset(10, 2, 2, rng)
        oracle = SoftmaxLinear(rng.standard_normal(6), 2, 2)
        manual = np.mean(
            [
                float(np.sum(oracle.eval(data.inputs[n], data.target(n)).input_grad ** 2))
                for n in range(data.size)
            ]
        )
        assert sensitivity(oracle, data) == pytest.approx(manual, rel=1e-12)


class TestSpearman:
    def test_monotone_sequences(self):
        xs = [1.0, 2.0, 5.0, 9.0]
        assert spearman(xs, [2.0, 3.0, 10.0, 40.0]) == pytest.approx(1.0)
        assert spearman(xs, [4.0, 3.0, 2.0, 1.0]) == pytest.approx(-1.0)

    def test_matches_scipy_with_ties(self):
        rng = np.random.default_rng(43)
        xs = rng.integers(0, 5, size=30).astype(float)
        ys = xs + rng.standard_normal(30)
        ref = scipy.stats.spearmanr(xs, ys).statistic
        assert spearman(xs, ys) == pytest.approx(ref, abs=1e-12)

    def test_rejects_degenerate_input(self):
        with pytest.raises(ValueError):
            spearman([1.0, 2.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            spearman([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_bounded_and_shift_invariant(self, seed):
        rng = np.random.default_rng(seed)
        xs = rng.standard_normal(10)
        ys = rng.standard_normal(10)
        rho = spearman(xs, ys)
        assert -1.0 <= rho <= 1.0
        # Invariant under strictly increasing transforms of either argument.
        assert spearman(np.exp(xs), 3.0 * ys + 1.0) == pytest.approx(rho, abs=1e-12)


class TestGapSweep:
    def test_small_sweep_shapes_and_fields(self):
        cfg = GapSweepConfig(
            root_seed=1,
            corruption_levels=(0.0, 0.5),
            seeds_per_level=1,
            n_train=30,
            n_test=60,
            steps=120,
            stepsize=0.3,
        )
        reports = gap_experiment(cfg)
        assert len(reports) == 2
        for r in reports:
            assert r.status == "ok"
            assert r.gap == pytest.approx(r.test_loss - r.train_loss, abs=1e-12)
            assert r.tic > 0.0 and r.retained_rank > 0
            assert r.N == 30
        rows = report_rows(reports)
        assert rows[0]["corruption"] == 0.0 and rows[1]["corruption"] == 0.5

    def test_sweep_is_deterministic(self):
        cfg = GapSweepConfig(
            root_seed=7,
            corruption_levels=(0.2,),
            seeds_per_level=1,
            n_train=20,
            n_test=40,
            steps=60,
        )
        a = gap_experiment(cfg)[0]
        b = gap_experiment(cfg)[0]
        assert a == b

    def test_tic_tracks_gap_on_mini_sweep(self):
        cfg = GapSweepConfig(
            root_seed=3,
            corruption_levels=(0.0, 0.25, 0.5, 0.75, 1.0),
            seeds_per_level=2,
            n_train=40,
            n_test=200,
            steps=400,
        )
        reports = [r for r in gap_experiment(cfg) if r.status == "ok"]
        assert len(reports) >= 8
        rho = spearman([r.tic for r in reports], [r.gap for r in reports])
        assert rho > 0.5
