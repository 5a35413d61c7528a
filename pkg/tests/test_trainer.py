import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from pnlf import (
    FactorSet,
    Hyperparams,
    ScalingParams,
    ablate,
    evaluate,
    from_entries,
    impute,
    init_factors,
    predict,
    split,
    sweep,
    synth_low_rank,
    train,
    train_split,
)
from pnlf.errors import DivergenceDetected, EmptySet, IndexOutOfRange
from pnlf.trainer import iteration_reduction, repeat

FAST = Hyperparams(rank=4, eta=0.1, c_i=0.3, c_d=0.1, max_epochs=15)


@pytest.fixture
def small_splits(small_tensor):
    return split(small_tensor[0], (0.6, 0.2, 0.2), 1)


class TestEvaluate:
    def zero_model(self):
        return FactorSet(np.zeros((1, 1)), np.zeros((2, 1)), np.zeros((1, 1)))

    def test_residuals_three_four(self):
        # zero factors predict 0.125 everywhere
        t = from_entries((1, 2, 1), [(0, 0, 0, 3.125), (0, 1, 0, 4.125)])
        m = evaluate(self.zero_model(), t)
        assert m.rmse == pytest.approx(math.sqrt(12.5), abs=1e-15)
        assert m.rmse == pytest.approx(3.5355339059327378, abs=1e-15)
        assert m.mae == 3.5 and m.count == 2

    def test_perfect(self):
        t = from_entries((1, 2, 1), [(0, 0, 0, 0.125), (0, 1, 0, 0.125)])
        m = evaluate(self.zero_model(), t)
        assert m.rmse == 0.0 and m.mae == 0.0

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-50, 50), st.integers(0, 2**32))
    def test_singleton(self, y, seed):
        f = FactorSet(*(np.random.default_rng(seed).normal(size=(2, 3)) for _ in range(3)))
        t = from_entries((2, 2, 2), [(1, 0, 1, y)])
        m = evaluate(f, t)
        resid = abs(y - float(np.sum(f.nonnegative()[0][1] * f.nonnegative()[1][0] * f.nonnegative()[2][1])))
        assert m.rmse == m.mae == pytest.approx(resid, rel=1e-12, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30))
    def test_rmse_at_least_mae(self, ys):
        t = from_entries((len(ys), 1, 1), [(n, 0, 0, y) for n, y in enumerate(ys)])
        f = FactorSet(np.zeros((len(ys), 2)), np.zeros((1, 2)), np.zeros((1, 2)))
        m = evaluate(f, t)
        assert m.rmse >= m.mae >= 0

    def test_empty(self):
        with pytest.raises(EmptySet):
            evaluate(self.zero_model(), None)


class TestTrain:
    def test_zero_epochs(self, small_splits):
        f, state, rep = train_split(small_splits, FAST.replace(max_epochs=0), 5)
        assert rep.epochs_run == 0 and rep.history == [] and rep.stop_reason == "max_epochs"
        assert f == init_factors(small_splits.tensor.dims, 4, 5)
        assert not any(v.any() for v in state.visited)

    def test_deterministic(self, small_splits):
        a = train_split(small_splits, FAST, 9)
        b = train_split(small_splits, FAST, 9)
        assert a[0] == b[0] and a[1] == b[1]
        assert a[2].deterministic_view() == b[2].deterministic_view()
        c = train_split(small_splits, FAST, 10)
        assert a[0] != c[0]

    def test_history_invariants(self, small_splits):
        _, _, rep = train_split(small_splits, FAST, 0)
        assert len(rep.history) == rep.epochs_run
        assert [h.epoch for h in rep.history] == list(range(1, rep.epochs_run + 1))
        for h in rep.history:
            assert h.rmse >= h.mae >= 0 and h.ms >= 0
        assert rep.final_metrics.count == small_splits.sizes[2]
        assert rep.seed == 0 and rep.hyper == FAST and rep.version

    @pytest.mark.parametrize("tol", [1e-2, 1e-3, 1e-4, 1e-6])
    def test_stopping_correctness(self, small_splits, tol):
        _, _, rep = train_split(small_splits, FAST.replace(tol=tol, max_epochs=60), 2)
        hist = [h.rmse for h in rep.history]
        gaps = [abs(b - a) for a, b in zip(hist, hist[1:])]
        if rep.converged:
            assert rep.stop_reason == "tolerance" and gaps[-1] < tol
            assert all(g >= tol for g in gaps[:-1])
        else:
            assert rep.stop_reason == "max_epochs" and rep.epochs_run == 60
            assert all(g >= tol for g in gaps)

    def test_mae_stop_metric(self, small_splits):
        _, _, rep = train_split(small_splits, FAST.replace(stop_metric="mae", tol=1e-3, max_epochs=100), 2)
        hist = [h.mae for h in rep.history]
        assert rep.converged and abs(hist[-1] - hist[-2]) < 1e-3

    def test_fit_improves(self, small_splits):
        _, _, rep = train_split(small_splits, FAST.replace(max_epochs=40), 0)
        assert rep.history[-1].rmse < rep.history[0].rmse

    def test_empty_sets(self, small_splits):
        with pytest.raises(EmptySet):
            train(small_splits.train, None, FAST)

    def test_callback_and_jsonl(self, small_splits):
        seen = []
        _, _, rep = train_split(small_splits, FAST, 0, callback=seen.append)
        assert seen == rep.history
        lines = [json.loads(x) for x in rep.to_jsonl().splitlines()]
        assert [x["type"] for x in lines] == ["epoch"] * rep.epochs_run + ["summary"]
        assert lines[-1]["seed"] == 0 and lines[-1]["hyper"]["c_i"] == FAST.c_i

    def test_divergence_report_and_strict(self, small_tensor):
        # the sigmoid bounds the gradient, so overflow needs huge targets and gain
        t = small_tensor[0]
        s = split(t.with_values(t.values * 1e6), (0.6, 0.2, 0.2), 1)
        wild = FAST.replace(eta=1e307)
        _, _, rep = train_split(s, wild, 0)
        assert rep.stop_reason == "divergence" and not rep.converged
        assert rep.epochs_run == 0 and rep.failure
        assert rep.final_metrics is None
        with pytest.raises(DivergenceDetected) as info:
            train_split(s, wild, 0, strict=True)
        assert info.value.report.stop_reason == "divergence"

    def test_backends_agree(self, small_splits):
        a = train_split(small_splits, FAST, 3, backend="numba")
        b = train_split(small_splits, FAST, 3, backend="numpy")
        assert a[2].epochs_run == b[2].epochs_run
        for x, y in zip(a[0].matrices(), b[0].matrices()):
            np.testing.assert_allclose(x, y, rtol=0, atol=1e-9)


class TestImpute:
    def test_identity_scaling(self, gen):
        f = FactorSet(*(gen.normal(size=(3, 2)) for _ in range(3)))
        out = impute(f, ScalingParams.identity(10.0), [(0, 1, 2), (2, 2, 0)])
        assert [v for *_, v in out] == [predict(f, 0, 1, 2), predict(f, 2, 2, 0)]
        assert [c[:3] for c in out] == [(0, 1, 2), (2, 2, 0)]

    def test_unscales_and_clamps(self):
        f = FactorSet(np.full((1, 4), 10.0), np.full((1, 4), 10.0), np.full((1, 4), 10.0))
        p = ScalingParams(100.0, 200.0, 2.0)
        (_, _, _, raw), = impute(f, p, [(0, 0, 0)])
        assert raw == pytest.approx(100.0 + 50.0 * 4 * (1 / (1 + math.exp(-10))) ** 3, rel=1e-12)
        (_, _, _, clamped), = impute(f, p, [(0, 0, 0)], clamp=True)
        assert clamped == 200.0

    def test_out_of_range(self):
        f = FactorSet(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)))
        with pytest.raises(IndexOutOfRange):
            impute(f, ScalingParams.identity(), [(0, 0, 1)])

    def test_converged_fit_recovers_training_cells(self, ac3_splits):
        hyper = Hyperparams(rank=8, eta=0.05, lam=0.001, c_i=0.7, c_d=0.0)
        f, _, rep = train_split(ac3_splits, hyper, 0)
        assert rep.converged
        tr = ac3_splits.train
        out = impute(f, ScalingParams.identity(10.0), tr.indices.tolist())
        err = np.abs(np.array([v for *_, v in out]) - tr.values)
        assert err.mean() < 0.05


class TestAblate:
    def test_reduction_formula(self):
        assert round(iteration_reduction(31, 17), 2) == 45.16
        assert iteration_reduction(17, 31) == iteration_reduction(31, 17)
        assert iteration_reduction(0, 0) == 0.0

    def test_rejects_no_pid(self, small_splits):
        with pytest.raises(ValueError):
            ablate(small_splits, FAST.without_pid(), 0)

    def test_baseline_arm_is_plain_train(self, small_splits):
        rep = ablate(small_splits, FAST, 4)
        direct = train_split(small_splits, FAST.replace(c_i=0.0, c_d=0.0), 4)[2]
        assert rep.baseline.deterministic_view() == direct.deterministic_view()
        assert rep.pid.hyper == FAST
        d = rep.to_dict()
        assert d["pid_epochs"] == rep.pid.epochs_run and d["reduction_pct"] == rep.reduction_pct


class TestSweep:
    def test_single_point_matches_train(self, small_splits):
        rep = sweep(small_splits, FAST, {"eta": [FAST.eta]}, 6)
        direct = train_split(small_splits, FAST, 6)[2]
        (row,) = rep.rows
        assert row["epochs"] == direct.epochs_run
        assert row["rmse"] == direct.final_metrics.rmse and row["mae"] == direct.final_metrics.mae

    def test_cardinality_and_csv(self, small_splits):
        rep = sweep(small_splits, FAST, {"eta": [0.1, 0.2], "lambda": [0.001]}, 0)
        assert len(rep.rows) == 2
        header = rep.to_csv().splitlines()[0]
        assert header == "eta,lambda,epochs,stop_reason,rmse,mae,val_rmse,val_mae,ms"

    def test_threads_match_serial(self, small_splits):
        grid = {"c_i": [0.0, 0.3], "c_d": [0.0, 0.2]}
        a = sweep(small_splits, FAST, grid, 0)
        b = sweep(small_splits, FAST, grid, 0, workers=4)
        strip = lambda rows: [{k: v for k, v in r.items() if k != "ms"} for r in rows]  # noqa: E731
        assert strip(a.rows) == strip(b.rows)

    def test_grid_validation(self, small_splits):
        with pytest.raises(ValueError):
            sweep(small_splits, FAST, {}, 0)
        with pytest.raises(ValueError):
            sweep(small_splits, FAST, {"eta": [0.1], "lam": [0.1], "c_i": [0.1]}, 0)

    def test_eta_trend(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            t, _ = synth_low_rank((20, 15, 10), 3, seed=7, density=0.3)
        s = split(t, (0.6, 0.2, 0.2), 7)
        etas = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5]
        rep = sweep(s, Hyperparams(rank=4, eta=0.05, lam=0.001, c_i=0.3, c_d=0.0), {"eta": etas}, 0)
        rho = spearmanr(etas, rep.column("epochs"))[0]
        assert rho < 0


def test_repeat_summary(small_tensor):
    summ = repeat(small_tensor[0], (0.6, 0.2, 0.2), FAST, seed=3, repeats=3)
    assert [r.seed for r in summ.reports] == [3, 4, 5]
    s = summ.summary()
    epochs = [r.epochs_run for r in summ.reports]
    assert s["repeats"] == 3
    assert s["epochs_mean"] == pytest.approx(np.mean(epochs))
    assert s["epochs_std"] == pytest.approx(np.std(epochs, ddof=1))
    with pytest.raises(ValueError):
        repeat(small_tensor[0], (0.6, 0.2, 0.2), FAST, repeats=0)
