import numpy as np
import pytest

from turbomon import refine as rf
from turbomon.data import SensorFrame
from turbomon.training import TrainConfig

from oracles import brute_force_lof


def _frame_from_values(values):
    n = len(values)
    ts = np.datetime64("2017-06-05T00:00:00") + np.arange(n) * np.timedelta64(60, "s")
    return SensorFrame(ts, values, [f"ch_{j}" for j in range(values.shape[1])],
                       np.zeros(n, dtype=np.int8))


class TestDaeTrain:
    def test_memorizes_a_single_point(self):
        rng = np.random.default_rng(0)
        x = np.tile(rng.normal(size=4), (200, 1))
        cfg = TrainConfig(batch_size=64, max_epochs=100, patience=100,
                          lr=1e-2, seed=1)
        _, hist = rf.dae_train(x, x[:20], cfg, rf.DaeConfig(dims=(4, 3, 2, 3, 4), seed=1))
        assert hist.best_val < 1e-6
        assert len(hist.val_loss) <= 100

    def test_returns_best_checkpoint(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(120, 4)) * 0.5
        cfg = TrainConfig(batch_size=32, max_epochs=40, patience=40, lr=3e-3, seed=2)
        model, hist = rf.dae_train(x[:100], x[100:], cfg,
                                   rf.DaeConfig(dims=(4, 3, 2, 3, 4), seed=2))
        val = float(np.mean(rf.reconstruction_errors(model, x[100:])))
        assert val == pytest.approx(hist.best_val, rel=1e-12)

    def test_recovers_low_rank_structure(self):
        # 19-dim data on a 2-D subspace plus tiny noise: the 4-wide bottleneck
        # should reconstruct down to about the noise floor
        rng = np.random.default_rng(1)
        z = rng.normal(size=(600, 2))
        basis = 0.3 * rng.normal(size=(2, 19))
        noise = 0.01
        x = z @ basis + noise * rng.normal(size=(600, 19))
        cfg = TrainConfig(batch_size=64, max_epochs=1500, patience=1500,
                          lr=3e-3, seed=2)
        _, hist = rf.dae_train(x[:480], x[480:], cfg)
        assert hist.best_val < 2 * noise ** 2

    def test_fixed_seed_identical_history(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(80, 4)) * 0.5
        cfg = TrainConfig(batch_size=16, max_epochs=15, patience=15, seed=7)
        hists = [rf.dae_train(x[:64], x[64:], cfg,
                              rf.DaeConfig(dims=(4, 3, 2, 3, 4), seed=7))[1]
                 for _ in range(2)]
        assert hists[0].train_loss == hists[1].train_loss
        assert hists[0].val_loss == hists[1].val_loss


class TestReconstructionErrors:
    def test_offset_model_error_is_one(self):
        # single linear layer acting as identity plus 1 in every coordinate
        model = rf.DaeModel((3, 3), {"W0": np.eye(3), "b0": np.ones((1, 3))})
        x = np.random.default_rng(0).normal(size=(5, 3))
        np.testing.assert_allclose(rf.reconstruction_errors(model, x),
                                   np.ones(5), atol=1e-12)

    def test_identity_model_error_zero(self):
        model = rf.DaeModel((3, 3), {"W0": np.eye(3), "b0": np.zeros((1, 3))})
        x = np.random.default_rng(1).normal(size=(4, 3))
        np.testing.assert_allclose(rf.reconstruction_errors(model, x), 0, atol=1e-12)

    def test_batch_equals_one_by_one(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(10, 4))
        cfg = TrainConfig(max_epochs=3, patience=3, seed=0)
        model, _ = rf.dae_train(x, x, cfg, rf.DaeConfig(dims=(4, 3, 4), seed=0))
        batch = rf.reconstruction_errors(model, x)
        single = np.array([rf.reconstruction_errors(model, x[i:i + 1])[0]
                           for i in range(len(x))])
        np.testing.assert_allclose(batch, single, atol=1e-12)


class TestLof:
    def test_uniform_spacing_interior_scores_near_one(self):
        scores = rf.lof_scores(np.arange(100, dtype=float), k=5)
        assert np.all(np.abs(scores[10:90] - 1.0) < 0.1)

    def test_single_outlier_flagged(self):
        rng = np.random.default_rng(4)
        errors = np.concatenate([rng.uniform(0.0, 0.01, 50), [1.0]])
        scores = rf.lof_scores(errors, k=10)
        assert scores[-1] > 1.5
        np.testing.assert_allclose(scores, brute_force_lof(errors, 10), atol=1e-9)

    @pytest.mark.parametrize("k", [5, 20])
    def test_matches_brute_force_oracle(self, k):
        rng = np.random.default_rng(k)
        for _ in range(5):
            n = int(rng.integers(k + 2, 200))
            errors = rng.normal(size=n)
            np.testing.assert_allclose(rf.lof_scores(errors, k),
                                       brute_force_lof(errors, k), atol=1e-9)

    def test_shift_and_scale_invariance(self):
        rng = np.random.default_rng(6)
        errors = rng.exponential(size=150)
        base = rf.lof_scores(errors, k=12)
        np.testing.assert_allclose(rf.lof_scores(errors + 5.0, 12), base, atol=1e-9)
        np.testing.assert_allclose(rf.lof_scores(errors * 3.5, 12), base, atol=1e-9)

    def test_k_bounds(self):
        with pytest.raises(ValueError, match="n > k"):
            rf.lof_scores(np.arange(5, dtype=float), k=5)


class TestSelectRefined:
    def _inputs(self, n, seed=0):
        rng = np.random.default_rng(seed)
        frame = _frame_from_values(rng.normal(size=(n, 3)))
        errors = rng.uniform(size=n)
        scores = rf.lof_scores(errors, k=10)
        return frame, errors, scores

    @pytest.mark.parametrize("c", [0.0, 0.1, 0.2, 0.3])
    def test_removes_exactly_round_c_n(self, c):
        for n in (97, 100, 103):
            frame, errors, scores = self._inputs(n)
            _, report = rf.select_refined(frame, errors, scores,
                                          rf.LofConfig(10, c))
            assert len(report.removed_indices) == int(np.floor(c * n + 0.5))
            assert (len(report.removed_indices) + len(report.retained_indices)
                    == n)

    def test_zero_contamination_is_identity(self):
        frame, errors, scores = self._inputs(50)
        refined, report = rf.select_refined(frame, errors, scores,
                                            rf.LofConfig(10, 0.0))
        assert refined.equals(frame)
        assert not report.skipped and report.removed_indices == []

    def test_contamination_above_half_rejected(self):
        frame, errors, scores = self._inputs(50)
        with pytest.raises(ValueError, match="contamination"):
            rf.select_refined(frame, errors, scores, rf.LofConfig(10, 0.6))

    def test_retained_order_is_subsequence(self):
        frame, errors, scores = self._inputs(80, seed=2)
        refined, report = rf.select_refined(frame, errors, scores,
                                            rf.LofConfig(10, 0.25))
        np.testing.assert_array_equal(refined.values,
                                      frame.values[report.retained_indices])
        assert report.retained_indices == sorted(report.retained_indices)

    def test_planted_contamination_recovered(self):
        # 80 clean + 20 corrupted (10 sigma) samples; C = 20% must remove
        # at least 18 of the planted ones
        rng = np.random.default_rng(9)
        errors = np.abs(rng.normal(size=100)) * 0.1
        planted = rng.choice(100, size=20, replace=False)
        errors[planted] += 10 * 0.1 * np.abs(rng.normal(size=20))
        frame = _frame_from_values(rng.normal(size=(100, 3)))
        scores = rf.lof_scores(errors, k=20)
        _, report = rf.select_refined(frame, errors, scores, rf.LofConfig(20, 0.2))
        overlap = len(set(report.removed_indices) & set(planted.tolist()))
        assert overlap >= 18

    def test_report_json_round_trip(self):
        frame, errors, scores = self._inputs(30)
        _, report = rf.select_refined(frame, errors, scores, rf.LofConfig(10, 0.2))
        back = rf.RefinementReport.from_json(report.to_json())
        assert back == report
