import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtkd.distill import (DistillConfig, batch_loss, ft_loss, kd_loss, mtkd_loss, mtkd_loss_batch,
                          teacher_logits_for)
from mtkd.errors import InvalidArgument
from mtkd.model import init_classifier
from mtkd.numerics import cross_entropy, cross_entropy_grad, finite_difference_check

from . import oracles

CFG = DistillConfig()


def random_case(rng, k=4, m=3):
    return rng.normal(scale=2.0, size=k), [rng.normal(scale=2.0, size=k) for _ in range(m)], int(rng.integers(k))


class TestConfig:
    def test_defaults(self):
        assert (CFG.lam, CFG.temperature, CFG.tau, CFG.kl_direction) == (0.25, 5.0, 0.1, "student_to_teacher")
        assert CFG.kl_scale == 1.0
        assert DistillConfig(t_squared_rescale=True).kl_scale == 25.0

    @pytest.mark.parametrize("kw", [{"lam": -0.1}, {"lam": 1.5}, {"temperature": 0}, {"tau": -1},
                                    {"kl_direction": "both"}])
    def test_rejects(self, kw):
        with pytest.raises(InvalidArgument):
            DistillConfig(**kw)


class TestMtkdLoss:
    def test_lambda_zero_is_ce(self, rng):
        s, ts, y = random_case(rng)
        loss, grad, _ = mtkd_loss(s, ts, y, DistillConfig(lam=0.0))
        assert loss == cross_entropy(s, y)
        assert np.array_equal(grad, cross_entropy_grad(s, y))

    def test_identical_teachers(self, rng):
        s, ts, y = random_case(rng)
        _, _, diag = mtkd_loss(s, [ts[0]] * 3, y, CFG)
        np.testing.assert_allclose(diag.teacher_weights, 1 / 3, atol=1e-15)
        np.testing.assert_allclose(diag.per_teacher_kl, diag.per_teacher_kl[0], atol=0)

    @pytest.mark.parametrize("direction", ["student_to_teacher", "teacher_to_student"])
    def test_against_oracle(self, rng, direction):
        cfg = DistillConfig(kl_direction=direction)
        for _ in range(50):
            s, ts, y = random_case(rng, k=int(rng.integers(2, 7)), m=int(rng.integers(1, 5)))
            loss, _, diag = mtkd_loss(s, ts, y, cfg)
            ref, w, kls = oracles.mtkd_total(s, ts, y, cfg.lam, cfg.temperature, cfg.tau, direction)
            assert abs(loss - ref) <= 1e-10 * max(1.0, abs(ref))
            np.testing.assert_allclose(diag.teacher_weights, w, rtol=1e-10, atol=1e-300)
            np.testing.assert_allclose(diag.per_teacher_kl, kls, rtol=1e-9, atol=1e-13)

    def test_kd_equals_single_teacher_mtkd(self, rng):
        s, ts, y = random_case(rng)
        a = kd_loss(s, ts[0], y, CFG)
        b = mtkd_loss(s, [ts[0]], y, CFG)
        assert a[0] == b[0] and np.array_equal(a[1], b[1])
        assert b[2].teacher_weights.tolist() == [1.0]

    def test_ft_loss(self, rng):
        s, _, y = random_case(rng)
        loss, grad = ft_loss(s, y)
        assert loss == cross_entropy(s, y) and np.array_equal(grad, cross_entropy_grad(s, y))

    def test_mixing_identity(self, rng):
        s, ts, y = random_case(rng)
        _, _, d = mtkd_loss(s, ts, y, CFG)
        assert d.total_loss == pytest.approx((1 - CFG.lam) * d.ce_loss + CFG.lam * d.kl_loss, abs=1e-14)
        assert d.kl_loss == pytest.approx(float(np.dot(d.teacher_weights, d.per_teacher_kl)), abs=1e-14)

    def test_t_squared_rescale(self, rng):
        s, ts, y = random_case(rng)
        plain = mtkd_loss(s, ts, y, CFG)[2]
        scaled = mtkd_loss(s, ts, y, DistillConfig(t_squared_rescale=True))[2]
        assert scaled.kl_scale == 25.0
        assert scaled.total_loss == pytest.approx(0.75 * plain.ce_loss + 0.25 * 25 * plain.kl_loss, rel=1e-13)

    def test_matching_teacher_dominates(self, rng):
        s = rng.normal(size=4)
        _, _, d = mtkd_loss(s, [s * 2.0, -s, rng.normal(size=4)], 0, CFG)
        assert d.selected_teacher == 0 and d.teacher_weights[0] > 0.9

    def test_scaling_teacher_keeps_selection(self, rng):
        for _ in range(100):
            s, ts, y = random_case(rng)
            base = mtkd_loss(s, ts, y, CFG)[2].selected_teacher
            j = int(rng.integers(len(ts)))
            ts2 = [t * (3.7 if i == j else 1.0) for i, t in enumerate(ts)]
            assert mtkd_loss(s, ts2, y, CFG)[2].selected_teacher == base

    def test_zero_student_is_degenerate(self, rng):
        _, ts, y = random_case(rng)
        _, _, d = mtkd_loss(np.zeros(4), ts, y, CFG)
        assert d.degenerate_cosine.all()
        np.testing.assert_allclose(d.teacher_weights, 1 / 3)

    def test_bad_inputs(self, rng):
        s, ts, y = random_case(rng)
        with pytest.raises(InvalidArgument):
            mtkd_loss(s, [], y, CFG)
        with pytest.raises(InvalidArgument):
            mtkd_loss(s, [np.zeros(5)], y, CFG)
        with pytest.raises(InvalidArgument):
            mtkd_loss(s, ts, 7, CFG)
        with pytest.raises(InvalidArgument):
            mtkd_loss(s, [np.array([np.nan, 0, 0, 0])], y, CFG)

    @pytest.mark.parametrize("direction", ["student_to_teacher", "teacher_to_student"])
    def test_gradient(self, rng, direction):
        cfg = DistillConfig(kl_direction=direction)
        for _ in range(20):
            s, ts, y = random_case(rng)
            # weights are a constant for differentiation
            w = mtkd_loss(s, ts, y, cfg)[2].teacher_weights

            def frozen(x):
                ce = cross_entropy(x, y)
                kls = [mtkd_loss(x, [t], y, DistillConfig(lam=1.0, kl_direction=direction))[0] for t in ts]
                return (1 - cfg.lam) * ce + cfg.lam * float(np.dot(w, kls))

            err = finite_difference_check(frozen, lambda x: mtkd_loss(x, ts, y, cfg)[1], s, 1e-4)
            assert err < 1e-6

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-20, 20), min_size=3, max_size=3),
           st.lists(st.lists(st.floats(-20, 20), min_size=3, max_size=3), min_size=1, max_size=4),
           st.integers(0, 2))
    def test_finite_and_nonnegative(self, s, ts, y):
        loss, grad, d = mtkd_loss(s, ts, y, CFG)
        assert np.isfinite(loss) and np.all(np.isfinite(grad))
        assert loss >= -1e-12 and np.all(d.per_teacher_kl >= -1e-12)
        assert d.teacher_weights.sum() == pytest.approx(1.0, abs=1e-12)


class TestBatch:
    def test_matches_per_sample(self, rng):
        s = rng.normal(size=(8, 4))
        t = rng.normal(size=(3, 8, 4))
        y = rng.integers(4, size=8)
        losses, grads, diag = mtkd_loss_batch(s, t, y, CFG)
        for i in range(8):
            loss, grad, d = mtkd_loss(s[i], list(t[:, i]), y[i], CFG)
            assert losses[i] == pytest.approx(loss, abs=1e-14)
            np.testing.assert_allclose(grads[i], grad, atol=1e-15)
            np.testing.assert_allclose(diag.row(i).teacher_weights, d.teacher_weights, atol=1e-15)

    def test_batch_of_one(self, rng):
        s, ts, y = random_case(rng)
        losses, grads, _ = mtkd_loss_batch(s[None], np.stack(ts)[:, None], np.array([y]), CFG)
        loss, grad, _ = mtkd_loss(s, ts, y, CFG)
        assert losses[0] == loss and np.array_equal(grads[0], grad)

    def test_records(self, rng):
        s = rng.normal(size=(2, 4))
        t = rng.normal(size=(3, 2, 4))
        _, _, diag = mtkd_loss_batch(s, t, np.array([0, 1]), CFG)
        recs = diag.to_records(5, [10, 11], ["en", "fi"])
        assert recs[1]["sample_id"] == 11 and recs[1]["language"] == "fi" and len(recs[0]["weights"]) == 3
        assert set(recs[0]) == {"step", "sample_id", "language", "cs", "weights", "per_teacher_kl", "ce", "kl",
                                "total"}


class TestBatchLoss:
    @pytest.fixture
    def setup(self, small_dataset):
        student = init_classifier([6, 8, 4], 1)
        teachers = [init_classifier([6, 8, 4], s) for s in (2, 3, 4)]
        return student, teachers, small_dataset[np.arange(12)]

    def test_duplicated_batch_same_mean(self, setup):
        student, teachers, batch = setup
        doubled = batch[np.concatenate([np.arange(12), np.arange(12)])]
        a = batch_loss("mtkd", student, teachers, batch, CFG)
        b = batch_loss("mtkd", student, teachers, doubled, CFG)
        assert a[0] == pytest.approx(b[0], abs=1e-14)
        np.testing.assert_allclose(a[1].flat(), b[1].flat(), atol=1e-15)

    def test_precomputed_logits(self, setup):
        student, teachers, batch = setup
        a = batch_loss("mtkd", student, teachers, batch, CFG)
        b = batch_loss("mtkd", student, [], batch, CFG, teacher_logits_for(teachers, batch.features))
        assert a[0] == b[0] and np.array_equal(a[1].flat(), b[1].flat())

    def test_parameter_gradient(self, setup):
        student, teachers, batch = setup
        tl = teacher_logits_for(teachers, batch.features)

        def loss(theta):
            # teacher weights held fixed through the stop-gradient, so use a frozen reference
            return batch_loss("kd", student.with_flat_parameters(theta), [], batch, CFG, tl[:1])[0]

        def grad(theta):
            return batch_loss("kd", student.with_flat_parameters(theta), [], batch, CFG, tl[:1])[1].flat()

        assert finite_difference_check(loss, grad, student.flat_parameters(), 1e-4) < 1e-5

    def test_paradigm_arity(self, setup):
        student, teachers, batch = setup
        with pytest.raises(InvalidArgument):
            batch_loss("kd", student, teachers, batch, CFG)
        with pytest.raises(InvalidArgument):
            batch_loss("ft", student, teachers, batch, CFG)
        with pytest.raises(InvalidArgument):
            batch_loss("mtkd", student, [], batch, CFG)
        with pytest.raises(InvalidArgument):
            batch_loss("xx", student, [], batch, CFG)

    def test_ft_ignores_config(self, setup):
        student, _, batch = setup
        a = batch_loss("ft", student, [], batch, CFG)
        b = batch_loss("ft", student, [], batch, DistillConfig(lam=0.9))
        assert a[0] == b[0]
        assert a[2].teacher_weights.shape == (12, 0)
