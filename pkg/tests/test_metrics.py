import numpy as np
import pytest

from otfspred.metrics import aser, ber, dl_se, nmse, tf_user_vectors
from otfspred.modem import qpsk_bits, qpsk_modulate, qpsk_random, qpsk_slice


class TestNmse:
    def test_exact_match_sentinel(self):
        h = np.ones((4, 3), dtype=complex)
        assert nmse(h, h) == -300.0

    def test_zero_estimate(self):
        h = np.ones(8, dtype=complex)
        assert nmse(h, np.zeros(8)) == pytest.approx(0.0)

    def test_small_relative_error(self):
        h = (np.arange(64) + 1.0).astype(complex)
        assert nmse(h, h * (1 + 1e-2)) == pytest.approx(-40.0)

    def test_zero_reference_rejected(self):
        with pytest.raises(ValueError):
            nmse(np.zeros(4), np.ones(4))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            nmse(np.ones(4), np.ones(5))


def random_gains(rng, f, n_r, n_u, n_l, mn):
    return (rng.standard_normal((f, n_r, n_u, n_l, mn))
            + 1j * rng.standard_normal((f, n_r, n_u, n_l, mn)))


class TestDlSe:
    def test_single_user_matches_closed_form(self):
        rng = np.random.default_rng(0)
        gains = random_gains(rng, 1, 4, 1, 2, 8 * 2)
        sigma2 = 0.5
        res = dl_se(gains, gains, sigma2, m=8)
        h_tf = tf_user_vectors(gains, 8)
        expected = np.mean(np.log2(1 + np.sum(np.abs(h_tf[..., 0, :]) ** 2,
                                              axis=-1) / sigma2))
        assert res.se_per_frame[0] == pytest.approx(expected)
        assert res.skipped == 0

    def test_perfect_prediction_nulls_interference(self):
        rng = np.random.default_rng(1)
        gains = random_gains(rng, 1, 6, 2, 3, 4 * 2)
        h_tf = tf_user_vectors(gains, 4)
        flat = h_tf.reshape(-1, 2, 6)
        # rebuild the precoding step and inspect the cross terms
        w = np.linalg.pinv(flat)
        w = w / np.linalg.norm(w, axis=1, keepdims=True)
        cross = flat @ w
        off_diag = cross.copy()
        for e in range(off_diag.shape[0]):
            np.fill_diagonal(off_diag[e], 0.0)
        sig = np.abs(np.diagonal(cross, axis1=1, axis2=2)) ** 2
        assert np.max(np.abs(off_diag) ** 2 / sig.min()) < 1e-20

    def test_noise_dominated_limit(self):
        rng = np.random.default_rng(2)
        gains = random_gains(rng, 1, 4, 2, 2, 4 * 2)
        res = dl_se(gains, gains, sigma2=1e12, m=4)
        assert np.all(res.se_per_frame < 1e-9)

    def test_rank_deficient_elements_skipped(self):
        rng = np.random.default_rng(3)
        gains = random_gains(rng, 1, 4, 2, 2, 4 * 2)
        res = dl_se(np.zeros_like(gains), gains, sigma2=1.0, m=4)
        assert res.skipped == 8              # every element skipped
        assert np.all(res.se_per_frame == 0)

    def test_user_count_bound(self):
        rng = np.random.default_rng(4)
        gains = random_gains(rng, 1, 2, 3, 1, 4 * 2)
        with pytest.raises(ValueError):
            dl_se(gains, gains, 1.0, m=4)


class TestAser:
    def test_perfect_prediction(self):
        se = np.array([3.0, 2.5])
        assert aser(se, se) == pytest.approx(1.0)

    def test_half_rate(self):
        se = np.array([3.0, 2.0])
        assert aser(se * 0.5, se) == pytest.approx(0.5)

    def test_zero_prediction_below_one(self):
        rng = np.random.default_rng(5)
        gains = random_gains(rng, 1, 4, 2, 2, 4 * 2)
        perfect = dl_se(gains, gains, 1.0, m=4).se_per_frame
        zero = dl_se(np.zeros_like(gains), gains, 1.0, m=4).se_per_frame
        assert aser(zero, perfect) < 1.0

    def test_nonpositive_reference_rejected(self):
        with pytest.raises(ValueError):
            aser(np.array([1.0]), np.array([0.0]))


class TestBer:
    def test_identical(self):
        rng = np.random.default_rng(0)
        x = qpsk_random(rng, 100)
        assert ber(x, x) == 0.0

    def test_conjugate_flips_one_bit_per_symbol(self):
        rng = np.random.default_rng(1)
        x = qpsk_random(rng, 1000)
        assert ber(np.conj(x), x) == pytest.approx(0.5)

    def test_random_guess_near_half(self):
        rng = np.random.default_rng(2)
        x = qpsk_random(rng, 50000)
        y = qpsk_random(rng, 50000)
        assert abs(ber(y, x) - 0.5) < 0.01


class TestModem:
    def test_gray_mapping_round_trip(self):
        bits = np.array([[0, 0], [0, 1], [1, 0], [1, 1]])
        symbols = qpsk_modulate(bits)
        assert np.allclose(np.abs(symbols), 1.0)
        assert np.array_equal(qpsk_bits(symbols), bits)

    def test_slicing_recovers_from_small_noise(self):
        rng = np.random.default_rng(3)
        x = qpsk_random(rng, 500)
        noisy = x + 0.05 * (rng.standard_normal(500)
                            + 1j * rng.standard_normal(500))
        assert np.allclose(qpsk_slice(noisy), x)
