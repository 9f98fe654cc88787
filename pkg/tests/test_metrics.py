import numpy as np
import pytest

from evrecon.metrics import CSV_COLUMNS, evaluate_sequence, gaussian_window, mse, ssim


def mse_loop(a, b):
    total = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            total += (a[i, j] - b[i, j]) ** 2
    return total / a.size


def ssim_loop(a, b, size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Window-by-window SSIM with an explicit 2-D Gaussian."""
    ax = np.arange(size) - (size - 1) / 2
    w2 = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * sigma**2))
    w2 /= w2.sum()
    c1, c2 = k1**2, k2**2
    vals = []
    for i in range(a.shape[0] - size + 1):
        for j in range(a.shape[1] - size + 1):
            pa, pb = a[i:i + size, j:j + size], b[i:i + size, j:j + size]
            ma, mb = (w2 * pa).sum(), (w2 * pb).sum()
            va = (w2 * (pa - ma) ** 2).sum()
            vb = (w2 * (pb - mb) ** 2).sum()
            cov = (w2 * (pa - ma) * (pb - mb)).sum()
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


class TestMSE:
    def test_self(self):
        x = np.random.default_rng(0).random((8, 8))
        assert mse(x, x) == 0.0

    def test_constants(self):
        assert mse(np.full((4, 4), 0.5), np.full((4, 4), 0.6)) == pytest.approx(0.01, abs=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.random((13, 9)), rng.random((13, 9))
        assert abs(mse(a, b) - mse_loop(a, b)) <= 1e-12

    def test_mismatch(self):
        with pytest.raises(ValueError):
            mse(np.zeros((2, 2)), np.zeros((2, 3)))


class TestSSIM:
    def test_self(self):
        x = np.random.default_rng(1).random((16, 16))
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_inverted_negative(self):
        yy, xx = np.mgrid[0:32, 0:32]
        x = 0.5 + 0.3 * np.sin(xx / 3.0) * np.cos(yy / 4.0)
        assert ssim(x, 1 - x) < 0

    @pytest.mark.parametrize("seed", range(5))
    def test_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.random((16, 16)), rng.random((16, 16))
        assert abs(ssim(a, b) - ssim_loop(a, b)) <= 1e-6

    def test_symmetric(self):
        rng = np.random.default_rng(3)
        a, b = rng.random((20, 20)), rng.random((20, 20))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-15)

    def test_too_small(self):
        with pytest.raises(ValueError, match="smaller"):
            ssim(np.zeros((10, 10)), np.zeros((10, 10)))

    def test_window_normalised(self):
        assert gaussian_window().sum() == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(10))
    def test_bounded_by_one(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.random((16, 16))
        b = a + rng.normal(0, 0.05, a.shape)
        assert ssim(a, b) < 1.0


class TestEvaluate:
    def test_identical(self):
        rng = np.random.default_rng(0)
        frames = [rng.random((16, 16, 3)) for _ in range(3)]
        rep = evaluate_sequence(frames, frames)
        assert rep.mse == [0.0] * 3 and all(s == pytest.approx(1.0) for s in rep.ssim)

    def test_single_frame_and_means(self):
        rng = np.random.default_rng(1)
        p = [rng.random((16, 16)) for _ in range(4)]
        g = [rng.random((16, 16)) for _ in range(4)]
        rep = evaluate_sequence(p, g)
        assert rep.mean_mse == pytest.approx(np.mean(rep.mse))
        assert rep.mean_ssim == pytest.approx(np.mean(rep.ssim))
        assert evaluate_sequence(p[:1], g[:1]).frames == 1

    def test_color_converted(self):
        rng = np.random.default_rng(2)
        c = rng.random((16, 16, 3))
        gray = c @ np.array([0.299, 0.587, 0.114])
        assert evaluate_sequence([c], [gray]).mse[0] == pytest.approx(0.0, abs=1e-20)

    def test_count_mismatch(self):
        with pytest.raises(ValueError, match="count"):
            evaluate_sequence([np.zeros((16, 16))], [])

    def test_permutation_invariant(self):
        rng = np.random.default_rng(4)
        p = [rng.random((16, 16)) for _ in range(3)]
        g = [rng.random((16, 16)) for _ in range(3)]
        a = evaluate_sequence(p, g)
        b = evaluate_sequence(p[::-1], g[::-1])
        assert a.mean_mse == pytest.approx(b.mean_mse) and a.mean_ssim == pytest.approx(b.mean_ssim)

    def test_csv_columns(self):
        rep = evaluate_sequence([np.zeros((12, 12))], [np.ones((12, 12))])
        lines = rep.to_csv().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert lines[1].startswith("0,1.0,") and lines[-1].startswith("mean,")
        assert "LPIPS" in rep.summary()
