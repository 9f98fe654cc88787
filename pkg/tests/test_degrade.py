import numpy as np
import pytest

from evrecon.degrade import (
    FACTORS, BlotchParams, DegradationRecipe, RecipeRanges, add_gaussian_noise, apply_recipe,
    area_matrix, degrade_edges, line_kernel, low_detail_mask, motion_blur, resize_cycle,
    sample_recipe, synth_blotches, to_grayscale,
)
from evrecon.training.toydata import procedural_image


def natural(seed, size=64):
    return procedural_image(np.random.default_rng(seed), size)


def fwhm(profile):
    """Full width at half maximum with linear interpolation between samples."""
    m = profile.max()
    half = m / 2
    above = np.flatnonzero(profile >= half)
    left, right = above[0], above[-1]
    lx = left - 1 + (half - profile[left - 1]) / (profile[left] - profile[left - 1])
    rx = right + (profile[right] - half) / (profile[right] - profile[right + 1])
    return rx - lx


class TestGrayscale:
    def test_white(self):
        assert np.all(to_grayscale(np.ones((2, 2, 3))) == 1.0)

    def test_red(self):
        img = np.zeros((1, 1, 3))
        img[..., 0] = 1
        assert to_grayscale(img)[0, 0] == pytest.approx(0.299)

    def test_gray_fixed_point(self):
        v = np.random.default_rng(0).random((4, 4))
        np.testing.assert_allclose(to_grayscale(np.stack([v] * 3, -1)), v, atol=1e-15)


class TestMask:
    def test_constant_all_marked(self):
        assert low_detail_mask(np.full((20, 20), 0.3), 7, 30).all()

    def test_noise_percentile_one(self):
        fracs = [low_detail_mask(np.random.default_rng(s).random((64, 64)), 5, 1).mean()
                 for s in range(8)]
        assert abs(np.mean(fracs) - 0.01) <= 0.01

    def test_half_flat_subset(self):
        img = np.full((32, 32), 0.5)
        img[:, 16:] = np.random.default_rng(1).random((32, 16))
        mask = low_detail_mask(img, 5, 50)
        assert mask.any() and not mask[:, 16:].any()

    def test_bad_args(self):
        with pytest.raises(ValueError):
            low_detail_mask(np.zeros((8, 8)), 4, 30)
        with pytest.raises(ValueError):
            low_detail_mask(np.zeros((8, 8)), 5, 100)


class TestBlotches:
    def test_empty_mask_identity(self):
        img = natural(0)
        out = synth_blotches(img, np.zeros_like(img, bool), np.random.default_rng(0))
        np.testing.assert_array_equal(out, img)

    def test_zero_count_identity(self):
        img = natural(0)
        out = synth_blotches(img, np.ones_like(img, bool), np.random.default_rng(0),
                             BlotchParams(count_range=(0, 0)))
        np.testing.assert_array_equal(out, img)

    @pytest.mark.parametrize("seed", range(6))
    def test_deterministic_dark_and_local(self, seed):
        img = to_grayscale(natural(seed))
        mask = low_detail_mask(img, 7, 40)
        a = synth_blotches(img, mask, np.random.default_rng(seed))
        b = synth_blotches(img, mask, np.random.default_rng(seed))
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(a[~mask], img[~mask])
        assert a[mask].mean() < img[mask].mean()
        assert a.min() >= 0 and a.max() <= 1


class TestEdges:
    def test_identity_params(self):
        img = natural(2)[..., 0]
        np.testing.assert_array_equal(degrade_edges(img, np.random.default_rng(0), 0.0, 0.0), img)

    def test_constant_identity(self):
        img = np.full((16, 16), 0.4)
        np.testing.assert_array_equal(degrade_edges(img, np.random.default_rng(0), 1.5, 0.9), img)

    def test_step_widens_and_preserves_mean(self):
        img = np.zeros((32, 32))
        img[:, 16:] = 1.0
        out = degrade_edges(img, np.random.default_rng(0), 1.0, 0.0)

        def width(row):
            return np.sum((row > 0.1) & (row < 0.9))
        assert width(out[16]) > width(img[16])
        assert abs(out.mean() - img.mean()) / img.mean() < 0.01

    def test_breaks_move_pixels(self):
        img = np.zeros((32, 32))
        img[8:24, 8:24] = 1.0
        out = degrade_edges(img, np.random.default_rng(3), 0.0, 1.0, 2)
        assert not np.array_equal(out, img)


class TestNoise:
    def test_zero(self):
        img = natural(1)[..., 1]
        np.testing.assert_array_equal(add_gaussian_noise(img, np.random.default_rng(0), 0.0), img)

    def test_moment(self):
        out = add_gaussian_noise(np.full((256, 256), 0.5), np.random.default_rng(0), 0.1)
        assert abs(out.std() - 0.1) <= 0.005

    def test_replay(self):
        img = np.full((8, 8), 0.5)
        a = add_gaussian_noise(img, np.random.default_rng(5), 0.2)
        b = add_gaussian_noise(img, np.random.default_rng(5), 0.2)
        np.testing.assert_array_equal(a, b)


class TestMotionBlur:
    def test_length_one(self):
        img = natural(3)[..., 2]
        np.testing.assert_array_equal(motion_blur(img, 1, 33.0), img)

    @pytest.mark.parametrize("angle", [0, 30, 90, 135])
    def test_constant(self, angle):
        np.testing.assert_allclose(motion_blur(np.full((12, 12), 0.6), 7, angle), 0.6, atol=1e-12)

    def test_kernel_sums_to_one(self):
        for L in (2, 3, 6, 9):
            for a in (0, 17, 45, 90):
                assert line_kernel(L, a).sum() == pytest.approx(1.0)

    def test_vertical_line_width_doubles(self):
        img = np.zeros((9, 21))
        img[:, 10] = 1.0
        out = motion_blur(img, 3, 0.0)
        oracle_row = np.convolve(img[4], [0.25, 0.5, 0.25], mode="same")
        np.testing.assert_allclose(out[4], oracle_row, atol=1e-12)
        assert fwhm(out[4]) == pytest.approx(2 * fwhm(img[4]))


class TestResize:
    def test_constant(self):
        np.testing.assert_allclose(resize_cycle(np.full((10, 14), 0.3), 0.4), 0.3, atol=1e-12)

    def test_checkerboard_half(self):
        cb = (np.indices((64, 64)).sum(0) % 2).astype(float)
        np.testing.assert_allclose(resize_cycle(cb, 0.5), 0.5, atol=1e-12)

    @pytest.mark.parametrize("shape,scale", [((64, 64), 0.5), ((17, 23), 0.33), ((5, 9), 0.9)])
    def test_shape(self, shape, scale):
        assert resize_cycle(np.random.default_rng(0).random(shape), scale).shape == shape

    def test_area_rows_sum_to_one(self):
        m = area_matrix(17, 6)
        np.testing.assert_allclose(m.sum(1), 1.0)
        assert np.all(m >= 0)


class TestRecipe:
    def test_identity_is_grayscale(self):
        img = natural(4)
        np.testing.assert_array_equal(apply_recipe(img, DegradationRecipe.identity(7)), to_grayscale(img))

    def test_replay_bytes(self):
        img = natural(5)
        r = sample_recipe(np.random.default_rng(1), seed=42)
        assert apply_recipe(img, r).tobytes() == apply_recipe(img, r).tobytes()

    @pytest.mark.parametrize("seed", range(5))
    def test_nondegenerate(self, seed):
        img = natural(seed)
        lq = apply_recipe(img, DegradationRecipe(seed=seed))
        assert np.mean((lq - to_grayscale(img)) ** 2) > 0
        assert lq.shape == img.shape[:2] and lq.min() >= 0 and lq.max() <= 1

    def test_text_round_trip(self):
        r = sample_recipe(np.random.default_rng(3), seed=2**40 + 3)
        back = DegradationRecipe.from_text(r.to_text())
        assert back == r

    def test_bad_order(self):
        with pytest.raises(ValueError):
            DegradationRecipe(factor_order=("blotch", "edge")).validate()

    def test_sample_ranges(self):
        rr = RecipeRanges()
        for s in range(20):
            r = sample_recipe(np.random.default_rng(s), s, rr)
            assert sorted(r.factor_order) == sorted(FACTORS)
            assert rr.resize_scale[0] <= r.resize_scale <= rr.resize_scale[1]
