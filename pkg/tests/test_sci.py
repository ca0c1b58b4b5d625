import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from revsci.errors import CoverageError, ShapeError
from revsci.sci import (
    MaskSet,
    Measurement,
    bayer_mosaic,
    capture,
    capture_color,
    coarse_estimate,
    flatten_sensing,
    generate_masks,
    split_bayer_estimate,
    unvectorize_image,
    vectorize_video,
)


def pixel_loop_capture(video, masks):
    """y_ij = sum_k c_ijk x_ijk, one pixel at a time."""
    B, nx, ny = video.shape
    y = np.zeros((nx, ny))
    for i in range(nx):
        for j in range(ny):
            s = 0.0
            for k in range(B):
                s += masks[k, i, j] * video[k, i, j]
            y[i, j] = s
    return y


def pixel_loop_coarse(y, masks):
    B, nx, ny = masks.shape
    out = np.zeros((B, nx, ny))
    for i in range(nx):
        for j in range(ny):
            total = sum(masks[k, i, j] for k in range(B))
            for k in range(B):
                out[k, i, j] = y[i, j] / total * masks[k, i, j]
    return out


def maskset(array):
    return MaskSet(np.asarray(array, dtype=float), "bernoulli", 0)


class TestMasks:
    def test_all_ones(self):
        m = generate_masks(3, 4, 5, "all_ones")
        assert m.masks.shape == (3, 4, 5) and np.all(m.masks == 1)

    def test_bernoulli_mean(self):
        # ~1/256 of pixels stay dark at B=8, so full coverage is not requested here
        m = generate_masks(8, 256, 256, "bernoulli", seed=11, require_coverage=False)
        assert 0.49 <= m.masks.mean() <= 0.51

    def test_shifting_is_row_roll(self):
        m = generate_masks(8, 16, 12, "shifting", seed=3)
        for k in range(8):
            np.testing.assert_array_equal(m.masks[k], np.roll(m.masks[0], k, axis=0))

    @pytest.mark.parametrize("scheme", ["bernoulli", "shifting"])
    def test_reproducible_binary_and_covering(self, scheme):
        a = generate_masks(6, 10, 10, scheme, seed=5)
        b = generate_masks(6, 10, 10, scheme, seed=5)
        np.testing.assert_array_equal(a.masks, b.masks)
        assert set(np.unique(a.masks)) <= {0.0, 1.0}
        assert a.coverage().min() > 0

    def test_coverage_unattainable(self):
        with pytest.raises(CoverageError):
            generate_masks(1, 16, 16, "bernoulli", seed=0, max_retries=5)
        m = generate_masks(1, 16, 16, "bernoulli", seed=0, require_coverage=False)
        assert m.coverage().min() == 0

    def test_shifting_needs_rows(self):
        with pytest.raises(ValueError):
            generate_masks(9, 8, 8, "shifting")


class TestCapture:
    def test_single_frame_all_ones(self, rng):
        x = rng.random((1, 4, 4))
        y = capture(x, generate_masks(1, 4, 4, "all_ones")).y
        np.testing.assert_array_equal(y, x[0])

    def test_complementary_masks(self, rng):
        c = rng.integers(0, 2, (4, 4)).astype(float)
        x = rng.random((2, 4, 4))
        y = capture(x, maskset([c, 1 - c])).y
        np.testing.assert_array_equal(y, c * x[0] + (1 - c) * x[1])

    def test_pixel_loop(self, rng):
        x = rng.random((3, 4, 4))
        m = generate_masks(3, 4, 4, "bernoulli", seed=2)
        np.testing.assert_allclose(capture(x, m).y, pixel_loop_capture(x, m.masks), rtol=1e-12)

    def test_noise_is_seeded(self, rng):
        x = rng.random((2, 4, 4))
        m = generate_masks(2, 4, 4, "shifting", seed=1)
        a = capture(x, m, noise_sigma=0.1, seed=9).y
        b = capture(x, m, noise_sigma=0.1, seed=9).y
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, capture(x, m).y)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError) as err:
            capture(np.zeros((2, 4, 5)), generate_masks(2, 4, 4, "all_ones"))
        assert err.value.axis == "y"

    def test_compression_accounting(self, rng):
        x = rng.random((8, 6, 5))
        y = capture(x, generate_masks(8, 6, 5, "all_ones")).y
        assert y.size * 8 == x.size


class TestSensingMatrix:
    def test_identity_for_single_all_ones(self):
        phi = flatten_sensing(generate_masks(1, 3, 3, "all_ones"))
        np.testing.assert_array_equal(phi.to_dense(), np.eye(9))

    def test_dense_oracle_2x2(self, rng):
        m = maskset(rng.integers(0, 2, (2, 2, 2)))
        x = rng.random((2, 2, 2))
        phi = flatten_sensing(m)
        dense = np.zeros((4, 8))
        for k in range(2):
            dense[:, 4 * k:4 * (k + 1)] = np.diag(m.masks[k].reshape(-1, order="F"))
        np.testing.assert_array_equal(phi.to_dense(), dense)
        y = unvectorize_image(dense @ vectorize_video(x), (2, 2))
        np.testing.assert_allclose(y, capture(x, m).y, rtol=1e-12)

    def test_nnz(self, rng):
        m = generate_masks(4, 5, 6, "bernoulli", seed=8)
        assert flatten_sensing(m).nnz == int(m.masks.sum())
        assert flatten_sensing(m).shape == (30, 120)

    def test_rmatvec_is_adjoint(self, rng):
        m = generate_masks(3, 4, 5, "bernoulli", seed=8)
        phi = flatten_sensing(m)
        x, y = rng.random(60), rng.random(20)
        assert np.dot(phi.matvec(x), y) == pytest.approx(np.dot(x, phi.rmatvec(y)), rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31), nx=st.integers(1, 8), ny=st.integers(1, 8), B=st.integers(1, 4))
    def test_three_forms_agree(self, seed, nx, ny, B):
        r = np.random.default_rng(seed)
        x = r.random((B, nx, ny))
        m = maskset(r.integers(0, 2, (B, nx, ny)))
        y = capture(x, m).y
        loop = pixel_loop_capture(x, m.masks)
        phi = unvectorize_image(flatten_sensing(m).matvec(vectorize_video(x)), (nx, ny))
        scale = max(np.abs(loop).max(), 1e-300)
        assert np.abs(y - loop).max() / scale < 1e-12
        assert np.abs(phi - loop).max() / scale < 1e-12


class TestCoarseEstimate:
    def test_all_ones_is_mean(self, rng):
        x = rng.random((4, 5, 5))
        m = generate_masks(4, 5, 5, "all_ones")
        ce = coarse_estimate(capture(x, m), m)
        for k in range(4):
            np.testing.assert_array_equal(ce.frames[k], x.mean(axis=0))
        assert ce.network_input.shape == (1, 4, 5, 5)

    def test_single_binary_mask_with_guard(self, rng):
        x = rng.random((1, 6, 6))
        m = generate_masks(1, 6, 6, "bernoulli", seed=4, require_coverage=False)
        meas = capture(x, m)
        with pytest.raises(CoverageError) as err:
            coarse_estimate(meas, m)
        assert err.value.pixel is not None
        ce = coarse_estimate(meas, m, guard=True)
        np.testing.assert_array_equal(ce.frames[0], meas.y * m.masks[0])

    def test_elementwise_oracle(self, rng):
        x = rng.random((2, 4, 4))
        m = generate_masks(2, 4, 4, "bernoulli", seed=6)
        meas = capture(x, m)
        np.testing.assert_allclose(coarse_estimate(meas, m).frames, pixel_loop_coarse(meas.y, m.masks), rtol=1e-12)


class TestBayer:
    def test_constant_red(self):
        rgb = np.zeros((3, 1, 4, 4))
        rgb[0] = 1.0
        m = generate_masks(1, 4, 4, "all_ones")
        ce = split_bayer_estimate(capture_color(rgb, m), m)
        assert ce.frames.shape == (4, 1, 2, 2)
        assert np.all(ce.frames[0] == 1) and not ce.frames[1:].any()

    def test_gray_mosaic_uniform(self):
        rgb = np.full((3, 2, 4, 6), 0.3)
        assert np.all(bayer_mosaic(rgb) == 0.3)

    def test_site_layout(self):
        rgb = np.stack([np.full((1, 2, 2), v) for v in (1.0, 2.0, 3.0)])
        np.testing.assert_array_equal(bayer_mosaic(rgb)[0], [[1.0, 2.0], [2.0, 3.0]])

    def test_matches_grayscale_composition(self, rng):
        rgb = rng.random((3, 4, 4, 4))
        m = generate_masks(4, 4, 4, "bernoulli", seed=12)
        meas = capture_color(rgb, m)
        ce = split_bayer_estimate(meas, m)
        for s, (dr, dc) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
            sub_masks = maskset(m.masks[:, dr::2, dc::2])
            sub = coarse_estimate(Measurement(meas.y[dr::2, dc::2]), sub_masks)
            np.testing.assert_array_equal(ce.frames[s], sub.frames)

    def test_sites_do_not_mix(self, rng):
        # perturbing the red plane only moves the R sub-estimate
        rgb = rng.random((3, 4, 6, 6))
        m = generate_masks(4, 6, 6, "shifting", seed=1)
        base = split_bayer_estimate(capture_color(rgb, m), m).frames
        rgb[0] += rng.random((4, 6, 6))
        moved = split_bayer_estimate(capture_color(rgb, m), m).frames
        np.testing.assert_array_equal(base[1:], moved[1:])
        assert not np.array_equal(base[0], moved[0])

    def test_odd_extent(self):
        m = generate_masks(1, 3, 4, "all_ones")
        with pytest.raises(ShapeError):
            split_bayer_estimate(Measurement(np.zeros((3, 4)), color=True), m)
