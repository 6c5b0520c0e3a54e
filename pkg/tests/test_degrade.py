import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperleaf.deadleaves import GenConfig, generate_abundance
from hyperleaf.degrade import (PsfConfig, bicubic_upsample_baseline, blur, cubic_weight,
                               degrade_pair, gaussian_kernel, kernel_width, resample_bicubic)
from hyperleaf.errors import DimensionError
from hyperleaf.metrics import mpsnr
from hyperleaf.tensor import AbundanceMap, validate_abundance


def mirror_index(k, n):
    """Half-sample symmetric extension, written out case by case."""
    while k < 0 or k >= n:
        k = -k - 1 if k < 0 else 2 * n - 1 - k
    return k


def naive_blur(img, kern):
    """Direct 2-D correlation with the outer-product kernel."""
    c, h, w = img.shape
    r = len(kern) // 2
    out = np.zeros_like(img)
    for ch in range(c):
        for i in range(h):
            for j in range(w):
                acc = 0.0
                for a in range(-r, r + 1):
                    for b in range(-r, r + 1):
                        acc += kern[a + r] * kern[b + r] * img[ch, mirror_index(i + a, h), mirror_index(j + b, w)]
                out[ch, i, j] = acc
    return out


def keys(d, a=-0.5):
    d = abs(d)
    if d <= 1:
        return (a + 2) * d**3 - (a + 3) * d**2 + 1
    if d < 2:
        return a * d**3 - 5 * a * d**2 + 8 * a * d - 4 * a
    return 0.0


def naive_bicubic(img, oh, ow):
    c, h, w = img.shape
    out = np.zeros((c, oh, ow))
    for i in range(oh):
        sy = (i + 0.5) * h / oh - 0.5
        for j in range(ow):
            sx = (j + 0.5) * w / ow - 0.5
            for ch in range(c):
                acc = 0.0
                for yy in range(math.floor(sy) - 1, math.floor(sy) + 3):
                    for xx in range(math.floor(sx) - 1, math.floor(sx) + 3):
                        acc += keys(sy - yy) * keys(sx - xx) * img[ch, mirror_index(yy, h), mirror_index(xx, w)]
                out[ch, i, j] = acc
    return out


# ------------------------------------------------------------------ kernel

def test_kernel_normalized_and_symmetric():
    for sigma in (0.5, 1.0, 2.5, 4.0):
        k = gaussian_kernel(sigma, 6.0)
        assert abs(k.sum() - 1.0) <= 1e-12
        assert np.array_equal(k, k[::-1])
        assert np.all(k > 0)


def test_default_kernel_width_and_ratio():
    k = gaussian_kernel(4.0, 6.0)
    assert len(k) == 25
    assert k[12] / k[0] == pytest.approx(math.exp(144 / 32), rel=1e-12)


@pytest.mark.parametrize("sigma,trunc,width", [(4, 6, 25), (1, 3, 3), (1, 2.5, 3), (2, 6, 13), (4, 12, 49)])
def test_kernel_width_rule(sigma, trunc, width):
    assert kernel_width(sigma, trunc) == width


# -------------------------------------------------------------------- blur

def test_blur_constant_is_exact_fixed_point():
    x = np.full((2, 20, 17), 0.3141)
    assert np.array_equal(blur(x, gaussian_kernel(4.0)), x)


def test_blur_matches_naive_oracle():
    x = np.random.default_rng(0).random((2, 9, 11))
    k = gaussian_kernel(1.3, 6.0)
    np.testing.assert_allclose(blur(x, k), naive_blur(x, k), rtol=0, atol=1e-13)


def test_blur_kernel_wider_than_image():
    x = np.random.default_rng(1).random((1, 5, 4))
    k = gaussian_kernel(4.0)  # width 25 > 2 * dims
    np.testing.assert_allclose(blur(x, k), naive_blur(x, k), rtol=0, atol=1e-13)


def test_blur_preserves_channel_means():
    # mirrored extension makes the blur a circular blur of the 2x mirrored
    # image, whose mean is preserved exactly
    x = np.random.default_rng(2).random((3, 40, 33))
    y = blur(x, gaussian_kernel(4.0))
    np.testing.assert_allclose(y.mean(axis=(1, 2)), x.mean(axis=(1, 2)), rtol=0, atol=1e-9)


def test_gaussian_semigroup():
    x = np.random.default_rng(3).random((1, 192, 192))
    for sa, sb in ((2.0, 2.0), (1.5, 2.0), (3.0, 4.0)):
        two = blur(blur(x, gaussian_kernel(sa)), gaussian_kernel(sb))
        one = blur(x, gaussian_kernel(math.hypot(sa, sb)))
        crop = (two - one)[:, 32:160, 32:160]
        assert np.sqrt(np.mean(crop**2)) <= 1e-3


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.floats(-3, 3), st.floats(-3, 3))
def test_blur_linearity(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    t1, t2 = rng.random((2, 12, 10)), rng.random((2, 12, 10))
    k = gaussian_kernel(2.0)
    lhs = blur(alpha * t1 + beta * t2, k)
    rhs = alpha * blur(t1, k) + beta * blur(t2, k)
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-10)


# ---------------------------------------------------------------- bicubic

def test_cubic_weights_partition_of_unity():
    for t in np.linspace(0, 1, 11):
        assert sum(cubic_weight(np.array(t - off)) for off in (-1, 0, 1, 2)) == pytest.approx(1, abs=1e-12)


def test_resample_identity():
    x = np.random.default_rng(4).random((2, 7, 9))
    y = resample_bicubic(x, 7, 9)
    assert np.array_equal(x, y)


def test_resample_constant():
    x = np.full((1, 12, 12), 0.77)
    assert np.array_equal(resample_bicubic(x, 3, 3), np.full((1, 3, 3), 0.77))
    assert np.array_equal(resample_bicubic(x, 48, 30), np.full((1, 48, 30), 0.77))


def test_resample_matches_naive_oracle():
    x = np.random.default_rng(5).random((2, 8, 12))
    for oh, ow in ((2, 3), (32, 48), (5, 7)):
        np.testing.assert_allclose(resample_bicubic(x, oh, ow), naive_bicubic(x, oh, ow),
                                   rtol=0, atol=1e-13)


def test_upscale_reproduces_linear_ramp():
    h, w = 16, 20
    yy, xx = np.mgrid[0:h, 0:w]
    ramp = (0.3 * yy - 0.7 * xx + 2.0)[None].astype(float)
    up = resample_bicubic(ramp, 4 * h, 4 * w)
    # the same plane evaluated at the half-pixel-aligned source coordinates
    sy = (np.arange(4 * h) + 0.5) / 4 - 0.5
    sx = (np.arange(4 * w) + 0.5) / 4 - 0.5
    expected = 0.3 * sy[:, None] - 0.7 * sx[None, :] + 2.0
    inner = (slice(8, -8), slice(8, -8))
    np.testing.assert_allclose(up[0][inner], expected[inner], rtol=0, atol=1e-6)


def test_resample_bad_dims():
    with pytest.raises(DimensionError):
        resample_bicubic(np.zeros((1, 4, 4)), 0, 2)


# ---------------------------------------------------------------- degrade

def test_degrade_constant_abundance():
    a = AbundanceMap(np.stack([np.full((32, 32), v) for v in (0.125, 0.375, 0.5)]), normalized=True)
    lr = degrade_pair(a, PsfConfig())
    assert isinstance(lr, AbundanceMap) and lr.normalized
    assert lr.shape == (3, 8, 8)
    assert np.array_equal(lr.data, a.data[:, :8, :8])


def test_degrade_constant_raw():
    x = np.full((2, 16, 16), 0.123)
    assert np.array_equal(degrade_pair(x), np.full((2, 4, 4), 0.123))


def test_degrade_dimension_arithmetic():
    with pytest.raises(DimensionError):
        degrade_pair(np.zeros((6, 498, 498)), PsfConfig())
    with pytest.raises(DimensionError):
        degrade_pair(np.zeros((6, 64, 66)), PsfConfig())
    assert degrade_pair(np.zeros((6, 500, 500)), PsfConfig()).shape == (6, 125, 125)
    out = degrade_pair(np.zeros((6, 496, 496)), PsfConfig())
    assert out.shape == (6, 124, 124)


def test_degrade_restores_asc():
    a = generate_abundance(np.random.default_rng(0), GenConfig(n_materials=5, height=64, width=64))
    lr = degrade_pair(a, PsfConfig())
    rep = validate_abundance(lr, 1e-6)
    assert rep.anc_ok and rep.asc_ok


def test_degrade_decimate_method():
    x = np.random.default_rng(6).random((2, 16, 16))
    out = degrade_pair(x, PsfConfig(method="decimate"))
    blurred = blur(x, gaussian_kernel(4.0))
    assert np.array_equal(out, blurred[:, 2::4, 2::4])


def test_degrade_channel_permutation():
    x = np.random.default_rng(7).random((4, 32, 32))
    perm = [2, 0, 3, 1]
    assert np.array_equal(degrade_pair(x)[perm], degrade_pair(x[perm]))


def test_degrade_deterministic():
    x = np.random.default_rng(8).random((3, 32, 32))
    assert degrade_pair(x).tobytes() == degrade_pair(x.copy()).tobytes()


def test_psf_config_validation():
    with pytest.raises(ValueError):
        PsfConfig(sigma=0)
    with pytest.raises(ValueError):
        PsfConfig(factor=1)
    with pytest.raises(ValueError):
        PsfConfig(method="nearest")


# --------------------------------------------------------------- baseline

def test_baseline_constant_map():
    a = AbundanceMap(np.stack([np.full((6, 6), 0.25), np.full((6, 6), 0.75)]), normalized=True)
    up = bicubic_upsample_baseline(a, 4)
    assert up.shape == (2, 24, 24)
    assert np.array_equal(up.data[:, :6, :6], a.data)


def test_down_then_up_constant_is_identity():
    for values in ((0.0625, 0.4375, 0.5), (1.0, 0.0, 0.0)):
        hr = AbundanceMap(np.stack([np.full((32, 32), v) for v in values]), normalized=True)
        back = bicubic_upsample_baseline(degrade_pair(hr), 4)
        assert np.array_equal(back.data, hr.data)
    raw = np.full((2, 32, 32), 0.3)
    assert np.array_equal(bicubic_upsample_baseline(degrade_pair(raw), 4), raw)


def test_baseline_abundance_is_valid():
    a = generate_abundance(np.random.default_rng(1), GenConfig(n_materials=4, height=64, width=64))
    up = bicubic_upsample_baseline(degrade_pair(a), 4)
    rep = validate_abundance(up)
    assert rep.anc_ok and rep.asc_ok


def test_smooth_maps_survive_better_than_noise():
    rng = np.random.default_rng(9)
    smooth_scores, noise_scores = [], []
    for _ in range(5):
        noise = rng.random((3, 64, 64))
        smooth = blur(rng.random((3, 64, 64)), gaussian_kernel(6.0))
        smooth = (smooth - smooth.min()) / np.ptp(smooth)
        for img, bucket in ((smooth, smooth_scores), (noise, noise_scores)):
            bucket.append(mpsnr(img, bicubic_upsample_baseline(degrade_pair(img), 4)))
    assert min(smooth_scores) > max(noise_scores)
