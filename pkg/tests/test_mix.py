import numpy as np
import pytest

from hyperleaf.deadleaves import asc_normalize
from hyperleaf.errors import DimensionError, SingularityError
from hyperleaf.mix import mix, reconstruct_hr, unmix_oracle

from oracles import mix_loop


def random_abundance(rng, n, h, w):
    return asc_normalize(rng.random((n, h, w)) + 1e-3)


def test_single_endmember():
    spectrum = np.array([0.1, 0.5, 0.9, 0.3])
    cube = mix(spectrum[:, None], np.ones((1, 3, 2)))
    for i in range(3):
        for j in range(2):
            assert cube[:, i, j].tolist() == spectrum.tolist()


def test_identity_mixing():
    a = np.random.default_rng(0).random((3, 4, 5))
    assert np.array_equal(mix(np.eye(3), a), a)


def test_hand_computed_pixel():
    s = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    a = np.array([0.25, 0.75]).reshape(2, 1, 1)
    assert mix(s, a).ravel().tolist() == [0.25, 0.75, 1.0]


def test_matches_loop_oracle():
    rng = np.random.default_rng(1)
    s, a = rng.random((5, 3)), rng.random((3, 4, 4))
    np.testing.assert_allclose(mix(s, a), mix_loop(s, a), rtol=0, atol=1e-14)


def test_reconstruct_is_mix():
    rng = np.random.default_rng(2)
    s, a = rng.random((7, 3)), random_abundance(rng, 3, 5, 5)
    assert np.array_equal(reconstruct_hr(s, a), mix(s, a))


def test_channel_mismatch():
    with pytest.raises(DimensionError):
        mix(np.ones((4, 2)), np.ones((3, 2, 2)))


def test_linearity():
    rng = np.random.default_rng(3)
    s1, s2 = rng.random((6, 3)), rng.random((6, 3))
    a1, a2 = rng.random((3, 4, 4)), rng.random((3, 4, 4))
    np.testing.assert_allclose(mix(s1, 2 * a1 + 3 * a2), 2 * mix(s1, a1) + 3 * mix(s1, a2), atol=1e-10)
    np.testing.assert_allclose(mix(s1 + s2, a1), mix(s1, a1) + mix(s2, a1), atol=1e-10)


def test_convex_combination_bound():
    rng = np.random.default_rng(4)
    s, a = rng.random((8, 4)), random_abundance(rng, 4, 6, 6)
    cube = mix(s, a)
    assert np.all(cube <= s.max(axis=1)[:, None, None] + 1e-12)
    assert np.all(cube >= s.min(axis=1)[:, None, None] - 1e-12)


def test_unmix_roundtrip():
    rng = np.random.default_rng(5)
    for _ in range(20):
        s, a = rng.random((16, 4)), random_abundance(rng, 4, 6, 6)
        cube = mix(s, a)
        back = unmix_oracle(s, cube)
        assert back.normalized
        assert np.max(np.abs(back.data - a.data)) <= 1e-6
        assert np.sqrt(np.mean((mix(s, back) - cube) ** 2)) <= 1e-6


def test_unmix_identity():
    a = np.random.default_rng(6).random((3, 4, 4))
    np.testing.assert_allclose(unmix_oracle(np.eye(3), a).data, asc_normalize(a).data, atol=1e-12)


def test_unmix_rank_deficient():
    s = np.random.default_rng(7).random((10, 3))
    s[:, 2] = s[:, 1]
    with pytest.raises(SingularityError):
        unmix_oracle(s, np.ones((10, 2, 2)))
