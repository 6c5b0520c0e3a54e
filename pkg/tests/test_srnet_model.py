import numpy as np
import pytest

from hyperleaf.srnet import NetArch, backward, forward, init_params, ops

from oracles import central_difference, rel_err

SMALL = NetArch(in_channels=3, g0=4, d_blocks=2, c_layers=2, growth=3, scale=4)


def test_default_architecture():
    arch = NetArch()
    assert (arch.in_channels, arch.g0, arch.d_blocks, arch.c_layers, arch.growth, arch.scale) == (6, 32, 4, 4, 16, 4)
    assert arch.up_stages == 2


def test_param_names_cover_layers():
    params = init_params(SMALL, seed=0)
    names = {n for n, *_ in SMALL.layer_shapes()}
    assert set(params) == {f"{n}.w" for n in names} | {f"{n}.b" for n in names}
    for name, c_out, c_in, k in SMALL.layer_shapes():
        assert params[f"{name}.w"].shape == (c_out, c_in, k, k)
        assert np.all(params[f"{name}.b"] == 0)
        bound = 1 / np.sqrt(c_in * k * k)
        assert np.all(np.abs(params[f"{name}.w"]) <= bound)


def test_init_is_float32_exact_and_seeded():
    a, b, c = init_params(SMALL, 1), init_params(SMALL, 1), init_params(SMALL, 2)
    for k in a:
        assert np.array_equal(a[k], b[k])
        assert np.array_equal(a[k].astype(np.float32).astype(np.float64), a[k])
    assert not np.array_equal(a["shallow1.w"], c["shallow1.w"])


@pytest.mark.parametrize("scale", [2, 4, 8])
def test_output_shape(scale):
    arch = NetArch(in_channels=2, g0=4, d_blocks=1, c_layers=1, growth=2, scale=scale)
    y = forward(init_params(arch), arch, np.random.default_rng(0).random((2, 3, 5)))
    assert y.shape == (2, 3 * scale, 5 * scale)


def test_batched_matches_single():
    params = init_params(SMALL)
    xs = np.random.default_rng(1).random((2, 3, 4, 4))
    yb = forward(params, SMALL, xs)
    for k in range(2):
        np.testing.assert_allclose(yb[k], forward(params, SMALL, xs[k]), atol=1e-13)


def test_output_simplex_for_any_params():
    rng = np.random.default_rng(2)
    params = {k: rng.standard_normal(v.shape) * 5 for k, v in init_params(SMALL).items()}
    y = forward(params, SMALL, rng.random((3, 5, 5)))
    assert np.all(y >= 0)
    assert np.max(np.abs(y.sum(axis=0) - 1)) <= 1e-6


def test_channel_mismatch():
    with pytest.raises(ValueError):
        forward(init_params(SMALL), SMALL, np.ones((4, 3, 3)))


def test_end_to_end_gradient():
    """L1 loss through the whole network against central differences."""
    arch = NetArch(in_channels=6, g0=4, d_blocks=2, c_layers=2, growth=3, scale=4)
    rng = np.random.default_rng(3)
    params = {k: v + rng.standard_normal(v.shape) * 0.05 for k, v in init_params(arch, 3).items()}
    x = rng.random((6, 8, 8))
    target = rng.dirichlet(np.ones(6), size=(32, 32)).transpose(2, 0, 1)
    pred, cache = forward(params, arch, x, keep_cache=True)
    _, dpred = ops.l1_loss(pred[None], target[None])
    grads = backward(params, arch, cache, dpred)

    def loss():
        return ops.l1_loss(forward(params, arch, x), target)[0]

    worst = 0.0
    for name in sorted(params):
        p = params[name]
        for _ in range(3):
            idx = tuple(int(rng.integers(s)) for s in p.shape)
            num = central_difference(loss, p, idx, 1e-6)
            worst = max(worst, rel_err(num, grads[name][idx], floor=1e-6))
    assert worst <= 1e-3


def test_weight_space_permutation_symmetry():
    params = init_params(SMALL, seed=4)
    x = np.random.default_rng(5).random((3, 6, 6))
    perm = [2, 0, 1]
    permuted = dict(params)
    permuted["shallow1.w"] = params["shallow1.w"][:, perm]
    a = forward(params, SMALL, x, return_logits=True)
    b = forward(permuted, SMALL, x[perm], return_logits=True)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_receptive_radius_bounds_influence():
    """A perturbation farther than the radius leaves the output untouched."""
    params = init_params(SMALL, seed=6)
    r = SMALL.receptive_radius_lr()
    size = 2 * r + 4
    x = np.random.default_rng(7).random((3, size, size))
    y = forward(params, SMALL, x)
    x2 = x.copy()
    x2[:, -1, -1] += 1.0
    y2 = forward(params, SMALL, x2)
    s = SMALL.scale
    keep = size - 1 - r
    np.testing.assert_allclose(y[:, :keep * s, :keep * s], y2[:, :keep * s, :keep * s], rtol=0, atol=1e-12)
