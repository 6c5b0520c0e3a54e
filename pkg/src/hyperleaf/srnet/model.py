"""Compact residual-dense super-resolution network for abundance maps.

Layout (all convolutions same-padded):

    x -> conv3 -> f1 -> conv3 -> f0
      -> D residual dense blocks (C conv3+relu layers growing by G channels,
         1x1 local fusion, local residual)
      -> concat of block outputs -> conv1 -> conv3, + f1
      -> log2(scale) x [conv3 to 4*G0, pixel shuffle x2]
      -> conv3 to N channels -> channel softmax

The softmax makes every output pixel a valid abundance vector.
"""
import math
from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError
from . import ops

INIT_LAW = "uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) kernels, zero bias"


@dataclass(frozen=True)
class NetArch:
    in_channels: int = 6
    g0: int = 32
    d_blocks: int = 4
    c_layers: int = 4
    growth: int = 16
    scale: int = 4

    def __post_init__(self):
        for name in ("in_channels", "g0", "d_blocks", "c_layers", "growth"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.scale not in (2, 4, 8):
            raise ValueError("scale must be 2, 4 or 8")

    @property
    def up_stages(self) -> int:
        return int(round(math.log2(self.scale)))

    def layer_shapes(self):
        """Ordered ``(name, c_out, c_in, k)`` for every convolution."""
        n, g0, g = self.in_channels, self.g0, self.growth
        layers = [("shallow1", g0, n, 3), ("shallow2", g0, g0, 3)]
        for d in range(self.d_blocks):
            for c in range(self.c_layers):
                layers.append((f"rdb{d}.conv{c}", g, g0 + c * g, 3))
            layers.append((f"rdb{d}.fuse", g0, g0 + self.c_layers * g, 1))
        layers.append(("global1", g0, self.d_blocks * g0, 1))
        layers.append(("global2", g0, g0, 3))
        for s in range(self.up_stages):
            layers.append((f"up{s}", 4 * g0, g0, 3))
        layers.append(("out", n, g0, 3))
        return layers

    def receptive_radius_lr(self) -> int:
        """Conservative receptive-field radius in input (LR) pixels.

        Each 3x3 convolution adds one pixel at its own resolution; ones run
        after upsampling are still counted as a full LR pixel because they
        can reach across an LR pixel boundary.
        """
        return 2 + self.d_blocks * self.c_layers + 1 + self.up_stages + 1


def init_params(arch: NetArch, seed: int = 0) -> dict:
    """Fan-in scaled uniform kernels and zero biases.

    Values are rounded to float32 so that checkpoints store them exactly.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, c_out, c_in, k in arch.layer_shapes():
        bound = 1.0 / math.sqrt(c_in * k * k)
        w = rng.uniform(-bound, bound, size=(c_out, c_in, k, k))
        params[f"{name}.w"] = w.astype(np.float32).astype(np.float64)
        params[f"{name}.b"] = np.zeros(c_out)
    return params


def _to_nhwc(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    return np.ascontiguousarray(x.transpose(0, 2, 3, 1))


def _to_nchw(y):
    return np.ascontiguousarray(y.transpose(0, 3, 1, 2))


def forward(params: dict, arch: NetArch, x, return_logits: bool = False, keep_cache: bool = False):
    """Run the network on ``x`` of shape ``(N, h, w)`` or ``(B, N, h, w)``.

    Returns an array of the same rank with spatial dims multiplied by
    ``arch.scale``.  With ``keep_cache`` the intermediate values needed by
    :func:`backward` are returned as a second value.
    """
    squeeze = np.ndim(x) == 3
    h = _to_nhwc(getattr(x, "data", x))
    if h.shape[3] != arch.in_channels:
        raise DimensionError(f"input has {h.shape[3]} channels, network expects {arch.in_channels}")
    cache = {}

    def conv(name, inp):
        y, c = ops.conv2d_forward(inp, params[f"{name}.w"], params[f"{name}.b"])
        if keep_cache:
            cache[name] = c
        return y

    f1 = conv("shallow1", h)
    f = conv("shallow2", f1)
    block_outs = []
    for d in range(arch.d_blocks):
        feats = [f]
        for c in range(arch.c_layers):
            cat, _ = ops.concat_channels(feats)
            z, mask = ops.relu_forward(conv(f"rdb{d}.conv{c}", cat))
            if keep_cache:
                cache[f"rdb{d}.relu{c}"] = mask
            feats.append(z)
        cat, _ = ops.concat_channels(feats)
        f = f + conv(f"rdb{d}.fuse", cat)
        block_outs.append(f)
    cat, _ = ops.concat_channels(block_outs)
    g = conv("global2", conv("global1", cat)) + f1
    for s in range(arch.up_stages):
        g = ops.pixel_shuffle_x2(conv(f"up{s}", g))
    logits = conv("out", g)
    out = logits if return_logits else ops.softmax_channels(logits)
    if keep_cache:
        cache["softmax"] = out
        cache["sizes"] = (arch.g0, arch.growth)
    out = _to_nchw(out)
    if squeeze:
        out = out[0]
    return (out, cache) if keep_cache else out


def backward(params: dict, arch: NetArch, cache: dict, dout) -> dict:
    """Gradients of a scalar loss wrt every parameter, given the loss
    gradient ``dout`` wrt the softmax output (same layout as the output)."""
    grads = {}
    dout = np.asarray(dout, dtype=np.float64)
    if dout.ndim == 3:
        dout = dout[None]
    dy = _to_nhwc(dout)

    def conv_back(name, g):
        dx, dw, db = ops.conv2d_backward(cache[name], g)
        grads[f"{name}.w"] = dw
        grads[f"{name}.b"] = db
        return dx

    dy = ops.softmax_backward(cache["softmax"], dy)
    dg = conv_back("out", dy)
    for s in reversed(range(arch.up_stages)):
        dg = conv_back(f"up{s}", ops.pixel_unshuffle_x2(dg))
    df1 = dg.copy()
    dcat = conv_back("global1", conv_back("global2", dg))
    dblocks = ops.split_channels([arch.g0] * arch.d_blocks, dcat)
    df = np.zeros_like(dblocks[0])
    sizes = [arch.g0] + [arch.growth] * arch.c_layers
    for d in reversed(range(arch.d_blocks)):
        df = df + dblocks[d]
        # f_out = f_in + fuse(cat(feats)); feats[0] = f_in
        dfeats = ops.split_channels(sizes, conv_back(f"rdb{d}.fuse", df))
        dfeats = [g.copy() for g in dfeats]
        for c in reversed(range(arch.c_layers)):
            dz = ops.relu_backward(cache[f"rdb{d}.relu{c}"], dfeats[c + 1])
            dcat_c = conv_back(f"rdb{d}.conv{c}", dz)
            for k, g in enumerate(ops.split_channels(sizes[: c + 1], dcat_c)):
                dfeats[k] += g
        df = df + dfeats[0]
    df1 = df1 + conv_back("shallow2", df)
    conv_back("shallow1", df1)
    return grads
