"""Adam/L1 training loop, checkpoints and tiled inference."""
import csv
import logging
import math
import os
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..deadleaves import load_manifest
from ..errors import ConfigError, DimensionError, TrainingError
from ..htf import load_tensor, save_tensor
from ..metrics import mpsnr
from ..tensor import AbundanceMap, as_cube
from . import ops
from .model import INIT_LAW, NetArch, backward, forward, init_params

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 1e-4
    loss: str = "l1"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 8
    patch_size: int = 16
    patches_per_image: int = 2
    val_fraction: float = 0.05
    checkpoint_every: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1 or self.patch_size < 1:
            raise ConfigError("epochs, batch_size and patch_size must be >= 1")
        if self.patches_per_image < 1:
            raise ConfigError("patches_per_image must be >= 1")
        if self.loss != "l1":
            raise ConfigError("only the l1 loss is supported")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in [0, 1)")


def _f32(x):
    return x.astype(np.float32).astype(np.float64)


class AdamState:
    def __init__(self, params: dict):
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}


def adam_step(params: dict, grads: dict, state: AdamState, cfg: TrainConfig) -> None:
    """One bias-corrected Adam update, in place.

    Parameters and moments are rounded to float32 after the update so a
    checkpoint captures the exact training state.
    """
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name in params:
        g = grads[name]
        m = _f32(b1 * state.m[name] + (1.0 - b1) * g)
        v = _f32(b2 * state.v[name] + (1.0 - b2) * g * g)
        state.m[name], state.v[name] = m, v
        step = cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        params[name] = _f32(params[name] - step)


# ------------------------------------------------------------- checkpoints

def _as_rank3(a: np.ndarray) -> np.ndarray:
    if a.ndim == 1:
        return a.reshape(-1, 1, 1)
    if a.ndim == 2:
        return a.reshape(a.shape[0], a.shape[1], 1)
    return a.reshape(a.shape[0], a.shape[1], -1)


def save_checkpoint(ckpt_dir, params, state: AdamState, arch: NetArch, cfg: TrainConfig, epoch: int) -> str:
    """Write ``<ckpt_dir>/ckpt_<epoch>/`` with one HTF per tensor and index.txt."""
    path = os.path.join(os.fspath(ckpt_dir), f"ckpt_{epoch:04d}")
    os.makedirs(path, exist_ok=True)
    lines = [f"# epoch={epoch}", f"# step={state.t}", f"# init={INIT_LAW}"]
    lines += [f"# arch.{k}={v}" for k, v in asdict(arch).items()]
    lines += [f"# train.{k}={v}" for k, v in asdict(cfg).items()]
    for prefix, tensors in (("", params), ("adam_m.", state.m), ("adam_v.", state.v)):
        for name, value in tensors.items():
            fname = f"{prefix}{name}.htf"
            save_tensor(_as_rank3(value), os.path.join(path, fname))
            shape = "x".join(str(d) for d in value.shape)
            lines.append(f"{prefix}{name}, {shape}, {fname}")
    with open(os.path.join(path, "index.txt"), "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    return path


def load_checkpoint(path):
    """Return ``(params, adam_state, arch, meta)`` from a checkpoint dir."""
    path = os.fspath(path)
    meta, tensors = {}, {}
    with open(os.path.join(path, "index.txt"), encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, value = line[1:].strip().split("=", 1)
                meta[key] = value
                continue
            name, shape, fname = (s.strip() for s in line.split(","))
            dims = tuple(int(d) for d in shape.split("x"))
            tensors[name] = load_tensor(os.path.join(path, fname)).reshape(dims)
    arch_fields = {k[5:]: int(v) for k, v in meta.items() if k.startswith("arch.")}
    arch = NetArch(**arch_fields)
    params = {k: v for k, v in tensors.items() if not k.startswith("adam_")}
    state = AdamState(params)
    state.t = int(meta.get("step", 0))
    for name in params:
        state.m[name] = tensors.get(f"adam_m.{name}", state.m[name])
        state.v[name] = tensors.get(f"adam_v.{name}", state.v[name])
    return params, state, arch, meta


def latest_checkpoint(ckpt_dir) -> Optional[str]:
    ckpt_dir = os.fspath(ckpt_dir)
    if not os.path.isdir(ckpt_dir):
        return None
    names = sorted(n for n in os.listdir(ckpt_dir) if n.startswith("ckpt_"))
    return os.path.join(ckpt_dir, names[-1]) if names else None


# ---------------------------------------------------------------- training

def _load_pairs(manifest, entries):
    hr = np.stack([load_tensor(manifest.hr_file(e)) for e in entries]).astype(np.float32)
    lr = np.stack([load_tensor(manifest.lr_file(e)) for e in entries]).astype(np.float32)
    return hr, lr


def epoch_batches(n_images, lr_shape, cfg: TrainConfig, epoch: int):
    """Patch positions for one epoch, as a list of batches of
    ``(image, row, col)`` in LR coordinates.

    The order depends only on ``(seed, epoch)``, which is what makes a
    resumed run identical to an uninterrupted one.
    """
    rng = np.random.default_rng([cfg.seed, epoch])
    h, w = lr_shape
    p = cfg.patch_size
    picks = []
    for i in range(n_images):
        rows = rng.integers(0, h - p + 1, size=cfg.patches_per_image)
        cols = rng.integers(0, w - p + 1, size=cfg.patches_per_image)
        picks.extend((i, int(r), int(c)) for r, c in zip(rows, cols))
    order = rng.permutation(len(picks))
    picks = [picks[k] for k in order]
    return [picks[k:k + cfg.batch_size] for k in range(0, len(picks), cfg.batch_size)]


def train(manifest, arch: NetArch, cfg: TrainConfig, ckpt_dir=None, resume=None,
          log_path=None, callback=None):
    """Train on the HR/LR pairs listed in ``manifest`` (path or Manifest).

    Returns ``(params, history)`` where history rows are
    ``(epoch, mean_loss, val_mpsnr)``.
    """
    if isinstance(manifest, (str, os.PathLike)):
        manifest = load_manifest(manifest)
    entries = list(manifest.entries)
    if not entries:
        raise ConfigError("manifest lists no images")
    n_val = int(math.floor(cfg.val_fraction * len(entries))) if len(entries) > 1 else 0
    if cfg.val_fraction > 0 and len(entries) > 1:
        n_val = max(1, n_val)
    train_entries = entries[: len(entries) - n_val]
    val_entries = entries[len(entries) - n_val:]
    hr, lr = _load_pairs(manifest, train_entries)
    val = _load_pairs(manifest, val_entries) if val_entries else None
    scale = arch.scale
    if lr.shape[1] != arch.in_channels:
        raise DimensionError(f"data has {lr.shape[1]} channels, network expects {arch.in_channels}")
    if hr.shape[2] != lr.shape[2] * scale or hr.shape[3] != lr.shape[3] * scale:
        raise DimensionError(f"HR {hr.shape[2:]} is not {scale}x LR {lr.shape[2:]}")
    if cfg.patch_size > min(lr.shape[2:]):
        raise ConfigError(f"patch_size {cfg.patch_size} exceeds LR image size {lr.shape[2:]}")

    start = 1
    if resume is not None:
        params, state, ck_arch, meta = load_checkpoint(resume)
        if ck_arch != arch:
            raise ConfigError(f"checkpoint architecture {ck_arch} differs from {arch}")
        start = int(meta["epoch"]) + 1
    else:
        params = init_params(arch, cfg.seed)
        state = AdamState(params)

    history = []
    if log_path is not None:
        _read_log_prefix(log_path, start, history)
    log.info("seed=%d training on %d images (%d held out), epochs %d..%d",
             cfg.seed, len(train_entries), len(val_entries), start, cfg.epochs)
    p, ps = cfg.patch_size, cfg.patch_size * scale
    for epoch in range(start, cfg.epochs + 1):
        losses = []
        for bi, batch in enumerate(epoch_batches(len(train_entries), lr.shape[2:], cfg, epoch)):
            x = np.stack([lr[i, :, r:r + p, c:c + p] for i, r, c in batch]).astype(np.float64)
            y = np.stack([hr[i, :, scale * r:scale * r + ps, scale * c:scale * c + ps]
                          for i, r, c in batch]).astype(np.float64)
            pred, cache = forward(params, arch, x, keep_cache=True)
            loss, dpred = ops.l1_loss(pred, y)
            if not math.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {bi} (batch seed [{cfg.seed}, {epoch}])"
                )
            grads = backward(params, arch, cache, dpred)
            adam_step(params, grads, state, cfg)
            losses.append(loss)
        val_score = float("nan")
        if val is not None:
            val_score = float(np.mean([
                mpsnr(val[0][k], forward(params, arch, val[1][k].astype(np.float64)))
                for k in range(len(val_entries))
            ]))
        row = (epoch, float(np.mean(losses)), val_score)
        history.append(row)
        log.info("epoch %d loss %.6f val_mpsnr %.3f", *row)
        if log_path is not None:
            _write_log(log_path, history)
        if ckpt_dir is not None and (epoch % cfg.checkpoint_every == 0 or epoch == cfg.epochs):
            save_checkpoint(ckpt_dir, params, state, arch, cfg, epoch)
        if callback is not None:
            callback(epoch, params, row)
    return params, history


def _write_log(path, history):
    with open(os.fspath(path), "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["epoch", "loss", "val_mpsnr"])
        for epoch, loss, val in history:
            writer.writerow([epoch, repr(loss), repr(val)])


def _read_log_prefix(path, start, history):
    if start == 1 or not os.path.exists(path):
        return
    with open(os.fspath(path), newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        next(reader, None)
        for epoch, loss, val in reader:
            if int(epoch) < start:
                history.append((int(epoch), float(loss), float(val)))


# --------------------------------------------------------------- inference

def default_overlap(arch: NetArch) -> int:
    return max(8, arch.receptive_radius_lr())


def infer(params, arch: NetArch, a_lr, tile: Optional[int] = 64, overlap: Optional[int] = None) -> AbundanceMap:
    """Super-resolve an abundance map, optionally tile by tile.

    Each tile is run with ``overlap`` LR pixels of context on every side
    and only its center is kept.  With the default overlap (the network's
    receptive-field radius, at least 8) the stitched result matches the
    untiled one.
    """
    x = as_cube(a_lr)
    n, h, w = x.shape
    s = arch.scale
    if tile is None or (h <= tile and w <= tile):
        return AbundanceMap(forward(params, arch, x), normalized=True)
    if overlap is None:
        overlap = default_overlap(arch)
    out = np.empty((n, h * s, w * s))
    for r0 in range(0, h, tile):
        r1 = min(h, r0 + tile)
        for c0 in range(0, w, tile):
            c1 = min(w, c0 + tile)
            pr0, pr1 = max(0, r0 - overlap), min(h, r1 + overlap)
            pc0, pc1 = max(0, c0 - overlap), min(w, c1 + overlap)
            y = forward(params, arch, x[:, pr0:pr1, pc0:pc1])
            out[:, r0 * s:r1 * s, c0 * s:c1 * s] = y[
                :, (r0 - pr0) * s:(r1 - pr0) * s, (c0 - pc0) * s:(c1 - pc0) * s
            ]
    return AbundanceMap(out, normalized=True)
