"""Synthetic abundance maps from a rectangular dead-leaves model.

Generation of one map runs in three stages: an occlusion field built by
perfect simulation (each new leaf goes underneath everything already
placed, so it only paints still-uncovered pixels), a local-variation layer
of faint leaves, and a pixelwise sum-to-one normalization.
"""
import math
import os
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np

from .config import build
from .degrade import PsfConfig, degrade_pair
from .errors import ConfigError, GenerationError, NormalizationError
from .htf import to_bytes
from .tensor import AbundanceMap, as_cube, validate_abundance

MAX_LEAVES = 10**6
REFERENCE_SIZE = 500
REFERENCE_SIDES = (4, 40)


def default_sides(height: int, width: int):
    """Leaf side range 4..40 at 500 px, scaled to the image's smaller side."""
    scale = min(height, width) / REFERENCE_SIZE
    lo = max(1, round(REFERENCE_SIDES[0] * scale))
    hi = max(lo, round(REFERENCE_SIDES[1] * scale))
    return lo, hi


@dataclass(frozen=True)
class GenConfig:
    n_materials: int = 6
    height: int = 512
    width: int = 512
    side_min: Optional[int] = None
    side_max: Optional[int] = None
    variation_count: int = 50
    variation_value_max: float = 0.15
    variation_mode: str = "additive"  # or "occluding-top"
    leakage_eps: float = 0.05
    seed: int = 0

    def __post_init__(self):
        lo, hi = default_sides(self.height, self.width)
        if self.side_min is None:
            object.__setattr__(self, "side_min", lo)
        if self.side_max is None:
            object.__setattr__(self, "side_max", max(hi, self.side_min))
        self.validate()

    def validate(self):
        if self.n_materials < 1 or self.height < 1 or self.width < 1:
            raise ConfigError("n_materials, height and width must be >= 1")
        if not 1 <= self.side_min <= self.side_max <= min(self.height, self.width):
            raise ConfigError(
                f"need 1 <= side_min <= side_max <= min(height, width), got "
                f"{self.side_min}, {self.side_max}"
            )
        if not 0 < self.variation_value_max <= 0.3:
            raise ConfigError("variation_value_max must lie in (0, 0.3]")
        if not 0 <= self.leakage_eps <= 0.2:
            raise ConfigError("leakage_eps must lie in [0, 0.2]")
        if self.variation_count < 0:
            raise ConfigError("variation_count must be >= 0")
        if self.variation_mode not in ("additive", "occluding-top"):
            raise ConfigError(f"unknown variation_mode {self.variation_mode!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")


class Leaf(NamedTuple):
    a: int
    b: int
    theta: float
    value: float
    center: tuple
    material: int


def sample_leaf(rng: np.random.Generator, cfg: GenConfig) -> Leaf:
    """Draw one leaf; the center is uniform over the image window."""
    u = rng.random(7)
    span = cfg.side_max - cfg.side_min + 1
    return Leaf(
        a=cfg.side_min + min(int(u[0] * span), span - 1),
        b=cfg.side_min + min(int(u[1] * span), span - 1),
        theta=float(math.pi * u[2]),
        value=float(u[3]),
        center=(float(u[4] * cfg.width), float(u[5] * cfg.height)),
        material=min(int(u[6] * cfg.n_materials), cfg.n_materials - 1),
    )


def rasterize_leaf(leaf: Leaf, height: int, width: int):
    """Return ``(rows, cols)`` of pixels whose centers fall inside the leaf.

    ``center`` is ``(x, y)`` with x along columns; pixel ``(i, j)`` has its
    center at ``(j + 0.5, i + 0.5)``.
    """
    cx, cy = leaf.center
    ha, hb = 0.5 * leaf.a, 0.5 * leaf.b
    c, s = math.cos(leaf.theta), math.sin(leaf.theta)
    ex = abs(c) * ha + abs(s) * hb
    ey = abs(s) * ha + abs(c) * hb
    j0 = max(0, math.floor(cx - ex - 0.5))
    j1 = min(width, math.ceil(cx + ex + 0.5))
    i0 = max(0, math.floor(cy - ey - 0.5))
    i1 = min(height, math.ceil(cy + ey + 0.5))
    if j0 >= j1 or i0 >= i1:
        return np.empty(0, np.intp), np.empty(0, np.intp)
    dx = (np.arange(j0, j1) + 0.5 - cx)[None, :]
    dy = (np.arange(i0, i1) + 0.5 - cy)[:, None]
    u = dx * c + dy * s
    v = -dx * s + dy * c
    # small slack keeps grid-aligned edges stable under rotation round-off
    inside = (np.abs(u) <= ha + 1e-9) & (np.abs(v) <= hb + 1e-9)
    rows, cols = np.nonzero(inside)
    return rows + i0, cols + j0


def _paint(raw, covered, rng, leaf, rows, cols, eps, value):
    keep = ~covered[rows, cols]
    rows, cols = rows[keep], cols[keep]
    if rows.size == 0:
        return 0
    n = raw.shape[0]
    others = [m for m in range(n) if m != leaf.material]
    if others:
        raw[np.array(others)[:, None], rows[None, :], cols[None, :]] = rng.random((len(others), rows.size)) * eps
    raw[leaf.material, rows, cols] = value
    covered[rows, cols] = True
    return rows.size


def generate_base_field(rng, cfg: GenConfig, max_leaves: int = MAX_LEAVES, covered=None, raw=None):
    """Occlusion field: leaves are added underneath until full coverage.

    Returns ``(AbundanceMap, leaf_count)`` with an unnormalized map.
    """
    shape = (cfg.n_materials, cfg.height, cfg.width)
    raw = np.zeros(shape) if raw is None else raw
    covered = np.zeros(shape[1:], dtype=bool) if covered is None else covered
    remaining = covered.size - int(covered.sum())
    count = 0
    while remaining > 0:
        if count >= max_leaves:
            raise GenerationError(
                f"{remaining} pixels still uncovered after {max_leaves} leaves; "
                "degenerate configuration?"
            )
        leaf = sample_leaf(rng, cfg)
        count += 1
        rows, cols = rasterize_leaf(leaf, cfg.height, cfg.width)
        if rows.size:
            remaining -= _paint(raw, covered, rng, leaf, rows, cols, cfg.leakage_eps, leaf.value)
    return AbundanceMap(raw), count


def apply_local_variation(rng, cfg: GenConfig, raw: AbundanceMap) -> AbundanceMap:
    """Add ``variation_count`` faint leaves on top of ``raw`` (additive mode)."""
    out = raw.data.copy()
    for _ in range(cfg.variation_count):
        leaf = sample_leaf(rng, cfg)
        rows, cols = rasterize_leaf(leaf, cfg.height, cfg.width)
        out[leaf.material, rows, cols] += leaf.value * cfg.variation_value_max
    np.maximum(out, 0.0, out=out)
    return AbundanceMap(out)


def occluding_variation_layer(rng, cfg: GenConfig):
    """Faint leaves placed first, i.e. on top of the later occlusion field."""
    raw = np.zeros((cfg.n_materials, cfg.height, cfg.width))
    covered = np.zeros((cfg.height, cfg.width), dtype=bool)
    for _ in range(cfg.variation_count):
        leaf = sample_leaf(rng, cfg)
        rows, cols = rasterize_leaf(leaf, cfg.height, cfg.width)
        _paint(raw, covered, rng, leaf, rows, cols, cfg.leakage_eps,
               leaf.value * cfg.variation_value_max)
    return raw, covered


def asc_normalize(raw) -> AbundanceMap:
    """Divide every pixel by its sum over materials."""
    data = as_cube(raw)
    if data.min() < 0:
        raise NormalizationError("abundances must be non-negative before normalization")
    total = data.sum(axis=0)
    if not np.all(total > 0):
        i, j = np.argwhere(~(total > 0))[0]
        raise NormalizationError(f"pixel ({i}, {j}) has zero total abundance")
    return AbundanceMap(data / total, normalized=True)


def generate_abundance(rng, cfg: GenConfig, max_leaves: int = MAX_LEAVES) -> AbundanceMap:
    """Full three-stage generation of one normalized abundance map."""
    if cfg.variation_mode == "additive":
        raw, _ = generate_base_field(rng, cfg, max_leaves)
        raw = apply_local_variation(rng, cfg, raw)
    else:
        top, covered = occluding_variation_layer(rng, cfg)
        raw, _ = generate_base_field(rng, cfg, max_leaves, covered=covered, raw=top)
    return asc_normalize(raw)


def image_seed(base_seed: int, index: int) -> int:
    return (int(base_seed) ^ int(index)) & (2**64 - 1)


def generate_pair(cfg: GenConfig, psf: PsfConfig, index: int):
    """Generate the (HR, LR) abundance pair for image ``index``."""
    rng = np.random.default_rng(image_seed(cfg.seed, index))
    hr = generate_abundance(rng, cfg)
    lr = degrade_pair(hr, psf)
    for name, a in (("HR", hr), ("LR", lr)):
        report = validate_abundance(a, 1e-6)
        if not (report.anc_ok and report.asc_ok):
            raise GenerationError(f"image {index}: {name} map fails abundance check {report}")
    return hr, lr


# ---------------------------------------------------------------- manifest

class ManifestEntry(NamedTuple):
    index: int
    hr_path: str
    lr_path: str
    seed: int


@dataclass
class Manifest:
    gen: GenConfig
    psf: PsfConfig
    entries: list
    root: str = "."

    def hr_file(self, entry: ManifestEntry) -> str:
        return os.path.join(self.root, entry.hr_path)

    def lr_file(self, entry: ManifestEntry) -> str:
        return os.path.join(self.root, entry.lr_path)

    def dumps(self) -> str:
        lines = [f"gen.{k}={v}" for k, v in asdict(self.gen).items()]
        lines += [f"psf.{k}={v}" for k, v in asdict(self.psf).items()]
        lines.append(f"n_images={len(self.entries)}")
        lines += [f"{e.index}, {e.hr_path}, {e.lr_path}, {e.seed}" for e in self.entries]
        return "\n".join(lines) + "\n"


MANIFEST_NAME = "manifest.txt"


def load_manifest(path) -> Manifest:
    path = os.fspath(path)
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    gen, psf, entries = {}, {}, []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            if line[0].isdigit() and "," in line:
                parts = [p.strip() for p in line.split(",")]
                if len(parts) != 4:
                    raise ConfigError(f"{path}:{lineno}: malformed image line")
                entries.append(ManifestEntry(int(parts[0]), parts[1], parts[2], int(parts[3])))
            elif "=" in line:
                key, value = (s.strip() for s in line.split("=", 1))
                if key.startswith("gen."):
                    gen[key[4:]] = value
                elif key.startswith("psf."):
                    psf[key[4:]] = value
            else:
                raise ConfigError(f"{path}:{lineno}: cannot parse {line!r}")
    return Manifest(build(GenConfig, gen, "gen"), build(PsfConfig, psf, "psf"), entries,
                    root=os.path.dirname(os.path.abspath(path)))


def _write_one(args):
    cfg, psf, index, out_dir = args
    hr, lr = generate_pair(cfg, psf, index)
    names = (f"hr_{index:05d}.htf", f"lr_{index:05d}.htf")
    for name, a in zip(names, (hr, lr)):
        path = os.path.join(out_dir, name)
        try:
            payload = to_bytes(a)
            with open(path, "wb") as f:
                f.write(payload)
        except OSError as exc:
            raise GenerationError(f"cannot write {path}: {exc}") from exc
    return ManifestEntry(index, names[0], names[1], image_seed(cfg.seed, index))


def generate_dataset(cfg: GenConfig, n_images: int, psf: PsfConfig, out_dir, workers: int = 1) -> Manifest:
    """Write ``n_images`` HR/LR pairs plus ``manifest.txt`` into ``out_dir``.

    Image ``i`` is generated from seed ``cfg.seed ^ i`` so the content does
    not depend on ``n_images`` or on the worker count.
    """
    if n_images < 1:
        raise ConfigError("n_images must be >= 1")
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    jobs = [(cfg, psf, i, out_dir) for i in range(n_images)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_write_one, jobs))
    else:
        entries = [_write_one(job) for job in jobs]
    manifest = Manifest(cfg, psf, entries, root=out_dir)
    path = os.path.join(out_dir, MANIFEST_NAME)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(manifest.dumps())
    except OSError as exc:
        raise GenerationError(f"cannot write {path}: {exc}") from exc
    return manifest
