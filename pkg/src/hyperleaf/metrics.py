"""Image quality metrics: mean PSNR, SAM and ERGAS."""
import csv
import math
import os
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import DimensionError, MetricError
from .tensor import as_cube

PSNR_CAP = 300.0


def _same_shape(ref, est):
    if ref.shape != est.shape:
        raise DimensionError(f"shape mismatch {ref.shape} vs {est.shape}")


def psnr_band(ref, est, peak: float = 1.0) -> float:
    ref = np.asarray(ref, dtype=np.float64)
    est = np.asarray(est, dtype=np.float64)
    _same_shape(ref, est)
    if not peak > 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((ref - est) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / mse))


def band_psnrs(ref, est, peak="fixed:1.0") -> List[float]:
    """Per-band PSNR. ``peak`` is a number, ``"fixed:<v>"`` or ``"per-band-max"``."""
    ref, est = as_cube(ref), as_cube(est)
    _same_shape(ref, est)
    out = []
    for l in range(ref.shape[0]):
        if peak == "per-band-max":
            p = float(np.max(ref[l]))
        elif isinstance(peak, str):
            p = float(peak.split(":", 1)[1])
        else:
            p = float(peak)
        out.append(psnr_band(ref[l], est[l], p))
    return out


def mpsnr(ref, est, peak="fixed:1.0") -> float:
    return float(np.mean(band_psnrs(ref, est, peak)))


def sam_mean(ref, est) -> float:
    """Mean spectral angle over pixels, in degrees."""
    ref, est = as_cube(ref), as_cube(est)
    _same_shape(ref, est)
    nr = np.sqrt(np.sum(ref * ref, axis=0))
    ne = np.sqrt(np.sum(est * est, axis=0))
    for name, norm in (("reference", nr), ("estimate", ne)):
        if np.any(norm == 0):
            i, j = np.argwhere(norm == 0)[0]
            raise MetricError(f"zero spectrum in {name} at pixel ({i}, {j})")
    # half-angle form stays accurate near 0 where arccos loses digits
    u, v = ref / nr, est / ne
    du = np.sqrt(np.sum((u - v) ** 2, axis=0))
    su = np.sqrt(np.sum((u + v) ** 2, axis=0))
    return float(np.degrees(np.mean(2.0 * np.arctan2(du, su))))


def ergas(ref, est, ratio: float = 0.25) -> float:
    """``100 * ratio * sqrt(mean_l (RMSE_l / mean_l)^2)``; ratio = 1/factor."""
    ref, est = as_cube(ref), as_cube(est)
    _same_shape(ref, est)
    if not ratio > 0:
        raise ValueError("ratio must be positive")
    mu = ref.mean(axis=(1, 2))
    if np.any(mu == 0):
        raise MetricError(f"band {int(np.argmax(mu == 0))} of the reference has zero mean")
    rmse = np.sqrt(np.mean((ref - est) ** 2, axis=(1, 2)))
    return float(100.0 * ratio * np.sqrt(np.mean((rmse / mu) ** 2)))


@dataclass
class MetricsReport:
    mpsnr: float
    msam: float
    mergas: float
    per_band_psnr: List[float] = field(default_factory=list)
    ratio: float = 0.25

    def rows(self):
        yield "mpsnr", self.mpsnr
        yield "msam", self.msam
        yield "mergas", self.mergas
        for l, v in enumerate(self.per_band_psnr):
            yield f"psnr_band_{l}", v

    def write_csv(self, path) -> None:
        with open(os.fspath(path), "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["metric", "value"])
            for name, value in self.rows():
                writer.writerow([name, repr(float(value))])

    @classmethod
    def read_csv(cls, path, ratio: float = 0.25) -> "MetricsReport":
        values = {}
        with open(os.fspath(path), newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader)
            if header != ["metric", "value"]:
                raise MetricError(f"unexpected report header {header}")
            for name, value in reader:
                values[name] = float(value)
        bands = sorted((k for k in values if k.startswith("psnr_band_")),
                       key=lambda k: int(k.rsplit("_", 1)[1]))
        return cls(values["mpsnr"], values["msam"], values["mergas"],
                   [values[k] for k in bands], ratio)


def evaluate(ref, est, ratio: float = 0.25, peak="fixed:1.0", csv_path=None) -> MetricsReport:
    per_band = band_psnrs(ref, est, peak)
    report = MetricsReport(
        mpsnr=float(np.mean(per_band)),
        msam=sam_mean(ref, est),
        mergas=ergas(ref, est, ratio),
        per_band_psnr=per_band,
        ratio=ratio,
    )
    if csv_path is not None:
        report.write_csv(csv_path)
    return report
