"""Evaluation metrics and the per-corpus report."""
from __future__ import annotations

import csv
import math
import subprocess
from dataclasses import dataclass, field

import numpy as np

from .losses import ssim_metric

PSNR_CAP = 99.0


def psnr(x, y):
    """PSNR in dB for unit-range images, capped at 99 dB."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def ssim(x, y):
    return float(ssim_metric(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)))


def edge_f1(pred, truth):
    """Pixelwise F1 of a predicted binary map; two empty maps score 1."""
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    denom = pred.sum() + truth.sum()
    if denom == 0:
        return 1.0
    return 2.0 * np.logical_and(pred, truth).sum() / denom


def external_score(command, original_path, reconstructed_path):
    """Run ``command original reconstructed`` and parse a float from its stdout."""
    out = subprocess.run(
        [*command.split(), str(original_path), str(reconstructed_path)],
        capture_output=True, text=True, check=True,
    )
    return float(out.stdout.strip().split()[-1])


@dataclass
class EvalRow:
    path: str
    bpp: float
    psnr: float
    ssim: float
    external: float = None


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    @property
    def columns(self):
        cols = ["path", "bpp", "psnr", "ssim"]
        if any(r.external is not None for r in self.rows):
            cols.append("external")
        return cols

    def means(self):
        out = {}
        for col in self.columns[1:]:
            vals = [getattr(r, col) for r in self.rows]
            out[col] = float(np.mean(vals)) if vals else float("nan")
        return out

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([r.path] + [repr(float(getattr(r, c))) for c in self.columns[1:]])

    def summary(self):
        m = self.means()
        parts = [f"{k}={v:.6f}" for k, v in m.items()]
        return f"images={len(self.rows)} " + " ".join(parts)
