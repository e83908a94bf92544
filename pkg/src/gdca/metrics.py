"""RMSE / PSNR on 8-bit quantized RGB and the directory evaluation report."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Image, list_ppm, load_ppm, quantize
from .errors import ShapeError

DEFAULT_CROP = 4


def _cropped(a: Image, b: Image, border_crop: int):
    if a.pixels.shape != b.pixels.shape:
        raise ShapeError(f"image dims differ: {a.height}x{a.width} vs {b.height}x{b.width}")
    c = int(border_crop)
    if c < 0 or a.height <= 2 * c or a.width <= 2 * c:
        raise ShapeError(f"border crop {c} too large for {a.height}x{a.width}")
    qa = quantize(a.pixels).astype(np.float64)
    qb = quantize(b.pixels).astype(np.float64)
    if c:
        qa, qb = qa[c:-c, c:-c], qb[c:-c, c:-c]
    return qa, qb


def rmse(a: Image, b: Image, border_crop: int = DEFAULT_CROP) -> float:
    """Root mean squared error in 0-255 units over all RGB values inside the crop."""
    qa, qb = _cropped(a, b, border_crop)
    return float(np.sqrt(np.mean((qa - qb) ** 2)))


def psnr_from_rmse(e: float) -> float:
    return math.inf if e == 0 else 20.0 * math.log10(255.0 / e)


def psnr(a: Image, b: Image, border_crop: int = DEFAULT_CROP) -> float:
    return psnr_from_rmse(rmse(a, b, border_crop))


def fmt(v: float) -> str:
    """Six significant digits; infinity prints as ``inf``."""
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.6g}"


@dataclass
class EvalRow:
    name: str
    rmse: float | None = None
    psnr: float | None = None
    error: str | None = None


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)

    @property
    def valid_rows(self):
        return [r for r in self.rows if r.error is None]

    @property
    def mean_rmse(self) -> float:
        v = self.valid_rows
        return float(np.mean([r.rmse for r in v])) if v else math.nan

    @property
    def mean_psnr(self) -> float:
        v = self.valid_rows
        if not v:
            return math.nan
        vals = [r.psnr for r in v]
        return math.inf if any(math.isinf(x) for x in vals) else float(np.mean(vals))

    def to_csv(self) -> str:
        lines = ["name,rmse,psnr"]
        for r in self.rows:
            if r.error is not None:
                lines.append(f"{r.name},error,error")
            else:
                lines.append(f"{r.name},{fmt(r.rmse)},{fmt(r.psnr)}")
        lines.append(f"mean,{fmt(self.mean_rmse)},{fmt(self.mean_psnr)}")
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        width = max([len("mean"), len("name")] + [len(r.name) for r in self.rows])
        out = [f"{'name':<{width}}  {'rmse':>10}  {'psnr':>10}"]
        for r in self.rows:
            if r.error is not None:
                out.append(f"{r.name:<{width}}  {'error':>10}  {'error':>10}  ({r.error})")
            else:
                out.append(f"{r.name:<{width}}  {fmt(r.rmse):>10}  {fmt(r.psnr):>10}")
        out.append(f"{'mean':<{width}}  {fmt(self.mean_rmse):>10}  {fmt(self.mean_psnr):>10}")
        out.append("PI: not computed")
        return "\n".join(out) + "\n"


def parse_csv(text: str) -> dict[str, tuple[str, str]]:
    rows = {}
    for line in text.splitlines()[1:]:
        name, a, b = line.rsplit(",", 2)
        rows[name] = (a, b)
    return rows


def evaluate_dirs(sr_dir, hr_dir, border_crop: int = DEFAULT_CROP) -> tuple[EvalReport, list[str]]:
    """Score matching filenames; returns the report and names present on only one side."""
    sr = {p.name: p for p in list_ppm(sr_dir)}
    hr = {p.name: p for p in list_ppm(hr_dir)}
    mismatched = sorted(set(sr) ^ set(hr))
    report = EvalReport()
    if mismatched:
        return report, mismatched
    for name in sorted(sr):
        a, b = load_ppm(sr[name]), load_ppm(hr[name])
        try:
            e = rmse(a, b, border_crop)
        except ShapeError as exc:
            report.rows.append(EvalRow(name, error=str(exc)))
            continue
        report.rows.append(EvalRow(name, e, psnr_from_rmse(e)))
    return report, []
