"""Full-reference image quality metrics: MSE, PSNR, global SSIM and UIQ.

SSIM and UIQ use whole-plane statistics (population moments), not a
sliding window.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .imagecore import Image, to_luminance

PEAK = 255.0
C1 = (0.01 * PEAK) ** 2
C2 = (0.03 * PEAK) ** 2
C3 = C2 / 2.0


def _as_array(img) -> np.ndarray:
    return img.data if isinstance(img, Image) else np.asarray(img, dtype=np.float64)


def _pair(x, h) -> tuple[np.ndarray, np.ndarray]:
    a, b = _as_array(x), _as_array(h)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def _plane_pair(x, h) -> tuple[np.ndarray, np.ndarray]:
    a, b = _pair(x, h)
    if isinstance(x, Image):
        if a.shape[0] != 1:
            raise ValueError("expected a single-channel image; convert with to_luminance")
        a, b = a[0], b[0]
    return a, b


def _moments(a: np.ndarray, b: np.ndarray):
    mu_a, mu_b = a.mean(), b.mean()
    da, db = a - mu_a, b - mu_b
    var_a = float(np.mean(da * da))
    var_b = float(np.mean(db * db))
    cov = float(np.mean(da * db))
    return float(mu_a), float(mu_b), var_a, var_b, cov


def mse(x, h) -> float:
    a, b = _pair(x, h)
    d = a - b
    return float(np.mean(d * d))


def psnr(x, h) -> float:
    err = mse(x, h)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK ** 2 / err)


def ssim(x, h) -> float:
    """Product of luminance, contrast and structure terms over the whole plane."""
    a, b = _plane_pair(x, h)
    mu_a, mu_b, var_a, var_b, cov = _moments(a, b)
    sig_ab = math.sqrt(var_a * var_b)
    lum = (2.0 * mu_a * mu_b + C1) / (mu_a * mu_a + mu_b * mu_b + C1)
    con = (2.0 * sig_ab + C2) / (var_a + var_b + C2)
    struct = (cov + C3) / (sig_ab + C3)
    return lum * con * struct


def uiq(x, h) -> float:
    """Universal image quality index 4*cov*mu_x*mu_h / ((var_x+var_h)(mu_x^2+mu_h^2)).

    Degenerate cases: two constant planes score 1 when their means agree and 0
    otherwise; two zero-mean planes drop the luminance factor.
    """
    a, b = _plane_pair(x, h)
    mu_a, mu_b, var_a, var_b, cov = _moments(a, b)
    var_sum = var_a + var_b
    mu_sq = mu_a * mu_a + mu_b * mu_b
    if var_sum == 0.0:
        return 1.0 if mu_a == mu_b else 0.0
    sig_ab = math.sqrt(var_a * var_b)
    if sig_ab == 0.0:
        return 0.0
    lum = 1.0 if mu_sq == 0.0 else 2.0 * mu_a * mu_b / mu_sq
    # factored as correlation * luminance * contrast so identical inputs give exactly 1
    return (cov / sig_ab) * lum * (2.0 * sig_ab / var_sum)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _fmt(v: float):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return v


@dataclass
class MetricRecord:
    name: str
    scale: int | None
    mse: float
    psnr: float
    ssim: float
    uiq: float

    def to_dict(self) -> dict:
        return {k: _fmt(v) for k, v in asdict(self).items()}


def evaluate_pair(x: Image, h: Image, on_luminance: bool = True, name: str = "",
                  scale: int | None = None) -> MetricRecord:
    """All metrics for one pair.

    Multichannel input without `on_luminance` averages SSIM and UIQ over
    channels; MSE/PSNR always use every sample.
    """
    if x.shape != h.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {h.shape}")
    if on_luminance:
        x, h = to_luminance(x), to_luminance(h)
    err = mse(x, h)
    score_ssim = float(np.mean([ssim(x.data[c], h.data[c]) for c in range(x.channels)]))
    score_uiq = float(np.mean([uiq(x.data[c], h.data[c]) for c in range(x.channels)]))
    return MetricRecord(name=name, scale=scale, mse=err, psnr=psnr(x, h),
                        ssim=score_ssim, uiq=score_uiq)


@dataclass
class MetricReport:
    records: list[MetricRecord] = field(default_factory=list)
    mode: str = "luminance"
    errors: list[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def add(self, record: MetricRecord) -> None:
        self.records.append(record)

    def aggregate(self) -> dict:
        """Mean metrics per scale (key 'all' when scale is unknown)."""
        groups: dict = {}
        for r in self.records:
            groups.setdefault("all" if r.scale is None else str(r.scale), []).append(r)
        out = {}
        for key, rs in groups.items():
            out[key] = {
                "count": len(rs),
                "mse": float(np.mean([r.mse for r in rs])),
                "psnr": float(np.mean([r.psnr for r in rs])),
                "ssim": float(np.mean([r.ssim for r in rs])),
                "uiq": float(np.mean([r.uiq for r in rs])),
            }
        return out

    def to_json(self) -> str:
        agg = {k: {m: _fmt(v) for m, v in d.items()} for k, d in self.aggregate().items()}
        payload = {
            "mode": self.mode,
            "images": [r.to_dict() for r in self.records],
            "aggregate": agg,
            "errors": self.errors,
        }
        payload.update(self.extra)
        return json.dumps(payload, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["name", "scale", "mse", "psnr_db", "ssim", "uiq"])
        for r in self.records:
            d = r.to_dict()
            writer.writerow([d["name"], "" if d["scale"] is None else d["scale"],
                             d["mse"], d["psnr"], d["ssim"], d["uiq"]])
        return buf.getvalue()
