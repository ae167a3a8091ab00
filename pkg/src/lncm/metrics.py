"""Quality and rate-distortion metrics: MSE, PSNR, RD curves, BD-rate.

BD-rate follows the classical recipe: fit cubic polynomials to log(rate)
as a function of PSNR for both curves, integrate their difference exactly
(polynomial antiderivative) over the overlapping PSNR interval, and map
the average log-rate difference back through exp.  Natural logarithms are
used throughout, so the result is (exp(avg_diff) - 1) * 100 percent;
negative values mean the test curve needs less rate at equal quality.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError, FitError, OverlapError, ParseError
from .tensor_core import Plane

__all__ = [
    "RdCurve",
    "BdResult",
    "mse",
    "psnr",
    "bd_rate",
    "build_rd_curve",
    "residual_entropy_bits",
    "read_rd_csv",
    "write_rd_csv",
]


def mse(a: Plane | np.ndarray, b: Plane | np.ndarray) -> float:
    """Mean squared error over all samples."""
    a = a.samples if isinstance(a, Plane) else np.asarray(a, dtype=np.float64)
    b = b.samples if isinstance(b, Plane) else np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(a: Plane | np.ndarray, b: Plane | np.ndarray, bit_depth: int = 8) -> float:
    """10 log10(peak^2 / MSE) in dB; equal inputs give +inf."""
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    peak = (1 << bit_depth) - 1
    return 10.0 * math.log10(peak * peak / err)


@dataclass(frozen=True)
class RdCurve:
    """At least four (rate, psnr) points, strictly increasing in rate."""

    points: tuple

    def __post_init__(self):
        pts = tuple((float(r), float(p)) for r, p in self.points)
        if len(pts) < 4:
            raise DataError(f"an RD curve needs >= 4 points, got {len(pts)}")
        if any(r <= 0 for r, _ in pts):
            raise DataError("rates must be positive")
        if any(pts[i + 1][0] <= pts[i][0] for i in range(len(pts) - 1)):
            raise DataError("rates must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @property
    def rates(self) -> np.ndarray:
        return np.array([r for r, _ in self.points])

    @property
    def psnrs(self) -> np.ndarray:
        return np.array([p for _, p in self.points])


@dataclass(frozen=True)
class BdResult:
    bd_rate_percent: float
    overlap_interval: tuple


def _log_rate_poly(curve: RdCurve) -> np.ndarray:
    p = curve.psnrs
    if len(np.unique(p)) != len(p):
        raise FitError("duplicate PSNR values in curve")
    return np.polyfit(p, np.log(curve.rates), 3)


def bd_rate(anchor: RdCurve, test: RdCurve) -> BdResult:
    """Bjontegaard delta-rate of ``test`` against ``anchor`` in percent."""
    pa = _log_rate_poly(anchor)
    pt = _log_rate_poly(test)
    lo = max(anchor.psnrs.min(), test.psnrs.min())
    hi = min(anchor.psnrs.max(), test.psnrs.max())
    if not hi > lo:
        raise OverlapError(f"no PSNR overlap: [{lo}, {hi}]")
    ia = np.polyint(pa)
    it = np.polyint(pt)
    avg_diff = ((np.polyval(it, hi) - np.polyval(it, lo))
                - (np.polyval(ia, hi) - np.polyval(ia, lo))) / (hi - lo)
    return BdResult(bd_rate_percent=float((math.exp(avg_diff) - 1.0) * 100.0),
                    overlap_interval=(float(lo), float(hi)))


def build_rd_curve(run_reports) -> RdCurve:
    """Sorted, validated curve from (rate_proxy_bits, psnr) run reports."""
    pts = sorted((float(r), float(p)) for r, p in run_reports)
    if len(pts) < 4:
        raise DataError(f"need >= 4 runs for an RD curve, got {len(pts)}")
    return RdCurve(tuple(pts))


def residual_entropy_bits(residual: Plane | np.ndarray, qstep: float = 1.0) -> float:
    """Empirical entropy of the quantized residual, in total bits.

    A desk-scale stand-in for codec rate: quantize the residual to
    ``qstep``, histogram it, and sum -log2 of each sample's empirical
    probability.  Every report that uses this labels it a proxy.
    """
    r = residual.samples if isinstance(residual, Plane) else np.asarray(residual, float)
    if qstep <= 0:
        raise DataError("qstep must be > 0")
    q = np.rint(r / qstep).astype(np.int64).ravel()
    _, counts = np.unique(q, return_counts=True)
    p = counts / q.size
    return float(-np.sum(counts * np.log2(p)))


def read_rd_csv(path) -> RdCurve:
    """Read a ``rate,psnr`` CSV (header required) into an RdCurve."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header[:2]] != ["rate", "psnr"]:
            raise ParseError("expected header 'rate,psnr'", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise ParseError("expected 'rate,psnr' pair", line=lineno)
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError as exc:
                raise ParseError(f"bad number ({exc})", line=lineno) from exc
    if len(rows) < 4:
        raise DataError(f"RD CSV needs >= 4 points, got {len(rows)}")
    return RdCurve(tuple(rows))


def write_rd_csv(path, curve: RdCurve) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rate", "psnr"])
        for r, p in curve.points:
            writer.writerow([f"{r:.17g}", f"{p:.17g}"])
