"""The four challenge fidelity metrics: RMSE, si-RMSE, LOG10 and REL.

All metrics are computed over the joint valid mask (ground-truth valid AND
prediction valid) and accumulate in double precision. Predictions are floored
at ``DEPTH_FLOOR`` meters before use so logs and divisions stay finite; si-RMSE
uses the natural log, the LOG10 metric base-10.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import MetricDepthField

DEPTH_FLOOR = 1e-3  # meters; floor applied to predictions


class NoValidPixelsError(ValueError):
    """Joint valid mask is empty."""


class DimensionMismatchError(ValueError):
    """Prediction and ground truth have different dimensions."""


class EmptyListError(ValueError):
    """Nothing to aggregate."""


@dataclass(frozen=True)
class MetricReport:
    """Per-image or aggregated metric values plus the pixel count they cover."""

    rmse: float
    si_rmse: float
    log10: float
    rel: float
    valid_pixels: int

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        return cls(**json.loads(text))


def _joint_values(pred: MetricDepthField, gt: MetricDepthField) -> tuple[np.ndarray, np.ndarray]:
    """Masked prediction (floored) and ground truth as flat float64 arrays."""
    if pred.depth_m.shape != gt.depth_m.shape:
        raise DimensionMismatchError(
            f"prediction {pred.width}x{pred.height} vs ground truth {gt.width}x{gt.height}"
        )
    joint = gt.mask & pred.mask
    if not joint.any():
        raise NoValidPixelsError("no pixel is valid in both prediction and ground truth")
    d = np.maximum(pred.depth_m[joint].astype(np.float64), DEPTH_FLOOR)
    d_star = gt.depth_m[joint].astype(np.float64)
    return d, d_star


def rmse(pred: MetricDepthField, gt: MetricDepthField) -> float:
    """Root mean squared error in meters over the joint valid mask."""
    d, d_star = _joint_values(pred, gt)
    return float(np.sqrt(np.mean((d - d_star) ** 2)))


def si_rmse(pred: MetricDepthField, gt: MetricDepthField) -> float:
    """Scale-invariant RMSE: standard deviation of log-depth residuals.

    With g_i = ln d_i - ln d*_i over the n valid pixels, returns
    sqrt( mean(g^2) - mean(g)^2 ). Rescaling the prediction by any positive
    factor shifts every g_i by a constant and leaves the value unchanged.
    """
    d, d_star = _joint_values(pred, gt)
    g = np.log(d) - np.log(d_star)
    # centered form of mean(g^2) - mean(g)^2: immune to the catastrophic
    # cancellation that would otherwise break scale invariance near zero
    centered = g - np.mean(g)
    return float(np.sqrt(np.mean(centered**2)))


def log10_error(pred: MetricDepthField, gt: MetricDepthField) -> float:
    """Mean absolute difference of base-10 log depths."""
    d, d_star = _joint_values(pred, gt)
    return float(np.mean(np.abs(np.log10(d) - np.log10(d_star))))


def rel_error(pred: MetricDepthField, gt: MetricDepthField) -> float:
    """Mean absolute relative error |d - d*| / d*."""
    d, d_star = _joint_values(pred, gt)
    return float(np.mean(np.abs(d - d_star) / d_star))


def evaluate_image(pred: MetricDepthField, gt: MetricDepthField) -> MetricReport:
    """All four metrics from the same joint mask."""
    d, d_star = _joint_values(pred, gt)
    diff = d - d_star
    g = np.log(d) - np.log(d_star)
    centered = g - np.mean(g)
    return MetricReport(
        rmse=float(np.sqrt(np.mean(diff**2))),
        si_rmse=float(np.sqrt(np.mean(centered**2))),
        log10=float(np.mean(np.abs(np.log10(d) - np.log10(d_star)))),
        rel=float(np.mean(np.abs(diff) / d_star)),
        valid_pixels=int(d.size),
    )


def aggregate(reports: list[MetricReport]) -> MetricReport:
    """Unweighted per-image mean of each metric; valid pixel counts are summed."""
    if not reports:
        raise EmptyListError("cannot aggregate an empty list of reports")
    n = len(reports)
    return MetricReport(
        rmse=sum(r.rmse for r in reports) / n,
        si_rmse=sum(r.si_rmse for r in reports) / n,
        log10=sum(r.log10 for r in reports) / n,
        rel=sum(r.rel for r in reports) / n,
        valid_pixels=sum(r.valid_pixels for r in reports),
    )
