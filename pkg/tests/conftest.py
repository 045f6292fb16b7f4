"""Shared fixtures and independent scalar oracles.

The oracles here are deliberately naive (plain Python loops over pixels) so
they share no code path with the vectorized implementations they check.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from depthbench.dataset import MetricDepthField

DEPTH_FLOOR = 1e-3


def scalar_metric_report(pred: MetricDepthField, gt: MetricDepthField) -> dict:
    """Double-loop reference for all four metrics over the joint valid mask."""
    n = 0
    se = 0.0
    g_sum = 0.0
    g_sq = 0.0
    abs_log10 = 0.0
    abs_rel = 0.0
    for y in range(gt.height):
        for x in range(gt.width):
            if not (gt.mask[y, x] and pred.mask[y, x]):
                continue
            d = max(float(pred.depth_m[y, x]), DEPTH_FLOOR)
            d_star = float(gt.depth_m[y, x])
            n += 1
            se += (d - d_star) ** 2
            g = math.log(d) - math.log(d_star)
            g_sum += g
            g_sq += g * g
            abs_log10 += abs(math.log10(d) - math.log10(d_star))
            abs_rel += abs(d - d_star) / d_star
    if n == 0:
        raise ValueError("oracle: no valid pixels")
    return {
        "rmse": math.sqrt(se / n),
        "si_rmse": math.sqrt(max(g_sq / n - (g_sum / n) ** 2, 0.0)),
        "log10": abs_log10 / n,
        "rel": abs_rel / n,
        "valid_pixels": n,
    }


def random_field_pair(rng: np.random.Generator, shape=(24, 32), invalid_p=0.1):
    """Random prediction/GT fields with independent random validity masks."""
    gt_depth = rng.uniform(0.2, 40.0, shape)
    pred_depth = rng.uniform(0.2, 40.0, shape)
    gt_mask = rng.random(shape) > invalid_p
    pred_mask = rng.random(shape) > invalid_p
    if not (gt_mask & pred_mask).any():
        gt_mask[0, 0] = pred_mask[0, 0] = True
    gt = MetricDepthField(depth_m=np.where(gt_mask, gt_depth, 0.0), mask=gt_mask)
    pred = MetricDepthField(depth_m=np.where(pred_mask, pred_depth, 0.0), mask=pred_mask)
    return pred, gt


# --- naive kernel references for the inference engine ----------------------


def naive_conv2d(x, weight, bias, stride=1):
    k = weight.shape[0]
    pad = k // 2
    h, w, cin = x.shape
    cout = weight.shape[3]
    out_h = (h + 2 * pad - k) // stride + 1
    out_w = (w + 2 * pad - k) // stride + 1
    out = np.zeros((out_h, out_w, cout))
    for oy in range(out_h):
        for ox in range(out_w):
            for oc in range(cout):
                acc = float(bias[oc])
                for ky in range(k):
                    for kx in range(k):
                        iy = oy * stride + ky - pad
                        ix = ox * stride + kx - pad
                        if 0 <= iy < h and 0 <= ix < w:
                            for ic in range(cin):
                                acc += float(x[iy, ix, ic]) * float(weight[ky, kx, ic, oc])
                out[oy, ox, oc] = acc
    return out


def naive_depthwise(x, weight, bias, stride=1):
    k = weight.shape[0]
    pad = k // 2
    h, w, c = x.shape
    out_h = (h + 2 * pad - k) // stride + 1
    out_w = (w + 2 * pad - k) // stride + 1
    out = np.zeros((out_h, out_w, c))
    for oy in range(out_h):
        for ox in range(out_w):
            for ch in range(c):
                acc = float(bias[ch])
                for ky in range(k):
                    for kx in range(k):
                        iy = oy * stride + ky - pad
                        ix = ox * stride + kx - pad
                        if 0 <= iy < h and 0 <= ix < w:
                            acc += float(x[iy, ix, ch]) * float(weight[ky, kx, ch])
                out[oy, ox, ch] = acc
    return out


def naive_pointwise(x, weight, bias):
    h, w, cin = x.shape
    cout = weight.shape[1]
    out = np.zeros((h, w, cout))
    for y in range(h):
        for xx in range(w):
            for oc in range(cout):
                acc = float(bias[oc])
                for ic in range(cin):
                    acc += float(x[y, xx, ic]) * float(weight[ic, oc])
                out[y, xx, oc] = acc
    return out


def naive_avg_pool(x):
    h2, w2 = x.shape[0] // 2, x.shape[1] // 2
    out = np.zeros((h2, w2, x.shape[2]))
    for y in range(h2):
        for xx in range(w2):
            for c in range(x.shape[2]):
                out[y, xx, c] = (
                    float(x[2 * y, 2 * xx, c])
                    + float(x[2 * y, 2 * xx + 1, c])
                    + float(x[2 * y + 1, 2 * xx, c])
                    + float(x[2 * y + 1, 2 * xx + 1, c])
                ) / 4.0
    return out


def naive_resize_nearest(x, size):
    th, tw = size
    h, w = x.shape[:2]
    out = np.zeros((th, tw, x.shape[2]))
    for y in range(th):
        for xx in range(tw):
            sy = min(int((y + 0.5) * h / th), h - 1)
            sx = min(int((xx + 0.5) * w / tw), w - 1)
            out[y, xx] = x[sy, sx]
    return out


def naive_resize_bilinear(x, size):
    th, tw = size
    h, w = x.shape[:2]
    out = np.zeros((th, tw, x.shape[2]))
    for y in range(th):
        for xx in range(tw):
            sy = min(max((y + 0.5) * h / th - 0.5, 0.0), h - 1.0)
            sx = min(max((xx + 0.5) * w / tw - 0.5, 0.0), w - 1.0)
            y0, x0 = int(math.floor(sy)), int(math.floor(sx))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            ty, tx = sy - y0, sx - x0
            for c in range(x.shape[2]):
                top = float(x[y0, x0, c]) * (1 - tx) + float(x[y0, x1, c]) * tx
                bottom = float(x[y1, x0, c]) * (1 - tx) + float(x[y1, x1, c]) * tx
                out[y, xx, c] = top * (1 - ty) + bottom * ty
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
