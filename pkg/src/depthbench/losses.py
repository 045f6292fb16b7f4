"""Training losses with hand-derived gradients, plus a finite-difference verifier.

Conventions shared by every loss here:
  * inputs are numpy arrays, depth maps (h, w), feature maps (h, w, c);
  * each loss returns a LossEvaluation pairing the scalar value with the
    gradient w.r.t. the prediction (or student feature map);
  * spatial gradients use forward differences;
  * the subgradient of |x| is sign(x), taken as 0 at x == 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

ZERO_NORM_EPS = 1e-12  # below this, a feature vector counts as zero for cosine affinity
SSIM_WINDOW = 7

# Weights of the combined distillation objective: 10 * scale-invariant
# + 0.1 * multi-scale gradient matching + 1000 * pairwise affinity MSE.
SCALE_INVARIANT_WEIGHT = 10.0
GRADIENT_MATCHING_WEIGHT = 0.1
PAIRWISE_WEIGHT = 1000.0


class ShapeMismatchError(ValueError):
    """Inputs must share a shape."""


class SpatialMismatchError(ValueError):
    """Feature maps must share spatial dimensions (channels may differ)."""


class NonPositiveInputError(ValueError):
    """Log-space losses need strictly positive inputs; the caller clamps."""


class TooSmallError(ValueError):
    """Input too small for the requested spatial operation."""


@dataclass(frozen=True)
class LossEvaluation:
    """Scalar loss value and its gradient, shaped like the differentiated input."""

    value: float
    gradient: np.ndarray


@dataclass(frozen=True)
class CombinedLossEvaluation:
    """Weighted distillation objective with gradients for both inputs.

    ``depth_gradient`` differentiates w.r.t. the predicted depth map,
    ``feature_gradient`` w.r.t. the student feature map. The unweighted
    component values are kept for decomposition checks.
    """

    value: float
    depth_gradient: np.ndarray
    feature_gradient: np.ndarray
    scale_invariant: float
    gradient_matching: float
    pairwise_distillation: float


def _as_float_pair(d, d_star, exc=ShapeMismatchError):
    d = np.asarray(d, dtype=np.float64)
    d_star = np.asarray(d_star, dtype=np.float64)
    if d.shape != d_star.shape:
        raise exc(f"shape {d.shape} vs {d_star.shape}")
    return d, d_star


def scale_invariant_loss(d, d_star) -> LossEvaluation:
    """Variance of the log residual g_i = ln d_i - ln d*_i.

    value = mean(g^2) - mean(g)^2 over all n pixels; the gradient w.r.t. d is
    (2/n) g_i / d_i - (2/n^2) sum(g) / d_i. Invariant under positive rescaling
    of d (constant shift of g).
    """
    d, d_star = _as_float_pair(d, d_star)
    if np.any(d <= 0) or np.any(d_star <= 0):
        raise NonPositiveInputError("depths must be strictly positive")
    n = d.size
    g = np.log(d) - np.log(d_star)
    g_sum = g.sum()
    # variance form; rounding can dip infinitesimally below zero for constant g
    value = max(float(np.mean(g**2) - (g_sum / n) ** 2), 0.0)
    gradient = (2.0 / n) * g / d - (2.0 / n**2) * g_sum / d
    return LossEvaluation(value=value, gradient=gradient)


def _avg_pool_2x2(x: np.ndarray) -> np.ndarray:
    """2x2 average pooling; odd trailing rows/columns are dropped."""
    h2, w2 = x.shape[0] // 2, x.shape[1] // 2
    t = x[: 2 * h2, : 2 * w2]
    return 0.25 * (t[0::2, 0::2] + t[0::2, 1::2] + t[1::2, 0::2] + t[1::2, 1::2])


def _unpool_2x2(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Adjoint of 2x2 average pooling; dropped cells receive zero gradient."""
    out = np.zeros(shape, dtype=np.float64)
    h2, w2 = grad.shape
    out[: 2 * h2, : 2 * w2] = np.repeat(np.repeat(grad, 2, axis=0), 2, axis=1) * 0.25
    return out


def residual_pyramid(d, d_star, levels: int = 4) -> list[np.ndarray]:
    """Residual d - d* at up to ``levels`` scales, halved by 2x2 average pooling.

    The level count is truncated so every level keeps at least 2 pixels per
    axis (level k exists when min(h, w) >= 2^k).
    """
    d, d_star = _as_float_pair(d, d_star)
    h, w = d.shape
    if h < 2 or w < 2:
        raise TooSmallError(f"need at least 2x2 pixels, got {h}x{w}")
    effective = min(levels, int(np.floor(np.log2(min(h, w)))))
    pyramid = [d - d_star]
    for _ in range(effective - 1):
        pyramid.append(_avg_pool_2x2(pyramid[-1]))
    return pyramid


def gradient_matching_loss(d, d_star, levels: int = 4) -> LossEvaluation:
    """Multi-scale L1 penalty on spatial gradients of the residual R = d - d*.

    Per level k the forward differences of R^k are summed as
    sum(|dx R^k|) + sum(|dy R^k|) and normalized by that level's pixel count;
    levels are summed. The gradient back-propagates the sign subgradient
    through the average-pooling chain.
    """
    pyramid = residual_pyramid(d, d_star, levels)
    value = 0.0
    level_grads = []
    for r in pyramid:
        m = r.size
        dx = np.diff(r, axis=1)
        dy = np.diff(r, axis=0)
        value += (np.abs(dx).sum() + np.abs(dy).sum()) / m
        g = np.zeros_like(r)
        sx = np.sign(dx)
        sy = np.sign(dy)
        g[:, 1:] += sx
        g[:, :-1] -= sx
        g[1:, :] += sy
        g[:-1, :] -= sy
        level_grads.append(g / m)
    gradient = level_grads[-1]
    for level_index in range(len(pyramid) - 2, -1, -1):
        gradient = _unpool_2x2(gradient, pyramid[level_index].shape)
        gradient += level_grads[level_index]
    return LossEvaluation(value=float(value), gradient=gradient)


def _normalized_rows(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flatten (h, w, c) to (n, c) unit rows; zero-norm rows stay zero."""
    flat = features.reshape(-1, features.shape[-1]).astype(np.float64)
    norms = np.linalg.norm(flat, axis=1)
    safe = np.where(norms < ZERO_NORM_EPS, 1.0, norms)
    unit = flat / safe[:, None]
    unit[norms < ZERO_NORM_EPS] = 0.0
    return unit, norms


def affinity_map(features) -> np.ndarray:
    """Pairwise cosine similarity between per-position feature vectors.

    f_i is the c-vector at flattened spatial index i of an (h, w, c) map; the
    result is (h*w, h*w), symmetric, with unit diagonal except that positions
    whose norm falls below ZERO_NORM_EPS get an all-zero row and column.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3:
        raise ShapeMismatchError(f"expected (h, w, c) feature map, got shape {features.shape}")
    unit, norms = _normalized_rows(features)
    aff = np.clip(unit @ unit.T, -1.0, 1.0)
    nonzero = norms >= ZERO_NORM_EPS
    aff[np.diag_indices_from(aff)] = np.where(nonzero, 1.0, 0.0)
    return aff


def pairwise_distillation_loss(student_features, teacher_features) -> LossEvaluation:
    """MSE between student and teacher affinity maps, normalized by w*h.

    value = (1/(w*h)) * sum_ij (a^s_ij - a^t_ij)^2. The normalization is by the
    pixel count even though the double sum has (w*h)^2 terms. The gradient is
    taken w.r.t. the student features through the cosine-similarity chain rule;
    channel counts of the two maps may differ.
    """
    student_features = np.asarray(student_features, dtype=np.float64)
    teacher_features = np.asarray(teacher_features, dtype=np.float64)
    if student_features.ndim != 3 or teacher_features.ndim != 3:
        raise ShapeMismatchError("feature maps must be (h, w, c)")
    if student_features.shape[:2] != teacher_features.shape[:2]:
        raise SpatialMismatchError(
            f"spatial dims {student_features.shape[:2]} vs {teacher_features.shape[:2]}"
        )
    n = student_features.shape[0] * student_features.shape[1]
    aff_s = affinity_map(student_features)
    aff_t = affinity_map(teacher_features)
    diff = aff_s - aff_t
    value = float((diff**2).sum() / n)

    # d(value)/d(a_s) folded with d(a_s)/d(f_p); for unit rows u_p = f_p/r_p:
    # grad_p = (2/r_p) [ (G u)_p - (sum_j G_pj a_pj) u_p ],  G = (2/n) diff.
    unit, norms = _normalized_rows(student_features)
    coeff = (2.0 / n) * diff
    projected = coeff @ unit
    row_weight = (coeff * aff_s).sum(axis=1, keepdims=True)
    grad_flat = 2.0 * (projected - row_weight * unit)
    nonzero = norms >= ZERO_NORM_EPS
    grad_flat[nonzero] /= norms[nonzero, None]
    grad_flat[~nonzero] = 0.0
    return LossEvaluation(value=value, gradient=grad_flat.reshape(student_features.shape))


def combined_smart_loss(d, d_star, student_features, teacher_features) -> CombinedLossEvaluation:
    """Weighted sum 10 * scale-invariant + 0.1 * gradient matching + 1000 * pairwise."""
    si = scale_invariant_loss(d, d_star)
    gm = gradient_matching_loss(d, d_star)
    pa = pairwise_distillation_loss(student_features, teacher_features)
    value = (
        SCALE_INVARIANT_WEIGHT * si.value
        + GRADIENT_MATCHING_WEIGHT * gm.value
        + PAIRWISE_WEIGHT * pa.value
    )
    return CombinedLossEvaluation(
        value=value,
        depth_gradient=SCALE_INVARIANT_WEIGHT * si.gradient + GRADIENT_MATCHING_WEIGHT * gm.gradient,
        feature_gradient=PAIRWISE_WEIGHT * pa.gradient,
        scale_invariant=si.value,
        gradient_matching=gm.value,
        pairwise_distillation=pa.value,
    )


def rmse_loss(d, d_star) -> LossEvaluation:
    """sqrt(mean((d - d*)^2)); gradient (d - d*) / (n * value), zero at value == 0."""
    d, d_star = _as_float_pair(d, d_star)
    n = d.size
    diff = d - d_star
    value = float(np.sqrt(np.mean(diff**2)))
    if value == 0.0:
        gradient = np.zeros_like(diff)
    else:
        gradient = diff / (n * value)
    return LossEvaluation(value=value, gradient=gradient)


def mse_distill_loss(student_out, teacher_out) -> LossEvaluation:
    """mean((s - t)^2); gradient 2 (s - t) / n."""
    s, t = _as_float_pair(student_out, teacher_out)
    diff = s - t
    return LossEvaluation(value=float(np.mean(diff**2)), gradient=2.0 * diff / s.size)


def l1_point_loss(d, d_star) -> LossEvaluation:
    """mean(|d - d*|); gradient sign(d - d*) / n."""
    d, d_star = _as_float_pair(d, d_star)
    diff = d - d_star
    return LossEvaluation(
        value=float(np.mean(np.abs(diff))), gradient=np.sign(diff) / d.size
    )


def l1_gradient_loss(d, d_star) -> LossEvaluation:
    """Forward-difference gradient L1: (sum|dx R| + sum|dy R|) / n with R = d - d*."""
    d, d_star = _as_float_pair(d, d_star)
    n = d.size
    r = d - d_star
    dx = np.diff(r, axis=1)
    dy = np.diff(r, axis=0)
    value = float((np.abs(dx).sum() + np.abs(dy).sum()) / n)
    gradient = np.zeros_like(r)
    sx = np.sign(dx)
    sy = np.sign(dy)
    gradient[:, 1:] += sx
    gradient[:, :-1] -= sx
    gradient[1:, :] += sy
    gradient[:-1, :] -= sy
    return LossEvaluation(value=value, gradient=gradient / n)


def ssim_loss(d, d_star) -> LossEvaluation:
    """(1 - mean local SSIM) / 2 over a 7x7 uniform window.

    Stabilizers are c1 = (0.01 L)^2 and c2 = (0.03 L)^2 with L the maximum of
    the reference image (falling back to 1 when the reference is non-positive,
    which keeps identical images at loss 0). Windows slide over valid positions
    only. Fully differentiable; the gradient is exact.
    """
    x, y = _as_float_pair(d, d_star)
    h, w = x.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise TooSmallError(f"need at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}")
    data_range = float(y.max())
    if data_range <= 0:
        data_range = 1.0
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    wx = sliding_window_view(x, (SSIM_WINDOW, SSIM_WINDOW))
    wy = sliding_window_view(y, (SSIM_WINDOW, SSIM_WINDOW))
    mu_x = wx.mean(axis=(2, 3))
    mu_y = wy.mean(axis=(2, 3))
    sxx = (wx * wx).mean(axis=(2, 3)) - mu_x**2
    syy = (wy * wy).mean(axis=(2, 3)) - mu_y**2
    sxy = (wx * wy).mean(axis=(2, 3)) - mu_x * mu_y

    a1 = 2.0 * mu_x * mu_y + c1
    a2 = 2.0 * sxy + c2
    b1 = mu_x**2 + mu_y**2 + c1
    b2 = sxx + syy + c2
    denom = b1 * b2
    ssim = a1 * a2 / denom
    n_windows = ssim.size
    value = float((1.0 - ssim.mean()) / 2.0)

    # dS/dx_k = (2/49) (c0 + cx x_k + cy y_k) per window; the pixel gradient
    # box-sums the window coefficients over every window containing the pixel.
    cy = a1 / denom
    cx = -ssim / b2
    c0 = mu_y * (a2 - a1) / denom + ssim * mu_x * (1.0 / b2 - 1.0 / b1)
    sum_c0 = np.zeros_like(x)
    sum_cx = np.zeros_like(x)
    sum_cy = np.zeros_like(x)
    ph, pw = ssim.shape
    for oy in range(SSIM_WINDOW):
        for ox in range(SSIM_WINDOW):
            sum_c0[oy : oy + ph, ox : ox + pw] += c0
            sum_cx[oy : oy + ph, ox : ox + pw] += cx
            sum_cy[oy : oy + ph, ox : ox + pw] += cy
    window_weight = 1.0 / (SSIM_WINDOW * SSIM_WINDOW)
    gradient = -(window_weight / n_windows) * (sum_c0 + x * sum_cx + y * sum_cy)
    return LossEvaluation(value=value, gradient=gradient)


def finite_difference_check(loss, x, step: float = 1e-5) -> float:
    """Max relative error between the analytic gradient of ``loss`` and central differences.

    ``loss`` maps an array to a LossEvaluation. Per coordinate the numeric
    gradient is (f(x+h) - f(x-h)) / 2h and the error is
    |analytic - numeric| / max(|numeric|, 1e-8); the max over coordinates is
    returned.
    """
    x = np.asarray(x, dtype=np.float64)
    analytic = np.asarray(loss(x).gradient, dtype=np.float64)
    numeric = np.zeros_like(x)
    for i in range(x.size):
        bumped = x.copy()
        bumped.flat[i] += step
        f_plus = loss(bumped).value
        bumped.flat[i] = x.flat[i] - step
        f_minus = loss(bumped).value
        numeric.flat[i] = (f_plus - f_minus) / (2.0 * step)
    denom = np.maximum(np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
