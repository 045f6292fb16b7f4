"""Finite-difference verification suite for every loss kernel.

Backs the ``check-gradients`` CLI subcommand. Inputs are drawn so losses with
|.| subgradients are evaluated away from their kinks: residual magnitudes are
bounded below and spatial residual gaps across the whole pooling pyramid must
clear ``KINK_GAP`` (well above the finite-difference step).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses

DEFAULT_TRIALS = 20
DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4
KINK_GAP = 1e-4


def positive_pair(rng: np.random.Generator, shape: tuple[int, int]):
    return rng.uniform(0.5, 5.0, shape), rng.uniform(0.5, 5.0, shape)


def kink_safe_pair(rng: np.random.Generator, shape: tuple[int, int], levels: int = 4):
    """Prediction/target pair whose residual keeps every |.| term away from 0.

    Residual magnitudes sit in [0.01, 0.03] with random signs; candidates are
    resampled until all forward differences at every pyramid level exceed
    KINK_GAP, so a central difference step can never cross a sign change.
    """
    while True:
        d_star = rng.uniform(1.0, 2.0, shape)
        residual = rng.choice([-1.0, 1.0], shape) * rng.uniform(0.01, 0.03, shape)
        pyramid = losses.residual_pyramid(d_star + residual, d_star, levels)
        gaps = [np.abs(np.diff(level, axis=axis)).min() for level in pyramid for axis in (0, 1)]
        if min(gaps) > KINK_GAP:
            return d_star + residual, d_star


def feature_pair(rng: np.random.Generator, spatial=(4, 4), student_channels=3, teacher_channels=5):
    student = rng.normal(size=(*spatial, student_channels))
    teacher = rng.normal(size=(*spatial, teacher_channels))
    return student, teacher


@dataclass(frozen=True)
class GradientCheckResult:
    name: str
    trials: int
    worst_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.worst_error < self.tolerance


def _check_depth_loss(loss_fn, make_pair, rng, trials, step):
    worst = 0.0
    for _ in range(trials):
        d, d_star = make_pair(rng)
        err = losses.finite_difference_check(lambda x: loss_fn(x, d_star), d, step)
        worst = max(worst, err)
    return worst


def run_suite(
    trials: int = DEFAULT_TRIALS,
    seed: int = 2021,
    step: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
    depth_shape: tuple[int, int] = (8, 8),
) -> list[GradientCheckResult]:
    """Run the finite-difference check for all eight losses.

    Every analytic gradient is compared against central differences on
    ``trials`` random non-degenerate inputs; the worst relative error per loss
    is reported against ``tolerance``.
    """
    rng = np.random.default_rng(seed)
    results = []

    smooth = {
        "scale_invariant_loss": losses.scale_invariant_loss,
        "rmse_loss": losses.rmse_loss,
        "mse_distill_loss": losses.mse_distill_loss,
        "ssim_loss": losses.ssim_loss,
    }
    for name, fn in smooth.items():
        worst = _check_depth_loss(fn, lambda r: positive_pair(r, depth_shape), rng, trials, step)
        results.append(GradientCheckResult(name, trials, worst, tolerance))

    kinked = {
        "gradient_matching_loss": losses.gradient_matching_loss,
        "l1_point_loss": losses.l1_point_loss,
        "l1_gradient_loss": losses.l1_gradient_loss,
    }
    for name, fn in kinked.items():
        worst = _check_depth_loss(fn, lambda r: kink_safe_pair(r, depth_shape), rng, trials, step)
        results.append(GradientCheckResult(name, trials, worst, tolerance))

    worst = 0.0
    for _ in range(trials):
        student, teacher = feature_pair(rng)
        err = losses.finite_difference_check(
            lambda f: losses.pairwise_distillation_loss(f, teacher), student, step
        )
        worst = max(worst, err)
    results.append(GradientCheckResult("pairwise_distillation_loss", trials, worst, tolerance))
    return results


def format_table(results: list[GradientCheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'loss':<{width}}  trials  worst rel err  tolerance  status"]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(
            f"{r.name:<{width}}  {r.trials:6d}  {r.worst_error:13.3e}  {r.tolerance:9.0e}  {status}"
        )
    return "\n".join(lines)
