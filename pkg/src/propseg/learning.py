"""Gradients through the propagation recurrence and affinity fitting.

The class-balanced cross entropy weighs the foreground and background terms
by the complementary class fractions, so a small object still contributes a
strong signal. Its gradient, routed through the max integration and the
directional recurrences in reverse, yields exact derivatives for both the
input map and every per-pixel weight; a central finite-difference harness
verifies them coordinate by coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .propagation import (
    AffinityField,
    Direction,
    PropagationResult,
    _direction_backward,
    _require_stable,
    _score_values,
    forward,
    project_stable,
)
from .raster import BinaryMask, ScoreMap

DEFAULT_EPS = 1e-7
GRADCHECK_STEP = 1e-4
GRADCHECK_DENOM_FLOOR = 1e-6
GRADCHECK_MAX_SIDE = 16


class DivergenceError(RuntimeError):
    """Raised when an optimization run produces a non-finite loss."""


@dataclass(frozen=True, eq=False)
class GradientBundle:
    """Gradients w.r.t. the input map and the affinity weights."""

    d_input: np.ndarray    # (H, W)
    d_weights: np.ndarray  # (H, W, 4, 3)

    def __post_init__(self):
        if not (np.isfinite(self.d_input).all() and np.isfinite(self.d_weights).all()):
            raise ValueError("gradient bundle contains non-finite entries")


@dataclass(frozen=True)
class FitConfig:
    learning_rate: float = 0.1
    iterations: int = 200
    loss_clamp_epsilon: float = DEFAULT_EPS

    def __post_init__(self):
        if not (self.learning_rate > 0):
            raise ValueError("learning_rate must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if not (0 < self.loss_clamp_epsilon < 0.5):
            raise ValueError("loss_clamp_epsilon must lie in (0, 0.5)")


@dataclass(frozen=True)
class GradcheckReport:
    """Worst-case disagreement between analytic and finite-difference gradients."""

    max_rel_error: float
    worst_coordinate: str
    coordinates_checked: int
    step: float


def _class_fraction(target: BinaryMask) -> float:
    fg = target.area
    total = target.values.size
    if fg == 0 or fg == total:
        raise ValueError("target must contain both foreground and background pixels")
    return fg / total


def weighted_loss(pred, target: BinaryMask, eps: float = DEFAULT_EPS) -> float:
    """Class-balanced cross entropy of a prediction against a binary target.

    Predictions are clamped into [eps, 1-eps] before the logs, which also
    makes the loss well defined for unclamped propagation outputs that
    overshoot [0, 1].
    """
    if not (0 < eps < 0.5):
        raise ValueError("eps must lie in (0, 0.5)")
    v = _score_values(pred)
    if v.shape != target.shape:
        raise ValueError(f"weighted_loss: dimension mismatch {v.shape} vs {target.shape}")
    w = _class_fraction(target)
    fg = target.values
    fg_term = np.log(np.clip(v[fg], eps, 1.0 - eps)).sum()
    bg_term = np.log(np.clip(1.0 - v[~fg], eps, 1.0 - eps)).sum()
    return float(-(1.0 - w) * fg_term - w * bg_term)


def loss_gradient(pred, target: BinaryMask, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Per-pixel derivative of ``weighted_loss`` w.r.t. the prediction.

    Pixels sitting in a clamp zone contribute zero gradient.
    """
    if not (0 < eps < 0.5):
        raise ValueError("eps must lie in (0, 0.5)")
    v = _score_values(pred)
    if v.shape != target.shape:
        raise ValueError(f"loss_gradient: dimension mismatch {v.shape} vs {target.shape}")
    w = _class_fraction(target)
    fg = target.values
    inside = (v > eps) & (v < 1.0 - eps)
    g = np.zeros_like(v)
    on = inside & fg
    g[on] = -(1.0 - w) / v[on]
    off = inside & ~fg
    g[off] = w / (1.0 - v[off])
    return g


def backward(
    x, field: AffinityField, upstream, *, artifacts: PropagationResult | None = None
) -> GradientBundle:
    """Exact reverse-mode gradients of the unclamped propagation output.

    The upstream error is routed to each pixel's winning direction only;
    within a direction the recursion walks scanlines in reverse. Passing the
    matching ``forward`` result as ``artifacts`` skips the recomputation.
    """
    xv = _score_values(x)
    if xv.shape != field.shape:
        raise ValueError(f"backward: dimension mismatch {xv.shape} vs {field.shape}")
    up = np.asarray(upstream, dtype=np.float64)
    if up.shape != xv.shape:
        raise ValueError(f"backward: upstream shape {up.shape} does not match {xv.shape}")
    if not np.isfinite(up).all():
        raise ValueError("backward: upstream error must be finite")
    _require_stable(field)
    result = artifacts if artifacts is not None else forward(xv, field, validate=False)

    d_input = np.zeros_like(xv)
    d_weights = np.zeros_like(field.weights)
    for d in Direction:
        seed = np.where(result.directions == d, up, 0.0)
        dx, dw = _direction_backward(xv, field.weights[:, :, d, :], result.hidden[d], seed, d)
        d_input += dx
        d_weights[:, :, d, :] = dw
    return GradientBundle(d_input=d_input, d_weights=d_weights)


def finite_diff_check(
    x: ScoreMap,
    field: AffinityField,
    seed: int,
    *,
    step: float = GRADCHECK_STEP,
    denom_floor: float = GRADCHECK_DENOM_FLOOR,
) -> GradcheckReport:
    """Compare analytic gradients against central finite differences.

    A random upstream error (fixed by ``seed``) turns the propagation output
    into a scalar; every input and weight coordinate is then perturbed by
    +-step. Restricted to small grids to keep the quadratic cost bounded.
    """
    height, width = x.shape
    if height > GRADCHECK_MAX_SIDE or width > GRADCHECK_MAX_SIDE:
        raise ValueError(f"finite_diff_check supports grids up to {GRADCHECK_MAX_SIDE} per side")
    if x.shape != field.shape:
        raise ValueError(f"finite_diff_check: dimension mismatch {x.shape} vs {field.shape}")
    rng = np.random.default_rng(seed)
    upstream = rng.uniform(-1.0, 1.0, size=(height, width))
    analytic = backward(x.values, field, upstream)

    def objective(xv: np.ndarray, wv: np.ndarray) -> float:
        # Perturbed weights may exceed the stability budget by +-step, so the
        # forward here runs unvalidated; the recurrence itself stays finite.
        res = forward(xv, AffinityField(wv), validate=False)
        return float((res.values * upstream).sum())

    max_err = 0.0
    worst = "none"
    checked = 0

    def compare(fd: float, ana: float, label: str) -> None:
        nonlocal max_err, worst, checked
        checked += 1
        denom = max(abs(fd), abs(ana), denom_floor)
        err = abs(fd - ana) / denom
        if err > max_err:
            max_err = err
            worst = label

    base_x = x.values.copy()
    base_w = field.weights.copy()
    for r in range(height):
        for c in range(width):
            xp = base_x.copy()
            xp[r, c] = base_x[r, c] + step
            xm = base_x.copy()
            xm[r, c] = base_x[r, c] - step
            fd = (objective(xp, base_w) - objective(xm, base_w)) / (2.0 * step)
            compare(fd, analytic.d_input[r, c], f"input[{r},{c}]")
    for r in range(height):
        for c in range(width):
            for d in Direction:
                for k, offset in enumerate((-1, 0, 1)):
                    wp = base_w.copy()
                    wp[r, c, d, k] += step
                    wm = base_w.copy()
                    wm[r, c, d, k] -= step
                    fd = (objective(base_x, wp) - objective(base_x, wm)) / (2.0 * step)
                    compare(
                        fd,
                        analytic.d_weights[r, c, d, k],
                        f"weight[{r},{c},{d.name.lower()},{offset:+d}]",
                    )
    return GradcheckReport(
        max_rel_error=max_err, worst_coordinate=worst, coordinates_checked=checked, step=step
    )


def fit_guidance(
    coarse: ScoreMap, target: BinaryMask, cfg: FitConfig = FitConfig()
) -> tuple[AffinityField, list[float]]:
    """Fit per-pixel affinities by projected gradient descent.

    Weights start at zero (the identity operator) and learn deviations that
    pull the propagated map toward the target. Every step re-projects onto
    the stability budget. Returns the fitted field and the loss trace: one
    entry per iteration plus the final post-update loss.
    """
    if coarse.shape != target.shape:
        raise ValueError(f"fit_guidance: dimension mismatch {coarse.shape} vs {target.shape}")
    _class_fraction(target)  # reject degenerate targets up front
    field = AffinityField.zeros(*coarse.shape)
    losses: list[float] = []

    def record(loss: float) -> None:
        if not np.isfinite(loss):
            raise DivergenceError(f"loss diverged at iteration {len(losses)}: {loss!r}")
        losses.append(loss)

    for _ in range(cfg.iterations):
        result = forward(coarse.values, field, validate=False)
        record(weighted_loss(result.values, target, cfg.loss_clamp_epsilon))
        grad = loss_gradient(result.values, target, cfg.loss_clamp_epsilon)
        bundle = backward(coarse.values, field, grad, artifacts=result)
        field = project_stable(
            AffinityField(field.weights - cfg.learning_rate * bundle.d_weights)
        )
    final = forward(coarse.values, field, validate=False)
    record(weighted_loss(final.values, target, cfg.loss_clamp_epsilon))
    return field, losses
