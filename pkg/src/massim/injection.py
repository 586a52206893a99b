"""Logistic model of whether a perturbed interface element captures attention.

Capture probability rises with font-size enlargement and falls with
displacement from screen center. The maximizer over a box of allowed
perturbations is a corner of the box because the logistic is monotone in its
linear argument.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field


class OptimizationError(ValueError):
    """Raised for unbounded or empty perturbation boxes."""


@dataclass(frozen=True)
class Perturbation:
    """Font-size deviation (dimensionless) and displacement from center (>= 0)."""
    delta_size: float
    delta_pos: float

    def __post_init__(self):
        if not (math.isfinite(self.delta_size) and math.isfinite(self.delta_pos)):
            raise ValueError("perturbation components must be finite")
        if self.delta_pos < 0:
            raise ValueError("delta_pos must be nonnegative")


@dataclass(frozen=True)
class HookModelParams:
    """Fitted sensitivities, box bounds, and recorded layout constants.

    The layout constants (target distance, width, difficulty index) are kept
    for reference but do not enter the probability model; the box bounds are
    the operative constraint.
    """
    k1: float = 0.32
    k2: float = -0.18
    size_bounds: tuple = (0.0, 2.0)
    pos_bounds: tuple = (0.0, 1.0)
    layout_params: dict = field(default_factory=lambda: {"D": 0.8, "W": 0.25, "ID": 3.2})


def hook_probability(pert: Perturbation, params: HookModelParams | None = None) -> float:
    """Capture probability 1 / (1 + exp(-(k1 * dsize + k2 * dpos)))."""
    if params is None:
        params = HookModelParams()
    arg = params.k1 * pert.delta_size + params.k2 * pert.delta_pos
    return 1.0 / (1.0 + math.exp(-arg))


def optimize_perturbation(params: HookModelParams | None = None) -> Perturbation:
    """Box corner maximizing the linear argument k1 * dsize + k2 * dpos.

    Ties break toward the smaller corner values so the result is
    deterministic for degenerate coefficients.
    """
    if params is None:
        params = HookModelParams()
    slo, shi = params.size_bounds
    plo, phi = params.pos_bounds
    for bound in (slo, shi, plo, phi):
        if not math.isfinite(bound):
            raise OptimizationError("perturbation box must be finite")
    if slo > shi or plo > phi:
        raise OptimizationError("empty perturbation box")
    corners = [(s, p) for s in (slo, shi) for p in (plo, phi)]
    best = max(corners, key=lambda c: (params.k1 * c[0] + params.k2 * c[1], -c[0], -c[1]))
    return Perturbation(delta_size=best[0], delta_pos=best[1])


def sample_capture(prob: float, rng_seed: int) -> bool:
    """Seeded Bernoulli draw of a capture event."""
    if not (0.0 <= prob <= 1.0):
        raise ValueError("capture probability must lie in [0, 1]")
    return random.Random(rng_seed).random() < prob
