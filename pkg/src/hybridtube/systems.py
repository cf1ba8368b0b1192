"""System bundles consumed by the embedding integrator and the verifier."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .inclusion import DerivativeEnclosure
from .intervals import Interval


@dataclass
class EmbeddingSystem:
    """Closed-loop continuous system in the form the tube integrator needs.

    field(x, t) and field_jacobian(x, t) are pointwise evaluations;
    field_enclosure is the column-wise mixed-Jacobian enclosure;
    field_range(box, t) encloses the vector field over a box (used for
    transversality checks on guard slices).
    """

    dim: int
    field: Callable[[np.ndarray, float], np.ndarray]
    field_jacobian: Callable[[np.ndarray, float], np.ndarray]
    field_enclosure: DerivativeEnclosure
    field_range: Callable[[Sequence[Interval], float], list[Interval]]
    corner_cap: int = 1 << 16


@dataclass
class HybridSystem:
    """Embedding system plus guard/reset data for invariance certification.

    reset(x) applies the closed-loop jump map; reset_enclosure_z is the
    derivative enclosure (in guard-subspace coordinates z, mapping through
    x = B z + anchor) used to bound the reset gain over guard slices.
    fixed_point_residual, when provided, lets the verifier sanity-check
    that x_star is a genuine fixed point of the step-to-step map.
    """

    embedding: EmbeddingSystem
    guard: "AffineGuard"  # noqa: F821 - defined in verify, kept untyped here
    reset: Callable[[np.ndarray], np.ndarray]
    reset_enclosure_z: DerivativeEnclosure
    fixed_point_residual: Callable[[np.ndarray], float] | None = None
