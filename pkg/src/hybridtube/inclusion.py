"""Linear inclusions g(x) - g(x0) in co{M_i}(x - x0) over boxes.

The matrix set is built from a mixed Jacobian: column j of the interval
matrix encloses dg/dx_j evaluated with interval arguments for indices
<= j and the center point for indices > j (ascending order, no
reordering).  Corner enumeration turns the interval matrix into a finite
convex hull; if enumeration would explode, the inclusion instead carries
the center matrix plus an entrywise radius bound.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import CornerExplosion
from .intervals import (Interval, IntervalMatrix, as_interval,
                        box_contains_point, corners)

# A derivative enclosure maps (box, center, column index j) to a column of
# intervals enclosing dg/dx_j over the mixed argument set for column j.
DerivativeEnclosure = Callable[[Sequence[Interval], np.ndarray, int], list[Interval]]


def mixed_arguments(box: Sequence[Interval], center: np.ndarray,
                    j: int) -> list[Interval]:
    """Argument list for column j: intervals up to j, center beyond."""
    args = [box[i] for i in range(j + 1)]
    args += [as_interval(float(center[i])) for i in range(j + 1, len(box))]
    return args


def columnwise_enclosure(dcol: Callable[[Sequence[Interval], int], Sequence[Interval]]
                         ) -> DerivativeEnclosure:
    """Adapt a plain column evaluator dcol(args, j) into a DerivativeEnclosure.

    The adapter applies the mixed-argument rule; dcol only needs to
    evaluate the closed-form partial derivatives at the given arguments.
    """

    def enclosure(box, center, j):
        args = mixed_arguments(box, center, j)
        return [as_interval(v) for v in dcol(args, j)]

    return enclosure


@dataclass(frozen=True)
class LinearInclusion:
    """Finite matrix set certifying g(x) - g(center) in co{M_i}(x - center).

    When corner enumeration overflowed, `corner_matrices` holds just the
    center matrix and `radius_matrix` the entrywise half-widths; consumers
    must then use a norm-based bound instead of the corner max.
    """

    center_point: np.ndarray
    corner_matrices: list[np.ndarray]
    domain_box: list[Interval] = field(repr=False)
    radius_matrix: np.ndarray | None = None

    def __post_init__(self):
        if not self.corner_matrices:
            raise ValueError("corner list must be nonempty")
        shape = self.corner_matrices[0].shape
        if any(m.shape != shape for m in self.corner_matrices):
            raise ValueError("corner matrices must share dimensions")

    @property
    def uses_fallback(self) -> bool:
        return self.radius_matrix is not None

    def hull(self) -> IntervalMatrix:
        """Entrywise interval hull of the matrix set."""
        if self.uses_fallback:
            c = self.corner_matrices[0]
            return IntervalMatrix(c - self.radius_matrix, c + self.radius_matrix)
        stack = np.stack(self.corner_matrices)
        return IntervalMatrix(stack.min(axis=0), stack.max(axis=0))


def mixed_jacobian(g_derivs: DerivativeEnclosure, box: Sequence[Interval],
                   center: np.ndarray) -> IntervalMatrix:
    """Interval matrix [M] with g(x) - g(center) in [M](x - center) on box."""
    center = np.asarray(center, dtype=float)
    if not box_contains_point(box, center):
        raise ValueError("center must lie inside the box")
    cols = [g_derivs(box, center, j) for j in range(len(box))]
    return IntervalMatrix.from_columns(cols)


def build_inclusion(g_derivs: DerivativeEnclosure, box: Sequence[Interval],
                    center: np.ndarray, cap: int = 1 << 16) -> LinearInclusion:
    """Linear inclusion over `box` centered at `center`.

    Falls back to the center/radius form when the corner count exceeds
    `cap`, flagged via `radius_matrix` for the log-norm fallback path.
    """
    m = mixed_jacobian(g_derivs, box, center)
    try:
        cs = corners(m, cap)
        return LinearInclusion(np.asarray(center, float), cs, list(box))
    except CornerExplosion:
        return LinearInclusion(np.asarray(center, float), [m.center()],
                               list(box), radius_matrix=m.radius())
