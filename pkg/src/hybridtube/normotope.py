"""Ellipsoidal norm-ball sets and the parametric embedding integrator.

A normotope {x : ||alpha (x - center)||_2 <= y} is propagated through a
nonlinear flow by integrating its center along the nominal dynamics, its
shape along the adjoint of the center linearization, and its offset by a
log-norm bound over the corners of a linear differential inclusion.  The
inclusion is rebuilt every Euler step over an inflated bounding box of the
current set, and the step is only accepted if the post-step set stayed
inside that box, which turns the a-priori hypothesis of the reachability
guarantee into a checked postcondition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainViolation, MaxStepsExceeded, StepTooLarge
from .inclusion import DerivativeEnclosure, LinearInclusion, build_inclusion
from .intervals import Interval, box, box_subset

RCOND_MIN = 1e-12


@dataclass(frozen=True)
class Normotope:
    """Set {x : ||shape @ (x - center)||_2 <= offset}."""

    center: np.ndarray
    shape: np.ndarray
    offset: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(-1)
        a = np.asarray(self.shape, dtype=float)
        if a.shape != (c.size, c.size):
            raise ValueError("shape matrix must be square and match center")
        if not self.offset > 0.0:
            raise ValueError("offset must be positive")
        if rcond(a) < RCOND_MIN:
            raise ValueError("shape matrix is numerically singular")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "shape", a)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self) -> int:
        return self.center.size


def rcond(a: np.ndarray) -> float:
    """Reciprocal 2-norm condition number (0 for singular)."""
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[0] == 0.0:
        return 0.0
    return float(sv[-1] / sv[0])


def contains(n: Normotope, x, slack_ulps: float = 4.0) -> bool:
    """Membership test with outward slack of a few ulps of the offset."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != n.dim:
        raise ValueError("dimension mismatch")
    lhs = float(np.linalg.norm(n.shape @ (x - n.center)))
    return lhs <= n.offset + slack_ulps * math.ulp(max(lhs, n.offset))


def lognorm2(a) -> float:
    """l2 logarithmic norm: largest eigenvalue of the symmetric part."""
    a = np.asarray(a, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (a + a.T))[-1])


def specnorm2(a) -> float:
    """Largest singular value (induced 2-norm), any rectangular matrix."""
    return float(np.linalg.norm(np.asarray(a, dtype=float), 2))


def linear_range(a, b: float, n: Normotope) -> Interval:
    """Exact range of x -> a.x + b over the normotope."""
    a = np.asarray(a, dtype=float).reshape(-1)
    mid = float(a @ n.center + b)
    # ||alpha^{-T} a|| via a triangular-free solve
    w = np.linalg.solve(n.shape.T, a)
    half = n.offset * float(np.linalg.norm(w))
    return Interval(mid - half, mid + half)


def bounding_box(n: Normotope, inv_shape: np.ndarray | None = None) -> list[Interval]:
    """Tight per-axis interval hull of the normotope."""
    inv = np.linalg.inv(n.shape) if inv_shape is None else inv_shape
    half = n.offset * np.linalg.norm(inv, axis=1)
    return box(n.center - half, n.center + half)


@dataclass(frozen=True)
class EmbeddingTrajectory:
    """Uniformly sampled trajectory of the parametric embedding system."""

    times: np.ndarray
    states: list[Normotope]
    step: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if len(self.states) != t.size:
            raise ValueError("one state per sample time required")
        if t.size > 1:
            dt = np.diff(t)
            if not np.allclose(dt, self.step, rtol=1e-9, atol=1e-12):
                raise ValueError("sample times must be uniformly spaced")
        object.__setattr__(self, "times", t)

    def __len__(self) -> int:
        return self.times.size

    def nearest_index(self, t: float) -> int:
        i = int(round((t - self.times[0]) / self.step))
        return min(max(i, 0), len(self) - 1)


def mu_bound(alpha: np.ndarray, inv_alpha: np.ndarray, df_center: np.ndarray,
             inclusion: LinearInclusion) -> float:
    """Worst-case log-norm of alpha (M - Df) alpha^-1 over the matrix set."""
    if inclusion.uses_fallback:
        m_c = inclusion.corner_matrices[0]
        base = lognorm2(alpha @ (m_c - df_center) @ inv_alpha)
        return base + (specnorm2(alpha) * specnorm2(inclusion.radius_matrix)
                       * specnorm2(inv_alpha))
    stack = np.stack(inclusion.corner_matrices) - df_center
    mats = np.einsum("ij,kjl,lm->kim", alpha, stack, inv_alpha)
    sym = 0.5 * (mats + np.transpose(mats, (0, 2, 1)))
    return float(np.linalg.eigvalsh(sym)[:, -1].max())


def embed_step(n: Normotope, f_center: np.ndarray, df_center: np.ndarray,
               inclusion: LinearInclusion, h: float) -> Normotope:
    """One explicit Euler step of the embedding system.

    The caller certifies that `inclusion` is valid over a domain containing
    the set for the whole step (see embed_flow).
    """
    if h == 0.0:
        return n
    alpha = n.shape
    inv_alpha = np.linalg.inv(alpha)
    mu = mu_bound(alpha, inv_alpha, df_center, inclusion)
    center = n.center + h * np.asarray(f_center, dtype=float)
    shape = alpha - h * alpha @ df_center
    offset = n.offset * (1.0 + h * mu)
    if rcond(shape) < RCOND_MIN or offset <= 0.0:
        raise StepTooLarge(f"shape update lost invertibility at h={h}")
    return Normotope(center, shape, offset)


# Inflation policy for the inclusion domain: multiplicative widening of the
# bounding box plus per-axis additive margins that cover the motion of the
# set over one step.
BOX_INFLATION = 1.1
MOTION_FLOOR = 0.01  # fraction of ||f|| added to every axis margin
MAX_REINFLATIONS = 3
MAX_HALVINGS = 8


def _pair_step(n: Normotope, t: float, system, h: float,
               scheme: str) -> tuple[np.ndarray, np.ndarray]:
    """Advance (center, shape) one step of the coupled center/adjoint ODEs.

    The offset growth law stays the certified Euler bound regardless of
    the scheme used here; a higher-order pair keeps the recorded center on
    the true nominal flow so the offset bound is not spent on integrator
    drift.
    """
    if scheme == "euler":
        f_c = system.field(n.center, t)
        df_c = system.field_jacobian(n.center, t)
        return n.center + h * f_c, n.shape - h * n.shape @ df_c
    if scheme != "rk4":
        raise ValueError(f"unknown integrator scheme '{scheme}'")

    def rates(x, a, tau):
        return system.field(x, tau), -a @ system.field_jacobian(x, tau)

    x0, a0 = n.center, n.shape
    k1x, k1a = rates(x0, a0, t)
    k2x, k2a = rates(x0 + 0.5 * h * k1x, a0 + 0.5 * h * k1a, t + 0.5 * h)
    k3x, k3a = rates(x0 + 0.5 * h * k2x, a0 + 0.5 * h * k2a, t + 0.5 * h)
    k4x, k4a = rates(x0 + h * k3x, a0 + h * k3a, t + h)
    center = x0 + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
    shape = a0 + (h / 6.0) * (k1a + 2 * k2a + 2 * k3a + k4a)
    return center, shape


def _certified_step(n: Normotope, t: float, system, h: float,
                    scheme: str, depth: int = 0) -> Normotope:
    """One flow step with a-posteriori domain certification.

    Builds the inclusion over an inflated bounding box, steps, and checks
    the post-step set stayed inside the box.  On failure the box is doubled
    (a few times), then the step is split in two; if nothing works the
    reachability hypothesis cannot be certified and we abort.
    """
    f_c = system.field(n.center, t)
    df_c = system.field_jacobian(n.center, t)
    inv_alpha = np.linalg.inv(n.shape)
    base = bounding_box(n, inv_alpha)
    floor = MOTION_FLOOR * float(np.linalg.norm(f_c))
    margins = h * (np.abs(f_c) + floor)
    widen = 1.0
    for _ in range(MAX_REINFLATIONS + 1):
        dom = [Interval(iv.mid - widen * (BOX_INFLATION * iv.rad + mg),
                        iv.mid + widen * (BOX_INFLATION * iv.rad + mg))
               for iv, mg in zip(base, margins)]
        try:
            inc = build_inclusion(system.field_enclosure, dom, n.center,
                                  cap=system.corner_cap)
            mu = mu_bound(n.shape, inv_alpha, df_c, inc)
            center, shape = _pair_step(n, t, system, h, scheme)
            offset = n.offset * (1.0 + h * mu)
            if rcond(shape) < RCOND_MIN or offset <= 0.0:
                raise StepTooLarge(f"shape update lost invertibility at h={h}")
            stepped = Normotope(center, shape, offset)
        except (ZeroDivisionError, ValueError) as e:
            raise DomainViolation(
                f"field enclosure undefined over the domain box: {e}") from e
        if box_subset(bounding_box(stepped), dom):
            return stepped
        widen *= 2.0
    if depth >= MAX_HALVINGS:
        raise DomainViolation(
            "post-step set escaped the inclusion domain after max re-inflations")
    half = _certified_step(n, t, system, 0.5 * h, scheme, depth + 1)
    return _certified_step(half, t + 0.5 * h, system, 0.5 * h, scheme, depth + 1)


def embed_flow(n0: Normotope, system, t_stop: Callable[[float, Normotope], bool],
               h: float, max_steps: int = 20000,
               scheme: str = "rk4") -> EmbeddingTrajectory:
    """Flow the embedding system until `t_stop` fires on a recorded sample.

    `system` provides field(x, t), field_jacobian(x, t), a column-wise
    field_enclosure, and corner_cap.  Internal step refinement keeps the
    recorded grid uniform at spacing h.  `scheme` selects the center/shape
    integrator ("rk4" or "euler"); the offset always follows the certified
    Euler growth law.
    """
    states = [n0]
    times = [0.0]
    n = n0
    if t_stop(0.0, n0):
        return EmbeddingTrajectory(np.array(times), states, h)
    for k in range(max_steps):
        t = k * h
        n = _certified_step(n, t, system, h, scheme)
        times.append(t + h)
        states.append(n)
        if t_stop(t + h, n):
            return EmbeddingTrajectory(np.asarray(times), states, h)
    raise MaxStepsExceeded(f"stop predicate never fired within {max_steps} steps")
