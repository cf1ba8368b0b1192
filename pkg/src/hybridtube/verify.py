"""Forward-invariance certification of a hybrid periodic orbit.

The certificate machinery: slice the tube against an affine guard, locate
the window [t_under, t_over] where the tube transitions from fully above
to fully below the guard, check strict transversality on every nonempty
slice, and bound the reset gain gamma over the window.  The tube is
forward invariant when all four sign conditions hold and gamma <= 1.
All conditions are checked on the recorded time samples; the step size of
the embedding flow is the certification granularity.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import (CertificateInfeasible, DegenerateSlice, EnclosureFailure,
                     NoVerifiableScale, NoWindow)
from .inclusion import DerivativeEnclosure, LinearInclusion, build_inclusion
from .intervals import Interval, box
from .normotope import (EmbeddingTrajectory, Normotope, embed_flow,
                        linear_range, specnorm2)
from .systems import HybridSystem


@dataclass(frozen=True)
class AffineGuard:
    """Affine guard surface {x : a.x + b = 0} with subspace data.

    B spans the orthogonal complement of the normal a; anchor is a
    distinguished point on the surface, so {h = 0} = {B z + anchor}.
    """

    a: np.ndarray
    b: float
    basis: np.ndarray
    anchor: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        basis = np.asarray(self.basis, dtype=float)
        anchor = np.asarray(self.anchor, dtype=float).reshape(-1)
        n = a.size
        if basis.shape != (n, n - 1):
            raise ValueError("basis must be n x (n-1)")
        if np.linalg.matrix_rank(basis) != n - 1:
            raise ValueError("basis must have full column rank")
        ortho = np.max(np.abs(a @ basis))
        if ortho > 1e-10 * np.linalg.norm(a) * np.linalg.norm(basis, 2):
            raise ValueError("basis is not orthogonal to the guard normal")
        if abs(float(a @ anchor + self.b)) > 1e-12 * max(1.0, np.linalg.norm(a)):
            raise ValueError("anchor does not lie on the guard surface")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "b", float(self.b))

    @classmethod
    def from_normal(cls, a, b: float) -> "AffineGuard":
        """Guard from normal/offset; orthonormal basis, min-norm anchor."""
        a = np.asarray(a, dtype=float).reshape(-1)
        basis = scipy.linalg.null_space(a.reshape(1, -1))
        anchor = -float(b) * a / float(a @ a)
        return cls(a, float(b), basis, anchor)

    def h(self, x) -> float:
        return float(self.a @ np.asarray(x, dtype=float) + self.b)

    def embed(self, z) -> np.ndarray:
        """Map subspace coordinates to state space."""
        return self.basis @ np.asarray(z, dtype=float) + self.anchor


@dataclass(frozen=True)
class SlicedNormotope:
    """(n-1)-dimensional slice of a normotope by the guard hyperplane.

    The slice is {z : ||R (z - z_center)|| <= radius} in subspace
    coordinates; x = B z + anchor recovers state-space points.
    """

    z_center: np.ndarray
    r_matrix: np.ndarray
    radius: float
    slack: float
    time: float

    @property
    def dim(self) -> int:
        return self.z_center.size


def slice_normotope(n: Normotope, guard: AffineGuard,
                    t: float = 0.0) -> SlicedNormotope | None:
    """Intersect a normotope with the guard hyperplane.

    Returns None for an empty intersection.  Uses the reduced QR
    decomposition of alpha @ B; the slice shape matrix is the R factor.
    """
    ab = n.shape @ guard.basis
    q, r = np.linalg.qr(ab)
    diag = np.abs(np.diag(r))
    if diag.min() < 1e-12 * max(diag.max(), 1.0):
        raise DegenerateSlice("alpha @ B is numerically rank deficient")
    w = n.shape @ (n.center - guard.anchor)
    qtw = q.T @ w
    # slack r = ||w||^2 - ||Q^T w||^2, computed as the residual norm for
    # stability (it is the squared distance from w to range(Q))
    resid = w - q @ qtw
    slack = float(resid @ resid)
    if n.offset**2 < slack:
        return None
    z_center = scipy.linalg.solve_triangular(r, qtw)
    radius = float(np.sqrt(max(n.offset**2 - slack, 0.0)))
    return SlicedNormotope(z_center, r, radius, slack, t)


def slice_z_box(s: SlicedNormotope) -> list[Interval]:
    """Per-axis interval hull of the slice in subspace coordinates."""
    rinv = np.linalg.inv(s.r_matrix)
    half = s.radius * np.linalg.norm(rinv, axis=1)
    return box(s.z_center - half, s.z_center + half)


def embedded_slice_box(s: SlicedNormotope, guard: AffineGuard) -> list[Interval]:
    """Per-axis interval hull of {B z + anchor : z in slice} in state space."""
    center = guard.embed(s.z_center)
    brinv = guard.basis @ np.linalg.inv(s.r_matrix)
    half = s.radius * np.linalg.norm(brinv, axis=1)
    return box(center - half, center + half)


def check_sign_condition(n: Normotope, guard: AffineGuard, want: str) -> bool:
    """Strict one-sidedness of the guard function over the set."""
    rng = linear_range(guard.a, guard.b, n)
    if want == "above":
        return rng.lo > 0.0
    if want == "below":
        return rng.hi < 0.0
    raise ValueError("want must be 'above' or 'below'")


def transversality_range(s: SlicedNormotope, guard: AffineGuard,
                         f_range: Callable[[Sequence[Interval]], Sequence[Interval]]
                         ) -> Interval:
    """Interval enclosure of d/dt h = a . f over the embedded slice."""
    bx = embedded_slice_box(s, guard)
    f_iv = f_range(bx)
    acc = Interval(0.0, 0.0)
    for ai, fi in zip(guard.a, f_iv):
        acc = acc + float(ai) * fi
    return acc


def gamma_bound(slices: Sequence[SlicedNormotope], guard: AffineGuard,
                reset_inclusion_builder: Callable[[SlicedNormotope], LinearInclusion],
                reset_map: Callable[[np.ndarray], np.ndarray],
                alpha0: np.ndarray, x_star: np.ndarray) -> float:
    """Certified bound on the post-reset gain over the given guard slices.

    Per slice: distance of the reset slice center from the fixed point in
    the alpha0 norm, plus the worst induced norm of the reset inclusion
    corners composed with the slice shape, scaled by the slice radius.
    """
    alpha0 = np.asarray(alpha0, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    worst = 0.0
    for s in slices:
        center_term = float(np.linalg.norm(
            alpha0 @ (reset_map(guard.embed(s.z_center)) - x_star)))
        inc = reset_inclusion_builder(s)
        rinv = np.linalg.inv(s.r_matrix)
        if inc.uses_fallback:
            m_c = inc.corner_matrices[0]
            gain = specnorm2(alpha0 @ m_c @ rinv) + specnorm2(
                np.abs(alpha0) @ inc.radius_matrix @ np.abs(rinv))
        else:
            stack = np.einsum("ij,kjl,lm->kim", alpha0,
                              np.stack(inc.corner_matrices), rinv)
            gram = np.einsum("kji,kjl->kil", stack, stack)
            gain = float(np.sqrt(np.linalg.eigvalsh(gram)[:, -1].max()))
        worst = max(worst, center_term + gain * s.radius)
    return worst


def find_window(traj: EmbeddingTrajectory, guard: AffineGuard
                ) -> tuple[float, float, int, int]:
    """Locate (t_under, t_over) bracketing the guard passage.

    t_over is the first sample with the set strictly below the guard;
    t_under is the latest sample before the nominal center crossing with
    the set strictly above (maximizing the pre-impact invariant region).
    Also returns the sample indices.
    """
    h_center = np.array([guard.h(n.center) for n in traj.states])
    below_center = np.nonzero(h_center <= 0.0)[0]
    if below_center.size == 0:
        raise NoWindow("nominal center never crossed the guard")
    k_impact = int(below_center[0])
    k_under = None
    for k in range(k_impact - 1, -1, -1):
        if check_sign_condition(traj.states[k], guard, "above"):
            k_under = k
            break
    if k_under is None:
        raise NoWindow("tube is never strictly above the guard before impact")
    k_over = None
    for k in range(k_impact, len(traj)):
        if check_sign_condition(traj.states[k], guard, "below"):
            k_over = k
            break
    if k_over is None:
        raise NoWindow("tube never passed strictly below the guard")
    return (float(traj.times[k_under]), float(traj.times[k_over]),
            k_under, k_over)


@dataclass
class VerifyParams:
    """Knobs for a single verification run."""

    h_embed: float = 1e-3
    max_steps: int = 20000
    fixed_point_tol: float = 1e-6
    scheme: str = "rk4"


@dataclass
class VerificationResult:
    """Outcome of one certification run at a fixed initial shape."""

    t_under: float
    t_over: float
    intersections: list[tuple[int, SlicedNormotope]]
    gamma: float
    conditions: dict[str, bool]
    verified: bool
    trajectory: EmbeddingTrajectory = field(repr=False)


def make_slice_inclusion_builder(reset_derivs_z: DerivativeEnclosure,
                                 cap: int = 1 << 16
                                 ) -> Callable[[SlicedNormotope], LinearInclusion]:
    """Builder mapping a slice to a reset inclusion over its z-box."""

    def build(s: SlicedNormotope) -> LinearInclusion:
        return build_inclusion(reset_derivs_z, slice_z_box(s), s.z_center, cap)

    return build


def verify_tube(system: HybridSystem, x_star, alpha0,
                params: VerifyParams | None = None) -> VerificationResult:
    """Run the full certification pipeline from the initial set
    {x : ||alpha0 (x - x_star)|| <= 1}."""
    params = params or VerifyParams()
    x_star = np.asarray(x_star, dtype=float)
    alpha0 = np.asarray(alpha0, dtype=float)
    if system.fixed_point_residual is not None:
        res = system.fixed_point_residual(x_star)
        if res > params.fixed_point_tol:
            raise ValueError(f"x_star is not a fixed point (residual {res:.2e})")
    guard = system.guard
    n0 = Normotope(x_star, alpha0, 1.0)

    def fully_below(t: float, n: Normotope) -> bool:
        return check_sign_condition(n, guard, "below")

    traj = embed_flow(n0, system.embedding, fully_below, params.h_embed,
                      params.max_steps, params.scheme)
    t_under, t_over, k_under, k_over = find_window(traj, guard)
    try:
        return _check_conditions(system, traj, guard, alpha0, x_star,
                                 t_under, t_over, k_under, k_over)
    except (ZeroDivisionError, ValueError) as e:
        raise EnclosureFailure(
            f"guard-stage enclosure undefined: {e}") from e


def _check_conditions(system, traj, guard, alpha0, x_star,
                      t_under, t_over, k_under, k_over) -> VerificationResult:
    cond = {
        "a": check_sign_condition(traj.states[k_under], guard, "above"),
        "b": check_sign_condition(traj.states[k_over], guard, "below"),
    }
    # transversality on nonempty slices: (c) going up before the window,
    # (d) going down inside it; empty slices pass vacuously
    cond_c = True
    cond_d = True
    window_slices: list[tuple[int, SlicedNormotope]] = []
    for k in range(k_over + 1):
        s = slice_normotope(traj.states[k], guard, float(traj.times[k]))
        if s is None:
            continue
        rng = transversality_range(
            s, guard, lambda bx, _t=float(traj.times[k]):
            system.embedding.field_range(bx, _t))
        if k <= k_under:
            cond_c = cond_c and rng.lo > 0.0
        if k_under <= k <= k_over:
            cond_d = cond_d and rng.hi < 0.0
            window_slices.append((k, s))
    cond["c"] = cond_c
    cond["d"] = cond_d
    builder = make_slice_inclusion_builder(system.reset_enclosure_z,
                                           system.embedding.corner_cap)
    gamma = gamma_bound([s for _, s in window_slices], guard, builder,
                        system.reset, alpha0, x_star)
    verified = all(cond.values()) and gamma <= 1.0
    return VerificationResult(t_under, t_over, window_slices, gamma, cond,
                              verified, traj)


# scale search bracket: 2**+-SCALE_EXP_LIMIT
SCALE_EXP_LIMIT = 20


def rescale_bisection(system: HybridSystem, x_star, alpha0, s_tol: float = 1e-3,
                      params: VerifyParams | None = None,
                      verify: Callable[..., VerificationResult] | None = None
                      ) -> tuple[float, VerificationResult]:
    """Largest scale s with a valid certificate for initial shape alpha0 / s.

    Exponential bracketing followed by bisection to relative tolerance
    s_tol; the returned scale is re-verified end to end before returning
    (monotonicity of the certificate in s is assumed by the search, not
    by the result).
    """
    verify = verify or verify_tube
    alpha0 = np.asarray(alpha0, dtype=float)

    def attempt(s: float) -> VerificationResult | None:
        try:
            res = verify(system, x_star, alpha0 / s, params)
        except CertificateInfeasible:
            return None
        return res if res.verified else None

    s = 1.0
    res = attempt(s)
    if res is not None:
        lo, best = s, res
        while s < 2.0**SCALE_EXP_LIMIT:
            s *= 2.0
            r2 = attempt(s)
            if r2 is None:
                hi = s
                break
            lo, best = s, r2
        else:
            return lo, best
    else:
        hi = s
        while s > 2.0**-SCALE_EXP_LIMIT:
            s *= 0.5
            r2 = attempt(s)
            if r2 is not None:
                lo, best = s, r2
                break
        else:
            raise NoVerifiableScale(
                f"no certificate found down to scale 2^-{SCALE_EXP_LIMIT}")
    while (hi - lo) > s_tol * lo:
        mid = 0.5 * (lo + hi)
        r2 = attempt(mid)
        if r2 is None:
            hi = mid
        else:
            lo, best = mid, r2
    final = attempt(lo)
    if final is None:
        raise NoVerifiableScale("final re-verification at the returned scale failed")
    return lo, final
