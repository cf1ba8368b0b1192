"""Nominal gait synthesis and controllers for the walker.

Pipeline: penalty-method single shooting produces a periodic seed
(initial state, feedforward force profile, feedforward impulse); a damped
Newton on the true event-detected step map polishes the fixed point; the
step-to-step linearization is estimated by central differences and the
touchdown impulse gain is placed by Ackermann's formula; a discrete
Lyapunov series turns the closed-loop step matrix into the initial tube
shape.  The same module hosts the bilevel tracking-gain design loop that
alternates gradient steps on the certified reset gain with tube rescaling.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize

from .errors import (DivergentDescent, InfeasibleGait, NoImpact,
                     NonTransversalCrossing, SpectralRadiusTooLarge,
                     Uncontrollable)
from .inclusion import columnwise_enclosure
from .intervals import Interval, as_interval
from .systems import EmbeddingSystem, HybridSystem
from .verify import (VerificationResult, VerifyParams, rescale_bisection,
                     verify_tube)
from .walker import (WalkerParams, get_symbolics, transformed_dynamics,
                     transformed_guard, transformed_reset)


# ---------------------------------------------------------------------------
# controllers
# ---------------------------------------------------------------------------

@dataclass
class TrackingControls:
    """Continuous-time controller u = u_ff(tau) + K (x - x_d(tau)).

    tau is the time since the last touchdown, clamped to the stored grids,
    which keeps the closed loop autonomous on the extended state.
    """

    u_grid: np.ndarray
    u_samples: np.ndarray
    xd_grid: np.ndarray
    xd_samples: np.ndarray  # (len(xd_grid), 4)
    gain: np.ndarray        # (4,)

    def u_ff(self, t: float) -> float:
        return float(np.interp(t, self.u_grid, self.u_samples))

    def xd(self, t: float) -> np.ndarray:
        return np.array([np.interp(t, self.xd_grid, self.xd_samples[:, i])
                         for i in range(4)])

    def u(self, x, t: float) -> float:
        val = self.u_ff(t)
        if np.any(self.gain):
            val += float(self.gain @ (np.asarray(x, float) - self.xd(t)))
        return val

    def u_range(self, box: Sequence[Interval], t: float) -> Interval:
        """Interval value of the control law over a state box."""
        acc = as_interval(self.u_ff(t))
        if np.any(self.gain):
            xd = self.xd(t)
            for k, (g, iv) in enumerate(zip(self.gain, box)):
                if g != 0.0:
                    acc = acc + float(g) * (iv - float(xd[k]))
        return acc

    def with_gain(self, gain) -> "TrackingControls":
        return TrackingControls(self.u_grid, self.u_samples, self.xd_grid,
                                self.xd_samples, np.asarray(gain, float))


@dataclass
class DiscreteImpulse:
    """Touchdown impulse law v = v_ff + K_ds (x_minus - x_ref)."""

    v_ff: float
    gain: np.ndarray   # (4,)
    x_ref: np.ndarray  # nominal pre-impact state

    def v(self, x_minus) -> float:
        return self.v_ff + float(self.gain @ (np.asarray(x_minus, float)
                                              - self.x_ref))

    def v_range(self, box: Sequence[Interval]) -> Interval:
        acc = as_interval(self.v_ff)
        for k, (g, iv) in enumerate(zip(self.gain, box)):
            if g != 0.0:
                acc = acc + float(g) * (iv - float(self.x_ref[k]))
        return acc


@dataclass
class GaitSpec:
    """A synthesized periodic gait and its controllers."""

    params: WalkerParams
    x_star: np.ndarray
    period: float
    u_grid: np.ndarray
    u_ff: np.ndarray
    v_ff: float
    k_ds: np.ndarray
    k_track: np.ndarray
    xd_grid: np.ndarray
    xd_samples: np.ndarray
    x_pre_impact: np.ndarray
    residual: float

    def tracking(self, gain=None) -> TrackingControls:
        k = self.k_track if gain is None else np.asarray(gain, float)
        return TrackingControls(self.u_grid, self.u_ff, self.xd_grid,
                                self.xd_samples, k)

    def impulse(self) -> DiscreteImpulse:
        return DiscreteImpulse(self.v_ff, self.k_ds, self.x_pre_impact)

    def impulse_ff(self) -> DiscreteImpulse:
        """Feedforward-only impulse (for open-loop step linearization)."""
        return DiscreteImpulse(self.v_ff, np.zeros(4), self.x_pre_impact)


# ---------------------------------------------------------------------------
# event-detected simulation
# ---------------------------------------------------------------------------

TRANSVERSAL_MIN = 1e-12


def integrate_to_guard(field: Callable[[float, np.ndarray], np.ndarray],
                       guard_h: Callable[[np.ndarray], float],
                       x0, horizon: float, event_tol: float = 1e-10,
                       rtol: float = 1e-10, atol: float = 1e-12):
    """Integrate until guard_h crosses zero from above (hdot < 0).

    Returns (x_minus, t_impact, sol); (None, inf, sol) when the guard is
    never reached within the horizon.  Crossings with hdot >= 0 are
    ignored by construction of the event direction.
    """

    def ev(t, x):
        return guard_h(x)

    ev.terminal = True
    ev.direction = -1
    sol = solve_ivp(field, (0.0, horizon), np.asarray(x0, float),
                    method="RK45", rtol=rtol, atol=atol, events=ev,
                    dense_output=True)
    if sol.t_events[0].size == 0:
        return None, np.inf, sol
    t_imp = float(sol.t_events[0][0])
    x_minus = sol.y_events[0][0].copy()
    # Newton polish of the event time on the dense output
    for _ in range(5):
        h = guard_h(x_minus)
        if abs(h) <= event_tol:
            break
        hdot = _h_rate(field, guard_h, t_imp, x_minus)
        if hdot == 0.0:
            break
        t_imp -= h / hdot
        x_minus = sol.sol(t_imp)
    hdot = _h_rate(field, guard_h, t_imp, x_minus)
    if not hdot < -TRANSVERSAL_MIN:
        raise NonTransversalCrossing(f"hdot = {hdot:.3e} at impact")
    return x_minus, t_imp, sol


def _h_rate(field, guard_h, t, x, eps: float = 1e-8):
    f = field(t, x)
    xp = np.asarray(x, float)
    return (guard_h(xp + eps * f) - guard_h(xp - eps * f)) / (2.0 * eps)


def simulate_step(x0, controls: TrackingControls, p: WalkerParams,
                  horizon: float = 5.0, event_tol: float = 1e-10,
                  rtol: float = 1e-10):
    """Flow the transformed closed loop from x0 to the next touchdown."""
    guard = transformed_guard(p)

    def field(t, x):
        return transformed_dynamics(x, controls.u(x, t), p)

    return integrate_to_guard(field, guard.h, x0, horizon,
                              event_tol=event_tol, rtol=rtol,
                              atol=0.01 * rtol)


def step_map(x, impulse: DiscreteImpulse, controls: TrackingControls,
             p: WalkerParams, horizon: float = 5.0,
             rtol: float = 1e-10, event_tol: float = 1e-10) -> np.ndarray:
    """One application of the step-to-step map (flow, then reset)."""
    x_minus, t_imp, _ = simulate_step(x, controls, p, horizon,
                                      event_tol=event_tol, rtol=rtol)
    if not np.isfinite(t_imp):
        raise NoImpact("trajectory never reached the touchdown surface")
    return transformed_reset(x_minus, impulse.v(x_minus), p)


# ---------------------------------------------------------------------------
# step-to-step linearization and discrete control
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepLinearization:
    """First-order step-to-step model x+ ~ x* + A dx + B_v dv."""

    a: np.ndarray
    b_v: np.ndarray


def step_jacobians(x_star, impulse: DiscreteImpulse, controls: TrackingControls,
                   p: WalkerParams, fd_step: float = 1e-6,
                   check_step: float = 1e-5, check_rtol: float = 1e-4
                   ) -> StepLinearization:
    """Central-difference Jacobians of the step map with a two-step check."""

    def fmap(x, v_shift=0.0):
        shifted = DiscreteImpulse(impulse.v_ff + v_shift, impulse.gain,
                                  impulse.x_ref)
        return step_map(x, shifted, controls, p, rtol=1e-12, event_tol=1e-13)

    def jacobians(eps):
        a = np.zeros((4, 4))
        x_star_ = np.asarray(x_star, float)
        for j in range(4):
            e = np.zeros(4)
            e[j] = eps
            a[:, j] = (fmap(x_star_ + e) - fmap(x_star_ - e)) / (2 * eps)
        b = (fmap(x_star_, eps) - fmap(x_star_, -eps)) / (2 * eps)
        return a, b

    a1, b1 = jacobians(fd_step)
    a2, b2 = jacobians(check_step)
    scale = max(np.linalg.norm(a1), 1e-12)
    dev = max(np.linalg.norm(a1 - a2), np.linalg.norm(b1 - b2)) / scale
    if dev > check_rtol:
        raise InfeasibleGait(
            f"step-map finite differences inconsistent (rel dev {dev:.2e})")
    return StepLinearization(a1, b1)


def spectral_radius(a) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(a, float)))))


def closed_loop_step_matrix(gait: GaitSpec) -> np.ndarray:
    """A + B_v K_ds at the gait fixed point (open-loop FD, gain composed)."""
    lin = step_jacobians(gait.x_star, gait.impulse_ff(), gait.tracking(),
                         gait.params)
    return lin.a + np.outer(lin.b_v, gait.k_ds)


def _ackermann(a: np.ndarray, b: np.ndarray, poles: Sequence[float]) -> np.ndarray:
    """Gain k with eig(a + b k) = poles for a controllable single-input pair."""
    n = a.shape[0]
    ctrb = np.column_stack([np.linalg.matrix_power(a, i) @ b for i in range(n)])
    coeffs = np.poly(np.asarray(poles))
    pa = np.zeros_like(a)
    for c in coeffs:
        pa = pa @ a + c * np.eye(n)
    e_n = np.zeros(n)
    e_n[-1] = 1.0
    return -(e_n @ np.linalg.solve(ctrb, pa))


def pole_placement(a, b_v, poles: Sequence[float],
                   sv_tol: float = 1e-10, match_tol: float = 1e-6,
                   place_tol: float = 1e-8) -> np.ndarray:
    """Row gain K with eig(A + B_v K) at the requested poles.

    Single-input Ackermann construction.  When the pair is rank deficient
    the placement is done on the controllable subspace; every
    uncontrollable mode must then coincide with one of the requested poles
    (the walker's touchdown map pins the leg length, which contributes a
    structural zero mode).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b_v, dtype=float).reshape(-1)
    n = a.shape[0]
    poles = list(np.asarray(poles, dtype=float))
    if len(poles) != n:
        raise ValueError("need one pole per state")
    if np.linalg.norm(b) == 0.0:
        raise Uncontrollable("input matrix is zero")
    ctrb = np.column_stack([np.linalg.matrix_power(a, i) @ b for i in range(n)])
    u, sv, _ = np.linalg.svd(ctrb)
    rank = int(np.sum(sv > sv_tol * sv[0]))
    if rank == n:
        k = _ackermann(a, b, poles)
    else:
        v, w = u[:, :rank], u[:, rank:]
        fixed = np.linalg.eigvals(w.T @ a @ w)
        remaining = poles.copy()
        for lam in fixed:
            dist = [abs(lam - pz) for pz in remaining]
            i = int(np.argmin(dist))
            if dist[i] > match_tol:
                raise Uncontrollable(
                    f"uncontrollable mode {lam:.3e} not among requested poles")
            remaining.pop(i)
        k_red = _ackermann(v.T @ a @ v, v.T @ b, remaining)
        k = k_red @ v.T
    achieved = np.sort_complex(np.linalg.eigvals(a + np.outer(b, k)))
    wanted = np.sort_complex(np.asarray(poles, dtype=complex))
    if np.max(np.abs(achieved - wanted)) > place_tol:
        raise Uncontrollable(
            f"pole placement error {np.max(np.abs(achieved - wanted)):.2e}")
    return k


def initial_shape(a_cl, eps: float = 1e-3, series_tol: float = 1e-14
                  ) -> np.ndarray:
    """Initial tube shape from a discrete Lyapunov series.

    With b = rho(A_cl) + eps, sums P = sum_k (A^T/b)^k (A/b)^k, normalizes
    to lambda_min(P) = 1, and returns the symmetric square root.  Any such
    P certifies one-step contraction at rate b in the induced norm; the
    scale slack is absorbed by the downstream bisection.
    """
    a = np.asarray(a_cl, dtype=float)
    rho = spectral_radius(a)
    if rho >= 1.0:
        raise SpectralRadiusTooLarge(f"rho(A_cl) = {rho:.4f} >= 1")
    ab = a / (rho + eps)
    p = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for _ in range(1_000_000):
        term = ab.T @ term @ ab
        p += term
        if np.linalg.norm(term, "fro") < series_tol:
            break
    else:
        raise SpectralRadiusTooLarge("Lyapunov series failed to converge")
    p /= np.linalg.eigvalsh(p)[0]
    evals, evecs = np.linalg.eigh(p)
    return (evecs * np.sqrt(evals)) @ evecs.T


# ---------------------------------------------------------------------------
# closed-loop system bundles for the verifier
# ---------------------------------------------------------------------------

_E3 = np.array([0.0, 0.0, 1.0, 0.0])


def make_embedding_system(p: WalkerParams, controls: TrackingControls,
                          corner_cap: int = 1 << 16) -> EmbeddingSystem:
    """Closed-loop transformed field plus its interval enclosures."""
    sym = get_symbolics(p)
    gain_row = np.outer(_E3 / p.m, controls.gain)

    def field(x, t):
        return transformed_dynamics(x, controls.u(x, t), p)

    def field_jacobian(x, t):
        return sym.field_jacobian(x) + gain_row

    def dcol(args, j):
        col = sym.field_jacobian_column_iv(args, j)
        if controls.gain[j] != 0.0:
            col[2] = col[2] + float(controls.gain[j]) / p.m
        return col

    def field_range(box, t):
        return sym.field_range_iv(box, controls.u_range(box, t))

    return EmbeddingSystem(4, field, field_jacobian,
                           columnwise_enclosure(dcol), field_range, corner_cap)


def make_hybrid_system(gait: GaitSpec, gain=None,
                       corner_cap: int = 1 << 16) -> HybridSystem:
    """Full closed-loop hybrid system for certification."""
    p = gait.params
    controls = gait.tracking(gain)
    impulse = gait.impulse()
    sym = get_symbolics(p)
    guard = transformed_guard(p)
    basis, anchor = guard.basis, guard.anchor
    k_ds_b = impulse.gain @ basis  # reset gain seen through the subspace

    def reset_cl(x):
        return transformed_reset(x, impulse.v(x), p)

    def reset_dcol_z(zargs, j):
        # x-box image of the mixed z-arguments (affine, exact per axis)
        xbox = []
        for i in range(4):
            acc = as_interval(float(anchor[i]))
            for l, ziv in enumerate(zargs):
                if basis[i, l] != 0.0:
                    acc = acc + float(basis[i, l]) * ziv
            xbox.append(acc)
        v_iv = impulse.v_range(xbox)
        col = [as_interval(0.0)] * 4
        for l in range(4):
            if basis[l, j] == 0.0:
                continue
            dcol = sym.reset_jacobian_column_iv(xbox, v_iv, l)
            col = [c + float(basis[l, j]) * d for c, d in zip(col, dcol)]
        if k_ds_b[j] != 0.0:
            dv = sym.reset_jacobian_v_iv(xbox, v_iv)
            col = [c + float(k_ds_b[j]) * d for c, d in zip(col, dv)]
        return col

    def residual(x):
        return float(np.linalg.norm(step_map(x, impulse, controls, p) - x))

    return HybridSystem(
        embedding=make_embedding_system(p, controls, corner_cap),
        guard=guard,
        reset=reset_cl,
        reset_enclosure_z=columnwise_enclosure(reset_dcol_z),
        fixed_point_residual=residual,
    )


# ---------------------------------------------------------------------------
# gait synthesis
# ---------------------------------------------------------------------------

@dataclass
class SynthesisSettings:
    """Shaping knobs for the single-shooting problem."""

    n_samples: int = 100
    dt: float = 0.0038
    step_angle: float = 0.12      # half-swing of theta around theta_h/2
    clearance: float = 0.005      # minimum interior foot height
    penalty_weights: tuple = (1e2, 1e4, 1e6)
    max_restarts: int = 4
    penalty_residual_tol: float = 1e-4
    polish_tol: float = 1e-8
    poles: tuple = (0.0, 0.1, 0.2, 0.3)
    xd_dt: float = 1e-3


def synthesize_gait(p: WalkerParams,
                    settings: SynthesisSettings | None = None) -> GaitSpec:
    """Produce a periodic gait, its impulse gain, and nominal references."""
    st = settings or SynthesisSettings()
    guard = transformed_guard(p)
    a_g, b_g = guard.a, guard.b
    n, dt = st.n_samples, st.dt
    x2_target = np.tan(p.theta_h / 2 - st.step_angle)

    def rollout(x0, uu):
        xs = np.empty((n + 1, 4))
        xs[0] = x0
        x = x0
        for i in range(n):
            x = x + dt * transformed_dynamics(x, uu[i], p)
            xs[i + 1] = x
        return xs

    def constraint_terms(z):
        x0, uu, v = z[:4], z[4:4 + n], z[4 + n]
        xs = rollout(x0, uu)
        per = transformed_reset(xs[-1], v, p) - x0
        h_terminal = float(a_g @ xs[-1] + b_g)
        pin = float(x0[1] - x2_target)
        hs = xs[:-1] @ a_g + b_g
        h_viol = np.maximum(0.0, st.clearance - hs)
        r_viol = np.maximum(0.0, p.r0 - xs[:, 0])
        return xs, per, h_terminal, pin, h_viol, r_viol

    def objective(z, w):
        x0, uu = z[:4], z[4:4 + n]
        _, per, h_term, pin, h_viol, r_viol = constraint_terms(z)
        cost = float(np.sum(uu**2)) * dt
        pen = (float(per @ per) + h_term**2 + pin**2
               + float(h_viol @ h_viol) + float(r_viol @ r_viol))
        return cost + w * pen

    def max_residual(z):
        _, per, h_term, pin, h_viol, r_viol = constraint_terms(z)
        return max(np.abs(per).max(), abs(h_term), abs(pin),
                   h_viol.max(initial=0.0), r_viol.max(initial=0.0))

    theta0 = p.theta_h / 2 - st.step_angle
    horizon = n * dt
    seed_state = np.array([p.r0, np.tan(theta0), 0.3,
                           2 * st.step_angle / horizon / np.cos(theta0)**2])
    z = np.concatenate([seed_state,
                        np.full(n, p.m * p.g * np.cos(p.theta_h / 2)), [1.0]])
    opts = dict(maxiter=20000, maxcor=50, ftol=1e-16, gtol=1e-14)
    for w in st.penalty_weights:
        z = minimize(objective, z, args=(w,), method="L-BFGS-B",
                     options=opts).x
    restarts = 0
    while max_residual(z) > st.penalty_residual_tol:
        if restarts >= st.max_restarts:
            raise InfeasibleGait(
                f"penalty residual stalled at {max_residual(z):.2e}")
        z = minimize(objective, z, args=(st.penalty_weights[-1],),
                     method="L-BFGS-B", options=opts).x
        restarts += 1

    x0, uu, v_ff = z[:4].copy(), z[4:4 + n].copy(), float(z[4 + n])
    u_grid = np.arange(n) * dt
    seed_controls = TrackingControls(u_grid, uu, np.array([0.0, horizon]),
                                     np.vstack([x0, x0]), np.zeros(4))
    ff_impulse = DiscreteImpulse(v_ff, np.zeros(4), x0)

    # damped Newton on the true event-detected residual
    x = x0.copy()
    residual = np.inf
    for _ in range(60):
        fx = step_map(x, ff_impulse, seed_controls, p, rtol=1e-12,
                      event_tol=1e-13)
        rv = fx - x
        residual = float(np.linalg.norm(rv))
        if residual < st.polish_tol:
            break
        jac = np.zeros((4, 4))
        eps = 1e-6
        for j in range(4):
            e = np.zeros(4)
            e[j] = eps
            jac[:, j] = (step_map(x + e, ff_impulse, seed_controls, p,
                                  rtol=1e-12, event_tol=1e-13)
                         - step_map(x - e, ff_impulse, seed_controls, p,
                                    rtol=1e-12, event_tol=1e-13)) / (2 * eps)
        dx = np.linalg.solve(jac - np.eye(4), -rv)
        lam = 1.0
        for _ in range(25):
            try:
                f_try = step_map(x + lam * dx, ff_impulse, seed_controls,
                                 p, rtol=1e-12, event_tol=1e-13)
                if np.linalg.norm(f_try - (x + lam * dx)) < residual:
                    break
            except (NoImpact, NonTransversalCrossing):
                pass
            lam *= 0.5
        x = x + lam * dx
    if not residual < st.polish_tol:
        raise InfeasibleGait(f"fixed-point polish stalled at {residual:.2e}")
    x_star = x

    # nominal references from the polished orbit
    x_minus, period, sol = simulate_step(x_star, seed_controls, p, rtol=1e-12)
    n_xd = max(int(np.ceil(period / st.xd_dt)), 2)
    xd_grid = np.linspace(0.0, period, n_xd + 1)
    xd_samples = sol.sol(xd_grid).T
    xd_samples[-1] = x_minus

    impulse = DiscreteImpulse(v_ff, np.zeros(4), x_minus)
    controls = TrackingControls(u_grid, uu, xd_grid, xd_samples, np.zeros(4))
    lin = step_jacobians(x_star, impulse, controls, p)
    k_ds = pole_placement(lin.a, lin.b_v, st.poles)

    gait = GaitSpec(params=p, x_star=x_star, period=period, u_grid=u_grid,
                    u_ff=uu, v_ff=v_ff, k_ds=k_ds, k_track=np.zeros(4),
                    xd_grid=xd_grid, xd_samples=xd_samples,
                    x_pre_impact=x_minus, residual=residual)
    closed_residual = float(np.linalg.norm(
        step_map(x_star, gait.impulse(), gait.tracking(), p, rtol=1e-12,
                 event_tol=1e-13) - x_star))
    gait.residual = max(residual, closed_residual)
    return gait


# ---------------------------------------------------------------------------
# bilevel tracking-gain design
# ---------------------------------------------------------------------------

@dataclass
class DesignRecord:
    outer: int
    inner: int
    phi: float
    accepted: bool
    grad_rel_dev: float
    eta: float


@dataclass
class DesignResult:
    gain: np.ndarray
    alpha: np.ndarray
    baseline_scale: float
    outer_scales: list[float]
    history: list[DesignRecord]
    certificate: VerificationResult

    @property
    def enlargement(self) -> float:
        return float(np.prod(self.outer_scales)) if self.outer_scales else 1.0


GRAD_CONSISTENCY_RTOL = 1e-3
MAX_ETA_HALVINGS = 4
DIVERGENCE_PATIENCE = 5


def design_tracking_gain(gait: GaitSpec, alpha0, eta: float = 0.5,
                         n_grad: int = 20, s_min: float = 1.01,
                         fd_step: float = 1e-4, s_tol: float = 1e-3,
                         vparams: VerifyParams | None = None,
                         corner_cap: int = 1 << 16,
                         max_outer: int = 12) -> DesignResult:
    """Bilevel loop: gradient descent on the certified reset gain, then
    rescale the tube; stop when rescaling gains a factor below s_min.

    The gradient is taken by central finite differences through the full
    verification pipeline with a two-step-size consistency check; steps
    that fail the check or increase the cost are skipped, and persistent
    increases halve the step size before giving up.
    """
    alpha0 = np.asarray(alpha0, dtype=float)
    x_star = gait.x_star
    vparams = vparams or VerifyParams()

    def phi(gain, alpha) -> float | None:
        system = make_hybrid_system(gait, gain, corner_cap)
        try:
            return verify_tube(system, x_star, alpha, vparams).gamma
        except Exception:
            return None

    def gradient(gain, alpha, step):
        g = np.zeros(4)
        for i in range(4):
            e = np.zeros(4)
            e[i] = step
            hi = phi(gain + e, alpha)
            lo = phi(gain - e, alpha)
            if hi is None or lo is None:
                return None
            g[i] = (hi - lo) / (2 * step)
        return g

    base_scale, cert = rescale_bisection(
        make_hybrid_system(gait, np.zeros(4), corner_cap), x_star, alpha0,
        s_tol, vparams)
    alpha = alpha0 / base_scale
    gain = np.zeros(4)
    history: list[DesignRecord] = []
    outer_scales: list[float] = []

    for outer in range(max_outer):
        phi_cur = phi(gain, alpha)
        if phi_cur is None:
            raise DivergentDescent("cost undefined at the current gain")
        eta_cur = eta
        halvings = 0
        rejects = 0
        for inner in range(n_grad):
            step = fd_step
            grad = None
            rel_dev = np.inf
            for _ in range(3):
                g1 = gradient(gain, alpha, step)
                g2 = gradient(gain, alpha, 2 * step)
                if g1 is not None and g2 is not None:
                    rel_dev = float(np.linalg.norm(g1 - g2)
                                    / max(np.linalg.norm(g1), 1e-12))
                    if rel_dev <= GRAD_CONSISTENCY_RTOL:
                        grad = g1
                        break
                step *= 0.5
            if grad is None:
                history.append(DesignRecord(outer, inner, phi_cur, False,
                                            rel_dev, eta_cur))
                continue
            candidate = gain - eta_cur * grad
            phi_new = phi(candidate, alpha)
            if phi_new is not None and phi_new <= phi_cur:
                gain, phi_cur = candidate, phi_new
                rejects = 0
                history.append(DesignRecord(outer, inner, phi_cur, True,
                                            rel_dev, eta_cur))
            else:
                rejects += 1
                history.append(DesignRecord(
                    outer, inner, phi_new if phi_new is not None else np.inf,
                    False, rel_dev, eta_cur))
                if rejects >= DIVERGENCE_PATIENCE:
                    halvings += 1
                    if halvings > MAX_ETA_HALVINGS:
                        raise DivergentDescent(
                            "cost kept increasing after max step halvings")
                    eta_cur *= 0.5
                    rejects = 0
        s, cert = rescale_bisection(
            make_hybrid_system(gait, gain, corner_cap), x_star, alpha,
            s_tol, vparams)
        outer_scales.append(s)
        alpha = alpha / s
        if s <= s_min:
            break
    return DesignResult(gain, alpha, base_scale, outer_scales, history, cert)
