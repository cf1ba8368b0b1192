"""Planar telescoping-leg biped: dynamics, coordinate change, guard, reset.

Model: an inverted pendulum of mass m and controllable leg length r at
angle theta from vertical; the swing leg is rigid at length r0, held at a
fixed inter-leg angle theta_h.  A force u acts along the stance leg.  On
swing-foot touchdown all momentum along the swing leg is removed, a
controlled impulse v is applied along the old stance leg, and the legs are
relabeled.

State layouts (plain arrays):
    physical     s = [r, theta, rdot, thetadot]
    transformed  x = [r, tan(theta), rdot, thetadot / cos(theta)^2]
The transformed coordinates make the touchdown surface affine, which is
what the tube verifier needs.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy as sp

from . import intervals
from .errors import SingularAngle
from .intervals import Interval, as_interval
from .verify import AffineGuard


@dataclass(frozen=True)
class WalkerParams:
    """Physical constants (SI units)."""

    m: float = 1.0
    g: float = 9.81
    r0: float = 1.0
    theta_h: float = 0.5

    def __post_init__(self):
        if min(self.m, self.g, self.r0, self.theta_h) <= 0.0:
            raise ValueError("all parameters must be positive")
        if not self.theta_h < np.pi / 2:
            raise ValueError("inter-leg angle must be below pi/2")

    def key(self) -> tuple:
        return (self.m, self.g, self.r0, self.theta_h)


def dynamics(s, u: float, p: WalkerParams) -> np.ndarray:
    """Continuous stance dynamics in physical coordinates."""
    r, th, rd, thd = np.asarray(s, dtype=float)
    if r <= 0.0:
        raise ValueError("leg length must stay positive")
    rdd = r * thd**2 + u / p.m - p.g * np.cos(th)
    thdd = -(2.0 * rd * thd - p.g * np.sin(th)) / r
    return np.array([rd, thd, rdd, thdd])


def guard_h_physical(s, p: WalkerParams) -> float:
    """Swing-foot height; touchdown surface is its zero set."""
    r, th = float(s[0]), float(s[1])
    return r * np.cos(th) + p.r0 * np.cos(np.pi + p.theta_h - th)


def reset(s, v: float, p: WalkerParams) -> np.ndarray:
    """Touchdown map in physical coordinates.

    Inelastic collision (momentum along the swing leg removed), impulse v
    along the old stance leg, then relabeling; post-impact positions are
    fixed by the contact geometry.
    """
    r, th, rd, thd = np.asarray(s, dtype=float)
    beta = th - p.theta_h
    c = r * thd * np.cos(p.theta_h) + rd * np.sin(p.theta_h)
    w1 = v * np.sin(th) + c * np.cos(beta)
    w2 = v * np.cos(th) - c * np.sin(beta)
    rthd_plus = np.cos(th) * w1 + np.sin(th) * w2
    rd_plus = -np.sin(th) * w1 + np.cos(th) * w2
    return np.array([p.r0, p.theta_h - th, rd_plus, rthd_plus / p.r0])


def transform(s) -> np.ndarray:
    """Physical -> transformed coordinates; singular at |theta| = pi/2."""
    r, th, rd, thd = np.asarray(s, dtype=float)
    if not abs(th) < np.pi / 2:
        raise SingularAngle(f"|theta| = {abs(th):.4f} >= pi/2")
    c = np.cos(th)
    return np.array([r, np.tan(th), rd, thd / c**2])


def untransform(x) -> np.ndarray:
    """Transformed -> physical coordinates (total on R^4)."""
    x1, x2, x3, x4 = np.asarray(x, dtype=float)
    th = np.arctan(x2)
    return np.array([x1, th, x3, x4 * np.cos(th)**2])


def transformed_dynamics(x, u: float, p: WalkerParams) -> np.ndarray:
    """Stance dynamics pushed through the coordinate change (closed form)."""
    x1, x2, x3, x4 = np.asarray(x, dtype=float)
    q = 1.0 + x2 * x2
    s = np.sqrt(q)
    f3 = x1 * x4**2 / q**2 + u / p.m - p.g / s
    f4 = -(2.0 * x3 * x4 - p.g * x2 * s) / x1 + 2.0 * x2 * x4**2 / q
    return np.array([x3, x4, f3, f4])


def transformed_reset(x, v: float, p: WalkerParams) -> np.ndarray:
    """Touchdown map in transformed coordinates, by composition."""
    return transform(reset(untransform(x), v, p))


def transformed_guard(p: WalkerParams) -> AffineGuard:
    """Affine touchdown surface in transformed coordinates.

    Oriented so the affine function has the same sign as the physical
    swing-foot height (positive above the ground), i.e. the normal is the
    negative of the raw tangent-space gradient form.
    """
    a = np.array([1.0 / (p.r0 * np.sin(p.theta_h)), -1.0, 0.0, 0.0])
    b = -1.0 / np.tan(p.theta_h)
    return AffineGuard.from_normal(a, b)


# ---------------------------------------------------------------------------
# symbolic machinery: closed-form Jacobians evaluated in interval arithmetic
# ---------------------------------------------------------------------------

_IV_MODULE = {"sqrt": intervals.sqrt}


def _lambdify_iv(args, expr):
    return sp.lambdify(args, expr, modules=[_IV_MODULE, "math"], cse=True)


class WalkerSymbolics:
    """Lambdified exact Jacobians of the transformed field and reset.

    Field Jacobian entries are u-free (the force enters additively through
    the third component), so the same enclosures serve any state-feedback
    law on u by adding the feedback row separately.
    """

    def __init__(self, p: WalkerParams):
        self.params = p
        x1, x2, x3, x4, u, v = sp.symbols("x1 x2 x3 x4 u v", real=True)
        xs = (x1, x2, x3, x4)
        q = 1 + x2**2
        s = sp.sqrt(q)
        f = sp.Matrix([
            x3,
            x4,
            x1 * x4**2 / q**2 + u / p.m - p.g / s,
            -(2 * x3 * x4 - p.g * x2 * s) / x1 + 2 * x2 * x4**2 / q,
        ])
        jac = f.jacobian(sp.Matrix(xs))
        assert all(u not in jac[i, j].free_symbols
                   for i in range(4) for j in range(4))
        self._jac_point = sp.lambdify(xs, jac, modules="numpy", cse=True)
        self._jac_iv = [[_lambdify_iv(xs, jac[i, j]) for j in range(4)]
                        for i in range(4)]
        self._field_iv = [_lambdify_iv((*xs, u), f[i]) for i in range(4)]

        # touchdown map in transformed coordinates, written algebraically
        # (tan/sec identities substituted) so interval evaluation only
        # needs rational operations and one square root
        ch, sh = sp.cos(p.theta_h), sp.sin(p.theta_h)
        sin_t, cos_t = x2 / s, 1 / s
        thd = x4 / q
        c = x1 * thd * ch + x3 * sh
        cos_b = (ch + x2 * sh) / s
        sin_b = (x2 * ch - sh) / s
        w1 = v * sin_t + c * cos_b
        w2 = v * cos_t - c * sin_b
        rthd_plus = cos_t * w1 + sin_t * w2
        rd_plus = -sin_t * w1 + cos_t * w2
        t_plus = (sp.tan(p.theta_h) - x2) / (1 + x2 * sp.tan(p.theta_h))
        delta = sp.Matrix([p.r0, t_plus, rd_plus,
                           (rthd_plus / p.r0) * (1 + t_plus**2)])
        dxd = delta.jacobian(sp.Matrix(xs))
        dvd = delta.diff(v)
        self._reset_alg = sp.lambdify((*xs, v), delta, modules="numpy", cse=True)
        self._reset_jac_x_iv = [[_lambdify_iv((*xs, v), dxd[i, j])
                                 for j in range(4)] for i in range(4)]
        self._reset_jac_v_iv = [_lambdify_iv((*xs, v), dvd[i]) for i in range(4)]

    # -- float paths -----------------------------------------------------
    def field_jacobian(self, x) -> np.ndarray:
        return np.asarray(self._jac_point(*np.asarray(x, dtype=float)), float)

    def reset_algebraic(self, x, v: float) -> np.ndarray:
        out = self._reset_alg(*np.asarray(x, dtype=float), float(v))
        return np.asarray(out, dtype=float).reshape(-1)

    # -- interval paths --------------------------------------------------
    def field_jacobian_column_iv(self, args, j: int) -> list[Interval]:
        return [as_interval(self._jac_iv[i][j](*args)) for i in range(4)]

    def field_range_iv(self, args, u_iv) -> list[Interval]:
        return [as_interval(fi(*args, u_iv)) for fi in self._field_iv]

    def reset_jacobian_column_iv(self, args, v_iv, j: int) -> list[Interval]:
        return [as_interval(self._reset_jac_x_iv[i][j](*args, v_iv))
                for i in range(4)]

    def reset_jacobian_v_iv(self, args, v_iv) -> list[Interval]:
        return [as_interval(self._reset_jac_v_iv[i](*args, v_iv))
                for i in range(4)]


@lru_cache(maxsize=8)
def _symbolics_cached(key: tuple) -> WalkerSymbolics:
    return WalkerSymbolics(WalkerParams(*key))


def get_symbolics(p: WalkerParams) -> WalkerSymbolics:
    return _symbolics_cached(p.key())
