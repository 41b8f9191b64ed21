"""Vacuum Green functions in the Laplace and time domains.

All routines broadcast over a leading stack of separation vectors ``r`` of
shape (..., 3) and take a scalar complex frequency ``s``.  Dyadics come back
with shape (..., 3, 3).  Distributional terms at ``r = 0`` are never
evaluated here; voxel self-integrals own them.
"""
from dataclasses import dataclass

import numpy as np

from .constants import FOUR_PI, SI, Units


def _dy(a):
    """Lift a scalar or stack of scalars to broadcast against 3x3 dyadics."""
    return np.asarray(a)[..., None, None]


def _split(r):
    r = np.asarray(r, dtype=float)
    R = np.linalg.norm(r, axis=-1)
    if np.any(R == 0):
        raise ValueError("Green functions are singular at r = 0")
    return R, r / R[..., None]


def scalar_G(r, s, units: Units = SI):
    R, _ = _split(r)
    return np.exp(-s * R / units.c0) / (FOUR_PI * R)


def grad_scalar_G(r, s, units: Units = SI):
    R, u = _split(r)
    G = np.exp(-s * R / units.c0) / (FOUR_PI * R)
    return np.asarray(-(s / units.c0 + 1.0 / R) * G)[..., None] * u


def hessian_scalar_G(r, s, units: Units = SI):
    """Analytic ``grad grad G`` off the origin."""
    R, u = _split(r)
    kap = s / units.c0
    G = np.exp(-kap * R) / (FOUR_PI * R)
    uu = u[..., :, None] * u[..., None, :]
    eye = np.eye(3)
    radial = (kap * kap + 2.0 * kap / R + 2.0 / R ** 2) * G
    trans = -(kap / R + 1.0 / R ** 2) * G
    return _dy(radial) * uu + _dy(trans) * (eye - uu)


def dyadic_G(r, s, units: Units = SI):
    """Retarded electric-field dyadic ``G I - (c0/s)^2 grad grad G``."""
    if s == 0:
        raise ValueError("dyadic_G has a 1/s^2 pole at s = 0; use the quasistatic kernels")
    R, u = _split(r)
    kap = s / units.c0
    G = np.exp(-kap * R) / (FOUR_PI * R)
    x = 1.0 / (kap * R)
    uu = u[..., :, None] * u[..., None, :]
    eye = np.eye(3)
    return _dy(G) * ((eye - uu) + _dy(x * (1.0 + x)) * (eye - 3.0 * uu))


def dyadic_G_long(r, s, units: Units = SI):
    if s == 0:
        raise ValueError("dyadic_G_long has a 1/s^2 pole at s = 0")
    R, u = _split(r)
    uu = u[..., :, None] * u[..., None, :]
    pref = (units.c0 / s) ** 2 / (FOUR_PI * R ** 3)
    return _dy(pref) * (np.eye(3) - 3.0 * uu)


def one_minus_1px_emx(x):
    """``1 - (1 + x) exp(-x)`` without cancellation for small |x|."""
    x = np.asarray(x, dtype=complex)
    out = np.asarray(1.0 - (1.0 + x) * np.exp(-x))
    small = np.abs(x) < 0.05
    if np.any(small):
        xs = x[small]
        acc = np.zeros_like(xs)
        term = np.ones_like(xs)  # x^n / n!
        for n in range(1, 16):
            term = term * xs / n
            if n >= 2:
                acc += (-1) ** n * (n - 1) * term
        out[small] = acc
    return out if out.ndim else out[()]


def dyadic_G_perp(r, s, units: Units = SI):
    """Transverse part; regular as ``s -> 0`` (the 1/s^2 poles cancel)."""
    R, u = _split(r)
    kap = s / units.c0
    x = kap * R
    G = np.exp(-x) / (FOUR_PI * R)
    uu = u[..., :, None] * u[..., None, :]
    eye = np.eye(3)
    # exp(-x) - (1 - exp(-x))/x == -(1 - (1+x) exp(-x)) / x
    if s == 0:
        bracket_over_x = -0.5 * np.ones_like(R)
    else:
        bracket_over_x = -one_minus_1px_emx(x) / x ** 2
    coef = bracket_over_x / (FOUR_PI * R)
    return _dy(G) * (eye - uu) + _dy(coef) * (eye - 3.0 * uu)


@dataclass(frozen=True)
class TimeGreen:
    """Retarded time-domain electric-field dyadic off the origin.

    ``impulse * delta(t - delay) + ramp(t)`` with
    ``ramp(t) = ramp_dyadic * u(t - delay) * [1 + (t - delay)/delay]``.
    """

    delay: float
    impulse: np.ndarray
    ramp_dyadic: np.ndarray

    def ramp(self, t):
        t = np.asarray(t, dtype=float)
        tt = t - self.delay
        w = np.where(tt >= 0, 1.0 + tt / self.delay, 0.0)
        return _dy(w) * self.ramp_dyadic


def g_time(r, units: Units = SI):
    R, u = _split(r)
    if np.ndim(R) != 0:
        raise ValueError("g_time takes a single separation vector")
    uu = np.outer(u, u)
    eye = np.eye(3)
    return TimeGreen(
        delay=float(R / units.c0),
        impulse=(eye - uu) / (FOUR_PI * R),
        ramp_dyadic=units.c0 * (eye - 3.0 * uu) / (FOUR_PI * R ** 2),
    )


def rect_potential_gradient(points, centers, axis, half):
    """Gradient of ``int_F dS' / (4 pi |r - r'|)`` over axis-aligned squares.

    ``points`` (P, 3) observation points, ``centers`` (F, 3) square centers,
    ``axis`` (F,) normal axis of each square, ``half`` its half edge length.
    Returns (P, F, 3).  Exact closed form; points must not lie on a square's
    edge line.
    """
    points = np.asarray(points, dtype=float)
    centers = np.asarray(centers, dtype=float)
    axis = np.asarray(axis)
    ua = (axis + 1) % 3
    va = (axis + 2) % 3
    F = len(centers)
    fi = np.arange(F)
    d = centers[None, :, :] - points[:, None, :]  # r' - r
    w = -d[:, fi, axis]  # r - r' along the normal
    cu = d[:, fi, ua]
    cv = d[:, fi, va]
    u_lim = (cu - half, cu + half)
    v_lim = (cv - half, cv + half)

    def log_term(v, U):
        # ln(v + sqrt(U^2 + v^2 + w^2)), stable for v < 0
        a2 = U * U + w * w
        Rr = np.sqrt(a2 + v * v)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(v >= 0, np.log(v + Rr), np.log(a2) - np.log(Rr - v))

    def f_of(U):
        return log_term(v_lim[1], U) - log_term(v_lim[0], U)

    def g_of(V):
        return log_term(u_lim[1], V) - log_term(u_lim[0], V)

    out = np.zeros(d.shape)
    # d/dr_u = f(U1) - f(U2): moving r shifts both limits down
    out[:, fi, ua] = (f_of(u_lim[0]) - f_of(u_lim[1])) / FOUR_PI
    out[:, fi, va] = (g_of(v_lim[0]) - g_of(v_lim[1])) / FOUR_PI
    solid = np.zeros(w.shape)
    for i, U in enumerate(u_lim):
        for j, V in enumerate(v_lim):
            sg = 1.0 if i == j else -1.0
            Rr = np.sqrt(U * U + V * V + w * w)
            solid += sg * np.arctan2(U * V * np.sign(w), np.abs(w) * Rr)
    # d/dw int 1/R = -int w/R^3 = -(signed solid angle)
    out[:, fi, axis] = -solid / FOUR_PI
    return out
