"""Causal single-resonance dielectric model and its time-domain kernels.

Conventions: the Laplace variable is ``s`` with temporal factor ``exp(s t)``
and ``chi(omega) = chi_tilde(i omega)``.  Absorption therefore shows up as
``Im chi(omega) <= 0`` for ``omega > 0`` and the Lorentz denominator carries
``+i gamma omega``.
"""
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .constants import SI, Units


@dataclass(frozen=True)
class LorentzModel:
    """Lorentz oscillator susceptibility

        chi(omega) = omega_p**2 / (omega_0**2 - omega**2 + 1j*gamma*omega)

    All three rates are in rad/s.  The model must be strictly lossy and
    underdamped.
    """

    omega_p: float
    omega_0: float
    gamma: float

    def __post_init__(self):
        for name in ("omega_p", "omega_0", "gamma"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                if name == "gamma":
                    raise ValueError("gamma must be > 0 (strictly lossy required)")
                raise ValueError(f"{name} must be > 0, got {v}")
        if self.gamma >= 2.0 * self.omega_0:
            raise ValueError("gamma must be < 2*omega_0 (underdamped model)")

    @property
    def omega_d(self) -> float:
        return np.sqrt(self.omega_0 ** 2 - 0.25 * self.gamma ** 2)

    @property
    def chi_static(self) -> float:
        return self.omega_p ** 2 / self.omega_0 ** 2


@dataclass(frozen=True)
class ThermalReservoir:
    T0: float

    def __post_init__(self):
        if not self.T0 >= 0:
            raise ValueError(f"T0 must be >= 0, got {self.T0}")


def chi(model, omega):
    omega = np.asarray(omega, dtype=float)
    return model.omega_p ** 2 / (model.omega_0 ** 2 - omega ** 2 + 1j * model.gamma * omega)


def chi_tilde(model, s):
    """Laplace-domain susceptibility, valid for ``Re s >= 0``."""
    s = np.asarray(s, dtype=complex)
    if np.any(s.real < 0):
        raise ValueError("chi_tilde requires Re s >= 0")
    return model.omega_p ** 2 / (s * s + model.gamma * s + model.omega_0 ** 2)


def inverse_chi_tilde(model, s):
    """``1/chi_tilde(s)``; a polynomial, so it is evaluated without division."""
    s = np.asarray(s, dtype=complex)
    return (s * s + model.gamma * s + model.omega_0 ** 2) / model.omega_p ** 2


def sigma(model, nu, units: Units = SI):
    nu = np.asarray(nu, dtype=float)
    if np.any(nu < 0):
        raise ValueError("sigma is defined for nu >= 0")
    return -units.eps0 * nu * chi(model, nu).imag


def alpha(model, nu, units: Units = SI):
    return np.sqrt(2.0 * sigma(model, nu, units) / np.pi)


def h_chi(model, t):
    """Impulse response of ``chi``: ``(wp^2/wd) exp(-gamma t/2) sin(wd t)`` for t >= 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("h_chi is evaluated for t >= 0 only")
    wd = model.omega_d
    return model.omega_p ** 2 / wd * np.exp(-0.5 * model.gamma * t) * np.sin(wd * t)


def h_chi_numeric(model, t, omega_max, n_omega=2 ** 18):
    """``h_chi`` by direct inverse Fourier transform of ``chi(omega)``.

    Uses a midpoint rule on ``[-omega_max, omega_max]``; independent of the
    closed form and used to check it.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    dw = 2.0 * omega_max / n_omega
    w = -omega_max + dw * (np.arange(n_omega) + 0.5)
    x = chi(model, w)
    out = np.empty(t.shape)
    for i, ti in enumerate(t):
        out[i] = (np.sum(x * np.exp(1j * w * ti)) * dw / (2.0 * np.pi)).real
    return out


def _derivatives(f, dt):
    """First and second time derivatives on a uniform grid.

    Central differences inside, second-order one-sided closures at the ends.
    """
    n = f.shape[0]
    d1 = np.empty_like(f)
    d2 = np.empty_like(f)
    d1[1:-1] = (f[2:] - f[:-2]) / (2.0 * dt)
    d1[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dt)
    d1[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * dt)
    d2[1:-1] = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / dt ** 2
    if n >= 4:
        d2[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / dt ** 2
        d2[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / dt ** 2
    else:
        d2[0] = d2[1]
        d2[-1] = d2[-2]
    return d1, d2


def h_eta_convolve(model, samples, dt):
    """Apply the inverse-susceptibility kernel to a sampled signal.

    For the Lorentz model the kernel is the differential operator
    ``(f'' + gamma f' + omega_0^2 f) / omega_p^2``; time is the leading axis
    of ``samples`` and the grid starts at t = 0.
    """
    f = np.asarray(samples)
    if f.shape[0] < 3:
        raise ValueError("h_eta_convolve needs at least 3 samples")
    d1, d2 = _derivatives(f, dt)
    return (d2 + model.gamma * d1 + model.omega_0 ** 2 * f) / model.omega_p ** 2


def h_chi_convolve(model, samples, dt):
    """Causal convolution ``int_0^t h_chi(t-tau) f(tau) dtau`` by the trapezoid rule."""
    f = np.asarray(samples)
    n = f.shape[0]
    h = h_chi(model, dt * np.arange(n))
    out = np.zeros(f.shape, dtype=np.result_type(f, float))
    tail = (slice(None),) + (None,) * (f.ndim - 1)
    for k in range(1, n):
        w = h[k::-1][tail] * f[: k + 1]
        out[k] = dt * (w.sum(axis=0) - 0.5 * (w[0] + w[-1]))
    return out


def kramers_kronig_real(model, omega, units: Units = SI, nu_max=None):
    """Real part of ``chi`` rebuilt from the loss spectrum.

    ``Re chi(w) = (1/eps0) PV int_0^inf alpha_nu^2 / (nu^2 - w^2) dnu``,
    evaluated with adaptive Cauchy-weighted quadrature.
    """
    if nu_max is None:
        nu_max = 200.0 * max(model.omega_0, model.omega_p)

    def weight(nu):
        return alpha(model, nu, units) ** 2 / units.eps0

    out = []
    for w in np.atleast_1d(omega):
        # 1/(nu^2 - w^2) = [1/(nu + w)] / (nu - w)
        pv, _ = integrate.quad(lambda nu: weight(nu) / (nu + w), 0.0, nu_max,
                               weight="cauchy", wvar=w, limit=400)
        tail, _ = integrate.quad(lambda nu: weight(nu) / (nu * nu - w * w),
                                 nu_max, np.inf, limit=200)
        out.append(pv + tail)
    return np.array(out)


def bose_occupation(res: ThermalReservoir, nu, units: Units = SI):
    nu = np.asarray(nu, dtype=float)
    if np.any(nu <= 0):
        raise ValueError("bose_occupation requires nu > 0")
    if res.T0 == 0:
        return np.zeros(nu.shape)
    x = units.hbar * nu / (units.kB * res.T0)
    with np.errstate(over="ignore"):
        return 1.0 / np.expm1(x)
