"""Photodetection single counting rates for a thermal (x) one-photon initial state.

The rate splits into a coherent radiation part ``|sum_mu w_mu b_mu E_mu|^2``
and an incoherent matter part ``int rho_nu sum_m |E_{m,nu}|^2 dnu``; the
mixed terms vanish for a factorized initial state.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .dispersion import ThermalReservoir, bose_occupation, sigma
from .geometry import plane_wave_mode
from .constants import SI, Units

NORM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class InitialState:
    """Reservoir temperature plus a weighted one-photon mode set.

    An empty mode set is the radiation vacuum.
    """

    reservoir: ThermalReservoir
    modes: tuple = ()
    amplitudes: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "amplitudes", np.asarray(self.amplitudes, dtype=complex).reshape(-1))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float).reshape(-1))
        if not len(self.modes) == len(self.amplitudes) == len(self.weights):
            raise ValueError("modes, amplitudes and weights must have equal length")
        if np.any(self.weights <= 0):
            raise ValueError("mode weights must be > 0")
        if self.modes and abs(self.norm() - 1.0) > NORM_TOL:
            raise ValueError(f"one-photon state not normalized: sum w|b|^2 = {self.norm():.15g}")

    def norm(self):
        return float(np.sum(self.weights * np.abs(self.amplitudes) ** 2))

    @property
    def is_vacuum(self):
        return len(self.modes) == 0


def gaussian_wavepacket(reservoir, k0, s_pol, width, n_modes=16, units: Units = SI):
    """One-photon packet along ``k0`` with a Gaussian spectrum in ``|k|``.

    Gauss-Hermite nodes in ``|k|`` give weights that normalize the packet
    to rounding error.
    """
    k0 = np.asarray(k0, dtype=float)
    kn = np.linalg.norm(k0)
    if not width > 0 or width * 6 > kn:
        raise ValueError("packet width must be > 0 and below |k0|/6")
    x, W = np.polynomial.hermite.hermgauss(n_modes)
    k = kn + np.sqrt(2.0) * width * x
    dens = np.exp(-0.5 * ((k - kn) / width) ** 2) / (width * np.sqrt(2 * np.pi))
    wk = W * np.sqrt(2.0) * width * np.exp(x * x)
    b = np.sqrt(dens)
    # renormalize the rounding error away
    b /= np.sqrt(np.sum(wk * b * b))
    modes = [plane_wave_mode(k0 / kn * kj, s_pol, units) for kj in k]
    return InitialState(reservoir, modes, b, wk)


@dataclass(frozen=True, eq=False)
class CountingRateMap:
    w_rad: np.ndarray
    w_mat: np.ndarray
    w_total: np.ndarray

    def __post_init__(self):
        for name in ("w_rad", "w_mat", "w_total"):
            v = getattr(self, name)
            if np.any(v < 0) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be finite and non-negative")
        if not np.array_equal(self.w_total, self.w_rad + self.w_mat):
            raise ValueError("w_total must equal w_rad + w_mat")


def counting_rate_rad(state: InitialState, coefficients, shape):
    """``|sum_mu w_mu b_mu E_mu|^2``; ``coefficients`` holds one (T, P, 3) array per mode."""
    if state.is_vacuum:
        return np.zeros(shape)
    if coefficients is None or len(coefficients) != len(state.modes):
        raise ValueError("need one field coefficient per photon mode")
    tot = np.zeros(tuple(shape) + (3,), dtype=complex)
    for w, b, E in zip(state.weights, state.amplitudes, coefficients):
        E = np.asarray(E)
        if E.shape != tot.shape:
            raise ValueError("coefficient grid does not match the observation grid")
        tot += w * b * E
    return np.sum(np.abs(tot) ** 2, axis=-1)


def _nu_proxy(model, reservoir, nu, units):
    """``rho_nu sigma(nu) / nu``: the nu-dependence carried by ``|E_nu|^2``."""
    return bose_occupation(reservoir, nu, units) * sigma(model, nu, units) / nu


def _composite_rule(breaks, per_panel):
    x, w = np.polynomial.legendre.leggauss(per_panel)
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        half = 0.5 * (b - a)
        nodes.append(a + half * (x + 1))
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


@dataclass(frozen=True)
class NuGrid:
    """Composite Gauss-Legendre rule on ``[lo, hi]`` split at ``breaks``."""

    nodes: np.ndarray
    weights: np.ndarray
    lo: float
    hi: float
    truncation: float
    breaks: tuple = ()
    per_panel: int = 0

    def refined(self, factor=2):
        n = self.per_panel * factor
        x, w = _composite_rule(self.breaks, n)
        return NuGrid(x, w, self.lo, self.hi, self.truncation, self.breaks, n)


def _panel_breaks(model, lo, hi, max_panels=6):
    """Panels graded geometrically away from the resonance.

    The oscillator weight has poles ``gamma/2`` off the real axis at
    ``omega_0``; panels of length proportional to their distance from it
    keep the Gauss-Legendre convergence rate uniform.  No panel is longer
    than ``(hi - lo) / max_panels``.
    """
    g = max(model.gamma, 1e-3 * model.omega_0)
    w0 = model.omega_0
    cap = (hi - lo) / max_panels
    pts = [w0] if lo < w0 < hi else []
    for side in (-1, 1):
        d, x = 0.5 * g, w0
        while True:
            step = min(d, cap)
            x = x + side * step
            if not lo < x < hi:
                break
            pts.append(x)
            d *= 2
    pts = np.array(sorted(set(pts) | {lo, hi}))
    # drop slivers next to the ends
    keep = [pts[0]]
    for p in pts[1:]:
        if p - keep[-1] > 0.25 * g:
            keep.append(p)
    keep[-1] = hi
    return tuple(float(p) for p in keep)


def nu_grid(model, reservoir, units: Units = SI, n_nodes=32, threshold=1e-6, max_truncation=1e-2):
    """Gauss-Legendre nodes on the band where ``rho sigma`` exceeds ``threshold`` of its peak.

    The band is cut into panels around the oscillator resonance;
    ``n_nodes`` is spread evenly over them (rounded up).  The truncation
    estimate is the share of ``int rho sigma / nu`` outside the band; above
    ``max_truncation`` the grid is rejected.
    """
    if reservoir.T0 == 0:
        return NuGrid(np.zeros(0), np.zeros(0), 0.0, 0.0, 0.0)
    top = 50.0 * max(model.omega_0, model.omega_p, units.kB * reservoir.T0 / units.hbar)
    probe = np.geomspace(top * 1e-9, top, 20001)
    g = bose_occupation(reservoir, probe, units) * sigma(model, probe, units)
    keep = np.nonzero(g > threshold * g.max())[0]
    lo, hi = probe[keep[0]], probe[keep[-1]]

    def f(nu):
        return _nu_proxy(model, reservoir, nu, units) if nu > 0 else 0.0

    brk = [p for p in (model.omega_0,) if lo < p < hi]
    inner = integrate.quad(f, lo, hi, points=brk or None, limit=400)[0]
    outer = integrate.quad(f, 0.0, lo, limit=200)[0] + integrate.quad(f, hi, np.inf, limit=200)[0]
    trunc = outer / (inner + outer) if inner + outer > 0 else 0.0
    if trunc > max_truncation:
        raise ValueError(f"nu-grid truncation {trunc:.2%} exceeds {max_truncation:.0%}; lower the threshold")
    breaks = _panel_breaks(model, float(lo), float(hi))
    per = max(2, -(-n_nodes // (len(breaks) - 1)))
    x, w = _composite_rule(breaks, per)
    return NuGrid(x, w, float(lo), float(hi), float(trunc), breaks, per)


def counting_rate_mat(state: InitialState, model, grid: NuGrid, coefficients, shape, units: Units = SI):
    """``sum_nu w_nu rho_nu sum_m |E_{m,nu}|^2``.

    ``coefficients[k]`` is the stack (M, T, P, 3) of matter coefficients at
    node ``grid.nodes[k]``; the reservoir weight is already inside them.
    """
    out = np.zeros(shape)
    if state.reservoir.T0 == 0 or len(grid.nodes) == 0:
        return out
    if len(coefficients) != len(grid.nodes):
        raise ValueError("need one coefficient stack per nu node")
    rho = bose_occupation(state.reservoir, grid.nodes, units)
    for wk, rk, E in zip(grid.weights, rho, coefficients):
        out += wk * rk * np.sum(np.abs(np.asarray(E)) ** 2, axis=(0, -1))
    return out


def counting_rate_total(w_rad, w_mat):
    w_rad = np.asarray(w_rad, dtype=float)
    w_mat = np.asarray(w_mat, dtype=float)
    if w_rad.shape != w_mat.shape:
        raise ValueError("radiation and matter rates live on different grids")
    return CountingRateMap(w_rad, w_mat, w_rad + w_mat)
