"""Electric and magnetic coefficient fields rebuilt from polarization histories.

``E = L{p} + free part`` and ``B = mu0 curl int pdot(t')/(4 pi R) dV + free
part``.  The free part is the incident plane wave for radiation drivings
and the retarded-difference surface field ``N_m`` for matter drivings.
"""
import csv
from dataclasses import dataclass

import numpy as np

from .assembly import (_facet_points, _facet_quadrature, apply_L_time, curl_terms,
                       evaluate_terms, operator_terms)
from .constants import FOUR_PI, SI, Units
from .geometry import uniform_matter_basis
from .greens import rect_potential_gradient
from .solver import matter_amplitude

CLEARANCE = 0.1


@dataclass(frozen=True, eq=False)
class ObservationGrid:
    points: np.ndarray
    times: np.ndarray
    inside: np.ndarray

    @property
    def n_points(self):
        return len(self.points)


def observation_grid(mesh, points, times):
    """Validated grid; points must keep ``h/10`` away from centroids and facet centroids."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if pts.shape[1] != 3:
        raise ValueError("observation points must be 3-vectors")
    if np.any(times < 0):
        raise ValueError("observation times must be >= 0")
    lim = CLEARANCE * mesh.h
    for name, ref in (("voxel centroid", mesh.centroids), ("facet centroid", mesh.facet_centroids)):
        d = np.linalg.norm(pts[:, None, :] - ref[None], axis=-1).min(axis=1)
        bad = np.nonzero(d < lim)[0]
        if len(bad):
            raise ValueError(f"observation point {bad[0]} lies within h/10 of a {name}")
    g = (pts - mesh.origin) / mesh.h
    idx = np.rint(g).astype(np.int64)
    occupied = {tuple(v) for v in mesh.index}
    inside = np.array([tuple(v) in occupied and np.all(np.abs(gg - v) < 0.5)
                       for v, gg in zip(idx, g)])
    return ObservationGrid(pts, times, inside)


@dataclass(frozen=True, eq=False)
class FieldCoefficient:
    label: str
    grid: ObservationGrid
    E: np.ndarray
    B: np.ndarray = None


def _min_max_facet_distance(mesh, points):
    """Nearest and farthest distance from each point to each facet square."""
    half = 0.5 * mesh.h
    d = points[:, None, :] - mesh.facet_centroids[None]
    F = mesh.n_facets
    fi = np.arange(F)
    ax = mesh.facet_axis
    lo = np.abs(d).copy()
    hi = np.abs(d).copy()
    for k in (1, 2):
        a = (ax + k) % 3
        lo[:, fi, a] = np.maximum(np.abs(d[:, fi, a]) - half, 0.0)
        hi[:, fi, a] = np.abs(d[:, fi, a]) + half
    return np.linalg.norm(lo, axis=-1), np.linalg.norm(hi, axis=-1)


def free_N_m(U, mesh, points, t, units: Units = SI, order=8):
    """Surface field of a frozen polarization ``U`` outside the light cone.

    ``(1/eps0) sum_f (U.n) int_f u / (4 pi R^2) [t < R/c0] dS``.  Facets not
    yet reached use the exact static rectangle integral, facets crossed by
    the light front a Gauss rule; reached facets contribute nothing.
    Returns (T, P, 3).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("free_N_m is defined for t >= 0")
    c = units.c0
    sig = np.einsum("fa,fa->f", mesh.facet_normals, np.asarray(U)[mesh.facet_owner])
    rmin, rmax = _min_max_facet_distance(mesh, pts)
    # the static gradient of the potential is minus the field
    static = -rect_potential_gradient(pts, mesh.facet_centroids, mesh.facet_axis, 0.5 * mesh.h)
    qp, qw = _facet_points(mesh, order)
    out = np.zeros((len(t), len(pts), 3), dtype=complex)
    for k, tk in enumerate(t):
        front = c * tk
        cold = rmin > front
        out[k] = np.einsum("pfa,f,pf->pa", static, sig, cold)
        pi, fj = np.nonzero(~cold & (rmax > front))
        if len(pi):
            r = pts[pi][:, None, :] - qp[fj]
            R = np.linalg.norm(r, axis=-1)
            wgt = qw[None] * (R > front) / (FOUR_PI * R ** 3)
            contrib = np.einsum("kq,kqa->ka", wgt, r) * sig[fj][:, None]
            np.add.at(out[k], pi, contrib)
    return out / units.eps0


def free_N_m_laplace(U, mesh, points, s, units: Units = SI):
    """Laplace image of ``free_N_m`` on the same Gauss rule as the field tables."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    sig = np.einsum("fa,fa->f", mesh.facet_normals, np.asarray(U)[mesh.facet_owner])
    o, f, r, w = _facet_quadrature(mesh, pts, adaptive=True)
    R = np.linalg.norm(r, axis=-1)
    tau = R / units.c0
    shape = (1 - np.exp(-s * tau)) / s if s != 0 else tau
    contrib = ((w * sig[f] * shape) / (FOUR_PI * R ** 3))[:, None] * r
    out = np.zeros((len(pts), 3), dtype=complex)
    np.add.at(out, o, contrib)
    return out / units.eps0


def _free_field(result, mesh, model, points, t, units, basis):
    spec = result.spec
    if spec.kind == "radiation":
        return spec.mode.e_free(points, t)
    if spec.kind == "matter":
        U = basis.vectors[spec.m]
        return matter_amplitude(model, spec.nu, units) * free_N_m(U, mesh, points, t, units)
    return np.zeros((len(t), len(points), 3), dtype=complex)


def efield_coefficient(result, grid, mesh, model, units: Units = SI, basis=None, terms=None):
    """``E = L{p} + free part`` on the grid; (T, P, 3)."""
    if basis is None:
        basis = uniform_matter_basis(mesh)
    if terms is None:
        terms = operator_terms(mesh, units, grid.points)
    E = apply_L_time(result.history, mesh, grid.points, grid.times, units, terms)
    return E + _free_field(result, mesh, model, grid.points, grid.times, units, basis)


def bfield_coefficient(result, grid, mesh, units: Units = SI, terms=None):
    """Retarded current field plus, for radiation drivings, ``k x e_mu / w_mu``."""
    hist = result.history
    if np.any(grid.times > hist.t_end * (1 + 1e-12)):
        raise ValueError("requested time beyond the stored history")
    if terms is None:
        terms = curl_terms(mesh, grid.points, units)
    B = evaluate_terms(terms, hist, grid.times)
    if result.spec.kind == "radiation":
        B = B + result.spec.mode.b_free(grid.points, grid.times)
    return B


def field_coefficient(result, grid, mesh, model, units: Units = SI, basis=None):
    E = efield_coefficient(result, grid, mesh, model, units, basis)
    B = bfield_coefficient(result, grid, mesh, units)
    return FieldCoefficient(result.spec.label, grid, E, B)


def scattered_efield_laplace(s, P_hat, mesh, points, units: Units = SI, p0=None, terms=None):
    """Frequency-route ``L{p}`` at field points from the transform ``P_hat`` (N, 3)."""
    if terms is None:
        terms = operator_terms(mesh, units, points)
    return terms.apply_laplace(s, P_hat, p0) / units.eps0


def write_field_csv(path, coeff: FieldCoefficient):
    E = coeff.E
    B = coeff.B if coeff.B is not None else np.zeros_like(E)
    cols = ["t", "x", "y", "z"]
    for name in ("E", "B"):
        for a in "xyz":
            cols += [f"Re{name}{a}", f"Im{name}{a}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for k, t in enumerate(coeff.grid.times):
            for p, x in enumerate(coeff.grid.points):
                vals = [v for c in (*E[k, p], *B[k, p]) for v in (c.real, c.imag)]
                w.writerow([repr(float(t))] + [repr(float(v)) for v in x] + [repr(float(v)) for v in vals])
