"""Discretized integral operator in the Laplace and time domains.

Unknowns are pulse-basis polarization samples ``P_j`` (one complex 3-vector
per voxel) flattened as ``3*j + axis``.  Rows are collocated at voxel
centroids.  The operator ``K = eps0 * L_s`` acts as

    (K P)_i = -(s/c0)^2 sum_j W_ij P_j - sum_f S_if (n_f . P_owner(f))

with ``W_ij`` the volume integral of ``G`` over voxel ``j`` and ``S_if`` the
gradient of the single-layer potential of facet ``f``.  The system matrix is
``A(s) = I/chi_tilde(s) - K(s)``.

Quadrature, shared by the frequency matrix and the time-domain evaluators:

* voxel pairs closer than ``2h``: 2x2x2 subcells, otherwise one point;
* the voxel's own cell: equivalent-volume sphere, closed form;
* facets: exact static rectangle integral plus a 2x2 Gauss rule for the
  smooth retarded remainder ``grad[G(s) - G(0)]``.

Every term is a delayed, differentiated copy of a source sample, so the
same rules expand into a table of ``(obs, src, order, delay, coef)``
entries: ``coef * s**order * exp(-s*delay)`` in the Laplace domain and
``coef * x^(order)(t - delay)`` in the time domain.
"""
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .constants import FOUR_PI, SI, Units
from .dispersion import inverse_chi_tilde
from .greens import one_minus_1px_emx, rect_potential_gradient

NEAR_FACTOR = 2.0
# pairs sitting exactly at the cutoff must land on the same side everywhere
_CUT_SLACK = 1e-6
_MAGIC = b"QVIEMAT1"


def equivalent_radius(h):
    return h * (3.0 / FOUR_PI) ** (1.0 / 3.0)


def _sphere_G_integral(h, s, units):
    """``int G dV`` over the equivalent sphere: ``(1 - (1+x)e^-x)/kappa^2``."""
    a = equivalent_radius(h)
    if s == 0:
        return 0.5 * a * a + 0j
    kap = s / units.c0
    return complex(one_minus_1px_emx(np.array([kap * a]))[0] / kap ** 2)


def self_term(h, s, units: Units = SI):
    """``-(s/c0)^2 int G dV`` over the equivalent sphere, as a dyadic.

    Equals ``((1 + x) exp(-x) - 1) I`` with ``x = s a / c0``; vanishes at
    ``s = 0``.  The static depolarization of the cell enters through its
    own boundary facets instead.
    """
    a = equivalent_radius(h)
    x = np.array([s * a / units.c0], dtype=complex)
    return -one_minus_1px_emx(x)[0] * np.eye(3)


def _subcell_offsets(h, m):
    g = (np.arange(m) + 0.5) / m - 0.5
    return h * np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)


def _gauss_square(h, m):
    """Tensor Gauss-Legendre points ``(q, 2)`` and weights on an ``h x h`` square."""
    x, w = np.polynomial.legendre.leggauss(m)
    x = 0.5 * h * x
    w = 0.5 * h * w
    pts = np.stack(np.meshgrid(x, x, indexing="ij"), -1).reshape(-1, 2)
    return pts, np.outer(w, w).ravel()


def _facet_points(mesh, m):
    """Gauss points ``(F, q, 3)`` and weights ``(q,)`` on every facet."""
    uv, w = _gauss_square(mesh.h, m)
    ax = mesh.facet_axis
    pts = np.repeat(mesh.facet_centroids[:, None, :], len(w), axis=1)
    fi = np.arange(mesh.n_facets)
    pts[fi, :, (ax + 1) % 3] += uv[None, :, 0]
    pts[fi, :, (ax + 2) % 3] += uv[None, :, 1]
    return pts, w


def _retarded_remainder(R, u, kap):
    """``grad[G(R; s) - G(R; 0)]`` along separation unit vector ``u``."""
    if kap == 0:
        return np.zeros(u.shape, dtype=complex)
    phi = one_minus_1px_emx(kap * R)
    return (phi / (FOUR_PI * R * R))[..., None] * u


@dataclass(eq=False)
class Discretization:
    """Quadrature data for one mesh, reusable across frequencies.

    The exact static facet gradients at the centroids are cached when they
    fit in ``cache_limit`` doubles.
    """

    mesh: object
    units: Units = SI
    facet_order: int = 2
    cache_limit: int = 20_000_000
    _static: np.ndarray = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.facet_pts, self.facet_w = _facet_points(self.mesh, self.facet_order)
        self.sub8 = _subcell_offsets(self.mesh.h, 2)
        inc = sparse.csr_matrix(
            (self.mesh.facet_sign.astype(float),
             (np.arange(self.mesh.n_facets), 3 * self.mesh.facet_owner + self.mesh.facet_axis)),
            shape=(self.mesh.n_facets, 3 * self.mesh.n_voxels))
        # column scatter of facet terms: facet f touches column 3*owner + axis
        self.incidence_T = inc.T.tocsr()

    @property
    def n(self):
        return self.mesh.n_voxels

    def static_facet_gradient(self, rows):
        m = self.mesh
        full = 3 * m.n_voxels * m.n_facets <= self.cache_limit
        if full and self._static is None:
            self._static = rect_potential_gradient(m.centroids, m.facet_centroids, m.facet_axis, 0.5 * m.h)
        if self._static is not None:
            return self._static[rows]
        return rect_potential_gradient(m.centroids[rows], m.facet_centroids, m.facet_axis, 0.5 * m.h)

    def volume_block(self, s, rows):
        """``W`` rows: ``int_{V_j} G(r_i - r'; s) dV'``; shape (len(rows), N)."""
        m = self.mesh
        h3 = m.voxel_volume
        kap = s / self.units.c0
        rows = np.asarray(rows)
        d = m.centroids[rows][:, None, :] - m.centroids[None, :, :]
        R = np.linalg.norm(d, axis=-1)
        selfmask = R == 0
        Rs = np.where(selfmask, 1.0, R)
        W = h3 * np.exp(-kap * Rs) / (FOUR_PI * Rs)
        near = (R < (NEAR_FACTOR - _CUT_SLACK) * m.h) & ~selfmask
        if np.any(near):
            dn = d[near][:, None, :] - self.sub8[None, :, :]
            Rn = np.linalg.norm(dn, axis=-1)
            W[near] = (h3 / len(self.sub8)) * np.sum(np.exp(-kap * Rn) / (FOUR_PI * Rn), axis=1)
        W[selfmask] = _sphere_G_integral(m.h, s, self.units)
        return W

    def facet_block(self, s, rows):
        """``S`` rows: ``grad_r int_f G(r_i - r'; s) dS'``; shape (len(rows), F, 3)."""
        m = self.mesh
        rows = np.asarray(rows)
        S = self.static_facet_gradient(rows).astype(complex)
        if s != 0:
            kap = s / self.units.c0
            d = m.centroids[rows][:, None, None, :] - self.facet_pts[None, :, :, :]
            R = np.linalg.norm(d, axis=-1)
            S += np.einsum("q,pfqa->pfa", self.facet_w, _retarded_remainder(R, d / R[..., None], kap))
        return S

    def k_rows(self, s, rows):
        """Rows ``3*i + a`` of the dense ``K(s) = eps0 L_s`` for a contiguous row range."""
        rows = np.asarray(rows)
        P = len(rows)
        N = self.n
        kap2 = (s / self.units.c0) ** 2
        out = np.zeros((P, 3, N, 3), dtype=complex)
        W = self.volume_block(s, rows)
        for a in range(3):
            out[:, a, :, a] = -kap2 * W
        S = self.facet_block(s, rows)
        C = S.transpose(0, 2, 1).reshape(3 * P, -1)
        out = out.reshape(3 * P, 3 * N)
        out -= (self.incidence_T @ C.T).T
        return out


@dataclass(frozen=True, eq=False)
class FrequencyOperator:
    s: complex
    A: np.ndarray
    fingerprint: str

    @property
    def n_voxels(self):
        return self.A.shape[0] // 3


def _chunks(n, size):
    for r0 in range(0, n, size):
        yield np.arange(r0, min(n, r0 + size))


def assemble_K(disc, s, chunk=256):
    n = disc.n
    K = np.empty((3 * n, 3 * n), dtype=complex)
    for rows in _chunks(n, chunk):
        K[3 * rows[0]: 3 * (rows[-1] + 1)] = disc.k_rows(s, rows)
    return K


def assemble(mesh, model, s, units: Units = SI, disc=None, chunk=256):
    """Dense ``A(s) = I/chi_tilde(s) - eps0 L_s`` on the pulse basis."""
    s = complex(s)
    if s.real < 0:
        raise ValueError("assembly requires Re s >= 0")
    if disc is None:
        disc = Discretization(mesh, units)
    elif disc.mesh is not mesh:
        raise ValueError("discretization belongs to a different mesh")
    n = mesh.n_voxels
    A = np.empty((3 * n, 3 * n), dtype=complex)
    eta = complex(inverse_chi_tilde(model, s))
    for rows in _chunks(n, chunk):
        sl = slice(3 * rows[0], 3 * (rows[-1] + 1))
        A[sl] = -disc.k_rows(s, rows)
        A[sl, sl] += eta * np.eye(3 * len(rows))
    return FrequencyOperator(s, A, mesh.fingerprint())


def write_matrix(path, op: FrequencyOperator, eps_reg):
    """Row-major complex128 dump behind a 32-byte little-endian header."""
    hdr = _MAGIC + struct.pack("<qdd", op.n_voxels, op.s.imag, float(eps_reg))
    with open(path, "wb") as fh:
        fh.write(hdr)
        fh.write(np.ascontiguousarray(op.A, dtype="<c16").tobytes())


def read_matrix(path, fingerprint=""):
    with open(path, "rb") as fh:
        hdr = fh.read(32)
        if len(hdr) != 32 or hdr[:8] != _MAGIC:
            raise ValueError(f"{path}: not a matrix dump")
        n, omega, eps = struct.unpack("<qdd", hdr[8:])
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != (3 * n) ** 2:
        raise ValueError(f"{path}: truncated matrix dump")
    return FrequencyOperator(complex(eps, omega), data.reshape(3 * n, 3 * n).copy(), fingerprint)


# ---------------------------------------------------------------- time domain

@dataclass(frozen=True, eq=False)
class DelayTerms:
    """Flat list of retarded interaction terms.

    Term ``k`` adds ``coef[k] @ x_src^(order)(t - delay)`` to observer
    ``obs[k]``.  The Laplace image is ``coef * s**order * exp(-s*delay)``.
    """

    obs: np.ndarray
    src: np.ndarray
    order: np.ndarray
    delay: np.ndarray
    coef: np.ndarray
    n_obs: int
    n_src: int

    def __len__(self):
        return len(self.obs)

    @staticmethod
    def concat(parts):
        parts = [p for p in parts if len(p)]
        return DelayTerms(
            np.concatenate([p.obs for p in parts]),
            np.concatenate([p.src for p in parts]),
            np.concatenate([p.order for p in parts]),
            np.concatenate([p.delay for p in parts]),
            np.concatenate([p.coef for p in parts]),
            parts[0].n_obs, parts[0].n_src)

    def laplace_matrix(self, s):
        """Dense (3*n_obs, 3*n_src) image at complex frequency ``s``."""
        M = np.zeros((self.n_obs, 3, self.n_src, 3), dtype=complex)
        f = s ** self.order * np.exp(-s * self.delay)
        np.add.at(M, (self.obs, slice(None), self.src, slice(None)),
                  f[:, None, None] * self.coef)
        return M.reshape(3 * self.n_obs, 3 * self.n_src)

    def apply_laplace(self, s, P, p0=None):
        """Laplace image of the time-domain action on null-extended histories.

        ``P`` (n_src, 3) is the transform of ``p``; ``p0`` its value at
        ``0+``.  Derivatives of a null-extended history transform as
        ``s P - p0`` (first) and ``s (s P - p0)`` (second).
        """
        P = np.asarray(P, dtype=complex)
        V = s * P if p0 is None else s * P - p0
        src = np.where(self.order[:, None] == 0, P[self.src],
                       np.where(self.order[:, None] == 1, V[self.src], s * V[self.src]))
        contrib = np.einsum("kab,kb->ka", self.coef, src) * np.exp(-s * self.delay)[:, None]
        out = np.zeros((self.n_obs, 3), dtype=complex)
        np.add.at(out, self.obs, contrib)
        return out


def _terms(obs, src, order, delay, coef, n_obs, n_src):
    return DelayTerms(np.asarray(obs, dtype=np.int64), np.asarray(src, dtype=np.int64),
                      np.asarray(order, dtype=np.int64), np.asarray(delay, dtype=float),
                      np.asarray(coef, dtype=float), n_obs, n_src)


def _volume_quadrature(mesh, points, self_index):
    """Volume quadrature nodes per (point, voxel); subcells refine near pairs."""
    h = mesh.h
    d = np.linalg.norm(points[:, None, :] - mesh.centroids[None, :, :], axis=-1)
    obs, src, rel, w = [], [], [], []
    cut = (NEAR_FACTOR - _CUT_SLACK) * h
    inner = (1.0 - _CUT_SLACK) * h
    for level, (lo, hi, m) in enumerate([(cut, np.inf, 1),
                                          (inner, cut, 2),
                                          (0.0, inner, 4)]):
        mask = (d >= lo) & (d < hi)
        if self_index is not None:
            mask[np.arange(len(points)), self_index] &= self_index < 0
        pi, vj = np.nonzero(mask)
        if len(pi) == 0:
            continue
        off = _subcell_offsets(h, m)
        r = points[pi][:, None, :] - mesh.centroids[vj][:, None, :] - off[None]
        obs.append(np.repeat(pi, len(off)))
        src.append(np.repeat(vj, len(off)))
        rel.append(r.reshape(-1, 3))
        w.append(np.full(r.shape[0] * r.shape[1], mesh.voxel_volume / len(off)))
    return np.concatenate(obs), np.concatenate(src), np.concatenate(rel), np.concatenate(w)


def _facet_quadrature(mesh, points, adaptive):
    """Gauss nodes per (point, facet); ``adaptive`` raises the order near the point."""
    h = mesh.h
    d = np.linalg.norm(points[:, None, :] - mesh.facet_centroids[None, :, :], axis=-1)
    bands = [(0.0, np.inf, 2)] if not adaptive else [(3 * h, np.inf, 2), (h, 3 * h, 4), (0.0, h, 8)]
    obs, fac, rel, w = [], [], [], []
    for lo, hi, m in bands:
        pi, fj = np.nonzero((d >= lo) & (d < hi))
        if len(pi) == 0:
            continue
        pts, wq = _facet_points(mesh, m)
        r = points[pi][:, None, :] - pts[fj]
        obs.append(np.repeat(pi, len(wq)))
        fac.append(np.repeat(fj, len(wq)))
        rel.append(r.reshape(-1, 3))
        w.append(np.tile(wq, len(pi)))
    return np.concatenate(obs), np.concatenate(fac), np.concatenate(rel), np.concatenate(w)


def operator_terms(mesh, units: Units = SI, points=None):
    """Delay-term expansion of ``K = eps0 L`` at centroids or at field points.

    At centroids (``points=None``) the table reproduces the assembled
    ``K(s)`` exactly, including the instantaneous static facet correction
    and the equivalent-sphere self cell.  At other points the facet rule is
    adaptive and purely retarded, so the result stays causal.
    """
    c = units.c0
    N = mesh.n_voxels
    at_centroids = points is None
    pts = mesh.centroids if at_centroids else np.atleast_2d(np.asarray(points, dtype=float))
    P = len(pts)
    self_index = np.arange(N) if at_centroids else None
    eye = np.eye(3)
    parts = []

    o, j, r, w = _volume_quadrature(mesh, pts, self_index)
    R = np.linalg.norm(r, axis=-1)
    if np.any(R == 0):
        raise ValueError("observation point coincides with a volume quadrature node")
    parts.append(_terms(o, j, np.full(len(o), 2), R / c,
                        (-w / (FOUR_PI * R * c * c))[:, None, None] * eye, P, N))

    if at_centroids:
        a = equivalent_radius(mesh.h)
        ta = a / c
        ids = np.arange(N)
        parts.append(_terms(np.tile(ids, 3), np.tile(ids, 3), np.repeat([0, 1, 0], N),
                            np.repeat([ta, ta, 0.0], N),
                            np.repeat([1.0, ta, -1.0], N)[:, None, None] * eye, N, N))

    o, f, r, w = _facet_quadrature(mesh, pts, adaptive=not at_centroids)
    R = np.linalg.norm(r, axis=-1)
    u = r / R[:, None]
    n = mesh.facet_normals[f]
    own = mesh.facet_owner[f]
    un = u[:, :, None] * n[:, None, :]
    parts.append(_terms(o, own, np.zeros(len(o)), R / c,
                        (w / (FOUR_PI * R * R))[:, None, None] * un, P, N))
    parts.append(_terms(o, own, np.ones(len(o)), R / c,
                        (w / (FOUR_PI * R * c))[:, None, None] * un, P, N))

    if at_centroids:
        # instantaneous part: -(A_exact + sum_q w u / (4 pi R^2)) n^T
        static = rect_potential_gradient(pts, mesh.facet_centroids, mesh.facet_axis, 0.5 * mesh.h)
        quad_static = np.zeros_like(static)
        np.add.at(quad_static, (o, f), (w / (FOUR_PI * R * R))[:, None] * u)
        corr = static + quad_static
        oi, fi = np.meshgrid(np.arange(P), np.arange(mesh.n_facets), indexing="ij")
        oi, fi = oi.ravel(), fi.ravel()
        coef = -corr[oi, fi][:, :, None] * mesh.facet_normals[fi][:, None, :]
        parts.append(_terms(oi, mesh.facet_owner[fi], np.zeros(len(oi)), np.zeros(len(oi)), coef, P, N))
    return DelayTerms.concat(parts)


def curl_terms(mesh, points, units: Units = SI):
    """Delay terms of ``mu0 curl int pdot(t')/(4 pi R) dV`` at field points.

    ``curl[f(R) v(t - R/c)] = -u x [v/(4 pi R^2) + vdot/(4 pi R c)]`` per node,
    so the table holds first and second derivative terms of ``p``.
    """
    c = units.c0
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    o, j, r, w = _volume_quadrature(mesh, pts, None)
    R = np.linalg.norm(r, axis=-1)
    if np.any(R == 0):
        raise ValueError("observation point coincides with a volume quadrature node")
    u = r / R[:, None]
    cross = np.zeros((len(u), 3, 3))
    cross[:, 0, 1], cross[:, 0, 2] = -u[:, 2], u[:, 1]
    cross[:, 1, 0], cross[:, 1, 2] = u[:, 2], -u[:, 0]
    cross[:, 2, 0], cross[:, 2, 1] = -u[:, 1], u[:, 0]
    mu0 = units.mu0
    t1 = _terms(o, j, np.ones(len(o)), R / c, (-mu0 * w / (FOUR_PI * R * R))[:, None, None] * cross,
                len(pts), mesh.n_voxels)
    t2 = _terms(o, j, np.full(len(o), 2), R / c, (-mu0 * w / (FOUR_PI * R * c))[:, None, None] * cross,
                len(pts), mesh.n_voxels)
    return DelayTerms.concat([t1, t2])


@dataclass(eq=False)
class TimeHistory:
    """Per-voxel samples ``values[k, j, :] = p_j(k*dt)`` starting at t = 0.

    Queries before t = 0 return zero.  ``v0`` optionally pins the
    derivative at ``0+``; otherwise a one-sided difference is used.
    """

    dt: float
    values: np.ndarray
    v0: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 3 or self.values.shape[-1] != 3:
            raise ValueError("history values must have shape (nt, N, 3)")
        if len(self.values) < 3:
            raise ValueError("history needs at least 3 samples")
        self._vel = None

    @property
    def n_steps(self):
        return len(self.values)

    @property
    def t_end(self):
        return (self.n_steps - 1) * self.dt

    @property
    def times(self):
        return self.dt * np.arange(self.n_steps)

    def velocity(self):
        if self._vel is None:
            f, dt = self.values, self.dt
            v = np.empty_like(f)
            v[1:-1] = (f[2:] - f[:-2]) / (2 * dt)
            v[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * dt) if self.v0 is None else self.v0
            v[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * dt)
            self._vel = v
        return self._vel

    def _interp(self, data, t, src):
        t = np.asarray(t, dtype=float)
        if np.any(t > self.t_end * (1 + 1e-12) + 1e-300):
            raise ValueError("query beyond the stored history")
        x = np.clip(t / self.dt, 0.0, self.n_steps - 1)
        k = np.minimum(np.floor(x).astype(np.int64), self.n_steps - 2)
        fr = (x - k)[:, None]
        out = (1 - fr) * data[k, src] + fr * data[k + 1, src]
        out[t < 0] = 0
        return out

    def value(self, t, src):
        return self._interp(self.values, t, src)

    def deriv(self, t, src):
        return self._interp(self.velocity(), t, src)

    def deriv2(self, t, src):
        # one-sided at both ends so nothing leaks before t = 0; the delta
        # carried by a jump of the derivative at 0 is not sampleable
        t = np.asarray(t, dtype=float)
        hi = np.minimum(t + self.dt, self.t_end)
        lo = np.maximum(t - self.dt, 0.0)
        out = (self.deriv(hi, src) - self.deriv(lo, src)) / np.maximum(hi - lo, 1e-300)[:, None]
        out[t < 0] = 0
        return out


def evaluate_terms(terms: DelayTerms, history: TimeHistory, t):
    """Time-domain action of a delay table on a null-extended history; (T, n_obs, 3)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros((len(t), terms.n_obs, 3), dtype=complex)
    getters = (history.value, history.deriv, history.deriv2)
    for d in range(3):
        sel = terms.order == d
        if not np.any(sel):
            continue
        src, dl, coef, obs = terms.src[sel], terms.delay[sel], terms.coef[sel], terms.obs[sel]
        for k, tk in enumerate(t):
            x = getters[d](tk - dl, src)
            np.add.at(out[k], obs, np.einsum("kab,kb->ka", coef, x))
    return out


def apply_L_time(history: TimeHistory, mesh, points, t, units: Units = SI, terms=None):
    """Retarded field ``L{p}(r; t)`` of a polarization history at field points."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t > history.t_end * (1 + 1e-12)):
        raise ValueError("requested time beyond the stored history")
    if history.dt * units.c0 >= 0.5 * mesh.h:
        raise ValueError("history step too coarse: need c0*dt < h/2")
    if terms is None:
        terms = operator_terms(mesh, units, points)
    return evaluate_terms(terms, history, t) / units.eps0
