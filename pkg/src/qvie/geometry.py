"""Voxel meshes of the dielectric region, matter bases and plane-wave modes."""
import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .constants import SI, Units

# (axis, sign) for the six faces of a voxel
_FACES = [(a, sg) for a in range(3) for sg in (1, -1)]


@dataclass(frozen=True, eq=False)
class VoxelMesh:
    """Cubic voxels of edge ``h`` plus the boundary facets of their union.

    ``index`` holds integer grid coordinates, ``centroids = origin + h*index``.
    Facet arrays are parallel: ``facet_centroids`` (F, 3), ``facet_normals``
    (F, 3) unit outward, ``facet_axis`` the normal's Cartesian axis,
    ``facet_sign`` +-1 and ``facet_owner`` the voxel the facet belongs to.
    """

    h: float
    index: np.ndarray
    origin: np.ndarray
    sort: bool = True
    centroids: np.ndarray = field(init=False)
    facet_centroids: np.ndarray = field(init=False)
    facet_normals: np.ndarray = field(init=False)
    facet_axis: np.ndarray = field(init=False)
    facet_sign: np.ndarray = field(init=False)
    facet_owner: np.ndarray = field(init=False)

    def __post_init__(self):
        idx = np.asarray(self.index, dtype=np.int64).reshape(-1, 3)
        if len(idx) == 0:
            raise ValueError("mesh contains no voxels")
        if self.sort:
            idx = idx[np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0]))]
        object.__setattr__(self, "index", idx)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))
        object.__setattr__(self, "centroids", self.origin + self.h * idx.astype(float))

        occupied = {tuple(v) for v in idx}
        fc, fn, fa, fs, fo = [], [], [], [], []
        for j, v in enumerate(idx):
            for a, sg in _FACES:
                nb = list(v)
                nb[a] += sg
                if tuple(nb) in occupied:
                    continue
                n = np.zeros(3)
                n[a] = sg
                fc.append(self.centroids[j] + 0.5 * self.h * n)
                fn.append(n)
                fa.append(a)
                fs.append(sg)
                fo.append(j)
        object.__setattr__(self, "facet_centroids", np.array(fc))
        object.__setattr__(self, "facet_normals", np.array(fn))
        object.__setattr__(self, "facet_axis", np.array(fa, dtype=np.int64))
        object.__setattr__(self, "facet_sign", np.array(fs, dtype=np.int64))
        object.__setattr__(self, "facet_owner", np.array(fo, dtype=np.int64))

    @property
    def n_voxels(self) -> int:
        return len(self.index)

    @property
    def n_facets(self) -> int:
        return len(self.facet_owner)

    @property
    def voxel_volume(self) -> float:
        return self.h ** 3

    @property
    def facet_area(self) -> float:
        return self.h ** 2

    @property
    def volume(self) -> float:
        return self.n_voxels * self.h ** 3

    def fingerprint(self) -> str:
        m = hashlib.sha256()
        m.update(np.float64(self.h).tobytes())
        m.update(self.origin.tobytes())
        m.update(self.index.tobytes())
        return m.hexdigest()[:16]

    def diameter(self) -> float:
        c = self.centroids
        ext = c.max(axis=0) - c.min(axis=0) + self.h
        return float(np.linalg.norm(ext))

    def permuted(self, perm):
        """Same voxels listed in order ``perm`` (no re-sorting)."""
        return VoxelMesh(self.h, self.index[np.asarray(perm)], self.origin, sort=False)


def build_box_mesh(extents, n):
    extents = np.asarray(extents, dtype=float)
    n = np.asarray(n, dtype=np.int64)
    if np.any(extents <= 0):
        raise ValueError("box extents must be positive")
    if np.any(n < 1):
        raise ValueError("box needs at least one voxel per axis")
    h = extents / n
    if not np.allclose(h, h[0], rtol=1e-12):
        raise ValueError("box voxels must be cubic: extents/n must agree on all axes")
    h = float(h[0])
    grid = np.stack(np.meshgrid(*[np.arange(k) for k in n], indexing="ij"), -1).reshape(-1, 3)
    origin = -0.5 * extents + 0.5 * h
    return VoxelMesh(h, grid, origin)


def build_sphere_mesh(radius, n_per_diameter):
    """Voxels of a ``n^3`` grid spanning the sphere whose centroids lie inside it."""
    if n_per_diameter < 3:
        raise ValueError("n_per_diameter must be >= 3")
    if radius <= 0:
        raise ValueError("radius must be positive")
    n = int(n_per_diameter)
    h = 2.0 * radius / n
    grid = np.stack(np.meshgrid(*[np.arange(n)] * 3, indexing="ij"), -1).reshape(-1, 3)
    origin = np.full(3, -radius + 0.5 * h)
    c = origin + h * grid
    inside = np.linalg.norm(c, axis=1) < radius
    if not inside.any():
        raise ValueError("grid too coarse: no voxel centroid lies inside the sphere")
    return VoxelMesh(h, grid[inside], origin)


def write_mesh_csv(mesh, voxel_path, facet_path):
    with open(voxel_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ix", "iy", "iz", "cx", "cy", "cz"])
        for ijk, c in zip(mesh.index, mesh.centroids):
            w.writerow([*map(int, ijk), *map(repr, map(float, c))])
    with open(facet_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cx", "cy", "cz", "nx", "ny", "nz", "area"])
        for c, n in zip(mesh.facet_centroids, mesh.facet_normals):
            w.writerow([*map(repr, map(float, c)), *map(repr, map(float, n)), repr(mesh.facet_area)])


@dataclass(frozen=True, eq=False)
class MatterBasis:
    """Real orthonormal vector fields on the voxels; ``vectors`` has shape (M, N, 3)."""

    vectors: np.ndarray
    kind: str

    @property
    def solenoidal(self) -> bool:
        return self.kind == "uniform-triplet"

    def __len__(self):
        return len(self.vectors)

    def gram(self, mesh):
        return np.einsum("mja,nja->mn", self.vectors, self.vectors) * mesh.voxel_volume


def uniform_matter_basis(mesh):
    mag = 1.0 / np.sqrt(mesh.volume)
    vec = np.zeros((3, mesh.n_voxels, 3))
    for a in range(3):
        vec[a, :, a] = mag
    return MatterBasis(vec, "uniform-triplet")


def voxel_pulse_basis(mesh):
    """One basis field per (voxel, axis); not solenoidal (surface charge at every voxel face)."""
    n = mesh.n_voxels
    vec = np.zeros((3 * n, n, 3))
    mag = 1.0 / np.sqrt(mesh.voxel_volume)
    for j in range(n):
        for a in range(3):
            vec[3 * j + a, j, a] = mag
    return MatterBasis(vec, "voxel-pulse")


def _canonical(k):
    for x in k:
        if x > 0:
            return k
        if x < 0:
            return -k
    return k


def polarization_vectors(k):
    """Two unit polarization vectors transverse to ``k``, identical for ``k`` and ``-k``."""
    k = np.asarray(k, dtype=float)
    nk = np.linalg.norm(k)
    if nk == 0:
        raise ValueError("k must be nonzero")
    kc = _canonical(k) / nk
    a = np.array([1.0, 0.0, 0.0]) if abs(kc[2]) > 0.9 else np.array([0.0, 0.0, 1.0])
    e1 = np.cross(kc, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(kc, e1)
    return e1, e2


@dataclass(frozen=True, eq=False)
class PlaneWaveMode:
    """Transverse free-space mode ``w(r) = eps exp(i k.r) / (2 pi)^{3/2}``."""

    k: np.ndarray
    s: int
    eps: np.ndarray
    omega: float
    amplitude: float

    def w(self, points):
        points = np.atleast_2d(points)
        phase = np.exp(1j * points @ self.k)
        return phase[:, None] * self.eps[None, :] / (2.0 * np.pi) ** 1.5

    def e_free(self, points, t):
        """Free field coefficient ``E_mu w(r) exp(-i omega t)``; shape (T, P, 3)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.amplitude * np.exp(-1j * self.omega * t)[:, None, None] * self.w(points)[None]

    def b_free(self, points, t):
        return np.cross(self.k, self.e_free(points, t)) / self.omega


def plane_wave_mode(k, s_pol, units: Units = SI):
    if s_pol not in (1, 2):
        raise ValueError("polarization index must be 1 or 2")
    k = np.asarray(k, dtype=float)
    eps = polarization_vectors(k)[s_pol - 1]
    omega = units.c0 * np.linalg.norm(k)
    amp = np.sqrt(units.hbar * omega / (2.0 * units.eps0 * (2.0 * np.pi) ** 3))
    return PlaneWaveMode(k, s_pol, eps, omega, amp)
