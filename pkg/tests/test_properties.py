"""Property-based checks of the model's structural invariants."""
import numpy as np
from hypothesis import given, settings, strategies as st

from qvie.assembly import Discretization, assemble, assemble_K, operator_terms
from qvie.constants import NORMALIZED
from qvie.dispersion import LorentzModel, ThermalReservoir, bose_occupation, chi
from qvie.geometry import build_box_mesh, polarization_vectors
from qvie.greens import dyadic_G, dyadic_G_long, dyadic_G_perp
from qvie.qstat import counting_rate_total
from qvie.solver import solve_frequency

U = NORMALIZED
pos = st.floats(0.05, 5.0)
freq = st.floats(-20.0, 20.0)
models = st.tuples(pos, pos, st.floats(0.01, 2.0)).filter(lambda a: a[2] < 2 * a[1]).map(
    lambda a: LorentzModel(*a))
vec = st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=3).map(np.array)
s_vals = st.builds(complex, st.floats(1e-3, 2.0), st.floats(-8.0, 8.0))


@given(models, freq)
def test_susceptibility_reality_and_passivity(model, w):
    # real response in time: chi(-w) = conj(chi(w)); absorption means Im chi <= 0 for w > 0
    assert np.isclose(chi(model, -w), np.conj(chi(model, w)), rtol=1e-12)
    assert chi(model, w).imag * np.sign(w) <= 1e-15 * abs(chi(model, w))


@given(vec.filter(lambda r: np.linalg.norm(r) > 1e-2), s_vals)
def test_greens_decomposition_and_reciprocity(r, s):
    G = dyadic_G(r, s, U)
    split = dyadic_G_perp(r, s, U) + dyadic_G_long(r, s, U)
    np.testing.assert_allclose(split, G, atol=1e-12 * np.abs(G).max())
    np.testing.assert_allclose(G, G.T, atol=1e-14 * np.abs(G).max())
    np.testing.assert_array_equal(dyadic_G(-r, s, U), G)


@given(st.floats(0.01, 5.0), st.floats(0.01, 5.0), st.floats(0.0, 3.0))
def test_bose_occupation_monotone(nu, dnu, T):
    res = ThermalReservoir(T)
    a, b = bose_occupation(res, nu, U), bose_occupation(res, nu + dnu, U)
    assert a >= b >= 0
    assert bose_occupation(ThermalReservoir(T + 0.1), nu, U) >= a


@given(vec.filter(lambda k: np.linalg.norm(k) > 1e-3))
def test_polarization_vectors_orthonormal(k):
    e1, e2 = polarization_vectors(k)
    kh = k / np.linalg.norm(k)
    B = np.stack([e1, e2, kh])
    np.testing.assert_allclose(B @ B.T, np.eye(3), atol=1e-12)
    f1, f2 = polarization_vectors(-k)
    np.testing.assert_array_equal(e1, f1)
    np.testing.assert_array_equal(e2, f2)


MESH = build_box_mesh([0.6, 0.4, 0.2], [3, 2, 1])
MODEL = LorentzModel(1.0, 1.0, 0.1)


@settings(max_examples=20, deadline=None)
@given(st.permutations(range(MESH.n_voxels)), s_vals)
def test_solution_is_equivariant_under_voxel_order(perm, s):
    perm = np.array(perm)
    other = MESH.permuted(perm)
    rng = np.random.default_rng(7)
    D = rng.normal(size=(MESH.n_voxels, 3)) + 1j * rng.normal(size=(MESH.n_voxels, 3))
    P, _ = solve_frequency(assemble(MESH, MODEL, s, U), D)
    Q, _ = solve_frequency(assemble(other, MODEL, s, U), D[perm])
    np.testing.assert_allclose(Q, P[perm], atol=1e-10 * np.abs(P).max())


@settings(max_examples=10, deadline=None)
@given(s_vals)
def test_delay_table_matches_matrix(s):
    K = assemble_K(Discretization(MESH, U), s)
    np.testing.assert_allclose(operator_terms(MESH, U).laplace_matrix(s), K,
                               atol=1e-12 * np.abs(K).max())


nonneg = st.lists(st.floats(0.0, 1e6), min_size=1, max_size=8)


@given(nonneg, st.data())
def test_rates_are_nonnegative_and_additive(w_rad, data):
    w_mat = data.draw(st.lists(st.floats(0.0, 1e6), min_size=len(w_rad), max_size=len(w_rad)))
    r = counting_rate_total(np.array(w_rad), np.array(w_mat))
    assert np.all(r.w_total >= 0)
    np.testing.assert_array_equal(r.w_total, r.w_rad + r.w_mat)
