import numpy as np
import pytest

from qvie.constants import NORMALIZED, SI
from qvie.dispersion import (LorentzModel, ThermalReservoir, bose_occupation, chi, chi_tilde,
                             h_chi, h_chi_convolve, h_chi_numeric, h_eta_convolve,
                             inverse_chi_tilde, kramers_kronig_real, sigma)


def test_rejects_lossless_and_overdamped():
    with pytest.raises(ValueError, match="strictly lossy"):
        LorentzModel(1.0, 1.0, 0.0)
    with pytest.raises(ValueError, match="underdamped"):
        LorentzModel(1.0, 1.0, 2.5)
    with pytest.raises(ValueError):
        LorentzModel(-1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        ThermalReservoir(-1.0)


def test_laplace_and_fourier_agree_on_imaginary_axis(model):
    w = np.linspace(0.0, 5.0, 41)
    np.testing.assert_allclose(chi_tilde(model, 1j * w), chi(model, w), rtol=1e-14)
    np.testing.assert_allclose(inverse_chi_tilde(model, 1j * w) * chi(model, w), 1.0, rtol=1e-14)
    with pytest.raises(ValueError):
        chi_tilde(model, -0.1 + 1j)


def test_loss_sign_and_static_limit(model, units):
    w = np.linspace(0.01, 10, 200)
    assert np.all(chi(model, w).imag < 0)
    assert np.all(sigma(model, w, units) > 0)
    assert chi(model, 0.0).real == pytest.approx(model.chi_static)
    assert chi(model, 0.0).imag == 0.0


def test_h_chi_matches_inverse_fourier_transform():
    model = LorentzModel(1.0, 1.0, 0.3)
    t = np.array([0.5, 1.0, 2.0, 5.0])
    num = h_chi_numeric(model, t, omega_max=4000.0, n_omega=2 ** 21)
    np.testing.assert_allclose(num, h_chi(model, t), atol=1e-3 * np.abs(h_chi(model, t)).max())


def test_h_chi_vanishes_at_zero_and_refuses_negative_time(model):
    assert h_chi(model, 0.0) == 0.0
    with pytest.raises(ValueError):
        h_chi(model, -1.0)


def test_h_eta_inverts_h_chi():
    # h_eta * h_chi = delta: interior samples converge like dt^2
    model = LorentzModel(1.0, 1.0, 0.2)
    errs = []
    for n in (400, 800, 1600):
        t = np.linspace(0.0, 20.0, n)
        dt = t[1] - t[0]
        f = np.sin(np.pi * t / 20.0) ** 4
        back = h_eta_convolve(model, h_chi_convolve(model, f, dt), dt)
        errs.append(np.abs(back[2:-2] - f[2:-2]).max())
    assert errs[-1] < 1e-3
    assert errs[0] / errs[-1] > 10


def test_kramers_kronig_rebuilds_real_part(model, units):
    w = np.array([0.3, 0.9, 1.1, 2.0])
    re = kramers_kronig_real(model, w, units)
    np.testing.assert_allclose(re, chi(model, w).real, atol=1e-3 * np.abs(chi(model, w)).max())


def test_kramers_kronig_in_si_units():
    model = LorentzModel(2e15, 3e15, 1e14)
    w = np.array([1.5e15, 4e15])
    re = kramers_kronig_real(model, w, SI)
    np.testing.assert_allclose(re, chi(model, w).real, rtol=0, atol=1e-2 * np.abs(chi(model, w)).max())


def test_bose_occupation_limits():
    nu = np.array([1e-3, 0.1, 1.0, 10.0])
    assert np.all(bose_occupation(ThermalReservoir(0.0), nu, NORMALIZED) == 0.0)
    T = 2.0
    n = bose_occupation(ThermalReservoir(T), nu, NORMALIZED)
    # Rayleigh-Jeans for h nu << kT, Wien for h nu >> kT
    assert n[0] == pytest.approx(T / nu[0] - 0.5, rel=1e-6)
    assert n[-1] == pytest.approx(np.exp(-nu[-1] / T), rel=1e-2)
    with pytest.raises(ValueError):
        bose_occupation(ThermalReservoir(T), 0.0, NORMALIZED)
