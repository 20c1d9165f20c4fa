import numpy as np
import pytest

from lzdfs import _kernels
from lzdfs.dissipator import dissipator, jump_channels, lindblad_rhs, spectral_decompose
from lzdfs.integrator import AdiabaticFrame
from lzdfs.model import ModelSpec, NoiseSpec, build_hamiltonian, build_noise_operator


def random_rho(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_case(rng, m=2, n=4):
    g = rng.normal(size=(m, n - m)) + 1j * rng.normal(size=(m, n - m))
    w = rng.normal(size=(m, n - m))
    return ModelSpec.from_tau(g), NoiseSpec(w, 0.7, 0.3)


def test_spectral_decomposition_reconstructs(rng):
    model, _ = random_case(rng)
    h = build_hamiltonian(model, 3.0)
    sd = spectral_decompose(h)
    assert np.allclose(sd.reconstruct(), h, atol=1e-12)
    assert np.allclose(sum(sd.projectors), np.eye(4), atol=1e-12)


def test_dark_states_form_a_cluster():
    model = ModelSpec.from_tau(np.array([[0.5, 0.5], [0.5, 0.5]]))
    sd = spectral_decompose(build_hamiltonian(model, 20.0))
    assert sorted(c.multiplicity for c in sd.clusters) == [1, 1, 1, 1]
    sd0 = spectral_decompose(build_hamiltonian(model, 0.0))
    assert max(c.multiplicity for c in sd0.clusters) == 2


def test_zero_temperature_uphill_rates_vanish(rng):
    model, noise = random_case(rng)
    sd = spectral_decompose(build_hamiltonian(model, -2.0))
    x = build_noise_operator(noise, 4, 2)
    chans = jump_channels(sd, x, 1.3, 0.0)
    assert chans
    for ch in chans:
        if ch.omega < 0:
            assert ch.rate == 0.0
        else:
            assert ch.rate == 1.3
        assert ch.omega == pytest.approx(sd.energies[ch.source] - sd.energies[ch.target])


def test_rhs_traceless_and_hermitian(rng):
    model, noise = random_case(rng)
    h = build_hamiltonian(model, 1.5)
    chans = jump_channels(spectral_decompose(h), build_noise_operator(noise, 4, 2), 0.9, 2.0)
    rho = random_rho(rng, 4)
    d = lindblad_rhs(rho, h, chans)
    assert abs(np.trace(d)) < 1e-12
    assert np.allclose(d, d.conj().T, atol=1e-12)
    assert abs(np.trace(dissipator(chans[0].operator, rho))) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_lab_kernel_matches_reference(seed):
    rng = np.random.default_rng(seed)
    model, noise = random_case(rng, m=2, n=5)
    t = rng.uniform(-30, 30)
    h = build_hamiltonian(model, t)
    x = build_noise_operator(noise, 5, 2)
    rho = random_rho(rng, 5)
    ref = lindblad_rhs(rho, h, jump_channels(spectral_decompose(h), x, noise.rate_constant, noise.temperature))
    coupling = h.copy()
    coupling[:2, :2] = 0
    params = (model.chirp_rate, 2, coupling, x.astype(complex), noise.rate_constant, noise.temperature, 1e-6)
    out = np.empty(25, dtype=complex)
    _kernels.rhs_lindblad_lab(t, rho.reshape(-1).copy(), params, out)
    assert np.allclose(out.reshape(5, 5), ref, atol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_rotating_kernel_matches_reference(seed):
    # d/dt of the back-transformed state must equal the bare-basis generator
    rng = np.random.default_rng(100 + seed)
    m, n = (2, 4) if seed % 2 == 0 else (1, 3)
    g = rng.normal(size=(m, n - m)) + 1j * rng.normal(size=(m, n - m))
    if seed == 2:
        g = np.array([[0.5, -0.5], [-0.5, 0.5]])
    model = ModelSpec.from_tau(g)
    noise = NoiseSpec(rng.normal(size=(m, n - m)), 0.8, 0.5 if seed < 3 else 0.0)
    frame = AdiabaticFrame(model)
    x = build_noise_operator(noise, n, m).astype(complex)
    xq = np.ascontiguousarray(frame.q.conj().T @ x @ frame.q)
    ws = _kernels.rotating_workspace(n, frame.svals.size)
    params = (frame.kappa, frame.svals, frame.n_up_dark, xq, noise.rate_constant, noise.temperature, 1e-6, ws)
    t = rng.uniform(-20, 20)
    rho_b = random_rho(rng, n)
    f = np.empty(n * n, dtype=complex)
    _kernels.rhs_lindblad_rotating(t, rho_b.reshape(-1).copy(), params, f)
    f = f.reshape(n, n)
    eps = 1e-5
    plus = frame.from_frame(rho_b + eps * f, t + eps)
    minus = frame.from_frame(rho_b - eps * f, t - eps)
    numeric = (plus - minus) / (2 * eps)
    rho = frame.from_frame(rho_b, t)
    h = build_hamiltonian(model, t)
    ref = lindblad_rhs(rho, h, jump_channels(spectral_decompose(h), x, noise.rate_constant, noise.temperature))
    assert np.allclose(numeric, ref, atol=1e-7)


def test_frame_basis_diagonalizes_hamiltonian(rng):
    model, _ = random_case(rng, m=2, n=5)
    frame = AdiabaticFrame(model)
    for t in (-40.0, 0.0, 13.0):
        v, _, energies = frame.basis(t)
        h = build_hamiltonian(model, t)
        assert np.allclose(v.conj().T @ h @ v, np.diag(energies), atol=1e-10)
