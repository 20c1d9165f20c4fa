"""System definition for the degenerate Landau-Zener problem.

Units: hbar = 1 and the effective Morris-Shore coupling scale Omega = 1, so
every quantity below is a dimensionless ratio (kappa/Omega^2, gamma/Omega,
k_B T/Omega, kappa t0/Omega, ...).

The Hamiltonian of an M:(N-M) system is block shaped::

    H(t) = [[kappa t * I_M, G    ],
            [G^dagger,      0_N-M]]

and the system side of the bath coupling has the same off-diagonal form with
a real matrix W in place of G.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ModelError",
    "ModelSpec",
    "NoiseSpec",
    "DensityMatrix",
    "build_hamiltonian",
    "build_noise_operator",
    "thermal_factor",
    "upper_projector",
]


class ModelError(ValueError):
    """Raised for inconsistent model or noise definitions."""


def _as_block(matrix, m_upper, n_total, name, dtype):
    arr = np.array(matrix, dtype=dtype)
    if arr.ndim == 1 and m_upper == 1:
        arr = arr.reshape(1, -1)
    expected = (m_upper, n_total - m_upper)
    if arr.shape != expected:
        raise ModelError(f"{name} has shape {arr.shape}, expected {expected}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelSpec:
    """Coherent part of an M:(N-M) degenerate crossing.

    Parameters
    ----------
    n_total : int
        Number of states N.
    m_upper : int
        Degeneracy M of the level whose energy is swept (1 <= M < N).
    couplings : array_like, shape (M, N - M)
        Coherent coupling block G (complex allowed).
    chirp_rate : float
        kappa > 0; the upper level sits at energy kappa * t.
    sweep_half_width : float
        t0 > 0; the sweep covers [-t0, t0].
    """

    n_total: int
    m_upper: int
    couplings: np.ndarray
    chirp_rate: float = 0.1
    sweep_half_width: float = 500.0

    def __post_init__(self):
        if int(self.n_total) != self.n_total or int(self.m_upper) != self.m_upper:
            raise ModelError("n_total and m_upper must be integers")
        if not 1 <= self.m_upper < self.n_total:
            raise ModelError(f"need 1 <= m_upper < n_total, got M={self.m_upper}, N={self.n_total}")
        if not self.chirp_rate > 0:
            raise ModelError(f"chirp_rate must be positive, got {self.chirp_rate}")
        if not self.sweep_half_width > 0:
            raise ModelError(f"sweep_half_width must be positive, got {self.sweep_half_width}")
        block = _as_block(self.couplings, self.m_upper, self.n_total, "couplings", complex)
        object.__setattr__(self, "couplings", block)

    @classmethod
    def from_tau(cls, couplings, kappa=0.1, tau0=50.0):
        """Build from the dimensionless sweep length kappa * t0."""
        g = np.atleast_2d(np.asarray(couplings))
        m, k = g.shape
        return cls(m + k, m, g, chirp_rate=kappa, sweep_half_width=tau0 / kappa)

    @property
    def n_lower(self):
        return self.n_total - self.m_upper

    @property
    def tau0(self):
        return self.chirp_rate * self.sweep_half_width


@dataclass(frozen=True)
class NoiseSpec:
    """System-bath coupling: real block W, flat rate gamma, temperature k_B T."""

    noise_couplings: np.ndarray
    rate_constant: float = 0.0
    temperature: float = 0.0

    def __post_init__(self):
        w = np.array(self.noise_couplings)
        if np.iscomplexobj(w):
            if np.any(np.abs(w.imag) > 0):
                raise ModelError("noise_couplings must be real")
            w = w.real
        w = np.atleast_2d(w.astype(float))
        if not np.all(np.isfinite(w)):
            raise ModelError("noise_couplings contains non-finite entries")
        w.setflags(write=False)
        object.__setattr__(self, "noise_couplings", w)
        if not self.rate_constant >= 0:
            raise ModelError(f"rate_constant must be >= 0, got {self.rate_constant}")
        if not self.temperature >= 0:
            raise ModelError(f"temperature must be >= 0, got {self.temperature}")

    def check_shape(self, n_total, m_upper):
        _as_block(self.noise_couplings, m_upper, n_total, "noise_couplings", float)


@dataclass(frozen=True)
class DensityMatrix:
    """Validated N x N density matrix."""

    entries: np.ndarray
    hermiticity_tol: float = field(default=1e-12, repr=False)
    trace_tol: float = field(default=1e-8, repr=False)
    positivity_tol: float = field(default=1e-7, repr=False)

    def __post_init__(self):
        rho = np.array(self.entries, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ModelError(f"density matrix must be square, got shape {rho.shape}")
        dev = np.max(np.abs(rho - rho.conj().T))
        if dev > self.hermiticity_tol:
            raise ModelError(f"density matrix not Hermitian (deviation {dev:.3e})")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > self.trace_tol:
            raise ModelError(f"density matrix trace {tr!r} differs from 1")
        lam = np.linalg.eigvalsh(rho).min()
        if lam < -self.positivity_tol:
            raise ModelError(f"density matrix has negative eigenvalue {lam:.3e}")
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    @classmethod
    def from_pure(cls, psi):
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, n):
        return cls(np.eye(n, dtype=complex) / n)

    @property
    def dim(self):
        return self.entries.shape[0]

    def population(self, psi):
        psi = np.asarray(psi, dtype=complex)
        return float(np.real(psi.conj() @ self.entries @ psi))


def upper_projector(n_total, m_upper):
    p = np.zeros((n_total, n_total))
    p[:m_upper, :m_upper] = np.eye(m_upper)
    return p


def build_hamiltonian(spec: ModelSpec, t: float) -> np.ndarray:
    """H(t) with the upper block at energy kappa * t."""
    m = spec.m_upper
    h = np.zeros((spec.n_total, spec.n_total), dtype=complex)
    h[:m, :m] = spec.chirp_rate * t * np.eye(m)
    h[:m, m:] = spec.couplings
    h[m:, :m] = spec.couplings.conj().T
    return h


def build_noise_operator(spec: NoiseSpec, n_total: int, m_upper: int) -> np.ndarray:
    """Real symmetric X with zero diagonal blocks and W, W^T off the diagonal."""
    w = _as_block(spec.noise_couplings, m_upper, n_total, "noise_couplings", float)
    x = np.zeros((n_total, n_total))
    x[:m_upper, m_upper:] = w
    x[m_upper:, :m_upper] = w.T
    return x


def thermal_factor(omega: float, temperature: float) -> float:
    """Bose factor sign(w) / (1 - exp(-w / k_B T)).

    Equals n(w) + 1 for emission (w > 0) and n(|w|) for absorption (w < 0);
    at zero temperature it is 1 or 0 respectively.
    """
    if omega == 0:
        raise ValueError("thermal_factor is undefined at zero frequency")
    if temperature < 0:
        raise ValueError(f"temperature must be >= 0, got {temperature}")
    if temperature == 0:
        return 1.0 if omega > 0 else 0.0
    x = omega / temperature
    if x > 0:
        return 1.0 / -math.expm1(-x)
    if x < -700.0:
        return 0.0
    return 1.0 / math.expm1(-x)
