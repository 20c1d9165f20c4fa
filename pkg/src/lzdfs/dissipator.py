"""Instantaneous Davies generator.

At each time the Hamiltonian is split into eigen-clusters ``(e_i, P_i)``;
the bath acts through jump operators ``P_i X P_j`` (i != j) with rates
``gamma * N(e_j - e_i, T)``. Pure-dephasing terms (i == j) are absent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import thermal_factor

__all__ = [
    "Cluster",
    "SpectralDecomposition",
    "JumpChannel",
    "default_cluster_tol",
    "spectral_decompose",
    "jump_channels",
    "lindblad_rhs",
    "dissipator",
]

CHANNEL_DROP_TOL = 1e-14


@dataclass(frozen=True)
class Cluster:
    energy: float
    projector: np.ndarray
    multiplicity: int


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalue clusters of a Hermitian matrix, sorted by energy."""

    clusters: tuple

    @property
    def energies(self):
        return np.array([c.energy for c in self.clusters])

    @property
    def projectors(self):
        return [c.projector for c in self.clusters]

    def reconstruct(self):
        return sum(c.energy * c.projector for c in self.clusters)


@dataclass(frozen=True)
class JumpChannel:
    """Jump ``operator = P_i X P_j`` at frequency ``omega = e_j - e_i``."""

    omega: float
    operator: np.ndarray
    rate: float
    source: int
    target: int


def default_cluster_tol(eigenvalues):
    return 1e-6 * max(1.0, float(np.max(eigenvalues) - np.min(eigenvalues)))


def spectral_decompose(h, tol=None) -> SpectralDecomposition:
    """Cluster the spectrum of ``h``: neighbours within ``tol`` share a projector."""
    h = np.asarray(h)
    w, v = np.linalg.eigh(h)
    if tol is None:
        tol = default_cluster_tol(w)
    groups = [[0]]
    for k in range(1, len(w)):
        if w[k] - w[k - 1] <= tol:
            groups[-1].append(k)
        else:
            groups.append([k])
    clusters = []
    for idx in groups:
        vecs = v[:, idx]
        clusters.append(Cluster(float(np.mean(w[idx])), vecs @ vecs.conj().T, len(idx)))
    return SpectralDecomposition(tuple(clusters))


def jump_channels(sd: SpectralDecomposition, x, gamma, temperature):
    """Channels for every ordered cluster pair (i, j), i != j, with a nonzero block."""
    x = np.asarray(x)
    channels = []
    for i, ci in enumerate(sd.clusters):
        for j, cj in enumerate(sd.clusters):
            if i == j:
                continue
            op = ci.projector @ x @ cj.projector
            if np.linalg.norm(op) <= CHANNEL_DROP_TOL:
                continue
            omega = cj.energy - ci.energy
            rate = gamma * thermal_factor(omega, temperature) if gamma else 0.0
            channels.append(JumpChannel(omega, op, rate, j, i))
    return channels


def dissipator(op, rho):
    """Lindblad form O rho O^dagger - {O^dagger O, rho} / 2."""
    od = op.conj().T
    odo = od @ op
    return op @ rho @ od - 0.5 * (odo @ rho + rho @ odo)


def lindblad_rhs(rho, h, channels):
    """-i[H, rho] plus the weighted dissipators of ``channels``."""
    rho = np.asarray(rho, dtype=complex)
    out = -1j * (h @ rho - rho @ h)
    for ch in channels:
        if ch.rate:
            out = out + ch.rate * dissipator(ch.operator, rho)
    return out
