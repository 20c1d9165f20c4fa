"""Time propagation over the sweep window [-t0, t0].

The Lindblad equation is integrated with an adaptive Dormand-Prince 5(4)
stepper and a PI step-size controller (see :mod:`lzdfs._kernels`). Two
representations of the same equation are available:

``frame="adiabatic"`` (default)
    The state is carried in the rotating frame of the instantaneous
    eigenbasis. Because H(t) is real in the Morris-Shore basis of G, that
    eigenbasis, its phases and the non-adiabatic couplings are known in
    closed form and are rebuilt at every right-hand-side evaluation. The
    state is then slowly varying, so the stepper is not forced to resolve
    the bare-basis oscillations at frequency ~kappa*t.

``frame="lab"``
    The bare basis, with a numerical eigendecomposition and clustering of
    H(t) at every evaluation. Much slower at large kappa*t0; kept as an
    independent reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .model import DensityMatrix, ModelSpec, NoiseSpec, build_noise_operator

__all__ = [
    "IntegratorOptions",
    "Trajectory",
    "IntegrationError",
    "AdiabaticFrame",
    "evolve",
    "evolve_unitary",
    "trace_distance",
]


class IntegrationError(RuntimeError):
    """Step-size underflow or step budget exhausted; ``time`` is where it happened."""

    def __init__(self, message, time):
        super().__init__(f"{message} at t={time:.6g}")
        self.time = time


@dataclass(frozen=True)
class IntegratorOptions:
    rtol: float = 1e-8
    atol: float = 1e-10
    first_step: float = 1e-3
    max_step: float = 0.1
    n_samples: int = 501
    frame: str = "adiabatic"
    cluster_tol: float = 1e-6
    max_steps: int = 20_000_000

    def __post_init__(self):
        if self.frame not in ("adiabatic", "lab"):
            raise ValueError(f"unknown frame {self.frame!r}")
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        if not (self.rtol > 0 and self.atol > 0 and self.max_step > 0 and self.first_step > 0):
            raise ValueError("tolerances and step bounds must be positive")


UNITARY_DEFAULTS = IntegratorOptions(rtol=1e-13, atol=1e-15, frame="lab")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    trace_drift: np.ndarray
    min_eigenvalue: np.ndarray
    n_accepted: int = 0
    n_rejected: int = 0
    max_hermiticity_deviation: float = 0.0
    frame: str = "adiabatic"
    extra: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.states[-1]

    def populations(self):
        return np.real(np.einsum("kii->ki", self.states))

    def population(self, psi):
        psi = np.asarray(psi, dtype=complex)
        return np.real(np.einsum("i,kij,j->k", psi.conj(), self.states, psi))


class AdiabaticFrame:
    """Closed-form instantaneous eigenbasis of H(t) for a block-coupled model.

    With G = U diag(s) V^dagger the constant unitary Q stacks the pairs
    (u_k, v_k) followed by the uncoupled upper and lower vectors. In that
    basis each pair carries a 2x2 crossing [[kappa t, s_k], [s_k, 0]] whose
    eigenvectors are rotations by theta_k(t) = atan2(2 s_k, kappa t) / 2.
    """

    def __init__(self, model: ModelSpec, rank_tol=1e-12):
        g = model.couplings
        m, k = g.shape
        n = m + k
        u, s, vh = np.linalg.svd(g)
        v = vh.conj().T
        tol = rank_tol * max(1.0, s.max(initial=0.0))
        r = int(np.sum(s > tol))
        q = np.zeros((n, n), dtype=complex)
        col = 0
        for i in range(r):
            q[:m, col] = u[:, i]
            q[m:, col + 1] = v[:, i]
            col += 2
        for i in range(r, m):
            q[:m, col] = u[:, i]
            col += 1
        for i in range(r, k):
            q[m:, col] = v[:, i]
            col += 1
        self.q = q
        self.svals = np.ascontiguousarray(s[:r], dtype=float)
        self.n_up_dark = m - r
        self.n_low_dark = k - r
        self.kappa = float(model.chirp_rate)
        self.n = n

    def data(self, t):
        return _kernels.frame_data(float(t), self.kappa, self.svals, self.n_up_dark, self.n_low_dark)

    def basis(self, t):
        """Columns are the adiabatic states at time t, and their phases."""
        energies, phases, thetas, _ = self.data(t)
        b = _kernels.pair_rotation(thetas, self.n)
        return self.q @ b, phases, energies

    def to_frame(self, rho, t):
        v, ph, _ = self.basis(t)
        z = np.exp(1j * ph)
        return z[:, None] * (v.conj().T @ rho @ v) * z.conj()[None, :]

    def from_frame(self, rho_b, t):
        v, ph, _ = self.basis(t)
        z = np.exp(-1j * ph)
        return v @ (z[:, None] * rho_b * z.conj()[None, :]) @ v.conj().T


def _check_rho(rho0, n):
    if isinstance(rho0, DensityMatrix):
        rho = rho0.entries
    else:
        rho = DensityMatrix(np.asarray(rho0, dtype=complex)).entries
    if rho.shape != (n, n):
        raise ValueError(f"initial state has shape {rho.shape}, model needs {(n, n)}")
    return np.array(rho, dtype=complex)


def _raise_on_status(status, t_fail):
    if status == _kernels.STATUS_UNDERFLOW:
        raise IntegrationError("step size underflow", t_fail)
    if status == _kernels.STATUS_MAX_STEPS:
        raise IntegrationError("step budget exhausted", t_fail)


def evolve(rho0, model: ModelSpec, noise: NoiseSpec, options: IntegratorOptions | None = None):
    """Propagate ``rho0`` from -t0 to +t0 under the time-dependent Davies generator.

    Returns a :class:`Trajectory` sampled at ``options.n_samples`` uniformly
    spaced times (bare basis). Raises :class:`IntegrationError` on failure.
    """
    opts = options or IntegratorOptions()
    n, m = model.n_total, model.m_upper
    rho = _check_rho(rho0, n)
    x = build_noise_operator(noise, n, m).astype(complex)
    t0 = model.sweep_half_width
    times = np.linspace(-t0, t0, opts.n_samples)
    gamma = float(noise.rate_constant)
    temp = float(noise.temperature)

    if opts.frame == "adiabatic":
        frame = AdiabaticFrame(model)
        xq = np.ascontiguousarray(frame.q.conj().T @ x @ frame.q)
        ws = _kernels.rotating_workspace(n, frame.svals.size)
        params = (frame.kappa, frame.svals, frame.n_up_dark, xq, gamma, temp, opts.cluster_tol, ws)
        y0 = np.ascontiguousarray(frame.to_frame(rho, times[0])).reshape(-1)
        rhs = _kernels.rhs_lindblad_rotating
    else:
        frame = None
        coupling = np.zeros((n, n), dtype=complex)
        coupling[:m, m:] = model.couplings
        coupling[m:, :m] = model.couplings.conj().T
        params = (float(model.chirp_rate), m, coupling, x, gamma, temp, opts.cluster_tol)
        y0 = rho.reshape(-1).copy()
        rhs = _kernels.rhs_lindblad_lab

    out, status, t_fail, n_acc, n_rej, herm = _kernels.dopri5(
        rhs, params, y0, times, opts.rtol, opts.atol, opts.first_step, opts.max_step, n, opts.max_steps
    )
    _raise_on_status(status, t_fail)

    states = out.reshape(-1, n, n)
    if frame is not None:
        states = np.array([frame.from_frame(states[i], times[i]) for i in range(len(times))])
    states = 0.5 * (states + np.conj(np.transpose(states, (0, 2, 1))))
    drift = np.abs(np.real(np.trace(states, axis1=1, axis2=2)) - 1.0)
    mins = np.linalg.eigvalsh(states)[:, 0]
    return Trajectory(
        times=times,
        states=states,
        trace_drift=drift,
        min_eigenvalue=mins,
        n_accepted=int(n_acc),
        n_rejected=int(n_rej),
        max_hermiticity_deviation=float(herm),
        frame=opts.frame,
    )


def evolve_unitary(psi0, model: ModelSpec, options: IntegratorOptions | None = None, full_output=False):
    """Schrodinger propagation in the bare basis (reference for the noiseless limit).

    Returns the final state vector, or ``(times, states)`` when ``full_output``.
    """
    opts = options or UNITARY_DEFAULTS
    n, m = model.n_total, model.m_upper
    psi = np.array(psi0, dtype=complex).reshape(-1)
    if psi.size != n:
        raise ValueError(f"state has {psi.size} entries, model needs {n}")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"initial state must be normalized, |psi| = {norm!r}")
    coupling = np.zeros((n, n), dtype=complex)
    coupling[:m, m:] = model.couplings
    coupling[m:, :m] = model.couplings.conj().T
    t0 = model.sweep_half_width
    times = np.linspace(-t0, t0, opts.n_samples)
    params = (float(model.chirp_rate), m, coupling)
    out, status, t_fail, *_ = _kernels.dopri5(
        _kernels.rhs_schrodinger, params, psi, times, opts.rtol, opts.atol,
        opts.first_step, opts.max_step, 0, opts.max_steps,
    )
    _raise_on_status(status, t_fail)
    if full_output:
        return times, out
    return out[-1]


def trace_distance(rho, sigma):
    """Half the trace norm of rho - sigma."""
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(np.asarray(rho) - np.asarray(sigma)))))
