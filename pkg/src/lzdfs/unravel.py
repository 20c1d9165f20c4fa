"""Noise unravelling: estimate W from transfer efficiencies.

Measurements taken under several coherent coupling schemes are fitted by a
weighted least-squares misfit whose forward model is the full Lindblad
sweep. Two facts shape the search:

* The generator is quadratic in X, so W and -W are indistinguishable.
  Estimates are reported in a canonical sign class.
* Away from the true W the objective is nearly flat: any coupling that
  admits noise into the transfer pair destroys the efficiency at moderate
  gamma, whatever its details. Schemes observed to be decoherence-free
  (efficiency equal to the noiseless prediction) are therefore turned into
  linear constraints W b = 0, a^T W = 0 on their transfer states, and the
  multi-start search runs inside the null space of those constraints.
"""

from __future__ import annotations

import hashlib
import math
import threading
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import least_squares

from .experiments import fig3_couplings, transfer_states
from .integrator import IntegrationError, IntegratorOptions, evolve
from .model import DensityMatrix, ModelError, ModelSpec, NoiseSpec, build_noise_operator

__all__ = [
    "Measurement",
    "UnravelOptions",
    "UnravelResult",
    "SchemeCheck",
    "DfsReport",
    "ForwardModel",
    "unravel_noise",
    "dfs_constraint_check",
    "canonical_sign",
    "measurements_from_rows",
]


@dataclass(frozen=True)
class Measurement:
    """One observed efficiency under a known coupling scheme."""

    couplings: np.ndarray
    efficiency: float
    gamma: float = 1.0
    temperature: float = 0.001
    kappa: float = 0.1
    tau0: float = 50.0
    weight: float = 1.0
    delta1: float | None = None
    delta2: float | None = None
    initial_state: object = None
    target_state: object = None

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.couplings))
        object.__setattr__(self, "couplings", g)
        if not (-1e-9 <= self.efficiency <= 1 + 1e-9):
            raise ModelError(f"efficiency {self.efficiency!r} outside [0, 1]")
        if not self.weight >= 0:
            raise ModelError(f"weight must be >= 0, got {self.weight!r}")
        if not self.gamma >= 0 or not self.temperature >= 0:
            raise ModelError("gamma and temperature must be >= 0")

    @property
    def shape(self):
        m, k = self.couplings.shape
        return m + k, m

    def states(self):
        if self.initial_state is not None and self.target_state is not None:
            a = np.asarray(self.initial_state, dtype=complex)
            b = np.asarray(self.target_state, dtype=complex)
            return a / np.linalg.norm(a), b / np.linalg.norm(b)
        if self.couplings.shape != (2, 2):
            raise ModelError("transfer states must be given beyond the 2:2 case")
        a, b = transfer_states(self.couplings)
        return a.astype(complex), b.astype(complex)


def measurements_from_rows(rows, g_magnitude=1.0, text_couplings=True):
    """Measurements from parsed efficiency-CSV rows of the perturbed-coupling scenario."""
    out = []
    for i, row in enumerate(rows):
        if row["scenario"] != "perturbed-couplings":
            raise ModelError(f"row {i}: only perturbed-couplings rows can be unravelled, got {row['scenario']!r}")
        out.append(
            Measurement(
                couplings=fig3_couplings(row["delta1"], row["delta2"], g_magnitude, text_couplings),
                efficiency=row["efficiency"],
                gamma=row["gamma_over_omega"],
                temperature=row["kBT_over_omega"],
                kappa=row["kappa_over_omega2"],
                tau0=row["kappa_t0_over_omega"],
                weight=row.get("weight", 1.0),
                delta1=row["delta1"],
                delta2=row["delta2"],
            )
        )
    return out


@dataclass(frozen=True)
class UnravelOptions:
    n_starts: int = 16
    seed: int = 0
    bound: float = 2.0
    dfs_tol: float = 1e-6
    identifiability_floor: int | None = None
    n_refine: int = 3
    max_nfev: int = 40
    diff_step: float = 1e-3
    noise_floor: float = 1e-9
    threads: int | None = None
    use_dfs_constraints: bool = True
    integrator: IntegratorOptions = field(
        default_factory=lambda: IntegratorOptions(rtol=1e-7, atol=1e-9, n_samples=2)
    )


def canonical_sign(w):
    """Representative of {W, -W}: the entry of largest magnitude is made positive."""
    w = np.asarray(w, dtype=float)
    flat = w.ravel()
    if not flat.size or not np.any(flat):
        return w.copy()
    k = int(np.argmax(np.abs(flat) - 1e-12 * np.arange(flat.size)))
    return w.copy() if flat[k] > 0 else -w


class ForwardModel:
    """Simulated efficiencies for a fixed measurement set, with a shared cache."""

    def __init__(self, measurements, options: IntegratorOptions):
        self.measurements = list(measurements)
        self.options = options
        self._models = [ModelSpec.from_tau(m.couplings, m.kappa, m.tau0) for m in self.measurements]
        self._states = [m.states() for m in self.measurements]
        self._cache = {}
        self._lock = threading.Lock()
        self.n_evaluations = 0

    @staticmethod
    def _key(w):
        return hashlib.sha1(np.round(np.asarray(w, dtype=float), 13).tobytes()).hexdigest()

    def efficiency(self, w, k):
        key = (self._key(w), k)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        m = self.measurements[k]
        psi_i, psi_f = self._states[k]
        noise = NoiseSpec(np.asarray(w, dtype=float).reshape(m.couplings.shape), m.gamma, m.temperature)
        try:
            traj = evolve(DensityMatrix.from_pure(psi_i), self._models[k], noise, self.options)
            val = float(np.real(np.vdot(psi_f, traj.final @ psi_f)))
        except IntegrationError:
            val = math.nan
        with self._lock:
            self._cache.setdefault(key, val)
            self.n_evaluations += 1
        return val

    def predict(self, w):
        return np.array([self.efficiency(w, k) for k in range(len(self.measurements))])


@dataclass
class UnravelResult:
    estimated_w: np.ndarray
    residual: float
    equivalence_note: str
    ill_posed: bool = False
    dfs_schemes: tuple = ()
    search_dimension: int = 0
    n_evaluations: int = 0
    predicted: np.ndarray | None = None

    @property
    def norm(self):
        return float(np.linalg.norm(self.estimated_w))

    @property
    def direction(self):
        n = self.norm
        return self.estimated_w / n if n > 0 else self.estimated_w

    def effective_rate(self, gamma):
        """gamma * ||W||_F^2: the only scale the data fix when gamma is unknown."""
        return gamma * self.norm**2

    def report(self):
        lines = [
            "estimated W (canonical sign):",
            *("  " + " ".join(f"{x: .12g}" for x in row) for row in self.estimated_w),
            f"norm_F {self.norm:.12g}",
            f"rms residual {self.residual:.6g}",
            f"search dimension {self.search_dimension}",
            f"decoherence-free training schemes {list(self.dfs_schemes)}",
            f"forward evaluations {self.n_evaluations}",
            f"possibly ill-posed: {'yes' if self.ill_posed else 'no'}",
            f"equivalence: {self.equivalence_note}",
        ]
        return "\n".join(lines) + "\n"


def _dfs_constraint_rows(psi_i, psi_f, m, k):
    rows = []
    for psi in (psi_i, psi_f):
        a = psi[:m]
        b = psi[m:]
        for i in range(m):
            if np.any(b):
                r = np.zeros((m, k), dtype=complex)
                r[i, :] = b
                rows.append(r.ravel())
        for j in range(k):
            if np.any(a):
                r = np.zeros((m, k), dtype=complex)
                r[:, j] = a
                rows.append(r.ravel())
    if not rows:
        return np.zeros((0, m * k))
    c = np.array(rows)
    return np.vstack([c.real, c.imag])


def _weighted_rms(res, weights):
    tot = weights.sum()
    if tot == 0:
        return 0.0
    return float(math.sqrt(np.sum(weights * res**2) / tot))


def unravel_noise(measurements, initial_guess=None, options: UnravelOptions | None = None):
    """Fit W to observed efficiencies by constrained multi-start least squares."""
    opts = options or UnravelOptions()
    meas = list(measurements)
    if not meas:
        raise ModelError("at least one measurement is required")
    shapes = {m.couplings.shape for m in meas}
    if len(shapes) != 1:
        raise ModelError(f"measurements mix coupling shapes {sorted(shapes)}")
    (m_up, k_low), = shapes
    p = m_up * k_low
    floor = opts.identifiability_floor if opts.identifiability_floor is not None else p
    ill_posed = len(meas) < floor
    if ill_posed:
        warnings.warn(f"{len(meas)} measurements for {p} unknowns: possibly ill-posed", RuntimeWarning, stacklevel=2)

    fwd = ForwardModel(meas, opts.integrator)
    observed = np.array([m.efficiency for m in meas])
    weights = np.array([m.weight for m in meas], dtype=float)
    sqrt_w = np.sqrt(weights)
    zero = np.zeros((m_up, k_low))

    dfs = []
    if opts.use_dfs_constraints:
        for i, m in enumerate(meas):
            if m.gamma > 0 and abs(fwd.efficiency(zero, i) - m.efficiency) <= opts.dfs_tol:
                dfs.append(i)
    if dfs:
        rows = np.vstack([_dfs_constraint_rows(*fwd._states[i], m_up, k_low) for i in dfs])
        basis = null_space(rows, rcond=1e-10)
    else:
        basis = np.eye(p)
    d = basis.shape[1]

    def to_w(c):
        return (basis @ c).reshape(m_up, k_low)

    def residuals(c):
        pred = fwd.predict(to_w(c))
        r = sqrt_w * (pred - observed)
        return np.where(np.isfinite(r), r, 1.0)

    if d == 0:
        best_c = np.zeros(0)
    else:
        rng = np.random.default_rng(opts.seed)
        starts = list(rng.uniform(-opts.bound, opts.bound, size=(opts.n_starts, d)))
        if initial_guess is not None:
            starts[0] = basis.T @ np.asarray(initial_guess, dtype=float).ravel()
        lo, hi = -opts.bound * np.ones(d), opts.bound * np.ones(d)
        starts = [np.clip(s, lo, hi) for s in starts]
        threads = opts.threads or 1
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                screen = list(pool.map(lambda s: float(np.sum(residuals(s) ** 2)), starts))
        else:
            screen = [float(np.sum(residuals(s) ** 2)) for s in starts]
        order = np.argsort(screen, kind="stable")
        best_c, best_cost = starts[order[0]], screen[order[0]]
        for idx in order[: opts.n_refine]:
            sol = least_squares(
                residuals,
                starts[idx],
                bounds=(lo, hi),
                method="trf",
                diff_step=opts.diff_step,
                max_nfev=opts.max_nfev,
                xtol=1e-10,
                ftol=1e-12,
                gtol=1e-12,
            )
            if 2 * sol.cost < best_cost:
                best_c, best_cost = sol.x, 2 * sol.cost
            if _weighted_rms(residuals(best_c) / np.where(sqrt_w > 0, sqrt_w, 1), weights) <= opts.noise_floor:
                break

    w_hat = canonical_sign(to_w(best_c))
    pred = fwd.predict(w_hat)
    rms = _weighted_rms(pred - observed, weights)
    note = "sign class {W, -W}: the generator is quadratic in X, so both give identical efficiencies"
    if d < p:
        note += f"; searched the {d}-dimensional subspace allowed by {len(dfs)} decoherence-free scheme(s)"
    if d == 0:
        note += "; constraints leave only W = 0"
    return UnravelResult(
        estimated_w=w_hat,
        residual=rms,
        equivalence_note=note,
        ill_posed=ill_posed,
        dfs_schemes=tuple(dfs),
        search_dimension=d,
        n_evaluations=fwd.n_evaluations,
        predicted=pred,
    )


@dataclass(frozen=True)
class SchemeCheck:
    index: int
    initial_leak: float
    target_leak: float
    passed: bool


@dataclass(frozen=True)
class DfsReport:
    checks: tuple

    @property
    def passed(self):
        return all(c.passed for c in self.checks)


def dfs_constraint_check(candidate_w, observed_dfs_schemes, tol=1e-6):
    """Does ``candidate_w`` annihilate the transfer states of every scheme?

    Each scheme is a coupling block (2:2, states from its MS angles) or an
    explicit ``(initial, target)`` pair. The leak is ||X psi|| relative to
    max(1, ||W||_F).
    """
    w = np.atleast_2d(np.asarray(candidate_w, dtype=float))
    m, k = w.shape
    x = build_noise_operator(NoiseSpec(w), m + k, m)
    scale = max(1.0, float(np.linalg.norm(w)))
    checks = []
    for i, scheme in enumerate(observed_dfs_schemes):
        if isinstance(scheme, tuple) and len(scheme) == 2:
            psi_i, psi_f = (np.asarray(v, dtype=complex) for v in scheme)
        else:
            psi_i, psi_f = transfer_states(np.asarray(scheme))
        li = float(np.linalg.norm(x @ psi_i)) / scale
        lf = float(np.linalg.norm(x @ psi_f)) / scale
        checks.append(SchemeCheck(i, li, lf, li <= tol and lf <= tol))
    return DfsReport(tuple(checks))
