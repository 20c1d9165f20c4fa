"""Transfer-efficiency experiments and the sweep harness.

Every run starts in a pure state of the lower level at t = -t0 and reports
the population of a target state of the upper level at t = +t0, with
gamma swept over a logarithmic grid.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .integrator import IntegrationError, IntegratorOptions, evolve
from .model import DensityMatrix, ModelError, ModelSpec, NoiseSpec
from .morris_shore import angles_from_couplings, morris_shore_general

__all__ = [
    "SCENARIOS",
    "CSV_COLUMNS",
    "SweepConfig",
    "OneToNConfig",
    "EfficiencyResult",
    "default_gamma_grid",
    "fig3_couplings",
    "fig4_noise",
    "text_dfs_couplings",
    "transfer_states",
    "run_point",
    "run_sweep",
    "run_1_to_n",
    "write_efficiency_csv",
    "read_efficiency_csv",
    "format_float",
]

SCENARIOS = ("perturbed-couplings", "perturbed-noise", "custom")

CSV_COLUMNS = (
    "scenario",
    "delta1",
    "delta2",
    "gamma_over_omega",
    "kBT_over_omega",
    "kappa_over_omega2",
    "kappa_t0_over_omega",
    "efficiency",
)

_SQRT_HALF = 1.0 / math.sqrt(2.0)


def default_gamma_grid(n=25, low=1e-3, high=10.0):
    return tuple(np.logspace(math.log10(low), math.log10(high), n))


def format_float(x):
    return f"{float(x):.12g}"


def fig3_couplings(delta1=0.0, delta2=0.0, g=1.0, text_couplings=False):
    """2x2 coherent block [[g13, g14], [g23, g24]] of the perturbed-coupling family.

    The default is the four-angle parameterization with first-row angle
    pi/4 + delta1 and second-row angle 3pi/4 + delta2. With
    ``text_couplings`` the first-row angle becomes -pi/4 + delta1, so that
    delta = 0 gives the decoherence-free set (g/2, -g/2, -g/2, g/2).
    """
    a1 = (-math.pi / 4 if text_couplings else math.pi / 4) + delta1
    a2 = 3 * math.pi / 4 + delta2
    c = _SQRT_HALF * g
    return np.array([[c * math.cos(a1), c * math.sin(a1)], [c * math.cos(a2), c * math.sin(a2)]])


def text_dfs_couplings(g=1.0):
    return fig3_couplings(0.0, 0.0, g, text_couplings=True)


def fig4_noise(delta1=0.0, delta2=0.0):
    """Noise block with row angles pi/4 + delta1 and pi/4 + delta2."""
    a1 = math.pi / 4 + delta1
    a2 = math.pi / 4 + delta2
    return np.array(
        [[_SQRT_HALF * math.cos(a1), _SQRT_HALF * math.sin(a1)], [_SQRT_HALF * math.cos(a2), _SQRT_HALF * math.sin(a2)]]
    )


def transfer_states(g):
    """Initial (lower level) and target (upper level) states of a 2:2 block.

    psi_i = -sin(chi)|3> + cos(chi)|4>, psi_f = -sin(xi)|1> + cos(xi)|2>.
    """
    ang = angles_from_couplings(g)
    psi_i = np.array([0.0, 0.0, -math.sin(ang.chi), math.cos(ang.chi)])
    psi_f = np.array([-math.sin(ang.xi), math.cos(ang.xi), 0.0, 0.0])
    return psi_i, psi_f


@dataclass(frozen=True)
class SweepConfig:
    """One efficiency-versus-gamma curve.

    ``couplings``, ``noise_couplings``, ``initial_state`` and ``target_state``
    are only read for the ``custom`` scenario; the other two scenarios build
    them from the deltas.
    """

    scenario: str = "perturbed-couplings"
    delta1: float = 0.0
    delta2: float = 0.0
    gamma_grid: tuple = field(default_factory=default_gamma_grid)
    temperature: float = 0.001
    kappa: float = 0.1
    tau0: float = 50.0
    g_magnitude: float = 1.0
    text_couplings: bool = False
    couplings: object = None
    noise_couplings: object = None
    initial_state: object = None
    target_state: object = None
    integrator: IntegratorOptions = field(default_factory=IntegratorOptions)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ModelError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        grid = tuple(float(x) for x in np.atleast_1d(self.gamma_grid))
        if any(not (x >= 0) for x in grid):
            raise ModelError("gamma_grid must be nonnegative")
        if list(grid) != sorted(grid):
            raise ModelError("gamma_grid must be sorted")
        object.__setattr__(self, "gamma_grid", grid)
        if not self.tau0 > 0 or not self.kappa > 0:
            raise ModelError("kappa and tau0 must be positive")
        if not self.temperature >= 0:
            raise ModelError("temperature must be >= 0")
        if self.scenario == "custom" and (self.couplings is None or self.noise_couplings is None):
            raise ModelError("custom scenario needs couplings and noise_couplings")

    def coherent_block(self):
        if self.scenario == "perturbed-couplings":
            return fig3_couplings(self.delta1, self.delta2, self.g_magnitude, self.text_couplings)
        if self.scenario == "perturbed-noise":
            return text_dfs_couplings(self.g_magnitude)
        return np.atleast_2d(np.asarray(self.couplings))

    def noise_block(self):
        if self.scenario == "perturbed-couplings":
            return fig4_noise(0.0, 0.0)
        if self.scenario == "perturbed-noise":
            return fig4_noise(self.delta1, self.delta2)
        return np.atleast_2d(np.asarray(self.noise_couplings, dtype=float))

    def model(self):
        return ModelSpec.from_tau(self.coherent_block(), kappa=self.kappa, tau0=self.tau0)

    def states(self):
        if self.initial_state is not None and self.target_state is not None:
            return (np.asarray(self.initial_state, dtype=complex), np.asarray(self.target_state, dtype=complex))
        g = self.coherent_block()
        if g.shape != (2, 2):
            raise ModelError("initial_state and target_state are required beyond the 2:2 case")
        return transfer_states(g)

    def metadata(self):
        return {
            "scenario": self.scenario,
            "delta1": self.delta1,
            "delta2": self.delta2,
            "temperature": self.temperature,
            "kappa": self.kappa,
            "tau0": self.tau0,
        }


@dataclass
class EfficiencyResult:
    gamma: float
    efficiency: float
    metadata: dict
    max_trace_drift: float = 0.0
    min_eigenvalue: float = 0.0
    error: str | None = None

    @property
    def ok(self):
        return self.error is None


def _normalized(psi):
    psi = np.asarray(psi, dtype=complex)
    return psi / np.linalg.norm(psi)


def _efficiency(model, noise, psi_i, psi_f, options, gamma, meta):
    try:
        traj = evolve(DensityMatrix.from_pure(_normalized(psi_i)), model, noise, options)
    except IntegrationError as exc:
        return EfficiencyResult(gamma, math.nan, meta, math.nan, math.nan, str(exc))
    eff = float(np.real(np.vdot(psi_f, traj.final @ psi_f)))
    return EfficiencyResult(
        gamma,
        eff,
        meta,
        float(traj.trace_drift.max()),
        float(traj.min_eigenvalue.min()),
    )


def run_point(config: SweepConfig, gamma: float) -> EfficiencyResult:
    """Efficiency of a single grid point."""
    model = config.model()
    noise = NoiseSpec(config.noise_block(), gamma, config.temperature)
    psi_i, psi_f = config.states()
    return _efficiency(model, noise, psi_i, _normalized(psi_f), config.integrator, gamma, config.metadata())


def _map_ordered(fn, items, threads):
    threads = threads or os.cpu_count() or 1
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def run_sweep(config: SweepConfig, threads=None):
    """Efficiency at every gamma of ``config.gamma_grid``, in grid order.

    A failed integration is reported in that point's ``error`` field and
    does not stop the sweep.
    """
    return _map_ordered(lambda gam: run_point(config, gam), list(config.gamma_grid), threads)


@dataclass(frozen=True)
class OneToNConfig:
    """1:(N-1) crossing: a single upper state coupled to N-1 lower states.

    ``direction="downhill"`` starts in the upper singlet |1> (the lowest
    diabatic energy at t = -t0) and targets its MS partner in the lower
    level. ``"uphill"`` is the reverse transfer.
    """

    couplings: object
    noise_couplings: object
    gamma_grid: tuple = field(default_factory=default_gamma_grid)
    temperature: float = 0.0
    kappa: float = 0.1
    tau0: float = 50.0
    direction: str = "downhill"
    integrator: IntegratorOptions = field(default_factory=IntegratorOptions)

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.couplings))
        if g.shape[0] != 1:
            raise ModelError(f"1:(N-1) needs a single upper state, couplings have shape {g.shape}")
        object.__setattr__(self, "couplings", g)
        if self.direction not in ("downhill", "uphill"):
            raise ModelError(f"direction must be 'downhill' or 'uphill', got {self.direction!r}")
        grid = tuple(float(x) for x in np.atleast_1d(self.gamma_grid))
        if any(not (x >= 0) for x in grid) or list(grid) != sorted(grid):
            raise ModelError("gamma_grid must be nonnegative and sorted")
        object.__setattr__(self, "gamma_grid", grid)

    def states(self):
        n = self.couplings.shape[1] + 1
        dec = morris_shore_general(self.couplings)
        upper = np.zeros(n, dtype=complex)
        upper[0] = 1.0
        lower = np.zeros(n, dtype=complex)
        lower[1:] = dec.lower_basis[0].conj()
        if self.direction == "downhill":
            return upper, lower
        return lower, upper


def run_1_to_n(config: OneToNConfig, threads=None):
    model = ModelSpec.from_tau(config.couplings, kappa=config.kappa, tau0=config.tau0)
    psi_i, psi_f = config.states()
    meta = {
        "scenario": f"1:{model.n_total - 1}-{config.direction}",
        "delta1": 0.0,
        "delta2": 0.0,
        "temperature": config.temperature,
        "kappa": config.kappa,
        "tau0": config.tau0,
    }

    def point(gam):
        noise = NoiseSpec(config.noise_couplings, gam, config.temperature)
        return _efficiency(model, noise, psi_i, psi_f, config.integrator, gam, meta)

    return _map_ordered(point, list(config.gamma_grid), threads)


def write_efficiency_csv(results, path, weights=None):
    """One row per result; floats with 12 significant digits."""
    cols = list(CSV_COLUMNS) + (["weight"] if weights is not None else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i, r in enumerate(results):
            m = r.metadata
            row = [
                m["scenario"],
                format_float(m["delta1"]),
                format_float(m["delta2"]),
                format_float(r.gamma),
                format_float(m["temperature"]),
                format_float(m["kappa"]),
                format_float(m["tau0"]),
                format_float(r.efficiency),
            ]
            if weights is not None:
                row.append(format_float(weights[i]))
            w.writerow(row)


def read_efficiency_csv(path):
    """Rows as dicts; numeric columns parsed to float."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ModelError(f"{path}: missing columns {missing}")
        rows = []
        for row in reader:
            parsed = {"scenario": row["scenario"]}
            for key, val in row.items():
                if key != "scenario":
                    parsed[key] = float(val)
            rows.append(parsed)
    return rows


def with_gamma_grid(config, grid):
    return replace(config, gamma_grid=tuple(grid))
