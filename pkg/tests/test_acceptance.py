"""Acceptance criteria 1-11 at their stated tolerances.

Each test prints one ``CRITERION n: PASS|FAIL`` line (collected into the
pytest terminal summary). Run directly with ``python tests/test_acceptance.py``
for the same lines without pytest.
"""

import functools
import math

import numpy as np

from lzdfs import _kernels
from lzdfs.dissipator import jump_channels, spectral_decompose
from lzdfs.experiments import OneToNConfig, SweepConfig, run_1_to_n, run_point, run_sweep
from lzdfs.integrator import IntegratorOptions, evolve, evolve_unitary, trace_distance
from lzdfs.model import DensityMatrix, ModelSpec, NoiseSpec, build_hamiltonian, build_noise_operator, thermal_factor
from lzdfs.morris_shore import (
    DegenerateBranchError,
    _branch_terms,
    find_dfs,
    morris_shore_general,
    rotation_angles_2x2,
    transform_block_2x2,
)
from lzdfs.unravel import Measurement, UnravelOptions, dfs_constraint_check, unravel_noise

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script
    ACCEPTANCE_LINES = []

HALF = np.full((2, 2), 0.5)
TEMPS = (0.001, 10.0)
GAMMA_MAX = 10.0


def report(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


# cached evolutions, shared with criterion 9


@functools.lru_cache(maxsize=None)
def flat_sweep(temperature):
    return tuple(run_sweep(SweepConfig(text_couplings=True, temperature=temperature)))


@functools.lru_cache(maxsize=None)
def coupling_point(delta1, temperature):
    cfg = SweepConfig(delta1=delta1, text_couplings=True, temperature=temperature, gamma_grid=(GAMMA_MAX,))
    return run_point(cfg, GAMMA_MAX)


@functools.lru_cache(maxsize=None)
def noise_flat_sweep():
    return tuple(run_sweep(SweepConfig(scenario="perturbed-noise")))


@functools.lru_cache(maxsize=None)
def noise_point(delta1, delta2):
    return run_point(SweepConfig(scenario="perturbed-noise", delta1=delta1, delta2=delta2), GAMMA_MAX)


@functools.lru_cache(maxsize=None)
def unitary_oracle_runs():
    rng = np.random.default_rng(4)
    out = []
    for _ in range(20):
        g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        w = rng.normal(size=(2, 2))
        psi = rng.normal(size=4) + 1j * rng.normal(size=4)
        psi /= np.linalg.norm(psi)
        model = ModelSpec.from_tau(g)
        traj = evolve(DensityMatrix.from_pure(psi), model, NoiseSpec(w, 0.0, 0.001), IntegratorOptions(n_samples=51))
        times, states = evolve_unitary(psi, model, full_output=True)
        f = states[-1]
        out.append((trace_distance(traj.final, np.outer(f, f.conj())), traj, np.linalg.norm(states, axis=1)))
    return tuple(out)


UNRAVEL_SCHEMES = (
    (0.0, 0.0),
    (math.pi / 36, 0.0),
    (0.0, math.pi / 18),
    (math.pi / 18, math.pi / 36),
    (math.pi / 9, 0.0),
    (0.0, math.pi / 9),
    (math.pi / 36, math.pi / 9),
    (math.pi / 18, math.pi / 18),
)


@functools.lru_cache(maxsize=None)
def unravel_data():
    # planted W is the all-1/2 block used by the perturbed-coupling scenario
    return tuple(
        run_point(SweepConfig(delta1=a, delta2=b, text_couplings=True, gamma_grid=(1.0,)), 1.0) for a, b in UNRAVEL_SCHEMES
    )


@functools.lru_cache(maxsize=None)
def unravel_fit():
    from lzdfs.experiments import fig3_couplings

    meas = [
        Measurement(fig3_couplings(a, b, 1.0, True), r.efficiency, 1.0, 0.001, delta1=a, delta2=b)
        for (a, b), r in zip(UNRAVEL_SCHEMES, unravel_data())
    ]
    return meas, unravel_noise(meas, options=UnravelOptions(seed=0))


@functools.lru_cache(maxsize=None)
def one_to_n(direction, gamma):
    cfg = OneToNConfig([[0.6, 0.8]], [[0.5, 0.5]], gamma_grid=(gamma,), temperature=0.0, direction=direction)
    return run_1_to_n(cfg)[0]


def test_criterion_1_dfs_flatness():
    details, ok = [], True
    for temp in TEMPS:
        eff = np.array([r.efficiency for r in flat_sweep(temp)])
        good = len(eff) == 25 and eff.min() >= 0.99 and eff.max() - eff.min() <= 1e-3
        ok &= bool(good)
        details.append(f"T={temp}: min {eff.min():.6f}, spread {eff.max() - eff.min():.2e}")
    assert report(1, ok, "; ".join(details))


def test_criterion_2_perturbation_ordering():
    details, ok = [], True
    for temp in TEMPS:
        e = [coupling_point(d, temp).efficiency for d in (0.0, math.pi / 36, math.pi / 18)]
        good = e[0] > e[1] > e[2]
        ok &= good
        details.append(f"T={temp}: {e[0]:.4g} > {e[1]:.4g} > {e[2]:.4g} {'holds' if good else 'violated'}")
    assert report(2, ok, "; ".join(details))


def test_criterion_3_noise_deviation():
    flat = np.array([r.efficiency for r in noise_flat_sweep()])
    ref = flat[-1]
    a = noise_point(math.pi / 36, math.pi / 18).efficiency
    b = noise_point(0.0, math.pi / 9).efficiency
    ok = flat.min() >= 0.99 and flat.max() - flat.min() <= 1e-3 and a < ref and b < ref
    assert report(3, ok, f"flat min {flat.min():.6f} spread {flat.max() - flat.min():.2e}; perturbed {a:.3g}, {b:.3g} vs {ref:.6f}")


def test_criterion_4_unitary_oracle():
    worst = max(d for d, _, _ in unitary_oracle_runs())
    assert report(4, worst <= 1e-6, f"worst trace distance {worst:.2e} over 20 configs")


def test_criterion_5_lzms_formula():
    errs = []
    for g in (0.25, 0.5, 1.0):
        f = evolve_unitary(np.array([0.0, 1.0]), ModelSpec.from_tau(np.array([[g]]), kappa=0.1, tau0=50.0))
        errs.append(abs(abs(f[0]) ** 2 - (1 - math.exp(-2 * math.pi * g**2 / 0.1))))
    assert report(5, max(errs) <= 0.02, "errors " + ", ".join(f"{e:.2e}" for e in errs))


def test_criterion_6_closed_form():
    rng = np.random.default_rng(6)
    worst_off, worst_sv, n = 0.0, 0.0, 0
    while n < 1000:
        w = rng.normal(size=(2, 2))
        _, _, _, d, e = _branch_terms(w)
        n2 = np.sum(w**2)
        if abs(d) <= 1e-6 * n2 or abs(e) <= 1e-6 * n2:
            continue
        n += 1
        try:
            ang = rotation_angles_2x2(w)
        except DegenerateBranchError:
            worst_off = math.inf
            continue
        t = transform_block_2x2(w, ang.xi, ang.chi)
        worst_off = max(worst_off, abs(t[0, 1]), abs(t[1, 0]))
        closed = np.sort(np.abs(np.diag(t)))
        svd = np.sort(morris_shore_general(w).pair_couplings)
        worst_sv = max(worst_sv, float(np.max(np.abs(closed - svd))))
    ok = worst_off <= 1e-10 and worst_sv <= 1e-10
    assert report(6, ok, f"max |x14|,|x23| {worst_off:.2e}; coupling mismatch {worst_sv:.2e}")


def test_criterion_7_half_special_case():
    ang = rotation_angles_2x2(HALF)
    dfs = np.real(find_dfs(NoiseSpec(HALF), 2, 4).dfs)
    s = 1 / math.sqrt(2)
    expect = [np.array([s, -s, 0, 0]), np.array([0, 0, s, -s])]
    found = all(any(np.allclose(v, sign * e, atol=1e-12) for v in dfs for sign in (1, -1)) for e in expect)
    ok = abs(ang.xi + math.pi / 4) <= 1e-12 and abs(ang.chi + math.pi / 4) <= 1e-12 and found and len(dfs) == 2
    assert report(7, ok, f"xi+pi/4 {ang.xi + math.pi / 4:.1e}, chi+pi/4 {ang.chi + math.pi / 4:.1e}, dfs found {found}")


def test_criterion_8_thermal_identity():
    worst = 0.0
    for om in np.linspace(0.05, 5.0, 10):
        for temp in np.logspace(-3, 1, 10):
            worst = max(worst, abs(thermal_factor(om, temp) - thermal_factor(-om, temp) - 1.0))
            worst = max(worst, abs(_kernels.thermal_factor(om, temp) - _kernels.thermal_factor(-om, temp) - 1.0))
    model = ModelSpec.from_tau(np.array([[0.6, -0.2], [0.3, 0.9]]))
    x = build_noise_operator(NoiseSpec(HALF), 4, 2)
    uphill = [
        ch.rate
        for t in (-300.0, -1.0, 0.5, 200.0)
        for ch in jump_channels(spectral_decompose(build_hamiltonian(model, t)), x, 1.0, 0.0)
        if ch.omega < 0
    ]
    zero = all(r == 0.0 for r in uphill) and thermal_factor(-1.0, 0.0) == 0.0 and _kernels.thermal_factor(-1.0, 0.0) == 0.0
    assert report(8, worst <= 1e-12 and zero and len(uphill) > 0, f"max offset error {worst:.1e}; {len(uphill)} uphill rates all zero: {zero}")


def test_criterion_9_state_validity():
    drifts, mins = [], []
    results = list(flat_sweep(0.001)) + list(flat_sweep(10.0)) + list(noise_flat_sweep())
    results += [coupling_point(d, t) for d in (0.0, math.pi / 36, math.pi / 18) for t in TEMPS]
    results += [noise_point(math.pi / 36, math.pi / 18), noise_point(0.0, math.pi / 9)]
    results += list(unravel_data())
    results += [one_to_n(d, g) for d in ("downhill", "uphill") for g in (0.0, 1.0)]
    for r in results:
        drifts.append(r.max_trace_drift)
        mins.append(r.min_eigenvalue)
    for _, traj, norms in unitary_oracle_runs():
        drifts.append(float(traj.trace_drift.max()))
        mins.append(float(traj.min_eigenvalue.min()))
        drifts.append(float(np.max(np.abs(norms**2 - 1))))
    ok = all(r.ok for r in results) and max(drifts) <= 1e-7 and min(mins) >= -1e-7
    assert report(9, ok, f"{len(drifts)} runs: max trace drift {max(drifts):.1e}, min eigenvalue {min(mins):.1e}")


def test_criterion_10_unravelling():
    meas, res = unravel_fit()
    err = min(np.max(np.abs(res.estimated_w - HALF)), np.max(np.abs(res.estimated_w + HALF)))
    dfs = [meas[i].couplings for i in res.dfs_schemes]
    check = dfs_constraint_check(res.estimated_w, dfs)
    ok = err <= 1e-2 and len(dfs) > 0 and check.passed
    assert report(10, ok, f"max entry error {err:.1e}, residual {res.residual:.1e}, dfs schemes {list(res.dfs_schemes)} pass {check.passed}")


def test_criterion_11_one_to_n_asymmetry():
    down, up = one_to_n("downhill", 1.0).efficiency, one_to_n("uphill", 1.0).efficiency
    d0, u0 = one_to_n("downhill", 0.0).efficiency, one_to_n("uphill", 0.0).efficiency
    ok = down >= up and abs(d0 - u0) <= 1e-6
    assert report(11, ok, f"gamma=1: downhill {down:.6f} >= uphill {up:.6f}; gamma=0 gap {abs(d0 - u0):.1e}")


if __name__ == "__main__":
    tests = [(int(k.split("_")[2]), f) for k, f in globals().items() if k.startswith("test_criterion_")]
    for _, fn in sorted(tests, key=lambda item: item[0]):
        try:
            fn()
        except AssertionError:
            pass
