"""Command-line entry point: ``lzdfs {simulate,sweep,dfs,unravel,selftest}``.

Every run writes ``manifest.json`` into the output directory, also when it
fails (with an ``error`` field), plus ``metadata.json`` echoing the parsed
configuration and the toolkit version. Exit codes: 0 success, 1 numerical
failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_config, render_config
from .experiments import (
    SweepConfig,
    default_gamma_grid,
    format_float,
    read_efficiency_csv,
    run_point,
    run_sweep,
    write_efficiency_csv,
)
from .integrator import IntegrationError, IntegratorOptions, evolve
from .model import DensityMatrix, ModelError, NoiseSpec, thermal_factor
from .morris_shore import (
    NoNoiseFreeTransferError,
    find_dfs,
    rotation_angles_2x2,
    synthesize_dfs_coupling,
)
from .unravel import UnravelOptions, dfs_constraint_check, measurements_from_rows, unravel_noise

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2

BUNDLED = ("fig3_dfs.cfg", "fig3_perturbed.cfg", "fig4_noise.cfg", "dfs_half.cfg", "simulate_dfs.cfg")


class NumericalFailure(RuntimeError):
    pass


def _require(cfg, *keys):
    for k in keys:
        if k not in cfg:
            raise ConfigError(f"missing required key {k!r}")


def _integrator(cfg, n_samples=501):
    return IntegratorOptions(
        rtol=cfg.get("rtol", 1e-8),
        atol=cfg.get("atol", 1e-10),
        n_samples=cfg.get("n_samples", n_samples),
        frame=cfg.get("frame", "adiabatic"),
    )


def _sweep_config(cfg, args, grid):
    return SweepConfig(
        scenario=cfg["scenario"],
        delta1=cfg.get("delta1", 0.0),
        delta2=cfg.get("delta2", 0.0),
        gamma_grid=tuple(grid),
        temperature=cfg.get("temperature", 0.001),
        kappa=cfg.get("kappa", 0.1),
        tau0=cfg.get("tau0", 50.0),
        g_magnitude=cfg.get("g_magnitude", 1.0),
        text_couplings=bool(args.text_couplings or cfg.get("text_couplings", False)),
        couplings=cfg.get("couplings"),
        noise_couplings=cfg.get("noise_couplings"),
        initial_state=cfg.get("initial_state"),
        target_state=cfg.get("target_state"),
        integrator=_integrator(cfg),
    )


def cmd_simulate(cfg, args, out):
    _require(cfg, "scenario", "gamma")
    sc = _sweep_config(cfg, args, [cfg["gamma"]])
    model = sc.model()
    psi_i, psi_f = sc.states()
    psi_i = psi_i / np.linalg.norm(psi_i)
    psi_f = psi_f / np.linalg.norm(psi_f)
    noise = NoiseSpec(sc.noise_block(), cfg["gamma"], sc.temperature)
    try:
        traj = evolve(DensityMatrix.from_pure(psi_i), model, noise, sc.integrator)
    except IntegrationError as exc:
        raise NumericalFailure(str(exc)) from exc
    pops = traj.populations()
    target = traj.population(psi_f)
    with open(out / "trajectory.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", *(f"p{i + 1}" for i in range(model.n_total)), "target_population"])
        for k, t in enumerate(traj.times):
            w.writerow([format_float(t), *(format_float(p) for p in pops[k]), format_float(target[k])])
    print(f"final target population {target[-1]:.12g}")
    return {"final_target_population": float(target[-1])}


def cmd_sweep(cfg, args, out):
    _require(cfg, "scenario")
    lo, hi, n = cfg.get("gamma_min", 1e-3), cfg.get("gamma_max", 10.0), cfg.get("gamma_points", 25)
    if not (0 < lo <= hi) or n < 1:
        raise ConfigError("need 0 < gamma_min <= gamma_max and gamma_points >= 1")
    sc = _sweep_config(cfg, args, default_gamma_grid(n, lo, hi))
    results = run_sweep(sc, threads=args.threads)
    write_efficiency_csv(results, out / "efficiency.csv")
    failed = [r for r in results if not r.ok]
    for r in results:
        print(f"gamma={r.gamma:.6g} efficiency={r.efficiency:.12g}" + (f" ERROR {r.error}" if r.error else ""))
    if failed:
        raise NumericalFailure(f"{len(failed)} of {len(results)} sweep points failed")
    return {"points": len(results)}


def _vector_text(v):
    return "(" + ", ".join(f"{x:.6g}" for x in np.real_if_close(v)) + ")"


def cmd_dfs(cfg, args, out):
    _require(cfg, "noise_couplings")
    w = np.atleast_2d(cfg["noise_couplings"])
    m, k = w.shape
    noise = NoiseSpec(w)
    split = find_dfs(noise, m, m + k)
    lines = [f"noise block {m}x{k}", f"decoherence-free states: {len(split.dfs)}"]
    lines += [f"  dfs {_vector_text(v)}" for v in split.dfs]
    lines += [f"  noisy {_vector_text(v)}" for v in split.noisy]
    lines.append("pair couplings " + ", ".join(f"{s:.12g}" for s in split.decomposition.pair_couplings))
    try:
        g = synthesize_dfs_coupling(noise, cfg.get("g_magnitude", 1.0))
        lines.append("noise-free coupling block:")
        lines += ["  " + " ".join(f"{x: .12g}" for x in np.real_if_close(row)) for row in g]
    except NoNoiseFreeTransferError as exc:
        lines.append(f"no noise-free transfer: {exc}")
    text = "\n".join(lines) + "\n"
    (out / "dfs_report.txt").write_text(text)
    with open(out / "dfs_vectors.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["kind", *(f"c{i + 1}" for i in range(m + k))])
        for kind, vecs in (("dfs", split.dfs), ("noisy", split.noisy)):
            for v in vecs:
                wr.writerow([kind, *(format_float(x) for x in np.real(v))])
    sys.stdout.write(text)
    return {"n_dfs": int(len(split.dfs))}


def cmd_unravel(cfg, args, out):
    data = args.data or cfg.get("data")
    if data is None:
        raise ConfigError("missing required key 'data'")
    if not os.path.isabs(data) and args.config:
        cand = Path(args.config).parent / data
        data = str(cand) if cand.exists() else data
    text = bool(args.text_couplings or cfg.get("text_couplings", True))
    rows = read_efficiency_csv(data)
    meas = measurements_from_rows(rows, cfg.get("g_magnitude", 1.0), text)
    opts = UnravelOptions(
        n_starts=cfg.get("n_starts", 16),
        seed=args.seed if args.seed is not None else cfg.get("seed", 0),
        bound=cfg.get("bound", 2.0),
        threads=args.threads,
        integrator=_integrator(cfg, n_samples=2) if "rtol" in cfg else UnravelOptions().integrator,
    )
    res = unravel_noise(meas, options=opts)
    check = dfs_constraint_check(res.estimated_w, [meas[i].couplings for i in res.dfs_schemes])
    report = res.report() + f"dfs constraint check: {'pass' if check.passed else 'fail'}\n"
    (out / "unravel_report.txt").write_text(report)
    m = res.estimated_w.shape[0]
    with open(out / "estimated_w.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["upper", "lower", "value"])
        for (i, j), val in np.ndenumerate(res.estimated_w):
            wr.writerow([i + 1, m + j + 1, format_float(val)])
    sys.stdout.write(report)
    return {"residual": res.residual, "ill_posed": res.ill_posed}


def bundled_config(name):
    return resources.files("lzdfs").joinpath("configs", name)


def cmd_selftest(cfg, args, out):
    checks = []

    def record(name, ok, detail):
        checks.append((name, bool(ok), detail))

    ang = rotation_angles_2x2(np.full((2, 2), 0.5))
    record("ms-half", abs(ang.xi + math.pi / 4) < 1e-12 and abs(ang.chi + math.pi / 4) < 1e-12, f"xi={ang.xi:.15g}")
    worst = max(
        abs(thermal_factor(om, tt) - thermal_factor(-om, tt) - 1.0)
        for om in np.linspace(0.1, 5, 10)
        for tt in np.logspace(-2, 1, 10)
    )
    record("thermal-offset", worst < 1e-12, f"max deviation {worst:.3e}")
    for name in BUNDLED:
        c = load_config(bundled_config(name))
        if "noise_couplings" in c and "scenario" not in c:
            split = find_dfs(NoiseSpec(c["noise_couplings"]), 2, 4)
            record(name, len(split.dfs) == 2, f"{len(split.dfs)} dfs states")
            continue
        gamma = c.get("gamma", 0.1)
        sc = _sweep_config(c, args, [gamma])
        r = run_point(sc, gamma)
        ok = r.ok and r.max_trace_drift <= 1e-7 and r.min_eigenvalue >= -1e-7 and -1e-9 <= r.efficiency <= 1 + 1e-9
        record(name, ok, f"gamma={gamma:.3g} efficiency={r.efficiency:.9f} drift={r.max_trace_drift:.1e}")
    lines = [f"{'PASS' if ok else 'FAIL'} {name}: {detail}" for name, ok, detail in checks]
    text = "\n".join(lines) + "\n"
    (out / "selftest.txt").write_text(text)
    sys.stdout.write(text)
    if not all(ok for _, ok, _ in checks):
        raise NumericalFailure("selftest failed")
    return {"checks": len(checks)}


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "dfs": cmd_dfs,
    "unravel": cmd_unravel,
    "selftest": cmd_selftest,
}


def build_parser():
    p = argparse.ArgumentParser(prog="lzdfs", description="Degenerate Landau-Zener sweeps under quantum noise.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="flat key = value configuration file")
        s.add_argument("--out", default=".", help="output directory (created if missing)")
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        s.add_argument("--text-couplings", action="store_true", help="use the decoherence-free coupling family")
        if name == "unravel":
            s.add_argument("--data", help="efficiency CSV with a weight column")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": args.command,
        "config": args.config,
        "output_dir": str(out),
        "seed": args.seed if args.seed is not None else 0,
        "version": __version__,
        "error": None,
    }
    start = time.perf_counter()
    code = EXIT_OK
    cfg = {}
    try:
        if args.config:
            cfg = load_config(args.config)
        elif args.command not in ("selftest",):
            raise ConfigError("--config is required")
        (out / "metadata.json").write_text(
            json.dumps({"version": __version__, "command": args.command, "config": render_config(cfg)}, indent=2)
            + "\n"
        )
        manifest["summary"] = COMMANDS[args.command](cfg, args, out)
    except (ConfigError, ModelError, FileNotFoundError) as exc:
        code = EXIT_CONFIG
        manifest["error"] = f"{type(exc).__name__}: {exc}"
    except (NumericalFailure, IntegrationError, ArithmeticError) as exc:
        code = EXIT_NUMERIC
        manifest["error"] = f"{type(exc).__name__}: {exc}"
    manifest["exit_code"] = code
    manifest["duration_seconds"] = round(time.perf_counter() - start, 3)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=float) + "\n")
    if manifest["error"]:
        print(f"error: {manifest['error']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
