import json
import math

import numpy as np

from lzdfs.cli import main
from lzdfs.experiments import EfficiencyResult, transfer_states, write_efficiency_csv
from lzdfs.integrator import IntegratorOptions, evolve_unitary
from lzdfs.model import ModelSpec
from lzdfs.unravel import ForwardModel, Measurement


def write(path, text):
    path.write_text(text)
    return str(path)


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_dfs_report(tmp_path):
    cfg = write(tmp_path / "d.cfg", "noise_couplings = 0.5, 0.5; 0.5, 0.5\n")
    assert main(["dfs", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    report = (tmp_path / "o" / "dfs_report.txt").read_text()
    assert "(0.707107, -0.707107, 0, 0)" in report and "(0, 0, 0.707107, -0.707107)" in report
    assert manifest(tmp_path / "o")["error"] is None


def test_missing_key_exit_code(tmp_path):
    cfg = write(tmp_path / "s.cfg", "scenario = perturbed-couplings\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "gamma" in manifest(tmp_path / "o")["error"]


def test_unknown_key_exit_code(tmp_path):
    cfg = write(tmp_path / "s.cfg", "scenario = perturbed-couplings\ngama = 1\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "gama" in manifest(tmp_path / "o")["error"]


def test_numerical_failure_exit_code(tmp_path):
    cfg = write(tmp_path / "s.cfg", "scenario = perturbed-couplings\ngamma = 1\nrtol = 1e-30\natol = 1e-30\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert manifest(tmp_path / "o")["error"]


def test_simulate_zero_rate_matches_unitary(tmp_path):
    cfg = write(tmp_path / "s.cfg", "scenario = perturbed-couplings\ndelta1 = pi/36\ngamma = 0\nn_samples = 5\n")
    out = tmp_path / "o"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    rows = (out / "trajectory.csv").read_text().splitlines()
    assert rows[0] == "time,p1,p2,p3,p4,target_population"
    final = np.array([float(x) for x in rows[-1].split(",")[1:5]])
    from lzdfs.experiments import fig3_couplings

    g = fig3_couplings(math.pi / 36, 0)
    psi_i, _ = transfer_states(g)
    f = evolve_unitary(psi_i, ModelSpec.from_tau(g))
    assert np.allclose(final, np.abs(f) ** 2, atol=1e-6)


def test_simulate_dfs_config(tmp_path):
    cfg = write(tmp_path / "s.cfg", "scenario = perturbed-couplings\ngamma = 0.1\nn_samples = 3\n")
    out = tmp_path / "o"
    assert main(["simulate", "--config", cfg, "--out", str(out), "--text-couplings"]) == 0
    assert manifest(out)["summary"]["final_target_population"] >= 0.99
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["version"] and "gamma = 0.1" in meta["config"]


def test_sweep_is_deterministic(tmp_path):
    cfg = write(tmp_path / "s.cfg", "scenario = perturbed-couplings\ndelta1 = pi/18\ngamma_points = 3\n")
    outs = []
    for name, threads in (("a", "1"), ("b", "2")):
        assert main(["sweep", "--config", cfg, "--out", str(tmp_path / name), "--threads", threads]) == 0
        outs.append((tmp_path / name / "efficiency.csv").read_bytes())
    assert outs[0] == outs[1]
    lines = outs[0].decode().splitlines()
    assert len(lines) == 4
    gammas = [float(x.split(",")[3]) for x in lines[1:]]
    assert gammas == sorted(gammas)


def test_unravel_command(tmp_path):
    schemes = [(0.0, 0.0), (math.pi / 36, 0.0)]
    from lzdfs.experiments import fig3_couplings

    meas = [Measurement(fig3_couplings(a, b, 1, True), 0.5, 1.0, 0.001) for a, b in schemes]
    effs = ForwardModel(meas, IntegratorOptions(n_samples=2)).predict(np.full((2, 2), 0.5))
    meta = lambda a, b: {"scenario": "perturbed-couplings", "delta1": a, "delta2": b, "temperature": 0.001, "kappa": 0.1, "tau0": 50.0}
    res = [EfficiencyResult(1.0, e, meta(a, b)) for (a, b), e in zip(schemes, effs)]
    write_efficiency_csv(res, tmp_path / "data.csv", weights=[1.0, 1.0])
    cfg = write(tmp_path / "u.cfg", "data = data.csv\nn_starts = 3\n")
    out = tmp_path / "o"
    assert main(["unravel", "--config", cfg, "--out", str(out), "--seed", "1"]) == 0
    report = (out / "unravel_report.txt").read_text()
    assert "sign class" in report and "dfs constraint check: pass" in report
    w = np.array([float(line.split(",")[2]) for line in (out / "estimated_w.csv").read_text().splitlines()[1:]])
    assert np.max(np.abs(w - 0.5)) <= 1e-2


def test_selftest(tmp_path):
    assert main(["selftest", "--out", str(tmp_path)]) == 0
    assert "FAIL" not in (tmp_path / "selftest.txt").read_text()
