import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from necl import cli

ROOT = Path(__file__).resolve().parents[1]

SMALL = {
    "seed": 5,
    "tau": 1.0,
    "dt": 0.01,
    "trajectories": 300,
    "chunk": 64,
    "system": {"omega": 1.0, "initial": "thermal", "beta": 1.0},
    "reservoirs": [
        {"name": "hot", "beta": 0.5, "modes": {"omega": [0.8, 1.3], "c": [0.3, 0.2]}, "L": 0.4},
        {"name": "cold", "beta": 2.0, "spectral": {"count": 4, "omega_max": 3.0}, "r": 0.2},
    ],
    "lambda_grid": [[0, 0, 0], [0, -0.2, 0], [0, 0.2, 0], [0, 0, -0.1], [0.1, 0, 0]],
}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run(tmp_path, task, cfg, *extra, out="out"):
    return cli.main([task, "--config", write(tmp_path, cfg), "--out-dir", str(tmp_path / out), *extra])


def test_verify_fdr_passes(tmp_path):
    assert run(tmp_path, "verify-fdr", {"reservoirs": SMALL["reservoirs"], "fdr": {"omega": 1.3, "beta": 0.7}}) == 0
    header, *rows = (tmp_path / "out" / "fdr_residual.csv").read_text().splitlines()
    assert rows and all(float(r.split(",")[-1]) < 1e-12 for r in rows)


def test_verify_fdr_rejects_counting_field(tmp_path):
    assert run(tmp_path, "verify-fdr", {"reservoirs": SMALL["reservoirs"], "fdr": {"lam": 0.3}}) == 2


def test_empty_reservoir_list_is_schema_error(tmp_path, capsys):
    assert run(tmp_path, "simulate", SMALL | {"reservoirs": []}) == 2
    assert "config error at /reservoirs" in capsys.readouterr().err


def test_bad_field_reports_path(tmp_path, capsys):
    cfg = json.loads(json.dumps(SMALL))
    cfg["reservoirs"][1]["beta"] = -1
    assert run(tmp_path, "simulate", cfg) == 2
    assert "/reservoirs/1/beta" in capsys.readouterr().err


def test_mgf_needs_trajectories(tmp_path):
    assert run(tmp_path, "mgf", SMALL | {"trajectories": 0}) == 2


def test_missing_config_file(tmp_path):
    assert cli.main(["mgf", "--config", str(tmp_path / "nope.json"), "--out-dir", str(tmp_path)]) == 2


def test_quantum_precision_abort(tmp_path):
    cfg = {
        "tau": 1.0,
        "system": {"omega": 1.0, "initial": "thermal", "beta": 0.2},
        "reservoirs": [{"beta": 2.0, "modes": {"omega": [1.0], "c": [0.2]}}],
        "quantum": {"system_cutoff": 4, "mode_cutoff": 4},
    }
    assert run(tmp_path, "quantum", cfg) == 3


def test_quantum_task_outputs(tmp_path):
    cfg = {
        "tau": 1.0,
        "system": {"omega": 1.0, "initial": "thermal", "beta": 3.0},
        "reservoirs": [{"beta": 3.0, "modes": {"omega": [1.1], "c": [0.3]}, "L": 0.2}],
        "lambda_grid": [[0, 0], [-0.2, 0.3]],
        "quantum": {"system_cutoff": 10, "mode_cutoff": 12},
    }
    assert run(tmp_path, "quantum", cfg) == 0
    out = tmp_path / "out"
    thermo = json.loads((out / "quantum_thermo.json").read_text())
    assert thermo["sigma"] >= -1e-10
    assert (out / "quantum_ft.csv").exists() and (out / "quantum_mgf.csv").exists()


def test_manifest_and_resolved_config(tmp_path):
    assert run(tmp_path, "mgf", SMALL) == 0
    out = tmp_path / "out"
    manifest = json.loads((out / "manifest.json").read_text())
    for key in ("task", "config_hash", "version", "started", "finished", "threads", "outputs", "summary", "gate_passed"):
        assert key in manifest
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert resolved["hbar"] == 1.0 and resolved["flavor"] == "total"
    assert resolved["reservoirs"][1]["spectral"]["scheme"] == "gauss-legendre"
    assert resolved["reservoirs"][0]["switching"]["kind"] == "constant"
    assert all(str(out / f).startswith(str(out)) for f in manifest["outputs"])


def test_csv_round_trips_floats(tmp_path):
    assert run(tmp_path, "mgf", SMALL) == 0
    _, *rows = (tmp_path / "out" / "mgf.csv").read_text().splitlines()
    for r in rows:
        for v in r.split(",")[:-1]:
            assert float(repr(float(v))) == float(v)


def test_results_independent_of_threads(tmp_path):
    outputs = []
    for k, threads in enumerate(("1", "3")):
        assert run(tmp_path, "simulate", SMALL, "--threads", threads, out=f"o{k}") == 0
        outputs.append((tmp_path / f"o{k}" / "trajectories.csv").read_bytes())
    assert outputs[0] == outputs[1]


def test_threads_env_fallback(monkeypatch):
    monkeypatch.setenv("NECL_THREADS", "2")
    assert cli.resolve_threads(None, {"threads": None}) == 2
    assert cli.resolve_threads(None, {"threads": 4}) == 4
    assert cli.resolve_threads(1, {"threads": 4}) == 1


def test_seed_override_changes_results(tmp_path):
    run(tmp_path, "simulate", SMALL, out="a")
    run(tmp_path, "simulate", SMALL, "--seed", "6", out="b")
    assert (tmp_path / "a" / "trajectories.csv").read_bytes() != (tmp_path / "b" / "trajectories.csv").read_bytes()


def test_dump_paths(tmp_path):
    assert run(tmp_path, "simulate", SMALL, "--dump-paths", "2") == 0
    assert len(list((tmp_path / "out" / "paths").glob("*.csv"))) == 2


def test_verify_ft_gate(tmp_path):
    cfg = SMALL | {"trajectories": 2000, "lambda_grid": [[-0.5, -0.25, -1.0]]}
    assert run(tmp_path, "verify-ft", cfg) == 0


def test_greens_influence_and_limits(tmp_path):
    base = {"reservoirs": SMALL["reservoirs"], "tau": 2.0}
    assert run(tmp_path, "greens", base | {"greens": {"lam": 0.3, "points": 50}}) == 0
    assert len(list((tmp_path / "out").glob("greens_*.csv"))) == 4
    assert run(tmp_path, "classical-limit", base | {"classical_limit": {"lam": 0.4}}, out="cl") == 0
    influence = {"reservoirs": [{"beta": 1.0, "modes": {"omega": [1.0], "c": [0.3]}}], "tau": 2.0}
    assert run(tmp_path, "influence", influence, out="inf") == 0
    action = json.loads((tmp_path / "inf" / "influence.json").read_text())
    # default forward and backward paths coincide, so the action vanishes
    assert action["total"] == {"re": 0.0, "im": 0.0}


@pytest.fixture(scope="module")
def plots(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("plots")
    assert run(tmp, "mgf", SMALL) == 0
    assert run(tmp, "greens", {"reservoirs": SMALL["reservoirs"], "tau": 2.0, "greens": {"lam": 0.2}}, out="out") == 0
    assert cli.main(["plots", "--out-dir", str(tmp / "out")]) == 0
    return tmp / "out" / "plots"


class TestPlots:
    def test_mgf_slice(self, plots):
        data = np.loadtxt(plots / "mgf_slice_lambda_1.dat")
        assert data.shape == (3, 3)
        assert np.all(np.diff(data[:, 0]) > 0)

    def test_kernel_curve(self, plots):
        data = np.loadtxt(plots / "kernel_C2_hot.dat")
        assert data.shape == (200, 2) and np.all(np.diff(data[:, 0]) > 0)
        assert (plots / "kernel_C2sq_cold.dat").exists()

    def test_gf_scan(self, plots):
        data = np.loadtxt(plots / "gf_scan_minus_plus.dat")
        assert data.shape[1] == 3 and np.any(data[:, 2] != 0)

    def test_missing_inputs(self, tmp_path):
        assert cli.main(["plots", "--out-dir", str(tmp_path)]) == 2


def test_schema_subcommand(capsys):
    assert cli.main(["schema"]) == 0
    assert '"reservoirs"' in capsys.readouterr().out


def test_four_reservoir_demo_config_validates():
    cfg = cli.read_config(ROOT / "demos" / "configs" / "four_reservoirs.json")
    assert len(cfg["reservoirs"]) == 4
    assert cli.lambda_grid(cfg).shape == (6, 5)


def test_acceptance_subcommand(capsys):
    assert cli.main(["acceptance", "--only", "4", "6"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2 and all("[PASS]" in line for line in lines)


@pytest.mark.skipif(shutil.which("necl") is None, reason="console script not installed")
def test_console_script(tmp_path):
    cfg = write(tmp_path, {"reservoirs": SMALL["reservoirs"]})
    proc = subprocess.run(["necl", "verify-fdr", "--config", cfg, "--out-dir", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "necl.cli", "--version"], capture_output=True, text=True)
    assert "necl" in proc.stdout
