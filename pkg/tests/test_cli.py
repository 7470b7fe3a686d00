import json
import subprocess
import sys

import pytest

from tn2pqc.cli import build_parser, load_config, main
from tn2pqc.errors import ConfigurationError


def run(*args):
    return main([str(a) for a in args])


class TestConfigLoading:
    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"n": 6, "k": 2, "seed": 3}))
        args = build_parser().parse_args(["train-qcbm", "--config", str(path), "--seed", "9", "--layers", "4"])
        cfg = load_config(args)
        assert (cfg.n, cfg.k, cfg.seed) == (6, 4, 9)

    def test_grid_tasks_follow_rows_cols(self):
        args = build_parser().parse_args(["train-vqe", "--rows", "1", "--cols", "3"])
        cfg = load_config(args, task="heisenberg")
        assert cfg.n == 3

    def test_linear_final(self):
        args = build_parser().parse_args(["train-qcbm", "--n", "4", "--linear-final"])
        assert load_config(args).final_all_to_all is False

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"layers": 2}))
        with pytest.raises(ConfigurationError):
            load_config(build_parser().parse_args(["train-qcbm", "--config", str(path)]))


class TestCommands:
    def test_train_tnbm(self, tmp_path, capsys):
        assert run("train-tnbm", "--n", 6, "--chi", 3, "--out", tmp_path) == 0
        assert (tmp_path / "mps.bin").exists() and (tmp_path / "losses.csv").exists()
        assert "KL" in capsys.readouterr().out

    def test_ground_state_then_decompose(self, tmp_path):
        assert run("ground-state", "--rows", 2, "--cols", 2, "--chi", 4, "--out", tmp_path / "gs") == 0
        doc = json.loads((tmp_path / "gs" / "run.json").read_text())
        assert abs(doc["energy_error"]) < 1e-10
        assert run("decompose", "--mps", tmp_path / "gs" / "mps.bin", "--layers", 2, "--out", tmp_path / "dec") == 0
        assert (tmp_path / "dec" / "circuit.json").exists()
        assert (tmp_path / "dec" / "fidelity.csv").read_text().startswith("layers,fidelity")

    def test_train_qcbm(self, tmp_path):
        code = run("train-qcbm", "--n", 4, "--layers", 2, "--init", "random", "--iterations", 5, "--reps", 2, "--out", tmp_path)
        assert code == 0
        lines = (tmp_path / "losses.csv").read_text().splitlines()
        assert lines[0] == "run_id,iteration,loss" and len(lines) == 11
        assert (tmp_path / "plot.svg").exists()

    def test_synergy_and_vqe(self, tmp_path):
        assert run("synergy", "--n", 4, "--layers", 2, "--chi", 2, "--iterations", 3, "--out", tmp_path / "s") == 0
        assert run("train-vqe", "--rows", 1, "--cols", 3, "--layers", 2, "--iterations", 3, "--out", tmp_path / "v") == 0
        meta = json.loads((tmp_path / "s" / "run.json").read_text())
        assert meta[0]["decomposition_fidelity"] > 0.99

    def test_grad_variance(self, tmp_path, capsys):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"n": 4, "gradient_ns": [4], "repetitions": 5, "bootstrap_resamples": 100,
                                    "init": "random", "final_all_to_all": False}))
        assert run("grad-variance", "--config", path, "--out", tmp_path) == 0
        assert (tmp_path / "grad_variance.csv").read_text().startswith("n,k,topology,init,variance")


class TestExitCodes:
    def test_config_error(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{\"bogus\": 1}")
        assert run("train-qcbm", "--config", path) == 2

    def test_missing_config(self, tmp_path):
        assert run("train-qcbm", "--config", tmp_path / "nope.json") == 2

    def test_wrong_task(self):
        assert run("train-qcbm", "--task", "heisenberg", "--rows", 2, "--cols", 2) == 2

    def test_bad_mps_file(self, tmp_path):
        bad = tmp_path / "x.bin"
        bad.write_bytes(b"not an mps")
        assert run("decompose", "--mps", bad, "--layers", 1, "--out", tmp_path) == 1

    def test_bad_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            run("train-qcbm", "--layers", "many")
        assert exc.value.code == 2

    def test_console_entry(self):
        out = subprocess.run([sys.executable, "-m", "tn2pqc.cli", "--help"], capture_output=True, text=True)
        assert out.returncode == 0 and "grad-variance" in out.stdout
