"""CLI driver: exit codes, determinism, registry, config validation."""

import json
from pathlib import Path

from robustdual.cli import (
    EXIT_CHECK_FAILED,
    EXIT_CONFIG_ERROR,
    EXPERIMENTS,
    main,
)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
INSTANCES = CONFIG_DIR / "instances"


def write_finite_config(path: Path, instance: Path, **overrides) -> Path:
    cfg = {
        "experiment": "finite-duality",
        "instance": str(instance),
        "budgets": [1.0],
        "utilities": [{"kind": "log"}],
        "y_grid": {"lo": 0.1, "hi": 10.0, "n": 9},
        "tolerance_gap": 1e-5,
    }
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return path


class TestList:
    def test_at_least_five_sorted_experiments(self, capsys):
        assert main(["list"]) == 0
        lines = [ln for ln in capsys.readouterr().out.splitlines() if ln]
        assert len(lines) >= 5
        ids = [ln.split()[0] for ln in lines]
        assert ids == sorted(ids)
        assert set(ids) == set(EXPERIMENTS)

    def test_listing_stable(self, capsys):
        main(["list"])
        first = capsys.readouterr().out
        main(["list"])
        assert capsys.readouterr().out == first


class TestValidateConfig:
    def test_valid(self, capsys):
        assert main(["validate-config",
                     str(CONFIG_DIR / "finite_duality_binomial.toml")]) == 0

    def test_unknown_experiment(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"experiment": "frobnicate"}))
        assert main(["validate-config", str(bad)]) == EXIT_CONFIG_ERROR

    def test_missing_referenced_file(self, tmp_path, capsys):
        cfg = write_finite_config(tmp_path / "cfg.json",
                                  tmp_path / "nonexistent.json")
        assert main(["validate-config", str(cfg)]) == EXIT_CONFIG_ERROR

    def test_unparseable(self, tmp_path, capsys):
        broken = tmp_path / "broken.json"
        broken.write_text("{not json")
        assert main(["validate-config", str(broken)]) == EXIT_CONFIG_ERROR


class TestRun:
    def test_pass_and_reports(self, tmp_path, capsys):
        cfg = write_finite_config(tmp_path / "cfg.json",
                                  INSTANCES / "binomial_one_prior.json")
        code = main(["run", "finite-duality", "--config", str(cfg),
                     "--out", str(tmp_path / "out")])
        assert code == 0
        csv_path = tmp_path / "out" / "finite-duality" / "results.csv"
        manifest = tmp_path / "out" / "finite-duality" / "manifest.md"
        assert csv_path.exists() and manifest.exists()
        head = csv_path.read_text().splitlines()[0]
        assert head.startswith("# robustdual report schema v")
        assert "config hash" in manifest.read_text()

    def test_deterministic_csv_body(self, tmp_path):
        cfg = write_finite_config(tmp_path / "cfg.json",
                                  INSTANCES / "binomial_one_prior.json")
        main(["run", "finite-duality", "--config", str(cfg),
              "--out", str(tmp_path / "a")])
        main(["run", "finite-duality", "--config", str(cfg),
              "--out", str(tmp_path / "b")])
        csv_a = (tmp_path / "a" / "finite-duality" / "results.csv").read_bytes()
        csv_b = (tmp_path / "b" / "finite-duality" / "results.csv").read_bytes()
        assert csv_a == csv_b

    def test_check_failure_exit_code(self, tmp_path, capsys):
        cfg = write_finite_config(tmp_path / "cfg.json",
                                  INSTANCES / "arbitrage_instance.json")
        code = main(["run", "finite-duality", "--config", str(cfg),
                     "--out", str(tmp_path / "out")])
        assert code == EXIT_CHECK_FAILED
        body = (tmp_path / "out" / "finite-duality" / "results.csv").read_text()
        assert "FAIL" in body

    def test_unknown_experiment(self, tmp_path, capsys):
        cfg = write_finite_config(tmp_path / "cfg.json",
                                  INSTANCES / "binomial_one_prior.json")
        assert main(["run", "nonsense", "--config", str(cfg),
                     "--out", str(tmp_path / "out")]) == EXIT_CONFIG_ERROR

    def test_missing_instance_no_partial_output(self, tmp_path, capsys):
        cfg = write_finite_config(tmp_path / "cfg.json",
                                  tmp_path / "missing.json")
        out = tmp_path / "out"
        assert main(["run", "finite-duality", "--config", str(cfg),
                     "--out", str(out)]) == EXIT_CONFIG_ERROR
        assert not (out / "finite-duality" / "results.csv").exists()

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["run", "finite-duality", "--config",
                     str(tmp_path / "nope.toml"),
                     "--out", str(tmp_path / "out")]) == EXIT_CONFIG_ERROR

    def test_seed_recorded_and_overridable(self, tmp_path):
        cfg = write_finite_config(tmp_path / "cfg.json",
                                  INSTANCES / "binomial_one_prior.json")
        main(["run", "finite-duality", "--config", str(cfg),
              "--seed", "77", "--out", str(tmp_path / "out")])
        body = (tmp_path / "out" / "finite-duality" / "results.csv").read_text()
        assert ",77," in body

    def test_output_root_env_var(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("ROBUSTDUAL_OUT", str(tmp_path / "envroot"))
        monkeypatch.chdir(tmp_path)
        cfg = write_finite_config(tmp_path / "cfg.json",
                                  INSTANCES / "binomial_one_prior.json")
        assert main(["run", "finite-duality", "--config", str(cfg)]) == 0
        assert (tmp_path / "envroot" / "finite-duality" / "results.csv").exists()

    def test_parallel_runs_isolated(self, tmp_path, capsys):
        cfg1 = write_finite_config(tmp_path / "c1.json",
                                   INSTANCES / "binomial_one_prior.json")
        cfg2 = write_finite_config(tmp_path / "c2.json",
                                   INSTANCES / "binomial_two_prior.json")
        code = main(["run", "finite-duality", "finite-duality",
                     "--config", str(cfg1), "--config", str(cfg2),
                     "--parallel", "--out", str(tmp_path / "out")])
        assert code == 0

    def test_toml_config_supported(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text(
            'experiment = "finite-duality"\n'
            f'instance = "{INSTANCES / "binomial_one_prior.json"}"\n'
            "budgets = [1.0]\n"
            "tolerance_gap = 1e-5\n"
            "[y_grid]\nlo = 0.1\nhi = 10.0\nn = 9\n"
            '[[utilities]]\nkind = "log"\n')
        assert main(["run", "finite-duality", "--config", str(cfg),
                     "--out", str(tmp_path / "out")]) == 0
