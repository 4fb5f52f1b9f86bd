"""End-to-end command-line workflow: every subcommand, exit codes,
file formats, and byte-level determinism."""
import json

import numpy as np
import pytest

from wetchicken import cli, report
from wetchicken.config import ExperimentConfig


TINY_CONFIG = """\
model:
  iterations: 40
  minibatch: 16
  n_inducing: 8
  belief_update_every: 10
  belief_warmup: 10
policy:
  steps: 12
  samples: 4
  horizon: 3
nfq:
  iterations: 2
  max_fit_steps: 60
evaluation:
  horizon: 20
  rollouts: 50
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Dataset, config file, and trained artifacts shared by the tests."""
    root = tmp_path_factory.mktemp("cliwork")
    cfg = root / "config.yaml"
    cfg.write_text(TINY_CONFIG)
    data = root / "data.csv"
    assert cli.main(["gen-data", "--n", "40", "--seed", "5",
                     "--out", str(data)]) == 0
    return root


@pytest.fixture(scope="module")
def dagp_checkpoint(workdir):
    out = workdir / "dagp_model.json"
    code = cli.main(["train-model", "--data", str(workdir / "data.csv"),
                     "--method", "dagp", "--config",
                     str(workdir / "config.yaml"), "--out", str(out)])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def gp_checkpoint(workdir):
    out = workdir / "gp_model.json"
    code = cli.main(["train-model", "--data", str(workdir / "data.csv"),
                     "--method", "gp", "--config",
                     str(workdir / "config.yaml"), "--out", str(out)])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def policy_file(workdir, dagp_checkpoint):
    out = workdir / "policy.json"
    code = cli.main(["train-policy", "--model", str(dagp_checkpoint),
                     "--data", str(workdir / "data.csv"),
                     "--config", str(workdir / "config.yaml"),
                     "--seed", "3", "--out", str(out)])
    assert code == 0
    return out


class TestGenData:
    def test_row_count_and_stdout(self, workdir, capsys, tmp_path):
        out = tmp_path / "d.csv"
        assert cli.main(["gen-data", "--n", "25", "--seed", "1",
                         "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert "25 transitions" in text and "fall events" in text
        assert len(out.read_text().splitlines()) == 26  # header + rows

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        cli.main(["gen-data", "--n", "30", "--seed", "9", "--out", str(a)])
        cli.main(["gen-data", "--n", "30", "--seed", "9", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_data(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        cli.main(["gen-data", "--n", "30", "--seed", "1", "--out", str(a)])
        cli.main(["gen-data", "--n", "30", "--seed", "2", "--out", str(b)])
        assert a.read_bytes() != b.read_bytes()

    def test_zero_rows_is_usage_error(self, tmp_path, capsys):
        code = cli.main(["gen-data", "--n", "0", "--out",
                         str(tmp_path / "d.csv")])
        assert code == 2
        assert "usage error" in capsys.readouterr().err

    def test_unwritable_path_is_runtime_error(self, capsys):
        code = cli.main(["gen-data", "--n", "5", "--out",
                         "/no/such/dir/d.csv"])
        assert code == 1
        assert "error" in capsys.readouterr().err


class TestTrainModel:
    def test_dagp_checkpoint_and_sidecars(self, workdir, dagp_checkpoint):
        doc = json.loads(dagp_checkpoint.read_text())
        assert doc["kind"] == "dagp"
        kind, model = cli.load_model_checkpoint(dagp_checkpoint)
        assert kind == "dagp" and model.flow_gps[0][0].n_inducing == 8
        curve = (workdir / "dagp_model.curve.csv").read_text().splitlines()
        assert curve[0] == "iteration,objective" and len(curve) == 41
        beliefs = (workdir / "dagp_model.beliefs.csv").read_text()
        assert beliefs.splitlines()[0] == "index,belief_stay,belief_fall"

    def test_gp_checkpoint(self, gp_checkpoint):
        kind, model = cli.load_model_checkpoint(gp_checkpoint)
        assert kind == "gp" and len(model.gps) == 2

    def test_unknown_method_exits_2(self, workdir):
        with pytest.raises(SystemExit) as exc:
            cli.main(["train-model", "--data", str(workdir / "data.csv"),
                      "--method", "tabular", "--out", "x.json"])
        assert exc.value.code == 2

    def test_malformed_dataset_reports_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("x,y,ax,ay,xn,yn\n1,2,0,0,1,2\n1,2,oops,0,1,2\n")
        code = cli.main(["train-model", "--data", str(bad), "--method",
                         "gp", "--out", str(tmp_path / "m.json")])
        assert code == 1
        assert "line 3" in capsys.readouterr().err

    def test_missing_dataset_file(self, tmp_path, capsys):
        code = cli.main(["train-model", "--data",
                         str(tmp_path / "nope.csv"), "--method", "gp",
                         "--out", str(tmp_path / "m.json")])
        assert code == 1


class TestTrainPolicy:
    def test_policy_file_and_curve(self, workdir, policy_file):
        from wetchicken.policy import PolicyNet, act

        net = PolicyNet.load(policy_file)
        a = act(net, np.array([2.0, 2.0]))
        assert np.all(np.abs(a) <= 1.0)
        curve = (workdir / "policy.curve.csv").read_text().splitlines()
        assert curve[0] == "iteration,return_estimate" and len(curve) == 13

    def test_gp_checkpoint_also_accepted(self, workdir, gp_checkpoint,
                                         tmp_path):
        out = tmp_path / "p.json"
        code = cli.main(["train-policy", "--model", str(gp_checkpoint),
                         "--config", str(workdir / "config.yaml"),
                         "--out", str(out)])
        assert code == 0 and out.exists()

    def test_missing_model_file(self, tmp_path, capsys):
        code = cli.main(["train-policy", "--model",
                         str(tmp_path / "nope.json"),
                         "--out", str(tmp_path / "p.json")])
        assert code == 1

    def test_policy_file_rejected_as_model(self, workdir, policy_file,
                                           tmp_path, capsys):
        code = cli.main(["train-policy", "--model", str(policy_file),
                         "--config", str(workdir / "config.yaml"),
                         "--out", str(tmp_path / "p.json")])
        assert code == 1
        assert "checkpoint" in capsys.readouterr().err


class TestEvaluate:
    def test_random_policy_csv_and_table(self, workdir, capsys):
        out = workdir / "random_eval.csv"
        code = cli.main(["evaluate", "--method", "random", "--seeds",
                         "0,1,2", "--config", str(workdir / "config.yaml"),
                         "--out", str(out)])
        assert code == 0
        loaded = report.EvalReport.load_csv(out)
        values = loaded.seed_values("random", report.RANDOM_N)
        assert values.shape == (3,)
        assert 1.0 < values.mean() < 2.0  # river drift pays about 1.5
        table = (workdir / "random_eval.table.csv").read_text()
        assert table.splitlines()[0] == "N,random"
        assert capsys.readouterr().out == table

    def test_trained_policy_evaluates(self, workdir, policy_file,
                                      tmp_path):
        out = tmp_path / "eval.csv"
        code = cli.main(["evaluate", "--method", "dagp", "--policy",
                         str(policy_file), "--seeds", "0", "--n", "40",
                         "--config", str(workdir / "config.yaml"),
                         "--out", str(out)])
        assert code == 0
        assert report.EvalReport.load_csv(out).seed_values(
            "dagp", 40).shape == (1,)

    def test_rerun_is_byte_identical(self, workdir, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (a, b):
            cli.main(["evaluate", "--method", "random", "--seeds", "4,5",
                      "--config", str(workdir / "config.yaml"),
                      "--out", str(path)])
        assert a.read_bytes() == b.read_bytes()

    def test_empty_seeds_is_usage_error(self, tmp_path, capsys):
        code = cli.main(["evaluate", "--method", "random", "--seeds", " ,",
                         "--out", str(tmp_path / "e.csv")])
        assert code == 2

    def test_method_artifact_mismatches(self, workdir, policy_file,
                                        tmp_path):
        base = ["--config", str(workdir / "config.yaml"), "--seeds", "0",
                "--out", str(tmp_path / "e.csv")]
        assert cli.main(["evaluate", "--method", "dagp", "--n", "40"]
                        + base) == 2                      # needs --policy
        assert cli.main(["evaluate", "--method", "nfq", "--n", "40"]
                        + base) == 2                      # needs --qnet
        assert cli.main(["evaluate", "--method", "random", "--policy",
                         str(policy_file)] + base) == 2   # takes neither
        assert cli.main(["evaluate", "--method", "dagp", "--policy",
                         str(policy_file)] + base) == 2   # needs --n


class TestExportGrids:
    def test_dagp_grids(self, workdir, dagp_checkpoint, tmp_path):
        code = cli.main(["export-grids", "--model", str(dagp_checkpoint),
                         "--resolution", "5", "--out-dir", str(tmp_path)])
        assert code == 0
        lines = (tmp_path / "model_grids.csv").read_text().splitlines()
        assert lines[0] == "x,y,p_fall,sigma_x_stay"
        assert len(lines) == 26
        p_fall = np.array([float(l.split(",")[2]) for l in lines[1:]])
        assert np.all((p_fall >= 0.0) & (p_fall <= 1.0))

    def test_policy_quiver(self, policy_file, tmp_path):
        code = cli.main(["export-grids", "--policy", str(policy_file),
                         "--resolution", "4", "--out-dir", str(tmp_path)])
        assert code == 0
        lines = (tmp_path / "policy_quiver.csv").read_text().splitlines()
        assert lines[0] == "x,y,ax,ay" and len(lines) == 17

    def test_plain_gp_grids_not_supported(self, gp_checkpoint, tmp_path,
                                          capsys):
        code = cli.main(["export-grids", "--model", str(gp_checkpoint),
                         "--out-dir", str(tmp_path)])
        assert code == 1
        assert "not supported" in capsys.readouterr().err

    def test_no_artifact_is_usage_error(self, tmp_path):
        assert cli.main(["export-grids", "--out-dir", str(tmp_path)]) == 2


def fake_cell(config, method, n, seed):
    if method == "nfq" and seed == 1:
        raise RuntimeError("boom")
    return float(n + seed), float(10 * n + seed)


class TestSweep:
    def test_cell_list_covers_methods_sizes_seeds(self):
        cfg = ExperimentConfig(sizes=[10, 20], seeds=[0, 1],
                               methods=["dagp", "random"])
        cells = cli._sweep_cells(cfg)
        assert ("dagp", 10, 0) in cells and ("dagp", 20, 1) in cells
        assert ("random", report.RANDOM_N, 0) in cells
        assert len(cells) == 6

    def test_failed_cells_leave_holes(self, caplog):
        cfg = ExperimentConfig(sizes=[10], seeds=[0, 1],
                               methods=["nfq", "random"])
        results = cli.run_sweep(cfg, threads=1, cell_fn=fake_cell)
        assert results.seed_values("nfq", 10).shape == (1,)
        text = report.render_table(results, cfg.sizes, cfg.methods)
        assert "10,10.00 ± 0.00," in text

    def test_pool_matches_serial(self):
        cfg = ExperimentConfig(sizes=[10], seeds=[0, 1, 2],
                               methods=["dagp", "random"])
        serial = cli.run_sweep(cfg, threads=1, cell_fn=fake_cell)
        pooled = cli.run_sweep(cfg, threads=2, cell_fn=fake_cell)
        assert serial.rows == pooled.rows

    def test_reproduce_table_tiny_sweep(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text(
            "sizes: [30]\nseeds: [0, 1]\nmethods: [nfq, random]\n"
            "nfq:\n  iterations: 2\n  max_fit_steps: 40\n"
            "evaluation:\n  horizon: 10\n  rollouts: 30\n")
        out = tmp_path / "table.csv"
        code = cli.main(["reproduce-table", "--config", str(cfg),
                         "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "N,nfq,random"
        assert lines[1].startswith("30,")
        assert lines[2].startswith("random,")
        raw = report.EvalReport.load_csv(tmp_path / "table.results.csv")
        assert raw.seed_values("nfq", 30).shape == (2,)
        assert capsys.readouterr().out == out.read_text()

    def test_tiny_sweep_is_deterministic(self, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text(
            "sizes: [20]\nseeds: [0]\nmethods: [random]\n"
            "evaluation:\n  horizon: 10\n  rollouts: 20\n")
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert cli.main(["reproduce-table", "--config", str(cfg),
                             "--out", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestConfigPrecedence:
    def test_flag_overrides_config_seed(self, workdir, tmp_path):
        # same config file, different --seed flags: different checkpoints
        outs = []
        for seed in ("11", "12"):
            out = tmp_path / f"m{seed}.json"
            assert cli.main(["train-model", "--data",
                             str(workdir / "data.csv"), "--method", "gp",
                             "--config", str(workdir / "config.yaml"),
                             "--seed", seed, "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] != outs[1]

    def test_bad_config_file_is_runtime_error(self, workdir, tmp_path,
                                              capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("szies: [10]\n")
        code = cli.main(["train-model", "--data",
                         str(workdir / "data.csv"), "--method", "gp",
                         "--config", str(bad),
                         "--out", str(tmp_path / "m.json")])
        assert code == 1
        assert "szies" in capsys.readouterr().err
