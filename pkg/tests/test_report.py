"""Result aggregation, standard errors, and returns-table rendering."""
import numpy as np
import pytest

from wetchicken import report as rep
from wetchicken.errors import ContractViolation


class TestStderr:
    def test_hand_computed_three_seed_fixture(self):
        # values 1.0, 2.0, 3.0: sample stddev = 1.0, stderr = 1/sqrt(3)
        assert rep.stderr([1.0, 2.0, 3.0]) == pytest.approx(
            1.0 / np.sqrt(3.0), abs=1e-15)

    def test_single_value_has_zero_stderr(self):
        assert rep.stderr([2.5]) == 0.0

    def test_matches_numpy_formula(self):
        rng = np.random.default_rng(8)
        vals = rng.normal(size=10)
        assert rep.stderr(vals) == pytest.approx(
            vals.std(ddof=1) / np.sqrt(10), rel=1e-12)


class TestFormatting:
    def test_two_decimal_cell(self):
        assert rep.format_cell(2.334, 0.0149) == "2.33 ± 0.01"
        assert rep.format_cell(1.5, 0.2) == "1.50 ± 0.20"

    def test_rounding_is_bankers_free(self):
        assert rep.format_cell(2.0, 0.005) == "2.00 ± 0.01"


def small_report():
    report = rep.EvalReport()
    for seed, v in enumerate([2.3, 2.4, 2.5]):
        report.add("dagp", 250, seed, v, 10 * v)
    for seed, v in enumerate([1.8, 1.9, 2.0]):
        report.add("gp", 250, seed, v, 10 * v)
    for seed, v in enumerate([1.4, 1.5, 1.6]):
        report.add("random", rep.RANDOM_N, seed, v, 10 * v)
    return report


class TestEvalReport:
    def test_cell_aggregation(self):
        report = small_report()
        assert report.cell("dagp", 250) == "2.40 ± 0.06"
        assert report.cell("nfq", 250) == ""

    def test_seed_values_ordered_by_seed(self):
        report = rep.EvalReport()
        report.add("dagp", 100, 2, 3.0, 30.0)
        report.add("dagp", 100, 0, 1.0, 10.0)
        report.add("dagp", 100, 1, 2.0, 20.0)
        np.testing.assert_array_equal(report.seed_values("dagp", 100),
                                      [1.0, 2.0, 3.0])

    def test_csv_round_trip(self, tmp_path):
        report = small_report()
        path = tmp_path / "results.csv"
        report.save_csv(path)
        back = rep.EvalReport.load_csv(path)
        assert back.rows == report.rows
        assert path.read_text().splitlines()[0] == \
            "method,N,seed,avg_step_reward,discounted_return"

    def test_csv_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        small_report().save_csv(a)
        small_report().save_csv(b)
        assert a.read_bytes() == b.read_bytes()

    def test_load_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("method,N,seed,reward\n")
        with pytest.raises(ContractViolation):
            rep.EvalReport.load_csv(path)

    def test_load_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("method,N,seed,avg_step_reward,discounted_return\n"
                        "dagp,250,0,2.3,23.0\n"
                        "dagp,250,one,2.4,24.0\n")
        with pytest.raises(ContractViolation, match="line 3"):
            rep.EvalReport.load_csv(path)


class TestRenderTable:
    def test_layout_has_method_columns_and_baseline_row(self):
        text = rep.render_table(small_report(), sizes=[250],
                                methods=["dagp", "gp", "nfq", "random"])
        lines = text.strip().splitlines()
        assert lines[0] == "N,dagp,gp,nfq,random"
        assert lines[1] == ("250,2.40 ± 0.06,1.90 ± 0.06,,"
                            "1.50 ± 0.06")
        assert lines[2] == "random,,,,1.50 ± 0.06"

    def test_random_column_repeats_across_sizes(self):
        text = rep.render_table(small_report(), sizes=[100, 250],
                                methods=["dagp", "random"])
        lines = text.strip().splitlines()
        assert lines[0] == "N,dagp,random"
        assert lines[1].endswith("1.50 ± 0.06")
        assert lines[2].endswith("1.50 ± 0.06")

    def test_missing_cells_render_empty(self):
        report = rep.EvalReport()
        report.add("dagp", 100, 0, 1.2, 12.0)
        text = rep.render_table(report, sizes=[100, 250], methods=["dagp"])
        lines = text.strip().splitlines()
        assert lines[1] == "100,1.20 ± 0.00"
        assert lines[2] == "250,"
