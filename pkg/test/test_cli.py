import json
import math

import pytest
from click.testing import CliRunner

from src.cli import main

SMALL_TEBD = """\
name = small
engine = tebd
model = effective_defect { J = 1.0 }
state = [seg(0, 4), seg(2, 4, localized(2, hole)), seg(0, 4)]
tebd = { dt = 0.1, t_max = 1.0, chi_max = 32 }
observables = [site_density_exact_n(1), integrated_population(outside, 1)]
"""

BAD_MODEL = """\
name = bad
engine = tebd
model = bose_hubbard { n_max = 0 }
state = [seg(0, 4), seg(2, 4)]
observables = [site_density_exact_n(1)]
"""

ANALYTIC = """\
name = steps
engine = analytic
analytic = { alpha = 0.5, points = 8 }
"""


class TestCli:
    """The dimerlab command line"""

    @pytest.fixture(autouse=True)
    def setup(self, test_logger):
        self.runner = CliRunner()
        self.logger = test_logger

    def invoke(self, *args):
        result = self.runner.invoke(main, ["--log-level", "ERROR", *args])
        self.logger.info(f"dimerlab {' '.join(args)} -> {result.exit_code}\n{result.output}")
        return result

    def write(self, tmp_path, text, name="run.conf"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    def test_scatter_scan(self):
        result = self.invoke("scatter", "--alpha", "0.5", "--points", "8")
        assert result.exit_code == 0
        lines = result.output.splitlines()
        assert lines[0] == "k,T,R"
        assert len(lines) == 9

    def test_scatter_at_momenta(self):
        result = self.invoke("scatter", "--alpha", "1/2", "--k", "pi/2", "--k", "pi/4")
        assert result.exit_code == 0
        header, centre, edge = result.output.splitlines()
        assert header == "k,k_prime,T,R,in_window"
        k, k_prime, T, R, inside = centre.split(",")
        assert float(T) == pytest.approx(8.0 / 9.0, abs=1e-11)
        assert float(k_prime) == pytest.approx(math.pi / 2)
        assert inside == "true"
        assert edge.split(",")[1:] == ["evanescent", "0", "1", "false"]

    @pytest.mark.parametrize("flag", ["--out", "--output"])
    def test_scatter_writes_file(self, tmp_path, flag):
        target = tmp_path / "scan.csv"
        result = self.invoke("scatter", "--alpha", "2", "--points", "4", "--kmin", "pi/8", "--kmax", "7*pi/8", flag, str(target))
        assert result.exit_code == 0
        lines = target.read_bytes().decode().split("\r\n")
        assert lines[0] == "k,T,R"
        assert float(lines[1].split(",")[0]) == pytest.approx(math.pi / 8)

    def test_bad_expression_is_a_usage_error(self):
        result = self.invoke("scatter", "--alpha", "2*")
        assert result.exit_code == 2

    def test_scatter_rejects_band_edge(self):
        result = self.invoke("scatter", "--alpha", "0.5", "--k", "0")
        assert result.exit_code == 1
        assert "error:" in result.output

    def test_collide_with_revival_time(self):
        result = self.invoke("collide", "--ka", "13*pi/16", "--kt=-9*pi/16", "--Ja", "2", "--Jt", "3", "--L", "64")
        assert result.exit_code == 0
        header, row = result.output.splitlines()
        assert header == "ka_out,kt_out,t_c"
        ka_out, kt_out, t_c = (float(cell) for cell in row.split(","))
        assert float(t_c) == pytest.approx(46.63 / 3.0, rel=5e-3)
        energy_in = 2.0 * math.cos(13 * math.pi / 16) + 3.0 * math.cos(-9 * math.pi / 16)
        assert 2.0 * math.cos(ka_out) + 3.0 * math.cos(kt_out) == pytest.approx(energy_in, abs=1e-9)

    def test_collide_without_ring_leaves_t_c_empty(self):
        result = self.invoke("collide", "--ka", "pi/2", "--kt=-pi/4", "--Ja", "1", "--Jt", "1.5")
        assert result.exit_code == 0
        header, row = result.output.splitlines()
        assert header == "ka_out,kt_out,t_c"
        assert row.endswith(",")
        assert len(row.split(",")) == 3

    def test_collide_degenerate(self):
        result = self.invoke("collide", "--ka", "0.7", "--kt", "0.7")
        assert result.exit_code == 1
        assert "error:" in result.output

    def test_validate_ok(self, tmp_path):
        result = self.invoke("validate", "--config", self.write(tmp_path, SMALL_TEBD))
        assert result.exit_code == 0
        assert result.output.startswith("ok: small (tebd, 12 sites, 3 segments, 1 defects)")

    def test_validate_reports_line(self, tmp_path):
        result = self.invoke("validate", "--config", self.write(tmp_path, BAD_MODEL))
        assert result.exit_code == 2
        assert "error: line 3:" in result.output

    def test_evolve_writes_outputs(self, tmp_path):
        out = tmp_path / "out"
        result = self.invoke("evolve", "--config", self.write(tmp_path, ANALYTIC), "--output", str(out))
        assert result.exit_code == 0
        assert (out / "run_transmission.csv").exists()
        assert (out / "run_summary.json").exists()
        assert str(out / "run.conf") in result.output.splitlines()

    def test_evolve_budget_exhausted(self, tmp_path):
        text = SMALL_TEBD.replace("chi_max = 32", "chi_max = 1, error_budget = 1e-9")
        result = self.invoke("evolve", "--config", self.write(tmp_path, text), "--output", str(tmp_path / "out"))
        assert result.exit_code == 3
        assert "error: stopped early" in result.output
        assert (tmp_path / "out" / "run_timeseries.csv").exists()

    def test_two_body_emits_occupations(self):
        result = self.invoke(
            "two-body", "--L", "8", "--Ja", "2", "--Jt", "3", "--U", "20", "--gamma", "1",
            "--ka", "pi/2", "--kt=-pi/4", "--tmax", "1", "--samples", "5",
        )
        assert result.exit_code == 0
        lines = result.output.splitlines()
        assert lines[0] == "t,species,k,occupation"
        rows = [line.split(",") for line in lines[1:]]
        assert len(rows) == 5 * 2 * 8
        initial = [row for row in rows if float(row[0]) == 0.0]
        for species in ("a", "t"):
            total = sum(float(row[3]) for row in initial if row[1] == species)
            assert total == pytest.approx(1.0, abs=1e-10)
        peak_a = max((row for row in initial if row[1] == "a"), key=lambda row: float(row[3]))
        assert float(peak_a[2]) == pytest.approx(math.pi / 2)

    def test_two_body_open_chain_writes_bundle(self, tmp_path):
        csv_path = tmp_path / "occupation.csv"
        result = self.invoke(
            "two-body", "--L", "8", "--U", "20", "--gamma", "0", "--ka", "pi/2", "--kt=-pi/4",
            "--samples", "3", "--out", str(csv_path), "--output-dir", str(tmp_path / "bundle"),
        )
        assert result.exit_code == 0
        assert csv_path.read_bytes().startswith(b"t,species,k,occupation\r\n")
        summary = json.loads((tmp_path / "bundle" / "run_summary.json").read_text())
        assert summary["tables"] == ["run_occupation.csv", "run_same_site.csv"]
        assert summary["t_c"] > 0

    def test_two_body_off_grid(self):
        result = self.invoke("two-body", "--ka", "0.3", "--kt", "0", "--L", "8")
        assert result.exit_code == 2

    def test_two_body_rejects_bad_gamma(self):
        result = self.invoke("two-body", "--ka", "pi/2", "--kt", "0", "--L", "8", "--gamma", "2")
        assert result.exit_code == 2

    def test_reproduce_lists_catalog(self):
        result = self.invoke("reproduce", "--list")
        assert result.exit_code == 0
        lines = result.output.splitlines()
        assert len(lines) == 10
        assert lines[0].startswith("fig2:")
        assert any(line.startswith("fig4:") and line.endswith("(extended configs available)") for line in lines)

    def test_reproduce_unknown_figure(self, tmp_path):
        result = self.invoke("reproduce", "fig99", "--output", str(tmp_path))
        assert result.exit_code == 2
