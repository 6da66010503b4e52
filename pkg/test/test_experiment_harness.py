import json
import math

import pytest
from pydantic import ValidationError

from src.errors import ValidationFailure
from src.harness.config import evaluate_expression, parse_config, print_config
from src.harness.figures import CONFIG_DIR, FIGURES, catalog, reproduce
from src.harness.observables import Region, defects_with_occupation, integrated_population
from src.harness.runner import execute, run_many, write_outputs
from src.symmetric_mps import SegmentedInitialState, SegmentSpec
from src.timeseries import RunStatus, TimeSeries
from src.utilities import CsvReader

SMALL_TEBD = """\
# one localized hole in a four-site dimer segment
name = small
engine = tebd
model = effective_defect { J = 1.0 }
state = [seg(0, 4), seg(2, 4, localized(2, hole)), seg(0, 4)]
tebd = { dt = 0.1, t_max = 1.0, chi_max = 32 }
observables = [site_density_exact_n(1), integrated_population(outside, 1)]
"""

ANALYTIC = """\
name = steps
engine = analytic
analytic = { alpha = [0.5, 1.0], points = 16 }
"""

TWO_BODY = """\
name = pair
engine = two-body-ed
two_body = { L = 8, U = 20.0, k_a = pi/2, k_t = -pi/4, samples = 5 }
"""


def shipped_configs():
    return sorted(CONFIG_DIR.glob("*.conf"))


class TestConfigParsing:
    """Config text grammar and validation"""

    @pytest.fixture(autouse=True)
    def setup(self, test_logger):
        self.logger = test_logger

    def test_parses_tebd_config(self):
        config = parse_config(SMALL_TEBD)
        assert config.engine == "tebd"
        assert config.model.kind == "effective_defect"
        assert config.tebd.chi_max == 32
        assert config.tebd.dt == pytest.approx(0.1)
        initial = config.initial_state()
        assert (initial.L, initial.defect_count) == (12, 1)
        assert config.state[1].defect.sign == -1
        assert [o.name for o in config.observables] == ["density_n1", "population_outside_n1"]

    def test_engine_with_hyphens(self):
        config = parse_config(TWO_BODY)
        assert config.engine == "two-body-ed"
        assert config.two_body.k_a == pytest.approx(math.pi / 2)

    @pytest.mark.parametrize(
        "text, value",
        [("13*pi/16", 13 * math.pi / 16), ("-(1+2)*3", -9.0), ("2.5e-1", 0.25), ("-pi", -math.pi)],
    )
    def test_expressions(self, text, value):
        assert evaluate_expression(text) == pytest.approx(value, abs=1e-15)

    def test_reports_every_error_with_its_line(self):
        text = (
            "name = bad\n"
            "engine = tebd\n"
            "model = bose_hubbard { J = 1.0, n_max = 0 }\n"
            "state = [seg(0, 4), seg(2, 4)]\n"
            "tebd = { dt = -0.1 }\n"
            "observables = [site_density_exact_n(1)]\n"
        )
        with pytest.raises(ValidationFailure) as excinfo:
            parse_config(text)
        messages = excinfo.value.messages
        self.logger.info(f"messages: {messages}")
        assert len(messages) == 2
        assert any(m.startswith("line 3:") and "n_max" in m for m in messages)
        assert any(m.startswith("line 5:") and "dt" in m for m in messages)
        assert excinfo.value.exit_code == 2

    def test_semantic_errors_are_collected(self):
        text = (
            "name = bad_observables\n"
            "engine = tebd\n"
            "model = bose_hubbard { J = 1.0 }\n"
            "state = [seg(0, 4), seg(2, 4)]\n"
            "observables = [\n"
            "    integrated_population(sites(1-40), 1),\n"
            "    site_density_exact_n(1, c),\n"
            "]\n"
        )
        with pytest.raises(ValidationFailure) as excinfo:
            parse_config(text)
        messages = excinfo.value.messages
        assert len(messages) == 2
        assert any("1-40" in m and m.startswith("line 6:") for m in messages)
        assert any("'c'" in m and m.startswith("line 7:") for m in messages)

    def test_defect_beyond_cutoff(self):
        text = (
            "name = crowded\n"
            "engine = tebd\n"
            "model = bose_hubbard { n_max = 2 }\n"
            "state = [seg(2, 4, localized(1, particle))]\n"
            "observables = [site_density_exact_n(1)]\n"
        )
        with pytest.raises(ValidationFailure) as excinfo:
            parse_config(text)
        assert excinfo.value.messages[0].startswith("line 4:")

    @pytest.mark.parametrize(
        "text, fragment",
        [
            ("name = a$b\n", "unexpected character"),
            ("name = a\nname = b\n", "duplicate key"),
            ("engine = tebd\nstate = [frobnicate(1)]\n", "unknown function"),
            ("engine = analytic\nanalytic = { alpha = }\n", "line 2"),
        ],
    )
    def test_syntax_errors(self, text, fragment):
        with pytest.raises(ValidationFailure) as excinfo:
            parse_config(text)
        assert fragment in str(excinfo.value)

    def test_tebd_needs_observables(self):
        text = "engine = tebd\nmodel = effective_dimer { }\nstate = [seg(1, 4)]\n"
        with pytest.raises(ValidationFailure) as excinfo:
            parse_config(text)
        assert "observable" in str(excinfo.value)

    def test_two_body_momenta_must_be_on_grid(self):
        with pytest.raises(ValidationFailure):
            parse_config("engine = two-body-ed\ntwo_body = { L = 8, k_a = 0.3, k_t = 0 }\n")

    @pytest.mark.parametrize("path", shipped_configs(), ids=lambda p: p.name)
    def test_shipped_configs_print_canonically(self, path):
        config = parse_config(path.read_text())
        assert parse_config(print_config(config)) == config

    @pytest.mark.parametrize("figure_id", list(FIGURES))
    def test_desk_configs_print_canonically(self, figure_id):
        for config in FIGURES[figure_id].configs():
            assert parse_config(print_config(config)) == config


class TestObservables:
    """Regions, populations and defect counting"""

    def test_outside_region_of_full_size_cluster(self):
        config = parse_config((CONFIG_DIR / "fig4_top.conf").read_text())
        initial = config.initial_state()
        assert initial.L == 88
        outside = Region(kind="outside").sites(initial)
        assert outside == list(range(1, 32)) + list(range(58, 89))
        inside = Region(kind="inside").sites(initial)
        assert inside == list(range(33, 57))

    def test_explicit_sites(self):
        region = Region(kind="sites", intervals=[(1, 3), (7, 7)])
        assert region.sites(None) == [1, 2, 3, 7]
        assert region.label == "sites_1-3_7-7"

    def test_region_validation(self):
        with pytest.raises(ValidationError):
            Region(kind="sites")
        with pytest.raises(ValidationError):
            Region(kind="outside", intervals=[(1, 2)])
        with pytest.raises(ValidationError):
            Region(kind="sites", intervals=[(0, 2)])

    def test_integrated_population(self):
        series = TimeSeries()
        for t, profile in ((0.0, [0.0, 1.0, 0.0]), (1.0, [0.25, 0.5, 0.25])):
            for site, value in enumerate(profile, start=1):
                series.record(t, "density_n1", site, value)
        times, values = integrated_population(series, [1, 3])
        assert times.tolist() == [0.0, 1.0]
        assert values.tolist() == pytest.approx([0.0, 0.5])

    def test_integrated_population_needs_density(self):
        with pytest.raises(KeyError):
            integrated_population(TimeSeries(), [1])

    def test_defects_with_occupation(self):
        initial = parse_config((CONFIG_DIR / "fig4_top.conf").read_text()).initial_state()
        assert defects_with_occupation(initial, 1) == 2
        assert defects_with_occupation(initial, 3) == 0

    def test_defects_by_species(self):
        initial = SegmentedInitialState(segments=[
            SegmentSpec(n=2, length=4),
            SegmentSpec(n=2, length=8, defect={"kind": "momentum", "k": math.pi / 2, "sign": -1}, species="a"),
            SegmentSpec(n=0, length=16),
        ])
        assert defects_with_occupation(initial, 1, "b") == 1
        assert defects_with_occupation(initial, 1, "a") == 0


class TestRunner:
    """Engines behind a RunConfig and the artifacts they write"""

    @pytest.fixture(autouse=True)
    def setup(self, test_logger):
        self.logger = test_logger

    def test_analytic_outputs(self, tmp_path):
        result = execute(parse_config(ANALYTIC))
        assert result.status is RunStatus.COMPLETED
        assert result.summary["max_flux_error"] < 1e-12
        assert result.summary["alpha"]["0.5"]["window_fraction"] == pytest.approx(1.0 / 3.0)

        paths = write_outputs(result, tmp_path)
        names = sorted(p.name for p in paths)
        assert names == ["run.conf", "run_plot.py", "run_summary.json", "run_transmission.csv", "run_window.csv"]

        csv_text = (tmp_path / "run_transmission.csv").read_bytes().decode()
        assert csv_text.startswith("alpha,k,T,R\r\n")
        assert len(csv_text.strip().split("\r\n")) == 1 + 2 * 16
        for row in CsvReader.read(tmp_path / "run_transmission.csv"):
            assert float(row["T"]) + float(row["R"]) == pytest.approx(1.0, abs=1e-11)

        summary_text = (tmp_path / "run_summary.json").read_text()
        summary = json.loads(summary_text)
        assert list(summary) == sorted(summary)
        assert summary["status"] == "completed"
        assert summary["tables"] == ["run_transmission.csv", "run_window.csv"]
        assert parse_config((tmp_path / "run.conf").read_text()) == result.config

    def test_outputs_are_deterministic(self, tmp_path):
        config = parse_config(ANALYTIC)
        write_outputs(execute(config), tmp_path / "first")
        write_outputs(execute(config), tmp_path / "second")
        for name in ("run_transmission.csv", "run_window.csv", "run_summary.json"):
            assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()

    def test_default_directory_comes_from_settings(self, output_dir):
        paths = write_outputs(execute(parse_config(ANALYTIC)))
        assert {p.parent for p in paths} == {output_dir / "steps"}

    def test_two_body_run(self):
        result = execute(parse_config(TWO_BODY))
        summary = result.summary
        self.logger.info(f"t_c={summary['t_c']:.4f}, energy drift {summary['energy_drift']:.2e}")
        assert summary["energy_drift"] < 1e-9
        assert summary["collision"] is not None
        occupation = result.tables["occupation"]
        assert tuple(occupation.header) == ("t", "species", "k", "occupation")
        assert len(occupation.rows) == 5 * 2 * 8
        assert len(result.tables["same_site"].rows) == 5
        assert {row[1] for row in occupation.rows} == {"a", "t"}

    def test_tebd_run_reports_escape(self, tmp_path):
        config = parse_config(SMALL_TEBD + "output = { snapshot = true }\n")
        result = execute(config)
        assert result.exit_code == 0
        entry = result.summary["populations"]["population_outside_n1"]
        assert entry["defects"] == 1
        assert 0.0 <= entry["escaped_fraction"] <= 1.0 + 1e-9
        assert result.summary["L"] == 12
        assert result.summary["final_time"] == pytest.approx(1.0)

        paths = write_outputs(result, tmp_path)
        assert (tmp_path / "run_final.npz") in paths
        header = (tmp_path / "run_timeseries.csv").read_text().splitlines()[0]
        assert header == "t,observable,site,value"

    def test_budget_exhaustion_exit_code(self):
        text = SMALL_TEBD.replace("chi_max = 32", "chi_max = 1, error_budget = 1e-9")
        result = execute(parse_config(text))
        assert result.status is RunStatus.BUDGET_EXHAUSTED
        assert result.exit_code == 3
        assert result.summary["status"] == "budget_exhausted"
        assert result.summary["final_time"] < 1.0

    def test_run_many_keeps_order(self):
        configs = [parse_config(ANALYTIC.replace("steps", name)) for name in ("one", "two", "three")]
        results = run_many(configs, workers=1)
        assert [r.name for r in results] == ["one", "two", "three"]


class TestFigures:
    """Figure catalog and desk-scale geometries"""

    @pytest.fixture(autouse=True)
    def setup(self, test_logger):
        self.logger = test_logger

    def test_catalog(self):
        ids = [entry["figure_id"] for entry in catalog()]
        assert ids == ["fig2", "fig3", "fig4", "fig5", "fig6a", "fig6b", "fig7", "fig8", "fig9", "fig10"]

    def test_unknown_figure(self, tmp_path):
        with pytest.raises(ValidationFailure):
            reproduce("fig99", tmp_path)

    def test_figure_without_extended_configs(self):
        with pytest.raises(ValidationFailure):
            FIGURES["fig2"].configs(extended=True)

    def test_extended_configs_parse(self):
        configs = FIGURES["fig7"].configs(extended=True)
        assert [c.initial_state().L for c in configs] == [160, 160, 160]

    @pytest.mark.parametrize(
        "figure_id, sites",
        [("fig5", 48), ("fig8", 16), ("fig9", 28)],
    )
    def test_desk_geometries(self, figure_id, sites):
        for config in FIGURES[figure_id].configs():
            assert config.initial_state().L == sites

    def test_fig2_reproduces(self, tmp_path):
        bundle = reproduce("fig2", tmp_path)
        acceptance = bundle.summary["acceptance"]
        self.logger.info(f"fig2 acceptance: {acceptance}")
        assert acceptance["passed"]
        assert acceptance["T_half_pi_alpha_half"] == pytest.approx(8.0 / 9.0, abs=1e-12)
        assert (tmp_path / "fig2_summary.json").exists()
        assert (tmp_path / "fig2" / "run_transmission.csv").exists()

    @pytest.mark.slow
    @pytest.mark.parametrize("figure_id", ["fig3", "fig4", "fig5", "fig8", "fig9"])
    def test_acceptance(self, figure_id, tmp_path):
        bundle = reproduce(figure_id, tmp_path)
        acceptance = bundle.summary["acceptance"]
        self.logger.info(f"{figure_id} acceptance: {acceptance}")
        assert bundle.status is RunStatus.COMPLETED
        assert acceptance["passed"]
