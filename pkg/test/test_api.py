import math

import pytest
from fastapi.testclient import TestClient

from src.api.server import app
from src.harness.config import parse_config
from src.settings import reset_settings

SMALL_TEBD = """\
name = small
engine = tebd
model = effective_defect { J = 1.0 }
state = [seg(0, 4), seg(2, 4, localized(2, hole)), seg(0, 4)]
observables = [site_density_exact_n(1)]
"""


class TestKinematicsApi:
    """Scattering, window and collision endpoints"""

    @pytest.fixture(autouse=True)
    def setup(self, test_logger):
        self.client = TestClient(app)
        self.logger = test_logger

    def test_root(self):
        response = self.client.get("/")
        assert response.status_code == 200
        assert response.json() == {"message": "Welcome to Dimerlab."}

    def test_scatter_band_centre(self):
        response = self.client.post("/kinematics/scatter", json={"k": math.pi / 2, "alpha": 0.5})
        assert response.status_code == 200
        body = response.json()
        self.logger.info(f"scatter response: {body}")
        assert body["T"] == pytest.approx(8.0 / 9.0, abs=1e-12)
        assert body["R"] == pytest.approx(1.0 / 9.0, abs=1e-12)
        assert body["in_window"] is True
        assert body["k_prime"] == pytest.approx(math.pi / 2)

    def test_scatter_with_rates(self):
        response = self.client.post("/kinematics/scatter", json={"k": math.pi / 4, "J_A": 2.0, "J_B": 1.0})
        assert response.status_code == 200
        body = response.json()
        assert body["alpha"] == pytest.approx(0.5)
        assert body["k_prime"] == "evanescent"
        assert body["T"] == 0.0

    def test_scatter_needs_one_parametrization(self):
        response = self.client.post("/kinematics/scatter", json={"k": 1.0})
        assert response.status_code == 422
        response = self.client.post("/kinematics/scatter", json={"k": 1.0, "alpha": 0.5, "J_A": 1.0, "J_B": 2.0})
        assert response.status_code == 422

    def test_scatter_rejects_band_edge(self):
        response = self.client.post("/kinematics/scatter", json={"k": 0.0, "alpha": 0.5})
        assert response.status_code == 400

    def test_window(self):
        response = self.client.get("/kinematics/window", params={"alpha": 0.5})
        assert response.status_code == 200
        body = response.json()
        assert body["fraction"] == pytest.approx(1.0 / 3.0)
        assert body["intervals"][1] == pytest.approx([math.pi / 3, 2 * math.pi / 3])

    def test_window_rejects_bad_ratio(self):
        response = self.client.get("/kinematics/window", params={"alpha": -1.0})
        assert response.status_code == 400

    def test_collide(self):
        payload = {"k_a": 13 * math.pi / 16, "k_t": -9 * math.pi / 16, "L": 64}
        response = self.client.post("/kinematics/collide", json=payload)
        assert response.status_code == 200
        body = response.json()
        assert body["t_c"] == pytest.approx(46.63 / 3.0, rel=5e-3)
        energy_in = 2.0 * math.cos(payload["k_a"]) + 3.0 * math.cos(payload["k_t"])
        energy_out = 2.0 * math.cos(body["k_a_out"]) + 3.0 * math.cos(body["k_t_out"])
        assert energy_out == pytest.approx(energy_in, abs=1e-10)

    def test_collide_degenerate(self):
        response = self.client.post("/kinematics/collide", json={"k_a": 0.7, "k_t": 0.7})
        assert response.status_code == 409


class TestExperimentsApi:
    """Config validation and the figure catalog"""

    @pytest.fixture(autouse=True)
    def setup(self, test_logger):
        self.client = TestClient(app)
        self.logger = test_logger

    def test_validate_accepts_config(self):
        response = self.client.post("/experiments/validate", json={"text": SMALL_TEBD})
        assert response.status_code == 200
        report = response.json()
        assert report["valid"] is True
        assert (report["engine"], report["sites"]) == ("tebd", 12)
        assert parse_config(report["canonical"]) == parse_config(SMALL_TEBD)

    def test_validate_lists_errors(self):
        text = SMALL_TEBD.replace("J = 1.0", "J = 1.0, colour = red")
        response = self.client.post("/experiments/validate", json={"text": text})
        assert response.status_code == 200
        report = response.json()
        assert report["valid"] is False
        assert report["errors"] and report["errors"][0].startswith("line 3:")

    def test_figures(self):
        response = self.client.get("/experiments/figures")
        assert response.status_code == 200
        figures = {entry["figure_id"]: entry for entry in response.json()}
        assert len(figures) == 10
        assert figures["fig7"]["extended_configs"] == ["fig7_a.conf", "fig7_b.conf", "fig7_c.conf"]


class TestApiKey:
    """access_token header once a key is configured"""

    @pytest.fixture(autouse=True)
    def setup(self, test_logger, monkeypatch):
        monkeypatch.setenv("DIMERLAB_API_KEY", "test_api_key")
        reset_settings()
        self.client = TestClient(app)
        self.logger = test_logger
        yield
        reset_settings()

    def test_missing_key_is_rejected(self):
        response = self.client.get("/kinematics/window", params={"alpha": 0.5})
        assert response.status_code == 401

    def test_key_is_accepted(self):
        response = self.client.get("/kinematics/window", params={"alpha": 0.5}, headers={"access_token": "test_api_key"})
        assert response.status_code == 200
