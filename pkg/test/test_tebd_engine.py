import numpy as np
import pytest
from pydantic import ValidationError
from scipy import linalg

from src.errors import SectorError
from src.harness.observables import SiteDensityExactN, bind
from src.lattice_models import (
    BoseHubbardParams,
    EffectiveDefectParams,
    EffectiveDimerParams,
    TwoSpeciesParams,
    build_lattice_model,
)
from src.local_spaces import BosonSpace
from src.symmetric_mps import (
    SegmentedInitialState,
    SegmentSpec,
    build_state,
    canonical_residual,
    label_residual,
)
from src.tebd_engine import (
    SUZUKI_P,
    TebdConfig,
    apply_two_site_gate,
    check_gate_sectors,
    composition,
    exact_dense_evolution,
    run,
    state_fidelity,
)
from src.timeseries import RunStatus


def segments(*specs):
    return SegmentedInitialState(segments=[SegmentSpec(**spec) for spec in specs])


THREE_BOSONS = segments({"n": 1, "length": 3}, {"n": 0, "length": 3})

MONOMER_AND_TRIMER = segments(
    {"n": 0, "length": 2},
    {"n": 2, "length": 2, "defect": {"kind": "localized", "site": 1, "sign": -1}},
    {"n": 2, "length": 2, "defect": {"kind": "localized", "site": 2, "sign": 1}},
)

TWO_DIMERS = segments({"n": 2, "length": 2}, {"n": 0, "length": 4})

PAIRS_WITH_A_HOLE = segments(
    {"n": 0, "length": 2},
    {"n": 2, "length": 2, "defect": {"kind": "localized", "site": 1, "sign": -1}, "species": "a"},
    {"n": 0, "length": 2},
)


def random_conserving_gate(rng, space):
    """exp(-i h) for a random Hermitian h that is block diagonal in the two-site charge."""
    pair = space.pair_charge_totals().reshape(-1, space.n_charges)
    h = rng.normal(size=(pair.shape[0],) * 2) + 1j * rng.normal(size=(pair.shape[0],) * 2)
    h = h + h.conj().T
    h[np.any(pair[:, None, :] != pair[None, :, :], axis=-1)] = 0.0
    return linalg.expm(-1j * h)


def embed_gate(gate, bond, d, L):
    return np.kron(np.kron(np.eye(d ** bond), gate), np.eye(d ** (L - bond - 2)))


class TestTebdConfig:
    def test_defaults(self):
        cfg = TebdConfig()
        assert (cfg.chi_max, cfg.order, cfg.error_budget) == (96, 4, 1e-2)

    @pytest.mark.parametrize("field, value", [("order", 3), ("dt", 0.0), ("chi_max", 0), ("error_budget", 0.0)])
    def test_rejects_bad_values(self, field, value):
        with pytest.raises(ValidationError):
            TebdConfig(**{field: value})

    def test_model_supplies_default_step(self):
        model = build_lattice_model(BoseHubbardParams(J=1.0), 4)
        assert TebdConfig().step_for(model) == pytest.approx(0.02)
        assert TebdConfig(dt=0.05).step_for(model) == 0.05

    def test_composition_sums_to_one(self):
        assert composition(2) == [1.0]
        fractions = composition(4)
        assert sum(fractions) == pytest.approx(1.0, abs=1e-14)
        assert fractions[0] == pytest.approx(SUZUKI_P)


class TestGates:
    """Two-site gate application on the symmetric MPS"""

    @pytest.fixture(autouse=True)
    def setup(self, test_logger):
        self.logger = test_logger

    @pytest.mark.parametrize("bond", [0, 1, 2])
    def test_random_gate_matches_dense(self, bond):
        rng = np.random.default_rng(11 + bond)
        space = BosonSpace(2)
        initial = segments(
            {"n": 0, "length": 1},
            {"n": 1, "length": 2, "defect": {"kind": "momentum", "k": np.pi, "sign": 1}},
            {"n": 0, "length": 1},
        )
        mps = build_state(initial, space)
        before = mps.to_dense()
        gate = random_conserving_gate(rng, space)
        _, discarded = apply_two_site_gate(mps, bond, gate, cutoff=1e-12)
        expected = embed_gate(gate, bond, space.d, mps.L) @ before
        assert discarded == pytest.approx(0.0, abs=1e-14)
        assert np.allclose(mps.to_dense(), expected, atol=1e-12)
        assert canonical_residual(mps) < 1e-12
        assert label_residual(mps) < 1e-12

    def test_sector_mixing_gate_rejected(self):
        space = BosonSpace(1)
        gate = np.eye(4, dtype=complex)
        gate[0, 1] = 1.0
        with pytest.raises(SectorError):
            check_gate_sectors(gate, space.pair_charge_totals())

    def test_truncation_reports_weight(self):
        rng = np.random.default_rng(5)
        space = BosonSpace(2)
        mps = build_state(segments({"n": 1, "length": 2}, {"n": 0, "length": 2}), space)
        apply_two_site_gate(mps, 1, random_conserving_gate(rng, space), cutoff=1e-12)
        _, discarded = apply_two_site_gate(mps, 0, random_conserving_gate(rng, space), chi_max=1)
        assert mps.bond_dims[1] == 1
        assert 0.0 < discarded < 1.0


class TestEvolution:
    """Full runs against exact evolution on small lattices"""

    @pytest.fixture(autouse=True)
    def setup(self, test_logger):
        self.logger = test_logger

    def test_bose_hubbard_matches_exact(self):
        model = build_lattice_model(BoseHubbardParams(J=1.0, U=100.0, n_max=3), THREE_BOSONS)
        initial = build_state(THREE_BOSONS, model.space)
        series = run(initial, model, TebdConfig(dt=0.01, t_max=1.0, chi_max=64), [])
        fidelity = state_fidelity(series.final_state, exact_dense_evolution(model, initial, 1.0))
        self.logger.info(f"Bose-Hubbard fidelity at t=1: {fidelity:.12f}")
        assert fidelity >= 1.0 - 1e-6
        assert series.status is RunStatus.COMPLETED
        assert series.final_state.total_charge == (3,)
        assert label_residual(series.final_state) < 1e-12

    @pytest.mark.parametrize("static", [False, True])
    def test_effective_defect_matches_exact(self, static):
        model = build_lattice_model(EffectiveDefectParams(static_theta=static), MONOMER_AND_TRIMER)
        initial = build_state(MONOMER_AND_TRIMER, model.space)
        series = run(initial, model, TebdConfig(dt=0.01, t_max=1.0), [])
        fidelity = state_fidelity(series.final_state, exact_dense_evolution(model, initial, 1.0))
        self.logger.info(f"effective defect (static={static}) fidelity: {fidelity:.12f}")
        assert fidelity >= 1.0 - 1e-6
        assert series.final_state.total_charge == (1, 1)

    @pytest.mark.parametrize(
        "spec, initial, charge",
        [
            (EffectiveDimerParams(J=1.0, U=4.0), TWO_DIMERS, (2,)),
            (
                TwoSpeciesParams(J_a=1.0, J_b=0.8, U_a=40.0 / 3.0, U_b=40.0 / 3.0, U_ab=20.0, cap_a=2, cap_b=1),
                PAIRS_WITH_A_HOLE,
                (1, 2),
            ),
        ],
        ids=["effective_dimer", "two_species"],
    )
    def test_remaining_models_match_exact(self, spec, initial, charge):
        model = build_lattice_model(spec, initial)
        state = build_state(initial, model.space)
        assert state.L == 6
        series = run(state, model, TebdConfig(dt=0.01, t_max=1.0), [])
        exact = exact_dense_evolution(model, state, 1.0)
        fidelity = state_fidelity(series.final_state, exact)
        self.logger.info(f"{spec.kind} fidelity at t=1: {fidelity:.12f}")
        assert fidelity >= 1.0 - 1e-6
        assert series.final_state.total_charge == charge
        # the state must have moved for the comparison to mean anything
        assert state_fidelity(series.final_state, state.to_dense()) < 0.999

    def test_fourth_order_convergence(self):
        model = build_lattice_model(BoseHubbardParams(J=1.0, U=100.0, n_max=3), THREE_BOSONS)
        initial = build_state(THREE_BOSONS, model.space)
        exact = exact_dense_evolution(model, initial, 1.0)
        errors = []
        for dt in (0.02, 0.01):
            series = run(initial, model, TebdConfig(dt=dt, t_max=1.0, chi_max=64), [])
            errors.append(float(np.linalg.norm(series.final_state.to_dense() - exact)))
        ratio = errors[0] / errors[1]
        self.logger.info(f"errors {errors[0]:.3e}, {errors[1]:.3e}; ratio {ratio:.2f}")
        assert 12.0 <= ratio <= 20.0

    def test_fourth_order_beats_second_order(self):
        model = build_lattice_model(BoseHubbardParams(J=1.0, U=2.0, n_max=3), THREE_BOSONS)
        initial = build_state(THREE_BOSONS, model.space)
        exact = exact_dense_evolution(model, initial, 1.0)
        errors = {}
        for order in (2, 4):
            series = run(initial, model, TebdConfig(dt=0.05, t_max=1.0, order=order), [])
            errors[order] = float(np.linalg.norm(series.final_state.to_dense() - exact))
        assert errors[4] < 0.1 * errors[2]

    def test_single_particle_density(self):
        L, t = 16, 2.0
        initial = segments({"n": 0, "length": 7}, {"n": 1, "length": 1}, {"n": 0, "length": 8})
        model = build_lattice_model(BoseHubbardParams(J=1.0, U=0.0, n_max=1), initial)
        density = bind(SiteDensityExactN(n=1), initial)
        series = run(initial, model, TebdConfig(dt=0.02, t_max=t, sample_every=25), [density])

        hopping = -(np.eye(L, k=1) + np.eye(L, k=-1))
        expected = np.abs(linalg.expm(-1j * t * hopping)[:, 7]) ** 2
        profile = series.profile(density.name, t)
        self.logger.info(f"max density deviation: {np.max(np.abs(profile - expected)):.2e}")
        assert np.max(np.abs(profile - expected)) < 1e-4
        assert series.times.tolist() == pytest.approx([0.0, 0.5, 1.0, 1.5, 2.0])

    def test_budget_exhaustion_stops_early(self):
        model = build_lattice_model(BoseHubbardParams(J=1.0, U=4.0, n_max=3), THREE_BOSONS)
        cfg = TebdConfig(dt=0.01, t_max=1.0, chi_max=1, error_budget=1e-6)
        series = run(THREE_BOSONS, model, cfg, [bind(SiteDensityExactN(n=1), THREE_BOSONS)])
        assert series.status is RunStatus.BUDGET_EXHAUSTED
        assert series.metadata["status"] == "budget_exhausted"
        assert series.metadata["accumulated_cutoff_error"] >= 1e-6
        assert series.final_time < 1.0
        assert max(series.final_state.bond_dims) == 1

    def test_state_must_match_model(self):
        model = build_lattice_model(BoseHubbardParams(n_max=2), 6)
        state = build_state(THREE_BOSONS, BosonSpace(3))
        with pytest.raises(ValueError):
            run(state, model, TebdConfig(dt=0.1, t_max=0.1), [])
