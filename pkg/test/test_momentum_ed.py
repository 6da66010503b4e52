import math

import numpy as np
import pytest

from src.errors import NumericalFailure, OffGridMomentum, SizeBudgetError
from src.momentum_ed import (
    MomentumGrid,
    TwoBodyParams,
    TwoBodyPropagator,
    TwoBodyState,
    build_real_space_two_body_hamiltonian,
    build_two_body_hamiltonian,
    distribution_fidelity,
    dominant_weight,
    evolve,
    expectation,
    momentum_distribution,
    momentum_eigenstate,
    revival_parameters,
    same_site_probability,
    sample_times,
    total_momentum,
)
from src.defect_kinematics import revival_time

FIG3_MOMENTA = (13 * math.pi / 16, -9 * math.pi / 16)


def site_basis_unitary(L):
    F = MomentumGrid(L).plane_waves()
    return np.kron(F, F)


class TestMomentumGrid:
    def test_grid_values(self):
        grid = MomentumGrid(4)
        assert grid.nu.tolist() == [-1, 0, 1, 2]
        assert np.allclose(grid.values, [-math.pi / 2, 0.0, math.pi / 2, math.pi])

    def test_index_wraps_modulo_two_pi(self):
        grid = MomentumGrid(4)
        assert grid.index_of(math.pi / 2) == 2
        assert grid.index_of(-math.pi) == 3
        assert grid.index_of(3 * math.pi / 2) == 0

    def test_off_grid_rejected(self):
        with pytest.raises(OffGridMomentum):
            MomentumGrid(8).index_of(0.1)

    def test_plane_waves_are_orthonormal(self):
        F = MomentumGrid(7).plane_waves()
        assert np.allclose(F.conj().T @ F, np.eye(7), atol=1e-12)


class TestTwoBodyHamiltonian:
    """Momentum-space Hamiltonian against the same model written on sites"""

    @pytest.fixture(autouse=True)
    def setup(self, test_logger):
        self.logger = test_logger

    @pytest.mark.parametrize("gamma", [0, 1])
    def test_matches_real_space(self, gamma):
        params = TwoBodyParams(L=6, J_a=2.0, J_t=3.0, U=7.5, gamma=gamma)
        W = site_basis_unitary(6)
        transformed = W.conj().T @ build_real_space_two_body_hamiltonian(params) @ W
        H = build_two_body_hamiltonian(params)
        self.logger.info(f"gamma={gamma}: max deviation {np.max(np.abs(transformed - H)):.2e}")
        assert np.allclose(transformed, H, atol=1e-10)

    def test_hermitian(self):
        H = build_two_body_hamiltonian(TwoBodyParams(L=8, gamma=0))
        assert np.allclose(H, H.conj().T, atol=1e-12)

    def test_boundary_flag_validated(self):
        with pytest.raises(ValueError):
            TwoBodyParams(L=8, gamma=2)

    def test_size_budget(self):
        with pytest.raises(SizeBudgetError):
            build_two_body_hamiltonian(TwoBodyParams(L=200))

    def test_revival_parameters(self):
        params = revival_parameters()
        assert (params.L, params.J_a, params.J_t, params.U, params.gamma) == (64, 2.0, 3.0, 60.0, 1)


class TestTwoBodyDynamics:
    """Exact propagation of one monomer and one trimer"""

    @pytest.fixture(autouse=True)
    def setup(self, test_logger):
        self.logger = test_logger

    def test_eigenstate_without_interaction_is_stationary(self):
        L = 8
        H = build_two_body_hamiltonian(TwoBodyParams(L=L, U=0.0))
        state = momentum_eigenstate(math.pi / 2, -math.pi / 4, L)
        later = TwoBodyPropagator(H, state).at(3.7)
        assert distribution_fidelity(momentum_distribution(state).monomer, momentum_distribution(later).monomer) == pytest.approx(1.0)

    def test_ring_conserves_momentum_and_energy(self):
        L = 16
        H = build_two_body_hamiltonian(TwoBodyParams(L=L, U=20.0))
        state = momentum_eigenstate(3 * math.pi / 4, -math.pi / 2, L)
        energy = expectation(state, H)
        for evolved in evolve(state, H, [0.5, 2.0, 6.0]):
            assert abs(evolved.norm - 1.0) < 1e-9
            assert expectation(evolved, H) == pytest.approx(energy, abs=1e-9)
            assert total_momentum(evolved) == pytest.approx(total_momentum(state), abs=1e-9)

    def test_ring_block_is_one_total_momentum(self):
        L = 12
        H = build_two_body_hamiltonian(TwoBodyParams(L=L, U=20.0))
        propagator = TwoBodyPropagator(H, momentum_eigenstate(math.pi / 2, 0.0, L))
        assert len(propagator.support) == L

    def test_same_site_probability_of_plane_waves(self):
        state = momentum_eigenstate(math.pi / 3, -math.pi / 3, 6)
        assert same_site_probability(state) == pytest.approx(1.0 / 6.0)

    def test_unnormalized_state_rejected(self):
        L = 4
        H = build_two_body_hamiltonian(TwoBodyParams(L=L))
        state = TwoBodyState(L=L, amplitudes=2.0 * momentum_eigenstate(0.0, math.pi, L).amplitudes)
        with pytest.raises(NumericalFailure):
            TwoBodyPropagator(H, state)

    def test_distribution_helpers(self):
        p = np.array([0.5, 0.3, 0.2])
        assert dominant_weight(p) == pytest.approx(0.8)
        assert distribution_fidelity(p, p) == pytest.approx(1.0)
        assert sample_times(2.0, 5).tolist() == [0.0, 0.5, 1.0, 1.5, 2.0]


class TestRevivals:
    """Monomer-trimer redistribution on the 64-site ring and open chain"""

    @pytest.fixture(autouse=True)
    def setup(self, test_logger):
        self.logger = test_logger

    def _run(self, gamma):
        L = 64
        k_a, k_t = FIG3_MOMENTA
        H = build_two_body_hamiltonian(TwoBodyParams(L=L, J_a=2.0, J_t=3.0, U=60.0, gamma=gamma))
        state = momentum_eigenstate(k_a, k_t, L)
        t_c = revival_time(L, k_a, k_t, 2.0, 3.0)
        return state, TwoBodyPropagator(H, state), t_c

    @pytest.mark.slow
    def test_ring_redistributes_and_revives(self):
        state, propagator, t_c = self._run(gamma=1)
        quarter = momentum_distribution(propagator.at(t_c / 4))
        revived = momentum_distribution(propagator.at(t_c))
        initial = momentum_distribution(state)
        self.logger.info(
            f"t_c={t_c:.4f}: quarter weights a={dominant_weight(quarter.monomer):.4f} "
            f"t={dominant_weight(quarter.trimer):.4f}"
        )
        assert dominant_weight(quarter.monomer) >= 0.95
        assert dominant_weight(quarter.trimer) >= 0.95
        assert distribution_fidelity(initial.monomer, revived.monomer) > 0.9
        assert distribution_fidelity(initial.trimer, revived.trimer) > 0.9

    @pytest.mark.slow
    def test_open_chain_loses_revival(self):
        _, propagator, t_c = self._run(gamma=0)
        revived = momentum_distribution(propagator.at(t_c))
        grid = MomentumGrid(64)
        k_a, k_t = FIG3_MOMENTA
        weight = 0.5 * (revived.monomer[grid.index_of(k_a)] + revived.trimer[grid.index_of(k_t)])
        self.logger.info(f"open chain initial weight at t_c: {weight:.4f}")
        assert weight < 0.5
