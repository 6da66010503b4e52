"""Exact dynamics of one monomer and one trimer in quasi-momentum space.

Basis ordering: the product state |k_a> (x) |k_t> has index i_a * L + i_t, where
i_a, i_t index `MomentumGrid.values`. Plane waves are phi_k(j) = exp(i k j)/sqrt(L)
on sites j = 1..L.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, validator
from scipy import linalg, sparse
from scipy.sparse import csgraph

from src.errors import NumericalFailure, OffGridMomentum, SizeBudgetError
from src.settings import get_settings

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-9


class TwoBodyParams(BaseModel):
    L: int
    J_a: float = 2.0
    J_t: float = 3.0
    U: float = 60.0
    gamma: int = 1

    @validator("L")
    def _at_least_two_sites(cls, value):
        if value < 2:
            raise ValueError("need at least two sites")
        return value

    @validator("gamma")
    def _boundary_flag(cls, value):
        if value not in (0, 1):
            raise ValueError("gamma is 1 for periodic and 0 for open boundaries")
        return value

    @property
    def periodic(self) -> bool:
        return self.gamma == 1


@dataclass(frozen=True)
class MomentumGrid:
    L: int
    values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nu = np.arange(math.floor(-self.L / 2 + 1), math.floor(self.L / 2) + 1)
        object.__setattr__(self, "values", 2.0 * np.pi * nu / self.L)

    @property
    def nu(self) -> np.ndarray:
        return np.rint(self.values * self.L / (2.0 * np.pi)).astype(int)

    def index_of(self, k: float, tol: float = 1e-9) -> int:
        """Grid index of k (taken modulo 2 pi); off-grid values are rejected."""
        steps = k * self.L / (2.0 * np.pi)
        nearest = round(steps)
        if abs(steps - nearest) > tol * max(1.0, abs(steps)):
            raise OffGridMomentum(f"k={k:.12g} is not a multiple of 2pi/{self.L}")
        matches = np.nonzero((self.nu - nearest) % self.L == 0)[0]
        return int(matches[0])

    def plane_waves(self) -> np.ndarray:
        """Columns are the site amplitudes of each grid momentum."""
        sites = np.arange(1, self.L + 1)
        return np.exp(1j * np.outer(sites, self.values)) / math.sqrt(self.L)


@dataclass
class TwoBodyState:
    L: int
    amplitudes: np.ndarray

    @property
    def grid(self) -> MomentumGrid:
        return MomentumGrid(self.L)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def as_matrix(self) -> np.ndarray:
        return self.amplitudes.reshape(self.L, self.L)

    def to_site_basis(self) -> np.ndarray:
        """Amplitude psi(j_a, j_t) on the real lattice, shape (L, L)."""
        F = self.grid.plane_waves()
        return F @ self.as_matrix() @ F.T


@dataclass(frozen=True)
class MomentumDistribution:
    grid: MomentumGrid
    monomer: np.ndarray
    trimer: np.ndarray

    def for_species(self, species: str) -> np.ndarray:
        if species in ("a", "monomer"):
            return self.monomer
        if species in ("t", "trimer"):
            return self.trimer
        raise ValueError(f"unknown species {species!r}")


def _check_budget(L: int):
    limit = get_settings().two_body_max_sites
    if L > limit:
        raise SizeBudgetError(f"L={L} exceeds the dense two-body budget of {limit} sites")


def single_particle_hamiltonian(grid: MomentumGrid, J: float, gamma: int) -> np.ndarray:
    """-2J cos k on the diagonal plus the open-boundary correction (1-gamma) J/L (e^{ik'} + e^{-ik})."""
    k = grid.values
    h = np.diag(-2.0 * J * np.cos(k)).astype(complex)
    if gamma == 0:
        h += (J / grid.L) * (np.exp(1j * k)[None, :] + np.exp(-1j * k)[:, None])
    return h


def interaction_matrix(grid: MomentumGrid, U: float) -> np.ndarray:
    """U/L between (k_a, k_t) and (k_a', k_t') whenever k_a + k_t = k_a' + k_t' mod 2 pi."""
    L = grid.L
    nu = grid.nu
    total = (nu[:, None] + nu[None, :]) % L
    flat_total = total.reshape(-1)
    same = flat_total[:, None] == flat_total[None, :]
    return (U / L) * same.astype(complex)


def build_two_body_hamiltonian(p: TwoBodyParams) -> np.ndarray:
    """Dense momentum-space Hamiltonian of dimension L^2."""
    _check_budget(p.L)
    grid = MomentumGrid(p.L)
    identity = np.eye(p.L)
    h_a = single_particle_hamiltonian(grid, p.J_a, p.gamma)
    h_t = single_particle_hamiltonian(grid, p.J_t, p.gamma)
    H = np.kron(h_a, identity) + np.kron(identity, h_t)
    if p.U != 0.0:
        H += interaction_matrix(grid, p.U)
    logger.debug(f"Built two-body Hamiltonian L={p.L} gamma={p.gamma} U={p.U}")
    return H


def build_real_space_two_body_hamiltonian(p: TwoBodyParams) -> np.ndarray:
    """The same model on sites, basis index (j_a - 1) * L + (j_t - 1)."""
    _check_budget(p.L)
    L = p.L

    def hopping(J):
        h = np.zeros((L, L))
        for j in range(L - 1):
            h[j, j + 1] = h[j + 1, j] = -J
        if p.gamma == 1 and L > 2:
            h[L - 1, 0] = h[0, L - 1] = -J
        elif p.gamma == 1:
            h[0, 1] = h[1, 0] = -2.0 * J
        return h

    identity = np.eye(L)
    H = np.kron(hopping(p.J_a), identity) + np.kron(identity, hopping(p.J_t))
    H += np.diag(p.U * np.eye(L).reshape(-1))
    return H


def momentum_eigenstate(k_a: float, k_t: float, L: int) -> TwoBodyState:
    grid = MomentumGrid(L)
    i_a = grid.index_of(k_a)
    i_t = grid.index_of(k_t)
    amplitudes = np.zeros(L * L, dtype=complex)
    amplitudes[i_a * L + i_t] = 1.0
    return TwoBodyState(L=L, amplitudes=amplitudes)


def same_site_probability(state: TwoBodyState) -> float:
    psi = state.to_site_basis()
    return float(np.sum(np.abs(np.diag(psi)) ** 2))


def _invariant_support(H: np.ndarray, amplitudes: np.ndarray) -> np.ndarray:
    """Indices of the H-invariant block (graph component) carrying the state."""
    scale = max(float(np.max(np.abs(H))), 1.0)
    pattern = sparse.csr_matrix(np.abs(H) > 1e-14 * scale)
    _, labels = csgraph.connected_components(pattern, directed=False)
    occupied = np.unique(labels[np.abs(amplitudes) > 0])
    return np.nonzero(np.isin(labels, occupied))[0]


class TwoBodyPropagator:
    """Exact e^{-iHt} from one eigendecomposition of the block that carries the state."""

    def __init__(self, H: np.ndarray, state: TwoBodyState):
        if not np.allclose(H, H.conj().T, atol=1e-12):
            raise NumericalFailure("two-body Hamiltonian is not Hermitian")
        norm = state.norm
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise NumericalFailure(f"initial state norm {norm:.12f} is not 1")

        self.state = state
        self.support = _invariant_support(H, state.amplitudes)
        block = H[np.ix_(self.support, self.support)]
        try:
            self.energies, self.vectors = linalg.eigh(block)
        except linalg.LinAlgError as e:
            logger.error(f"Eigendecomposition failed on a block of size {len(self.support)}: {e}")
            raise NumericalFailure(f"eigensolver failed: {e}")
        self.coefficients = self.vectors.conj().T @ state.amplitudes[self.support]
        logger.info(f"Two-body propagator ready: block {len(self.support)} of {H.shape[0]}")

    def at(self, t: float) -> TwoBodyState:
        amplitudes = np.zeros_like(self.state.amplitudes)
        amplitudes[self.support] = self.vectors @ (np.exp(-1j * self.energies * t) * self.coefficients)
        evolved = TwoBodyState(L=self.state.L, amplitudes=amplitudes)
        drift = abs(evolved.norm - 1.0)
        if drift > NORM_TOLERANCE:
            raise NumericalFailure(f"norm drifted by {drift:.3e}", time=t)
        return evolved


def evolve(state: TwoBodyState, H: np.ndarray, times: Sequence[float]) -> List[TwoBodyState]:
    propagator = TwoBodyPropagator(H, state)
    return [propagator.at(t) for t in times]


def momentum_distribution(state: TwoBodyState) -> MomentumDistribution:
    probabilities = np.abs(state.as_matrix()) ** 2
    return MomentumDistribution(
        grid=state.grid,
        monomer=probabilities.sum(axis=1),
        trimer=probabilities.sum(axis=0),
    )


def expectation(state: TwoBodyState, H: np.ndarray) -> float:
    return float(np.real(np.vdot(state.amplitudes, H @ state.amplitudes)))


def total_momentum(state: TwoBodyState) -> float:
    """Expectation of the total lattice momentum phase angle, summed on the grid."""
    grid = state.grid
    probabilities = np.abs(state.as_matrix()) ** 2
    phase = np.exp(1j * (grid.values[:, None] + grid.values[None, :]))
    return float(np.angle(np.sum(probabilities * phase)))


def distribution_fidelity(p: np.ndarray, q: np.ndarray) -> float:
    """Classical fidelity (sum sqrt(p q))^2 between two distributions."""
    return float(np.sum(np.sqrt(np.clip(p, 0.0, None) * np.clip(q, 0.0, None))) ** 2)


def dominant_weight(p: np.ndarray, count: int = 2) -> float:
    """Total weight carried by the `count` largest entries."""
    return float(np.sum(np.sort(p)[::-1][:count]))


def sample_times(t_max: float, samples: int) -> np.ndarray:
    if samples < 2:
        raise ValueError("need at least two samples")
    return np.linspace(0.0, t_max, samples)


def revival_parameters(L: int = 64, J: float = 1.0, U_over_J: Optional[float] = None) -> TwoBodyParams:
    """Monomer/trimer rates 2J and 3J with the contact interaction default of 20 max(J_a, J_t)."""
    J_a, J_t = 2.0 * J, 3.0 * J
    U = 20.0 * max(J_a, J_t) if U_over_J is None else U_over_J * J
    return TwoBodyParams(L=L, J_a=J_a, J_t=J_t, U=U, gamma=1)
