"""Hamiltonian catalog: full Bose-Hubbard, effective dimer, effective defect, two-species.

Every model yields one Hermitian generator per bond (acting on sites b, b+1,
basis index s_left * d + s_right) for TEBD, and an exact sparse matrix on small
lattices built directly from site operators for oracle checks.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, parse_obj_as, validator
from scipy import sparse

from src.errors import InvalidDefectPlacement, SizeBudgetError, ThetaIndexError
from src.local_spaces import BosonSpace, DefectSpace, DimerSpace, LocalSpace, TwoSpeciesSpace
from src.settings import get_settings
from src.symmetric_mps import LocalizedDefect, SegmentedInitialState

logger = logging.getLogger(__name__)

VACUUM_MEDIUM = 1
DIMER_MEDIUM = 2

# hopping rates in units of J, keyed by (species, medium)
DEFECT_HOPPING_TABLE = {
    ("a", VACUUM_MEDIUM): 1.0,
    ("a", DIMER_MEDIUM): 2.0,
    ("t", VACUUM_MEDIUM): 0.0,
    ("t", DIMER_MEDIUM): 3.0,
}


class _ModelParams(BaseModel):
    class Config:
        extra = "forbid"

    L: Optional[int] = None

    @validator("L")
    def _positive_length(cls, value):
        if value is not None and value < 2:
            raise ValueError("a lattice model needs at least two sites")
        return value


class BoseHubbardParams(_ModelParams):
    kind: Literal["bose_hubbard"] = "bose_hubbard"
    J: float = 1.0
    U: float = 100.0
    n_max: int = 3

    @validator("n_max")
    def _cutoff(cls, value):
        if value < 1:
            raise ValueError("n_max must be at least 1")
        return value

    def local_space(self) -> LocalSpace:
        return BosonSpace(self.n_max)

    @property
    def default_dt(self) -> float:
        return 1.0 / (50.0 * self.J) if self.J else 0.02


class EffectiveDimerParams(_ModelParams):
    kind: Literal["effective_dimer"] = "effective_dimer"
    J: float = 1.0
    U: float = 100.0

    def local_space(self) -> LocalSpace:
        return DimerSpace()

    @property
    def default_dt(self) -> float:
        return 1.0 / (10.0 * self.J) if self.J else 0.1


class EffectiveDefectParams(_ModelParams):
    kind: Literal["effective_defect"] = "effective_defect"
    J: float = 1.0
    static_theta: bool = False

    def local_space(self) -> LocalSpace:
        return DefectSpace()

    @property
    def default_dt(self) -> float:
        return 1.0 / (10.0 * self.J) if self.J else 0.1


class TwoSpeciesParams(_ModelParams):
    kind: Literal["two_species"] = "two_species"
    J_a: float = 1.0
    J_b: float = 1.0
    U_a: float = 60.0
    U_b: float = 60.0
    U_ab: float = 40.0
    cap_a: int = 3
    cap_b: int = 3

    def local_space(self) -> LocalSpace:
        return TwoSpeciesSpace(self.cap_a, self.cap_b)

    @property
    def default_dt(self) -> float:
        return 1.0 / (50.0 * max(self.J_a, self.J_b))


HamiltonianSpec = Union[BoseHubbardParams, EffectiveDimerParams, EffectiveDefectParams, TwoSpeciesParams]


def parse_model(data: dict) -> HamiltonianSpec:
    return parse_obj_as(HamiltonianSpec, data)


@dataclass(frozen=True)
class DimerModelParams:
    J_tilde: float
    B_tilde: float
    Delta: float


def dimer_couplings(J: float, U: float) -> DimerModelParams:
    """Second-order dimer hopping and nearest-neighbour attraction."""
    if U == 0:
        raise ValueError("dimer couplings need a nonzero interaction U")
    J_tilde = -2.0 * J * J / U
    B_tilde = -16.0 * J * J / U
    Delta = B_tilde / (2.0 * J_tilde) if J_tilde else 4.0
    return DimerModelParams(J_tilde=J_tilde, B_tilde=B_tilde, Delta=Delta)


def two_species_couplings(p: TwoSpeciesParams) -> DimerModelParams:
    """Couplings of a-b dimers; infinite intra-species interactions are allowed."""
    if p.U_a == 0 or p.U_b == 0 or p.U_ab == 0:
        raise ValueError("two-species couplings need nonzero U_a, U_b and U_ab")
    J_tilde = -2.0 * p.J_a * p.J_b / p.U_ab
    B_tilde = -2.0 * (
        2.0 * p.J_a ** 2 / p.U_a + 2.0 * p.J_b ** 2 / p.U_b + (p.J_a ** 2 + p.J_b ** 2) / p.U_ab
    )
    Delta = (p.J_a / p.J_b) * (0.5 + p.U_ab / p.U_a) + (p.J_b / p.J_a) * (0.5 + p.U_ab / p.U_b)
    return DimerModelParams(J_tilde=J_tilde, B_tilde=B_tilde, Delta=Delta)


def identify_species(J: float, U: float) -> TwoSpeciesParams:
    """Two-species parameters whose dimer couplings coincide with the single-species ones."""
    return TwoSpeciesParams(J_a=J, J_b=J, U_a=2.0 * U / 3.0, U_b=2.0 * U / 3.0, U_ab=U)


# ---------------------------------------------------------------------------
# effective defect bookkeeping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DefectPlacement:
    species: str
    segment: int
    site: Optional[int]
    k: Optional[float]


@dataclass
class EffectiveDefectConfig:
    """Theta map of the reference configuration plus the defect registry.

    reference_media[i] is the medium of 0-based reference site i: the defects
    occupy sites 0..N-1 and the background string of every non-defect site
    follows in its original order.
    """

    J: float
    reference_media: np.ndarray
    initial_media: np.ndarray
    registry: List[DefectPlacement] = field(default_factory=list)

    @property
    def L(self) -> int:
        return self.reference_media.size

    @property
    def total_defects(self) -> int:
        return len(self.registry)

    def theta(self, j: int) -> int:
        """Medium of reference site j+1 (1-based j over bonds 1..L-1)."""
        if not 1 <= j <= self.L - 1:
            raise ThetaIndexError(f"Theta({j}) outside bonds 1..{self.L - 1}")
        return int(self.reference_media[j])

    def static_theta(self, j: int) -> int:
        """Medium of physical site j+1 in the initial configuration (boundaries never move)."""
        if not 1 <= j <= self.L - 1:
            raise ThetaIndexError(f"Theta({j}) outside bonds 1..{self.L - 1}")
        return int(self.initial_media[j])

    def rates(self, medium: int) -> Dict[str, float]:
        return {species: self.J * DEFECT_HOPPING_TABLE[(species, medium)] for species in ("a", "t")}

    @classmethod
    def from_segments(cls, initial: SegmentedInitialState, J: float = 1.0) -> "EffectiveDefectConfig":
        space = DefectSpace()
        background, initial_media, registry = [], [], []
        for index, segment in enumerate(initial.segments):
            if segment.n not in (0, 2):
                raise InvalidDefectPlacement(f"segment {index}: the effective model needs filling 0 or 2, got {segment.n}")
            medium = DIMER_MEDIUM if segment.n == 2 else VACUUM_MEDIUM
            initial_media.extend([medium] * segment.length)
            background.extend([medium] * (segment.length - segment.defect_count))
            if segment.defect is None:
                continue
            state = space.site_state(segment.n, segment.defect.sign)
            species = "a" if state == DefectSpace.MONOMER else "t"
            if isinstance(segment.defect, LocalizedDefect):
                registry.append(DefectPlacement(species, index, segment.defect.site, None))
            else:
                registry.append(DefectPlacement(species, index, None, segment.defect.k))

        # defect slots never enter a hop; they carry the vacuum medium
        reference = [VACUUM_MEDIUM] * len(registry) + background
        return cls(
            J=J,
            reference_media=np.array(reference, dtype=np.int64),
            initial_media=np.array(initial_media, dtype=np.int64),
            registry=registry,
        )


# ---------------------------------------------------------------------------
# bond generators
# ---------------------------------------------------------------------------

class BondGenerator:
    """Hermitian two-site term of one bond; nonlocal terms depend on the defect count n_r right of the bond."""

    def __init__(self, bond: int, fixed: Optional[np.ndarray] = None, by_right_count: Optional[Callable[[int], np.ndarray]] = None):
        if (fixed is None) == (by_right_count is None):
            raise ValueError("a bond generator is either fixed or selected by the right defect count")
        self.bond = bond
        self._fixed = fixed
        self._by_right_count = by_right_count

    @property
    def nonlocal_(self) -> bool:
        return self._by_right_count is not None

    def matrix(self, n_r: int = 0) -> np.ndarray:
        if self._fixed is not None:
            return self._fixed
        return self._by_right_count(n_r)

    def __repr__(self):
        return f"BondGenerator(bond={self.bond}, nonlocal={self.nonlocal_})"


def _hop(op_left: np.ndarray, op_right: np.ndarray) -> np.ndarray:
    """op_left^dag (x) op_right + h.c."""
    term = np.kron(op_left.conj().T, op_right)
    return term + term.conj().T


def _split_onsite(L: int, hop: np.ndarray, onsite: Optional[np.ndarray], d: int) -> List[BondGenerator]:
    """Attach on-site energy evenly to adjacent bonds; edge sites give their full share."""
    identity = np.eye(d)
    generators = []
    for bond in range(L - 1):
        h = hop.astype(complex).copy()
        if onsite is not None:
            w_left = 1.0 if bond == 0 else 0.5
            w_right = 1.0 if bond == L - 2 else 0.5
            h += w_left * np.kron(onsite, identity) + w_right * np.kron(identity, onsite)
        generators.append(BondGenerator(bond, fixed=h))
    return generators


def _bose_hubbard_onsite(U: float, number: np.ndarray) -> np.ndarray:
    return 0.5 * U * number @ (number - np.eye(number.shape[0]))


def bose_hubbard_gate_generator(p: BoseHubbardParams, L: int) -> List[BondGenerator]:
    space = BosonSpace(p.n_max)
    b = space.annihilator("b")
    hop = -p.J * _hop(b, b)
    onsite = _bose_hubbard_onsite(p.U, space.number("b"))
    return _split_onsite(L, hop, onsite, space.d)


def effective_dimer_gate_generator(p: EffectiveDimerParams, L: int) -> List[BondGenerator]:
    space = DimerSpace()
    couplings = dimer_couplings(p.J, p.U)
    c = space.annihilator("c")
    n = space.number("c")
    hop = -couplings.J_tilde * _hop(c, c) + couplings.B_tilde * np.kron(n, n)
    return _split_onsite(L, hop, None, space.d)


def two_species_gate_generator(p: TwoSpeciesParams, L: int) -> List[BondGenerator]:
    space = TwoSpeciesSpace(p.cap_a, p.cap_b)
    a, b = space.annihilator("a"), space.annihilator("b")
    n_a, n_b = space.number("a"), space.number("b")
    hop = -p.J_a * _hop(a, a) - p.J_b * _hop(b, b)
    onsite = _bose_hubbard_onsite(p.U_a, n_a) + _bose_hubbard_onsite(p.U_b, n_b) + p.U_ab * n_a @ n_b
    return _split_onsite(L, hop, onsite, space.d)


def defect_hop_matrix(rates: Dict[str, float]) -> np.ndarray:
    """-J_a (|a0><0a| + h.c.) - J_t (|t0><0t| + h.c.) on the defect register."""
    d = 3
    h = np.zeros((d * d, d * d), dtype=complex)
    bg = DefectSpace.BACKGROUND
    for state, species in ((DefectSpace.MONOMER, "a"), (DefectSpace.TRIMER, "t")):
        left = state * d + bg
        right = bg * d + state
        h[left, right] = h[right, left] = -rates[species]
    return h


def effective_defect_gate_generator(cfg: EffectiveDefectConfig, bond: int, n_r: int, static: bool = False) -> np.ndarray:
    """Generator of 0-based bond `bond` given n_r defects on sites bond+2 and beyond."""
    j = bond + 1
    medium = cfg.static_theta(j) if static else cfg.theta(j + n_r)
    return defect_hop_matrix(cfg.rates(medium))


def effective_defect_generators(cfg: EffectiveDefectConfig, static: bool = False) -> List[BondGenerator]:
    generators = []
    for bond in range(cfg.L - 1):
        if static:
            generators.append(BondGenerator(bond, fixed=effective_defect_gate_generator(cfg, bond, 0, static=True)))
        else:
            generators.append(
                BondGenerator(bond, by_right_count=lambda n_r, bond=bond: effective_defect_gate_generator(cfg, bond, n_r))
            )
    return generators


# ---------------------------------------------------------------------------
# assembled models
# ---------------------------------------------------------------------------

@dataclass
class LatticeModel:
    spec: HamiltonianSpec
    space: LocalSpace
    L: int
    generators: List[BondGenerator]
    defect_config: Optional[EffectiveDefectConfig] = None

    @property
    def nonlocal_(self) -> bool:
        return any(g.nonlocal_ for g in self.generators)

    def right_defect_counts(self, labels: np.ndarray) -> np.ndarray:
        """n_r for every label of the bond after the right site of a gate."""
        total = self.defect_config.total_defects if self.defect_config else 0
        return total - labels.sum(axis=1)


def build_lattice_model(spec: HamiltonianSpec, initial: Union[SegmentedInitialState, int]) -> LatticeModel:
    L = initial if isinstance(initial, int) else initial.L
    if spec.L is not None and spec.L != L:
        raise ValueError(f"model declares L={spec.L} but the state has {L} sites")
    if L < 2:
        raise ValueError("a lattice model needs at least two sites")

    if isinstance(spec, BoseHubbardParams):
        return LatticeModel(spec, spec.local_space(), L, bose_hubbard_gate_generator(spec, L))
    if isinstance(spec, EffectiveDimerParams):
        return LatticeModel(spec, spec.local_space(), L, effective_dimer_gate_generator(spec, L))
    if isinstance(spec, TwoSpeciesParams):
        return LatticeModel(spec, spec.local_space(), L, two_species_gate_generator(spec, L))
    if isinstance(spec, EffectiveDefectParams):
        if isinstance(initial, int):
            raise ValueError("the effective defect model needs the segment list to build its Theta map")
        cfg = EffectiveDefectConfig.from_segments(initial, J=spec.J)
        generators = effective_defect_generators(cfg, static=spec.static_theta)
        logger.info(f"Effective defect model: L={L}, {cfg.total_defects} defects, static_theta={spec.static_theta}")
        return LatticeModel(spec, spec.local_space(), L, generators, defect_config=cfg)
    raise TypeError(f"unknown model spec {type(spec).__name__}")


# ---------------------------------------------------------------------------
# dense oracles
# ---------------------------------------------------------------------------

def _check_dimension(d: int, L: int) -> int:
    dim = d ** L
    budget = get_settings().dense_budget
    if dim > budget:
        raise SizeBudgetError(f"Hilbert dimension {d}^{L} = {dim} exceeds the dense budget {budget}")
    return dim


def _embed(L: int, d: int, ops: Dict[int, np.ndarray]) -> sparse.csr_matrix:
    """Tensor product of site operators (identity elsewhere), site 0 most significant."""
    result = sparse.identity(1, dtype=complex, format="csr")
    for site in range(L):
        factor = sparse.csr_matrix(ops[site]) if site in ops else sparse.identity(d, dtype=complex, format="csr")
        result = sparse.kron(result, factor, format="csr")
    return result


def _right_count_projector(d: int, n_sites: int, n_r: int, defects_per_state: np.ndarray) -> sparse.csr_matrix:
    counts = np.zeros(1, dtype=np.int64)
    for _ in range(n_sites):
        counts = np.add.outer(counts, defects_per_state).ravel()
    return sparse.diags((counts == n_r).astype(complex), format="csr")


def dense_bond_terms(model: LatticeModel) -> List[sparse.csr_matrix]:
    """Each bond term H~_b as a full-lattice matrix; nonlocal terms carry explicit n_r projectors."""
    d, L = model.space.d, model.L
    _check_dimension(d, L)
    terms = []
    defects_per_state = model.space.charges.sum(axis=1)
    for generator in model.generators:
        b = generator.bond
        left = sparse.identity(d ** b, dtype=complex, format="csr")
        n_right = L - b - 2
        if not generator.nonlocal_:
            right = sparse.identity(d ** n_right, dtype=complex, format="csr")
            terms.append(sparse.kron(sparse.kron(left, sparse.csr_matrix(generator.matrix())), right, format="csr"))
            continue
        term = sparse.csr_matrix((d ** L, d ** L), dtype=complex)
        for n_r in range(0, min(model.defect_config.total_defects, n_right) + 1):
            projector = _right_count_projector(d, n_right, n_r, defects_per_state)
            local = sparse.csr_matrix(generator.matrix(n_r))
            term = term + sparse.kron(sparse.kron(left, local), projector, format="csr")
        terms.append(term.tocsr())
    return terms


def gate_sum_hamiltonian(model: LatticeModel) -> sparse.csr_matrix:
    return sum(dense_bond_terms(model)).tocsr()


def dense_hamiltonian(model: LatticeModel) -> sparse.csr_matrix:
    """Exact Hamiltonian on the full product space, written in terms of site operators."""
    spec, space, L = model.spec, model.space, model.L
    d = space.d
    _check_dimension(d, L)
    H = sparse.csr_matrix((d ** L, d ** L), dtype=complex)

    if isinstance(spec, BoseHubbardParams):
        b = space.annihilator("b")
        for j in range(L - 1):
            hop = _embed(L, d, {j: b.conj().T, j + 1: b})
            H = H - spec.J * (hop + hop.getH())
        onsite = _bose_hubbard_onsite(spec.U, space.number("b"))
        for j in range(L):
            H = H + _embed(L, d, {j: onsite})

    elif isinstance(spec, EffectiveDimerParams):
        couplings = dimer_couplings(spec.J, spec.U)
        c, n = space.annihilator("c"), space.number("c")
        for j in range(L - 1):
            hop = _embed(L, d, {j: c.conj().T, j + 1: c})
            H = H - couplings.J_tilde * (hop + hop.getH()) + couplings.B_tilde * _embed(L, d, {j: n, j + 1: n})

    elif isinstance(spec, TwoSpeciesParams):
        a, b = space.annihilator("a"), space.annihilator("b")
        n_a, n_b = space.number("a"), space.number("b")
        for j in range(L - 1):
            for rate, op in ((spec.J_a, a), (spec.J_b, b)):
                hop = _embed(L, d, {j: op.conj().T, j + 1: op})
                H = H - rate * (hop + hop.getH())
        onsite = _bose_hubbard_onsite(spec.U_a, n_a) + _bose_hubbard_onsite(spec.U_b, n_b) + spec.U_ab * n_a @ n_b
        for j in range(L):
            H = H + _embed(L, d, {j: onsite})

    elif isinstance(spec, EffectiveDefectParams):
        H = _dense_effective_defect(model)

    else:
        raise TypeError(f"unknown model spec {type(spec).__name__}")
    return H.tocsr()


def _dense_effective_defect(model: LatticeModel) -> sparse.csr_matrix:
    """Sum over bonds and n_r of the hard-core hops times projectors onto n_r defects right of the bond."""
    cfg, space, L = model.defect_config, model.space, model.L
    d = space.d
    a, t = space.annihilator("a"), space.annihilator("t")
    free_of_t = np.eye(d) - space.number("t")
    free_of_a = np.eye(d) - space.number("a")
    defects_per_state = space.charges.sum(axis=1)

    H = sparse.csr_matrix((d ** L, d ** L), dtype=complex)
    for j in range(L - 1):
        a_hop = _embed(L, d, {j: a.conj().T @ free_of_t, j + 1: a @ free_of_t})
        t_hop = _embed(L, d, {j: t.conj().T @ free_of_a, j + 1: t @ free_of_a})
        a_hop = a_hop + a_hop.getH()
        t_hop = t_hop + t_hop.getH()
        if model.spec.static_theta:
            rates = cfg.rates(cfg.static_theta(j + 1))
            H = H - rates["a"] * a_hop - rates["t"] * t_hop
            continue
        n_right = L - j - 2
        for n_r in range(0, min(cfg.total_defects, n_right) + 1):
            rates = cfg.rates(cfg.theta(j + 1 + n_r))
            projector = sparse.kron(
                sparse.identity(d ** (j + 2), dtype=complex, format="csr"),
                _right_count_projector(d, n_right, n_r, defects_per_state),
                format="csr",
            )
            H = H - (rates["a"] * a_hop + rates["t"] * t_hop) @ projector
    return H


def sector_basis(model: LatticeModel, charge: tuple) -> np.ndarray:
    """Indices of product states with the given total charge."""
    totals = np.zeros((1, model.space.n_charges), dtype=np.int64)
    for _ in range(model.L):
        totals = (totals[:, None, :] + model.space.charges[None, :, :]).reshape(-1, model.space.n_charges)
    return np.nonzero(np.all(totals == np.asarray(charge), axis=1))[0]


def commutator_norm(A: sparse.spmatrix, B: sparse.spmatrix) -> float:
    C = (A @ B - B @ A).tocsr()
    return float(abs(C).max()) if C.nnz else 0.0
