"""Local Hilbert spaces of one lattice site.

A space fixes the local dimension, the conserved charge vector of every basis
state (particle numbers per conserved species), the annihilation operators, and
how a site of a Mott segment (filling n, optional +/- defect of some species)
is represented.
"""
import itertools
import logging
from typing import Dict, Optional, Tuple

import numpy as np

from src.errors import CutoffError, InvalidDefectPlacement

logger = logging.getLogger(__name__)


def boson_annihilator(n_max: int) -> np.ndarray:
    """Truncated bosonic b with b|n> = sqrt(n)|n-1>."""
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1)


class LocalSpace:
    """Base class; subclasses fill in `charges`, `operators` and `occupations`."""

    kind = "abstract"
    species: Tuple[str, ...] = ()

    def __init__(self, charges: np.ndarray, operators: Dict[str, np.ndarray], occupations: np.ndarray):
        self.charges = np.asarray(charges, dtype=np.int64)
        self.operators = operators
        self.occupations = np.asarray(occupations, dtype=np.int64)

    @property
    def d(self) -> int:
        return self.charges.shape[0]

    @property
    def n_charges(self) -> int:
        return self.charges.shape[1]

    def annihilator(self, species: str) -> np.ndarray:
        try:
            return self.operators[species]
        except KeyError:
            raise ValueError(f"{self.kind} space has no species {species!r}; known: {sorted(self.operators)}")

    def number(self, species: str) -> np.ndarray:
        op = self.annihilator(species)
        return op.conj().T @ op

    def identity(self) -> np.ndarray:
        return np.eye(self.d)

    def states_with_occupation(self, n: int, species: Optional[str] = None) -> np.ndarray:
        """Local states holding exactly n bare particles (all of `species`, if given)."""
        mask = self.occupations == n
        if species is not None:
            counts = np.rint(np.real(np.diag(self.number(species)))).astype(int)
            mask &= counts == n
        return np.nonzero(mask)[0]

    def site_state(self, filling: int, defect: int = 0, species: Optional[str] = None) -> int:
        raise NotImplementedError

    def pair_charge_totals(self) -> np.ndarray:
        """Total charge of every two-site basis state, shape (d*d, n_charges)."""
        return (self.charges[:, None, :] + self.charges[None, :, :]).reshape(self.d * self.d, -1)

    def describe(self) -> dict:
        return {"kind": self.kind}

    def __eq__(self, other):
        return isinstance(other, LocalSpace) and self.describe() == other.describe()

    def __hash__(self):
        return hash(tuple(sorted(self.describe().items())))

    def __repr__(self):
        return f"{type(self).__name__}({self.describe()})"


class BosonSpace(LocalSpace):
    """Single-species bosons with occupations 0..n_max."""

    kind = "boson"
    species = ("b",)

    def __init__(self, n_max: int = 3):
        if n_max < 1:
            raise CutoffError(f"occupation cutoff must be at least 1, got {n_max}")
        self.n_max = n_max
        occupations = np.arange(n_max + 1)
        super().__init__(
            charges=occupations[:, None],
            operators={"b": boson_annihilator(n_max)},
            occupations=occupations,
        )

    def site_state(self, filling: int, defect: int = 0, species: Optional[str] = None) -> int:
        n = filling + defect
        if n < 0:
            raise InvalidDefectPlacement(f"hole defect needs filling >= 1, got n={filling}")
        if n > self.n_max:
            raise CutoffError(f"occupation {n} exceeds cutoff n_max={self.n_max}")
        return n

    def describe(self) -> dict:
        return {"kind": self.kind, "n_max": self.n_max}


class TwoSpeciesSpace(LocalSpace):
    """Species a and b with independent caps; state index n_a * (cap_b + 1) + n_b."""

    kind = "two_species"
    species = ("a", "b")

    def __init__(self, cap_a: int = 3, cap_b: int = 3):
        if cap_a < 1 or cap_b < 1:
            raise CutoffError(f"species caps must be at least 1, got ({cap_a}, {cap_b})")
        self.cap_a, self.cap_b = cap_a, cap_b
        pairs = list(itertools.product(range(cap_a + 1), range(cap_b + 1)))
        charges = np.array(pairs)
        operators = {
            "a": np.kron(boson_annihilator(cap_a), np.eye(cap_b + 1)),
            "b": np.kron(np.eye(cap_a + 1), boson_annihilator(cap_b)),
        }
        super().__init__(charges=charges, operators=operators, occupations=charges.sum(axis=1))

    def index(self, n_a: int, n_b: int) -> int:
        if not (0 <= n_a <= self.cap_a and 0 <= n_b <= self.cap_b):
            raise CutoffError(f"occupation ({n_a}, {n_b}) outside caps ({self.cap_a}, {self.cap_b})")
        return n_a * (self.cap_b + 1) + n_b

    def site_state(self, filling: int, defect: int = 0, species: Optional[str] = None) -> int:
        if filling not in (0, 2):
            raise InvalidDefectPlacement(f"two-species segments have filling 0 or 2 (one a-b pair), got {filling}")
        n_a = n_b = filling // 2
        if defect:
            if species not in ("a", "b"):
                raise InvalidDefectPlacement("two-species defects must name species a or b")
            if species == "a":
                n_a += defect
            else:
                n_b += defect
        if n_a < 0 or n_b < 0:
            raise InvalidDefectPlacement(f"hole defect of species {species} on an empty site")
        return self.index(n_a, n_b)

    def describe(self) -> dict:
        return {"kind": self.kind, "cap_a": self.cap_a, "cap_b": self.cap_b}


class DefectSpace(LocalSpace):
    """Effective-model site: background (dimer or vacuum), monomer, or trimer."""

    kind = "defect"
    species = ("a", "t")
    BACKGROUND, MONOMER, TRIMER = 0, 1, 2

    def __init__(self):
        a = np.zeros((3, 3))
        a[self.BACKGROUND, self.MONOMER] = 1.0
        t = np.zeros((3, 3))
        t[self.BACKGROUND, self.TRIMER] = 1.0
        super().__init__(
            charges=np.array([[0, 0], [1, 0], [0, 1]]),
            operators={"a": a, "t": t},
            # bare occupations; the background is ambiguous (0 or 2) and never matches
            occupations=np.array([-1, 1, 3]),
        )

    def site_state(self, filling: int, defect: int = 0, species: Optional[str] = None) -> int:
        if filling not in (0, 2):
            raise InvalidDefectPlacement(f"the defect model needs filling 0 or 2, got {filling}")
        if defect == 0:
            return self.BACKGROUND
        n = filling + defect
        if n == 1:
            return self.MONOMER
        if n == 3:
            return self.TRIMER
        raise InvalidDefectPlacement("a hole on an empty site has no effective-model counterpart")

    def states_with_occupation(self, n: int, species: Optional[str] = None) -> np.ndarray:
        if n in (0, 2):
            raise ValueError("background occupation is not resolved by the defect model")
        return super().states_with_occupation(n)


class DimerSpace(LocalSpace):
    """Hard-core dimers: empty or one on-site pair."""

    kind = "dimer"
    species = ("c",)

    def __init__(self):
        c = np.array([[0.0, 1.0], [0.0, 0.0]])
        super().__init__(charges=np.array([[0], [1]]), operators={"c": c}, occupations=np.array([0, 2]))

    def site_state(self, filling: int, defect: int = 0, species: Optional[str] = None) -> int:
        if defect:
            raise InvalidDefectPlacement("the dimer model carries no monomer or trimer defects")
        if filling not in (0, 2):
            raise InvalidDefectPlacement(f"the dimer model needs filling 0 or 2, got {filling}")
        return filling // 2


def space_from_description(description: dict) -> LocalSpace:
    kind = description.get("kind")
    if kind == "boson":
        return BosonSpace(int(description["n_max"]))
    if kind == "two_species":
        return TwoSpeciesSpace(int(description["cap_a"]), int(description["cap_b"]))
    if kind == "defect":
        return DefectSpace()
    if kind == "dimer":
        return DimerSpace()
    raise ValueError(f"unknown local space {kind!r}")
