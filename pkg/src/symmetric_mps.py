"""Particle-number-conserving matrix product states.

The state on L sites is stored in right-canonical form, psi = B_0 B_1 ... B_{L-1},
with B_j = Gamma_j lambda_{j+1}. Bond j sits left of site j (bonds 0..L). Every
bond index carries a label: the charge vector (particle numbers per conserved
species) of everything to its left. Gamma is recovered on demand by `gamma(j)`.
"""
import io
import json
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field, root_validator, validator
from scipy import linalg
from scipy.stats import binom

from src.errors import (
    CutoffError,
    InvalidDefectPlacement,
    NumericalFailure,
    SectorError,
    SectorMismatchWarning,
)
from src.local_spaces import BosonSpace, LocalSpace, space_from_description
from src.utilities import OutputManager

logger = logging.getLogger(__name__)

SNAPSHOT_FORMAT_VERSION = 1
DEFAULT_LOCAL_DIM = 4
PROBABILITY_EPS = 1e-14
SECTOR_LEAK_TOL = 1e-10


# ---------------------------------------------------------------------------
# segment notation
# ---------------------------------------------------------------------------

class LocalizedDefect(BaseModel):
    kind: Literal["localized"] = "localized"
    site: int
    sign: int

    class Config:
        extra = "forbid"

    @validator("sign")
    def _unit_sign(cls, value):
        if value not in (-1, 1):
            raise ValueError("defect sign is +1 (particle) or -1 (hole)")
        return value


class MomentumDefect(BaseModel):
    kind: Literal["momentum"] = "momentum"
    k: float
    sign: int

    class Config:
        extra = "forbid"

    @validator("sign")
    def _unit_sign(cls, value):
        if value not in (-1, 1):
            raise ValueError("defect sign is +1 (particle) or -1 (hole)")
        return value


Defect = Annotated[Union[LocalizedDefect, MomentumDefect], Field(discriminator="kind")]


def on_segment_grid(k: float, length: int, tol: float = 1e-9) -> bool:
    steps = k * length / (2.0 * math.pi)
    return abs(steps - round(steps)) <= tol * max(1.0, abs(steps))


class SegmentSpec(BaseModel):
    """A Mott segment of `length` sites at filling `n`, with at most one defect."""

    n: int
    length: int
    defect: Optional[Defect] = None
    species: Optional[str] = None

    class Config:
        extra = "forbid"

    @validator("n")
    def _nonnegative_filling(cls, value):
        if value < 0:
            raise ValueError("filling must be nonnegative")
        return value

    @validator("length")
    def _positive_length(cls, value):
        if value < 1:
            raise ValueError("segment length must be at least 1")
        return value

    @validator("species")
    def _known_species(cls, value):
        if value is not None and value not in ("a", "b"):
            raise ValueError("species tag must be 'a' or 'b'")
        return value

    @root_validator(skip_on_failure=True)
    def _defect_fits(cls, values):
        defect, n, length = values.get("defect"), values.get("n"), values.get("length")
        if defect is None:
            return values
        if defect.sign < 0 and n < 1:
            raise ValueError("a hole defect requires filling n >= 1")
        if isinstance(defect, LocalizedDefect) and not 1 <= defect.site <= length:
            raise ValueError(f"defect site {defect.site} outside 1..{length}")
        if isinstance(defect, MomentumDefect) and not on_segment_grid(defect.k, length):
            raise ValueError(f"quasi-momentum {defect.k:.12g} is not a multiple of 2pi/{length}")
        return values

    @property
    def defect_count(self) -> int:
        return 0 if self.defect is None else 1

    @property
    def bare_particles(self) -> int:
        return self.n * self.length + (0 if self.defect is None else self.defect.sign)


class SegmentedInitialState(BaseModel):
    segments: List[SegmentSpec]

    @validator("segments")
    def _nonempty(cls, value):
        if not value:
            raise ValueError("at least one segment is required")
        return value

    @property
    def L(self) -> int:
        return sum(s.length for s in self.segments)

    @property
    def total_particles(self) -> int:
        return sum(s.bare_particles for s in self.segments)

    @property
    def defect_count(self) -> int:
        return sum(s.defect_count for s in self.segments)

    def segment_offsets(self) -> List[int]:
        offsets, start = [], 0
        for segment in self.segments:
            offsets.append(start)
            start += segment.length
        return offsets

    def sites_with_filling(self, n: int) -> List[int]:
        """0-based sites belonging to segments of filling n."""
        sites = []
        for offset, segment in zip(self.segment_offsets(), self.segments):
            if segment.n == n:
                sites.extend(range(offset, offset + segment.length))
        return sites


class SingleParticleWavefunction:
    def __init__(self, amplitudes: Sequence[complex]):
        phi = np.asarray(amplitudes, dtype=complex)
        if phi.ndim != 1 or phi.size == 0:
            raise ValueError("wavefunction must be a nonempty vector")
        norm = np.linalg.norm(phi)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"wavefunction norm is {norm:.15f}, expected 1")
        self.phi = phi

    @classmethod
    def plane_wave(cls, k: float, length: int) -> "SingleParticleWavefunction":
        sites = np.arange(1, length + 1)
        return cls(np.exp(1j * k * sites) / math.sqrt(length))

    @classmethod
    def localized(cls, site: int, length: int) -> "SingleParticleWavefunction":
        phi = np.zeros(length, dtype=complex)
        phi[site - 1] = 1.0
        return cls(phi)

    @property
    def cumulative(self) -> np.ndarray:
        """q_m for bonds m = 0..l (probability of finding the particle left of bond m)."""
        q = np.concatenate([[0.0], np.cumsum(np.abs(self.phi) ** 2)])
        q = np.where(q < PROBABILITY_EPS, 0.0, q)
        q = np.where(q > 1.0 - PROBABILITY_EPS, 1.0, q)
        return np.maximum.accumulate(q)

    def __len__(self):
        return self.phi.size


# ---------------------------------------------------------------------------
# the state container
# ---------------------------------------------------------------------------

@dataclass
class SchmidtSpectrum:
    weights: np.ndarray
    labels: np.ndarray

    @property
    def entropy(self) -> float:
        w = self.weights[self.weights > 0]
        return float(-np.sum(w * np.log(w)))


class SymmetricMPS:
    def __init__(self, space: LocalSpace, tensors: List[np.ndarray], lambdas: List[np.ndarray], labels: List[np.ndarray]):
        if len(lambdas) != len(tensors) + 1 or len(labels) != len(tensors) + 1:
            raise ValueError("need L+1 bond vectors for L site tensors")
        self.space = space
        self.tensors = tensors
        self.lambdas = lambdas
        self.labels = [np.asarray(lab, dtype=np.int64).reshape(len(lam), space.n_charges) for lab, lam in zip(labels, lambdas)]

    @property
    def L(self) -> int:
        return len(self.tensors)

    @property
    def d(self) -> int:
        return self.space.d

    @property
    def total_charge(self) -> tuple:
        return tuple(int(c) for c in self.labels[-1][0])

    @property
    def total_particles(self) -> int:
        return int(sum(self.total_charge))

    @property
    def bond_dims(self) -> List[int]:
        return [len(lam) for lam in self.lambdas]

    def copy(self) -> "SymmetricMPS":
        return SymmetricMPS(
            self.space,
            [t.copy() for t in self.tensors],
            [lam.copy() for lam in self.lambdas],
            [lab.copy() for lab in self.labels],
        )

    def gamma(self, j: int) -> np.ndarray:
        return self.tensors[j] / self.lambdas[j + 1][None, None, :]

    def center(self, j: int) -> np.ndarray:
        """lambda_j B_j, the orthogonality centre at site j."""
        return self.lambdas[j][:, None, None] * self.tensors[j]

    def allowed_mask(self, j: int) -> np.ndarray:
        """True where (left label + local charge == right label) for the tensor at site j."""
        left = self.labels[j][:, None, None, :] + self.space.charges[None, :, None, :]
        right = self.labels[j + 1][None, None, :, :]
        return np.all(left == right, axis=-1)

    def to_dense(self) -> np.ndarray:
        """Full state vector in the product basis (site 0 most significant); small L only."""
        if self.d ** self.L > 2 ** 22:
            raise ValueError("state too large for a dense vector")
        psi = self.tensors[0]
        for tensor in self.tensors[1:]:
            psi = np.tensordot(psi, tensor, axes=(psi.ndim - 1, 0))
        return psi.reshape(-1)

    def __repr__(self):
        return f"SymmetricMPS(L={self.L}, space={self.space!r}, charge={self.total_charge}, chi={max(self.bond_dims)})"


# ---------------------------------------------------------------------------
# block-sparse decomposition
# ---------------------------------------------------------------------------

@dataclass
class SectorSplit:
    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray
    charges: np.ndarray
    discarded_weight: float
    norm: float


def split_by_sectors(
    matrix: np.ndarray,
    row_charges: np.ndarray,
    col_charges: np.ndarray,
    chi_max: Optional[int] = None,
    cutoff: float = 0.0,
) -> SectorSplit:
    """SVD restricted to blocks of equal row/column charge, truncated globally by weight.

    Kept values are the chi_max largest across all sectors whose relative size
    exceeds `cutoff`; ties are ordered by charge. Returned singular values are
    renormalized to unit norm.
    """
    row_charges = np.asarray(row_charges).reshape(matrix.shape[0], -1)
    col_charges = np.asarray(col_charges).reshape(matrix.shape[1], -1)
    uniq_r, inv_r = np.unique(row_charges, axis=0, return_inverse=True)
    uniq_c, inv_c = np.unique(col_charges, axis=0, return_inverse=True)
    inv_r, inv_c = inv_r.reshape(-1), inv_c.reshape(-1)
    col_lookup = {tuple(c): i for i, c in enumerate(uniq_c.tolist())}

    blocks = []
    for ir, charge in enumerate(uniq_r.tolist()):
        ic = col_lookup.get(tuple(charge))
        if ic is None:
            continue
        rows = np.nonzero(inv_r == ir)[0]
        cols = np.nonzero(inv_c == ic)[0]
        sub = matrix[np.ix_(rows, cols)]
        try:
            u, s, vh = linalg.svd(sub, full_matrices=False)
        except linalg.LinAlgError:
            u, s, vh = linalg.svd(sub, full_matrices=False, lapack_driver="gesvd")
        blocks.append((np.array(charge), rows, cols, u, s, vh))

    total_sq = float(np.sum(np.abs(matrix) ** 2))
    block_sq = float(sum(np.sum(b[4] ** 2) for b in blocks))
    if total_sq > 0 and total_sq - block_sq > SECTOR_LEAK_TOL * total_sq:
        raise SectorError(f"matrix weight {total_sq - block_sq:.3e} lies outside the charge sectors")
    if block_sq <= 0.0:
        raise NumericalFailure("all singular values vanished in a sector split")

    norm = math.sqrt(block_sq)
    values = np.concatenate([b[4] for b in blocks]) / norm
    owner = np.concatenate([np.full(b[4].size, i) for i, b in enumerate(blocks)])
    position = np.concatenate([np.arange(b[4].size) for b in blocks])
    charges = np.array([blocks[i][0] for i in owner]).reshape(values.size, -1)

    # weight descending, then charge ascending for reproducible tie-breaking
    order = np.lexsort(tuple(charges[:, c] for c in reversed(range(charges.shape[1]))) + (-values,))
    keep = int(np.count_nonzero(values > cutoff))
    keep = max(1, keep if chi_max is None else min(chi_max, keep))
    kept, dropped = order[:keep], order[keep:]

    discarded = float(np.sum(values[dropped] ** 2))
    kept_values = values[kept]
    kept_values = kept_values / np.linalg.norm(kept_values)

    left = np.zeros((matrix.shape[0], keep), dtype=matrix.dtype)
    right = np.zeros((keep, matrix.shape[1]), dtype=matrix.dtype)
    for column, idx in enumerate(kept):
        _, rows, cols, u, _, vh = blocks[owner[idx]]
        left[rows, column] = u[:, position[idx]]
        right[column, cols] = vh[position[idx], :]

    return SectorSplit(
        left=left,
        singular_values=kept_values,
        right=right,
        charges=charges[kept],
        discarded_weight=discarded,
        norm=norm,
    )


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def _resolve_space(d: Optional[int], space: Optional[LocalSpace]) -> LocalSpace:
    if space is not None:
        return space
    return BosonSpace((d or DEFAULT_LOCAL_DIM) - 1)


def _product_state(space: LocalSpace, states: Sequence[int]) -> SymmetricMPS:
    tensors, lambdas, labels = [], [np.ones(1)], [np.zeros((1, space.n_charges), dtype=np.int64)]
    charge = np.zeros(space.n_charges, dtype=np.int64)
    for s in states:
        tensor = np.zeros((1, space.d, 1), dtype=complex)
        tensor[0, s, 0] = 1.0
        tensors.append(tensor)
        charge = charge + space.charges[s]
        lambdas.append(np.ones(1))
        labels.append(charge[None, :].copy())
    return SymmetricMPS(space, tensors, lambdas, labels)


def build_product_segment(n: int, length: int, d: Optional[int] = None, space: Optional[LocalSpace] = None) -> SymmetricMPS:
    """Every site at filling n; bond dimension 1."""
    space = _resolve_space(d, space)
    state = space.site_state(n)
    return _product_state(space, [state] * length)


def _condensate_chain(phi: SingleParticleWavefunction, N: int):
    """Count-resolved tensors of N bosons in one orbital.

    Returns per-site tensors indexed (left count, added count, right count) in a
    compact bond basis, the lambda vectors and the count labels.
    """
    q = phi.cumulative
    L = len(phi)
    counts = []
    lambdas = []
    for m in range(L + 1):
        if q[m] == 0.0:
            labels = np.array([0])
        elif q[m] == 1.0:
            labels = np.array([N])
        else:
            labels = np.arange(N + 1)
        weights = binom.pmf(labels, N, q[m])
        keep = weights > 0
        counts.append(labels[keep])
        lambdas.append(np.sqrt(weights[keep] / weights[keep].sum()))

    tensors = []
    for m in range(L):
        left, right = counts[m], counts[m + 1]
        phase = np.angle(phi.phi[m])
        p = 0.0 if q[m + 1] == 0.0 else min(q[m] / q[m + 1], 1.0)
        tensor = np.zeros((left.size, N + 1, right.size), dtype=complex)
        for il, l in enumerate(left):
            denominator = binom.pmf(l, N, q[m])
            for ir, r in enumerate(right):
                added = r - l
                if added < 0:
                    continue
                magnitude_sq = binom.pmf(l, r, p) / denominator
                if magnitude_sq <= 0.0:
                    continue
                tensor[il, added, ir] = math.sqrt(magnitude_sq) * lambdas[m + 1][ir] * np.exp(1j * added * phase)
        tensors.append(tensor)
    return tensors, lambdas, counts


def _embed_chain(
    space: LocalSpace,
    chain_tensors,
    lambdas,
    counts,
    local_states: Sequence[Sequence[int]],
) -> SymmetricMPS:
    """Map abstract added-counts to physical local states site by site.

    local_states[m][c] is the physical state of site m holding c added
    particles; every added particle carries the same charge.
    """
    unit = space.charges[local_states[0][1]] - space.charges[local_states[0][0]]
    tensors, labels = [], []
    base = np.zeros(space.n_charges, dtype=np.int64)
    for m, (tensor, states) in enumerate(zip(chain_tensors, local_states)):
        physical = np.zeros((tensor.shape[0], space.d, tensor.shape[2]), dtype=complex)
        for added, s in enumerate(states[: tensor.shape[1]]):
            physical[:, s, :] += tensor[:, added, :]
        tensors.append(physical)
        labels.append(base[None, :] + np.outer(counts[m], unit))
        base = base + space.charges[states[0]]
    labels.append(base[None, :] + np.outer(counts[-1], unit))
    return SymmetricMPS(space, tensors, [np.asarray(lam, dtype=float) for lam in lambdas], labels)


def build_defect_segment(spec: SegmentSpec, d: Optional[int] = None, space: Optional[LocalSpace] = None) -> SymmetricMPS:
    """A segment with one localized defect (product state) or one plane-wave defect (bond dimension 2)."""
    space = _resolve_space(d, space)
    if spec.defect is None:
        return build_product_segment(spec.n, spec.length, space=space)

    background = space.site_state(spec.n)
    try:
        excited = space.site_state(spec.n, spec.defect.sign, spec.species)
    except InvalidDefectPlacement as e:
        logger.error(f"Cannot place defect in segment {spec}: {e}")
        raise

    if isinstance(spec.defect, LocalizedDefect):
        states = [background] * spec.length
        states[spec.defect.site - 1] = excited
        return _product_state(space, states)

    phi = SingleParticleWavefunction.plane_wave(spec.defect.k, spec.length)
    chain, lambdas, counts = _condensate_chain(phi, 1)
    return _embed_chain(space, chain, lambdas, counts, [[background, excited]] * spec.length)


def build_condensate(N: int, phi: SingleParticleWavefunction, d: Optional[int] = None, space: Optional[BosonSpace] = None) -> SymmetricMPS:
    """N bosons in the orbital phi, (sum_j phi_j b_j^dag)^N / sqrt(N!) |vac>, with bond dimension N+1."""
    if N < 0:
        raise ValueError("particle count must be nonnegative")
    space = _resolve_space(d if d is not None else N + 1, space)
    if not isinstance(space, BosonSpace):
        raise CutoffError("the condensate builder needs a single-species boson space")
    if space.n_max < N:
        raise CutoffError(f"local dimension {space.d} cannot hold {N} particles on one site")

    chain, lambdas, counts = _condensate_chain(phi, N)
    states = [list(range(N + 1))] * len(phi)
    return _embed_chain(space, chain, lambdas, counts, states)


def concat(segments: Sequence[SymmetricMPS]) -> SymmetricMPS:
    """Join states side by side; each junction has bond dimension 1."""
    if not segments:
        raise ValueError("nothing to concatenate")
    space = segments[0].space
    tensors, lambdas, labels = [], [np.ones(1)], [np.zeros((1, space.n_charges), dtype=np.int64)]
    offset = np.zeros(space.n_charges, dtype=np.int64)
    for segment in segments:
        if segment.space != space:
            raise ValueError(f"incompatible local spaces {segment.space!r} and {space!r}")
        if segment.bond_dims[0] != 1 or segment.bond_dims[-1] != 1:
            raise ValueError("segments must have trivial outer bonds")
        tensors.extend(t.copy() for t in segment.tensors)
        lambdas.extend(lam.copy() for lam in segment.lambdas[1:])
        labels.extend(lab + offset for lab in segment.labels[1:])
        offset = offset + np.asarray(segment.total_charge, dtype=np.int64)
    return SymmetricMPS(space, tensors, lambdas, labels)


def build_state(initial: SegmentedInitialState, space: Optional[LocalSpace] = None) -> SymmetricMPS:
    space = _resolve_space(None, space)
    parts = [build_defect_segment(segment, space=space) for segment in initial.segments]
    state = concat(parts)
    logger.info(f"Built initial state: L={state.L}, charge={state.total_charge}, max chi={max(state.bond_dims)}")
    return state


# ---------------------------------------------------------------------------
# canonical form and algebra
# ---------------------------------------------------------------------------

def _row_charges(labels: np.ndarray, space: LocalSpace) -> np.ndarray:
    return (labels[:, None, :] + space.charges[None, :, :]).reshape(-1, space.n_charges)


def _col_charges(labels: np.ndarray, space: LocalSpace) -> np.ndarray:
    return (labels[None, :, :] - space.charges[:, None, :]).reshape(-1, space.n_charges)


def canonicalize(mps: SymmetricMPS, chi_max: Optional[int] = None, cutoff: float = 1e-14) -> SymmetricMPS:
    """Restore the Gamma-lambda form (returned as a new, normalized state)."""
    space = mps.space
    tensors = [t.copy() for t in mps.tensors]
    labels = [lab.copy() for lab in mps.labels]

    # left-to-right: left-orthonormal tensors
    carry = np.ones((1, 1), dtype=complex)
    for j in range(mps.L):
        tensor = np.tensordot(carry, tensors[j], axes=(1, 0))
        chi_l, d, chi_r = tensor.shape
        split = split_by_sectors(
            tensor.reshape(chi_l * d, chi_r), _row_charges(labels[j], space), labels[j + 1], cutoff=cutoff
        )
        k = split.singular_values.size
        tensors[j] = split.left.reshape(chi_l, d, k)
        if j + 1 < mps.L:
            carry = split.singular_values[:, None] * split.right
            labels[j + 1] = split.charges
        else:
            tensors[j] = np.tensordot(tensors[j], split.right, axes=(2, 0))

    # right-to-left: Schmidt values and right-orthonormal B
    lambdas = [None] * (mps.L + 1)
    lambdas[mps.L] = np.ones(1)
    carry = np.ones((1, 1), dtype=complex)
    for j in reversed(range(mps.L)):
        tensor = np.tensordot(tensors[j], carry, axes=(2, 0))
        chi_l, d, chi_r = tensor.shape
        split = split_by_sectors(
            tensor.reshape(chi_l, d * chi_r), labels[j], _col_charges(labels[j + 1], space),
            chi_max=chi_max, cutoff=cutoff,
        )
        k = split.singular_values.size
        tensors[j] = split.right.reshape(k, d, chi_r)
        if j > 0:
            lambdas[j] = split.singular_values
            labels[j] = split.charges
            carry = split.left * split.singular_values[None, :]
        else:
            # 1x1 phase; the norm itself is dropped
            tensors[j] = np.tensordot(split.left, tensors[j], axes=(1, 0))
            lambdas[0] = np.ones(1)
    return SymmetricMPS(space, tensors, lambdas, labels)


def overlap(a: SymmetricMPS, b: SymmetricMPS) -> complex:
    """<a|b>; states from different particle-number sectors overlap to 0 with a warning."""
    if a.L != b.L or a.space != b.space:
        raise ValueError("overlap needs states of equal length and local space")
    if a.total_charge != b.total_charge:
        message = f"sector mismatch: charges {a.total_charge} and {b.total_charge}"
        logger.warning(message)
        warnings.warn(message, SectorMismatchWarning, stacklevel=2)
        return 0j
    env = np.ones((1, 1), dtype=complex)
    for ta, tb in zip(a.tensors, b.tensors):
        env = np.einsum("ab,asc,bsd->cd", env, ta.conj(), tb, optimize=True)
    return complex(env[0, 0])


def norm(mps: SymmetricMPS) -> float:
    return math.sqrt(max(overlap(mps, mps).real, 0.0))


def canonical_residual(mps: SymmetricMPS) -> float:
    """Largest deviation from left and right orthonormality of the Gamma-lambda form."""
    worst = 0.0
    for j, tensor in enumerate(mps.tensors):
        right = np.einsum("asr,bsr->ab", tensor, tensor.conj())
        worst = max(worst, float(np.max(np.abs(right - np.eye(right.shape[0])))))
        left_tensor = mps.lambdas[j][:, None, None] * mps.gamma(j)
        left = np.einsum("lsa,lsb->ab", left_tensor.conj(), left_tensor)
        worst = max(worst, float(np.max(np.abs(left - np.eye(left.shape[0])))))
    return worst


def label_residual(mps: SymmetricMPS) -> float:
    """Largest tensor entry that violates the bond-label bookkeeping."""
    worst = 0.0
    for j, tensor in enumerate(mps.tensors):
        off = np.abs(tensor[~mps.allowed_mask(j)])
        if off.size:
            worst = max(worst, float(off.max()))
    return worst


# ---------------------------------------------------------------------------
# measurements
# ---------------------------------------------------------------------------

def local_probabilities(mps: SymmetricMPS, j: int) -> np.ndarray:
    center = mps.center(j)
    return np.real(np.einsum("lsr,lsr->s", center.conj(), center))


def site_occupancy_probability(mps: SymmetricMPS, j: int, n: int, species: Optional[str] = None) -> float:
    """Probability of exactly n bare particles (all of `species`, if given) at site j."""
    probabilities = local_probabilities(mps, j)
    states = mps.space.states_with_occupation(n, species)
    return float(np.clip(probabilities[states].sum(), 0.0, 1.0))


def occupancy_profile(mps: SymmetricMPS, n: int, species: Optional[str] = None) -> np.ndarray:
    return np.array([site_occupancy_probability(mps, j, n, species) for j in range(mps.L)])


def expectation(mps: SymmetricMPS, j: int, op: np.ndarray) -> complex:
    center = mps.center(j)
    return complex(np.einsum("lsr,st,ltr->", center.conj(), op, center))


def density_profile(mps: SymmetricMPS, species: str) -> np.ndarray:
    number = mps.space.number(species)
    return np.array([expectation(mps, j, number).real for j in range(mps.L)])


def one_body_density_matrix(mps: SymmetricMPS, species: str) -> np.ndarray:
    """G[i, j] = <c_i^dag c_j> for the annihilator c of `species`."""
    c = mps.space.annihilator(species)
    cdag = c.conj().T
    L = mps.L
    G = np.zeros((L, L), dtype=complex)
    for i in range(L):
        G[i, i] = expectation(mps, i, cdag @ c)
        center = mps.center(i)
        env = np.einsum("lsa,st,ltb->ab", center.conj(), cdag, center)
        for j in range(i + 1, L):
            tensor = mps.tensors[j]
            G[i, j] = np.einsum("ab,asc,st,btc->", env, tensor.conj(), c, tensor)
            G[j, i] = np.conj(G[i, j])
            env = np.einsum("ab,asc,bsd->cd", env, tensor.conj(), tensor)
    return G


def momentum_occupation(mps: SymmetricMPS, species: str, ks: Optional[np.ndarray] = None) -> np.ndarray:
    """n_k = (1/L) sum_ij e^{ik(i-j)} <c_i^dag c_j> on the lattice momentum grid."""
    L = mps.L
    if ks is None:
        nu = np.arange(math.floor(-L / 2 + 1), math.floor(L / 2) + 1)
        ks = 2.0 * np.pi * nu / L
    G = one_body_density_matrix(mps, species)
    sites = np.arange(1, L + 1)
    waves = np.exp(1j * np.outer(ks, sites)) / math.sqrt(L)
    return np.real(np.einsum("ki,ij,kj->k", waves, G, waves.conj()))


def schmidt_spectrum(mps: SymmetricMPS, bond: int) -> SchmidtSpectrum:
    if not 0 <= bond <= mps.L:
        raise IndexError(f"bond {bond} outside 0..{mps.L}")
    weights = mps.lambdas[bond] ** 2
    labels = mps.labels[bond]
    order = np.lexsort(tuple(labels[:, c] for c in reversed(range(labels.shape[1]))) + (-weights,))
    return SchmidtSpectrum(weights=weights[order], labels=labels[order])


def entanglement_entropy(mps: SymmetricMPS, bond: int) -> float:
    return schmidt_spectrum(mps, bond).entropy


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------

def _snapshot_arrays(mps: SymmetricMPS) -> dict:
    arrays = {
        "format_version": np.array([SNAPSHOT_FORMAT_VERSION], dtype="<i8"),
        "space": np.frombuffer(json.dumps(mps.space.describe(), sort_keys=True).encode(), dtype=np.uint8),
        "length": np.array([mps.L], dtype="<i8"),
    }
    for b, (lam, lab) in enumerate(zip(mps.lambdas, mps.labels)):
        arrays[f"bond{b}_lambda"] = lam.astype("<f8")
        arrays[f"bond{b}_labels"] = lab.astype("<i8")
    for j, tensor in enumerate(mps.tensors):
        il, s, ir = np.nonzero(tensor)
        keys = np.concatenate([mps.labels[j][il], s[:, None], mps.labels[j + 1][ir]], axis=1)
        arrays[f"site{j}_keys"] = keys.astype("<i8")
        arrays[f"site{j}_index"] = np.stack([il, s, ir], axis=1).astype("<i8")
        arrays[f"site{j}_real"] = tensor[il, s, ir].real.astype("<f8")
        arrays[f"site{j}_imag"] = tensor[il, s, ir].imag.astype("<f8")
        arrays[f"site{j}_shape"] = np.array(tensor.shape, dtype="<i8")
    return arrays


def save_snapshot(mps: SymmetricMPS, path: Union[str, Path]) -> Path:
    """Versioned .npz container of per-site blocks keyed by (left label, local state, right label)."""
    buffer = io.BytesIO()
    np.savez_compressed(buffer, **_snapshot_arrays(mps))
    return OutputManager.write_atomic(path, buffer.getvalue())


def load_snapshot(path: Union[str, Path]) -> SymmetricMPS:
    with np.load(path) as data:
        version = int(data["format_version"][0])
        if version != SNAPSHOT_FORMAT_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        space = space_from_description(json.loads(bytes(data["space"]).decode()))
        L = int(data["length"][0])
        lambdas = [data[f"bond{b}_lambda"].astype(float) for b in range(L + 1)]
        labels = [data[f"bond{b}_labels"].astype(np.int64) for b in range(L + 1)]
        tensors = []
        for j in range(L):
            tensor = np.zeros(tuple(data[f"site{j}_shape"]), dtype=complex)
            index = data[f"site{j}_index"]
            tensor[index[:, 0], index[:, 1], index[:, 2]] = data[f"site{j}_real"] + 1j * data[f"site{j}_imag"]
            tensors.append(tensor)
    return SymmetricMPS(space, tensors, lambdas, labels)
