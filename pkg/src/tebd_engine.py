"""Real-time TEBD on particle-number-conserving MPS.

Gates act on the right-canonical form without inverting Schmidt values: the
two-site block lambda_l B_j B_{j+1} is split by charge sector, the right factor
becomes the new B_{j+1}, and B_j is recovered by projecting the gated block
onto it.
"""
import logging
import time as wallclock
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, validator
from scipy import linalg
from scipy.sparse.linalg import expm_multiply

from src.errors import NumericalFailure, SectorError
from src.lattice_models import LatticeModel, dense_hamiltonian, sector_basis
from src.symmetric_mps import SegmentedInitialState, SymmetricMPS, build_state, split_by_sectors
from src.timeseries import RunStatus, TimeSeries, TruncationLedger

logger = logging.getLogger(__name__)

NORM_DRIFT_WARN = 1e-10
NORM_DRIFT_FAIL = 1e-6
SECTOR_TOL = 1e-12

# fourth-order symmetric composition S2(p)^2 S2(1-4p) S2(p)^2
SUZUKI_P = 1.0 / (4.0 - 4.0 ** (1.0 / 3.0))

Gate = Union[np.ndarray, Callable[[int], np.ndarray]]


class TebdConfig(BaseModel):
    dt: Optional[float] = None
    t_max: float = 1.0
    chi_max: int = 96
    order: int = 4
    error_budget: float = 1e-2
    sample_every: int = 10
    svd_cutoff: float = 1e-12

    class Config:
        extra = "forbid"

    @validator("dt")
    def _positive_step(cls, value):
        if value is not None and not value > 0:
            raise ValueError("dt must be positive")
        return value

    @validator("t_max")
    def _nonnegative_duration(cls, value):
        if value < 0:
            raise ValueError("t_max must be nonnegative")
        return value

    @validator("chi_max", "sample_every")
    def _at_least_one(cls, value):
        if value < 1:
            raise ValueError("must be at least 1")
        return value

    @validator("order")
    def _supported_order(cls, value):
        if value not in (2, 4):
            raise ValueError("Trotter order must be 2 or 4")
        return value

    @validator("error_budget")
    def _positive_budget(cls, value):
        if not value > 0:
            raise ValueError("error_budget must be positive")
        return value

    def step_for(self, model: LatticeModel) -> float:
        return self.dt if self.dt is not None else model.spec.default_dt


class Measurement(Protocol):
    name: str

    def measure(self, mps: SymmetricMPS) -> List[Tuple[Optional[int], float]]:
        ...


def check_gate_sectors(gate: np.ndarray, pair_charges: np.ndarray):
    """Reject gates that connect two-site states of different total charge."""
    mismatch = np.any(pair_charges[:, None, :] != pair_charges[None, :, :], axis=-1)
    leak = float(np.max(np.abs(gate[mismatch]), initial=0.0))
    if leak > SECTOR_TOL:
        raise SectorError(f"gate mixes particle-number sectors (max off-sector entry {leak:.3e})")


def apply_two_site_gate(
    mps: SymmetricMPS,
    bond: int,
    gate: Gate,
    chi_max: Optional[int] = None,
    cutoff: float = 0.0,
    right_counts: Optional[np.ndarray] = None,
    check_sectors: bool = True,
) -> Tuple[SymmetricMPS, float]:
    """Apply a gate to sites (bond, bond+1) in place and return the discarded weight.

    `gate` is a (d^2, d^2) matrix or a function of the defect count right of
    site bond+1; in the latter case `right_counts` gives that count for every
    label of bond bond+2.
    """
    j = bond
    d = mps.d
    space = mps.space
    left, right = mps.tensors[j], mps.tensors[j + 1]
    chi_l, chi_r = left.shape[0], right.shape[2]

    block = np.tensordot(left, right, axes=(2, 0)).reshape(chi_l, d * d, chi_r)
    if callable(gate):
        if right_counts is None:
            raise ValueError("a count-selected gate needs the right defect counts")
        gated = np.empty_like(block)
        for n_r in np.unique(right_counts):
            matrix = gate(int(n_r))
            if check_sectors:
                check_gate_sectors(matrix, space.pair_charge_totals())
            cols = np.nonzero(right_counts == n_r)[0]
            gated[:, :, cols] = np.einsum("ab,lbr->lar", matrix, block[:, :, cols])
    else:
        if check_sectors:
            check_gate_sectors(gate, space.pair_charge_totals())
        gated = np.einsum("ab,lbr->lar", gate, block)

    gated = gated.reshape(chi_l * d, d * chi_r)
    weighted = (mps.lambdas[j][:, None, None] * gated.reshape(chi_l, d, d * chi_r)).reshape(chi_l * d, d * chi_r)
    row_charges = (mps.labels[j][:, None, :] + space.charges[None, :, :]).reshape(-1, space.n_charges)
    col_charges = (mps.labels[j + 2][None, :, :] - space.charges[:, None, :]).reshape(-1, space.n_charges)

    split = split_by_sectors(weighted, row_charges, col_charges, chi_max=chi_max, cutoff=cutoff)

    drift = abs(split.norm - 1.0)
    if not np.isfinite(split.norm) or drift > NORM_DRIFT_FAIL:
        raise NumericalFailure(f"norm drifted by {drift:.3e} at bond {bond}")
    if drift > NORM_DRIFT_WARN:
        logger.warning(f"Pre-truncation norm drift {drift:.3e} at bond {bond}")

    k = split.singular_values.size
    kept_norm = split.norm * np.sqrt(max(1.0 - split.discarded_weight, 0.0))
    new_right = split.right.reshape(k, d, chi_r)
    new_left = (gated @ split.right.conj().T) / kept_norm

    mps.tensors[j] = new_left.reshape(chi_l, d, k)
    mps.tensors[j + 1] = new_right
    mps.lambdas[j + 1] = split.singular_values
    mps.labels[j + 1] = split.charges
    return mps, split.discarded_weight


class GateCache:
    """Exponentials exp(-i c dt h) per (bond, n_r, c); sectors are validated once per entry."""

    def __init__(self, model: LatticeModel, dt: float):
        self.model = model
        self.dt = dt
        self._pair_charges = model.space.pair_charge_totals()
        self._gates: Dict[Tuple[int, Optional[int], float], np.ndarray] = {}

    def _exponential(self, bond: int, n_r: Optional[int], coefficient: float) -> np.ndarray:
        key = (bond, n_r, coefficient)
        gate = self._gates.get(key)
        if gate is None:
            generator = self.model.generators[bond].matrix(0 if n_r is None else n_r)
            check_gate_sectors(generator, self._pair_charges)
            gate = linalg.expm(-1j * coefficient * self.dt * generator)
            self._gates[key] = gate
        return gate

    def gate(self, bond: int, coefficient: float) -> Gate:
        if self.model.generators[bond].nonlocal_:
            return lambda n_r: self._exponential(bond, n_r, coefficient)
        return self._exponential(bond, None, coefficient)

    def __len__(self):
        return len(self._gates)


def _layer(mps: SymmetricMPS, model: LatticeModel, cache: GateCache, parity: int, coefficient: float, cfg: TebdConfig) -> float:
    discarded = 0.0
    for bond in range(parity, mps.L - 1, 2):
        right_counts = None
        if model.generators[bond].nonlocal_:
            right_counts = model.right_defect_counts(mps.labels[bond + 2])
        _, weight = apply_two_site_gate(
            mps,
            bond,
            cache.gate(bond, coefficient),
            chi_max=cfg.chi_max,
            cutoff=cfg.svd_cutoff,
            right_counts=right_counts,
            check_sectors=False,
        )
        discarded += weight
    return discarded


def _second_order(mps, model, cache, cfg, fraction: float) -> float:
    discarded = _layer(mps, model, cache, 0, 0.5 * fraction, cfg)
    discarded += _layer(mps, model, cache, 1, fraction, cfg)
    discarded += _layer(mps, model, cache, 0, 0.5 * fraction, cfg)
    return discarded


def composition(order: int) -> List[float]:
    """Fractions of dt for the second-order sub-steps of one Trotter step."""
    if order == 2:
        return [1.0]
    p = SUZUKI_P
    return [p, p, 1.0 - 4.0 * p, p, p]


def trotter_step(mps: SymmetricMPS, model: LatticeModel, cfg: TebdConfig, cache: Optional[GateCache] = None) -> Tuple[SymmetricMPS, float]:
    """Advance by one dt; returns the state and the weight discarded during the step."""
    cache = cache or GateCache(model, cfg.step_for(model))
    discarded = 0.0
    for fraction in composition(cfg.order):
        discarded += _second_order(mps, model, cache, cfg, fraction)
    return mps, discarded


def _sample(series: TimeSeries, t: float, mps: SymmetricMPS, observables: Sequence[Measurement]):
    for observable in observables:
        for site, value in observable.measure(mps):
            series.record(t, observable.name, site, value)


def run(
    initial: Union[SegmentedInitialState, SymmetricMPS],
    model: LatticeModel,
    cfg: TebdConfig,
    observables: Sequence[Measurement],
) -> TimeSeries:
    """Evolve to t_max, or until the accumulated cutoff error reaches the budget."""
    mps = build_state(initial, model.space) if isinstance(initial, SegmentedInitialState) else initial.copy()
    if mps.space != model.space or mps.L != model.L:
        raise ValueError(f"state {mps!r} does not match model space {model.space!r} on {model.L} sites")

    dt = cfg.step_for(model)
    n_steps = int(round(cfg.t_max / dt))
    cache = GateCache(model, dt)
    ledger = TruncationLedger()
    series = TimeSeries(ledger=ledger)
    started = wallclock.perf_counter()

    logger.info(f"TEBD run: L={mps.L}, steps={n_steps}, dt={dt:.6g}, chi_max={cfg.chi_max}, order={cfg.order}")
    _sample(series, 0.0, mps, observables)

    t = 0.0
    for step in range(1, n_steps + 1):
        t = step * dt
        try:
            mps, weight = trotter_step(mps, model, cfg, cache)
        except (SectorError, NumericalFailure, linalg.LinAlgError, FloatingPointError) as e:
            logger.error(f"TEBD failed at t={t:.6g}: {e}")
            raise NumericalFailure(str(e), time=t) from e
        ledger.record(weight, mps.bond_dims)
        logger.debug(f"step {step}: discarded {weight:.3e}, total {ledger.total:.3e}, chi {max(mps.bond_dims)}")

        if ledger.exhausted(cfg.error_budget):
            series.status = RunStatus.BUDGET_EXHAUSTED
            _sample(series, t, mps, observables)
            logger.warning(f"Cutoff error budget {cfg.error_budget:g} exhausted at t={t:.6g}")
            break
        if step % cfg.sample_every == 0 or step == n_steps:
            _sample(series, t, mps, observables)

    series.metadata.update(
        {
            "dt": dt,
            "chi_max": cfg.chi_max,
            "order": cfg.order,
            "error_budget": cfg.error_budget,
            "t_end": t,
            "status": series.status.value,
            "wall_time_s": wallclock.perf_counter() - started,
            "gate_cache_entries": len(cache),
        }
    )
    series.metadata.update(ledger.summary())
    series.final_state = mps
    logger.info(f"TEBD run finished: status={series.status.value}, t={t:.6g}, cutoff error {ledger.total:.3e}")
    return series


def exact_dense_evolution(model: LatticeModel, state: SymmetricMPS, t: float) -> np.ndarray:
    """exp(-iHt)|state> on the full product space, propagated inside the state's charge sector."""
    H = dense_hamiltonian(model)
    indices = sector_basis(model, state.total_charge)
    psi = state.to_dense()
    block = H[indices][:, indices]
    evolved = np.zeros_like(psi)
    evolved[indices] = expm_multiply(-1j * t * block, psi[indices])
    return evolved


def state_fidelity(mps: SymmetricMPS, vector: np.ndarray) -> float:
    return float(abs(np.vdot(vector, mps.to_dense())) ** 2)
