"""Observables sampled during a TEBD run, and the region bookkeeping behind them.

Sites are reported 1-based in every table. `outside` means the vacuum
segments minus the one site next to each filled segment, since a cluster edge
moves by one site whenever a defect crosses it.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, root_validator, validator

from src.symmetric_mps import (
    SegmentedInitialState,
    SymmetricMPS,
    entanglement_entropy,
    momentum_occupation,
    occupancy_profile,
)
from src.timeseries import TimeSeries

logger = logging.getLogger(__name__)


class Region(BaseModel):
    kind: Literal["outside", "inside", "sites"] = "sites"
    intervals: List[Tuple[int, int]] = []

    class Config:
        extra = "forbid"

    @root_validator(skip_on_failure=True)
    def _intervals(cls, values):
        kind, intervals = values["kind"], values["intervals"]
        if kind == "sites" and not intervals:
            raise ValueError("sites() needs at least one site or range")
        if kind != "sites" and intervals:
            raise ValueError(f"region {kind!r} takes no intervals")
        for lo, hi in intervals:
            if not 1 <= lo <= hi:
                raise ValueError(f"interval {lo}-{hi} must satisfy 1 <= lo <= hi")
        return values

    @property
    def label(self) -> str:
        if self.kind != "sites":
            return self.kind
        return "sites_" + "_".join(f"{lo}-{hi}" for lo, hi in self.intervals)

    def sites(self, initial: SegmentedInitialState) -> List[int]:
        """1-based sites of the region for this initial segment list."""
        if self.kind == "sites":
            return sorted({j for lo, hi in self.intervals for j in range(lo, hi + 1)})

        filled = {
            j + 1
            for offset, segment in zip(initial.segment_offsets(), initial.segments)
            if segment.n > 0
            for j in range(offset, offset + segment.length)
        }
        if self.kind == "inside":
            return sorted(filled)
        vacuum = set(j + 1 for j in initial.sites_with_filling(0))
        return sorted(j for j in vacuum if j - 1 not in filled and j + 1 not in filled)


class SiteDensityExactN(BaseModel):
    kind: Literal["site_density_exact_n"] = "site_density_exact_n"
    n: int = 1
    species: Optional[str] = None

    class Config:
        extra = "forbid"

    @property
    def name(self) -> str:
        return f"density_n{self.n}" + (f"_{self.species}" if self.species else "")


class IntegratedPopulation(BaseModel):
    kind: Literal["integrated_population"] = "integrated_population"
    region: Region
    n: int = 1
    species: Optional[str] = None

    class Config:
        extra = "forbid"

    @validator("region", pre=True)
    def _named_region(cls, value):
        if isinstance(value, str):
            return {"kind": value}
        return value

    @property
    def name(self) -> str:
        return f"population_{self.region.label}_n{self.n}" + (f"_{self.species}" if self.species else "")


class MomentumDistributionSpec(BaseModel):
    kind: Literal["momentum_distribution"] = "momentum_distribution"
    species: Optional[str] = None

    class Config:
        extra = "forbid"

    @property
    def name(self) -> str:
        return f"momentum_{self.species}"


class SchmidtEntropy(BaseModel):
    kind: Literal["schmidt_entropy"] = "schmidt_entropy"
    bond: Optional[int] = None

    class Config:
        extra = "forbid"

    @property
    def name(self) -> str:
        return "entropy" if self.bond is None else f"entropy_bond{self.bond}"


ObservableSpec = Union[SiteDensityExactN, IntegratedPopulation, MomentumDistributionSpec, SchmidtEntropy]

Samples = List[Tuple[Optional[int], float]]


@dataclass
class BoundObservable:
    """An observable tied to one lattice; satisfies the TEBD engine's Measurement protocol."""

    name: str
    _measure: Callable[[SymmetricMPS], Samples]

    def measure(self, mps: SymmetricMPS) -> Samples:
        return self._measure(mps)


def _lattice_momenta(L: int) -> Tuple[np.ndarray, np.ndarray]:
    nu = np.arange(int(np.floor(-L / 2 + 1)), int(np.floor(L / 2)) + 1)
    return nu, 2.0 * np.pi * nu / L


def bind(spec: ObservableSpec, initial: SegmentedInitialState) -> BoundObservable:
    if isinstance(spec, SiteDensityExactN):
        def measure(mps):
            profile = occupancy_profile(mps, spec.n, spec.species)
            return [(j + 1, float(p)) for j, p in enumerate(profile)]

    elif isinstance(spec, IntegratedPopulation):
        index = np.array(spec.region.sites(initial), dtype=int) - 1

        def measure(mps):
            profile = occupancy_profile(mps, spec.n, spec.species)
            return [(None, float(profile[index].sum()))]

    elif isinstance(spec, MomentumDistributionSpec):
        nu, ks = _lattice_momenta(initial.L)

        def measure(mps):
            occupation = momentum_occupation(mps, spec.species, ks)
            return [(int(v), float(n_k)) for v, n_k in zip(nu, occupation)]

    elif isinstance(spec, SchmidtEntropy):
        bonds = [spec.bond] if spec.bond is not None else list(range(1, initial.L))

        def measure(mps):
            return [(b, entanglement_entropy(mps, b)) for b in bonds]

    else:
        raise TypeError(f"unknown observable {type(spec).__name__}")

    return BoundObservable(spec.name, measure)


def integrated_population(
    series: TimeSeries,
    sites: Iterable[int],
    n: int = 1,
    species: Optional[str] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Occupancy-n probability summed over 1-based `sites` at every sample of the density observable."""
    name = SiteDensityExactN(n=n, species=species).name
    wanted = set(sites)
    totals = {}
    for t, observable, site, value in series.records:
        if observable != name:
            continue
        totals.setdefault(t, 0.0)
        if site in wanted:
            totals[t] += value
    if not totals:
        raise KeyError(f"series has no {name!r} samples; add site_density_exact_n({n}) to the observables")
    times = np.array(sorted(totals))
    return times, np.array([totals[t] for t in times])


def defects_with_occupation(initial: SegmentedInitialState, n: int, species: Optional[str] = None) -> int:
    """How many defects initially leave exactly n particles (of `species`, if given) on their site."""
    count = 0
    for segment in initial.segments:
        defect = segment.defect
        if defect is None or segment.n + defect.sign != n:
            continue
        if species is None:
            count += 1
            continue
        if segment.n == 0:
            left_behind = segment.species
        elif defect.sign < 0 and segment.n == 2 and segment.species in ("a", "b"):
            left_behind = "b" if segment.species == "a" else "a"
        else:
            left_behind = None
        if left_behind == species:
            count += 1
    return count
