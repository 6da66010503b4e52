"""Long-format sample storage shared by every engine: one row per (t, observable, site)."""
import enum
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

CSV_HEADER = ("t", "observable", "site", "value")


class RunStatus(str, enum.Enum):
    COMPLETED = "completed"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass
class TruncationLedger:
    """Discarded weight per Trotter step, its running sum, and the largest bond dimension seen per bond."""

    step_weights: List[float] = field(default_factory=list)
    total: float = 0.0
    max_chi: Optional[np.ndarray] = None

    def record(self, weight: float, bond_dims: List[int]):
        self.step_weights.append(float(weight))
        self.total += float(weight)
        dims = np.asarray(bond_dims)
        self.max_chi = dims.copy() if self.max_chi is None else np.maximum(self.max_chi, dims)

    def exhausted(self, budget: float) -> bool:
        return self.total >= budget

    @property
    def steps(self) -> int:
        return len(self.step_weights)

    def summary(self) -> Dict[str, Any]:
        return {
            "accumulated_cutoff_error": self.total,
            "steps": self.steps,
            "max_step_weight": max(self.step_weights, default=0.0),
            "max_chi": int(self.max_chi.max()) if self.max_chi is not None else 1,
        }


@dataclass
class TimeSeries:
    records: List[Tuple[float, str, Optional[int], float]] = field(default_factory=list)
    status: RunStatus = RunStatus.COMPLETED
    ledger: Optional[TruncationLedger] = None
    metadata: Dict[str, Any] = field(default_factory=dict)
    final_state: Any = None

    def record(self, t: float, observable: str, site: Optional[int], value: float):
        self.records.append((float(t), observable, site, float(value)))

    @property
    def times(self) -> np.ndarray:
        return np.array(sorted({r[0] for r in self.records}))

    @property
    def observables(self) -> List[str]:
        return sorted({r[1] for r in self.records})

    def series(self, observable: str, site: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        rows = [(t, v) for t, name, s, v in self.records if name == observable and s == site]
        if not rows:
            raise KeyError(f"no samples for {observable!r} at site {site}")
        t, v = zip(*rows)
        return np.array(t), np.array(v)

    def profile(self, observable: str, t: float) -> np.ndarray:
        """Site-resolved values of one observable at the sample time closest to t."""
        times = self.times
        nearest = times[np.argmin(np.abs(times - t))]
        rows = sorted((s, v) for tt, name, s, v in self.records if name == observable and tt == nearest and s is not None)
        return np.array([v for _, v in rows])

    def rows(self) -> Iterator[Tuple[Any, ...]]:
        for t, name, site, value in self.records:
            yield t, name, "" if site is None else site, value

    @property
    def final_time(self) -> float:
        return float(self.times[-1]) if self.records else 0.0
