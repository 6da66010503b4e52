"""Execute RunConfigs with the engine they name and write their artifacts.

Every run yields named tables (CSV), a summary (JSON with sorted keys), the
canonical config text and, optionally, a plot script and a final-state
snapshot. Independent configs run in a process pool.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from src import tebd_engine
from src.defect_kinematics import (
    WallParams,
    collision_map,
    escape_fraction_uniform,
    revival_time,
    scatter,
    transmission_scan,
    transmission_window,
    wave_packet_transmission,
)
from src.errors import DegenerateCollision
from src.harness.config import RunConfig, print_config
from src.harness.observables import IntegratedPopulation, bind, defects_with_occupation
from src.harness.plot_scripts import run_script
from src.lattice_models import build_lattice_model
from src.momentum_ed import (
    MomentumGrid,
    TwoBodyParams,
    TwoBodyPropagator,
    build_two_body_hamiltonian,
    distribution_fidelity,
    dominant_weight,
    expectation,
    momentum_distribution,
    momentum_eigenstate,
    same_site_probability,
    sample_times,
)
from src.settings import get_settings
from src.symmetric_mps import SymmetricMPS, save_snapshot
from src.timeseries import CSV_HEADER, RunStatus, TimeSeries
from src.utilities import OutputManager

logger = logging.getLogger(__name__)

OCCUPATION_HEADER = ("t", "species", "k", "occupation")


@dataclass
class Table:
    header: Sequence[str]
    rows: List[Sequence[Any]]


@dataclass
class RunResult:
    config: RunConfig
    status: RunStatus
    tables: Dict[str, Table]
    summary: Dict[str, Any]
    final_state: Optional[SymmetricMPS] = None

    @property
    def name(self) -> str:
        return self.config.name

    @property
    def exit_code(self) -> int:
        return 3 if self.status is RunStatus.BUDGET_EXHAUSTED else 0


def _series_table(series: TimeSeries) -> Table:
    return Table(CSV_HEADER, list(series.rows()))


# ---------------------------------------------------------------------------
# engines
# ---------------------------------------------------------------------------

def _run_analytic(config: RunConfig) -> RunResult:
    block = config.analytic
    transmission, windows, packets = [], [], []
    per_alpha: Dict[str, Any] = {}
    flux_error = 0.0

    for alpha in block.alpha:
        table = transmission_scan(alpha, block.points, block.kmin, block.kmax)
        transmission.extend((alpha, k, T, R) for k, T, R in table.rows())
        flux_error = max(flux_error, float(np.max(np.abs(table.T + table.R - 1.0))))

        window = transmission_window(alpha)
        windows.extend((alpha, lo, hi) for lo, hi in window.intervals)
        entry = {
            "window": [list(interval) for interval in window.intervals],
            "window_fraction": window.measure / (2.0 * math.pi),
            "escape_fraction_uniform": escape_fraction_uniform(alpha),
        }
        if block.packet_k is not None:
            closed = scatter(block.packet_k, WallParams.from_alpha(alpha)).T
            packet = wave_packet_transmission(block.packet_k, alpha)
            packets.append((alpha, block.packet_k, closed, packet))
            entry["packet"] = {"k": block.packet_k, "closed_form": closed, "wave_packet": packet, "deviation": abs(closed - packet)}
        per_alpha[f"{alpha:g}"] = entry

    tables = {
        "transmission": Table(("alpha", "k", "T", "R"), transmission),
        "window": Table(("alpha", "k_lo", "k_hi"), windows),
    }
    if packets:
        tables["wave_packet"] = Table(("alpha", "k", "T_closed_form", "T_wave_packet"), packets)
    summary = {"max_flux_error": flux_error, "alpha": per_alpha}
    return RunResult(config, RunStatus.COMPLETED, tables, summary)


def _run_two_body(config: RunConfig) -> RunResult:
    block = config.two_body
    params = TwoBodyParams(L=block.L, J_a=block.J_a, J_t=block.J_t, U=block.U, gamma=block.gamma)
    t_c = revival_time(block.L, block.k_a, block.k_t, block.J_a, block.J_t)
    t_max = block.t_max if block.t_max is not None else block.revivals * t_c
    logger.info(f"Two-body run {config.name!r}: L={block.L}, gamma={block.gamma}, t_c={t_c:.4f}, t_max={t_max:.4f}")

    H = build_two_body_hamiltonian(params)
    state = momentum_eigenstate(block.k_a, block.k_t, block.L)
    propagator = TwoBodyPropagator(H, state)
    grid = MomentumGrid(block.L)

    occupation_rows, same_site_rows = [], []
    for t in sample_times(t_max, block.samples):
        evolved = propagator.at(t)
        distribution = momentum_distribution(evolved)
        for species, weights in (("a", distribution.monomer), ("t", distribution.trimer)):
            occupation_rows.extend((t, species, k, p) for k, p in zip(grid.values, weights))
        same_site_rows.append((t, same_site_probability(evolved)))

    initial = momentum_distribution(state)
    quarter = momentum_distribution(propagator.at(t_c / 4.0))
    revived = momentum_distribution(propagator.at(t_c))
    i_a, i_t = grid.index_of(block.k_a), grid.index_of(block.k_t)
    energy = expectation(state, H)

    summary: Dict[str, Any] = {
        "t_c": t_c,
        "t_max": t_max,
        "energy": energy,
        "energy_drift": abs(expectation(propagator.at(t_max), H) - energy),
        "dominant_weight_at_quarter_revival": {
            "a": dominant_weight(quarter.monomer),
            "t": dominant_weight(quarter.trimer),
        },
        "fidelity_at_revival": {
            "a": distribution_fidelity(initial.monomer, revived.monomer),
            "t": distribution_fidelity(initial.trimer, revived.trimer),
        },
        "initial_weight_at_revival": {"a": float(revived.monomer[i_a]), "t": float(revived.trimer[i_t])},
    }
    try:
        k_a_out, k_t_out = collision_map(block.k_a, block.k_t, block.J_a, block.J_t)
        summary["collision"] = {"k_a_out": k_a_out, "k_t_out": k_t_out}
    except DegenerateCollision as e:
        logger.warning(f"No collision partner for {config.name!r}: {e}")
        summary["collision"] = None

    tables = {
        "occupation": Table(OCCUPATION_HEADER, occupation_rows),
        "same_site": Table(("t", "probability"), same_site_rows),
    }
    return RunResult(config, RunStatus.COMPLETED, tables, summary)


def _run_tebd(config: RunConfig) -> RunResult:
    initial = config.initial_state()
    model = build_lattice_model(config.model, initial)
    observables = [bind(spec, initial) for spec in config.observables]
    logger.info(f"TEBD run {config.name!r}: model {config.model.kind}, L={initial.L}, {initial.defect_count} defects")

    series = tebd_engine.run(initial, model, config.tebd, observables)

    populations: Dict[str, Any] = {}
    for spec in config.observables:
        if not isinstance(spec, IntegratedPopulation):
            continue
        _, values = series.series(spec.name)
        entry = {"final": float(values[-1]), "max": float(values.max())}
        if spec.region.kind == "outside":
            count = defects_with_occupation(initial, spec.n, spec.species)
            if count:
                entry["defects"] = count
                entry["escaped_fraction"] = float(values[-1]) / count
        populations[spec.name] = entry

    summary = {
        "L": initial.L,
        "particles": initial.total_particles,
        "defects": initial.defect_count,
        "final_time": series.final_time,
        "populations": populations,
        **series.metadata,
    }
    return RunResult(config, series.status, {"timeseries": _series_table(series)}, summary, final_state=series.final_state)


ENGINES = {
    "analytic": _run_analytic,
    "two-body-ed": _run_two_body,
    "tebd": _run_tebd,
}


def execute(config: RunConfig) -> RunResult:
    """Run one config with the engine it names."""
    result = ENGINES[config.engine](config)
    result.summary.update({"name": config.name, "engine": config.engine, "seed": config.seed, "status": result.status.value})
    if not config.output.snapshot:
        result.final_state = None
    logger.info(f"Run {config.name!r} finished with status {result.status.value}")
    return result


def run_many(configs: Sequence[RunConfig], workers: Optional[int] = None) -> List[RunResult]:
    """Execute independent configs, in a process pool when more than one worker is allowed; order is kept."""
    workers = workers or get_settings().workers
    if workers <= 1 or len(configs) <= 1:
        return [execute(config) for config in configs]
    logger.info(f"Running {len(configs)} configs on {min(workers, len(configs))} workers")
    with ProcessPoolExecutor(max_workers=min(workers, len(configs))) as pool:
        return list(pool.map(execute, configs))


def output_directory(config: RunConfig, override: Optional[Union[str, Path]] = None) -> Path:
    if override is not None:
        return Path(override)
    if config.output.dir is not None:
        return Path(config.output.dir)
    return get_settings().output_dir / config.name


def write_outputs(result: RunResult, directory: Optional[Union[str, Path]] = None) -> List[Path]:
    """Write tables, summary, config and plot script atomically; returns the written paths."""
    config = result.config
    target = output_directory(config, directory)
    prefix = config.output.prefix
    paths = []

    for table_name, table in result.tables.items():
        paths.append(OutputManager.write_csv(target / f"{prefix}_{table_name}.csv", table.header, table.rows))
    summary = dict(result.summary, tables=sorted(f"{prefix}_{name}.csv" for name in result.tables))
    paths.append(OutputManager.write_summary(target / f"{prefix}_summary.json", summary))
    paths.append(OutputManager.write_atomic(target / f"{prefix}.conf", print_config(config)))
    if config.output.plot_script:
        paths.append(OutputManager.write_atomic(target / f"{prefix}_plot.py", run_script(result.config, list(result.tables))))
    if result.final_state is not None:
        paths.append(save_snapshot(result.final_state, target / f"{prefix}_final.npz"))

    logger.info(f"Wrote {len(paths)} files for {config.name!r} to {target}")
    return paths
