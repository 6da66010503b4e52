"""Figure catalog: desk-scale run sets with an acceptance metric per figure.

Desk configs are built from config text so they go through the same parser as
user files. Full-size geometries ship as files under `configs/` and only run
with `extended=True`.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.defect_kinematics import escape_fraction_uniform, transmission_window
from src.errors import ValidationFailure
from src.harness.config import RunConfig, parse_config
from src.harness.plot_scripts import figure_script
from src.harness.runner import RunResult, run_many, write_outputs
from src.settings import get_settings
from src.timeseries import RunStatus
from src.utilities import OutputManager

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).parent / "configs"

ESCAPED = "population_outside_n1"

EFFECTIVE = "effective_defect { J = 1.0 }"
FULL = "bose_hubbard { J = 1.0, U = 100.0, n_max = 3 }"
DESK_TEBD = "{ dt = 0.1, t_max = 20.0, chi_max = 96, error_budget = 0.01, sample_every = 5 }"
MONOMER_OBSERVABLES = ["site_density_exact_n(1)", "site_density_exact_n(3)", "integrated_population(outside, 1)"]


def _tebd_text(name: str, model: str, segments: Sequence[str], tebd: str, observables: Sequence[str]) -> str:
    state = ",\n    ".join(segments)
    return (
        f"name = {name}\n"
        "engine = tebd\n"
        f"model = {model}\n"
        f"state = [\n    {state},\n]\n"
        f"tebd = {tebd}\n"
        f"observables = [{', '.join(observables)}]\n"
    )


def _cluster(flank: int, cluster: Sequence[str]) -> List[str]:
    return [f"seg(0, {flank})", *cluster, f"seg(0, {flank})"]


def _desk(name: str, cluster: Sequence[str], flank: int, tebd: str = DESK_TEBD) -> RunConfig:
    return parse_config(_tebd_text(name, EFFECTIVE, _cluster(flank, cluster), tebd, MONOMER_OBSERVABLES))


# ---------------------------------------------------------------------------
# metric helpers
# ---------------------------------------------------------------------------

def escaped_fraction(result: RunResult, observable: str = ESCAPED) -> Optional[float]:
    entry = result.summary.get("populations", {}).get(observable, {})
    return entry.get("escaped_fraction")


def _fractions(results: Sequence[RunResult], observable: str = ESCAPED) -> Dict[str, Optional[float]]:
    return {r.name: escaped_fraction(r, observable) for r in results}


def _profiles(result: RunResult, observable: str) -> Dict[float, Dict[int, float]]:
    """Site profiles keyed by sample time rounded to 1e-9."""
    profiles: Dict[float, Dict[int, float]] = {}
    for t, name, site, value in result.tables["timeseries"].rows:
        if name == observable and site != "":
            profiles.setdefault(round(t, 9), {})[site] = value
    return profiles


def max_profile_deviation(a: RunResult, b: RunResult, observable: str = "density_n1") -> float:
    """Largest site-wise difference over the sample times both runs share."""
    pa, pb = _profiles(a, observable), _profiles(b, observable)
    common = sorted(set(pa) & set(pb))
    if not common:
        raise ValueError(f"runs {a.name!r} and {b.name!r} share no sample times")
    return max(abs(pa[t][s] - pb[t][s]) for t in common for s in pa[t])


def _by_name(results: Sequence[RunResult]) -> Dict[str, RunResult]:
    return {r.name: r for r in results}


# ---------------------------------------------------------------------------
# catalog entries
# ---------------------------------------------------------------------------

def _fig2_configs() -> List[RunConfig]:
    return [parse_config(
        "name = fig2\n"
        "engine = analytic\n"
        "analytic = { alpha = [0.25, 0.5, 1.0, 2.0, 4.0], points = 512, packet_k = pi/2 }\n"
    )]


def _fig2_metric(results: Sequence[RunResult]) -> Dict[str, Any]:
    summary = results[0].summary
    half = summary["alpha"]["0.5"]
    return {
        "max_flux_error": summary["max_flux_error"],
        "window_alpha_half": half["window"],
        "T_half_pi_alpha_half": half["packet"]["closed_form"],
        "T_half_pi_expected": 8.0 / 9.0,
        "wave_packet_deviation": half["packet"]["deviation"],
        "passed": summary["max_flux_error"] < 1e-12 and half["packet"]["deviation"] < 2e-2,
    }


def _fig3_configs() -> List[RunConfig]:
    configs = []
    for label, gamma in (("ring", 1), ("open", 0)):
        configs.append(parse_config(
            f"name = fig3_{label}\n"
            "engine = two-body-ed\n"
            f"two_body = {{ L = 64, J_a = 2.0, J_t = 3.0, U = 60.0, gamma = {gamma}, "
            "k_a = 13*pi/16, k_t = -9*pi/16, revivals = 2.0, samples = 65 }\n"
        ))
    return configs


def _fig3_metric(results: Sequence[RunResult]) -> Dict[str, Any]:
    runs = _by_name(results)
    ring, open_ = runs["fig3_ring"].summary, runs["fig3_open"].summary
    dominant = min(ring["dominant_weight_at_quarter_revival"].values())
    fidelity = min(ring["fidelity_at_revival"].values())
    open_weight = float(np.mean(list(open_["initial_weight_at_revival"].values())))
    return {
        "t_c": ring["t_c"],
        "ring_dominant_weight_at_quarter_revival": dominant,
        "ring_fidelity_at_revival": fidelity,
        "open_initial_weight_at_revival": open_weight,
        "passed": dominant >= 0.95 and fidelity > 0.9 and open_weight < 0.5,
    }


# momentum geometry: segments of 8 sites so k = 0, pi are sharp band edges
MOMENTUM_FLANK = 24
TOP = ["seg(2, 8, momentum(-pi/2, hole))", "seg(2, 8, momentum(pi/2, hole))"]
CENTRAL = ["seg(2, 8, momentum(pi, hole))", "seg(2, 8, momentum(0, hole))"]
MIDDLES_8 = {
    "none": "seg(2, 8)",
    "localized_trimer": "seg(2, 8, localized(4, particle))",
    "momentum_trimer": "seg(2, 8, momentum(pi/2, particle))",
}


def _fig4_configs() -> List[RunConfig]:
    return [
        _desk("fig4_top", [TOP[0], MIDDLES_8["none"], TOP[1]], MOMENTUM_FLANK),
        _desk("fig4_central", [CENTRAL[0], MIDDLES_8["none"], CENTRAL[1]], MOMENTUM_FLANK),
        _desk("fig4_bottom", [CENTRAL[0], MIDDLES_8["momentum_trimer"], CENTRAL[1]], MOMENTUM_FLANK),
    ]


def _fig4_metric(results: Sequence[RunResult]) -> Dict[str, Any]:
    fractions = _fractions(results)
    top, central = fractions.get("fig4_top"), fractions.get("fig4_central")
    return {
        "escaped_fraction": fractions,
        "passed": top is not None and central is not None and central < 0.1 and top > 0.6,
    }


# localized geometry: 48 sites, 12-site cluster
LOCALIZED_FLANK = 18
HOLE_4 = "seg(2, 4, localized(2, hole))"
MIDDLES_4 = {
    "none": "seg(2, 4)",
    "localized_trimer": "seg(2, 4, localized(2, particle))",
    "momentum_trimer": "seg(2, 4, momentum(pi/2, particle))",
}


def _fig5_configs() -> List[RunConfig]:
    return [
        _desk("fig5_top", [HOLE_4, MIDDLES_4["none"], HOLE_4], LOCALIZED_FLANK),
        _desk("fig5_bottom", [HOLE_4, MIDDLES_4["localized_trimer"], HOLE_4], LOCALIZED_FLANK),
    ]


def _localized_predictions() -> Dict[str, float]:
    """Single-pass and many-bounce escape predictions for a localized monomer at the cluster edge (alpha = 1/2)."""
    return {
        "single_pass": escape_fraction_uniform(0.5),
        "long_time": transmission_window(0.5).measure / (2.0 * math.pi),
    }


def _fig5_metric(results: Sequence[RunResult]) -> Dict[str, Any]:
    fractions = _fractions(results)
    top, bottom = fractions.get("fig5_top"), fractions.get("fig5_bottom")
    predictions = _localized_predictions()
    metric: Dict[str, Any] = {"escaped_fraction": fractions, "prediction": predictions}
    if top is not None:
        metric["deviation_from_one_third"] = abs(top - 1.0 / 3.0)
        metric["deviation_from_prediction"] = {k: abs(top - v) for k, v in predictions.items()}
    if top is not None and bottom is not None:
        metric["trimer_increase"] = bottom - top
        metric["passed"] = abs(top - 1.0 / 3.0) <= 0.10 and bottom - top >= 0.05
    return metric


def _fig6a_configs() -> List[RunConfig]:
    configs = []
    for branch, holes in (("upper", TOP), ("lower", CENTRAL)):
        for label, middle in MIDDLES_8.items():
            configs.append(_desk(f"fig6a_{branch}_{label}", [holes[0], middle, holes[1]], MOMENTUM_FLANK))
    return configs


def _fig6a_metric(results: Sequence[RunResult]) -> Dict[str, Any]:
    fractions = _fractions(results)
    upper = [v for k, v in fractions.items() if "upper" in k and v is not None]
    lower = [v for k, v in fractions.items() if "lower" in k and v is not None]
    return {
        "escaped_fraction": fractions,
        "branches_separated": bool(upper and lower and min(upper) > max(lower)),
    }


def _fig6b_configs() -> List[RunConfig]:
    return [
        _desk(f"fig6b_{label}", [HOLE_4, middle, HOLE_4], LOCALIZED_FLANK)
        for label, middle in MIDDLES_4.items()
    ]


def _fig6b_metric(results: Sequence[RunResult]) -> Dict[str, Any]:
    fractions = _fractions(results)
    base = fractions.get("fig6b_none")
    increases = {
        k: v - base for k, v in fractions.items() if k != "fig6b_none" and v is not None and base is not None
    }
    return {"escaped_fraction": fractions, "trimer_increase": increases, "prediction": _localized_predictions()}


FIG7_FLANK = 20
FIG7_TEBD = "{ dt = 0.1, t_max = 20.0, chi_max = 96, error_budget = 0.1, sample_every = 5 }"
# first, third and fourth segment of each panel; the second one varies
FIG7_PANELS = {
    "a": ("seg(2, 4, momentum(-pi/2, hole))", "seg(2, 4, momentum(pi/2, hole))", "seg(2, 4, momentum(-pi/2, hole))"),
    "b": (HOLE_4, HOLE_4, HOLE_4),
    "c": ("seg(2, 4, momentum(pi, hole))", "seg(2, 4, momentum(0, hole))", HOLE_4),
}


def _fig7_configs() -> List[RunConfig]:
    configs = []
    for panel, (first, third, fourth) in FIG7_PANELS.items():
        for label, middle in MIDDLES_4.items():
            cluster = [first, middle, third, fourth]
            if panel == "c" and label == "momentum_trimer":
                cluster[2] = HOLE_4
            configs.append(_desk(f"fig7_{panel}_{label}", cluster, FIG7_FLANK, FIG7_TEBD))
    return configs


def _fig7_metric(results: Sequence[RunResult]) -> Dict[str, Any]:
    return {"escaped_fraction": _fractions(results)}


FIG8_STATE = ["seg(0, 4)", "seg(2, 8, localized(2, hole))", "seg(0, 4)"]
FIG8_OBSERVABLES = ["site_density_exact_n(1)", "integrated_population(outside, 1)"]


def _fig8_configs() -> List[RunConfig]:
    variants = (
        ("full", FULL, "{ dt = 0.02, t_max = 5.0, chi_max = 64, error_budget = 0.01, sample_every = 25 }"),
        ("effective", EFFECTIVE, "{ dt = 0.1, t_max = 5.0, chi_max = 64, error_budget = 0.01, sample_every = 5 }"),
        ("static", "effective_defect { J = 1.0, static_theta = true }",
         "{ dt = 0.1, t_max = 5.0, chi_max = 64, error_budget = 0.01, sample_every = 5 }"),
    )
    return [parse_config(_tebd_text(f"fig8_{label}", model, FIG8_STATE, tebd, FIG8_OBSERVABLES)) for label, model, tebd in variants]


def _fig8_metric(results: Sequence[RunResult]) -> Dict[str, Any]:
    runs = _by_name(results)
    effective = max_profile_deviation(runs["fig8_full"], runs["fig8_effective"])
    static = max_profile_deviation(runs["fig8_full"], runs["fig8_static"])
    return {
        "max_deviation_effective": effective,
        "max_deviation_static_theta": static,
        "passed": effective <= 0.02,
    }


TWO_SPECIES = "two_species {{ J_a = {J_a}, J_b = 1.0, U_a = 60.0, U_b = 60.0, U_ab = 40.0, cap_a = 2, cap_b = 2 }}"
TWO_SPECIES_TEBD = "{ dt = 0.02, t_max = 15.0, chi_max = 64, error_budget = 0.01, sample_every = 25 }"
J_A_VARIANTS = {"equal": 1.0, "double": 2.0, "half": 0.5}


def _fig9_configs() -> List[RunConfig]:
    # cluster at the left edge so escaped b particles do not bounce back before t = 15
    state = ["seg(2, 4)", "seg(2, 8, momentum(pi/2, hole), a)", "seg(0, 16)"]
    observables = ["site_density_exact_n(1, b)", "integrated_population(outside, 1, b)"]
    return [
        parse_config(_tebd_text(f"fig9_{label}", TWO_SPECIES.format(J_a=J_a), state, TWO_SPECIES_TEBD, observables))
        for label, J_a in J_A_VARIANTS.items()
    ]


def _fig9_metric(results: Sequence[RunResult]) -> Dict[str, Any]:
    fractions = _fractions(results, "population_outside_n1_b")
    equal = fractions.get("fig9_equal")
    return {"escaped_fraction": fractions, "passed": equal is not None and equal > 0.8}


def _fig10_configs() -> List[RunConfig]:
    state = _cluster(8, ["seg(2, 4, localized(2, hole), a)", "seg(2, 4)", "seg(2, 4, localized(2, hole), b)"])
    observables = [
        "site_density_exact_n(1, a)",
        "site_density_exact_n(1, b)",
        "integrated_population(outside, 1, a)",
        "integrated_population(outside, 1, b)",
    ]
    return [
        parse_config(_tebd_text(f"fig10_{label}", TWO_SPECIES.format(J_a=J_a), state, TWO_SPECIES_TEBD, observables))
        for label, J_a in J_A_VARIANTS.items()
    ]


def _fig10_metric(results: Sequence[RunResult]) -> Dict[str, Any]:
    return {
        "escaped_fraction_b_hole": _fractions(results, "population_outside_n1_a"),
        "escaped_fraction_a_hole": _fractions(results, "population_outside_n1_b"),
    }


@dataclass(frozen=True)
class FigureSpec:
    figure_id: str
    title: str
    build: Callable[[], List[RunConfig]]
    metric: Callable[[Sequence[RunResult]], Dict[str, Any]]
    extended: Tuple[str, ...] = ()

    def configs(self, extended: bool = False) -> List[RunConfig]:
        if not extended:
            return self.build()
        if not self.extended:
            raise ValidationFailure([f"{self.figure_id} has no extended-runtime configs"])
        return [parse_config((CONFIG_DIR / name).read_text()) for name in self.extended]


FIGURES: Dict[str, FigureSpec] = {
    spec.figure_id: spec
    for spec in (
        FigureSpec("fig2", "Transmission through a hopping-rate step", _fig2_configs, _fig2_metric),
        FigureSpec("fig3", "Monomer-trimer momentum distribution, ring and open chain", _fig3_configs, _fig3_metric),
        FigureSpec(
            "fig4", "Momentum hole defects in a dimer cluster", _fig4_configs, _fig4_metric,
            extended=("fig4_top.conf", "fig4_central.conf", "fig4_bottom.conf"),
        ),
        FigureSpec(
            "fig5", "Localized hole defects with and without a trimer", _fig5_configs, _fig5_metric,
            extended=("fig5_top.conf", "fig5_bottom.conf"),
        ),
        FigureSpec("fig6a", "Escaped population, momentum holes", _fig6a_configs, _fig6a_metric),
        FigureSpec("fig6b", "Escaped population, localized holes", _fig6b_configs, _fig6b_metric),
        FigureSpec(
            "fig7", "Three hole defects in a 16-site cluster", _fig7_configs, _fig7_metric,
            extended=("fig7_a.conf", "fig7_b.conf", "fig7_c.conf"),
        ),
        FigureSpec("fig8", "Full versus effective model", _fig8_configs, _fig8_metric),
        FigureSpec("fig9", "Two species: momentum a-hole for three J_a", _fig9_configs, _fig9_metric),
        FigureSpec("fig10", "Two species: localized a- and b-holes", _fig10_configs, _fig10_metric),
    )
}


@dataclass
class FigureBundle:
    figure_id: str
    directory: Path
    results: List[RunResult]
    summary: Dict[str, Any]
    paths: List[Path] = field(default_factory=list)

    @property
    def status(self) -> RunStatus:
        if any(r.status is RunStatus.BUDGET_EXHAUSTED for r in self.results):
            return RunStatus.BUDGET_EXHAUSTED
        return RunStatus.COMPLETED


def catalog() -> List[Dict[str, Any]]:
    return [
        {"figure_id": spec.figure_id, "title": spec.title, "extended_configs": list(spec.extended)}
        for spec in FIGURES.values()
    ]


def reproduce(
    figure_id: str,
    output_dir: Optional[Union[str, Path]] = None,
    workers: Optional[int] = None,
    extended: bool = False,
) -> FigureBundle:
    """Run every config of a catalog figure, write its artifacts and the figure-level summary."""
    spec = FIGURES.get(figure_id)
    if spec is None:
        raise ValidationFailure([f"unknown figure {figure_id!r}; known: {', '.join(FIGURES)}"])

    directory = Path(output_dir) if output_dir is not None else get_settings().output_dir / figure_id
    configs = spec.configs(extended)
    logger.info(f"Reproducing {figure_id} ({'extended' if extended else 'desk'}): {len(configs)} runs")

    results = run_many(configs, workers)
    bundle = FigureBundle(figure_id, directory, results, summary={})
    overlay = []
    for result in results:
        run_dir = directory / result.name
        bundle.paths.extend(write_outputs(result, run_dir))
        if "timeseries" in result.tables:
            overlay.append((result.name, f"{result.name}/{result.config.output.prefix}_timeseries.csv"))

    try:
        metric = spec.metric(results)
    except (KeyError, ValueError, TypeError) as e:
        logger.warning(f"Acceptance metric for {figure_id} unavailable: {e}")
        metric = {"error": str(e)}

    bundle.summary = {
        "figure_id": figure_id,
        "title": spec.title,
        "extended": extended,
        "status": bundle.status.value,
        "acceptance": metric,
        "runs": {
            r.name: {
                "status": r.status.value,
                "accumulated_cutoff_error": r.summary.get("accumulated_cutoff_error"),
                "final_time": r.summary.get("final_time"),
            }
            for r in results
        },
    }
    bundle.paths.append(OutputManager.write_summary(directory / f"{figure_id}_summary.json", bundle.summary))
    if overlay:
        bundle.paths.append(OutputManager.write_atomic(directory / f"plot_{figure_id}.py", figure_script(figure_id, spec.title, overlay)))
    logger.info(f"{figure_id}: status {bundle.status.value}, {len(bundle.paths)} files in {directory}")
    return bundle
