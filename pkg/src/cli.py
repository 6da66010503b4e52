"""`dimerlab` command line: scatter, collide, two-body, evolve, reproduce, validate, serve.

CSV goes to stdout (or --out), logs to stderr. Exit codes: 0 success,
1 domain error, 2 validation failure, 3 stopped on the cutoff-error budget, 4 numerical failure.
"""
import functools
import json
import logging
from pathlib import Path
from typing import Optional, Tuple

import click
from pydantic import ValidationError

from src.defect_kinematics import (
    WallParams,
    collision_map,
    revival_time,
    scatter as scatter_at,
    transmission_scan,
    transmission_window,
)
from src.errors import BudgetExceeded, DimerlabError, ValidationFailure
from src.harness.config import RunConfig, evaluate_expression, parse_config
from src.harness.figures import catalog, reproduce as reproduce_figure
from src.harness.runner import execute, write_outputs
from src.logging_config import logging_manager
from src.settings import get_settings
from src.timeseries import RunStatus
from src.utilities import OutputManager

logger = logging.getLogger(__name__)


class PiExpression(click.ParamType):
    """A number or pi-expression such as 13*pi/16."""

    name = "expression"

    def convert(self, value, param, ctx):
        if isinstance(value, float):
            return value
        try:
            return evaluate_expression(str(value))
        except ValidationFailure as e:
            self.fail(f"{value!r} is not a number or pi-expression ({'; '.join(e.messages)})", param, ctx)


PI_EXPR = PiExpression()

COLLISION_HEADER = ("ka_out", "kt_out", "t_c")


def reports_errors(command):
    """Turn domain errors into stderr messages and their exit codes."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return command(*args, **kwargs)
        except ValidationFailure as e:
            for message in e.messages:
                click.echo(f"error: {message}", err=True)
            ctx.exit(e.exit_code)
        except ValidationError as e:
            for err in e.errors():
                click.echo(f"error: {'.'.join(str(p) for p in err['loc'])}: {err['msg']}", err=True)
            ctx.exit(ValidationFailure.exit_code)
        except DimerlabError as e:
            logger.error(f"{type(e).__name__}: {e}")
            click.echo(f"error: {e}", err=True)
            ctx.exit(e.exit_code)

    return wrapper


def _emit(text: str, output: Optional[Path]):
    if output is None:
        click.echo(text, nl=False)
    else:
        OutputManager.write_atomic(output, text)
        click.echo(f"wrote {output}", err=True)


@click.group()
@click.option("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR (default from DIMERLAB_LOG_LEVEL).")
def main(log_level: Optional[str]):
    """Defect evaporation in dimer clusters: kinematics, two-body ED and TEBD runs."""
    logging_manager.setup_cli_logging(log_level or get_settings().log_level)


@main.command()
@click.option("--alpha", type=PI_EXPR, required=True, help="Hopping ratio J_B / J_A.")
@click.option("--k", "ks", type=PI_EXPR, multiple=True, help="Evaluate at these quasi-momenta instead of scanning.")
@click.option("--points", type=int, default=512, show_default=True)
@click.option("--kmin", type=PI_EXPR, default=None)
@click.option("--kmax", type=PI_EXPR, default=None)
@click.option("--out", "--output", "output", type=click.Path(path_type=Path), default=None, help="Write the CSV here instead of stdout.")
@reports_errors
def scatter(alpha: float, ks: Tuple[float, ...], points: int, kmin: Optional[float], kmax: Optional[float], output: Optional[Path]):
    """Transmission and reflection at a hopping-rate step."""
    if ks:
        wall = WallParams.from_alpha(alpha)
        rows = []
        for k in ks:
            result = scatter_at(k, wall)
            k_prime = result.k_prime if result.propagating else "evanescent"
            rows.append((k, k_prime, result.T, result.R, transmission_window(alpha).contains(k)))
        text = OutputManager.render_csv(("k", "k_prime", "T", "R", "in_window"), rows)
    else:
        table = transmission_scan(alpha, points, kmin, kmax)
        text = OutputManager.render_csv(("k", "T", "R"), table.rows())
    _emit(text, output)


@main.command()
@click.option("--ka", type=PI_EXPR, required=True, help="Monomer quasi-momentum.")
@click.option("--kt", type=PI_EXPR, required=True, help="Trimer quasi-momentum.")
@click.option("--Ja", "--ja", "ja", type=PI_EXPR, default=2.0, show_default=True, help="Monomer hopping rate.")
@click.option("--Jt", "--jt", "jt", type=PI_EXPR, default=3.0, show_default=True, help="Trimer hopping rate.")
@click.option("--L", "L", type=int, default=None, help="Ring length; fills in the revival time t_c.")
@reports_errors
def collide(ka: float, kt: float, ja: float, jt: float, L: Optional[int]):
    """Outgoing momenta of a monomer-trimer collision, as one ka_out,kt_out,t_c row."""
    k_a_out, k_t_out = collision_map(ka, kt, ja, jt)
    t_c = revival_time(L, ka, kt, ja, jt) if L is not None else ""
    click.echo(OutputManager.render_csv(COLLISION_HEADER, [(k_a_out, k_t_out, t_c)]), nl=False)


@main.command(name="two-body")
@click.option("--ka", type=PI_EXPR, required=True)
@click.option("--kt", type=PI_EXPR, required=True)
@click.option("--L", "L", type=int, default=64, show_default=True)
@click.option("--Ja", "--ja", "ja", type=PI_EXPR, default=2.0, show_default=True)
@click.option("--Jt", "--jt", "jt", type=PI_EXPR, default=3.0, show_default=True)
@click.option("--U", "U", type=PI_EXPR, default=60.0, show_default=True)
@click.option("--gamma", type=click.IntRange(0, 1), default=1, show_default=True, help="1 ring, 0 open chain.")
@click.option("--tmax", "--t-max", "t_max", type=PI_EXPR, default=None, help="Default: --revivals times the revival time.")
@click.option("--revivals", type=float, default=2.0, show_default=True)
@click.option("--samples", type=int, default=65, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=None, help="Write the CSV here instead of stdout.")
@click.option("--output-dir", type=click.Path(path_type=Path), default=None, help="Also write the full run bundle here.")
@reports_errors
def two_body(ka, kt, L, ja, jt, U, gamma, t_max, revivals, samples, out, output_dir):
    """Exact monomer-trimer dynamics in momentum space, as t,species,k,occupation rows."""
    config = RunConfig.parse_obj(
        {
            "name": "two_body_ring" if gamma else "two_body_open",
            "engine": "two-body-ed",
            "two_body": {
                "L": L, "J_a": ja, "J_t": jt, "U": U, "gamma": gamma,
                "k_a": ka, "k_t": kt, "t_max": t_max, "revivals": revivals, "samples": samples,
            },
        }
    )
    result = execute(config)
    logger.info(f"Two-body revival time t_c={result.summary['t_c']:.6g}")
    if output_dir is not None:
        for path in write_outputs(result, output_dir):
            click.echo(f"wrote {path}", err=True)
    table = result.tables["occupation"]
    _emit(OutputManager.render_csv(table.header, table.rows), out)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--output", type=click.Path(path_type=Path), default=None, help="Output directory (overrides the config).")
@reports_errors
def evolve(config_path: Path, output: Optional[Path]):
    """Run a config file with its engine and write CSV, summary and plot script."""
    config = parse_config(config_path.read_text())
    result = execute(config)
    paths = write_outputs(result, output)
    for path in paths:
        click.echo(str(path))
    if result.exit_code:
        raise BudgetExceeded(f"stopped early: accumulated cutoff error reached the budget at t={result.summary.get('final_time')}", result)


@main.command()
@click.argument("figure", required=False)
@click.option("--output", type=click.Path(path_type=Path), default=None)
@click.option("--workers", type=int, default=None, help="Parallel runs (default from DIMERLAB_WORKERS).")
@click.option("--extended", is_flag=True, help="Run the full-size extended-runtime configs.")
@click.option("--list", "list_only", is_flag=True, help="List the figure catalog.")
@reports_errors
def reproduce(figure: Optional[str], output: Optional[Path], workers: Optional[int], extended: bool, list_only: bool):
    """Run every config of a catalog figure."""
    if list_only or figure is None:
        for entry in catalog():
            suffix = " (extended configs available)" if entry["extended_configs"] else ""
            click.echo(f"{entry['figure_id']}: {entry['title']}{suffix}")
        return
    bundle = reproduce_figure(figure, output, workers=workers, extended=extended)
    click.echo(json.dumps(bundle.summary["acceptance"], indent=2, sort_keys=True, default=str))
    if bundle.status is RunStatus.BUDGET_EXHAUSTED:
        raise BudgetExceeded(f"{figure}: at least one run stopped on its cutoff-error budget", bundle)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@reports_errors
def validate(config_path: Path):
    """Check a config file and report every problem with its line."""
    config = parse_config(config_path.read_text())
    detail = ""
    if config.engine == "tebd":
        initial = config.initial_state()
        detail = f", {initial.L} sites, {len(config.state)} segments, {initial.defect_count} defects"
    click.echo(f"ok: {config.name} ({config.engine}{detail})")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=3000, show_default=True)
def serve(host: str, port: int):
    """Serve the kinematics and config-validation API."""
    import uvicorn

    uvicorn.run("src.api.server:app", host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
