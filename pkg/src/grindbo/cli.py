"""Command-line entry points.

Exit codes: 0 success, 2 validation error, 3 not found, 4 ran to the trial
cap without convergence, 5 numerical failure.
"""

from __future__ import annotations

import sys

import click

from . import acquisition as acq
from .gp import NumericalConditioningError
from .plant import PlantModel, default_plant
from .runner import run_simulated_session
from .session import SessionConfig
from .store import (
    SessionDocument,
    SessionNotFoundError,
    ensure_models,
    export_trial_log,
    read_document_file,
    write_document_file,
)
from .types import ConstraintSpec, default_domain

EXIT_VALIDATION = 2
EXIT_NOT_FOUND = 3
EXIT_NO_CONVERGENCE = 4
EXIT_NUMERICAL = 5


@click.group()
def main():
    """Constrained Bayesian optimization of grinding parameters."""


@main.command()
@click.option("--plant", "plant_path", type=click.Path(), default=None,
              help="Plant config JSON; omitted means the default calibrated plant.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--max-trials", type=int, default=30, show_default=True)
@click.option("--epsilon", type=float, default=0.04, show_default=True,
              help="Convergence limit on twice the predicted cost SD, in U.")
@click.option("--pmin-t", type=float, default=0.5, show_default=True)
@click.option("--pmin-ra", type=float, default=0.5, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--session-id", default=None, help="Defaults to sim-<seed>.")
def simulate(plant_path, seed, max_trials, epsilon, pmin_t, pmin_ra, out_path, session_id):
    """Run an unattended optimization against the synthetic plant."""
    try:
        plant = PlantModel.from_file(plant_path) if plant_path else default_plant()
    except FileNotFoundError:
        click.echo(f"plant config not found: {plant_path}", err=True)
        sys.exit(EXIT_NOT_FOUND)
    except ValueError as err:
        click.echo(f"invalid plant config: {err}", err=True)
        sys.exit(EXIT_VALIDATION)

    try:
        config = SessionConfig(
            domain=default_domain(),
            constraints=(
                ConstraintSpec("temperature", 585.0, pmin_t),
                ConstraintSpec("roughness", 230.0, pmin_ra),
            ),
            epsilon=epsilon,
            seed=seed,
            max_trials=max_trials,
        )
    except ValueError as err:
        click.echo(f"invalid configuration: {err}", err=True)
        sys.exit(EXIT_VALIDATION)

    try:
        session = run_simulated_session(
            config, plant, on_iteration=lambda rec: click.echo(rec.format_line())
        )
    except NumericalConditioningError as err:
        click.echo(f"numerical failure: {err}", err=True)
        sys.exit(EXIT_NUMERICAL)

    doc = SessionDocument(session=session, session_id=session_id or f"sim-{seed}")
    write_document_file(doc, out_path)
    click.echo(f"session written to {out_path}")
    if not session.converged:
        click.echo(
            f"did not converge within {config.max_trials} trials", err=True
        )
        sys.exit(EXIT_NO_CONVERGENCE)


def _load_session_or_exit(session_path):
    try:
        return read_document_file(session_path)
    except SessionNotFoundError:
        click.echo(f"session file not found: {session_path}", err=True)
        sys.exit(EXIT_NOT_FOUND)
    except ValueError as err:
        click.echo(f"cannot parse session file: {err}", err=True)
        sys.exit(EXIT_VALIDATION)


@main.command()
@click.option("--session", "session_path", type=click.Path(), required=True)
@click.option("--pmin-t", "pmin_t", type=float, multiple=True, default=(0.5,),
              show_default=True, help="Repeatable; pairs up with --pmin-ra.")
@click.option("--pmin-ra", "pmin_ra", type=float, multiple=True, default=(0.5,),
              show_default=True)
def recommend(session_path, pmin_t, pmin_ra):
    """Print the predicted-optimal parameters at one or more thresholds."""
    if len(pmin_t) != len(pmin_ra):
        click.echo("--pmin-t and --pmin-ra must pair up", err=True)
        sys.exit(EXIT_VALIDATION)
    for p in (*pmin_t, *pmin_ra):
        if not (0.0 < p < 1.0):
            click.echo(f"probabilities must lie in (0, 1), got {p}", err=True)
            sys.exit(EXIT_VALIDATION)
    doc = _load_session_or_exit(session_path)
    if len(doc.session.trials) < 2:
        click.echo("session has no fitted models (fewer than two trials)", err=True)
        sys.exit(EXIT_VALIDATION)
    try:
        ensure_models(doc)
        recs = doc.session.recommend_sweep(list(zip(pmin_t, pmin_ra)))
    except NumericalConditioningError as err:
        click.echo(f"numerical failure: {err}", err=True)
        sys.exit(EXIT_NUMERICAL)

    any_absent = False
    click.echo(
        "pmin_t pmin_ra cutting_speed_mps feed_rate_mmpm expected_cost_U "
        "cost_ci_halfwidth_U p_temperature p_roughness"
    )
    for (p_t, p_ra), rec in zip(zip(pmin_t, pmin_ra), recs):
        if rec is None:
            click.echo(f"{p_t:.3f} {p_ra:.3f} no-feasible-region")
            any_absent = True
            continue
        click.echo(
            f"{p_t:.3f} {p_ra:.3f} "
            f"{rec.params.cutting_speed:.4f} {rec.params.feed_rate:.4f} "
            f"{rec.expected_cost:.6f} {rec.cost_ci_halfwidth:.6f} "
            f"{rec.feasibility['temperature']:.6f} {rec.feasibility['roughness']:.6f}"
        )
    if any_absent:
        sys.exit(EXIT_NO_CONVERGENCE)


@main.command("export-surfaces")
@click.option("--session", "session_path", type=click.Path(), required=True)
@click.option("--quantity", type=click.Choice(["cost", "temperature", "roughness"]),
              required=True)
@click.option("--grid-n", type=int, default=101, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def export_surfaces(session_path, quantity, grid_n, out_path):
    """Write the predicted mean/variance lattice for one quantity as CSV."""
    if grid_n < 2:
        click.echo("--grid-n must be at least 2", err=True)
        sys.exit(EXIT_VALIDATION)
    doc = _load_session_or_exit(session_path)
    if len(doc.session.trials) < 2:
        click.echo("session has no fitted models (fewer than two trials)", err=True)
        sys.exit(EXIT_VALIDATION)
    ensure_models(doc)
    model = doc.session.models[quantity]
    pts = acq.grid_points(doc.session.config.domain, grid_n)
    mean, std = model.predict(pts, return_std=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("cutting_speed_mps,feed_rate_mmpm,mean,variance\n")
        for row, m, s in zip(pts, mean, std):
            fh.write(f"{float(row[0])!r},{float(row[1])!r},{float(m)!r},{float(s * s)!r}\n")
    click.echo(f"{quantity} surface ({grid_n}x{grid_n}) written to {out_path}")


@main.command("export-log")
@click.option("--session", "session_path", type=click.Path(), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def export_log(session_path, out_path):
    """Write the trial log as CSV."""
    doc = _load_session_or_exit(session_path)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(export_trial_log(doc.session))
    click.echo(f"trial log ({len(doc.session.trials)} rows) written to {out_path}")


@main.command("export-plant")
@click.option("--plant", "plant_path", type=click.Path(), default=None)
@click.option("--grid-n", type=int, default=101, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def export_plant(plant_path, grid_n, out_path):
    """Dump the plant's noiseless response surfaces as CSV (for plotting)."""
    from .cost import CostParams
    from .plant import true_cost_grid

    try:
        plant = PlantModel.from_file(plant_path) if plant_path else default_plant()
    except FileNotFoundError:
        click.echo(f"plant config not found: {plant_path}", err=True)
        sys.exit(EXIT_NOT_FOUND)
    speeds, feeds, cost, temp, rough, feasible = true_cost_grid(
        plant, default_domain(), CostParams(), n=grid_n
    )
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(
            "cutting_speed_mps,feed_rate_mmpm,cost_U,first_side_temp_C,"
            "max_roughness_nm,feasible\n"
        )
        for i, v in enumerate(speeds):
            for j, f in enumerate(feeds):
                fh.write(
                    f"{float(v)!r},{float(f)!r},{float(cost[i, j])!r},"
                    f"{float(temp[i, j])!r},{float(rough[i, j])!r},"
                    f"{str(bool(feasible[i, j])).lower()}\n"
                )
    click.echo(f"plant surfaces ({grid_n}x{grid_n}) written to {out_path}")


@main.command()
@click.option("--host", envvar="GRINDBO_HOST", default="127.0.0.1", show_default=True)
@click.option("--port", envvar="GRINDBO_PORT", type=int, default=8008, show_default=True)
@click.option("--data-dir", envvar="GRINDBO_DATA_DIR", type=click.Path(),
              default="./sessions", show_default=True)
@click.option("--default-seed", envvar="GRINDBO_DEFAULT_SEED", type=int, default=0,
              show_default=True)
def serve(host, port, data_dir, default_seed):
    """Run the HTTP service backed by a session directory."""
    import uvicorn

    from .service import create_app
    from .store import SessionStore

    app = create_app(SessionStore(data_dir), default_seed=default_seed)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
