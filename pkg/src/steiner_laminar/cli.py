"""CLI interface for steiner-laminar."""

import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, TypeVar

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from steiner_laminar import __version__
from steiner_laminar.config import (
    Tolerances,
    config_was_auto_created,
    get_config_for_defaults,
    get_config_path,
    resolve_output_path,
    resolve_threads,
)

# Load config at module level for CLI option defaults
_cfg = get_config_for_defaults()
from steiner_laminar.dp import ProvenanceError
from steiner_laminar.driver import (
    BACKENDS,
    DriverError,
    ExtractionError,
    SolveReport,
    solve_instance,
)
from steiner_laminar.formulation import FormulationError, build_lp, export_lp
from steiner_laminar.graph import Instance, InstanceError, load_instance, random_instance
from steiner_laminar.laminar import (
    LaminarError,
    count_families,
    enumerate_families,
    family_by_id,
    running_time_table,
)
from steiner_laminar.oracle import OracleError, cross_check
from steiner_laminar.simplex import SimplexError
from steiner_laminar.utils import format_cost, format_seconds, shorten_path

F = TypeVar('F', bound=Callable[..., None])

SOLVER_ERRORS = (
    InstanceError,
    LaminarError,
    FormulationError,
    SimplexError,
    ProvenanceError,
    ExtractionError,
    DriverError,
    OracleError,
)

console = Console()


def setup_logging(verbose: bool) -> None:
    """Route library logs through rich; DEBUG with -v, warnings only otherwise."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def show_config_notice(con: Console) -> None:
    # Show message if config was auto-created on this run
    if config_was_auto_created():
        con.print(f"[dim]Created config:[/] {get_config_path()}")


def read_instance(path: str) -> Instance:
    try:
        return load_instance(Path(path))
    except InstanceError as e:
        raise click.ClickException(f"{path}: {e}") from e


def to_root(g: Instance, root: int | None) -> int | None:
    """Convert a 1-based --root to a 0-based terminal id."""
    if root is None:
        return None
    if not 1 <= root <= g.node_count or root - 1 not in g.terminals:
        raise click.BadParameter(f"node {root} is not a terminal", param_hint="'--root'")
    return root - 1


def build_tolerances(tol_feas: float | None, tol_int: float | None) -> Tolerances:
    return Tolerances.from_config(_cfg).with_overrides(feasibility=tol_feas, integrality=tol_int)


def threads_or_fail(threads: int | None) -> int:
    try:
        return resolve_threads(threads, _cfg)
    except ValueError as e:
        raise click.BadParameter(str(e), param_hint="'--threads'") from e


def solver_options(func: F) -> F:
    """Decorator for options shared by solve, verify and bench."""
    func = click.option(
        '--root',
        type=int,
        help='Root terminal (1-based node id) [default: first terminal]',
    )(func)
    func = click.option(
        '--threads',
        type=int,
        help='Worker threads (env STEINER_LAMINAR_THREADS, then config)',
    )(func)
    func = click.option(
        '--tol-feas',
        type=float,
        help='Simplex feasibility tolerance',
    )(func)
    func = click.option(
        '--tol-int',
        type=float,
        help='Integrality tolerance for LP optima',
    )(func)
    return verbose_option(func)


def verbose_option(func: F) -> F:
    return click.option(
        '-v', '--verbose',
        is_flag=True,
        help='Verbose output',
    )(func)  # type: ignore[return-value]


def backend_option(func: F) -> F:
    return click.option(
        '--backend',
        type=click.Choice(list(BACKENDS)),
        default=_cfg.get("backend", "dp"),
        show_default=True,
        help='Subproblem solver: dp (combinatorial) or lp (simplex)',
    )(func)


def format_option(func: F) -> F:
    return click.option(
        '--format', 'output_format',
        type=click.Choice(['json', 'table']),
        default=_cfg.get("format", "json"),
        show_default=True,
        help='Output format',
    )(func)


def print_report(report: SolveReport, g: Instance, con: Console) -> None:
    """Render a solve report as rich tables."""
    summary = Table(title=f"{report.instance}", show_header=False)
    summary.add_column("Field", style="dim")
    summary.add_column("Value", style="bold")
    stats = report.time_stats()
    summary.add_row("Root", str(report.root + 1))
    summary.add_row("Backend", report.backend)
    summary.add_row("Terminals", str(report.terminals))
    summary.add_row("Families solved", str(report.families_solved))
    if report.best_family >= 0:
        summary.add_row("Best family", f"{report.best_family} {report.best_expression}")
    summary.add_row("Optimal cost", format_cost(report.optimal_cost))
    summary.add_row("Mean subproblem time", format_seconds(stats["mean"]))
    summary.add_row("Max subproblem time", format_seconds(stats["max"]))
    summary.add_row("Total time", format_seconds(report.total_time))
    con.print(summary)

    edges = Table(title="Tree edges")
    edges.add_column("u", justify="right")
    edges.add_column("v", justify="right")
    edges.add_column("Cost", justify="right")
    for u, v, cost in report.tree.edge_list(g):
        edges.add_row(str(u), str(v), format_cost(cost))
    con.print(edges)


@click.group(context_settings={'help_option_names': ['-h', '--help']})
@click.version_option(version=__version__)
def main() -> None:
    """Exact Steiner trees by laminar-family decomposition.

    Every full binary laminar family over the non-root terminals gives a
    flow subproblem; the cheapest subproblem maps to an optimal tree.

    Examples:

    \b
        steiner-laminar solve lin01.stp
        steiner-laminar solve lin01.stp --backend lp --format table
        steiner-laminar enumerate --b 3
        steiner-laminar export-lp lin01.stp --out models/
        steiner-laminar verify lin01.stp
        steiner-laminar bench steinlib/lin/
    """


@main.command()
@click.argument('file', type=click.Path(exists=True, dir_okay=False))
@solver_options
@backend_option
@format_option
@click.option(
    '--keep-all',
    is_flag=True,
    default=_cfg.get("keep_all", False),
    help='Report the objective of every family',
)
@click.option(
    '--family',
    'family_id',
    type=int,
    help='Solve a single family by id instead of all of them',
)
def solve(
    file: str,
    root: int | None,
    threads: int | None,
    tol_feas: float | None,
    tol_int: float | None,
    verbose: bool,
    backend: str,
    output_format: str,
    keep_all: bool,
    family_id: int | None,
) -> None:
    """Solve a SteinLib STP instance to optimality."""
    setup_logging(verbose)
    json_output = output_format == 'json'
    out_console = Console(quiet=True) if json_output else console
    show_config_notice(out_console)

    g = read_instance(file)
    root_id = to_root(g, root)
    workers = threads_or_fail(threads)
    tolerances = build_tolerances(tol_feas, tol_int)
    families = None
    if family_id is not None:
        try:
            families = [family_by_id(len(g.terminals) - 1, family_id)]
        except LaminarError as e:
            raise click.BadParameter(str(e), param_hint="'--family'") from e

    try:
        with out_console.status(f"[bold blue]Solving {g.name}...", spinner="dots"):
            report = solve_instance(
                g,
                root=root_id,
                backend=backend,
                workers=workers,
                keep_all=keep_all,
                tolerances=tolerances,
                families=families,
            )
    except SOLVER_ERRORS as e:
        raise click.ClickException(str(e)) from e

    if json_output:
        print(json.dumps(report.to_dict(g), indent=2))
        return
    out_console.print(f"[green]✓[/] Solved {report.families_solved} families")
    print_report(report, g, out_console)


@main.command('enumerate')
@click.option('--b', 'b', type=int, required=True, help='Number of commodities (terminals - 1)')
@click.option(
    '--table',
    'show_table',
    is_flag=True,
    help='Print family counts and sequential running times for 3..b+1 terminals',
)
@click.option(
    '--seconds',
    type=float,
    default=1.0,
    show_default=True,
    help='Time per subproblem assumed by --table',
)
@verbose_option
def enumerate_command(b: int, show_table: bool, seconds: float, verbose: bool) -> None:
    """List every full binary laminar family over b commodities."""
    setup_logging(verbose)
    if show_table:
        if b < 2:
            raise click.BadParameter("--table needs b >= 2", param_hint="'--b'")
        table = Table(title=f"Families at {format_seconds(seconds)} per subproblem")
        table.add_column("Terminals", justify="right")
        table.add_column("|L_b|", justify="right")
        table.add_column("Running time", justify="right")
        for terminals, count, duration in running_time_table(b + 1, seconds):
            table.add_row(str(terminals), f"{count:,}", duration)
        console.print(table)
        return
    try:
        for family in enumerate_families(b):
            click.echo(family.expression())
    except LaminarError as e:
        raise click.ClickException(str(e)) from e


@main.command('export-lp')
@click.argument('file', type=click.Path(exists=True, dir_okay=False))
@click.option(
    '--out',
    type=click.Path(file_okay=False),
    required=True,
    help='Directory for the .lp files',
)
@click.option('--root', type=int, help='Root terminal (1-based node id)')
@click.option('--family', 'family_id', type=int, help='Export a single family by id')
@verbose_option
def export_lp_command(
    file: str, out: str, root: int | None, family_id: int | None, verbose: bool
) -> None:
    """Write the flow LP of every family as <instance>_<root>_<family>.lp files."""
    setup_logging(verbose)
    g = read_instance(file)
    root_id = to_root(g, root)
    if root_id is None:
        root_id = g.terminals[0]
    out_dir = resolve_output_path(out)
    b = len(g.terminals) - 1
    try:
        families = (
            [family_by_id(b, family_id)] if family_id is not None else list(enumerate_families(b))
        )
        written = 0
        with console.status("[bold blue]Writing LP files...", spinner="dots"):
            for family in families:
                model = build_lp(g, root_id, family)
                path = out_dir / f"{g.name}_{root_id + 1}_{family.family_id}.lp"
                path.write_text(export_lp(model), encoding="utf-8")
                written += 1
    except SOLVER_ERRORS as e:
        raise click.ClickException(str(e)) from e
    console.print(f"[green]✓[/] Wrote {written} LP file(s) to {shorten_path(str(out_dir))}/")


@main.command()
@click.argument('file', type=click.Path(exists=True, dir_okay=False))
@solver_options
def verify(
    file: str,
    root: int | None,
    threads: int | None,
    tol_feas: float | None,
    tol_int: float | None,
    verbose: bool,
) -> None:
    """Check both backends and both oracles agree; exit 1 on any mismatch."""
    setup_logging(verbose)
    show_config_notice(console)
    g = read_instance(file)
    root_id = to_root(g, root)
    workers = threads_or_fail(threads)
    try:
        with console.status(f"[bold blue]Cross-checking {g.name}...", spinner="dots"):
            check = cross_check(
                g, root=root_id, workers=workers, tolerances=build_tolerances(tol_feas, tol_int)
            )
    except SOLVER_ERRORS as e:
        raise click.ClickException(str(e)) from e

    names = list(check.costs)
    matrix = Table(title=f"Agreement on {g.name}")
    matrix.add_column("", style="bold")
    for name in names:
        matrix.add_column(name, justify="center")
    disagree = {frozenset(pair) for pair in check.mismatches}
    for first in names:
        cells = []
        for second in names:
            if first == second:
                cells.append(format_cost(check.costs[first]))
            elif frozenset((first, second)) in disagree:
                cells.append("[red]✗[/]")
            else:
                cells.append("[green]✓[/]")
        matrix.add_row(first, *cells)
    console.print(matrix)
    console.print(f"  [dim]LP integrality violation:[/] {check.integrality_violation:.2e}")
    for backend, message in check.errors.items():
        console.print(f"[red]✗[/] {backend} failed: {message}")

    if not check.agreed:
        console.print("\n[bold red]Mismatch![/]")
        sys.exit(1)
    console.print(f"\n[bold green]Agreed![/] optimal cost {format_cost(next(iter(check.costs.values())))}")


def bench_row(report: SolveReport, g: Instance) -> dict[str, Any]:
    return {
        "instance": g.name,
        "nodes": g.node_count,
        "arcs": 2 * g.edge_count,
        "terminals": len(g.terminals),
        "families": count_families(len(g.terminals) - 1) if len(g.terminals) > 1 else 0,
        "optimal_cost": g.cost_value(report.optimal_cost),
        "mean_subproblem_time": report.time_stats()["mean"],
        "total_time": report.total_time,
    }


@main.command()
@click.argument('directory', required=False, type=click.Path(exists=True, file_okay=False))
@click.option('--random', 'random_count', type=int, help='Benchmark this many random instances')
@click.option('--nodes', type=int, default=20, show_default=True, help='Nodes per random instance')
@click.option(
    '--terminals', type=int, default=5, show_default=True, help='Terminals per random instance'
)
@click.option('--seed', type=int, default=0, show_default=True, help='Seed of the first random instance')
@solver_options
@backend_option
@format_option
def bench(
    directory: str | None,
    random_count: int | None,
    nodes: int,
    terminals: int,
    seed: int,
    root: int | None,
    threads: int | None,
    tol_feas: float | None,
    tol_int: float | None,
    verbose: bool,
    backend: str,
    output_format: str,
) -> None:
    """Benchmark every .stp file in DIRECTORY (or --random instances).

    Columns: instance, |V|, |A|, |R|, |L_b|, optimal cost, mean subproblem
    time, total time.
    """
    setup_logging(verbose)
    json_output = output_format == 'json'
    out_console = Console(quiet=True) if json_output else console
    show_config_notice(out_console)
    if directory is None and random_count is None:
        raise click.UsageError("Pass a directory of .stp files or --random <count>.")
    workers = threads_or_fail(threads)
    tolerances = build_tolerances(tol_feas, tol_int)

    sources: list[Callable[[], Instance]] = []
    if directory is not None:
        files = sorted(Path(directory).glob("*.stp"))
        if not files:
            raise click.ClickException(f"No .stp files in {directory}")
        sources.extend((lambda p=p: load_instance(p)) for p in files)
    for i in range(random_count or 0):
        sources.append(
            lambda i=i: random_instance(nodes, nodes, terminals, seed=seed + i)
        )

    rows: list[dict[str, Any]] = []
    failures = 0
    for i, source in enumerate(sources, 1):
        try:
            g = source()
            out_console.print(f"[bold blue][{i}/{len(sources)}][/] {g.name}")
            root_id = None if root is None else root - 1
            with out_console.status("[bold blue]Solving...", spinner="dots"):
                report = solve_instance(
                    g, root=root_id, backend=backend, workers=workers, tolerances=tolerances
                )
            rows.append(bench_row(report, g))
            out_console.print(f"[green]✓[/] cost {format_cost(report.optimal_cost)}")
        except SOLVER_ERRORS as e:
            out_console.print(f"[red]✗[/] Failed: {e}")
            failures += 1

    if json_output:
        print(json.dumps(rows, indent=2))
    else:
        table = Table(title="Benchmark")
        for column in ("Instance", "|V|", "|A|", "|R|", "|L_b|", "Cost", "Mean subproblem", "Total"):
            table.add_column(column, justify="left" if column == "Instance" else "right")
        for row in rows:
            table.add_row(
                row["instance"],
                str(row["nodes"]),
                str(row["arcs"]),
                str(row["terminals"]),
                f"{row['families']:,}",
                format_cost(row["optimal_cost"]),
                format_seconds(row["mean_subproblem_time"]),
                format_seconds(row["total_time"]),
            )
        out_console.print(table)

    if failures:
        out_console.print(f"\n[bold yellow]Complete![/] {len(rows)} succeeded, {failures} failed")
        sys.exit(1)
    out_console.print(f"\n[bold green]Complete![/] {len(rows)} instance(s) solved")


if __name__ == '__main__':
    main()
