"""Command-line interface.

Exit codes: 0 completed, 1 replay mismatch, 2 run aborted by limits,
3 run aborted by the backend, 4 configuration or input error.
"""

from __future__ import annotations

import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Callable

import click

from .config import ConfigError, RunConfig, config_help, load_config
from .knowledge import KnowledgeError, list_parameters, load_knowledge_base, lookup_matrix, principle_details
from .runner import EXIT_CONFIG, EXIT_OK, execute_run, replay_run
from .tools.rag import RagError, RagStore, ingest_directory, rag_query


class _Group(click.Group):
    """Group whose commands return exit codes, with usage errors mapped to 4."""

    def main(self, *args: Any, **kwargs: Any) -> Any:
        kwargs["standalone_mode"] = False
        try:
            rv = super().main(*args, **kwargs)
        except click.exceptions.UsageError as exc:
            exc.show()
            sys.exit(EXIT_CONFIG)
        except click.exceptions.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(1)
        except click.ClickException as exc:
            exc.show()
            sys.exit(EXIT_CONFIG)
        sys.exit(rv if isinstance(rv, int) else EXIT_OK)


def _fail(message: str, code: int = EXIT_CONFIG) -> int:
    click.echo(f"error: {message}", err=True)
    return code


def _click_type(kind: str) -> Any:
    base = kind.replace(" | None", "")
    return {"int": int, "float": float}.get(base, str)


def config_options(func: Callable) -> Callable:
    """One ``--kebab-case`` option per config key."""
    helps = config_help()
    for f in reversed(fields(RunConfig)):
        flag = "--" + f.name.replace("_", "-")
        kwargs: dict[str, Any] = {"default": None, "help": f"{helps[f.name]} [config: {f.name}]"}
        if f.name == "backend":
            kwargs["type"] = click.Choice(["live", "scripted"])
        elif f.name == "search":
            kwargs["type"] = click.Choice(["fixture", "live"])
        else:
            kwargs["type"] = _click_type(str(f.type))
        func = click.option(flag, f.name, **kwargs)(func)
    return func


def _setup_logging(verbose: int) -> None:
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@click.group(cls=_Group, context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML run configuration file.")
@click.option("--output-dir", default=None, help="Directory that receives run directories.")
@click.option("--backend", type=click.Choice(["live", "scripted"]), default=None, help="Chat backend.")
@click.option("--script", default=None, help="Script file for the scripted backend.")
@click.option("--search", type=click.Choice(["fixture", "live"]), default=None, help="Web search mode.")
@click.option("-v", "--verbose", count=True, help="More output; repeat for debug logging.")
@click.pass_context
def cli(ctx: click.Context, config_path: str | None, verbose: int, **overrides: Any) -> None:
    """Run a team of language agents through the TRIZ workflow."""
    ctx.obj = {"config_path": config_path, "verbose": verbose, "overrides": overrides}
    _setup_logging(verbose)


@cli.command()
@click.argument("problem_file", type=click.Path(dir_okay=False))
@config_options
@click.option("-v", "--verbose", "run_verbose", count=True, help="More output; repeat for debug logging.")
@click.pass_context
def run(ctx: click.Context, problem_file: str, run_verbose: int, **values: Any) -> int:
    """Solve the problem described in PROBLEM_FILE and write the run artifacts."""
    verbose = ctx.obj["verbose"] + run_verbose
    if run_verbose:
        _setup_logging(verbose)
    overrides = {k: v for k, v in ctx.obj["overrides"].items() if v is not None}
    overrides.update({k: v for k, v in values.items() if v is not None})
    try:
        cfg = load_config(ctx.obj["config_path"], overrides)
    except ConfigError as exc:
        return _fail(str(exc))
    if verbose:
        click.echo("effective config:\n" + cfg.to_yaml(), err=True)
    path = Path(problem_file)
    if not path.is_file():
        return _fail(f"problem file not found: {path}")
    problem = path.read_text(encoding="utf-8")
    if not problem.strip():
        return _fail(f"problem file is empty: {path}")
    try:
        outcome = execute_run(cfg, problem)
    except ConfigError as exc:
        return _fail(str(exc))
    click.echo(f"run directory: {outcome.run_dir}")
    for name in sorted(p.name for p in outcome.run_dir.iterdir()):
        click.echo(f"  {outcome.run_dir / name}")
    click.echo(outcome.report.summary())
    if outcome.error:
        click.echo(f"error: {outcome.error}", err=True)
    return outcome.exit_code


def _kb():
    return load_knowledge_base()


@cli.command()
@click.argument("improving")
@click.argument("worsening")
def matrix(improving: str, worsening: str) -> int:
    """Look up the contradiction matrix. Parameters are ids (1-39) or names."""
    kb = _kb()
    try:
        imp = kb.resolve_parameter(improving)
        wor = kb.resolve_parameter(worsening)
        ids = lookup_matrix(kb, imp.id, wor.id)
    except KnowledgeError as exc:
        return _fail(str(exc))
    click.echo(f"improving: {imp.id}. {imp.name}")
    click.echo(f"worsening: {wor.id}. {wor.name}")
    if not ids:
        click.echo("no inventive principles recorded for this pair")
        return EXIT_OK
    for p in principle_details(kb, ids):
        click.echo(f"{p.id:>2}  {p.name}")
    return EXIT_OK


@cli.command()
def params() -> int:
    """List the 39 TRIZ parameters."""
    for p in list_parameters(_kb()):
        click.echo(f"{p.id:>2}  {p.name}")
    return EXIT_OK


@cli.command()
@click.argument("ids", nargs=-1, type=int)
@click.option("--details", is_flag=True, help="Also print descriptions and sub-principles.")
def principles(ids: tuple[int, ...], details: bool) -> int:
    """List inventive principles (all of them, or the given IDS)."""
    kb = _kb()
    try:
        records = principle_details(kb, ids) if ids else list(kb.principles)
    except KnowledgeError as exc:
        return _fail(str(exc))
    for p in records:
        click.echo(f"{p.id:>2}  {p.name}")
        if details:
            click.echo(f"    {p.description}")
            for sub in p.sub_principles:
                click.echo(f"    - {sub}")
    return EXIT_OK


@cli.group()
def rag() -> None:
    """Manage the TRIZ retrieval store."""


@rag.command("ingest")
@click.argument("corpus", type=click.Path(file_okay=False))
@click.option("--store", "store_path", required=True, type=click.Path(dir_okay=False), help="Store JSON file.")
def rag_ingest_cmd(corpus: str, store_path: str) -> int:
    """Add every .txt/.md file under CORPUS to the store."""
    path = Path(store_path)
    try:
        store = RagStore.load(path) if path.exists() else RagStore()
        stats = ingest_directory(store, corpus)
    except (RagError, FileNotFoundError, ValueError) as exc:
        return _fail(str(exc))
    for s in stats:
        click.echo(f"{s.doc_id}: {s.chunk_count} chunks, {s.char_count} chars, ~{s.token_estimate} tokens")
    store.save(path)
    click.echo(f"{len(stats)} documents ingested; store now holds {len(store.docs)} documents, {len(store)} chunks")
    return EXIT_OK


@rag.command("query")
@click.argument("query")
@click.option("--store", "store_path", required=True, type=click.Path(dir_okay=False), help="Store JSON file.")
@click.option("-k", "k", default=4, show_default=True, type=int, help="Number of chunks to return.")
def rag_query_cmd(query: str, store_path: str, k: int) -> int:
    """Print the chunks that best match QUERY, with scores and sources."""
    path = Path(store_path)
    try:
        store = RagStore.load(path) if path.exists() else RagStore()
        _, top = rag_query(store, query, k)
    except (RagError, ValueError) as exc:
        return _fail(str(exc))
    for n, c in enumerate(top, start=1):
        click.echo(f"{n}. score={c.score:.4f} source={c.doc_id}#{c.index}")
        click.echo("   " + c.text.strip().replace("\n", "\n   "))
    return EXIT_OK


@cli.command()
@click.argument("run_dir", type=click.Path(file_okay=False))
@click.option("--work-dir", default=None, type=click.Path(file_okay=False), help="Where the replay is written.")
def replay(run_dir: str, work_dir: str | None) -> int:
    """Re-run RUN_DIR from its recorded script and compare the artifacts."""
    try:
        result = replay_run(run_dir, work_dir)
    except ConfigError as exc:
        return _fail(str(exc))
    if result.ok:
        click.echo(f"replay matches ({result.replay_dir})")
    else:
        click.echo(f"replay diverges ({result.replay_dir})\n{result.divergence}")
    return result.exit_code


def main() -> None:
    cli()
