import concurrent.futures
import functools
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import click
from pydantic import ValidationError

from .bisim import (
    BISIMILAR,
    NOT_BISIMILAR,
    GovState,
    TypedState,
    bisim_governed,
    bisim_standard,
    explore_governed,
    explore_typed,
    typed_state,
)
from .config import Settings, get_settings
from .environments import show_key
from .errors import ProjectionUndefined, WorkbenchError
from .generators import PROPERTIES, run_property
from .lts import explore, reduce, show_label
from .models import (
    CheckDocument,
    GraphDocument,
    ProjectionDocument,
    ReductsDocument,
    RunConfig,
    VerdictDocument,
)
from .report import render_check, render_fuzz, render_graph, render_projection, render_reducts, render_verdicts
from .session_types import project_global, projection_set, show_global, show_local
from .syntax import pretty
from .typecheck import check, infer
from .workspace import Workspace, load_workspace

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NOT_BISIMILAR = 1
EXIT_INCONCLUSIVE = 4


@dataclass
class RunContext:
    config: RunConfig
    workspace_path: Optional[Path] = None
    _workspace: Optional[Workspace] = None

    @property
    def workspace(self) -> Workspace:
        if self._workspace is None:
            self._workspace = load_workspace(self.workspace_path)
        return self._workspace

    @property
    def as_json(self) -> bool:
        return self.config.output_format == "json"


def _guarded(command):
    """Report workbench errors on stderr and exit with their code."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except WorkbenchError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)

    return wrapper


def resolve_workspace_path(path: Optional[Path], settings: Settings) -> Optional[Path]:
    """Bare names like ``intro`` refer to the bundled workspaces directory."""
    if path is None or path.exists():
        return path
    bundled = settings.workspace_dir / path.with_suffix(".mpst").name
    if path.parent == Path(".") and bundled.exists():
        log.debug("workspace %s resolved to %s", path, bundled)
        return bundled
    return path


def verdict_exit_code(verdicts: List[str]) -> int:
    if all(v == BISIMILAR for v in verdicts):
        return EXIT_OK
    if any(v == NOT_BISIMILAR for v in verdicts):
        return EXIT_NOT_BISIMILAR
    return EXIT_INCONCLUSIVE


@click.group()
@click.option("--workspace", "workspace_path", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Workspace file with named types, processes and environments.")
@click.option("--max-states", type=int, default=None, help="State (or pair) budget for explorations.")
@click.option("--unfold-bound", type=int, default=None, help="Recursion unfoldings allowed per step.")
@click.option("--json", "as_json", is_flag=True, help="Print machine-readable JSON.")
@click.option("--seed", type=int, default=None, help="Seed for generated cases.")
@click.option("--verbose", "-v", is_flag=True, help="Log at DEBUG level.")
@click.pass_context
def main(ctx, workspace_path, max_states, unfold_bound, as_json, seed, verbose):
    """Workbench for multiparty session processes: typing, projection, LTS and bisimulation."""
    settings = get_settings()
    logging.basicConfig(
        level=logging.DEBUG if verbose else settings.log_level,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = RunConfig.from_settings(
            settings,
            max_states=max_states,
            unfold_bound=unfold_bound,
            output_format="json" if as_json else "text",
            seed=seed,
        )
    except ValidationError as exc:
        raise click.UsageError(str(exc))
    ctx.obj = RunContext(config, resolve_workspace_path(workspace_path, settings))


@main.command("check")
@click.argument("proc")
@click.option("--gamma", "gamma_name", default=None, help="Named Γ of the workspace.")
@click.option("--delta", "delta_ref", default=None, help="Expected Δ: a workspace name or a literal.")
@click.pass_obj
@_guarded
def check_command(run: RunContext, proc, gamma_name, delta_ref):
    """Infer the session environment of PROC, optionally against an expected one."""
    ws = run.workspace
    gamma = ws.gamma(gamma_name)
    p = ws.process(proc)
    verdict = infer(gamma, p)
    expected = matches = None
    if verdict.ok and delta_ref is not None:
        wanted = ws.delta(delta_ref)
        expected = wanted.show()
        matches = check(gamma, p, wanted)
    doc = CheckDocument(
        process=pretty(p),
        ok=verdict.ok,
        delta=verdict.delta.show() if verdict.ok else None,
        expected=expected,
        matches=matches,
        rule=verdict.rule,
        location=verdict.location,
        message=verdict.message,
    )
    click.echo(doc.to_json() if run.as_json else render_check(doc))
    if not verdict.ok or matches is False:
        sys.exit(2)


@main.command("project")
@click.argument("global_ref", metavar="GLOBAL")
@click.argument("role", type=int, required=False)
@click.pass_obj
@_guarded
def project_command(run: RunContext, global_ref, role):
    """Project GLOBAL onto ROLE, or onto every role it mentions."""
    g = run.workspace.global_type(global_ref)
    try:
        if role is not None:
            doc = ProjectionDocument(global_type=show_global(g), role=role, local=show_local(project_global(g, role)))
        else:
            projections = {show_key(k): show_local(t) for k, t in projection_set("s", g).items()}
            doc = ProjectionDocument(global_type=show_global(g), projections=projections)
    except ProjectionUndefined as exc:
        doc = ProjectionDocument(
            global_type=show_global(g),
            role=role,
            error=str(exc),
            diff=[f"{label}: {text}" for label, text in exc.diff],
        )
    click.echo(doc.to_json() if run.as_json else render_projection(doc))
    if doc.error:
        sys.exit(2)


@main.command("lts")
@click.argument("proc")
@click.option("--typed", is_flag=True, help="Explore the typed transition system.")
@click.option("--witness", "witness_name", default=None, help="Explore the governed system under this witness.")
@click.option("--gamma", "gamma_name", default=None)
@click.option("--delta", "delta_ref", default=None)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Write the graph as JSON to this file.")
@click.pass_obj
@_guarded
def lts_command(run: RunContext, proc, typed, witness_name, gamma_name, delta_ref, out):
    """Explore the transition graph of PROC up to --max-states."""
    ws = run.workspace
    cfg = run.config
    p = ws.process(proc)
    if witness_name is not None:
        start = GovState(ws.witness(witness_name), typed_state(ws.gamma(gamma_name), p, ws.delta(delta_ref)))
        graph = explore_governed(start, cfg.max_states, cfg.unfold_bound, ws.sessions)
        show_state = GovState.show
    elif typed:
        start = typed_state(ws.gamma(gamma_name), p, ws.delta(delta_ref))
        graph = explore_typed(start, cfg.max_states, cfg.unfold_bound, ws.sessions)
        show_state = TypedState.show
    else:
        graph = explore(p, cfg.max_states, cfg.unfold_bound)
        show_state = pretty
    doc = GraphDocument.from_graph(graph, show_state, show_label)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(doc.to_json(), encoding="utf-8")
        log.info("graph with %d states written to %s", len(doc.states), out)
    if run.as_json and out is None:
        click.echo(doc.to_json())
    else:
        click.echo(render_graph(doc, out))


@main.command("reduce")
@click.argument("proc")
@click.pass_obj
@_guarded
def reduce_command(run: RunContext, proc):
    """List the one-step reducts of PROC."""
    p = run.workspace.process(proc)
    reducts = [pretty(r) for r in reduce(p, run.config.unfold_bound)]
    if run.as_json:
        click.echo(ReductsDocument(process=pretty(p), reducts=reducts).to_json())
    else:
        click.echo(render_reducts(reducts))


@main.command("bisim")
@click.argument("p1")
@click.argument("p2")
@click.option("--delta1", default=None, help="Δ of P1: a workspace name or a literal.")
@click.option("--delta2", default=None, help="Δ of P2: a workspace name or a literal.")
@click.option("--gamma", "gamma_name", default=None)
@click.option("--governed", is_flag=True, help="Decide globally governed bisimilarity.")
@click.option("--witness", "witnesses", multiple=True, help="Witness global environment (repeatable).")
@click.option("--workers", default=4, show_default=True, help="Parallel witnesses.")
@click.pass_obj
@_guarded
def bisim_command(run: RunContext, p1, p2, delta1, delta2, gamma_name, governed, witnesses, workers):
    """Decide whether P1 and P2 are bisimilar."""
    ws = run.workspace
    cfg = run.config
    if governed and not witnesses:
        raise click.UsageError("--governed needs at least one --witness")
    gamma = ws.gamma(gamma_name)
    left, right = ws.process(p1), ws.process(p2)
    d1, d2 = ws.delta(delta1), ws.delta(delta2)

    docs: List[VerdictDocument] = []
    if not governed:
        verdict = bisim_standard(gamma, left, d1, right, d2, cfg.max_states, cfg.unfold_bound, ws.sessions)
        docs.append(VerdictDocument.from_verdict(verdict, "standard", show_pair=lambda pair: [s.show() for s in pair]))
    else:
        genvs = {name: ws.witness(name) for name in witnesses}
        results: Dict[str, VerdictDocument] = {}
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
            future_to_witness = {
                executor.submit(bisim_governed, genv, gamma, left, d1, right, d2,
                                cfg.max_states, cfg.unfold_bound, ws.sessions): name
                for name, genv in genvs.items()
            }
            for future in concurrent.futures.as_completed(future_to_witness):
                name = future_to_witness[future]
                verdict = future.result()
                log.info("witness %s: %s", name, verdict.verdict)
                results[name] = VerdictDocument.from_verdict(
                    verdict, "governed", name, show_pair=lambda node: [node[0].show()] + [s.show() for s in node[1:]]
                )
        docs = [results[name] for name in genvs]

    if run.as_json:
        if len(docs) == 1:
            click.echo(docs[0].to_json())
        else:
            click.echo(json.dumps([d.model_dump(mode="json", by_alias=True, exclude_none=True) for d in docs], indent=2))
    else:
        click.echo(render_verdicts(docs))
    sys.exit(verdict_exit_code([d.verdict for d in docs]))


@main.command("fuzz")
@click.argument("prop", type=click.Choice(sorted(PROPERTIES)))
@click.option("--count", default=100, show_default=True, help="Generated cases.")
@click.pass_obj
@_guarded
def fuzz_command(run: RunContext, prop, count):
    """Check a property of the workbench on seeded random cases."""
    seed = run.config.seed
    failures = run_property(prop, seed, count)
    click.echo(render_fuzz(prop, count, seed, failures))
    if failures:
        sys.exit(1)


if __name__ == "__main__":
    main()
