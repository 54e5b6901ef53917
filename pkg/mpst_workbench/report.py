from pathlib import Path
from typing import Iterable, List, Optional

from jinja2 import Environment, FileSystemLoader

from .models import CheckDocument, GraphDocument, ProjectionDocument, VerdictDocument


PROJECT_ROOT = Path(__file__).resolve().parent.parent


def _get_env() -> Environment:
    loader = FileSystemLoader(str(PROJECT_ROOT / "template"))
    return Environment(loader=loader, trim_blocks=True, lstrip_blocks=True, keep_trailing_newline=True)


def _render(template: str, **context) -> str:
    return _get_env().get_template(template).render(**context).rstrip("\n")


def render_check(doc: CheckDocument) -> str:
    return _render("check.txt.j2", doc=doc)


def render_projection(doc: ProjectionDocument) -> str:
    return _render("project.txt.j2", doc=doc)


def render_graph(doc: GraphDocument, out: Optional[Path] = None) -> str:
    return _render("lts.txt.j2", doc=doc, out=out)


def render_reducts(reducts: Iterable[str]) -> str:
    return _render("reduce.txt.j2", reducts=list(reducts))


def render_verdicts(docs: List[VerdictDocument]) -> str:
    return _render("bisim.txt.j2", docs=docs)


def render_fuzz(name: str, count: int, seed: int, failures: List[str]) -> str:
    return _render("fuzz.txt.j2", name=name, count=count, seed=seed, failures=failures)
