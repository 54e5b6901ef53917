"""Workspace files: named global types, processes and environments."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Optional

from .environments import EMPTY_DELTA, EMPTY_GENV, GlobalEnv, SessionEnv, SharedEnv
from .errors import ParseError, UnresolvedName, WorkspaceError
from .parser import Declaration, parse_global, parse_process, parse_session_env, parse_workspace_text
from .session_types import GlobalSort, free_tvars, subst_tvar
from .syntax import Hide, ProcVar, Rec, free_proc_vars, map_shallow

log = logging.getLogger(__name__)


@dataclass
class Workspace:
    path: Optional[Path] = None
    globals: Dict[str, Any] = field(default_factory=dict)
    processes: Dict[str, Any] = field(default_factory=dict)
    gammas: Dict[str, SharedEnv] = field(default_factory=dict)
    values: SharedEnv = field(default_factory=SharedEnv)
    deltas: Dict[str, SessionEnv] = field(default_factory=dict)
    witnesses: Dict[str, GlobalEnv] = field(default_factory=dict)
    sessions: GlobalEnv = EMPTY_GENV

    def process(self, ref: str):
        """A declared process, or a process literal without free process variables."""
        if ref in self.processes:
            return self.processes[ref]
        try:
            p = parse_process(ref)
        except ParseError:
            raise UnresolvedName("process", ref)
        if free_proc_vars(p):
            raise UnresolvedName("process", ref)
        return p

    def global_type(self, ref: str):
        if ref in self.globals:
            return self.globals[ref]
        try:
            g = parse_global(ref)
        except ParseError:
            raise UnresolvedName("global", ref)
        if free_tvars(g):
            raise UnresolvedName("global", ref)
        return g

    def gamma(self, name: Optional[str] = None) -> SharedEnv:
        """The named Γ with the declared values; without a name, the only declared Γ."""
        if name is None:
            if len(self.gammas) > 1:
                raise WorkspaceError(f"several gammas declared ({', '.join(sorted(self.gammas))}); pick one")
            base = next(iter(self.gammas.values()), SharedEnv())
        elif name in self.gammas:
            base = self.gammas[name]
        else:
            raise UnresolvedName("gamma", name)
        return SharedEnv({**dict(self.values), **dict(base)})

    def delta(self, ref: Optional[str] = None) -> SessionEnv:
        if ref is None:
            return EMPTY_DELTA
        if ref in self.deltas:
            return self.deltas[ref]
        try:
            return parse_session_env(ref)
        except ParseError:
            raise UnresolvedName("delta", ref)

    def witness(self, name: str) -> GlobalEnv:
        if name not in self.witnesses:
            raise UnresolvedName("witness", name)
        return self.witnesses[name]


class _Resolver:
    def __init__(self, decls: List[Declaration]):
        self.decls = {}
        for decl in decls:
            key = (decl.kind, decl.name)
            if key in self.decls and decl.kind not in ("values", "sessions"):
                raise WorkspaceError(f"{decl.kind} {decl.name} declared twice (line {decl.line})")
            self.decls.setdefault(key, []).append(decl)
        self.globals: Dict[str, Any] = {}
        self.processes: Dict[str, Any] = {}

    def named(self, kind: str) -> List[Declaration]:
        return [d for (k, _), ds in self.decls.items() if k == kind for d in ds]

    def global_type(self, name: str, pending: FrozenSet[str] = frozenset()):
        if name in self.globals:
            return self.globals[name]
        if name in pending:
            raise WorkspaceError(f"global {name} refers to itself")
        if ("global", name) not in self.decls:
            raise UnresolvedName("global", name)
        g = self.resolve_type(self.decls[("global", name)][0].value, pending | {name})
        self.globals[name] = g
        return g

    def resolve_type(self, g, pending: FrozenSet[str] = frozenset()):
        for var in sorted(free_tvars(g)):
            g = subst_tvar(g, var, self.global_type(var, pending))
        return g

    def resolve_sort(self, u):
        if isinstance(u, GlobalSort):
            return GlobalSort(self.resolve_type(u.g))
        return u

    def process(self, name: str, pending: FrozenSet[str] = frozenset()):
        if name in self.processes:
            return self.processes[name]
        if name in pending:
            raise WorkspaceError(f"process {name} is defined in terms of itself; use rec")
        if ("proc", name) not in self.decls:
            raise UnresolvedName("process", name)
        p = self.inline(self.decls[("proc", name)][0].value, frozenset(), pending | {name})
        self.processes[name] = p
        return p

    def inline(self, p, bound: FrozenSet[str], pending: FrozenSet[str]):
        if isinstance(p, ProcVar) and p.name not in bound:
            return self.process(p.name, pending)
        if isinstance(p, Rec):
            return Rec(p.var, self.inline(p.body, bound | {p.var}, pending))
        if isinstance(p, Hide) and p.sort is not None:
            return Hide(p.name, self.inline(p.body, bound, pending), self.resolve_sort(p.sort))
        return map_shallow(p, lambda e: e, lambda q: self.inline(q, bound, pending))

    def sort_env(self, entries) -> SharedEnv:
        result = {}
        for name, sort, line in entries:
            if name in result:
                raise WorkspaceError(f"{name} bound twice (line {line})")
            result[name] = self.resolve_sort(sort)
        return SharedEnv(result)

    def genv(self, entries) -> GlobalEnv:
        result = {}
        for session, g, line in entries:
            if session in result:
                raise WorkspaceError(f"session {session} bound twice (line {line})")
            result[session] = self.resolve_type(g)
        return GlobalEnv(result)

    def delta(self, entries) -> SessionEnv:
        result = {}
        for endpoint, t, line in entries:
            if endpoint in result:
                raise WorkspaceError(f"endpoint {endpoint.session}[{endpoint.role}] bound twice (line {line})")
            result[endpoint] = t
        return SessionEnv(result)


def parse_workspace(text: str, path: Optional[Path] = None) -> Workspace:
    resolver = _Resolver(parse_workspace_text(text))
    ws = Workspace(path=path)
    for decl in resolver.named("global"):
        ws.globals[decl.name] = resolver.global_type(decl.name)
    for decl in resolver.named("proc"):
        ws.processes[decl.name] = resolver.process(decl.name)
    for decl in resolver.named("gamma"):
        ws.gammas[decl.name] = resolver.sort_env(decl.value)
    values: List = []
    for decl in resolver.named("values"):
        values.extend(decl.value)
    ws.values = resolver.sort_env(values)
    for decl in resolver.named("delta"):
        ws.deltas[decl.name] = resolver.delta(decl.value)
    for decl in resolver.named("witness"):
        ws.witnesses[decl.name] = resolver.genv(decl.value)
    sessions: List = []
    for decl in resolver.named("sessions"):
        sessions.extend(decl.value)
    ws.sessions = resolver.genv(sessions)
    log.info("workspace %s: %d globals, %d processes, %d deltas, %d witnesses",
             path or "<text>", len(ws.globals), len(ws.processes), len(ws.deltas), len(ws.witnesses))
    return ws


def load_workspace(path: Optional[Path]) -> Workspace:
    if path is None:
        return Workspace()
    path = Path(path)
    if not path.exists():
        raise WorkspaceError(f"workspace file {path} not found")
    return parse_workspace(path.read_text(encoding="utf-8"), path)
