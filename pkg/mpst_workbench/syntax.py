"""Process syntax: AST, substitution, free names and structural normal forms."""

import itertools
import logging
import math
import re
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Any, Callable, Dict, FrozenSet, List, Optional, Tuple, Union

log = logging.getLogger(__name__)

# Names starting with '#' are reserved for canonical and fresh names.
_PERMUTATION_CAP = 5040
_TEMP_RE = re.compile(r"#t\d+")


# ── Expressions ──

@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class NameEq:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Name:
    name: str


@dataclass(frozen=True)
class Endpoint:
    session: str
    role: int


Expr = Union[BoolLit, And, NameEq, Var, Name, Endpoint]
Value = Union[BoolLit, Name, Endpoint]
Channel = Union[Var, Endpoint]
Subject = Union[Var, Name]

TRUE = BoolLit(True)
FALSE = BoolLit(False)


# ── Processes ──

@dataclass(frozen=True)
class Request:
    shared: Subject
    role: int
    binder: str
    body: "Process"


@dataclass(frozen=True)
class Accept:
    shared: Subject
    role: int
    binder: str
    body: "Process"


@dataclass(frozen=True)
class Send:
    channel: Channel
    peer: int
    expr: Expr
    body: "Process"


@dataclass(frozen=True)
class Recv:
    channel: Channel
    peer: int
    binder: str
    body: "Process"


@dataclass(frozen=True)
class Select:
    channel: Channel
    peer: int
    label: str
    body: "Process"


@dataclass(frozen=True)
class Branch:
    channel: Channel
    peer: int
    branches: Tuple[Tuple[str, "Process"], ...]

    def lookup(self, label: str) -> Optional["Process"]:
        for name, body in self.branches:
            if name == label:
                return body
        return None


@dataclass(frozen=True)
class If:
    cond: Expr
    then: "Process"
    orelse: "Process"


@dataclass(frozen=True)
class Par:
    left: "Process"
    right: "Process"


@dataclass(frozen=True)
class Inact:
    pass


@dataclass(frozen=True)
class Hide:
    name: str
    body: "Process"
    sort: Any = None


@dataclass(frozen=True)
class Rec:
    var: str
    body: "Process"


@dataclass(frozen=True)
class ProcVar:
    name: str


Process = Union[Request, Accept, Send, Recv, Select, Branch, If, Par, Inact, Hide, Rec, ProcVar]

INACT = Inact()

_BINDERS = (Request, Accept, Recv)
_PREFIXES = (Request, Accept, Send, Recv, Select)


def par_all(components: List[Process]) -> Process:
    if not components:
        return INACT
    result = components[0]
    for comp in components[1:]:
        result = Par(result, comp)
    return result


def evaluate(e: Expr) -> Optional[Value]:
    """Evaluate a closed expression; None when it is stuck on a variable."""
    if isinstance(e, (BoolLit, Name, Endpoint)):
        return e
    if isinstance(e, And):
        left, right = evaluate(e.left), evaluate(e.right)
        if isinstance(left, BoolLit) and isinstance(right, BoolLit):
            return BoolLit(left.value and right.value)
        return None
    if isinstance(e, NameEq):
        left, right = evaluate(e.left), evaluate(e.right)
        if left is None or right is None:
            return None
        return BoolLit(left == right)
    return None


# ── Free names and variables ──

def _expr_ids(e: Expr) -> FrozenSet[str]:
    if isinstance(e, Name):
        return frozenset([e.name])
    if isinstance(e, Endpoint):
        return frozenset([e.session])
    if isinstance(e, (And, NameEq)):
        return _expr_ids(e.left) | _expr_ids(e.right)
    return frozenset()


def _expr_sessions(e: Expr) -> FrozenSet[str]:
    if isinstance(e, Endpoint):
        return frozenset([e.session])
    if isinstance(e, (And, NameEq)):
        return _expr_sessions(e.left) | _expr_sessions(e.right)
    return frozenset()


def _expr_vars(e: Expr) -> FrozenSet[str]:
    if isinstance(e, Var):
        return frozenset([e.name])
    if isinstance(e, (And, NameEq)):
        return _expr_vars(e.left) | _expr_vars(e.right)
    return frozenset()


def _value_atoms(e: Expr) -> FrozenSet[str]:
    if isinstance(e, Name):
        return frozenset([e.name])
    if isinstance(e, (And, NameEq)):
        return _value_atoms(e.left) | _value_atoms(e.right)
    return frozenset()


def _nothing(e: Expr) -> FrozenSet[str]:
    return frozenset()


_FnIds = Callable[[Expr], FrozenSet[str]]


def _collect(p: Process, expr_fn: _FnIds, subject_fn: _FnIds) -> FrozenSet[str]:
    """Free identifiers: ``subject_fn`` on subjects/channels, ``expr_fn`` on payloads."""
    if isinstance(p, (Request, Accept)):
        return subject_fn(p.shared) | _collect(p.body, expr_fn, subject_fn)
    if isinstance(p, Send):
        return subject_fn(p.channel) | expr_fn(p.expr) | _collect(p.body, expr_fn, subject_fn)
    if isinstance(p, (Recv, Select)):
        return subject_fn(p.channel) | _collect(p.body, expr_fn, subject_fn)
    if isinstance(p, Branch):
        result = subject_fn(p.channel)
        for _, body in p.branches:
            result |= _collect(body, expr_fn, subject_fn)
        return result
    if isinstance(p, If):
        return (expr_fn(p.cond) | _collect(p.then, expr_fn, subject_fn)
                | _collect(p.orelse, expr_fn, subject_fn))
    if isinstance(p, Par):
        return _collect(p.left, expr_fn, subject_fn) | _collect(p.right, expr_fn, subject_fn)
    if isinstance(p, Hide):
        return _collect(p.body, expr_fn, subject_fn) - {p.name}
    if isinstance(p, Rec):
        return _collect(p.body, expr_fn, subject_fn)
    return frozenset()


@lru_cache(maxsize=200000)
def free_names(p: Process) -> FrozenSet[str]:
    """Free names in name positions: shared-name subjects and session channels."""
    return _collect(p, _expr_sessions, _expr_ids)


@lru_cache(maxsize=200000)
def free_values(p: Process) -> FrozenSet[str]:
    """Names occurring free in value positions (atoms and sent shared names)."""
    return _collect(p, _value_atoms, _nothing)


@lru_cache(maxsize=200000)
def free_sessions(p: Process) -> FrozenSet[str]:
    """Session names of free endpoints, in channel or payload position."""
    return _collect(p, _expr_sessions, _expr_sessions)


@lru_cache(maxsize=200000)
def free_ids(p: Process) -> FrozenSet[str]:
    return _collect(p, _expr_ids, _expr_ids)


@lru_cache(maxsize=200000)
def free_vars(p: Process) -> FrozenSet[str]:
    if isinstance(p, (Request, Accept)):
        return _expr_vars(p.shared) | (free_vars(p.body) - {p.binder})
    if isinstance(p, Recv):
        return _expr_vars(p.channel) | (free_vars(p.body) - {p.binder})
    if isinstance(p, Send):
        return _expr_vars(p.channel) | _expr_vars(p.expr) | free_vars(p.body)
    if isinstance(p, Select):
        return _expr_vars(p.channel) | free_vars(p.body)
    if isinstance(p, Branch):
        result = _expr_vars(p.channel)
        for _, body in p.branches:
            result |= free_vars(body)
        return result
    if isinstance(p, If):
        return _expr_vars(p.cond) | free_vars(p.then) | free_vars(p.orelse)
    if isinstance(p, Par):
        return free_vars(p.left) | free_vars(p.right)
    if isinstance(p, (Hide, Rec)):
        return free_vars(p.body)
    return frozenset()


@lru_cache(maxsize=200000)
def free_proc_vars(p: Process) -> FrozenSet[str]:
    if isinstance(p, ProcVar):
        return frozenset([p.name])
    if isinstance(p, Rec):
        return free_proc_vars(p.body) - {p.var}
    result: FrozenSet[str] = frozenset()
    for child in children(p):
        result |= free_proc_vars(child)
    return result


def is_closed(p: Process) -> bool:
    return not free_vars(p) and not free_proc_vars(p)


def children(p: Process) -> List[Process]:
    if isinstance(p, _PREFIXES) or isinstance(p, (Hide, Rec)):
        return [p.body]
    if isinstance(p, Branch):
        return [body for _, body in p.branches]
    if isinstance(p, If):
        return [p.then, p.orelse]
    if isinstance(p, Par):
        return [p.left, p.right]
    return []


def size(p: Process) -> int:
    return 1 + sum(size(c) for c in children(p))


def _fresh(base: str, avoid: FrozenSet[str]) -> str:
    candidate = base + "'"
    while candidate in avoid:
        candidate += "'"
    return candidate


# ── Substitution ──

def map_expr(e: Expr, f: Callable[[Expr], Optional[Expr]]) -> Expr:
    mapped = f(e)
    if mapped is not None:
        return mapped
    if isinstance(e, And):
        return And(map_expr(e.left, f), map_expr(e.right, f))
    if isinstance(e, NameEq):
        return NameEq(map_expr(e.left, f), map_expr(e.right, f))
    return e


def map_shallow(p: Process, fe: Callable[[Expr], Expr], fb: Callable[[Process], Process]) -> Process:
    """Rebuild ``p`` with expression positions mapped by ``fe`` and children by ``fb``."""
    if isinstance(p, (Request, Accept)):
        return replace(p, shared=fe(p.shared), body=fb(p.body))
    if isinstance(p, Send):
        return replace(p, channel=fe(p.channel), expr=fe(p.expr), body=fb(p.body))
    if isinstance(p, (Recv, Select)):
        return replace(p, channel=fe(p.channel), body=fb(p.body))
    if isinstance(p, Branch):
        return replace(p, channel=fe(p.channel),
                       branches=tuple((label, fb(body)) for label, body in p.branches))
    if isinstance(p, If):
        return If(fe(p.cond), fb(p.then), fb(p.orelse))
    if isinstance(p, Par):
        return Par(fb(p.left), fb(p.right))
    if isinstance(p, (Hide, Rec)):
        return replace(p, body=fb(p.body))
    return p


def _rebind(p: Process, avoid: FrozenSet[str]) -> Process:
    """Rename the variable binder of ``p`` away from ``avoid``."""
    new = _fresh(p.binder, avoid | free_vars(p.body))
    return replace(p, binder=new, body=substitute(p.body, p.binder, Var(new)))


def substitute(p: Process, var: str, value: Expr) -> Process:
    """Capture-avoiding substitution of ``value`` for the free variable ``var``."""
    if var not in free_vars(p):
        return p

    def fe(e: Expr) -> Expr:
        return map_expr(e, lambda x: value if isinstance(x, Var) and x.name == var else None)

    value_vars = _expr_vars(value)
    value_ids = _expr_ids(value)
    if isinstance(p, _BINDERS):
        if p.binder == var:
            if isinstance(p, Recv):
                return replace(p, channel=fe(p.channel))
            return replace(p, shared=fe(p.shared))
        if p.binder in value_vars:
            p = _rebind(p, value_vars | {var})
    if isinstance(p, Hide) and p.name in value_ids:
        new = _fresh(p.name, value_ids | free_ids(p.body))
        p = Hide(new, rename_name(p.body, p.name, new), p.sort)
    return map_shallow(p, fe, lambda q: substitute(q, var, value))


def rename_name(p: Process, old: str, new: str) -> Process:
    """Rename free occurrences of the name ``old`` (shared name or session)."""
    if old == new or old not in free_ids(p):
        return p

    def rename(e: Expr) -> Optional[Expr]:
        if isinstance(e, Name) and e.name == old:
            return Name(new)
        if isinstance(e, Endpoint) and e.session == old:
            return Endpoint(new, e.role)
        return None

    if isinstance(p, Hide):
        if p.name == old:
            return p
        if p.name == new:
            fresh = _fresh(p.name, free_ids(p.body) | {old, new})
            p = Hide(fresh, rename_name(p.body, p.name, fresh), p.sort)
    return map_shallow(p, lambda e: map_expr(e, rename), lambda q: rename_name(q, old, new))


def substitute_process(p: Process, var: str, q: Process) -> Process:
    """Replace the process variable ``var`` by ``q`` without capturing q's free identifiers."""
    if var not in free_proc_vars(p):
        return p
    if isinstance(p, ProcVar):
        return q
    if isinstance(p, Rec):
        if p.var in free_proc_vars(q):
            new = _fresh(p.var, free_proc_vars(q) | free_proc_vars(p.body))
            p = Rec(new, substitute_process(p.body, p.var, ProcVar(new)))
        return Rec(p.var, substitute_process(p.body, var, q))
    if isinstance(p, _BINDERS) and p.binder in free_vars(q):
        p = _rebind(p, free_vars(q))
    if isinstance(p, Hide) and p.name in free_ids(q):
        new = _fresh(p.name, free_ids(q) | free_ids(p.body))
        p = Hide(new, rename_name(p.body, p.name, new), p.sort)
    return map_shallow(p, lambda e: e, lambda c: substitute_process(c, var, q))


def unfold_process(p: Process) -> Process:
    if isinstance(p, Rec):
        return substitute_process(p.body, p.var, p)
    return p


# ── Structural normal form ──

def _canon(p: Process, venv: Dict[str, str], depth: int, renv: Dict[str, str], rdepth: int) -> Process:
    """Rename variable binders to #x<depth> and recursion binders to #X<depth>."""

    def fe(e: Expr) -> Expr:
        return map_expr(e, lambda x: Var(venv[x.name]) if isinstance(x, Var) and x.name in venv else None)

    if isinstance(p, _BINDERS):
        new = f"#x{depth}"
        inner = {**venv, p.binder: new}
        body = _canon(p.body, inner, depth + 1, renv, rdepth)
        if isinstance(p, Recv):
            return replace(p, channel=fe(p.channel), binder=new, body=body)
        return replace(p, shared=fe(p.shared), binder=new, body=body)
    if isinstance(p, Rec):
        new = f"#X{rdepth}"
        return Rec(new, _canon(p.body, venv, depth, {**renv, p.var: new}, rdepth + 1))
    if isinstance(p, ProcVar):
        return ProcVar(renv.get(p.name, p.name))
    return map_shallow(p, fe, lambda q: _canon(q, venv, depth, renv, rdepth))


def _flatten(p: Process, comps: List[Process], restrs: List[Tuple[str, Any]], temps: List[str]) -> None:
    if isinstance(p, Par):
        _flatten(p.left, comps, restrs, temps)
        _flatten(p.right, comps, restrs, temps)
    elif isinstance(p, Hide):
        temp = temps.pop(0)
        restrs.append((temp, p.sort))
        _flatten(rename_name(p.body, p.name, temp), comps, restrs, temps)
    elif not isinstance(p, Inact):
        comps.append(p)


def _count_hides(p: Process) -> int:
    own = 1 if isinstance(p, Hide) else 0
    if isinstance(p, (Hide, Par)):
        return own + sum(_count_hides(c) for c in children(p))
    return 0


def _normalize_children(p: Process, base: int) -> Process:
    if isinstance(p, (Hide, Par)):
        return p
    return map_shallow(p, lambda e: e, lambda q: _nf(q, base))


def _orderings(groups: List[List[Process]]):
    total = 1
    for group in groups:
        total *= math.factorial(len(group))
    if total > _PERMUTATION_CAP:
        log.debug("normal form tie groups too large (%d orderings); using key order", total)
        yield [c for group in groups for c in group]
        return
    for combo in itertools.product(*(itertools.permutations(g) for g in groups)):
        yield [c for group in combo for c in group]


def _nf(p: Process, base: int) -> Process:
    taken = free_ids(p)
    temps: List[str] = []
    needed = _count_hides(p)
    k = 0
    while len(temps) < needed:
        name = f"#t{k}"
        if name not in taken:
            temps.append(name)
        k += 1
    comps: List[Process] = []
    restrs: List[Tuple[str, Any]] = []
    _flatten(p, comps, restrs, temps)

    used: FrozenSet[str] = frozenset()
    for comp in comps:
        used |= free_ids(comp)
    kept = [(t, s) for t, s in restrs if t in used]
    sorts = dict(kept)
    inner_base = base + len(kept)
    comps = [_normalize_children(c, inner_base) for c in comps]

    def erase(c: Process) -> str:
        for t in sorts:
            c = rename_name(c, t, "#?")
        return pretty(c)

    keyed = sorted(((erase(c), pretty(c), c) for c in comps), key=lambda item: (item[0], item[1]))
    groups = [[c for _, _, c in grp] for _, grp in itertools.groupby(keyed, key=lambda item: item[0])]

    best: Optional[Process] = None
    best_text = ""
    for ordering in _orderings(groups):
        order: List[str] = []
        for comp in ordering:
            for t in _TEMP_RE.findall(pretty(comp)):
                if t in sorts and t not in order:
                    order.append(t)
        mapping = {t: f"#n{base + i + 1}" for i, t in enumerate(order)}
        renamed = []
        for comp in ordering:
            for t, final in mapping.items():
                comp = rename_name(comp, t, final)
            renamed.append(comp)
        candidate = par_all(renamed)
        for t in reversed(order):
            candidate = Hide(mapping[t], candidate, sorts[t])
        text = pretty(candidate)
        if best is None or text < best_text:
            best, best_text = candidate, text
    return best if best is not None else INACT


@lru_cache(maxsize=200000)
def normal_form(p: Process) -> Process:
    """Canonical representative of the structural-congruence class of ``p``.

    Inactive components are dropped, parallel compositions flattened and
    sorted, restrictions pulled to the top (unused ones discarded) and bound
    names renamed deterministically. Recursion is not unfolded.
    """
    return _nf(_canon(p, {}, 0, {}, 0), 0)


def restricted_spine(p: Process) -> Tuple[List[Tuple[str, Any]], List[Process]]:
    """Split a normal form into its restrictions and parallel components."""
    restrs: List[Tuple[str, Any]] = []
    while isinstance(p, Hide):
        restrs.append((p.name, p.sort))
        p = p.body
    comps: List[Process] = []
    stack = [p]
    while stack:
        q = stack.pop()
        if isinstance(q, Par):
            stack.append(q.right)
            stack.append(q.left)
        elif not isinstance(q, Inact):
            comps.append(q)
    return restrs, comps


# ── Printing ──

def _atom(e: Expr) -> str:
    if isinstance(e, (And, NameEq)):
        return f"({pretty_expr(e)})"
    return pretty_expr(e)


def pretty_expr(e: Expr) -> str:
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, (Var, Name)):
        return e.name
    if isinstance(e, Endpoint):
        return f"{e.session}[{e.role}]"
    if isinstance(e, NameEq):
        return f"{_atom(e.left)} == {_atom(e.right)}"
    if isinstance(e, And):
        right = f"({pretty_expr(e.right)})" if isinstance(e.right, And) else pretty_expr(e.right)
        return f"{pretty_expr(e.left)} and {right}"
    raise TypeError(f"not an expression: {e!r}")


def _cont(p: Process) -> str:
    text = pretty(p)
    return f"({text})" if isinstance(p, Par) else text


def pretty(p: Process) -> str:
    if isinstance(p, Inact):
        return "0"
    if isinstance(p, Request):
        return f"{pretty_expr(p.shared)}~[{p.role}]({p.binder}). {_cont(p.body)}"
    if isinstance(p, Accept):
        return f"{pretty_expr(p.shared)}[{p.role}]({p.binder}). {_cont(p.body)}"
    if isinstance(p, Send):
        return f"{pretty_expr(p.channel)}[{p.peer}]!<{pretty_expr(p.expr)}>. {_cont(p.body)}"
    if isinstance(p, Recv):
        return f"{pretty_expr(p.channel)}[{p.peer}]?({p.binder}). {_cont(p.body)}"
    if isinstance(p, Select):
        return f"{pretty_expr(p.channel)}[{p.peer}](+){p.label}. {_cont(p.body)}"
    if isinstance(p, Branch):
        arms = ", ".join(f"{label}: {pretty(body)}" for label, body in p.branches)
        return f"{pretty_expr(p.channel)}[{p.peer}]&{{{arms}}}"
    if isinstance(p, If):
        return f"if {pretty_expr(p.cond)} then {_cont(p.then)} else {_cont(p.orelse)}"
    if isinstance(p, Par):
        right = f"({pretty(p.right)})" if isinstance(p.right, Par) else pretty(p.right)
        return f"{pretty(p.left)} | {right}"
    if isinstance(p, Hide):
        from .session_types import show_sort

        annotation = f" : {show_sort(p.sort)}" if p.sort is not None else ""
        return f"(new {p.name}{annotation}) {_cont(p.body)}"
    if isinstance(p, Rec):
        return f"rec {p.var}. {_cont(p.body)}"
    if isinstance(p, ProcVar):
        return p.name
    raise TypeError(f"not a process: {p!r}")
