"""Untyped labelled transition system, reduction semantics, barbs and bounded exploration."""

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, FrozenSet, Hashable, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx

from .config import DEFAULT_MAX_STATES, DEFAULT_UNFOLD_BOUND
from .errors import UnfoldBoundExceeded
from .syntax import (
    FALSE,
    TRUE,
    Accept,
    BoolLit,
    Branch,
    Endpoint,
    Hide,
    If,
    Name,
    Rec,
    Recv,
    Request,
    Select,
    Send,
    evaluate,
    free_ids,
    free_names,
    free_sessions,
    free_values,
    normal_form,
    par_all,
    pretty,
    pretty_expr,
    rename_name,
    restricted_spine,
    substitute,
    unfold_process,
)

log = logging.getLogger(__name__)


# ── Labels ──

@dataclass(frozen=True)
class AccLabel:
    shared: str
    roles: FrozenSet[int]
    session: str


@dataclass(frozen=True)
class ReqLabel:
    shared: str
    roles: FrozenSet[int]
    session: str


@dataclass(frozen=True)
class Out:
    session: str
    role: int
    peer: int
    value: Any


@dataclass(frozen=True)
class In:
    session: str
    role: int
    peer: int
    value: Any


@dataclass(frozen=True)
class BOutName:
    session: str
    role: int
    peer: int
    name: str


@dataclass(frozen=True)
class BOutSession:
    session: str
    role: int
    peer: int
    endpoint: Endpoint


@dataclass(frozen=True)
class Sel:
    session: str
    role: int
    peer: int
    label: str


@dataclass(frozen=True)
class Bra:
    session: str
    role: int
    peer: int
    label: str


@dataclass(frozen=True)
class Tau:
    pass


TAU = Tau()

Label = Union[AccLabel, ReqLabel, Out, In, BOutName, BOutSession, Sel, Bra, Tau]
SESSION_LABELS = (Out, In, BOutName, BOutSession, Sel, Bra)

_KIND_ORDER = {AccLabel: 0, ReqLabel: 1, Out: 2, BOutName: 3, BOutSession: 4, In: 5, Sel: 6, Bra: 7, Tau: 8}


def _roles_text(roles: Iterable[int]) -> str:
    return "{" + ",".join(str(r) for r in sorted(roles)) + "}"


def show_label(label: Label) -> str:
    if isinstance(label, AccLabel):
        return f"{label.shared}<{_roles_text(label.roles)}>({label.session})"
    if isinstance(label, ReqLabel):
        return f"{label.shared}~<{_roles_text(label.roles)}>({label.session})"
    if isinstance(label, Out):
        return f"{label.session}!<{label.role},{label.peer},{pretty_expr(label.value)}>"
    if isinstance(label, In):
        return f"{label.session}?<{label.role},{label.peer},{pretty_expr(label.value)}>"
    if isinstance(label, BOutName):
        return f"{label.session}!<{label.role},{label.peer},({label.name})>"
    if isinstance(label, BOutSession):
        return f"{label.session}!<{label.role},{label.peer},({pretty_expr(label.endpoint)})>"
    if isinstance(label, Sel):
        return f"{label.session}(+)<{label.role},{label.peer},{label.label}>"
    if isinstance(label, Bra):
        return f"{label.session}&<{label.role},{label.peer},{label.label}>"
    return "tau"


def label_key(label: Label) -> Tuple:
    subject = getattr(label, "session", "") if not isinstance(label, (AccLabel, ReqLabel)) else label.shared
    roles = tuple(sorted(label.roles)) if isinstance(label, (AccLabel, ReqLabel)) else (
        getattr(label, "role", 0), getattr(label, "peer", 0))
    return (_KIND_ORDER[type(label)], subject, roles, show_label(label))


def bound_names(label: Label) -> FrozenSet[str]:
    if isinstance(label, (AccLabel, ReqLabel)):
        return frozenset([label.session])
    if isinstance(label, BOutName):
        return frozenset([label.name])
    if isinstance(label, BOutSession):
        return frozenset([label.endpoint.session])
    return frozenset()


def free_label_names(label: Label) -> FrozenSet[str]:
    if isinstance(label, (AccLabel, ReqLabel)):
        return frozenset([label.shared])
    if isinstance(label, (Out, In)):
        value = label.value
        extra = {value.name} if isinstance(value, Name) else {value.session} if isinstance(value, Endpoint) else set()
        return frozenset({label.session} | extra)
    if isinstance(label, SESSION_LABELS):
        return frozenset([label.session])
    return frozenset()


def dual_labels(l1: Label, l2: Label) -> bool:
    """l1 ≍ l2: output against input (free or bound), selection against branching."""
    for a, b in ((l1, l2), (l2, l1)):
        if not isinstance(b, (In, Bra)) or not isinstance(a, SESSION_LABELS):
            continue
        if (a.session, a.role, a.peer) != (b.session, b.peer, b.role):
            continue
        if isinstance(a, Out) and isinstance(b, In) and a.value == b.value:
            return True
        if isinstance(a, BOutName) and isinstance(b, In) and b.value == Name(a.name):
            return True
        if isinstance(a, BOutSession) and isinstance(b, In) and b.value == a.endpoint:
            return True
        if isinstance(a, Sel) and isinstance(b, Bra) and a.label == b.label:
            return True
    return False


def complete_role_set(roles: Iterable[int], n: int) -> bool:
    roles = set(roles)
    return bool(roles) and max(roles) == n and roles == set(range(1, n + 1))


def fresh_name(prefix: str, avoid: Iterable[str]) -> str:
    """``#<prefix><k>`` for the least k ≥ 1 not in ``avoid``."""
    avoid = set(avoid)
    k = 1
    while f"#{prefix}{k}" in avoid:
        k += 1
    return f"#{prefix}{k}"


# ── Input values ──

class ValueUniverse:
    """The finite set of values a free input may receive."""

    def __init__(self, values: Iterable[Any] = ()):
        self.values = tuple(sorted(set(values), key=pretty_expr))

    def inputs(self, session: str, role: int, peer: int) -> Sequence[Any]:
        return self.values


def default_universe(p) -> ValueUniverse:
    """Both booleans plus the atoms and shared names occurring free in ``p``."""
    names = free_values(p) | (free_names(p) - free_sessions(p))
    return ValueUniverse([TRUE, FALSE] + [Name(n) for n in names])


# ── One-step semantics ──

Move = Tuple[Label, Any]


def _wrap(restrs: List[Tuple[str, Any]], body):
    for name, sort in reversed(restrs):
        body = Hide(name, body, sort)
    return body


def expose(p, unfold_bound: int = DEFAULT_UNFOLD_BOUND):
    """Normal form whose parallel components are no longer recursions."""
    p = normal_form(p)
    for _ in range(unfold_bound + 1):
        restrs, comps = restricted_spine(p)
        if not any(isinstance(c, Rec) for c in comps):
            return p
        comps = [unfold_process(c) if isinstance(c, Rec) else c for c in comps]
        p = normal_form(_wrap(restrs, par_all(comps)))
    raise UnfoldBoundExceeded(f"more than {unfold_bound} unfoldings needed to expose {pretty(p)[:60]}")


def _replace(comps: List[Any], changes: Dict[int, Any]) -> List[Any]:
    return [changes.get(i, c) for i, c in enumerate(comps)]


def _endpoint(channel) -> Optional[Endpoint]:
    return channel if isinstance(channel, Endpoint) else None


def _prefix_moves(comp, universe: ValueUniverse) -> Iterable[Move]:
    if isinstance(comp, If):
        cond = evaluate(comp.cond)
        if isinstance(cond, BoolLit):
            yield TAU, comp.then if cond.value else comp.orelse
        return
    if not isinstance(comp, (Send, Recv, Select, Branch)):
        return
    end = _endpoint(comp.channel)
    if end is None:
        return
    if isinstance(comp, Send):
        value = evaluate(comp.expr)
        if value is not None:
            yield Out(end.session, end.role, comp.peer, value), comp.body
    elif isinstance(comp, Recv):
        for value in universe.inputs(end.session, end.role, comp.peer):
            yield In(end.session, end.role, comp.peer, value), substitute(comp.body, comp.binder, value)
    elif isinstance(comp, Select):
        yield Sel(end.session, end.role, comp.peer, comp.label), comp.body
    else:
        for label, body in comp.branches:
            yield Bra(end.session, end.role, comp.peer, label), body


def _synchronize(left, right) -> Iterable[Tuple[Any, Any]]:
    """Continuations of ``left`` sending to (or selecting at) ``right``."""
    if not isinstance(left, (Send, Select)) or not isinstance(right, (Recv, Branch)):
        return
    src, dst = _endpoint(left.channel), _endpoint(right.channel)
    if src is None or dst is None or src.session != dst.session:
        return
    if left.peer != dst.role or right.peer != src.role:
        return
    if isinstance(left, Send) and isinstance(right, Recv):
        value = evaluate(left.expr)
        if value is not None:
            yield left.body, substitute(right.body, right.binder, value)
    elif isinstance(left, Select) and isinstance(right, Branch):
        arm = right.lookup(left.label)
        if arm is not None:
            yield left.body, arm


def _open_session(comp, session: str):
    return substitute(comp.body, comp.binder, Endpoint(session, comp.role))


def _close(label: Label, comps: List[Any], restrs: List[Tuple[str, Any]], taken: FrozenSet[str]) -> List[Move]:
    """Apply restriction to a component move: pass it through, open a scope, or block it."""
    hidden = {name for name, _ in restrs}
    blocked = free_label_names(label) & hidden
    body = par_all(comps)
    if not blocked:
        return [(label, normal_form(_wrap(restrs, body)))]
    if not isinstance(label, Out) or label.session in hidden:
        return []
    value = label.value
    if isinstance(value, Name) and blocked == {value.name}:
        fresh = fresh_name("a", taken)
        rest = [(n, s) for n, s in restrs if n != value.name]
        opened = BOutName(label.session, label.role, label.peer, fresh)
        return [(opened, normal_form(_wrap(rest, rename_name(body, value.name, fresh))))]
    if isinstance(value, Endpoint) and blocked == {value.session}:
        fresh = fresh_name("s", taken)
        rest = [(n, s) for n, s in restrs if n != value.session]
        opened = BOutSession(label.session, label.role, label.peer, Endpoint(fresh, value.role))
        return [(opened, normal_form(_wrap(rest, rename_name(body, value.session, fresh))))]
    return []


def _initiations(comps: List[Any], restrs: List[Tuple[str, Any]], taken: FrozenSet[str]) -> List[Move]:
    """Accumulated accepts, accumulated requests, and complete initiations as τ."""
    by_name: Dict[str, Tuple[List[Tuple[int, int]], List[Tuple[int, int]]]] = {}
    for i, comp in enumerate(comps):
        if isinstance(comp, (Accept, Request)) and isinstance(comp.shared, Name):
            accepts, requests = by_name.setdefault(comp.shared.name, ([], []))
            (accepts if isinstance(comp, Accept) else requests).append((i, comp.role))

    moves: List[Move] = []
    session = fresh_name("s", taken)
    for name in sorted(by_name):
        accepts, requests = by_name[name]
        for size in range(len(accepts) + 1):
            for subset in itertools.combinations(accepts, size):
                roles = frozenset(r for _, r in subset)
                if len(roles) != len(subset):
                    continue
                opened = {i: _open_session(comps[i], session) for i, _ in subset}
                if subset:
                    moves.extend(_close(AccLabel(name, roles, session), _replace(comps, opened), restrs, taken))
                for j, n in requests:
                    if n in roles:
                        continue
                    union = roles | {n}
                    joined = _replace(comps, {**opened, j: _open_session(comps[j], session)})
                    if complete_role_set(union, n):
                        initiated = _wrap(restrs + [(session, None)], par_all(joined))
                        moves.append((TAU, normal_form(initiated)))
                    else:
                        moves.extend(_close(ReqLabel(name, union, session), joined, restrs, taken))
    return moves


def _unique(moves: Iterable[Move]) -> List[Move]:
    seen = set()
    result = []
    for label, target in sorted(moves, key=lambda m: (label_key(m[0]), pretty(m[1]))):
        if (label, target) not in seen:
            seen.add((label, target))
            result.append((label, target))
    return result


def step(p, universe: Optional[ValueUniverse] = None, avoid: FrozenSet[str] = frozenset(),
         unfold_bound: int = DEFAULT_UNFOLD_BOUND) -> List[Move]:
    """All one-step transitions of ``p``; targets are normal forms.

    Fresh names for opened scopes and initiated sessions avoid the names of
    ``p`` and ``avoid``. Raises UnfoldBoundExceeded when recursion cannot be
    exposed within ``unfold_bound`` unfoldings.
    """
    p = expose(p, unfold_bound)
    if universe is None:
        universe = default_universe(p)
    restrs, comps = restricted_spine(p)
    taken = frozenset(avoid) | free_ids(p) | {name for name, _ in restrs}

    moves: List[Move] = []
    for i, comp in enumerate(comps):
        for label, cont in _prefix_moves(comp, universe):
            moves.extend(_close(label, _replace(comps, {i: cont}), restrs, taken))
    moves.extend(_initiations(comps, restrs, taken))
    for i, j in itertools.permutations(range(len(comps)), 2):
        for left, right in _synchronize(comps[i], comps[j]):
            target = _wrap(restrs, par_all(_replace(comps, {i: left, j: right})))
            moves.append((TAU, normal_form(target)))
    return _unique(moves)


def reduce(p, unfold_bound: int = DEFAULT_UNFOLD_BOUND) -> List[Any]:
    """One-step reducts by ⟨Link⟩ ⟨Comm⟩ ⟨Label⟩ ⟨If⟩ under restriction, as normal forms."""
    p = expose(p, unfold_bound)
    restrs, comps = restricted_spine(p)
    taken = free_ids(p) | {name for name, _ in restrs}
    results = []

    def add(changes: Dict[int, Any], extra: List[Tuple[str, Any]] = ()) -> None:
        results.append(normal_form(_wrap(restrs + list(extra), par_all(_replace(comps, changes)))))

    for j, req in enumerate(comps):
        if not isinstance(req, Request) or not isinstance(req.shared, Name):
            continue
        groups = []
        for role in range(1, req.role):
            groups.append([i for i, c in enumerate(comps)
                           if isinstance(c, Accept) and c.shared == req.shared and c.role == role])
        session = fresh_name("s", taken)
        for chosen in itertools.product(*groups):
            changes = {i: _open_session(comps[i], session) for i in chosen}
            changes[j] = _open_session(req, session)
            add(changes, [(session, None)])
    for i, j in itertools.permutations(range(len(comps)), 2):
        for left, right in _synchronize(comps[i], comps[j]):
            add({i: left, j: right})
    for i, comp in enumerate(comps):
        if isinstance(comp, If):
            cond = evaluate(comp.cond)
            if isinstance(cond, BoolLit):
                add({i: comp.then if cond.value else comp.orelse})
    unique = {pretty(r): r for r in results}
    return [unique[k] for k in sorted(unique)]


# ── Barbs ──

@dataclass(frozen=True)
class Barb:
    """``s[p][q]`` for outputs, or a bare shared name for requests."""

    subject: str
    role: Optional[int] = None
    peer: Optional[int] = None


def show_barb(barb: Barb) -> str:
    if barb.role is None:
        return barb.subject
    return f"{barb.subject}[{barb.role}][{barb.peer}]"


def barbs(gamma, p, delta, unfold_bound: int = DEFAULT_UNFOLD_BOUND) -> FrozenSet[Barb]:
    p = expose(p, unfold_bound)
    restrs, comps = restricted_spine(p)
    hidden = {name for name, _ in restrs}
    found = set()
    for comp in comps:
        if isinstance(comp, Send):
            end = _endpoint(comp.channel)
            if end is not None and end.session not in hidden and Endpoint(end.session, comp.peer) not in delta:
                found.add(Barb(end.session, end.role, comp.peer))
        elif isinstance(comp, Request) and isinstance(comp.shared, Name) and comp.shared.name not in hidden:
            found.add(Barb(comp.shared.name))
    return frozenset(found)


# ── Exploration ──

@dataclass
class LtsGraph:
    states: Dict[int, Any]
    transitions: List[Tuple[int, Label, int]]
    initial: int = 0
    truncated: bool = False
    _index: Dict[int, List[Tuple[Label, int]]] = field(default=None, repr=False, compare=False)

    def successors(self, sid: int) -> List[Tuple[Label, int]]:
        if self._index is None:
            self._index = {s: [] for s in self.states}
            for src, label, dst in self.transitions:
                self._index[src].append((label, dst))
        return self._index.get(sid, [])

    def digraph(self) -> nx.MultiDiGraph:
        graph = nx.MultiDiGraph()
        for sid, state in self.states.items():
            graph.add_node(sid, state=state)
        for src, label, dst in self.transitions:
            graph.add_edge(src, dst, key=show_label(label), label=label)
        return graph


def explore_from(initial: Hashable, successors: Callable[[Any], Iterable[Tuple[Label, Any]]],
                 max_states: int = DEFAULT_MAX_STATES, key: Callable[[Any], Hashable] = lambda s: s) -> LtsGraph:
    """Breadth-first closure of ``successors`` from ``initial`` with at most ``max_states`` states."""
    ids: Dict[Hashable, int] = {key(initial): 0}
    states: Dict[int, Any] = {0: initial}
    transitions: List[Tuple[int, Label, int]] = []
    truncated = False
    queue = deque([initial])
    while queue:
        state = queue.popleft()
        src = ids[key(state)]
        try:
            moves = list(successors(state))
        except UnfoldBoundExceeded as exc:
            log.info("exploration cut at state %d: %s", src, exc)
            truncated = True
            continue
        for label, target in moves:
            k = key(target)
            if k not in ids:
                if len(states) >= max_states:
                    truncated = True
                    continue
                ids[k] = len(states)
                states[ids[k]] = target
                queue.append(target)
            transitions.append((src, label, ids[k]))
    log.info("explored %d states, %d transitions%s", len(states), len(transitions),
             " (truncated)" if truncated else "")
    return LtsGraph(states, transitions, 0, truncated)


def explore(p, max_states: int = DEFAULT_MAX_STATES, unfold_bound: int = DEFAULT_UNFOLD_BOUND,
            universe: Optional[ValueUniverse] = None) -> LtsGraph:
    start = normal_form(p)
    universe = universe or default_universe(start)
    return explore_from(start, lambda q: step(q, universe, unfold_bound=unfold_bound), max_states)
