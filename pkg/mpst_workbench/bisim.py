"""Typed and governed transitions, weak closure, and bisimulation deciders."""

import logging
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, FrozenSet, Hashable, Iterable, List, Optional, Set, Tuple

import networkx as nx

from .config import DEFAULT_MAX_STATES, DEFAULT_UNFOLD_BOUND
from .environments import GlobalEnv, SessionEnv, SharedEnv
from .errors import NotGoverned, TypingError, UnfoldBoundExceeded
from .genv import EnvConfig, config_step, env_steps, genv_join, is_env_config
from .lts import (
    TAU,
    Label,
    LtsGraph,
    Tau,
    ValueUniverse,
    explore_from,
    fresh_name,
    label_key,
    show_label,
    step,
)
from .session_types import BoolSort, GlobalSort, LRecv, exchanges_equal, is_sort, roles_local, unfold_head
from .syntax import FALSE, TRUE, Endpoint, Name, free_ids, normal_form, pretty
from .typecheck import check, delta_converges

log = logging.getLogger(__name__)

BISIMILAR = "bisimilar"
NOT_BISIMILAR = "not-bisimilar"
INCONCLUSIVE = "inconclusive"


# ── States ──

@dataclass(frozen=True)
class TypedState:
    gamma: SharedEnv
    process: Any
    delta: SessionEnv

    def show(self) -> str:
        return f"{pretty(self.process)} ▷ {self.delta.show()}"


@dataclass(frozen=True)
class GovState:
    genv: GlobalEnv
    state: TypedState

    def show(self) -> str:
        return f"{self.genv.show()} ; {self.state.show()}"


def typed_state(gamma: SharedEnv, p, delta: SessionEnv) -> TypedState:
    return TypedState(gamma, normal_form(p), delta)


def state_names(s: TypedState) -> FrozenSet[str]:
    return free_ids(s.process) | frozenset(s.gamma) | s.delta.sessions()


def pair_avoid(s1: TypedState, s2: TypedState) -> FrozenSet[str]:
    """Names fresh-name allocation must avoid when the two states are compared."""
    return state_names(s1) | state_names(s2)


class TypedUniverse(ValueUniverse):
    """Inputs licensed by Δ: values of the expected sort from Γ, plus one fresh name or endpoint."""

    def __init__(self, gamma: SharedEnv, delta: SessionEnv, avoid: FrozenSet[str]):
        super().__init__()
        self.gamma = gamma
        self.delta = delta
        self.avoid = avoid

    def inputs(self, session: str, role: int, peer: int):
        t = self.delta.get(Endpoint(session, role))
        t = unfold_head(t) if t is not None else None
        if not isinstance(t, LRecv) or t.peer != peer:
            return ()
        expected = t.exchange
        if isinstance(expected, BoolSort):
            return (TRUE, FALSE)
        if not is_sort(expected):
            # the session is fresh, so only the peers of the carried type constrain the role
            peers = roles_local(expected)
            role = next(r for r in range(1, len(peers) + 2) if r not in peers)
            return (Endpoint(fresh_name("s", self.avoid), role),)
        found = [Name(n) for n, u in sorted(self.gamma.items()) if isinstance(n, str) and exchanges_equal(u, expected)]
        if isinstance(expected, GlobalSort):
            found.append(Name(fresh_name("a", self.avoid)))
        return tuple(found)


# ── Transitions ──

@lru_cache(maxsize=200000)
def typed_step(s: TypedState, avoid: FrozenSet[str] = frozenset(), unfold_bound: int = DEFAULT_UNFOLD_BOUND,
               sessions: Optional[GlobalEnv] = None) -> Tuple[Tuple[Label, TypedState], ...]:
    """Γ ⊢ P ▷ Δ →ℓ Γ′ ⊢ P′ ▷ Δ′: a process move the environment allows, re-typed."""
    avoid = avoid | state_names(s)
    universe = TypedUniverse(s.gamma, s.delta, avoid)
    result: List[Tuple[Label, TypedState]] = []
    for label, target in step(s.process, universe, avoid, unfold_bound):
        for gamma, delta in env_steps(s.gamma, s.delta, label, sessions):
            if check(gamma, target, delta):
                move = (label, TypedState(gamma, target, delta))
                if move not in result:
                    result.append(move)
    return tuple(result)


@lru_cache(maxsize=200000)
def gov_step(s: GovState, avoid: FrozenSet[str] = frozenset(), unfold_bound: int = DEFAULT_UNFOLD_BOUND,
             sessions: Optional[GlobalEnv] = None) -> Tuple[Tuple[Label, GovState], ...]:
    """Typed moves whose environment change the configuration LTS of E also allows."""
    avoid = avoid | frozenset(s.genv)
    result: List[Tuple[Label, GovState]] = []
    config = EnvConfig(s.genv, s.state.gamma, s.state.delta)
    for label, target in typed_step(s.state, avoid, unfold_bound, sessions):
        for successor in config_step(config, label, sessions, unfold_bound):
            if successor.gamma == target.gamma and successor.delta == target.delta:
                move = (label, GovState(successor.genv, target))
                if move not in result:
                    result.append(move)
    return tuple(result)


class _Truncated(Exception):
    pass


def _tau_closure(starts: Iterable[Any], moves: Callable[[Any], Iterable[Tuple[Label, Any]]],
                 limit: int) -> List[Any]:
    seen: List[Any] = []
    index: Set[Any] = set()
    queue = deque()
    for s in starts:
        if s not in index:
            index.add(s)
            seen.append(s)
            queue.append(s)
    while queue:
        for label, nxt in moves(queue.popleft()):
            if isinstance(label, Tau) and nxt not in index:
                if len(index) >= limit:
                    raise _Truncated(f"τ-closure exceeds {limit} states")
                index.add(nxt)
                seen.append(nxt)
                queue.append(nxt)
    return seen


def weak_moves(start: Any, label: Label, moves: Callable[[Any], Iterable[Tuple[Label, Any]]],
               limit: int = DEFAULT_MAX_STATES) -> List[Any]:
    """States reachable by ⇒ℓ̂: τ* when ℓ is τ, otherwise τ* ℓ τ*."""
    before = _tau_closure([start], moves, limit)
    if isinstance(label, Tau):
        return before
    middle = [nxt for s in before for l, nxt in moves(s) if l == label]
    return _tau_closure(middle, moves, limit)


def weak_closure(graph: LtsGraph) -> LtsGraph:
    """Saturate ``graph``: an ℓ edge from s to t whenever s ⇒ℓ̂ t."""
    taus = nx.DiGraph()
    taus.add_nodes_from(graph.states)
    taus.add_edges_from((src, dst) for src, label, dst in graph.transitions if isinstance(label, Tau))
    reach = {s: {s} | nx.descendants(taus, s) for s in graph.states}

    edges = set()
    for s in graph.states:
        for t in reach[s]:
            edges.add((s, TAU, t))
            for label, u in graph.successors(t):
                if isinstance(label, Tau):
                    continue
                for w in reach[u]:
                    edges.add((s, label, w))
    transitions = sorted(edges, key=lambda e: (e[0], label_key(e[1]), e[2]))
    return LtsGraph(dict(graph.states), transitions, graph.initial, graph.truncated)


def explore_typed(s: TypedState, max_states: int = DEFAULT_MAX_STATES, unfold_bound: int = DEFAULT_UNFOLD_BOUND,
                  sessions: Optional[GlobalEnv] = None) -> LtsGraph:
    return explore_from(s, lambda x: typed_step(x, frozenset(), unfold_bound, sessions), max_states)


def explore_governed(s: GovState, max_states: int = DEFAULT_MAX_STATES, unfold_bound: int = DEFAULT_UNFOLD_BOUND,
                     sessions: Optional[GlobalEnv] = None) -> LtsGraph:
    return explore_from(s, lambda x: gov_step(x, frozenset(), unfold_bound, sessions), max_states)


# ── Pair game ──

@dataclass
class BisimVerdict:
    verdict: str
    relation: List[Tuple[Any, ...]] = field(default_factory=list)
    trace: List[Label] = field(default_factory=list)
    failing_side: Optional[int] = None
    delta_converges: Optional[bool] = None
    explored_pairs: int = 0

    @property
    def related(self) -> bool:
        return self.verdict == BISIMILAR

    def show_trace(self) -> List[str]:
        return [show_label(label) for label in self.trace]


# (challenger side, label, answering pairs)
Challenge = Tuple[int, Label, Tuple[Hashable, ...]]


def _solve(initial: Hashable, challenges: Callable[[Hashable], List[Challenge]], max_states: int) -> BisimVerdict:
    """Explore the pair graph from ``initial`` and keep the greatest set of pairs closed under answering."""
    table: Dict[Hashable, List[Challenge]] = {}
    order = [initial]
    known = {initial}
    queue = deque([initial])
    try:
        while queue:
            node = queue.popleft()
            table[node] = challenges(node)
            for _, _, answers in table[node]:
                for nxt in answers:
                    if nxt not in known:
                        if len(known) >= max_states:
                            raise _Truncated(f"more than {max_states} pairs")
                        known.add(nxt)
                        order.append(nxt)
                        queue.append(nxt)
    except (_Truncated, UnfoldBoundExceeded) as exc:
        log.info("bisimulation check inconclusive: %s", exc)
        return BisimVerdict(INCONCLUSIVE, explored_pairs=len(known))

    alive_answers: Dict[Tuple[Hashable, int], int] = {}
    waiting: Dict[Hashable, List[Tuple[Hashable, int]]] = {}
    for node, chs in table.items():
        for i, (_, _, answers) in enumerate(chs):
            alive_answers[(node, i)] = len(answers)
            for nxt in answers:
                waiting.setdefault(nxt, []).append((node, i))

    removed: Dict[Hashable, Tuple[int, int]] = {}  # node -> (removal index, killing challenge)
    worklist = deque()

    def remove(node: Hashable, challenge: int) -> None:
        if node not in removed:
            removed[node] = (len(removed), challenge)
            worklist.append(node)

    for node in order:
        for i, (_, _, answers) in enumerate(table[node]):
            if not answers:
                remove(node, i)
                break
    while worklist:
        dead = worklist.popleft()
        for owner, i in waiting.get(dead, ()):
            alive_answers[(owner, i)] -= 1
            if alive_answers[(owner, i)] == 0:
                remove(owner, i)

    log.info("pair game: %d pairs explored, %d removed", len(order), len(removed))
    if initial not in removed:
        relation = [node for node in order if node not in removed]
        return BisimVerdict(BISIMILAR, relation=relation, explored_pairs=len(order))

    trace: List[Label] = []
    node = initial
    side = None
    while node in removed:
        side, label, answers = table[node][removed[node][1]]
        trace.append(label)
        if not answers:
            break
        node = min(answers, key=lambda a: removed[a][0])
    return BisimVerdict(NOT_BISIMILAR, trace=trace, failing_side=3 - side, explored_pairs=len(order))


def _standard_challenges(unfold_bound: int, limit: int, sessions: Optional[GlobalEnv]):
    def challenges(node: Tuple[TypedState, TypedState]) -> List[Challenge]:
        s1, s2 = node
        avoid = pair_avoid(s1, s2)

        def moves(s):
            return typed_step(s, avoid, unfold_bound, sessions)

        found: List[Challenge] = []
        for side, mine, other in ((1, s1, s2), (2, s2, s1)):
            for label, nxt in moves(mine):
                answers = weak_moves(other, label, moves, limit)
                pairs = tuple((nxt, a) if side == 1 else (a, nxt) for a in answers)
                found.append((side, label, pairs))
        return found

    return challenges


def _governed_challenges(unfold_bound: int, limit: int, sessions: Optional[GlobalEnv]):
    def challenges(node: Tuple[GlobalEnv, TypedState, TypedState]) -> List[Challenge]:
        genv, t1, t2 = node
        avoid = pair_avoid(t1, t2) | frozenset(genv)

        def moves(s):
            return gov_step(s, avoid, unfold_bound, sessions)

        found: List[Challenge] = []
        for side, mine, other in ((1, t1, t2), (2, t2, t1)):
            for label, nxt in moves(GovState(genv, mine)):
                pairs = []
                for answer in weak_moves(GovState(genv, other), label, moves, limit):
                    first, second = (nxt, answer) if side == 1 else (answer, nxt)
                    joined = genv_join(first.genv, second.genv)
                    if joined is not None and (joined, first.state, second.state) not in pairs:
                        pairs.append((joined, first.state, second.state))
                found.append((side, label, tuple(pairs)))
        return found

    return challenges


def _require_typed(s: TypedState, which: str) -> None:
    if not check(s.gamma, s.process, s.delta):
        raise TypingError("Bisim", f"{which} is not typed by {s.delta.show()}", pretty(s.process))


def bisim_standard(gamma: SharedEnv, p1, d1: SessionEnv, p2, d2: SessionEnv,
                   max_states: int = DEFAULT_MAX_STATES, unfold_bound: int = DEFAULT_UNFOLD_BOUND,
                   sessions: Optional[GlobalEnv] = None) -> BisimVerdict:
    """Decide Γ ⊢ P1 ▷ Δ1 ≈s P2 ▷ Δ2 on the finite pair graph."""
    s1, s2 = typed_state(gamma, p1, d1), typed_state(gamma, p2, d2)
    _require_typed(s1, "left process")
    _require_typed(s2, "right process")
    verdict = _solve((s1, s2), _standard_challenges(unfold_bound, max_states, sessions), max_states)
    verdict.delta_converges = delta_converges(d1, d2)
    if verdict.related and not verdict.delta_converges:
        log.warning("bisimilar processes with non-converging environments %s and %s", d1.show(), d2.show())
    return verdict


def bisim_governed(genv: GlobalEnv, gamma: SharedEnv, p1, d1: SessionEnv, p2, d2: SessionEnv,
                   max_states: int = DEFAULT_MAX_STATES, unfold_bound: int = DEFAULT_UNFOLD_BOUND,
                   sessions: Optional[GlobalEnv] = None) -> BisimVerdict:
    """Decide E, Γ ⊢ P1 ▷ Δ1 ≈gs P2 ▷ Δ2 on the finite pair graph."""
    s1, s2 = typed_state(gamma, p1, d1), typed_state(gamma, p2, d2)
    _require_typed(s1, "left process")
    _require_typed(s2, "right process")
    for s, which in ((s1, "left"), (s2, "right")):
        if not is_env_config(EnvConfig(genv, gamma, s.delta)):
            raise NotGoverned(f"{which} environment {s.delta.show()} is not covered by any reduct of {genv.show()}")
    verdict = _solve((genv, s1, s2), _governed_challenges(unfold_bound, max_states, sessions), max_states)
    verdict.delta_converges = delta_converges(d1, d2)
    return verdict


def check_relation(pairs: Iterable[Tuple[Any, ...]], kind: str = "standard",
                   max_states: int = DEFAULT_MAX_STATES, unfold_bound: int = DEFAULT_UNFOLD_BOUND,
                   sessions: Optional[GlobalEnv] = None) -> bool:
    """Whether every challenge from a claimed pair is answered inside the claimed relation."""
    claimed = set(pairs)
    make = _standard_challenges if kind == "standard" else _governed_challenges
    challenges = make(unfold_bound, max_states, sessions)
    for node in claimed:
        for side, label, answers in challenges(node):
            if not any(a in claimed for a in answers):
                log.debug("pair %r fails on %s challenge %s", node, side, show_label(label))
                return False
    return True
