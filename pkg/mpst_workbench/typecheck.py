"""Typing system for processes and session-environment reduction."""

import itertools
import logging
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Dict, FrozenSet, Iterator, List, Optional, Set, Tuple

from .config import DEFAULT_TYPE_UNFOLD_BOUND
from .environments import SessionEnv, SharedEnv, show_key
from .errors import ProjectionUndefined, TypingError
from .session_types import (
    BOOL,
    L_END,
    AtomSort,
    GlobalSort,
    LBranch,
    LEnd,
    LRec,
    LRecv,
    LSelect,
    LSend,
    LVar,
    canonical,
    exchanges_equal,
    is_end,
    is_sort,
    project_global,
    roles_global,
    show_exchange,
    sorted_branches,
    types_equal,
    unfold,
    unfold_head,
)
from .syntax import (
    Accept,
    And,
    BoolLit,
    Branch,
    Endpoint,
    Hide,
    If,
    Inact,
    Name,
    NameEq,
    Par,
    ProcVar,
    Rec,
    Recv,
    Request,
    Select,
    Send,
    Var,
    children,
    free_sessions,
    pretty,
    pretty_expr,
)

log = logging.getLogger(__name__)

UNKNOWN_SORT = AtomSort("_")

_PREFIX_NODES = (Request, Accept, Send, Recv, Select, Branch)


@dataclass(frozen=True)
class Hole:
    """Unification variable standing for a sort or a local type."""

    ident: int


@dataclass
class Verdict:
    ok: bool
    delta: Optional[SessionEnv] = None
    rule: str = ""
    location: str = ""
    message: str = ""


class _Stuck(Exception):
    """The obligation needs a type that is not known yet."""


def _where(p) -> str:
    text = pretty(p)
    return text if len(text) <= 60 else text[:57] + "..."


def _without(env: Dict[str, Any], name: str) -> Dict[str, Any]:
    return {k: v for k, v in env.items() if k != name}


def _free_channels(p, chans: FrozenSet[str], bound: FrozenSet[str] = frozenset()) -> Set[Any]:
    """Endpoints and session variables used free in ``p``."""
    found: Set[Any] = set()

    def note(e) -> None:
        if isinstance(e, Endpoint) and e.session not in bound:
            found.add(e)
        elif isinstance(e, Var) and e.name in chans and e.name not in bound:
            found.add(e)

    if isinstance(p, (Send, Recv, Select, Branch)):
        note(p.channel)
    if isinstance(p, Send):
        note(p.expr)
    inner = bound
    if isinstance(p, (Request, Accept, Recv)):
        inner = bound | {p.binder}
    elif isinstance(p, Hide):
        inner = bound | {p.name}
    for child in children(p):
        found |= _free_channels(child, chans, inner)
    return found


def _used_as_channel(p, name: str) -> bool:
    if isinstance(p, (Send, Recv, Select, Branch)) and p.channel == Var(name):
        return True
    if isinstance(p, (Request, Accept, Recv)) and p.binder == name:
        return False
    return any(_used_as_channel(c, name) for c in children(p))


class _Inference:
    """One bottom-up derivation; holes are solved by unification as rules are applied."""

    def __init__(self):
        self.bindings: Dict[int, Any] = {}
        self.selects: Dict[int, Tuple[int, Dict[str, Any]]] = {}
        self.obligations: List[Tuple[str, str, Callable[[], None]]] = []
        self._counter = itertools.count()

    def fresh(self) -> Hole:
        return Hole(next(self._counter))

    def resolve(self, t):
        while isinstance(t, Hole) and t.ident in self.bindings:
            t = self.bindings[t.ident]
        return t

    # ── unification ──

    def unify(self, a, b, rule: str, where: str) -> None:
        if not self._unify(a, b, set()):
            raise TypingError(rule, f"{self.show(a)} does not match {self.show(b)}", where)

    def _unify(self, a, b, seen: Set) -> bool:
        a, b = self.resolve(a), self.resolve(b)
        if a == b or (a, b) in seen:
            return True
        seen.add((a, b))
        if isinstance(a, Hole):
            return self._bind(a, b, seen)
        if isinstance(b, Hole):
            return self._bind(b, a, seen)
        if isinstance(a, LRec) or isinstance(b, LRec):
            return self._unify(unfold(a), unfold(b), seen)
        if is_sort(a) or is_sort(b):
            if isinstance(a, GlobalSort) and isinstance(b, GlobalSort):
                return types_equal(a.g, b.g) is True
            return a == b
        if type(a) is not type(b):
            return False
        if isinstance(a, (LSend, LRecv)):
            return (a.peer == b.peer and self._unify(a.exchange, b.exchange, seen)
                    and self._unify(a.cont, b.cont, seen))
        if isinstance(a, (LSelect, LBranch)):
            if a.peer != b.peer or [l for l, _ in a.branches] != [l for l, _ in b.branches]:
                return False
            return all(self._unify(x, y, seen) for (_, x), (_, y) in zip(a.branches, b.branches))
        if isinstance(a, LVar):
            return a.name == b.name
        return isinstance(a, LEnd)

    def _bind(self, hole: Hole, t, seen: Set) -> bool:
        constraint = self.selects.pop(hole.ident, None)
        self.bindings[hole.ident] = t
        if constraint is None:
            return True
        peer, arms = constraint
        if isinstance(t, Hole):
            other = self.selects.get(t.ident)
            if other is None:
                self.selects[t.ident] = constraint
                return True
            if other[0] != peer:
                return False
            merged = dict(other[1])
            for label, cont in arms.items():
                if label in merged and not self._unify(merged[label], cont, seen):
                    return False
                merged.setdefault(label, cont)
            self.selects[t.ident] = (peer, merged)
            return True
        head = self._head(t)
        if not isinstance(head, LSelect) or head.peer != peer:
            return False
        offered = dict(head.branches)
        return all(label in offered and self._unify(cont, offered[label], seen)
                   for label, cont in arms.items())

    def _head(self, t):
        for _ in range(DEFAULT_TYPE_UNFOLD_BOUND):
            t = self.resolve(t)
            if not isinstance(t, LRec):
                return t
            t = unfold(t)
        return self.resolve(t)

    # ── reading solutions back ──

    def zonk(self, t):
        return self._zonk(t, {}, set())

    def _zonk(self, t, active: Dict[int, str], recursive: Set[int]):
        chain: List[int] = []
        while isinstance(t, Hole):
            if t.ident in active:
                recursive.add(t.ident)
                return LVar(active[t.ident])
            chain.append(t.ident)
            if t.ident not in self.bindings:
                break
            t = self.bindings[t.ident]
        if not chain:
            return self._zonk_node(t, active, recursive)
        var = f"t{chain[0]}"
        inner = {**active, **{ident: var for ident in chain}}
        if isinstance(t, Hole):
            if t.ident not in self.selects:
                return t
            peer, arms = self.selects[t.ident]
            body = LSelect(peer, sorted_branches(
                (label, self._zonk(cont, inner, recursive)) for label, cont in arms.items()))
        else:
            body = self._zonk_node(t, inner, recursive)
        if recursive & set(chain):
            return LRec(var, body)
        return body

    def _zonk_node(self, t, active, recursive):
        if isinstance(t, (LSend, LRecv)):
            return type(t)(t.peer, self._zonk(t.exchange, active, recursive),
                           self._zonk(t.cont, active, recursive))
        if isinstance(t, (LSelect, LBranch)):
            return type(t)(t.peer, tuple((label, self._zonk(body, active, recursive))
                                         for label, body in t.branches))
        if isinstance(t, LRec):
            return LRec(t.var, self._zonk(t.body, active, recursive))
        return t

    def close(self, t, exchange: bool = False):
        """Zonk and fill what is still unknown: ``_`` for sorts, an error for session types."""
        return self._fill(self.zonk(t), exchange)

    def _fill(self, t, exchange: bool):
        if isinstance(t, Hole):
            if exchange:
                return UNKNOWN_SORT
            raise TypingError("Deleg", "cannot determine the type of a delegated channel")
        if isinstance(t, (LSend, LRecv)):
            return type(t)(t.peer, self._fill(t.exchange, True), self._fill(t.cont, False))
        if isinstance(t, (LSelect, LBranch)):
            return type(t)(t.peer, tuple((label, self._fill(body, False)) for label, body in t.branches))
        if isinstance(t, LRec):
            return LRec(t.var, self._fill(t.body, False))
        return t

    def show(self, t) -> str:
        return show_exchange(self.zonk(t))

    # ── deferred side conditions ──

    def defer(self, rule: str, where: str, action: Callable[[], None]) -> None:
        try:
            action()
        except _Stuck:
            self.obligations.append((rule, where, action))

    def discharge(self) -> None:
        pending = self.obligations
        while pending:
            remaining = []
            for rule, where, action in pending:
                try:
                    action()
                except _Stuck:
                    remaining.append((rule, where, action))
            if len(remaining) == len(pending):
                rule, where, _ = remaining[0]
                raise TypingError(rule, "could not determine the types involved", where)
            pending = remaining
        self.obligations = []

    # ── expressions ──

    def expr_sort(self, e, env: Dict[str, Any], chans: FrozenSet[str], where: str):
        if isinstance(e, BoolLit):
            return BOOL
        if isinstance(e, And):
            for side in (e.left, e.right):
                self.unify(self.expr_sort(side, env, chans, where), BOOL, "And", where)
            return BOOL
        if isinstance(e, NameEq):
            ends = [isinstance(side, Endpoint) for side in (e.left, e.right)]
            if any(ends):
                if not all(ends):
                    raise TypingError("Match", "compares an endpoint with a value", where)
                return BOOL
            left = self.expr_sort(e.left, env, chans, where)
            self.unify(left, self.expr_sort(e.right, env, chans, where), "Match", where)
            return BOOL
        if isinstance(e, (Name, Var)):
            if e.name in env:
                return env[e.name]
            if e.name in chans:
                raise TypingError("Name", f"session channel {e.name} used as a value", where)
            raise TypingError("Name", f"unbound identifier {e.name}", where)
        raise TypingError("Name", f"endpoint {pretty_expr(e)} used as a value", where)

    def _channel(self, c, chans: FrozenSet[str], where: str):
        if isinstance(c, Endpoint):
            return c
        if isinstance(c, Var) and c.name in chans:
            return c
        raise TypingError("Var", f"{pretty_expr(c)} is not a session channel", where)

    # ── processes ──

    def process(self, p, env: Dict[str, Any], chans: FrozenSet[str], recs: Dict[str, Dict]) -> Dict[Any, Any]:
        where = _where(p)
        if isinstance(p, Inact):
            return {}
        if isinstance(p, ProcVar):
            if p.name not in recs:
                raise TypingError("Var", f"unbound process variable {p.name}", where)
            return dict(recs[p.name])
        if isinstance(p, Rec):
            holes = {key: self.fresh() for key in _free_channels(p.body, chans)}
            body = self.process(p.body, env, chans, {**recs, p.var: holes})
            for key, hole in holes.items():
                self.unify(hole, body.get(key, L_END), "Rec", where)
            return body
        if isinstance(p, (Request, Accept)):
            body = self.process(p.body, _without(env, p.binder), chans | {p.binder}, recs)
            own = body.pop(Var(p.binder), L_END)
            self._session_init(p, env, chans, own, where)
            return body
        if isinstance(p, Send):
            return self._send(p, env, chans, recs, where)
        if isinstance(p, Recv):
            key = self._channel(p.channel, chans, where)
            if _used_as_channel(p.body, p.binder):
                body = self.process(p.body, _without(env, p.binder), chans | {p.binder}, recs)
                exchange = body.pop(Var(p.binder), L_END)
            else:
                exchange = self.fresh()
                body = self.process(p.body, {**env, p.binder: exchange}, chans - {p.binder}, recs)
            body[key] = LRecv(p.peer, exchange, body.get(key, L_END))
            return body
        if isinstance(p, Select):
            key = self._channel(p.channel, chans, where)
            body = self.process(p.body, env, chans, recs)
            hole = self.fresh()
            self.selects[hole.ident] = (p.peer, {p.label: body.get(key, L_END)})
            body[key] = hole
            return body
        if isinstance(p, Branch):
            key = self._channel(p.channel, chans, where)
            results = [(label, self.process(b, env, chans, recs)) for label, b in p.branches]
            arms = [(label, r.pop(key, L_END)) for label, r in results]
            merged = self._agree([r for _, r in results], "Bra", where)
            merged[key] = LBranch(p.peer, sorted_branches(arms))
            return merged
        if isinstance(p, If):
            self.unify(self.expr_sort(p.cond, env, chans, where), BOOL, "If", where)
            branches = [self.process(p.then, env, chans, recs), self.process(p.orelse, env, chans, recs)]
            return self._agree(branches, "If", where)
        if isinstance(p, Par):
            left = self.process(p.left, env, chans, recs)
            right = self.process(p.right, env, chans, recs)
            for key in set(left) & set(right):
                if self._ends(left[key]):
                    del left[key]
                elif self._ends(right[key]):
                    del right[key]
                else:
                    raise TypingError("Conc", f"{show_key(key)} is used on both sides of '|'", where)
            left.update(right)
            return left
        if isinstance(p, Hide):
            if p.name in free_sessions(p.body):
                body = self.process(p.body, _without(env, p.name), chans, recs)
                entries = {k: body.pop(k) for k in list(body)
                           if isinstance(k, Endpoint) and k.session == p.name}
                self.defer("SRes", where, lambda: self._coherent(p.name, entries, where))
                return body
            sort = p.sort if p.sort is not None else self.fresh()
            return self.process(p.body, {**env, p.name: sort}, chans, recs)
        raise TypingError("Inact", f"unknown process form {p!r}", where)

    def _send(self, p: Send, env, chans, recs, where):
        key = self._channel(p.channel, chans, where)
        body = self.process(p.body, env, chans, recs)
        delegated = None
        if isinstance(p.expr, Endpoint) or (isinstance(p.expr, Var) and p.expr.name in chans):
            delegated = p.expr
        if delegated is None:
            exchange = self.expr_sort(p.expr, env, chans, where)
        else:
            if delegated == key:
                raise TypingError("Deleg", f"{show_key(key)} is sent over itself", where)
            if delegated in body:
                raise TypingError("Deleg", f"delegated channel {show_key(delegated)} is used after being sent", where)
            exchange = self.fresh()
            body[delegated] = exchange
        body[key] = LSend(p.peer, exchange, body.get(key, L_END))
        return body

    def _session_init(self, p, env, chans, own, where) -> None:
        rule = "MReq" if isinstance(p, Request) else "MAcc"
        subject = p.shared
        if subject.name not in env:
            raise TypingError(rule, f"unbound shared name {subject.name}", where)
        declared = env[subject.name]

        def discharge() -> None:
            sort = self.resolve(declared)
            if isinstance(sort, Hole):
                raise _Stuck()
            if not isinstance(sort, GlobalSort):
                raise TypingError(rule, f"{subject.name} is not a shared name", where)
            roles = roles_global(sort.g)
            if not roles:
                raise TypingError(rule, f"{subject.name} carries a protocol without roles", where)
            top = max(roles)
            if isinstance(p, Request) and p.role != top:
                raise TypingError("MReq", f"request role {p.role} is not the maximum role {top}", where)
            if isinstance(p, Accept) and not 1 <= p.role < top:
                raise TypingError("MAcc", f"accept role {p.role} is outside 1..{top - 1}", where)
            try:
                expected = project_global(sort.g, p.role)
            except ProjectionUndefined as exc:
                raise TypingError(rule, str(exc), where)
            self.unify(own, expected, rule, where)

        self.defer(rule, where, discharge)

    def _agree(self, envs: List[Dict], rule: str, where: str) -> Dict:
        merged: Dict[Any, Any] = {}
        for key in set().union(*envs):
            first = envs[0].get(key, L_END)
            for other in envs[1:]:
                self.unify(first, other.get(key, L_END), rule, f"{show_key(key)} in {where}")
            merged[key] = next(e[key] for e in envs if key in e)
        return merged

    def _ends(self, t) -> bool:
        return isinstance(self._head(t), LEnd)

    # ── coherence of a restricted session ──

    def _roles(self, t, seen: Set[int]) -> Set[int]:
        while isinstance(t, Hole) and t.ident in self.bindings:
            if t.ident in seen:
                return set()
            seen.add(t.ident)
            t = self.bindings[t.ident]
        if isinstance(t, Hole):
            if t.ident not in self.selects:
                raise _Stuck()
            if t.ident in seen:
                return set()
            seen.add(t.ident)
            peer, arms = self.selects[t.ident]
            result = {peer}
            for cont in arms.values():
                result |= self._roles(cont, seen)
            return result
        if isinstance(t, (LSend, LRecv)):
            return {t.peer} | self._roles(t.cont, seen)
        if isinstance(t, (LSelect, LBranch)):
            result = {t.peer}
            for _, body in t.branches:
                result |= self._roles(body, seen)
            return result
        if isinstance(t, LRec):
            return self._roles(t.body, seen)
        return set()

    def _coherent(self, session: str, entries: Dict[Endpoint, Any], where: str) -> None:
        present = {k.role for k in entries}
        for key, t in entries.items():
            missing = self._roles(t, set()) - present
            if missing:
                raise TypingError("SRes", f"session {session} lacks roles {sorted(missing)}", where)
        ordered = sorted(entries.items(), key=lambda kv: kv[0].role)
        for (k1, t1), (k2, t2) in itertools.combinations(ordered, 2):
            self._co(t1, k1.role, t2, k2.role, set(), where)

    def _peer_conts(self, t, q: int) -> Optional[List[Any]]:
        """Continuations of ``t`` when its head talks to someone other than ``q``."""
        if isinstance(t, Hole) and t.ident in self.selects:
            peer, arms = self.selects[t.ident]
            return list(arms.values()) if peer != q else None
        if isinstance(t, (LSend, LRecv)) and t.peer != q:
            return [t.cont]
        if isinstance(t, (LSelect, LBranch)) and t.peer != q:
            return [body for _, body in t.branches]
        return None

    def _co(self, a, p: int, b, q: int, seen: Set, where: str) -> None:
        a, b = self._head(a), self._head(b)
        if (a, b) in seen:
            return
        seen.add((a, b))
        skipped = self._peer_conts(a, q)
        if skipped is not None:
            for cont in skipped:
                self._co(cont, p, b, q, seen, where)
            return
        skipped = self._peer_conts(b, p)
        if skipped is not None:
            for cont in skipped:
                self._co(a, p, cont, q, seen, where)
            return
        for x in (a, b):
            if isinstance(x, Hole) and x.ident not in self.selects:
                raise _Stuck()
        if not (self._dual_heads(a, p, b, q, seen, where) or self._dual_heads(b, q, a, p, seen, where)):
            raise TypingError("SRes", f"roles {p} and {q} disagree: {self.show(a)} vs {self.show(b)}", where)

    def _dual_heads(self, a, p: int, b, q: int, seen: Set, where: str) -> bool:
        if isinstance(a, LEnd) and isinstance(b, LEnd):
            return True
        if isinstance(a, LSend) and isinstance(b, LRecv):
            self.unify(a.exchange, b.exchange, "SRes", where)
            self._co(a.cont, p, b.cont, q, seen, where)
            return True
        if isinstance(a, LSelect) and isinstance(b, LBranch):
            if [l for l, _ in a.branches] != [l for l, _ in b.branches]:
                return False
            for (_, x), (_, y) in zip(a.branches, b.branches):
                self._co(x, p, y, q, seen, where)
            return True
        if isinstance(a, Hole) and isinstance(b, LBranch):
            # unchosen labels of a partially known selection are left open
            _, arms = self.selects[a.ident]
            offered = dict(b.branches)
            if not set(arms) <= set(offered):
                return False
            for label, cont in arms.items():
                self._co(cont, p, offered[label], q, seen, where)
            return True
        return False


# ── public API ──

def typecheck_expr(gamma: SharedEnv, e) -> Any:
    inference = _Inference()
    sort = inference.expr_sort(e, dict(gamma), frozenset(), pretty_expr(e))
    return inference.close(sort, exchange=True)


def _derive(gamma: SharedEnv, p) -> Tuple[_Inference, Dict[Any, Any]]:
    inference = _Inference()
    return inference, inference.process(p, dict(gamma), frozenset(), {})


def infer_delta(gamma: SharedEnv, p) -> SessionEnv:
    """The least Δ with Γ ⊢ P ▷ Δ; raises TypingError."""
    inference, delta = _derive(gamma, p)
    inference.discharge()
    closed = {key: inference.close(t) for key, t in delta.items()}
    return SessionEnv({key: t for key, t in closed.items() if not is_end(t)})


def infer(gamma: SharedEnv, p) -> Verdict:
    try:
        delta = infer_delta(gamma, p)
    except TypingError as exc:
        log.debug("infer rejected %s: %s", _where(p), exc)
        return Verdict(False, None, exc.rule, exc.location, exc.message)
    return Verdict(True, delta)


@lru_cache(maxsize=100000)
def check(gamma: SharedEnv, p, delta: SessionEnv) -> bool:
    """Γ ⊢ P ▷ Δ, reading channels missing on either side as end."""
    try:
        inference, inferred = _derive(gamma, p)
        for key in set(inferred) | set(delta):
            inference.unify(inferred.get(key, L_END), delta.get(key, L_END), "Complete", show_key(key))
        inference.discharge()
        for t in inferred.values():
            inference.close(t)
    except TypingError as exc:
        log.debug("check rejected %s against %s: %s", _where(p), delta.show(), exc)
        return False
    return True


def _single_channel(p, chans: FrozenSet[str]) -> bool:
    if isinstance(p, _PREFIX_NODES):
        if len(_free_channels(p, chans)) > 1:
            return False
    inner = chans
    if isinstance(p, (Request, Accept)) or (isinstance(p, Recv) and _used_as_channel(p.body, p.binder)):
        inner = chans | {p.binder}
    for child in children(p):
        if isinstance(p, _PREFIX_NODES) and len(_free_channels(child, inner)) > 1:
            return False
        if not _single_channel(child, inner):
            return False
    return True


def is_simple(gamma: SharedEnv, p) -> bool:
    """Typable, and every prefix is typed with at most one session channel."""
    return infer(gamma, p).ok and _single_channel(p, frozenset())


# ── Session environment reduction ──

def delta_redexes(d: SessionEnv) -> Iterator[Tuple[str, Endpoint, Endpoint, Any, SessionEnv]]:
    """(kind, sender, receiver, payload, reduct) for each communication Δ allows."""
    entries = [(k, unfold_head(t)) for k, t in d.items() if isinstance(k, Endpoint)]
    for (kp, tp), (kq, tq) in itertools.permutations(entries, 2):
        if kp.session != kq.session:
            continue
        if (isinstance(tp, LSend) and isinstance(tq, LRecv)
                and tp.peer == kq.role and tq.peer == kp.role):
            if exchanges_equal(tp.exchange, tq.exchange):
                yield "msg", kp, kq, tp.exchange, d.set(kp, tp.cont).set(kq, tq.cont)
        elif (isinstance(tp, LSelect) and isinstance(tq, LBranch)
                and tp.peer == kq.role and tq.peer == kp.role):
            offered = dict(tq.branches)
            if all(label in offered for label, _ in tp.branches):
                for label, cont in tp.branches:
                    yield "sel", kp, kq, label, d.set(kp, cont).set(kq, offered[label])


def delta_step(d: SessionEnv) -> List[SessionEnv]:
    result: List[SessionEnv] = []
    for *_, reduct in delta_redexes(d):
        if reduct not in result:
            result.append(reduct)
    return result


def normalize_delta(d: SessionEnv) -> SessionEnv:
    """Drop end entries and alpha-normalize the remaining types."""
    return SessionEnv({k: canonical(t) for k, t in d.items() if not is_end(t)})


@lru_cache(maxsize=20000)
def delta_reachable(d: SessionEnv) -> FrozenSet[SessionEnv]:
    start = normalize_delta(d)
    seen = {start}
    queue = deque([start])
    while queue:
        current = queue.popleft()
        for reduct in delta_step(current):
            nxt = normalize_delta(reduct)
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return frozenset(seen)


def delta_converges(d1: SessionEnv, d2: SessionEnv) -> bool:
    """Δ1 ⇌ Δ2: some environment is reachable from both."""
    return bool(delta_reachable(d1) & delta_reachable(d2))
