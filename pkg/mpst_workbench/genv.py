"""Environment transitions, global environments and the configuration LTS."""

import itertools
import logging
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, FrozenSet, Iterable, List, Mapping, Optional, Tuple, Union

from .config import DEFAULT_MAX_STATES, DEFAULT_UNFOLD_BOUND
from .environments import GlobalEnv, SessionEnv, SharedEnv
from .errors import ProjectionUndefined, TypingError, UnfoldBoundExceeded
from .lts import (
    TAU,
    AccLabel,
    Barb,
    Bra,
    BOutName,
    BOutSession,
    In,
    Label,
    Out,
    ReqLabel,
    Sel,
    Tau,
)
from .session_types import (
    GChoice,
    GlobalSort,
    GMsg,
    GRec,
    LBranch,
    LRecv,
    LSelect,
    LSend,
    canonical,
    exchanges_equal,
    is_end,
    is_sort,
    project_global,
    projection_set,
    roles_global,
    show_exchange,
    type_leq,
    types_equal,
    unfold,
    unfold_head,
)
from .syntax import Endpoint, Name
from .typecheck import check, delta_redexes, delta_step, typecheck_expr

log = logging.getLogger(__name__)


# ── Global labels ──

@dataclass(frozen=True)
class GlobalMsg:
    session: str
    src: int
    dst: int
    exchange: Any


@dataclass(frozen=True)
class GlobalSel:
    session: str
    src: int
    dst: int
    label: str


GlobalLabel = Union[GlobalMsg, GlobalSel]


def out_of(lam: GlobalLabel) -> Endpoint:
    return Endpoint(lam.session, lam.src)


def in_of(lam: GlobalLabel) -> Endpoint:
    return Endpoint(lam.session, lam.dst)


def show_global_label(lam: GlobalLabel) -> str:
    payload = f"<{show_exchange(lam.exchange)}>" if isinstance(lam, GlobalMsg) else lam.label
    return f"{lam.session}:{lam.src}->{lam.dst}:{payload}"


def _same_label(a: GlobalLabel, b: GlobalLabel) -> bool:
    if type(a) is not type(b) or (a.session, a.src, a.dst) != (b.session, b.src, b.dst):
        return False
    if isinstance(a, GlobalSel):
        return a.label == b.label
    return exchanges_equal(a.exchange, b.exchange)


# ── Global environments ──

def projset(e: GlobalEnv) -> SessionEnv:
    """{E}: the union of the projection sets of every binding."""
    entries = {}
    for session, g in e.items():
        entries.update(projection_set(session, g))
    return SessionEnv(entries)


def _moves(g, blocked: FrozenSet[int], unfolds: int, bound: int) -> List[Tuple[Any, Any]]:
    """(λ without session, G′) pairs; ``blocked`` roles may not take part in λ."""
    if roles_global(g) <= blocked:
        return []
    if isinstance(g, GRec):
        if unfolds >= bound:
            raise UnfoldBoundExceeded(f"global type needs more than {bound} unfoldings")
        return _moves(unfold(g), blocked, unfolds + 1, bound)
    pair = {g.src, g.dst} if isinstance(g, (GMsg, GChoice)) else set()
    free = not (pair & blocked)
    found: List[Tuple[Any, Any]] = []
    if isinstance(g, GMsg):
        if free:
            found.append((("msg", g.src, g.dst, g.exchange), g.cont))
        for lam, cont in _moves(g.cont, blocked | pair, unfolds, bound):
            found.append((lam, GMsg(g.src, g.dst, g.exchange, cont)))
    elif isinstance(g, GChoice):
        if free:
            found.extend((("sel", g.src, g.dst, label), body) for label, body in g.branches)
        per_branch = [_moves(body, blocked | pair, unfolds, bound) for _, body in g.branches]
        if per_branch:
            for lam in _common_labels(per_branch):
                options = [[c for l, c in moves if _same_move(l, lam)] for moves in per_branch]
                for conts in itertools.product(*options):
                    arms = tuple((label, c) for (label, _), c in zip(g.branches, conts))
                    found.append((lam, GChoice(g.src, g.dst, arms)))
    return found


def _same_move(a, b) -> bool:
    if a[:3] != b[:3]:
        return False
    return a[3] == b[3] if a[0] == "sel" else exchanges_equal(a[3], b[3])


def _common_labels(per_branch: List[List[Tuple[Any, Any]]]) -> List[Any]:
    common = []
    for lam, _ in per_branch[0]:
        if any(_same_move(lam, c) for c in common):
            continue
        if all(any(_same_move(lam, l) for l, _ in moves) for moves in per_branch[1:]):
            common.append(lam)
    return common


def genv_step(e: GlobalEnv, unfold_bound: int = DEFAULT_UNFOLD_BOUND) -> List[Tuple[GlobalLabel, GlobalEnv]]:
    """All labelled one-step reducts of E (⟨Inter⟩ ⟨SelBra⟩ ⟨IPerm⟩ ⟨SBPerm⟩ ⟨GEnv⟩)."""
    result: List[Tuple[GlobalLabel, GlobalEnv]] = []
    for session, g in e.items():
        for (kind, src, dst, payload), cont in _moves(g, frozenset(), 0, unfold_bound):
            lam = GlobalMsg(session, src, dst, payload) if kind == "msg" else GlobalSel(session, src, dst, payload)
            reduct = e.set(session, canonical(cont))
            if (lam, reduct) not in result:
                result.append((lam, reduct))
    return result


@lru_cache(maxsize=4096)
def genv_reachable(e: GlobalEnv, unfold_bound: int = DEFAULT_UNFOLD_BOUND,
                   limit: int = DEFAULT_MAX_STATES) -> FrozenSet[GlobalEnv]:
    """{E′ | E →* E′}; raises UnfoldBoundExceeded when the closure outgrows ``limit``."""
    start = GlobalEnv({s: canonical(g) for s, g in e.items()})
    seen = {start}
    queue = deque([start])
    while queue:
        for _, reduct in genv_step(queue.popleft(), unfold_bound):
            if reduct not in seen:
                if len(seen) >= limit:
                    raise UnfoldBoundExceeded(f"global environment closure exceeds {limit} environments")
                seen.add(reduct)
                queue.append(reduct)
    return frozenset(seen)


def delta_labeled_step(d: SessionEnv) -> List[Tuple[GlobalLabel, SessionEnv]]:
    result: List[Tuple[GlobalLabel, SessionEnv]] = []
    for kind, sender, receiver, payload, reduct in delta_redexes(d):
        if kind == "msg":
            lam = GlobalMsg(sender.session, sender.role, receiver.role, payload)
        else:
            lam = GlobalSel(sender.session, sender.role, receiver.role, payload)
        if (lam, reduct) not in result:
            result.append((lam, reduct))
    return result


# ── Environment LTS ──

def _sort_of(gamma: SharedEnv, value) -> Optional[Any]:
    try:
        return typecheck_expr(gamma, value)
    except TypingError:
        return None


def _delegated_global(session: str, local, sessions: Optional[Mapping[str, Any]], role: int) -> Optional[Any]:
    """The global type of an opened session: by name, else the unique declaration projecting to ``local``."""
    if not sessions:
        return None
    if session in sessions:
        return sessions[session]
    candidates = []
    for g in sessions.values():
        try:
            if types_equal(project_global(g, role), local) is True and g not in candidates:
                candidates.append(g)
        except ProjectionUndefined:
            continue
    return candidates[0] if len(candidates) == 1 else None


def env_steps(gamma: SharedEnv, d: SessionEnv, label: Label,
              sessions: Optional[Mapping[str, Any]] = None) -> List[Tuple[SharedEnv, SessionEnv]]:
    """Every (Γ′, Δ′) with (Γ, Δ) →ℓ (Γ′, Δ′).

    Accept and request labels both add the projections of Γ(a) for the
    label's roles. ``sessions`` supplies global types for sessions opened
    by a bound session output.
    """
    if isinstance(label, Tau):
        return [(gamma, d)] + [(gamma, reduct) for reduct in delta_step(d) if reduct != d]
    if isinstance(label, (AccLabel, ReqLabel)):
        sort = gamma.get(label.shared)
        if not isinstance(sort, GlobalSort) or label.session in d.sessions():
            return []
        try:
            opened = {Endpoint(label.session, i): project_global(sort.g, i) for i in sorted(label.roles)}
        except ProjectionUndefined:
            return []
        return [(gamma, d.extend(opened))]

    here = Endpoint(label.session, label.role)
    if here not in d or Endpoint(label.session, label.peer) in d:
        return []
    t = unfold_head(d[here])

    if isinstance(label, (Out, BOutName, BOutSession)):
        if not isinstance(t, LSend) or t.peer != label.peer:
            return []
        after = d.set(here, t.cont)
        if isinstance(label, BOutName):
            if label.name in gamma or not is_sort(t.exchange):
                return []
            return [(gamma.set(label.name, t.exchange), after)]
        if isinstance(label, BOutSession):
            if is_sort(t.exchange):
                return []
            opened = label.endpoint
            g = _delegated_global(opened.session, t.exchange, sessions, opened.role)
            if g is None:
                log.warning("no global type for opened session %s; rejecting %s", opened.session, label)
                return []
            if types_equal(project_global(g, opened.role), t.exchange) is not True:
                return []
            others = {Endpoint(opened.session, r): project_global(g, r)
                      for r in sorted(roles_global(g)) if r != opened.role}
            if any(k in after for k in others):
                return []
            return [(gamma, after.extend(others))]
        value = label.value
        if isinstance(value, Endpoint):
            if value not in d or value == here or is_sort(t.exchange):
                return []
            if not exchanges_equal(d[value], t.exchange):
                return []
            return [(gamma, after.remove(value))]
        sort = _sort_of(gamma, value)
        if sort is None or not exchanges_equal(sort, t.exchange):
            return []
        return [(gamma, after)]

    if isinstance(label, In):
        if not isinstance(t, LRecv) or t.peer != label.peer:
            return []
        after = d.set(here, t.cont)
        value = label.value
        if isinstance(value, Endpoint):
            if is_sort(t.exchange) or value in d:
                return []
            return [(gamma, after.extend({value: t.exchange}))]
        if isinstance(value, Name) and value.name not in gamma:
            if not is_sort(t.exchange):
                return []
            return [(gamma.set(value.name, t.exchange), after)]
        sort = _sort_of(gamma, value)
        if sort is None or not exchanges_equal(sort, t.exchange):
            return []
        return [(gamma, after)]

    if isinstance(label, Sel):
        if not isinstance(t, LSelect) or t.peer != label.peer:
            return []
    elif isinstance(label, Bra):
        if not isinstance(t, LBranch) or t.peer != label.peer:
            return []
    else:
        return []
    arms = dict(t.branches)
    if label.label not in arms:
        return []
    return [(gamma, d.set(here, arms[label.label]))]


def env_step(gamma: SharedEnv, d: SessionEnv, label: Label,
             sessions: Optional[Mapping[str, Any]] = None) -> Optional[Tuple[SharedEnv, SessionEnv]]:
    found = env_steps(gamma, d, label, sessions)
    return found[0] if found else None


# ── Environment configurations ──

@dataclass(frozen=True)
class EnvConfig:
    genv: GlobalEnv
    gamma: SharedEnv
    delta: SessionEnv


def delta_included(d: SessionEnv, covering: SessionEnv) -> bool:
    """Δ ⊆ {E′}, ignoring end entries of Δ."""
    for key, t in d.items():
        if is_end(t):
            continue
        if key not in covering or types_equal(t, covering[key]) is not True:
            return False
    return True


def _covering(e: GlobalEnv, d: SessionEnv) -> Iterable[GlobalEnv]:
    """Reducts E′ of E with Δ ⊆ {E′}."""
    for reduct in sorted(genv_reachable(e), key=repr):
        try:
            if delta_included(d, projset(reduct)):
                yield reduct
        except ProjectionUndefined:
            continue


def is_env_config(c: EnvConfig) -> bool:
    return any(True for _ in _covering(c.genv, c.delta))


def is_governance_judgement(c: EnvConfig, p) -> bool:
    return is_env_config(c) and check(c.gamma, p, c.delta)


def _expected(label: Label, d: SessionEnv) -> GlobalLabel:
    """The global label an observable session action must be matched with."""
    here = Endpoint(label.session, label.role)
    t = unfold_head(d[here])
    if isinstance(label, (Out, BOutName, BOutSession)):
        return GlobalMsg(label.session, label.role, label.peer, t.exchange)
    if isinstance(label, In):
        return GlobalMsg(label.session, label.peer, label.role, t.exchange)
    if isinstance(label, Sel):
        return GlobalSel(label.session, label.role, label.peer, label.label)
    return GlobalSel(label.session, label.peer, label.role, label.label)


def config_step(c: EnvConfig, label: Label, sessions: Optional[Mapping[str, Any]] = None,
                unfold_bound: int = DEFAULT_UNFOLD_BOUND) -> List[EnvConfig]:
    """All (E′, Γ′, Δ′) with (E, Γ, Δ) →ℓ (E′, Γ′, Δ′); ⟨Inv⟩ ranges over the reducts of E."""
    results: List[EnvConfig] = []

    def add(candidate: EnvConfig) -> None:
        if candidate not in results and is_env_config(candidate):
            results.append(candidate)

    if isinstance(label, (AccLabel, ReqLabel)):
        if label.session in c.genv:
            return []
        for gamma, d in env_steps(c.gamma, c.delta, label, sessions):
            add(EnvConfig(c.genv.set(label.session, c.gamma[label.shared].g), gamma, d))
        return results

    if isinstance(label, Tau):
        add(c)
        for lam_d, d in delta_labeled_step(c.delta):
            for reduct in genv_reachable(c.genv, unfold_bound):
                for lam, genv in genv_step(reduct, unfold_bound):
                    if _same_label(lam, lam_d):
                        add(EnvConfig(genv, c.gamma, d))
        return results

    sources = {**(sessions or {}), **dict(c.genv)}
    for gamma, d in env_steps(c.gamma, c.delta, label, sources):
        wanted = _expected(label, c.delta)
        opened = None
        if isinstance(label, BOutSession):
            end = label.endpoint
            opened = _delegated_global(end.session, wanted.exchange, sources, end.role)
        for reduct in _covering(c.genv, c.delta):
            if opened is not None and label.endpoint.session in reduct:
                continue
            for lam, genv in genv_step(reduct, unfold_bound):
                if _same_label(lam, wanted):
                    add(EnvConfig(genv if opened is None else genv.set(label.endpoint.session, opened), gamma, d))
    return results


def governed_barbs(c: EnvConfig, unfold_bound: int = DEFAULT_UNFOLD_BOUND) -> FrozenSet[Barb]:
    """Output and selection barbs the witness allows, plus the shared names of Γ."""
    found = {Barb(name) for name, sort in c.gamma.items() if isinstance(sort, GlobalSort)}
    covering = list(_covering(c.genv, c.delta))
    for key, t in c.delta.items():
        if not isinstance(key, Endpoint):
            continue
        t = unfold_head(t)
        if not isinstance(t, (LSend, LSelect)) or Endpoint(key.session, t.peer) in c.delta:
            continue
        if isinstance(t, LSend):
            wanted = [GlobalMsg(key.session, key.role, t.peer, t.exchange)]
        else:
            wanted = [GlobalSel(key.session, key.role, t.peer, label) for label, _ in t.branches]
        if any(_same_label(lam, w) for reduct in covering
               for lam, _ in genv_step(reduct, unfold_bound) for w in wanted):
            found.add(Barb(key.session, key.role, t.peer))
    return frozenset(found)


def governed_weak_barbs(c: EnvConfig, unfold_bound: int = DEFAULT_UNFOLD_BOUND) -> FrozenSet[Barb]:
    """Governed barbs of every configuration reachable by τ steps."""
    seen = {c}
    queue = deque([c])
    found = set()
    while queue:
        current = queue.popleft()
        found |= governed_barbs(current, unfold_bound)
        for nxt in config_step(current, TAU, unfold_bound=unfold_bound):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return frozenset(found)


# ── Ordering and join ──

def global_leq(g1, g2) -> bool:
    """G1 ⊑ G2: every projection of G1 is a subtree of the matching projection of G2."""
    roles2 = roles_global(g2)
    try:
        for role in roles_global(g1):
            if role not in roles2 or not type_leq(project_global(g1, role), project_global(g2, role)):
                return False
    except ProjectionUndefined:
        return False
    return True


def genv_leq(e1: GlobalEnv, e2: GlobalEnv) -> bool:
    return all(s in e2 and global_leq(g, e2[s]) for s, g in e1.items())


def genv_join(e1: GlobalEnv, e2: GlobalEnv) -> Optional[GlobalEnv]:
    """E1 ⊔ E2, or None when some shared session has incomparable bindings."""
    joined = {}
    for session in set(e1) | set(e2):
        if session not in e2:
            joined[session] = e1[session]
        elif session not in e1:
            joined[session] = e2[session]
        elif global_leq(e2[session], e1[session]):
            joined[session] = e1[session]
        elif global_leq(e1[session], e2[session]):
            joined[session] = e2[session]
        else:
            log.debug("join undefined at %s", session)
            return None
    return GlobalEnv(joined)
