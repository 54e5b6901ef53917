"""Global, local and binary session types: projection, duality and coherence."""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, FrozenSet, List, Optional, Set, Tuple, Union

from .config import DEFAULT_TYPE_UNFOLD_BOUND
from .environments import SessionEnv
from .errors import ProjectionUndefined
from .syntax import Endpoint

log = logging.getLogger(__name__)


# ── Sorts ──

@dataclass(frozen=True)
class BoolSort:
    pass


@dataclass(frozen=True)
class AtomSort:
    name: str


@dataclass(frozen=True)
class GlobalSort:
    g: "GlobalType"


BOOL = BoolSort()

Sort = Union[BoolSort, AtomSort, GlobalSort]


# ── Global types ──

@dataclass(frozen=True)
class GMsg:
    src: int
    dst: int
    exchange: "Exchange"
    cont: "GlobalType"


@dataclass(frozen=True)
class GChoice:
    src: int
    dst: int
    branches: Tuple[Tuple[str, "GlobalType"], ...]


@dataclass(frozen=True)
class GRec:
    var: str
    body: "GlobalType"


@dataclass(frozen=True)
class GVar:
    name: str


@dataclass(frozen=True)
class GEnd:
    pass


GlobalType = Union[GMsg, GChoice, GRec, GVar, GEnd]


# ── Local types ──

@dataclass(frozen=True)
class LSend:
    peer: int
    exchange: "Exchange"
    cont: "LocalType"


@dataclass(frozen=True)
class LRecv:
    peer: int
    exchange: "Exchange"
    cont: "LocalType"


@dataclass(frozen=True)
class LSelect:
    peer: int
    branches: Tuple[Tuple[str, "LocalType"], ...]


@dataclass(frozen=True)
class LBranch:
    peer: int
    branches: Tuple[Tuple[str, "LocalType"], ...]


@dataclass(frozen=True)
class LRec:
    var: str
    body: "LocalType"


@dataclass(frozen=True)
class LVar:
    name: str


@dataclass(frozen=True)
class LEnd:
    pass


LocalType = Union[LSend, LRecv, LSelect, LBranch, LRec, LVar, LEnd]
Exchange = Union[Sort, LocalType]


# ── Binary types ──

@dataclass(frozen=True)
class BOut:
    exchange: Exchange
    cont: "BinaryType"


@dataclass(frozen=True)
class BIn:
    exchange: Exchange
    cont: "BinaryType"


@dataclass(frozen=True)
class BSel:
    branches: Tuple[Tuple[str, "BinaryType"], ...]


@dataclass(frozen=True)
class BBra:
    branches: Tuple[Tuple[str, "BinaryType"], ...]


@dataclass(frozen=True)
class BRec:
    var: str
    body: "BinaryType"


@dataclass(frozen=True)
class BVar:
    name: str


@dataclass(frozen=True)
class BEnd:
    pass


BinaryType = Union[BOut, BIn, BSel, BBra, BRec, BVar, BEnd]

G_END = GEnd()
L_END = LEnd()
B_END = BEnd()

_RECS = (GRec, LRec, BRec)
_VARS = (GVar, LVar, BVar)
_ENDS = (GEnd, LEnd, BEnd)
_SORTS = (BoolSort, AtomSort, GlobalSort)
_CHOICES = (GChoice, LSelect, LBranch, BSel, BBra)
_NODES = _CHOICES + (GMsg, LSend, LRecv, BOut, BIn)
_LOCALS = (LSend, LRecv, LSelect, LBranch, LRec, LVar, LEnd)


def sorted_branches(branches) -> tuple:
    return tuple(sorted(branches, key=lambda item: item[0]))


def is_sort(u) -> bool:
    return isinstance(u, _SORTS)


# ── Generic traversal over the three strata ──

def _rebuild(t, exchange, conts):
    """Same constructor as ``t`` with new exchange and continuations."""
    if isinstance(t, GMsg):
        return GMsg(t.src, t.dst, exchange, conts[0])
    if isinstance(t, LSend):
        return LSend(t.peer, exchange, conts[0])
    if isinstance(t, LRecv):
        return LRecv(t.peer, exchange, conts[0])
    if isinstance(t, BOut):
        return BOut(exchange, conts[0])
    if isinstance(t, BIn):
        return BIn(exchange, conts[0])
    labels = [label for label, _ in t.branches]
    branches = tuple(zip(labels, conts))
    if isinstance(t, GChoice):
        return GChoice(t.src, t.dst, branches)
    if isinstance(t, LSelect):
        return LSelect(t.peer, branches)
    if isinstance(t, LBranch):
        return LBranch(t.peer, branches)
    if isinstance(t, BSel):
        return BSel(branches)
    return BBra(branches)


def _conts(t) -> list:
    if isinstance(t, _CHOICES):
        return [body for _, body in t.branches]
    if isinstance(t, (GMsg, LSend, LRecv, BOut, BIn)):
        return [t.cont]
    return []


def _exchange(t):
    return getattr(t, "exchange", None)


def subst_tvar(t, var: str, replacement):
    """Substitute ``replacement`` for the free type variable ``var`` in continuations."""
    if isinstance(t, _VARS):
        return replacement if t.name == var else t
    if isinstance(t, _RECS):
        if t.var == var:
            return t
        return type(t)(t.var, subst_tvar(t.body, var, replacement))
    if not isinstance(t, _NODES):
        return t
    return _rebuild(t, _exchange(t), [subst_tvar(c, var, replacement) for c in _conts(t)])


def unfold(t):
    """One-step unfolding of a top-level recursion; identity otherwise."""
    if isinstance(t, _RECS):
        return subst_tvar(t.body, t.var, t)
    return t


def unfold_head(t, bound: int = DEFAULT_TYPE_UNFOLD_BOUND):
    """Unfold until the head is not a recursion (at most ``bound`` times)."""
    for _ in range(bound):
        if not isinstance(t, _RECS):
            return t
        t = unfold(t)
    return t


def is_end(t) -> bool:
    return isinstance(unfold_head(t), _ENDS)


def free_tvars(t) -> FrozenSet[str]:
    if isinstance(t, _VARS):
        return frozenset([t.name])
    if isinstance(t, _RECS):
        return free_tvars(t.body) - {t.var}
    result: FrozenSet[str] = frozenset()
    for c in _conts(t):
        result |= free_tvars(c)
    return result


def is_guarded(t, pending: FrozenSet[str] = frozenset()) -> bool:
    """Every recursion variable occurs under at least one communication."""
    if isinstance(t, _VARS):
        return t.name not in pending
    if isinstance(t, _RECS):
        return is_guarded(t.body, pending | {t.var})
    return all(is_guarded(c, frozenset()) for c in _conts(t))


# ── Roles ──

@lru_cache(maxsize=100000)
def roles_global(g: GlobalType) -> FrozenSet[int]:
    if isinstance(g, (GMsg, GChoice)):
        result = frozenset([g.src, g.dst])
        for c in _conts(g):
            result |= roles_global(c)
        return result
    if isinstance(g, GRec):
        return roles_global(g.body)
    return frozenset()


@lru_cache(maxsize=100000)
def roles_local(t: LocalType) -> FrozenSet[int]:
    if isinstance(t, (LSend, LRecv, LSelect, LBranch)):
        result = frozenset([t.peer])
        for c in _conts(t):
            result |= roles_local(c)
        return result
    if isinstance(t, LRec):
        return roles_local(t.body)
    return frozenset()


# ── Alpha-canonical forms and equality ──

def _canon_exchange(u):
    if isinstance(u, GlobalSort):
        return GlobalSort(canonical(u.g))
    if is_sort(u):
        return u
    return canonical(u)


def _canonical(t, env: Dict[str, str], depth: int):
    if isinstance(t, _VARS):
        return type(t)(env.get(t.name, t.name))
    if isinstance(t, _RECS):
        new = f"#r{depth}"
        return type(t)(new, _canonical(t.body, {**env, t.var: new}, depth + 1))
    if not isinstance(t, _NODES):
        return t
    exchange = _exchange(t)
    if exchange is not None:
        exchange = _canon_exchange(exchange)
    return _rebuild(t, exchange, [_canonical(c, env, depth) for c in _conts(t)])


@lru_cache(maxsize=100000)
def canonical(t):
    """Rename recursion binders to depth-indexed names."""
    return _canonical(t, {}, 0)


class _Undecided(Exception):
    pass


def _equal(a, b, assumed: Set[Tuple], unfolds: int, bound: int) -> bool:
    if a == b or (a, b) in assumed:
        return True
    if isinstance(a, _RECS) or isinstance(b, _RECS):
        if unfolds >= bound:
            raise _Undecided()
        assumed.add((a, b))
        return _equal(unfold(a), unfold(b), assumed, unfolds + 1, bound)
    if type(a) is not type(b) or isinstance(a, _VARS):
        return False
    if isinstance(a, (GMsg, GChoice)) and (a.src, a.dst) != (b.src, b.dst):
        return False
    if getattr(a, "peer", None) != getattr(b, "peer", None):
        return False
    ea, eb = _exchange(a), _exchange(b)
    if ea is not None:
        if is_sort(ea) or is_sort(eb):
            if _canon_exchange(ea) != _canon_exchange(eb):
                return False
        elif not _equal(canonical(ea), canonical(eb), assumed, unfolds, bound):
            return False
    if isinstance(a, _CHOICES):
        if [l for l, _ in a.branches] != [l for l, _ in b.branches]:
            return False
    return all(_equal(x, y, assumed, unfolds, bound) for x, y in zip(_conts(a), _conts(b)))


def types_equal(a, b, bound: int = DEFAULT_TYPE_UNFOLD_BOUND) -> Optional[bool]:
    """Equi-recursive equality with bounded unfolding; None when undecided."""
    a, b = canonical(a), canonical(b)
    if a == b:
        return True
    try:
        return _equal(a, b, set(), 0, bound)
    except _Undecided:
        return None


def exchanges_equal(u, v) -> bool:
    """Sorts compare nominally, delegated local types up to unfolding."""
    if is_sort(u) or is_sort(v):
        return _canon_exchange(u) == _canon_exchange(v)
    return types_equal(u, v) is True


# ── Projection ──

def _close_rec(make, var: str, body, var_cls, end):
    if body == var_cls(var):
        return end
    if var not in free_tvars(body):
        return body
    return make(var, body)


def _agree(projections: List[Tuple[str, object]], what: str, show) -> object:
    first = projections[0][1]
    for label, other in projections[1:]:
        if types_equal(first, other) is not True:
            diff = [(lbl, show(t)) for lbl, t in projections]
            raise ProjectionUndefined(f"branch projections disagree {what}", diff=diff)
    return first


@lru_cache(maxsize=100000)
def project_global(g: GlobalType, p: int) -> LocalType:
    """G↾p."""
    if isinstance(g, GMsg):
        cont = project_global(g.cont, p)
        if p == g.src:
            return LSend(g.dst, g.exchange, cont)
        if p == g.dst:
            return LRecv(g.src, g.exchange, cont)
        return cont
    if isinstance(g, GChoice):
        arms = [(label, project_global(body, p)) for label, body in g.branches]
        if p == g.src:
            return LSelect(g.dst, tuple(arms))
        if p == g.dst:
            return LBranch(g.src, tuple(arms))
        return _agree(arms, f"for role {p} in {show_global(g)}", show_local)
    if isinstance(g, GRec):
        return _close_rec(LRec, g.var, project_global(g.body, p), LVar, L_END)
    if isinstance(g, GVar):
        return LVar(g.name)
    return L_END


def projection_set(session: str, g: GlobalType):
    """{s[p]: G↾p | p ∈ roles(G)}."""
    return SessionEnv({Endpoint(session, p): project_global(g, p) for p in sorted(roles_global(g))})


@lru_cache(maxsize=100000)
def project_local(t: LocalType, q: int) -> BinaryType:
    """T↾q."""
    if isinstance(t, (LSend, LRecv)):
        cont = project_local(t.cont, q)
        if q != t.peer:
            return cont
        return BOut(t.exchange, cont) if isinstance(t, LSend) else BIn(t.exchange, cont)
    if isinstance(t, (LSelect, LBranch)):
        arms = [(label, project_local(body, q)) for label, body in t.branches]
        if q == t.peer:
            return BSel(tuple(arms)) if isinstance(t, LSelect) else BBra(tuple(arms))
        return _agree(arms, f"toward role {q} in {show_local(t)}", show_binary)
    if isinstance(t, LRec):
        return _close_rec(BRec, t.var, project_local(t.body, q), BVar, B_END)
    if isinstance(t, LVar):
        return BVar(t.name)
    return B_END


def try_project_local(t: LocalType, q: int) -> Optional[BinaryType]:
    try:
        return project_local(t, q)
    except ProjectionUndefined:
        return None


@lru_cache(maxsize=100000)
def dual(b: BinaryType) -> BinaryType:
    if isinstance(b, BOut):
        return BIn(b.exchange, dual(b.cont))
    if isinstance(b, BIn):
        return BOut(b.exchange, dual(b.cont))
    if isinstance(b, BSel):
        return BBra(tuple((label, dual(body)) for label, body in b.branches))
    if isinstance(b, BBra):
        return BSel(tuple((label, dual(body)) for label, body in b.branches))
    if isinstance(b, BRec):
        return BRec(b.var, dual(b.body))
    return b


# ── Coherence ──

def coherent_at(d, session: str) -> bool:
    entries = [(k.role, t) for k, t in d.items() if isinstance(k, Endpoint) and k.session == session]
    for p, tp in entries:
        for q, tq in entries:
            if p >= q:
                continue
            left, right = try_project_local(tp, q), try_project_local(tq, p)
            if left is None or right is None:
                return False
            if types_equal(left, dual(right)) is not True:
                return False
    return True


def coherent(d) -> bool:
    return all(coherent_at(d, s) for s in d.sessions())


def fully_coherent(d) -> bool:
    if not coherent(d):
        return False
    present = set(k for k in d if isinstance(k, Endpoint))
    for k, t in d.items():
        if not isinstance(k, Endpoint):
            continue
        if any(Endpoint(k.session, q) not in present for q in roles_local(t)):
            return False
    return True


# ── Subtree order ──

def _suffixes(t, seen: Set) -> Set:
    t = canonical(t)
    if t in seen:
        return seen
    seen.add(t)
    if isinstance(t, _RECS):
        _suffixes(unfold(t), seen)
    for c in _conts(t):
        _suffixes(c, seen)
    return seen


def type_leq(t1: LocalType, t2: LocalType) -> bool:
    """T1 ⊑ T2: T1 is T2 or a subtree reached through continuations and branches of T2."""
    target = canonical(t1)
    return any(types_equal(target, s) is True for s in _suffixes(t2, set()))


# ── Printing ──

def show_sort(u) -> str:
    if isinstance(u, BoolSort):
        return "bool"
    if isinstance(u, AtomSort):
        return u.name
    if isinstance(u, GlobalSort):
        return f"<{show_global(u.g)}>"
    return show_local(u) if isinstance(u, _LOCALS) else "_"


def show_exchange(u) -> str:
    return show_sort(u) if is_sort(u) else show_local(u)


def _arms(branches, show) -> str:
    return ", ".join(f"{label}: {show(body)}" for label, body in branches)


def show_global(g) -> str:
    if isinstance(g, GMsg):
        return f"{g.src}->{g.dst}:<{show_exchange(g.exchange)}>.{show_global(g.cont)}"
    if isinstance(g, GChoice):
        return f"{g.src}->{g.dst}:{{{_arms(g.branches, show_global)}}}"
    if isinstance(g, GRec):
        return f"rec {g.var}.{show_global(g.body)}"
    if isinstance(g, GVar):
        return g.name
    return "end"


def show_local(t) -> str:
    if isinstance(t, LSend):
        return f"{t.peer}!<{show_exchange(t.exchange)}>.{show_local(t.cont)}"
    if isinstance(t, LRecv):
        return f"{t.peer}?({show_exchange(t.exchange)}).{show_local(t.cont)}"
    if isinstance(t, LSelect):
        return f"{t.peer}(+){{{_arms(t.branches, show_local)}}}"
    if isinstance(t, LBranch):
        return f"{t.peer}&{{{_arms(t.branches, show_local)}}}"
    if isinstance(t, LRec):
        return f"rec {t.var}.{show_local(t.body)}"
    if isinstance(t, LVar):
        return t.name
    if isinstance(t, LEnd):
        return "end"
    return show_sort(t) if is_sort(t) else "_"


def show_binary(b) -> str:
    if isinstance(b, BOut):
        return f"!<{show_exchange(b.exchange)}>.{show_binary(b.cont)}"
    if isinstance(b, BIn):
        return f"?({show_exchange(b.exchange)}).{show_binary(b.cont)}"
    if isinstance(b, BSel):
        return f"(+){{{_arms(b.branches, show_binary)}}}"
    if isinstance(b, BBra):
        return f"&{{{_arms(b.branches, show_binary)}}}"
    if isinstance(b, BRec):
        return f"rec {b.var}.{show_binary(b.body)}"
    if isinstance(b, BVar):
        return b.name
    return "end"
