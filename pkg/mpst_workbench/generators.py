"""Seeded random generators and the property checks built on them."""

import logging
import random
import re
from dataclasses import dataclass, replace
from typing import Any, Callable, List, Optional, Set

from .config import DEFAULT_UNFOLD_BOUND
from .environments import EMPTY_DELTA, SessionEnv, SharedEnv
from .errors import ProjectionUndefined, UnfoldBoundExceeded
from .lts import TAU, LtsGraph, Out, Sel, reduce, step
from .session_types import (
    BOOL,
    G_END,
    AtomSort,
    BoolSort,
    GChoice,
    GlobalSort,
    GMsg,
    GRec,
    GVar,
    LBranch,
    LRec,
    LRecv,
    LSelect,
    LSend,
    LVar,
    dual,
    project_global,
    project_local,
    projection_set,
    roles_global,
    show_global,
    sorted_branches,
    types_equal,
)
from .syntax import (
    INACT,
    TRUE,
    FALSE,
    Accept,
    And,
    Branch,
    Endpoint,
    Hide,
    If,
    Name,
    Par,
    ProcVar,
    Rec,
    Recv,
    Request,
    Select,
    Send,
    Var,
    free_ids,
    map_shallow,
    normal_form,
    par_all,
    pretty,
    rename_name,
    size,
    substitute,
)
from .typecheck import check, delta_step

log = logging.getLogger(__name__)

ATOM = AtomSort("U")
BASE_GAMMA = SharedEnv({"v": ATOM, "w": ATOM})
_SORTS = (BOOL, ATOM)
_LITERALS = {BOOL: (TRUE, FALSE), ATOM: (Name("v"), Name("w"))}


@dataclass(frozen=True)
class GeneratedCase:
    gamma: SharedEnv
    process: Any
    delta: SessionEnv
    global_type: Any


# ── Global types ──

def random_global(rng: random.Random, roles: int = 3, depth: int = 4, allow_rec: bool = True):
    """A projectable global type: choices only differ in messages between the choosing pair."""

    def build(d: int, rec_vars: List[str]):
        if d <= 0 or rng.random() < 0.15:
            if rec_vars and rng.random() < 0.5:
                return GVar(rng.choice(rec_vars))
            return G_END
        src, dst = rng.sample(range(1, roles + 1), 2)
        sort = rng.choice(_SORTS)
        r = rng.random()
        if r < 0.6:
            return GMsg(src, dst, sort, build(d - 1, rec_vars))
        if r < 0.85 or not allow_rec:
            tail = build(d - 2, rec_vars)
            return GChoice(src, dst, sorted_branches([("l1", GMsg(src, dst, sort, tail)), ("l2", tail)]))
        var = f"t{len(rec_vars)}"
        return GRec(var, GMsg(src, dst, sort, build(d - 1, rec_vars + [var])))

    return build(depth, [])


# ── Processes implementing local types ──

class _Implementer:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.fresh = 0

    def var(self) -> str:
        self.fresh += 1
        return f"y{self.fresh}"

    def value(self, sort, scope):
        candidates = list(_LITERALS.get(sort, ())) + [Var(x) for x, u in scope if u == sort]
        chosen = self.rng.choice(candidates)
        if isinstance(sort, BoolSort) and self.rng.random() < 0.2:
            return And(chosen, self.rng.choice(candidates))
        return chosen

    def implement(self, t, channel, scope=()):
        rng = self.rng
        if isinstance(t, LSend):
            return Send(channel, t.peer, self.value(t.exchange, scope), self.implement(t.cont, channel, scope))
        if isinstance(t, LRecv):
            x = self.var()
            body = self.implement(t.cont, channel, scope + ((x, t.exchange),))
            if isinstance(t.exchange, BoolSort) and rng.random() < 0.3:
                body = If(Var(x), body, body)
            return Recv(channel, t.peer, x, body)
        if isinstance(t, LSelect):
            label, cont = rng.choice(t.branches)
            return Select(channel, t.peer, label, self.implement(cont, channel, scope))
        if isinstance(t, LBranch):
            return Branch(channel, t.peer, tuple((label, self.implement(c, channel, scope)) for label, c in t.branches))
        if isinstance(t, LRec):
            return Rec(t.var.upper(), self.implement(t.body, channel, scope))
        if isinstance(t, LVar):
            return ProcVar(t.name.upper())
        return INACT


def random_case(rng: random.Random, max_size: int = 12, attempts: int = 50) -> GeneratedCase:
    """A well-typed process with a coherent environment, of at most ``max_size`` nodes."""
    for _ in range(attempts):
        g = random_global(rng, roles=rng.randint(2, 3), depth=rng.randint(1, 4))
        roles = sorted(roles_global(g))
        if not roles:
            continue
        impl = _Implementer(rng)
        mode = rng.choice(["open", "hidden", "shared"])
        if mode == "shared":
            if roles != list(range(1, roles[-1] + 1)):
                continue
            n = roles[-1]
            comps = [
                (Request if p == n else Accept)(Name("a"), p, "x", impl.implement(project_global(g, p), Var("x")))
                for p in roles
            ]
            case = GeneratedCase(SharedEnv({**dict(BASE_GAMMA), "a": GlobalSort(g)}), par_all(comps), EMPTY_DELTA, g)
        else:
            comps = [impl.implement(project_global(g, p), Endpoint("s", p)) for p in roles]
            if mode == "hidden":
                case = GeneratedCase(BASE_GAMMA, Hide("s", par_all(comps)), EMPTY_DELTA, g)
            else:
                case = GeneratedCase(BASE_GAMMA, par_all(comps), projection_set("s", g), g)
        if size(case.process) <= max_size:
            return case
    return GeneratedCase(BASE_GAMMA, INACT, EMPTY_DELTA, G_END)


def random_delta(rng: random.Random, steps: int = 3) -> SessionEnv:
    """The projection set of a random global type, advanced by a few reductions."""
    g = random_global(rng, roles=rng.randint(2, 4), depth=rng.randint(1, 5))
    d = projection_set("s", g)
    for _ in range(rng.randint(0, steps)):
        reducts = delta_step(d)
        if not reducts:
            break
        d = rng.choice(reducts)
    return d


def random_graph(rng: random.Random, states: int = 10, density: float = 0.2) -> LtsGraph:
    labels = [TAU, TAU, Out("s", 1, 2, Name("v")), Sel("s", 1, 2, "l")]
    transitions = []
    for src in range(states):
        for dst in range(states):
            if rng.random() < density:
                transitions.append((src, rng.choice(labels), dst))
    return LtsGraph({i: i for i in range(states)}, transitions, 0, False)


# ── Structural congruence ──

_TOKEN_RE = re.compile(r"[A-Za-z_#][\w#']*")


def _unused(p, prefix: str, taken: Optional[Set[str]] = None) -> str:
    taken = taken if taken is not None else set(_TOKEN_RE.findall(pretty(p))) | free_ids(p)
    k = 0
    while f"{prefix}{k}" in taken:
        k += 1
    taken.add(f"{prefix}{k}")
    return f"{prefix}{k}"


def _alpha(p, taken: Set[str]):
    """Rename every variable binder and restriction of ``p`` to unused names."""
    if isinstance(p, (Request, Accept, Recv)):
        new = _unused(p, "z", taken)
        p = replace(p, binder=new, body=substitute(p.body, p.binder, Var(new)))
    elif isinstance(p, Hide):
        new = _unused(p, "k", taken)
        p = Hide(new, rename_name(p.body, p.name, new), p.sort)
    return map_shallow(p, lambda e: e, lambda q: _alpha(q, taken))


def _rewrites_at(p) -> List[Callable[[], Any]]:
    found = [
        lambda: Par(p, INACT),
        lambda: Par(INACT, p),
        lambda: Hide(_unused(p, "h"), p),
        lambda: _alpha(p, set(_TOKEN_RE.findall(pretty(p))) | free_ids(p)),
    ]
    if isinstance(p, Par):
        left, right = p.left, p.right
        found.append(lambda: Par(right, left))
        if isinstance(left, Par):
            found.append(lambda: Par(left.left, Par(left.right, right)))
        if isinstance(right, Par):
            found.append(lambda: Par(Par(left, right.left), right.right))
        if isinstance(left, Hide):
            def extrude_left():
                m = _unused(p, "m")
                return Hide(m, Par(rename_name(left.body, left.name, m), right), left.sort)
            found.append(extrude_left)
        if isinstance(right, Hide):
            def extrude_right():
                m = _unused(p, "m")
                return Hide(m, Par(left, rename_name(right.body, right.name, m)), right.sort)
            found.append(extrude_right)
    if isinstance(p, Hide) and isinstance(p.body, Par):
        inner = p.body
        if p.name not in free_ids(inner.right):
            found.append(lambda: Par(Hide(p.name, inner.left, p.sort), inner.right))
        if p.name not in free_ids(inner.left):
            found.append(lambda: Par(inner.left, Hide(p.name, inner.right, p.sort)))
    return found


def congruent_variant(rng: random.Random, p):
    """One random structural-congruence rewrite of ``p``, at the top or inside its parallel/restriction spine."""
    if isinstance(p, Par) and rng.random() < 0.5:
        if rng.random() < 0.5:
            return Par(congruent_variant(rng, p.left), p.right)
        return Par(p.left, congruent_variant(rng, p.right))
    if isinstance(p, Hide) and rng.random() < 0.5:
        return Hide(p.name, congruent_variant(rng, p.body), p.sort)
    return rng.choice(_rewrites_at(p))()


# ── Property checks ──

def check_subject_reduction(rng: random.Random, count: int, unfold_bound: int = DEFAULT_UNFOLD_BOUND) -> List[str]:
    """Failures of: every one-step reduct re-types under Δ or a Δ reduct."""
    failures = []
    for i in range(count):
        case = random_case(rng)
        if not check(case.gamma, case.process, case.delta):
            failures.append(f"case {i}: generated process does not type: {pretty(case.process)}")
            continue
        candidates = [case.delta] + delta_step(case.delta)
        try:
            reducts = reduce(case.process, unfold_bound)
        except UnfoldBoundExceeded:
            continue
        for r in reducts:
            if not any(check(case.gamma, r, d) for d in candidates):
                failures.append(f"case {i}: {pretty(case.process)} -> {pretty(r)} does not re-type")
    return failures


def check_projection_duality(rng: random.Random, count: int) -> List[str]:
    """Failures of (G↾p)↾q = dual((G↾q)↾p)."""
    failures = []
    for i in range(count):
        g = random_global(rng, roles=rng.randint(2, 4), depth=rng.randint(1, 6))
        roles = sorted(roles_global(g))
        for p in roles:
            for q in roles:
                if p >= q:
                    continue
                try:
                    left = project_local(project_global(g, p), q)
                    right = project_local(project_global(g, q), p)
                except ProjectionUndefined:
                    continue
                if types_equal(left, dual(right)) is not True:
                    failures.append(f"case {i}: roles {p},{q} of {show_global(g)}")
    return failures


def check_normal_form(rng: random.Random, count: int) -> List[str]:
    """Failures of idempotence and commutativity of the normal form."""
    failures = []
    for i in range(count):
        left, right = random_case(rng).process, random_case(rng).process
        nf = normal_form(Par(left, right))
        if normal_form(nf) != nf:
            failures.append(f"case {i}: not idempotent on {pretty(nf)}")
        if normal_form(Par(right, left)) != nf:
            failures.append(f"case {i}: parallel order changes {pretty(nf)}")
    return failures


def check_congruence(rng: random.Random, count: int) -> List[str]:
    """Failures of: random structural-congruence rewrites leave the normal form unchanged."""
    failures = []
    for i in range(count):
        base = Par(random_case(rng).process, random_case(rng).process)
        variant = base
        for _ in range(rng.randint(1, 6)):
            variant = congruent_variant(rng, variant)
        if normal_form(variant) != normal_form(base):
            failures.append(f"case {i}: {pretty(base)} and {pretty(variant)} differ")
    return failures


def check_reduce_matches_tau(rng: random.Random, count: int, unfold_bound: int = DEFAULT_UNFOLD_BOUND) -> List[str]:
    """Failures of: reduct set equals the targets of τ transitions."""
    failures = []
    for i in range(count):
        p = random_case(rng).process
        try:
            reducts = set(reduce(p, unfold_bound))
            taus = {target for label, target in step(p, unfold_bound=unfold_bound) if label == TAU}
        except UnfoldBoundExceeded:
            continue
        if reducts != taus:
            failures.append(f"case {i}: {pretty(p)}")
    return failures


PROPERTIES = {
    "subject-reduction": check_subject_reduction,
    "projection-duality": check_projection_duality,
    "normal-form": check_normal_form,
    "congruence": check_congruence,
    "reduce-tau": check_reduce_matches_tau,
}


def run_property(name: str, seed: int, count: int) -> List[str]:
    rng = random.Random(seed)
    failures = PROPERTIES[name](rng, count)
    log.info("%s: %d cases, %d failures", name, count, len(failures))
    return failures
