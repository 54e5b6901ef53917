import random

import pytest

from mpst_workbench.bisim import (
    BISIMILAR,
    INCONCLUSIVE,
    NOT_BISIMILAR,
    GovState,
    TypedState,
    TypedUniverse,
    bisim_governed,
    bisim_standard,
    check_relation,
    gov_step,
    typed_state,
    typed_step,
    weak_closure,
    weak_moves,
)
from mpst_workbench.environments import EMPTY_DELTA, EMPTY_GENV, GlobalEnv, SharedEnv
from mpst_workbench.errors import NotGoverned, TypingError, UnfoldBoundExceeded
from mpst_workbench.generators import random_case, random_graph
from mpst_workbench.genv import EnvConfig, is_governance_judgement
from mpst_workbench.lts import TAU, LtsGraph, Out, show_label
from mpst_workbench.parser import parse_global_env, parse_process, parse_session_env
from mpst_workbench.session_types import AtomSort
from mpst_workbench.syntax import Endpoint, Name
from mpst_workbench.typecheck import is_simple


def _standard(ws, left, dl, right, dr, **kwargs):
    return bisim_standard(ws.gamma(), ws.process(left), ws.delta(dl), ws.process(right), ws.delta(dr), **kwargs)


def _governed(ws, witness, left, dl, right, dr, **kwargs):
    return bisim_governed(ws.witness(witness), ws.gamma(), ws.process(left), ws.delta(dl),
                          ws.process(right), ws.delta(dr), **kwargs)


# ── Weak moves ──

def _table_moves(table):
    return lambda s: table.get(s, [])


def test_weak_moves_absorb_taus_on_both_sides():
    out = Out("s", 1, 2, Name("v"))
    moves = _table_moves({0: [(TAU, 1)], 1: [(out, 2)], 2: [(TAU, 3)]})
    assert weak_moves(0, out, moves) == [2, 3]
    assert weak_moves(0, TAU, moves) == [0, 1]


def test_weak_closure_saturates_graph():
    out = Out("s", 1, 2, Name("v"))
    graph = LtsGraph({0: "a", 1: "b", 2: "c"}, [(0, TAU, 1), (1, out, 2)])
    closed = weak_closure(graph)
    assert (0, out, 2) in closed.transitions
    assert (0, TAU, 0) in closed.transitions


# ── Standard bisimulation ──

def test_interleaving_differs_without_witness(workspace):
    verdict = _standard(workspace("intro"), "Q1", "D0", "Q2", "D0")
    assert verdict.verdict == NOT_BISIMILAR
    assert verdict.show_trace() == ["s_a!<2,3,v>"]
    assert verdict.failing_side == 2


def test_closed_system_is_bisimilar_to_inaction(workspace):
    ws = workspace("intro")
    verdict = _standard(ws, "Closed", "Dall", "0", None)
    assert verdict.verdict == BISIMILAR


def test_simple_relay_matches_direct_output(workspace):
    verdict = _standard(workspace("governed"), "Relay", "DRelay", "Direct", "DDirect")
    assert verdict.verdict == BISIMILAR
    assert verdict.delta_converges


def test_split_component_differs_without_witness(workspace):
    verdict = _standard(workspace("governed"), "L", "DL", "R", "DL")
    assert verdict.verdict == NOT_BISIMILAR


def test_bisimilar_verdict_relation_is_closed(workspace):
    ws = workspace("governed")
    verdict = _standard(ws, "Relay", "DRelay", "Direct", "DDirect")
    assert check_relation(verdict.relation)
    assert (typed_state(ws.gamma(), ws.process("Relay"), ws.delta("DRelay")),
            typed_state(ws.gamma(), ws.process("Direct"), ws.delta("DDirect"))) in verdict.relation


def test_relation_missing_pairs_is_rejected(workspace):
    ws = workspace("governed")
    verdict = _standard(ws, "Relay", "DRelay", "Direct", "DDirect")
    assert not check_relation(verdict.relation[:1])


def test_verdicts_are_reflexive_and_symmetric(workspace):
    ws = workspace("intro")
    assert _standard(ws, "Q1", "D0", "Q1", "D0").verdict == BISIMILAR
    assert _standard(ws, "Q2", "D0", "Q1", "D0").verdict == NOT_BISIMILAR
    assert _governed(ws, "E1", "Q2", "D0", "Q1", "D0").verdict == BISIMILAR


def test_untyped_process_is_refused(workspace):
    ws = workspace("intro")
    with pytest.raises(TypingError):
        bisim_standard(ws.gamma(), ws.process("Q1"), EMPTY_DELTA, ws.process("Q2"), ws.delta("D0"))


def test_state_budget_gives_inconclusive(workspace):
    verdict = _standard(workspace("intro"), "Q1", "D0", "Q1", "D0", max_states=1)
    assert verdict.verdict == INCONCLUSIVE


# ── Governed bisimulation ──

def test_witness_ordering_equates_interleavings(workspace):
    ws = workspace("intro")
    assert _governed(ws, "E1", "Q1", "D0", "Q2", "D0").verdict == BISIMILAR
    assert _governed(ws, "E2", "Q1", "D0", "Q2", "D0").verdict == NOT_BISIMILAR


def test_split_component_equal_under_ordering_witness(workspace):
    ws = workspace("governed")
    assert _governed(ws, "E1", "L", "DL", "R", "DL").verdict == BISIMILAR
    assert _governed(ws, "E2", "L", "DL", "R", "DL").verdict == NOT_BISIMILAR


def test_simple_pair_governed(workspace):
    verdict = _governed(workspace("governed"), "ES", "Relay", "DRelay", "Direct", "DDirect")
    assert verdict.verdict == BISIMILAR
    assert check_relation(verdict.relation, kind="governed")


def test_witness_must_cover_environment(workspace):
    ws = workspace("intro")
    witness = parse_global_env("s_a: 1->3:<bool>.2->3:<bool>.end;")
    with pytest.raises(NotGoverned):
        bisim_governed(witness, ws.gamma(), ws.process("Q1"), ws.delta("D0"), ws.process("Q2"), ws.delta("D0"))


# ── Typed transitions ──

def test_typed_step_respects_environment(workspace):
    ws = workspace("intro")
    s = typed_state(ws.gamma(), ws.process("Q2"), ws.delta("D0"))
    labels = [show_label(label) for label, _ in typed_step(s)]
    assert labels == ["s_a!<1,3,v>"]
    assert isinstance(typed_step(s)[0][1], TypedState)


def test_weak_closure_keeps_strong_transitions(seed):
    graph = random_graph(random.Random(seed))
    closure = weak_closure(graph)
    assert set(graph.transitions) <= set(closure.transitions)
    assert all((s, TAU, s) in closure.transitions for s in graph.states)


def _paths_weak_edges(graph):
    """Weak edges by walking every τ* ℓ τ* path; phase 1 once the visible step is taken."""
    edges = set()
    visible = {label for _, label, _ in graph.transitions if label != TAU}
    for s in graph.states:
        for wanted in [TAU] + sorted(visible, key=show_label):
            start = (s, 1 if wanted == TAU else 0)
            seen = {start}
            frontier = [start]
            while frontier:
                state, phase = frontier.pop()
                if phase == 1:
                    edges.add((s, wanted, state))
                for label, nxt in graph.successors(state):
                    if label == TAU:
                        move = (nxt, phase)
                    elif phase == 0 and label == wanted:
                        move = (nxt, 1)
                    else:
                        continue
                    if move not in seen:
                        seen.add(move)
                        frontier.append(move)
    return edges


def test_weak_closure_matches_path_enumeration(seed):
    rng = random.Random(seed)
    for _ in range(100):
        states = rng.randint(1, 50)
        graph = random_graph(rng, states=states, density=min(0.3, 2.0 / states))
        assert set(weak_closure(graph).transitions) == _paths_weak_edges(graph)


def test_received_endpoint_avoids_roles_of_its_type():
    delta = parse_session_env("s[1]: 2?(1!<U>.end).end;")
    universe = TypedUniverse(SharedEnv(), delta, frozenset({"s"}))
    assert universe.inputs("s", 1, 2) == (Endpoint("#s1", 2),)


def test_governed_moves_keep_governance_judgements(seed):
    rng = random.Random(seed)
    for _ in range(25):
        case = random_case(rng)
        genv = GlobalEnv({"s": case.global_type}) if case.delta else EMPTY_GENV
        start = GovState(genv, typed_state(case.gamma, case.process, case.delta))
        assert is_governance_judgement(EnvConfig(genv, case.gamma, case.delta), start.state.process)
        try:
            moves = gov_step(start)
        except UnfoldBoundExceeded:
            continue
        for _, nxt in moves:
            config = EnvConfig(nxt.genv, nxt.state.gamma, nxt.state.delta)
            assert is_governance_judgement(config, nxt.state.process)


BISIMILAR_PAIRS = [
    ("intro", None, "Closed", "Dall", "0", None),
    ("intro", "E1", "Q1", "D0", "Q2", "D0"),
    ("governed", None, "Relay", "DRelay", "Direct", "DDirect"),
    ("governed", "ES", "Relay", "DRelay", "Direct", "DDirect"),
    ("governed", "E1", "L", "DL", "R", "DL"),
    ("ooi", None, "Scenario1", None, "Scenario2", None),
    ("ooi", "E", "Running2", "Started", "Running3", "Started"),
]


@pytest.mark.parametrize("name, witness, left, dl, right, dr", BISIMILAR_PAIRS)
def test_bisimilar_environments_converge(workspace, name, witness, left, dl, right, dr):
    ws = workspace(name)
    if witness is None:
        verdict = _standard(ws, left, dl, right, dr)
    else:
        verdict = _governed(ws, witness, left, dl, right, dr)
    assert verdict.verdict == BISIMILAR
    assert verdict.delta_converges


def test_simple_processes_agree_with_and_without_witness(workspace):
    ws = workspace("governed")
    gamma = SharedEnv({**dict(ws.gamma()), "u": AtomSort("U")})
    delta = parse_session_env("s[1]: 3!<U>.end;")
    witness = parse_global_env("s: 1->3:<U>.end;")
    cases = [
        (ws.process("Relay"), ws.delta("DRelay"), ws.process("Direct"), ws.delta("DDirect"), ws.witness("ES")),
        (parse_process("s[1][3]!<v>.0"), delta, parse_process("s[1][3]!<u>.0"), delta, witness),
        (parse_process("s[1][3]!<v>.0"), delta, parse_process("s[1][3]!<v>.0"), delta, witness),
    ]
    for p1, d1, p2, d2, genv in cases:
        assert is_simple(gamma, p1) and is_simple(gamma, p2)
        standard = bisim_standard(gamma, p1, d1, p2, d2)
        governed = bisim_governed(genv, gamma, p1, d1, p2, d2)
        assert standard.verdict == governed.verdict
