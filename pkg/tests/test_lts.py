import itertools
import random

import pytest

from mpst_workbench.environments import EMPTY_DELTA, SessionEnv, SharedEnv
from mpst_workbench.errors import UnfoldBoundExceeded
from mpst_workbench.lts import (
    TAU,
    AccLabel,
    Barb,
    BOutName,
    In,
    Out,
    ReqLabel,
    ValueUniverse,
    barbs,
    bound_names,
    complete_role_set,
    dual_labels,
    explore,
    expose,
    fresh_name,
    reduce,
    show_barb,
    show_label,
    step,
)
from mpst_workbench.generators import random_case
from mpst_workbench.models import GraphDocument
from mpst_workbench.parser import parse_process
from mpst_workbench.session_types import L_END
from mpst_workbench.syntax import INACT, Endpoint, Name, ProcVar, Rec, normal_form, pretty


def _labels(moves):
    return [label for label, _ in moves]


# ── Labels ──

def test_show_label():
    assert show_label(Out("s", 1, 2, Name("v"))) == "s!<1,2,v>"
    assert show_label(AccLabel("a", frozenset({2, 1}), "#s1")) == "a<{1,2}>(#s1)"
    assert show_label(TAU) == "tau"


def test_dual_labels():
    assert dual_labels(Out("s", 1, 2, Name("v")), In("s", 2, 1, Name("v")))
    assert not dual_labels(Out("s", 1, 2, Name("v")), In("s", 2, 1, Name("w")))
    assert dual_labels(BOutName("s", 1, 2, "#a1"), In("s", 2, 1, Name("#a1")))


def test_fresh_name_takes_least_free_index():
    assert fresh_name("s", {"#s1", "#s2", "s"}) == "#s3"
    assert fresh_name("a", set()) == "#a1"


# ── One-step transitions ──

def test_output_transition():
    assert step(parse_process("s[1][2]!<v>.0")) == [(Out("s", 1, 2, Name("v")), INACT)]


def test_input_ranges_over_universe():
    moves = step(parse_process("s[1][2]?(x).s[1][3]!<x>.0"), ValueUniverse([Name("v"), Name("w")]))
    assert moves == [
        (In("s", 1, 2, Name("v")), normal_form(parse_process("s[1][3]!<v>.0"))),
        (In("s", 1, 2, Name("w")), normal_form(parse_process("s[1][3]!<w>.0"))),
    ]


def test_communication_is_tau():
    moves = step(parse_process("s[1][2]!<v>.0 | s[2][1]?(x).s[2][3]!<x>.0"), ValueUniverse())
    assert (TAU, normal_form(parse_process("s[2][3]!<v>.0"))) in moves


def test_restricted_session_blocks_actions():
    assert step(parse_process("(new s)(s[1][2]!<v>.0)")) == []


def test_restricted_name_is_opened_on_output():
    moves = step(parse_process("(new n)(s[1][2]!<n>.0)"))
    assert moves == [(BOutName("s", 1, 2, "#a1"), INACT)]


def test_session_initiation_labels():
    p = parse_process("a[1](x).x[2]!<v>.0 | a~[2](y).y[1]?(z).0")
    labels = _labels(step(p, ValueUniverse()))
    assert AccLabel("a", frozenset({1}), "#s1") in labels
    assert ReqLabel("a", frozenset({2}), "#s1") in labels
    assert TAU in labels


def test_partial_request_accumulates():
    p = parse_process("a[1](x).0 | a~[3](y).0")
    labels = _labels(step(p))
    assert ReqLabel("a", frozenset({1, 3}), "#s1") in labels
    assert TAU not in labels


@pytest.mark.parametrize("accepting", [(), (1,), (2,), (1, 2)])
def test_request_either_fires_or_accumulates(accepting):
    comps = ["a~[3](y).0"] + [f"a[{r}](x).0" for r in accepting]
    labels = _labels(step(parse_process(" | ".join(comps))))
    roles = frozenset(accepting) | {3}
    fires = TAU in labels
    merged = ReqLabel("a", roles, "#s1") in labels
    assert fires == complete_role_set(roles, 3)
    assert merged != fires


# ── Reduction ──

def test_reduce_initiates_then_communicates():
    p = parse_process("a[1](x).x[2]!<v>.0 | a~[2](y).y[1]?(z).0")
    reducts = reduce(p)
    assert len(reducts) == 1
    assert reduce(reducts[0]) == [INACT]


def test_reduce_conditional():
    assert reduce(parse_process("if true then s[1][2]!<v>.0 else 0")) == [normal_form(parse_process("s[1][2]!<v>.0"))]
    assert reduce(parse_process("if v == w then 0 else s[1][2]!<v>.0")) == [normal_form(parse_process("s[1][2]!<v>.0"))]


def test_reduce_branch_selection():
    p = parse_process("s[1][2](+)l.0 | s[2][1]&{l: s[2][3]!<v>.0, r: 0}")
    assert reduce(p) == [normal_form(parse_process("s[2][3]!<v>.0"))]


def test_reduce_without_redex():
    assert reduce(parse_process("s[1][2]!<v>.0")) == []


# ── Recursion ──

def test_unguarded_recursion_exceeds_unfold_bound():
    with pytest.raises(UnfoldBoundExceeded):
        expose(Rec("X", ProcVar("X")), unfold_bound=4)


def test_recursive_process_has_single_state():
    graph = explore(parse_process("rec X. s[1][2]!<v>.X"))
    assert len(graph.states) == 1
    assert [(a, show_label(l), b) for a, l, b in graph.transitions] == [(0, "s!<1,2,v>", 0)]
    assert not graph.truncated


# ── Exploration ──

def test_exploration_is_truncated_at_state_budget():
    graph = explore(parse_process("s[1][2]!<v>.s[1][2]!<v>.s[1][2]!<v>.0"), max_states=2)
    assert graph.truncated
    assert len(graph.states) == 2


def test_exploration_to_networkx():
    graph = explore(parse_process("s[1][2]!<v>.s[1][3]!<w>.0"))
    digraph = graph.digraph()
    assert digraph.number_of_nodes() == 3
    assert digraph.number_of_edges() == 2


# ── Barbs ──

def test_barbs_of_outputs_and_requests():
    gamma = SharedEnv()
    p = parse_process("s[1][2]!<v>.0 | a~[2](x).0 | s[3][1]?(y).0")
    assert barbs(gamma, p, EMPTY_DELTA) == frozenset({Barb("s", 1, 2), Barb("a")})


def test_barb_hidden_when_receiver_is_in_delta():
    p = parse_process("s[1][2]!<v>.0")
    delta = SessionEnv({Endpoint("s", 2): L_END})
    assert barbs(SharedEnv(), p, delta) == frozenset()


def test_complete_role_set():
    assert complete_role_set({1, 2, 3}, 3)
    assert not complete_role_set({1, 3}, 3)
    assert not complete_role_set({1, 2}, 3)


def test_bound_names_and_barb_display():
    assert bound_names(AccLabel("a", frozenset({1}), "#s1")) == {"#s1"}
    assert bound_names(BOutName("s", 1, 2, "#a1")) == {"#a1"}
    assert bound_names(Out("s", 1, 2, Name("v"))) == frozenset()
    assert show_barb(Barb("s", 1, 3)) == "s[1][3]"
    assert show_barb(Barb("a")) == "a"


# ── Generated processes ──

def _generated_graphs(seed, count):
    rng = random.Random(seed)
    for _ in range(count):
        graph = explore(random_case(rng).process, max_states=300)
        if not graph.truncated:
            yield graph


def test_explored_taus_are_the_reducts(seed):
    for graph in _generated_graphs(seed, 40):
        for sid, state in graph.states.items():
            taus = {graph.states[dst] for label, dst in graph.successors(sid) if label == TAU}
            assert taus == set(reduce(state))


def test_exploration_is_deterministic(seed):
    rng = random.Random(seed)
    for _ in range(20):
        p = random_case(rng).process
        first, second = explore(p, max_states=300), explore(p, max_states=300)
        assert first.states == second.states
        assert first.transitions == second.transitions


def test_graph_document_survives_json(seed):
    for graph in itertools.islice(_generated_graphs(seed, 10), 5):
        doc = GraphDocument.from_graph(graph, pretty, show_label)
        assert GraphDocument.model_validate_json(doc.to_json()) == doc
