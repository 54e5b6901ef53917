import pytest

from mpst_workbench.environments import SessionEnv, SharedEnv
from mpst_workbench.errors import ParseError, ProjectionUndefined
from mpst_workbench.parser import parse_global, parse_local, parse_session_env
from mpst_workbench.session_types import (
    BOOL,
    L_END,
    AtomSort,
    LRec,
    LSend,
    LVar,
    coherent,
    dual,
    fully_coherent,
    project_global,
    project_local,
    projection_set,
    roles_global,
    roles_local,
    show_global,
    show_local,
    type_leq,
    types_equal,
    unfold,
)
from mpst_workbench.syntax import Endpoint

U = AtomSort("U")
GA = "1->3:<U>.2->3:<U>.end"


# ── Parsing and printing ──

def test_show_global_matches_input():
    assert show_global(parse_global(GA)) == GA


def test_show_local_matches_input():
    text = "2&{l: 3!<bool>.end, r: rec t.1?(U).t}"
    assert show_local(parse_local(text)) == text


def test_unguarded_recursion_rejected():
    with pytest.raises(ParseError):
        parse_global("rec t.t")


def test_interaction_needs_distinct_roles():
    with pytest.raises(ParseError):
        parse_global("1->1:<U>.end")


# ── Projection ──

def test_project_three_party():
    g = parse_global(GA)
    assert project_global(g, 1) == parse_local("3!<U>.end")
    assert project_global(g, 3) == parse_local("1?(U).2?(U).end")
    assert project_global(g, 4) == L_END


def test_project_choice_onto_bystander_merges_equal_branches():
    g = parse_global("1->2:{l1: 1->3:<U>.end, l2: 1->3:<U>.end}")
    assert project_global(g, 3) == parse_local("1?(U).end")
    assert project_global(g, 1) == parse_local("2(+){l1: 3!<U>.end, l2: 3!<U>.end}")


def test_project_choice_onto_bystander_undefined_with_diff():
    g = parse_global("1->2:{l1: 2->3:<U>.end, l2: end}")
    with pytest.raises(ProjectionUndefined) as info:
        project_global(g, 3)
    assert info.value.diff == [("l1", "2?(U).end"), ("l2", "end")]


def test_project_recursion():
    g = parse_global("rec t.1->2:<bool>.t")
    assert project_global(g, 1) == LRec("t", LSend(2, BOOL, LVar("t")))
    assert project_global(g, 3) == L_END


def test_projection_set_covers_roles():
    d = projection_set("s", parse_global(GA))
    assert set(d) == {Endpoint("s", 1), Endpoint("s", 2), Endpoint("s", 3)}
    assert roles_global(parse_global(GA)) == frozenset({1, 2, 3})


def test_binary_projections_are_dual():
    g = parse_global("1->2:<U>.2->3:{ok: 3->1:<bool>.end, ko: 3->1:<bool>.end}")
    for p, q in [(1, 2), (1, 3), (2, 3)]:
        left = project_local(project_global(g, p), q)
        right = project_local(project_global(g, q), p)
        assert types_equal(left, dual(right)) is True


# ── Equality and ordering ──

def test_types_equal_up_to_unfolding_and_renaming():
    assert types_equal(parse_local("rec t.1!<U>.t"), parse_local("1!<U>.rec r.1!<U>.r")) is True
    assert types_equal(parse_local("rec t.1!<U>.t"), parse_local("rec r.1!<U>.r")) is True
    assert types_equal(parse_local("1!<U>.end"), parse_local("1!<bool>.end")) is False


def test_type_leq_on_suffixes():
    t = parse_local("1?(U).2!<U>.end")
    assert type_leq(parse_local("2!<U>.end"), t)
    assert type_leq(L_END, t)
    assert not type_leq(parse_local("2?(U).end"), t)


# ── Coherence ──

def test_projection_set_is_coherent():
    d = projection_set("s", parse_global(GA))
    assert coherent(d)
    assert fully_coherent(d)


def test_mismatched_exchange_is_not_coherent():
    d = parse_session_env("s[1]: 2!<U>.end; s[2]: 1?(bool).end;")
    assert not coherent(d)


def test_missing_role_is_not_fully_coherent():
    d = parse_session_env("s[1]: 3!<U>.end; s[2]: 3!<U>.end;")
    assert coherent(d)
    assert not fully_coherent(d)


# ── Environments ──

def test_equal_environments_hash_equally():
    a = SharedEnv({"v": U, "b": BOOL})
    b = SharedEnv({"b": BOOL, "v": U})
    assert a == b and hash(a) == hash(b)


def test_extend_rejects_overlap():
    d = SessionEnv({Endpoint("s", 1): L_END})
    with pytest.raises(ValueError):
        d.extend({Endpoint("s", 1): L_END})


def test_empty_environment_shows_as_empty_set():
    assert SessionEnv().show() == "∅"


def test_roles_local_and_unfold():
    assert roles_local(parse_local("3!<U>.1?(U).end")) == {1, 3}
    assert unfold(parse_local("rec t.3!<U>.t")) == parse_local("3!<U>.rec t.3!<U>.t")
