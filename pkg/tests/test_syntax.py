import pytest

from mpst_workbench.errors import ParseError
from mpst_workbench.parser import parse_process, parse_session_env
from mpst_workbench.syntax import (
    FALSE,
    INACT,
    TRUE,
    Accept,
    And,
    Branch,
    Endpoint,
    Hide,
    Name,
    NameEq,
    Par,
    ProcVar,
    Rec,
    Recv,
    Send,
    Var,
    evaluate,
    free_names,
    free_values,
    is_closed,
    normal_form,
    pretty,
    pretty_expr,
    rename_name,
    substitute,
    substitute_process,
    unfold_process,
)


# ── Parsing ──

def test_parse_accept_binds_channel_and_names_the_rest():
    p = parse_process("a[1](x).x[2]!<v>.0")
    assert p == Accept(Name("a"), 1, "x", Send(Var("x"), 2, Name("v"), INACT))


def test_parse_endpoint_send():
    assert parse_process("s[1][2]!<true>.0") == Send(Endpoint("s", 1), 2, TRUE, INACT)


def test_parse_branch_sorts_labels():
    p = parse_process("s[2][1]&{r: 0, l: s[2][3]!<v>.0}")
    assert isinstance(p, Branch)
    assert [label for label, _ in p.branches] == ["l", "r"]


def test_parse_parallel_and_grouping():
    p = parse_process("s[1][2]!<v>.0 | (s[2][1]?(x).0 | 0)")
    assert isinstance(p, Par)
    assert p.right == Par(Recv(Endpoint("s", 2), 1, "x", INACT), INACT)


def test_parse_rejects_role_zero():
    with pytest.raises(ParseError):
        parse_process("s[0][2]!<v>.0")


def test_parse_rejects_duplicate_labels():
    with pytest.raises(ParseError):
        parse_process("s[1][2]&{l: 0, l: 0}")


def test_parse_error_reports_line():
    with pytest.raises(ParseError) as info:
        parse_process("s[1][2]!<v>.\n s[1][3]!<v> 0")
    assert info.value.line == 2


def test_parse_session_env_rejects_duplicates():
    with pytest.raises(ParseError):
        parse_session_env("s[1]: end; s[1]: end;")


def test_pretty_output_parses_back():
    for text in [
        "a[1](x).x[2]!<v>.0",
        "(new b)(b~[2](y).y[1]?(z).0 | s[1][2](+)ok.0)",
        "if v == w then s[1][2]!<true and false>.0 else 0",
        "rec X. s[1][2]&{go: X, stop: 0}",
    ]:
        p = parse_process(text)
        assert parse_process(pretty(p)) == p


# ── Expressions ──

def test_evaluate():
    assert evaluate(And(TRUE, FALSE)) == FALSE
    assert evaluate(NameEq(Name("v"), Name("v"))) == TRUE
    assert evaluate(NameEq(Name("v"), Name("w"))) == FALSE
    assert evaluate(Var("x")) is None


# ── Free names and substitution ──

def test_free_names_skip_restricted():
    p = parse_process("(new b)(a[1](x).b[1](y).0)")
    assert free_names(p) == frozenset({"a"})


def test_free_values_are_payload_atoms():
    assert free_values(parse_process("s[1][2]!<v>.s[1][3]!<true>.0")) == frozenset({"v"})


def test_substitute_avoids_capture():
    p = Recv(Endpoint("s", 1), 2, "y", Send(Endpoint("s", 1), 3, Var("x"), INACT))
    result = substitute(p, "x", Var("y"))
    assert result == Recv(Endpoint("s", 1), 2, "y'", Send(Endpoint("s", 1), 3, Var("y"), INACT))


def test_substitute_stops_at_rebinding():
    p = Recv(Endpoint("s", 1), 2, "x", Send(Endpoint("s", 1), 3, Var("x"), INACT))
    assert substitute(p, "x", Name("v")) == p


def test_unfold_process():
    body = Send(Endpoint("s", 1), 2, TRUE, ProcVar("X"))
    rec = Rec("X", body)
    assert unfold_process(rec) == Send(Endpoint("s", 1), 2, TRUE, rec)


# ── Structural normal form ──

def _nf(text):
    return normal_form(parse_process(text))


def test_normal_form_drops_inaction():
    assert _nf("s[1][2]!<v>.0 | 0") == _nf("s[1][2]!<v>.0")


def test_normal_form_ignores_parallel_order():
    assert _nf("s[1][2]!<v>.0 | s[2][1]?(x).0") == _nf("s[2][1]?(x).0 | s[1][2]!<v>.0")


def test_normal_form_is_alpha_invariant():
    assert _nf("a[1](x).x[2]!<v>.0") == _nf("a[1](y).y[2]!<v>.0")
    assert _nf("(new n)(s[1][2]!<n>.0)") == _nf("(new m)(s[1][2]!<m>.0)")


def test_normal_form_discards_unused_restriction():
    assert _nf("(new n)(s[1][2]!<v>.0)") == _nf("s[1][2]!<v>.0")


def test_normal_form_extrudes_scope():
    assert _nf("(new n)(s[1][2]!<n>.0) | s[3][1]!<v>.0") == _nf("(new n)(s[1][2]!<n>.0 | s[3][1]!<v>.0)")


def test_normal_form_is_idempotent():
    p = Par(Hide("n", parse_process("s[1][2]!<n>.0")), parse_process("a[1](x).x[2]?(y).0"))
    assert normal_form(normal_form(p)) == normal_form(p)


# ── Renaming and closedness ──

def test_rename_name_skips_bound_occurrences():
    p = parse_process("a[1](x). 0 | (new a)(a[2](y). 0)")
    assert rename_name(p, "a", "b") == parse_process("b[1](x). 0 | (new a)(a[2](y). 0)")


def test_substitute_process_replaces_free_variable():
    p = parse_process("s[1][2]!<v>. X")
    assert substitute_process(p, "X", INACT) == parse_process("s[1][2]!<v>. 0")


def test_is_closed():
    assert is_closed(parse_process("rec X. s[1][2]!<v>. X"))
    assert not is_closed(parse_process("s[1][2]!<v>. X"))


def test_pretty_expr():
    assert pretty_expr(And(TRUE, NameEq(Name("a"), Name("b")))) == "true and a == b"
