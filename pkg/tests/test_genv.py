import random

from mpst_workbench.environments import EMPTY_DELTA, GlobalEnv, SessionEnv, SharedEnv
from mpst_workbench.genv import (
    EnvConfig,
    GlobalMsg,
    config_step,
    delta_labeled_step,
    env_step,
    env_steps,
    genv_join,
    genv_leq,
    genv_reachable,
    genv_step,
    global_leq,
    governed_barbs,
    governed_weak_barbs,
    in_of,
    is_env_config,
    is_governance_judgement,
    out_of,
    projset,
    show_global_label,
)
from mpst_workbench.generators import BASE_GAMMA, random_delta, random_global
from mpst_workbench.lts import TAU, AccLabel, Barb, Bra, In, Out, Sel
from mpst_workbench.parser import parse_global, parse_global_env, parse_session_env
from mpst_workbench.session_types import (
    BOOL,
    L_END,
    AtomSort,
    GlobalSort,
    LBranch,
    LRecv,
    LSelect,
    LSend,
    exchanges_equal,
    projection_set,
    types_equal,
    unfold_head,
)
from mpst_workbench.syntax import TRUE, Endpoint, Name
from mpst_workbench.typecheck import delta_step

U = AtomSort("U")
VALUES = SharedEnv({"v": U, "w": U})
GA = "1->3:<U>.2->3:<U>.end"


def _genv(text):
    return parse_global_env(text)


def _d0():
    return parse_session_env("s_a[1]: 3!<U>.end; s_a[2]: 3!<U>.end;")


# ── Global environment reduction ──

def test_sequential_interactions_reduce_in_order():
    steps = genv_step(_genv(f"s: {GA};"))
    assert [(show_global_label(lam), e) for lam, e in steps] == [
        ("s:1->3:<U>", _genv("s: 2->3:<U>.end;")),
    ]


def test_independent_interactions_permute():
    steps = genv_step(_genv("s: 1->2:<U>.3->4:<bool>.end;"))
    assert {show_global_label(lam) for lam, _ in steps} == {"s:1->2:<U>", "s:3->4:<bool>"}


def test_choice_permutes_common_inner_interaction():
    e = _genv("s: 1->2:{l: 3->4:<U>.end, r: 3->4:<U>.end};")
    labels = {show_global_label(lam) for lam, _ in genv_step(e)}
    assert labels == {"s:1->2:l", "s:1->2:r", "s:3->4:<U>"}


def test_global_label_endpoints():
    lam = GlobalMsg("s", 1, 3, U)
    assert out_of(lam) == Endpoint("s", 1)
    assert in_of(lam) == Endpoint("s", 3)


def test_genv_reachable():
    reachable = genv_reachable(_genv(f"s: {GA};"))
    assert reachable == frozenset({_genv(f"s: {GA};"), _genv("s: 2->3:<U>.end;"), _genv("s: end;")})


def test_projset_unions_sessions():
    e = _genv(f"s: {GA}; t: 1->2:<U>.end;")
    d = projset(e)
    assert len(d) == 5
    assert d.of_session("t") == projection_set("t", parse_global("1->2:<U>.end"))


def test_delta_labeled_step():
    d = parse_session_env("s[1]: 2!<U>.end; s[2]: 1?(U).end;")
    [(lam, reduct)] = delta_labeled_step(d)
    assert show_global_label(lam) == "s:1->2:<U>"
    assert reduct == parse_session_env("s[1]: end; s[2]: end;")


# ── Environment transitions ──

def test_env_output_needs_absent_receiver():
    d = parse_session_env("s[1]: 2!<U>.end;")
    assert env_step(VALUES, d, Out("s", 1, 2, Name("v"))) == (VALUES, parse_session_env("s[1]: end;"))
    assert env_step(VALUES, d, Out("s", 1, 2, Name("nope"))) is None
    both = parse_session_env("s[1]: 2!<U>.end; s[2]: 1?(U).end;")
    assert env_step(VALUES, both, Out("s", 1, 2, Name("v"))) is None


def test_env_input_of_fresh_name_extends_gamma():
    d = parse_session_env("s[1]: 2?(U).end;")
    gamma, after = env_step(VALUES, d, In("s", 1, 2, Name("#a1")))
    assert gamma["#a1"] == U
    assert after == parse_session_env("s[1]: end;")


def test_env_accept_adds_projections():
    gamma = SharedEnv({"a": GlobalSort(parse_global(GA))})
    _, d = env_step(gamma, EMPTY_DELTA, AccLabel("a", frozenset({1, 2}), "s"))
    assert d == parse_session_env("s[1]: 3!<U>.end; s[2]: 3!<U>.end;")
    assert env_step(gamma, d, AccLabel("a", frozenset({3}), "s")) is None


def test_env_tau_keeps_or_reduces():
    d = parse_session_env("s[1]: 2!<U>.end; s[2]: 1?(U).end;")
    assert env_step(VALUES, d, TAU) == (VALUES, d)


# ── Configurations ──

def test_witness_covers_partial_delta():
    assert is_env_config(EnvConfig(_genv(f"s_a: {GA};"), VALUES, _d0()))
    assert is_env_config(EnvConfig(_genv("s_a: 2->3:<U>.1->3:<U>.end;"), VALUES, _d0()))
    wrong = parse_session_env("s_a[1]: 3!<bool>.end;")
    assert not is_env_config(EnvConfig(_genv(f"s_a: {GA};"), VALUES, wrong))


def test_witness_covers_delta_of_later_reduct():
    d = parse_session_env("s_a[2]: 3!<U>.end;")
    assert is_env_config(EnvConfig(_genv(f"s_a: {GA};"), VALUES, d))


def test_governance_judgement(workspace):
    ws = workspace("intro")
    c = EnvConfig(ws.witness("E1"), ws.gamma(), ws.delta("D0"))
    assert is_governance_judgement(c, ws.process("Q1"))


def test_config_output_follows_witness():
    c = EnvConfig(_genv(f"s_a: {GA};"), VALUES, _d0())
    [after] = config_step(c, Out("s_a", 1, 3, Name("v")))
    assert after.genv == _genv("s_a: 2->3:<U>.end;")
    assert after.delta == parse_session_env("s_a[1]: end; s_a[2]: 3!<U>.end;")


def test_config_output_blocked_by_witness_order():
    c = EnvConfig(_genv("s_a: 2->3:<U>.1->3:<U>.end;"), VALUES, _d0())
    assert config_step(c, Out("s_a", 1, 3, Name("v"))) == []
    assert len(config_step(c, Out("s_a", 2, 3, Name("v")))) == 1


def test_governed_barbs_follow_witness():
    e1 = EnvConfig(_genv(f"s_a: {GA};"), VALUES, _d0())
    e2 = EnvConfig(_genv("s_a: 2->3:<U>.1->3:<U>.end;"), VALUES, _d0())
    assert governed_barbs(e1) == frozenset({Barb("s_a", 1, 3)})
    assert governed_barbs(e2) == frozenset({Barb("s_a", 2, 3)})


def test_configuration_weakening_and_strengthening():
    witness = _genv(f"s_a: {GA};")
    weakened = parse_session_env("s_a[1]: 3!<U>.end; s_a[2]: 3!<U>.end; s_b[1]: end;")
    strengthened = parse_session_env("s_a[1]: 3!<U>.end;")
    assert is_env_config(EnvConfig(witness, VALUES, weakened))
    assert is_env_config(EnvConfig(witness, VALUES, strengthened))


def test_governed_weak_barbs_see_past_internal_steps():
    c = EnvConfig(
        _genv("s: 1->2:<U>.1->3:<U>.end;"),
        VALUES,
        parse_session_env("s[1]: 2!<U>.3!<U>.end; s[2]: 1?(U).end;"),
    )
    assert governed_barbs(c) == frozenset()
    assert governed_weak_barbs(c) == frozenset({Barb("s", 1, 3)})


# ── Order and join ──

def test_global_leq_on_suffix():
    assert global_leq(parse_global("2->3:<U>.end"), parse_global(GA))
    assert not global_leq(parse_global(GA), parse_global("2->3:<U>.end"))


def test_join_takes_larger_binding_per_session(workspace):
    ws = workspace("governed")
    j1, j2 = ws.witness("J1"), ws.witness("J2")
    joined = genv_join(j1, j2)
    assert joined == GlobalEnv({"s1": j1["s1"], "s2": j2["s2"]})
    assert genv_leq(j1, joined) and genv_leq(j2, joined)


def test_join_undefined_for_incomparable_bindings():
    assert genv_join(_genv("s: 1->2:<U>.end;"), _genv("s: 2->1:<U>.end;")) is None


# ── Generated configurations ──

SAMPLE = {BOOL: TRUE, U: Name("v")}


def _session_labels(d):
    labels = [TAU]
    for key, t in d.items():
        t = unfold_head(t)
        if isinstance(t, (LSend, LRecv)) and t.exchange in SAMPLE:
            kind = Out if isinstance(t, LSend) else In
            labels.append(kind(key.session, key.role, t.peer, SAMPLE[t.exchange]))
        elif isinstance(t, (LSelect, LBranch)):
            kind = Sel if isinstance(t, LSelect) else Bra
            labels.extend(kind(key.session, key.role, t.peer, label) for label, _ in t.branches)
    return labels


def _random_configs(rng, count):
    for _ in range(count):
        g = random_global(rng, roles=rng.randint(2, 3), depth=rng.randint(1, 4))
        kept = {k: t for k, t in projection_set("s", g).items() if rng.random() < 0.7}
        yield EnvConfig(GlobalEnv({"s": g}), BASE_GAMMA, SessionEnv(kept))


def test_configuration_steps_stay_configurations(seed):
    rng = random.Random(seed)
    for c in _random_configs(rng, 30):
        assert is_env_config(c)
        for label in _session_labels(c.delta):
            for successor in config_step(c, label):
                assert is_env_config(successor)


def test_configuration_steps_are_environment_steps(seed):
    rng = random.Random(seed)
    for c in _random_configs(rng, 30):
        for label in _session_labels(c.delta):
            allowed = env_steps(c.gamma, c.delta, label, dict(c.genv))
            for successor in config_step(c, label):
                assert (successor.gamma, successor.delta) in allowed


def test_global_step_consumes_projected_prefixes(seed):
    rng = random.Random(seed)
    for _ in range(40):
        e = GlobalEnv({"s": random_global(rng, roles=rng.randint(2, 4), depth=rng.randint(1, 5))})
        before = projset(e)
        for lam, reduct in genv_step(e):
            after = projset(reduct)
            sender = unfold_head(before[out_of(lam)])
            receiver = unfold_head(before[in_of(lam)])
            if isinstance(lam, GlobalMsg):
                assert isinstance(sender, LSend) and sender.peer == lam.dst
                assert isinstance(receiver, LRecv) and receiver.peer == lam.src
                assert exchanges_equal(sender.exchange, lam.exchange)
                conts = (sender.cont, receiver.cont)
            else:
                assert isinstance(sender, LSelect) and sender.peer == lam.dst
                assert isinstance(receiver, LBranch) and receiver.peer == lam.src
                conts = (dict(sender.branches)[lam.label], dict(receiver.branches)[lam.label])
            for key, cont in zip((out_of(lam), in_of(lam)), conts):
                assert types_equal(after.get(key, L_END), cont) is not False


def test_labelled_session_reduction_agrees_with_delta_step(seed):
    rng = random.Random(seed)
    for _ in range(500):
        d = random_delta(rng)
        labelled = delta_labeled_step(d)
        assert {reduct for _, reduct in labelled} == set(delta_step(d))
        for lam, reduct in labelled:
            changed = {k for k in d if d[k] != reduct[k]}
            assert changed <= {out_of(lam), in_of(lam)}
