import random

import pytest

from mpst_workbench.errors import ProjectionUndefined
from mpst_workbench.generators import (
    PROPERTIES,
    congruent_variant,
    random_case,
    random_delta,
    random_global,
    run_property,
)
from mpst_workbench.session_types import project_global, roles_global
from mpst_workbench.parser import parse_process
from mpst_workbench.syntax import normal_form, size
from mpst_workbench.typecheck import check, delta_reachable, normalize_delta


def test_generated_cases_are_typed(seed):
    rng = random.Random(seed)
    for _ in range(20):
        case = random_case(rng)
        assert size(case.process) <= 12
        assert check(case.gamma, case.process, case.delta)


def test_generation_is_deterministic(seed):
    first = [random_case(random.Random(seed)) for _ in range(3)]
    second = [random_case(random.Random(seed)) for _ in range(3)]
    assert first == second


def test_generated_globals_project_on_every_role(seed):
    rng = random.Random(seed)
    for _ in range(30):
        g = random_global(rng)
        for p in roles_global(g):
            try:
                project_global(g, p)
            except ProjectionUndefined:
                pytest.fail(f"role {p} of generated global type has no projection")


def test_generated_deltas_reach_themselves(seed):
    rng = random.Random(seed)
    for _ in range(10):
        d = random_delta(rng)
        assert normalize_delta(d) in delta_reachable(d)


@pytest.mark.parametrize("name", sorted(PROPERTIES))
def test_property_holds_on_seeded_cases(name, seed):
    assert run_property(name, seed, 500) == []


def test_congruent_variants_share_normal_form(seed):
    rng = random.Random(seed)
    p = parse_process("(new n)(s[1][2]!<n>.0) | (new m)(s[2][1]?(x).s[2][3]!<m>.0) | a[1](y).y[2]!<v>.0")
    for _ in range(50):
        variant = p
        for _ in range(8):
            variant = congruent_variant(rng, variant)
        assert normal_form(variant) == normal_form(p)
