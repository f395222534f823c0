import itertools
import random
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capcot.agents import (
    FAMILIES,
    FAMILY_DEFINITIONS,
    challenge,
    cold_start_strategy,
    critique,
    format_feedback,
    parse_feedback,
    sample_error_strategy,
    solve,
)
from capcot.backend import DecodingConfig
from capcot.domain import ISSUE_TYPES, ErrorStrategy, FeedbackBundle, FeedbackItem, Role
from capcot.errors import EmptyTaxonomy, FeedbackUnparseable
from capcot.prompts import initial_prompt
from tests.fixtures.worked_examples import (
    RADICAL_CHALLENGER_R1,
    RADICAL_FEEDBACK_R1,
    RADICAL_QUERY,
    RADICAL_SOLVER_R1,
    radical_script,
)

DEC = DecodingConfig()


def exact_marginals(families):
    """Brute-force P(family in sample) over every (k, subset) outcome."""
    n = len(families)
    ks = (1,) if n == 1 else (1, 2)
    probs = Counter()
    for k in ks:
        subsets = list(itertools.combinations(families, k))
        for subset in subsets:
            for f in subset:
                probs[f] += Fraction(1, len(ks)) * Fraction(1, len(subsets))
    return probs


def test_enumeration_oracle_has_ten_outcomes():
    outcomes = [c for k in (1, 2) for c in itertools.combinations(FAMILIES, k)]
    assert len(outcomes) == 10
    assert exact_marginals(FAMILIES) == {f: Fraction(3, 8) for f in FAMILIES}


def test_sampled_marginals_match_enumeration():
    n = 10_000
    counts = Counter()
    for i in range(n):
        s = sample_error_strategy(FAMILIES, random.Random(i))
        assert 1 <= len(s.families) <= 2
        counts.update(s.families)
    exact = exact_marginals(FAMILIES)
    for f in FAMILIES:
        assert abs(counts[f] / n - float(exact[f])) <= 0.02


@pytest.mark.parametrize("family", FAMILIES)
def test_single_family_taxonomy_is_constant(family):
    seen = {sample_error_strategy((family,), random.Random(i)) for i in range(200)}
    assert seen == {cold_start_strategy((family,))}


def test_cold_start_definition_text():
    s = cold_start_strategy(("wrapper", "jump"))
    assert s.name == "jump+wrapper"
    assert s.definition == f"Jump error: {FAMILY_DEFINITIONS['jump']}. Wrapper error: {FAMILY_DEFINITIONS['wrapper']}."
    assert not s.evolved


def test_taxonomy_errors():
    with pytest.raises(EmptyTaxonomy):
        sample_error_strategy((), random.Random(0))
    with pytest.raises(ValueError):
        sample_error_strategy(("jump", "blunder"), random.Random(0))


def test_each_agent_makes_one_call(make_endpoint):
    ep = make_endpoint(radical_script())
    q = RADICAL_QUERY
    c_s = solve(initial_prompt(Role.SOLVER), q, DEC, ep, round=1)
    assert ep.backend.count() == 1
    strat = cold_start_strategy(("jump",))
    p_c = initial_prompt(Role.CHALLENGER)
    c_c = challenge(p_c, q, strat, DEC, ep, round=1)
    assert ep.backend.count() == 2
    assert p_c.strategy_slot is None
    assert "Strategy Name: jump" in ep.backend.calls[-1].messages[0].content
    bundle = critique(initial_prompt(Role.FEEDBACK), q, c_s, c_c, DEC, ep, round=1)
    assert ep.backend.count() == 3
    shown = ep.backend.calls[-1].messages[0].content
    assert RADICAL_SOLVER_R1.strip() in shown and RADICAL_CHALLENGER_R1.strip() in shown
    assert bundle.well_formed


def test_unstructured_output_becomes_malformed_chain(make_endpoint):
    ep = make_endpoint({("solver", 1, RADICAL_QUERY.id): "I am not sure."})
    c = solve(initial_prompt(Role.SOLVER), RADICAL_QUERY, DEC, ep)
    assert c.malformed and c.raw_text == "I am not sure."


def test_radical_feedback_parse():
    b = parse_feedback(RADICAL_FEEDBACK_R1, round=1)
    assert b.solver_directive.startswith("Require an explicit candidate → constraint check → substitution check")
    assert b.next_strategy.evolved and b.next_strategy.origin_round == 1
    assert b.next_strategy.definition.startswith("Keep arithmetic correct but misinterpret")
    (item,) = b.items_for(Role.SOLVER)
    assert (item.step, item.issue_type) == (4, "missing-assumption")


def test_inline_item_literal():
    raw = ("[Step 1 Output: Logical Enhancement Directive for G_S]\nCheck each step.\n"
           "{Chain: C_S; Step: 3; Issue type: unclear step; Suggestion: add a counterexample.}")
    (item,) = parse_feedback(raw).items
    assert item == FeedbackItem(Role.SOLVER, 3, "unclear-step", "add a counterexample.")


def test_unknown_issue_label_is_kept():
    raw = "Strategy Name: X\nStrategy Definition: Y.\n{Chain: C_C; Step: 2; Issue type: sign slip; Suggestion: recheck.}"
    (item,) = parse_feedback(raw).items
    assert (item.chain, item.issue_type, item.issue_label) == (Role.CHALLENGER, "other", "sign slip")


def test_bad_items_are_dropped():
    raw = "[Step 1 Output: x]\nCheck.\n{Chain: nobody; Step: 2; Issue type: unclear step; Suggestion: s}"
    assert parse_feedback(raw).items == ()


def test_unparseable_feedback_keeps_raw_text():
    with pytest.raises(FeedbackUnparseable) as info:
        parse_feedback("no structure at all")
    assert info.value.raw_text == "no structure at all"


# -- round trip -------------------------------------------------------------

_WORDS = ["check", "the", "domain", "root", "each", "sign", "step", "value", "bound", "case",
          "x", "3", "negative", "sum", "ratio", "(a)", "-", "units", "carefully", "claim"]
_text = st.lists(st.sampled_from(_WORDS), min_size=1, max_size=12).map(" ".join)
_item = st.builds(
    FeedbackItem,
    chain=st.sampled_from([Role.SOLVER, Role.CHALLENGER]),
    step=st.integers(1, 30),
    issue_type=st.sampled_from(ISSUE_TYPES),
    suggestion=_text,
) | st.builds(
    lambda c, s, label, sug: FeedbackItem(c, s, "other", sug, label),
    st.sampled_from([Role.SOLVER, Role.CHALLENGER]), st.integers(1, 30),
    st.sampled_from(["sign slip", "unit error", "scope"]), _text,
)


@st.composite
def bundles(draw):
    rnd = draw(st.integers(1, 9))
    directive = draw(st.none() | _text)
    strategy = draw(st.none() | st.builds(
        lambda n, d: ErrorStrategy(n, d, (), "evolved", rnd), _text, _text))
    if directive is None and strategy is None:
        directive = draw(_text)
    bundle = FeedbackBundle(
        items=tuple(draw(st.lists(_item, max_size=4))),
        solver_directive=directive,
        next_strategy=strategy,
        flaw_analysis=draw(st.just("") | _text),
        solver_assessment=draw(st.just("") | _text),
        rationale=draw(st.just("") | _text),
    )
    return rnd, bundle


@settings(max_examples=500, deadline=None)
@given(bundles())
def test_feedback_round_trip(case):
    rnd, bundle = case
    assert parse_feedback(format_feedback(bundle), rnd) == bundle
