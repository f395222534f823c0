"""The ten acceptance criteria, one test each, offline against scripted backends.

Each test reports a PASS/FAIL line; the lines are collected into the pytest
terminal summary. ``python3 tests/test_acceptance.py`` runs just this file.
"""

import contextlib
import itertools
import json
import random
import time
from collections import Counter
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import given, settings

from capcot.agents import FAMILIES, cold_start_strategy, format_feedback, parse_feedback, sample_error_strategy
from capcot.backend import CompletionRequest, DecodingConfig, Endpoint, Message, ScriptedBackend
from capcot.cycle import CycleConfig, infer, run_optimization
from capcot.domain import FeedbackItem, Role
from capcot.errors import BackendUnavailable
from capcot.evaluation import (
    DEFAULT_TEMPERATURES,
    Outcome,
    evaluate,
    load_dataset,
    mean_variation,
    score,
    temperature_sweep,
)
from capcot.parsing import parse_chain
from capcot.prompts import initial_prompt
from capcot.sfpr import sfpr_refine
from tests.conftest import scripted
from tests.fixtures.worked_examples import (
    RADICAL_QUERY,
    SPEED_CHALLENGER_R1,
    SPEED_SOLVER_R1,
    radical_script,
)
from tests.test_agents import bundles
from tests.test_cycle import CFG, QUERIES, CrashAtRound, multi_script, tree
from tests.test_evaluation import HAND, hand_records, hand_script
from tests.test_sfpr import NOUNS, distinct

FIXTURES = Path(__file__).parent / "fixtures"
RESULTS: dict[int, str] = {}


@contextlib.contextmanager
def criterion(n: int, title: str):
    try:
        yield
    except BaseException:
        RESULTS[n] = f"FAIL  {n:>2}. {title}"
        print(RESULTS[n])
        raise
    RESULTS[n] = f"PASS  {n:>2}. {title}"
    print(RESULTS[n])


def test_01_golden_cycle():
    with criterion(1, "golden cycle: guideline added, evolved strategy, round-2 answer {5} correct, < 1 s"):
        start = time.perf_counter()
        ep = scripted(radical_script())
        lineage = run_optimization(CycleConfig(rounds=1, train_queries=("radical",)), [RADICAL_QUERY], ep)
        p_s = lineage.final_solver
        assert p_s.version == 1
        assert any("Require an explicit candidate → constraint check → substitution check" in g
                   for g in p_s.dynamic_guidelines)
        assert lineage.prompts_at(1).challenger.strategy_slot.evolved
        chain = infer(p_s, RADICAL_QUERY, DecodingConfig(), ep, round=2)
        assert chain.final_answer == "{5}"
        assert score(chain, RADICAL_QUERY.gold) is Outcome.CORRECT
        assert time.perf_counter() - start < 1.0


def test_02_worked_chain_parsing():
    with criterion(2, "worked chains: 4 and 3 steps, '33.3 mph' by fallback, '37.5 mph' by marker"):
        s = parse_chain(SPEED_SOLVER_R1, Role.SOLVER)
        c = parse_chain(SPEED_CHALLENGER_R1, Role.CHALLENGER)
        assert (len(s.steps), len(c.steps)) == (4, 3)
        assert s.final_answer == "33.3 mph" and "partial" in s.flags
        assert c.final_answer == "37.5 mph" and "partial" not in c.flags


_bundle_cases = []


@settings(max_examples=500, deadline=None, database=None)
@given(bundles())
def _round_trip(case):
    rnd, bundle = case
    _bundle_cases.append(1)
    assert parse_feedback(format_feedback(bundle), rnd) == bundle


def test_03_feedback_round_trip():
    with criterion(3, "feedback: 500 bundles round-trip through the bracketed layout; inline literal parses"):
        _bundle_cases.clear()
        _round_trip()
        assert len(_bundle_cases) >= 500
        raw = ("[Step 1 Output: Logical Enhancement Directive for G_S]\nCheck each step.\n"
               "{Chain: C_S; Step: 3; Issue type: unclear step; Suggestion: add a counterexample.}")
        assert parse_feedback(raw).items == (FeedbackItem(Role.SOLVER, 3, "unclear-step", "add a counterexample."),)


def test_04_sfpr_properties():
    with criterion(4, "SFPR: idempotent, cap 10 over 1,000 applications, base stable, versions exact"):
        rng = random.Random(2024)
        pool = [distinct(i) for i in range(len(NOUNS))] + ["Discard x=2 since 2 < 3.", "the result looked off"]
        base = initial_prompt(Role.SOLVER)
        p = base
        for _ in range(1000):
            directives = rng.sample(pool, rng.randint(0, 5))
            before = p
            p = sfpr_refine(p, directives, cap=10)
            assert len(p.dynamic_guidelines) <= 10
            assert p.base_instructions == base.base_instructions
            assert p.version == before.version + (p.dynamic_guidelines != before.dynamic_guidelines)
            assert sfpr_refine(p, directives, cap=10) == p
        fifo = base
        for i in range(12):
            fifo = sfpr_refine(fifo, [distinct(i)], cap=10)
        assert fifo.dynamic_guidelines == tuple(distinct(i) for i in range(2, 12)) and fifo.version == 12


def test_05_strategy_sampling():
    with criterion(5, "sampling: k in {1,2}, single family constant, marginals within 2 pp of enumeration"):
        outcomes = {}
        for k in (1, 2):
            subsets = list(itertools.combinations(FAMILIES, k))
            for s in subsets:
                outcomes[s] = Fraction(1, 2) / len(subsets)
        assert len(outcomes) == 10 and sum(outcomes.values()) == 1
        exact = {f: sum(p for s, p in outcomes.items() if f in s) for f in FAMILIES}
        counts = Counter()
        n = 10_000
        for i in range(n):
            s = sample_error_strategy(FAMILIES, random.Random(i))
            assert len(s.families) in (1, 2)
            counts.update(s.families)
        assert all(abs(counts[f] / n - float(exact[f])) <= 0.02 for f in FAMILIES)
        for f in FAMILIES:
            assert {sample_error_strategy((f,), random.Random(i)) for i in range(100)} == {cold_start_strategy((f,))}


def test_06_metric_oracles():
    with criterion(6, "metrics: MAD oracles, 10-item accuracy equals manual count, translation invariance"):
        assert mean_variation([80, 80, 80]) == 0
        assert abs(mean_variation([80, 82, 84]) - 1.3333333333333333) <= 1e-9
        manual = sum(r["label"] == "correct" for r in hand_records()) / 10
        report = evaluate(initial_prompt(Role.SOLVER), load_dataset(HAND), 1, endpoint=scripted(hand_script()))
        assert report.runs[0].accuracy == manual == 0.6
        rng = random.Random(6)
        for _ in range(100):
            xs = [rng.uniform(0, 100) for _ in range(rng.randint(1, 12))]
            c = rng.uniform(-100, 100)
            assert abs(mean_variation([x + c for x in xs]) - mean_variation(xs)) <= 1e-9


def test_07_wire_protocol():
    with criterion(7, "wire: default request bytes match the captured fixture"):
        raw = CompletionRequest("gpt-4o-mini", (Message("user", "ping"),)).to_bytes()
        assert raw == (FIXTURES / "default_request.json").read_bytes()
        for needle in (b'"temperature": 0.0', b'"max_tokens": 2048', b'"frequency_penalty": 0.0',
                       b'"presence_penalty": 0.0'):
            assert needle in raw


def test_08_call_counts():
    with criterion(8, "calls: 3 per (query, round) in optimization, 1 per inference, no script misses"):
        ep = scripted(multi_script())
        lineage = run_optimization(CFG, QUERIES, ep)
        per_key = Counter((c.tag.query_id, c.tag.round) for c in ep.backend.calls)
        assert set(per_key.values()) == {3} and len(per_key) == len(QUERIES) * CFG.rounds
        per_role = Counter((c.tag.query_id, c.tag.round, c.tag.role) for c in ep.backend.calls)
        assert set(per_role.values()) == {1}
        before = ep.backend.count()
        infer(lineage.final_solver, QUERIES[1], DecodingConfig(), ep, round=CFG.rounds + 1)
        assert ep.backend.count() - before == 1
        # role-restricted script: only solver entries, used for inference only
        solver_only = scripted({k: v for k, v in multi_script().items() if k[0] == "solver"})
        infer(lineage.final_solver, QUERIES[0], DecodingConfig(), solver_only, round=9)
        assert solver_only.backend.count() == 1


def test_09_reproducibility(tmp_path):
    with criterion(9, "reproducibility: byte-identical lineages; crash-resume at round 2 matches reference"):
        run_optimization(CFG, QUERIES, scripted(multi_script()), tmp_path / "a")
        run_optimization(CFG, QUERIES, scripted(multi_script()), tmp_path / "b")
        assert tree(tmp_path / "a") == tree(tmp_path / "b")
        with pytest.raises(BackendUnavailable):
            run_optimization(CFG, QUERIES, Endpoint(CrashAtRound(ScriptedBackend(multi_script()), 2)), tmp_path / "c")
        run_optimization(CFG, QUERIES, scripted(multi_script()), tmp_path / "c")
        assert tree(tmp_path / "c") == tree(tmp_path / "a")


def test_10_temperature_sweep():
    with criterion(10, "sweep: 11 default points, mean variation 0 for a temperature-blind backend"):
        report = temperature_sweep(initial_prompt(Role.SOLVER), load_dataset(HAND), endpoint=scripted(hand_script()))
        assert len(report.per_temperature) == 11
        assert [p.temperature for p in report.per_temperature] == list(DEFAULT_TEMPERATURES)
        assert report.mean_variation == 0.0
        assert json.loads(report.to_json())["mean_variation"] == 0.0


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
