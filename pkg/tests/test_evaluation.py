import json
import statistics
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capcot.backend import CompletionResponse, Endpoint
from capcot.domain import Role, RolePrompt
from capcot.errors import EmptyDataset, UnreadableFile
from capcot.evaluation import (
    DEFAULT_TEMPERATURES,
    Outcome,
    accuracy,
    cot_baseline,
    evaluate,
    load_dataset,
    mean_variation,
    temperature_sweep,
)
from capcot.prompts import initial_prompt

FIXTURES = Path(__file__).parent / "fixtures"
HAND = FIXTURES / "hand_labeled.jsonl"


def hand_records():
    return [json.loads(line) for line in HAND.read_text().splitlines()]


def hand_script():
    return {("solver", None, r["id"]): r["response"] for r in hand_records()}


def test_mad_examples():
    assert mean_variation([80, 80, 80]) == 0
    # mean 82, deviations 2, 0, 2
    assert mean_variation([80, 82, 84]) == pytest.approx(4 / 3, abs=1e-9)
    assert mean_variation([80, 82, 84], "std") == pytest.approx(statistics.pstdev([80, 82, 84]))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=20), st.floats(-50, 50))
def test_translation_invariance(values, shift):
    assert mean_variation([v + shift for v in values]) == pytest.approx(mean_variation(values), abs=1e-9)


def test_hand_labeled_accuracy(make_endpoint):
    labels = [r["label"] for r in hand_records()]
    manual = labels.count("correct") / len(labels)
    assert manual == 0.6
    ds = load_dataset(HAND)
    report = evaluate(initial_prompt(Role.SOLVER), ds, 1, endpoint=make_endpoint(hand_script()))
    (run,) = report.runs
    assert run.accuracy == manual
    assert {k: v.value for k, v in run.outcomes.items()} == {r["id"]: r["label"] for r in hand_records()}


def test_unscorable_counts_against_accuracy():
    assert accuracy([Outcome.CORRECT, Outcome.UNSCORABLE]) == 0.5
    assert accuracy([]) == 0.0


def test_three_runs_and_token_report(make_endpoint):
    ds = load_dataset(HAND)
    ep = make_endpoint(hand_script())
    report = evaluate(initial_prompt(Role.SOLVER), ds, endpoint=ep)
    assert report.accuracies == (0.6, 0.6, 0.6) and report.mean_variation == 0.0
    assert ep.backend.count() == 30
    all_row = report.tokens[-1]
    assert all_row["group"] == "all" and all_row["questions"] == 30
    assert json.loads(report.to_json())["mean_accuracy"] == pytest.approx(0.6)
    assert "mean variation 0.0000" in report.to_table()


def test_sweep_grid(make_endpoint):
    ds = load_dataset(HAND)
    report = temperature_sweep(initial_prompt(Role.SOLVER), ds, endpoint=make_endpoint(hand_script()))
    assert len(DEFAULT_TEMPERATURES) == 11
    assert [p.temperature for p in report.per_temperature] == [i / 10 for i in range(11)]
    assert report.mean_variation == 0.0


class DriftingBackend:
    """Answers correctly only on items whose index is below 10 * (1 - temperature)."""

    def __init__(self, records):
        self.order = {r["id"]: i for i, r in enumerate(records)}
        self.gold = {r["id"]: r["answer"] for r in records}

    def send(self, request):
        qid = request.tag.query_id
        ok = self.order[qid] < round(10 * (1 - request.decoding.temperature))
        return CompletionResponse(f"(1) go\nAnswer: {self.gold[qid] if ok else 'nothing'}")


def test_sweep_drift_against_oracle():
    recs = hand_records()
    ds = load_dataset(HAND)
    report = temperature_sweep(initial_prompt(Role.SOLVER), ds, endpoint=Endpoint(DriftingBackend(recs)))
    expected = [100 * round(10 * (1 - t)) / 10 for t in DEFAULT_TEMPERATURES]
    assert [100 * p.mean for p in report.per_temperature] == pytest.approx(expected)
    mu = sum(expected) / len(expected)
    assert report.mean_variation == pytest.approx(sum(abs(e - mu) for e in expected) / len(expected))


def test_baseline_comparison(make_endpoint):
    ds = load_dataset(HAND)
    script = hand_script()
    ep = make_endpoint(script)
    opt = RolePrompt(Role.SOLVER, initial_prompt(Role.SOLVER).base_instructions, ("Check units.",), 1,
                     instruction=initial_prompt(Role.SOLVER).instruction)
    cmp = cot_baseline(ds, endpoint=ep, optimized=opt, runs=1, optimized_round=2)
    d = cmp.to_dict()
    assert d["baseline_prompt_hash"] != d["optimized_prompt_hash"]
    assert {c.tag.round for c in ep.backend.calls} == {1, 2}
    assert "optimized solver prompt" in cmp.to_table()


def test_loaders(tmp_path):
    gsm = tmp_path / "gsm.jsonl"
    gsm.write_text(json.dumps({"question": "Natalia sold clips to 48 of her friends in April, and then she sold "
                                           "half as many clips in May. How many clips did Natalia sell "
                                           "altogether in April and May?",
                               "answer": "Natalia sold 48/2 = 24 clips in May.\n#### 72"}) + "\n"
                   + json.dumps({"question": "q", "answer": "no marker"}) + "\n")
    ds = load_dataset(gsm, "gsm8k-style")
    assert ds.items[0].gold.canonical == 72.0
    assert [r.line for r in ds.rejects] == [2]

    mc = tmp_path / "mc.jsonl"
    mc.write_text(json.dumps({"id": "m", "question": "Pick", "choices": ["x", "y"], "answer": 1}) + "\n")
    (q,) = load_dataset(mc, "mc-style").items
    assert q.gold.canonical == "B" and "(B) y" in q.text


def test_loader_errors(tmp_path):
    with pytest.raises(UnreadableFile):
        load_dataset(tmp_path / "absent.jsonl")
    empty = tmp_path / "e.jsonl"
    empty.write_text("not json\n")
    with pytest.raises(EmptyDataset):
        load_dataset(empty)
