import json
from pathlib import Path

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capcot.backend import (
    CompletionRequest,
    DecodingConfig,
    Endpoint,
    Message,
    OpenAIBackend,
    RequestTag,
    ScriptedBackend,
    TokenLedger,
    UsageRecord,
    complete,
    parse_completion,
    token_report,
)
from capcot.domain import Role
from capcot.errors import BackendError, BackendUnavailable, InvalidResponse, ScriptMiss

FIXTURES = Path(__file__).parent / "fixtures"
PING = CompletionRequest("gpt-4o-mini", (Message("user", "ping"),))


def test_default_request_bytes_match_capture():
    assert PING.to_bytes() == (FIXTURES / "default_request.json").read_bytes()


def test_default_body_fields():
    body = json.loads(PING.to_bytes())
    assert body["temperature"] == 0.0
    assert body["max_tokens"] == 2048
    assert body["frequency_penalty"] == 0.0 and body["presence_penalty"] == 0.0
    assert "top_p" not in body


def test_nucleus_sampling_adds_top_p():
    req = CompletionRequest("m", (Message("user", "x"),), DecodingConfig(nucleus_sampling=True, top_p=0.9))
    assert json.loads(req.to_bytes())["top_p"] == 0.9


def test_tag_never_reaches_the_wire():
    req = CompletionRequest("m", (Message("user", "x"),), tag=RequestTag(Role.SOLVER, 2, "qid-77", "run-xyz"))
    assert b"run-xyz" not in req.to_bytes() and b"qid-77" not in req.to_bytes()
    assert set(json.loads(req.to_bytes())) == {"model", "messages", "temperature", "max_tokens",
                                                "frequency_penalty", "presence_penalty"}


@pytest.mark.parametrize("t", [-0.1, 1.01])
def test_temperature_range(t):
    with pytest.raises(ValueError):
        DecodingConfig(temperature=t)


def _mock(handler, **kw) -> Endpoint:
    backend = OpenAIBackend("http://llm.test/v1", "k", transport=httpx.MockTransport(handler))
    return Endpoint(backend, sleep=kw.pop("sleep", lambda _s: None), **kw)


def _ok(content="hi", finish="stop"):
    return httpx.Response(200, json={"choices": [{"message": {"content": content}, "finish_reason": finish}],
                                     "usage": {"prompt_tokens": 3, "completion_tokens": 1}})


def test_http_post_sends_captured_bytes():
    seen = []

    def handler(request):
        seen.append(request)
        return _ok()

    resp = complete(_mock(handler), PING)
    assert resp.content == "hi" and resp.usage.prompt_tokens == 3
    assert seen[0].url.path == "/v1/chat/completions"
    assert seen[0].content == (FIXTURES / "default_request.json").read_bytes()
    assert seen[0].headers["authorization"] == "Bearer k"


def test_transient_errors_retry_with_backoff():
    replies = iter([httpx.Response(503), httpx.Response(429), _ok("done")])
    sleeps = []
    resp = complete(_mock(lambda r: next(replies), sleep=sleeps.append), PING)
    assert resp.content == "done"
    assert sleeps == [1.0, 2.0]


def test_retries_are_bounded():
    calls = []

    def handler(request):
        calls.append(1)
        raise httpx.ReadTimeout("slow", request=request)

    with pytest.raises(BackendUnavailable):
        complete(_mock(handler, max_attempts=4), PING)
    assert len(calls) == 4


def test_invalid_response_is_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(200, json={"choices": []})

    with pytest.raises(InvalidResponse):
        complete(_mock(handler), PING)
    assert len(calls) == 1


def test_client_errors_are_fatal():
    with pytest.raises(BackendError):
        complete(_mock(lambda r: httpx.Response(401, text="nope")), PING)


def test_parse_completion_truncation():
    r = parse_completion({"choices": [{"message": {"content": ""}, "finish_reason": "length"}]})
    assert r.truncated and r.content == ""
    with pytest.raises(InvalidResponse):
        parse_completion({"choices": [{"message": {"content": ""}, "finish_reason": "stop"}]})


def test_scripted_backend_makes_no_network_calls(monkeypatch):
    def explode(*a, **k):
        raise AssertionError("network used")

    monkeypatch.setattr(httpx.Client, "send", explode)
    monkeypatch.setattr(httpx.HTTPTransport, "handle_request", explode)
    backend = ScriptedBackend({("solver", 1, "q"): "Answer: 1"})
    req = CompletionRequest("m", (Message("user", "a b c"),), tag=RequestTag(Role.SOLVER, 1, "q"))
    ep = Endpoint(backend)
    resp = complete(ep, req)
    assert resp.content == "Answer: 1"
    assert (resp.usage.prompt_tokens, resp.usage.completion_tokens) == (3, 2)
    assert len(ep.ledger) == 1


def test_scripted_wildcard_round_and_miss():
    backend = ScriptedBackend({("solver", None, "q"): "x"})
    for r in (1, 7):
        assert backend.send(CompletionRequest("m", (Message("user", "."),), tag=RequestTag(Role.SOLVER, r, "q"))).content == "x"
    with pytest.raises(ScriptMiss):
        backend.send(CompletionRequest("m", (Message("user", "."),), tag=RequestTag(Role.FEEDBACK, 1, "q")))
    assert backend.count(Role.SOLVER) == 2 and backend.count() == 3


def test_scripted_from_file(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps([{"role": "solver", "round": 1, "query_id": "a", "text": "t"}]))
    assert ScriptedBackend.from_file(path).script == {("solver", 1, "a"): "t"}


_records = st.lists(st.builds(
    UsageRecord,
    run_id=st.sampled_from(["r1", "r2"]),
    round=st.integers(1, 3),
    role=st.sampled_from([r.value for r in Role]),
    query_id=st.sampled_from(["a", "b", "c"]),
    prompt_tokens=st.integers(0, 500),
    completion_tokens=st.integers(0, 500),
    dataset=st.sampled_from(["", "gsm"]),
), max_size=30)


@settings(max_examples=100, deadline=None)
@given(_records, st.sampled_from(["role", "round", "dataset"]))
def test_token_report_against_naive_sum(records, group_by):
    rows = {r.group: r for r in token_report(TokenLedger(records), group_by)}
    keys = {str(getattr(r, group_by)) for r in records}
    assert set(rows) == keys | {"all"}
    for k in keys:
        mine = [r for r in records if str(getattr(r, group_by)) == k]
        assert rows[k].total_tokens == sum(r.prompt_tokens + r.completion_tokens for r in mine)
        assert rows[k].questions == len({(r.run_id, r.query_id) for r in mine})
    assert rows["all"].records == len(records)
    assert sum(rows[k].total_tokens for k in keys) == rows["all"].total_tokens


def test_empty_report_has_zero_all_row():
    (row,) = token_report(TokenLedger())
    assert row.group == "all" and row.total_tokens == 0 and row.per_question() == 0.0
