import json

import httpx
import pytest

from sonolex.backends import (
    AuthFailureError,
    LlmBackend,
    LlmEndpointConfig,
    MalformedReplyError,
    RateLimitedError,
    RetryPolicy,
    RuleBackend,
    TransportError,
    extract_batch,
    extract_llm,
    extract_rule_records,
    extract_rules,
)
from sonolex.report_parser import extract_sections
from sonolex.schema import NA, ALL_KEYS, ReportDocument, make_record
from sonolex.synth import SynthConfig, generate_corpus

from fixtures import WORKED_OUTPUT_BLOCK, WORKED_RECORD_1, WORKED_RECORD_2, WORKED_REPORT


def _doc(observation, impression=None):
    return ReportDocument(id="t", raw_text="", observation=observation, impression=impression)


# --- rule backend -----------------------------------------------------------


def test_rule_extraction_pinned_clause():
    records = extract_rule_records(
        _doc("At the left 6:00 retroareolar location, there is a 0.6 x 0.4 x 0.6 cm hypoechoic mass")
    )
    assert len(records) == 1
    record = records[0]
    expected = make_record(
        side_of_breast="left",
        clock_position="6",
        anatomical_region="retroareolar",
        echogenicity="hypoechoic",
        lesion_type="mass",
    )
    assert record == expected
    untouched = [k for k in ALL_KEYS if record.get(k) == NA]
    assert len(untouched) == 11


def test_no_location_anchor_yields_empty():
    assert extract_rule_records(_doc("No suspicious cystic or solid masses identified.")) == ()


def test_rules_always_parseable():
    output = extract_rules(extract_sections(WORKED_REPORT, report_id="worked"))
    assert output.parsed is not None
    assert output.error is None
    assert output.backend_name == "rules"
    from sonolex.normalizer import is_jsonable

    assert is_jsonable(output.raw_text)


def test_rules_deterministic():
    document = extract_sections(WORKED_REPORT, report_id="worked")
    assert extract_rules(document) == extract_rules(document)


def test_rules_worked_report_first_lesion():
    records = extract_rule_records(extract_sections(WORKED_REPORT))
    assert len(records) == 2
    assert records[0].side_of_breast == "right"
    assert records[0].clock_position == "9"
    assert records[0].distance_from_nipple == "1"
    assert records[0].lesion_type == "cyst"
    # Impression linkage fills the left 6:00 lesion only.
    assert records[1].suspicion_of_malignancy == "probably benign"
    assert records[1].lesion_subtype == "cyst with debris"
    assert records[0].suspicion_of_malignancy == NA


def test_n_shorthand_distance():
    records = extract_rule_records(_doc("There is a 3 x 2 mm cyst in the left breast 3:00 N9 location."))
    assert records[0].distance_from_nipple == "9"
    assert records[0].clock_position == "3"


def test_impression_linkage_prefers_exact_then_unique_side():
    observation = (
        "At the right 12:00 position, there is a 1 cm mass. "
        "In the left breast, there is a 2 cm cyst."
    )
    impression = (
        "Probably benign finding at the right 12:00 position; recommend 6 months follow-up. "
        "Benign finding in the left breast."
    )
    records = extract_rule_records(_doc(observation, impression))
    assert records[0].suspicion_of_malignancy == "probably benign"
    assert records[0].next_step == "6 months follow-up"
    assert records[1].suspicion_of_malignancy == "benign"


def test_unlinkable_impression_leaves_na():
    observation = (
        "In the left breast, there is a 1 cm mass. "
        "In the left breast, there is a 2 cm cyst."
    )
    # Two left lesions: a side-only impression cannot link to either.
    records = extract_rule_records(_doc(observation, "Benign finding in the left breast."))
    assert all(r.suspicion_of_malignancy == NA for r in records)


# --- LLM backend ------------------------------------------------------------


def _config(**overrides):
    defaults = dict(
        base_url="http://llm.test/v1",
        model_name="test-model",
        retry=RetryPolicy(count=2, backoff=0.0),
    )
    defaults.update(overrides)
    return LlmEndpointConfig(**defaults)


def _reply(content):
    return httpx.Response(200, json={"choices": [{"message": {"content": content}}]})


def test_llm_round_trip_parses_reply(monkeypatch):
    monkeypatch.setenv("BUREX_API_KEY", "sekrit")
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return _reply(WORKED_OUTPUT_BLOCK)

    with httpx.Client(transport=httpx.MockTransport(handler)) as client:
        output = extract_llm(_config(), "the prompt", "r1", client=client)

    assert output.parsed == (WORKED_RECORD_1, WORKED_RECORD_2)
    assert output.raw_text == WORKED_OUTPUT_BLOCK
    assert output.latency > 0
    assert seen["url"] == "http://llm.test/v1/chat/completions"
    assert seen["auth"] == "Bearer sekrit"
    assert seen["body"]["model"] == "test-model"
    assert seen["body"]["temperature"] == 0.0
    assert seen["body"]["messages"] == [{"role": "user", "content": "the prompt"}]
    assert "max_tokens" in seen["body"]


def test_llm_unparseable_reply_preserved():
    with httpx.Client(transport=httpx.MockTransport(lambda r: _reply("I cannot help"))) as client:
        output = extract_llm(_config(), "p", "r1", client=client)
    assert output.parsed is None
    assert output.raw_text == "I cannot help"


def test_llm_transport_error_reports_attempts():
    def handler(request):
        raise httpx.ConnectError("unreachable")

    with httpx.Client(transport=httpx.MockTransport(handler)) as client:
        with pytest.raises(TransportError) as excinfo:
            extract_llm(_config(), "p", "r1", client=client)
    assert excinfo.value.attempts == 3  # 1 try + 2 retries


def test_llm_auth_failure_not_retried():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        return httpx.Response(401, json={"error": "bad key"})

    with httpx.Client(transport=httpx.MockTransport(handler)) as client:
        with pytest.raises(AuthFailureError):
            extract_llm(_config(), "p", "r1", client=client)
    assert calls["n"] == 1


def test_llm_rate_limit_retried_then_surfaced():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        return httpx.Response(429, json={"error": "slow down"})

    with httpx.Client(transport=httpx.MockTransport(handler)) as client:
        with pytest.raises(RateLimitedError):
            extract_llm(_config(), "p", "r1", client=client)
    assert calls["n"] == 3


def test_llm_rate_limit_then_success():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        if calls["n"] < 3:
            return httpx.Response(429)
        return _reply("[]")

    with httpx.Client(transport=httpx.MockTransport(handler)) as client:
        output = extract_llm(_config(), "p", "r1", client=client)
    assert output.parsed == ()


def test_llm_malformed_reply():
    with httpx.Client(
        transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"nope": True}))
    ) as client:
        with pytest.raises(MalformedReplyError):
            extract_llm(_config(), "p", "r1", client=client)


def test_config_validation():
    with pytest.raises(ValueError):
        _config(max_concurrent_requests=0)
    with pytest.raises(ValueError):
        _config(temperature=-0.5)


# --- batching ---------------------------------------------------------------


def _documents(n=3):
    corpus = generate_corpus(SynthConfig(seed=5, n_reports=n))
    return [document for document, _ in corpus]


def test_batch_preserves_order():
    documents = _documents(3)
    outputs = extract_batch(RuleBackend(), documents)
    assert [o.report_id for o in outputs] == [d.id for d in documents]


def test_batch_empty():
    assert extract_batch(RuleBackend(), []) == []


def test_batch_isolates_failures():
    class FlakyBackend:
        name = "flaky"

        def extract(self, report):
            if report.id.endswith("1"):
                raise TransportError("boom", attempts=3)
            return RuleBackend().extract(report)

    documents = _documents(3)
    outputs = extract_batch(FlakyBackend(), documents, max_concurrent=2)
    assert len(outputs) == 3
    assert outputs[1].error is not None and "boom" in outputs[1].error
    assert outputs[0].parsed is not None
    assert outputs[2].parsed is not None


def test_batch_concurrency_does_not_change_results():
    documents = _documents(6)
    sequential = extract_batch(RuleBackend(), documents, max_concurrent=1)
    concurrent = extract_batch(RuleBackend(), documents, max_concurrent=4)
    assert sequential == concurrent


def test_llm_backend_uses_instruction_prompt():
    prompts = []

    def handler(request):
        prompts.append(json.loads(request.content)["messages"][0]["content"])
        return _reply("[]")

    config = _config()
    backend = LlmBackend(config, transport=httpx.MockTransport(handler))
    documents = _documents(2)
    outputs = extract_batch(backend, documents)
    backend.close()
    assert all(o.parsed == () for o in outputs)
    assert len(prompts) == 2
    prefix = prompts[0].split("#### Input Report:")[0]
    assert prompts[1].startswith(prefix)
