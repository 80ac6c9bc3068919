import json
import logging
import math
import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_unit, random_segments
from mtpe.corpus import Label, label_corpus
from mtpe.finetune import (
    ApiError,
    BatchFailed,
    FineTuneClient,
    FineTuneJob,
    JobStatus,
    PromptEncoding,
    RemoteModel,
    Response,
    RetryableError,
    ScriptedTransport,
    TransportError,
    classify_batch,
    load_api_key,
)
from mtpe.finetune.client import events_to_csv, events_to_json

E, K = Label.EDIT, Label.KEEP


class FakeClock:
    def __init__(self):
        self.now = 0.0
        self.sleeps = []

    def __call__(self):
        return self.now

    def sleep(self, seconds):
        self.sleeps.append(seconds)
        self.now += seconds


def client_for(scenario=None, api_key=None, clock=None):
    clock = clock or FakeClock()
    transport = ScriptedTransport(scenario, api_key=api_key, clock=lambda: 1_700_000_000)
    return FineTuneClient(transport, sleep=clock.sleep, clock=clock), clock


def test_upload_returns_file_id():
    client, _ = client_for()
    assert client.upload_file('{"prompt": "x", "completion": " keep"}\n') == "file-0001"
    assert client.upload_file("y\n") == "file-0002"
    with pytest.raises(ValueError):
        client.upload_file("")


def test_timeout_is_retried_then_fails():
    client, clock = client_for({"faults": [{"path": "/v1/files", "error": "timeout"}]})
    with pytest.raises(RetryableError, match="3 attempts"):
        client.upload_file("x\n")
    assert client.requests == 3
    assert clock.sleeps == [1.0, 2.0]


def test_transient_5xx_and_429_recover():
    faults = [{"path": "/v1/files", "status": 503, "times": 1}, {"path": "/v1/files", "status": 429, "times": 1}]
    client, clock = client_for({"faults": faults})
    assert client.upload_file("x\n") == "file-0001"
    assert client.retries == 2 and clock.sleeps == [1.0, 2.0]


def test_401_is_fatal_without_retry():
    client, _ = client_for({"api_key": "sk-right"}, api_key="sk-wrong")
    with pytest.raises(ApiError, match="invalid credentials") as info:
        client.upload_file("x\n")
    assert info.value.status == 401
    assert client.requests == 1


def test_other_4xx_fatal():
    client, _ = client_for({"faults": [{"path": "/v1/files", "status": 400, "message": "bad"}]})
    with pytest.raises(ApiError, match="bad"):
        client.upload_file("x\n")
    assert client.requests == 1


def test_create_job():
    client, _ = client_for()
    file_id = client.upload_file("x\n")
    job = client.create_job(file_id, "curie", {"n_epochs": 4})
    assert job.status is JobStatus.PENDING
    assert job.job_id == "ftjob-0001" and job.hyperparams == {"n_epochs": 4}
    again = client.create_job(file_id, "curie")
    assert again.job_id != job.job_id


def test_create_job_unknown_model():
    client, _ = client_for()
    file_id = client.upload_file("x\n")
    with pytest.raises(ApiError) as info:
        client.create_job(file_id, "gpt-17")
    assert info.value.status == 404


def test_job_invariants():
    with pytest.raises(ValueError):
        FineTuneJob("j", "curie", JobStatus.RUNNING, fine_tuned_model="ft:x")
    with pytest.raises(ValueError):
        FineTuneJob("j", "curie", JobStatus.SUCCEEDED, "ft:x", finished_at=None)
    job = FineTuneJob("j", "curie", JobStatus.SUCCEEDED, "ft:x", 1, 2, {"n_epochs": 4})
    assert FineTuneJob.from_dict(json.loads(json.dumps(job.to_dict()))) == job
    with pytest.raises(ValueError):
        FineTuneJob.from_api({"id": "j", "status": "exploded"})


def _started(client, scenario_model="curie"):
    file_id = client.upload_file("x\n")
    return client.create_job(file_id, scenario_model).job_id


def test_poll_until_success():
    scenario = {"jobs": [{"statuses": ["queued", "running", "succeeded"], "fine_tuned_model": "ft:curie:acme"}]}
    client, clock = client_for(scenario)
    job_id = _started(client)
    result = client.poll_job(job_id, poll_interval=30)
    assert result.job.status is JobStatus.SUCCEEDED
    assert result.job.fine_tuned_model == "ft:curie:acme"
    assert result.polls == 3 and not result.timed_out
    assert len(clock.sleeps) == 2 and all(30 <= s <= 33 for s in clock.sleeps)


def test_poll_timeout_returns_last_state():
    client, clock = client_for({"jobs": [{"statuses": ["running"]}]})
    job_id = _started(client)
    result = client.poll_job(job_id, poll_interval=0.25, timeout=1.0)
    assert result.timed_out and result.job.status is JobStatus.RUNNING
    assert result.polls <= math.ceil(1.0 / 0.25) + 1
    assert clock.now == pytest.approx(1.0)


def test_default_poll_timeout_is_generous():
    import inspect

    default = inspect.signature(FineTuneClient.poll_job).parameters["timeout"].default
    assert default >= 30 * 60


@settings(max_examples=50, deadline=None)
@given(st.floats(0.5, 120), st.floats(1, 4000), st.floats(0, 1))
def test_poll_request_bound(interval, timeout, jitter):
    client, _ = client_for({"jobs": [{"statuses": ["running"]}]})
    job_id = _started(client)
    before = client.requests
    result = client.poll_job(job_id, poll_interval=interval, timeout=timeout, jitter=jitter)
    assert result.timed_out
    assert client.requests - before == result.polls <= math.ceil(timeout / interval) + 1


def test_poll_survives_transport_errors():
    scenario = {
        "jobs": [{"statuses": ["running", "succeeded"]}],
        "faults": [{"method": "GET", "path": "/v1/fine_tuning/jobs/", "error": "timeout", "times": 3}],
    }
    client, _ = client_for(scenario)
    client.attempts = 1
    job_id = _started(client)
    result = client.poll_job(job_id, poll_interval=10)
    assert result.transport_errors == 3
    assert result.job.status is JobStatus.SUCCEEDED


def test_events_sorted_and_bit_exact():
    losses = [random.Random(3).random() * 2 for _ in range(5)]
    steps = [{"step": i + 1, "loss": v} for i, v in enumerate(losses)]
    client, _ = client_for({"jobs": [{"statuses": ["queued", "running", "succeeded"], "events": steps}]})
    job_id = _started(client)
    assert client.fetch_events(job_id) == []  # still queued
    client.get_job(job_id)
    events = client.fetch_events(job_id, page_size=2)
    assert [e.step for e in events] == [1, 2, 3, 4, 5]
    assert [struct.pack("<d", e.loss) for e in events] == [struct.pack("<d", v) for v in losses]
    assert events_to_csv(events).splitlines()[0] == "step,loss"
    assert [float(line.split(",")[1]) for line in events_to_csv(events).splitlines()[1:]] == losses
    assert [e["loss"] for e in events_to_json(events)] == losses


def _remote(scenario, dialect="completion"):
    client, _ = client_for(scenario)
    return RemoteModel(client, "ft:curie:acme", PromptEncoding(dialect))


@pytest.mark.parametrize("dialect", ["completion", "chat"])
@pytest.mark.parametrize("answer, label", [(" edit", E), ("Keep", K)])
def test_remote_classify(dialect, answer, label):
    model = _remote({"completions": {"default": answer}}, dialect)
    assert model.classify("s", "m") == (label, None)


def test_remote_confidence_from_logprob():
    model = _remote({"completions": {"default": {"text": " edit", "logprob": -0.5}}})
    label, conf = model.classify("s", "m")
    assert label is E and conf == pytest.approx(math.exp(-0.5))


def test_remote_unknown_model():
    client, _ = client_for()
    with pytest.raises(ApiError):
        RemoteModel(client, "no-such-model").classify("s", "m")


def _segments(n):
    units = [make_unit(f"u{i:04d}", source=f"src {i}", mt=f"mt {i}", pe=f"mt {i}" if i % 3 else f"pe {i}")
             for i in range(n)]
    return label_corpus(units)


def test_batch_842_in_order():
    segs = _segments(842)
    by_mt = {s.unit.mt: (" edit" if s.label is E else " keep") for s in segs[::2]}
    model = _remote({"completions": {"by_mt": by_mt, "default": " keep"}})
    preds = classify_batch(model, segs, concurrency=4)
    assert [p.unit_id for p in preds] == [s.id for s in segs]
    assert all(p.predicted is s.label for p, s in zip(preds[::2], segs[::2]))


def test_batch_one_failure_abstains():
    segs = _segments(10)
    model = _remote({"completions": {"by_mt": {"mt 4": "maybe"}, "default": " edit"}})
    preds = classify_batch(model, segs)
    assert len(preds) == 10
    assert [p.unit_id for p in preds if p.abstained] == ["u0004"]
    assert "UnparseableLabel" in preds[4].error


def test_batch_transport_failure_abstains():
    segs = _segments(10)
    faults = [{"path": "/v1/completions", "mt": "mt 7", "error": "timeout"}]
    model = _remote({"faults": faults, "completions": {"default": " keep"}})
    model.client.sleep = lambda s: None
    preds = classify_batch(model, segs, concurrency=3)
    assert [p.abstained for p in preds].count(True) == 1 and preds[7].abstained


def test_batch_all_fail():
    model = _remote({"completions": {"default": "banana"}})
    with pytest.raises(BatchFailed):
        classify_batch(model, _segments(5))
    with pytest.raises(ValueError):
        classify_batch(model, _segments(5), concurrency=0)


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 40), st.integers(0, 1000))
def test_batch_order_under_random_latency(n, seed):
    segs = random_segments(random.Random(seed), n)
    scenario = {"latency": [0.0, 0.003], "seed": seed,
                "completions": {"by_mt": {s.unit.mt: " edit" for s in segs[::3]}, "default": " keep"}}
    one = classify_batch(_remote(scenario), segs, concurrency=1)
    four = classify_batch(_remote(scenario), segs, concurrency=4)
    assert one == four
    assert [p.unit_id for p in four] == [s.id for s in segs]


def test_load_api_key(tmp_path):
    assert load_api_key(env={"OPENAI_API_KEY": "sk-env"}) == "sk-env"
    key_file = tmp_path / "key"
    key_file.write_text("sk-file\n")
    assert load_api_key(str(key_file), env={"OPENAI_API_KEY": "sk-env"}) == "sk-file"
    with pytest.raises(ApiError):
        load_api_key(env={})


def test_credentials_never_logged(caplog):
    secret = "sk-SECRET-abc123"
    scenario = {"api_key": secret, "faults": [{"path": "/v1/files", "status": 500, "times": 2}]}
    client, _ = client_for(scenario, api_key=secret)
    with caplog.at_level(logging.DEBUG):
        client.upload_file("x\n")
    assert "retrying" in caplog.text
    assert secret not in caplog.text
    assert secret not in repr(client.transport)


def test_http_transport_hides_key():
    from mtpe.finetune import HttpTransport

    transport = HttpTransport("https://api.example.invalid/v1", "sk-SECRET-xyz")
    try:
        assert "sk-SECRET" not in repr(transport)
        assert transport.base_url == "https://api.example.invalid"
    finally:
        transport.close()


def test_response_error_message():
    assert Response(500, {"error": {"message": "boom"}}).error_message == "boom"
    assert Response(500, {"error": "flat"}).error_message == "flat"
    assert Response(502, "nope").error_message == "HTTP 502"


def test_transport_error_type():
    scenario = {"faults": [{"path": "/v1/files", "error": "timeout"}]}
    with pytest.raises(TransportError):
        ScriptedTransport(scenario).request("POST", "/v1/files", files={"file": ("a", b"x", "t")})
