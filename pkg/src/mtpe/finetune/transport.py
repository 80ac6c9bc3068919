"""HTTP transports for an OpenAI-compatible fine-tuning API.

:class:`HttpTransport` talks to a real server. :class:`ScriptedTransport`
is an in-process fake driven by a JSON scenario, used by the test suite and
by ``--mock-scenario`` on the command line.

Scenario keys (all optional)::

    {
      "models": ["curie", "davinci", "gpt-3.5-turbo"],
      "api_key": "sk-...",              # if set, other keys get 401
      "latency": [0.0, 0.01],           # uniform random delay per request, seconds
      "seed": 0,                        # for latency
      "jobs": [                         # one script per created job, in order
        {"statuses": ["queued", "running", "succeeded"],
         "fine_tuned_model": "ft:curie:acme",
         "events": [{"step": 1, "loss": 0.9}, ...]}
      ],
      "completions": {"by_mt": {"<mt text>": " edit" | {"text": ..., "logprob": ...}},
                      "default": " keep"},
      "faults": [{"method": "POST", "path": "/v1/files", "status": 401,
                  "message": "...", "times": 1},
                 {"path": "/v1/completions", "mt": "<mt text>", "error": "timeout"}]
    }

A job's status advances one step per GET of that job and then stays on its
last value. Job ids are ``ftjob-0001``, ``ftjob-0002``... in creation order.
A scripted job id can also be read from a fresh transport, so separate CLI
invocations see the same job; such a job is already at the end of its
script.
"""

from __future__ import annotations

import json
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Protocol, Union

import httpx

from mtpe.finetune.encoding import SEPARATOR, PROMPT_END

DEFAULT_MODELS = ("curie", "davinci", "babbage-002", "davinci-002", "gpt-3.5-turbo")
_PENDING = ("validating_files", "queued", "pending")


class TransportError(Exception):
    """The request never got an HTTP answer (connection reset, timeout...)."""


@dataclass
class Response:
    status: int
    body: Any

    @property
    def error_message(self) -> str:
        if isinstance(self.body, dict):
            err = self.body.get("error")
            if isinstance(err, dict) and err.get("message"):
                return str(err["message"])
            if isinstance(err, str):
                return err
        return f"HTTP {self.status}"


class Transport(Protocol):
    def request(
        self,
        method: str,
        path: str,
        *,
        json_body: Optional[dict] = None,
        files: Optional[Dict[str, tuple]] = None,
        data: Optional[dict] = None,
        params: Optional[dict] = None,
    ) -> Response: ...


class HttpTransport:
    """Bearer-token transport over httpx; safe to share between threads."""

    def __init__(self, base_url: str, api_key: str, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        if self.base_url.endswith("/v1"):
            self.base_url = self.base_url[:-3]
        self._client = httpx.Client(
            base_url=self.base_url,
            headers={"Authorization": f"Bearer {api_key}"},
            timeout=timeout,
        )

    def __repr__(self):
        return f"HttpTransport({self.base_url!r})"

    def request(self, method, path, *, json_body=None, files=None, data=None, params=None):
        try:
            r = self._client.request(method, path, json=json_body, files=files, data=data, params=params)
        except httpx.TransportError as exc:
            raise TransportError(f"{method} {path}: {type(exc).__name__}") from None
        try:
            body = r.json()
        except ValueError:
            body = {"error": {"message": r.text[:200]}}
        return Response(r.status_code, body)

    def close(self):
        self._client.close()


def _error(status: int, message: str) -> Response:
    return Response(status, {"error": {"message": message}})


def _mt_from_prompt(prompt: str) -> str:
    body = prompt[: -len(PROMPT_END)] if prompt.endswith(PROMPT_END) else prompt
    return body.split(SEPARATOR, 1)[-1]


class ScriptedTransport:
    """Deterministic fake server. Thread-safe."""

    def __init__(self, scenario: Optional[dict] = None, api_key: Optional[str] = None, clock=time.time):
        self.scenario = scenario or {}
        self.api_key = api_key
        self._clock = clock
        self._lock = threading.Lock()
        self._rng = random.Random(self.scenario.get("seed", 0))
        self._files: Dict[str, bytes] = {}
        self._jobs: Dict[str, dict] = {}
        self._n_jobs = 0
        self._faults = [dict(f) for f in self.scenario.get("faults", [])]
        self.calls: List[tuple] = []

    @classmethod
    def from_file(cls, path: Union[str, Path], api_key: Optional[str] = None) -> "ScriptedTransport":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")), api_key=api_key)

    def __repr__(self):
        return "ScriptedTransport()"

    # -- helpers

    def _fault_for(self, method: str, path: str, mt: Optional[str]) -> Optional[dict]:
        for f in self._faults:
            if f.get("method", method) != method:
                continue
            if not path.startswith(f.get("path", "")):
                continue
            if "mt" in f and f["mt"] != mt:
                continue
            times = f.get("times")
            if times is not None:
                if times <= 0:
                    continue
                f["times"] = times - 1
            return f
        return None

    def _job_script(self, n: int) -> dict:
        scripts = self.scenario.get("jobs") or [{}]
        return scripts[min(n, len(scripts)) - 1]

    def _materialize(self, job_id: str) -> Optional[dict]:
        if job_id in self._jobs:
            return self._jobs[job_id]
        # jobs created by an earlier process with the same scenario
        if not job_id.startswith("ftjob-"):
            return None
        try:
            n = int(job_id[len("ftjob-"):])
        except ValueError:
            return None
        if not 1 <= n <= len(self.scenario.get("jobs", [])):
            return None
        script = self._job_script(n)
        job = self._new_job(job_id, script, script.get("model", "curie"), "file-0001", {})
        # it has had all the time it needed: jump to the end of its script
        for _ in script.get("statuses", ["queued", "running", "succeeded"]):
            self._advance(job)
        self._jobs[job_id] = job
        return job

    def _new_job(self, job_id, script, model, file_id, hyper) -> dict:
        return {
            "id": job_id,
            "object": "fine_tuning.job",
            "model": model,
            "training_file": file_id,
            "hyperparameters": hyper,
            "created_at": int(self._clock()),
            "finished_at": None,
            "fine_tuned_model": None,
            "status": script.get("statuses", ["queued", "running", "succeeded"])[0],
            "_script": script,
            "_step": 0,
        }

    @staticmethod
    def _public(job: dict) -> dict:
        return {k: v for k, v in job.items() if not k.startswith("_")}

    def _advance(self, job: dict) -> None:
        statuses = job["_script"].get("statuses", ["queued", "running", "succeeded"])
        job["_step"] = min(job["_step"] + 1, len(statuses) - 1)
        job["status"] = statuses[job["_step"]]
        if job["status"] in ("succeeded", "failed", "cancelled") and job["finished_at"] is None:
            job["finished_at"] = int(self._clock())
            if job["status"] == "succeeded":
                job["fine_tuned_model"] = job["_script"].get(
                    "fine_tuned_model", f"ft:{job['model']}:mock:{job['id']}"
                )

    def _completion(self, mt: str):
        table = self.scenario.get("completions", {})
        answer = table.get("by_mt", {}).get(mt, table.get("default", " keep"))
        if isinstance(answer, dict):
            return answer.get("text", ""), answer.get("logprob")
        return answer, None

    # -- the fake API

    def request(self, method, path, *, json_body=None, files=None, data=None, params=None):
        latency = self.scenario.get("latency")
        if latency:
            with self._lock:
                delay = self._rng.uniform(*latency)
            time.sleep(delay)
        with self._lock:
            return self._handle(method, path, json_body, files, data, params or {})

    def _handle(self, method, path, body, files, data, params) -> Response:
        self.calls.append((method, path))
        mt = None
        if path == "/v1/completions" and body:
            mt = _mt_from_prompt(body.get("prompt", ""))
        elif path == "/v1/chat/completions" and body:
            mt = _mt_from_prompt(body["messages"][-1]["content"])

        fault = self._fault_for(method, path, mt)
        if fault:
            if fault.get("error") == "timeout":
                raise TransportError(f"{method} {path}: timed out")
            return _error(fault.get("status", 500), fault.get("message", "scripted failure"))

        wanted = self.scenario.get("api_key")
        if wanted is not None and self.api_key != wanted:
            return _error(401, "Incorrect API key provided")

        if method == "POST" and path == "/v1/files":
            if not files or "file" not in files:
                return _error(400, "missing file")
            content = files["file"][1]
            if not content:
                return _error(400, "file is empty")
            file_id = f"file-{len(self._files) + 1:04d}"
            self._files[file_id] = content
            return Response(200, {"id": file_id, "object": "file", "bytes": len(content),
                                  "purpose": (data or {}).get("purpose")})

        if method == "POST" and path == "/v1/fine_tuning/jobs":
            model = body.get("model")
            if model not in self.scenario.get("models", DEFAULT_MODELS):
                return _error(404, f"The model '{model}' does not exist")
            file_id = body.get("training_file")
            if file_id not in self._files:
                return _error(400, f"invalid training_file: {file_id}")
            self._n_jobs += 1
            job_id = f"ftjob-{self._n_jobs:04d}"
            job = self._new_job(job_id, self._job_script(self._n_jobs), model, file_id,
                                body.get("hyperparameters") or {})
            self._jobs[job_id] = job
            return Response(200, self._public(job))

        if method == "GET" and path.startswith("/v1/fine_tuning/jobs/"):
            rest = path[len("/v1/fine_tuning/jobs/"):]
            job_id, _, tail = rest.partition("/")
            job = self._materialize(job_id)
            if job is None:
                return _error(404, f"fine-tuning job {job_id} not found")
            if tail == "":
                snapshot = self._public(job)
                self._advance(job)
                return Response(200, snapshot)
            if tail == "events":
                return Response(200, self._events_page(job, params))
            return _error(404, f"unknown path {path}")

        if method == "POST" and path in ("/v1/completions", "/v1/chat/completions"):
            model = body.get("model", "")
            if model not in self.scenario.get("models", DEFAULT_MODELS) and not model.startswith("ft:") \
                    and model not in {j["fine_tuned_model"] for j in self._jobs.values()}:
                return _error(404, f"The model '{model}' does not exist")
            text, logprob = self._completion(mt)
            if path == "/v1/completions":
                lp = None if logprob is None else {"tokens": [text], "token_logprobs": [logprob]}
                return Response(200, {"choices": [{"text": text, "index": 0, "logprobs": lp}]})
            lp = None if logprob is None else {"content": [{"token": text, "logprob": logprob}]}
            return Response(200, {"choices": [{"index": 0, "message": {"role": "assistant", "content": text},
                                               "logprobs": lp}]})

        return _error(404, f"unknown endpoint {method} {path}")

    def _events_page(self, job: dict, params: dict) -> dict:
        if job["status"] in _PENDING:
            return {"object": "list", "data": [], "has_more": False}
        events = [
            {
                "object": "fine_tuning.job.event",
                "id": f"ftevent-{job['id']}-{e['step']}",
                "created_at": job["created_at"] + i,
                "level": "info",
                "message": f"Step {e['step']}: training loss={e['loss']}",
                "type": "metrics",
                "data": {"step": e["step"], "train_loss": e["loss"]},
            }
            for i, e in enumerate(job["_script"].get("events", []))
        ]
        events.reverse()  # newest first, like the real service
        after = params.get("after")
        if after:
            ids = [e["id"] for e in events]
            events = events[ids.index(after) + 1:] if after in ids else []
        limit = int(params.get("limit", 20))
        return {"object": "list", "data": events[:limit], "has_more": len(events) > limit}
