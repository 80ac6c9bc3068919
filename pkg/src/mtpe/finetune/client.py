"""Fine-tuning job orchestration and remote classification."""

from __future__ import annotations

import enum
import logging
import math
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple

from mtpe.corpus import Label, LabeledSegment
from mtpe.finetune.encoding import PromptEncoding, UnparseableLabel
from mtpe.finetune.transport import Response, Transport, TransportError
from mtpe.metrics import Prediction

log = logging.getLogger(__name__)

RETRY_ATTEMPTS = 3
RETRY_BACKOFF = 1.0
DEFAULT_POLL_INTERVAL = 30.0
DEFAULT_POLL_TIMEOUT = 45 * 60.0
DEFAULT_CONCURRENCY = 4


class ApiError(Exception):
    """The server refused the request; retrying will not help."""

    def __init__(self, status: int, message: str):
        super().__init__(f"HTTP {status}: {message}")
        self.status = status
        self.message = message


class RetryableError(Exception):
    """Transport failure, 5xx or 429 that outlived every retry."""


class BatchFailed(Exception):
    """Every unit in a batch failed to classify."""


class JobStatus(str, enum.Enum):
    PENDING = "PENDING"
    RUNNING = "RUNNING"
    SUCCEEDED = "SUCCEEDED"
    FAILED = "FAILED"
    CANCELLED = "CANCELLED"

    @property
    def terminal(self) -> bool:
        return self in (JobStatus.SUCCEEDED, JobStatus.FAILED, JobStatus.CANCELLED)


_STATUS_MAP = {
    "validating_files": JobStatus.PENDING,
    "queued": JobStatus.PENDING,
    "pending": JobStatus.PENDING,
    "running": JobStatus.RUNNING,
    "succeeded": JobStatus.SUCCEEDED,
    "failed": JobStatus.FAILED,
    "cancelled": JobStatus.CANCELLED,
}


@dataclass(frozen=True)
class FineTuneJob:
    job_id: str
    base_model: str
    status: JobStatus
    fine_tuned_model: Optional[str] = None
    created_at: Optional[int] = None
    finished_at: Optional[int] = None
    hyperparams: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if (self.fine_tuned_model is not None) != (self.status is JobStatus.SUCCEEDED):
            raise ValueError(f"job {self.job_id}: fine_tuned_model must be set exactly when SUCCEEDED")
        if (self.finished_at is not None) != self.status.terminal:
            raise ValueError(f"job {self.job_id}: finished_at must be set exactly when terminal")

    @classmethod
    def from_api(cls, d: dict) -> "FineTuneJob":
        status = _STATUS_MAP.get(str(d.get("status")).lower())
        if status is None:
            raise ValueError(f"unknown job status {d.get('status')!r}")
        return cls(
            job_id=d["id"],
            base_model=d.get("model", ""),
            status=status,
            fine_tuned_model=d.get("fine_tuned_model") if status is JobStatus.SUCCEEDED else None,
            created_at=d.get("created_at"),
            finished_at=d.get("finished_at") if status.terminal else None,
            hyperparams=dict(d.get("hyperparameters") or {}),
        )

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "base_model": self.base_model,
            "status": self.status.value,
            "fine_tuned_model": self.fine_tuned_model,
            "created_at": self.created_at,
            "finished_at": self.finished_at,
            "hyperparams": self.hyperparams,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FineTuneJob":
        return cls(
            d["job_id"], d["base_model"], JobStatus(d["status"]), d.get("fine_tuned_model"),
            d.get("created_at"), d.get("finished_at"), dict(d.get("hyperparams") or {}),
        )


@dataclass(frozen=True)
class TrainingEvent:
    step: int
    loss: float
    timestamp: Optional[int] = None


@dataclass
class PollResult:
    job: FineTuneJob
    timed_out: bool
    polls: int
    transport_errors: int


class ClassifierBackend(Protocol):
    def classify(self, source: str, mt: str) -> Tuple[Label, Optional[float]]: ...


def load_api_key(key_file: Optional[str] = None, env: Optional[Dict[str, str]] = None) -> str:
    """Key from ``key_file`` if given, else ``OPENAI_API_KEY``."""
    if key_file:
        key = Path(key_file).read_text(encoding="utf-8").strip()
    else:
        key = (os.environ if env is None else env).get("OPENAI_API_KEY", "").strip()
    if not key:
        raise ApiError(401, "no API key: set OPENAI_API_KEY or pass --api-key-file")
    return key


class FineTuneClient:
    """Thin client over a :class:`Transport` with retry and polling policy.

    ``sleep``, ``clock`` and ``rng`` are injectable so tests run instantly
    and deterministically.
    """

    def __init__(
        self,
        transport: Transport,
        *,
        attempts: int = RETRY_ATTEMPTS,
        backoff: float = RETRY_BACKOFF,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
        rng: Optional[random.Random] = None,
    ):
        self.transport = transport
        self.attempts = attempts
        self.backoff = backoff
        self.sleep = sleep
        self.clock = clock
        self.rng = rng or random.Random(0)
        self.retries = 0
        self.requests = 0
        self._count_lock = threading.Lock()

    def _call(self, method: str, path: str, **kwargs) -> dict:
        delay = self.backoff
        for attempt in range(1, self.attempts + 1):
            with self._count_lock:
                self.requests += 1
            try:
                resp: Response = self.transport.request(method, path, **kwargs)
            except TransportError as exc:
                problem = str(exc)
            else:
                if resp.status < 400:
                    return resp.body
                if resp.status == 401:
                    raise ApiError(401, f"invalid credentials ({resp.error_message})")
                if resp.status != 429 and resp.status < 500:
                    raise ApiError(resp.status, resp.error_message)
                problem = f"HTTP {resp.status}: {resp.error_message}"
            if attempt == self.attempts:
                raise RetryableError(f"{method} {path} failed after {attempt} attempts: {problem}")
            with self._count_lock:
                self.retries += 1
            log.warning("%s %s: %s; retrying in %.1fs", method, path, problem, delay)
            self.sleep(delay)
            delay *= 2
        raise AssertionError("unreachable")

    def upload_file(self, doc: str, filename: str = "train.jsonl") -> str:
        if not doc:
            raise ValueError("refusing to upload an empty training file")
        body = self._call(
            "POST", "/v1/files",
            files={"file": (filename, doc.encode("utf-8"), "application/jsonl")},
            data={"purpose": "fine-tune"},
        )
        return body["id"]

    def create_job(self, file_id: str, base_model: str, hyperparams: Optional[dict] = None) -> FineTuneJob:
        payload = {"training_file": file_id, "model": base_model}
        if hyperparams:
            payload["hyperparameters"] = dict(hyperparams)
        return FineTuneJob.from_api(self._call("POST", "/v1/fine_tuning/jobs", json_body=payload))

    def get_job(self, job_id: str) -> FineTuneJob:
        return FineTuneJob.from_api(self._call("GET", f"/v1/fine_tuning/jobs/{job_id}"))

    def poll_job(
        self,
        job_id: str,
        poll_interval: float = DEFAULT_POLL_INTERVAL,
        timeout: float = DEFAULT_POLL_TIMEOUT,
        jitter: float = 0.1,
    ) -> PollResult:
        """Poll until the job is terminal or ``timeout`` seconds have passed.

        Sleeps ``poll_interval`` plus up to ``jitter * poll_interval``
        between polls, never past the deadline, so a job costs at most
        ``ceil(timeout / poll_interval) + 1`` successful requests. Transport
        failures during a poll are counted and the poll is repeated on the
        next tick. A timeout is not an error: the result carries the last
        state seen.
        """
        if poll_interval <= 0:
            raise ValueError("poll_interval must be positive")
        deadline = self.clock() + timeout
        polls = errors = 0
        job: Optional[FineTuneJob] = None
        while True:
            polls += 1
            try:
                job = self.get_job(job_id)
            except RetryableError as exc:
                errors += 1
                log.warning("poll of %s failed: %s", job_id, exc)
            else:
                if job.status.terminal:
                    return PollResult(job, False, polls, errors)
            remaining = deadline - self.clock()
            if remaining <= 0:
                if job is None:
                    raise RetryableError(f"job {job_id}: no successful poll before timeout")
                return PollResult(job, True, polls, errors)
            wait = poll_interval + self.rng.uniform(0, jitter * poll_interval)
            self.sleep(min(wait, remaining))

    def fetch_events(self, job_id: str, page_size: int = 100) -> List[TrainingEvent]:
        """All training-loss events of a job, oldest first."""
        raw = []
        after = None
        while True:
            params = {"limit": page_size}
            if after:
                params["after"] = after
            page = self._call("GET", f"/v1/fine_tuning/jobs/{job_id}/events", params=params)
            data = page.get("data", [])
            raw.extend(data)
            if not page.get("has_more") or not data:
                break
            after = data[-1]["id"]
        by_step: Dict[int, TrainingEvent] = {}
        for e in raw:
            d = e.get("data") or {}
            if "step" not in d or "train_loss" not in d:
                continue
            ev = TrainingEvent(int(d["step"]), float(d["train_loss"]), e.get("created_at"))
            by_step.setdefault(ev.step, ev)
        return [by_step[s] for s in sorted(by_step)]

    def complete(self, model: str, enc: PromptEncoding, source: str, mt: str) -> Tuple[str, Optional[float]]:
        path, body = enc.request(model, source, mt)
        resp = self._call("POST", path, json_body=body)
        choice = resp["choices"][0]
        lp = choice.get("logprobs")
        logprob = None
        if "message" in choice:
            text = choice["message"].get("content") or ""
            if lp and lp.get("content"):
                logprob = lp["content"][0].get("logprob")
        else:
            text = choice.get("text") or ""
            if lp and lp.get("token_logprobs"):
                logprob = lp["token_logprobs"][0]
        return text, logprob


@dataclass
class RemoteModel:
    """A fine-tuned model served by the API, queried at temperature 0."""

    client: FineTuneClient
    model: str
    encoding: PromptEncoding = field(default_factory=PromptEncoding)

    def classify(self, source: str, mt: str) -> Tuple[Label, Optional[float]]:
        text, logprob = self.client.complete(self.model, self.encoding, source, mt)
        label = self.encoding.decode(text)
        return label, (None if logprob is None else math.exp(logprob))

    def describe(self) -> dict:
        return {"kind": "remote", "model": self.model, "dialect": self.encoding.dialect.value}


def classify_segment(backend: ClassifierBackend, source: str, mt: str) -> Tuple[Label, Optional[float]]:
    return backend.classify(source, mt)


_UNIT_ERRORS = (UnparseableLabel, ApiError, RetryableError)


def classify_batch(
    backend: ClassifierBackend,
    segments: Sequence[LabeledSegment],
    concurrency: int = DEFAULT_CONCURRENCY,
) -> List[Prediction]:
    """Classify in input order with at most ``concurrency`` calls in flight.

    A unit whose call fails becomes an abstention carrying the error text;
    it is left out of the confusion matrix but stays in the output. If every
    unit fails, :class:`BatchFailed` is raised.
    """
    if concurrency < 1:
        raise ValueError("concurrency must be at least 1")

    def one(seg: LabeledSegment) -> Prediction:
        try:
            label, conf = backend.classify(seg.unit.source, seg.unit.mt)
        except _UNIT_ERRORS as exc:
            return Prediction(seg.id, None, seg.label, None, f"{type(exc).__name__}: {exc}")
        return Prediction(seg.id, label, seg.label, conf)

    if concurrency == 1:
        preds = [one(s) for s in segments]
    else:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            preds = list(pool.map(one, segments))
    if preds and all(p.abstained for p in preds):
        raise BatchFailed(f"all {len(preds)} units failed; first error: {preds[0].error}")
    return preds


def events_to_csv(events: Sequence[TrainingEvent]) -> str:
    return "step,loss\n" + "".join(f"{e.step},{e.loss!r}\n" for e in events)


def events_to_json(events: Sequence[TrainingEvent]) -> list:
    return [{"step": e.step, "loss": e.loss, "timestamp": e.timestamp} for e in events]
