"""Fine-tuning and inference against an OpenAI-compatible API."""

from mtpe.finetune.client import (
    ApiError,
    BatchFailed,
    ClassifierBackend,
    FineTuneClient,
    FineTuneJob,
    JobStatus,
    PollResult,
    RemoteModel,
    RetryableError,
    TrainingEvent,
    classify_batch,
    classify_segment,
    load_api_key,
)
from mtpe.finetune.encoding import Dialect, PromptEncoding, UnparseableLabel, prepare_training_file
from mtpe.finetune.transport import HttpTransport, Response, ScriptedTransport, Transport, TransportError

__all__ = [
    "ApiError", "BatchFailed", "ClassifierBackend", "FineTuneClient", "FineTuneJob", "JobStatus",
    "PollResult", "RemoteModel", "RetryableError", "TrainingEvent", "classify_batch",
    "classify_segment", "load_api_key", "Dialect", "PromptEncoding", "UnparseableLabel",
    "prepare_training_file", "HttpTransport", "Response", "ScriptedTransport", "Transport",
    "TransportError",
]
