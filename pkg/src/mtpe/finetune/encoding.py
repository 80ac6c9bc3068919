"""Prompt/completion layouts for legacy completion models and chat models."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from mtpe.corpus import Label, LabeledSegment, normalize_text
from mtpe.ingest import IngestReport

SEPARATOR = "\n=>\n"
PROMPT_END = "\n\n###\n\n"
SYSTEM_INSTRUCTION = "Answer with exactly one word: keep or edit."


class UnparseableLabel(ValueError):
    """The model answered with something that is neither label."""


class Dialect(str, enum.Enum):
    COMPLETION = "completion"
    CHAT = "chat"


@dataclass(frozen=True)
class PromptEncoding:
    dialect: Dialect = Dialect.COMPLETION
    keep_token: str = " keep"
    edit_token: str = " edit"

    def __post_init__(self):
        object.__setattr__(self, "dialect", Dialect(self.dialect))
        words = {self.keep_token.strip().lower(), self.edit_token.strip().lower()}
        if len(words) != 2 or "" in words:
            raise ValueError("keep and edit tokens must be distinct, non-blank words")

    def token(self, label: Label) -> str:
        return self.keep_token if label is Label.KEEP else self.edit_token

    def pair_text(self, source: str, mt: str) -> str:
        # normalizing keeps stray newlines in the text away from the separator
        return normalize_text(source) + SEPARATOR + normalize_text(mt)

    def prompt(self, source: str, mt: str) -> str:
        return self.pair_text(source, mt) + PROMPT_END

    def messages(self, source: str, mt: str) -> List[dict]:
        return [
            {"role": "system", "content": SYSTEM_INSTRUCTION},
            {"role": "user", "content": self.pair_text(source, mt)},
        ]

    def encode(self, source: str, mt: str, label: Label) -> dict:
        """One fine-tuning record."""
        if self.dialect is Dialect.COMPLETION:
            return {"prompt": self.prompt(source, mt), "completion": self.token(label)}
        return {
            "messages": self.messages(source, mt)
            + [{"role": "assistant", "content": self.token(label).strip()}]
        }

    def decode(self, text: str) -> Label:
        """Map a completion to a label by case-insensitive prefix match.

        Accepts the label word with trailing text (``"Keep."``) and a
        truncated label word (``" ed"``). Anything else raises
        :class:`UnparseableLabel`.
        """
        answer = (text or "").strip().lower()
        hits = set()
        if answer:
            for label in (Label.KEEP, Label.EDIT):
                word = self.token(label).strip().lower()
                if answer.startswith(word) or word.startswith(answer):
                    hits.add(label)
        if len(hits) != 1:
            raise UnparseableLabel(f"cannot read a label from completion {text!r}")
        return hits.pop()

    def request(self, model: str, source: str, mt: str) -> Tuple[str, dict]:
        """Endpoint path and body for one deterministic classification call."""
        if self.dialect is Dialect.COMPLETION:
            return "/v1/completions", {
                "model": model,
                "prompt": self.prompt(source, mt),
                "max_tokens": 1,
                "temperature": 0,
                "logprobs": 1,
            }
        return "/v1/chat/completions", {
            "model": model,
            "messages": self.messages(source, mt),
            "max_tokens": 2,
            "temperature": 0,
            "logprobs": True,
        }


def prepare_training_file(
    segments: Sequence[LabeledSegment], enc: PromptEncoding = PromptEncoding()
) -> Tuple[str, IngestReport]:
    """Fine-tuning JSONL, one record per segment.

    Only source and MT go into the prompt; the post-edited text has done its
    job once the label is derived. Segments with an empty MT are reported
    and left out.
    """
    if not segments:
        raise ValueError("no segments to write")
    lines = []
    report = IngestReport()
    for seg in segments:
        if not normalize_text(seg.unit.mt):
            report.reject(f"id {seg.id}", "empty mt")
            continue
        record = enc.encode(seg.unit.source, seg.unit.mt, seg.label)
        lines.append(json.dumps(record, ensure_ascii=False) + "\n")
        report.accepted += 1
    return "".join(lines), report
