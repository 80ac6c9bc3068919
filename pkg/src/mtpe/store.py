"""Project directories and append-only run manifests."""

from __future__ import annotations

import copy
import datetime as dt
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

from mtpe.corpus import TranslationUnit
from mtpe.ingest import dumps_jsonl
from mtpe.metrics import MetricsReport, render_report

HASH_ALGORITHM = "sha256"
LAYOUT = ("corpus", "splits", "jobs", "predictions", "reports")
MANIFEST = "manifest.json"

# stage names in pipeline order; finetune stages are optional
STAGES = (
    "ingest", "split", "prepare", "finetune", "finetune_result", "events",
    "model", "predict", "eval", "savings",
)


class StageError(Exception):
    """A stage was recorded twice or its prerequisite is missing."""


def corpus_fingerprint(units: Iterable[TranslationUnit]) -> str:
    return hashlib.new(HASH_ALGORITHM, dumps_jsonl(units).encode("utf-8")).hexdigest()


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).replace(microsecond=0).isoformat()


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    created_at: str
    hash_algorithm: str = HASH_ALGORITHM
    config: Dict[str, Any] = field(default_factory=dict)
    stages: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def has(self, stage: str) -> bool:
        return stage in self.stages

    def stage(self, stage: str) -> Dict[str, Any]:
        if stage not in self.stages:
            raise StageError(f"missing prerequisite stage: {stage}")
        return self.stages[stage]

    @property
    def corpus_fingerprint(self) -> Optional[str]:
        return self.stages.get("ingest", {}).get("corpus_fingerprint")

    @property
    def backend(self) -> Optional[dict]:
        return self.stages.get("predict", {}).get("backend")

    @property
    def metrics(self) -> Optional[MetricsReport]:
        m = self.stages.get("eval", {}).get("metrics")
        return MetricsReport.from_dict(m) if m else None

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "created_at": self.created_at,
            "hash_algorithm": self.hash_algorithm,
            "config": self.config,
            "stages": self.stages,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(d["run_id"], d["created_at"], d.get("hash_algorithm", HASH_ALGORITHM),
                   d.get("config", {}), d.get("stages", {}))

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls.from_dict(json.loads(text))


def record_stage(manifest: RunManifest, stage: str, payload: Dict[str, Any]) -> RunManifest:
    """Return a new manifest with ``stage`` appended; the input is untouched."""
    if stage in manifest.stages:
        raise StageError(f"stage already recorded: {stage}")
    # round-trip through JSON so the stored payload is plain data
    payload = json.loads(json.dumps(payload))
    stages = copy.deepcopy(manifest.stages)
    stages[stage] = payload
    return RunManifest(manifest.run_id, manifest.created_at, manifest.hash_algorithm,
                       copy.deepcopy(manifest.config), stages)


def atomic_write(path: Union[str, Path], text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Project:
    """Handle on a project directory created by :func:`init_project`."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        if not (self.path / MANIFEST).is_file():
            raise FileNotFoundError(f"{self.path} is not a project (no {MANIFEST}); run init first")

    def __repr__(self):
        return f"Project({str(self.path)!r})"

    def __truediv__(self, rel: str) -> Path:
        return self.path / rel

    @property
    def manifest(self) -> RunManifest:
        return RunManifest.from_json((self.path / MANIFEST).read_text(encoding="utf-8"))

    @property
    def run_id(self) -> str:
        return self.manifest.run_id

    def record(self, stage: str, payload: Dict[str, Any]) -> RunManifest:
        updated = record_stage(self.manifest, stage, payload)
        atomic_write(self.path / MANIFEST, updated.to_json())
        return updated

    def write(self, rel: str, text: str) -> Path:
        target = self.path / rel
        atomic_write(target, text)
        return target

    def report_path(self, ext: str) -> Path:
        return self.path / "reports" / f"{self.run_id}.{ext}"

    def write_report(self, metrics: MetricsReport, fmt: str) -> Path:
        ext = {"text": "txt"}.get(fmt, fmt)
        target = self.report_path(ext)
        atomic_write(target, render_report(metrics, fmt))
        return target


def init_project(path: Union[str, Path], run_id: Optional[str] = None,
                 config: Optional[Dict[str, Any]] = None) -> Project:
    """Create the project layout and an empty manifest.

    Refuses any existing non-empty directory, including a project that was
    already initialised.
    """
    path = Path(path)
    if path.exists():
        if not path.is_dir():
            raise FileExistsError(f"{path} exists and is not a directory")
        if any(path.iterdir()):
            raise FileExistsError(f"{path} is not empty")
    path.mkdir(parents=True, exist_ok=True)
    for sub in LAYOUT:
        (path / sub).mkdir()
    created = _now()
    if run_id is None:
        run_id = "run-" + created.replace("+00:00", "Z").replace(":", "").replace("-", "")
    manifest = RunManifest(run_id=run_id, created_at=created, config=dict(config or {}))
    atomic_write(path / MANIFEST, manifest.to_json())
    return Project(path)
