"""Offline 1-nearest-neighbour classifier over training MT strings.

It looks only at the MT text and answers with the label of the closest
training MT by normalized edit distance. It is a floor and a test fixture,
not a quality-estimation model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

from mtpe.corpus import Label, LabeledSegment, edit_distance, normalize_text


class Exemplar(NamedTuple):
    mt: str
    label: Label
    id: str


@dataclass(frozen=True)
class BaselineModel:
    exemplars: Tuple[Exemplar, ...]

    def __post_init__(self):
        if not self.exemplars:
            raise ValueError("baseline model needs at least one exemplar")
        object.__setattr__(self, "exemplars", tuple(sorted(self.exemplars, key=lambda e: e.id)))
        # first (lowest-id) exemplar for each distinct MT string
        exact: Dict[str, Exemplar] = {}
        for e in self.exemplars:
            exact.setdefault(e.mt, e)
        object.__setattr__(self, "_exact", exact)

    def classify(self, source: str, mt: str) -> Tuple[Label, float]:
        return baseline_classify(self, source, mt)

    def describe(self) -> dict:
        return {"kind": "baseline", "exemplars": len(self.exemplars)}

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps({"id": e.id, "mt": e.mt, "label": e.label.value}, ensure_ascii=False) + "\n"
            for e in self.exemplars
        )

    @classmethod
    def from_jsonl(cls, text: str) -> "BaselineModel":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        return cls(tuple(Exemplar(r["mt"], Label(r["label"]), r["id"]) for r in rows))

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8", newline="\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "BaselineModel":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


def train_baseline(segments: Sequence[LabeledSegment]) -> BaselineModel:
    if not segments:
        raise ValueError("cannot train on an empty training set")
    return BaselineModel(tuple(Exemplar(normalize_text(s.unit.mt), s.label, s.id) for s in segments))


def baseline_classify(model: BaselineModel, source: str, mt: str) -> Tuple[Label, float]:
    """Label of the nearest exemplar; confidence is ``1 - distance``.

    Ties go to the exemplar with the lowest id.
    """
    query = normalize_text(mt)
    hit: Optional[Exemplar] = model._exact.get(query)
    if hit is not None:
        return hit.label, 1.0

    best_d = 2.0
    best: Optional[Exemplar] = None
    n = len(query)
    for e in model.exemplars:
        longest = max(n, len(e.mt))
        if longest == 0:
            d = 0.0
        else:
            # length difference is a lower bound on the distance
            if abs(n - len(e.mt)) / longest >= best_d:
                continue
            d = edit_distance(query, e.mt) / longest
        if d < best_d:
            best_d, best = d, e
    return best.label, 1.0 - best_d


def classify_all(model: BaselineModel, segments: Sequence[LabeledSegment]) -> List[Tuple[Label, float]]:
    return [baseline_classify(model, s.unit.source, s.unit.mt) for s in segments]
