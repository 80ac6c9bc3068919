"""Length-stratified train/test splits and nested training subsamples."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from mtpe.corpus import DEFAULT_BUCKETS, LabeledSegment, LengthBucket, bucket_for, make_buckets

DEFAULT_RATIO = 0.9
_SEED_MASK = (1 << 64) - 1


def _as_fraction(x) -> Fraction:
    # go through repr so 0.9 means 9/10, not the nearest binary double
    return x if isinstance(x, Fraction) else Fraction(repr(float(x)))


def expected_test_count(ratio: float, bucket_size: int) -> int:
    """Round-half-up of ``(1 - ratio) * bucket_size``, computed exactly."""
    return math.floor((1 - _as_fraction(ratio)) * bucket_size + Fraction(1, 2))


def _bucket_rng(seed: int, salt: int, bucket_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & _SEED_MASK, salt, bucket_index]))


@dataclass(frozen=True)
class BucketAudit:
    bucket: LengthBucket
    train_count: int
    test_count: int


@dataclass(frozen=True)
class DatasetSplit:
    train_ids: Tuple[str, ...]
    test_ids: Tuple[str, ...]
    ratio: float
    seed: int
    bucket_audit: Tuple[BucketAudit, ...] = field(default=())

    @property
    def buckets(self) -> Tuple[LengthBucket, ...]:
        return tuple(a.bucket for a in self.bucket_audit)

    def to_dict(self) -> dict:
        return {
            "ratio": self.ratio,
            "seed": self.seed,
            "buckets": [
                {
                    "index": a.bucket.index,
                    "lower": a.bucket.lower,
                    "upper": a.bucket.upper,
                    "train_count": a.train_count,
                    "test_count": a.test_count,
                }
                for a in self.bucket_audit
            ],
            "train_ids": list(self.train_ids),
            "test_ids": list(self.test_ids),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping) -> "DatasetSplit":
        buckets = make_buckets([(b["lower"], b["upper"]) for b in d["buckets"]])
        audit = tuple(
            BucketAudit(bucket, b["train_count"], b["test_count"])
            for bucket, b in zip(buckets, d["buckets"])
        )
        return cls(tuple(d["train_ids"]), tuple(d["test_ids"]), d["ratio"], d["seed"], audit)

    @classmethod
    def from_json(cls, text: str) -> "DatasetSplit":
        return cls.from_dict(json.loads(text))


def _group_by_bucket(segments: Sequence[LabeledSegment], buckets: Sequence[LengthBucket]) -> Dict[int, List[str]]:
    groups: Dict[int, List[str]] = {b.index: [] for b in buckets}
    for seg in segments:
        groups[bucket_for(seg.source_length, buckets).index].append(seg.id)
    for ids in groups.values():
        ids.sort()
    return groups


def stratified_split(
    segments: Sequence[LabeledSegment],
    ratio: float = DEFAULT_RATIO,
    seed: int = 0,
    buckets: Sequence[LengthBucket] = DEFAULT_BUCKETS,
) -> DatasetSplit:
    """Split so every length bucket keeps the same train/test proportion.

    Within a bucket, ids are sorted, shuffled by a generator derived from
    ``(seed, bucket index)``, and the first round-half-up
    ``(1 - ratio) * len(bucket)`` go to test. Rounding leftovers stay in
    train, so the overall test size may drift from ``1 - ratio`` by up to
    half a segment per bucket.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    if not segments:
        raise ValueError("cannot split an empty corpus")
    ids = [s.id for s in segments]
    if len(set(ids)) != len(ids):
        raise ValueError("segment ids are not unique")

    train: List[str] = []
    test: List[str] = []
    audit = []
    groups = _group_by_bucket(segments, buckets)
    for b in buckets:
        members = groups[b.index]
        shuffled = [members[i] for i in _bucket_rng(seed, 0, b.index).permutation(len(members))]
        k = expected_test_count(ratio, len(members))
        test.extend(shuffled[:k])
        train.extend(shuffled[k:])
        audit.append(BucketAudit(b, len(members) - k, k))
    return DatasetSplit(tuple(train), tuple(test), ratio, seed, tuple(audit))


@dataclass(frozen=True)
class BucketCheck:
    bucket: LengthBucket
    train_count: int
    test_count: int
    expected_test: float
    train_share: float
    test_share: float
    flagged: bool


def verify_distribution(
    split: DatasetSplit,
    segments: Sequence[LabeledSegment],
    buckets: Optional[Sequence[LengthBucket]] = None,
) -> List[BucketCheck]:
    """Compare each bucket's test share with ``1 - ratio``.

    A bucket is flagged when its test count is more than one segment away
    from ``(1 - ratio) * bucket size``.
    """
    buckets = buckets or split.buckets or DEFAULT_BUCKETS
    by_id = {s.id: s for s in segments}
    unknown = [i for i in (*split.train_ids, *split.test_ids) if i not in by_id]
    if unknown:
        raise ValueError(f"split refers to {len(unknown)} unknown ids, e.g. {unknown[0]!r}")
    if len(split.train_ids) + len(split.test_ids) != len(by_id):
        raise ValueError("split does not cover the corpus exactly")

    counts = {b.index: [0, 0] for b in buckets}
    for ids, col in ((split.train_ids, 0), (split.test_ids, 1)):
        for i in ids:
            counts[bucket_for(by_id[i].source_length, buckets).index][col] += 1

    out = []
    test_frac = 1 - _as_fraction(split.ratio)
    for b in buckets:
        n_train, n_test = counts[b.index]
        n = n_train + n_test
        expected = test_frac * n
        out.append(
            BucketCheck(
                bucket=b,
                train_count=n_train,
                test_count=n_test,
                expected_test=float(expected),
                train_share=n_train / n if n else 0.0,
                test_share=n_test / n if n else 0.0,
                flagged=abs(n_test - expected) > 1,
            )
        )
    return out


@dataclass(frozen=True)
class SubsamplePlan:
    sizes: Tuple[int, ...]
    seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if not sizes:
            raise ValueError("a subsample plan needs at least one size")
        if sizes[0] < 1:
            raise ValueError("subsample sizes must be positive")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError(f"subsample sizes must be strictly ascending: {sizes}")


def subsample_train(
    split: DatasetSplit,
    plan: SubsamplePlan,
    segments: Sequence[LabeledSegment],
) -> List[Tuple[int, List[str]]]:
    """Nested, length-stratified subsets of the training ids.

    Each bucket's training ids are shuffled with the plan seed, then all
    buckets are interleaved by fractional rank ``(k + 0.5) / n_bucket``. Every
    requested size is a prefix of that single ordering, which makes the
    subsets nested by construction and keeps each bucket's count within
    about half a segment per bucket of its proportional share. The test set
    is not touched.
    """
    if plan.sizes[-1] > len(split.train_ids):
        raise ValueError(f"requested {plan.sizes[-1]} training segments, split has {len(split.train_ids)}")
    buckets = split.buckets or DEFAULT_BUCKETS
    by_id = {s.id: s for s in segments}
    groups: Dict[int, List[str]] = {b.index: [] for b in buckets}
    for i in split.train_ids:
        if i not in by_id:
            raise ValueError(f"training id {i!r} not in corpus")
        groups[bucket_for(by_id[i].source_length, buckets).index].append(i)

    keyed = []
    for index, ids in groups.items():
        ids = sorted(ids)
        order = _bucket_rng(plan.seed, 1, index).permutation(len(ids))
        n = len(ids)
        for rank, j in enumerate(order):
            keyed.append((Fraction(2 * rank + 1, 2 * n), index, ids[j]))
    keyed.sort()
    ordering = [uid for _, _, uid in keyed]
    return [(size, ordering[:size]) for size in plan.sizes]
