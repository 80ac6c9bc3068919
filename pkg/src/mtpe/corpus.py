"""Translation triples, EDIT/KEEP labels, edit distance and length buckets.

Everything here is a pure function over immutable values.
"""

from __future__ import annotations

import enum
import unicodedata
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import regex

# Han ideographs and Japanese kana are written without spaces; tokens that
# contain them are measured in grapheme clusters instead of as one word.
_SPACELESS_SCRIPT = regex.compile(r"[\p{Han}\p{Hiragana}\p{Katakana}]")
_GRAPHEME = regex.compile(r"\X")


class Label(str, enum.Enum):
    """Gold or predicted post-editing need. EDIT is the positive class."""

    EDIT = "EDIT"
    KEEP = "KEEP"


@dataclass(frozen=True)
class LangPair:
    source: str
    target: str

    def __post_init__(self):
        if not self.source or not self.target:
            raise ValueError("language codes must be non-empty")
        if self.source.lower() == self.target.lower():
            raise ValueError(f"source and target language are both {self.source!r}")

    @classmethod
    def parse(cls, text: str) -> "LangPair":
        """Parse ``en-it``, ``en_it``, ``en:it`` or ``en>it``.

        A region subtag is allowed on either side when ``:`` or ``>`` is used
        as the separator, e.g. ``en-US:pt-BR``.
        """
        for sep in (":", ">"):
            if sep in text:
                src, _, tgt = text.partition(sep)
                return cls(src.strip(), tgt.strip())
        for sep in ("-", "_"):
            if text.count(sep) == 1:
                src, _, tgt = text.partition(sep)
                return cls(src.strip(), tgt.strip())
        raise ValueError(f"cannot parse language pair {text!r}")

    def __str__(self):
        return f"{self.source}-{self.target}"


@dataclass(frozen=True)
class TranslationUnit:
    """One (source, MT, post-edited) triple."""

    id: str
    source: str
    mt: str
    pe: str
    lang_pair: LangPair

    def __post_init__(self):
        if not self.id:
            raise ValueError("unit id must be non-empty")


@dataclass(frozen=True)
class LengthBucket:
    index: int
    lower: int
    upper: Optional[int] = None  # None means unbounded

    def __contains__(self, length: int) -> bool:
        return length >= self.lower and (self.upper is None or length <= self.upper)

    def __str__(self):
        return f"{self.lower}-{'' if self.upper is None else self.upper}"


def make_buckets(bounds: Sequence[Tuple[int, Optional[int]]]) -> Tuple[LengthBucket, ...]:
    """Build a bucket partition from ``(lower, upper)`` pairs and check it.

    The pairs must cover ``[1, inf)`` contiguously; only the last may be
    unbounded.
    """
    if not bounds:
        raise ValueError("at least one bucket is required")
    buckets = tuple(LengthBucket(i, lo, hi) for i, (lo, hi) in enumerate(bounds))
    expected_lower = 1
    for b in buckets:
        if b.lower != expected_lower:
            raise ValueError(f"bucket {b.index} starts at {b.lower}, expected {expected_lower}")
        if b.upper is None:
            if b.index != len(buckets) - 1:
                raise ValueError("only the last bucket may be unbounded")
            break
        if b.upper < b.lower:
            raise ValueError(f"bucket {b.index} is empty ({b.lower}-{b.upper})")
        expected_lower = b.upper + 1
    if buckets[-1].upper is not None:
        raise ValueError("the last bucket must be unbounded")
    return buckets


def parse_buckets(text: str) -> Tuple[LengthBucket, ...]:
    """Parse ``"1-5,6-10,11-20,21-40,41-"`` into a bucket partition."""
    bounds = []
    for part in text.split(","):
        lo, sep, hi = part.strip().partition("-")
        if not sep:
            raise ValueError(f"bad bucket {part!r}, expected LOWER-UPPER or LOWER-")
        bounds.append((int(lo), int(hi) if hi.strip() else None))
    return make_buckets(bounds)


DEFAULT_BUCKETS = make_buckets([(1, 5), (6, 10), (11, 20), (21, 40), (41, None)])


def bucket_for(length: int, buckets: Sequence[LengthBucket] = DEFAULT_BUCKETS) -> LengthBucket:
    for b in buckets:
        if length in b:
            return b
    raise ValueError(f"length {length} is outside every bucket")


def normalize_text(raw: str) -> str:
    """Compose to NFC and collapse every whitespace run to a single space."""
    return " ".join(unicodedata.normalize("NFC", raw).split())


def derive_label(mt: str, pe: str) -> Label:
    return Label.KEEP if normalize_text(mt) == normalize_text(pe) else Label.EDIT


def edit_distance(a: str, b: str) -> int:
    """Character-level Levenshtein distance over code points.

    Uses the bit-parallel recurrence of Myers/Hyyrö with Python integers as
    arbitrary-width bit vectors, so the cost is one handful of integer
    operations per character of the longer string.
    """
    if a == b:
        return 0
    if len(a) > len(b):
        a, b = b, a
    m = len(a)
    if m == 0:
        return len(b)

    peq: Dict[str, int] = {}
    for i, ch in enumerate(a):
        peq[ch] = peq.get(ch, 0) | (1 << i)

    mask = (1 << m) - 1
    last = 1 << (m - 1)
    pv, mv, score = mask, 0, m
    for ch in b:
        eq = peq.get(ch, 0)
        xv = eq | mv
        xh = (((eq & pv) + pv) ^ pv) | eq
        ph = mv | (~(xh | pv) & mask)
        mh = pv & xh
        if ph & last:
            score += 1
        elif mh & last:
            score -= 1
        ph = ((ph << 1) | 1) & mask
        mh = (mh << 1) & mask
        pv = mh | (~(xv | ph) & mask)
        mv = ph & xv
    return score


def normalized_edit_distance(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return edit_distance(a, b) / longest


def text_length(text: str) -> int:
    """Length of ``text`` in tokens (see :func:`source_length`)."""
    n = 0
    for token in normalize_text(text).split(" "):
        if not token:
            continue
        if _SPACELESS_SCRIPT.search(token):
            n += len(_GRAPHEME.findall(token))
        else:
            n += 1
    return n


def source_length(unit: TranslationUnit) -> int:
    """Whitespace token count of the source.

    Tokens written in Han or kana count one per grapheme cluster, so a
    spaceless Japanese sentence is not measured as a single word.
    """
    n = text_length(unit.source)
    if n == 0:
        raise ValueError(f"unit {unit.id!r} has an empty source")
    return n


@dataclass(frozen=True)
class LabeledSegment:
    unit: TranslationUnit
    label: Label
    edit_distance: int
    normalized_distance: float
    length_bucket: LengthBucket
    source_length: int

    @property
    def id(self) -> str:
        return self.unit.id


def label_unit(unit: TranslationUnit, buckets: Sequence[LengthBucket] = DEFAULT_BUCKETS) -> LabeledSegment:
    mt, pe = normalize_text(unit.mt), normalize_text(unit.pe)
    dist = edit_distance(mt, pe)
    n = source_length(unit)
    return LabeledSegment(
        unit=unit,
        label=Label.KEEP if dist == 0 else Label.EDIT,
        edit_distance=dist,
        normalized_distance=normalized_edit_distance(mt, pe),
        length_bucket=bucket_for(n, buckets),
        source_length=n,
    )


def label_corpus(units: Iterable[TranslationUnit], buckets: Sequence[LengthBucket] = DEFAULT_BUCKETS) -> List[LabeledSegment]:
    return [label_unit(u, buckets) for u in units]


@dataclass(frozen=True)
class CorpusStats:
    n_units: int
    edit_count: int
    keep_count: int
    mean_source_length: float
    per_bucket_counts: Dict[int, int] = field(default_factory=dict)


def corpus_stats(segments: Sequence[LabeledSegment], buckets: Sequence[LengthBucket] = DEFAULT_BUCKETS) -> CorpusStats:
    if not segments:
        raise ValueError("corpus is empty")
    per_bucket = {b.index: 0 for b in buckets}
    edits = 0
    total_len = 0
    for seg in segments:
        per_bucket[bucket_for(seg.source_length, buckets).index] += 1
        edits += seg.label is Label.EDIT
        total_len += seg.source_length
    return CorpusStats(
        n_units=len(segments),
        edit_count=edits,
        keep_count=len(segments) - edits,
        mean_source_length=total_len / len(segments),
        per_bucket_counts=per_bucket,
    )
