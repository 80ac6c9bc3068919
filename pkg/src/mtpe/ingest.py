"""Readers for TSV, JSONL and paired-TMX triple corpora.

Dirty records are reported in an :class:`IngestReport` and skipped; only
structural problems (unreadable file, malformed XML, duplicate explicit ids)
raise :class:`IngestError`.
"""

from __future__ import annotations

import enum
import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

from mtpe.corpus import LangPair, TranslationUnit, normalize_text

PathLike = Union[str, Path]

_XML_LANG = "{http://www.w3.org/XML/1998/namespace}lang"
_ID_WIDTH = 6


class IngestError(Exception):
    """Fatal corpus problem; nothing from the file should be used."""


class CorpusFormat(str, enum.Enum):
    TSV = "tsv"
    JSONL = "jsonl"
    TMX_PAIR = "tmx"


@dataclass(frozen=True)
class CorpusFile:
    path: Path
    format: CorpusFormat
    lang_pair: LangPair
    declared_count: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "path", Path(self.path))
        object.__setattr__(self, "format", CorpusFormat(self.format))


class Rejection(NamedTuple):
    locator: str
    reason: str


@dataclass
class IngestReport:
    accepted: int = 0
    rejected: int = 0
    rejection_reasons: List[Rejection] = field(default_factory=list)

    @property
    def scanned(self) -> int:
        return self.accepted + self.rejected

    def reject(self, locator: str, reason: str) -> None:
        self.rejected += 1
        self.rejection_reasons.append(Rejection(locator, reason))

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "rejection_reasons": [list(r) for r in self.rejection_reasons],
        }


def _read_text(path: Path) -> str:
    try:
        return path.read_bytes().decode("utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise IngestError(f"{path} is not valid UTF-8: {exc}") from exc


def _check_unique(seen: Dict[str, str], uid: str, locator: str, path: Path) -> None:
    if uid in seen:
        raise IngestError(f"{path}: duplicate id {uid!r} at {locator} (first at {seen[uid]})")
    seen[uid] = locator


def parse_tsv(file: CorpusFile) -> Tuple[List[TranslationUnit], IngestReport]:
    """Read ``id<TAB>source<TAB>mt<TAB>pe`` or ``source<TAB>mt<TAB>pe`` lines.

    Three-column lines get the zero-padded line number as their id. Blank
    lines and lines starting with ``#`` are not records.
    """
    text = _read_text(file.path)
    units: List[TranslationUnit] = []
    report = IngestReport()
    seen: Dict[str, str] = {}
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip() or line.startswith("#"):
            continue
        locator = f"line {lineno}"
        cols = line.split("\t")
        if len(cols) == 4:
            uid, source, mt, pe = cols
            if not uid:
                report.reject(locator, "empty id")
                continue
        elif len(cols) == 3:
            uid = str(lineno).zfill(_ID_WIDTH)
            source, mt, pe = cols
        else:
            report.reject(locator, f"expected 3 or 4 columns, got {len(cols)}")
            continue
        _check_unique(seen, uid, locator, file.path)
        units.append(TranslationUnit(uid, source, mt, pe, file.lang_pair))
        report.accepted += 1
    return units, report


def parse_jsonl(file: CorpusFile) -> Tuple[List[TranslationUnit], IngestReport]:
    """Read one ``{"id", "source", "mt", "pe"}`` object per line.

    A missing ``id`` is replaced by the zero-padded line number, as for
    three-column TSV. Extra keys are ignored.
    """
    text = _read_text(file.path)
    units: List[TranslationUnit] = []
    report = IngestReport()
    seen: Dict[str, str] = {}
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        locator = f"line {lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            report.reject(locator, f"invalid JSON: {exc.msg}")
            continue
        if not isinstance(obj, dict):
            report.reject(locator, "record is not a JSON object")
            continue
        missing = [k for k in ("source", "mt", "pe") if k not in obj]
        if missing:
            report.reject(locator, "missing " + ", ".join(missing))
            continue
        uid = obj.get("id", str(lineno).zfill(_ID_WIDTH))
        bad = [k for k in ("id", "source", "mt", "pe") if not isinstance(obj.get(k, uid), str)]
        if bad:
            report.reject(locator, "not a string: " + ", ".join(bad))
            continue
        if not uid:
            report.reject(locator, "empty id")
            continue
        _check_unique(seen, uid, locator, file.path)
        units.append(TranslationUnit(uid, obj["source"], obj["mt"], obj["pe"], file.lang_pair))
        report.accepted += 1
    return units, report


def _lang_matches(code: str, wanted: str) -> bool:
    code, wanted = code.lower().replace("_", "-"), wanted.lower().replace("_", "-")
    return code == wanted or code.startswith(wanted + "-") or wanted.startswith(code + "-")


def _seg_text(tuv: ET.Element) -> Optional[str]:
    seg = tuv.find("seg")
    if seg is None:
        return None
    # inline markup is dropped, its text kept
    return "".join(seg.itertext())


class _TmxRecord(NamedTuple):
    tuid: str
    source: Optional[str]
    target: Optional[str]
    problem: Optional[str]


def _read_tmx(file: CorpusFile, tag: str, report: IngestReport) -> Dict[str, _TmxRecord]:
    try:
        root = ET.fromstring(_read_text(file.path))
    except ET.ParseError as exc:
        raise IngestError(f"{file.path}: malformed XML: {exc}") from exc
    body = root.find("body")
    if root.tag != "tmx" or body is None:
        raise IngestError(f"{file.path}: not a TMX document (no tmx/body)")

    records: Dict[str, _TmxRecord] = {}
    for n, tu in enumerate(body.iter("tu"), start=1):
        tuid = tu.get("tuid")
        if not tuid:
            report.reject(f"{tag}:tu #{n}", "missing tuid")
            continue
        if tuid in records:
            raise IngestError(f"{file.path}: duplicate tuid {tuid!r}")
        src = tgt = None
        problem = None
        n_src = n_tgt = 0
        for tuv in tu.findall("tuv"):
            lang = tuv.get(_XML_LANG) or tuv.get("lang") or ""
            if _lang_matches(lang, file.lang_pair.source):
                n_src += 1
                src = _seg_text(tuv)
            elif _lang_matches(lang, file.lang_pair.target):
                n_tgt += 1
                tgt = _seg_text(tuv)
            else:
                problem = f"language {lang!r} does not match {file.lang_pair}"
        if problem is None:
            if n_src != 1 or n_tgt != 1:
                problem = f"expected one {file.lang_pair.source} and one {file.lang_pair.target} variant, got {n_src} and {n_tgt}"
            elif src is None or tgt is None:
                problem = "variant without seg"
        records[tuid] = _TmxRecord(tuid, src, tgt, problem)
    return records


def parse_tmx_pair(mt_file: CorpusFile, pe_file: CorpusFile) -> Tuple[List[TranslationUnit], IngestReport]:
    """Join an MT-export TMX and a post-edited TMX on ``tuid``.

    Source and MT text come from ``mt_file``; the post-edited text is the
    target variant of ``pe_file``. Output follows ``mt_file`` order.
    """
    if mt_file.lang_pair != pe_file.lang_pair:
        raise IngestError(f"language pairs differ: {mt_file.lang_pair} vs {pe_file.lang_pair}")
    report = IngestReport()
    mt_records = _read_tmx(mt_file, "mt", report)
    pe_records = _read_tmx(pe_file, "pe", report)

    units: List[TranslationUnit] = []
    for tuid, rec in mt_records.items():
        other = pe_records.get(tuid)
        locator = f"tuid {tuid}"
        if other is None:
            report.reject(locator, "unmatched tuid (only in MT file)")
        elif rec.problem:
            report.reject(locator, f"MT file: {rec.problem}")
        elif other.problem:
            report.reject(locator, f"PE file: {other.problem}")
        else:
            units.append(TranslationUnit(tuid, rec.source, rec.target, other.target, mt_file.lang_pair))
            report.accepted += 1
    for tuid in pe_records:
        if tuid not in mt_records:
            report.reject(f"tuid {tuid}", "unmatched tuid (only in PE file)")
    return units, report


def clean_corpus(units: Sequence[TranslationUnit]) -> Tuple[List[TranslationUnit], IngestReport]:
    """Drop units that break corpus invariants and say why."""
    kept: List[TranslationUnit] = []
    report = IngestReport()
    seen = set()
    for i, unit in enumerate(units):
        locator = f"record {i + 1} (id={unit.id})"
        if unit.id in seen:
            report.reject(locator, "duplicate id")
        elif not normalize_text(unit.source):
            report.reject(locator, "empty source")
        else:
            seen.add(unit.id)
            kept.append(unit)
            report.accepted += 1
    return kept, report


def validate_corpus(units: Sequence[TranslationUnit]) -> IngestReport:
    return clean_corpus(units)[1]


def load_corpus(file: CorpusFile, pe_file: Optional[CorpusFile] = None) -> Tuple[List[TranslationUnit], IngestReport]:
    """Parse ``file`` by its format, then apply :func:`clean_corpus`.

    The returned report covers both passes: records dropped by validation
    move from accepted to rejected.
    """
    if file.format is CorpusFormat.TSV:
        units, report = parse_tsv(file)
    elif file.format is CorpusFormat.JSONL:
        units, report = parse_jsonl(file)
    else:
        if pe_file is None:
            raise IngestError("TMX input needs both an MT file and a post-edited file")
        units, report = parse_tmx_pair(file, pe_file)
    kept, check = clean_corpus(units)
    report.accepted = check.accepted
    report.rejected += check.rejected
    report.rejection_reasons.extend(check.rejection_reasons)
    return kept, report


def unit_to_record(unit: TranslationUnit) -> dict:
    return {"id": unit.id, "source": unit.source, "mt": unit.mt, "pe": unit.pe}


def dumps_jsonl(units: Iterable[TranslationUnit]) -> str:
    """Canonical JSONL: fixed key order, no ASCII escaping, LF endings."""
    return "".join(json.dumps(unit_to_record(u), ensure_ascii=False) + "\n" for u in units)


def write_jsonl(units: Iterable[TranslationUnit], path: PathLike) -> None:
    Path(path).write_text(dumps_jsonl(units), encoding="utf-8", newline="\n")
