"""Confusion matrix and everything derived from it.

EDIT is the positive class: a true positive is a segment correctly flagged
for post-editing, a false negative is a segment that needed editing but was
predicted to be fine ("leave as is", LAI). Predicted-KEEP segments (TN + FN)
are the LAI set whose review can be skipped or discounted.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from fractions import Fraction
from dataclasses import asdict, dataclass, field
from typing import Iterable, List, Mapping, Optional, Sequence, Tuple

from mtpe.corpus import Label

ABSTAIN = "ABSTAIN"
DEFAULT_PAY_RATE = 0.10
DEFAULT_BALANCE_MARGIN = 10


@dataclass(frozen=True)
class Prediction:
    unit_id: str
    predicted: Optional[Label]  # None means the backend abstained
    gold: Label
    confidence: Optional[float] = None
    error: Optional[str] = None

    def __post_init__(self):
        if self.gold not in (Label.EDIT, Label.KEEP):
            raise ValueError(f"gold label must be EDIT or KEEP, got {self.gold!r}")

    @property
    def abstained(self) -> bool:
        return self.predicted is None

    def to_dict(self) -> dict:
        d = {
            "id": self.unit_id,
            "predicted": ABSTAIN if self.predicted is None else self.predicted.value,
            "gold": self.gold.value,
            "confidence": self.confidence,
        }
        if self.error:
            d["error"] = self.error
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Prediction":
        predicted = None if d["predicted"] == ABSTAIN else Label(d["predicted"])
        return cls(d["id"], predicted, Label(d["gold"]), d.get("confidence"), d.get("error"))


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    abstained: int = 0

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn", "abstained"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {value!r}")

    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def correct(self) -> int:
        return self.tp + self.tn

    @property
    def lai(self) -> int:
        """Segments predicted as not needing post-editing."""
        return self.tn + self.fn

    @classmethod
    def parse(cls, text: str) -> "ConfusionMatrix":
        """Parse ``"tp,fp,tn,fn"`` (optionally a fifth abstained count)."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) not in (4, 5):
            raise ValueError(f"expected tp,fp,tn,fn counts, got {text!r}")
        return cls(*(int(p) for p in parts))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["tp", "fp", "tn", "fn", "abstained"])
        writer.writerow([self.tp, self.fp, self.tn, self.fn, self.abstained])
        return buf.getvalue()


def confusion_from(predictions: Iterable[Prediction]) -> ConfusionMatrix:
    tp = fp = tn = fn = abstained = 0
    for p in predictions:
        if p.predicted is None:
            abstained += 1
        elif p.gold is Label.EDIT:
            if p.predicted is Label.EDIT:
                tp += 1
            else:
                fn += 1
        elif p.predicted is Label.EDIT:
            fp += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, tn, fn, abstained)


def _require_total(m: ConfusionMatrix) -> int:
    total = m.total()
    if total == 0:
        raise ValueError("confusion matrix is empty")
    return total


def accuracy(m: ConfusionMatrix) -> float:
    return (m.tp + m.tn) / _require_total(m)


def type2_rate(m: ConfusionMatrix) -> float:
    """Share of all segments wrongly passed as not needing edits."""
    return m.fn / _require_total(m)


def lai_false_rate(m: ConfusionMatrix) -> Optional[float]:
    """FN / (TN + FN): how many "leave as is" segments actually had errors.

    Returns ``None`` when nothing was predicted KEEP.
    """
    if m.lai == 0:
        return None
    return m.fn / m.lai


def scenario1(m: ConfusionMatrix) -> Tuple[float, float]:
    """LAI segments are published unreviewed.

    Returns ``(error_ceiling, savings)``: the worst-case share of erroneous
    segments that reach publication, FN / total, and the share of segments
    that skip review, (TN + FN) / total.
    """
    total = _require_total(m)
    return m.fn / total, m.lai / total


def scenario2(m: ConfusionMatrix, pay_rate: float = DEFAULT_PAY_RATE) -> float:
    """LAI segments are still reviewed, paid at ``pay_rate`` of full rate.

    Savings are ``(1 - pay_rate) * (TN + FN) / total`` with no unreviewed
    output.
    """
    if not 0 <= pay_rate <= 1:
        raise ValueError(f"pay rate must be in [0, 1], got {pay_rate}")
    # exact in the decimal the user typed (0.1 is 1/10), rounded once
    keep = 1 - Fraction(repr(float(pay_rate)))
    return float(keep * m.lai / _require_total(m))


@dataclass(frozen=True)
class SavingsParams:
    pay_rate: float = DEFAULT_PAY_RATE

    def __post_init__(self):
        if not 0 <= self.pay_rate <= 1:
            raise ValueError(f"pay rate must be in [0, 1], got {self.pay_rate}")


@dataclass(frozen=True)
class SavingsReport:
    matrix: ConfusionMatrix
    params: SavingsParams
    error_ceiling: float
    lai_false_rate: Optional[float]
    scenario1_savings: float
    scenario2_savings: float

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.to_dict(),
            "params": asdict(self.params),
            "error_ceiling": self.error_ceiling,
            "lai_false_rate": self.lai_false_rate,
            "scenario1_savings": self.scenario1_savings,
            "scenario2_savings": self.scenario2_savings,
        }


def savings_report(m: ConfusionMatrix, params: SavingsParams = SavingsParams()) -> SavingsReport:
    ceiling, s1 = scenario1(m)
    return SavingsReport(m, params, ceiling, lai_false_rate(m), s1, scenario2(m, params.pay_rate))


@dataclass(frozen=True)
class MetricsReport:
    matrix: ConfusionMatrix
    accuracy: float
    type2_rate: float
    lai_false_rate: Optional[float]
    error_ceiling: float
    scenario1_savings: float
    scenario2_savings: float
    params: SavingsParams = field(default_factory=SavingsParams)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["matrix"] = self.matrix.to_dict()
        d["params"] = asdict(self.params)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "MetricsReport":
        d = dict(d)
        d["matrix"] = ConfusionMatrix(**d["matrix"])
        d["params"] = SavingsParams(**d["params"])
        return cls(**d)


def evaluate(m: ConfusionMatrix, params: SavingsParams = SavingsParams()) -> MetricsReport:
    ceiling, s1 = scenario1(m)
    return MetricsReport(
        matrix=m,
        accuracy=accuracy(m),
        type2_rate=type2_rate(m),
        lai_false_rate=lai_false_rate(m),
        error_ceiling=ceiling,
        scenario1_savings=s1,
        scenario2_savings=scenario2(m, params.pay_rate),
        params=params,
    )


class PairProfile(str, enum.Enum):
    TP_DOMINANT = "TP_DOMINANT"
    TN_DOMINANT = "TN_DOMINANT"
    BALANCED = "BALANCED"


def language_pair_profile(
    matrices: Mapping[str, ConfusionMatrix], margin: int = DEFAULT_BALANCE_MARGIN
) -> dict:
    """Say whether each pair's correct answers are mostly TP, mostly TN, or even.

    A pair is BALANCED when ``|tp - tn| <= margin``.
    """
    out = {}
    for pair, m in matrices.items():
        _require_total(m)
        if abs(m.tp - m.tn) <= margin:
            out[pair] = PairProfile.BALANCED
        elif m.tp > m.tn:
            out[pair] = PairProfile.TP_DOMINANT
        else:
            out[pair] = PairProfile.TN_DOMINANT
    return out


@dataclass(frozen=True)
class ComparisonRow:
    model: str
    correct: int
    total: int
    accuracy: float
    delta: float  # accuracy minus the first row's accuracy


def compare_models(runs: Sequence[Tuple[str, ConfusionMatrix]]) -> List[ComparisonRow]:
    if not runs:
        return []
    totals = {m.total() for _, m in runs}
    if len(totals) != 1:
        raise ValueError(f"models were evaluated on different test set sizes: {sorted(totals)}")
    base = accuracy(runs[0][1])
    rows = []
    for name, m in runs:
        acc = accuracy(m)
        rows.append(ComparisonRow(name, m.correct, m.total(), acc, acc - base))
    return rows


@dataclass(frozen=True)
class LearningCurvePoint:
    train_size: int
    matrix: ConfusionMatrix
    fn_rate: Optional[float] = None

    def __post_init__(self):
        rate = type2_rate(self.matrix)
        if self.fn_rate is None:
            object.__setattr__(self, "fn_rate", rate)
        elif abs(self.fn_rate - rate) > 1e-12:
            raise ValueError(f"fn_rate {self.fn_rate} does not match the matrix ({rate})")


class Trend(str, enum.Enum):
    IMPROVING = "IMPROVING"
    NOT_IMPROVING = "NOT_IMPROVING"
    NOT_APPLICABLE = "NOT_APPLICABLE"


def learning_curve(points: Sequence[LearningCurvePoint]) -> Tuple[List[LearningCurvePoint], Trend]:
    """Sort points by training size and check whether FN rate went down."""
    sizes = [p.train_size for p in points]
    if len(set(sizes)) != len(sizes):
        raise ValueError(f"duplicate training sizes: {sizes}")
    ordered = sorted(points, key=lambda p: p.train_size)
    if len(ordered) < 2:
        return ordered, Trend.NOT_APPLICABLE
    if ordered[-1].fn_rate < ordered[0].fn_rate:
        return ordered, Trend.IMPROVING
    return ordered, Trend.NOT_IMPROVING


def pct(x: Optional[float]) -> str:
    return "n/a" if x is None else f"{100 * x:.2f}%"


def render_text(report: MetricsReport) -> str:
    """Labelled 2x2 grid followed by one line per derived rate."""
    m = report.matrix
    w = max(len(str(v)) for v in (m.tp, m.fp, m.tn, m.fn, 0)) + 2
    w = max(w, 12)
    lines = [
        f"{'':<12}{'pred EDIT':>{w}}{'pred KEEP':>{w}}",
        f"{'gold EDIT':<12}{'TP ' + str(m.tp):>{w}}{'FN ' + str(m.fn):>{w}}",
        f"{'gold KEEP':<12}{'FP ' + str(m.fp):>{w}}{'TN ' + str(m.tn):>{w}}",
        f"total: {m.total()}  abstained: {m.abstained}",
        "",
        f"accuracy: {pct(report.accuracy)}",
        f"type II rate: {pct(report.type2_rate)}",
        f"LAI false rate: {pct(report.lai_false_rate)}",
        f"error-rate ceiling (scenario 1): {pct(report.error_ceiling)}",
        f"savings, scenario 1 (LAI unreviewed): {pct(report.scenario1_savings)}",
        f"savings, scenario 2 (LAI reviewed at {pct(report.params.pay_rate)} pay): {pct(report.scenario2_savings)}",
    ]
    return "\n".join(lines) + "\n"


def render_report(report: MetricsReport, fmt: str = "text") -> str:
    fmt = fmt.lower()
    if fmt == "text":
        return render_text(report)
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        return report.matrix.to_csv()
    raise ValueError(f"unknown report format {fmt!r}")


def render_savings(report: SavingsReport, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["pay_rate", "error_ceiling", "lai_false_rate", "scenario1_savings", "scenario2_savings"])
        writer.writerow([report.params.pay_rate, report.error_ceiling, report.lai_false_rate,
                         report.scenario1_savings, report.scenario2_savings])
        return buf.getvalue()
    return (
        f"error-rate ceiling (scenario 1): {pct(report.error_ceiling)}\n"
        f"LAI false rate: {pct(report.lai_false_rate)}\n"
        f"savings, scenario 1: {pct(report.scenario1_savings)}\n"
        f"savings, scenario 2 at {pct(report.params.pay_rate)} pay: {pct(report.scenario2_savings)}\n"
    )


def render_comparison(rows: Sequence[ComparisonRow], fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps([asdict(r) for r in rows], indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["model", "correct", "total", "accuracy", "delta"])
        for r in rows:
            writer.writerow([r.model, r.correct, r.total, r.accuracy, r.delta])
        return buf.getvalue()
    width = max([5] + [len(r.model) for r in rows])
    out = [f"{'model':<{width}}  {'correct':>7}  {'total':>6}  {'accuracy':>8}  {'delta':>7}"]
    for r in rows:
        out.append(f"{r.model:<{width}}  {r.correct:>7}  {r.total:>6}  {pct(r.accuracy):>8}  {100 * r.delta:>+6.2f}")
    return "\n".join(out) + "\n"


def render_curve(points: Sequence[LearningCurvePoint], trend: Trend, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(
            {
                "trend": trend.value,
                "points": [
                    {"train_size": p.train_size, "fn_rate": p.fn_rate, "matrix": p.matrix.to_dict()}
                    for p in points
                ],
            },
            indent=2,
        ) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["train_size", "tp", "fp", "tn", "fn", "fn_rate"])
        for p in points:
            m = p.matrix
            writer.writerow([p.train_size, m.tp, m.fp, m.tn, m.fn, p.fn_rate])
        return buf.getvalue()
    out = [f"{'train_size':>10}  {'FN rate':>8}  {'accuracy':>8}"]
    for p in points:
        out.append(f"{p.train_size:>10}  {pct(p.fn_rate):>8}  {pct(accuracy(p.matrix)):>8}")
    out.append(f"trend: {trend.value}")
    return "\n".join(out) + "\n"
