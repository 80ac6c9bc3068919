import csv
import io
import json
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import EN_DE_COUNTS, EN_IT_COUNTS
from oracles import brute_metrics, tally
from mtpe.corpus import Label
from mtpe.metrics import (
    ConfusionMatrix,
    LearningCurvePoint,
    MetricsReport,
    PairProfile,
    Prediction,
    SavingsParams,
    Trend,
    accuracy,
    compare_models,
    confusion_from,
    evaluate,
    lai_false_rate,
    language_pair_profile,
    learning_curve,
    render_comparison,
    render_curve,
    render_report,
    render_savings,
    savings_report,
    scenario1,
    scenario2,
    type2_rate,
)

E, K = Label.EDIT, Label.KEEP


def preds_from(pairs):
    out = []
    for i, (gold, pred) in enumerate(pairs):
        out.append(Prediction(f"p{i}", None if pred == "ABSTAIN" else Label(pred), Label(gold)))
    return out


def test_confusion_from_en_it_counts():
    pairs = [("EDIT", "EDIT")] * 503 + [("KEEP", "EDIT")] * 81 + [("KEEP", "KEEP")] * 191 + [("EDIT", "KEEP")] * 67
    random.Random(0).shuffle(pairs)
    assert confusion_from(preds_from(pairs)) == EN_IT_COUNTS


def test_confusion_from_empty():
    assert confusion_from([]) == ConfusionMatrix(0, 0, 0, 0, 0)


def test_abstain_counts_only_abstained():
    m = confusion_from(preds_from([("EDIT", "ABSTAIN"), ("KEEP", "ABSTAIN"), ("KEEP", "KEEP")]))
    assert m == ConfusionMatrix(0, 0, 1, 0, 2)


def test_prediction_rejects_abstain_gold():
    with pytest.raises(ValueError):
        Prediction("x", E, None)


def test_prediction_dict_round_trip():
    for p in [Prediction("a", E, K, 0.75), Prediction("b", None, E, None, "timeout")]:
        assert Prediction.from_dict(json.loads(json.dumps(p.to_dict()))) == p
    assert Prediction("b", None, E).to_dict()["predicted"] == "ABSTAIN"


@pytest.mark.parametrize("bad", [(-1, 0, 0, 0), (1.5, 0, 0, 0), (True, 0, 0, 0)])
def test_matrix_rejects_bad_counts(bad):
    with pytest.raises(ValueError):
        ConfusionMatrix(*bad)


def test_matrix_parse():
    assert ConfusionMatrix.parse("503, 81,191,67") == EN_IT_COUNTS
    assert ConfusionMatrix.parse("1,2,3,4,5").abstained == 5
    with pytest.raises(ValueError):
        ConfusionMatrix.parse("1,2,3")


# percentages below are exact quotients of the printed counts, rounded to 2 dp
@pytest.mark.parametrize(
    "m, acc, t2, lai",
    [
        (EN_IT_COUNTS, 0.8242, 0.0796, 0.2597),
        (EN_DE_COUNTS, 0.8369, 0.1079, 0.1692),
    ],
)
def test_rates_on_published_matrices(m, acc, t2, lai):
    assert accuracy(m) == pytest.approx(acc, abs=5e-5)
    assert type2_rate(m) == pytest.approx(t2, abs=5e-5)
    assert lai_false_rate(m) == pytest.approx(lai, abs=5e-5)


def test_scenarios_on_published_matrices():
    assert scenario1(EN_DE_COUNTS)[1] == pytest.approx(0.6379, abs=5e-5)
    assert scenario1(EN_IT_COUNTS)[1] == pytest.approx(0.3064, abs=5e-5)
    assert scenario1(EN_IT_COUNTS)[0] == pytest.approx(67 / 842)
    assert scenario2(EN_IT_COUNTS, 0.10) == pytest.approx(0.2758, abs=5e-5)
    assert scenario2(EN_DE_COUNTS, 0.10) == pytest.approx(0.5741, abs=5e-5)


def test_trivial_edges():
    assert accuracy(ConfusionMatrix(tp=7)) == 1.0
    assert type2_rate(ConfusionMatrix(tp=3, tn=2)) == 0.0
    assert lai_false_rate(ConfusionMatrix(tp=3, tn=2)) == 0.0
    assert lai_false_rate(ConfusionMatrix(tp=3, fp=1)) is None
    assert scenario1(ConfusionMatrix(tp=3, fp=1)) == (0.0, 0.0)
    assert scenario2(EN_IT_COUNTS, 1.0) == 0.0


@pytest.mark.parametrize("fn", [accuracy, type2_rate, scenario1, scenario2])
def test_zero_total_rejected(fn):
    with pytest.raises(ValueError):
        fn(ConfusionMatrix(abstained=4))


@pytest.mark.parametrize("r", [-0.01, 1.01])
def test_pay_rate_range(r):
    with pytest.raises(ValueError):
        SavingsParams(r)
    with pytest.raises(ValueError):
        scenario2(EN_IT_COUNTS, r)


matrices = st.builds(
    ConfusionMatrix,
    st.integers(0, 1000), st.integers(0, 1000), st.integers(0, 1000), st.integers(0, 1000),
).filter(lambda m: m.total() > 0)


@given(matrices)
def test_accuracy_plus_error_is_one(m):
    assert Fraction(accuracy(m)) + Fraction(m.fp + m.fn, m.total()) == pytest.approx(1, abs=1e-12)


@given(matrices)
def test_rates_bounded(m):
    report = evaluate(m)
    for value in (report.accuracy, report.type2_rate, report.error_ceiling,
                  report.scenario1_savings, report.scenario2_savings):
        assert 0.0 <= value <= 1.0
    assert report.lai_false_rate is None or 0.0 <= report.lai_false_rate <= 1.0


@given(matrices, st.floats(0, 1), st.floats(0, 1))
def test_scenario2_monotone_in_pay_rate(m, r1, r2):
    assert scenario2(m, 0.0) == scenario1(m)[1]
    if m.lai > 0 and r1 < r2:
        assert scenario2(m, r1) > scenario2(m, r2)


pair_lists = st.lists(
    st.tuples(st.sampled_from(["EDIT", "KEEP"]), st.sampled_from(["EDIT", "KEEP", "ABSTAIN"])),
    max_size=500,
)


@settings(max_examples=200)
@given(pair_lists, st.randoms())
def test_metrics_match_brute_force(pairs, rnd):
    counts = tally(pairs)
    m = confusion_from(preds_from(pairs))
    assert m.to_dict() == counts
    assert m.total() + m.abstained == len(pairs)
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    assert confusion_from(preds_from(shuffled)) == m
    expected = brute_metrics(counts)
    if m.total() == 0:
        return
    report = evaluate(m)
    for key, value in expected.items():
        got = getattr(report, key)
        if value is None:
            assert got is None
        else:
            assert got == float(value)


def test_profiles():
    profiles = language_pair_profile({
        "en-tr": ConfusionMatrix(tp=347, tn=353, fp=1, fn=1),
        "en-it": EN_IT_COUNTS,
        "en-de": EN_DE_COUNTS,
    })
    assert profiles == {
        "en-tr": PairProfile.BALANCED,
        "en-it": PairProfile.TP_DOMINANT,
        "en-de": PairProfile.TN_DOMINANT,
    }
    assert language_pair_profile({"x": ConfusionMatrix(tp=347, tn=353)}, margin=5)["x"] is PairProfile.TN_DOMINANT


def test_profile_rejects_empty():
    with pytest.raises(ValueError):
        language_pair_profile({"x": ConfusionMatrix()})


def _with_correct(correct, total=842):
    return ConfusionMatrix(tp=correct, fp=total - correct)


def test_compare_models():
    rows = compare_models([("a", _with_correct(694)), ("b", _with_correct(699)), ("c", _with_correct(706))])
    assert [r.correct for r in rows] == [694, 699, 706]
    assert [round(r.accuracy, 4) for r in rows] == [0.8242, 0.8302, 0.8385]
    assert rows[-1].delta == pytest.approx(0.0143, abs=5e-5)
    assert rows[0].delta == 0
    assert compare_models([("only", _with_correct(10, 20))])[0].delta == 0


def test_compare_models_mismatched_totals():
    with pytest.raises(ValueError):
        compare_models([("a", _with_correct(10, 20)), ("b", _with_correct(10, 21))])


def _point(size, fn, total=1000):
    return LearningCurvePoint(size, ConfusionMatrix(tp=total - fn, fn=fn))


def test_learning_curve():
    points, trend = learning_curve([_point(6000, 130), _point(2000, 200), _point(4000, 160)])
    assert [p.train_size for p in points] == [2000, 4000, 6000]
    assert [p.fn_rate for p in points] == [0.20, 0.16, 0.13]
    assert trend is Trend.IMPROVING
    assert learning_curve([_point(10, 5)])[1] is Trend.NOT_APPLICABLE
    assert learning_curve([_point(10, 5), _point(20, 9)])[1] is Trend.NOT_IMPROVING


def test_learning_curve_duplicate_sizes():
    with pytest.raises(ValueError):
        learning_curve([_point(10, 5), _point(10, 6)])


@given(st.integers(1, 10**6), matrices)
def test_curve_point_fn_rate_recomputed(size, m):
    assert LearningCurvePoint(size, m).fn_rate == m.fn / m.total()
    with pytest.raises(ValueError):
        LearningCurvePoint(size, m, fn_rate=m.fn / m.total() + 0.01)


def test_render_text():
    text = render_report(evaluate(EN_IT_COUNTS), "text")
    assert "accuracy: 82.42%" in text
    assert "TP 503" in text and "FN 67" in text and "TN 191" in text and "FP 81" in text
    assert "LAI false rate: 25.97%" in text


def test_render_json_round_trip():
    report = evaluate(EN_DE_COUNTS, SavingsParams(0.25))
    assert MetricsReport.from_dict(json.loads(render_report(report, "json"))) == report


def test_render_csv():
    rows = list(csv.reader(io.StringIO(render_report(evaluate(EN_IT_COUNTS), "csv"))))
    assert rows == [["tp", "fp", "tn", "fn", "abstained"], ["503", "81", "191", "67", "0"]]


def test_render_unknown_format():
    with pytest.raises(ValueError):
        render_report(evaluate(EN_IT_COUNTS), "xml")


def test_render_na_lai():
    assert "LAI false rate: n/a" in render_report(evaluate(ConfusionMatrix(tp=1, fp=1)))


def test_render_helpers():
    s = savings_report(EN_DE_COUNTS)
    assert "57.41%" in render_savings(s) and "63.79%" in render_savings(s)
    assert json.loads(render_savings(s, "json"))["scenario2_savings"] == pytest.approx(0.9 * 532 / 834)
    assert render_savings(s, "csv").startswith("pay_rate,")
    rows = compare_models([("a", _with_correct(694)), ("c", _with_correct(706))])
    assert "+1.43" in render_comparison(rows)
    assert json.loads(render_comparison(rows, "json"))[1]["correct"] == 706
    assert len(render_comparison(rows, "csv").splitlines()) == 3
    points, trend = learning_curve([_point(2000, 200), _point(6000, 130)])
    assert "trend: IMPROVING" in render_curve(points, trend)
    assert json.loads(render_curve(points, trend, "json"))["trend"] == "IMPROVING"
    assert render_curve(points, trend, "csv").splitlines()[1].startswith("2000,")
