import random

import pytest

from mtpe.corpus import LangPair, TranslationUnit, label_corpus
from mtpe.metrics import ConfusionMatrix

EN_IT = LangPair("en", "it")

# published EN-IT and EN-DE test-set confusion counts (curie model)
EN_IT_COUNTS = ConfusionMatrix(tp=503, fp=81, tn=191, fn=67)
EN_DE_COUNTS = ConfusionMatrix(tp=256, fp=46, tn=442, fn=90)

_ACCEPTANCE = []


def record_acceptance(number, title, passed, detail=""):
    _ACCEPTANCE.append((number, title, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {title}" + (f" -- {detail}" if detail else ""))


def make_unit(uid, source="The cat sat.", mt="Il gatto.", pe="Il gatto.", lang_pair=EN_IT):
    return TranslationUnit(uid, source, mt, pe, lang_pair)


def random_segments(rng, n, lengths=None):
    """n labelled segments with source lengths drawn from ``lengths`` (a callable)."""
    lengths = lengths or (lambda: rng.randint(1, 60))
    units = []
    for i in range(n):
        k = lengths()
        source = " ".join("w%d" % rng.randint(0, 50) for _ in range(k))
        mt = "m%d" % rng.randint(0, 30)
        pe = mt if rng.random() < 0.4 else mt + "x"
        units.append(make_unit(f"s{i:05d}", source, mt, pe))
    return label_corpus(units)


@pytest.fixture
def rng():
    return random.Random(1234)
