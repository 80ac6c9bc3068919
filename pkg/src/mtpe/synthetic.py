"""Seeded synthetic EN-IT triples for demos and tests.

MT sentences are word salads from a small Italian vocabulary. Some carry
"MT errors" (a wrong word from a fixed list) that the post-edit fixes; the
rest pass through unchanged, sometimes with stray whitespace that
normalization must ignore.
"""

from __future__ import annotations

import random
from importlib import resources
from pathlib import Path
from typing import List

from mtpe.corpus import LangPair, TranslationUnit

EN = (
    "the invoice order customer account payment system report user data "
    "screen field value entry document posting period company code vendor "
    "material stock price tax amount date status list table key change "
    "create display check select save delete update open close release"
).split()
IT = (
    "la fattura ordine cliente conto pagamento sistema report utente dati "
    "schermata campo valore voce documento registrazione periodo società codice "
    "fornitore materiale scorta prezzo imposta importo data stato elenco tabella "
    "chiave modifica crea visualizza verifica seleziona salva elimina aggiorna apri chiudi"
).split()
# wrong word the engine emits -> what the post-editor writes
MT_ERRORS = {
    "fatturazione": "fattura",
    "ordinazione": "ordine",
    "pagamenti": "pagamento",
    "utenti": "utente",
    "schermo": "schermata",
    "campi": "campo",
    "documenti": "documento",
    "imposte": "imposta",
    "prezzi": "prezzo",
    "tavola": "tabella",
}
# share of sentences per source-length range
LENGTH_PROFILE = ((1, 5, 0.15), (6, 10, 0.25), (11, 20, 0.35), (21, 40, 0.2), (41, 55, 0.05))

BUNDLED = "synthetic_en_it_100.tsv"


def synthetic_units(n: int = 100, seed: int = 0, edit_share: float = 0.6,
                    lang_pair: LangPair = LangPair("en", "it")) -> List[TranslationUnit]:
    rng = random.Random(seed)
    wrong = sorted(MT_ERRORS)
    units = []
    for i in range(n):
        r = rng.random()
        for lo, hi, share in LENGTH_PROFILE:
            r -= share
            if r < 0:
                break
        length = rng.randint(lo, hi)
        source = " ".join(rng.choice(EN) for _ in range(length)).capitalize() + "."
        words = [rng.choice(IT) for _ in range(max(1, length + rng.randint(-2, 2)))]
        pe = " ".join(words).capitalize() + "."
        if rng.random() < edit_share:
            for _ in range(rng.randint(1, 2)):
                bad = rng.choice(wrong)
                words[rng.randrange(len(words))] = bad
                pe_words = [MT_ERRORS.get(w, w) for w in words]
                pe = " ".join(pe_words).capitalize() + "."
            mt = " ".join(words).capitalize() + "."
        else:
            mt = pe + rng.choice(["", "", "", " ", "  "])
        units.append(TranslationUnit(f"u{i + 1:04d}", source, mt, pe, lang_pair))
    return units


def bundled_corpus_path() -> Path:
    """Path of the 100-unit EN-IT TSV shipped with the package."""
    return Path(str(resources.files("mtpe.data").joinpath(BUNDLED)))


def write_tsv(units: List[TranslationUnit], path) -> None:
    lines = ["# id\tsource\tmt\tpe"]
    lines += [f"{u.id}\t{u.source}\t{u.mt}\t{u.pe}" for u in units]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
