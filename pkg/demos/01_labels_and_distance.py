"""
Labels from post-edits
======================

A segment needs post-editing when the post-edited text differs from the
raw MT after normalization. The edit distance tells how much it changed.
"""

from mtpe import LangPair, TranslationUnit, label_unit, normalize_text
from mtpe.corpus import edit_distance

pair = LangPair("en", "it")

# whitespace and Unicode composition are not edits
print(repr(normalize_text("  Il  gattó ")))

units = [
    TranslationUnit("u1", "The cat sat.", "Il gatto sedeva.", "Il gatto sedeva.", pair),
    TranslationUnit("u2", "Post the invoice.", "Registra la fatturazione.", "Registra la fattura.", pair),
    TranslationUnit("u3", "Save the document.", "Salva il documento. ", "Salva il documento.", pair),
]
for seg in map(label_unit, units):
    print(f"{seg.id}: {seg.label.value:<4}  distance {seg.edit_distance:>2}  "
          f"normalized {seg.normalized_distance:.3f}  bucket {seg.length_bucket}")

# the classic example
print("kitten -> sitting:", edit_distance("kitten", "sitting"))
