"""
The whole pipeline, offline
===========================

Ingest the bundled corpus, split it, train the nearest-neighbour baseline
and evaluate it. This is the same path ``mtpe predict --backend baseline``
takes, without a project directory.
"""

from mtpe.baseline import train_baseline
from mtpe.corpus import LangPair, label_corpus
from mtpe.finetune import classify_batch
from mtpe.ingest import CorpusFile, load_corpus
from mtpe.metrics import confusion_from, evaluate, render_report
from mtpe.splitter import stratified_split
from mtpe.synthetic import bundled_corpus_path

units, report = load_corpus(CorpusFile(bundled_corpus_path(), "tsv", LangPair("en", "it")))
print(f"ingested {report.accepted} units, rejected {report.rejected}")

segments = label_corpus(units)
split = stratified_split(segments, 0.9, seed=0)
by_id = {s.id: s for s in segments}

model = train_baseline([by_id[i] for i in split.train_ids])
predictions = classify_batch(model, [by_id[i] for i in split.test_ids], concurrency=1)
for p in predictions:
    print(f"{p.unit_id}: gold {p.gold.value:<4} predicted {p.predicted.value:<4} confidence {p.confidence:.2f}")

print(render_report(evaluate(confusion_from(predictions))))
