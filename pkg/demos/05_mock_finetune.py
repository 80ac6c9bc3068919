"""
Fine-tuning against a scripted API
==================================

The scripted transport stands in for the hosted service: it accepts the
upload, runs a job through its statuses, reports training loss and answers
completions. Swap it for ``HttpTransport`` to talk to a real server.
"""

import json
from pathlib import Path

from mtpe.corpus import LangPair, label_corpus
from mtpe.finetune import (
    FineTuneClient,
    PromptEncoding,
    RemoteModel,
    ScriptedTransport,
    classify_batch,
    prepare_training_file,
)
from mtpe.ingest import CorpusFile, load_corpus
from mtpe.metrics import confusion_from, evaluate, render_report
from mtpe.splitter import stratified_split
from mtpe.synthetic import bundled_corpus_path

scenario = json.loads((Path(__file__).parent / "mock_scenario.json").read_text())
client = FineTuneClient(ScriptedTransport(scenario), sleep=lambda s: None)

units, _ = load_corpus(CorpusFile(bundled_corpus_path(), "tsv", LangPair("en", "it")))
segments = label_corpus(units)
split = stratified_split(segments, 0.9, seed=0)
by_id = {s.id: s for s in segments}

doc, _ = prepare_training_file([by_id[i] for i in split.train_ids])
print(doc.splitlines()[0])

file_id = client.upload_file(doc)
job = client.create_job(file_id, "curie", {"n_epochs": 4})
print(f"{job.job_id}: {job.status.value}")

result = client.poll_job(job.job_id, poll_interval=30)
print(f"{job.job_id}: {result.job.status.value} after {result.polls} polls -> {result.job.fine_tuned_model}")

for event in client.fetch_events(job.job_id):
    print(f"  step {event.step}: loss {event.loss}")

model = RemoteModel(client, result.job.fine_tuned_model, PromptEncoding())
predictions = classify_batch(model, [by_id[i] for i in split.test_ids])
print(render_report(evaluate(confusion_from(predictions))))
