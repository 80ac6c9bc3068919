"""``mtpe`` command line: stage-gated pipeline over a project directory.

Each subcommand reads what earlier stages left in ``manifest.json``, writes
its own artifact, and appends its stage. Failures print one JSON line on
stderr and exit with 2 (missing prerequisite stage), 3 (validation) or
4 (API / transport).
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from mtpe import baseline, corpus, ingest, metrics, splitter
from mtpe.finetune import client as ft
from mtpe.finetune.encoding import Dialect, PromptEncoding, prepare_training_file
from mtpe.finetune.transport import HttpTransport, ScriptedTransport, TransportError
from mtpe.store import Project, StageError, corpus_fingerprint, init_project
from mtpe.synthetic import bundled_corpus_path

log = logging.getLogger("mtpe")

DEFAULTS: Dict[str, Any] = {
    "project": ".",
    "seed": 0,
    "api_base": "https://api.openai.com",
    "backend": "baseline",
    "format": "text",
    "model": "curie",
    "dialect": "completion",
    "ratio": splitter.DEFAULT_RATIO,
    "buckets": "1-5,6-10,11-20,21-40,41-",
    "pay_rate": metrics.DEFAULT_PAY_RATE,
    "margin": metrics.DEFAULT_BALANCE_MARGIN,
    "concurrency": ft.DEFAULT_CONCURRENCY,
    "poll_interval": ft.DEFAULT_POLL_INTERVAL,
    "poll_timeout": ft.DEFAULT_POLL_TIMEOUT,
}

EXIT_MISSING_STAGE = 2
EXIT_VALIDATION = 3
EXIT_TRANSPORT = 4


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code = code
        self.kind = kind


class Settings:
    """Effective option values: command line over ``--config`` over defaults."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file: Dict[str, Any] = {}
        if getattr(args, "config", None):
            self.file = json.loads(Path(args.config).read_text(encoding="utf-8"))
            if not isinstance(self.file, dict):
                raise CliError(EXIT_VALIDATION, "validation", "config file must hold a JSON object")

    def __getattr__(self, name: str):
        value = getattr(self.args, name, None)
        if value is None:
            value = self.file.get(name, DEFAULTS.get(name))
        return value

    def echo(self, *names: str) -> Dict[str, Any]:
        return {n: getattr(self, n) for n in names}


def _emit(text: str) -> None:
    sys.stdout.write(text)
    if not text.endswith("\n"):
        sys.stdout.write("\n")


def _project(s: Settings) -> Project:
    try:
        return Project(s.project)
    except FileNotFoundError as exc:
        raise CliError(EXIT_MISSING_STAGE, "missing_stage", f"missing prerequisite stage: init ({exc})")


def _load_units(p: Project) -> List[corpus.TranslationUnit]:
    stage = p.manifest.stage("ingest")
    file = ingest.CorpusFile(p / stage["path"], ingest.CorpusFormat.JSONL,
                             corpus.LangPair.parse(stage["lang_pair"]))
    units, _ = ingest.parse_jsonl(file)
    if corpus_fingerprint(units) != stage["corpus_fingerprint"]:
        raise CliError(EXIT_VALIDATION, "validation", "corpus file changed since ingest (fingerprint mismatch)")
    return units


def _load_segments(p: Project):
    split_stage = p.manifest.stage("split")
    buckets = corpus.parse_buckets(split_stage["buckets"])
    segments = corpus.label_corpus(_load_units(p), buckets)
    split = splitter.DatasetSplit.from_json((p / split_stage["path"]).read_text(encoding="utf-8"))
    return segments, split


def _client(s: Settings) -> ft.FineTuneClient:
    key: Optional[str]
    if s.mock_scenario:
        try:
            key = ft.load_api_key(s.api_key_file)
        except ft.ApiError:
            key = None
        transport = ScriptedTransport.from_file(s.mock_scenario, api_key=key)
        return ft.FineTuneClient(transport, sleep=lambda _: None, rng=random.Random(s.seed))
    transport = HttpTransport(s.api_base, ft.load_api_key(s.api_key_file))
    return ft.FineTuneClient(transport, rng=random.Random(s.seed))


def _matrix_arg(text: str) -> metrics.ConfusionMatrix:
    try:
        return metrics.ConfusionMatrix.parse(text)
    except ValueError as exc:
        raise CliError(EXIT_VALIDATION, "validation", str(exc))


# -- subcommands


def cmd_init(s: Settings) -> int:
    config = s.echo("seed", "api_base", "backend", "format", "model", "dialect", "ratio", "buckets",
                    "pay_rate", "concurrency", "poll_interval", "poll_timeout")
    p = init_project(s.project, run_id=s.run_id, config=config)
    _emit(f"initialised {p.path} (run {p.run_id})")
    return 0


def cmd_ingest(s: Settings) -> ingest.IngestReport:
    p = _project(s)
    if s.sample:
        s.args.input = str(bundled_corpus_path())
    if not s.input:
        raise CliError(EXIT_VALIDATION, "validation", "ingest needs --input or --sample")
    lang_pair = corpus.LangPair.parse(s.lang_pair or ("en-it" if s.sample else ""))
    fmt = s.input_format or Path(s.input).suffix.lstrip(".").lower()
    fmt = {"txt": "tsv", "json": "jsonl"}.get(fmt, fmt)
    try:
        fmt = ingest.CorpusFormat(fmt)
    except ValueError:
        raise CliError(EXIT_VALIDATION, "validation", f"unknown input format {fmt!r}")
    main = ingest.CorpusFile(s.input, fmt, lang_pair)
    pe = ingest.CorpusFile(s.pe_input, fmt, lang_pair) if s.pe_input else None
    units, report = ingest.load_corpus(main, pe)
    if not units:
        raise CliError(EXIT_VALIDATION, "validation", f"no usable units in {s.input}")

    p.write("corpus/corpus.jsonl", ingest.dumps_jsonl(units))
    p.write("corpus/ingest_report.json", json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n")
    stats = corpus.corpus_stats(corpus.label_corpus(units))
    p.record("ingest", {
        "input": "(bundled sample)" if s.sample else str(s.input),
        "pe_input": str(s.pe_input) if s.pe_input else None,
        "format": fmt.value,
        "lang_pair": str(lang_pair),
        "path": "corpus/corpus.jsonl",
        "corpus_fingerprint": corpus_fingerprint(units),
        "report": report.to_dict(),
        "stats": {"n_units": stats.n_units, "edit_count": stats.edit_count, "keep_count": stats.keep_count,
                  "mean_source_length": stats.mean_source_length},
    })
    _emit(f"accepted {report.accepted}, rejected {report.rejected} "
          f"(EDIT {stats.edit_count}, KEEP {stats.keep_count}, mean source length {stats.mean_source_length:.1f})")
    for r in report.rejection_reasons[:20]:
        _emit(f"  {r.locator}: {r.reason}")
    return report


def cmd_split(s: Settings) -> splitter.DatasetSplit:
    p = _project(s)
    if p.manifest.has("split"):
        raise StageError("stage already recorded: split")
    buckets = corpus.parse_buckets(s.buckets)
    segments = corpus.label_corpus(_load_units(p), buckets)
    split = splitter.stratified_split(segments, ratio=float(s.ratio), seed=int(s.seed), buckets=buckets)
    checks = splitter.verify_distribution(split, segments, buckets)
    p.write("splits/split.json", split.to_json())
    p.record("split", {
        "path": "splits/split.json",
        "ratio": split.ratio,
        "seed": split.seed,
        "buckets": s.buckets,
        "n_train": len(split.train_ids),
        "n_test": len(split.test_ids),
        "flagged_buckets": [c.bucket.index for c in checks if c.flagged],
    })
    _emit(f"train {len(split.train_ids)}, test {len(split.test_ids)} (ratio {split.ratio}, seed {split.seed})")
    for a in split.bucket_audit:
        _emit(f"  bucket {a.bucket}: train {a.train_count}, test {a.test_count}")
    return split


def _train_segments(p: Project, segments, split, train_size: Optional[int], seed: int):
    by_id = {seg.id: seg for seg in segments}
    ids = list(split.train_ids)
    if train_size:
        (_, ids), = splitter.subsample_train(split, splitter.SubsamplePlan((train_size,), seed), segments)
    return [by_id[i] for i in ids]


def cmd_prepare(s: Settings) -> Path:
    p = _project(s)
    segments, split = _load_segments(p)
    train = _train_segments(p, segments, split, s.train_size, int(s.seed))
    enc = PromptEncoding(Dialect(s.dialect))
    doc, report = prepare_training_file(train, enc)
    path = p.write("jobs/train.jsonl", doc)
    p.record("prepare", {
        "path": "jobs/train.jsonl",
        "dialect": enc.dialect.value,
        "train_size": s.train_size,
        "records": report.accepted,
        "report": report.to_dict(),
    })
    _emit(f"wrote {report.accepted} {enc.dialect.value} records to {path}")
    return path


def cmd_finetune(s: Settings) -> ft.FineTuneJob:
    p = _project(s)
    m = p.manifest
    client = _client(s)
    if s.action == "start":
        prep = m.stage("prepare")
        if m.has("finetune"):
            raise StageError("stage already recorded: finetune")
        doc = (p / prep["path"]).read_text(encoding="utf-8")
        file_id = client.upload_file(doc)
        hyper = {"n_epochs": s.epochs} if s.epochs else {}
        job = client.create_job(file_id, s.model, hyper)
        p.record("finetune", {"file_id": file_id, "base_model": s.model, "dialect": prep["dialect"],
                              "job": job.to_dict()})
        _emit(f"job {job.job_id} {job.status.value} (base model {job.base_model}, file {file_id})")
        return job

    start = m.stage("finetune")
    job_id = start["job"]["job_id"]
    if s.action == "status":
        if m.has("finetune_result"):
            job = ft.FineTuneJob.from_dict(m.stage("finetune_result")["job"])
            _emit(f"job {job.job_id} {job.status.value} model {job.fine_tuned_model}")
            return job
        if s.wait:
            result = client.poll_job(job_id, float(s.poll_interval), float(s.poll_timeout))
            job = result.job
            if result.timed_out:
                _emit(f"job {job_id} still {job.status.value} after {s.poll_timeout}s ({result.polls} polls)")
        else:
            job = client.get_job(job_id)
        if job.status.terminal:
            p.record("finetune_result", {"job": job.to_dict()})
        _emit(f"job {job.job_id} {job.status.value}"
              + (f" model {job.fine_tuned_model}" if job.fine_tuned_model else ""))
        return job

    # events
    events = client.fetch_events(job_id)
    csv_path = f"jobs/{job_id}.loss.csv"
    p.write(csv_path, ft.events_to_csv(events))
    p.record("events", {"job_id": job_id, "loss_csv": csv_path, "event_log": ft.events_to_json(events)})
    _emit(f"{len(events)} training events written to {csv_path}")
    return ft.FineTuneJob.from_dict(start["job"])


def cmd_predict(s: Settings) -> Path:
    p = _project(s)
    m = p.manifest
    if m.has("predict"):
        raise StageError("stage already recorded: predict")
    segments, split = _load_segments(p)
    by_id = {seg.id: seg for seg in segments}
    test = [by_id[i] for i in split.test_ids]

    if s.backend == "baseline":
        train = _train_segments(p, segments, split, s.train_size, int(s.seed))
        model = baseline.train_baseline(train)
        model.save(p / "jobs/baseline_model.jsonl")
        p.record("model", {"kind": "baseline", "path": "jobs/baseline_model.jsonl",
                           "exemplars": len(model.exemplars), "train_size": s.train_size})
        backend = model
        descriptor = model.describe()
    else:
        result = m.stage("finetune_result")
        job = ft.FineTuneJob.from_dict(result["job"])
        if job.status is not ft.JobStatus.SUCCEEDED:
            raise CliError(EXIT_VALIDATION, "validation", f"fine-tuning job {job.job_id} ended {job.status.value}")
        dialect = m.stage("finetune").get("dialect", s.dialect)
        backend = ft.RemoteModel(_client(s), job.fine_tuned_model, PromptEncoding(Dialect(dialect)))
        descriptor = backend.describe() | {"base_model": job.base_model, "job_id": job.job_id}

    preds = ft.classify_batch(backend, test, concurrency=int(s.concurrency))
    rel = f"predictions/{p.run_id}.jsonl"
    p.write(rel, "".join(json.dumps(x.to_dict(), ensure_ascii=False) + "\n" for x in preds))
    abstained = sum(x.abstained for x in preds)
    p.record("predict", {"backend": descriptor, "path": rel, "n": len(preds), "abstained": abstained,
                         "concurrency": int(s.concurrency)})
    _emit(f"{len(preds)} predictions ({abstained} abstained) written to {p / rel}")
    return p / rel


def _load_predictions(p: Project) -> List[metrics.Prediction]:
    stage = p.manifest.stage("predict")
    lines = (p / stage["path"]).read_text(encoding="utf-8").splitlines()
    return [metrics.Prediction.from_dict(json.loads(x)) for x in lines if x.strip()]


def cmd_eval(s: Settings) -> metrics.MetricsReport:
    params = metrics.SavingsParams(float(s.pay_rate))
    if s.matrix:
        report = metrics.evaluate(_matrix_arg(s.matrix), params)
        _emit(metrics.render_report(report, s.format))
        return report

    p = _project(s)
    preds = _load_predictions(p)
    if p.manifest.has("eval"):
        raise StageError("stage already recorded: eval")
    m = metrics.confusion_from(preds)
    report = metrics.evaluate(m, params)
    paths = [p.write_report(report, fmt) for fmt in ("text", "json", "csv")]
    payload = {"metrics": report.to_dict(), "reports": [str(x.relative_to(p.path)) for x in paths]}
    if s.export_lai:
        lai = "".join(f"{x.unit_id},{str(x.predicted is corpus.Label.KEEP).lower()}\n" for x in preds)
        Path(s.export_lai).write_text("unit_id,lai\n" + lai, encoding="utf-8", newline="\n")
        payload["lai_export"] = str(s.export_lai)
    p.record("eval", payload)
    _emit(metrics.render_report(report, s.format))
    return report


def cmd_savings(s: Settings) -> metrics.SavingsReport:
    params = metrics.SavingsParams(float(s.pay_rate))
    if s.matrix:
        report = metrics.savings_report(_matrix_arg(s.matrix), params)
        _emit(metrics.render_savings(report, s.format))
        return report
    p = _project(s)
    m = p.manifest
    report = metrics.savings_report(metrics.MetricsReport.from_dict(m.stage("eval")["metrics"]).matrix, params)
    if m.has("savings"):
        raise StageError("stage already recorded: savings")
    p.record("savings", report.to_dict())
    _emit(metrics.render_savings(report, s.format))
    return report


def _named_matrices(items: Sequence[str], flag: str):
    out = []
    for item in items:
        name, sep, counts = item.partition("=")
        if not sep:
            raise CliError(EXIT_VALIDATION, "validation", f"{flag} expects NAME=tp,fp,tn,fn, got {item!r}")
        if counts.startswith("@"):
            proj = Project(counts[1:])
            counts_m = metrics.MetricsReport.from_dict(proj.manifest.stage("eval")["metrics"]).matrix
            out.append((name, counts_m))
        else:
            out.append((name, _matrix_arg(counts)))
    return out


def cmd_compare(s: Settings) -> List[metrics.ComparisonRow]:
    if not s.run:
        raise CliError(EXIT_VALIDATION, "validation", "compare needs at least one --run NAME=tp,fp,tn,fn")
    rows = metrics.compare_models(_named_matrices(s.run, "--run"))
    _emit(metrics.render_comparison(rows, s.format))
    return rows


def cmd_curve(s: Settings):
    if not s.point:
        raise CliError(EXIT_VALIDATION, "validation", "curve needs at least one --point SIZE=tp,fp,tn,fn")
    points = []
    for size, m in _named_matrices(s.point, "--point"):
        try:
            points.append(metrics.LearningCurvePoint(int(size), m))
        except ValueError as exc:
            raise CliError(EXIT_VALIDATION, "validation", str(exc))
    ordered, trend = metrics.learning_curve(points)
    _emit(metrics.render_curve(ordered, trend, s.format))
    return ordered, trend


def cmd_profile(s: Settings):
    if not s.pair:
        raise CliError(EXIT_VALIDATION, "validation", "profile needs at least one --pair NAME=tp,fp,tn,fn")
    profile = metrics.language_pair_profile(dict(_named_matrices(s.pair, "--pair")), int(s.margin))
    if s.format == "json":
        _emit(json.dumps({k: v.value for k, v in profile.items()}, indent=2))
    else:
        for pair, label in profile.items():
            _emit(f"{pair}: {label.value}")
    return profile


COMMANDS = {
    "init": cmd_init, "ingest": cmd_ingest, "split": cmd_split, "prepare": cmd_prepare,
    "finetune": cmd_finetune, "predict": cmd_predict, "eval": cmd_eval, "savings": cmd_savings,
    "compare": cmd_compare, "curve": cmd_curve, "profile": cmd_profile,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mtpe", description=__doc__.splitlines()[0])
    ap.add_argument("--project", help="project directory (default: current directory)")
    ap.add_argument("--config", help="JSON file with option defaults")
    ap.add_argument("--seed", type=int, help="seed for every random choice (default 0)")
    ap.add_argument("--api-base", help="API base URL (default https://api.openai.com)")
    ap.add_argument("--api-key-file", help="read the API key from this file instead of OPENAI_API_KEY")
    ap.add_argument("--mock-scenario", help="use the scripted in-process API driven by this JSON file")
    ap.add_argument("--backend", choices=["remote", "baseline"])
    ap.add_argument("--format", choices=["text", "json", "csv"])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a project directory")
    p.add_argument("--run-id")

    p = sub.add_parser("ingest", help="parse and validate a triple corpus")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", help="TSV/JSONL corpus, or the MT-side TMX")
    src.add_argument("--sample", action="store_true", help="use the bundled 100-unit EN-IT synthetic corpus")
    p.add_argument("--pe-input", help="post-edited TMX (TMX input only)")
    p.add_argument("--input-format", choices=[f.value for f in ingest.CorpusFormat])
    p.add_argument("--lang-pair", help="e.g. en-it (required unless --sample)")

    p = sub.add_parser("split", help="length-stratified train/test split")
    p.add_argument("--ratio", type=float)
    p.add_argument("--buckets", help="e.g. 1-5,6-10,11-20,21-40,41-")

    p = sub.add_parser("prepare", help="write the fine-tuning JSONL")
    p.add_argument("--dialect", choices=[d.value for d in Dialect])
    p.add_argument("--train-size", type=int, help="use a stratified subsample of this size")

    p = sub.add_parser("finetune", help="start a job, check it, or fetch its loss events")
    p.add_argument("action", choices=["start", "status", "events"])
    p.add_argument("--model", help="base model (default curie)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--wait", action="store_true", help="status: poll until done or --timeout")
    p.add_argument("--poll-interval", type=float)
    p.add_argument("--timeout", dest="poll_timeout", type=float)

    p = sub.add_parser("predict", help="classify the test set")
    p.add_argument("--concurrency", type=int)
    p.add_argument("--train-size", type=int, help="baseline: train on a stratified subsample")

    p = sub.add_parser("eval", help="confusion matrix and derived rates")
    p.add_argument("--matrix", help="literal tp,fp,tn,fn instead of project predictions")
    p.add_argument("--pay-rate", type=float)
    p.add_argument("--export-lai", help="write unit_id,lai CSV here")

    p = sub.add_parser("savings", help="scenario 1 and 2 savings")
    p.add_argument("--matrix")
    p.add_argument("--pay-rate", type=float)

    p = sub.add_parser("compare", help="accuracy table across models")
    p.add_argument("--run", action="append", help="NAME=tp,fp,tn,fn or NAME=@project_dir; repeatable")

    p = sub.add_parser("curve", help="FN rate against training-set size")
    p.add_argument("--point", action="append", help="SIZE=tp,fp,tn,fn; repeatable")

    p = sub.add_parser("profile", help="TP- vs TN-dominance per language pair")
    p.add_argument("--pair", action="append", help="NAME=tp,fp,tn,fn; repeatable")
    p.add_argument("--margin", type=int)
    return ap


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "exit_code": code, "message": message}) + "\n")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        s = Settings(args)
        COMMANDS[args.command](s)
    except CliError as exc:
        return _fail(exc.code, exc.kind, str(exc))
    except StageError as exc:
        if str(exc).startswith("missing"):
            return _fail(EXIT_MISSING_STAGE, "missing_stage", str(exc))
        return _fail(EXIT_VALIDATION, "validation", str(exc))
    except (ft.ApiError, ft.RetryableError, ft.BatchFailed, TransportError) as exc:
        return _fail(EXIT_TRANSPORT, "api", str(exc))
    except (ValueError, ingest.IngestError, FileExistsError, FileNotFoundError) as exc:
        return _fail(EXIT_VALIDATION, "validation", str(exc))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
