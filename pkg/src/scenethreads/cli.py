"""Command-line interface: parse, train, predict, evaluate, agreement, analyze.

Exit codes: 0 success, 1 data error, 2 usage error. Every command writes
``manifest.json`` into ``--output-dir`` with the full configuration and the
SHA-256 digest of every input file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import re
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import __version__, kernels
from .analytics import AnalysisReport, emit_plot_data, floor_claiming, ingest_metadata, thread_length_by_era
from .annotation import ColumnMap, GoldLinks, emit_gold, links_to_partition, postprocess, read_annotations, read_gold
from .errors import DataError
from .linkmodel import (ScorerModel, TrainingConfig, WordPieceTokenizer, predict_links, predict_previous_baseline,
                        train, word_tokens)
from .metrics import Unit, agreement, evaluate
from .screenplay import RawDocument, Scene, emit_canonical, parse_screenplay, read_canonical

log = logging.getLogger("scenethreads")

DEFAULT_SEED = 13


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# input loading


def slugify(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-") or "untitled"


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class CorpusScene:
    title: str
    scene: Scene
    gold: GoldLinks | None = None

    @property
    def key(self) -> str:
        return f"{self.title}/{self.scene.scene_id}"


def _jsonl_kind(path: Path) -> str:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                return "canonical" if "kind" in rec else "gold"
    return "empty"


def _column_map(args) -> ColumnMap:
    if getattr(args, "column_map", None):
        return ColumnMap.from_mapping(json.loads(Path(args.column_map).read_text(encoding="utf-8")))
    return ColumnMap()


def load_corpus(paths, args, gold_paths=()) -> list[CorpusScene]:
    """Scenes from canonical JSONL files or annotation tables, in canonical order."""
    scenes: list[CorpusScene] = []
    for p in map(Path, paths):
        if p.suffix in (".tsv", ".csv"):
            title = slugify(p.stem)
            pp = postprocess(read_annotations(p.read_text(encoding="utf-8"), _column_map(args)))
            for scene in pp.scenes:
                scenes.append(CorpusScene(title, scene, GoldLinks(f"{title}/{scene.scene_id}", pp.links[scene.scene_id].parent)))
        elif p.suffix == ".jsonl":
            if _jsonl_kind(p) != "canonical":
                raise UsageError(f"{p} is not a canonical corpus file")
            for title, ss in read_canonical(p.read_text(encoding="utf-8")).items():
                scenes.extend(CorpusScene(title, s) for s in ss)
        else:
            raise UsageError(f"unsupported input {p}")
    if gold_paths:
        gold = load_links(gold_paths, args)
        for cs in scenes:
            if cs.key in gold:
                cs.gold = gold[cs.key]
    scenes.sort(key=lambda cs: cs.title)  # stable: scene order inside a title is kept
    return scenes


def load_links(paths, args) -> dict[str, GoldLinks]:
    out: dict[str, GoldLinks] = {}
    for p in map(Path, paths):
        if p.suffix == ".jsonl" and _jsonl_kind(p) == "gold":
            out.update(read_gold(p.read_text(encoding="utf-8")))
        else:
            out.update({cs.key: cs.gold for cs in load_corpus([p], args) if cs.gold is not None})
    return out


def _tokenizer(args):
    vocab = getattr(args, "vocab", None)
    return WordPieceTokenizer.from_file(vocab) if vocab else word_tokens


# --------------------------------------------------------------------------
# commands


def cmd_parse(args, run):
    out_dir = run.out
    written, report = [], {"titles": {}, "totals": {"scenes": 0, "turns": 0, "dialogue_lines": 0, "utterances": 0, "action_lines": 0}}
    docs = []
    for p in map(Path, args.inputs):
        run.add_input(p)
        docs.append((slugify(p.stem), p))
    try:
        for slug, p in sorted(docs):
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                scenes = parse_screenplay(RawDocument(slug, p.read_text(encoding="utf-8"), args.source_kind))
            target = out_dir / f"{slug}.jsonl"
            target.write_text(emit_canonical(scenes, slug), encoding="utf-8", newline="\n")
            written.append(target)
            counts = {
                "scenes": len(scenes),
                "turns": sum(len(s.turn_ids()) for s in scenes),
                "dialogue_lines": sum(len(s.dialogue_lines()) for s in scenes),
                "utterances": sum(len(s.utterances()) for s in scenes),
                "action_lines": sum(len(s.actions()) for s in scenes),
            }
            report["titles"][slug] = {**counts, "warnings": [str(w.message) for w in caught]}
            for k, v in counts.items():
                report["totals"][k] += v
    except DataError:
        for w in written:
            w.unlink(missing_ok=True)
        raise
    run.write("parse_report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    for w in written:
        run.outputs.append(str(w))
    t = report["totals"]
    print(f"parsed {len(docs)} title(s): {t['scenes']} scenes, {t['turns']} turns, {t['dialogue_lines']} dialogue lines, "
          f"{t['action_lines']} action lines")


def _training_config(args) -> TrainingConfig:
    return TrainingConfig(
        epochs=args.epochs, learning_rate=args.lr, negatives_per_positive=args.negatives, alpha=args.alpha,
        pool_size=args.pool_size, architecture=args.architecture, hidden=args.hidden, batch_size=args.batch_size,
        early_stopping=not args.no_early_stopping, candidate_features=args.candidate_features, seed=args.seed,
    )


def _labelled(scenes, run, split):
    pairs = []
    for cs in scenes:
        if cs.gold is None:
            raise DataError(f"{split}: no gold links for {cs.key}")
        if not cs.scene.utterances():
            run.skipped.append({"scene": cs.key, "reason": "no utterances", "split": split})
            continue
        pairs.append((GoldLinks(cs.scene.scene_id, cs.gold.parent), cs.scene))
    return pairs


def cmd_train(args, run):
    cfg = _training_config(args)
    print("config: " + ", ".join(f"{k}={v}" for k, v in
                                 [("epochs", cfg.epochs), ("lr", cfg.learning_rate), ("negatives", cfg.negatives_per_positive),
                                  ("C", cfg.pool_size), ("alpha", cfg.alpha), ("architecture", cfg.architecture), ("seed", cfg.seed)]))
    for p in list(args.train) + list(args.dev or []) + list(args.train_gold or []) + list(args.dev_gold or []):
        run.add_input(Path(p))
    train_set = _labelled(load_corpus(args.train, args, args.train_gold or ()), run, "train")
    dev_set = _labelled(load_corpus(args.dev, args, args.dev_gold or ()), run, "dev") if args.dev else None
    log_rows = []
    model = train(train_set, cfg, dev=dev_set, tokenizer=_tokenizer(args), log_fn=log_rows.append)
    run.write("model.json", model.to_json())
    run.write("train_log.jsonl", "".join(json.dumps(r) + "\n" for r in log_rows))
    for r in log_rows:
        dev = f"  dev acc {r['dev_link_accuracy']:.2f}" if "dev_link_accuracy" in r else ""
        print(f"epoch {r['epoch']:2d}  loss {r['loss']:.4f}{dev}")


def cmd_predict(args, run):
    for p in args.inputs:
        run.add_input(Path(p))
    if args.model:
        run.add_input(Path(args.model))
        model = ScorerModel.from_json(Path(args.model).read_text(encoding="utf-8"))
        tok = _tokenizer(args)

        def one(cs):
            return predict_links(model, cs.scene, args.pool_size, tok, scene_id=cs.key)
    else:
        def one(cs):
            return predict_previous_baseline(cs.scene, scene_id=cs.key)

    scenes = [cs for cs in load_corpus(args.inputs, args) if cs.scene.utterances()]
    with ThreadPoolExecutor(max(1, args.jobs)) as ex:
        links = list(ex.map(one, scenes))
    run.write("predictions.jsonl", emit_gold(links))
    print(f"predicted links for {len(links)} scene(s) with {'model ' + args.model if args.model else 'previous baseline'}")


def _emit_report(report, run, stem):
    run.write(f"{stem}.json", report.to_json())
    run.write(f"{stem}.csv", report.to_csv())
    fmt = run.args.format
    print(report.to_json() if fmt == "json" else report.to_csv() if fmt == "csv" else report.format_table(), end="" if fmt else "\n")


def cmd_evaluate(args, run):
    for p in [args.pred, *args.gold]:
        run.add_input(Path(p))
    pred = read_gold(Path(args.pred).read_text(encoding="utf-8"))
    gold = load_links(args.gold, args)
    missing = sorted(set(gold) - set(pred))
    if missing:
        raise DataError(f"no predictions for {len(missing)} gold scene(s), e.g. {missing[0]}")
    units = [Unit(pred[k], gold[k]) for k in sorted(gold) if len(gold[k])]
    report = evaluate(units, resamples=args.resamples, seed=args.seed, vi_normalizer=args.vi_normalizer, jobs=args.jobs)
    _emit_report(report, run, "metrics")


def cmd_agreement(args, run):
    run.add_input(Path(args.a))
    run.add_input(Path(args.b))
    a = load_links([args.a], args)
    b = load_links([args.b], args)
    keys = sorted(k for k in a if len(a[k]))
    report = agreement([a[k] for k in keys], [b[k] for k in keys if k in b], vi_normalizer=args.vi_normalizer)
    _emit_report(report, run, "agreement")


def cmd_analyze(args, run):
    for p in [*args.links, *args.corpus, args.metadata]:
        run.add_input(Path(p))
    links = load_links(args.links, args)
    meta = ingest_metadata(Path(args.metadata).read_text(encoding="utf-8"))
    by_title: dict[str, tuple[list, list]] = {}
    for cs in load_corpus(args.corpus, args):
        utts = cs.scene.utterances()
        if not utts:
            continue
        if cs.key not in links:
            run.skipped.append({"scene": cs.key, "reason": "no links"})
            continue
        part = links_to_partition(GoldLinks(cs.scene.scene_id, links[cs.key].parent))
        parts, us = by_title.setdefault(cs.title, ([], []))
        parts.append(part)
        us.extend(utts)
    if not by_title:
        raise DataError("no titles with both links and utterances")
    eras = thread_length_by_era({t: p for t, (p, _) in by_title.items()}, meta, args.bucket_width, args.resamples, args.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        floor = floor_claiming(by_title, meta, args.min_year, args.resamples, args.seed)
    for w in caught:
        run.skipped.append({"warning": str(w.message)})
    report = AnalysisReport(args.provenance, eras, floor)
    run.write("analysis.json", report.to_json())
    run.write("era_plot.csv", emit_plot_data(eras))
    if floor.records:
        run.write("floor_plot.csv", emit_plot_data(floor.records))
    print(f"provenance: {args.provenance}")
    for b in eras:
        print(f"{b.start_year}-{b.start_year + args.bucket_width - 1}  mean thread length {b.mean_thread_length:.2f} "
              f"[{b.ci[0]:.2f}-{b.ci[1]:.2f}]  n={b.n_movies}")
    if floor.pooled:
        p = floor.pooled
        print(f"all years >= {args.min_year}: threads started by women {p.pct_threads_started_by_women:.2f}%, "
              f"lines {p.pct_lines_by_women:.2f}%, delta {p.delta:+.2f} [{p.ci[0]:.2f}, {p.ci[1]:.2f}]")


# --------------------------------------------------------------------------
# plumbing


class Run:
    def __init__(self, args):
        self.args = args
        self.out = Path(args.output_dir)
        self.created = not self.out.exists()
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.skipped: list[dict] = []

    def add_input(self, path: Path):
        if not path.exists():
            raise UsageError(f"no such file: {path}")
        self.inputs[str(path)] = sha256(path)

    def write(self, name, text):
        target = self.out / name
        target.write_text(text, encoding="utf-8", newline="\n")
        self.outputs.append(str(target))

    def discard(self):
        for o in self.outputs:
            Path(o).unlink(missing_ok=True)
        if self.created and not any(self.out.iterdir()):
            self.out.rmdir()

    def manifest(self) -> str:
        config = {k: v for k, v in sorted(vars(self.args).items()) if k != "func"}
        return json.dumps({
            "command": self.args.command,
            "version": __version__,
            "kernel_backend": kernels.BACKEND,
            "config": config,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": self.outputs,
            "skipped": self.skipped,
        }, indent=2, default=str) + "\n"


def _common(p):
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"random seed (default {DEFAULT_SEED})")
    p.add_argument("--jobs", type=int, default=1, help="concurrent scenes")
    p.add_argument("--output-dir", "-o", default="out")
    p.add_argument("--format", choices=("json", "csv"), help="print reports to stdout as JSON or CSV instead of a table")
    p.add_argument("--config", help="JSON file of flag defaults; explicit flags win")
    p.add_argument("--column-map", help="JSON column map for annotation tables")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scenethreads", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="screenplay text -> canonical JSONL")
    _common(p)
    p.add_argument("inputs", nargs="+")
    p.add_argument("--source-kind", choices=("movie", "tv_pilot"), default="movie")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("train", help="train the featurized link scorer")
    _common(p)
    p.add_argument("--train", nargs="+", required=True, help="annotation tables or canonical JSONL")
    p.add_argument("--dev", nargs="+", help="dev split for early stopping")
    p.add_argument("--train-gold", nargs="+", help="gold JSONL when --train is canonical JSONL")
    p.add_argument("--dev-gold", nargs="+")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--pool-size", "-C", type=int, default=6)
    p.add_argument("--alpha", type=float, default=0.1, help="auxiliary same-thread loss weight; 0 disables")
    p.add_argument("--architecture", choices=("linear", "one_hidden"), default="one_hidden")
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--no-early-stopping", action="store_true")
    p.add_argument("--candidate-features", action="store_true", help="also give per-utterance features of the candidate")
    p.add_argument("--vocab", help="subword vocabulary file for token overlap")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict reply-to links")
    _common(p)
    p.add_argument("inputs", nargs="+")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--model")
    g.add_argument("--baseline", choices=("previous",))
    p.add_argument("--pool-size", "-C", type=int, default=6)
    p.add_argument("--vocab")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="metrics with bootstrap CIs")
    _common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", nargs="+", required=True)
    p.add_argument("--resamples", type=int, default=1000)
    p.add_argument("--vi-normalizer", choices=("log_n", "none"), default="log_n")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("agreement", help="inter-annotator agreement")
    _common(p)
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--vi-normalizer", choices=("log_n", "none"), default="log_n")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("analyze", help="thread length by era and floor claiming")
    _common(p)
    p.add_argument("--links", nargs="+", required=True, help="gold or predicted links JSONL")
    p.add_argument("--corpus", nargs="+", required=True, help="canonical JSONL or annotation tables")
    p.add_argument("--metadata", required=True)
    p.add_argument("--provenance", default="predicted:featurized", help="stamped into the report")
    p.add_argument("--bucket-width", type=int, default=5)
    p.add_argument("--min-year", type=int, default=1980)
    p.add_argument("--resamples", type=int, default=1000)
    p.set_defaults(func=cmd_analyze)
    return parser


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        defaults = json.loads(Path(args.config).read_text(encoding="utf-8"))
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(defaults) - known
        if unknown:
            parser.error(f"unknown config keys: {', '.join(sorted(unknown))}")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    run = Run(args)
    try:
        args.func(args, run)
        run.write("manifest.json", run.manifest())
    except UsageError as exc:
        run.discard()
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (DataError, json.JSONDecodeError, UnicodeDecodeError, KeyError) as exc:
        run.discard()
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:  # bad parameter values, e.g. a negative epoch count
        run.discard()
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
