"""Command-line interface: ``prepare``, ``train``, ``eval`` and ``nearest``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Training options resolve as defaults < ``--config`` file < ``HYTE_*``
environment variables < command-line flags.
"""
from __future__ import annotations

import argparse
import difflib
import hashlib
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .evaluator import FILTERS, TIME_POLICIES, evaluate
from .kg_data import (
    SPLITS,
    DataError,
    DatePolicy,
    TemporalKG,
    Vocabulary,
    build_vocabulary,
    encode,
    read_dataset_dir,
    read_encoded_split,
    write_encoded_split,
)
from .model import MODEL_KINDS, NORMS, _project_rows, load_store, save_store
from .time_bins import DEFAULT_MIN_TRIPLES_PER_BIN, TimeBins, build_time_bins, year_frequencies
from .trainer import NumericError, TrainConfig, train

logger = logging.getLogger("hyte")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
ENV_PREFIX = "HYTE_"
PREPARED_FILES = ("entities.tsv", "relations.tsv", "bins.tsv", "train.tsv", "valid.tsv", "test.tsv")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# prepared datasets
# --------------------------------------------------------------------------

def prepare(dataset_dir, out_dir, min_triples_per_bin: int = DEFAULT_MIN_TRIPLES_PER_BIN,
            policy: DatePolicy = DatePolicy()) -> dict:
    """Parse the split TSVs, build vocabulary and bins, write id-encoded splits."""
    raw = read_dataset_dir(dataset_dir, policy)
    vocab = build_vocabulary(raw["train"] + raw["valid"] + raw["test"])
    bins = build_time_bins(year_frequencies(raw["train"]), min_triples_per_bin)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vocab.save(out)
    bins.save(out / "bins.tsv")
    for name in SPLITS:
        write_encoded_split(out / f"{name}.tsv", encode(raw[name], vocab, bins))
    stats = {
        "n_entities": vocab.n_entities,
        "n_relations": vocab.n_relations,
        "n_bins": bins.count,
        "min_triples_per_bin": min_triples_per_bin,
        "year_range": [bins.min_year, bins.max_year],
        **{f"n_{name}": len(raw[name]) for name in SPLITS},
    }
    (out / "stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return stats


def load_prepared(prepared_dir):
    """``(vocab, bins, kg)`` from a directory written by :func:`prepare`."""
    d = Path(prepared_dir)
    missing = [f for f in PREPARED_FILES if not (d / f).is_file()]
    if missing:
        raise DataError(f"{d} is not a prepared dataset; missing {', '.join(missing)}")
    vocab = Vocabulary.load(d)
    bins = TimeBins.load(d / "bins.tsv")
    splits = {name: read_encoded_split(d / f"{name}.tsv") for name in SPLITS}
    kg = TemporalKG(splits["train"], splits["valid"], splits["test"], bins.count,
                    n_entities=vocab.n_entities, n_relations=vocab.n_relations)
    return vocab, bins, kg


def digest_files(directory, names=PREPARED_FILES) -> str:
    h = hashlib.sha256()
    for name in names:
        h.update(name.encode())
        h.update(b"\0")
        h.update((Path(directory) / name).read_bytes())
    return h.hexdigest()


def _file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --------------------------------------------------------------------------
# training options
# --------------------------------------------------------------------------

# flag name -> TrainConfig field
TRAIN_OPTIONS = {
    "model": "model",
    "norm": "norm",
    "dim": "dim",
    "margin": "margin",
    "lr": "learning_rate",
    "batch_size": "batch_size",
    "epochs": "epochs",
    "negatives": "negatives_per_positive",
    "reg_weight": "reg_weight",
    "seed": "seed",
    "eval_every": "eval_every",
    "patience": "patience",
    "time_policy": "time_policy",
    "jobs": "n_jobs",
}
_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}
_CASTS = {"int": int, "float": float, "str": str}


def _cast(field_name: str, value):
    return _CASTS[_FIELD_TYPES[field_name]](value)


def read_config_file(path) -> Dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment. Keys use flag or field names."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (x.strip() for x in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def resolve_train_config(args: argparse.Namespace, environ=None) -> TrainConfig:
    environ = os.environ if environ is None else environ
    layers: List[Dict[str, str]] = []
    if args.config:
        layers.append(read_config_file(args.config))
    layers.append({k[len(ENV_PREFIX):].lower(): v for k, v in environ.items() if k.startswith(ENV_PREFIX)})
    layers.append({k: v for k in TRAIN_OPTIONS if (v := getattr(args, k)) is not None})

    resolved = {}
    field_names = set(TRAIN_OPTIONS.values())
    for i, layer in enumerate(layers):
        is_file = bool(args.config) and i == 0
        for key, value in layer.items():
            name = TRAIN_OPTIONS.get(key, key)
            if name not in field_names:
                if is_file:
                    raise UsageError(f"{args.config}: unknown training option {key!r}")
                continue
            try:
                resolved[name] = _cast(name, value)
            except ValueError:
                raise UsageError(f"invalid value {value!r} for {key}") from None
    model = resolved.get("model", TrainConfig.model)
    if model != "hyte" and resolved.get("time_policy", "start") != "start":
        raise UsageError(f"--time-policy applies to HyTE only, not {model}")
    try:
        return TrainConfig(**resolved)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_prepare(args) -> int:
    out = args.out or str(Path(args.dataset_dir) / "prepared")
    stats = prepare(args.dataset_dir, out, args.min_triples_per_bin, DatePolicy(half_open=args.half_open))
    print(json.dumps(stats, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_train(args) -> int:
    if args.from_manifest:
        manifest = json.loads(Path(args.from_manifest).read_text(encoding="utf-8"))
        cfg = TrainConfig(**manifest["config"])
        prepared = args.prepared_dir or manifest["prepared_dir"]
        if digest_files(prepared) != manifest["dataset_digest"]:
            raise DataError(f"{prepared} does not match the dataset digest recorded in {args.from_manifest}")
    else:
        if not args.prepared_dir:
            raise UsageError("train needs PREPARED_DIR or --from-manifest")
        cfg = resolve_train_config(args)
        prepared = args.prepared_dir
    _, bins, kg = load_prepared(prepared)
    out = Path(args.out)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)

    store, report = train(kg, cfg, checkpoint_dir=out / "checkpoints")
    model = cfg.model_kind
    final_path = save_store(store, model, out / "final.json")
    best_path = save_store(report.best_store, model, out / "best.json")
    (out / "report.jsonl").write_text(report.to_jsonl(), encoding="utf-8")
    (out / "timings.jsonl").write_text(
        "".join(json.dumps({"epoch": r.epoch, "wall_time": t}) + "\n" for r, t in zip(report.epochs, report.wall_times)),
        encoding="utf-8",
    )
    manifest = {
        "tool": "hyte",
        "version": __version__,
        "config": cfg.to_dict(),
        "prepared_dir": str(Path(prepared).resolve()),
        "dataset_digest": digest_files(prepared),
        "bins": {"count": bins.count, "digest": _file_sha256(Path(prepared) / "bins.tsv")},
        "outputs": {
            "final": str(final_path), "best": str(best_path),
            "report": str(out / "report.jsonl"), "checkpoints": str(out / "checkpoints"),
        },
        "final_checkpoint_sha256": _file_sha256(final_path.with_suffix(".bin")),
        "best_epoch": report.best_epoch,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps({"final": str(final_path), "best": str(best_path), "best_epoch": report.best_epoch,
                      "final_loss": report.epochs[-1].mean_loss}, sort_keys=True))
    return EXIT_OK


def _check_compatible(store, vocab, bins, model, path) -> None:
    if store.n_entities != vocab.n_entities or store.n_relations != vocab.n_relations:
        raise DataError(
            f"{path}: checkpoint has {store.n_entities} entities / {store.n_relations} relations, "
            f"dataset has {vocab.n_entities} / {vocab.n_relations}"
        )
    if model.temporal and store.n_bins != bins.count:
        raise DataError(f"{path}: checkpoint has {store.n_bins} time bins, dataset has {bins.count}")


def cmd_eval(args) -> int:
    store, model = load_store(args.checkpoint)
    vocab, bins, kg = load_prepared(args.prepared_dir)
    _check_compatible(store, vocab, bins, model, args.checkpoint)
    if args.time_policy != "start" and not model.temporal:
        raise UsageError(f"--time-policy applies to HyTE checkpoints only, not {model.kind}")
    report = evaluate(kg.split(args.split), store, model, kg, time_policy=args.time_policy,
                      threads=args.threads, filter_mode=args.filter)
    payload = {"split": args.split, "model": model.kind, "norm": model.norm, **report.to_dict()}
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    if args.ranks:
        report.write_ranks_tsv(args.ranks)
    sys.stdout.write(text)
    return EXIT_OK


def nearest(store, model, vocab, label: str, k: int, kind: str = "entity", bin_id: Optional[int] = None):
    """Top-``k`` ``(label, distance)`` pairs by L2 distance, optionally on a time hyperplane."""
    if kind == "entity":
        table, labels, matrix = vocab.entities, vocab.entity_labels(), store.entity_vecs
    else:
        table, labels, matrix = vocab.relations, vocab.relation_labels(), store.relation_vecs
    if label not in table:
        close = difflib.get_close_matches(label, list(table), n=5)
        hint = f"; close matches: {', '.join(close)}" if close else ""
        raise DataError(f"unknown {kind} {label!r}{hint}")
    if bin_id is not None:
        if not model.temporal:
            raise UsageError("--bin needs a HyTE checkpoint")
        if not 0 <= bin_id < store.n_bins:
            raise UsageError(f"--bin must be in [0, {store.n_bins})")
        matrix = _project_rows(matrix, store.time_normals[bin_id])
    query = matrix[table[label]]
    dist = np.sqrt(np.sum((matrix - query) ** 2, axis=1))
    order = np.lexsort((np.arange(len(dist)), dist))[:k]
    return [(labels[i], float(dist[i])) for i in order]


def cmd_nearest(args) -> int:
    store, model = load_store(args.checkpoint)
    vocab, bins, _ = load_prepared(args.prepared_dir)
    _check_compatible(store, vocab, bins, model, args.checkpoint)
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    for label, dist in nearest(store, model, vocab, args.label, args.k, args.kind, args.bin):
        print(f"{label}\t{dist:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hyte", description="Temporal knowledge-graph embeddings (HyTE, TransE, TransH).")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("prepare", help="build vocabulary, time bins and id-encoded splits")
    sp.add_argument("dataset_dir", help="directory with train.txt, valid.txt, test.txt")
    sp.add_argument("--out", help="output directory (default: DATASET_DIR/prepared)")
    sp.add_argument("--min-triples-per-bin", type=int,
                    default=int(os.environ.get(ENV_PREFIX + "MIN_TRIPLES_PER_BIN", DEFAULT_MIN_TRIPLES_PER_BIN)))
    sp.add_argument("--half-open", choices=("drop", "collapse"), default="drop",
                    help="facts with one open date: drop them or use the known year for both ends")
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("train", help="train embeddings on a prepared dataset")
    sp.add_argument("prepared_dir", nargs="?")
    sp.add_argument("--out", required=True, help="run directory")
    sp.add_argument("--config", help="key=value file of training options")
    sp.add_argument("--from-manifest", help="re-run with the config and data of an earlier manifest")
    sp.add_argument("--model", choices=MODEL_KINDS)
    sp.add_argument("--norm", choices=NORMS)
    sp.add_argument("--dim", type=int)
    sp.add_argument("--margin", type=float)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--negatives", type=int, help="negatives per positive")
    sp.add_argument("--reg-weight", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--eval-every", type=int)
    sp.add_argument("--patience", type=int, help="validation rounds without improvement before stopping")
    sp.add_argument("--time-policy", choices=TIME_POLICIES)
    sp.add_argument("--jobs", type=int, help="lock-free training threads (1 = deterministic)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="filtered link-prediction metrics")
    sp.add_argument("checkpoint")
    sp.add_argument("prepared_dir")
    sp.add_argument("--split", choices=SPLITS, default="test")
    sp.add_argument("--time-policy", choices=TIME_POLICIES, default="start")
    sp.add_argument("--filter", choices=FILTERS, default="global")
    sp.add_argument("--threads", type=int, default=int(os.environ.get(ENV_PREFIX + "THREADS", 1)))
    sp.add_argument("--out", help="also write the JSON report here")
    sp.add_argument("--ranks", help="write per-query ranks as TSV")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("nearest", help="nearest neighbours of an entity or relation")
    sp.add_argument("checkpoint")
    sp.add_argument("prepared_dir")
    sp.add_argument("label")
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--kind", choices=("entity", "relation"), default="entity")
    sp.add_argument("--bin", type=int, help="measure distances on this time hyperplane")
    sp.set_defaults(func=cmd_nearest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hyte: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, KeyError) as exc:
        print(f"hyte: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"hyte: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
