"""Command-line entry point.

Subcommands mirror the experiment stages: ``sard`` (dependency rule),
``attn`` (attention classifier at one threshold), ``sweep`` (threshold
grid), ``pairgen`` (comparison pairs + pointwise sets), ``train`` (risk
minimization over pack embeddings), ``eval`` (score a predictions file),
``xval`` (fold-orchestrated pipeline), ``report`` (aggregate metrics
files). Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import attnmap, depgraph, metrics, pairgen
from .corpus import Corpus, empirical_prior, load_corpus, load_folds, make_folds
from .errors import DataError, UsageError
from .riskmin import (
    ESTIMATOR_METHODS,
    EstimatorConfig,
    TrainConfig,
    predict_map,
    save_head,
    train,
)

log = logging.getLogger("relmin")

ENV_DATA_DIR = "RELMIN_DATA_DIR"

_ATTN_METHODS = {"picmi": "picmi", "picmi-up": "picmi_up", "conex": "conex"}


def _resolve(path: str) -> Path:
    """Resolve an input path, falling back to the data directory env var."""
    p = Path(path)
    if p.exists():
        return p
    base = os.environ.get(ENV_DATA_DIR)
    if base and (Path(base) / path).exists():
        return Path(base) / path
    return p


def _load_config_file(path: str | None) -> dict:
    """key=value defaults; command-line flags override."""
    if not path:
        return {}
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _write_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _echo_config(args: argparse.Namespace, out_dir: Path, command: str) -> dict:
    effective = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if k not in ("func", "config") and v is not None
    }
    effective["command"] = command
    _write_json(effective, out_dir / "run_config.json")
    return effective


def _require(args, *names: str) -> None:
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"{args.command}: missing required argument(s): {flags}")


def _corpus(args) -> Corpus:
    _require(args, "corpus")
    return load_corpus(_resolve(args.corpus), strict=args.strict)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _score_and_report(preds, corpus, out_dir, config) -> None:
    metrics.save_predictions(preds, out_dir / "predictions.tsv")
    golds = {
        corpus[i].id: corpus[i].gold_label
        for i in range(len(corpus))
        if corpus[i].gold_label is not None and corpus[i].id in preds
    }
    if len(golds) == len(preds) and golds:
        m = metrics.score(preds, golds)
        metrics.emit_report([metrics.metrics_object(m, config)], out_dir)
        print(f"precision={m.precision:.4f} recall={m.recall:.4f} f1={m.f1:.4f}")
    else:
        log.info("gold labels unavailable for %d prediction(s); metrics skipped",
                 len(preds) - len(golds))


def _cmd_sard(args) -> int:
    _require(args, "conllu")
    corpus = _corpus(args)
    trees = depgraph.load_conllu(_resolve(args.conllu), corpus)
    cfg = depgraph.SardConfig(a_id=args.a, h_id=args.h, conj_mode=args.conj_mode)
    preds = depgraph.sard_predict_corpus(corpus, trees, cfg)
    out = _out_dir(args)
    config = _echo_config(args, out, "sard")
    _score_and_report(preds, corpus, out, {"method": f"sard-a{args.a}h{args.h}", **config})
    return 0


def _cmd_attn(args) -> int:
    _require(args, "pack", "method", "threshold")
    corpus = _corpus(args)
    store = attnmap.load_attention_pack(_resolve(args.pack))
    method = _ATTN_METHODS[args.method]
    preds = attnmap.classify_pack(
        method, store, corpus.ids(), args.layer, args.threshold,
        mask_special=not args.no_mask_special,
    )
    out = _out_dir(args)
    config = _echo_config(args, out, "attn")
    _score_and_report(
        preds, corpus, out,
        {"method": method, "layer": args.layer, "threshold": args.threshold, **config},
    )
    return 0


def _cmd_sweep(args) -> int:
    _require(args, "pack", "method")
    corpus = _corpus(args)
    store = attnmap.load_attention_pack(_resolve(args.pack))
    method = _ATTN_METHODS[args.method]
    rng = None
    if args.lo is not None or args.hi is not None or args.step is not None:
        if None in (args.lo, args.hi, args.step):
            raise UsageError("--lo/--hi/--step must be given together")
        rng = (args.lo, args.hi, args.step)
    rows = attnmap.sweep_thresholds(
        method, corpus, store, args.layer, rng, mask_special=not args.no_mask_special
    )
    out = _out_dir(args)
    config = _echo_config(args, out, "sweep")
    results = [
        metrics.metrics_object(
            row.metrics,
            {"method": method, "layer": args.layer, "threshold": row.threshold, **config},
        )
        for row in rows
    ]
    metrics.emit_report(results, out, sweep=rows)
    for row in rows:
        print(f"t={row.threshold:.4f} f1={row.metrics.f1:.4f} "
              f"predicted_positive={row.predicted_positive}")
    return 0


def _silver_or_gold_labels(args, corpus: Corpus) -> tuple[dict[int, int], str]:
    if args.silver:
        preds = metrics.load_predictions(_resolve(args.silver))
        missing = [rid for rid in corpus.ids() if rid not in preds]
        if missing:
            raise DataError(f"silver labels miss {len(missing)} corpus id(s)")
        labels = {i: preds[corpus[i].id] for i in range(len(corpus))}
        return labels, f"silver:{Path(args.silver).stem}"
    return corpus.labels(), "gold"


def _cmd_pairgen(args) -> int:
    corpus = _corpus(args)
    labels, source = _silver_or_gold_labels(args, corpus)
    n_pairs = args.n_pairs if args.n_pairs else len(corpus)
    pairs, stats = pairgen.generate_pairs(labels, n_pairs, args.seed)
    sets = pairgen.split_pointwise(pairs, label_source=source, pi_plus=args.pi)
    out = _out_dir(args)
    _echo_config(args, out, "pairgen")
    ids = corpus.ids()
    pairgen.save_pairs(pairs, ids, out / "pairs.tsv")
    pairgen.save_sets(sets, ids, out / "sets.tsv")
    report = pairgen.stats_report(stats)
    report["label_source"] = source
    _write_json(report, out / "pair_stats.json")
    print(f"accepted={stats.accepted} drawn={stats.drawn} "
          f"acceptance_rate={stats.acceptance_rate:.4f}")
    return 0


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        dropout_rate=args.dropout,
        dev_fraction=args.dev_fraction,
        dev_criterion=args.dev_criterion,
    )


def _cmd_train(args) -> int:
    _require(args, "pack", "pairs", "estimator")
    corpus = _corpus(args)
    store = attnmap.load_attention_pack(_resolve(args.pack))
    pairs = pairgen.load_pairs(_resolve(args.pairs), corpus.by_id)
    sets = pairgen.split_pointwise(pairs, label_source=args.label_source, pi_plus=args.pi)
    feats_by_id = attnmap.pair_features_from_pack(store, corpus.ids(), args.emb_layer)
    features = {i: feats_by_id[corpus[i].id] for i in range(len(corpus))}
    estimator = EstimatorConfig(
        method=args.estimator,
        pi_plus=args.pi,
        uu_thetas=tuple(args.uu_thetas) if args.uu_thetas else None,
        rates_mode=args.rates_mode,
        seed=args.seed,
    )
    trained = train(sets, features, estimator, _train_config(args))
    out = _out_dir(args)
    config = _echo_config(args, out, "train")
    save_head(trained, out / "head")
    preds = predict_map(trained, feats_by_id)
    _score_and_report(
        preds, corpus, out,
        {"method": args.estimator, "pi_plus": args.pi, "seed": args.seed, **config},
    )
    print(f"selected_epoch={trained.selected_epoch}")
    return 0


def _cmd_eval(args) -> int:
    _require(args, "pred")
    corpus = _corpus(args)
    preds = metrics.load_predictions(_resolve(args.pred))
    golds = {corpus[i].id: corpus[i].gold_label for i in range(len(corpus))}
    if any(v is None for v in golds.values()):
        raise DataError("corpus has unlabeled records; cannot evaluate")
    m = metrics.score(preds, golds)
    out = _out_dir(args)
    config = _echo_config(args, out, "eval")
    metrics.emit_report([metrics.metrics_object(m, config)], out)
    print(f"precision={m.precision:.4f} recall={m.recall:.4f} f1={m.f1:.4f}")
    return 0


def _xval_fold_runner(args, corpus, trees, store):
    """Build the per-fold procedure for the configured method."""

    def run(fold: int, train_idx: list[int], test_idx: list[int]) -> metrics.Metrics:
        golds = {corpus[i].id: corpus[i].gold_label for i in test_idx}
        if any(v is None for v in golds.values()):
            raise DataError(f"fold {fold}: unlabeled test records")
        if args.method == "sard":
            cfg = depgraph.SardConfig(a_id=args.a, h_id=args.h, conj_mode=args.conj_mode)
            preds = depgraph.sard_predict_corpus(corpus, trees, cfg, test_idx)
        elif args.method in _ATTN_METHODS:
            preds = attnmap.classify_pack(
                _ATTN_METHODS[args.method], store,
                [corpus[i].id for i in test_idx], args.layer, args.threshold,
                mask_special=not args.no_mask_special,
            )
        else:  # risk estimator over pack embeddings
            if args.silver:
                silver = metrics.load_predictions(_resolve(args.silver))
                labels = {i: silver[corpus[i].id] for i in train_idx}
                source = f"silver:{Path(args.silver).stem}"
            else:
                labels = {i: corpus[i].gold_label for i in train_idx}
                if any(v is None for v in labels.values()):
                    raise DataError(f"fold {fold}: unlabeled train records")
                source = "gold"
            n_pairs = args.n_pairs if args.n_pairs else len(train_idx)
            pairs, _ = pairgen.generate_pairs(labels, n_pairs, args.seed + fold)
            sets = pairgen.split_pointwise(pairs, label_source=source, pi_plus=args.pi)
            feats_by_id = attnmap.pair_features_from_pack(store, corpus.ids(), args.emb_layer)
            features = {i: feats_by_id[corpus[i].id] for i in range(len(corpus))}
            estimator = EstimatorConfig(
                method=args.method, pi_plus=args.pi,
                uu_thetas=tuple(args.uu_thetas) if args.uu_thetas else None,
                rates_mode=args.rates_mode, seed=args.seed + fold,
            )
            trained = train(sets, features, estimator, _train_config(args))
            preds = predict_map(
                trained, {corpus[i].id: features[i] for i in test_idx}
            )
        return metrics.score(preds, golds)

    return run


def _cmd_xval(args) -> int:
    _require(args, "method")
    corpus = _corpus(args)
    plan = (
        load_folds(_resolve(args.fold_file), corpus)
        if args.fold_file
        else make_folds(corpus, args.folds, args.seed)
    )
    trees = depgraph.load_conllu(_resolve(args.conllu), corpus) if args.conllu else {}
    store = attnmap.load_attention_pack(_resolve(args.pack)) if args.pack else None
    if args.method == "sard" and not trees:
        raise UsageError("xval with sard needs --conllu")
    if args.method != "sard" and store is None:
        raise UsageError(f"xval with {args.method} needs --pack")
    runner = _xval_fold_runner(args, corpus, trees, store)
    if args.jobs > 1:
        # fold-parallel execution; aggregation stays single-threaded
        folds = [plan.train_test(f) for f in range(plan.k)]
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            per_fold = list(
                pool.map(lambda fi: runner(fi[0], *fi[1]), enumerate(folds))
            )
        pooled = metrics.from_counts(
            tp=sum(m.tp for m in per_fold), fp=sum(m.fp for m in per_fold),
            fn=sum(m.fn for m in per_fold), tn=sum(m.tn for m in per_fold),
        )
        result = metrics.CrossValidation(
            per_fold=tuple(per_fold),
            mean=metrics._mean_of_folds(per_fold),
            pooled=pooled,
        )
    else:
        result = metrics.cross_validate(plan, runner)
    out = _out_dir(args)
    config = _echo_config(args, out, "xval")
    objs = [
        metrics.metrics_object(m, {"method": args.method, "fold": f, **config})
        for f, m in enumerate(result.per_fold)
    ]
    objs.append(metrics.metrics_object(result.mean, {"method": args.method, "fold": "mean", **config}))
    objs.append(metrics.metrics_object(result.pooled, {"method": args.method, "fold": "pooled", **config}))
    metrics.emit_report(objs, out)
    print(f"mean: precision={result.mean.precision:.4f} "
          f"recall={result.mean.recall:.4f} f1={result.mean.f1:.4f}")
    return 0


def _cmd_report(args) -> int:
    _require(args, "inputs")
    inputs = [Path(p) for p in args.inputs]
    collected = []
    for path in inputs:
        for metrics_file in sorted(path.rglob("metrics.json")):
            collected.extend(json.loads(metrics_file.read_text(encoding="utf-8")))
    if not collected:
        raise DataError("no metrics.json files under the given directories")
    out = _out_dir(args)
    _echo_config(args, out, "report")
    _write_json(collected, out / "metrics.json")
    print(f"aggregated {len(collected)} result object(s)")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--corpus", help="line-delimited corpus file")
    # real datasets carry overlapping-entity annotations; skip-and-log by default
    parser.add_argument("--strict", action="store_true",
                        help="reject records with overlapping entity spans")
    parser.add_argument("--out", default="out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relmin", description=__doc__)
    parser.add_argument("--config", help="key=value defaults file (flags override)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sard", help="dependency-path rule over a parsed corpus")
    _add_common(p)
    p.add_argument("--conllu", help="CoNLL-U parse file")
    p.add_argument("--a", type=int, default=3, choices=(1, 2, 3))
    p.add_argument("--h", type=int, default=1, choices=(1, 2))
    p.add_argument("--conj-mode", default="upos", choices=("upos", "deprel"))
    p.set_defaults(func=_cmd_sard)

    p = sub.add_parser("attn", help="attention classifier at one threshold")
    _add_common(p)
    p.add_argument("--pack", help="tensor-pack directory")
    p.add_argument("--method", choices=tuple(_ATTN_METHODS))
    p.add_argument("--layer", type=int, default=11)
    p.add_argument("--threshold", type=float)
    p.add_argument("--no-mask-special", action="store_true")
    p.set_defaults(func=_cmd_attn)

    p = sub.add_parser("sweep", help="threshold grid for an attention method")
    _add_common(p)
    p.add_argument("--pack")
    p.add_argument("--method", choices=tuple(_ATTN_METHODS))
    p.add_argument("--layer", type=int, default=11)
    p.add_argument("--lo", type=float)
    p.add_argument("--hi", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--no-mask-special", action="store_true")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("pairgen", help="generate comparison pairs and pointwise sets")
    _add_common(p)
    p.add_argument("--silver", help="predictions file supplying silver labels")
    p.add_argument("--n-pairs", type=int, help="accepted pairs (default: corpus size)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pi", type=float, default=0.5, help="assumed positive prior")
    p.set_defaults(func=_cmd_pairgen)

    p = sub.add_parser("train", help="risk-minimization training over pack embeddings")
    _add_common(p)
    p.add_argument("--pack")
    p.add_argument("--pairs", help="pairs.tsv from pairgen")
    p.add_argument("--label-source", default="gold")
    p.add_argument("--estimator", choices=ESTIMATOR_METHODS)
    p.add_argument("--pi", type=float, default=0.5)
    p.add_argument("--uu-thetas", type=float, nargs=2)
    p.add_argument("--rates-mode", default="theory", choices=("theory", "estimate"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--dev-fraction", type=float, default=0.15)
    p.add_argument("--dev-criterion", default="auto", choices=("auto", "risk", "f1"))
    p.add_argument("--emb-layer", type=int, help="embedding layer (default: pack's last)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a predictions file against gold labels")
    _add_common(p)
    p.add_argument("--pred")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("xval", help="fold-orchestrated pipeline")
    _add_common(p)
    p.add_argument("--method")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--fold-file", help="explicit <id>\\t<fold> assignment")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1,
                   help="worker fan-out for fold-parallel stages")
    p.add_argument("--conllu")
    p.add_argument("--pack")
    p.add_argument("--a", type=int, default=3, choices=(1, 2, 3))
    p.add_argument("--h", type=int, default=1, choices=(1, 2))
    p.add_argument("--conj-mode", default="upos", choices=("upos", "deprel"))
    p.add_argument("--layer", type=int, default=11)
    p.add_argument("--threshold", type=float, default=0.07)
    p.add_argument("--no-mask-special", action="store_true")
    p.add_argument("--silver")
    p.add_argument("--n-pairs", type=int)
    p.add_argument("--pi", type=float, default=0.5)
    p.add_argument("--uu-thetas", type=float, nargs=2)
    p.add_argument("--rates-mode", default="theory", choices=("theory", "estimate"))
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--dev-fraction", type=float, default=0.15)
    p.add_argument("--dev-criterion", default="auto", choices=("auto", "risk", "f1"))
    p.add_argument("--emb-layer", type=int)
    p.set_defaults(func=_cmd_xval)

    p = sub.add_parser("report", help="aggregate metrics files")
    p.add_argument("--inputs", nargs="+")
    p.add_argument("--out", default="out")
    p.set_defaults(func=_cmd_report)

    parser.subcommands = sub.choices  # type: ignore[attr-defined]
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        # peek at --config so file values become defaults that flags override
        known, _ = parser.parse_known_args(argv)
        config = _load_config_file(getattr(known, "config", None))
        if config:
            for subparser in parser.subcommands.values():  # type: ignore[attr-defined]
                valid = {a.dest for a in subparser._actions}
                subparser.set_defaults(
                    **{k: _coerce(v) for k, v in config.items() if k in valid}
                )
        args = parser.parse_args(argv)
        if args.verbose:
            logging.basicConfig(level=logging.INFO)
        return args.func(args)
    except SystemExit as exc:  # argparse usage failure
        code = exc.code if isinstance(exc.code, int) else 1
        return 0 if code == 0 else 1
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 3


def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    return value


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
