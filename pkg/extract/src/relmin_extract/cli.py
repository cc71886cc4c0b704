"""Extraction command line: ``parses`` and ``tensors`` subcommands."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import manifest as manifest_mod
from .corpusio import CorpusFormatError, read_corpus
from .manifest import ExtractionManifest, corpus_checksum
from .parses import SpacyBackend, extract_parses
from .tensors import extract_tensors

log = logging.getLogger("relmin_extract")


def _cmd_parses(args) -> int:
    records = read_corpus(args.corpus)
    backend = SpacyBackend(args.pipeline)
    count = extract_parses(records, backend, args.out)
    sidecar = Path(args.out).with_suffix(".manifest.json")
    info = ExtractionManifest(
        encoder="",
        parser=backend.name,
        parser_version=backend.version,
        layers=(0,),
        corpus_sha256=corpus_checksum(args.corpus),
    )
    sidecar.write_text(json.dumps(info.as_dict(), indent=2) + "\n", encoding="utf-8")
    print(f"wrote {count} parse block(s) to {args.out}")
    return 0


def _cmd_tensors(args) -> int:
    from .encoder import HfEncoder

    records = read_corpus(args.corpus)
    encoder = HfEncoder.from_pretrained(
        args.model, max_length=args.max_length, device=args.device
    )
    info = ExtractionManifest(
        encoder=args.model,
        parser="",
        layers=tuple(args.layers),
        max_length=args.max_length,
        corpus_sha256=corpus_checksum(args.corpus),
    )
    info.validate()
    summary = extract_tensors(
        records, encoder, list(args.layers), args.out, manifest=info.as_dict()
    )
    print(f"wrote {len(summary.written)} sentence(s), skipped {len(summary.skipped)}")
    if summary.skipped:
        skipped_path = Path(args.out) / "skipped.json"
        skipped_path.write_text(json.dumps(summary.skipped, indent=2), encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relmin-extract", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parses", help="dependency parses as CoNLL-U")
    p.add_argument("--corpus", required=True)
    p.add_argument("--pipeline", default=manifest_mod.DEFAULT_PARSER)
    p.add_argument("--out", required=True, help="output .conllu path")
    p.set_defaults(func=_cmd_parses)

    p = sub.add_parser("tensors", help="attention/embedding tensor pack")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", default=manifest_mod.DEFAULT_ENCODER)
    p.add_argument("--layers", type=int, nargs="+", default=list(manifest_mod.DEFAULT_LAYERS))
    p.add_argument("--max-length", type=int, default=manifest_mod.DEFAULT_MAX_LENGTH)
    p.add_argument("--device", default="cpu")
    p.add_argument("--out", required=True, help="output pack directory")
    p.set_defaults(func=_cmd_tensors)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verbose:
            logging.basicConfig(level=logging.INFO)
        return args.func(args)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 1
        return 0 if code == 0 else 1
    except (CorpusFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
