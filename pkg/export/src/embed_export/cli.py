"""CLI: export-corpus and export-beir subcommands."""

from __future__ import annotations

import argparse
import sys

from .beir import SUPPORTED_TASKS, export_beir_task
from .corpus import export_corpus
from .formats import ExportError
from .manifest import ExportManifest, sidecar_path


def cmd_export_corpus(args) -> int:
    manifest = ExportManifest(model=args.model, source=args.corpus,
                              batch_size=args.batch_size,
                              max_tokens=args.max_tokens,
                              expected_dim=args.expected_dim)
    out = export_corpus(manifest, args.out)
    print(f"wrote {out} (+ {sidecar_path(out).name})")
    return 0


def cmd_export_beir(args) -> int:
    paths = export_beir_task(args.task, args.model, args.data_dir, args.out,
                             batch_size=args.batch_size,
                             max_tokens=args.max_tokens, split=args.split)
    for role, path in paths.items():
        print(f"{role}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Run sentence encoders over corpora and BEIR-style "
                    "datasets, emitting EMBF/qrels/id files")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-corpus", help="encode a text corpus to EMBF")
    p.add_argument("--model", required=True,
                   help="registry key (s1,s2,s3,s5,m1,t1), hub id, or hash:<dim>")
    p.add_argument("--corpus", required=True, help=".txt (line = passage) or .jsonl")
    p.add_argument("--out", required=True, help="output EMBF path")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--max-tokens", type=int, default=512)
    p.add_argument("--expected-dim", type=int,
                   help="abort before writing if the model width differs")
    p.set_defaults(func=cmd_export_corpus)

    p = sub.add_parser("export-beir", help="encode one BEIR-style task")
    p.add_argument("--task", required=True,
                   help=f"one of: {', '.join(SUPPORTED_TASKS)}")
    p.add_argument("--model", required=True)
    p.add_argument("--data-dir", required=True,
                   help="directory holding <task>/corpus.jsonl etc.")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--max-tokens", type=int, default=512)
    p.add_argument("--split", default="test", help="qrels split name")
    p.set_defaults(func=cmd_export_beir)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ExportError as exc:
        print(f"embed-export: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"embed-export: i/o: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
