"""Command-line surface: concat -> train -> encode -> calibrate/quantize,
lsh, and eval subcommands over the binary file formats.

Exit codes: 0 ok, 1 usage or validation problem, 2 numeric failure
(divergence, undefined similarity), 3 I/O or file-format problem.
All randomness flows from explicit --seed flags or config values.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import decoder, embio, evaluation, lsh, quantizer
from .errors import (
    EmbfuseError,
    FormatError,
    NormalizationError,
    TrainingDivergedError,
    UndefinedSimilarityError,
    ValidationError,
)
from .linalg import concat, l2_normalize_rows

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_IO = 3

# Keys a pipeline config file may define; anything else is rejected.
_CONFIG_KEYS = {
    "batch_size": int, "epochs": int, "learning_rate": float, "optimizer": str,
    "adam_beta1": float, "adam_beta2": float, "adam_eps": float,
    "sgd_momentum": float, "seed": int, "validation_fraction": float,
    "normalize_inputs": bool, "stops": list, "bits": int, "dproj": int,
    "k": int, "corpus": str, "checkpoint": str, "input": str, "output": str,
    "calibration": str, "qrels": str, "docs": str, "queries": str,
    "doc_ids": str, "query_ids": str,
}
_CONFIG_PATH_KEYS = ("corpus", "checkpoint", "input", "calibration", "qrels",
                     "docs", "queries", "doc_ids", "query_ids")


class _Parser(argparse.ArgumentParser):
    """argparse parser that exits with the usage code on bad flags."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def load_config(path) -> dict:
    """Parse a TOML config, rejecting unknown keys and missing input paths."""
    with open(path, "rb") as f:
        try:
            raw = tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(f"{path}: {exc}")
    unknown = sorted(set(raw) - set(_CONFIG_KEYS))
    if unknown:
        raise ValidationError(f"{path}: unknown config keys {unknown}")
    for key, value in raw.items():
        want = _CONFIG_KEYS[key]
        if want in (int, float) and isinstance(value, bool):
            raise ValidationError(f"{path}: key {key} must be {want.__name__}")
        if want is float and isinstance(value, int):
            value = float(value)
            raw[key] = value
        if not isinstance(value, want):
            raise ValidationError(f"{path}: key {key} must be {want.__name__}")
    for key in _CONFIG_PATH_KEYS:
        if key in raw and not Path(raw[key]).exists():
            raise ValidationError(f"{path}: {key} path {raw[key]!r} does not exist")
    return raw


def _setting(args, config, name, default):
    """Flag value if given, else config value, else default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return default


def _parse_stops(text):
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise ValidationError(f"stops must be comma-separated integers, got {text!r}")


def cmd_concat(args) -> int:
    parts = [embio.read_embeddings(p) for p in args.input]
    if args.normalize:
        parts = [l2_normalize_rows(p) for p in parts]
    merged = concat(parts)
    embio.write_embeddings(merged, args.output)
    print(f"rows={merged.shape[0]} dims={merged.shape[1]} -> {args.output}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = load_config(args.config) if args.config else {}
    corpus_path = args.corpus or config.get("corpus")
    output = args.output or config.get("output")
    if not corpus_path or not output:
        raise ValidationError("train needs --corpus and --output (flag or config)")
    stops = _parse_stops(args.stops) if args.stops else tuple(
        config.get("stops", decoder.DEFAULT_STOPS))
    train_config = decoder.TrainConfig(
        batch_size=_setting(args, config, "batch_size", 256),
        epochs=_setting(args, config, "epochs", 100),
        learning_rate=_setting(args, config, "learning_rate", 1e-3),
        optimizer=_setting(args, config, "optimizer", "adam"),
        seed=_setting(args, config, "seed", 0),
        validation_fraction=_setting(args, config, "validation_fraction", 0.05),
        normalize_inputs=(not args.no_normalize if args.no_normalize
                          else config.get("normalize_inputs", True)),
        adam_beta1=config.get("adam_beta1", 0.9),
        adam_beta2=config.get("adam_beta2", 0.999),
        adam_eps=config.get("adam_eps", 1e-8),
        sgd_momentum=config.get("sgd_momentum", 0.0),
    )
    corpus = embio.read_embeddings(corpus_path)

    def progress(epoch, train_loss, val_loss):
        val = f"{val_loss:.6e}" if val_loss is not None else "n/a"
        print(f"epoch={epoch} train_loss={train_loss:.6e} val_loss={val}")

    checkpoint = decoder.train(corpus, train_config, stops=stops, progress=progress)
    decoder.save_checkpoint(checkpoint.model, output)
    print(f"checkpoint d_in={checkpoint.model.d_in} d_out={checkpoint.model.d_out} "
          f"stops={','.join(map(str, checkpoint.model.stops))} -> {output}")
    return EXIT_OK


def cmd_encode(args) -> int:
    model = decoder.load_checkpoint(args.checkpoint)
    matrix = embio.read_embeddings(args.input)
    transform = evaluation.Decoder(model, stop=args.stop,
                                   normalize=not args.no_normalize)
    encoded = transform.apply(matrix)
    embio.write_embeddings(encoded, args.output)
    print(f"rows={encoded.shape[0]} dims={encoded.shape[1]} -> {args.output}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    config = load_config(args.config) if args.config else {}
    bits = _setting(args, config, "bits", 8)
    reference = embio.read_embeddings(args.input)
    cal = quantizer.calibrate(reference, bits)
    quantizer.write_calibration(cal, args.output)
    print(f"dims={cal.dims} bits={cal.bits} -> {args.output}")
    return EXIT_OK


def cmd_quantize(args) -> int:
    cal = quantizer.read_calibration(args.calibration)
    matrix = embio.read_embeddings(args.input)
    codes = quantizer.quantize(cal, matrix)
    embio.write_codes(codes, args.output)
    print(f"rows={codes.rows} dims={codes.dims} bits={codes.bits} -> {args.output}")
    return EXIT_OK


def cmd_lsh(args) -> int:
    config = load_config(args.config) if args.config else {}
    d_proj = _setting(args, config, "dproj", 1024)
    seed = _setting(args, config, "seed", 0)
    matrix = embio.read_embeddings(args.input)
    projector = lsh.LshProjector(d_in=matrix.shape[1], d_proj=d_proj, seed=seed)
    codes = lsh.project_and_binarize(projector, matrix)
    embio.write_codes(codes.to_codes(), args.output)
    if args.projector_out:
        lsh.write_projector(projector, args.projector_out)
    factor = lsh.compression_factor(matrix.shape[1], 32, d_proj)
    print(f"rows={codes.rows} bits_per_row={d_proj} compression {factor:.1f}x "
          f"-> {args.output}")
    return EXIT_OK


def _parse_transform_chain(spec: str, normalize: bool):
    stages = []
    for part in spec.split("+"):
        fields = part.strip().split(":")
        kind = fields[0]
        if kind == "raw" and len(fields) == 1:
            stages.append(evaluation.Raw())
        elif kind == "truncate" and len(fields) == 2:
            stages.append(evaluation.Truncated(int(fields[1])))
        elif kind == "decoder" and len(fields) in (2, 3):
            model = decoder.load_checkpoint(fields[1])
            stop = int(fields[2]) if len(fields) == 3 else None
            stages.append(evaluation.Decoder(model, stop=stop, normalize=normalize))
        elif kind == "quantize" and len(fields) == 2:
            stages.append(evaluation.Quantized(quantizer.read_calibration(fields[1])))
        elif kind == "lsh" and len(fields) == 2:
            stages.append(evaluation.Lsh(lsh.read_projector(fields[1])))
        else:
            raise ValidationError(
                f"bad transform stage {part!r}; expected raw | truncate:K | "
                f"decoder:CKPT[:STOP] | quantize:CAL | lsh:PROJ"
            )
    return stages


def _read_ids(path, count: int, prefix: str) -> list[str]:
    if path is None:
        return [f"{prefix}{i}" for i in range(count)]
    with open(path, "r", encoding="utf-8") as f:
        ids = [line.strip() for line in f if line.strip()]
    if len(ids) != count:
        raise ValidationError(f"{path}: {len(ids)} ids for {count} rows")
    return ids


def cmd_eval(args) -> int:
    config = load_config(args.config) if args.config else {}
    k = _setting(args, config, "k", 10)
    docs = embio.read_embeddings(args.docs)
    queries = embio.read_embeddings(args.queries)
    qrels = embio.read_qrels(args.qrels)
    doc_ids = _read_ids(args.doc_ids, docs.shape[0], "d")
    query_ids = _read_ids(args.query_ids, queries.shape[0], "q")
    task = evaluation.RetrievalTask(query_ids, queries, doc_ids, docs, qrels, k=k)
    chain = _parse_transform_chain(args.transform, normalize=not args.no_normalize)
    report = evaluation.evaluate_pipeline(task, chain, tag=args.tag)
    evaluation.write_report(report, args.output, task_name=args.task_name)
    if args.per_query:
        evaluation.write_per_query(report, args.per_query)
    if args.run_out:
        embio.write_run(report.run, args.run_out)
    print(f"task={args.task_name} transform={report.label} "
          f"mean_ndcg@{k}={report.mean:.5f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="embfuse",
                     description="Embedding fusion, compression, quantization, "
                                 "and retrieval evaluation toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("concat", help="horizontally concatenate embedding files")
    p.add_argument("-i", "--input", action="append", required=True,
                   help="input EMBF file (repeat for multiple sources, in order)")
    p.add_argument("-o", "--output", required=True, help="output EMBF file")
    p.add_argument("--normalize", action="store_true",
                   help="L2-normalize each source's rows before concatenation")
    p.set_defaults(func=cmd_concat)

    p = sub.add_parser("train", help="train a similarity-preserving decoder")
    p.add_argument("--corpus", help="training corpus EMBF file")
    p.add_argument("-o", "--output", help="output EMBD checkpoint")
    p.add_argument("--config", help="TOML config; flags override its values")
    p.add_argument("--stops", help="comma-separated prefix stops, e.g. 32,64,128")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="rows per batch")
    p.add_argument("--epochs", type=int, help="training epochs")
    p.add_argument("--learning-rate", dest="learning_rate", type=float,
                   help="optimizer step size")
    p.add_argument("--optimizer", choices=("adam", "sgd"), help="optimizer kind")
    p.add_argument("--seed", type=int, help="seed for init, split, and shuffling")
    p.add_argument("--validation-fraction", dest="validation_fraction", type=float,
                   help="held-out fraction of rows in [0, 1)")
    p.add_argument("--no-normalize", action="store_true",
                   help="skip L2 normalization of corpus rows before training")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="run a checkpoint over an embedding file")
    p.add_argument("--checkpoint", required=True, help="EMBD checkpoint")
    p.add_argument("-i", "--input", required=True, help="input EMBF file")
    p.add_argument("-o", "--output", required=True, help="output EMBF file")
    p.add_argument("--stop", type=int,
                   help="keep only the first STOP output columns (any value "
                        "from 1 to the decoder width)")
    p.add_argument("--no-normalize", action="store_true",
                   help="skip L2 normalization of input rows before decoding")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("calibrate", help="fit percentile break-points on a reference")
    p.add_argument("-i", "--input", required=True,
                   help="reference EMBF file (typically decoder outputs)")
    p.add_argument("-o", "--output", required=True, help="output EMBC calibration")
    p.add_argument("--bits", type=int, help="code width in bits, 1..8 (default 8)")
    p.add_argument("--config", help="TOML config; flags override its values")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("quantize", help="map an embedding file to b-bit codes")
    p.add_argument("-i", "--input", required=True, help="input EMBF file")
    p.add_argument("--calibration", required=True, help="EMBC calibration file")
    p.add_argument("-o", "--output", required=True, help="output EMBQ codes")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("lsh", help="random-projection sign codes for a file")
    p.add_argument("-i", "--input", required=True, help="input EMBF file")
    p.add_argument("-o", "--output", required=True, help="output EMBQ (1-bit) codes")
    p.add_argument("--dproj", type=int, help="projected dimension count (default 1024)")
    p.add_argument("--seed", type=int, help="projection seed (default 0)")
    p.add_argument("--projector-out", help="also write an EMBL projector descriptor")
    p.add_argument("--config", help="TOML config; flags override its values")
    p.set_defaults(func=cmd_lsh)

    p = sub.add_parser("eval", help="retrieval evaluation: nDCG@k over a transform chain")
    p.add_argument("--docs", required=True, help="document EMBF file")
    p.add_argument("--queries", required=True, help="query EMBF file")
    p.add_argument("--qrels", required=True, help="TREC qrels file")
    p.add_argument("--doc-ids", dest="doc_ids",
                   help="newline-delimited doc ids (default: row index)")
    p.add_argument("--query-ids", dest="query_ids",
                   help="newline-delimited query ids (default: row index)")
    p.add_argument("--transform", default="raw",
                   help="chain like decoder:ckpt.embd:384+quantize:cal.embc "
                        "(stages: raw, truncate:K, decoder:CKPT[:STOP], "
                        "quantize:CAL, lsh:PROJ)")
    p.add_argument("--k", type=int, help="rank cutoff (default 10)")
    p.add_argument("-o", "--output", required=True, help="summary report TSV")
    p.add_argument("--per-query", dest="per_query", help="per-query nDCG TSV")
    p.add_argument("--run-out", dest="run_out", help="TREC run file output")
    p.add_argument("--tag", default="embfuse", help="run tag column")
    p.add_argument("--task-name", dest="task_name", default="task",
                   help="task label in the report")
    p.add_argument("--no-normalize", action="store_true",
                   help="skip input normalization in decoder stages")
    p.add_argument("--config", help="TOML config; flags override its values")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (TrainingDivergedError, UndefinedSimilarityError, NormalizationError) as exc:
        print(f"embfuse: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValidationError as exc:
        print(f"embfuse: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"embfuse: file format: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"embfuse: i/o: {exc}", file=sys.stderr)
        return EXIT_IO
    except EmbfuseError as exc:
        print(f"embfuse: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
