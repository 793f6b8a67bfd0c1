import numpy as np
import pytest

from embfuse.cli import main
from embfuse.embio import (
    read_codes,
    read_embeddings,
    write_embeddings,
    write_qrels,
)
from embfuse.synthetic import low_rank_corpus, planted_neighbor_task


@pytest.fixture
def sources(tmp_path):
    rng = np.random.default_rng(0)
    a = rng.normal(size=(50, 6)).astype(np.float32)
    b = rng.normal(size=(50, 4)).astype(np.float32)
    pa, pb = tmp_path / "a.embf", tmp_path / "b.embf"
    write_embeddings(a, pa)
    write_embeddings(b, pb)
    return pa, pb


@pytest.fixture
def task_files(tmp_path):
    docs = low_rank_corpus(120, 12, 4, seed=1)
    task = planted_neighbor_task(docs, 15, noise=0.02, seed=2)
    paths = {
        "docs": tmp_path / "docs.embf",
        "queries": tmp_path / "queries.embf",
        "qrels": tmp_path / "qrels.tsv",
        "doc_ids": tmp_path / "docs.ids",
        "query_ids": tmp_path / "queries.ids",
    }
    write_embeddings(task.docs, paths["docs"])
    write_embeddings(task.queries, paths["queries"])
    write_qrels(task.qrels, paths["qrels"])
    paths["doc_ids"].write_text("\n".join(task.doc_ids) + "\n")
    paths["query_ids"].write_text("\n".join(task.query_ids) + "\n")
    return paths


def test_concat_two_sources(sources, tmp_path, capsys):
    pa, pb = sources
    out = tmp_path / "joint.embf"
    assert main(["concat", "-i", str(pa), "-i", str(pb), "-o", str(out)]) == 0
    assert read_embeddings(out).shape == (50, 10)
    assert "dims=10" in capsys.readouterr().out


def test_concat_four_sources_reach_1536(tmp_path):
    paths = []
    rng = np.random.default_rng(3)
    for i in range(4):
        p = tmp_path / f"s{i}.embf"
        write_embeddings(rng.normal(size=(5, 384)).astype(np.float32), p)
        paths.append(str(p))
    out = tmp_path / "joint.embf"
    args = ["concat", "-o", str(out)]
    for p in paths:
        args += ["-i", p]
    assert main(args) == 0
    assert read_embeddings(out).shape == (5, 1536)


def test_concat_row_mismatch_exit_code(tmp_path, capsys):
    pa, pb = tmp_path / "a.embf", tmp_path / "b.embf"
    write_embeddings(np.zeros((100, 2), dtype=np.float32), pa)
    write_embeddings(np.zeros((99, 2), dtype=np.float32), pb)
    code = main(["concat", "-i", str(pa), "-i", str(pb),
                 "-o", str(tmp_path / "out.embf")])
    assert code == 1
    assert "row count mismatch: 100 vs 99" in capsys.readouterr().err


def test_missing_input_is_io_error(tmp_path):
    code = main(["concat", "-i", str(tmp_path / "nope.embf"),
                 "-o", str(tmp_path / "out.embf")])
    assert code == 3


def test_train_encode_round_trip(tmp_path, capsys):
    corpus = low_rank_corpus(200, 10, 3, seed=4)
    corpus_path = tmp_path / "corpus.embf"
    write_embeddings(corpus, corpus_path)
    ckpt = tmp_path / "model.embd"
    assert main(["train", "--corpus", str(corpus_path), "-o", str(ckpt),
                 "--stops", "3,6", "--epochs", "10", "--batch-size", "32",
                 "--seed", "5"]) == 0
    out = capsys.readouterr().out
    assert "epoch=10" in out and "val_loss" in out

    encoded = tmp_path / "encoded.embf"
    assert main(["encode", "--checkpoint", str(ckpt), "-i", str(corpus_path),
                 "-o", str(encoded), "--stop", "3"]) == 0
    assert read_embeddings(encoded).shape == (200, 3)

    full = tmp_path / "full.embf"
    assert main(["encode", "--checkpoint", str(ckpt), "-i", str(corpus_path),
                 "-o", str(full)]) == 0
    assert read_embeddings(full).shape == (200, 6)  # stop omitted: full width


def test_train_deterministic_checkpoints(tmp_path):
    corpus_path = tmp_path / "corpus.embf"
    write_embeddings(low_rank_corpus(150, 8, 3, seed=6), corpus_path)
    ck1, ck2 = tmp_path / "m1.embd", tmp_path / "m2.embd"
    args = ["train", "--corpus", str(corpus_path), "--stops", "4,8",
            "--epochs", "5", "--batch-size", "32", "--seed", "11"]
    assert main(args + ["-o", str(ck1)]) == 0
    assert main(args + ["-o", str(ck2)]) == 0
    assert ck1.read_bytes() == ck2.read_bytes()


def test_encode_stop_beyond_width_fails(tmp_path):
    corpus_path = tmp_path / "corpus.embf"
    write_embeddings(low_rank_corpus(100, 8, 3, seed=7), corpus_path)
    ckpt = tmp_path / "m.embd"
    main(["train", "--corpus", str(corpus_path), "-o", str(ckpt),
          "--stops", "4", "--epochs", "2", "--batch-size", "16"])
    code = main(["encode", "--checkpoint", str(ckpt), "-i", str(corpus_path),
                 "-o", str(tmp_path / "e.embf"), "--stop", "5"])
    assert code == 1


def test_encode_untrained_stop_allowed(tmp_path):
    # stops are advisory at encode time: any width up to d_out works
    corpus_path = tmp_path / "corpus.embf"
    write_embeddings(low_rank_corpus(100, 8, 3, seed=8), corpus_path)
    ckpt = tmp_path / "m.embd"
    main(["train", "--corpus", str(corpus_path), "-o", str(ckpt),
          "--stops", "4,8", "--epochs", "2", "--batch-size", "16"])
    out = tmp_path / "e.embf"
    assert main(["encode", "--checkpoint", str(ckpt), "-i", str(corpus_path),
                 "-o", str(out), "--stop", "5"]) == 0
    assert read_embeddings(out).shape == (100, 5)


def test_calibrate_quantize_pipeline(tmp_path):
    ref_path = tmp_path / "ref.embf"
    write_embeddings(np.random.default_rng(9).normal(size=(500, 6)).astype(np.float32),
                     ref_path)
    cal = tmp_path / "cal.embc"
    codes = tmp_path / "codes.embq"
    assert main(["calibrate", "-i", str(ref_path), "--bits", "2", "-o", str(cal)]) == 0
    assert main(["quantize", "-i", str(ref_path), "--calibration", str(cal),
                 "-o", str(codes)]) == 0
    loaded = read_codes(codes)
    assert loaded.bits == 2 and loaded.symbols.shape == (500, 6)


def test_lsh_logs_compression(tmp_path, capsys):
    path = tmp_path / "m.embf"
    write_embeddings(np.random.default_rng(10).normal(size=(20, 1536)).astype(np.float32),
                     path)
    out = tmp_path / "codes.embq"
    assert main(["lsh", "-i", str(path), "--dproj", "1024", "--seed", "3",
                 "-o", str(out), "--projector-out", str(tmp_path / "p.embl")]) == 0
    assert "compression 48.0x" in capsys.readouterr().out


def test_eval_raw_planted_task(task_files, tmp_path, capsys):
    report = tmp_path / "report.tsv"
    assert main(["eval", "--docs", str(task_files["docs"]),
                 "--queries", str(task_files["queries"]),
                 "--qrels", str(task_files["qrels"]),
                 "--doc-ids", str(task_files["doc_ids"]),
                 "--query-ids", str(task_files["query_ids"]),
                 "--transform", "raw", "-o", str(report)]) == 0
    assert "mean_ndcg@10=1.00000" in capsys.readouterr().out
    body = report.read_text().splitlines()
    assert body[0] == "task\ttransform\tmean_ndcg"
    assert body[1].endswith("1.000000")


def test_eval_transform_chain_and_run_out(task_files, tmp_path):
    ckpt = tmp_path / "m.embd"
    assert main(["train", "--corpus", str(task_files["docs"]), "-o", str(ckpt),
                 "--stops", "4,8", "--epochs", "30", "--batch-size", "32",
                 "--seed", "12"]) == 0
    report = tmp_path / "report.tsv"
    run_out = tmp_path / "run.trec"
    assert main(["eval", "--docs", str(task_files["docs"]),
                 "--queries", str(task_files["queries"]),
                 "--qrels", str(task_files["qrels"]),
                 "--doc-ids", str(task_files["doc_ids"]),
                 "--query-ids", str(task_files["query_ids"]),
                 "--transform", f"decoder:{ckpt}:4", "-o", str(report),
                 "--run-out", str(run_out)]) == 0
    assert "decoder[:4]" in report.read_text()
    first = run_out.read_text().splitlines()[0].split()
    assert first[1] == "Q0" and first[3] == "1"


def test_eval_bad_transform_spec(task_files, tmp_path):
    code = main(["eval", "--docs", str(task_files["docs"]),
                 "--queries", str(task_files["queries"]),
                 "--qrels", str(task_files["qrels"]),
                 "--transform", "fourier:8", "-o", str(tmp_path / "r.tsv")])
    assert code == 1


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["concat", "--frobnicate"])
    assert exc.value.code == 1


def test_help_for_every_subcommand(capsys):
    for command in ("concat", "train", "encode", "calibrate", "quantize",
                    "lsh", "eval"):
        with pytest.raises(SystemExit) as exc:
            main([command, "--help"])
        assert exc.value.code == 0
        assert "--help" in capsys.readouterr().out


def test_config_file_with_unknown_key_rejected(tmp_path, capsys):
    corpus_path = tmp_path / "corpus.embf"
    write_embeddings(low_rank_corpus(100, 8, 3, seed=13), corpus_path)
    config = tmp_path / "run.toml"
    config.write_text('epochs = 2\nwombats = 4\n')
    code = main(["train", "--corpus", str(corpus_path),
                 "-o", str(tmp_path / "m.embd"), "--stops", "4",
                 "--config", str(config)])
    assert code == 1
    assert "wombats" in capsys.readouterr().err


def test_config_file_values_used_and_flags_win(tmp_path, capsys):
    corpus_path = tmp_path / "corpus.embf"
    write_embeddings(low_rank_corpus(100, 8, 3, seed=14), corpus_path)
    config = tmp_path / "run.toml"
    config.write_text(
        f'corpus = "{corpus_path}"\nepochs = 3\nbatch_size = 16\n'
        'stops = [4, 8]\nseed = 1\n'
    )
    ckpt = tmp_path / "m.embd"
    assert main(["train", "--config", str(config), "-o", str(ckpt),
                 "--epochs", "2"]) == 0
    out = capsys.readouterr().out
    assert "epoch=2" in out and "epoch=3" not in out


def test_config_missing_path_rejected(tmp_path):
    config = tmp_path / "run.toml"
    config.write_text('corpus = "/does/not/exist.embf"\nepochs = 1\n')
    code = main(["train", "--config", str(config),
                 "-o", str(tmp_path / "m.embd"), "--stops", "4"])
    assert code == 1


def test_train_divergence_exit_code(tmp_path, capsys):
    corpus_path = tmp_path / "corpus.embf"
    write_embeddings(low_rank_corpus(64, 8, 2, seed=15), corpus_path)
    code = main(["train", "--corpus", str(corpus_path),
                 "-o", str(tmp_path / "m.embd"), "--stops", "4",
                 "--epochs", "2", "--batch-size", "8",
                 "--learning-rate", "1e308"])
    assert code == 2
    assert "epoch" in capsys.readouterr().err
