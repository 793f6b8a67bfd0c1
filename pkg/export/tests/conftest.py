import json

import pytest


@pytest.fixture
def beir_dir(tmp_path):
    """Minimal BEIR-layout dataset under the scifact task name."""
    task_dir = tmp_path / "beir" / "scifact"
    (task_dir / "qrels").mkdir(parents=True)
    docs = [
        {"_id": "doc1", "title": "Mitochondria", "text": "the powerhouse of the cell"},
        {"_id": "doc2", "title": "Ribosomes", "text": "assemble proteins from RNA"},
        {"_id": "doc3", "title": "Chloroplasts", "text": "capture light energy in plants"},
        {"_id": "doc4", "title": "", "text": "unrelated filler passage about geology"},
    ]
    queries = [
        {"_id": "q1", "text": "what produces energy in the cell"},
        {"_id": "q2", "text": "where are proteins assembled"},
        {"_id": "q3", "text": "held out query without judgments"},
    ]
    with open(task_dir / "corpus.jsonl", "w") as f:
        for d in docs:
            f.write(json.dumps(d) + "\n")
    with open(task_dir / "queries.jsonl", "w") as f:
        for q in queries:
            f.write(json.dumps(q) + "\n")
    with open(task_dir / "qrels" / "test.tsv", "w") as f:
        f.write("query-id\tcorpus-id\tscore\n")
        f.write("q1\tdoc1\t1\n")
        f.write("q2\tdoc2\t1\n")
        f.write("q2\tdoc3\t0\n")
    return tmp_path / "beir"


@pytest.fixture
def text_corpus(tmp_path):
    path = tmp_path / "corpus.txt"
    lines = [f"passage number {i} about topic {i % 7}" for i in range(23)]
    path.write_text("\n".join(lines) + "\n")
    return path
