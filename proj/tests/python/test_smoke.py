import json
import os
from pathlib import Path

import pytest

import medfact

FIXTURES = Path(os.environ.get("MEDFACT_FIXTURES", Path(__file__).resolve().parents[1] / "fixtures"))


def test_canonical_id_is_stable():
    a = medfact.canonical_id("RAG", "model-x", "s1")
    assert a == medfact.canonical_id("RAG", "model-x", "s1")
    assert a != medfact.canonical_id("RAG", "model-x", "s2")
    assert len(a) == 32
    int(a, 16)


def test_cache_key_is_hex():
    k = medfact.cache_key("stub", "m", "payload", "{}")
    assert len(k) == 64
    assert k != medfact.cache_key("stub", "m", "payload!", "{}")


def test_unanimous_table():
    assert medfact.unanimous("supported", "supported") == "supported"
    assert medfact.unanimous("supported", "neutral") == "neutral"
    assert medfact.unanimous("contradicted", "contradicted") == "contradicted"


def test_parse_cot_response():
    assert medfact.parse_cot_response("reasoning\nTrue") is True
    assert medfact.parse_cot_response("reasoning\nFalse") is False
    assert medfact.parse_cot_response("no verdict here") is None


def test_resources_and_prompt():
    names = medfact.resource_names()
    assert len(names) == 7
    for n in names:
        assert medfact.resource(n)
    prompt = medfact.render_prompt("RAG", question="What lowers glucose?", snippets=["Insulin lowers glucose."])
    assert "What lowers glucose?" in prompt
    assert "Insulin lowers glucose." in prompt


def test_errors_carry_code():
    with pytest.raises(medfact.MedfactError, match="MissingField"):
        medfact.render_prompt("Summ")
    with pytest.raises(medfact.MedfactError):
        medfact.emit_report("{}", "xml")


def test_passage_index_roundtrip(tmp_path):
    docs = []
    with open(FIXTURES / "corpus.jsonl") as f:
        for line in f:
            d = json.loads(line)
            docs.append((d["title"], d["text"]))
    idx = medfact.PassageIndex.build(docs, chunk_size=16, overlap=4)
    assert len(idx) >= len(docs)
    hits = idx.retrieve("metformin diabetes", k=3)
    assert hits and hits[0]["rank"] == 1
    assert hits[0]["source_title"] == "Metformin"
    scores = [h["score"] for h in hits]
    assert scores == sorted(scores, reverse=True)
    assert idx.resolve_topic("metformin") == "Metformin"

    path = tmp_path / "idx.json"
    idx.save(str(path))
    again = medfact.PassageIndex.load(str(path))
    assert again.serialize() == idx.serialize()


def test_kappa_and_correlation():
    rows = []
    with open(FIXTURES / "annotations.csv") as f:
        next(f)
        for line in f:
            g, a, s = line.strip().split(",")
            rows.append((g, a, int(s)))
    k = medfact.cohen_kappa(rows)
    assert -1.0 <= k["kappa"] <= 1.0
    assert k["n_items"] == len({r[0] for r in rows})
    c = medfact.correlate([1.0, 2.0, 3.0, 4.0], [2.0, 4.0, 6.0, 8.0])
    assert c["pearson"] == pytest.approx(1.0)
    assert c["spearman"] == pytest.approx(1.0)


def test_cli_verify_matches_golden():
    code, out, err = medfact.run_cli(["verify", "-c", str(FIXTURES / "stub.yaml")])
    assert code == 0, err
    assert out == (FIXTURES / "golden_report.json").read_text()
    md = medfact.emit_report(out, "markdown")
    assert md.startswith("#")
