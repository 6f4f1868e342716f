"""HTTP service tests: session lifecycle, versioning, payload correctness."""

from __future__ import annotations

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from promptmap import corpus, gridmap, topics
from promptmap.attention import (
    AttentionLayer,
    compose_prompts,
    evaluate_prompt,
    relevance,
    save_layer,
)
from promptmap.embeddings import ToyEmbedder, save_store
from promptmap.service import SNAPSHOT_DIR_ENV, create_app

BASE = dict(dim=16, seed=0, map_epochs=3, topic_k=2, topic_iters=40,
            cluster_k_max=3, vocab_cap=50)


def corpus_docs(n=12):
    group_a = ["alpha", "beta", "gamma", "delta"]
    group_b = ["omega", "sigma", "kappa", "lumen"]
    docs = []
    for i in range(n):
        vocab = group_a if i % 2 == 0 else group_b
        tokens = [vocab[i % 4], vocab[(i + 1) % 4], f"noise{i}"]
        docs.append({"id": f"D{i:02d}", "title": f"Doc {i}", "text": " ".join(tokens)})
    return docs


def new_client() -> TestClient:
    return TestClient(create_app())


def create_session(client, docs=None, **over) -> dict:
    payload = {**BASE, "docs": docs if docs is not None else corpus_docs(), **over}
    payload = {k: v for k, v in payload.items() if v is not None}
    resp = client.post("/sessions", json=payload)
    assert resp.status_code == 201, resp.text
    return resp.json()


# ---------------------------------------------------------------------------
# session creation
# ---------------------------------------------------------------------------


def test_root_reports_session_count():
    client = new_client()
    assert client.get("/").json() == {"service": "promptmap", "sessions": 0}
    create_session(client)
    assert client.get("/").json()["sessions"] == 1


def test_cross_origin_requests_are_allowed():
    client = new_client()
    resp = client.get("/", headers={"Origin": "http://localhost:5173"})
    assert resp.headers["access-control-allow-origin"] == "*"
    preflight = client.options("/sessions", headers={
        "Origin": "http://localhost:5173",
        "Access-Control-Request-Method": "POST",
        "Access-Control-Request-Headers": "content-type",
    })
    assert preflight.status_code == 200
    assert "POST" in preflight.headers["access-control-allow-methods"]


def test_create_session_from_docs():
    client = new_client()
    created = create_session(client)
    assert created["n_docs"] == 12
    assert created["dim"] == 16
    assert created["version"] == 0


def test_create_session_from_csv_text():
    client = new_client()
    lines = ["id,title,text"] + [f"{d['id']},{d['title']},{d['text']}" for d in corpus_docs()]
    payload = {**BASE, "csv_text": "\n".join(lines) + "\n"}
    resp = client.post("/sessions", json=payload)
    assert resp.status_code == 201
    assert resp.json()["n_docs"] == 12


def test_create_session_from_store_path(tmp_path):
    store = ToyEmbedder(16, 0).embed_corpus(
        (d["id"], d["title"], d["text"]) for d in corpus_docs())
    path = tmp_path / "corpus.store"
    save_store(store, path)
    client = new_client()
    resp = client.post("/sessions", json={"store_path": str(path), "map_epochs": 3})
    assert resp.status_code == 201
    assert resp.json() | {"n_docs": 12, "dim": 16} == resp.json()


def test_create_session_from_relative_store_path(tmp_path, monkeypatch):
    store = ToyEmbedder(8, 0).embed_corpus([("a", "", "x y"), ("b", "", "z w")])
    save_store(store, tmp_path / "rel.store")
    monkeypatch.setenv(corpus.DATA_DIR_ENV, str(tmp_path))
    client = new_client()
    resp = client.post("/sessions", json={"store_path": "rel.store", "map_epochs": 3})
    assert resp.status_code == 201
    assert resp.json()["dim"] == 8


def test_create_session_uses_checkpoint_layer(tmp_path):
    rng = np.random.default_rng(4)
    layer = AttentionLayer(np.eye(16) + 0.1 * rng.standard_normal((16, 16)),
                           np.eye(16) + 0.1 * rng.standard_normal((16, 16)))
    ckpt = tmp_path / "layer.ckpt"
    save_layer(layer, ckpt)
    client = new_client()
    created = create_session(client, checkpoint_path=str(ckpt))
    client.post(f"/sessions/{created['session_id']}/prompts", json={"text": "alpha beta"})
    doc = client.get(f"/sessions/{created['session_id']}/docs/D00").json()

    embedder = ToyEmbedder(16, 0)
    weighting = compose_prompts([embedder.embed_prompt("alpha beta")], [1.0])
    store = ToyEmbedder(16, 0).embed_corpus(
        (d["id"], d["title"], d["text"]) for d in corpus_docs())
    expect = relevance(layer, weighting, store.get("D00"))
    assert doc["raw_relevance"] == pytest.approx(expect, abs=1e-12)


def test_create_session_input_errors(tmp_path):
    client = new_client()
    assert client.post("/sessions", json={"dim": 8}).status_code == 400
    both = {"docs": corpus_docs(2), "csv_text": "id,title,text\nq,t,x\n"}
    assert client.post("/sessions", json=both).status_code == 400
    assert client.post("/sessions", json={"docs": []}).status_code == 400

    bad_csv = client.post("/sessions", json={"csv_text": "id,title,text\nd,t,x\nd,t,y\n"})
    assert bad_csv.status_code == 400
    assert "malformed corpus" in bad_csv.json()["detail"]

    missing_store = client.post("/sessions", json={"store_path": str(tmp_path / "nope.bin")})
    assert missing_store.status_code == 400
    assert "not found" in missing_store.json()["detail"]


def test_create_session_checkpoint_errors(tmp_path):
    client = new_client()
    missing = create_payload_error(client, checkpoint_path=str(tmp_path / "nope.ckpt"))
    assert "not found" in missing

    garbage = tmp_path / "garbage.ckpt"
    garbage.write_bytes(b"not a checkpoint at all")
    assert "magic" in create_payload_error(client, checkpoint_path=str(garbage))

    small = tmp_path / "dim8.ckpt"
    save_layer(AttentionLayer.identity(8), small)
    assert "dim" in create_payload_error(client, checkpoint_path=str(small))


def create_payload_error(client, **over) -> str:
    resp = client.post("/sessions", json={**BASE, "docs": corpus_docs(), **over})
    assert resp.status_code == 400, resp.text
    return resp.json()["detail"]


def test_unknown_session_is_404():
    client = new_client()
    assert client.get("/sessions/nope/map").status_code == 404
    assert client.get("/sessions/nope/topics").status_code == 404
    assert client.get("/sessions/nope/docs/D00").status_code == 404
    assert client.post("/sessions/nope/prompts", json={"text": "x"}).status_code == 404
    assert client.patch("/sessions/nope/weights", json={"weights": [1.0]}).status_code == 404
    assert client.post("/sessions/nope/lasso", json={"doc_ids": ["D00"]}).status_code == 404


# ---------------------------------------------------------------------------
# prompts and weights
# ---------------------------------------------------------------------------


def test_reads_conflict_before_any_prompt():
    client = new_client()
    sid = create_session(client)["session_id"]
    for url in (f"/sessions/{sid}/map", f"/sessions/{sid}/topics",
                f"/sessions/{sid}/docs/D00"):
        resp = client.get(url)
        assert resp.status_code == 409
        assert resp.json()["detail"] == "no prompt submitted"


def test_first_prompt_recomputes_the_map():
    client = new_client()
    sid = create_session(client)["session_id"]
    resp = client.post(f"/sessions/{sid}/prompts", json={"text": "alpha beta"})
    assert resp.status_code == 200
    body = resp.json()
    assert body["version"] == 1
    assert body["prompts"] == [{"text": "alpha beta", "weight": 1.0}]
    assert body["n_docs"] == 12
    assert len(body["relevances"]) == 12
    layout = body["layout"]
    occupants = [c["occupant"] for c in layout["cells"] if c["occupant"]]
    assert sorted(occupants) == sorted(d["id"] for d in corpus_docs())
    assert set(body["colors"]) == {str(c["index"]) for c in layout["cells"]}
    assert len(layout["loss_history"]) == BASE["map_epochs"] + 1


def test_first_prompt_weight_must_be_one():
    client = new_client()
    sid = create_session(client)["session_id"]
    bad = client.post(f"/sessions/{sid}/prompts", json={"text": "alpha", "weight": 0.5})
    assert bad.status_code == 400
    ok = client.post(f"/sessions/{sid}/prompts", json={"text": "alpha", "weight": 1.0})
    assert ok.status_code == 200
    empty = client.post(f"/sessions/{sid}/prompts", json={"text": "   "})
    assert empty.status_code == 400


def test_second_prompt_rescales_existing_weights():
    client = new_client()
    sid = create_session(client)["session_id"]
    client.post(f"/sessions/{sid}/prompts", json={"text": "alpha"})
    resp = client.post(f"/sessions/{sid}/prompts", json={"text": "omega", "weight": 0.25})
    body = resp.json()
    assert body["version"] == 2
    assert body["prompts"] == [{"text": "alpha", "weight": 0.75},
                               {"text": "omega", "weight": 0.25}]
    default = client.post(f"/sessions/{sid}/prompts", json={"text": "sigma"}).json()
    weights = [p["weight"] for p in default["prompts"]]
    assert weights[-1] == 0.5
    assert sum(weights) == pytest.approx(1.0, abs=1e-12)
    out_of_range = client.post(f"/sessions/{sid}/prompts", json={"text": "kappa", "weight": 1.5})
    assert out_of_range.status_code == 400


def test_patch_weights_validation_and_effect():
    client = new_client()
    sid = create_session(client)["session_id"]
    no_prompts = client.patch(f"/sessions/{sid}/weights", json={"weights": [1.0]})
    assert no_prompts.status_code == 400
    client.post(f"/sessions/{sid}/prompts", json={"text": "alpha"})
    client.post(f"/sessions/{sid}/prompts", json={"text": "omega", "weight": 0.5})

    wrong_len = client.patch(f"/sessions/{sid}/weights", json={"weights": [1.0]})
    assert wrong_len.status_code == 400
    negative = client.patch(f"/sessions/{sid}/weights", json={"weights": [1.4, -0.4]})
    assert negative.status_code == 400
    not_normalized = client.patch(f"/sessions/{sid}/weights", json={"weights": [0.9, 0.3]})
    assert not_normalized.status_code == 400

    ok = client.patch(f"/sessions/{sid}/weights", json={"weights": [0.6, 0.4]})
    assert ok.status_code == 200
    body = ok.json()
    assert body["version"] == 3
    assert [p["weight"] for p in body["prompts"]] == [0.6, 0.4]


def test_stale_version_reads_conflict():
    client = new_client()
    sid = create_session(client)["session_id"]
    client.post(f"/sessions/{sid}/prompts", json={"text": "alpha"})
    client.post(f"/sessions/{sid}/prompts", json={"text": "omega", "weight": 0.5})
    stale = client.get(f"/sessions/{sid}/map", params={"version": 1})
    assert stale.status_code == 409
    assert stale.json()["detail"] == {"error": "stale version", "current_version": 2}
    assert client.get(f"/sessions/{sid}/map", params={"version": 2}).status_code == 200
    assert client.get(f"/sessions/{sid}/topics", params={"version": 1}).status_code == 409
    assert client.get(f"/sessions/{sid}/docs/D00", params={"version": 1}).status_code == 409
    assert client.get(f"/sessions/{sid}/map").status_code == 200


# ---------------------------------------------------------------------------
# payload correctness against the library
# ---------------------------------------------------------------------------


def _local_results(texts, weights):
    embedder = ToyEmbedder(16, 0)
    weighting = compose_prompts([embedder.embed_prompt(t) for t in texts], weights)
    store = ToyEmbedder(16, 0).embed_corpus(
        (d["id"], d["title"], d["text"]) for d in corpus_docs())
    layer = AttentionLayer.identity(16)
    results = {doc.doc_id: evaluate_prompt(layer, weighting, doc) for doc in store}
    raw = {doc.doc_id: relevance(layer, weighting, doc) for doc in store}
    return store, results, raw


def test_served_relevance_matches_composed_prompts():
    client = new_client()
    sid = create_session(client)["session_id"]
    client.post(f"/sessions/{sid}/prompts", json={"text": "alpha gamma"})
    client.post(f"/sessions/{sid}/prompts", json={"text": "omega", "weight": 0.3})
    _, _, raw = _local_results(["alpha gamma", "omega"], [0.7, 0.3])

    norm = gridmap.normalize_relevance(np.array([raw[d["id"]] for d in corpus_docs()]))
    body = client.get(f"/sessions/{sid}/map").json()
    for i, d in enumerate(corpus_docs()):
        assert body["relevances"][d["id"]] == pytest.approx(float(norm[i]), abs=1e-12)
    doc = client.get(f"/sessions/{sid}/docs/D03").json()
    assert doc["raw_relevance"] == pytest.approx(raw["D03"], abs=1e-12)
    assert doc["relevance"] == pytest.approx(
        float(norm[[d["id"] for d in corpus_docs()].index("D03")]), abs=1e-12)


def test_served_topics_match_a_local_refit():
    client = new_client()
    sid = create_session(client)["session_id"]
    client.post(f"/sessions/{sid}/prompts", json={"text": "alpha omega"})
    store, results, _ = _local_results(["alpha omega"], [1.0])
    model = topics.AttentionTopicModel(n_topics=2, k_max=3, iters=40, seed=0, vocab_cap=50)
    model.fit(results, store)
    served = client.get(f"/sessions/{sid}/topics").json()
    assert served["version"] == 1
    local = model.export()
    assert served["k"] == local["k"]
    assert served["topics"] == json.loads(json.dumps(local["topics"]))
    assert served["doc_topic_weights"] == json.loads(json.dumps(local["doc_topic_weights"]))


def test_doc_heatmap_normalization():
    docs = corpus_docs(11) + [{"id": "FLAT", "title": "", "text": "same same same"}]
    client = new_client()
    sid = create_session(client, docs=docs)["session_id"]
    client.post(f"/sessions/{sid}/prompts", json={"text": "alpha"})

    flat = client.get(f"/sessions/{sid}/docs/FLAT").json()
    assert [t["weight"] for t in flat["tokens"]] == [0.5, 0.5, 0.5]
    assert [t["t"] for t in flat["tokens"]] == ["same", "same", "same"]

    varied = client.get(f"/sessions/{sid}/docs/D00").json()
    weights = [t["weight"] for t in varied["tokens"]]
    assert min(weights) == 0.0 and max(weights) == 1.0
    assert varied["title"] == "Doc 0"

    assert client.get(f"/sessions/{sid}/docs/NOPE").status_code == 404


def test_per_layer_gamma_is_the_ring_mean():
    client = new_client()
    sid = create_session(client)["session_id"]
    body = client.post(f"/sessions/{sid}/prompts", json={"text": "alpha"}).json()
    by_layer = {}
    for cell in body["layout"]["cells"]:
        by_layer.setdefault(cell["layer"], []).append(cell["gamma"])
    expect = [{"layer": layer, "gamma": float(np.mean(vals))}
              for layer, vals in sorted(by_layer.items())]
    assert body["per_layer_gamma"] == pytest.approx(expect)


# ---------------------------------------------------------------------------
# lasso sub-sessions
# ---------------------------------------------------------------------------


def test_lasso_spawns_a_recomputed_child_session():
    client = new_client()
    sid = create_session(client)["session_id"]
    client.post(f"/sessions/{sid}/prompts", json={"text": "alpha"})
    parent_map = client.get(f"/sessions/{sid}/map").json()

    picked = ["D00", "D02", "D04", "D06"]
    resp = client.post(f"/sessions/{sid}/lasso", json={"doc_ids": picked})
    assert resp.status_code == 201
    child = resp.json()
    assert child["n_docs"] == 4
    assert child["version"] == 1  # recomputed once with inherited prompts

    child_map = client.get(f"/sessions/{child['session_id']}/map").json()
    assert child_map["prompts"] == [{"text": "alpha", "weight": 1.0}]
    occupants = [c["occupant"] for c in child_map["layout"]["cells"] if c["occupant"]]
    assert sorted(occupants) == picked

    # parent unchanged
    after = client.get(f"/sessions/{sid}/map").json()
    assert after["version"] == parent_map["version"]
    assert after["n_docs"] == 12


def test_lasso_deduplicates_and_validates_ids():
    client = new_client()
    sid = create_session(client)["session_id"]
    client.post(f"/sessions/{sid}/prompts", json={"text": "alpha"})
    assert client.post(f"/sessions/{sid}/lasso", json={"doc_ids": []}).status_code == 400
    unknown = client.post(f"/sessions/{sid}/lasso", json={"doc_ids": ["D00", "ZZ"]})
    assert unknown.status_code == 400
    assert "ZZ" in unknown.json()["detail"]
    dup = client.post(f"/sessions/{sid}/lasso", json={"doc_ids": ["D01", "D03", "D01"]})
    assert dup.status_code == 201
    assert dup.json()["n_docs"] == 2


def test_lasso_single_document_child():
    client = new_client()
    sid = create_session(client)["session_id"]
    client.post(f"/sessions/{sid}/prompts", json={"text": "alpha"})
    child = client.post(f"/sessions/{sid}/lasso", json={"doc_ids": ["D05"]}).json()
    child_map = client.get(f"/sessions/{child['session_id']}/map").json()
    assert child_map["n_docs"] == 1
    occupants = [c["occupant"] for c in child_map["layout"]["cells"] if c["occupant"]]
    assert occupants == ["D05"]


def test_lasso_before_any_prompt_leaves_child_unversioned():
    client = new_client()
    sid = create_session(client)["session_id"]
    child = client.post(f"/sessions/{sid}/lasso", json={"doc_ids": ["D00"]}).json()
    assert child["version"] == 0
    assert client.get(f"/sessions/{child['session_id']}/map").status_code == 409


# ---------------------------------------------------------------------------
# isolation, determinism, snapshots
# ---------------------------------------------------------------------------


def test_sessions_are_independent():
    client = new_client()
    a = create_session(client)["session_id"]
    b = create_session(client)["session_id"]
    client.post(f"/sessions/{a}/prompts", json={"text": "alpha"})
    assert client.get(f"/sessions/{b}/map").status_code == 409
    client.post(f"/sessions/{b}/prompts", json={"text": "omega"})
    map_a = client.get(f"/sessions/{a}/map").json()
    map_b = client.get(f"/sessions/{b}/map").json()
    assert map_a["version"] == 1 and map_b["version"] == 1
    assert map_a["relevances"] != map_b["relevances"]


def test_identical_sessions_serve_identical_payloads():
    payload_pair = []
    for _ in range(2):
        client = new_client()
        sid = create_session(client)["session_id"]
        client.post(f"/sessions/{sid}/prompts", json={"text": "alpha omega"})
        client.post(f"/sessions/{sid}/prompts", json={"text": "gamma", "weight": 0.4})
        map_body = client.get(f"/sessions/{sid}/map").json()
        topic_body = client.get(f"/sessions/{sid}/topics").json()
        map_body.pop("session_id")
        topic_body.pop("session_id")
        payload_pair.append((map_body, topic_body))
    assert payload_pair[0] == payload_pair[1]


def test_snapshot_files_are_written_when_enabled(tmp_path, monkeypatch):
    monkeypatch.setenv(SNAPSHOT_DIR_ENV, str(tmp_path / "snaps"))
    client = new_client()
    sid = create_session(client)["session_id"]
    client.post(f"/sessions/{sid}/prompts", json={"text": "alpha"})
    snap_path = tmp_path / "snaps" / f"{sid}.json"
    assert snap_path.exists()
    snap = json.loads(snap_path.read_text())
    assert snap["session_id"] == sid
    assert snap["version"] == 1
    assert snap["prompts"] == [{"text": "alpha", "weight": 1.0}]
    assert set(snap) == {"session_id", "version", "prompts", "layout", "topics"}
    client.post(f"/sessions/{sid}/prompts", json={"text": "omega", "weight": 0.5})
    assert json.loads(snap_path.read_text())["version"] == 2
