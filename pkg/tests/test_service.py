"""Annotation service: JSON endpoints, budget charging, record/replay parity."""

import filecmp
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from fastapi import HTTPException
from fastapi.testclient import TestClient

from activereid import (
    CANNOT_LINK,
    Constraint,
    MUST_LINK,
    RunConfig,
    SyntheticSpec,
    generate_synthetic,
    run_loop,
)
from activereid.service import AnnotationSession, create_app

CLEAN_SPEC = SyntheticSpec(4, 4, 8, 0.0, 5.0, rng_seed=3)
CLEAN_CONFIG = RunConfig(
    knn_k=3,
    dbscan_eps=0.6,
    dbscan_min_samples=2,
    budget_fraction_per_cycle=0.05,
    num_cycles=2,
    rng_seed=1,
)

NOISY_SPEC = SyntheticSpec(8, 6, 8, 1.2, 2.0, rng_seed=7)
NOISY_CONFIG = RunConfig(
    knn_k=5,
    dbscan_eps=0.4,
    dbscan_min_samples=4,
    s_min=0.1,
    budget_fraction_per_cycle=0.02,
    num_cycles=2,
    rng_seed=11,
)


def make_client(spec=NOISY_SPEC, config=NOISY_CONFIG, run_dir=None):
    emb = generate_synthetic(spec)
    session = AnnotationSession(emb, config, run_dir=run_dir)
    return emb, session, TestClient(create_app(session))


def truth_label(emb, payload):
    ident = dict(zip(emb.ids, emb.identities))
    return "ml" if ident[payload["a"]["id"]] == ident[payload["b"]["id"]] else "cl"


def annotate_everything(emb, client):
    """Answer every drawn pair with ground truth and advance through all cycles."""
    while True:
        resp = client.get("/api/next-pair")
        if resp.status_code == 204:
            prog = client.post("/api/advance").json()
            if prog["done"]:
                return prog
            continue
        q = resp.json()
        label = truth_label(emb, q)
        client.post("/api/answer", json={"query_id": q["query_id"], "label": label})


# ----------------------------------------------------------------- session


def test_session_info_shape():
    _, _, client = make_client()
    info = client.get("/api/session").json()
    assert info["session_id"] == "run-11"
    assert info["num_samples"] == 48
    assert info["pool_os_size"] > 0 and info["pool_us_size"] > 0
    assert info["cycle"] == 0 and info["num_cycles"] == 2
    assert info["done"] is False
    assert info["batch_budget"] == 22


def test_session_id_override():
    emb = generate_synthetic(CLEAN_SPEC)
    session = AnnotationSession(emb, CLEAN_CONFIG, session_id="shift-A")
    assert session.session_info()["session_id"] == "shift-A"


# --------------------------------------------------------------- next-pair


def test_next_pair_payload_shape():
    emb, _, client = make_client()
    q = client.get("/api/next-pair").json()
    assert set(q) == {"query_id", "a", "b", "probability"}
    assert q["query_id"].startswith("c0-q")
    ids = set(emb.ids)
    assert q["a"]["id"] in ids and q["b"]["id"] in ids
    assert q["a"]["image_uri"] is None  # synthetic data carries no images
    assert 0.0 <= q["probability"] <= 1.0


def test_next_pair_resumes_pending_query():
    _, _, client = make_client()
    first = client.get("/api/next-pair").json()
    second = client.get("/api/next-pair").json()
    assert first == second  # unanswered query is re-served, not redrawn


def test_next_pair_204_when_nothing_to_ask():
    # agreeing views leave both pools empty, so the batch is born exhausted
    _, _, client = make_client(CLEAN_SPEC, CLEAN_CONFIG)
    resp = client.get("/api/next-pair")
    assert resp.status_code == 204


def test_next_pair_204_after_budget_spent():
    emb, _, client = make_client(config=NOISY_CONFIG.updated(budget_fraction_per_cycle=0.005))
    answered = 0
    while True:
        resp = client.get("/api/next-pair")
        if resp.status_code == 204:
            break
        q = resp.json()
        client.post("/api/answer", json={"query_id": q["query_id"], "label": truth_label(emb, q)})
        answered += 1
    assert answered == 5  # floor(0.005 * 48*47/2)
    prog = client.get("/api/progress").json()
    assert prog["batch_used"] == prog["batch_budget"] == 5


# ------------------------------------------------------------------ answer


def test_answer_charges_budget_and_moves_on():
    emb, _, client = make_client()
    q = client.get("/api/next-pair").json()
    prog = client.post(
        "/api/answer", json={"query_id": q["query_id"], "label": truth_label(emb, q)}
    ).json()
    assert prog["batch_used"] == 1 and prog["answered"] == 1
    assert prog["outstanding"] == 0
    q2 = client.get("/api/next-pair").json()
    assert q2["query_id"] != q["query_id"]


def test_answer_unknown_query_404():
    _, _, client = make_client()
    resp = client.post("/api/answer", json={"query_id": "c9-q999", "label": "ml"})
    assert resp.status_code == 404


def test_answer_bad_label_400():
    _, _, client = make_client()
    q = client.get("/api/next-pair").json()
    resp = client.post("/api/answer", json={"query_id": q["query_id"], "label": "maybe"})
    assert resp.status_code == 400
    resp = client.post("/api/answer", json={"query_id": q["query_id"]})
    assert resp.status_code == 400
    resp = client.post("/api/answer", json={"label": "ml"})
    assert resp.status_code == 400


def test_answer_twice_409():
    emb, _, client = make_client()
    q = client.get("/api/next-pair").json()
    label = truth_label(emb, q)
    assert client.post("/api/answer", json={"query_id": q["query_id"], "label": label}).status_code == 200
    resp = client.post("/api/answer", json={"query_id": q["query_id"], "label": label})
    assert resp.status_code == 409
    assert "already resolved" in resp.json()["detail"]


def test_answer_flip_after_resolution_409():
    emb, _, client = make_client()
    q = client.get("/api/next-pair").json()
    label = truth_label(emb, q)
    client.post("/api/answer", json={"query_id": q["query_id"], "label": label})
    flipped = "cl" if label == "ml" else "ml"
    resp = client.post("/api/answer", json={"query_id": q["query_id"], "label": flipped})
    assert resp.status_code == 409
    assert "contradicts" in resp.json()["detail"]


def test_answer_conflicting_with_closure_409():
    emb, session, _ = make_client()
    payload = session.next_pair()
    pair = session.pending["pair"]
    # the relation becomes known out of band after the draw; a conflicting
    # human answer must be rejected, not stored
    session.state.store.add(Constraint(pair, CANNOT_LINK))
    with pytest.raises(HTTPException) as exc:
        session.answer(payload["query_id"], "ml")
    assert exc.value.status_code == 409


def test_skip_is_free_and_replaced():
    emb, _, client = make_client()
    q = client.get("/api/next-pair").json()
    prog = client.post("/api/answer", json={"query_id": q["query_id"], "label": "skip"}).json()
    assert prog["skipped"] == 1 and prog["batch_used"] == 0
    q2 = client.get("/api/next-pair").json()
    assert q2["query_id"] != q["query_id"]
    assert {q2["a"]["id"], q2["b"]["id"]} != {q["a"]["id"], q["b"]["id"]}


# ----------------------------------------------------------------- advance


def test_advance_with_pending_423():
    _, _, client = make_client()
    client.get("/api/next-pair")
    resp = client.post("/api/advance")
    assert resp.status_code == 423
    assert "outstanding" in resp.json()["detail"]


def test_advance_cycles_to_done():
    _, _, client = make_client(CLEAN_SPEC, CLEAN_CONFIG)
    prog = client.post("/api/advance").json()
    assert prog["cycle"] == 1 and prog["done"] is False
    assert len(prog["history"]) == 1
    prog = client.post("/api/advance").json()
    assert prog["done"] is True
    assert len(prog["history"]) == 2
    assert all("queries" not in rec for rec in prog["history"])
    # a finished session keeps answering politely
    assert client.get("/api/next-pair").status_code == 204
    again = client.post("/api/advance").json()
    assert again["done"] is True
    info = client.get("/api/session").json()
    assert info["pool_os_size"] == 0 and info["pool_us_size"] == 0


def test_progress_fields():
    _, _, client = make_client()
    prog = client.get("/api/progress").json()
    assert set(prog) == {
        "cycle",
        "num_cycles",
        "budget_allotted",
        "budget_used",
        "batch_budget",
        "batch_used",
        "answered",
        "skipped",
        "outstanding",
        "done",
        "history",
    }
    assert prog["history"] == []


def test_progress_counts_outstanding():
    _, _, client = make_client()
    assert client.get("/api/progress").json()["outstanding"] == 0
    client.get("/api/next-pair")
    assert client.get("/api/progress").json()["outstanding"] == 1


# ------------------------------------------------------------ record/replay


def test_annotated_run_matches_in_process_loop(tmp_path):
    emb = generate_synthetic(NOISY_SPEC)
    run_loop(emb, NOISY_CONFIG, run_dir=tmp_path / "loop")

    emb2, session, client = make_client(run_dir=tmp_path / "service")
    prog = annotate_everything(emb2, client)
    assert prog["done"] is True

    names = sorted(os.listdir(tmp_path / "loop"))
    assert names == sorted(os.listdir(tmp_path / "service"))
    for name in names:
        a = os.path.join(tmp_path / "loop", name)
        b = os.path.join(tmp_path / "service", name)
        assert filecmp.cmp(a, b, shallow=False), name


def test_ground_truth_annotation_improves_partition():
    emb, session, client = make_client()
    annotate_everything(emb, client)
    history = client.get("/api/progress").json()["history"]
    assert history[0]["budget_used"] > 0
    assert history[-1]["ari"] > 0.8
    labels = session.state.current_partition.labels
    for pair in session.state.store.ml_pairs():
        assert labels[pair.a] == labels[pair.b]
    for pair in session.state.store.cl_pairs():
        assert labels[pair.a] != labels[pair.b]


# -------------------------------------------------------------------- misc


def test_root_serves_placeholder_without_bundle():
    _, _, client = make_client()
    resp = client.get("/")
    assert resp.status_code == 200
    assert "Annotation service is running" in resp.text


def test_root_serves_static_bundle(tmp_path):
    (tmp_path / "index.html").write_text("<html><body>custom ui</body></html>")
    emb = generate_synthetic(CLEAN_SPEC)
    session = AnnotationSession(emb, CLEAN_CONFIG)
    client = TestClient(create_app(session, static_dir=str(tmp_path)))
    resp = client.get("/")
    assert resp.status_code == 200
    assert "custom ui" in resp.text


def test_concurrent_annotators_stay_consistent():
    emb, session, client = make_client()
    ident = dict(zip(emb.ids, emb.identities))

    def worker(_):
        answered = 0
        while True:
            resp = client.get("/api/next-pair")
            if resp.status_code == 204:
                return answered
            q = resp.json()
            label = "ml" if ident[q["a"]["id"]] == ident[q["b"]["id"]] else "cl"
            resp = client.post("/api/answer", json={"query_id": q["query_id"], "label": label})
            if resp.status_code == 200:
                answered += 1
            # 409s are fine: another thread resolved the same pending query

    with ThreadPoolExecutor(max_workers=4) as pool:
        totals = list(pool.map(worker, range(4)))
    prog = client.get("/api/progress").json()
    assert sum(totals) == prog["batch_used"] == prog["answered"]
    assert prog["batch_used"] <= prog["batch_budget"]
    assert prog["outstanding"] == 0
