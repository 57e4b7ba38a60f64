import numpy as np
import pytest
from fastapi.testclient import TestClient

from occam.backend import write_dataset, write_embeddings
from occam.service import app
from occam.synthgen import SynthSpec, generate


@pytest.fixture(scope="module")
def client():
    with TestClient(app) as c:
        yield c


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    ds = generate(SynthSpec(n_samples=12, seed=51, height=48, width=48, correlation=0.5))
    manifest = write_dataset(ds, root)
    return root, manifest


def test_health(client):
    payload = client.get("/health").json()
    assert payload["status"] == "ok"


def test_synth_and_inspect_round_trip(client, tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    resp = client.post("/synth", json={"out_dir": str(out), "n_samples": 5, "seed": 1})
    assert resp.status_code == 200
    manifest = resp.json()["manifests"][0]
    resp = client.post("/datasets/inspect", json={"manifest": manifest})
    report = resp.json()["report"]
    assert report["n_samples"] == 5 and report["n_errors"] == 0
    assert all(s["n_masks"] >= 2 for s in report["samples"])  # object + background


def test_synth_counter_pair(client, tmp_path_factory):
    out = tmp_path_factory.mktemp("pair")
    resp = client.post(
        "/synth", json={"out_dir": str(out), "n_samples": 6, "seed": 2, "counter_pair": True}
    )
    manifests = resp.json()["manifests"]
    assert len(manifests) == 2 and "common" in manifests[0] and "counter" in manifests[1]


def test_inspect_embeddings(client, tmp_path, dataset_dir):
    _, manifest = dataset_dir
    path = tmp_path / "e.oce"
    write_embeddings(path, ["a/0", "a/full"], np.arange(6, dtype=np.float32).reshape(2, 3))
    resp = client.post(
        "/datasets/inspect",
        json={"manifest": str(manifest), "embeddings": [str(path)], "include_values": True},
    )
    entry = resp.json()["report"]["embeddings"][0]
    assert entry["count"] == 2 and entry["dim"] == 3
    assert entry["keys"] == ["a/0", "a/full"]
    assert entry["values"][1] == [3.0, 4.0, 5.0]


def test_discovery_gt_is_perfect(client, dataset_dir):
    _, manifest = dataset_dir
    resp = client.post("/eval/discovery", json={"manifest": str(manifest), "pred_source": "gt"})
    metrics = resp.json()["report"]["metrics"]
    assert metrics["fg_ari"] == 1.0 and metrics["mbo"] == 1.0


def test_discovery_shuffle_invariance(client, dataset_dir):
    _, manifest = dataset_dir
    base = client.post("/eval/discovery", json={"manifest": str(manifest)}).json()["report"]
    shuffled = client.post(
        "/eval/discovery", json={"manifest": str(manifest), "shuffle_seed": 99}
    ).json()["report"]
    assert base["metrics"] == shuffled["metrics"]


def test_foreground_gt_iou_is_perfect(client, dataset_dir):
    _, manifest = dataset_dir
    resp = client.post(
        "/eval/foreground",
        json={"manifest": str(manifest), "strategies": ["ground-truth-iou"]},
    )
    report = resp.json()["report"]
    assert report["strategies"]["ground-truth-iou"]["auroc"] == 1.0
    assert "roc_ground-truth-iou.csv" in resp.json()["tables"]


def test_foreground_single_candidate_degenerate_is_reported(client, tmp_path_factory):
    # No distractors: after filtering drops the background candidate, every
    # sample has exactly one (foreground) mask, so all records are positive
    # and AUROC is undefined for the benchmark construction.
    root = tmp_path_factory.mktemp("degenerate")
    ds = generate(SynthSpec(n_samples=4, seed=3, distractors=(0, 0), height=48, width=48))
    manifest = write_dataset(ds, root)
    resp = client.post(
        "/eval/foreground", json={"manifest": str(manifest), "strategies": ["class-aided"]}
    )
    assert resp.status_code == 200
    report = resp.json()["report"]
    entry = report["strategies"]["class-aided"]
    assert entry["auroc"] is None and "AUROC undefined" in entry["error"]
    assert report["n_errors"] >= 1


def test_bad_manifest_path_is_422(client):
    resp = client.post("/eval/discovery", json={"manifest": "/nonexistent/manifest.json"})
    assert resp.status_code == 422


def test_bad_strategy_is_422(client, dataset_dir):
    _, manifest = dataset_dir
    resp = client.post(
        "/eval/foreground", json={"manifest": str(manifest), "strategies": ["nonsense"]}
    )
    assert resp.status_code == 422


def test_classify_grid_rows(client, dataset_dir):
    _, manifest = dataset_dir
    resp = client.post(
        "/eval/classify",
        json={"manifest": str(manifest), "mask_models": ["none", "gt"], "threads": 2},
    )
    payload = resp.json()
    rows = payload["report"]["rows"]
    assert [r["mask_model"] for r in rows] == ["-", "gt"]
    assert rows[0]["mask_method"] == "-" and rows[1]["fg_detector"] == "class-aided"
    assert any(name.startswith("audit_") for name in payload["audits"])


def test_classify_audit_logs_unique_per_row(client, dataset_dir):
    # Both application modes produce a baseline row; audit files must not collide.
    _, manifest = dataset_dir
    resp = client.post(
        "/eval/classify",
        json={
            "manifest": str(manifest),
            "mask_models": ["none", "gt"],
            "mask_methods": ["gray-crop", "alpha"],
        },
    )
    payload = resp.json()
    rows = payload["report"]["rows"]
    assert len(rows) == 4
    names = [r["audit_log"] for r in rows]
    assert len(set(names)) == 4
    assert set(names) == set(payload["audits"])
