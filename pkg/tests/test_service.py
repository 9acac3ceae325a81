"""Service layer: the durable record log, the model registry, and the HTTP API.

Store tests exercise crash recovery directly on the files; HTTP tests go
through fastapi's TestClient against an app rooted in a temp directory,
with the bundled scenario packs available for live acquisitions.
"""

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone

import pytest
from fastapi.testclient import TestClient

from etongue.ions import IonComposition
from etongue.records import content_hash
from etongue.sensor import Scenario
from etongue.service import DuplicateRecordError, ModelRegistry, RecordStore, create_app
from etongue.simulate import simulate_acquisition
from etongue.records import record_to_document

from .conftest import make_adc, make_array

T0 = datetime(2024, 6, 1, 8, 0, 0, tzinfo=timezone.utc)

# Two easily separable water classes for training through the API. Short
# acquisitions (5 s + 10 s at 2 Hz -> 30 frames) keep the HTTP tests quick.
SPRING = {"Na+": 30.0, "K+": 8.0, "Cl-": 50.0}
BRINE = {"Na+": 900.0, "K+": 35.0, "Cl-": 1400.0}


def class_scenario(name, seed, sample, baseline_s=5.0, sample_s=10.0):
    return Scenario(
        name=name,
        baseline_composition=IonComposition({"Na+": 10.0, "K+": 4.0, "Cl-": 18.0}),
        sample_composition=IonComposition(sample),
        baseline_duration=baseline_s,
        sample_duration=sample_s,
        rng_seed=seed,
    )


def sim_doc(label, seed, sample=None, device_id="sim-0", **scenario_kw):
    # label "" produces an unlabeled record; the scenario still needs a name
    scen = class_scenario(label or "unlabeled", seed, sample or SPRING, **scenario_kw)
    rec = simulate_acquisition(
        make_array(), make_adc(), scen, device_id=device_id, label=label, started_at=T0
    )
    return record_to_document(rec)


def wait_until(fetch, timeout=90.0, interval=0.02):
    """Poll fetch() until it returns non-None; background jobs share one core."""
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        value = fetch()
        if value is not None:
            return value
        time.sleep(interval)
    raise AssertionError("timed out waiting for background work")


def wait_model(client, model_id):
    def fetch():
        body = client.get(f"/v1/models/{model_id}").json()
        return body if body["status"] != "training" else None

    body = wait_until(fetch)
    assert body["status"] == "ready", body.get("error")
    return body


def wait_acquisition(client, acquisition_id, until=("complete", "stopped", "failed")):
    def fetch():
        body = client.get(f"/v1/acquisitions/{acquisition_id}").json()
        return body if body["state"] in until else None

    return wait_until(fetch)


# ---------------------------------------------------------------------------
# record log


class TestRecordLog:
    def test_append_and_get(self, tmp_path):
        store = RecordStore(tmp_path)
        doc = sim_doc("spring", seed=1)
        stored, created = store.append(doc)
        assert created is True
        assert stored.record_id == doc["record_id"]
        assert stored.content_hash == content_hash(doc)
        assert stored.label == "spring"
        assert stored.device_id == "sim-0"
        assert store.get(doc["record_id"]).document == doc
        assert len(store) == 1

    def test_identical_resubmission_is_acknowledged_not_rewritten(self, tmp_path):
        store = RecordStore(tmp_path)
        doc = sim_doc("spring", seed=1)
        first, _ = store.append(doc)
        size_after_first = (tmp_path / "records.jsonl").stat().st_size
        again, created = store.append(json.loads(json.dumps(doc)))
        assert created is False
        assert again is first  # the original entry, not a copy
        assert (tmp_path / "records.jsonl").stat().st_size == size_after_first
        assert len(store) == 1

    def test_same_id_different_content_is_rejected(self, tmp_path):
        store = RecordStore(tmp_path)
        doc = sim_doc("spring", seed=1)
        store.append(doc)
        altered = dict(doc, label="brine")
        with pytest.raises(DuplicateRecordError) as err:
            store.append(altered)
        assert err.value.record_id == doc["record_id"]
        assert len(store) == 1
        assert store.get(doc["record_id"]).label == "spring"

    def test_receipt_order_and_filters(self, tmp_path):
        store = RecordStore(tmp_path)
        a = sim_doc("spring", seed=1)
        b = sim_doc("brine", seed=2, sample=BRINE, device_id="edge-7")
        c = sim_doc("spring", seed=3)
        for doc in (a, b, c):
            store.append(doc)
        ids = [r.record_id for r in store.records()]
        assert ids == [a["record_id"], b["record_id"], c["record_id"]]
        assert [r.record_id for r in store.records(label="spring")] == [
            a["record_id"],
            c["record_id"],
        ]
        assert [r.record_id for r in store.records(device="edge-7")] == [b["record_id"]]
        cutoff = store.get(b["record_id"]).received_at
        assert [r.record_id for r in store.records(since=cutoff)] == [
            b["record_id"],
            c["record_id"],
        ]

    def test_reopen_preserves_entries_and_hashes(self, tmp_path):
        store = RecordStore(tmp_path)
        doc = sim_doc("spring", seed=1)
        original, _ = store.append(doc)
        store.close()

        reopened = RecordStore(tmp_path)
        entry = reopened.get(doc["record_id"])
        assert entry.document == doc
        assert entry.content_hash == original.content_hash
        assert entry.received_at == original.received_at


class TestLogRecovery:
    def test_torn_tail_is_truncated(self, tmp_path):
        store = RecordStore(tmp_path)
        a, b = sim_doc("spring", seed=1), sim_doc("brine", seed=2, sample=BRINE)
        store.append(a)
        store.append(b)
        store.close()
        path = tmp_path / "records.jsonl"
        good_size = path.stat().st_size
        with open(path, "ab") as f:
            f.write(b'{"record_id":"r-torn","received')  # crash mid-write, no newline

        recovered = RecordStore(tmp_path)
        assert len(recovered) == 2
        assert path.stat().st_size == good_size
        # the log is append-ready again
        c = sim_doc("spring", seed=3)
        recovered.append(c)
        recovered.close()
        assert len(RecordStore(tmp_path)) == 3

    def test_corrupt_line_stops_replay(self, tmp_path):
        store = RecordStore(tmp_path)
        a = sim_doc("spring", seed=1)
        store.append(a)
        store.close()
        path = tmp_path / "records.jsonl"
        good_size = path.stat().st_size
        with open(path, "ab") as f:
            # newline-terminated but unparseable, then a structurally valid line
            f.write(b"{ not json }\n")
            f.write(b'{"record_id":"r-after","received_at":"2024-06-01T00:00:00+00:00",'
                    b'"content_hash":"x","record":{}}\n')

        recovered = RecordStore(tmp_path)
        assert len(recovered) == 1
        assert recovered.get(a["record_id"]) is not None
        assert recovered.get("r-after") is None
        assert path.stat().st_size == good_size

    def test_fresh_directory_starts_empty(self, tmp_path):
        store = RecordStore(tmp_path / "new" / "nested")
        assert len(store) == 0
        assert store.records() == []


class TestModelRegistry:
    DOC = {"format": "etongue-forest", "version": 1, "trees": []}

    def test_begin_finish_roundtrip(self, tmp_path):
        reg = ModelRegistry(tmp_path)
        entry = reg.begin("m-1", {"classes": ["a", "b"]})
        assert entry.status == "training"
        reg.finish("m-1", {"classes": ["a", "b"], "extra": 1}, self.DOC)
        entry = reg.get("m-1")
        assert entry.status == "ready"
        assert entry.descriptor["extra"] == 1
        assert entry.document == self.DOC
        payload = json.loads((tmp_path / "m-1.json").read_text())
        assert set(payload) == {"model_id", "descriptor", "model"}

    def test_begin_is_idempotent(self, tmp_path):
        reg = ModelRegistry(tmp_path)
        first = reg.begin("m-1", {"n": 1})
        again = reg.begin("m-1", {"n": 2})
        assert again is first
        assert again.descriptor == {"n": 1}

    def test_fail_records_error(self, tmp_path):
        reg = ModelRegistry(tmp_path)
        reg.begin("m-1", {})
        reg.fail("m-1", "boom")
        entry = reg.get("m-1")
        assert entry.status == "failed"
        assert entry.error == "boom"
        assert not (tmp_path / "m-1.json").exists()

    def test_reload_sees_finished_models_only(self, tmp_path):
        reg = ModelRegistry(tmp_path)
        reg.begin("m-done", {"k": 1})
        reg.finish("m-done", {"k": 1}, self.DOC)
        reg.begin("m-inflight", {})  # never finished, in memory only

        reloaded = ModelRegistry(tmp_path)
        assert reloaded.get("m-done").status == "ready"
        assert reloaded.get("m-done").document == self.DOC
        assert reloaded.get("m-inflight") is None

    def test_reload_ignores_corrupt_strays(self, tmp_path):
        reg = ModelRegistry(tmp_path)
        reg.begin("m-good", {"k": 1})
        reg.finish("m-good", {"k": 1}, self.DOC)
        (tmp_path / "stray.json").write_text("not a model")
        (tmp_path / "half.json").write_text('{"model_id": "half"}')  # missing keys

        reloaded = ModelRegistry(tmp_path)
        ids = sorted(e.model_id for e in reloaded.entries())
        assert ids == ["m-good"]


# ---------------------------------------------------------------------------
# HTTP: ingest and listing


@pytest.fixture
def client(tmp_path):
    with TestClient(create_app(data_dir=tmp_path / "data")) as c:
        yield c


class TestIngest:
    def test_create_then_duplicate(self, client):
        doc = sim_doc("spring", seed=1)
        r = client.post("/v1/measurements", json=doc)
        assert r.status_code == 201
        assert r.json() == {"record_id": doc["record_id"], "created": True}

        r2 = client.post("/v1/measurements", json=doc)
        assert r2.status_code == 200
        assert r2.json() == {"record_id": doc["record_id"], "created": False}

    def test_key_order_does_not_defeat_deduplication(self, client):
        doc = sim_doc("spring", seed=1)
        assert client.post("/v1/measurements", json=doc).status_code == 201
        reordered = dict(reversed(list(doc.items())))
        assert client.post("/v1/measurements", json=reordered).status_code == 200

    def test_same_id_different_content_conflicts(self, client):
        doc = sim_doc("spring", seed=1)
        client.post("/v1/measurements", json=doc)
        r = client.post("/v1/measurements", json=dict(doc, label="brine"))
        assert r.status_code == 409
        body = r.json()
        assert body["error"] == "conflict"
        assert body["record_id"] == doc["record_id"]

    def test_structural_error_names_the_field_path(self, client):
        doc = sim_doc("spring", seed=1)
        doc["frames"][1] = dict(doc["frames"][1], codes=[0, 0])  # only two channels
        r = client.post("/v1/measurements", json=doc)
        assert r.status_code == 400
        body = r.json()
        assert body["error"] == "validation"
        assert body["field"] == "frames.1.codes"

    def test_semantic_error_names_the_field(self, client):
        doc = sim_doc("spring", seed=1)
        doc["immersion_index"] = len(doc["frames"])  # structurally fine, out of range
        r = client.post("/v1/measurements", json=doc)
        assert r.status_code == 400
        assert r.json()["field"] == "immersion_index"

    def test_missing_required_field(self, client):
        doc = sim_doc("spring", seed=1)
        del doc["record_id"]
        r = client.post("/v1/measurements", json=doc)
        assert r.status_code == 400
        assert r.json()["field"] == "record_id"

    def test_get_measurement_round_trip(self, client):
        doc = sim_doc("spring", seed=1)
        client.post("/v1/measurements", json=doc)
        r = client.get(f"/v1/measurements/{doc['record_id']}")
        assert r.status_code == 200
        body = r.json()
        assert body["record"] == doc
        assert body["content_hash"] == content_hash(doc)
        assert "received_at" in body

    def test_get_unknown_measurement(self, client):
        r = client.get("/v1/measurements/nope")
        assert r.status_code == 404
        assert r.json()["error"] == "not_found"


class TestMeasurementListing:
    @pytest.fixture
    def filled(self, client):
        docs = [sim_doc("spring" if i % 2 else "brine", seed=100 + i) for i in range(25)]
        for doc in docs:
            assert client.post("/v1/measurements", json=doc).status_code == 201
        return client, docs

    def test_pagination_walks_the_store_in_order(self, filled):
        client, docs = filled
        seen, token = [], None
        sizes = []
        while True:
            params = {"page_size": 10}
            if token:
                params["page_token"] = token
            body = client.get("/v1/measurements", params=params).json()
            assert body["total"] == 25
            sizes.append(len(body["measurements"]))
            seen += [m["record_id"] for m in body["measurements"]]
            token = body.get("next_page_token")
            if token is None:
                break
        assert sizes == [10, 10, 5]
        assert seen == [d["record_id"] for d in docs]

    def test_listing_entry_shape(self, filled):
        client, docs = filled
        entry = client.get("/v1/measurements", params={"page_size": 1}).json()["measurements"][0]
        assert entry["record_id"] == docs[0]["record_id"]
        assert entry["device_id"] == "sim-0"
        assert entry["label"] == docs[0]["label"]
        assert entry["n_frames"] == 30
        assert entry["started_at"].endswith("Z")
        assert entry["content_hash"] == content_hash(docs[0])

    def test_label_filter(self, filled):
        client, docs = filled
        body = client.get("/v1/measurements", params={"label": "brine", "page_size": 500}).json()
        assert body["total"] == 13
        assert all(m["label"] == "brine" for m in body["measurements"])

    def test_since_filter_accepts_naive_timestamps_as_utc(self, filled):
        client, _ = filled
        body = client.get("/v1/measurements", params={"since": "2030-01-01T00:00:00"}).json()
        assert body["total"] == 0
        body = client.get("/v1/measurements", params={"since": "2000-01-01T00:00:00Z"}).json()
        assert body["total"] == 25

    def test_malformed_page_token(self, filled):
        client, _ = filled
        r = client.get("/v1/measurements", params={"page_token": "abc"})
        assert r.status_code == 400
        assert r.json()["field"] == "page_token"

    def test_malformed_since(self, client):
        r = client.get("/v1/measurements", params={"since": "not-a-date"})
        assert r.status_code == 400
        assert r.json()["field"] == "since"

    def test_page_size_bounds(self, client):
        r = client.get("/v1/measurements", params={"page_size": 0})
        assert r.status_code == 400
        assert r.json()["field"] == "page_size"


# ---------------------------------------------------------------------------
# HTTP: training and inference

TRAIN_BODY = {"hyperparams": {"n_trees": 15}, "seed": 3}


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """A service with 3 spring + 3 brine records and one finished model."""
    data_dir = tmp_path_factory.mktemp("svc")
    client = TestClient(create_app(data_dir=data_dir))
    docs = [sim_doc("spring", seed=s) for s in (1, 2, 3)]
    docs += [sim_doc("brine", seed=s, sample=BRINE) for s in (4, 5, 6)]
    for doc in docs:
        assert client.post("/v1/measurements", json=doc).status_code == 201
    r = client.post("/v1/models:train", json=TRAIN_BODY)
    assert r.status_code == 202
    started = r.json()
    assert started["status"] == "training"
    descriptor = wait_model(client, started["model_id"])
    return client, started["model_id"], descriptor, docs, data_dir


class TestTraining:
    def test_descriptor_contents(self, trained):
        _, model_id, desc, docs, _ = trained
        assert model_id.startswith("m-")
        assert desc["classes"] == ["brine", "spring"]
        assert desc["n_records"] == 6
        assert desc["n_features"] == 60  # 3 channels x 20 sampling frames
        assert sorted(desc["record_ids"]) == sorted(d["record_id"] for d in docs)
        assert desc["hyperparams"]["n_trees"] == 15
        assert desc["hyperparams"]["seed"] == 3
        assert desc["train_seconds"] >= 0.0

    def test_loocv_summary(self, trained):
        _, _, desc, _, _ = trained
        cv = desc["loocv"]
        # noise-free replicates are identical per class, so every fold lands
        assert cv["accuracy"] == 1.0
        assert cv["accuracy_exact"] == "1/1"
        assert cv["confusion"]["classes"] == ["brine", "spring"]
        counts = cv["confusion"]["counts"]
        assert counts[0][0] + counts[1][1] == 6
        assert cv["confusion"]["columns"] == "true"

    def test_top_features_are_ranked(self, trained):
        _, _, desc, _, _ = trained
        top = desc["top_features"]
        assert 0 < len(top) <= 10
        weights = [t["weight"] for t in top]
        assert weights == sorted(weights, reverse=True)
        assert all(0 <= t["index"] < 60 for t in top)

    def test_resubmitting_the_same_request_reuses_the_model(self, trained):
        client, model_id, _, _, _ = trained
        r = client.post("/v1/models:train", json=TRAIN_BODY)
        assert r.status_code == 202
        assert r.json() == {"model_id": model_id, "status": "ready"}

    def test_different_seed_is_a_different_model(self, trained):
        client, model_id, _, _, _ = trained
        r = client.post("/v1/models:train", json={"hyperparams": {"n_trees": 15}, "seed": 4})
        other = r.json()["model_id"]
        assert other != model_id
        wait_model(client, other)

    def test_model_listing_includes_ready_models(self, trained):
        client, model_id, _, _, _ = trained
        models = client.get("/v1/models").json()["models"]
        assert model_id in [m["model_id"] for m in models]

    def test_unknown_model_404(self, trained):
        client = trained[0]
        assert client.get("/v1/models/m-missing").status_code == 404

    def test_single_class_dataset_is_rejected_with_offenders(self, client):
        docs = [sim_doc("spring", seed=s) for s in (1, 2)]
        for doc in docs:
            client.post("/v1/measurements", json=doc)
        r = client.post("/v1/models:train", json=TRAIN_BODY)
        assert r.status_code == 422
        body = r.json()
        assert body["error"] == "dataset"
        assert isinstance(body["record_ids"], list)

    def test_no_labeled_records_is_rejected(self, client):
        r = client.post("/v1/models:train", json=TRAIN_BODY)
        assert r.status_code == 422
        assert r.json()["error"] == "dataset"

    def test_feature_length_mismatch_names_the_offending_record(self, client):
        for s in (1, 2):
            client.post("/v1/measurements", json=sim_doc("spring", seed=s))
        for s in (3, 4):
            client.post("/v1/measurements", json=sim_doc("brine", seed=s, sample=BRINE))
        odd = sim_doc("brine", seed=9, sample=BRINE, sample_s=20.0)  # 120 features
        client.post("/v1/measurements", json=odd)
        r = client.post("/v1/models:train", json=TRAIN_BODY)
        assert r.status_code == 422
        assert odd["record_id"] in r.json()["record_ids"]

    def test_label_filter_restricts_the_training_set(self, client):
        for s in (1, 2):
            client.post("/v1/measurements", json=sim_doc("spring", seed=s))
        for s in (3, 4):
            client.post("/v1/measurements", json=sim_doc("brine", seed=s, sample=BRINE))
        client.post("/v1/measurements", json=sim_doc("other", seed=9, sample_s=20.0))
        body = {"label_filter": ["spring", "brine"], **TRAIN_BODY}
        r = client.post("/v1/models:train", json=body)
        assert r.status_code == 202  # the odd-length record is filtered out
        desc = wait_model(client, r.json()["model_id"])
        assert desc["n_records"] == 4
        assert desc["label_filter"] == ["spring", "brine"]

    def test_degenerate_loocv_does_not_block_training(self, client):
        # two classes but one has a single record: the model trains, the
        # cross-validation result is replaced by an explanation
        for s in (1, 2):
            client.post("/v1/measurements", json=sim_doc("spring", seed=s))
        client.post("/v1/measurements", json=sim_doc("brine", seed=3, sample=BRINE))
        r = client.post("/v1/models:train", json=TRAIN_BODY)
        assert r.status_code == 202
        desc = wait_model(client, r.json()["model_id"])
        assert desc["status"] == "ready"
        assert set(desc["loocv"]) == {"error"}


class TestInference:
    def test_infer_stored_record(self, trained):
        client, model_id, _, docs, _ = trained
        rid = docs[0]["record_id"]  # a spring replicate
        r = client.post(f"/v1/models/{model_id}:infer", json={"record_id": rid})
        assert r.status_code == 200
        body = r.json()
        assert body["model_id"] == model_id
        assert body["record_id"] == rid
        assert body["top_class"] == "spring"
        assert set(body["likelihoods"]) == {"spring", "brine"}
        assert body["confidence"] == pytest.approx(max(body["likelihoods"].values()))
        assert abs(sum(body["likelihoods"].values()) - 1.0) < 1e-12
        assert body["latency_ms"] >= 0.0

    def test_similarities_cover_the_training_set(self, trained):
        client, model_id, _, docs, _ = trained
        r = client.post(
            f"/v1/models/{model_id}:infer", json={"record_id": docs[3]["record_id"]}
        )
        sims = r.json()["similarities"]
        assert len(sims) == 6
        assert sorted(s["record_id"] for s in sims) == sorted(d["record_id"] for d in docs)
        assert all(0.0 <= s["proximity"] <= 1.0 for s in sims)
        # a brine query resembles the brine replicates, not the spring ones
        by_label = {lab: [s["proximity"] for s in sims if s["label"] == lab]
                    for lab in ("spring", "brine")}
        assert min(by_label["brine"]) > max(by_label["spring"])

    def test_infer_inline_record_is_read_only(self, trained):
        client, model_id, _, _, _ = trained
        fresh = sim_doc("", seed=50, sample=BRINE)  # unlabeled, never ingested
        before = client.get("/v1/measurements").json()["total"]
        r = client.post(f"/v1/models/{model_id}:infer", json={"record": fresh})
        assert r.status_code == 200
        assert r.json()["top_class"] == "brine"
        assert client.get("/v1/measurements").json()["total"] == before
        assert client.get(f"/v1/measurements/{fresh['record_id']}").status_code == 404

    def test_exactly_one_input_source(self, trained):
        client, model_id, _, docs, _ = trained
        doc = sim_doc("", seed=51)
        both = {"record_id": docs[0]["record_id"], "record": doc}
        assert client.post(f"/v1/models/{model_id}:infer", json=both).status_code == 400
        assert client.post(f"/v1/models/{model_id}:infer", json={}).status_code == 400

    def test_unknown_record_404(self, trained):
        client, model_id, _, _, _ = trained
        r = client.post(f"/v1/models/{model_id}:infer", json={"record_id": "r-none"})
        assert r.status_code == 404

    def test_unknown_model_404(self, trained):
        client, _, _, docs, _ = trained
        r = client.post("/v1/models/m-none:infer", json={"record_id": docs[0]["record_id"]})
        assert r.status_code == 404

    def test_model_still_training_conflicts(self, trained, tmp_path):
        _, _, _, docs, _ = trained
        app = create_app(data_dir=tmp_path / "d")
        app.state.registry.begin("m-pending", {})
        with TestClient(app) as c:
            doc = sim_doc("spring", seed=1)
            c.post("/v1/measurements", json=doc)
            r = c.post("/v1/models/m-pending:infer", json={"record_id": doc["record_id"]})
            assert r.status_code == 409
            assert "training" in r.json()["message"]

    def test_feature_length_mismatch_is_a_dataset_error(self, trained):
        client, model_id, _, _, _ = trained
        long_doc = sim_doc("", seed=52, sample_s=20.0)  # 120 features vs 60
        r = client.post(f"/v1/models/{model_id}:infer", json={"record": long_doc})
        assert r.status_code == 422
        body = r.json()
        assert body["error"] == "dataset"
        assert body["record_ids"] == [long_doc["record_id"]]

    def test_invalid_inline_record_is_a_validation_error(self, trained):
        client, model_id, _, _, _ = trained
        doc = sim_doc("", seed=53)
        doc["immersion_index"] = len(doc["frames"])
        r = client.post(f"/v1/models/{model_id}:infer", json={"record": doc})
        assert r.status_code == 400
        assert r.json()["field"] == "immersion_index"


class TestRestartDurability:
    def test_records_and_models_survive_a_new_process(self, trained):
        _, model_id, desc, docs, data_dir = trained
        with TestClient(create_app(data_dir=data_dir)) as fresh:
            assert fresh.get("/v1/measurements").json()["total"] >= len(docs)
            body = fresh.get(f"/v1/models/{model_id}").json()
            assert body["status"] == "ready"
            assert body["loocv"] == desc["loocv"]
            r = fresh.post(
                f"/v1/models/{model_id}:infer", json={"record_id": docs[0]["record_id"]}
            )
            assert r.status_code == 200
            assert r.json()["top_class"] == "spring"


class TestConcurrentIngest:
    def test_distinct_records_all_land(self, client):
        docs = [sim_doc("spring", seed=200 + i) for i in range(20)]
        with ThreadPoolExecutor(max_workers=8) as pool:
            codes = list(pool.map(
                lambda d: client.post("/v1/measurements", json=d).status_code, docs
            ))
        assert codes == [201] * 20
        assert client.get("/v1/measurements").json()["total"] == 20

    def test_racing_duplicates_create_exactly_one(self, client):
        doc = sim_doc("spring", seed=300)
        barrier = threading.Barrier(8)

        def submit(_):
            barrier.wait()
            return client.post("/v1/measurements", json=doc).status_code

        with ThreadPoolExecutor(max_workers=8) as pool:
            codes = list(pool.map(submit, range(8)))
        assert sorted(codes) == [200] * 7 + [201]
        assert client.get("/v1/measurements").json()["total"] == 1


# ---------------------------------------------------------------------------
# HTTP: scenarios, live acquisitions, event stream


@pytest.fixture(scope="module")
def acq_client(tmp_path_factory):
    with TestClient(create_app(data_dir=tmp_path_factory.mktemp("acq"))) as c:
        yield c


class TestScenarioCatalog:
    def test_bundled_packs_are_listed(self, acq_client):
        scenarios = acq_client.get("/v1/scenarios").json()["scenarios"]
        by_pack = {}
        for s in scenarios:
            by_pack.setdefault(s["pack"], []).append(s["name"])
        assert sorted(by_pack["beverages"]) == ["beverage-a", "beverage-b", "beverage-c"]
        assert sorted(by_pack["mineral_waters"]) == [
            "water-i", "water-ii", "water-iii", "water-iv",
        ]
        entry = next(s for s in scenarios if s["name"] == "beverage-a")
        assert entry["baseline_s"] == 20.0
        assert entry["sample_s"] == 60.0
        assert entry["replicates"] == 7
        assert entry["label"] == "beverage-a"


class TestLiveAcquisition:
    def start(self, client, **overrides):
        body = {"scenario": "beverage-a", "seed": 11, "label": "beverage-a",
                "time_scale": 0.0}
        body.update(overrides)
        r = client.post("/v1/acquisitions", json=body)
        assert r.status_code == 201, r.text
        return r.json()

    def test_runs_to_completion_and_stores_the_record(self, acq_client):
        started = self.start(acq_client)
        assert started["acquisition_id"].startswith("a-")
        assert started["scenario"] == "beverage-a"
        final = wait_acquisition(acq_client, started["acquisition_id"])
        assert final["state"] == "complete"
        assert final["error"] is None
        assert final["n_frames"] == 160
        stored = acq_client.get(f"/v1/measurements/{started['record_id']}")
        assert stored.status_code == 200
        rec = stored.json()["record"]
        assert rec["label"] == "beverage-a"
        assert len(rec["frames"]) == 160
        assert rec["immersion_index"] == 40

    def test_seeded_reacquisition_is_flagged_not_duplicated(self, acq_client):
        # same seed reproduces the record id; the content differs by start
        # time, so the store refuses it instead of quietly forking history
        first = self.start(acq_client, seed=17, scenario="beverage-b", label="beverage-b")
        assert wait_acquisition(acq_client, first["acquisition_id"])["state"] == "complete"
        second = self.start(acq_client, seed=17, scenario="beverage-b", label="beverage-b")
        assert second["record_id"] == first["record_id"]
        final = wait_acquisition(acq_client, second["acquisition_id"])
        assert final["state"] == "failed"
        assert "already stored" in final["error"]

    def test_unknown_scenario_404(self, acq_client):
        r = acq_client.post("/v1/acquisitions", json={"scenario": "espresso"})
        assert r.status_code == 404

    def test_unknown_pack_404(self, acq_client):
        r = acq_client.post(
            "/v1/acquisitions", json={"scenario": "beverage-a", "pack": "nope"}
        )
        assert r.status_code == 404

    def test_unknown_acquisition_404(self, acq_client):
        assert acq_client.get("/v1/acquisitions/a-none").status_code == 404

    def test_stop_discards_the_partial_record(self, acq_client):
        started = self.start(acq_client, seed=23, time_scale=0.05)
        r = acq_client.delete(f"/v1/acquisitions/{started['acquisition_id']}")
        assert r.status_code == 202
        assert r.json()["state"] == "stopping"
        final = wait_acquisition(acq_client, started["acquisition_id"])
        assert final["state"] == "stopped"
        assert final["error"] is None
        assert acq_client.get(f"/v1/measurements/{started['record_id']}").status_code == 404
        # a second stop has nothing to act on
        again = acq_client.delete(f"/v1/acquisitions/{started['acquisition_id']}")
        assert again.status_code == 409

    def test_stop_after_completion_conflicts(self, acq_client):
        started = self.start(acq_client, seed=29, scenario="beverage-c", label="beverage-c")
        wait_acquisition(acq_client, started["acquisition_id"])
        r = acq_client.delete(f"/v1/acquisitions/{started['acquisition_id']}")
        assert r.status_code == 409
        assert "complete" in r.json()["message"]

    def test_acquire_train_classify_cycle(self, acq_client):
        # acquire two labeled references, train on just those labels, then
        # acquire again with the model attached and read the classification
        # off the session
        for scenario, label, seed in (("beverage-a", "cycle-a", 37), ("beverage-b", "cycle-b", 38)):
            started = self.start(acq_client, scenario=scenario, label=label, seed=seed)
            assert wait_acquisition(acq_client, started["acquisition_id"])["state"] == "complete"

        body = {"label_filter": ["cycle-a", "cycle-b"],
                "hyperparams": {"n_trees": 9}, "seed": 1}
        r = acq_client.post("/v1/models:train", json=body)
        assert r.status_code == 202, r.text
        model_id = r.json()["model_id"]
        desc = wait_model(acq_client, model_id)
        assert desc["n_records"] == 2
        assert desc["n_features"] == 360
        assert "error" in desc["loocv"]  # one record per class

        started = self.start(acq_client, seed=31, model_id=model_id, label=None)
        final = wait_acquisition(acq_client, started["acquisition_id"])
        assert final["state"] == "complete", final["error"]
        result = final["result"]
        assert result["model_id"] == model_id
        assert result["record_id"] == started["record_id"]
        assert result["top_class"] in ("cycle-a", "cycle-b")
        assert set(result["likelihoods"]) == {"cycle-a", "cycle-b"}


@pytest.fixture(scope="module")
def finished(acq_client):
    body = {"scenario": "water-i", "seed": 41, "label": "water-i", "time_scale": 0.0}
    started = acq_client.post("/v1/acquisitions", json=body).json()
    final = wait_acquisition(acq_client, started["acquisition_id"])
    assert final["state"] == "complete"
    return started


class TestEventStream:
    def read_events(self, client, acquisition_id, from_seq=0):
        events = []
        with client.stream(
            "GET", "/v1/stream",
            params={"acquisition": acquisition_id, "from_seq": from_seq},
        ) as r:
            assert r.status_code == 200
            assert r.headers["content-type"].startswith("text/event-stream")
            text = "".join(r.iter_text())
        for block in text.strip().split("\n\n"):
            event = {}
            for line in block.splitlines():
                key, _, value = line.partition(": ")
                event[key] = value
            event["data"] = json.loads(event["data"])
            events.append(event)
        return events

    def test_replay_covers_every_frame_then_ends(self, acq_client, finished):
        events = self.read_events(acq_client, finished["acquisition_id"])
        *frames, end = events
        assert len(frames) == 160
        assert [int(e["id"]) for e in frames] == list(range(160))
        seqs = [e["data"]["frame"]["seq"] for e in frames]
        assert seqs == list(range(160))
        assert all(e["data"]["record_id"] == finished["record_id"] for e in frames)
        assert len(frames[0]["data"]["frame"]["mv"]) == 3
        assert end["event"] == "end"
        assert end["data"]["state"] == "complete"

    def test_phase_flips_at_immersion(self, acq_client, finished):
        events = self.read_events(acq_client, finished["acquisition_id"])
        phases = [e["data"]["phase"] for e in events[:-1]]
        assert phases[:40] == ["baseline"] * 40
        assert phases[40:] == ["sampling"] * 120

    def test_resume_from_sequence_number(self, acq_client, finished):
        events = self.read_events(acq_client, finished["acquisition_id"], from_seq=155)
        *frames, end = events
        assert [int(e["id"]) for e in frames] == [155, 156, 157, 158, 159]
        assert end["event"] == "end"

    def test_stream_unknown_acquisition_404(self, acq_client):
        r = acq_client.get("/v1/stream", params={"acquisition": "a-none"})
        assert r.status_code == 404
