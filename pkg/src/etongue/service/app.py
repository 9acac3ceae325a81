"""HTTP service wiring.

Train requests are validated synchronously (so schema and dataset
problems come back as request errors), then fitted in a background
thread; the returned model id is pollable immediately. The model id is
derived from a fingerprint of the training inputs, which makes training
idempotent: resubmitting the same data and hyperparameters converges on
the same model instead of piling up duplicates.

Live acquisitions run the edge agent in a thread against the simulated
source and publish each decoded frame to an in-process session buffer;
/v1/stream replays that buffer as server-sent events, so a client that
reconnects with from_seq resumes exactly where it dropped off.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse

from .. import edge
from ..forest import (
    DatasetError,
    Hyperparams,
    feature_importance,
    loocv,
    model_from_document,
    model_to_document,
    predict_proba,
    similarity_to_training,
    train,
)
from ..forest.api import _check_trainable, _dataset_fingerprint, assemble_dataset
from ..packio import Pack, _jittered_array, builtin_pack_dir, builtin_pack_names, load_pack
from ..preprocess import FeatureVector, preprocess
from ..records import (
    RecordValidationError,
    record_from_document,
    record_to_document,
)
from ..sensor import dequantize
from .schemas import (
    AcquisitionRequest,
    InferRequest,
    MeasurementIn,
    TrainRequest,
)
from .store import DuplicateRecordError, ModelRegistry, RecordStore

DEFAULT_DATA_DIR = "etongue-data"
DATA_DIR_ENV = "ETONGUE_DATA_DIR"

_TERMINAL_STATES = ("complete", "stopped", "failed")


def _error(status: int, kind: str, message: str, **extra: Any) -> HTTPException:
    return HTTPException(status, detail={"error": kind, "message": message, **extra})


class AcquisitionSession:
    """One live acquisition: frame buffer, phase state, and final outcome."""

    def __init__(self, acquisition_id: str, record_id: str, scenario_name: str, n_baseline: int):
        self.id = acquisition_id
        self.record_id = record_id
        self.scenario_name = scenario_name
        self.n_baseline = n_baseline
        self.state = "baseline"
        self.messages: list[dict[str, Any]] = []
        self.result: dict[str, Any] | None = None
        self.error: str | None = None
        self.stop_requested = False
        self.cond = threading.Condition()

    def publish(self, message: dict[str, Any], state: str | None = None) -> None:
        with self.cond:
            self.messages.append(message)
            if state is not None:
                self.state = state
            self.cond.notify_all()

    def finish(self, state: str, result: dict[str, Any] | None = None, error: str | None = None) -> None:
        with self.cond:
            self.state = state
            self.result = result
            self.error = error
            self.cond.notify_all()

    def snapshot(self) -> dict[str, Any]:
        with self.cond:
            return {
                "acquisition_id": self.id,
                "record_id": self.record_id,
                "scenario": self.scenario_name,
                "state": self.state,
                "n_frames": len(self.messages),
                "result": self.result,
                "error": self.error,
            }


def _load_packs(extra_dirs: list[str | Path] | None) -> dict[str, Pack]:
    packs: dict[str, Pack] = {}
    for name in builtin_pack_names():
        packs[name] = load_pack(builtin_pack_dir(name))
    for d in extra_dirs or []:
        pack = load_pack(d)
        packs[pack.name] = pack
    return packs


def create_app(
    data_dir: str | Path | None = None,
    pack_dirs: list[str | Path] | None = None,
) -> FastAPI:
    """Build the service. data_dir falls back to $ETONGUE_DATA_DIR, then ./etongue-data."""
    if data_dir is None:
        data_dir = os.environ.get(DATA_DIR_ENV, DEFAULT_DATA_DIR)
    root = Path(data_dir)
    store = RecordStore(root)
    registry = ModelRegistry(root / "models")
    packs = _load_packs(pack_dirs)
    sessions: dict[str, AcquisitionSession] = {}
    model_cache: dict[str, Any] = {}
    cache_lock = threading.Lock()

    app = FastAPI(
        title="e-tongue service",
        description="Measurement ingest, forest training, and inference for "
        "the potentiometric sensor array.",
        version="1.0",
    )
    app.state.store = store
    app.state.registry = registry

    @app.exception_handler(RequestValidationError)
    async def _on_request_validation(request: Request, exc: RequestValidationError):
        errors = exc.errors()
        first = errors[0] if errors else {"loc": (), "msg": "invalid request"}
        loc = [str(p) for p in first.get("loc", ()) if p not in ("body", "query", "path")]
        return JSONResponse(
            status_code=400,
            content={
                "error": "validation",
                "field": ".".join(loc) or "body",
                "message": first.get("msg", "invalid request"),
            },
        )

    @app.exception_handler(HTTPException)
    async def _on_http_exception(request: Request, exc: HTTPException):
        detail = exc.detail
        if not isinstance(detail, dict):
            detail = {"error": "http", "message": str(detail)}
        return JSONResponse(status_code=exc.status_code, content=detail)

    def _canonical_document(payload: MeasurementIn) -> dict[str, Any]:
        """Parse through the record layer so semantics are checked and the
        stored form is canonical (hash-stable across wire formatting)."""
        try:
            record = record_from_document(payload.model_dump(mode="json"))
        except RecordValidationError as exc:
            raise _error(400, "validation", str(exc), field=exc.field) from exc
        return record_to_document(record)

    # -- measurements --------------------------------------------------------

    @app.post("/v1/measurements", status_code=201)
    def ingest_measurement(payload: MeasurementIn):
        doc = _canonical_document(payload)
        try:
            stored, created = store.append(doc)
        except DuplicateRecordError as exc:
            raise _error(409, "conflict", str(exc), record_id=exc.record_id) from exc
        body = {"record_id": stored.record_id, "created": created}
        if created:
            return body
        return JSONResponse(status_code=200, content=body)

    @app.get("/v1/measurements")
    def list_measurements(
        label: str | None = None,
        device: str | None = None,
        since: datetime | None = None,
        page_size: int = Query(default=50, ge=1, le=500),
        page_token: str | None = None,
    ):
        if since is not None and since.tzinfo is None:
            since = since.replace(tzinfo=timezone.utc)
        offset = 0
        if page_token is not None:
            if not (page_token.startswith("o") and page_token[1:].isdigit()):
                raise _error(400, "validation", f"malformed page_token {page_token!r}",
                             field="page_token")
            offset = int(page_token[1:])
        rows = store.records(label=label, device=device, since=since)
        page = rows[offset : offset + page_size]
        body: dict[str, Any] = {
            "measurements": [
                {
                    "record_id": r.record_id,
                    "device_id": r.device_id,
                    "label": r.label,
                    "started_at": r.document["started_at"],
                    "received_at": r.received_at.isoformat(),
                    "n_frames": len(r.document["frames"]),
                    "content_hash": r.content_hash,
                }
                for r in page
            ],
            "total": len(rows),
        }
        if offset + page_size < len(rows):
            body["next_page_token"] = f"o{offset + page_size}"
        return body

    @app.get("/v1/measurements/{record_id}")
    def get_measurement(record_id: str):
        stored = store.get(record_id)
        if stored is None:
            raise _error(404, "not_found", f"unknown record {record_id!r}")
        return {
            "record": stored.document,
            "received_at": stored.received_at.isoformat(),
            "content_hash": stored.content_hash,
        }

    # -- models ---------------------------------------------------------------

    def _features_for_training(label_filter: list[str] | None) -> list[FeatureVector]:
        wanted = None if label_filter is None else set(label_filter)
        features = []
        for row in store.records():
            if row.label is None:
                continue
            if wanted is not None and row.label not in wanted:
                continue
            features.append(preprocess(record_from_document(row.document)))
        return features

    def _train_job(model_id: str, features: list[FeatureVector], h: Hyperparams,
                   descriptor: dict[str, Any]) -> None:
        try:
            t0 = time.perf_counter()
            model = train(features, h)
            try:
                cv = loocv(features, h)
                descriptor["loocv"] = {
                    "accuracy": float(cv.accuracy),
                    "accuracy_exact": f"{cv.accuracy.numerator}/{cv.accuracy.denominator}",
                    "confusion": {
                        "classes": list(cv.confusion.classes),
                        "counts": cv.confusion.counts.tolist(),
                        "rows": "predicted",
                        "columns": "true",
                    },
                }
            except DatasetError as exc:
                descriptor["loocv"] = {"error": str(exc)}
            imp = feature_importance(model)
            order = np.argsort(imp)[::-1][:10]
            descriptor["top_features"] = [
                {"index": int(i), "weight": float(imp[i])} for i in order
            ]
            descriptor["train_seconds"] = round(time.perf_counter() - t0, 3)
            descriptor["trained_at"] = datetime.now(timezone.utc).isoformat()
            with cache_lock:
                model_cache[model_id] = model
            registry.finish(model_id, descriptor, model_to_document(model))
        except Exception as exc:  # surfaced through the status endpoint
            registry.fail(model_id, f"{type(exc).__name__}: {exc}")

    @app.post("/v1/models:train", status_code=202)
    def train_model(req: TrainRequest):
        try:
            features = _features_for_training(req.label_filter)
            X, y, classes, ids = assemble_dataset(features)
            _check_trainable(y, classes)
        except DatasetError as exc:
            raise _error(422, "dataset", str(exc), record_ids=list(exc.record_ids)) from exc
        hp = req.hyperparams
        h = Hyperparams(
            n_trees=hp.n_trees,
            max_depth=hp.max_depth,
            min_samples_leaf=hp.min_samples_leaf,
            features_per_split=hp.features_per_split,
            bootstrap=hp.bootstrap,
            seed=req.seed,
        )
        labels = tuple(classes[i] for i in y)
        fingerprint = _dataset_fingerprint(X, classes, labels, ids, h)
        model_id = "m-" + fingerprint[:12]
        existing = registry.get(model_id)
        if existing is not None:
            return {"model_id": model_id, "status": existing.status}
        descriptor = {
            "model_id": model_id,
            "fingerprint": fingerprint,
            "classes": list(classes),
            "n_records": len(ids),
            "n_features": int(X.shape[1]),
            "record_ids": list(ids),
            "label_filter": req.label_filter,
            "hyperparams": {
                "n_trees": h.n_trees,
                "max_depth": h.max_depth,
                "min_samples_leaf": h.min_samples_leaf,
                "features_per_split": h.features_per_split,
                "bootstrap": h.bootstrap,
                "seed": h.seed,
            },
            "created_at": datetime.now(timezone.utc).isoformat(),
        }
        registry.begin(model_id, descriptor)
        threading.Thread(
            target=_train_job, args=(model_id, features, h, descriptor), daemon=True
        ).start()
        return {"model_id": model_id, "status": "training"}

    def _model_response(entry) -> dict[str, Any]:
        body = {"model_id": entry.model_id, "status": entry.status, **dict(entry.descriptor)}
        if entry.error is not None:
            body["error"] = entry.error
        return body

    @app.get("/v1/models")
    def list_models():
        return {"models": [_model_response(e) for e in registry.entries()]}

    @app.get("/v1/models/{model_id}")
    def get_model(model_id: str):
        entry = registry.get(model_id)
        if entry is None:
            raise _error(404, "not_found", f"unknown model {model_id!r}")
        return _model_response(entry)

    def _loaded_model(model_id: str):
        entry = registry.get(model_id)
        if entry is None:
            raise _error(404, "not_found", f"unknown model {model_id!r}")
        if entry.status != "ready":
            raise _error(409, "conflict", f"model {model_id} is {entry.status}")
        with cache_lock:
            model = model_cache.get(model_id)
            if model is None:
                model = model_from_document(entry.document)
                model_cache[model_id] = model
        return model

    def _run_inference(model, model_id: str, record) -> dict[str, Any]:
        fv = preprocess(record)
        t0 = time.perf_counter()
        try:
            proba = predict_proba(model, fv.values)
            sims = similarity_to_training(model, fv.values)
        except DatasetError as exc:
            raise _error(422, "dataset", str(exc), record_ids=[record.record_id]) from exc
        latency_ms = (time.perf_counter() - t0) * 1000.0
        top = int(np.argmax(proba))
        return {
            "model_id": model_id,
            "record_id": record.record_id,
            "likelihoods": {c: float(p) for c, p in zip(model.classes, proba)},
            "top_class": model.classes[top],
            "confidence": float(proba[top]),
            "similarities": [
                {"record_id": rid, "label": lab, "proximity": float(s)}
                for rid, lab, s in zip(model.train_record_ids, model.train_labels, sims)
            ],
            "latency_ms": latency_ms,
        }

    @app.post("/v1/models/{model_id}:infer")
    def infer(model_id: str, req: InferRequest):
        model = _loaded_model(model_id)
        if req.record_id is not None:
            stored = store.get(req.record_id)
            if stored is None:
                raise _error(404, "not_found", f"unknown record {req.record_id!r}")
            doc = stored.document
        else:
            doc = req.record.model_dump(mode="json")
        try:
            record = record_from_document(doc)
        except RecordValidationError as exc:
            raise _error(400, "validation", str(exc), field=exc.field) from exc
        return _run_inference(model, model_id, record)

    # -- scenarios and live acquisitions --------------------------------------

    @app.get("/v1/scenarios")
    def list_scenarios():
        out = []
        for pack_name in sorted(packs):
            pack = packs[pack_name]
            for ps in pack.scenarios:
                out.append(
                    {
                        "pack": pack_name,
                        "name": ps.scenario.name,
                        "label": ps.label,
                        "baseline_s": ps.scenario.baseline_duration,
                        "sample_s": ps.scenario.sample_duration,
                        "replicates": ps.replicates,
                    }
                )
        return {"scenarios": out}

    def _resolve_scenario(req: AcquisitionRequest):
        if req.pack is not None:
            if req.pack not in packs:
                raise _error(404, "not_found", f"unknown pack {req.pack!r}")
            candidates = [packs[req.pack]]
        else:
            candidates = [packs[k] for k in sorted(packs)]
        for pack in candidates:
            for ps in pack.scenarios:
                if ps.scenario.name == req.scenario:
                    return pack, ps
        raise _error(404, "not_found", f"unknown scenario {req.scenario!r}")

    def _acquisition_job(session: AcquisitionSession, pack: Pack, scenario,
                         req: AcquisitionRequest, seed: int) -> None:
        adc = pack.adc
        session_rng = np.random.default_rng([seed, scenario.rng_seed])
        array = _jittered_array(pack.array, pack.variability, session_rng)
        run_scenario = replace(scenario, rng_seed=int(session_rng.integers(0, 2**62)))
        source = edge.SimulatedSource(array, adc, run_scenario)

        def frames_until_stopped() -> Iterator[bytes]:
            for raw in source:
                if session.stop_requested:
                    raise edge.SourceError("stopped by operator")
                yield raw

        def on_frame(frame) -> None:
            phase = "sampling" if frame.sample_phase else "baseline"
            session.publish(
                {
                    "record_id": session.record_id,
                    "frame": {
                        "seq": frame.seq,
                        "t_ms": frame.t_ms,
                        "mv": [dequantize(adc, c) for c in frame.codes],
                    },
                    "phase": phase,
                },
                state=phase,
            )

        try:
            record = edge.run_acquisition(
                frames_until_stopped(),
                adc,
                scenario.baseline_duration,
                scenario.sample_duration,
                device_id=req.device_id,
                record_id=session.record_id,
                label=req.label,
                time_scale=req.time_scale,
                on_frame=on_frame,
            )
        except edge.PartialAcquisitionError as exc:
            if session.stop_requested:
                session.finish("stopped", error=None)
            else:
                session.finish("failed", error=str(exc))
            return
        except Exception as exc:
            session.finish("failed", error=f"{type(exc).__name__}: {exc}")
            return
        result = None
        if req.model_id is not None:
            with session.cond:
                session.state = "awaiting_result"
                session.cond.notify_all()
        try:
            store.append(record_to_document(record))
            if req.model_id is not None:
                model = _loaded_model(req.model_id)
                result = _run_inference(model, req.model_id, record)
        except HTTPException as exc:
            detail = exc.detail if isinstance(exc.detail, dict) else {"message": str(exc.detail)}
            session.finish("failed", error=str(detail.get("message", "inference failed")))
            return
        except Exception as exc:
            session.finish("failed", error=f"{type(exc).__name__}: {exc}")
            return
        session.finish("complete", result=result)

    @app.post("/v1/acquisitions", status_code=201)
    def start_acquisition(req: AcquisitionRequest):
        pack, ps = _resolve_scenario(req)
        seed = req.seed if req.seed is not None else int.from_bytes(os.urandom(4), "big")
        acquisition_id = f"a-{uuid.uuid4().hex[:12]}"
        id_rng = np.random.default_rng([seed, ps.scenario.rng_seed, 1])
        record_id = str(uuid.UUID(bytes=id_rng.bytes(16), version=4))
        rate = pack.adc.sample_rate
        session = AcquisitionSession(
            acquisition_id,
            record_id,
            ps.scenario.name,
            n_baseline=int(round(ps.scenario.baseline_duration * rate)),
        )
        sessions[acquisition_id] = session
        threading.Thread(
            target=_acquisition_job, args=(session, pack, ps.scenario, req, seed), daemon=True
        ).start()
        return {"acquisition_id": acquisition_id, "record_id": record_id,
                "scenario": ps.scenario.name, "state": "baseline"}

    def _session_or_404(acquisition_id: str) -> AcquisitionSession:
        session = sessions.get(acquisition_id)
        if session is None:
            raise _error(404, "not_found", f"unknown acquisition {acquisition_id!r}")
        return session

    @app.get("/v1/acquisitions/{acquisition_id}")
    def acquisition_status(acquisition_id: str):
        return _session_or_404(acquisition_id).snapshot()

    @app.delete("/v1/acquisitions/{acquisition_id}", status_code=202)
    def stop_acquisition(acquisition_id: str):
        session = _session_or_404(acquisition_id)
        with session.cond:
            if session.state not in ("baseline", "sampling"):
                raise _error(
                    409, "conflict",
                    f"acquisition is {session.state}; stop is only valid while measuring",
                )
            session.stop_requested = True
        return {"acquisition_id": acquisition_id, "state": "stopping"}

    @app.get("/v1/stream")
    def stream(acquisition: str, from_seq: int = Query(default=0, ge=0)):
        session = _session_or_404(acquisition)

        def events() -> Iterator[str]:
            i = from_seq
            while True:
                with session.cond:
                    while len(session.messages) <= i and session.state not in _TERMINAL_STATES:
                        session.cond.wait(timeout=1.0)
                    if len(session.messages) > i:
                        message = session.messages[i]
                        terminal = None
                    else:
                        terminal = session.snapshot()
                if terminal is not None:
                    yield f"event: end\ndata: {json.dumps(terminal)}\n\n"
                    return
                yield f"id: {i}\ndata: {json.dumps(message)}\n\n"
                i += 1

        return StreamingResponse(events(), media_type="text/event-stream")

    return app
