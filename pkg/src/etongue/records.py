"""Measurement records: the unit of storage, upload, and classification.

A record is one complete two-phase acquisition (storage solution, then
sample) from one device: the decoded frames in order, the index at which
immersion into the sample happened, the ADC configuration needed to turn
codes back into millivolts, and bookkeeping identity fields.

The JSON document form produced here is what the edge agent uploads and
what the service stores; `record_from_document` accepts exactly what
`record_to_document` emits.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any

from .frames import STATUS_SAMPLE_PHASE, AcquisitionFrame
from .sensor import CODE_MAX, CODE_MIN, AdcSpec


class RecordValidationError(ValueError):
    """A record field violates the schema; `field` names the offender."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass(frozen=True)
class MeasurementRecord:
    record_id: str
    device_id: str
    started_at: datetime
    location: tuple[float, float] | None  # (latitude, longitude)
    immersion_index: int
    adc: AdcSpec
    frames: tuple[AcquisitionFrame, ...]
    label: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "frames", tuple(self.frames))
        validate_record(self)

    @property
    def n_baseline(self) -> int:
        return self.immersion_index

    @property
    def n_sample(self) -> int:
        return len(self.frames) - self.immersion_index


def validate_record(record: MeasurementRecord) -> None:
    """Raise RecordValidationError on the first schema violation found."""
    if not record.record_id:
        raise RecordValidationError("record_id", "must be nonempty")
    if not record.device_id:
        raise RecordValidationError("device_id", "must be nonempty")
    if record.started_at.tzinfo is None:
        raise RecordValidationError("started_at", "must be timezone-aware")
    if record.location is not None:
        lat, lon = record.location
        if not -90.0 <= lat <= 90.0:
            raise RecordValidationError("location.latitude", f"{lat} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise RecordValidationError("location.longitude", f"{lon} outside [-180, 180]")
    n = len(record.frames)
    if n == 0:
        raise RecordValidationError("frames", "record has no frames")
    if not 0 < record.immersion_index < n:
        raise RecordValidationError(
            "immersion_index",
            f"{record.immersion_index} must leave at least one frame in each phase (n={n})",
        )
    last_t = -1
    for i, frame in enumerate(record.frames):
        if frame.seq != i:
            raise RecordValidationError(
                f"frames.{i}.seq", f"expected contiguous seq {i}, got {frame.seq}"
            )
        if frame.t_ms < last_t:
            raise RecordValidationError(
                f"frames.{i}.t_ms", f"timestamps must be nondecreasing, {frame.t_ms} after {last_t}"
            )
        last_t = frame.t_ms
        in_sample = i >= record.immersion_index
        if frame.sample_phase != in_sample:
            phase = "sample" if in_sample else "baseline"
            raise RecordValidationError(
                f"frames.{i}.status",
                f"phase bit disagrees with immersion_index (frame is in the {phase} phase)",
            )
        for c in frame.codes:
            if not CODE_MIN <= c <= CODE_MAX:
                raise RecordValidationError(f"frames.{i}.codes", f"code {c} outside int16")


def record_to_document(record: MeasurementRecord) -> dict[str, Any]:
    """Plain-JSON form of a record (the upload/storage schema)."""
    doc: dict[str, Any] = {
        "record_id": record.record_id,
        "device_id": record.device_id,
        "started_at": record.started_at.isoformat().replace("+00:00", "Z"),
        "location": None
        if record.location is None
        else {"latitude": record.location[0], "longitude": record.location[1]},
        "immersion_index": record.immersion_index,
        "adc": {
            "full_scale": record.adc.full_scale,
            "lsb": record.adc.lsb,
            "sample_rate": record.adc.sample_rate,
        },
        "frames": [
            {"seq": f.seq, "t_ms": f.t_ms, "codes": list(f.codes), "status": f.status}
            for f in record.frames
        ],
        "label": record.label,
    }
    return doc


def record_from_document(doc: dict[str, Any]) -> MeasurementRecord:
    """Parse the JSON document form back into a record, validating it."""
    try:
        loc = doc.get("location")
        location = None if loc is None else (float(loc["latitude"]), float(loc["longitude"]))
        started = str(doc["started_at"]).replace("Z", "+00:00")
        adc = doc["adc"]
        frames = tuple(
            AcquisitionFrame(
                seq=int(f["seq"]),
                t_ms=int(f["t_ms"]),
                codes=tuple(int(c) for c in f["codes"]),
                status=int(f.get("status", 0)),
            )
            for f in doc["frames"]
        )
        return MeasurementRecord(
            record_id=str(doc["record_id"]),
            device_id=str(doc["device_id"]),
            started_at=datetime.fromisoformat(started),
            location=location,
            immersion_index=int(doc["immersion_index"]),
            adc=AdcSpec(
                full_scale=float(adc["full_scale"]),
                lsb=float(adc["lsb"]),
                sample_rate=float(adc["sample_rate"]),
            ),
            frames=frames,
            label=None if doc.get("label") is None else str(doc["label"]),
        )
    except RecordValidationError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise RecordValidationError("record", f"malformed record document: {exc}") from exc


def content_hash(doc: dict[str, Any]) -> str:
    """sha256 of the canonical JSON form, used for idempotent-upload checks.

    Canonical means sorted keys and no whitespace, so two documents with
    the same content hash the same regardless of key order.
    """
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def utcnow() -> datetime:
    return datetime.now(timezone.utc)
