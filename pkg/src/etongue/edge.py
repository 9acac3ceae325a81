"""Edge acquisition agent.

Pulls encoded frames from a source (the simulator here; a serial bridge
on real hardware), decodes and validates them, assembles the
MeasurementRecord, and uploads it with retry. Pacing is wall-clock
scaled: time_scale 1.0 replays the acquisition in real time, 0 runs it
as fast as the source produces frames. Pacing never changes record
content, only when frames are consumed.

Upload is at-least-once: the service deduplicates on record_id, so a
retried upload after an ambiguous failure is safe.
"""

from __future__ import annotations

import random
import time
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Callable, Iterable, Iterator

import httpx

from .frames import AcquisitionFrame, FrameError, decode_frame, encode_frame
from .records import MeasurementRecord, RecordValidationError, record_to_document
from .sensor import AdcSpec, ArraySpec, Scenario
from .simulate import simulate_acquisition


class SourceError(RuntimeError):
    """The frame source failed mid-acquisition."""


class PartialAcquisitionError(RuntimeError):
    """Acquisition aborted; `frames` holds everything collected so far."""

    def __init__(self, message: str, frames: list[AcquisitionFrame]):
        self.frames = list(frames)
        super().__init__(f"{message} ({len(frames)} frames collected)")


class UploadError(RuntimeError):
    pass


class TransportError(UploadError):
    """Retries exhausted without reaching the service."""


class ValidationRejectedError(UploadError):
    """The service rejected the record (4xx); retrying would not help."""

    def __init__(self, status_code: int, detail: str):
        self.status_code = status_code
        super().__init__(f"server rejected record ({status_code}): {detail}")


class SimulatedSource:
    """Frame producer backed by the array simulator.

    Yields encoded wire frames exactly as a hardware front end would.
    fail_at injects a fault: the source dies before producing that seq,
    for exercising partial-acquisition handling.
    """

    def __init__(
        self,
        array: ArraySpec,
        adc: AdcSpec,
        scenario: Scenario,
        fail_at: int | None = None,
    ):
        self.array = array
        self.adc = adc
        self.scenario = scenario
        self.fail_at = fail_at

    def __iter__(self) -> Iterator[bytes]:
        record = simulate_acquisition(self.array, self.adc, self.scenario)
        for frame in record.frames:
            if self.fail_at is not None and frame.seq == self.fail_at:
                raise SourceError(f"injected source failure at frame {frame.seq}")
            yield encode_frame(frame)


def run_acquisition(
    source: Iterable[bytes],
    adc: AdcSpec,
    baseline_s: float,
    sample_s: float,
    *,
    device_id: str = "edge-0",
    record_id: str | None = None,
    label: str | None = None,
    location: tuple[float, float] | None = None,
    started_at: datetime | None = None,
    time_scale: float = 0.0,
    clock: Callable[[], float] = time.monotonic,
    sleep: Callable[[float], None] = time.sleep,
    on_frame: Callable[[AcquisitionFrame], None] | None = None,
) -> MeasurementRecord:
    """Collect one two-phase acquisition from a frame source.

    Consumes baseline_s plus sample_s worth of frames at the ADC rate,
    decoding and checking each. time_scale stretches the inter-frame
    wait (0 = no pacing). A source failure or a bad frame raises
    PartialAcquisitionError carrying the frames collected so far.
    """
    if baseline_s <= 0 or sample_s <= 0:
        raise ValueError("baseline_s and sample_s must be positive")
    rate = adc.sample_rate
    n_baseline = int(round(baseline_s * rate))
    n_sample = int(round(sample_s * rate))
    if n_baseline < 1 or n_sample < 1:
        raise ValueError(f"durations too short for a frame in each phase at {rate} Hz")
    n_total = n_baseline + n_sample

    frames: list[AcquisitionFrame] = []
    started_wall = started_at or datetime.now(timezone.utc)
    t0 = clock()
    frame_interval = (1.0 / rate) * time_scale

    it = iter(source)
    while len(frames) < n_total:
        try:
            raw = next(it)
        except StopIteration:
            raise PartialAcquisitionError(
                f"source ended early, expected {n_total} frames", frames
            ) from None
        except SourceError as exc:
            raise PartialAcquisitionError(f"source failed: {exc}", frames) from exc
        try:
            frame = decode_frame(raw)
        except FrameError as exc:
            raise PartialAcquisitionError(f"undecodable frame: {exc}", frames) from exc
        frames.append(frame)
        if on_frame is not None:
            on_frame(frame)
        if frame_interval > 0 and len(frames) < n_total:
            next_due = t0 + len(frames) * frame_interval
            remaining = next_due - clock()
            if remaining > 0:
                sleep(remaining)

    try:
        return MeasurementRecord(
            record_id=record_id or str(uuid.uuid4()),
            device_id=device_id,
            started_at=started_wall,
            location=location,
            immersion_index=n_baseline,
            adc=adc,
            frames=tuple(frames),
            label=label,
        )
    except RecordValidationError as exc:
        raise PartialAcquisitionError(f"inconsistent acquisition: {exc}", frames) from exc


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff for uploads: base * factor^attempt, jittered."""

    base_delay: float = 0.5
    factor: float = 2.0
    max_attempts: int = 5
    jitter: float = 0.1

    def delay(self, attempt: int, rng: random.Random) -> float:
        # attempt is 1-based count of failures so far
        raw = self.base_delay * self.factor ** (attempt - 1)
        return raw * (1.0 + self.jitter * rng.uniform(-1.0, 1.0))


def upload(
    record: MeasurementRecord,
    endpoint: str,
    policy: RetryPolicy | None = None,
    *,
    client: httpx.Client | None = None,
    sleep: Callable[[float], None] = time.sleep,
    rng: random.Random | None = None,
) -> str:
    """POST the record to the service, retrying transient failures.

    Returns the server-confirmed record_id. 4xx responses are surfaced
    immediately as ValidationRejectedError (retrying cannot fix the
    payload); connection failures and 5xx responses back off per the
    policy until max_attempts, then raise TransportError.
    """
    policy = policy or RetryPolicy()
    rng = rng or random.Random(0)
    doc = record_to_document(record)
    url = endpoint.rstrip("/") + "/v1/measurements"
    own_client = client is None
    http = client or httpx.Client(timeout=10.0)
    last_error = "no attempt made"
    try:
        for attempt in range(1, policy.max_attempts + 1):
            try:
                response = http.post(url, json=doc)
            except httpx.HTTPError as exc:
                last_error = f"transport failure: {exc}"
            else:
                if response.status_code in (200, 201):
                    return str(response.json()["record_id"])
                if 400 <= response.status_code < 500:
                    raise ValidationRejectedError(response.status_code, response.text)
                last_error = f"server error {response.status_code}"
            if attempt < policy.max_attempts:
                sleep(policy.delay(attempt, rng))
        raise TransportError(
            f"upload failed after {policy.max_attempts} attempts: {last_error}"
        )
    finally:
        if own_client:
            http.close()
