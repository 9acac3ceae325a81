"""Record schema, validation order, document round trip, content hash."""

from datetime import datetime, timezone

import pytest

from etongue.frames import STATUS_SAMPLE_PHASE, AcquisitionFrame
from etongue.records import (
    MeasurementRecord,
    RecordValidationError,
    content_hash,
    record_from_document,
    record_to_document,
)
from etongue.sensor import AdcSpec

T0 = datetime(2024, 5, 1, 12, 0, tzinfo=timezone.utc)


def make_frames(n_baseline=2, n_sample=3):
    frames = []
    for i in range(n_baseline + n_sample):
        status = STATUS_SAMPLE_PHASE if i >= n_baseline else 0
        frames.append(AcquisitionFrame(seq=i, t_ms=i * 500, codes=(i, -i, 0), status=status))
    return tuple(frames)


def make_record(**over):
    kw = dict(
        record_id="r-1",
        device_id="edge-7",
        started_at=T0,
        location=(48.2, 16.4),
        immersion_index=2,
        adc=AdcSpec(),
        frames=make_frames(),
        label="tap",
    )
    kw.update(over)
    return MeasurementRecord(**kw)


class TestValidation:
    def test_valid_record_passes_and_exposes_phase_counts(self):
        r = make_record()
        assert r.n_baseline == 2
        assert r.n_sample == 3

    @pytest.mark.parametrize(
        "over, field",
        [
            (dict(record_id=""), "record_id"),
            (dict(device_id=""), "device_id"),
            (dict(location=(91.0, 0.0)), "location.latitude"),
            (dict(location=(0.0, -181.0)), "location.longitude"),
            (dict(frames=()), "frames"),
            (dict(immersion_index=0), "immersion_index"),
            (dict(immersion_index=5), "immersion_index"),
        ],
    )
    def test_field_errors_name_the_offender(self, over, field):
        with pytest.raises(RecordValidationError) as exc:
            make_record(**over)
        assert exc.value.field == field

    def test_naive_started_at_rejected(self):
        with pytest.raises(RecordValidationError) as exc:
            make_record(started_at=datetime(2024, 5, 1, 12, 0))
        assert exc.value.field == "started_at"

    def test_immersion_bounds_checked_before_per_frame_fields(self):
        # frames have deliberately broken seq numbers, but the bad
        # immersion_index must be reported first
        frames = tuple(
            AcquisitionFrame(seq=9 + i, t_ms=0, codes=(0, 0, 0)) for i in range(3)
        )
        with pytest.raises(RecordValidationError) as exc:
            make_record(frames=frames, immersion_index=3)
        assert exc.value.field == "immersion_index"

    def test_noncontiguous_seq_names_the_frame(self):
        frames = list(make_frames())
        frames[3] = AcquisitionFrame(seq=7, t_ms=1500, codes=(0, 0, 0),
                                     status=STATUS_SAMPLE_PHASE)
        with pytest.raises(RecordValidationError) as exc:
            make_record(frames=tuple(frames))
        assert exc.value.field == "frames.3.seq"

    def test_decreasing_timestamps_rejected(self):
        frames = list(make_frames())
        frames[4] = AcquisitionFrame(seq=4, t_ms=100, codes=(0, 0, 0),
                                     status=STATUS_SAMPLE_PHASE)
        with pytest.raises(RecordValidationError) as exc:
            make_record(frames=tuple(frames))
        assert exc.value.field == "frames.4.t_ms"

    def test_phase_bit_must_agree_with_immersion_index(self):
        frames = list(make_frames())
        frames[1] = AcquisitionFrame(seq=1, t_ms=500, codes=(0, 0, 0),
                                     status=STATUS_SAMPLE_PHASE)
        with pytest.raises(RecordValidationError) as exc:
            make_record(frames=tuple(frames))
        assert exc.value.field == "frames.1.status"
        frames = list(make_frames())
        frames[3] = AcquisitionFrame(seq=3, t_ms=1500, codes=(0, 0, 0), status=0)
        with pytest.raises(RecordValidationError) as exc:
            make_record(frames=tuple(frames))
        assert exc.value.field == "frames.3.status"

    def test_error_message_carries_field_prefix(self):
        with pytest.raises(RecordValidationError, match="^device_id:"):
            make_record(device_id="")


class TestDocumentForm:
    def test_round_trip_preserves_everything(self):
        r = make_record()
        doc = record_to_document(r)
        back = record_from_document(doc)
        assert back == r
        assert record_to_document(back) == doc

    def test_timestamp_uses_z_suffix(self):
        doc = record_to_document(make_record())
        assert doc["started_at"] == "2024-05-01T12:00:00Z"

    def test_none_location_and_label_survive(self):
        r = make_record(location=None, label=None)
        doc = record_to_document(r)
        assert doc["location"] is None and doc["label"] is None
        back = record_from_document(doc)
        assert back.location is None and back.label is None

    def test_document_shape(self):
        doc = record_to_document(make_record())
        assert set(doc) == {
            "record_id", "device_id", "started_at", "location",
            "immersion_index", "adc", "frames", "label",
        }
        assert doc["adc"] == {"full_scale": 2048.0, "lsb": 0.0625, "sample_rate": 2.0}
        assert doc["location"] == {"latitude": 48.2, "longitude": 16.4}
        f0 = doc["frames"][0]
        assert f0 == {"seq": 0, "t_ms": 0, "codes": [0, 0, 0], "status": 0}

    def test_missing_key_becomes_record_field_error(self):
        doc = record_to_document(make_record())
        del doc["adc"]
        with pytest.raises(RecordValidationError) as exc:
            record_from_document(doc)
        assert exc.value.field == "record"

    def test_garbage_timestamp_becomes_record_field_error(self):
        doc = record_to_document(make_record())
        doc["started_at"] = "yesterday-ish"
        with pytest.raises(RecordValidationError) as exc:
            record_from_document(doc)
        assert exc.value.field == "record"

    def test_semantic_violations_keep_their_specific_field(self):
        doc = record_to_document(make_record())
        doc["immersion_index"] = 0
        with pytest.raises(RecordValidationError) as exc:
            record_from_document(doc)
        assert exc.value.field == "immersion_index"


class TestContentHash:
    def test_key_order_does_not_matter(self):
        doc = record_to_document(make_record())
        shuffled = dict(reversed(list(doc.items())))
        assert content_hash(doc) == content_hash(shuffled)

    def test_any_content_change_changes_the_hash(self):
        doc = record_to_document(make_record())
        h = content_hash(doc)
        other = record_to_document(make_record(label="bottled"))
        assert content_hash(other) != h

    def test_hash_is_hex_sha256(self):
        h = content_hash({"a": 1})
        assert len(h) == 64
        int(h, 16)
