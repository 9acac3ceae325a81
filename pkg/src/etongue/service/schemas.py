"""Request and response shapes for the HTTP API.

Pydantic handles structural validation (types, ranges, required
fields); the semantic rules that tie fields together (frame sequence
continuity, phase flags against the immersion index, and so on) are
enforced by the record layer after parsing, so both the wire format
and library callers go through one set of checks.
"""

from __future__ import annotations

from datetime import datetime

from pydantic import BaseModel, Field, model_validator


class LocationIn(BaseModel):
    latitude: float = Field(ge=-90.0, le=90.0)
    longitude: float = Field(ge=-180.0, le=180.0)


class AdcIn(BaseModel):
    full_scale: float = Field(gt=0)
    lsb: float = Field(gt=0)
    sample_rate: float = Field(gt=0)


class FrameIn(BaseModel):
    seq: int = Field(ge=0, lt=2**32)
    t_ms: int = Field(ge=0, lt=2**32)
    codes: list[int] = Field(min_length=3, max_length=3)
    status: int = Field(ge=0, le=0xFF)


class MeasurementIn(BaseModel):
    record_id: str = Field(min_length=1, max_length=128)
    device_id: str = Field(min_length=1, max_length=128)
    started_at: datetime
    location: LocationIn | None = None
    immersion_index: int = Field(ge=1)
    adc: AdcIn
    frames: list[FrameIn] = Field(min_length=2)
    label: str | None = Field(default=None, max_length=128)


class HyperparamsIn(BaseModel):
    n_trees: int = Field(default=200, ge=1, le=5000)
    max_depth: int | None = Field(default=None, ge=1)
    min_samples_leaf: int = Field(default=1, ge=1)
    features_per_split: int | None = Field(default=None, ge=1)
    bootstrap: bool = True


class TrainRequest(BaseModel):
    label_filter: list[str] | None = None
    hyperparams: HyperparamsIn = Field(default_factory=HyperparamsIn)
    seed: int = Field(default=0, ge=0)


class InferRequest(BaseModel):
    record_id: str | None = None
    record: MeasurementIn | None = None

    @model_validator(mode="after")
    def _exactly_one_source(self) -> "InferRequest":
        if (self.record_id is None) == (self.record is None):
            raise ValueError("provide exactly one of record_id or record")
        return self


class AcquisitionRequest(BaseModel):
    scenario: str = Field(min_length=1)
    pack: str | None = None
    device_id: str = Field(default="edge-0", min_length=1)
    label: str | None = None
    seed: int | None = Field(default=None, ge=0)
    time_scale: float = Field(default=0.0, ge=0.0)
    model_id: str | None = None
