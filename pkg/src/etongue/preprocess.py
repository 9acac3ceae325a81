"""Turn a raw record into the feature vector the classifier consumes.

The recipe: average each differential channel over the storage-solution
frames, subtract that per-channel mean from the channel's sample-phase
frames (everything in mV), drop the storage-solution frames, and
concatenate the three channel series channel by channel.

Baseline subtraction is computed as

    ((code * n_b - sum_of_baseline_codes) * lsb) / n_b

which equals dequantize-then-subtract-mean exactly, but cancels any
constant per-channel code offset in integer arithmetic before a single
float rounding happens. Records that differ only by such an offset
therefore produce bit-identical features, which is what makes the
electrode-drift story tractable downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .records import MeasurementRecord


@dataclass(frozen=True)
class FeatureVector:
    """Preprocessed acquisition: 3 x n_sample mV values, channel-major."""

    record_id: str
    label: str | None
    values: np.ndarray
    n_sample: int  # sample-phase frames per channel

    def __post_init__(self) -> None:
        if self.values.ndim != 1 or self.values.size != 3 * self.n_sample:
            raise ValueError(
                f"feature vector for {self.record_id} has {self.values.size} values, "
                f"expected 3 x {self.n_sample}"
            )


def _code_matrix(record: MeasurementRecord) -> np.ndarray:
    return np.array([f.codes for f in record.frames], dtype=np.int64)


def baseline_stats(record: MeasurementRecord) -> np.ndarray:
    """Per-channel mean (mV) over the storage-solution frames, shape (3,)."""
    codes = _code_matrix(record)
    n_b = record.immersion_index
    sums = codes[:n_b].sum(axis=0)
    return (sums * record.adc.lsb) / n_b


def preprocess(record: MeasurementRecord) -> FeatureVector:
    """Baseline-subtracted, concatenated channel series for one record."""
    codes = _code_matrix(record)
    n_b = record.immersion_index
    lsb = record.adc.lsb
    sums = codes[:n_b].sum(axis=0)  # (3,) int64
    sample = codes[n_b:]            # (n_s, 3) int64
    # integer part first, then one multiply and one division per value
    centered = (sample * n_b - sums[None, :]) * lsb / n_b
    values = centered.T.reshape(-1).copy()
    return FeatureVector(
        record_id=record.record_id,
        label=record.label,
        values=values,
        n_sample=sample.shape[0],
    )


def early_transient_indices(n_sample: int, width: int = 20, n_channels: int = 3) -> np.ndarray:
    """Feature indices covering each channel's first `width` sample frames.

    With the channel-major layout from `preprocess`, these are the entries
    describing the initial transient (the default 20 frames span the first
    10 s at the stock 2 Hz rate). width is clipped to n_sample.
    """
    if n_sample < 1:
        raise ValueError("n_sample must be >= 1")
    w = min(width, n_sample)
    base = np.arange(w, dtype=np.int64)
    return np.concatenate([c * n_sample + base for c in range(n_channels)])
