"""Whole-acquisition simulation: scenario in, wire-ready record out.

Runs the scripted two-phase immersion against an electrode array and
produces the same MeasurementRecord an edge agent would assemble from
hardware frames. Everything is driven by one PRNG seeded from the
scenario, so a given (array, adc, scenario) triple always yields the
same record, frame for frame and byte for byte.

Draw order, for anyone reproducing records elsewhere: 16 bytes for the
record id first, then one block of per-frame noise for each electrode in
ascending id order (electrodes with zero noise_std draw nothing).
"""

from __future__ import annotations

import uuid
from datetime import datetime, timezone

import numpy as np

from .frames import STATUS_SAMPLE_PHASE, STATUS_SATURATED, AcquisitionFrame
from .records import MeasurementRecord
from .sensor import AdcSpec, ArraySpec, Scenario, electrode_potential, quantize_array

# Synthetic records get a fixed, obviously artificial start time so that
# identical seeds produce byte-identical documents.
SIM_STARTED_AT = datetime(2000, 1, 1, tzinfo=timezone.utc)


def simulate_acquisition(
    array: ArraySpec,
    adc: AdcSpec,
    scenario: Scenario,
    device_id: str = "sim-0",
    label: str | None = None,
    location: tuple[float, float] | None = None,
    started_at: datetime | None = None,
) -> MeasurementRecord:
    """Simulate one acquisition and return the assembled record.

    The label defaults to the scenario name; pass label="" to leave the
    record unlabeled.
    """
    rate = adc.sample_rate
    n_baseline = int(round(scenario.baseline_duration * rate))
    n_sample = int(round(scenario.sample_duration * rate))
    if n_baseline < 1 or n_sample < 1:
        raise ValueError(
            f"scenario {scenario.name!r} is too short to yield a frame in each phase "
            f"at {rate} Hz"
        )
    n_total = n_baseline + n_sample

    rng = np.random.default_rng(scenario.rng_seed)
    record_id = str(uuid.UUID(bytes=rng.bytes(16), version=4))

    electrodes = sorted(array.electrodes, key=lambda e: e.id)
    e_base = {e.id: electrode_potential(e, scenario.baseline_composition) for e in electrodes}
    e_samp = {e.id: electrode_potential(e, scenario.sample_composition) for e in electrodes}

    # Seconds since immersion for the sample-phase frames; the first one is
    # taken at the moment of immersion, so it starts at the baseline value.
    t_s = np.arange(n_sample, dtype=np.float64) / rate

    potentials = np.empty((n_total, 4), dtype=np.float64)
    for col, e in enumerate(electrodes):
        curve = e_base[e.id] + (e_samp[e.id] - e_base[e.id]) * (1.0 - np.exp(-t_s / e.tau))
        curve = curve + e.drift_rate * t_s
        potentials[:n_baseline, col] = e_base[e.id]
        potentials[n_baseline:, col] = curve
        if e.noise_std > 0:
            potentials[:, col] += rng.normal(0.0, e.noise_std, n_total)

    col_of = {e.id: col for col, e in enumerate(electrodes)}
    ref_col = col_of[array.reference_index]
    chan_cols = [col_of[k] for k in array.channel_ids]
    channels = potentials[:, chan_cols] - potentials[:, [ref_col]]

    codes, saturated = quantize_array(adc, channels)

    frames = []
    for k in range(n_total):
        status = 0
        if saturated[k].any():
            status |= STATUS_SATURATED
        if k >= n_baseline:
            status |= STATUS_SAMPLE_PHASE
        frames.append(
            AcquisitionFrame(
                seq=k,
                t_ms=int(round(k * 1000.0 / rate)),
                codes=(int(codes[k, 0]), int(codes[k, 1]), int(codes[k, 2])),
                status=status,
            )
        )

    if label is None:
        label = scenario.name
    elif label == "":
        label = None

    return MeasurementRecord(
        record_id=record_id,
        device_id=device_id,
        started_at=started_at or SIM_STARTED_AT,
        location=location,
        immersion_index=n_baseline,
        adc=adc,
        frames=tuple(frames),
        label=label,
    )
