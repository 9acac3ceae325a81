"""Shared builders for the test suite.

Most tests want a small deterministic array with known numbers rather
than the bundled scenario packs, so the defaults here are noise-free and
drift-free; individual tests override fields as needed.
"""

from __future__ import annotations

import numpy as np
import pytest

from etongue.ions import IonComposition, register_ion
from etongue.records import MeasurementRecord
from etongue.sensor import AdcSpec, ArraySpec, ElectrodeSpec, Scenario
from etongue.simulate import simulate_acquisition

# Synthetic monovalent pair with molar mass 0.001 g/mol: ppm -> mol/L
# divides by exactly 1.0, so concentrations can be chosen as exact
# powers of ten and log10 terms come out exact in floating point.
register_ion("Xq+", 1, 0.001)
register_ion("Xq-", -1, 0.001)


def make_electrode(eid=1, ion="Na+", slope=59.16, e0=0.0, **kw) -> ElectrodeSpec:
    return ElectrodeSpec(id=eid, primary_ion=ion, slope_s=slope, e0=e0, **kw)


def make_array(noise_std=0.0, drift_rate=0.0) -> ArraySpec:
    """Na+/K+/Cl- channels against a Cl- reference, quiet by default."""
    common = dict(noise_std=noise_std, drift_rate=drift_rate, tau=2.0)
    return ArraySpec(
        electrodes=(
            ElectrodeSpec(id=1, primary_ion="Na+", slope_s=55.0, e0=90.0, **common),
            ElectrodeSpec(id=2, primary_ion="K+", slope_s=52.0, e0=60.0, **common),
            ElectrodeSpec(id=3, primary_ion="Cl-", slope_s=-54.0, e0=-30.0, **common),
            ElectrodeSpec(id=4, primary_ion="Cl-", slope_s=-50.0, e0=-20.0, **common),
        ),
        reference_index=4,
    )


def make_adc(**kw) -> AdcSpec:
    return AdcSpec(**kw)


def make_scenario(name="tap", seed=7, baseline_s=20.0, sample_s=60.0) -> Scenario:
    return Scenario(
        name=name,
        baseline_composition=IonComposition({"Na+": 10.0, "K+": 4.0, "Cl-": 18.0}),
        sample_composition=IonComposition({"Na+": 45.0, "K+": 12.0, "Cl-": 70.0}),
        baseline_duration=baseline_s,
        sample_duration=sample_s,
        rng_seed=seed,
    )


@pytest.fixture
def quiet_array() -> ArraySpec:
    return make_array()


@pytest.fixture
def adc() -> AdcSpec:
    return AdcSpec()


@pytest.fixture
def scenario() -> Scenario:
    return make_scenario()


@pytest.fixture
def record(quiet_array, adc, scenario) -> MeasurementRecord:
    return simulate_acquisition(quiet_array, adc, scenario)


def separable_dataset(seed=0, n_per_class=12, n_features=6, n_classes=3, spread=0.3):
    """Well-separated Gaussian blobs; any sane classifier gets these right."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-4.0, 4.0, size=(n_classes, n_features))
    X = np.vstack(
        [centers[c] + rng.normal(0.0, spread, size=(n_per_class, n_features)) for c in range(n_classes)]
    )
    y = np.repeat(np.arange(n_classes), n_per_class)
    return np.asarray(X, dtype=np.float64), y.astype(np.int64)
