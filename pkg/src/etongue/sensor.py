"""Electrode array physics.

Steady-state electrode potentials follow the Nikolsky-Eisenmann form

    E = E0 + S * log10(a_i + sum_j K_ij * a_j ** (z_i / z_j))

with activities approximated by molar concentrations, which is adequate
for the dilute solutions this instrument sees. Response to a solution
change is modelled as a first-order relaxation plus linear drift and
white measurement noise, and readout is a differential measurement
against a designated reference electrode, digitized by a 16-bit ADC.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .ions import IonComposition, ion_charge

CODE_MIN = -32768
CODE_MAX = 32767


class DilutionError(ValueError):
    """The Nikolsky-Eisenmann log argument came out <= 0.

    Happens when the primary ion and every weighted interferent are absent;
    a real film would float to an ill-defined potential, so we refuse.
    """


@dataclass(frozen=True)
class ElectrodeSpec:
    """One ion-selective film in the array.

    slope_s is the response in mV per decade of activity and must carry
    the sign of the primary ion's charge: cation-selective films respond
    with positive slope, anion-selective with negative. selectivity maps
    interfering ion identifiers to dimensionless K coefficients.
    """

    id: int
    primary_ion: str
    slope_s: float
    e0: float
    selectivity: Mapping[str, float] = field(default_factory=dict)
    tau: float = 2.0
    drift_rate: float = 0.0
    noise_std: float = 0.0

    def __post_init__(self) -> None:
        if self.id not in (1, 2, 3, 4):
            raise ValueError(f"electrode id must be 1..4, got {self.id}")
        z = ion_charge(self.primary_ion)
        if self.slope_s == 0 or (self.slope_s > 0) != (z > 0):
            raise ValueError(
                f"electrode {self.id}: slope {self.slope_s} mV/decade is inconsistent "
                f"with {self.primary_ion!r} (charge {z:+d}); cation films need a positive "
                "slope, anion films a negative one"
            )
        for ion, k in self.selectivity.items():
            ion_charge(ion)  # raises UnknownIonError for typos
            if not k >= 0:
                raise ValueError(f"electrode {self.id}: selectivity K for {ion!r} must be >= 0")
        if not self.tau > 0:
            raise ValueError(f"electrode {self.id}: tau must be positive, got {self.tau}")
        if not self.noise_std >= 0:
            raise ValueError(f"electrode {self.id}: noise_std must be >= 0")
        object.__setattr__(self, "selectivity", dict(self.selectivity))


@dataclass(frozen=True)
class AdcSpec:
    """Readout quantizer: symmetric full scale, fixed LSB, fixed sample rate."""

    full_scale: float = 2048.0  # mV
    lsb: float = 0.0625         # mV per code
    sample_rate: float = 2.0    # Hz

    def __post_init__(self) -> None:
        if not self.lsb > 0:
            raise ValueError(f"ADC lsb must be positive, got {self.lsb}")
        if not self.full_scale > 0:
            raise ValueError(f"ADC full scale must be positive, got {self.full_scale}")
        if self.full_scale / self.lsb > 32768:
            raise ValueError(
                f"full scale {self.full_scale} mV needs codes beyond int16 at lsb {self.lsb} mV"
            )
        if not self.sample_rate > 0:
            raise ValueError(f"ADC sample rate must be positive, got {self.sample_rate}")


@dataclass(frozen=True)
class ArraySpec:
    """Four electrodes plus the index of the one used as reference."""

    electrodes: tuple[ElectrodeSpec, ...]
    reference_index: int = 4

    def __post_init__(self) -> None:
        ids = [e.id for e in self.electrodes]
        if len(self.electrodes) != 4 or sorted(ids) != [1, 2, 3, 4]:
            raise ValueError(f"array needs exactly electrodes 1..4, got ids {ids}")
        if self.reference_index not in ids:
            raise ValueError(f"reference electrode {self.reference_index} is not in the array")
        object.__setattr__(self, "electrodes", tuple(self.electrodes))

    def electrode(self, eid: int) -> ElectrodeSpec:
        for e in self.electrodes:
            if e.id == eid:
                return e
        raise KeyError(eid)

    @property
    def channel_ids(self) -> tuple[int, ...]:
        """Measurement electrode ids (everything but the reference), ascending."""
        return tuple(sorted(e.id for e in self.electrodes if e.id != self.reference_index))


@dataclass(frozen=True)
class Scenario:
    """A scripted two-phase immersion: storage solution, then the sample."""

    name: str
    baseline_composition: IonComposition
    sample_composition: IonComposition
    baseline_duration: float = 20.0
    sample_duration: float = 60.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("scenario name must be nonempty")
        if not self.baseline_duration > 0:
            raise ValueError("baseline_duration must be positive")
        if not self.sample_duration > 0:
            raise ValueError("sample_duration must be positive")
        if not self.baseline_composition.entries:
            raise ValueError("baseline composition must list at least one ion")


def electrode_potential(electrode: ElectrodeSpec, solution: IonComposition) -> float:
    """Steady-state potential (mV) of one electrode in a solution.

    Interferents listed in the film's selectivity map contribute
    K_ij * a_j ** (z_i / z_j); ions at zero concentration contribute
    nothing. A log argument <= 0 raises DilutionError.
    """
    zi = ion_charge(electrode.primary_ion)
    arg = solution.molar(electrode.primary_ion)
    for ion, k in electrode.selectivity.items():
        aj = solution.molar(ion)
        if aj > 0.0 and k > 0.0:
            arg += k * aj ** (zi / ion_charge(ion))
    if arg <= 0.0:
        raise DilutionError(
            f"electrode {electrode.id} ({electrode.primary_ion}): no primary ion and no "
            "weighted interferent in solution, potential is undefined"
        )
    return electrode.e0 + electrode.slope_s * math.log10(arg)


def transient_response(
    electrode: ElectrodeSpec,
    baseline: IonComposition,
    sample: IonComposition,
    t: float,
    rng: np.random.Generator | None = None,
) -> float:
    """Potential (mV) t seconds after moving the electrode into the sample.

    First-order relaxation from the baseline steady state toward the sample
    steady state with time constant tau, plus drift_rate * t and, when an
    rng is supplied, one draw of N(0, noise_std^2).
    """
    if t < 0:
        raise ValueError(f"time since immersion must be >= 0, got {t}")
    e_b = electrode_potential(electrode, baseline)
    e_s = electrode_potential(electrode, sample)
    value = e_b + (e_s - e_b) * (1.0 - math.exp(-t / electrode.tau))
    value += electrode.drift_rate * t
    if rng is not None and electrode.noise_std > 0:
        value += rng.normal(0.0, electrode.noise_std)
    return value


def differential_channels(array: ArraySpec, potentials: Mapping[int, float]) -> np.ndarray:
    """Reference-subtracted channel values, ordered by ascending electrode id.

    potentials maps electrode id -> absolute potential in mV. The result has
    one entry per non-reference electrode: E_k - E_ref.
    """
    missing = [e.id for e in array.electrodes if e.id not in potentials]
    if missing:
        raise ValueError(f"potentials missing for electrodes {missing}")
    ref = potentials[array.reference_index]
    return np.array([potentials[k] - ref for k in array.channel_ids], dtype=np.float64)


def quantize(adc: AdcSpec, value: float) -> tuple[int, bool]:
    """Digitize one voltage (mV) to a signed 16-bit code.

    Rounds value/lsb to the nearest integer with ties away from zero, then
    saturates into [-32768, 32767]. Returns (code, saturated).
    """
    scaled = value / adc.lsb
    code = int(math.floor(abs(scaled) + 0.5))
    if scaled < 0:
        code = -code
    if code < CODE_MIN:
        return CODE_MIN, True
    if code > CODE_MAX:
        return CODE_MAX, True
    return code, False


def quantize_array(adc: AdcSpec, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vector form of `quantize`: (int16 codes, boolean saturation flags)."""
    scaled = np.asarray(values, dtype=np.float64) / adc.lsb
    mag = np.floor(np.abs(scaled) + 0.5)
    codes = np.where(scaled < 0, -mag, mag)
    saturated = (codes < CODE_MIN) | (codes > CODE_MAX)
    codes = np.clip(codes, CODE_MIN, CODE_MAX)
    return codes.astype(np.int16), saturated


def dequantize(adc: AdcSpec, code: int | np.ndarray):
    """Map a code (or array of codes) back to mV: code * lsb."""
    return code * adc.lsb
