"""Ion bookkeeping: charge numbers, molar masses, and liquid compositions.

Concentrations are carried around as ppm (mg/L) because that is how
bottled-water labels and bench protocols state them; the electrode model
wants mol/L, so the conversion lives here next to the registry it needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping


class UnknownIonError(KeyError):
    """An ion identifier is missing from the registry or a composition."""


# identifier -> (charge number z, molar mass in g/mol)
# Rounded standard atomic/formula weights; two decimals is plenty for ppm work.
_REGISTRY: dict[str, tuple[int, float]] = {
    "H+": (1, 1.01),
    "Li+": (1, 6.94),
    "Na+": (1, 22.99),
    "K+": (1, 39.10),
    "NH4+": (1, 18.04),
    "Ca2+": (2, 40.08),
    "Mg2+": (2, 24.31),
    "F-": (-1, 19.00),
    "Cl-": (-1, 35.45),
    "Br-": (-1, 79.90),
    "I-": (-1, 126.90),
    "NO3-": (-1, 62.00),
    "HCO3-": (-1, 61.02),
    "SO42-": (-2, 96.06),
}


def register_ion(ion: str, charge: int, molar_mass: float) -> None:
    """Add or replace a registry entry.

    Charge must be a nonzero integer and molar mass strictly positive;
    everything downstream (slope sign checks, ppm conversion) relies on it.
    """
    if not isinstance(charge, int) or charge == 0:
        raise ValueError(f"charge number for {ion!r} must be a nonzero integer, got {charge!r}")
    if not molar_mass > 0:
        raise ValueError(f"molar mass for {ion!r} must be positive, got {molar_mass!r}")
    _REGISTRY[ion] = (charge, float(molar_mass))


def known_ions() -> tuple[str, ...]:
    return tuple(_REGISTRY)


def ion_charge(ion: str) -> int:
    try:
        return _REGISTRY[ion][0]
    except KeyError:
        raise UnknownIonError(f"unknown ion identifier {ion!r}") from None


def ion_molar_mass(ion: str) -> float:
    try:
        return _REGISTRY[ion][1]
    except KeyError:
        raise UnknownIonError(f"unknown ion identifier {ion!r}") from None


@dataclass(frozen=True)
class IonComposition:
    """Ionic content of a liquid, as ppm (mg/L) per ion identifier.

    All ions must be registered and all concentrations finite and >= 0.
    An ion absent from `entries` is simply at zero concentration.
    """

    entries: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        clean: dict[str, float] = {}
        for ion, ppm in self.entries.items():
            if ion not in _REGISTRY:
                raise UnknownIonError(f"unknown ion identifier {ion!r}")
            ppm = float(ppm)
            if not (math.isfinite(ppm) and ppm >= 0.0):
                raise ValueError(f"concentration of {ion!r} must be finite and >= 0, got {ppm!r}")
            clean[ion] = ppm
        object.__setattr__(self, "entries", clean)

    def ppm(self, ion: str) -> float:
        """Concentration in ppm; zero when the ion is not listed."""
        if ion not in _REGISTRY:
            raise UnknownIonError(f"unknown ion identifier {ion!r}")
        return self.entries.get(ion, 0.0)

    def molar(self, ion: str) -> float:
        """Molar concentration (mol/L); zero when the ion is not listed."""
        return self.ppm(ion) / (ion_molar_mass(ion) * 1000.0)

    def ions(self) -> tuple[str, ...]:
        return tuple(self.entries)


def to_molar(composition: IonComposition, ion: str) -> float:
    """Convert a listed ion's ppm to mol/L.

    ppm is mg per liter, so dividing by (molar mass in g/mol x 1000)
    gives mol/L. The ion must actually appear in the composition;
    use `IonComposition.molar` when silent zeros are wanted.
    """
    if ion not in composition.entries:
        raise UnknownIonError(f"ion {ion!r} not present in composition")
    return composition.entries[ion] / (ion_molar_mass(ion) * 1000.0)
