"""Scenario packs: directories of YAML files describing a measurement campaign.

A pack holds one `array.yaml` (electrode array, ADC, and session
variability used for every scenario in the pack) plus one file per
scenario. Scenario fields mirror the Scenario type: name,
baseline_composition / sample_composition (ppm per ion),
baseline_duration / sample_duration (seconds), rng_seed, and two
pack-only extras: `replicates` (how many records to synthesize) and an
optional `label` (defaults to the scenario name).

Session variability models what changes between repeated immersions of
a real array: slope efficiency, standing offset, and drift wander per
electrode. Each synthesized record draws its own electrode parameters
around the pack nominals, so replicates of one scenario are similar but
not identical in exactly the way repeated wet measurements are.

Two bundled packs live under etongue/packs: `beverages` (three widely
separated drink-like compositions) and `mineral_waters` (four bottled
waters whose labeled Na+/K+/Cl- contents sit close together).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .ions import IonComposition
from .records import MeasurementRecord
from .sensor import AdcSpec, ArraySpec, ElectrodeSpec, Scenario
from .simulate import simulate_acquisition


class PackError(ValueError):
    """A pack directory or one of its files is malformed."""


@dataclass(frozen=True)
class SessionVariability:
    """Per-record electrode parameter scatter (standard deviations)."""

    slope_rel_std: float = 0.0      # relative, multiplies slope_s
    e0_std: float = 0.0             # mV
    drift_std: float = 0.0          # mV/s

    def __post_init__(self) -> None:
        for name in ("slope_rel_std", "e0_std", "drift_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class PackScenario:
    scenario: Scenario
    label: str
    replicates: int


@dataclass(frozen=True)
class Pack:
    name: str
    array: ArraySpec
    adc: AdcSpec
    variability: SessionVariability
    scenarios: tuple[PackScenario, ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(sorted({s.label for s in self.scenarios}))


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise PackError(f"{where}: missing required field {key!r}")
    return mapping[key]


def _load_yaml(path: Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise PackError(f"{path.name}: invalid YAML ({exc})") from exc
    if not isinstance(doc, dict):
        raise PackError(f"{path.name}: expected a mapping at top level")
    return doc


def _parse_array_file(path: Path) -> tuple[ArraySpec, AdcSpec, SessionVariability]:
    doc = _load_yaml(path)
    where = path.name
    adc_doc = _require(doc, "adc", where)
    adc = AdcSpec(
        full_scale=float(adc_doc.get("full_scale_mv", 2048.0)),
        lsb=float(adc_doc.get("lsb_mv", 0.0625)),
        sample_rate=float(adc_doc.get("sample_rate_hz", 2.0)),
    )
    electrodes = []
    for e_doc in _require(doc, "electrodes", where):
        try:
            electrodes.append(
                ElectrodeSpec(
                    id=int(_require(e_doc, "id", where)),
                    primary_ion=str(_require(e_doc, "primary_ion", where)),
                    slope_s=float(_require(e_doc, "slope_mv_per_decade", where)),
                    e0=float(e_doc.get("e0_mv", 0.0)),
                    selectivity={str(k): float(v) for k, v in (e_doc.get("selectivity") or {}).items()},
                    tau=float(e_doc.get("tau_s", 2.0)),
                    drift_rate=float(e_doc.get("drift_mv_per_s", 0.0)),
                    noise_std=float(e_doc.get("noise_std_mv", 0.0)),
                )
            )
        except ValueError as exc:
            raise PackError(f"{where}: electrode entry invalid: {exc}") from exc
    try:
        array = ArraySpec(
            electrodes=tuple(electrodes),
            reference_index=int(doc.get("reference_electrode", 4)),
        )
    except ValueError as exc:
        raise PackError(f"{where}: {exc}") from exc
    sv_doc = doc.get("session") or {}
    variability = SessionVariability(
        slope_rel_std=float(sv_doc.get("slope_rel_std", 0.0)),
        e0_std=float(sv_doc.get("e0_std_mv", 0.0)),
        drift_std=float(sv_doc.get("drift_std_mv_per_s", 0.0)),
    )
    return array, adc, variability


def _parse_scenario_file(path: Path) -> PackScenario:
    doc = _load_yaml(path)
    where = path.name
    try:
        scenario = Scenario(
            name=str(_require(doc, "name", where)),
            baseline_composition=IonComposition(
                {str(k): float(v) for k, v in _require(doc, "baseline_composition", where).items()}
            ),
            sample_composition=IonComposition(
                {str(k): float(v) for k, v in _require(doc, "sample_composition", where).items()}
            ),
            baseline_duration=float(doc.get("baseline_duration", 20.0)),
            sample_duration=float(doc.get("sample_duration", 60.0)),
            rng_seed=int(doc.get("rng_seed", 0)),
        )
    except PackError:
        raise
    except (ValueError, KeyError, AttributeError) as exc:
        raise PackError(f"{where}: {exc}") from exc
    replicates = int(doc.get("replicates", 1))
    if replicates < 1:
        raise PackError(f"{where}: replicates must be >= 1")
    label = str(doc.get("label", scenario.name))
    return PackScenario(scenario=scenario, label=label, replicates=replicates)


def load_pack(pack_dir: str | Path) -> Pack:
    """Load and validate a scenario pack directory."""
    root = Path(pack_dir)
    if not root.is_dir():
        raise PackError(f"scenario pack directory not found: {root}")
    array_path = root / "array.yaml"
    if not array_path.exists():
        raise PackError(f"{root}: pack is missing array.yaml")
    array, adc, variability = _parse_array_file(array_path)
    scenario_files = sorted(p for p in root.glob("*.yaml") if p.name != "array.yaml")
    if not scenario_files:
        raise PackError(f"{root}: pack has no scenario files")
    scenarios = tuple(_parse_scenario_file(p) for p in scenario_files)
    names = [s.scenario.name for s in scenarios]
    if len(set(names)) != len(names):
        raise PackError(f"{root}: duplicate scenario names: {names}")
    return Pack(
        name=root.name,
        array=array,
        adc=adc,
        variability=variability,
        scenarios=scenarios,
    )


def builtin_pack_dir(name: str) -> Path:
    """Filesystem path of a bundled pack (`beverages` or `mineral_waters`)."""
    base = resources.files("etongue") / "packs" / name
    path = Path(str(base))
    if not path.is_dir():
        raise PackError(f"no bundled scenario pack named {name!r}")
    return path


def builtin_pack_names() -> tuple[str, ...]:
    base = Path(str(resources.files("etongue") / "packs"))
    if not base.is_dir():
        return ()
    return tuple(sorted(p.name for p in base.iterdir() if (p / "array.yaml").exists()))


def _jittered_array(array: ArraySpec, variability: SessionVariability, rng) -> ArraySpec:
    """Draw one session's electrode parameters around the pack nominals.

    Draw order is fixed (electrodes ascending by id; slope, e0, drift per
    electrode) so records are reproducible from their seeds.
    """
    v = variability
    if v.slope_rel_std == 0 and v.e0_std == 0 and v.drift_std == 0:
        return array
    jittered = []
    for e in sorted(array.electrodes, key=lambda e: e.id):
        mult = 1.0 + rng.normal(0.0, v.slope_rel_std) if v.slope_rel_std > 0 else 1.0
        # keep the film responsive and the slope sign intact
        mult = min(max(mult, 0.2), 1.8)
        e0 = e.e0 + (rng.normal(0.0, v.e0_std) if v.e0_std > 0 else 0.0)
        drift = e.drift_rate + (rng.normal(0.0, v.drift_std) if v.drift_std > 0 else 0.0)
        jittered.append(replace(e, slope_s=e.slope_s * mult, e0=e0, drift_rate=drift))
    return replace(array, electrodes=tuple(jittered))


def generate_pack_records(
    pack: Pack, run_seed: int, device_id: str = "sim-0"
) -> list[MeasurementRecord]:
    """Synthesize every scenario's replicates, deterministically in run_seed.

    Record r of a scenario is seeded by (run_seed, scenario rng_seed, r):
    one stream drives the session parameter draw, an independent frame
    seed drawn from it drives the acquisition itself.
    """
    records = []
    for ps in sorted(pack.scenarios, key=lambda s: s.scenario.name):
        for r in range(ps.replicates):
            session_rng = np.random.default_rng([run_seed, ps.scenario.rng_seed, r])
            array_r = _jittered_array(pack.array, pack.variability, session_rng)
            frame_seed = int(session_rng.integers(0, 2**63 - 1))
            scenario_r = replace(ps.scenario, rng_seed=frame_seed)
            records.append(
                simulate_acquisition(
                    array_r, pack.adc, scenario_r, device_id=device_id, label=ps.label
                )
            )
    return records
