"""Command line entry point.

One tool drives the whole pipeline: synthesize records, run the edge
agent against the simulator, serve the HTTP API, trigger training, ask
for classifications, and run the offline evaluation loop.

Exit codes: 0 success, 2 validation problem (bad input, rejected
request), 3 transport problem (service unreachable, retries exhausted),
4 internal error. --seed makes every data-producing command
bit-reproducible: record ids come from the seeded stream and synthetic
records carry a fixed timestamp, so reruns emit identical bytes.
"""

from __future__ import annotations

import dataclasses
import json
import sys
import uuid
from pathlib import Path

import click
import numpy as np

from . import edge
from .evaluate import evaluate_pack, render_report
from .forest import DatasetError
from .packio import (
    Pack,
    PackError,
    _jittered_array,
    _parse_array_file,
    _parse_scenario_file,
    builtin_pack_dir,
    builtin_pack_names,
    generate_pack_records,
    load_pack,
)
from .records import RecordValidationError, record_to_document
from .service.client import ServiceClient, ServiceError, ServiceUnreachable
from .simulate import SIM_STARTED_AT

EXIT_VALIDATION = 2
EXIT_TRANSPORT = 3
EXIT_INTERNAL = 4


def _fail(code: int, kind: str, message: str, as_json: bool) -> None:
    if as_json:
        click.echo(json.dumps({"error": kind, "message": message}), err=True)
    else:
        click.echo(f"error ({kind}): {message}", err=True)
    sys.exit(code)


def _run(work, as_json: bool):
    """Run a command body, mapping failures onto the documented exit codes."""
    try:
        return work()
    except (ServiceUnreachable, edge.TransportError) as exc:
        _fail(EXIT_TRANSPORT, "transport", str(exc), as_json)
    except ServiceError as exc:
        code = EXIT_INTERNAL if exc.status_code >= 500 else EXIT_VALIDATION
        _fail(code, "service", str(exc), as_json)
    except edge.ValidationRejectedError as exc:
        _fail(EXIT_VALIDATION, "validation", str(exc), as_json)
    except (PackError, RecordValidationError, DatasetError, ValueError, OSError) as exc:
        _fail(EXIT_VALIDATION, "validation", str(exc), as_json)
    except Exception as exc:
        _fail(EXIT_INTERNAL, "internal", f"{type(exc).__name__}: {exc}", as_json)


def _resolve_scenario(ref: str):
    """Find a scenario by YAML path (array.yaml beside it) or 'pack/name'.

    Returns (array, adc, variability, pack_scenario, pack_name).
    """
    path = Path(ref)
    if path.is_file():
        array_path = path.parent / "array.yaml"
        if not array_path.is_file():
            raise PackError(
                f"{ref}: scenario files live next to their array.yaml; none found"
            )
        array, adc, variability = _parse_array_file(array_path)
        return array, adc, variability, _parse_scenario_file(path), path.parent.name
    pack_name, _, scenario_name = ref.partition("/")
    if scenario_name and pack_name in builtin_pack_names():
        pack = load_pack(builtin_pack_dir(pack_name))
        for ps in pack.scenarios:
            if ps.scenario.name == scenario_name:
                return pack.array, pack.adc, pack.variability, ps, pack_name
        raise PackError(f"pack {pack_name!r} has no scenario named {scenario_name!r}")
    raise PackError(
        f"scenario {ref!r} not found: pass a scenario YAML file or a bundled "
        f"reference like {'{pack}/{name}'!r} (packs: {', '.join(builtin_pack_names())})"
    )


def _resolve_pack(ref: str) -> Path:
    path = Path(ref)
    if path.is_dir():
        return path
    if ref in builtin_pack_names():
        return builtin_pack_dir(ref)
    raise PackError(
        f"scenario pack {ref!r} not found: pass a pack directory or one of "
        f"the bundled names ({', '.join(builtin_pack_names())})"
    )


@click.group()
@click.version_option(package_name="etongue")
def main() -> None:
    """Portable e-tongue toolkit: simulate, acquire, serve, train, classify."""


@main.command()
@click.option("--scenario", "scenario_ref", required=True,
              help="Scenario YAML file or bundled reference like beverages/beverage-a.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Run seed; identical seeds reproduce identical records.")
@click.option("--out", "out_dir", default="records", show_default=True,
              type=click.Path(file_okay=False), help="Directory for record JSON files.")
@click.option("--replicates", type=int, default=None,
              help="Override the scenario's replicate count.")
@click.option("--device", default="sim-0", show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def simulate(scenario_ref, seed, out_dir, replicates, device, as_json):
    """Synthesize measurement records and write them as JSON files."""

    def work():
        array, adc, variability, ps, pack_name = _resolve_scenario(scenario_ref)
        if replicates is not None:
            if replicates < 1:
                raise ValueError("--replicates must be at least 1")
            ps_run = dataclasses.replace(ps, replicates=replicates)
        else:
            ps_run = ps
        pack = Pack(pack_name, array, adc, variability, (ps_run,))
        records = generate_pack_records(pack, seed, device_id=device)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ids = []
        for record in records:
            doc = record_to_document(record)
            (out / f"{record.record_id}.json").write_text(
                json.dumps(doc, indent=2) + "\n", encoding="utf-8"
            )
            ids.append(record.record_id)
        if as_json:
            click.echo(json.dumps({"out": str(out), "seed": seed, "records": ids}))
        else:
            click.echo(f"wrote {len(ids)} record(s) to {out}/ (seed {seed})")
            for rid in ids:
                click.echo(f"  {rid}")

    _run(work, as_json)


@main.command()
@click.option("--scenario", "scenario_ref", required=True,
              help="Scenario YAML file or bundled reference like beverages/beverage-a.")
@click.option("--endpoint", required=True, help="Service base URL, e.g. http://127.0.0.1:8765.")
@click.option("--time-scale", type=float, default=0.0, show_default=True,
              help="Wall-clock pacing: 1.0 replays in real time, 0 runs flat out.")
@click.option("--label", default=None, help="Label to attach; omit for an unlabeled record.")
@click.option("--seed", type=int, default=None,
              help="Reproducible session; omit for fresh randomness.")
@click.option("--device", default="edge-0", show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def acquire(scenario_ref, endpoint, time_scale, label, seed, device, as_json):
    """Run the edge agent against the simulator and upload the record."""

    def work():
        array, adc, variability, ps, _ = _resolve_scenario(scenario_ref)
        run_seed = seed if seed is not None else int.from_bytes(uuid.uuid4().bytes[:4], "big")
        session_rng = np.random.default_rng([run_seed, ps.scenario.rng_seed])
        array_run = _jittered_array(array, variability, session_rng)
        scenario_run = dataclasses.replace(
            ps.scenario, rng_seed=int(session_rng.integers(0, 2**63 - 1))
        )
        record_id = str(uuid.UUID(bytes=session_rng.bytes(16), version=4))
        source = edge.SimulatedSource(array_run, adc, scenario_run)
        record = edge.run_acquisition(
            source,
            adc,
            ps.scenario.baseline_duration,
            ps.scenario.sample_duration,
            device_id=device,
            record_id=record_id,
            label=label,
            time_scale=time_scale,
            started_at=SIM_STARTED_AT if seed is not None else None,
        )
        confirmed = edge.upload(record, endpoint)
        if as_json:
            click.echo(json.dumps({
                "record_id": confirmed,
                "label": label,
                "n_frames": len(record.frames),
                "immersion_index": record.immersion_index,
            }))
        else:
            click.echo(
                f"uploaded {confirmed} ({len(record.frames)} frames, "
                f"immersion at {record.immersion_index}, label={label!r})"
            )

    _run(work, as_json)


@main.command()
@click.option("--addr", default="127.0.0.1:8765", show_default=True,
              help="Bind address as host:port.")
@click.option("--data", "data_dir", default=None,
              help="Data directory (default: $ETONGUE_DATA_DIR or ./etongue-data).")
@click.option("--seed", type=int, default=None, help="Accepted for uniformity; unused.")
def serve(addr, data_dir, seed):
    """Run the ingest/training/inference service until interrupted."""

    def work():
        import uvicorn

        from .service import create_app

        host, _, port_s = addr.rpartition(":")
        if not host or not port_s.isdigit():
            raise ValueError(f"--addr must look like host:port, got {addr!r}")
        app = create_app(data_dir)
        uvicorn.run(app, host=host, port=int(port_s), log_level="warning")

    _run(work, as_json=False)


@main.command()
@click.option("--endpoint", required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--label-filter", "label_filter", multiple=True,
              help="Train only on these labels (repeatable); default: all labeled records.")
@click.option("--trees", type=int, default=200, show_default=True)
@click.option("--max-depth", type=int, default=None)
@click.option("--min-leaf", type=int, default=1, show_default=True)
@click.option("--no-bootstrap", is_flag=True, help="Grow every tree on the full dataset.")
@click.option("--no-wait", is_flag=True, help="Return after submission instead of polling.")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def train(endpoint, seed, label_filter, trees, max_depth, min_leaf, no_bootstrap,
          no_wait, as_json):
    """Train a forest on the service's labeled records; print the descriptor."""

    def work():
        body = {
            "label_filter": list(label_filter) or None,
            "seed": seed,
            "hyperparams": {
                "n_trees": trees,
                "max_depth": max_depth,
                "min_samples_leaf": min_leaf,
                "bootstrap": not no_bootstrap,
            },
        }
        with ServiceClient(endpoint) as client:
            submitted = client.train(body)
            model_id = submitted["model_id"]
            descriptor = submitted if no_wait else client.wait_for_model(model_id)
        if as_json:
            click.echo(json.dumps(descriptor, indent=2))
            return
        status = descriptor.get("status", "unknown")
        click.echo(f"model {model_id}: {status}")
        if status == "failed":
            raise ServiceError(500, {"message": descriptor.get("error", "training failed")})
        if status != "ready":
            return
        click.echo(f"  classes: {', '.join(descriptor['classes'])}")
        click.echo(f"  records: {descriptor['n_records']}   "
                   f"features: {descriptor['n_features']}   "
                   f"trees: {descriptor['hyperparams']['n_trees']}")
        cv = descriptor.get("loocv") or {}
        if "accuracy" in cv:
            click.echo(f"  LOOCV accuracy: {cv['accuracy']:.4f} ({cv['accuracy_exact']})")
        elif "error" in cv:
            click.echo(f"  LOOCV unavailable: {cv['error']}")

    _run(work, as_json)


@main.command()
@click.option("--endpoint", required=True)
@click.option("--model", "model_id", required=True)
@click.option("--record", "record_id", required=True, help="Stored record id to classify.")
@click.option("--seed", type=int, default=None, help="Accepted for uniformity; unused.")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def infer(endpoint, model_id, record_id, seed, as_json):
    """Classify a stored record and print the result."""

    def work():
        with ServiceClient(endpoint) as client:
            result = client.infer(model_id, record_id=record_id)
        if as_json:
            click.echo(json.dumps(result, indent=2))
            return
        click.echo(f"record {result['record_id']} -> {result['top_class']} "
                   f"(confidence {result['confidence']:.3f}, "
                   f"{result['latency_ms']:.1f} ms)")
        for name in sorted(result["likelihoods"]):
            click.echo(f"  {name}: {result['likelihoods'][name]:.4f}")
        ranked = sorted(result["similarities"], key=lambda s: -s["proximity"])[:5]
        click.echo("  nearest training records:")
        for s in ranked:
            click.echo(f"    {s['record_id']} ({s['label']}): {s['proximity']:.3f}")

    _run(work, as_json)


@main.command()
@click.option("--scenario-pack", "pack_ref", required=True,
              help="Pack directory or bundled name (beverages, mineral_waters).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--trees", type=int, default=200, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def evaluate(pack_ref, seed, trees, as_json):
    """Offline pipeline: synthesize, preprocess, LOOCV, report."""

    def work():
        from .forest import Hyperparams

        report = evaluate_pack(
            _resolve_pack(pack_ref), seed, Hyperparams(n_trees=trees, seed=seed)
        )
        click.echo(json.dumps(report.to_dict(), indent=2) if as_json
                   else render_report(report))

    _run(work, as_json)


@main.command()
@click.option("--seed", type=int, default=None, help="Accepted for uniformity; unused.")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
def scenarios(seed, as_json):
    """List the bundled scenario packs and their scenarios."""

    def work():
        rows = []
        for name in builtin_pack_names():
            pack = load_pack(builtin_pack_dir(name))
            for ps in pack.scenarios:
                rows.append({
                    "pack": name,
                    "scenario": ps.scenario.name,
                    "label": ps.label,
                    "baseline_s": ps.scenario.baseline_duration,
                    "sample_s": ps.scenario.sample_duration,
                    "replicates": ps.replicates,
                })
        if as_json:
            click.echo(json.dumps({"scenarios": rows}, indent=2))
            return
        for row in rows:
            click.echo(f"{row['pack']}/{row['scenario']}: label={row['label']} "
                       f"baseline={row['baseline_s']}s sample={row['sample_s']}s "
                       f"replicates={row['replicates']}")

    _run(work, as_json)


if __name__ == "__main__":
    main()
