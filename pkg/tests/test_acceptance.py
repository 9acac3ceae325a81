"""Acceptance gate for the finished system.

Each test is one acceptance criterion; run with -v to read the suite as a
pass/fail checklist. Tolerances are part of the criteria: rational
arithmetic and bit equality where exactness is claimed, 1e-6 relative
error for slope recovery, wall-clock budgets for the evaluation sweep
and service latency.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from fractions import Fraction
from statistics import median
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from etongue.evaluate import evaluate_pack
from etongue.forest import (
    Hyperparams,
    accuracy_from_confusion,
    loocv,
    model_to_document,
    predict_proba,
    train,
)
from etongue.frames import AcquisitionFrame, FrameError, decode_frame, encode_frame
from etongue.ions import IonComposition
from etongue.packio import builtin_pack_dir
from etongue.preprocess import FeatureVector, preprocess
from etongue.records import record_to_document
from etongue.reference import (
    BEVERAGE_CONFUSION,
    REPORTED_BEVERAGE_LOOCV_ACCURACY,
    REPORTED_HUMAN_PANEL_ACCURACY,
    REPORTED_WATER_ACCURACY,
    WATER_CONFUSION,
)
from etongue.sensor import AdcSpec, dequantize, electrode_potential, quantize, quantize_array
from etongue.service import create_app
from etongue.simulate import simulate_acquisition

from .conftest import make_adc, make_array, make_electrode, make_scenario, separable_dataset
from .oracles import build_brute_tree, proba_from_document
from .test_preprocess import record_from_codes

CLASSES = ("alpha", "bravo", "charlie")


def fv(rid, label, values):
    values = np.asarray(values, dtype=np.float64)
    return FeatureVector(record_id=rid, label=label, values=values, n_sample=values.size // 3)


# ---------------------------------------------------------------------------
# published-table arithmetic and constants


def test_confusion_table_arithmetic_is_exact():
    beverage = accuracy_from_confusion(BEVERAGE_CONFUSION)
    assert beverage == Fraction(20, 21)
    water = accuracy_from_confusion(WATER_CONFUSION)
    assert water == Fraction(58, 94) == Fraction(29, 47)
    assert f"{float(water):.3g}" == "0.617"  # three significant figures


def test_published_accuracy_figures_are_kept_verbatim():
    assert REPORTED_BEVERAGE_LOOCV_ACCURACY == 0.953
    assert REPORTED_WATER_ACCURACY == 0.617
    assert REPORTED_HUMAN_PANEL_ACCURACY == 0.306
    # the beverage table itself rounds to 0.952; the published 95.3% figure
    # is carried as reported, the mismatch documented rather than reconciled
    assert round(float(Fraction(20, 21)), 3) == 0.952
    assert round(float(Fraction(20, 21)), 3) != REPORTED_BEVERAGE_LOOCV_ACCURACY


# ---------------------------------------------------------------------------
# simulator fidelity


def test_slope_regression_over_four_decades_recovers_configuration():
    electrode = make_electrode(ion="Na+", slope=55.0, e0=90.0)
    # nine log-spaced molar concentrations spanning 1e-4 .. 1
    conc = np.logspace(-4, 0, 9)
    ppm = conc * 22.99 * 1000.0
    potentials = [
        electrode_potential(electrode, IonComposition({"Na+": float(p)})) for p in ppm
    ]
    fitted = np.polyfit(np.log10(conc), potentials, 1)[0]
    assert abs(fitted - 55.0) / 55.0 <= 1e-6


def test_decade_step_response_equals_slope_exactly():
    # the synthetic monovalent ion with molar mass 1e-3 makes ppm values
    # equal molar activities exactly, so each decade step is one float
    # product with no accumulated arithmetic
    electrode = make_electrode(ion="Xq+", slope=59.16, e0=0.0)

    def potential(c):
        return electrode_potential(electrode, IonComposition({"Xq+": c}))

    for k in range(4):
        step = potential(10.0 ** (-k)) - potential(10.0 ** (-k - 1))
        assert step == 59.16  # exact equality, not approx


def test_thousand_randomized_records_have_bitwise_offset_invariance():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n_base = int(rng.integers(4, 11))
        n_sample = int(rng.integers(6, 21))
        codes = rng.integers(-2000, 2001, size=(n_base + n_sample, 3))
        offsets = rng.integers(-20000, 20001, size=3)
        plain = preprocess(record_from_codes(codes, n_base))
        shifted = preprocess(record_from_codes(codes + offsets[None, :], n_base))
        assert plain.values.tobytes() == shifted.values.tobytes()


def test_quantization_round_trip_is_exhaustive():
    adc = AdcSpec()
    codes = np.arange(-32768, 32768, dtype=np.int64)
    back, saturated = quantize_array(adc, dequantize(adc, codes))
    assert back.dtype == np.int16
    assert np.array_equal(back.astype(np.int64), codes)
    assert not saturated.any()
    # the scalar path agrees with the vectorized one
    for code in range(-32768, 32768, 257):
        assert quantize(adc, dequantize(adc, code)) == (code, False)


# ---------------------------------------------------------------------------
# frame codec


def test_frame_codec_survives_1e5_random_round_trips():
    rng = np.random.default_rng(7)
    n = 100_000
    seqs = rng.integers(0, 2**32, size=n, dtype=np.uint64)
    times = rng.integers(0, 2**32, size=n, dtype=np.uint64)
    codes = rng.integers(-32768, 32768, size=(n, 3))
    statuses = rng.integers(0, 4, size=n)  # both flag bits, reserved clear
    for i in range(n):
        frame = AcquisitionFrame(
            seq=int(seqs[i]),
            t_ms=int(times[i]),
            codes=(int(codes[i, 0]), int(codes[i, 1]), int(codes[i, 2])),
            status=int(statuses[i]),
        )
        assert decode_frame(encode_frame(frame)) == frame


def test_frame_codec_detects_every_single_bit_corruption():
    rng = np.random.default_rng(8)
    for _ in range(1000):
        frame = AcquisitionFrame(
            seq=int(rng.integers(0, 2**32)),
            t_ms=int(rng.integers(0, 2**32)),
            codes=tuple(int(c) for c in rng.integers(-32768, 32768, size=3)),
            status=int(rng.integers(0, 4)),
        )
        wire = encode_frame(frame)
        detected = 0
        for bit in range(144):
            corrupted = bytearray(wire)
            corrupted[bit >> 3] ^= 1 << (bit & 7)
            try:
                decode_frame(bytes(corrupted))
            except FrameError:
                detected += 1
        assert detected == 144


# ---------------------------------------------------------------------------
# forest against independent oracles


def test_single_trees_match_hand_enumerated_cart():
    rng = np.random.default_rng(11)
    checked = 0
    for trial in range(200):
        p = 3 if trial % 2 else 6
        if trial % 5 == 0:
            X = rng.integers(0, 3, size=(4, p)).astype(np.float64)  # duplicate-heavy
        else:
            X = rng.normal(0.0, 1.0, size=(4, p))
        y_raw = rng.integers(0, 2 + trial % 2, size=4)
        y = np.unique(y_raw, return_inverse=True)[1]
        present = int(y.max()) + 1
        if present < 2:
            continue
        feats = [fv(f"r{i}", CLASSES[y[i]], X[i]) for i in range(4)]
        model = train(
            feats,
            Hyperparams(n_trees=1, bootstrap=False, features_per_split=p, seed=0),
        )
        grown = model_to_document(model)["trees"][0]
        assert grown == build_brute_tree(X, y, present)
        checked += 1
    assert checked >= 150  # the all-one-class draws are skipped


def test_predict_proba_matches_the_document_walker():
    X, y = separable_dataset(seed=3, n_per_class=5, n_features=6)
    feats = [fv(f"r{i:02d}", CLASSES[y[i]], X[i]) for i in range(len(y))]
    model = train(feats, Hyperparams(n_trees=10, seed=2))
    doc = model_to_document(model)
    rng = np.random.default_rng(4)
    queries = np.vstack([X[::3], rng.normal(0.0, 2.0, size=(10, 6))])
    for q in queries:
        assert predict_proba(model, q) == pytest.approx(
            proba_from_document(doc, q), abs=1e-12
        )


def test_loocv_runs_one_fold_per_record_with_exact_accuracy():
    X, y = separable_dataset(seed=5, n_per_class=5, n_features=6)
    feats = [fv(f"r{i:02d}", CLASSES[y[i]], X[i]) for i in range(len(y))]
    result = loocv(feats, Hyperparams(n_trees=10, seed=1))
    n = len(feats)
    assert len(result.record_ids) == n
    assert len(result.predicted) == n
    assert result.proba.shape == (n, 3)
    trace = int(np.trace(result.confusion.counts))
    total = int(result.confusion.counts.sum())
    assert total == n
    assert result.accuracy == Fraction(trace, total)
    assert result.accuracy == accuracy_from_confusion(result.confusion)


# ---------------------------------------------------------------------------
# end-to-end pack ordering and importance locality

SWEEP_TREES = 50
SWEEP_SEEDS = range(10)


@pytest.fixture(scope="module")
def pack_sweep():
    beverages = builtin_pack_dir("beverages")
    waters = builtin_pack_dir("mineral_waters")
    # compile the kernels outside the timed window; the budget is for the
    # evaluation pipeline, not the one-time jit cost
    evaluate_pack(beverages, 0, Hyperparams(n_trees=2, seed=0))
    t0 = time.perf_counter()
    bev = [evaluate_pack(beverages, s, Hyperparams(n_trees=SWEEP_TREES, seed=s))
           for s in SWEEP_SEEDS]
    wat = [evaluate_pack(waters, s, Hyperparams(n_trees=SWEEP_TREES, seed=s))
           for s in SWEEP_SEEDS]
    elapsed = time.perf_counter() - t0
    return bev, wat, elapsed


def test_beverage_pack_reaches_95_percent_median_loocv(pack_sweep):
    bev, _, _ = pack_sweep
    accuracies = [float(r.accuracy) for r in bev]
    assert median(accuracies) >= 0.95


def test_water_pack_sits_between_chance_and_the_beverage_pack(pack_sweep):
    bev, wat, _ = pack_sweep
    bev_median = median(float(r.accuracy) for r in bev)
    wat_median = median(float(r.accuracy) for r in wat)
    assert wat_median > 0.25  # four balanced classes, chance is 1/4
    assert wat_median < bev_median


def test_two_pack_sweep_fits_the_time_budget(pack_sweep):
    _, _, elapsed = pack_sweep
    assert elapsed < 60.0


def test_early_transient_importance_dominates_late_positions(pack_sweep):
    bev, _, _ = pack_sweep
    early = median(r.early_mean for r in bev)
    late = median(r.late_mean for r in bev)
    assert early > late


# ---------------------------------------------------------------------------
# service under load


@pytest.fixture(scope="module")
def hundred_ingests(tmp_path_factory):
    client = TestClient(create_app(data_dir=tmp_path_factory.mktemp("acc-ingest")))
    rng = np.random.default_rng(99)
    base = record_to_document(record_from_codes(rng.integers(-500, 500, size=(12, 3)), 4))
    docs = [dict(base, record_id=f"acc-{i:03d}") for i in range(100)]
    with ThreadPoolExecutor(max_workers=100) as pool:
        codes = list(pool.map(
            lambda d: client.post("/v1/measurements", json=d).status_code, docs
        ))
    return client, docs, codes


def test_one_hundred_concurrent_ingests_store_exactly_one_hundred(hundred_ingests):
    client, _, codes = hundred_ingests
    assert codes == [201] * 100
    assert client.get("/v1/measurements", params={"page_size": 1}).json()["total"] == 100


def test_duplicate_upload_leaves_the_count_unchanged(hundred_ingests):
    client, docs, _ = hundred_ingests
    repeat = client.post("/v1/measurements", json=docs[17])
    assert repeat.status_code == 200
    assert repeat.json()["created"] is False
    assert client.get("/v1/measurements", params={"page_size": 1}).json()["total"] == 100


@pytest.fixture(scope="module")
def latency_rig(tmp_path_factory):
    """Service with a ready 200-tree model over 360-feature records."""
    client = TestClient(create_app(data_dir=tmp_path_factory.mktemp("acc-latency")))
    compositions = {
        "spring": {"Na+": 30.0, "K+": 8.0, "Cl-": 50.0},
        "brine": {"Na+": 900.0, "K+": 35.0, "Cl-": 1400.0},
    }
    first_id = None
    for label, sample in compositions.items():
        for seed in range(3):
            scenario = replace(
                make_scenario(name=label, seed=7 * seed + len(label)),
                sample_composition=IonComposition(sample),
            )
            record = simulate_acquisition(make_array(), make_adc(), scenario, label=label)
            doc = record_to_document(record)
            assert client.post("/v1/measurements", json=doc).status_code == 201
            first_id = first_id or doc["record_id"]

    r = client.post("/v1/models:train", json={"hyperparams": {"n_trees": 200}, "seed": 1})
    assert r.status_code == 202
    model_id = r.json()["model_id"]
    deadline = time.monotonic() + 120.0
    while time.monotonic() < deadline:
        body = client.get(f"/v1/models/{model_id}").json()
        if body["status"] != "training":
            break
        time.sleep(0.05)
    assert body["status"] == "ready", body.get("error")
    assert body["n_features"] == 360
    assert body["hyperparams"]["n_trees"] == 200
    return client, model_id, first_id


def test_inference_compute_stays_under_two_seconds(latency_rig):
    client, model_id, record_id = latency_rig
    # first call includes one-time jit work; the criterion is steady-state
    client.post(f"/v1/models/{model_id}:infer", json={"record_id": record_id})
    r = client.post(f"/v1/models/{model_id}:infer", json={"record_id": record_id})
    assert r.status_code == 200
    body = r.json()
    assert body["latency_ms"] < 2000.0
    assert body["top_class"] == "spring"
