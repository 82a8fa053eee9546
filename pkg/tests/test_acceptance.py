"""Acceptance criteria, one test each.

Every test prints a single ``criterion N: PASS|FAIL ...`` line (visible even
under output capture) before asserting.  Run standalone with
``python3 tests/test_acceptance.py``.
"""

import json
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from _oracles import (
    auc_by_pairs,
    f1_by_hand,
    macro_auc_by_pairs,
    map_by_enumeration,
    p_at_k_by_enumeration,
    random_case,
)
from simdis import cli, experiment
from simdis import metrics as M
from simdis.labels import ExponentialDecay, LabelSet, Reciprocal
from simdis.losses import (
    ALL_STRATEGIES,
    Placement,
    Strategy,
    StrategyKind,
    batch_from_arrays,
    evaluate,
    loss_simdis,
    loss_supcon,
)
from simdis.synth import SynthSpec
from simdis.verify import check_theorems, grad_check, oracle_loss, random_batch


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")


def test_criterion_1_case_analysis(capsys):
    t0 = time.perf_counter()
    rows = cli.case_analysis_rows()
    elapsed = time.perf_counter() - t0
    exact = all(
        type(r[k]) is Fraction and r[k] == want
        for k in ("similarity", "dissimilarity", "weight")
        for r, want in zip(rows, cli.CASE_EXPECTED[k])
    )
    products = [r["weight"] for r in rows]
    ok = exact and products == [0, 1, Fraction(1, 9), Fraction(2, 3), Fraction(1, 3)] and elapsed < 1
    report(capsys, 1, ok, f"products {[str(p) for p in products]}, {elapsed:.3f}s")
    assert ok


def test_criterion_2_theorem_suite(capsys):
    t0 = time.perf_counter()
    reports = [r for size in range(2, 6) for r in check_theorems(size)]
    reports += check_theorems(20, exhaustive=False, trials=100_000, seed=0)
    elapsed = time.perf_counter() - t0
    failures = sum(r.failures for r in reports)
    ok = failures == 0 and elapsed < 30
    report(capsys, 2, ok, f"{len(reports)} property runs, {failures} failures, {elapsed:.1f}s")
    assert ok


def test_criterion_3_reduction_identity(capsys):
    worst = 0.0
    for k in range(100):
        rng = np.random.default_rng([3, k])
        L = int(rng.integers(1, 8))
        members = rng.choice(L, size=int(rng.integers(1, L + 1)), replace=False).tolist()
        n = 2 * int(rng.integers(1, 9))
        z = rng.normal(size=(n, int(rng.integers(2, 9))))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        b = batch_from_arrays(z, [members] * n, float(rng.choice([0.07, 0.1, 0.5, 1.0])), L)
        ref = loss_supcon(b, "ALL").total
        for placement in Placement:
            for penalty in (Reciprocal(), ExponentialDecay(0.5)):
                worst = max(worst, abs(loss_simdis(b, placement, penalty).total - ref))
    ok = worst < 1e-12
    report(capsys, 3, ok, f"max |diff| {worst:.2e} over 100 batches x 6 variants")
    assert ok


def test_criterion_4_oracle_equivalence(capsys):
    worst = 0.0
    for k in range(1000):
        b = random_batch(4, k, max_size=32)
        for s in ALL_STRATEGIES:
            o = oracle_loss(b, s)
            m = evaluate(b, s, with_gradient=False).total
            worst = max(worst, abs(m - o) / abs(o) if o else abs(m))
    ok = worst < 1e-10
    report(capsys, 4, ok, f"max relative error {worst:.2e} over 1000 batches x {len(ALL_STRATEGIES)} strategies")
    assert ok


def test_criterion_5_gradients(capsys):
    worst, failures, identity = 0.0, 0, 0.0
    for k in range(100):
        b = random_batch(5, k, max_size=16, max_dim=8)
        for s in ALL_STRATEGIES:
            r = grad_check(b, s, tolerance=1e-6)
            failures += r.failures
            worst = max(worst, r.max_error)
        inside = evaluate(b, Strategy.simdis(Placement.INSIDE_LOG)).gradient
        identity = max(identity, float(np.abs(inside - evaluate(b, Strategy.any()).gradient).max()))
    ok = failures == 0 and identity < 1e-12
    report(capsys, 5, ok, f"max finite-difference error {worst:.2e}, inside-log vs ANY gradient {identity:.2e}")
    assert ok


@pytest.mark.slow
def test_criterion_6_long_tail_direction(capsys):
    cfg = experiment.ExperimentConfig(synth=SynthSpec(num_classes=20, num_samples=2000, tail_exponent=1.5))
    outside, inside = Strategy.simdis(Placement.OUTSIDE_LOG), Strategy.simdis(Placement.INSIDE_LOG)
    t0 = time.perf_counter()
    results = experiment.seed_sweep(cfg, [Strategy.any(), outside, inside], range(5))
    elapsed = time.perf_counter() - t0
    f1_any = [r.metrics["macro_f1"] for r in results["ANY"]]
    f1_out = [r.metrics["macro_f1"] for r in results[outside.name]]
    wins = sum(a >= b for a, b in zip(f1_out, f1_any))
    decreases = all(
        r.trace.contrastive_loss[-1] < r.trace.contrastive_loss[0]
        for name in (outside.name, inside.name)
        for r in results[name]
    )
    ok = wins >= 3 and decreases and elapsed < 300
    report(capsys, 6, ok, f"outside-log wins {wins}/5 "
           f"(macro-F1 {np.round(f1_out, 3).tolist()} vs ANY {np.round(f1_any, 3).tolist()}), "
           f"loss decreases in all seeds: {decreases}, {elapsed:.0f}s")
    assert ok


def test_criterion_7_determinism(capsys, tmp_path):
    cfg = {
        "synth": {"num_classes": 10, "num_samples": 300, "tail_exponent": 1.5, "seed": 1},
        "train": {"epochs_contrastive": 5, "epochs_probe": 10, "seed": 1},
    }
    blobs = []
    for run in ("a", "b"):
        cfg["output_dir"] = str(tmp_path / run)
        path = tmp_path / f"{run}.json"
        path.write_text(json.dumps(cfg))
        assert cli.main(["run", "--config", str(path)]) == 0
        blobs.append((tmp_path / run / "metrics.json").read_bytes())
    ok = blobs[0] == blobs[1]
    report(capsys, 7, ok, f"metrics.json {len(blobs[0])} bytes, identical={ok}")
    assert ok


def _preds(scores, truth):
    L = truth.shape[1]
    return M.Predictions(scores, [LabelSet.of(np.flatnonzero(r), L) for r in truth])


def test_criterion_8_metric_oracles(capsys):
    rng = np.random.default_rng(8)
    worst = {"f1": 0.0, "mAP": 0.0, "p@k": 0.0, "auc": 0.0}
    for case in range(50):
        scores, truth = random_case(rng, int(rng.integers(5, 25)), int(rng.integers(2, 7)), ties=case % 2 == 1)
        p = _preds(scores, truth)
        k = int(rng.integers(1, truth.shape[1] + 1))
        hard = scores >= 0.5
        worst["f1"] = max(worst["f1"], abs(M.f1(p, "micro") - f1_by_hand(truth, hard, "micro")),
                          abs(M.f1(p, "macro") - f1_by_hand(truth, hard, "macro")))
        worst["mAP"] = max(worst["mAP"], abs(M.mean_average_precision(p) - map_by_enumeration(scores, truth)))
        worst["p@k"] = max(worst["p@k"], abs(M.precision_at_k(p, k) - p_at_k_by_enumeration(scores, truth, k)))
        cells = abs(M.auc(p, "micro") - auc_by_pairs(scores.ravel(), truth.ravel()))
        if M.degenerate_classes(p) != list(range(truth.shape[1])):
            cells = max(cells, abs(M.auc(p, "macro") - macro_auc_by_pairs(scores, truth)))
        worst["auc"] = max(worst["auc"], cells)
    ok = all(v <= 1e-12 for v in worst.values())
    report(capsys, 8, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " over 50 cases")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
