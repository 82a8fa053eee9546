import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simdis.labels import LabelSet
from simdis.losses import (
    ALL_STRATEGIES,
    ContrastiveBatch,
    Placement,
    Strategy,
    batch_from_arrays,
    evaluate,
    gradient,
    loss_mulsupcon,
    loss_simdis,
    loss_supcon,
    pair_terms,
    positive_set,
    positive_weights,
)
from simdis.verify import grad_check, oracle_loss, random_batch

PLACEMENTS = list(Placement)


def test_fixture_positive_sets(relation_batch):
    assert positive_set(Strategy.all(), relation_batch, 0) == [(2, 1)]
    assert positive_set(Strategy.any(), relation_batch, 0) == [(2, 1), (3, 1), (4, 1), (5, 1)]
    assert positive_set(Strategy.simdis(), relation_batch, 0) == positive_set(Strategy.any(), relation_batch, 0)
    assert positive_set(Strategy.mulsupcon(), relation_batch, 0) == [(2, 3), (3, 1), (4, 2), (5, 3)]


def test_positive_set_excludes_anchor_and_checks_range(relation_batch):
    for s in ALL_STRATEGIES:
        for i in range(len(relation_batch)):
            assert all(p != i for p, _ in positive_set(s, relation_batch, i))
    with pytest.raises(IndexError):
        positive_set(Strategy.any(), relation_batch, 6)


def test_fixture_simdis_weights(relation_batch):
    w = positive_weights(relation_batch)[0]
    np.testing.assert_array_equal(w[2:], [1, 1 / 9, 2 / 3, 1 / 3])
    assert w[1] == 0  # R1 pair is not a positive


def test_single_pair_identical_labels_is_zero():
    b = batch_from_arrays([[1.0, 0.0], [0.0, 1.0]], [[0], [0]], 0.5)
    for s in ALL_STRATEGIES:
        assert evaluate(b, s).total == 0.0
        assert oracle_loss(b, s) == 0.0


def test_symmetric_two_way_softmax_gives_log2():
    # anchor 0: positive 1, negative 2, equal similarities
    b = batch_from_arrays([[1.0, 0.0], [0.0, 1.0], [0.0, -1.0]], [[0], [0], [1]], 1.0)
    assert evaluate(b, Strategy.any()).per_anchor[0] == pytest.approx(math.log(2), rel=1e-15)


def test_all_skips_anchors_without_positives(relation_batch):
    r = loss_supcon(relation_batch, "ALL")
    assert r.skipped_anchors == (1, 3, 4, 5)
    assert np.all(r.per_anchor[list(r.skipped_anchors)] == 0)


def test_mulsupcon_single_label_equals_any_over_batch_size():
    gen = np.random.default_rng(3)
    z = gen.normal(size=(10, 4))
    b = batch_from_arrays(z, [[c] for c in gen.integers(0, 3, size=10)], 0.3, universe_size=3)
    assert loss_mulsupcon(b).total == pytest.approx(loss_supcon(b, "ANY").total / 10, rel=1e-14)


def test_mulsupcon_fixture_against_oracle(relation_batch):
    assert loss_mulsupcon(relation_batch).total == pytest.approx(
        oracle_loss(relation_batch, Strategy.mulsupcon()), rel=1e-12
    )


def test_mulsupcon_cannot_separate_r2_from_r5():
    z = np.eye(6)
    z[5] = z[2]  # p5 shares p2's embedding
    b = batch_from_arrays(z, [[0, 1, 2], [3, 4, 5], [0, 1, 2], [0, 3, 4], [0, 1], [0, 1, 2, 3, 4]], 1.0)
    terms = pair_terms(b, Strategy.mulsupcon())[0]
    assert terms[2] == terms[5]
    assert terms[3] != terms[2] and terms[4] != terms[2]
    sd = pair_terms(b, Strategy.simdis())[0]
    assert len({sd[2], sd[3], sd[4], sd[5]}) == 4


@pytest.mark.parametrize("placement", PLACEMENTS)
def test_identical_label_sets_reduce_to_all(placement):
    for k in range(20):
        b = random_batch(100, k)
        y = b.labels[0]
        b = ContrastiveBatch(b.embeddings, (y,) * len(b), b.temperature)
        assert abs(loss_simdis(b, placement).total - loss_supcon(b, "ALL").total) < 1e-12


@pytest.mark.parametrize("placement", PLACEMENTS)
def test_equal_or_disjoint_batches_reduce_to_all(placement):
    gen = np.random.default_rng(5)
    for _ in range(20):
        n = int(gen.integers(2, 16))
        groups = [[0, 1], [2], [3, 4, 5]]
        ys = [groups[g] for g in gen.integers(0, 3, size=n)]
        b = batch_from_arrays(gen.normal(size=(n, 3)), ys, 0.2, universe_size=6)
        assert loss_simdis(b, placement).total == pytest.approx(loss_supcon(b, "ALL").total, abs=1e-12)


def test_inside_log_offset_identity():
    for k in range(30):
        b = random_batch(7, k, max_size=10)
        inside = loss_simdis(b, Placement.INSIDE_LOG)
        anyr = loss_supcon(b, "ANY")
        w = positive_weights(b)
        offset = 0.0
        for i in range(len(b)):
            pos = w[i] > 0
            if pos.any():
                offset -= np.log(w[i, pos]).mean()
        assert inside.total - anyr.total == pytest.approx(offset, abs=1e-10)
        np.testing.assert_allclose(inside.gradient, anyr.gradient, rtol=0, atol=1e-12)


def test_pair_terms_sum_to_per_anchor():
    for k in range(10):
        b = random_batch(11, k)
        for s in ALL_STRATEGIES:
            np.testing.assert_allclose(pair_terms(b, s).sum(axis=1), evaluate(b, s).per_anchor, atol=1e-10)


@given(st.integers(0, 10_000), st.sampled_from(ALL_STRATEGIES))
def test_permutation_equivariance(seed, strategy):
    b = random_batch(seed, 0, max_size=12)
    perm = np.random.default_rng(seed).permutation(len(b))
    pb = ContrastiveBatch(b.embeddings[perm], tuple(b.labels[i] for i in perm), b.temperature)
    r, pr = evaluate(b, strategy), evaluate(pb, strategy)
    assert pr.total == pytest.approx(r.total, rel=1e-12, abs=1e-12)
    np.testing.assert_allclose(pr.per_anchor, r.per_anchor[perm], rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(pr.gradient, r.gradient[perm], rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("strategy", ALL_STRATEGIES, ids=lambda s: s.name)
def test_extreme_similarities_stay_finite(strategy):
    tau = 0.07
    scale = math.sqrt(50 / tau)  # dot products reach +-50/tau
    z = np.array([[1, 0], [1, 0], [-1, 0], [0, 1], [0, -1]], dtype=float) * scale
    b = batch_from_arrays(z, [[0], [0, 1], [1], [0], [2]], tau, universe_size=3)
    r = evaluate(b, strategy)
    assert math.isfinite(r.total)
    assert np.all(np.isfinite(r.gradient))


def test_identical_embeddings_and_labels_give_zero_gradient():
    z = np.tile([[0.6, 0.8]], (6, 1))
    b = batch_from_arrays(z, [[0, 1]] * 6, 0.07)
    for s in ALL_STRATEGIES:
        assert np.abs(gradient(b, s)).max() < 1e-12


def test_outside_log_contribution_grows_with_weight():
    # each outside-log pair term is w * (non-negative ANY term), so it is monotone in w
    for k in range(10):
        b = random_batch(0, k)
        base = pair_terms(b, Strategy.any())
        assert np.all(base >= 0)
        np.testing.assert_allclose(
            pair_terms(b, Strategy.simdis(Placement.OUTSIDE_LOG)), positive_weights(b) * base, atol=1e-14
        )


def test_batch_validation():
    y = LabelSet.of([0], 2)
    with pytest.raises(ValueError):
        ContrastiveBatch(np.zeros((1, 2)), (y,))
    with pytest.raises(ValueError):
        ContrastiveBatch(np.array([[np.nan, 0], [0, 1]]), (y, y))
    with pytest.raises(ValueError):
        ContrastiveBatch(np.eye(2), (y, y), temperature=0)
    with pytest.raises(ValueError):
        ContrastiveBatch(np.ones((2, 2)), (y, y), normalized=True)
    ContrastiveBatch(np.eye(2), (y, y), normalized=True)


def test_batch_json_round_trip(relation_batch):
    back = ContrastiveBatch.from_json(relation_batch.to_json())
    np.testing.assert_array_equal(back.embeddings, relation_batch.embeddings)
    assert back.labels == relation_batch.labels and back.temperature == relation_batch.temperature


@pytest.mark.parametrize("name", ["ALL", "ANY", "MulSupCon", "SimDis-inside", "SimDis-outside",
                                  "SimDis-temperature", "SimDis-outside-exp0.5"])
def test_strategy_names_round_trip(name):
    assert Strategy.parse(name).name == name
    assert Strategy.from_dict(Strategy.parse(name).to_dict()) == Strategy.parse(name)


def test_bare_simdis_means_inside_log():
    assert Strategy.parse("SimDis").placement is Placement.INSIDE_LOG


def test_saturated_anchor_keeps_relative_precision():
    # positives at logit 10, the lone negative at -10: each anchor's loss is log1p(e^-20)
    b = batch_from_arrays(np.array([[1.0], [-1.0], [1.0]]), [[0, 1, 2, 3, 4], [3], [0, 1, 2, 3, 4]], 0.1)
    r = evaluate(b, Strategy.all())
    assert r.skipped_anchors == (1,)
    assert r.total == pytest.approx(2 * np.log1p(np.exp(-20.0)), rel=1e-14)
    assert grad_check(b, Strategy.all()).passed
