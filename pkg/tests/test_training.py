"""Teacher-student mechanics: EMA, gradients, determinism, regime wiring."""

import numpy as np
import pytest

from maskrefine import (
    BinaryMask,
    EmaState,
    HarnessConfig,
    LabeledItem,
    ModelParams,
    SceneParams,
    TrainConfig,
    UnlabeledItem,
    bce,
    binarize,
    build_corpus,
    burn_in,
    descend,
    ema_update,
    evaluate_oiou,
    mutual_learn,
    mutual_loop,
    predict,
    supervised_loss_and_grad,
    weighted_bce_map,
    WeightMap,
)
from maskrefine.rng import SplitMix64
from maskrefine.training import _loss_and_grad


def small_params() -> SceneParams:
    return SceneParams(width=12, height=12, parts=3, distractors=1, nuisance_channels=2)


def small_corpus(seed: int = 0):
    return build_corpus(seed, 2, 3, 4, small_params())


def random_instance(rng: SplitMix64, channels: int = 3, side: int = 5):
    params = ModelParams(rng.normal(channels), float(rng.normal(1)[0]))
    features = rng.normal(side * side * channels).reshape(side, side, channels)
    bits = (rng.uniform(side * side) < 0.5).astype(np.uint8)
    weights = 0.1 + rng.uniform(side * side)
    return params, features, bits, weights


def numeric_grad(params, features, bits, weights, h=1e-5):
    def value(p):
        pred = predict(p, features)
        target = BinaryMask(pred.width, pred.height, bits)
        if weights is None:
            return bce(pred, target)
        wm = WeightMap(pred.width, pred.height, weights)
        return weighted_bce_map(pred, target, wm)

    grad_w = np.zeros_like(params.weights)
    for i in range(params.channels):
        up = np.array(params.weights)
        dn = np.array(params.weights)
        up[i] += h
        dn[i] -= h
        grad_w[i] = (
            value(ModelParams(up, params.bias)) - value(ModelParams(dn, params.bias))
        ) / (2 * h)
    grad_b = (
        value(ModelParams(params.weights, params.bias + h))
        - value(ModelParams(params.weights, params.bias - h))
    ) / (2 * h)
    return grad_w, grad_b


def relative_error(got, want):
    scale = max(np.max(np.abs(want)), 1e-8)
    return np.max(np.abs(got - want)) / scale


def test_ema_one_step_formula():
    teacher = ModelParams(np.array([1.0, -2.0]), 0.5)
    student = ModelParams(np.array([3.0, 4.0]), -1.0)
    state = ema_update(EmaState(teacher, 0.996), student)
    assert np.allclose(state.teacher.weights, 0.996 * teacher.weights + 0.004 * student.weights)
    assert state.teacher.bias == pytest.approx(0.996 * 0.5 + 0.004 * -1.0)


def test_ema_contraction_100_steps():
    rng = SplitMix64(12)
    teacher0 = ModelParams(rng.normal(4), float(rng.normal(1)[0]))
    student = ModelParams(rng.normal(4), float(rng.normal(1)[0]))
    state = EmaState(teacher0, 0.996)
    for _ in range(100):
        state = ema_update(state, student)
    factor = 0.996 ** 100
    want_w = student.weights + factor * (teacher0.weights - student.weights)
    want_b = student.bias + factor * (teacher0.bias - student.bias)
    assert np.max(np.abs(state.teacher.weights - want_w)) <= 1e-9
    assert abs(state.teacher.bias - want_b) <= 1e-9


def test_gradient_matches_central_differences():
    rng = SplitMix64(31)
    for case in range(25):
        params, features, bits, weights = random_instance(rng)
        use_weights = case % 2 == 1
        w = weights if use_weights else None
        _, grad_w, grad_b = _loss_and_grad(params, features, bits, w)
        num_w, num_b = numeric_grad(params, features, bits, w)
        assert relative_error(grad_w, num_w) < 1e-4
        assert relative_error(np.array([grad_b]), np.array([num_b])) < 1e-4


def test_loss_and_grad_loss_value_matches_bce():
    rng = SplitMix64(37)
    params, features, bits, weights = random_instance(rng)
    loss, _, _ = _loss_and_grad(params, features, bits)
    pred = predict(params, features)
    target = BinaryMask(pred.width, pred.height, bits)
    assert loss == pytest.approx(bce(pred, target), abs=1e-12)
    wloss, _, _ = _loss_and_grad(params, features, bits, weights)
    wm = WeightMap(pred.width, pred.height, weights)
    assert wloss == pytest.approx(weighted_bce_map(pred, target, wm), abs=1e-12)


def test_descend_reduces_separable_loss():
    rng = SplitMix64(43)
    bits = (rng.uniform(36) < 0.5).astype(np.uint8)
    signal = (bits.astype(np.float64) - 0.5).reshape(6, 6, 1)
    item = LabeledItem("t", signal, BinaryMask(6, 6, bits))
    params, losses = descend(ModelParams.zeros(1), [item], 50, 1.0)
    assert losses[0] > losses[-1]
    assert all(a >= b for a, b in zip(losses, losses[1:]))


def test_duplicated_labeled_set_gives_same_gradient():
    labeled, _, _, _ = small_corpus()
    params = ModelParams.zeros(labeled[0].features.shape[2])
    loss1, gw1, gb1 = supervised_loss_and_grad(params, labeled)
    loss2, gw2, gb2 = supervised_loss_and_grad(params, labeled + labeled)
    assert loss1 == pytest.approx(loss2, abs=1e-12)
    assert np.allclose(gw1, gw2, atol=1e-12)
    assert gb1 == pytest.approx(gb2, abs=1e-12)


def test_train_report_bitwise_deterministic():
    labeled, unlabeled, library, heldout = small_corpus(3)
    cfg = TrainConfig(burn_in_steps=5, mutual_steps=8, learning_rate=0.5, jitter=0.1, seed=3)
    a = mutual_learn(labeled, unlabeled, library, heldout, cfg)
    b = mutual_learn(labeled, unlabeled, library, heldout, cfg)
    for left, right in (
        (a.supervised, b.supervised),
        (a.baseline, b.baseline),
        (a.refined, b.refined),
    ):
        assert np.array_equal(left.params.weights, right.params.weights)
        assert left.params.bias == right.params.bias
        assert left.losses == right.losses
        assert left.oiou == right.oiou
        assert left.tally == right.tally


def test_tally_conservation():
    labeled, unlabeled, library, heldout = small_corpus(5)
    cfg = TrainConfig(burn_in_steps=4, mutual_steps=7, learning_rate=0.5, seed=5)
    report = mutual_learn(labeled, unlabeled, library, heldout, cfg)
    assert report.refined.tally.total == cfg.mutual_steps * len(unlabeled)
    assert report.supervised.tally.total == 0
    assert report.baseline.tally.total == 0


def test_no_unlabeled_collapses_to_supervised():
    labeled, _, library, heldout = small_corpus(7)
    cfg = TrainConfig(burn_in_steps=5, mutual_steps=9, learning_rate=0.5, jitter=0.2, seed=7)
    report = mutual_learn(labeled, [], library, heldout, cfg)
    sup, base, ref = report.supervised, report.baseline, report.refined
    assert np.array_equal(sup.params.weights, base.params.weights)
    assert np.array_equal(sup.params.weights, ref.params.weights)
    assert sup.params.bias == base.params.bias == ref.params.bias
    assert sup.oiou == base.oiou == ref.oiou


def test_teacher_frozen_when_alpha_is_one():
    labeled, unlabeled, library, heldout = small_corpus(9)
    cfg = TrainConfig(burn_in_steps=3, mutual_steps=6, learning_rate=0.5, ema_alpha=1.0, seed=9)
    start = burn_in(labeled, cfg)
    student, teacher, _, _ = mutual_loop(start, labeled, unlabeled, library, cfg, False, False)
    assert np.array_equal(teacher.weights, start.weights)
    assert teacher.bias == start.bias
    assert not np.array_equal(student.weights, start.weights)


def test_jitter_changes_student():
    labeled, unlabeled, library, heldout = small_corpus(11)
    quiet = TrainConfig(burn_in_steps=3, mutual_steps=6, learning_rate=0.5, jitter=0.0, seed=11)
    noisy = TrainConfig(burn_in_steps=3, mutual_steps=6, learning_rate=0.5, jitter=0.3, seed=11)
    start = burn_in(labeled, quiet)
    a, _, _, _ = mutual_loop(start, labeled, unlabeled, library, quiet, False, False)
    b, _, _, _ = mutual_loop(start, labeled, unlabeled, library, noisy, False, False)
    assert not np.array_equal(a.weights, b.weights)


def test_refinement_requires_library_entry():
    labeled, unlabeled, library, heldout = small_corpus(13)
    cfg = TrainConfig(burn_in_steps=2, mutual_steps=2, learning_rate=0.5, seed=13)
    orphan = UnlabeledItem("nowhere", unlabeled[0].features, unlabeled[0].width, unlabeled[0].height)
    start = burn_in(labeled, cfg)
    with pytest.raises(Exception, match="nowhere"):
        mutual_loop(start, labeled, [orphan], library, cfg, True, True)


def test_predict_shapes_and_range():
    params = ModelParams(np.array([1.0, -1.0]), 0.0)
    rng = SplitMix64(17)
    features = rng.normal(24).reshape(4, 3, 2)
    soft = predict(params, features)
    assert (soft.width, soft.height) == (3, 4)
    assert np.all((soft.probs >= 0.0) & (soft.probs <= 1.0))
    with pytest.raises(ValueError):
        predict(ModelParams(np.array([1.0]), 0.0), features)


def test_evaluate_oiou_perfect_model_on_clean_signal():
    bits = np.zeros(16, dtype=np.uint8)
    bits[:6] = 1
    signal = (bits.astype(np.float64) - 0.5).reshape(4, 4, 1) * 10
    item = LabeledItem("t", signal, BinaryMask(4, 4, bits))
    params = ModelParams(np.array([5.0]), 0.0)
    assert evaluate_oiou(params, [item]) == 1.0


def test_item_validation():
    with pytest.raises(ValueError):
        LabeledItem("b", np.zeros((4, 4)), BinaryMask(4, 4, np.zeros(16, dtype=np.uint8)))
    with pytest.raises(ValueError):
        UnlabeledItem("b", np.zeros((4, 3, 2)), 4, 4)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(ema_alpha=1.5)
    with pytest.raises(ValueError):
        TrainConfig(jitter=-0.1)
    with pytest.raises(ValueError):
        TrainConfig(mutual_steps=-1)


def test_burn_in_requires_labeled_data():
    cfg = TrainConfig(burn_in_steps=1, mutual_steps=1, learning_rate=0.5)
    with pytest.raises(ValueError):
        burn_in([], cfg)


def test_harness_config_materialize():
    harness = HarnessConfig(labeled=2, unlabeled=3, heldout=4, mutual_steps=5, burn_in_steps=2)
    labeled, unlabeled, library, heldout, cfg = harness.materialize(21)
    assert (len(labeled), len(unlabeled), len(heldout)) == (2, 3, 4)
    assert all(item.image_id in library for item in unlabeled)
    assert cfg.mutual_steps == 5 and cfg.seed == 21
