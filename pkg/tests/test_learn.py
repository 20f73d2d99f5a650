"""Perceptron classifier, Adam optimizer, metrics, and checkpoints."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from m2mcalib import learn, rf
from m2mcalib.errors import (
    BadMagic,
    DimMismatch,
    EmptyDataset,
    InvalidConfig,
    MalformedHeader,
    NonFiniteInput,
    ShapeMismatch,
    SingleClassDataset,
    TruncatedFile,
    UnlabeledData,
    VersionMismatch,
)

pytestmark = pytest.mark.properties

PATCH_ROWS, PATCH_COLS = 6, 5
SMALL_DIM = PATCH_ROWS * PATCH_COLS


def zero_model(hidden=4, input_dim=SMALL_DIM):
    return learn.MLPModel(
        w1=np.zeros((hidden, input_dim)), b1=np.zeros(hidden),
        w2=np.zeros(hidden), b2=0.0, hidden=hidden, input_dim=input_dim,
    )


def identity_stats():
    return rf.NormStats(mean_patch=np.zeros((PATCH_ROWS, PATCH_COLS)),
                        std_patch=np.ones((PATCH_ROWS, PATCH_COLS)))


def blob_patches(n_per_class=100, seed=0, separation=3.0, symmetric=False):
    """Two Gaussian blobs in patch space, linearly separable at separation 3."""
    rng = np.random.default_rng(seed)
    patches = []
    for label, sign in ((0, -1.0), (1, 1.0)):
        centers = sign * separation * np.ones((PATCH_ROWS, PATCH_COLS))
        for _ in range(n_per_class):
            arr = (centers + rng.standard_normal((PATCH_ROWS, PATCH_COLS))).astype(np.float32)
            if symmetric:
                arr = ((arr + arr[:, ::-1]) / 2).astype(np.float32)
            patches.append(rf.Patch(arr, depth_segment=0, label=label))
    return patches


# ---- forward ----

def test_forward_all_zero_parameters_gives_half():
    assert learn.forward(zero_model(), np.ones(SMALL_DIM)) == 0.5


def test_forward_bias_ten():
    model = zero_model()
    model.b2 = 10.0
    p = learn.forward(model, np.zeros(SMALL_DIM))
    assert p == pytest.approx(1.0 / (1.0 + np.exp(-10.0)), abs=1e-12)
    assert p > 0.9999


@given(st.integers(0, 2**32 - 1))
def test_forward_output_is_a_probability(seed):
    rng = np.random.default_rng(seed)
    model = learn.init_model(SMALL_DIM, 8, rng)
    p = learn.forward(model, rng.standard_normal(SMALL_DIM))
    assert 0.0 < p < 1.0


def test_forward_dim_mismatch():
    with pytest.raises(DimMismatch):
        learn.forward(zero_model(), np.ones(SMALL_DIM + 1))


def test_model_validation():
    with pytest.raises(ShapeMismatch):
        learn.MLPModel(w1=np.zeros((4, 9)), b1=np.zeros(4), w2=np.zeros(4), b2=0.0,
                       hidden=4, input_dim=SMALL_DIM)
    with pytest.raises(NonFiniteInput):
        learn.MLPModel(w1=np.full((4, SMALL_DIM), np.nan), b1=np.zeros(4),
                       w2=np.zeros(4), b2=0.0, hidden=4, input_dim=SMALL_DIM)


# ---- gradients ----

def test_gradients_match_finite_differences():
    rng = np.random.default_rng(11)
    model = learn.init_model(SMALL_DIM, 7, rng, dtype=np.float64)
    model.b1 = rng.standard_normal(7) * 0.1  # nonzero biases exercise ReLU corners
    model.b2 = 0.05
    x = rng.standard_normal((10, SMALL_DIM))
    y = (rng.random(10) < 0.5).astype(np.float64)

    _, grads = learn.loss_and_grads(model, x, y)
    eps = 1e-4
    params = [model.w1, model.b1, model.w2]
    for tensor, grad in zip(params, grads[:3]):
        flat = tensor.ravel()
        gflat = np.asarray(grad).ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up, _ = learn.loss_and_grads(model, x, y)
            flat[i] = orig - eps
            down, _ = learn.loss_and_grads(model, x, y)
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            denom = max(abs(numeric), abs(gflat[i]), 1e-8)
            assert abs(numeric - gflat[i]) / denom < 1e-5
    b2_orig = model.b2
    model.b2 = b2_orig + eps
    up, _ = learn.loss_and_grads(model, x, y)
    model.b2 = b2_orig - eps
    down, _ = learn.loss_and_grads(model, x, y)
    model.b2 = b2_orig
    numeric = (up - down) / (2 * eps)
    assert abs(numeric - float(grads[3])) / max(abs(numeric), 1e-8) < 1e-5


def test_loss_and_grads_shape_check():
    with pytest.raises(DimMismatch):
        learn.loss_and_grads(zero_model(), np.zeros((3, 7)), np.zeros(3))


# ---- Adam ----

def adam_cfg(lr):
    return learn.TrainConfig(learning_rate=lr)


def test_adam_minimizes_quadratic():
    cfg = adam_cfg(1e-2)
    params = [np.array(5.0)]
    state = learn.init_adam(params)
    for _ in range(2000):
        grads = [2.0 * params[0]]
        params, state = learn.adam_step(params, grads, state, cfg)
    assert abs(float(params[0])) < 1e-3


def test_adam_zero_gradient_is_a_fixed_point():
    cfg = adam_cfg(1e-2)
    params = [np.array([1.5, -2.5])]
    state = learn.init_adam(params)
    for _ in range(5):
        params, state = learn.adam_step(params, [np.zeros(2)], state, cfg)
    np.testing.assert_array_equal(params[0], [1.5, -2.5])


@given(st.floats(0.1, 10.0), st.sampled_from([-1.0, 1.0]))
def test_adam_first_step_is_signed_learning_rate(mag, sign):
    cfg = adam_cfg(1e-3)
    params = [np.array(0.0)]
    state = learn.init_adam(params)
    params, state = learn.adam_step(params, [np.array(sign * mag)], state, cfg)
    assert float(params[0]) == pytest.approx(-sign * cfg.learning_rate, abs=1e-9)
    assert state.t == 1


def test_adam_shape_mismatch():
    params = [np.zeros(3)]
    with pytest.raises(ShapeMismatch):
        learn.adam_step(params, [np.zeros(4)], learn.init_adam(params), adam_cfg(1e-3))


def test_train_config_validation():
    with pytest.raises(InvalidConfig):
        learn.TrainConfig(learning_rate=0.0)
    with pytest.raises(InvalidConfig):
        learn.TrainConfig(validation_fraction=1.0)
    with pytest.raises(InvalidConfig):
        learn.TrainConfig(flip_prob=1.5)
    with pytest.raises(InvalidConfig):
        learn.TrainConfig(adam_beta1=1.0)


# ---- design matrix ----

def test_design_matrix_applies_normalization(rng):
    stats = rf.NormStats(mean_patch=rng.standard_normal((PATCH_ROWS, PATCH_COLS)),
                         std_patch=rng.uniform(0.5, 2.0, (PATCH_ROWS, PATCH_COLS)))
    patches = blob_patches(n_per_class=3, seed=1)
    x, y = learn.design_matrix(patches, stats)
    assert x.shape == (6, SMALL_DIM)
    assert x.dtype == np.float32
    np.testing.assert_array_equal(y, [0, 0, 0, 1, 1, 1])
    want = rf.normalize(patches[2], stats).samples.ravel()
    np.testing.assert_allclose(x[2], want, rtol=1e-6)


def test_design_matrix_errors():
    with pytest.raises(EmptyDataset):
        learn.design_matrix([], identity_stats())
    unlabeled = rf.Patch(np.zeros((PATCH_ROWS, PATCH_COLS), dtype=np.float32), 0)
    with pytest.raises(UnlabeledData):
        learn.design_matrix([unlabeled], identity_stats())


# ---- training ----

def train_cfg(**kw):
    base = dict(learning_rate=1e-3, epochs=5, batch_size=32,
                validation_fraction=0.1, flip_prob=0.5, seed=3)
    base.update(kw)
    return learn.TrainConfig(**base)


def test_train_separates_gaussian_blobs():
    patches = blob_patches(n_per_class=100, seed=0)
    model = learn.train(7, patches, identity_stats(),
                        train_cfg(learning_rate=1e-2, batch_size=16), hidden=16)
    metrics = learn.evaluate(model, patches, identity_stats())
    assert metrics.accuracy >= 0.99
    assert metrics.auc >= 0.99
    assert metrics.n_samples == 200


def test_train_is_deterministic():
    patches = blob_patches(n_per_class=30, seed=2)
    a = learn.train(5, patches, identity_stats(), train_cfg(), hidden=8)
    b = learn.train(5, patches, identity_stats(), train_cfg(), hidden=8)
    for pa, pb in zip(a.params(), b.params()):
        assert np.array_equal(pa, pb)
    c = learn.train(6, patches, identity_stats(), train_cfg(), hidden=8)
    assert not all(np.array_equal(pa, pc) for pa, pc in zip(a.params(), c.params()))


def test_train_rejects_single_class():
    patches = [p for p in blob_patches(n_per_class=20, seed=3) if p.label == 0]
    with pytest.raises(SingleClassDataset):
        learn.train(1, patches, identity_stats(), train_cfg())


def test_flip_probability_irrelevant_on_symmetric_patches():
    patches = blob_patches(n_per_class=30, seed=4, symmetric=True)
    for seed in (0, 1, 2, 3, 4):
        never = learn.train(seed, patches, identity_stats(), train_cfg(flip_prob=0.0), hidden=8)
        always = learn.train(seed, patches, identity_stats(), train_cfg(flip_prob=1.0), hidden=8)
        for pn, pa in zip(never.params(), always.params()):
            assert np.array_equal(pn, pa)


def test_flip_lateral_reverses_columns(rng):
    x = rng.standard_normal((3, SMALL_DIM)).astype(np.float32)
    flipped = learn._flip_lateral(x, PATCH_ROWS, PATCH_COLS)
    want = x.reshape(3, PATCH_ROWS, PATCH_COLS)[:, :, ::-1].reshape(3, -1)
    np.testing.assert_array_equal(flipped, want)


# ---- metrics ----

def test_auc_perfect_separation():
    assert learn.auc_score(np.array([0.9, 0.8, 0.1, 0.2]), np.array([1, 1, 0, 0])) == 1.0


def test_auc_all_ties_is_half():
    assert learn.auc_score(np.full(6, 0.5), np.array([1, 1, 1, 0, 0, 0])) == 0.5


def test_auc_three_quarters():
    scores = np.array([0.7, 0.3, 0.6, 0.2])
    labels = np.array([1, 1, 0, 0])
    assert learn.auc_score(scores, labels) == 0.75


def test_auc_single_class_rejected():
    with pytest.raises(SingleClassDataset):
        learn.auc_score(np.array([0.1, 0.9]), np.array([1, 1]))


@given(st.integers(0, 2**32 - 1), st.sampled_from(["affine", "exp", "atan", "cube"]))
def test_auc_invariant_under_monotone_transforms(seed, kind):
    rng = np.random.default_rng(seed)
    n = 30
    scores = np.round(rng.random(n), 2)  # rounding forces some ties
    labels = np.r_[np.ones(5, dtype=int), (rng.random(n - 5) < 0.5).astype(int)]
    labels[-1] = 0  # both classes guaranteed
    transform = {
        "affine": lambda s: 3.0 * s + 1.0,
        "exp": np.exp,
        "atan": np.arctan,
        "cube": lambda s: s**3,  # strictly monotone on [0, 1]
    }[kind]
    assert learn.auc_score(transform(scores), labels) == learn.auc_score(scores, labels)


def test_accuracy_and_error_rate_are_complementary():
    scores = np.array([0.9, 0.8, 0.7, 0.4, 0.6, 0.1, 0.2, 0.3])  # n = 8 (dyadic)
    labels = np.array([1, 1, 1, 1, 0, 0, 0, 0])
    preds = (scores >= 0.5).astype(int)
    n = len(labels)
    n_correct = int(np.sum(preds == labels))
    accuracy = n_correct / n
    error = (n - n_correct) / n
    assert accuracy + error == 1.0  # exact for dyadic n
    assert n_correct + int(np.sum(preds != labels)) == n
    # the same counts fall out of a model evaluation
    model = zero_model()
    patches = blob_patches(n_per_class=4, seed=5)
    metrics = learn.evaluate(model, patches, identity_stats())
    assert round(metrics.accuracy * metrics.n_samples) + round(
        (1 - metrics.accuracy) * metrics.n_samples
    ) == metrics.n_samples


def test_evaluate_empty_dataset():
    with pytest.raises(EmptyDataset):
        learn.evaluate(zero_model(), [], identity_stats())


def test_metrics_bounds_enforced():
    with pytest.raises(InvalidConfig):
        learn.Metrics(accuracy=1.2, auc=0.5, n_samples=3)


# ---- repetitions ----

def test_repeat_single_run_zero_std():
    report = learn.repeat_experiment(lambda s: learn.Metrics(0.8, 0.9, 10), 1, 0)
    assert report.std_accuracy == 0.0
    assert report.std_auc == 0.0
    assert report.n_repetitions == 1


def test_repeat_constant_closure():
    report = learn.repeat_experiment(lambda s: learn.Metrics(0.7, 0.6, 10), 5, 100)
    assert report.mean_accuracy == pytest.approx(0.7)
    assert report.std_accuracy == pytest.approx(0.0, abs=1e-15)


def test_repeat_two_point_statistics():
    vals = {0: learn.Metrics(0.8, 0.8, 10), 1: learn.Metrics(0.9, 0.9, 10)}
    report = learn.repeat_experiment(lambda s: vals[s], 2, 0)
    assert report.mean_accuracy == pytest.approx(0.85, rel=1e-12)
    assert report.std_accuracy == pytest.approx(0.05, rel=1e-9)  # population std
    assert len(report.per_run) == 2


def test_repeat_passes_sequential_seeds():
    seen = []
    learn.repeat_experiment(lambda s: (seen.append(s), learn.Metrics(0.5, 0.5, 1))[1], 3, 40)
    assert seen == [40, 41, 42]
    with pytest.raises(InvalidConfig):
        learn.repeat_experiment(lambda s: learn.Metrics(0.5, 0.5, 1), 0, 0)


# ---- checkpoints ----

def test_checkpoint_round_trip(tmp_path, rng):
    model = learn.init_model(SMALL_DIM, 8, rng)
    model.b2 = -0.375
    path = tmp_path / "model.bin"
    learn.save_model(path, model)
    back = learn.load_model(path)
    assert np.array_equal(back.w1, model.w1)
    assert np.array_equal(back.b1, model.b1)
    assert np.array_equal(back.w2, model.w2)
    assert back.b2 == model.b2
    assert (back.hidden, back.input_dim) == (8, SMALL_DIM)


def test_checkpoint_corruption_cases(tmp_path, rng):
    model = learn.init_model(SMALL_DIM, 4, rng)
    path = tmp_path / "model.bin"
    learn.save_model(path, model)
    blob = path.read_bytes()

    bad = bytearray(blob)
    bad[0] ^= 0xFF
    path.write_bytes(bytes(bad))
    with pytest.raises(BadMagic):
        learn.load_model(path)

    bad = bytearray(blob)
    bad[8] = 42  # version
    path.write_bytes(bytes(bad))
    with pytest.raises(VersionMismatch):
        learn.load_model(path)

    bad = bytearray(blob)
    bad[12:16] = (0).to_bytes(4, "little")  # hidden = 0
    path.write_bytes(bytes(bad))
    with pytest.raises(MalformedHeader):
        learn.load_model(path)

    path.write_bytes(blob[:-6])
    with pytest.raises(TruncatedFile):
        learn.load_model(path)

    path.write_bytes(blob + b"\x00\x00\x00\x00")
    with pytest.raises(MalformedHeader):
        learn.load_model(path)
