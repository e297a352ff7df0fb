import numpy as np
import pytest

from roadfusion import models, nn
from roadfusion.core import ErrorKind, PipelineError

TOY_SHAPE = (3, 32, 32)


def toy_set(per_class=20, seed=0, shape=TOY_SHAPE):
    """Three classes that differ in mean level of one channel."""
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for c in range(3):
        x = rng.normal(0, 0.3, size=(per_class,) + shape)
        x[:, c % shape[0]] += 1.5
        xs.append(x)
        ys += [c] * per_class
    return np.concatenate(xs).astype(np.float32), np.array(ys)


@pytest.mark.parametrize("arch", models.ARCHITECTURES)
def test_full_size_shapes(arch):
    specs = models.build_architecture(arch)
    shape = models.IMAGE_SHAPE if models.modality_of(arch) == "image" else models.AUDIO_SHAPE
    shapes = nn.infer_shapes(specs, shape)
    assert shapes[-1] == (3,)
    assert specs[-1].kind == "softmax"


@pytest.mark.parametrize("base, improved", [("mobilenet_base", "mobilenet_improved"),
                                            ("yamnet_base", "yamnet_improved")])
def test_improved_extends_base_backbone(base, improved):
    b, i = models.build_architecture(base), models.build_architecture(improved)
    n = models.backbone_length()
    assert b[:n] == i[:n]
    assert nn.param_count(i) > nn.param_count(b)


def test_param_counts():
    counts = {a: nn.param_count(models.build_architecture(a)) for a in models.ARCHITECTURES}
    assert counts == {"mobilenet_base": 5635, "mobilenet_improved": 79619,
                      "yamnet_base": 5491, "yamnet_improved": 116659}


def test_residual_blocks_preserve_shape():
    specs = models.build_architecture("yamnet_improved")
    shapes = nn.infer_shapes(specs, models.AUDIO_SHAPE)
    residuals = [i for i, s in enumerate(specs) if s.kind == "residual_add"]
    assert len(residuals) == 3
    for i in residuals:
        # input to the block equals its output
        before = models.AUDIO_SHAPE if specs[i].source == 0 else shapes[specs[i].source - 1]
        assert shapes[i] == before


def test_separable_blocks_are_cheaper():
    for arch in models.ARCHITECTURES:
        for dw, pw in models.separable_blocks(models.build_architecture(arch)):
            std = models.standard_equivalent(dw, pw)
            assert nn.param_count([dw, pw]) < nn.param_count([std])


def test_wrong_channels_rejected():
    with pytest.raises(PipelineError) as exc:
        models.build_architecture("yamnet_base", (3, 98, 64))
    assert exc.value.kind is ErrorKind.CONFIG


def test_train_config_validation():
    with pytest.raises(PipelineError) as exc:
        models.TrainConfig(epochs=0)
    assert exc.value.kind is ErrorKind.CONFIG
    with pytest.raises(PipelineError):
        models.TrainConfig(optimizer="rmsprop")


def test_toy_set_is_learned():
    x, y = toy_set()
    model = models.train_unimodal("mobilenet_base", x, y,
                                  models.TrainConfig(epochs=30, batch_size=10, learning_rate=1e-2),
                                  validation_fraction=0.0)
    assert models.accuracy(model, x, y) == 1.0
    assert len(model.history) == 30
    assert model.history[-1]["loss"] < model.history[0]["loss"]


def test_training_is_deterministic():
    x, y = toy_set(per_class=6)
    cfg = models.TrainConfig(epochs=2, batch_size=6, seed=3)
    a = models.train_unimodal("mobilenet_improved", x, y, cfg)
    b = models.train_unimodal("mobilenet_improved", x, y, cfg)
    assert a.to_bytes() == b.to_bytes()


def test_overfits_one_example():
    x, y = toy_set(per_class=2)
    model = models.train_unimodal("mobilenet_base", x, y,
                                  models.TrainConfig(epochs=60, batch_size=6, learning_rate=1e-2),
                                  validation_fraction=0.0)
    p = model.predict_proba(x[:1])[0]
    assert p[y[0]] > 0.99


def test_modality_mismatch_is_shape_error():
    x, y = toy_set(per_class=2, shape=(1, 98, 64))
    model = models.train_unimodal("yamnet_base", x, y, models.TrainConfig(epochs=1, batch_size=3),
                                  validation_fraction=0.0)
    with pytest.raises(PipelineError) as exc:
        model.predict_proba(np.zeros((1,) + models.IMAGE_SHAPE, dtype=np.float32))
    assert exc.value.kind is ErrorKind.SHAPE


def test_checkpoint_roundtrip_preserves_predictions():
    x, y = toy_set(per_class=3)
    model = models.train_unimodal("mobilenet_improved", x, y, models.TrainConfig(epochs=1, batch_size=3))
    back = models.TrainedModel.from_bytes(model.to_bytes())
    assert back.arch == model.arch and back.history == model.history
    np.testing.assert_array_equal(back.predict_proba(x), model.predict_proba(x))
    pred = models.predict(back, x[0])
    assert abs(sum(pred.distribution.probs) - 1) < 1e-9


def test_stratified_holdout():
    y = np.repeat([0, 1, 2], 10)
    fit, hold = models.stratified_holdout(y, 0.2, 0)
    assert len(hold) == 6 and np.all(np.bincount(y[hold]) == 2)
    assert set(fit) | set(hold) == set(range(30)) and not set(fit) & set(hold)
    fit, hold = models.stratified_holdout(y, 0.0, 0)
    assert len(hold) == 0 and len(fit) == 30


def _train_loss(specs, params, x, y):
    rng = np.random.Generator(np.random.Philox(99))
    out = nn.forward(specs, params.copy(), x, "train", rng, logits=True)
    return nn.cross_entropy_loss(out, y)


def test_one_epoch_lowers_training_loss():
    x, y = toy_set(per_class=8)
    lowered = 0
    for seed in range(10):
        cfg = models.TrainConfig(epochs=1, batch_size=8, seed=seed)
        specs = models.build_architecture("mobilenet_base", x.shape[1:])
        before = _train_loss(specs, nn.init_params(specs, seed), x, y)
        model = models.train_unimodal("mobilenet_base", x, y, cfg, validation_fraction=0.0)
        lowered += _train_loss(specs, model.params, x, y) < before
    assert lowered >= 9
