import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from roadfusion import fusion
from roadfusion.core import ClassDistribution, ErrorKind, PipelineError, RoadCondition, argmax_label


def dist(*p):
    return ClassDistribution(p)


simplex = st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3).filter(lambda v: sum(v) > 1e-3).map(
    lambda v: np.asarray(v) / sum(v))
accuracy = st.floats(0.0, 1.0)


def test_initial_weights():
    s = fusion.init_fusion()
    assert s.weights == (0.6, pytest.approx(0.4)) and s.eta == 0.3


def test_equal_accuracies_pull_toward_half():
    s = fusion.update_weights(fusion.init_fusion(), 0.9, 0.9, 1)
    assert s.w_image == pytest.approx(0.57) and s.w_audio == pytest.approx(0.43)
    assert s.history[0]["epoch"] == 1


def test_fuse_example():
    out = fusion.fuse(dist(0.5, 0.4, 0.1), dist(0.4, 0.5, 0.1), fusion.init_fusion())
    np.testing.assert_allclose(out.probs, (0.46, 0.44, 0.10))
    assert argmax_label(out) is RoadCondition.DRY


def test_fuse_can_flip_to_audio_side():
    out = fusion.fuse(dist(0.35, 0.65, 0.0), dist(0.5, 0.5, 0.0), fusion.init_fusion())
    np.testing.assert_allclose(out.probs, (0.41, 0.59, 0.0))
    assert argmax_label(out) is RoadCondition.WET


def test_full_smoothing_jumps_to_target():
    s = fusion.update_weights(fusion.init_fusion(eta=1.0), 0.8, 0.2, 1)
    assert (s.w_image, s.w_audio) == (pytest.approx(0.8), pytest.approx(0.2))


def test_repeated_updates_converge_to_accuracy_ratio():
    s = fusion.init_fusion()
    for epoch in range(60):
        s = fusion.update_weights(s, 0.95, 0.8, epoch)
    assert s.w_image == pytest.approx(0.95 / 1.75, abs=1e-6)
    assert round(s.w_image, 4) == 0.5429 and round(s.w_audio, 4) == 0.4571


def test_bad_inputs():
    with pytest.raises(PipelineError) as exc:
        fusion.update_weights(fusion.init_fusion(), 1.2, 0.5, 1)
    assert exc.value.kind is ErrorKind.CONFIG
    with pytest.raises(PipelineError):
        fusion.init_fusion(eta=0.0)
    with pytest.raises(PipelineError):
        fusion.FusionState(0.7, 0.4)
    with pytest.raises(PipelineError) as exc:
        fusion.fuse_arrays(np.ones((2, 3)) / 3, np.ones((3, 3)) / 3, fusion.init_fusion())
    assert exc.value.kind is ErrorKind.SHAPE


def test_both_zero_accuracies_keep_weights():
    s = fusion.update_weights(fusion.init_fusion(), 0.0, 0.0, 1)
    assert s.w_image == pytest.approx(0.6)


def test_state_json_roundtrip():
    s = fusion.update_weights(fusion.init_fusion(), 0.7, 0.9, 1, fused_loss=0.3)
    assert fusion.FusionState.from_json(s.to_json()) == s


@settings(max_examples=200, deadline=None)
@given(simplex, simplex, st.floats(0.0, 1.0))
def test_fused_output_on_simplex(p, q, w):
    out = fusion.fuse_arrays(p[None], q[None], fusion.init_fusion(w))
    assert abs(out.sum() - 1.0) <= 1e-12
    assert out.min() >= 0


@settings(max_examples=100, deadline=None)
@given(simplex, st.floats(0.0, 1.0))
def test_unanimous_inputs_pass_through(p, w):
    out = fusion.fuse_arrays(p[None], p[None], fusion.init_fusion(w))
    np.testing.assert_array_equal(out[0], p)


@settings(max_examples=100, deadline=None)
@given(simplex, simplex, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_fusion_is_linear_in_weight(p, q, w1, w2):
    a = fusion.fuse_arrays(p[None], q[None], fusion.init_fusion(w1))
    b = fusion.fuse_arrays(p[None], q[None], fusion.init_fusion(w2))
    mid = fusion.fuse_arrays(p[None], q[None], fusion.init_fusion((w1 + w2) / 2))
    np.testing.assert_allclose(mid, (a + b) / 2, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(accuracy, accuracy, accuracy, st.floats(0.0, 1.0), st.floats(0.01, 1.0))
def test_update_monotone_in_image_accuracy(a1, a2, acc_audio, w, eta):
    assume(acc_audio > 0)
    lo, hi = sorted((a1, a2))
    s = fusion.init_fusion(w, eta)
    w_lo = fusion.update_weights(s, lo, acc_audio, 1).w_image
    w_hi = fusion.update_weights(s, hi, acc_audio, 1).w_image
    assert w_hi >= w_lo - 1e-15


@settings(max_examples=100, deadline=None)
@given(accuracy, accuracy, st.floats(0.0, 1.0), st.floats(0.05, 1.0))
def test_update_stays_on_simplex_and_converges(acc_i, acc_a, w, eta):
    assume(acc_i + acc_a > 0)
    target = acc_i / (acc_i + acc_a)
    s = fusion.init_fusion(w, eta)
    prev_gap = abs(s.w_image - target)
    for epoch in range(5):
        s = fusion.update_weights(s, acc_i, acc_a, epoch)
        assert abs(s.w_image + s.w_audio - 1.0) <= 1e-12
        gap = abs(s.w_image - target)
        assert gap <= prev_gap + 1e-15
        prev_gap = gap
