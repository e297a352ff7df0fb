import numpy as np
import pytest

from roadfusion import eval as ev
from roadfusion.core import ClassDistribution, ErrorKind, PipelineError, Prediction, RoadCondition
from oracles import naive_accuracy


def confusion_example():
    y_true = [0] * 10 + [1] * 10 + [2] * 10
    y_pred = [0] * 8 + [1] * 2 + [1] * 9 + [0] + [2] * 10
    return y_true, y_pred


def test_hand_worked_confusion():
    y_true, y_pred = confusion_example()
    r = ev.metrics_from_labels(y_true, y_pred)
    assert r.confusion.counts.tolist() == [[8, 2, 0], [1, 9, 0], [0, 0, 10]]
    assert r.accuracy == pytest.approx(0.9)
    assert r.precision[0] == pytest.approx(8 / 9) and r.recall[0] == pytest.approx(0.8)
    assert r.precision[1] == pytest.approx(9 / 11) and r.recall[1] == pytest.approx(0.9)
    f1_dry = 2 * (8 / 9) * 0.8 / (8 / 9 + 0.8)
    assert r.f1[0] == pytest.approx(f1_dry)
    assert r.macro_f1 == pytest.approx(np.mean(r.f1))
    assert r.to_json()["per_class"]["dry"]["precision"] == 0.8889


def test_never_predicted_class_scores_zero():
    r = ev.metrics_from_labels([0, 1, 2], [0, 1, 1])
    assert r.precision[2] == 0 and r.recall[2] == 0 and r.f1[2] == 0
    assert r.macro_precision == pytest.approx((1 + 0.5 + 0) / 3)


def test_empty_is_an_error():
    with pytest.raises(PipelineError) as exc:
        ev.compute_metrics([])
    assert exc.value.kind is ErrorKind.EMPTY


def test_against_naive_loops():
    rng = np.random.default_rng(0)
    y_true = rng.integers(0, 3, 100)
    y_pred = np.where(rng.random(100) < 0.7, y_true, rng.integers(0, 3, 100))
    r = ev.metrics_from_labels(y_true, y_pred)
    assert r.accuracy == naive_accuracy(y_true, y_pred)
    for c in range(3):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        pp = sum(1 for p in y_pred if p == c)
        ap = sum(1 for t in y_true if t == c)
        assert r.precision[c] == pytest.approx(tp / pp)
        assert r.recall[c] == pytest.approx(tp / ap)


def test_compute_metrics_from_predictions():
    preds = [(Prediction(ClassDistribution((0.6, 0.3, 0.1))), RoadCondition.DRY),
             (Prediction(ClassDistribution((0.1, 0.3, 0.6))), RoadCondition.WET)]
    r = ev.compute_metrics(preds, "m")
    assert r.accuracy == 0.5 and r.model == "m"


def test_ablation_order_and_rendering():
    y_true, y_pred = confusion_example()
    base = ev.metrics_from_labels(y_true, y_pred)
    perfect = ev.metrics_from_labels(y_true, y_true)
    results = {(i, a): (perfect if (i, a) == ("mobilenet_improved", "yamnet_improved") else base)
               for i, a, _ in reversed(ev.ABLATION_ROWS)}
    rows, as_json, text = ev.ablation_report(results)
    assert [r.model for r in rows] == ["MobileNet+YAMNet", "IMobileNet+YAMNet",
                                       "MobileNet+IYAMNet", "IMobileNet+IYAMNet"]
    assert as_json["averaging"] == "macro"
    lines = text.splitlines()
    assert lines[-1].startswith("IMobileNet+IYAMNet") and lines[-1].endswith("1.0000")
    assert "0.9000" in lines[-4]
    header = next(l for l in lines if l.startswith("Model"))
    assert header.split()[1:] == ["Accuracy", "Precision", "Recall", "F1-score"]
    del results[("mobilenet_base", "yamnet_base")]
    with pytest.raises(PipelineError):
        ev.ablation_report(results)


def test_first_failing_severity():
    report = {"cells": [
        {"modality": "image", "kind": "fog", "severity": s, "image_accuracy": a, "fused_accuracy": a}
        for s, a in [(0.0, 0.95), (0.1, 0.7), (0.2, 0.55), (0.3, 0.4)]]}
    assert ev.first_failing_severity(report, "fog")["severity"] == 0.2
    assert ev.first_failing_severity(report, "fog", threshold=0.3) is None
