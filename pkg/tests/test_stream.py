import math

import numpy as np
import pytest

from roadfusion import stream, vision
from roadfusion.core import ErrorKind, PipelineError
from roadfusion.fusion import MultimodalClassifier


def segments(n, seed=0):
    rng = np.random.default_rng(seed)
    return [stream.StreamSegment(f"s{i}", vision.Image(rng.random((48, 64, 3))),
                                 rng.uniform(-0.5, 0.5, 16000)) for i in range(n)]


def test_ten_seconds_at_ten_fps(tiny_classifier):
    segs = segments(10)
    events = stream.build_events(segs, rate=10)
    assert sum(e.source == "camera" for e in events) == 100
    assert sum(e.source == "microphone" for e in events) == 100
    records = stream.replay_stream(events, tiny_classifier, speed=math.inf)
    assert [r.window_index for r in records] == list(range(10))
    assert records[3].audio_span == (48000, 64000)
    # the last frame inside window w shows segment w
    assert all(r.frame_id.startswith(f"s{r.window_index}#") for r in records)


def test_events_are_time_ordered_and_audio_reassembles():
    segs = segments(3)
    events = stream.build_events(segs, rate=4)
    stamps = [e.timestamp for e in events]
    assert stamps == sorted(stamps)
    for w, seg in enumerate(segs):
        blocks = [e.payload for e in events
                  if e.source == "microphone" and w * 1000 < e.timestamp <= (w + 1) * 1000]
        assert len(blocks) == 10 and all(len(b) == stream.BLOCK_SAMPLES for b in blocks)
        np.testing.assert_array_equal(np.concatenate(blocks), seg.audio)


def test_speed_does_not_change_decisions(tiny_classifier):
    segs = segments(3, seed=1)
    events = stream.build_events(segs, rate=5)
    fast = stream.replay_stream(events, tiny_classifier, speed=math.inf)
    paced = stream.replay_stream(events, tiny_classifier, speed=50)
    assert [r.prediction.distribution for r in fast] == [r.prediction.distribution for r in paced]


def test_stream_matches_batch(tiny_classifier):
    segs = segments(4, seed=2)
    streamed = stream.replay_stream(stream.build_events(segs, rate=2), tiny_classifier, speed=math.inf)
    batch = stream.batch_decisions(segs, tiny_classifier)
    assert [r.prediction.distribution.probs for r in streamed] == [p.distribution.probs for p in batch]
    assert [r.prediction.sample_id for r in streamed] == [p.sample_id for p in batch]


def test_window_without_frame_is_rejected(tiny_classifier):
    events = [e for e in stream.build_events(segments(2), rate=1) if not (e.source == "camera" and e.timestamp >= 1000)]
    with pytest.raises(PipelineError) as exc:
        stream.replay_stream(events, tiny_classifier, speed=math.inf)
    assert exc.value.kind is ErrorKind.CONFIG


def test_decision_json_shape(tiny_classifier):
    rec = stream.replay_stream(stream.build_events(segments(1), rate=1), tiny_classifier, speed=math.inf)[0]
    obj = rec.to_json()
    assert set(obj) == {"window_index", "label", "probs", "latency_ms"}
    assert obj["label"] in ("dry", "wet", "snow") and abs(sum(obj["probs"]) - 1) < 1e-9


def test_latency_stats_examples():
    assert stream.latency_stats([7.0]) == {"p50": 7.0, "p95": 7.0, "max": 7.0, "count": 1}
    stats = stream.latency_stats([float(v) for v in range(100, 0, -1)])
    assert (stats["p50"], stats["p95"], stats["max"]) == (50.0, 95.0, 100.0)
    with pytest.raises(PipelineError) as exc:
        stream.latency_stats([])
    assert exc.value.kind is ErrorKind.EMPTY


def test_bad_rate_and_speed(tiny_classifier):
    with pytest.raises(PipelineError):
        stream.build_events(segments(1), rate=0)
    with pytest.raises(PipelineError):
        stream.replay_stream([], tiny_classifier, speed=0)


def test_multimodal_checkpoint_roundtrip(tiny_classifier):
    back = MultimodalClassifier.from_bytes(tiny_classifier.to_bytes())
    seg = segments(1, seed=3)[0]
    a = stream.decide(tiny_classifier, seg.image, seg.audio, vision.ImageConfig(), stream.audio.SpectrogramConfig())
    b = stream.decide(back, seg.image, seg.audio, vision.ImageConfig(), stream.audio.SpectrogramConfig())
    assert a.distribution == b.distribution
    assert back.fusion == tiny_classifier.fusion and back.name == tiny_classifier.name
