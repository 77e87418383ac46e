import json
import math

import pytest
from scipy.stats import chi2

from mot3d.core import Detection, Observation
from mot3d.dataset_io import (DEFAULT_MAHA_GATE, GroundTruthBox, RunConfig,
                              TrackBox, load_config, load_detections,
                              load_ground_truth, load_tracks, merge_config,
                              write_detections, write_ground_truth, write_tracks)
from mot3d.errors import ConfigError, SchemaError
from mot3d.tracker import run_scene
from tests.test_tracker import hand_noise, moving_car_frames

CAR_SIZE = (4.0, 2.0, 1.5)


def detection_payload(score=0.9, **overrides):
    record = {"center": [1.0, 2.0, 0.5], "yaw": 0.3,
              "size": [4.0, 2.0, 1.5], "class": "car", "score": score}
    record.update(overrides)
    return record


def write_json(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def test_default_gate_value():
    assert DEFAULT_MAHA_GATE == math.sqrt(chi2.ppf(0.95, 7))
    assert DEFAULT_MAHA_GATE == pytest.approx(3.7506186755440987)


def test_detection_round_trip(tmp_path):
    detections = {
        "scene-b": {0: [Detection(Observation(1.25, -3.5, 0.125, 0.75, 4, 2, 1.5),
                                  "car", 0.875, 0, "scene-b")],
                    2: [Detection(Observation(7, 8, 0, -2.5, 0.7, 0.7, 1.8),
                                  "pedestrian", 0.5, 2, "scene-b")]},
        "scene-a": {5: [Detection(Observation(0.1, 0.2, 0.3, 0.4, 10, 2.9, 3.4),
                                  "bus", 1.0, 5, "scene-a")]},
    }
    path = tmp_path / "det.json"
    write_detections(detections, str(path))
    loaded = load_detections(str(path))
    assert sorted(loaded) == ["scene-a", "scene-b"]
    assert list(loaded["scene-b"]) == [0, 2]
    first = loaded["scene-b"][0][0]
    original = detections["scene-b"][0][0]
    assert first == original  # frozen dataclasses with float fields
    assert loaded["scene-a"][5][0].class_label == "bus"


def test_arbitrary_float_values_round_trip_exactly(tmp_path):
    # json serializes python floats with repr: bit-exact round trip
    x = 0.1 + 0.2  # not representable prettily
    from mot3d.core import wrap_angle
    yaw = wrap_angle(1.1)
    detections = {"s": {0: [Detection(Observation(x, math.pi, -0.0, yaw, 4, 2, 1.5),
                                      "car", 0.123456789012345, 0, "s")]}}
    path = tmp_path / "det.json"
    write_detections(detections, str(path))
    loaded = load_detections(str(path))["s"][0][0]
    assert loaded.observation.x == x
    assert loaded.observation.y == math.pi
    assert loaded.observation.a == yaw
    assert loaded.score == 0.123456789012345


def test_ground_truth_round_trip(tmp_path):
    gt = {"s": {0: [GroundTruthBox(Observation(0, 0, 0, 0, 4, 2, 1.5), "car",
                                   "inst001", 0, "s")],
                1: [GroundTruthBox(Observation(1, 0, 0, 0, 4, 2, 1.5), "car",
                                   "inst001", 1, "s")]}}
    path = tmp_path / "gt.json"
    write_ground_truth(gt, str(path))
    loaded = load_ground_truth(str(path))
    assert loaded["s"][1][0].instance_id == "inst001"
    assert loaded["s"][0][0] == gt["s"][0][0]


def test_track_round_trip_through_tracker(tmp_path):
    outputs = run_scene(moving_car_frames(5), hand_noise())
    path = tmp_path / "tracks.json"
    write_tracks({"scene": outputs}, str(path), meta={"tool": "test"})
    loaded = load_tracks(str(path))
    assert list(loaded) == ["scene"]
    # the file records the empty pre-confirmation frames, the loaded
    # mapping is sparse and only holds frames with boxes
    assert '"0": []' in path.read_text()
    assert list(loaded["scene"]) == [2, 3, 4]
    boxes = loaded["scene"][4]
    assert len(boxes) == 1
    assert boxes[0].track_id == 1
    assert boxes[0].observation.x == pytest.approx(4.0, abs=0.2)


def test_write_is_deterministic(tmp_path):
    outputs = run_scene(moving_car_frames(4), hand_noise())
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    write_tracks({"s": outputs}, str(a), meta={"k": 1})
    write_tracks({"s": outputs}, str(b), meta={"k": 1})
    assert a.read_bytes() == b.read_bytes()


def test_underscore_keys_are_reserved_for_metadata(tmp_path):
    payload = {"_meta": {"anything": [1, 2, {"nested": True}]},
               "_extra": "ignored",
               "s": {"0": [detection_payload()]}}
    loaded = load_detections(write_json(tmp_path / "d.json", payload))
    assert list(loaded) == ["s"]


def test_scenes_and_frames_come_back_sorted(tmp_path):
    payload = {"zz": {"11": [detection_payload()], "2": [detection_payload()]},
               "aa": {"5": [detection_payload()]}}
    loaded = load_detections(write_json(tmp_path / "d.json", payload))
    assert list(loaded) == ["aa", "zz"]
    assert list(loaded["zz"]) == [2, 11]


def test_missing_file_and_bad_json(tmp_path):
    with pytest.raises(SchemaError, match="not found"):
        load_detections(str(tmp_path / "absent.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2")
    with pytest.raises(SchemaError, match="JSON"):
        load_detections(str(bad))
    array = tmp_path / "array.json"
    array.write_text("[]")
    with pytest.raises(SchemaError, match="object"):
        load_detections(str(array))


def test_schema_errors_carry_location(tmp_path):
    cases = [
        ({"s": {"0": [detection_payload(score=1.5)]}}, "score"),
        ({"s": {"0": [detection_payload(yaw="north")]}}, "yaw"),
        ({"s": {"0": [detection_payload(size=[1.0, 2.0])]}}, "size"),
        ({"s": {"0": [detection_payload(center=[1.0, 2.0, None])]}}, "center"),
        ({"s": {"0": [{k: v for k, v in detection_payload().items()
                       if k != "class"}]}}, "class"),
        ({"s": {"0": [detection_payload(extra_field=1)]}}, "extra_field"),
        ({"s": {"0": [detection_payload(**{"class": "unicorn"})]}}, "unicorn"),
    ]
    for payload, needle in cases:
        path = write_json(tmp_path / "case.json", payload)
        with pytest.raises(SchemaError) as excinfo:
            load_detections(path)
        message = str(excinfo.value)
        assert needle in message
        assert "scene 's' frame 0" in message


def test_frame_key_validation(tmp_path):
    for bad_key in ("-1", "1.5", "x", ""):
        payload = {"s": {bad_key: []}}
        with pytest.raises(SchemaError, match="frame key"):
            load_detections(write_json(tmp_path / "d.json", payload))


def test_duplicate_instance_rejected(tmp_path):
    record = {"center": [0.0, 0.0, 0.0], "yaw": 0.0, "size": [4.0, 2.0, 1.5],
              "class": "car", "instance_id": "dup"}
    payload = {"s": {"0": [record, dict(record, center=[9.0, 0.0, 0.0])]}}
    with pytest.raises(SchemaError, match="dup"):
        load_ground_truth(write_json(tmp_path / "gt.json", payload))
    # the same instance on different frames is the normal case
    fine = {"s": {"0": [record], "1": [record]}}
    loaded = load_ground_truth(write_json(tmp_path / "gt2.json", fine))
    assert len(loaded["s"]) == 2


def test_track_id_validation(tmp_path):
    record = {"center": [0.0, 0.0, 0.0], "yaw": 0.0, "size": [4.0, 2.0, 1.5],
              "class": "car", "score": 0.5, "track_id": 0}
    with pytest.raises(SchemaError, match="track_id"):
        load_tracks(write_json(tmp_path / "t.json", {"s": {"0": [record]}}))
    record["track_id"] = True
    with pytest.raises(SchemaError, match="track_id"):
        load_tracks(write_json(tmp_path / "t2.json", {"s": {"0": [record]}}))


def test_run_config_defaults_and_validation():
    config = RunConfig()
    assert config.matcher == "greedy"
    assert config.affinity == "mahalanobis"
    assert config.maha_threshold == DEFAULT_MAHA_GATE
    assert config.birth_hits == 3
    assert config.death_misses == 2
    assert config.amota_samples == 40
    assert config.angular_velocity is True
    cases = [
        dict(matcher="simplex"),
        dict(affinity="center"),
        dict(score_mode="max"),
        dict(maha_threshold=0.0),
        dict(iou_threshold=1.0),
        dict(iou_threshold=0.0),
        dict(birth_hits=0),
        dict(death_misses=-1),
        dict(birth_hits=True),
        dict(amota_samples=1),
        dict(class_maha_thresholds={"griffin": 2.0}),
        dict(class_maha_thresholds={"car": 0.0}),
    ]
    for overrides in cases:
        with pytest.raises(ConfigError):
            RunConfig(**overrides)


def test_gate_for_respects_affinity_and_overrides():
    config = RunConfig(maha_threshold=5.0, iou_threshold=0.2,
                       class_maha_thresholds={"pedestrian": 2.0})
    assert config.gate_for("car") == 5.0
    assert config.gate_for("pedestrian") == 2.0
    iou_config = RunConfig(affinity="iou", maha_threshold=5.0, iou_threshold=0.2,
                           class_maha_thresholds={"pedestrian": 2.0})
    assert iou_config.gate_for("pedestrian") == 0.2


def test_config_dict_round_trip():
    config = RunConfig(matcher="hungarian", affinity="iou", iou_threshold=0.3,
                       class_maha_thresholds={"car": 4.0}, birth_hits=2,
                       amota_samples=10, score_mode="running_mean",
                       angular_velocity=False)
    assert RunConfig.from_dict(config.to_dict()) == config
    with pytest.raises(ConfigError, match="unknown config keys"):
        RunConfig.from_dict({"matcher": "greedy", "velocity": True})


def test_load_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"matcher": "hungarian", "birth_hits": 2}))
    config = load_config(str(path))
    assert config.matcher == "hungarian"
    assert config.birth_hits == 2
    assert config.affinity == "mahalanobis"  # defaults fill the rest
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "absent.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("nope")
    with pytest.raises(ConfigError, match="JSON"):
        load_config(str(bad))
    array = tmp_path / "array.json"
    array.write_text("[]")
    with pytest.raises(ConfigError, match="object"):
        load_config(str(array))


def test_merge_config_skips_none():
    base = RunConfig(matcher="hungarian", birth_hits=2)
    merged = merge_config(base, matcher=None, birth_hits=4, affinity=None)
    assert merged.matcher == "hungarian"
    assert merged.birth_hits == 4
    assert merge_config(base) is base
