"""File formats and run configuration.

All three box files share one shape: a JSON object mapping scene_id to
an object mapping the decimal frame index to an array of box records.
A box record always carries "center" [x, y, z], "yaw", "size"
[l, w, h], and "class"; detections and tracks add "score", tracks add
"track_id", and ground truth adds "instance_id".  Top-level keys
beginning with an underscore are reserved for metadata (for example
the generator provenance header) and are skipped by the loaders.

Writers emit sorted keys with a fixed layout, so equal inputs always
serialize to identical bytes, and floats keep full round-trip
precision.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, fields, replace
from typing import TYPE_CHECKING, Mapping, Sequence

from scipy.stats import chi2

from .core import CLASS_LABELS, Detection, Observation
from .errors import ConfigError, SchemaError

if TYPE_CHECKING:
    from .tracker import FrameOutput

# Gate on the Mahalanobis distance: sqrt of the 95th percentile of a
# chi-squared with 7 degrees of freedom (one per observed component).
DEFAULT_MAHA_GATE = float(math.sqrt(chi2.ppf(0.95, 7)))

MATCHER_NAMES = ("greedy", "hungarian")
AFFINITY_NAMES = ("mahalanobis", "iou")
SCORE_MODES = ("last_detection", "running_mean")


@dataclass(frozen=True)
class GroundTruthBox:
    """An annotated box with its persistent instance identity."""

    observation: Observation
    class_label: str
    instance_id: str
    frame_index: int
    scene_id: str = ""

    def __post_init__(self):
        if self.class_label not in CLASS_LABELS:
            raise ValueError(f"unknown class label {self.class_label!r}")
        if not isinstance(self.instance_id, str) or not self.instance_id:
            raise ValueError("instance_id must be a non-empty string")


@dataclass(frozen=True)
class TrackBox:
    """A tracker output box, as read back from a track file."""

    observation: Observation
    class_label: str
    track_id: int
    score: float
    frame_index: int
    scene_id: str = ""

    def __post_init__(self):
        if self.class_label not in CLASS_LABELS:
            raise ValueError(f"unknown class label {self.class_label!r}")
        if not isinstance(self.track_id, int) or isinstance(self.track_id, bool) or self.track_id < 1:
            raise ValueError(f"track_id must be a positive int, got {self.track_id!r}")
        if not 0.0 <= float(self.score) <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


@dataclass(frozen=True)
class RunConfig:
    """Tracker and evaluation settings.

    class_maha_thresholds overrides the global Mahalanobis gate for
    individual classes.  Disabling angular_velocity pins the yaw-rate
    component at zero, reducing the model to a constant-yaw tracker.
    """

    matcher: str = "greedy"
    affinity: str = "mahalanobis"
    maha_threshold: float = DEFAULT_MAHA_GATE
    class_maha_thresholds: Mapping[str, float] = field(default_factory=dict)
    iou_threshold: float = 0.1
    angular_velocity: bool = True
    birth_hits: int = 3
    death_misses: int = 2
    amota_samples: int = 40
    score_mode: str = "last_detection"

    def __post_init__(self):
        if self.matcher not in MATCHER_NAMES:
            raise ConfigError(f"matcher must be one of {MATCHER_NAMES}, got {self.matcher!r}")
        if self.affinity not in AFFINITY_NAMES:
            raise ConfigError(f"affinity must be one of {AFFINITY_NAMES}, got {self.affinity!r}")
        if self.score_mode not in SCORE_MODES:
            raise ConfigError(f"score_mode must be one of {SCORE_MODES}, got {self.score_mode!r}")
        if not self.maha_threshold > 0.0:
            raise ConfigError("maha_threshold must be positive")
        if not 0.0 < self.iou_threshold < 1.0:
            raise ConfigError("iou_threshold must lie strictly between 0 and 1")
        for label, value in dict(self.class_maha_thresholds).items():
            if label not in CLASS_LABELS:
                raise ConfigError(f"per-class threshold for unknown class {label!r}")
            if not value > 0.0:
                raise ConfigError(f"per-class threshold for {label!r} must be positive")
        for name in ("birth_hits", "death_misses"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be a positive int, got {value!r}")
        if not isinstance(self.amota_samples, int) or self.amota_samples < 2:
            raise ConfigError(f"amota_samples must be an int >= 2, got {self.amota_samples!r}")
        object.__setattr__(self, "class_maha_thresholds", dict(self.class_maha_thresholds))

    def gate_for(self, class_label: str) -> float:
        """Matching threshold for one class under the configured affinity."""
        if self.affinity == "iou":
            return self.iou_threshold
        return self.class_maha_thresholds.get(class_label, self.maha_threshold)

    def to_dict(self) -> dict:
        return {
            "matcher": self.matcher,
            "affinity": self.affinity,
            "maha_threshold": self.maha_threshold,
            "class_maha_thresholds": dict(self.class_maha_thresholds),
            "iou_threshold": self.iou_threshold,
            "angular_velocity": self.angular_velocity,
            "birth_hits": self.birth_hits,
            "death_misses": self.death_misses,
            "amota_samples": self.amota_samples,
            "score_mode": self.score_mode,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def load_config(path: str) -> RunConfig:
    """Read a RunConfig from a JSON file."""
    try:
        with open(path) as handle:
            data = json.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return RunConfig.from_dict(data)


def merge_config(config: RunConfig, **overrides) -> RunConfig:
    """Apply non-None overrides (CLI flags) on top of a config."""
    updates = {key: value for key, value in overrides.items() if value is not None}
    return replace(config, **updates) if updates else config


def _require(record: Mapping, key: str, location: str):
    if key not in record:
        raise SchemaError(f"missing field {key!r}", location)
    return record[key]


def _number(value, name: str, location: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"field {name!r} must be a number, got {value!r}", location)
    if not math.isfinite(value):
        raise SchemaError(f"field {name!r} must be finite, got {value!r}", location)
    return float(value)


def _vector(value, name: str, length: int, location: str) -> list:
    if not isinstance(value, list) or len(value) != length:
        raise SchemaError(f"field {name!r} must be an array of {length} numbers", location)
    return [_number(item, name, location) for item in value]


def _observation(record: Mapping, location: str) -> Observation:
    center = _vector(_require(record, "center", location), "center", 3, location)
    yaw = _number(_require(record, "yaw", location), "yaw", location)
    size = _vector(_require(record, "size", location), "size", 3, location)
    try:
        return Observation(center[0], center[1], center[2], yaw, size[0], size[1], size[2])
    except ValueError as exc:
        raise SchemaError(str(exc), location) from None


def _class_label(record: Mapping, location: str) -> str:
    label = _require(record, "class", location)
    if label not in CLASS_LABELS:
        raise SchemaError(f"unknown class {label!r}", location)
    return label


def _check_fields(record: Mapping, allowed: frozenset, location: str):
    if not isinstance(record, dict):
        raise SchemaError("box record must be a JSON object", location)
    extra = set(record) - allowed
    if extra:
        raise SchemaError(f"unexpected fields {sorted(extra)}", location)


_DET_FIELDS = frozenset({"center", "yaw", "size", "class", "score"})
_GT_FIELDS = frozenset({"center", "yaw", "size", "class", "instance_id"})
_TRACK_FIELDS = frozenset({"center", "yaw", "size", "class", "score", "track_id"})


def _iter_file(path: str, file_label: str):
    """Yield (scene_id, frame_index, record_index, record, location) tuples."""
    try:
        with open(path) as handle:
            data = json.load(handle)
    except FileNotFoundError:
        raise SchemaError(f"{file_label} file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{file_label} file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise SchemaError(f"{file_label} file must hold a JSON object", path)
    for scene_id in sorted(key for key in data if not key.startswith("_")):
        frames = data[scene_id]
        if not isinstance(frames, dict):
            raise SchemaError("scene must map frame indices to arrays",
                              f"{file_label} scene {scene_id!r}")
        parsed_frames = []
        for frame_key in frames:
            if not frame_key.isdigit():
                raise SchemaError(
                    f"frame key {frame_key!r} is not a non-negative integer",
                    f"{file_label} scene {scene_id!r}")
            parsed_frames.append(int(frame_key))
        for frame_index in sorted(parsed_frames):
            records = frames[str(frame_index)]
            location_base = f"{file_label} scene {scene_id!r} frame {frame_index}"
            if not isinstance(records, list):
                raise SchemaError("frame must hold an array of box records", location_base)
            for record_index, record in enumerate(records):
                yield (scene_id, frame_index, record_index, record,
                       f"{location_base} record {record_index}")


def load_detections(path: str) -> dict:
    """Parse a detection file into scene -> frame -> [Detection]."""
    out: dict = {}
    for scene_id, frame_index, _, record, location in _iter_file(path, "detections"):
        _check_fields(record, _DET_FIELDS, location)
        score = _number(_require(record, "score", location), "score", location)
        if not 0.0 <= score <= 1.0:
            raise SchemaError(f"score must lie in [0, 1], got {score}", location)
        detection = Detection(
            observation=_observation(record, location),
            class_label=_class_label(record, location),
            score=score,
            frame_index=frame_index,
            scene_id=scene_id,
        )
        out.setdefault(scene_id, {}).setdefault(frame_index, []).append(detection)
    return out


def load_ground_truth(path: str) -> dict:
    """Parse a ground-truth file into scene -> frame -> [GroundTruthBox]."""
    out: dict = {}
    seen: set = set()
    for scene_id, frame_index, _, record, location in _iter_file(path, "ground truth"):
        _check_fields(record, _GT_FIELDS, location)
        instance_id = _require(record, "instance_id", location)
        if not isinstance(instance_id, str) or not instance_id:
            raise SchemaError("instance_id must be a non-empty string", location)
        key = (scene_id, frame_index, instance_id)
        if key in seen:
            raise SchemaError(f"duplicate instance_id {instance_id!r}", location)
        seen.add(key)
        box = GroundTruthBox(
            observation=_observation(record, location),
            class_label=_class_label(record, location),
            instance_id=instance_id,
            frame_index=frame_index,
            scene_id=scene_id,
        )
        out.setdefault(scene_id, {}).setdefault(frame_index, []).append(box)
    return out


def load_tracks(path: str) -> dict:
    """Parse a track file into scene -> frame -> [TrackBox]."""
    out: dict = {}
    for scene_id, frame_index, _, record, location in _iter_file(path, "tracks"):
        _check_fields(record, _TRACK_FIELDS, location)
        score = _number(_require(record, "score", location), "score", location)
        track_id = _require(record, "track_id", location)
        if isinstance(track_id, bool) or not isinstance(track_id, int) or track_id < 1:
            raise SchemaError(f"track_id must be a positive integer, got {track_id!r}", location)
        if not 0.0 <= score <= 1.0:
            raise SchemaError(f"score must lie in [0, 1], got {score}", location)
        box = TrackBox(
            observation=_observation(record, location),
            class_label=_class_label(record, location),
            track_id=track_id,
            score=score,
            frame_index=frame_index,
            scene_id=scene_id,
        )
        out.setdefault(scene_id, {}).setdefault(frame_index, []).append(box)
    return out


def _box_payload(observation: Observation, class_label: str) -> dict:
    return {
        "center": [observation.x, observation.y, observation.z],
        "yaw": observation.a,
        "size": [observation.l, observation.w, observation.h],
        "class": class_label,
    }


def _dump(payload: dict, path: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def write_detections(detections: Mapping[str, Mapping[int, Sequence[Detection]]],
                     path: str, meta: Mapping | None = None):
    payload: dict = {} if meta is None else {"_meta": dict(meta)}
    for scene_id, frames in detections.items():
        payload[scene_id] = {
            str(frame_index): [
                {**_box_payload(d.observation, d.class_label), "score": d.score}
                for d in frames[frame_index]
            ]
            for frame_index in frames
        }
    _dump(payload, path)


def write_ground_truth(ground_truth: Mapping[str, Mapping[int, Sequence[GroundTruthBox]]],
                       path: str, meta: Mapping | None = None):
    payload: dict = {} if meta is None else {"_meta": dict(meta)}
    for scene_id, frames in ground_truth.items():
        payload[scene_id] = {
            str(frame_index): [
                {**_box_payload(g.observation, g.class_label), "instance_id": g.instance_id}
                for g in frames[frame_index]
            ]
            for frame_index in frames
        }
    _dump(payload, path)


def write_tracks(outputs: "Mapping[str, Sequence[FrameOutput]]", path: str,
                 meta: Mapping | None = None):
    """Serialize per-scene tracker outputs to a track file."""
    payload: dict = {} if meta is None else {"_meta": dict(meta)}
    for scene_id, frame_outputs in outputs.items():
        payload[scene_id] = {
            str(output.frame_index): [
                {
                    **_box_payload(record.state.observed(), record.class_label),
                    "score": record.score,
                    "track_id": record.track_id,
                }
                for record in output.records
            ]
            for output in frame_outputs
        }
    _dump(payload, path)
