"""Data-driven estimation of the tracker's noise covariances.

Process noise Q is read off annotated trajectories: under the
constant-velocity model the one-step prediction error of a position
component equals its second difference, so the per-class variance of
those second differences over consecutive frame triples estimates the
diagonal of Q.  Velocity components reuse the matching position
variances, and box extents get zero process noise because annotated
extents are constant.

Observation noise R is the per-class variance of the residual between
detections and the annotations they match (greedy, 2D center distance
under a 2 meter gate).  Initial covariances copy R for the observed
components and the Q velocity entries for the velocity components.

All variances are population variances (divide by the sample count).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .association import greedy_center_match
from .core import (
    CLASS_LABELS,
    OBS_DIM,
    STATE_DIM,
    Detection,
    Observation,
    wrap_angle,
    wrap_angle_array,
)
from .dataset_io import GroundTruthBox
from .errors import CalibrationError, SchemaError

# Matching gate in meters for pairing detections with annotations.
CALIBRATION_GATE = 2.0

# Fewer second differences than this per class is refused.
MIN_SECOND_DIFFERENCES = 2


@dataclass(frozen=True)
class ClassNoise:
    """Diagonals of Q (11), R (7), and the initial covariance (11)."""

    q: np.ndarray
    r: np.ndarray
    sigma0: np.ndarray

    def __post_init__(self):
        for name, size in (("q", STATE_DIM), ("r", OBS_DIM), ("sigma0", STATE_DIM)):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (size,):
                raise ValueError(f"{name} diagonal must have shape ({size},), got {arr.shape}")
            if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
                raise ValueError(f"{name} diagonal must be finite and non-negative")
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class NoiseModel:
    """Per-class noise diagonals consumed by the tracker."""

    classes: Mapping[str, ClassNoise]

    def __post_init__(self):
        entries = dict(self.classes)
        if not entries:
            raise ValueError("noise model must cover at least one class")
        for label in entries:
            if label not in CLASS_LABELS:
                raise ValueError(f"unknown class label {label!r}")
        object.__setattr__(self, "classes", entries)

    def __contains__(self, label: str) -> bool:
        return label in self.classes

    def q_matrix(self, label: str) -> np.ndarray:
        return np.diag(self.classes[label].q)

    def r_matrix(self, label: str) -> np.ndarray:
        return np.diag(self.classes[label].r)

    def sigma0_matrix(self, label: str) -> np.ndarray:
        return np.diag(self.classes[label].sigma0)

    @classmethod
    def default_covariance(cls, labels: Sequence[str] = CLASS_LABELS) -> "NoiseModel":
        """Heuristic fallback: every diagonal entry is one."""
        return cls({
            label: ClassNoise(np.ones(STATE_DIM), np.ones(OBS_DIM), np.ones(STATE_DIM))
            for label in labels
        })


@dataclass(frozen=True)
class GroundTruthTrack:
    """One annotated instance: its frames, poses (x, y, z, yaw), and sizes."""

    class_label: str
    instance_id: str
    scene_id: str
    frames: tuple
    poses: np.ndarray
    sizes: np.ndarray

    def __post_init__(self):
        frames = tuple(int(f) for f in self.frames)
        if not frames:
            raise ValueError("track must cover at least one frame")
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("track frames must be strictly increasing")
        poses = np.asarray(self.poses, dtype=float)
        sizes = np.asarray(self.sizes, dtype=float)
        if poses.shape != (len(frames), 4) or sizes.shape != (len(frames), 3):
            raise ValueError("poses must be (n, 4) and sizes (n, 3) matching the frame count")
        poses = poses.copy()
        sizes = sizes.copy()
        poses.flags.writeable = False
        sizes.flags.writeable = False
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "sizes", sizes)


def tracks_from_ground_truth(
        ground_truth: Mapping[str, Mapping[int, Sequence[GroundTruthBox]]],
) -> list:
    """Group ground-truth boxes into per-instance tracks."""
    grouped: dict = {}
    for scene_id in sorted(ground_truth):
        for frame_index in sorted(ground_truth[scene_id]):
            for box in ground_truth[scene_id][frame_index]:
                key = (scene_id, box.instance_id)
                entry = grouped.setdefault(key, {"label": box.class_label, "rows": []})
                if entry["label"] != box.class_label:
                    raise CalibrationError(
                        f"instance {box.instance_id!r} in scene {scene_id!r} "
                        f"changes class from {entry['label']!r} to {box.class_label!r}")
                obs = box.observation
                entry["rows"].append(
                    (frame_index, (obs.x, obs.y, obs.z, obs.a), (obs.l, obs.w, obs.h)))
    tracks = []
    for (scene_id, instance_id), entry in grouped.items():
        rows = sorted(entry["rows"])
        tracks.append(GroundTruthTrack(
            class_label=entry["label"],
            instance_id=instance_id,
            scene_id=scene_id,
            frames=tuple(row[0] for row in rows),
            poses=np.array([row[1] for row in rows]),
            sizes=np.array([row[2] for row in rows]),
        ))
    return tracks


def _second_differences(track: GroundTruthTrack) -> np.ndarray:
    """Second differences of (x, y, z, yaw) over consecutive frame triples.

    Only triples of frames (f, f+1, f+2) all present in the track
    contribute; gaps never mix into one difference.  The two inner
    yaw differences are wrapped before they are subtracted.
    """
    frames = np.array(track.frames)
    rows = []
    for idx in range(len(frames) - 2):
        if frames[idx + 1] - frames[idx] == 1 and frames[idx + 2] - frames[idx + 1] == 1:
            first = track.poses[idx + 1] - track.poses[idx]
            second = track.poses[idx + 2] - track.poses[idx + 1]
            first = np.concatenate([first[:3], wrap_angle_array(first[3:])])
            second = np.concatenate([second[:3], wrap_angle_array(second[3:])])
            rows.append(second - first)
    if not rows:
        return np.empty((0, 4))
    return np.array(rows)


def _q_from_pose_variance(pose_var: np.ndarray) -> np.ndarray:
    q = np.zeros(STATE_DIM)
    q[0:4] = pose_var
    # Extents are constant in the motion model: no process noise.
    # Velocity entries reuse the position-level variances.
    q[7:11] = pose_var
    return q


def estimate_process_noise(gt_tracks: Sequence[GroundTruthTrack],
                           pooled: bool = False) -> dict:
    """Per-class Q diagonals from annotated trajectories.

    Raises CalibrationError when a class yields fewer than two second
    differences.  With pooled=True one set of statistics over all
    classes is shared by every class present.
    """
    samples: dict = {}
    for track in gt_tracks:
        diffs = _second_differences(track)
        if len(diffs):
            samples.setdefault(track.class_label, []).append(diffs)
        else:
            samples.setdefault(track.class_label, [])
    if pooled:
        rows = [d for per_class in samples.values() for d in per_class]
        stacked = np.concatenate(rows) if rows else np.empty((0, 4))
        if len(stacked) < MIN_SECOND_DIFFERENCES:
            raise CalibrationError(
                f"pooled process-noise estimation needs at least "
                f"{MIN_SECOND_DIFFERENCES} second differences, got {len(stacked)}")
        q = _q_from_pose_variance(np.var(stacked, axis=0))
        return {label: q.copy() for label in sorted(samples)}
    out = {}
    for label in sorted(samples):
        rows = samples[label]
        stacked = np.concatenate(rows) if rows else np.empty((0, 4))
        if len(stacked) < MIN_SECOND_DIFFERENCES:
            raise CalibrationError(
                f"class {label!r} has {len(stacked)} second differences; "
                f"at least {MIN_SECOND_DIFFERENCES} are required")
        out[label] = _q_from_pose_variance(np.var(stacked, axis=0))
    return out


def _gt_boxes_by_frame(gt_tracks: Sequence[GroundTruthTrack]) -> dict:
    """Scatter tracks back to (scene, frame) -> [(class, Observation)]."""
    by_frame: dict = {}
    for track in gt_tracks:
        for idx, frame_index in enumerate(track.frames):
            x, y, z, a = track.poses[idx]
            l, w, h = track.sizes[idx]
            by_frame.setdefault((track.scene_id, frame_index), []).append(
                (track.class_label, Observation(x, y, z, a, l, w, h)))
    return by_frame


def estimate_observation_noise(gt_tracks: Sequence[GroundTruthTrack],
                               detections: Mapping[str, Mapping[int, Sequence[Detection]]],
                               process_noise: Mapping[str, np.ndarray] | None = None,
                               pooled: bool = False,
                               gate: float = CALIBRATION_GATE) -> dict:
    """Per-class (R diagonal, initial covariance diagonal) from residuals.

    Detections are matched to annotations per frame and class by
    greedy 2D center distance under the gate; the per-component
    variance of the matched residuals is R.  The initial covariance
    copies R for the observed components and the Q velocity entries
    for the velocities (process_noise is estimated from the same
    tracks when not supplied).
    """
    if process_noise is None:
        process_noise = estimate_process_noise(gt_tracks, pooled=pooled)
    residuals: dict = {label: [] for label in process_noise}
    gt_by_frame = _gt_boxes_by_frame(gt_tracks)
    for (scene_id, frame_index), labeled_boxes in sorted(gt_by_frame.items()):
        frame_detections = detections.get(scene_id, {}).get(frame_index, [])
        for label in sorted({label for label, _ in labeled_boxes}):
            gt_obs = [obs for lab, obs in labeled_boxes if lab == label]
            det_obs = [d.observation for d in frame_detections if d.class_label == label]
            if not det_obs:
                continue
            result = greedy_center_match(gt_obs, det_obs, gate)
            for gi, dj, _ in result.pairs:
                nu = det_obs[dj].to_array() - gt_obs[gi].to_array()
                nu[3] = wrap_angle(nu[3])
                residuals.setdefault(label, []).append(nu)
    out = {}
    if pooled:
        rows = [nu for per_class in residuals.values() for nu in per_class]
        if not rows:
            raise CalibrationError("no detection matched any annotation within the gate")
        r = np.var(np.array(rows), axis=0)
        for label in sorted(process_noise):
            sigma0 = np.concatenate([r, process_noise[label][7:11]])
            out[label] = (r.copy(), sigma0)
        return out
    for label in sorted(process_noise):
        rows = residuals.get(label, [])
        if not rows:
            raise CalibrationError(
                f"class {label!r} has zero matched detection/annotation pairs")
        r = np.var(np.array(rows), axis=0)
        sigma0 = np.concatenate([r, process_noise[label][7:11]])
        out[label] = (r, sigma0)
    return out


def calibrate(ground_truth: Mapping[str, Mapping[int, Sequence[GroundTruthBox]]],
              detections: Mapping[str, Mapping[int, Sequence[Detection]]],
              pooled: bool = False) -> NoiseModel:
    """Estimate a full NoiseModel from a ground-truth and detection split."""
    gt_tracks = tracks_from_ground_truth(ground_truth)
    process = estimate_process_noise(gt_tracks, pooled=pooled)
    observation = estimate_observation_noise(
        gt_tracks, detections, process_noise=process, pooled=pooled)
    return NoiseModel({
        label: ClassNoise(process[label], observation[label][0], observation[label][1])
        for label in process
    })


_NOISE_FORMAT = "mot3d-noise-model"


def save_noise_model(model: NoiseModel, path: str):
    """Write the model as JSON with explicit per-class diagonal arrays.

    Array orders: x, y, z, a, l, w, h, dx, dy, dz, da for q and
    sigma0; x, y, z, a, l, w, h for r.
    """
    payload = {
        "_meta": {"format": _NOISE_FORMAT, "version": 1},
        "classes": {
            label: {
                "q": list(noise.q),
                "r": list(noise.r),
                "sigma0": list(noise.sigma0),
            }
            for label, noise in sorted(model.classes.items())
        },
    }
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def load_noise_model(path: str) -> NoiseModel:
    try:
        with open(path) as handle:
            data = json.load(handle)
    except FileNotFoundError:
        raise SchemaError(f"noise model file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"noise model file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict) or not isinstance(data.get("classes"), dict):
        raise SchemaError("noise model file must hold an object with a 'classes' map", path)
    classes = {}
    for label, entry in data["classes"].items():
        location = f"noise model class {label!r}"
        if label not in CLASS_LABELS:
            raise SchemaError(f"unknown class {label!r}", location)
        if not isinstance(entry, dict):
            raise SchemaError("class entry must be an object", location)
        arrays = {}
        for name, size in (("q", STATE_DIM), ("r", OBS_DIM), ("sigma0", STATE_DIM)):
            values = entry.get(name)
            if (not isinstance(values, list) or len(values) != size
                    or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                               for v in values)):
                raise SchemaError(f"field {name!r} must be an array of {size} numbers", location)
            arrays[name] = np.array(values, dtype=float)
        try:
            classes[label] = ClassNoise(arrays["q"], arrays["r"], arrays["sigma0"])
        except ValueError as exc:
            raise SchemaError(str(exc), location) from None
    try:
        return NoiseModel(classes)
    except ValueError as exc:
        raise SchemaError(str(exc), path) from None
