"""Frame-by-frame multi-object tracking.

Each frame is processed per class: live tracks are forecast one frame
ahead, matched against the frame's detections under the configured
affinity and matcher, and then updated (matched), coasted (unmatched),
or spawned (unmatched detections).  A track must be matched on
birth_hits consecutive frames before it is reported, and it is dropped
after death_misses consecutive unmatched frames.  Only confirmed,
living tracks appear in the output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .association import (
    MATCHERS,
    correct_prediction,
    iou_affinity,
    mahalanobis_affinity,
)
from .calibration import ClassNoise, NoiseModel
from .core import Detection, StateEstimate, StateVector
from .dataset_io import RunConfig
from .errors import ConfigError, SequencingError
from .kalman import predict, update

TENTATIVE = "tentative"
CONFIRMED = "confirmed"


@dataclass
class Track:
    """Mutable per-object bookkeeping; estimates are replaced, not edited."""

    track_id: int
    class_label: str
    estimate: StateEstimate
    status: str = TENTATIVE
    consecutive_hits: int = 1
    consecutive_misses: int = 0
    last_score: float = 0.0
    score_sum: float = 0.0
    score_count: int = 0

    def current_score(self, score_mode: str) -> float:
        if score_mode == "running_mean" and self.score_count:
            return self.score_sum / self.score_count
        return self.last_score


@dataclass(frozen=True)
class TrackRecord:
    """One reported box: identity, class, full state, and confidence."""

    track_id: int
    class_label: str
    state: StateVector
    score: float


@dataclass(frozen=True)
class FrameOutput:
    """Confirmed tracks emitted for one frame, sorted by track_id."""

    frame_index: int
    records: tuple


@dataclass
class SceneStats:
    """Lifecycle counters accumulated over a scene."""

    frames: int = 0
    born: int = 0
    confirmed: int = 0
    died: int = 0


def _strip_angular_velocity(noise: NoiseModel) -> NoiseModel:
    """Zero the yaw-rate noise so the da component stays pinned at zero."""
    classes = {}
    for label, entry in noise.classes.items():
        q = entry.q.copy()
        sigma0 = entry.sigma0.copy()
        q[10] = 0.0
        sigma0[10] = 0.0
        classes[label] = ClassNoise(q, entry.r, sigma0)
    return NoiseModel(classes)


class MultiObjectTracker:
    """Tracker state over one scene; feed frames in ascending order."""

    def __init__(self, noise: NoiseModel, config: RunConfig | None = None):
        self.config = config if config is not None else RunConfig()
        if not self.config.angular_velocity:
            noise = _strip_angular_velocity(noise)
        self.noise = noise
        self.tracks: list = []
        self.stats = SceneStats()
        self._next_id = 1
        self._last_frame: int | None = None
        self._matrices = {
            label: (noise.q_matrix(label), noise.r_matrix(label), noise.sigma0_matrix(label))
            for label in noise.classes
        }

    def step(self, frame_index: int, detections: Sequence[Detection]) -> FrameOutput:
        """Process one frame and return the confirmed tracks."""
        if not isinstance(frame_index, int) or isinstance(frame_index, bool) or frame_index < 0:
            raise SequencingError(f"frame_index must be a non-negative int, got {frame_index!r}")
        if self._last_frame is not None and frame_index <= self._last_frame:
            raise SequencingError(
                f"frame {frame_index} arrived after frame {self._last_frame}; "
                "frames must be strictly ascending")
        for detection in detections:
            if detection.frame_index != frame_index:
                raise SequencingError(
                    f"detection for frame {detection.frame_index} supplied to "
                    f"frame {frame_index}")
            if detection.class_label not in self.noise:
                raise ConfigError(
                    f"noise model has no entry for class {detection.class_label!r}")
        self._last_frame = frame_index

        labels = sorted({t.class_label for t in self.tracks}
                        | {d.class_label for d in detections})
        survivors: list = []
        spawned: list = []
        for label in labels:
            tracks = [t for t in self.tracks if t.class_label == label]
            dets = [d for d in detections if d.class_label == label]
            survivors.extend(self._step_class(label, tracks, dets, spawned))
        self.tracks = sorted(survivors + spawned, key=lambda t: t.track_id)
        self.stats.frames += 1

        records = tuple(
            TrackRecord(t.track_id, t.class_label, t.estimate.mean,
                        t.current_score(self.config.score_mode))
            for t in self.tracks
            if t.status == CONFIRMED
        )
        return FrameOutput(frame_index, records)

    def _step_class(self, label: str, tracks: list, detections: list,
                    spawned: list) -> list:
        config = self.config
        q, r, sigma0 = self._matrices[label]
        predictions = [predict(t.estimate, q, r) for t in tracks]

        if predictions and detections:
            observations = [d.observation for d in detections]
            if config.affinity == "iou":
                affinity = iou_affinity(predictions, observations)
            else:
                affinity = mahalanobis_affinity(predictions, observations)
            result = MATCHERS[config.matcher](affinity, config.gate_for(label))
            matched_tracks = {i for i, _, _ in result.pairs}
            matched_dets = {j for _, j, _ in result.pairs}
        else:
            result = None
            matched_tracks = set()
            matched_dets = set()

        survivors = []
        if result is not None:
            for i, j, _ in result.pairs:
                track = tracks[i]
                detection = detections[j]
                corrected = correct_prediction(predictions[i], detection.observation.a)
                track.estimate = update(corrected, detection.observation)
                track.consecutive_hits += 1
                track.consecutive_misses = 0
                track.last_score = detection.score
                track.score_sum += detection.score
                track.score_count += 1
                if track.status == TENTATIVE and track.consecutive_hits >= config.birth_hits:
                    track.status = CONFIRMED
                    self.stats.confirmed += 1
                survivors.append(track)

        for i, track in enumerate(tracks):
            if i in matched_tracks:
                continue
            track.estimate = predictions[i].predicted_estimate
            track.consecutive_misses += 1
            track.consecutive_hits = 0
            if track.consecutive_misses >= config.death_misses:
                self.stats.died += 1
                continue
            survivors.append(track)

        for j, detection in enumerate(detections):
            if j in matched_dets:
                continue
            track = Track(
                track_id=self._next_id,
                class_label=label,
                estimate=StateEstimate(
                    StateVector.from_observation(detection.observation), sigma0),
                last_score=detection.score,
                score_sum=detection.score,
                score_count=1,
            )
            self._next_id += 1
            self.stats.born += 1
            if track.consecutive_hits >= config.birth_hits:
                track.status = CONFIRMED
                self.stats.confirmed += 1
            spawned.append(track)
        return survivors


def run_scene(frames: Mapping[int, Sequence[Detection]], noise: NoiseModel,
              config: RunConfig | None = None) -> list:
    """Track one scene: a mapping of ascending frame_index to detections.

    Frames are consumed in the mapping's iteration order and must be
    strictly ascending; a frame with an empty detection list still
    advances every track's miss counter.
    """
    tracker = MultiObjectTracker(noise, config)
    return [tracker.step(frame_index, frames[frame_index]) for frame_index in frames]
