"""Synthetic scene generation with known noise parameters.

Ground-truth trajectories integrate the tracker's own motion model:
each frame a per-component acceleration is drawn, added to the
velocity, and the updated velocity advances the pose.  The realized
second difference of every pose component therefore equals the drawn
acceleration exactly, so calibration run on generated data must
recover the configured acceleration variances.

Detections perturb ground truth with independent per-component noise,
drop boxes with a miss probability, and add Poisson-distributed false
positives with class-typical sizes.  All randomness flows through one
seeded PCG64 generator in a fixed call order, so a spec reproduces
byte-identical files; the writer records the generator and seed in the
file's metadata header.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import CLASS_LABELS, Detection, Observation, wrap_angle
from .dataset_io import GroundTruthBox
from .errors import SchemaError

# Typical box extents (l, w, h) in meters used for false positives and
# as defaults for objects without an explicit size.
CLASS_SIZES = {
    "bicycle": (1.7, 0.6, 1.3),
    "bus": (11.0, 2.9, 3.4),
    "car": (4.5, 1.9, 1.6),
    "motorcycle": (2.1, 0.8, 1.4),
    "pedestrian": (0.6, 0.6, 1.7),
    "trailer": (12.3, 2.9, 3.9),
    "truck": (6.9, 2.5, 2.8),
}

# Generated box extents never drop below this under size noise.
MIN_EXTENT = 0.05

RNG_NAME = "numpy-pcg64"


def _as_tuple(value, length: int, name: str) -> tuple:
    if isinstance(value, (int, float)):
        return (float(value),) * length
    out = tuple(float(v) for v in value)
    if len(out) != length:
        raise ValueError(f"{name} must be a scalar or {length} numbers, got {value!r}")
    return out


@dataclass(frozen=True)
class ObjectSpec:
    """One scripted object: initial pose, constant velocity, lifespan."""

    class_label: str
    x: float
    y: float
    z: float = 0.0
    yaw: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    vz: float = 0.0
    yaw_rate: float = 0.0
    size: tuple | None = None
    first_frame: int = 0
    lifespan: int | None = None

    def __post_init__(self):
        if self.class_label not in CLASS_LABELS:
            raise ValueError(f"unknown class label {self.class_label!r}")
        if self.size is not None:
            size = _as_tuple(self.size, 3, "size")
            if any(v <= 0 for v in size):
                raise ValueError("size extents must be positive")
            object.__setattr__(self, "size", size)
        if self.first_frame < 0:
            raise ValueError("first_frame must be non-negative")
        if self.lifespan is not None and self.lifespan < 1:
            raise ValueError("lifespan must be positive")

    def extents(self) -> tuple:
        return self.size if self.size is not None else CLASS_SIZES[self.class_label]


@dataclass(frozen=True)
class NoiseSpec:
    """Detection and motion noise parameters.

    accel_sigma matches the process-noise semantics (per-frame random
    acceleration of x, y, z, yaw); position/angle/size sigmas match
    the observation-noise semantics.
    """

    position_sigma: tuple = (0.0, 0.0, 0.0)
    angle_sigma: float = 0.0
    size_sigma: float = 0.0
    accel_sigma: tuple = (0.0, 0.0, 0.0, 0.0)
    p_miss: float = 0.0
    fp_rate: float = 0.0
    score_range: tuple = (1.0, 1.0)
    fp_score_range: tuple = (0.1, 0.6)

    def __post_init__(self):
        object.__setattr__(self, "position_sigma",
                           _as_tuple(self.position_sigma, 3, "position_sigma"))
        object.__setattr__(self, "accel_sigma",
                           _as_tuple(self.accel_sigma, 4, "accel_sigma"))
        object.__setattr__(self, "score_range", _as_tuple(self.score_range, 2, "score_range"))
        object.__setattr__(self, "fp_score_range",
                           _as_tuple(self.fp_score_range, 2, "fp_score_range"))
        if not 0.0 <= self.p_miss < 1.0:
            raise ValueError("p_miss must lie in [0, 1)")
        if self.fp_rate < 0.0:
            raise ValueError("fp_rate must be non-negative")
        for name in ("score_range", "fp_score_range"):
            lo, hi = getattr(self, name)
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError(f"{name} must satisfy 0 <= low <= high <= 1")


@dataclass(frozen=True)
class ScenarioSpec:
    """A complete synthetic scene: objects, noise, bounds, and seed."""

    scene_id: str
    frame_count: int
    objects: tuple
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    bounds: tuple = (-60.0, 60.0, -60.0, 60.0)
    fp_z_range: tuple = (-0.5, 2.0)

    def __post_init__(self):
        if not self.scene_id or self.scene_id.startswith("_"):
            raise ValueError("scene_id must be non-empty and must not start with '_'")
        if self.frame_count < 1:
            raise ValueError("frame_count must be positive")
        object.__setattr__(self, "objects", tuple(self.objects))
        bounds = _as_tuple(self.bounds, 4, "bounds")
        if bounds[0] >= bounds[1] or bounds[2] >= bounds[3]:
            raise ValueError("bounds must be (x_min, x_max, y_min, y_max) with min < max")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "fp_z_range", _as_tuple(self.fp_z_range, 2, "fp_z_range"))


def _trajectory(spec: ScenarioSpec, obj: ObjectSpec, rng) -> dict:
    """Pose per live frame; velocity integrates sampled accelerations."""
    last = spec.frame_count if obj.lifespan is None else min(
        spec.frame_count, obj.first_frame + obj.lifespan)
    pose = np.array([obj.x, obj.y, obj.z, obj.yaw], dtype=float)
    velocity = np.array([obj.vx, obj.vy, obj.vz, obj.yaw_rate], dtype=float)
    sigma = np.array(spec.noise.accel_sigma)
    poses = {}
    for frame in range(obj.first_frame, last):
        if frame > obj.first_frame:
            velocity = velocity + rng.normal(0.0, 1.0, size=4) * sigma
            pose = pose + velocity
            pose[3] = wrap_angle(pose[3])
        poses[frame] = pose.copy()
    return poses


def generate(spec: ScenarioSpec) -> tuple:
    """Build one scene; returns (gt_frames, detection_frames).

    Both are dicts over every frame index in [0, frame_count); frames
    may hold empty lists.
    """
    rng = np.random.default_rng(spec.seed)
    noise = spec.noise
    trajectories = [_trajectory(spec, obj, rng) for obj in spec.objects]
    fp_classes = sorted({obj.class_label for obj in spec.objects}) or list(CLASS_LABELS)

    gt_frames: dict = {frame: [] for frame in range(spec.frame_count)}
    det_frames: dict = {frame: [] for frame in range(spec.frame_count)}

    for frame in range(spec.frame_count):
        for index, obj in enumerate(spec.objects):
            pose = trajectories[index].get(frame)
            if pose is None:
                continue
            extents = obj.extents()
            gt_frames[frame].append(GroundTruthBox(
                observation=Observation(pose[0], pose[1], pose[2], pose[3],
                                        extents[0], extents[1], extents[2]),
                class_label=obj.class_label,
                instance_id=f"inst{index:03d}",
                frame_index=frame,
                scene_id=spec.scene_id,
            ))
            if noise.p_miss > 0.0 and rng.random() < noise.p_miss:
                continue
            center = pose[:3] + rng.normal(0.0, 1.0, size=3) * np.array(noise.position_sigma)
            yaw = wrap_angle(pose[3] + rng.normal(0.0, 1.0) * noise.angle_sigma)
            size = np.maximum(
                np.array(extents) + rng.normal(0.0, 1.0, size=3) * noise.size_sigma,
                MIN_EXTENT)
            score = rng.uniform(noise.score_range[0], noise.score_range[1])
            det_frames[frame].append(Detection(
                observation=Observation(center[0], center[1], center[2], yaw,
                                        size[0], size[1], size[2]),
                class_label=obj.class_label,
                score=float(min(1.0, max(0.0, score))),
                frame_index=frame,
                scene_id=spec.scene_id,
            ))
        if noise.fp_rate > 0.0:
            for _ in range(int(rng.poisson(noise.fp_rate))):
                label = fp_classes[int(rng.integers(len(fp_classes)))]
                base = np.array(CLASS_SIZES[label])
                size = np.maximum(base * rng.uniform(0.9, 1.1, size=3), MIN_EXTENT)
                det_frames[frame].append(Detection(
                    observation=Observation(
                        rng.uniform(spec.bounds[0], spec.bounds[1]),
                        rng.uniform(spec.bounds[2], spec.bounds[3]),
                        rng.uniform(spec.fp_z_range[0], spec.fp_z_range[1]),
                        rng.uniform(-math.pi, math.pi),
                        size[0], size[1], size[2]),
                    class_label=label,
                    score=float(rng.uniform(noise.fp_score_range[0],
                                            noise.fp_score_range[1])),
                    frame_index=frame,
                    scene_id=spec.scene_id,
                ))
    return gt_frames, det_frames


def generate_suite(specs: Sequence[ScenarioSpec]) -> tuple:
    """Generate several scenes into (gt_by_scene, detections_by_scene)."""
    ids = [spec.scene_id for spec in specs]
    if len(set(ids)) != len(ids):
        raise ValueError("scenario scene_ids must be unique")
    gt_by_scene = {}
    det_by_scene = {}
    for spec in specs:
        gt_frames, det_frames = generate(spec)
        gt_by_scene[spec.scene_id] = gt_frames
        det_by_scene[spec.scene_id] = det_frames
    return gt_by_scene, det_by_scene


def scenario_meta(specs: Sequence[ScenarioSpec]) -> dict:
    """Provenance header recorded in generated files."""
    return {
        "generator": "mot3d-synthetic",
        "version": 1,
        "rng": RNG_NAME,
        "seeds": {spec.scene_id: spec.seed for spec in specs},
    }


def spec_to_dict(spec: ScenarioSpec) -> dict:
    return {
        "scene_id": spec.scene_id,
        "frame_count": spec.frame_count,
        "seed": spec.seed,
        "bounds": list(spec.bounds),
        "fp_z_range": list(spec.fp_z_range),
        "noise": {
            "position_sigma": list(spec.noise.position_sigma),
            "angle_sigma": spec.noise.angle_sigma,
            "size_sigma": spec.noise.size_sigma,
            "accel_sigma": list(spec.noise.accel_sigma),
            "p_miss": spec.noise.p_miss,
            "fp_rate": spec.noise.fp_rate,
            "score_range": list(spec.noise.score_range),
            "fp_score_range": list(spec.noise.fp_score_range),
        },
        "objects": [
            {
                "class_label": obj.class_label,
                "x": obj.x, "y": obj.y, "z": obj.z, "yaw": obj.yaw,
                "vx": obj.vx, "vy": obj.vy, "vz": obj.vz,
                "yaw_rate": obj.yaw_rate,
                "size": None if obj.size is None else list(obj.size),
                "first_frame": obj.first_frame,
                "lifespan": obj.lifespan,
            }
            for obj in spec.objects
        ],
    }


def spec_from_dict(data: Mapping) -> ScenarioSpec:
    try:
        noise = NoiseSpec(**data.get("noise", {}))
        objects = tuple(ObjectSpec(**entry) for entry in data.get("objects", []))
        extra = {key: data[key] for key in ("seed", "bounds", "fp_z_range") if key in data}
        return ScenarioSpec(
            scene_id=data["scene_id"],
            frame_count=data["frame_count"],
            objects=objects,
            noise=noise,
            **extra,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"invalid scenario spec: {exc}") from None


def load_scenarios(path: str) -> list:
    """Read one scenario or a {"scenarios": [...]} collection from JSON."""
    try:
        with open(path) as handle:
            data = json.load(handle)
    except FileNotFoundError:
        raise SchemaError(f"scenario file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"scenario file {path} is not valid JSON: {exc}") from None
    if isinstance(data, dict) and "scenarios" in data:
        entries = data["scenarios"]
        if not isinstance(entries, list) or not entries:
            raise SchemaError("'scenarios' must be a non-empty array", path)
        return [spec_from_dict(entry) for entry in entries]
    if isinstance(data, dict):
        return [spec_from_dict(data)]
    raise SchemaError("scenario file must hold an object", path)


def noiseless_scene(scene_id: str = "noiseless", seed: int = 7,
                    frame_count: int = 50) -> ScenarioSpec:
    """Five well-separated moving objects observed perfectly."""
    objects = (
        ObjectSpec("car", x=-40.0, y=-20.0, yaw=0.0, vx=1.2),
        ObjectSpec("car", x=40.0, y=20.0, yaw=math.pi, vx=-1.1),
        ObjectSpec("pedestrian", x=0.0, y=-30.0, yaw=math.pi / 2, vy=0.5),
        ObjectSpec("bus", x=-30.0, y=25.0, yaw=0.3, vx=0.9, vy=0.3),
        ObjectSpec("truck", x=25.0, y=-25.0, yaw=-2.0, vx=-0.5, vy=-0.6),
    )
    return ScenarioSpec(scene_id=scene_id, frame_count=frame_count,
                        objects=objects, noise=NoiseSpec(), seed=seed)


def calibration_scenario(scene_id: str = "calibration", seed: int = 101,
                         accel_sigma=0.1, obs_sigma: float = 0.3,
                         angle_accel_sigma: float = 0.02,
                         angle_obs_sigma: float = 0.05,
                         size_sigma: float = 0.02,
                         objects: int = 100, frame_count: int = 102,
                         spacing: float = 150.0,
                         classes: Sequence[str] = ("car",)) -> ScenarioSpec:
    """Widely spaced objects for noise estimation.

    Defaults yield objects * (frame_count - 2) = 10000 second
    differences; the generous spacing keeps random-walk wander from
    ever bringing two objects inside the matching gate.  accel_sigma
    may be a scalar (applied to x, y, z, with angle_accel_sigma for
    yaw) or a full 4-tuple.
    """
    side = math.ceil(math.sqrt(objects))
    object_specs = []
    for index in range(objects):
        row, col = divmod(index, side)
        object_specs.append(ObjectSpec(
            class_label=classes[index % len(classes)],
            x=col * spacing,
            y=row * spacing,
            yaw=(index % 7) * 0.8 - 2.4,
        ))
    if isinstance(accel_sigma, (int, float)):
        accel = (accel_sigma, accel_sigma, accel_sigma, angle_accel_sigma)
    else:
        accel = _as_tuple(accel_sigma, 4, "accel_sigma")
    noise = NoiseSpec(
        position_sigma=obs_sigma,
        angle_sigma=angle_obs_sigma,
        size_sigma=size_sigma,
        accel_sigma=accel,
        score_range=(0.5, 1.0),
    )
    return ScenarioSpec(scene_id=scene_id, frame_count=frame_count,
                        objects=tuple(object_specs), noise=noise, seed=seed,
                        bounds=(-spacing, side * spacing, -spacing, side * spacing))


_SUITE_NOISE = dict(
    position_sigma=0.15,
    angle_sigma=0.05,
    size_sigma=0.02,
    # lateral acceleration kept small so lanes stay separated
    accel_sigma=(0.12, 0.02, 0.01, 0.004),
    p_miss=0.05,
    fp_rate=0.3,
    score_range=(0.55, 1.0),
    fp_score_range=(0.1, 0.5),
)

# compact walker boxes: per-frame displacement exceeds this extent
_SUITE_PED_SIZE = (0.4, 0.4, 1.7)


def standard_suite(seed: int = 11, scenes: int = 3,
                   frame_count: int = 50) -> list:
    """Noisy tracking scenes mixing small fast walkers with large vehicles.

    Pedestrians advance farther per frame than their box extent, which
    starves overlap-based affinities while distance-based gating keeps
    working; buses and cars barely move relative to their size.  Lanes
    run along x, twelve meters apart.  Speeds stay moderate so that a
    freshly spawned track, whose initial velocity belief is zero, can
    still pass the gate and complete its birth sequence.
    """
    specs = []
    for scene_index in range(scenes):
        objects = (
            ObjectSpec("pedestrian", x=-20.0, y=-42.0, yaw=0.0, vx=0.5,
                       size=_SUITE_PED_SIZE),
            ObjectSpec("pedestrian", x=20.0, y=-18.0, yaw=math.pi, vx=-0.48,
                       size=_SUITE_PED_SIZE),
            ObjectSpec("pedestrian", x=0.0, y=6.0, yaw=0.0, vx=0.52,
                       size=_SUITE_PED_SIZE),
            ObjectSpec("car", x=-25.0, y=-30.0, yaw=0.0, vx=0.6),
            ObjectSpec("car", x=25.0, y=-6.0, yaw=math.pi, vx=-0.55),
            ObjectSpec("car", x=-22.0, y=30.0, yaw=0.0, vx=0.58),
            ObjectSpec("bus", x=-18.0, y=18.0, yaw=0.0, vx=0.5),
            ObjectSpec("bus", x=22.0, y=42.0, yaw=math.pi, vx=-0.5),
        )
        specs.append(ScenarioSpec(
            scene_id=f"suite{scene_index}",
            frame_count=frame_count,
            objects=objects,
            noise=NoiseSpec(**_SUITE_NOISE),
            seed=seed + scene_index,
        ))
    return specs


def standard_suite_calibration(seed: int = 12) -> ScenarioSpec:
    """Calibration split with the standard suite's noise parameters."""
    noise = _SUITE_NOISE
    return calibration_scenario(
        scene_id="suite-calibration",
        seed=seed,
        accel_sigma=noise["accel_sigma"],
        obs_sigma=noise["position_sigma"],
        angle_obs_sigma=noise["angle_sigma"],
        size_sigma=noise["size_sigma"],
        objects=42,
        frame_count=52,
        classes=("pedestrian", "car", "bus"),
    )


def turning_scenario(scene_id: str = "turning", seed: int = 5,
                     yaw_rate: float = 0.15, frame_count: int = 40) -> ScenarioSpec:
    """A single noiseless box rotating in place at a constant yaw rate."""
    objects = (ObjectSpec("car", x=0.0, y=0.0, yaw=0.2, yaw_rate=yaw_rate),)
    return ScenarioSpec(scene_id=scene_id, frame_count=frame_count,
                        objects=objects, noise=NoiseSpec(), seed=seed)
