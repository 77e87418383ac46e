"""Core state-space model for 3D multi-object tracking.

A tracked object carries an 11-dimensional state

    s = (x, y, z, a, l, w, h, dx, dy, dz, da)

where (x, y, z) is the box center in meters, a is the yaw angle around
the vertical axis, (l, w, h) are box extents, and (dx, dy, dz, da) are
per-frame displacements of the center and yaw.  Detections observe the
first seven components.  Time is discrete; one step equals one frame,
so velocities are stored in units per frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

STATE_DIM = 11
OBS_DIM = 7

# Index of the yaw angle within both the state and the observation vector.
ANGLE_INDEX = 3

CLASS_LABELS = (
    "bicycle",
    "bus",
    "car",
    "motorcycle",
    "pedestrian",
    "trailer",
    "truck",
)

_TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to the half-open interval [-pi, pi)."""
    theta = float(theta)
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta!r}")
    return (theta + math.pi) % _TWO_PI - math.pi


def wrap_angle_array(theta: np.ndarray) -> np.ndarray:
    """Vectorized wrap to [-pi, pi); inputs must be finite."""
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise ValueError("angles must be finite")
    return (theta + math.pi) % _TWO_PI - math.pi


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    """Return (M + M^T) / 2.

    Applied after every covariance product so accumulated float error
    cannot drift a covariance away from symmetry.
    """
    matrix = np.asarray(matrix, dtype=float)
    return (matrix + matrix.T) / 2.0


# Symmetry deviation and eigenvalue floor tolerated by covariance checks.
SYMMETRY_TOL = 1e-9
EIGENVALUE_FLOOR = -1e-9


def validate_covariance(matrix: np.ndarray, size: int, name: str = "covariance") -> np.ndarray:
    """Check a square covariance: symmetric within 1e-9, eigenvalues >= -1e-9.

    Returns a symmetrized, read-only copy.  Raises ValueError otherwise.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (size, size):
        raise ValueError(f"{name} must have shape ({size}, {size}), got {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise ValueError(f"{name} must be finite")
    if np.max(np.abs(matrix - matrix.T), initial=0.0) > SYMMETRY_TOL:
        raise ValueError(f"{name} is not symmetric within {SYMMETRY_TOL}")
    out = symmetrize(matrix)
    min_eig = float(np.min(np.linalg.eigvalsh(out)))
    if min_eig < EIGENVALUE_FLOOR:
        raise ValueError(f"{name} has eigenvalue {min_eig:.3e} below {EIGENVALUE_FLOOR}")
    out.flags.writeable = False
    return out


def _check_finite(label: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{label} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class Observation:
    """A detected 3D box: center, yaw, and extents."""

    x: float
    y: float
    z: float
    a: float
    l: float
    w: float
    h: float

    def __post_init__(self):
        for f in fields(self):
            _check_finite(f.name, getattr(self, f.name))
        for name in ("l", "w", "h"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        object.__setattr__(self, "a", wrap_angle(self.a))

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.a, self.l, self.w, self.h])

    @classmethod
    def from_array(cls, arr) -> "Observation":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (OBS_DIM,):
            raise ValueError(f"observation vector must have shape ({OBS_DIM},), got {arr.shape}")
        return cls(*arr)


@dataclass(frozen=True)
class StateVector:
    """Full 11-dimensional track state; velocities default to zero."""

    x: float
    y: float
    z: float
    a: float
    l: float
    w: float
    h: float
    dx: float = 0.0
    dy: float = 0.0
    dz: float = 0.0
    da: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            _check_finite(f.name, getattr(self, f.name))
        for name in ("l", "w", "h"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        object.__setattr__(self, "a", wrap_angle(self.a))

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.a, self.l, self.w, self.h,
                         self.dx, self.dy, self.dz, self.da])

    @classmethod
    def from_array(cls, arr) -> "StateVector":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (STATE_DIM,):
            raise ValueError(f"state vector must have shape ({STATE_DIM},), got {arr.shape}")
        return cls(*arr)

    def observed(self) -> Observation:
        """Project the state onto the observed components (first seven)."""
        return Observation(self.x, self.y, self.z, self.a, self.l, self.w, self.h)

    @classmethod
    def from_observation(cls, obs: Observation) -> "StateVector":
        """Lift an observation to a state with zero velocities."""
        return cls(obs.x, obs.y, obs.z, obs.a, obs.l, obs.w, obs.h)


def _build_transition() -> np.ndarray:
    a = np.eye(STATE_DIM)
    # Center and yaw advance by their per-frame velocities; extents are constant.
    a[0, 7] = 1.0
    a[1, 8] = 1.0
    a[2, 9] = 1.0
    a[3, 10] = 1.0
    a.flags.writeable = False
    return a


def _build_observation() -> np.ndarray:
    h = np.hstack([np.eye(OBS_DIM), np.zeros((OBS_DIM, STATE_DIM - OBS_DIM))])
    h.flags.writeable = False
    return h


TRANSITION_MATRIX = _build_transition()
OBSERVATION_MATRIX = _build_observation()


def apply_transition(state: StateVector) -> StateVector:
    """Advance a state one frame under the constant-velocity motion model."""
    return StateVector(
        state.x + state.dx,
        state.y + state.dy,
        state.z + state.dz,
        wrap_angle(state.a + state.da),
        state.l,
        state.w,
        state.h,
        state.dx,
        state.dy,
        state.dz,
        state.da,
    )


def observation_residual(observation: Observation, predicted: Observation) -> np.ndarray:
    """Component-wise residual observation - predicted with the yaw wrapped."""
    nu = observation.to_array() - predicted.to_array()
    nu[ANGLE_INDEX] = wrap_angle(nu[ANGLE_INDEX])
    return nu


@dataclass(frozen=True)
class StateEstimate:
    """A Gaussian belief over the state: mean plus 11x11 covariance."""

    mean: StateVector
    covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "covariance", validate_covariance(self.covariance, STATE_DIM)
        )


@dataclass(frozen=True)
class Detection:
    """One detector output box with class, confidence, and provenance."""

    observation: Observation
    class_label: str
    score: float
    frame_index: int
    scene_id: str = ""

    def __post_init__(self):
        if self.class_label not in CLASS_LABELS:
            raise ValueError(f"unknown class label {self.class_label!r}")
        score = _check_finite("score", self.score)
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {score}")
        object.__setattr__(self, "score", score)
        if not isinstance(self.frame_index, int) or isinstance(self.frame_index, bool):
            raise ValueError(f"frame_index must be an int, got {self.frame_index!r}")
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be non-negative, got {self.frame_index}")
