"""Data association between predicted tracks and detections.

Two affinities are supported: the Mahalanobis distance between a
detection and the predicted observation distribution, and the 3D
intersection-over-union of the two boxes.  Two bipartite matchers
consume either affinity: a greedy nearest-first matcher and an optimal
assignment (Hungarian) matcher with post-assignment thresholding.

IOU matrices are reused by the matchers through the conversion
distance = 1 - IOU with threshold 1 - T, so one matching code path
serves both affinities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import linear_sum_assignment

from .core import Observation, StateEstimate, StateVector, wrap_angle
from .errors import NumericalError
from .kalman import Prediction

MAHALANOBIS_DISTANCE = "mahalanobis_distance"
IOU_SCORE = "iou_score"
AFFINITY_KINDS = (MAHALANOBIS_DISTANCE, IOU_SCORE)


@dataclass(frozen=True)
class AffinityMatrix:
    """Pairwise affinities, rows = predictions, columns = detections.

    kind states the semantics: mahalanobis_distance entries are
    non-negative (or +inf) and lower is better; iou_score entries lie
    in [0, 1] and higher is better.
    """

    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in AFFINITY_KINDS:
            raise ValueError(f"unknown affinity kind {self.kind!r}")
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError(f"affinity matrix must be 2D, got shape {values.shape}")
        if np.any(np.isnan(values)):
            raise ValueError("affinity matrix must not contain NaN")
        if self.kind == MAHALANOBIS_DISTANCE:
            if np.any(values < 0.0):
                raise ValueError("distances must be non-negative")
        else:
            if np.any((values < 0.0) | (values > 1.0)):
                raise ValueError("IOU scores must lie in [0, 1]")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class MatchResult:
    """One-to-one matching outcome over an affinity matrix.

    pairs hold (prediction_index, detection_index, affinity) sorted
    best-first; the unmatched index tuples are sorted ascending.
    """

    pairs: tuple
    unmatched_predictions: tuple
    unmatched_detections: tuple


def orientation_correct(predicted_angle: float, detected_angle: float) -> float:
    """Flip the predicted yaw by pi when it faces away from the detection.

    Detectors cannot tell a box from its 180-degree flip, so when the
    wrapped difference lies beyond pi/2 in magnitude the prediction is
    rotated by pi before residuals are formed.  Returns the corrected
    predicted yaw, wrapped.
    """
    predicted_angle = wrap_angle(predicted_angle)
    delta = wrap_angle(detected_angle - predicted_angle)
    if abs(delta) > math.pi / 2.0:
        return wrap_angle(predicted_angle + math.pi)
    return predicted_angle


def correct_prediction(prediction: Prediction, detected_angle: float) -> Prediction:
    """Apply orientation_correct to a prediction's yaw.

    Covariances are unchanged: the flip is a relabeling of an
    orientation the box cannot distinguish, not new information.
    """
    predicted = prediction.predicted_observation
    corrected = orientation_correct(predicted.a, detected_angle)
    if corrected == predicted.a:
        return prediction
    mean = prediction.predicted_estimate.mean.to_array()
    mean[3] = corrected
    estimate = StateEstimate(
        StateVector.from_array(mean), prediction.predicted_estimate.covariance
    )
    return Prediction(estimate, estimate.mean.observed(), prediction.innovation_cov)


def mahalanobis(prediction: Prediction, observation: Observation) -> float:
    """Mahalanobis distance sqrt(nu^T S^-1 nu) of an observation.

    The caller is expected to have orientation-corrected the prediction
    (see orientation_correct); the yaw residual is wrapped here.
    """
    factor = _innovation_factor(prediction.innovation_cov)
    return _mahalanobis_from_factor(factor, prediction.predicted_observation, observation)


def _innovation_factor(innovation_cov: np.ndarray):
    try:
        return cho_factor(innovation_cov, lower=True)
    except LinAlgError:
        raise NumericalError(
            "innovation covariance is not positive definite",
            condition=float(np.linalg.cond(innovation_cov)),
        ) from None


def _mahalanobis_from_factor(factor, predicted: Observation, observation: Observation) -> float:
    nu = observation.to_array() - predicted.to_array()
    nu[3] = wrap_angle(nu[3])
    return float(math.sqrt(nu @ cho_solve(factor, nu)))


def mahalanobis_affinity(predictions: Sequence[Prediction],
                         observations: Sequence[Observation]) -> AffinityMatrix:
    """Pairwise Mahalanobis distances with per-pair orientation correction."""
    values = np.zeros((len(predictions), len(observations)))
    for i, prediction in enumerate(predictions):
        factor = _innovation_factor(prediction.innovation_cov)
        predicted = prediction.predicted_observation
        for j, obs in enumerate(observations):
            corrected_a = orientation_correct(predicted.a, obs.a)
            corrected = Observation(
                predicted.x, predicted.y, predicted.z, corrected_a,
                predicted.l, predicted.w, predicted.h,
            )
            values[i, j] = _mahalanobis_from_factor(factor, corrected, obs)
    return AffinityMatrix(values, MAHALANOBIS_DISTANCE)


def iou_affinity(predictions: Sequence[Prediction],
                 observations: Sequence[Observation]) -> AffinityMatrix:
    """Pairwise 3D IOU between predicted boxes and detections."""
    values = np.zeros((len(predictions), len(observations)))
    for i, prediction in enumerate(predictions):
        for j, obs in enumerate(observations):
            values[i, j] = iou_3d(prediction.predicted_observation, obs)
    return AffinityMatrix(values, IOU_SCORE)


def box_corners_bev(box: Observation) -> np.ndarray:
    """Corners of the box footprint in the x-y plane, counter-clockwise.

    The l extent runs along the yaw direction, w across it.
    """
    cos_a = math.cos(box.a)
    sin_a = math.sin(box.a)
    half_l = box.l / 2.0
    half_w = box.w / 2.0
    local = np.array([
        [half_l, half_w],
        [-half_l, half_w],
        [-half_l, -half_w],
        [half_l, -half_w],
    ])
    rotation = np.array([[cos_a, -sin_a], [sin_a, cos_a]])
    return local @ rotation.T + np.array([box.x, box.y])


def clip_polygon(subject: Sequence, clip: Sequence) -> list:
    """Clip a convex polygon against another convex polygon.

    Sutherland-Hodgman: the subject is clipped against each edge of the
    counter-clockwise clip polygon in turn.  Points on an edge count as
    inside, so clipping a polygon against itself returns it unchanged.
    """
    output = [tuple(p) for p in subject]
    clip = [tuple(p) for p in clip]
    for k in range(len(clip)):
        if not output:
            break
        edge_start = clip[k]
        edge_end = clip[(k + 1) % len(clip)]

        def inside(p):
            return ((edge_end[0] - edge_start[0]) * (p[1] - edge_start[1])
                    - (edge_end[1] - edge_start[1]) * (p[0] - edge_start[0])) >= 0.0

        def intersect(p, q):
            # Line (edge_start, edge_end) crossed with segment (p, q).
            dc = (edge_start[0] - edge_end[0], edge_start[1] - edge_end[1])
            dp = (p[0] - q[0], p[1] - q[1])
            denom = dc[0] * dp[1] - dc[1] * dp[0]
            if abs(denom) <= 1e-12 * math.hypot(*dc) * math.hypot(*dp):
                # Nearly parallel segments only straddle the edge through
                # rounding, so either endpoint sits on it to working
                # precision; dividing by the tiny cross term would blow up.
                return q
            n1 = edge_start[0] * edge_end[1] - edge_start[1] * edge_end[0]
            n2 = p[0] * q[1] - p[1] * q[0]
            return ((n1 * dp[0] - n2 * dc[0]) / denom,
                    (n1 * dp[1] - n2 * dc[1]) / denom)

        polygon = output
        output = []
        for idx in range(len(polygon)):
            current = polygon[idx]
            previous = polygon[idx - 1]
            if inside(current):
                if not inside(previous):
                    output.append(intersect(previous, current))
                output.append(current)
            elif inside(previous):
                output.append(intersect(previous, current))
    return output


def polygon_area(points: Sequence) -> float:
    """Shoelace area of a simple polygon, sign-free."""
    if len(points) < 3:
        return 0.0
    area = 0.0
    for idx in range(len(points)):
        x1, y1 = points[idx]
        x2, y2 = points[(idx + 1) % len(points)]
        area += x1 * y2 - x2 * y1
    return abs(area) / 2.0


def iou_3d(box_a: Observation, box_b: Observation) -> float:
    """3D intersection-over-union of two upright yawed boxes.

    The intersection volume factors into the overlap area of the yawed
    footprints (convex polygon clipping) times the vertical extent
    overlap, because both boxes rotate only around the vertical axis.
    """
    corners_a = box_corners_bev(box_a)
    corners_b = box_corners_bev(box_b)
    overlap = polygon_area(clip_polygon(corners_a, corners_b))
    z_overlap = max(
        0.0,
        min(box_a.z + box_a.h / 2.0, box_b.z + box_b.h / 2.0)
        - max(box_a.z - box_a.h / 2.0, box_b.z - box_b.h / 2.0),
    )
    intersection = overlap * z_overlap
    if intersection <= 0.0:
        return 0.0
    volume_a = box_a.l * box_a.w * box_a.h
    volume_b = box_b.l * box_b.w * box_b.h
    union = volume_a + volume_b - intersection
    # clipping noise on near-identical boxes can push the ratio a few
    # ulps past one
    return min(1.0, intersection / union)


def _as_distances(affinity: AffinityMatrix, threshold: float):
    """Distance-semantics view of an affinity matrix and threshold."""
    if affinity.kind == MAHALANOBIS_DISTANCE:
        return affinity.values, threshold
    return 1.0 - affinity.values, 1.0 - threshold


def greedy_match(affinity: AffinityMatrix, threshold: float) -> MatchResult:
    """Greedy nearest-first one-to-one matching.

    All pairs are visited in ascending distance order (ties broken by
    prediction index then detection index); a pair is accepted when
    both sides are still free and its distance is strictly below the
    threshold.  The scan stops at the first fully-unmatched pair at or
    beyond the threshold, since every later candidate is worse.

    For an iou_score matrix the threshold is a minimum IOU and reported
    affinities are IOUs.
    """
    distances, limit = _as_distances(affinity, threshold)
    n_pred, n_det = distances.shape
    order = np.lexsort((
        np.tile(np.arange(n_det), n_pred),
        np.repeat(np.arange(n_pred), n_det),
        distances.ravel(),
    ))
    matched_pred = set()
    matched_det = set()
    pairs = []
    for flat in order:
        i, j = divmod(int(flat), n_det)
        if i in matched_pred or j in matched_det:
            continue
        if not distances[i, j] < limit:
            break
        matched_pred.add(i)
        matched_det.add(j)
        pairs.append((i, j, float(affinity.values[i, j])))
    return MatchResult(
        tuple(pairs),
        tuple(i for i in range(n_pred) if i not in matched_pred),
        tuple(j for j in range(n_det) if j not in matched_det),
    )


# Finite stand-in for +inf so the assignment solver accepts the matrix;
# such pairs are discarded by the threshold filter afterwards.
_INFEASIBLE = 1e15


def hungarian_match(affinity: AffinityMatrix, threshold: float) -> MatchResult:
    """Optimal-assignment matching with post-assignment thresholding.

    The assignment minimizes total distance; pairs at or beyond the
    threshold are then removed, mirroring trackers that filter an
    optimal assignment instead of gating inside it.
    """
    distances, limit = _as_distances(affinity, threshold)
    n_pred, n_det = distances.shape
    if n_pred == 0 or n_det == 0:
        return MatchResult((), tuple(range(n_pred)), tuple(range(n_det)))
    solver_costs = np.where(np.isfinite(distances), distances, _INFEASIBLE)
    rows, cols = linear_sum_assignment(solver_costs)
    pairs = []
    for i, j in zip(rows, cols):
        if distances[i, j] < limit:
            pairs.append((int(i), int(j), float(affinity.values[i, j])))
    pairs.sort(key=lambda pair: (distances[pair[0], pair[1]], pair[0], pair[1]))
    matched_pred = {i for i, _, _ in pairs}
    matched_det = {j for _, j, _ in pairs}
    return MatchResult(
        tuple(pairs),
        tuple(i for i in range(n_pred) if i not in matched_pred),
        tuple(j for j in range(n_det) if j not in matched_det),
    )


def center_distance_2d(box_a: Observation, box_b: Observation) -> float:
    """Euclidean distance between box centers in the x-y plane."""
    return math.hypot(box_a.x - box_b.x, box_a.y - box_b.y)


def greedy_center_match(boxes_a: Sequence[Observation], boxes_b: Sequence[Observation],
                        gate: float) -> MatchResult:
    """Greedy one-to-one matching by ascending 2D center distance.

    Used by the evaluation protocol and by observation-noise
    calibration; pairs at or beyond the gate stay unmatched.
    """
    values = np.zeros((len(boxes_a), len(boxes_b)))
    for i, box_a in enumerate(boxes_a):
        for j, box_b in enumerate(boxes_b):
            values[i, j] = center_distance_2d(box_a, box_b)
    return greedy_match(AffinityMatrix(values, MAHALANOBIS_DISTANCE), gate)


MATCHERS = {
    "greedy": greedy_match,
    "hungarian": hungarian_match,
}
