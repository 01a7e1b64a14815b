"""Multi-object face tracking: constant-velocity Kalman filter per track,
Hungarian assignment on a 1 - IoU cost.

State vector is [cx, cy, area, aspect, vcx, vcy, varea]; the aspect ratio
(width / height) is modelled as constant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        vals = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box {vals}")
        if min(vals) < 0:
            raise ValueError(f"negative coordinate in {vals}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box {vals}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def center(self) -> tuple[float, float]:
        return (self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0

    @property
    def area(self) -> float:
        return self.width * self.height


def iou(a: BoundingBox, b: BoundingBox) -> float:
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0 or h <= 0:
        return 0.0
    inter = w * h
    return inter / (a.area + b.area - inter)


def hungarian_assign(cost) -> list[tuple[int, int]]:
    """Minimum-cost assignment of rows to columns.

    Returns min(m, n) (row, col) pairs sorted by row. Rectangular inputs
    are handled by transposing so that rows <= columns; the solver is the
    shortest-augmenting-path form of the Hungarian method with row/column
    potentials, O(n^2 m).
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
        raise ValueError(f"cost must be a non-empty 2-D matrix, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix contains NaN or infinite entries")
    transposed = c.shape[0] > c.shape[1]
    if transposed:
        c = c.T
    n, m = c.shape

    # 1-based arrays; index 0 is the virtual root of each augmenting tree
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    match_col = np.zeros(m + 1, dtype=np.int64)  # row matched to column j
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match_col[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match_col[j0]
            free = ~used[1:]
            cur = c[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[match_col[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if match_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match_col[j0] = match_col[j1]
            j0 = j1

    pairs = [(int(match_col[j]) - 1, j - 1) for j in range(1, m + 1) if match_col[j]]
    if transposed:
        pairs = [(col, row) for row, col in pairs]
    return sorted(pairs)


def assignment_cost(cost, pairs) -> float:
    c = np.asarray(cost, dtype=np.float64)
    return float(sum(c[r, k] for r, k in sorted(pairs)))


@dataclass(frozen=True)
class TrackerParams:
    iou_gate: float = 0.3
    max_misses: int = 5
    min_hits: int = 3
    process_noise: float = 1.0
    measurement_noise: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.iou_gate < 1.0):
            raise ValueError("iou_gate must lie in (0, 1)")
        if self.max_misses < 1 or self.min_hits < 1:
            raise ValueError("max_misses and min_hits must be >= 1")
        if self.process_noise < 0 or self.measurement_noise <= 0:
            raise ValueError("noise scales must be positive")


_F = np.eye(7)
_F[0, 4] = _F[1, 5] = _F[2, 6] = 1.0
_H = np.eye(4, 7)
# position terms follow the usual SORT tuning; velocity noise is raised so
# tracks follow walkers through turns
_Q_DIAG = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1e-4])
_R_DIAG = np.array([1.0, 1.0, 10.0, 10.0])
_P0_DIAG = np.array([10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4])


def box_to_z(box: BoundingBox) -> np.ndarray:
    cx, cy = box.center
    return np.array([cx, cy, box.area, box.width / box.height])


def z_to_box(x: np.ndarray) -> BoundingBox:
    area, aspect = max(x[2], 1e-6), max(x[3], 1e-6)
    w = math.sqrt(area * aspect)
    h = area / w
    cx, cy = x[0], x[1]
    return BoundingBox(max(cx - w / 2, 0.0), max(cy - h / 2, 0.0),
                       max(cx + w / 2, 1e-6), max(cy + h / 2, 1e-6))


@dataclass
class Track:
    id: int
    state: np.ndarray
    covariance: np.ndarray
    hits: int = 1
    age: int = 0
    misses: int = 0

    @classmethod
    def from_box(cls, track_id: int, box: BoundingBox) -> "Track":
        state = np.zeros(7)
        state[:4] = box_to_z(box)
        return cls(track_id, state, np.diag(_P0_DIAG))

    @property
    def box(self) -> BoundingBox:
        return z_to_box(self.state)

    @property
    def center(self) -> tuple[float, float]:
        return float(self.state[0]), float(self.state[1])

    def confirmed(self, params: TrackerParams) -> bool:
        return self.hits >= params.min_hits


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return (p + p.T) / 2.0


def predict(track: Track, params: TrackerParams) -> Track:
    x = track.state.copy()
    if x[2] + x[6] <= 0:
        x[6] = 0.0
    x = _F @ x
    p = _F @ track.covariance @ _F.T + np.diag(_Q_DIAG * params.process_noise)
    return replace(track, state=x, covariance=_symmetrize(p), age=track.age + 1)


def update(track: Track, box: BoundingBox, params: TrackerParams) -> Track:
    """Kalman measurement update (Joseph form keeps P symmetric PSD)."""
    z = box_to_z(box)
    r = np.diag(_R_DIAG * params.measurement_noise)
    p = track.covariance
    s = _H @ p @ _H.T + r
    k = np.linalg.solve(s, _H @ p).T
    x = track.state + k @ (z - _H @ track.state)
    ikh = np.eye(7) - k @ _H
    p = ikh @ p @ ikh.T + k @ r @ k.T
    return replace(track, state=x, covariance=_symmetrize(p),
                   hits=track.hits + 1, misses=0)


@dataclass(frozen=True)
class TrackerUpdate:
    matched: tuple[tuple[int, int], ...]
    new_track_ids: tuple[int, ...]
    removed_track_ids: tuple[int, ...]


@dataclass
class Tracker:
    params: TrackerParams = field(default_factory=TrackerParams)
    tracks: list[Track] = field(default_factory=list)
    next_id: int = 1

    def step(self, detections: list[BoundingBox]) -> TrackerUpdate:
        self.tracks = [predict(t, self.params) for t in self.tracks]
        matched: list[tuple[int, int]] = []
        unmatched_dets = set(range(len(detections)))
        if self.tracks and detections:
            cost = np.array([[1.0 - iou(t.box, d) for d in detections] for t in self.tracks])
            for ti, di in hungarian_assign(cost):
                if 1.0 - cost[ti, di] < self.params.iou_gate:
                    continue
                self.tracks[ti] = update(self.tracks[ti], detections[di], self.params)
                matched.append((self.tracks[ti].id, di))
                unmatched_dets.discard(di)
        matched_ids = {tid for tid, _ in matched}
        for t in self.tracks:
            if t.id not in matched_ids:
                t.misses += 1
        removed = tuple(t.id for t in self.tracks if t.misses > self.params.max_misses)
        self.tracks = [t for t in self.tracks if t.misses <= self.params.max_misses]
        born = []
        for di in sorted(unmatched_dets):
            self.tracks.append(Track.from_box(self.next_id, detections[di]))
            born.append(self.next_id)
            self.next_id += 1
        return TrackerUpdate(tuple(sorted(matched)), tuple(born), removed)

    def get(self, track_id: int) -> Track | None:
        for t in self.tracks:
            if t.id == track_id:
                return t
        return None

    def confirmed(self) -> list[Track]:
        return [t for t in self.tracks if t.confirmed(self.params)]


@dataclass(eq=False)
class FaceDetection:
    """Detector output: the grayscale crop of the face and its box in the
    camera frame. `sample_id` links the detection to the simulator's
    ground-truth log and is not part of the stored dataset."""

    image: np.ndarray
    bbox: BoundingBox
    sample_id: int | None = None
