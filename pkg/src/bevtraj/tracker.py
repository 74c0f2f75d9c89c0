"""Frame-to-frame identity matching, track kinematics and landmark-based ego speed."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.optimize import linear_sum_assignment

from .detector import LIGHT_CATEGORIES, VEHICLE_CATEGORIES, DetectedObject

INFEASIBLE = math.inf


class TrackTooShort(ValueError):
    pass


@dataclass(frozen=True)
class TrackerConfig:
    w_dist: float = 1.0
    w_color: float = 0.5
    w_aspect: float = 0.3
    gate_distance_px: float = 12.0
    max_coast_frames: int = 2
    smoothing_window: int = 7
    ego_speed_method: str = "rigid"  # or "magnitude"
    light_ahead_m: tuple[float, float] = (0.0, 10.0)

    def __post_init__(self):
        if min(self.w_dist, self.w_color, self.w_aspect) < 0:
            raise ValueError("tracker weights must be non-negative")
        if not self.gate_distance_px > 0:
            raise ValueError("gate_distance_px must be positive")
        if self.max_coast_frames < 0:
            raise ValueError("max_coast_frames must be >= 0")
        if self.smoothing_window < 1 or self.smoothing_window % 2 == 0:
            raise ValueError("smoothing_window must be a positive odd integer")
        if self.ego_speed_method not in ("rigid", "magnitude"):
            raise ValueError(f"unknown ego_speed_method {self.ego_speed_method!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["light_ahead_m"] = list(self.light_ahead_m)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrackerConfig":
        d = dict(d)
        if "light_ahead_m" in d:
            d["light_ahead_m"] = tuple(map(float, d["light_ahead_m"]))
        return cls(**d)


@dataclass
class Track:
    track_id: int
    category: str
    detections: list[DetectedObject] = field(default_factory=list)
    speed_rel: dict[int, float] = field(default_factory=dict)
    accel_rel: dict[int, float] = field(default_factory=dict)
    speed_lat: dict[int, float] = field(default_factory=dict)

    @property
    def frames(self) -> list[int]:
        return [d.frame_index for d in self.detections]

    @property
    def last(self) -> DetectedObject:
        return self.detections[-1]

    def at(self, frame: int) -> DetectedObject | None:
        for d in self.detections:
            if d.frame_index == frame:
                return d
        return None


@dataclass
class EgoSpeedSeries:
    speed: dict[int, float] = field(default_factory=dict)
    sources: dict[int, list[int]] = field(default_factory=dict)  # frame -> light track ids

    def to_dict(self) -> dict:
        return {"frames": [{"frame": t, "speed_mps": round(self.speed[t], 6), "light_tracks": self.sources.get(t, [])}
                           for t in sorted(self.speed)]}

    @classmethod
    def from_dict(cls, d: dict) -> "EgoSpeedSeries":
        rows = d.get("frames", [])
        return cls({int(r["frame"]): float(r["speed_mps"]) for r in rows},
                   {int(r["frame"]): list(r.get("light_tracks", [])) for r in rows})


# --------------------------------------------------------------------------
# costs and assignment

def compatible(track_cat: str, det_cat: str) -> bool:
    if track_cat == det_cat:
        return True
    pair = {track_cat, det_cat}
    return "unknown" in pair and bool(pair & set(VEHICLE_CATEGORIES))


def pairwise_cost(a: DetectedObject, b: DetectedObject, cfg: TrackerConfig = TrackerConfig(),
                  gate_scale: float = 1.0) -> float:
    """Dissimilarity of two detections, or ``INFEASIBLE``."""
    if not compatible(a.category, b.category):
        return INFEASIBLE
    gate = cfg.gate_distance_px * gate_scale
    dist = math.hypot(a.centroid[0] - b.centroid[0], a.centroid[1] - b.centroid[1])
    if dist > gate:
        return INFEASIBLE
    color = math.dist(a.mean_color, b.mean_color) / (255.0 * math.sqrt(3.0))
    aspect = abs(math.log(a.aspect / b.aspect))
    return cfg.w_dist * dist / gate + cfg.w_color * color + cfg.w_aspect * aspect


def cost_matrix(prev: list[DetectedObject], curr: list[DetectedObject], cfg: TrackerConfig = TrackerConfig(),
                gate_scales=None) -> np.ndarray:
    m = np.full((len(prev), len(curr)), INFEASIBLE)
    for i, a in enumerate(prev):
        g = 1.0 if gate_scales is None else gate_scales[i]
        for j, b in enumerate(curr):
            m[i, j] = pairwise_cost(a, b, cfg, g)
    return m


def solve_assignment(cost: np.ndarray) -> list[tuple[int, int]]:
    """Optimal one-to-one matching over finite entries.

    Maximizes the number of feasible pairs first, then minimizes their total
    cost. Pairs come back sorted by row index.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.size == 0:
        return []
    feasible = np.isfinite(cost)
    if not feasible.any():
        return []
    finite = cost[feasible]
    # any single infeasible pair must outweigh every possible all-feasible total
    big = (np.abs(finite).sum() + 1.0) * 2.0
    work = np.where(feasible, cost, big)
    rows, cols = linear_sum_assignment(work)
    return sorted((int(r), int(c)) for r, c in zip(rows, cols) if feasible[r, c])


@dataclass
class Assignment:
    pairs: list[tuple[int, int]]
    unmatched_prev: list[int]
    unmatched_curr: list[int]
    total_cost: float


def match_frames(prev: list[DetectedObject], curr: list[DetectedObject], cfg: TrackerConfig = TrackerConfig(),
                 gate_scales=None) -> Assignment:
    cost = cost_matrix(prev, curr, cfg, gate_scales)
    pairs = solve_assignment(cost)
    used_p = {i for i, _ in pairs}
    used_c = {j for _, j in pairs}
    return Assignment(
        pairs=pairs,
        unmatched_prev=[i for i in range(len(prev)) if i not in used_p],
        unmatched_curr=[j for j in range(len(curr)) if j not in used_c],
        total_cost=float(sum(cost[i, j] for i, j in pairs)),
    )


# --------------------------------------------------------------------------
# tracking

def _relabel_ego(dets: list[DetectedObject], center: tuple[float, float]) -> list[DetectedObject]:
    egos = [d for d in dets if d.category == "ego"]
    if len(egos) > 1:
        keep = min(egos, key=lambda d: math.hypot(d.centroid[0] - center[0], d.centroid[1] - center[1]))
        for d in egos:
            if d is not keep:
                d.category = "unknown"
    return dets


def track_video(detections: list[list[DetectedObject]], cfg: TrackerConfig = TrackerConfig(),
                frame_rate: float = 10.0, scales: tuple[float, float] = (4.8, 5.4),
                center: tuple[float, float] = (48.0, 27.0)) -> tuple[list[Track], EgoSpeedSeries]:
    tracks: list[Track] = []
    active: list[Track] = []
    for f, dets in enumerate(detections):
        dets = _relabel_ego(list(dets), center)
        active = [t for t in active if f - t.last.frame_index <= cfg.max_coast_frames + 1]
        res = match_frames([t.last for t in active], dets, cfg,
                           [float(f - t.last.frame_index) for t in active])
        for i, j in res.pairs:
            trk, det = active[i], dets[j]
            if trk.category == "unknown" and det.category != "unknown":
                trk.category = det.category
            trk.detections.append(det)
        for j in res.unmatched_curr:
            trk = Track(len(tracks), dets[j].category, [dets[j]])
            tracks.append(trk)
            active.append(trk)
    for trk in tracks:
        if len(trk.detections) >= 2:
            kinematics(trk, frame_rate, scales, cfg.smoothing_window)
    lights = [t for t in tracks if t.category in LIGHT_CATEGORIES]
    return tracks, estimate_ego_speed(lights, frame_rate, scales, center, cfg)


# --------------------------------------------------------------------------
# kinematics

def moving_average(x, window: int = 5) -> np.ndarray:
    """Centered moving average; near the ends the window shrinks symmetrically."""
    x = np.asarray(x, dtype=float)
    n, half = len(x), window // 2
    out = uniform_filter1d(x, size=window, mode="nearest") if n else x.copy()
    for i in range(min(half, n)):
        for j in (i, n - 1 - i):
            h = min(j, n - 1 - j, half)
            out[j] = x[j - h:j + h + 1].mean()
    return out


def derivative(x: np.ndarray, frame_rate: float) -> np.ndarray:
    """Central differences inside, one-sided at the ends, per second."""
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        raise TrackTooShort("need at least 2 samples")
    return np.gradient(x, edge_order=1) * frame_rate


def speed_accel(pos, frame_rate: float, window: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Smoothed velocity and acceleration of a uniformly sampled position series.

    Positions are averaged, differenced, and the result averaged again;
    acceleration repeats the difference-and-average step on the velocity.
    """
    v = moving_average(derivative(moving_average(pos, window), frame_rate), window)
    a = moving_average(derivative(v, frame_rate), window)
    return v, a


def usable_segments(dets: list[DetectedObject]) -> list[list[DetectedObject]]:
    """Runs of consecutive-frame detections whose component is fully inside the frame."""
    segs, cur = [], []
    for d in dets:
        if d.touches_border:
            if cur:
                segs.append(cur)
            cur = []
            continue
        if cur and d.frame_index != cur[-1].frame_index + 1:
            segs.append(cur)
            cur = []
        cur.append(d)
    if cur:
        segs.append(cur)
    return segs


def kinematics(track: Track, frame_rate: float = 10.0, scales: tuple[float, float] = (4.8, 5.4),
               window: int = 5) -> Track:
    """Fill relative speed and acceleration (image-up positive) from centroid motion.

    Components clipped by the frame border are skipped, so the series can have
    holes; each unbroken run is differenced on its own.
    """
    if len(track.detections) < 2:
        raise TrackTooShort(f"track {track.track_id} has {len(track.detections)} detection(s)")
    track.speed_rel, track.accel_rel, track.speed_lat = {}, {}, {}
    for seg in usable_segments(track.detections):
        if len(seg) < 2:
            continue
        cen = np.array([d.centroid for d in seg])
        fwd = -cen[:, 0] / scales[0]
        left = -cen[:, 1] / scales[1]
        v, a = speed_accel(fwd, frame_rate, window)
        vl, _ = speed_accel(left, frame_rate, window)
        for d, vi, vli, ai in zip(seg, v, vl, a):
            track.speed_rel[d.frame_index] = float(vi)
            track.speed_lat[d.frame_index] = float(vli)
            track.accel_rel[d.frame_index] = float(ai)
    return track


# --------------------------------------------------------------------------
# ego speed

def _light_motion(lights: list[Track], frame_rate: float, scales, center, window: int):
    """frame -> list of (track id, fwd, left, d fwd/dt, d left/dt) in ego-frame meters."""
    out: dict[int, list] = {}
    for trk in lights:
        for seg in usable_segments(trk.detections):
            if len(seg) < 2:
                continue
            cen = np.array([d.centroid for d in seg])
            fwd = (center[0] - cen[:, 0]) / scales[0]
            left = (center[1] - cen[:, 1]) / scales[1]
            vf, vl = derivative(fwd, frame_rate), derivative(left, frame_rate)
            for d, p, q, u, w in zip(seg, fwd, left, vf, vl):
                out.setdefault(d.frame_index, []).append((trk.track_id, p, q, u, w))
    return out


def _rigid_speed(obs, ridge: float = 1e-3) -> float:
    """Least-squares forward speed v and yaw rate w of a vehicle that sees static points.

    A static point at (x, y) in the vehicle frame moves as x' = -v + w*y,
    y' = -w*x; the small ridge keeps w bounded when every point is on the axis.
    """
    a, b = [], []
    for _, x, y, u, w in obs:
        a += [[-1.0, y], [0.0, -x]]
        b += [u, w]
    a, b = np.array(a), np.array(b)
    lhs = a.T @ a + np.diag([0.0, ridge])
    v, _ = np.linalg.solve(lhs, a.T @ b)
    return max(0.0, float(v))


def estimate_ego_speed(lights: list[Track], frame_rate: float = 10.0, scales: tuple[float, float] = (4.8, 5.4),
                       center: tuple[float, float] = (48.0, 27.0),
                       cfg: TrackerConfig = TrackerConfig()) -> EgoSpeedSeries:
    """Ego speed from the apparent motion of static traffic lights."""
    motion = _light_motion(lights, frame_rate, scales, center, cfg.smoothing_window)
    raw: dict[int, float] = {}
    for t, obs in motion.items():
        if cfg.ego_speed_method == "magnitude":
            raw[t] = float(np.mean([math.hypot(u, w) for _, _, _, u, w in obs]))
        else:
            raw[t] = _rigid_speed(obs)
    series = EgoSpeedSeries(sources={t: sorted(i for i, *_ in motion[t]) for t in motion})
    frames = sorted(raw)
    run: list[int] = []
    for t in frames + [None]:
        if run and (t is None or t != run[-1] + 1):
            sm = moving_average([raw[k] for k in run], cfg.smoothing_window)
            series.speed.update({k: max(0.0, float(s)) for k, s in zip(run, sm)})
            run = []
        if t is not None:
            run.append(t)
    return series


# --------------------------------------------------------------------------
# serialization

def track_to_dict(track: Track, scales: tuple[float, float] = (4.8, 5.4),
                  center: tuple[float, float] = (48.0, 27.0), index: dict | None = None) -> dict:
    """JSON form of a track; ``index`` maps id(detection) to its position within its frame."""
    states = []
    for d in track.detections:
        t = d.frame_index
        r, c = d.centroid
        sp, ac = track.speed_rel.get(t), track.accel_rel.get(t)
        st = {
            "frame": t,
            "centroid_px": [round(r, 6), round(c, 6)],
            "centroid_m": [round((center[0] - r) / scales[0], 6), round((center[1] - c) / scales[1], 6)],
            "area_m2": round(d.area_m2, 6),
            "speed_rel_mps": None if sp is None else round(sp, 6),
            "accel_rel_mps2": None if ac is None else round(ac, 6),
        }
        if index is not None:
            st["detection"] = index[id(d)]
        states.append(st)
    return {"track_id": track.track_id, "category": track.category, "states": states}


def write_tracks(tracks: list[Track], ego: EgoSpeedSeries, out_dir: str | Path,
                 scales: tuple[float, float] = (4.8, 5.4), center: tuple[float, float] = (48.0, 27.0),
                 detections: list[list[DetectedObject]] | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index = None
    if detections is not None:
        index = {id(d): i for frame in detections for i, d in enumerate(frame)}
    doc = {"tracks": [track_to_dict(t, scales, center, index) for t in tracks]}
    (out / "tracks.json").write_text(json.dumps(doc, separators=(",", ":")) + "\n", encoding="utf-8")
    (out / "ego_speed.json").write_text(json.dumps(ego.to_dict(), separators=(",", ":")) + "\n", encoding="utf-8")


def read_tracks(out_dir: str | Path, detections: list[list[DetectedObject]]) -> tuple[list[Track], EgoSpeedSeries]:
    """Rebuild tracks written by ``write_tracks`` against the same detections."""
    out = Path(out_dir)
    doc = json.loads((out / "tracks.json").read_text(encoding="utf-8"))
    tracks = []
    for rec in doc["tracks"]:
        trk = Track(int(rec["track_id"]), rec["category"])
        for st in rec["states"]:
            t = int(st["frame"])
            trk.detections.append(detections[t][int(st["detection"])])
            if st["speed_rel_mps"] is not None:
                trk.speed_rel[t] = float(st["speed_rel_mps"])
            if st["accel_rel_mps2"] is not None:
                trk.accel_rel[t] = float(st["accel_rel_mps2"])
        tracks.append(trk)
    ego_path = out / "ego_speed.json"
    ego = EgoSpeedSeries.from_dict(json.loads(ego_path.read_text(encoding="utf-8"))) if ego_path.exists() \
        else EgoSpeedSeries()
    return tracks, ego


def write_detections(detections: list[list[DetectedObject]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for frame in detections:
            for d in frame:
                fh.write(json.dumps(d.to_record(), separators=(",", ":")) + "\n")


def read_detections(path: str | Path, num_frames: int | None = None) -> list[list[DetectedObject]]:
    by_frame: dict[int, list[DetectedObject]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = DetectedObject.from_record(json.loads(line))
                by_frame.setdefault(d.frame_index, []).append(d)
    n = num_frames if num_frames is not None else (max(by_frame) + 1 if by_frame else 0)
    return [by_frame.get(i, []) for i in range(n)]
