"""Ground-truth view of a Scene as it should appear in the rendered frames.

Each object's footprint is mapped into pixel coordinates, clipped to the
frame, and reduced by whatever is drawn over it. A footprint counts as
detectable when its pixel-center coverage survives a 3x3 opening; areas and
centers are taken from the polygons themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import shapely
from scipy import ndimage as ndi
from shapely import affinity
from shapely.geometry import Point, Polygon, box
from shapely.ops import unary_union

from .detector import DetectorConfig
from .metrics import MPS_TO_KMH, METRICS, min_edge_distance
from .scene import AgentTrack, RasterConfig, Scene, world_to_ego
from .tracker import derivative, speed_accel

_OPEN = np.ones((3, 3), dtype=bool)


@dataclass
class TruthObject:
    frame: int
    object_id: str
    pixels: np.ndarray  # (n, 2) rows/cols left after opening
    kind: str  # "ego", "agent" or "light"
    signal: str | None
    footprint: Polygon  # full footprint, pixel coordinates (row, col)
    visible: object  # clipped and occluded geometry, pixel coordinates
    ego_frame_center: tuple[float, float]  # (fwd, left) meters
    detectable: bool
    truncated: bool
    unoccluded: bool  # wholly inside the frame with nothing drawn over it
    under_light: bool
    category: str  # expected detector category, or "" when not detectable

    @property
    def area_m2(self) -> float:
        return self.visible.area / (4.8 * 5.4)


def _to_pixels(fwd, left, cfg: RasterConfig):
    r0, c0 = cfg.center
    return r0 - np.asarray(fwd) * cfg.scale_row, c0 - np.asarray(left) * cfg.scale_col


def _box_polygon(scene_box, ego_pose, cfg):
    corners = scene_box.corners()
    f, l = world_to_ego(ego_pose, corners[:, 0], corners[:, 1])
    r, c = _to_pixels(f, l, cfg)
    return Polygon(np.stack([r, c], axis=1))


@lru_cache(maxsize=8)
def _disk(radius: float, scale_row: float, scale_col: float) -> Polygon:
    disk = Point(0.0, 0.0).buffer(radius, quad_segs=32)
    return affinity.scale(disk, scale_row, scale_col, origin=(0, 0))


def _light_polygon(center_fl, cfg):
    r, c = _to_pixels(center_fl[0], center_fl[1], cfg)
    disk = _disk(0.5 * cfg.light_diameter, cfg.scale_row, cfg.scale_col)
    return affinity.translate(disk, float(r), float(c))


def _parts(geom):
    if geom.is_empty:
        return []
    if geom.geom_type == "Polygon":
        return [geom]
    return [g for g in getattr(geom, "geoms", []) if g.geom_type == "Polygon" and not g.is_empty]


def _opened_pixels(poly, rows: int, cols: int) -> np.ndarray:
    """Pixels whose centers fall inside ``poly`` and survive a 3x3 opening."""
    r0, c0, r1, c1 = poly.bounds
    ra, rb = max(int(math.floor(r0)) - 1, 0), min(int(math.ceil(r1)) + 1, rows)
    ca, cb = max(int(math.floor(c0)) - 1, 0), min(int(math.ceil(c1)) + 1, cols)
    if ra >= rb or ca >= cb:
        return np.zeros((0, 2), dtype=int)
    rr, cc = np.mgrid[ra:rb, ca:cb]
    inside = shapely.contains_xy(poly, rr + 0.5, cc + 0.5)
    # pad so the opening treats the frame border like the full-frame detector does
    pad = np.zeros((rows + 2, cols + 2), dtype=bool)
    pad[ra + 1:rb + 1, ca + 1:cb + 1] = inside
    opened = ndi.binary_opening(pad[ra:rb + 2, ca:cb + 2], structure=_OPEN)
    r, c = np.nonzero(opened)
    keep = (r >= 1) & (r <= rb - ra) & (c >= 1) & (c <= cb - ca)
    return np.stack([r[keep] + ra - 1, c[keep] + ca - 1], axis=1)


def frame_objects(scene: Scene, t: int, cfg: RasterConfig = RasterConfig(),
                  det: DetectorConfig = DetectorConfig()) -> list[TruthObject]:
    """Objects at timestep ``t`` in draw order: agents, ego, lights."""
    ego_pose = scene.ego_pose(t)
    rows, cols = cfg.frame_rows, cfg.frame_cols
    window = box(0.0, 0.0, rows, cols)
    px_area = cfg.scale_row * cfg.scale_col
    reach = 0.5 * math.hypot(cfg.window_length, cfg.window_width) + 5.0

    drawn = []  # (id, kind, signal, footprint, center)
    for agent in scene.agents:
        if agent.is_ego:
            continue
        b = agent.at(t)
        if b is None:
            continue
        f, l = world_to_ego(ego_pose, b.center.x, b.center.y)
        if math.hypot(f, l) > reach:
            continue
        drawn.append((agent.agent_id, "agent", None, _box_polygon(b, ego_pose, cfg), (float(f), float(l))))
    eb = scene.ego.at(t)
    drawn.append((scene.ego.agent_id, "ego", None, _box_polygon(eb, ego_pose, cfg), (0.0, 0.0)))
    n_vehicles = len(drawn)
    for light in scene.lights:
        sig = light.at(t)
        if sig not in ("red", "green", "yellow"):
            continue
        f, l = world_to_ego(ego_pose, *light.position)
        if math.hypot(f, l) > reach:
            continue
        drawn.append((light.light_id, "light", sig, _light_polygon((float(f), float(l)), cfg), (float(f), float(l))))

    light_shapes = [d[3] for d in drawn[n_vehicles:]]
    out = []
    for i, (oid, kind, sig, fp, center) in enumerate(drawn):
        vis = fp.intersection(window)
        under_light = False
        if kind != "light":
            # lights are painted over vehicles but filled back in by the detector
            above = [d[3] for d in drawn[i + 1:n_vehicles]]
            if above:
                vis = vis.difference(unary_union(above))
            under_light = any(fp.intersects(ls) for ls in light_shapes)
        clipped_full = fp.within(window)
        for part in _parts(vis):
            px = _opened_pixels(part, rows, cols)
            detectable = len(px) > 0
            truncated = detectable and bool(px[:, 0].min() == 0 or px[:, 1].min() == 0
                                            or px[:, 0].max() == rows - 1 or px[:, 1].max() == cols - 1)
            category = ""
            if detectable:
                area = len(px) / px_area
                name = f"light_{sig}" if kind == "light" else kind
                lo, hi = det.area_bounds(name)
                category = name if lo <= area <= hi else "unknown"
            out.append(TruthObject(
                frame=t, object_id=oid, pixels=px, kind=kind, signal=sig, footprint=fp, visible=part,
                ego_frame_center=center, detectable=detectable, truncated=truncated,
                unoccluded=(clipped_full and not under_light
                            and abs(part.area - fp.area) <= 1e-6 * max(fp.area, 1.0)),
                under_light=under_light, category=category))
    return out


def scene_objects(scene: Scene, cfg: RasterConfig = RasterConfig(),
                  det: DetectorConfig = DetectorConfig()) -> list[list[TruthObject]]:
    return [frame_objects(scene, t, cfg, det) for t in range(scene.num_timesteps)]


def relative_positions(agent: AgentTrack, scene: Scene) -> dict[int, tuple[float, float]]:
    """Ego-frame (fwd, left) of an agent's center at every timestep it exists."""
    out = {}
    for t in agent.timesteps:
        b = agent.at(t)
        f, l = world_to_ego(scene.ego_pose(t), b.center.x, b.center.y)
        out[t] = (float(f), float(l))
    return out


def _runs(frames):
    runs, cur = [], []
    for t in sorted(frames):
        if cur and t != cur[-1] + 1:
            runs.append(cur)
            cur = []
        cur.append(t)
    if cur:
        runs.append(cur)
    return runs


def truth_kinematics(fwd_by_t: dict[int, float], frames, frame_rate: float, window: int = 5):
    """Speed and acceleration from exact positions over runs of ``frames``, same scheme as tracks."""
    speed, accel = {}, {}
    for run in _runs(frames):
        if len(run) < 2:
            continue
        v, a = speed_accel([fwd_by_t[t] for t in run], frame_rate, window)
        speed.update(zip(run, map(float, v)))
        accel.update(zip(run, map(float, a)))
    return speed, accel


def central_speed(pos_by_t: dict[int, float], frame_rate: float) -> dict[int, float]:
    """Plain finite differences: central inside a run, one-sided at its ends."""
    out = {}
    for run in _runs(pos_by_t):
        if len(run) < 2:
            continue
        d = derivative([pos_by_t[t] for t in run], frame_rate)
        out.update(zip(run, map(float, d)))
    return out


def ego_speed_truth(scene: Scene) -> dict[int, float]:
    ego = scene.ego
    xs = {t: ego.at(t).center.x for t in ego.timesteps}
    ys = {t: ego.at(t).center.y for t in ego.timesteps}
    vx, vy = central_speed(xs, scene.frame_rate), central_speed(ys, scene.frame_rate)
    return {t: math.hypot(vx[t], vy[t]) for t in vx}


def _scaled(geom, cfg):
    return affinity.scale(geom, 1.0 / cfg.scale_row, 1.0 / cfg.scale_col, origin=(0, 0))


def truth_samples(scene: Scene, cfg: RasterConfig = RasterConfig(), det: DetectorConfig = DetectorConfig(),
                  objects: list[list[TruthObject]] | None = None, window: int = 5,
                  ahead_m: tuple[float, float] = (0.0, 10.0)) -> dict[str, list[float]]:
    """The same metric samples the extractor produces, computed from scene geometry."""
    objects = objects if objects is not None else scene_objects(scene, cfg, det)
    out: dict[str, list[float]] = {m: [] for m in METRICS}
    seen_frames: dict[str, list[int]] = {}
    light_ok: dict[int, bool] = {}
    light_frames: dict[str, list[int]] = {}
    for t, objs in enumerate(objects):
        found = [o for o in objs if o.detectable]
        classified = [o for o in found if o.category != "unknown"]
        out["agent_size_m2"] += [o.area_m2 for o in classified]
        out["traffic_density"].append(len(classified))
        out["unknown_per_frame"].append(len(found) - len(classified))
        veh = [o for o in classified if o.category in ("ego", "agent")]
        if len(veh) >= 2:
            cs = [_scaled(o.visible, cfg).centroid for o in veh]
            out["min_center_dist_m"].append(min(cs[i].distance(cs[j])
                                                for i in range(len(cs)) for j in range(i + 1, len(cs))))
            out["min_edge_dist_m"] += min_edge_distance([[o.pixels for o in veh]], cfg.scales)
        for o in classified:
            if o.kind == "agent" and not o.truncated:
                seen_frames.setdefault(o.object_id, []).append(t)
            if o.kind == "light" and not o.truncated:
                light_frames.setdefault(o.object_id, []).append(t)

    for lid, frames in light_frames.items():
        for run in _runs(frames):
            if len(run) >= 2:
                light_ok.update({t: True for t in run})
    ego_v = ego_speed_truth(scene)
    for t, objs in enumerate(objects):
        if not light_ok.get(t) or t not in ego_v:
            continue
        colors = {o.signal for o in objs if o.kind == "light" and o.category.startswith("light_")
                  and ahead_m[0] <= o.ego_frame_center[0] <= ahead_m[1]}
        for c in ("green", "red"):
            if c in colors:
                out[f"ego_speed_at_{c}"].append(ego_v[t] * MPS_TO_KMH)

    agents = {a.agent_id: a for a in scene.agents}
    for aid, frames in seen_frames.items():
        rel = relative_positions(agents[aid], scene)
        speed, accel = truth_kinematics({t: rel[t][0] for t in rel}, frames, scene.frame_rate, window)
        for t in sorted(speed):
            out["speed_rel"].append(speed[t] * MPS_TO_KMH)
            out["accel_rel"].append(accel[t])
    return out
