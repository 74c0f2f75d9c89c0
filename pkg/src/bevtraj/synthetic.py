"""Synthetic traffic scenes with known ground truth.

Vehicles move along fixed paths under a longitudinal model: free-road
acceleration toward a desired speed, a kinematic safe-speed rule behind
leaders, curve speed limits, and a stop rule for red (and stoppable yellow)
lights. Accelerations are clipped to [-3, +2] m/s^2.

Road layout (world frame, meters): a three-lane main road along +x with
eastbound lanes at y = 0 and y = -3.7 and a westbound lane at y = +3.7.
Signalised intersections sit every 45-65 m; in the ``crossing`` layout each one
also carries a two-lane cross road (northbound at x_k + 1.75, southbound at
x_k - 1.75). Lights stand 1 m right of each lane centerline, 5.5 m before the
intersection center.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path as FsPath

import numpy as np
from shapely.geometry import Polygon

from .scene import (AgentTrack, LanePolyline, OrientedBox, Pose2D, Scene, TrafficLightTrack,
                    dumps_scene, validate_scene)

LANE_SPACING = 3.7
MAIN_HALF_WIDTH = 1.5 * LANE_SPACING
CROSS_OFFSET = 1.75
LIGHT_SETBACK = 5.5
LIGHT_RADIUS = 1.0
LIGHT_SIDE_OFFSET = 1.0  # signal heads sit right of the lane centerline
STOP_MARGIN = 0.5
CROSS_LIGHT_Y = MAIN_HALF_WIDTH + 2.0
TURN_RADIUS = LIGHT_SETBACK - CROSS_OFFSET

MAX_ACCEL = 2.0
MAX_DECEL = 3.0
COMFORT_DECEL = 2.0
RESPONSE_TIME = 0.5
STANDSTILL_GAP = 2.5
HEADWAY = 0.8
CURVE_LAT_ACCEL = 2.5
ALL_RED = 1.5
MIN_EDGE_GAP = 0.5
PRESENCE_RADIUS = 35.0
N_INTERSECTIONS = 4
ROAD_EXTENT = 2000.0

LAYOUTS = ("straight", "crossing", "mixed")


class InfeasibleParams(ValueError):
    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(message if index is None else f"scene index {index}: {message}")


@dataclass(frozen=True)
class GenParams:
    seed: int = 0
    duration_s: float = 15.0
    frame_rate: float = 10.0
    n_agents: tuple[int, int] = (6, 12)
    light_cycle: tuple[float, float, float] = (10.0, 10.0, 3.0)  # red, green, yellow seconds
    speed_limit: float = 12.0
    lane_layout: str = "crossing"
    ego_turn_probability: float = 0.4

    def __post_init__(self):
        if not (self.duration_s > 0 and self.frame_rate > 0 and self.speed_limit > 0):
            raise InfeasibleParams("duration, frame rate and speed limit must be positive")
        if any(not d > 0 for d in self.light_cycle):
            raise InfeasibleParams("light cycle durations must be positive")
        if not 0.0 <= self.ego_turn_probability <= 1.0:
            raise InfeasibleParams("ego_turn_probability must lie in [0, 1]")
        lo, hi = self.n_agents
        if lo < 0 or hi < lo:
            raise InfeasibleParams(f"bad agent count range {self.n_agents}")
        if self.lane_layout not in LAYOUTS:
            raise InfeasibleParams(f"lane_layout must be one of {LAYOUTS}")

    @property
    def num_timesteps(self) -> int:
        return max(1, int(round(self.duration_s * self.frame_rate)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_agents"] = list(self.n_agents)
        d["light_cycle"] = list(self.light_cycle)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenParams":
        kw = dict(d)
        for k in ("n_agents", "light_cycle"):
            if k in kw:
                kw[k] = tuple(kw[k])
        return cls(**kw)


# --------------------------------------------------------------------------
# signal plan

@dataclass(frozen=True)
class SignalPlan:
    red: float
    green: float
    yellow: float
    offset: float

    @property
    def cycle(self) -> float:
        return self.red + self.green + self.yellow

    def main(self, time: float) -> str:
        tau = (time + self.offset) % self.cycle
        if tau < self.green:
            return "green"
        if tau < self.green + self.yellow:
            return "yellow"
        return "red"

    def cross(self, time: float) -> str:
        """Cross road: green only inside the main red, with an all-red buffer on both sides."""
        tau = (time + self.offset) % self.cycle
        start = self.green + self.yellow + ALL_RED
        yellow_end = self.cycle - ALL_RED
        green_end = yellow_end - self.yellow
        if green_end - start < 0.5:
            return "red"
        if start <= tau < green_end:
            return "green"
        if green_end <= tau < yellow_end:
            return "yellow"
        return "red"


# --------------------------------------------------------------------------
# paths

class Path:
    """Arc-length parameterised polyline."""

    def __init__(self, points, curves=(), headings=None):
        pts = np.asarray(points, dtype=float)
        seg = np.diff(pts, axis=0)
        self.xy = pts
        self.s = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])
        if headings is None:
            seg_h = np.unwrap(np.arctan2(seg[:, 1], seg[:, 0]))
            headings = np.empty(len(pts))
            headings[0], headings[-1] = seg_h[0], seg_h[-1]
            headings[1:-1] = 0.5 * (seg_h[:-1] + seg_h[1:])
        self.h = np.asarray(headings, dtype=float)
        self.curves = tuple(curves)  # (s_start, s_end, v_max)
        self.lights: list[tuple[float, str]] = []

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def pose(self, s: float) -> tuple[float, float, float]:
        return (float(np.interp(s, self.s, self.xy[:, 0])),
                float(np.interp(s, self.s, self.xy[:, 1])),
                float(np.interp(s, self.s, self.h)))

    def project(self, x: float, y: float) -> tuple[float, float]:
        """(arc length, distance) of the closest path point to (x, y)."""
        best = (0.0, math.inf)
        for i in range(len(self.xy) - 1):
            p, q = self.xy[i], self.xy[i + 1]
            d = q - p
            dd = float(d @ d)
            t = min(1.0, max(0.0, float((np.array([x, y]) - p) @ d) / dd))
            c = p + t * d
            dist = math.hypot(c[0] - x, c[1] - y)
            if dist < best[1]:
                best = (float(self.s[i] + t * math.sqrt(dd)), dist)
        return best


def _straight(x0, y0, x1, y1) -> Path:
    return Path([(x0, y0), (x1, y1)])


def _right_turn_path(x_int: float, y_lane: float) -> Path:
    """Eastbound on y_lane, right turn at x_int into the southbound cross lane."""
    x_s = x_int - CROSS_OFFSET - TURN_RADIUS
    cy = y_lane - TURN_RADIUS
    angles = np.linspace(math.pi / 2, 0.0, 64)
    arc = np.stack([x_s + TURN_RADIUS * np.cos(angles), cy + TURN_RADIUS * np.sin(angles)], axis=1)
    pts = np.vstack([[(-ROAD_EXTENT, y_lane)], arc, [(x_int - CROSS_OFFSET, -ROAD_EXTENT)]])
    headings = np.concatenate([[0.0], angles - math.pi / 2, [-math.pi / 2]])
    s_start = x_s + ROAD_EXTENT
    s_end = s_start + 0.5 * math.pi * TURN_RADIUS
    return Path(pts, curves=[(s_start, s_end, math.sqrt(CURVE_LAT_ACCEL * TURN_RADIUS))], headings=headings)


# --------------------------------------------------------------------------
# vehicles

@dataclass
class _Vehicle:
    vid: str
    path: Path
    s: float
    v: float
    v_des: float
    length: float
    width: float
    is_ego: bool = False
    order: int = 0
    lane: str = ""

    def __post_init__(self):
        self.decisions: dict[str, str] = {}

    def pose(self):
        return self.path.pose(self.s)


def _leader_speed(me: _Vehicle, mx, my, mh, others) -> float:
    best = math.inf
    c, s = math.cos(mh), math.sin(mh)
    for o, (ox, oy, oh) in others:
        if o is me:
            continue
        dx = c * (ox - mx) + s * (oy - my)
        if dx <= 0 or dx > 80:
            continue
        dy = -s * (ox - mx) + c * (oy - my)
        if abs(dy) > 0.5 * (me.width + o.width) + 0.3:
            continue
        align = math.cos(oh - mh)
        if align < 0.5:
            continue
        gap = dx - 0.5 * (me.length + o.length)
        v_l = max(o.v * align, 0.0)
        vt = math.sqrt(max(v_l * v_l + 2 * COMFORT_DECEL * (gap - STANDSTILL_GAP - HEADWAY * me.v), 0.0))
        best = min(best, vt)
    return best


def _stop_gap(me: _Vehicle, s_light: float) -> float:
    """Distance from the front bumper to the stop point of a light at arc length s_light."""
    return s_light - LIGHT_RADIUS - STOP_MARGIN - (me.s + 0.5 * me.length)


def _light_accel(me: _Vehicle, signal_of, time: float) -> float:
    """Acceleration bound imposed by the lights ahead.

    The stop-or-go choice for a yellow is taken once, when the yellow is first
    seen: a vehicle that can stop within MAX_DECEL stops, otherwise it proceeds.
    Red always means stop.
    """
    best = math.inf
    for s_light, lid in me.path.lights:
        g = _stop_gap(me, s_light)
        if g < -0.5 * me.length:
            continue
        if g > 120:
            break
        state = signal_of(lid, time)
        if state == "green":
            me.decisions.pop(lid, None)
            continue
        need = me.v * me.v / (2 * g) if g > 0 else (0.0 if me.v == 0 else math.inf)
        if state == "yellow" and lid not in me.decisions:
            me.decisions[lid] = "go" if need > MAX_DECEL else "stop"
        if state == "yellow" and me.decisions[lid] == "go":
            continue
        if state == "red" and me.decisions.get(lid) == "go" and g < 0:
            continue
        a = (math.sqrt(2 * COMFORT_DECEL * max(g, 0.0)) - me.v) / RESPONSE_TIME
        if need >= COMFORT_DECEL:
            a = min(a, -need)
        best = min(best, a)
    return best


def _curve_speed(me: _Vehicle) -> float:
    best = math.inf
    for s0, s1, vmax in me.path.curves:
        front = me.s + 0.5 * me.length
        if me.s - 0.5 * me.length > s1:
            continue
        d = s0 - front
        best = min(best, vmax if d <= 0 else math.sqrt(vmax * vmax + 2 * COMFORT_DECEL * d))
    return best


def _step(vehicles: list[_Vehicle], signal_of, time: float, dt: float):
    poses = [(v, v.pose()) for v in vehicles]
    accels = []
    for me, (x, y, h) in poses:
        target = min(me.v_des, _leader_speed(me, x, y, h, poses), _curve_speed(me))
        a = min((target - me.v) / RESPONSE_TIME, _light_accel(me, signal_of, time))
        accels.append(min(MAX_ACCEL, max(-MAX_DECEL, a)))
    for me, a in zip(vehicles, accels):
        me.v = max(0.0, me.v + a * dt)
        me.s += me.v * dt


# --------------------------------------------------------------------------
# scene assembly

@dataclass
class _Layout:
    crossing: bool
    x_int: list[float]
    plans: list[SignalPlan]
    paths: dict[str, Path]
    light_pos: dict[str, tuple[float, float]]
    light_kind: dict[str, tuple[int, str]]  # light id -> (intersection, "main" | "cross")

    def signal(self, lid: str, time: float) -> str:
        k, kind = self.light_kind[lid]
        plan = self.plans[k]
        return plan.main(time) if kind == "main" else plan.cross(time)


def _build_layout(rng: np.random.Generator, params: GenParams, crossing: bool, x_first: float) -> _Layout:
    x_int = [x_first]
    for _ in range(N_INTERSECTIONS - 1):
        x_int.append(x_int[-1] + float(rng.uniform(45.0, 65.0)))
    red, green, yellow = params.light_cycle
    cycle = red + green + yellow
    plans = [SignalPlan(red, green, yellow, float(rng.uniform(0.0, cycle))) for _ in x_int]

    paths = {
        "E0": _straight(-ROAD_EXTENT, 0.0, ROAD_EXTENT, 0.0),
        "E1": _straight(-ROAD_EXTENT, -LANE_SPACING, ROAD_EXTENT, -LANE_SPACING),
        "W0": _straight(ROAD_EXTENT, LANE_SPACING, -ROAD_EXTENT, LANE_SPACING),
    }
    light_pos, light_kind = {}, {}
    for k, x in enumerate(x_int):
        off = LIGHT_SIDE_OFFSET
        for lane, lx, ly in (("E0", x - LIGHT_SETBACK, -off), ("E1", x - LIGHT_SETBACK, -LANE_SPACING - off),
                             ("W0", x + LIGHT_SETBACK, LANE_SPACING + off)):
            lid = f"L{k}{lane}"
            light_pos[lid] = (lx, ly)
            light_kind[lid] = (k, "main")
        if crossing:
            paths[f"N{k}"] = _straight(x + CROSS_OFFSET, -ROAD_EXTENT, x + CROSS_OFFSET, ROAD_EXTENT)
            paths[f"S{k}"] = _straight(x - CROSS_OFFSET, ROAD_EXTENT, x - CROSS_OFFSET, -ROAD_EXTENT)
            for lane, lx, ly in ((f"N{k}", x + CROSS_OFFSET + off, -CROSS_LIGHT_Y),
                                 (f"S{k}", x - CROSS_OFFSET - off, CROSS_LIGHT_Y)):
                lid = f"L{k}{lane[0]}"
                light_pos[lid] = (lx, ly)
                light_kind[lid] = (k, "cross")
    return _Layout(crossing, x_int, plans, paths, light_pos, light_kind)


def _attach_lights(path: Path, layout: _Layout, lane_ids: list[str]):
    found = []
    for lid, (lx, ly) in layout.light_pos.items():
        s, dist = path.project(lx, ly)
        if dist < LIGHT_SIDE_OFFSET + 0.5 and 0.0 < s < path.length:
            found.append((s, lid))
    path.lights = sorted(found)


def _min_gap(a, b) -> float:
    return Polygon(a.corners()).distance(Polygon(b.corners()))


def _conflicts(states: dict[str, dict[int, OrientedBox]]) -> list[tuple[str, str]]:
    """Pairs whose edge-to-edge gap drops below MIN_EDGE_GAP in any frame."""
    ids = list(states)
    times = sorted({t for st in states.values() for t in st})
    bad = []
    seen = set()
    for t in times:
        present = [(i, states[i][t]) for i in ids if t in states[i]]
        for a in range(len(present)):
            ia, ba = present[a]
            for b in range(a + 1, len(present)):
                ib, bb = present[b]
                if (ia, ib) in seen:
                    continue
                reach = 0.5 * (math.hypot(ba.length, ba.width) + math.hypot(bb.length, bb.width)) + MIN_EDGE_GAP
                if math.hypot(ba.center.x - bb.center.x, ba.center.y - bb.center.y) > reach:
                    continue
                if _min_gap(ba, bb) < MIN_EDGE_GAP:
                    seen.add((ia, ib))
                    bad.append((ia, ib))
    return bad


def _spawn_ok(cand: _Vehicle, placed: list[_Vehicle]) -> bool:
    cx, cy, _ = cand.pose()
    for o in placed:
        ox, oy, _ = o.pose()
        need = 0.5 * (cand.length + o.length) + STANDSTILL_GAP
        if o.lane == cand.lane:
            need += HEADWAY * max(cand.v, o.v) + 1.0
        if math.hypot(cx - ox, cy - oy) < need:
            return False
    return True


def _clear_of_stop_lines(veh: _Vehicle) -> bool:
    """Reject spawns straddling a stop line, where no decision rule applies cleanly."""
    return all(not (-veh.length - 3.0 < _stop_gap(veh, s_light) < 3.0) for s_light, _ in veh.path.lights)


def _feasible_speed(veh: _Vehicle, layout: _Layout) -> float:
    """Cap an initial speed so a light that is not green at t=0 can still be obeyed comfortably."""
    v = veh.v
    for s_light, lid in veh.path.lights:
        g = _stop_gap(veh, s_light)
        if g < 0:
            continue
        if layout.signal(lid, 0.0) != "green":
            v = min(v, math.sqrt(2 * COMFORT_DECEL * g))
        break
    return v


def simulate(vehicles: list[_Vehicle], layout: _Layout, num_timesteps: int, frame_rate: float):
    """Run the longitudinal model; returns {vid: [(x, y, heading)] per timestep}."""
    dt = 1.0 / frame_rate
    out = {v.vid: [] for v in vehicles}
    for t in range(num_timesteps):
        for v in vehicles:
            out[v.vid].append(v.pose())
        if t < num_timesteps - 1:
            _step(vehicles, layout.signal, t * dt, dt)
    return out


def generate_scene(params: GenParams) -> Scene:
    rng = np.random.default_rng(params.seed)
    layout_name = params.lane_layout
    if layout_name == "mixed":
        layout_name = "crossing" if rng.random() < 0.5 else "straight"
    crossing = layout_name == "crossing"
    turning = crossing and rng.random() < params.ego_turn_probability

    # ego starts 10-35 m (center) before the first light
    x_first = 0.0
    layout = _build_layout(rng, params, crossing, x_first)
    ego_lane = "E1" if turning else "E0"
    ego_y = -LANE_SPACING if turning else 0.0
    if turning:
        ego_path = _right_turn_path(layout.x_int[0], ego_y)
    else:
        ego_path = layout.paths[ego_lane]
    for name, p in layout.paths.items():
        _attach_lights(p, layout, [name])
    _attach_lights(ego_path, layout, [ego_lane])

    x_e0 = layout.x_int[0] - LIGHT_SETBACK - float(rng.uniform(10.0, 35.0))
    limit = params.speed_limit
    ego_v_des = limit
    ego = _Vehicle("ego", ego_path, x_e0 + ROAD_EXTENT, ego_v_des * float(rng.uniform(0.5, 1.0)), ego_v_des,
                   float(rng.uniform(4.3, 4.9)), float(rng.uniform(1.8, 2.0)), is_ego=True, lane=ego_lane)
    ego.v = _feasible_speed(ego, layout)

    lanes = [("E0", 1.0), ("E1", 2.0), ("W0", 2.0)]
    if crossing:
        lanes += [(f"N{k}", 0.5) for k in range(2)] + [(f"S{k}", 0.5) for k in range(2)]
    names = [n for n, _ in lanes]
    weights = np.array([w for _, w in lanes])
    weights = weights / weights.sum()

    lo, hi = params.n_agents
    n_agents = int(rng.integers(lo, hi + 1))
    placed = [ego]
    for i in range(n_agents):
        for _attempt in range(200):
            lane = names[int(rng.choice(len(names), p=weights))]
            path = layout.paths[lane]
            if lane.startswith(("E", "W")):
                x = float(rng.uniform(x_e0 - 50.0, x_e0 + 130.0))
                s = path.project(x, path.xy[0, 1])[0]
            else:
                k = int(lane[1:])
                y = float(rng.uniform(12.0, 60.0)) * (1 if rng.random() < 0.5 else -1)
                s = path.project(path.xy[0, 0], y)[0]
            v_des = limit * float(rng.uniform(0.6, 1.0))
            cand = _Vehicle(f"a{i + 1}", path, s, v_des * float(rng.uniform(0.3, 1.0)), v_des,
                            float(rng.uniform(3.8, 5.5)), float(rng.uniform(1.7, 2.1)), order=i + 1, lane=lane)
            cand.v = _feasible_speed(cand, layout)
            if _spawn_ok(cand, placed) and _clear_of_stop_lines(cand):
                placed.append(cand)
                break
        else:
            raise InfeasibleParams(f"could not place agent {i + 1} of {n_agents} without overlap")

    T = params.num_timesteps
    traj = simulate(placed, layout, T, params.frame_rate)

    ego_traj = traj["ego"]
    states: dict[str, dict[int, OrientedBox]] = {}
    dims = {v.vid: (v.length, v.width) for v in placed}
    for v in placed:
        L, W = dims[v.vid]
        st = {}
        for t, (x, y, h) in enumerate(traj[v.vid]):
            ex, ey, _ = ego_traj[t]
            if v.is_ego or math.hypot(x - ex, y - ey) <= PRESENCE_RADIUS:
                st[t] = OrientedBox(Pose2D(x, y, h), L, W)
        if st:
            states[v.vid] = st

    # drop later-spawned agents that ever come closer than MIN_EDGE_GAP to anyone
    order = {v.vid: v.order for v in placed}
    while True:
        bad = _conflicts(states)
        if not bad:
            break
        drop = set()
        for a, b in bad:
            if a in drop or b in drop:
                continue
            drop.add(max((a, b), key=lambda i: (order[i], i)) if "ego" not in (a, b) else (b if a == "ego" else a))
        for d in drop:
            states.pop(d, None)

    agents = []
    for v in placed:
        if v.vid not in states:
            continue
        agents.append(AgentTrack(v.vid, v.is_ego, tuple(sorted(states[v.vid].items()))))

    dt = 1.0 / params.frame_rate
    lights = tuple(
        TrafficLightTrack(lid, pos, tuple((t, layout.signal(lid, t * dt)) for t in range(T)))
        for lid, pos in layout.light_pos.items()
    )
    x_lo, x_hi = x_e0 - 250.0, x_e0 + 450.0
    lanes_out = [
        LanePolyline("E0", ((x_lo, 0.0), (x_hi, 0.0))),
        LanePolyline("E1", ((x_lo, -LANE_SPACING), (x_hi, -LANE_SPACING))),
        LanePolyline("W0", ((x_hi, LANE_SPACING), (x_lo, LANE_SPACING))),
    ]
    if crossing:
        for k, x in enumerate(layout.x_int):
            lanes_out.append(LanePolyline(f"N{k}", ((x + CROSS_OFFSET, -200.0), (x + CROSS_OFFSET, 200.0))))
            lanes_out.append(LanePolyline(f"S{k}", ((x - CROSS_OFFSET, 200.0), (x - CROSS_OFFSET, -200.0))))

    scene = Scene(f"syn-{params.seed:08d}", params.frame_rate, T, tuple(lanes_out), lights, tuple(agents))
    return validate_scene(scene)


def approach_scene(gap_m: float = 10.0, speed: float = 8.0, light_cycle=(10.0, 10.0, 3.0),
                   duration_s: float = 15.0, frame_rate: float = 10.0, length: float = 4.6,
                   width: float = 1.9) -> Scene:
    """Lone ego on a straight lane heading for one light that turns red at t=0.

    ``gap_m`` is the distance from the ego's front bumper to the light center
    and ``speed`` its initial (and desired) speed. The initial speed is kept as
    given, even when it cannot be shed within the comfort deceleration.
    """
    red, green, yellow = light_cycle
    plan = SignalPlan(red, green, yellow, offset=green + yellow)
    x_light = 0.0
    path = _straight(-ROAD_EXTENT, 0.0, ROAD_EXTENT, 0.0)
    layout = _Layout(False, [x_light + LIGHT_SETBACK], [plan], {"E0": path},
                     {"L0E0": (x_light, -LIGHT_SIDE_OFFSET)}, {"L0E0": (0, "main")})
    _attach_lights(path, layout, ["E0"])
    x0 = x_light - gap_m - 0.5 * length
    ego = _Vehicle("ego", path, x0 + ROAD_EXTENT, speed, speed, length, width, is_ego=True, lane="E0")
    params = GenParams(duration_s=duration_s, frame_rate=frame_rate, light_cycle=tuple(light_cycle))
    T = params.num_timesteps
    traj = simulate([ego], layout, T, frame_rate)["ego"]
    states = tuple((t, OrientedBox(Pose2D(x, y, h), length, width)) for t, (x, y, h) in enumerate(traj))
    dt = 1.0 / frame_rate
    light = TrafficLightTrack("L0E0", layout.light_pos["L0E0"],
                              tuple((t, layout.signal("L0E0", t * dt)) for t in range(T)))
    lane = LanePolyline("E0", ((x0 - 50.0, 0.0), (x0 + 250.0, 0.0)))
    return validate_scene(Scene("approach", frame_rate, T, (lane,), (light,),
                                (AgentTrack("ego", True, states),)))


def generate_corpus(params: GenParams, n_scenes: int) -> list[Scene]:
    if n_scenes < 1:
        raise ValueError("n_scenes must be >= 1")
    out = []
    for i in range(n_scenes):
        try:
            out.append(generate_scene(replace(params, seed=params.seed + i)))
        except InfeasibleParams as exc:
            raise InfeasibleParams(str(exc), index=i) from exc
    return out


def write_corpus(scenes: list[Scene], params: GenParams, out_dir, created_utc: str | None = None) -> list[FsPath]:
    """Write scene files plus ``corpus.json`` (the only file carrying a timestamp)."""
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for sc in scenes:
        p = out / f"{sc.scene_id}.json"
        p.write_text(dumps_scene(sc), encoding="utf-8")
        files.append(p)
    manifest = {"params": params.to_dict(), "n_scenes": len(scenes),
                "scenes": [f.name for f in files], "created_utc": created_utc}
    (out / "corpus.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return files


# --------------------------------------------------------------------------
# ground-truth checks used by tests and the round-trip report

def speeds(track: AgentTrack, frame_rate: float) -> dict[int, float]:
    """Speed at each interior timestep from central differences of positions."""
    by_t = track._by_t
    out = {}
    for t in by_t:
        prev, nxt = by_t.get(t - 1), by_t.get(t + 1)
        if prev is not None and nxt is not None:
            out[t] = math.hypot(nxt.center.x - prev.center.x, nxt.center.y - prev.center.y) * frame_rate / 2
        elif nxt is not None:
            out[t] = math.hypot(nxt.center.x - by_t[t].center.x, nxt.center.y - by_t[t].center.y) * frame_rate
        elif prev is not None:
            out[t] = math.hypot(by_t[t].center.x - prev.center.x, by_t[t].center.y - prev.center.y) * frame_rate
    return out


def step_speeds(track: AgentTrack, frame_rate: float) -> dict[int, float]:
    """Speed over each step t -> t+1 (keyed by t), from position differences."""
    by_t = track._by_t
    return {t: math.hypot(by_t[t + 1].center.x - b.center.x, by_t[t + 1].center.y - b.center.y) * frame_rate
            for t, b in by_t.items() if t + 1 in by_t}


def red_light_violations(scene: Scene, lateral_tol: float = LIGHT_SIDE_OFFSET + 0.5, approach: float = 15.0) -> list[tuple[str, str, int]]:
    """(agent, light, t) where an agent's center reaches a light showing red without
    having come to rest (< 0.1 m/s) within ``approach`` meters before it."""
    out = []
    for agent in scene.agents:
        sp = step_speeds(agent, scene.frame_rate)
        for light in scene.lights:
            lx, ly = light.position
            prev_along = None
            rested = False
            prev_t = None
            for t in agent.timesteps:
                if prev_t is not None and t != prev_t + 1:
                    prev_along, rested = None, False
                prev_t = t
                b = agent.at(t)
                c, s = math.cos(b.center.heading), math.sin(b.center.heading)
                along = c * (lx - b.center.x) + s * (ly - b.center.y)
                lat = -s * (lx - b.center.x) + c * (ly - b.center.y)
                if abs(lat) >= lateral_tol:
                    prev_along, rested = None, False
                    continue
                if prev_along is not None and prev_along > 0 >= along:
                    if light.at(t) == "red" and not rested:
                        out.append((agent.agent_id, light.light_id, t))
                    break
                if 0 < along <= approach and sp.get(t, math.inf) < 0.1:
                    rested = True
                prev_along = along
    return out
