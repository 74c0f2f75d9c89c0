"""Abstract traffic-scene model and the ego-centric world/image transforms.

Image convention: pixel (r, c) covers [r, r+1) x [c, c+1) and has its center at
(r + 0.5, c + 0.5). The ego sits at the exact image center with its heading
pointing up (decreasing row); the ego's left maps to decreasing column.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SIGNALS = ("red", "green", "yellow", "unknown")


def normalize_heading(h: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    h = math.remainder(h, 2.0 * math.pi)
    if h <= -math.pi:
        h += 2.0 * math.pi
    return h


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_heading(float(self.heading)))


@dataclass(frozen=True)
class OrientedBox:
    center: Pose2D
    length: float
    width: float

    @property
    def area(self) -> float:
        return self.length * self.width

    def corners(self) -> np.ndarray:
        """Corners in world coordinates, counter-clockwise, shape (4, 2)."""
        c, s = math.cos(self.center.heading), math.sin(self.center.heading)
        hl, hw = 0.5 * self.length, 0.5 * self.width
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.center.x, self.center.y])


@dataclass(frozen=True)
class AgentTrack:
    agent_id: str
    is_ego: bool
    states: tuple[tuple[int, OrientedBox], ...]

    @cached_property
    def _by_t(self) -> dict[int, OrientedBox]:
        return dict(self.states)

    def at(self, t: int) -> OrientedBox | None:
        return self._by_t.get(t)

    @property
    def timesteps(self) -> list[int]:
        return [t for t, _ in self.states]


@dataclass(frozen=True)
class TrafficLightTrack:
    light_id: str
    position: tuple[float, float]
    states: tuple[tuple[int, str], ...]

    @cached_property
    def _by_t(self) -> dict[int, str]:
        return dict(self.states)

    def at(self, t: int) -> str | None:
        return self._by_t.get(t)


@dataclass(frozen=True)
class LanePolyline:
    lane_id: str
    points: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class Scene:
    scene_id: str
    frame_rate: float
    num_timesteps: int
    lanes: tuple[LanePolyline, ...] = ()
    lights: tuple[TrafficLightTrack, ...] = ()
    agents: tuple[AgentTrack, ...] = ()

    @property
    def ego(self) -> AgentTrack:
        for a in self.agents:
            if a.is_ego:
                return a
        raise LookupError(f"scene {self.scene_id!r} has no ego track")

    @property
    def others(self) -> list[AgentTrack]:
        return [a for a in self.agents if not a.is_ego]

    def ego_pose(self, t: int) -> Pose2D:
        box = self.ego.at(t)
        if box is None:
            raise LookupError(f"ego has no state at t={t}")
        return box.center


@dataclass(frozen=True)
class RasterConfig:
    window_length: float = 20.0
    window_width: float = 10.0
    frame_rows: int = 96
    frame_cols: int = 54
    frame_rate: float = 10.0
    lane_thickness: float = 1.5
    light_diameter: float = 2.0

    def __post_init__(self):
        for name in ("window_length", "window_width", "frame_rows", "frame_cols",
                     "frame_rate", "lane_thickness", "light_diameter"):
            if not getattr(self, name) > 0:
                raise ValueError(f"RasterConfig.{name} must be positive")

    @property
    def scale_row(self) -> float:
        """Longitudinal pixels per meter."""
        return self.frame_rows / self.window_length

    @property
    def scale_col(self) -> float:
        """Lateral pixels per meter."""
        return self.frame_cols / self.window_width

    @property
    def scales(self) -> tuple[float, float]:
        return (self.scale_row, self.scale_col)

    @property
    def center(self) -> tuple[float, float]:
        return (self.frame_rows / 2.0, self.frame_cols / 2.0)

    @cached_property
    def pixel_centers_ego(self) -> tuple[np.ndarray, np.ndarray]:
        """Ego-frame (forward, left) meters of every pixel center, each (rows, cols)."""
        rr, cc = np.mgrid[0:self.frame_rows, 0:self.frame_cols].astype(float) + 0.5
        return image_to_ego(rr, cc, self)


# --------------------------------------------------------------------------
# transforms

def world_to_ego(ego: Pose2D, x, y):
    """World (x, y) -> ego frame (forward, left). Accepts scalars or arrays."""
    dx = np.asarray(x, dtype=float) - ego.x
    dy = np.asarray(y, dtype=float) - ego.y
    c, s = math.cos(ego.heading), math.sin(ego.heading)
    return c * dx + s * dy, -s * dx + c * dy


def ego_to_world(ego: Pose2D, fwd, left):
    fwd = np.asarray(fwd, dtype=float)
    left = np.asarray(left, dtype=float)
    c, s = math.cos(ego.heading), math.sin(ego.heading)
    return ego.x + c * fwd - s * left, ego.y + s * fwd + c * left


def ego_to_image(fwd, left, cfg: RasterConfig):
    r0, c0 = cfg.center
    return r0 - np.asarray(fwd, dtype=float) * cfg.scale_row, c0 - np.asarray(left, dtype=float) * cfg.scale_col


def image_to_ego(row, col, cfg: RasterConfig):
    r0, c0 = cfg.center
    return (r0 - np.asarray(row, dtype=float)) / cfg.scale_row, (c0 - np.asarray(col, dtype=float)) / cfg.scale_col


def world_to_image(ego: Pose2D, point: Sequence[float], cfg: RasterConfig) -> tuple[float, float]:
    fwd, left = world_to_ego(ego, point[0], point[1])
    r, c = ego_to_image(fwd, left, cfg)
    return float(r), float(c)


def image_to_world(ego: Pose2D, pixel: Sequence[float], cfg: RasterConfig) -> tuple[float, float]:
    fwd, left = image_to_ego(pixel[0], pixel[1], cfg)
    x, y = ego_to_world(ego, fwd, left)
    return float(x), float(y)


# --------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Violation:
    code: str
    message: str

    def __str__(self):
        return f"{self.code}: {self.message}"


class SceneValidationError(ValueError):
    def __init__(self, scene_id: str, violations: list[Violation]):
        self.scene_id = scene_id
        self.violations = violations
        lines = "\n  ".join(str(v) for v in violations)
        super().__init__(f"scene {scene_id!r} is invalid:\n  {lines}")


def scene_violations(scene: Scene) -> list[Violation]:
    """Every invariant violation in ``scene``; empty when the scene is valid."""
    out: list[Violation] = []
    n = scene.num_timesteps
    if not scene.frame_rate > 0:
        out.append(Violation("InvalidHeader", f"frame_rate must be positive, got {scene.frame_rate}"))
    if n < 1:
        out.append(Violation("InvalidHeader", f"num_timesteps must be >= 1, got {n}"))

    egos = [a for a in scene.agents if a.is_ego]
    if not egos:
        out.append(Violation("MissingEgo", "no track has is_ego = true"))
    elif len(egos) > 1:
        out.append(Violation("MultipleEgo", f"{len(egos)} tracks flagged as ego: "
                                            + ", ".join(a.agent_id for a in egos)))

    ids = [a.agent_id for a in scene.agents]
    if len(set(ids)) != len(ids):
        out.append(Violation("DuplicateId", "agent ids are not unique"))

    for a in scene.agents:
        ts = [t for t, _ in a.states]
        if any(t1 <= t0 for t0, t1 in zip(ts, ts[1:])):
            out.append(Violation("NonMonotonicTimesteps", f"agent {a.agent_id}: timesteps not strictly increasing"))
        bad = [t for t in ts if t < 0 or t >= n]
        if bad:
            out.append(Violation("DanglingTimestep", f"agent {a.agent_id}: timesteps {bad[:5]} outside [0, {n})"))
        for t, box in a.states:
            if not (box.length > 0 and box.width > 0):
                out.append(Violation("DegenerateBox", f"agent {a.agent_id} at t={t}: "
                                                      f"length={box.length}, width={box.width}"))
                break
        if a.is_ego and len(egos) == 1 and sorted(set(ts)) != list(range(n)):
            out.append(Violation("MissingEgo", f"ego {a.agent_id} does not span every timestep"))

    for light in scene.lights:
        ts = [t for t, _ in light.states]
        if any(t1 <= t0 for t0, t1 in zip(ts, ts[1:])):
            out.append(Violation("NonMonotonicTimesteps", f"light {light.light_id}: timesteps not strictly increasing"))
        elif ts and ts[-1] - ts[0] + 1 != len(ts):
            out.append(Violation("NonContiguousLight", f"light {light.light_id}: states not contiguous"))
        bad = [t for t in ts if t < 0 or t >= n]
        if bad:
            out.append(Violation("DanglingTimestep", f"light {light.light_id}: timesteps {bad[:5]} outside [0, {n})"))
        unknown = {s for _, s in light.states} - set(SIGNALS)
        if unknown:
            out.append(Violation("UnknownSignal", f"light {light.light_id}: {sorted(unknown)}"))

    for lane in scene.lanes:
        if len(lane.points) < 2:
            out.append(Violation("DegenerateLane", f"lane {lane.lane_id}: fewer than 2 points"))
        elif any(p == q for p, q in zip(lane.points, lane.points[1:])):
            out.append(Violation("DegenerateLane", f"lane {lane.lane_id}: repeated consecutive point"))
    return out


def validate_scene(scene: Scene) -> Scene:
    """Return ``scene`` unchanged, or raise SceneValidationError listing all violations."""
    violations = scene_violations(scene)
    if violations:
        raise SceneValidationError(scene.scene_id, violations)
    return scene


# --------------------------------------------------------------------------
# JSON

def scene_to_dict(scene: Scene) -> dict:
    return {
        "scene_id": scene.scene_id,
        "frame_rate_hz": scene.frame_rate,
        "num_timesteps": scene.num_timesteps,
        "lanes": [{"lane_id": l.lane_id, "points": [list(p) for p in l.points]} for l in scene.lanes],
        "lights": [
            {"light_id": l.light_id, "position": list(l.position),
             "states": [{"t": t, "signal": s} for t, s in l.states]}
            for l in scene.lights
        ],
        "agents": [
            {"agent_id": a.agent_id, "is_ego": a.is_ego,
             "states": [{"t": t, "x": b.center.x, "y": b.center.y, "heading": b.center.heading,
                         "length": b.length, "width": b.width} for t, b in a.states]}
            for a in scene.agents
        ],
    }


def scene_from_dict(d: dict) -> Scene:
    lanes = tuple(LanePolyline(str(l["lane_id"]), tuple((float(x), float(y)) for x, y in l["points"]))
                  for l in d.get("lanes", []))
    lights = tuple(
        TrafficLightTrack(str(l["light_id"]), (float(l["position"][0]), float(l["position"][1])),
                          tuple((int(s["t"]), str(s["signal"])) for s in l["states"]))
        for l in d.get("lights", [])
    )
    agents = tuple(
        AgentTrack(str(a["agent_id"]), bool(a.get("is_ego", False)),
                   tuple((int(s["t"]), OrientedBox(Pose2D(float(s["x"]), float(s["y"]), float(s["heading"])),
                                                   float(s["length"]), float(s["width"])))
                         for s in a["states"]))
        for a in d.get("agents", [])
    )
    return Scene(str(d["scene_id"]), float(d["frame_rate_hz"]), int(d["num_timesteps"]), lanes, lights, agents)


def dumps_scene(scene: Scene) -> str:
    return json.dumps(scene_to_dict(scene), separators=(",", ":")) + "\n"


def save_scene(scene: Scene, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(dumps_scene(scene), encoding="utf-8")
    return path


def load_scene(path: str | Path) -> Scene:
    return scene_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def iter_scene_files(paths: Iterable[str | Path]) -> list[Path]:
    """Expand directories into their ``*.json`` scene files (corpus manifests skipped)."""
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out.extend(sorted(f for f in p.glob("*.json") if f.name != "corpus.json"))
        else:
            out.append(p)
    return out
