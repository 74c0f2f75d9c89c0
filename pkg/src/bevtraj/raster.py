"""Ego-centric BEV occupancy-grid rendering and the on-disk video format."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import colors as pal
from .colors import ColorRGB
from .scene import RasterConfig, Scene, world_to_ego

log = logging.getLogger(__name__)


class EmptySamplingRegion(ValueError):
    pass


class MissingColorAssignment(KeyError):
    pass


class VideoReadError(IOError):
    pass


@dataclass(frozen=True)
class ColorPolicy:
    background: ColorRGB = pal.WHITE
    lane: ColorRGB = pal.LANE_GRAY
    ego: ColorRGB = pal.BLACK
    light_red: ColorRGB = pal.LIGHT_RGB["red"]
    light_green: ColorRGB = pal.LIGHT_RGB["green"]
    light_yellow: ColorRGB = pal.LIGHT_RGB["yellow"]
    agent_hues: tuple[tuple[float, float], ...] = ((70.0, 100.0), (165.0, 325.0))
    agent_saturation: tuple[float, float] = (0.45, 1.0)
    agent_value: tuple[float, float] = (0.45, 0.95)
    hue_margin: float = 10.0
    sv_margin: float = 0.2

    def light_color(self, signal: str) -> ColorRGB | None:
        return {"red": self.light_red, "green": self.light_green, "yellow": self.light_yellow}.get(signal)

    def effective_region(self):
        """Sampling region with every reserved region (plus margin) removed.

        Returns (hue pieces, saturation range, value range); raises
        EmptySamplingRegion when nothing is left.
        """
        reserved = [pal.widen(b, self.hue_margin) for b in pal.LIGHT_HUE_BANDS.values()]
        hues = pal.subtract_hues(self.agent_hues, reserved)
        s_lo = max(self.agent_saturation[0], pal.ACHROMATIC_MAX_SATURATION + self.sv_margin)
        v_lo = max(self.agent_value[0], pal.EGO_MAX_VALUE + self.sv_margin)
        s_hi, v_hi = self.agent_saturation[1], self.agent_value[1]
        if not hues or s_lo > s_hi or v_lo > v_hi:
            raise EmptySamplingRegion("agent color sampling region is empty after removing reserved colors")
        return hues, (s_lo, s_hi), (v_lo, v_hi)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ColorPolicy":
        kw = {}
        for k, v in d.items():
            if k in ("background", "lane", "ego", "light_red", "light_green", "light_yellow"):
                kw[k] = ColorRGB(*v)
            elif k == "agent_hues":
                kw[k] = tuple(tuple(map(float, p)) for p in v)
            elif k in ("agent_saturation", "agent_value"):
                kw[k] = tuple(map(float, v))
            else:
                kw[k] = v
        return cls(**kw)


def sample_agent_color(rng: np.random.Generator, policy: ColorPolicy = ColorPolicy()) -> ColorRGB:
    hues, (s_lo, s_hi), (v_lo, v_hi) = policy.effective_region()
    widths = np.array([hi - lo for lo, hi in hues])
    u = rng.random() * widths.sum()
    k = int(np.searchsorted(np.cumsum(widths), u, side="right"))
    k = min(k, len(hues) - 1)
    hue = hues[k][0] + (u - (widths[:k].sum() if k else 0.0))
    sat = s_lo + rng.random() * (s_hi - s_lo)
    val = v_lo + rng.random() * (v_hi - v_lo)
    return pal.hsv_to_rgb(hue, sat, val)


# --------------------------------------------------------------------------
# drawing primitives, all evaluated at pixel centers in ego-frame meters

def _box_mask(fwd, left, cx, cy, rel_heading, length, width):
    dx, dy = fwd - cx, left - cy
    c, s = math.cos(rel_heading), math.sin(rel_heading)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    return (np.abs(u) <= 0.5 * length) & (np.abs(v) <= 0.5 * width)


def _segment_distance(fwd, left, p, q):
    d = q - p
    dd = float(d @ d)
    t = ((fwd - p[0]) * d[0] + (left - p[1]) * d[1]) / dd
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(fwd - (p[0] + t * d[0]), left - (p[1] + t * d[1]))


def _window_radius(cfg: RasterConfig) -> float:
    return 0.5 * math.hypot(cfg.window_length, cfg.window_width)


def render_frame(scene: Scene, t: int, cfg: RasterConfig, policy: ColorPolicy,
                 colors: dict[str, ColorRGB]) -> np.ndarray:
    """One RGB frame (rows, cols, 3) uint8 of ``scene`` at timestep ``t``."""
    if not 0 <= t < scene.num_timesteps:
        raise IndexError(f"timestep {t} outside [0, {scene.num_timesteps})")
    ego_track = scene.ego
    ego = ego_track.at(t).center
    fwd, left = cfg.pixel_centers_ego
    reach = _window_radius(cfg)
    frame = np.empty((cfg.frame_rows, cfg.frame_cols, 3), dtype=np.uint8)
    frame[:] = policy.background

    half = 0.5 * cfg.lane_thickness
    for lane in scene.lanes:
        pts = np.asarray(lane.points, dtype=float)
        pf, pl = world_to_ego(ego, pts[:, 0], pts[:, 1])
        pe = np.stack([pf, pl], axis=1)
        for p, q in zip(pe[:-1], pe[1:]):
            # cheap cull: segment entirely outside the window disc
            if _segment_point_distance(p, q) > reach + half:
                continue
            frame[_segment_distance(fwd, left, p, q) <= half] = policy.lane

    for agent in scene.agents:
        if agent.is_ego:
            continue
        box = agent.at(t)
        if box is None:
            continue
        if agent.agent_id not in colors:
            raise MissingColorAssignment(agent.agent_id)
        cx, cy = world_to_ego(ego, box.center.x, box.center.y)
        if math.hypot(cx, cy) > reach + 0.5 * math.hypot(box.length, box.width):
            continue
        m = _box_mask(fwd, left, float(cx), float(cy), box.center.heading - ego.heading, box.length, box.width)
        frame[m] = colors[agent.agent_id]

    ebox = ego_track.at(t)
    frame[_box_mask(fwd, left, 0.0, 0.0, 0.0, ebox.length, ebox.width)] = policy.ego

    radius = 0.5 * cfg.light_diameter
    for light in scene.lights:
        color = policy.light_color(light.at(t) or "")
        if color is None:
            continue
        cx, cy = world_to_ego(ego, *light.position)
        if math.hypot(cx, cy) > reach + radius:
            continue
        frame[np.hypot(fwd - cx, left - cy) <= radius] = color
    return frame


def _segment_point_distance(p, q, o=(0.0, 0.0)):
    o = np.asarray(o, dtype=float)
    d = q - p
    dd = float(d @ d)
    t = 0.0 if dd == 0 else min(1.0, max(0.0, float((o - p) @ d) / dd))
    return float(np.hypot(*(p + t * d - o)))


# --------------------------------------------------------------------------
# videos

@dataclass
class Video:
    frames: np.ndarray  # (T, rows, cols, 3) uint8
    manifest: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.frames)


def make_manifest(cfg: RasterConfig, policy: ColorPolicy, source: str, num_frames: int) -> dict:
    return {
        "frame_rate_hz": cfg.frame_rate,
        "window_m": [cfg.window_length, cfg.window_width],
        "frame_px": [cfg.frame_rows, cfg.frame_cols],
        "scale_px_per_m": [cfg.scale_row, cfg.scale_col],
        "color_policy": policy.to_dict(),
        "source": source,
        "num_frames": num_frames,
    }


def assign_colors(scene: Scene, seed: int, policy: ColorPolicy = ColorPolicy()) -> dict[str, ColorRGB]:
    """One color per non-ego agent, drawn in scene order."""
    rng = np.random.default_rng(seed)
    return {a.agent_id: sample_agent_color(rng, policy) for a in scene.agents if not a.is_ego}


def rasterize_scene(scene: Scene, cfg: RasterConfig = RasterConfig(), seed: int = 0,
                    policy: ColorPolicy = ColorPolicy()) -> Video:
    colors = assign_colors(scene, seed, policy)
    if not math.isclose(cfg.frame_rate, scene.frame_rate):
        cfg = RasterConfig(**{**asdict(cfg), "frame_rate": scene.frame_rate})
    frames = np.stack([render_frame(scene, t, cfg, policy, colors) for t in range(scene.num_timesteps)])
    return Video(frames, make_manifest(cfg, policy, scene.scene_id, len(frames)))


def config_from_manifest(manifest: dict | None, base: RasterConfig = RasterConfig()) -> RasterConfig:
    if not manifest:
        return base
    kw = asdict(base)
    if "frame_rate_hz" in manifest:
        kw["frame_rate"] = float(manifest["frame_rate_hz"])
    if "window_m" in manifest:
        kw["window_length"], kw["window_width"] = map(float, manifest["window_m"])
    if "frame_px" in manifest:
        kw["frame_rows"], kw["frame_cols"] = map(int, manifest["frame_px"])
    return RasterConfig(**kw)


def frame_name(i: int) -> str:
    return f"frame_{i:06d}.png"


def write_video(video: Video, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for old in out.glob("frame_*.png"):
        old.unlink()
    for i, frame in enumerate(video.frames):
        Image.fromarray(frame, mode="RGB").save(out / frame_name(i), optimize=False)
    (out / "manifest.json").write_text(json.dumps(video.manifest, indent=2) + "\n", encoding="utf-8")
    return out


def read_video(video_dir: str | Path) -> Video:
    """Load a video directory; missing manifest falls back to default raster settings."""
    vdir = Path(video_dir)
    files = sorted(vdir.glob("frame_*.png"))
    mpath = vdir / "manifest.json"
    if mpath.exists():
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    else:
        log.warning("%s: no manifest.json, assuming default frame rate and scale", vdir)
        cfg = RasterConfig()
        manifest = make_manifest(cfg, ColorPolicy(), "generated", len(files))
    frames = []
    for f in files:
        try:
            with Image.open(f) as im:
                frames.append(np.asarray(im.convert("RGB"), dtype=np.uint8))
        except Exception as exc:  # PIL raises a zoo of types for damaged files
            raise VideoReadError(f"{f}: unreadable frame ({exc})") from exc
    if not frames:
        cfg = config_from_manifest(manifest)
        return Video(np.zeros((0, cfg.frame_rows, cfg.frame_cols, 3), np.uint8), manifest)
    shapes = {fr.shape for fr in frames}
    if len(shapes) != 1:
        raise VideoReadError(f"{vdir}: frames have mixed shapes {sorted(shapes)}")
    return Video(np.stack(frames), manifest)
