"""Stage wiring shared by the CLI and the round-trip evaluation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .config import PipelineConfig
from .detector import LIGHT_CATEGORIES, DetectedObject, detect_video
from .metrics import video_samples
from .raster import Video, config_from_manifest
from .scene import RasterConfig
from .tracker import EgoSpeedSeries, Track, read_detections, read_tracks, track_video, write_detections, write_tracks


@dataclass
class Extraction:
    detections: list[list[DetectedObject]]
    tracks: list[Track]
    ego: EgoSpeedSeries
    raster: RasterConfig
    source: str = ""


def extract_video(video: Video, cfg: PipelineConfig = PipelineConfig()) -> Extraction:
    raster = config_from_manifest(video.manifest, cfg.raster)
    dets = detect_video(video.frames, cfg.detector, raster.scales)
    tracks, ego = track_video(dets, cfg.tracker, raster.frame_rate, raster.scales, raster.center)
    return Extraction(dets, tracks, ego, raster, str(video.manifest.get("source", "")))


def extraction_samples(ext: Extraction, cfg: PipelineConfig = PipelineConfig()) -> dict[str, list[float]]:
    return video_samples(ext.detections, ext.tracks, ext.ego, ext.raster.scales, ext.raster.center,
                         cfg.tracker.light_ahead_m)


def write_extraction(ext: Extraction, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_detections(ext.detections, out / "detections.jsonl")
    write_tracks(ext.tracks, ext.ego, out, ext.raster.scales, ext.raster.center, ext.detections)
    info = {
        "source": ext.source,
        "num_frames": len(ext.detections),
        "frame_rate_hz": ext.raster.frame_rate,
        "window_m": [ext.raster.window_length, ext.raster.window_width],
        "frame_px": [ext.raster.frame_rows, ext.raster.frame_cols],
        "num_tracks": len(ext.tracks),
        "num_light_tracks": sum(t.category in LIGHT_CATEGORIES for t in ext.tracks),
    }
    (out / "extraction.json").write_text(json.dumps(info, indent=2) + "\n", encoding="utf-8")
    return out


def is_extraction_dir(path: str | Path) -> bool:
    p = Path(path)
    return (p / "detections.jsonl").exists() and (p / "tracks.json").exists()


def read_extraction(out_dir: str | Path, base: RasterConfig = RasterConfig()) -> Extraction:
    out = Path(out_dir)
    info_path = out / "extraction.json"
    info = json.loads(info_path.read_text(encoding="utf-8")) if info_path.exists() else {}
    raster = config_from_manifest(info, base)
    dets = read_detections(out / "detections.jsonl", info.get("num_frames"))
    tracks, ego = read_tracks(out, dets)
    return Extraction(dets, tracks, ego, raster, info.get("source", ""))
