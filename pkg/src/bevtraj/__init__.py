"""Bird's-eye-view occupancy-grid videos: rasterize scenes, extract trajectories, compare statistics."""

from .scene import RasterConfig, Scene, image_to_world, load_scene, save_scene, validate_scene, world_to_image
from .synthetic import GenParams, generate_corpus, generate_scene
from .raster import ColorPolicy, Video, rasterize_scene, read_video, write_video
from .detector import DetectorConfig, DetectedObject, detect_frame
from .tracker import TrackerConfig, Track, match_frames, track_video
from .metrics import CorpusStats, compare, compare_histograms, histogram

__version__ = "0.1.0"

__all__ = [
    "RasterConfig", "Scene", "image_to_world", "load_scene", "save_scene", "validate_scene", "world_to_image",
    "GenParams", "generate_corpus", "generate_scene",
    "ColorPolicy", "Video", "rasterize_scene", "read_video", "write_video",
    "DetectorConfig", "DetectedObject", "detect_frame",
    "TrackerConfig", "Track", "match_frames", "track_video",
    "CorpusStats", "compare", "compare_histograms", "histogram",
]
