import math

import numpy as np
import pytest

from bevtraj import colors as pal
from bevtraj.detector import DetectorConfig, mask_lights, mask_vehicles, to_hsv
from bevtraj.raster import (ColorPolicy, EmptySamplingRegion, MissingColorAssignment, assign_colors,
                            rasterize_scene, read_video, render_frame, sample_agent_color, write_video)
from bevtraj.scene import RasterConfig, Scene
from bevtraj.synthetic import GenParams, generate_scene

from conftest import render, static_scene, track


def _rect_pixels(length, width, cfg=RasterConfig()):
    """Pixel centers inside an axis-aligned box at the image center."""
    rows = np.arange(cfg.frame_rows) + 0.5
    cols = np.arange(cfg.frame_cols) + 0.5
    r_in = np.abs(rows - 48.0) <= 0.5 * length * cfg.scale_row
    c_in = np.abs(cols - 27.0) <= 0.5 * width * cfg.scale_col
    return int(r_in.sum() * c_in.sum())


def test_sampled_color_avoids_reserved_hues():
    c = sample_agent_color(np.random.default_rng(3))
    h, s, v = pal.rgb_to_hsv(c)
    for band in pal.LIGHT_HUE_BANDS.values():
        for edge in band:
            assert pal.hue_distance(h, edge) >= 10.0 or not pal.hue_in(h, band)
    for ref in (0.0, 60.0, 120.0):
        assert pal.hue_distance(h, ref) >= 10.0


def test_many_draws_never_look_reserved():
    rng = np.random.default_rng(0)
    cols = np.array([sample_agent_color(rng) for _ in range(10_000)], dtype=np.uint8)
    tile = cols.reshape(100, 100, 3)
    hsv = to_hsv(tile)
    cfg = DetectorConfig()
    assert not any(m.any() for m in mask_lights(hsv, cfg).values())
    ego, agents = mask_vehicles(hsv, cfg)
    assert not ego.any()
    assert agents.all()  # none read as background or lane gray


def test_contradictory_policy():
    bad = ColorPolicy(agent_hues=((345.0, 15.0),), hue_margin=0.0)
    with pytest.raises(EmptySamplingRegion):
        bad.effective_region()


def test_ego_only_frame_is_centered_black_rectangle():
    frame = render(static_scene(1, ego=(0.0, 0.0, 0.0, 4.5, 2.0)))
    black = np.all(frame == 0, axis=-1)
    assert black.sum() == _rect_pixels(4.5, 2.0)
    assert abs(black.sum() - 4.5 * 4.8 * 2.0 * 5.4) <= 0.1 * 4.5 * 4.8 * 2.0 * 5.4
    r, c = np.nonzero(black)
    assert (r.mean() + 0.5, c.mean() + 0.5) == pytest.approx((48.0, 27.0))
    assert np.all(frame[~black] == 255)


def test_light_is_filled_ellipse():
    sc = static_scene(1, lights=[("L", (7.0, 0.0), "green")])
    frame = render(sc)
    lit = np.all(frame == pal.LIGHT_RGB["green"], axis=-1)
    assert abs(lit.sum() - math.pi * 4.8 * 5.4) <= 0.1 * math.pi * 4.8 * 5.4


def test_light_overwrites_agent():
    sc = static_scene(1, agents={"a": (6.0, 0.0)}, lights=[("L", (6.0, 0.0), "red")])
    frame = render(sc, colors={"a": pal.ColorRGB(40, 90, 200)})
    r, c = 48 - 6.0 * 4.8, 27.0
    assert tuple(frame[int(r), int(c)]) == pal.LIGHT_RGB["red"]


def test_unknown_signal_not_drawn():
    frame = render(static_scene(1, lights=[("L", (6.0, 0.0), "unknown")]))
    assert np.all(frame[:30] == 255)


def test_missing_color_assignment():
    with pytest.raises(MissingColorAssignment):
        render(static_scene(1, agents={"a": (6.0, 0.0)}))


def test_video_counts_and_determinism(tmp_path):
    sc = generate_scene(GenParams(seed=2))
    v1 = rasterize_scene(sc, seed=4)
    v2 = rasterize_scene(sc, seed=4)
    assert len(v1) == 150
    assert v1.manifest["frame_rate_hz"] == sc.frame_rate
    assert np.array_equal(v1.frames, v2.frames)
    out = write_video(v1, tmp_path / "v")
    assert len(list(out.glob("frame_*.png"))) == 150
    back = read_video(out)
    assert np.array_equal(back.frames, v1.frames)


def test_agent_color_present_only_while_agent_exists():
    ego = track("ego", {t: (0.0, 0.0) for t in range(60)}, is_ego=True)
    a = track("a", {t: (5.0, 0.0) for t in range(10, 51)})
    sc = Scene("p", 10.0, 60, agents=(ego, a))
    colors = assign_colors(sc, seed=1)
    video = rasterize_scene(sc, seed=1)
    seen = [bool(np.all(f == colors["a"], axis=-1).any()) for f in video.frames]
    assert [t for t, s in enumerate(seen) if s] == list(range(10, 51))


def test_missing_manifest_defaults(tmp_path):
    v = rasterize_scene(static_scene(3), seed=0)
    out = write_video(v, tmp_path / "v")
    (out / "manifest.json").unlink()
    back = read_video(out)
    assert back.manifest["frame_rate_hz"] == RasterConfig().frame_rate
    assert len(back) == 3
