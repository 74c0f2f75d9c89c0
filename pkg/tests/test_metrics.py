import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bevtraj.config import PipelineConfig
from bevtraj.detector import detect_frame
from bevtraj.metrics import (METRICS, CorpusStats, EmptyBinSpec, EmptySampleSet, compare, compare_histograms,
                             compare_stats, default_bins, histogram, min_center_distance, min_edge_distance,
                             pixel_gap, size_distribution, traffic_density, unknown_count, write_svgs)
from bevtraj.pipeline import extract_video, extraction_samples
from bevtraj.raster import rasterize_scene
from bevtraj.scene import Scene, TrafficLightTrack

from conftest import render, static_scene, track

BLUE = (40, 90, 200)
PURPLE = (150, 60, 190)
OLIVE = (90, 160, 60)


def detect(scene, colors=None, n=1):
    return [detect_frame(render(scene, t, colors), frame_index=t) for t in range(n)]


def drop_ego(frames):
    return [[d for d in f if d.category != "ego"] for f in frames]


# histograms

def test_histogram_single_bin():
    h = histogram([1, 1, 1], [0, 2])
    assert h.densities.tolist() == [0.5]
    assert h.n_samples == 3


def test_histogram_empty():
    h = histogram([], [0, 1, 2])
    assert h.densities.tolist() == [0.0, 0.0] and h.n_samples == 0


def test_histogram_uniform():
    x = np.random.default_rng(0).uniform(0, 10, 100_000)
    h = histogram(x, np.arange(11))
    assert np.all(np.abs(h.densities - 0.1) <= 0.01)


def test_histogram_bad_edges():
    with pytest.raises(EmptyBinSpec):
        histogram([1.0], [0.0])
    with pytest.raises(EmptyBinSpec):
        histogram([1.0], [0.0, 2.0, 1.0])


def test_out_of_range_samples_dropped():
    h = histogram([-5, 0.5, 1.5, 99], [0, 1, 2])
    assert h.n_samples == 2 and h.n_dropped == 2
    assert float(np.sum(h.densities * h.widths)) == pytest.approx(1.0)


# per-frame metrics

def test_lone_light_size_near_pi():
    frames = []
    for k, f in enumerate(np.linspace(3.0, 8.0, 12)):
        sc = static_scene(1, lights=[("L", (float(f), -2.0 + 0.3 * k), "red")])
        frames += drop_ego(detect(sc))
    h = histogram(size_distribution(frames), default_bins()["agent_size_m2"])
    lo, hi = h.mode_bin()
    assert lo <= math.pi < hi or abs(0.5 * (lo + hi) - math.pi) <= 1.0


def test_large_vehicle_size():
    frames = []
    for k, f in enumerate(np.linspace(-4.0, 4.0, 9)):
        sc = static_scene(1, agents={"a": (float(f), 3.0 + 0.05 * k, 0.0, 5.0, 3.0)})
        frames += drop_ego(detect(sc, {"a": BLUE}))
    sizes = size_distribution(frames)
    assert len(sizes) == 9
    h = histogram(sizes, default_bins()["agent_size_m2"])
    lo, hi = h.mode_bin()
    assert abs(0.5 * (lo + hi) - 15.0) <= 1.5
    assert abs(np.mean(sizes) - 15.0) <= 1.5


def test_size_empty():
    assert size_distribution([]) == []


def test_min_center_two_vehicles():
    frames = detect(static_scene(1, agents={"a": (6.0, 0.0)}), {"a": BLUE})
    (d,) = min_center_distance(frames)
    assert d == pytest.approx(6.0, abs=0.3)
    assert min_center_distance(detect(static_scene(1))) == []


def test_min_center_collinear():
    agents = {"a": (-7.0, 3.2), "b": (-2.0, 3.2), "c": (5.0, 3.2)}
    frames = drop_ego(detect(static_scene(1, agents=agents), {"a": BLUE, "b": PURPLE, "c": OLIVE}))
    (d,) = min_center_distance(frames)
    assert d == pytest.approx(5.0, abs=0.3)


def test_density_counts():
    assert traffic_density([[]]) == [0]
    sc = static_scene(1, agents={"a": (-6.0, 0.0)}, lights=[("L", (7.0, -1.0), "green")])
    frames = detect(sc, {"a": BLUE})
    assert traffic_density(frames) == [3]
    frame = render(sc, 0, {"a": BLUE})
    frame[2:7, 2:7] = PURPLE  # about 1 m^2: too small for a vehicle
    dets = [detect_frame(frame)]
    assert traffic_density(dets) == [3]
    assert unknown_count(dets) == [1]
    assert unknown_count(frames) == [0]


def test_pixel_gap_lateral():
    a = np.argwhere(np.ones((10, 5), bool)) + (40, 10)
    b = np.argwhere(np.ones((10, 5), bool)) + (40, 25)  # 10 empty columns in between
    assert pixel_gap(a, b) == pytest.approx(10 / 5.4)
    assert pixel_gap(a, b) == pytest.approx(1.85, abs=0.01)
    assert min_edge_distance([[a, b], [a]]) == [pytest.approx(10 / 5.4)]


def test_adjacent_pixel_sets_touch():
    a = np.array([[5, 5]])
    b = np.array([[5, 6]])
    assert pixel_gap(a, b) == 0.0


# dynamics and ego speed through the full pipeline

def _moving_scene(ego_v, agent=None, lights=(), n=60, scene_id="m", lane=3.7):
    ego = track("ego", {t: (ego_v * t / 10.0, 0.0) for t in range(n)}, is_ego=True)
    agents = [ego]
    if agent is not None:
        x0, v = agent
        agents.append(track("a", {t: (x0 + v * t / 10.0, lane) for t in range(n)}))
    lts = tuple(TrafficLightTrack(lid, pos, tuple((t, sig) for t in range(n))) for lid, pos, sig in lights)
    return Scene(scene_id, 10.0, n, (), lts, tuple(agents))


def _samples(scene, seed=0):
    cfg = PipelineConfig()
    return extraction_samples(extract_video(rasterize_scene(scene, seed=seed), cfg), cfg)


def test_co_moving_speed_zero():
    s = _samples(_moving_scene(6.0, agent=(-6.0, 6.0), n=30))
    assert s["speed_rel"] and max(abs(v) for v in s["speed_rel"]) <= 1e-6


def test_overtaking_agent():
    s = _samples(_moving_scene(5.0, agent=(-9.0, 8.0), n=60))
    assert len(s["speed_rel"]) >= 20
    assert all(abs(v - 10.8) <= 1.8 for v in s["speed_rel"])


def test_green_pass_speed():
    lights = [(f"L{k}", (15.0 * k, -1.0), "green") for k in range(1, 5)]
    s = _samples(_moving_scene(8.0, lights=lights, n=80))
    assert len(s["ego_speed_at_green"]) >= 20
    assert all(abs(v - 28.8) <= 2.0 for v in s["ego_speed_at_green"])
    assert s["ego_speed_at_red"] == []


def test_no_lights_no_light_samples():
    s = _samples(_moving_scene(8.0, n=20))
    assert s["ego_speed_at_green"] == [] and s["ego_speed_at_red"] == []


# comparison

def test_compare_examples():
    d = compare([0, 0, 0], [0, 0, 0])
    assert (d.ks, d.wasserstein) == (0.0, 0.0)
    d = compare([0, 0, 0], [1, 1, 1])
    assert (d.ks, d.wasserstein) == (1.0, 1.0)
    d = compare([0, 1], [0, 2])
    assert (d.ks, d.wasserstein) == (0.5, 0.5)


def test_compare_empty():
    with pytest.raises(EmptySampleSet):
        compare([], [1.0])


def test_compare_matches_scipy():
    from scipy.stats import ks_2samp, wasserstein_distance
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=300), rng.normal(0.3, 1.2, size=500)
    d = compare(a, b)
    assert d.ks == pytest.approx(ks_2samp(a, b).statistic, abs=1e-12)
    assert d.wasserstein == pytest.approx(wasserstein_distance(a, b), abs=1e-12)


def test_histogram_comparison_point_masses():
    edges = [-0.5, 0.5, 1.5]
    d = compare_histograms(histogram([0, 0], edges), histogram([1, 1], edges))
    assert d.ks == pytest.approx(1.0)
    assert d.wasserstein == pytest.approx(1.0)


def test_histogram_comparison_needs_same_edges():
    with pytest.raises(ValueError):
        compare_histograms(histogram([0.5], [0, 1]), histogram([0.5], [0, 2]))


floats = st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=60)


@settings(max_examples=200, deadline=None)
@given(floats, floats)
def test_compare_properties(a, b):
    d = compare(a, b)
    r = compare(b, a)
    assert 0.0 <= d.ks <= 1.0
    assert d.wasserstein >= 0.0
    assert d.ks == r.ks and d.wasserstein == pytest.approx(r.wasserstein, abs=1e-9)
    self_d = compare(a, list(reversed(a)))
    assert (self_d.ks, self_d.wasserstein) == (0.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-30, 30, allow_nan=False), min_size=1, max_size=200))
def test_histogram_integrates_to_one(x):
    h = histogram(x, default_bins()["speed_rel"])
    if h.n_samples:
        assert abs(float(np.sum(h.densities * h.widths)) - 1.0) <= 1e-9
    assert np.all(h.densities >= 0)


# corpus statistics

def _stats(seed):
    rng = np.random.default_rng(seed)
    return CorpusStats.from_samples({m: rng.uniform(0, 10, 200).tolist() for m in METRICS})


def test_stats_save_load(tmp_path):
    s = _stats(1)
    s.save(tmp_path)
    back = CorpusStats.load(tmp_path)
    for m in METRICS:
        assert np.array_equal(back.histograms[m].densities, s.histograms[m].densities)
    res = compare_stats(s, back)
    assert all(r["ks"] == 0.0 and r["wasserstein"] == 0.0 for r in res["metrics"].values())


def test_compare_stats_incomparable():
    a = _stats(1)
    b = CorpusStats.from_samples({m: [] for m in METRICS})
    res = compare_stats(a, b)
    assert sorted(res["incomparable"]) == sorted(METRICS) and res["metrics"] == {}


def test_svgs(tmp_path):
    paths = write_svgs(tmp_path, {"a": _stats(1), "b": _stats(2)})
    assert len(paths) == len(METRICS)
    for p in paths:
        assert p.read_text().startswith("<svg")
