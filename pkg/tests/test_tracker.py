import itertools
import math

import numpy as np
import pytest

from bevtraj.detector import DetectedObject, detect_frame
from bevtraj.raster import assign_colors
from bevtraj.scene import Scene
from bevtraj.tracker import (INFEASIBLE, Track, TrackerConfig, TrackTooShort, cost_matrix, estimate_ego_speed,
                             kinematics, match_frames, moving_average, pairwise_cost, track_video)

from conftest import render, static_scene, track

BLUE = (40.0, 90.0, 200.0)
OCHRE = (200.0, 180.0, 40.0)


def det(frame, row, col, cat="agent", color=BLUE, h=10, w=5):
    r0, c0 = int(row - h / 2), int(col - w / 2)
    return DetectedObject(frame, cat, (float(row), float(col)), h * w, h * w / 25.92, color,
                          (r0, c0, r0 + h - 1, c0 + w - 1), 1.0, 0.7, np.zeros((0, 2), dtype=int))


def test_cost_examples():
    a = det(0, 40, 20)
    assert pairwise_cost(a, det(1, 40, 20)) == 0.0
    assert pairwise_cost(a, det(1, 53, 20)) == INFEASIBLE
    assert pairwise_cost(a, det(1, 46, 20)) == pytest.approx(1.0 * 6 / 12)
    assert pairwise_cost(a, det(1, 40, 20, cat="light_red")) == INFEASIBLE


def test_cost_independent_evaluation():
    a, b = det(0, 40, 20, color=BLUE, h=10, w=5), det(1, 43, 24, color=OCHRE, h=8, w=6)
    cfg = TrackerConfig()
    color = math.sqrt(sum((p - q) ** 2 for p, q in zip(BLUE, OCHRE))) / math.sqrt(3 * 255 ** 2)
    want = 1.0 * 5 / 12 + 0.5 * color + 0.3 * abs(math.log((5 / 10) / (6 / 8)))
    assert pairwise_cost(a, b, cfg) == pytest.approx(want, rel=1e-12)


def test_identical_single_object():
    res = match_frames([det(0, 40, 20)], [det(1, 40, 20)])
    assert res.pairs == [(0, 0)] and not res.unmatched_prev and not res.unmatched_curr


def test_color_keeps_identity_through_exchange():
    prev = [det(0, 40, 20, color=BLUE), det(0, 40, 22, color=OCHRE)]
    curr = [det(1, 40, 22, color=BLUE), det(1, 40, 20, color=OCHRE)]
    cost = cost_matrix(prev, curr)
    totals = {p: cost[0, p[0]] + cost[1, p[1]] for p in itertools.permutations(range(2))}
    best = min(totals, key=totals.get)
    assert best == (0, 1)  # the color-consistent pairing is cheaper here
    assert match_frames(prev, curr).pairs == [(0, best[0]), (1, best[1])]


def test_empty_prev_starts_tracks():
    curr = [det(0, 20, 10), det(0, 50, 30), det(0, 80, 40)]
    res = match_frames([], curr)
    assert res.pairs == [] and res.unmatched_curr == [0, 1, 2]
    tracks, _ = track_video([curr])
    assert len(tracks) == 3


def test_static_scene_tracks_span_all_frames():
    n = 12
    sc = static_scene(n, agents={"a": (6.0, 0.0), "b": (-6.0, 3.7)}, lights=[("L", (8.0, -3.0), "green")])
    colors = {"a": (40, 90, 200), "b": (150, 60, 190)}
    dets = [detect_frame(render(sc, t, colors), frame_index=t) for t in range(n)]
    tracks, _ = track_video(dets)
    assert len(tracks) == 4
    assert all(len(t.detections) == n for t in tracks)


def test_agent_leaving_window_ends_track():
    n = 20
    ego = track("ego", {t: (0.0, 0.0) for t in range(n)}, is_ego=True)
    a = track("a", {t: (5.0 + 1.0 * t, 0.0) for t in range(n)})
    sc = Scene("leave", 10.0, n, agents=(ego, a))
    colors = assign_colors(sc, seed=0)
    dets = [detect_frame(render(sc, t, colors), frame_index=t) for t in range(n)]
    # last frame with any part of the agent in view: rear bumper still under 10 m ahead
    k = max(t for t in range(n) if 5.0 + t - 2.25 < 10.0)
    tracks, _ = track_video(dets)
    (agent,) = [t for t in tracks if t.category == "agent"]
    assert agent.frames[0] == 0
    assert agent.frames[-1] <= k + TrackerConfig().max_coast_frames


def test_merge_event_at_most_one_switch():
    def pair(f):
        return [det(f, 40, 20, color=BLUE), det(f, 40, 28, color=OCHRE)]
    mixed = tuple((p + q) / 2 for p, q in zip(BLUE, OCHRE))
    frames = [pair(0), pair(1), pair(2), [det(3, 40, 24, color=mixed, w=13)], pair(4), pair(5)]
    tracks, _ = track_video(frames)
    owner = {id(d): t.track_id for t in tracks for d in t.detections}
    switches = sum(owner[id(frames[2][i])] != owner[id(frames[4][i])] for i in range(2))
    assert switches <= 1


def _moving_track(rows, cat="agent", col=27.0):
    return Track(0, cat, [det(t, r, col, cat=cat) for t, r in enumerate(rows)])


def test_stationary_agent_zero_speed():
    trk = kinematics(_moving_track([30.0] * 15))
    assert max(abs(v) for v in trk.speed_rel.values()) <= 1e-9


def test_unit_conversion_speed():
    trk = kinematics(_moving_track([60.0 - t for t in range(20)]), frame_rate=10.0, window=7)
    for v in trk.speed_rel.values():
        assert v == pytest.approx(10 / 4.8, abs=1e-9)
    assert 10 / 4.8 * 3.6 == pytest.approx(7.5)


def test_constant_velocity_zero_accel():
    trk = kinematics(_moving_track([70.0 - 1.5 * t for t in range(25)]), window=7)
    inner = sorted(trk.accel_rel)[3:-3]
    assert max(abs(trk.accel_rel[t]) for t in inner) <= 1e-9


def test_short_track():
    with pytest.raises(TrackTooShort):
        kinematics(_moving_track([30.0]))


def test_moving_average_shrinks_symmetrically():
    x = np.array([0.0, 1.0, 4.0, 9.0, 16.0])
    out = moving_average(x, 5)
    assert out[0] == 0.0
    assert out[1] == pytest.approx((0 + 1 + 4) / 3)
    assert out[2] == pytest.approx(30 / 5)


@pytest.mark.parametrize("method", ["rigid", "magnitude"])
def test_ego_stopped(method):
    light = _moving_track([30.0] * 10, cat="light_red")
    ego = estimate_ego_speed([light], cfg=TrackerConfig(ego_speed_method=method))
    assert all(v == pytest.approx(0.0, abs=1e-9) for v in ego.speed.values())


@pytest.mark.parametrize("method", ["rigid", "magnitude"])
def test_ego_speed_from_one_light(method):
    light = _moving_track([10.0 + 2 * t for t in range(15)], cat="light_green")
    ego = estimate_ego_speed([light], cfg=TrackerConfig(ego_speed_method=method))
    assert len(ego.speed) == 15
    for v in ego.speed.values():
        assert v == pytest.approx(2 * 10 / 4.8, abs=1e-6)


@pytest.mark.parametrize("method", ["rigid", "magnitude"])
def test_ego_speed_two_lights_mean(method):
    a = _moving_track([10.0 + 2.0 * t for t in range(12)], cat="light_green")
    b = Track(1, "light_red", [det(t, 5.0 + 2.2 * t, 27.0, cat="light_red") for t in range(12)])
    ego = estimate_ego_speed([a, b], cfg=TrackerConfig(ego_speed_method=method))
    want = 0.5 * (2.0 + 2.2) * 10 / 4.8
    for v in ego.speed.values():
        assert v == pytest.approx(want, abs=1e-6)


def test_config_validation():
    with pytest.raises(ValueError):
        TrackerConfig(smoothing_window=4)
    with pytest.raises(ValueError):
        TrackerConfig(ego_speed_method="flow")
