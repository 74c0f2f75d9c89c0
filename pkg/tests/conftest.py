import numpy as np
import pytest

from bevtraj.raster import ColorPolicy, render_frame
from bevtraj.scene import AgentTrack, OrientedBox, Pose2D, RasterConfig, Scene, TrafficLightTrack


def box(x, y, heading=0.0, length=4.5, width=2.0):
    return OrientedBox(Pose2D(x, y, heading), length, width)


def track(agent_id, states, is_ego=False):
    """``states``: {t: (x, y[, heading[, length, width]])}."""
    return AgentTrack(agent_id, is_ego, tuple((t, box(*s)) for t, s in sorted(states.items())))


def static_scene(n=1, agents=(), lights=(), ego=(0.0, 0.0, 0.0, 4.5, 2.0), scene_id="s"):
    """Ego parked at ``ego``; ``agents`` are {id: (x, y, ...)} held for all timesteps."""
    tracks = [track("ego", {t: ego for t in range(n)}, is_ego=True)]
    for aid, s in dict(agents).items():
        tracks.append(track(aid, {t: s for t in range(n)}))
    lts = tuple(TrafficLightTrack(lid, pos, tuple((t, sig) for t in range(n))) for lid, pos, sig in lights)
    return Scene(scene_id, 10.0, n, (), lts, tuple(tracks))


def render(scene, t=0, colors=None, cfg=RasterConfig(), policy=ColorPolicy()):
    return render_frame(scene, t, cfg, policy, colors or {})


@pytest.fixture
def white():
    return np.full((96, 54, 3), 255, dtype=np.uint8)
