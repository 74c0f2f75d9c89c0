"""Distributional scene statistics and two-corpus comparison."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .detector import LIGHT_CATEGORIES, VEHICLE_CATEGORIES, DetectedObject
from .tracker import EgoSpeedSeries, Track

MPS_TO_KMH = 3.6

METRICS = (
    "agent_size_m2",
    "min_center_dist_m",
    "traffic_density",
    "unknown_per_frame",
    "speed_rel",
    "accel_rel",
    "min_edge_dist_m",
    "ego_speed_at_green",
    "ego_speed_at_red",
)

UNITS = {
    "agent_size_m2": "m^2",
    "min_center_dist_m": "m",
    "traffic_density": "objects/frame",
    "unknown_per_frame": "objects/frame",
    "speed_rel": "km/h",
    "accel_rel": "m/s^2",
    "min_edge_dist_m": "m",
    "ego_speed_at_green": "km/h",
    "ego_speed_at_red": "km/h",
}


class EmptyBinSpec(ValueError):
    pass


class EmptySampleSet(ValueError):
    pass


class EmptyCorpus(ValueError):
    pass


def _edges(lo, hi, step):
    n = int(round((hi - lo) / step))
    return [lo + i * step for i in range(n + 1)]


def default_bins() -> dict[str, list[float]]:
    return {
        "agent_size_m2": _edges(0.0, 30.0, 1.0),
        "min_center_dist_m": _edges(0.0, 20.0, 0.5),
        "traffic_density": _edges(-0.5, 30.5, 1.0),
        "unknown_per_frame": _edges(-0.5, 10.5, 1.0),
        "speed_rel": _edges(-61.0, 61.0, 2.0),
        "accel_rel": _edges(-6.125, 6.125, 0.25),
        "min_edge_dist_m": _edges(0.0, 20.0, 0.5),
        "ego_speed_at_green": _edges(0.0, 60.0, 2.0),
        "ego_speed_at_red": _edges(0.0, 60.0, 2.0),
    }


# --------------------------------------------------------------------------
# histograms

@dataclass
class Histogram:
    bin_edges: np.ndarray
    densities: np.ndarray
    n_samples: int
    n_dropped: int = 0

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def mass(self) -> np.ndarray:
        return self.densities * self.widths

    def cdf_at_edges(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.mass)])

    def mode_bin(self) -> tuple[float, float]:
        k = int(np.argmax(self.densities))
        return float(self.bin_edges[k]), float(self.bin_edges[k + 1])

    def to_dict(self) -> dict:
        return {
            "bin_edges": [float(e) for e in self.bin_edges],
            "densities": [float(d) for d in self.densities],
            "n_samples": self.n_samples,
            "n_dropped": self.n_dropped,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Histogram":
        return cls(np.asarray(d["bin_edges"], float), np.asarray(d["densities"], float),
                   int(d["n_samples"]), int(d.get("n_dropped", 0)))


def histogram(samples, bin_edges) -> Histogram:
    """Probability-density histogram; samples outside the edges are counted as dropped.

    ``n_samples`` counts the binned samples the densities integrate over.
    """
    edges = np.asarray(bin_edges, dtype=float)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise EmptyBinSpec("bin edges must be strictly increasing with at least 2 entries")
    x = np.asarray(samples, dtype=float).ravel()
    x = x[np.isfinite(x)] if x.size else x
    inside = (x >= edges[0]) & (x <= edges[-1])
    counts, _ = np.histogram(x[inside], bins=edges)
    n = int(counts.sum())
    dens = counts / (n * np.diff(edges)) if n else np.zeros(len(edges) - 1)
    return Histogram(edges, dens, n, int(x.size - n))


# --------------------------------------------------------------------------
# per-frame metrics

def _is_vehicle(d: DetectedObject) -> bool:
    return d.category in VEHICLE_CATEGORIES


def size_distribution(detections) -> list[float]:
    return [d.area_m2 for frame in detections for d in frame if d.category != "unknown"]


def _centroid_m(d: DetectedObject, scales) -> tuple[float, float]:
    return d.centroid[0] / scales[0], d.centroid[1] / scales[1]


def min_center_distance(detections, scales: tuple[float, float] = (4.8, 5.4)) -> list[float]:
    out = []
    for frame in detections:
        pts = np.array([_centroid_m(d, scales) for d in frame if _is_vehicle(d)])
        if len(pts) < 2:
            continue
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        out.append(float(dist[np.triu_indices(len(pts), 1)].min()))
    return out


def traffic_density(detections) -> list[int]:
    return [sum(d.category != "unknown" for d in frame) for frame in detections]


def unknown_count(detections) -> list[int]:
    return [sum(d.category == "unknown" for d in frame) for frame in detections]


def _boundary(pixels: np.ndarray) -> np.ndarray:
    """Pixels with at least one 4-neighbour outside the set, in row-major order."""
    px = np.asarray(pixels, dtype=int).reshape(-1, 2)
    if len(px) == 0:
        return px
    lo = px.min(axis=0) - 1
    rc = px - lo
    grid = np.zeros(tuple(rc.max(axis=0) + 2), dtype=bool)
    grid[rc[:, 0], rc[:, 1]] = True
    inner = grid[1:-1, 1:-1] & grid[:-2, 1:-1] & grid[2:, 1:-1] & grid[1:-1, :-2] & grid[1:-1, 2:]
    edge = grid.copy()
    edge[1:-1, 1:-1] &= ~inner
    r, c = np.nonzero(edge)
    return np.stack([r, c], axis=1) + lo


def pixel_gap(a: np.ndarray, b: np.ndarray, scales: tuple[float, float] = (4.8, 5.4)) -> float:
    """Meters of free space between two pixel sets along the closest pair.

    Adjacent pixels are 0 apart; a run of k empty pixels between them is k
    pixels, converted per axis.
    """
    a, b = _boundary(a), _boundary(b)
    dr = np.abs(a[:, None, 0] - b[None, :, 0])
    dc = np.abs(a[:, None, 1] - b[None, :, 1])
    gr = np.maximum(dr - 1, 0) / scales[0]
    gc = np.maximum(dc - 1, 0) / scales[1]
    return float(np.hypot(gr, gc).min())


def min_edge_distance(frames_of_pixels, scales: tuple[float, float] = (4.8, 5.4)) -> list[float]:
    """Per frame with >= 2 vehicles, the smallest pixel gap between any two."""
    out = []
    for objs in frames_of_pixels:
        if len(objs) < 2:
            continue
        out.append(min(pixel_gap(objs[i], objs[j], scales)
                       for i in range(len(objs)) for j in range(i + 1, len(objs))))
    return out


def dynamics_distributions(tracks: list[Track], scales: tuple[float, float] = (4.8, 5.4)) -> dict[str, list[float]]:
    """Relative speed (km/h) and acceleration of non-ego vehicles, plus per-frame edge gaps."""
    speed, accel = [], []
    frames: dict[int, list[np.ndarray]] = {}
    for trk in tracks:
        if trk.category not in VEHICLE_CATEGORIES:
            continue
        for d in trk.detections:
            if d.category in VEHICLE_CATEGORIES:
                frames.setdefault(d.frame_index, []).append(d.pixels)
        if trk.category == "ego":
            continue
        for t in sorted(trk.speed_rel):
            speed.append(trk.speed_rel[t] * MPS_TO_KMH)
            accel.append(trk.accel_rel[t])
    edge = min_edge_distance([frames[t] for t in sorted(frames)], scales)
    return {"speed_rel": speed, "accel_rel": accel, "min_edge_dist_m": edge}


def light_conditioned_ego_speed(ego_speed: EgoSpeedSeries, light_tracks: list[Track],
                                scales: tuple[float, float] = (4.8, 5.4),
                                center: tuple[float, float] = (48.0, 27.0),
                                ahead_m: tuple[float, float] = (0.0, 10.0)) -> dict[str, list[float]]:
    """Ego speed (km/h), once per frame and color, at frames where a light of that color lies ahead within the window."""
    colors_at: dict[int, set[str]] = {}
    for trk in light_tracks:
        if trk.category not in LIGHT_CATEGORIES:
            continue
        color = trk.category.removeprefix("light_")
        for d in trk.detections:
            fwd = (center[0] - d.centroid[0]) / scales[0]
            if ahead_m[0] <= fwd <= ahead_m[1]:
                colors_at.setdefault(d.frame_index, set()).add(color)
    out = {c.removeprefix("light_"): [] for c in LIGHT_CATEGORIES}
    for t in sorted(colors_at):
        v = ego_speed.speed.get(t)
        if v is None:
            continue
        for color in sorted(colors_at[t]):
            out[color].append(v * MPS_TO_KMH)
    return out


def video_samples(detections, tracks: list[Track], ego: EgoSpeedSeries,
                  scales: tuple[float, float] = (4.8, 5.4), center: tuple[float, float] = (48.0, 27.0),
                  ahead_m: tuple[float, float] = (0.0, 10.0)) -> dict[str, list[float]]:
    """Every metric's samples for one extracted video."""
    dyn = dynamics_distributions(tracks, scales)
    lit = light_conditioned_ego_speed(ego, [t for t in tracks if t.category in LIGHT_CATEGORIES],
                                      scales, center, ahead_m)
    return {
        "agent_size_m2": size_distribution(detections),
        "min_center_dist_m": min_center_distance(detections, scales),
        "traffic_density": traffic_density(detections),
        "unknown_per_frame": unknown_count(detections),
        "speed_rel": dyn["speed_rel"],
        "accel_rel": dyn["accel_rel"],
        "min_edge_dist_m": dyn["min_edge_dist_m"],
        "ego_speed_at_green": lit["green"],
        "ego_speed_at_red": lit["red"],
    }


def merge_samples(parts) -> dict[str, list[float]]:
    out: dict[str, list[float]] = {m: [] for m in METRICS}
    for p in parts:
        for m in METRICS:
            out[m].extend(p.get(m, []))
    return out


# --------------------------------------------------------------------------
# corpus statistics

@dataclass
class CorpusStats:
    histograms: dict[str, Histogram] = field(default_factory=dict)

    @classmethod
    def from_samples(cls, samples: dict[str, list[float]], bins: dict | None = None) -> "CorpusStats":
        spec = {**default_bins(), **(bins or {})}
        return cls({m: histogram(samples.get(m, []), spec[m]) for m in METRICS if m in samples})

    def to_dict(self) -> dict:
        return {"metrics": {m: {"unit": UNITS.get(m, ""), **h.to_dict()} for m, h in self.histograms.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusStats":
        return cls({m: Histogram.from_dict(h) for m, h in d["metrics"].items()})

    def save(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "stats.json"]
        written[0].write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")
        for m, h in self.histograms.items():
            p = out / f"{m}.csv"
            with open(p, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["bin_left", "bin_right", "density"])
                for lo, hi, d in zip(h.bin_edges[:-1], h.bin_edges[1:], h.densities):
                    w.writerow([repr(float(lo)), repr(float(hi)), repr(float(d))])
            written.append(p)
        return written

    @classmethod
    def load(cls, path: str | Path) -> "CorpusStats":
        p = Path(path)
        if p.is_dir():
            p = p / "stats.json"
        return cls.from_dict(json.loads(p.read_text(encoding="utf-8")))


# --------------------------------------------------------------------------
# comparison

@dataclass(frozen=True)
class Divergence:
    ks: float
    wasserstein: float


def compare(a, b) -> Divergence:
    """Two-sample Kolmogorov-Smirnov statistic and 1-Wasserstein distance."""
    x = np.sort(np.asarray(a, dtype=float).ravel())
    y = np.sort(np.asarray(b, dtype=float).ravel())
    if x.size == 0 or y.size == 0:
        raise EmptySampleSet("both sample sets must be non-empty")
    grid = np.concatenate([x, y])
    grid.sort(kind="mergesort")
    fx = np.searchsorted(x, grid, side="right") / x.size
    fy = np.searchsorted(y, grid, side="right") / y.size
    diff = np.abs(fx - fy)
    ks = float(diff.max())
    w = float(np.sum(diff[:-1] * np.diff(grid)))
    return Divergence(ks, w)


def compare_histograms(a: Histogram, b: Histogram) -> Divergence:
    """KS and Wasserstein between two binned distributions on the same edges.

    Mass is taken as uniform within each bin, so the CDFs are piecewise
    linear and both distances are evaluated exactly under that model.
    """
    if a.n_samples == 0 or b.n_samples == 0:
        raise EmptySampleSet("both histograms must hold samples")
    if len(a.bin_edges) != len(b.bin_edges) or not np.allclose(a.bin_edges, b.bin_edges):
        raise ValueError("histograms use different bin edges")
    d = a.cdf_at_edges() - b.cdf_at_edges()
    ks = float(np.abs(d).max())
    w = 0.0
    for d0, d1, width in zip(d[:-1], d[1:], a.widths):
        if d0 * d1 >= 0:
            w += 0.5 * (abs(d0) + abs(d1)) * width
        else:  # sign change inside the bin
            w += 0.5 * (d0 * d0 + d1 * d1) / (abs(d0) + abs(d1)) * width
    return Divergence(ks, float(w))


def compare_stats(a: CorpusStats, b: CorpusStats) -> dict:
    report, incomparable = {}, []
    for m in sorted(set(a.histograms) | set(b.histograms)):
        ha, hb = a.histograms.get(m), b.histograms.get(m)
        if ha is None or hb is None or ha.n_samples == 0 or hb.n_samples == 0:
            incomparable.append(m)
            continue
        try:
            div = compare_histograms(ha, hb)
        except ValueError:
            incomparable.append(m)
            continue
        report[m] = {"ks": div.ks, "wasserstein": div.wasserstein,
                     "n_a": ha.n_samples, "n_b": hb.n_samples}
    return {"metrics": report, "incomparable": incomparable}


# --------------------------------------------------------------------------
# plots

_SVG_W, _SVG_H, _PAD = 480, 300, 44


def histogram_svg(metric: str, series: dict[str, Histogram]) -> str:
    """Step-line plot of one metric with one polyline per corpus."""
    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    hs = [h for h in series.values() if len(h.bin_edges)]
    x0 = min(float(h.bin_edges[0]) for h in hs)
    x1 = max(float(h.bin_edges[-1]) for h in hs)
    ymax = max([float(h.densities.max()) for h in hs if h.densities.size] + [1e-12])
    sx = lambda x: _PAD + (x - x0) / (x1 - x0) * (_SVG_W - 2 * _PAD)  # noqa: E731
    sy = lambda y: _SVG_H - _PAD - y / ymax * (_SVG_H - 2 * _PAD)  # noqa: E731
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}">',
             f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
             f'<line x1="{_PAD}" y1="{_SVG_H - _PAD}" x2="{_SVG_W - _PAD}" y2="{_SVG_H - _PAD}" stroke="black"/>',
             f'<line x1="{_PAD}" y1="{_PAD}" x2="{_PAD}" y2="{_SVG_H - _PAD}" stroke="black"/>',
             f'<text x="{_SVG_W / 2:.0f}" y="18" text-anchor="middle" font-size="13">{metric}</text>',
             f'<text x="{_SVG_W / 2:.0f}" y="{_SVG_H - 8}" text-anchor="middle" font-size="11">'
             f'{UNITS.get(metric, "")}</text>',
             f'<text x="{_PAD - 4}" y="{_SVG_H - _PAD + 14}" text-anchor="end" font-size="10">{x0:g}</text>',
             f'<text x="{_SVG_W - _PAD}" y="{_SVG_H - _PAD + 14}" text-anchor="end" font-size="10">{x1:g}</text>',
             f'<text x="{_PAD - 4}" y="{_PAD + 4}" text-anchor="end" font-size="10">{ymax:.3g}</text>']
    for k, (name, h) in enumerate(series.items()):
        pts = []
        for lo, hi, d in zip(h.bin_edges[:-1], h.bin_edges[1:], h.densities):
            pts += [f"{sx(lo):.2f},{sy(d):.2f}", f"{sx(hi):.2f},{sy(d):.2f}"]
        color = palette[k % len(palette)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(pts)}"/>')
        parts.append(f'<text x="{_SVG_W - _PAD}" y="{_PAD + 14 * k}" text-anchor="end" font-size="11" '
                     f'fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svgs(out_dir: str | Path, corpora: dict[str, CorpusStats]) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    metrics = sorted({m for s in corpora.values() for m in s.histograms})
    for m in metrics:
        series = {name: s.histograms[m] for name, s in corpora.items() if m in s.histograms}
        p = out / f"{m}.svg"
        p.write_text(histogram_svg(m, series), encoding="utf-8")
        written.append(p)
    return written


def kmh(v: float) -> float:
    return v * MPS_TO_KMH


def is_finite(x) -> bool:
    return x is not None and math.isfinite(x)
