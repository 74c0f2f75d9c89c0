"""Reserved palette and hue-interval arithmetic shared by the rasterizer and detector.

Hue intervals are ``(lo, hi)`` in degrees; ``lo > hi`` means the interval wraps
through 0 (e.g. ``(345, 15)`` for red).
"""

from __future__ import annotations

import colorsys
from typing import NamedTuple, Sequence


class ColorRGB(NamedTuple):
    r: int
    g: int
    b: int


WHITE = ColorRGB(255, 255, 255)
BLACK = ColorRGB(0, 0, 0)
LANE_GRAY = ColorRGB(200, 200, 200)
LIGHT_RGB = {
    "red": ColorRGB(230, 30, 30),
    "green": ColorRGB(30, 200, 60),
    "yellow": ColorRGB(240, 200, 30),
}

# detection bands for the three light hues; saturation and value floors apply too
LIGHT_HUE_BANDS = {
    "red": (345.0, 15.0),
    "yellow": (38.0, 58.0),
    "green": (115.0, 145.0),
}
LIGHT_MIN_SATURATION = 0.6
LIGHT_MIN_VALUE = 0.6
EGO_MAX_VALUE = 0.2
ACHROMATIC_MAX_SATURATION = 0.0  # white background and lane gray


def rgb_to_hsv(color: Sequence[int]) -> tuple[float, float, float]:
    """(hue degrees, saturation, value) of one 8-bit color."""
    h, s, v = colorsys.rgb_to_hsv(*(c / 255.0 for c in color))
    return h * 360.0, s, v


def hsv_to_rgb(hue: float, sat: float, val: float) -> ColorRGB:
    r, g, b = colorsys.hsv_to_rgb((hue % 360.0) / 360.0, sat, val)
    return ColorRGB(*(int(round(c * 255.0)) for c in (r, g, b)))


def split_hue(lo: float, hi: float) -> list[tuple[float, float]]:
    """Non-wrapping pieces of a hue interval, all inside [0, 360]."""
    lo, hi = lo % 360.0, hi % 360.0 if hi != 360.0 else 360.0
    if lo <= hi:
        return [(lo, hi)]
    return [(lo, 360.0), (0.0, hi)]


def hue_distance(a: float, b: float) -> float:
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def hue_in(h: float, band: tuple[float, float]) -> bool:
    return any(lo <= h <= hi for lo, hi in split_hue(*band))


def subtract_hues(keep: Sequence[tuple[float, float]], remove: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    """Set difference of hue-interval unions, returned as sorted non-wrapping pieces."""
    pieces = [p for band in keep for p in split_hue(*band)]
    for band in remove:
        for rlo, rhi in split_hue(*band):
            nxt = []
            for lo, hi in pieces:
                if rhi <= lo or rlo >= hi:
                    nxt.append((lo, hi))
                    continue
                if lo < rlo:
                    nxt.append((lo, rlo))
                if rhi < hi:
                    nxt.append((rhi, hi))
            pieces = nxt
    return sorted(p for p in pieces if p[1] - p[0] > 1e-9)


def widen(band: tuple[float, float], margin: float) -> tuple[float, float]:
    lo, hi = band
    return ((lo - margin) % 360.0, (hi + margin) % 360.0)
