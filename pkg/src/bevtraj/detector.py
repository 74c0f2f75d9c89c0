"""Per-frame object detection on BEV occupancy-grid frames.

Pipeline: RGB -> HSV, light masks, light inpainting, HSV again, ego/agent
masks, morphological opening, 8-connected components, features, size check.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage as ndi
from skimage.measure import find_contours

from . import colors as pal

LIGHT_CATEGORIES = ("light_red", "light_green", "light_yellow")
VEHICLE_CATEGORIES = ("ego", "agent")
CATEGORIES = LIGHT_CATEGORIES + VEHICLE_CATEGORIES + ("unknown",)

_EIGHT = np.ones((3, 3), dtype=bool)


class AllPixelsMasked(ValueError):
    pass


@dataclass(frozen=True)
class DetectorConfig:
    light_bands: dict = field(default_factory=lambda: dict(pal.LIGHT_HUE_BANDS))
    light_min_saturation: float = pal.LIGHT_MIN_SATURATION
    light_min_value: float = pal.LIGHT_MIN_VALUE
    ego_max_value: float = pal.EGO_MAX_VALUE
    agent_min_saturation: float = 0.3
    agent_min_value: float = 0.3
    opening_size: int = 3
    opening_iterations: int = 1
    min_component_px: int = 4
    light_area_m2: tuple[float, float] = (1.5, 6.0)
    vehicle_area_m2: tuple[float, float] = (4.0, 30.0)

    def __post_init__(self):
        if self.ego_max_value >= self.agent_min_value:
            raise ValueError("ego and agent value bands overlap")
        names = list(self.light_bands)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                pa = pal.split_hue(*self.light_bands[a])
                pb = pal.split_hue(*self.light_bands[b])
                if any(lo1 <= hi2 and lo2 <= hi1 for lo1, hi1 in pa for lo2, hi2 in pb):
                    raise ValueError(f"light bands {a} and {b} overlap")

    def area_bounds(self, category: str) -> tuple[float, float]:
        return self.light_area_m2 if category.startswith("light_") else self.vehicle_area_m2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["light_bands"] = {k: list(v) for k, v in self.light_bands.items()}
        d["light_area_m2"] = list(self.light_area_m2)
        d["vehicle_area_m2"] = list(self.vehicle_area_m2)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorConfig":
        kw = dict(d)
        if "light_bands" in kw:
            kw["light_bands"] = {k: tuple(map(float, v)) for k, v in kw["light_bands"].items()}
        for k in ("light_area_m2", "vehicle_area_m2"):
            if k in kw:
                kw[k] = tuple(map(float, kw[k]))
        return cls(**kw)


@dataclass
class DetectedObject:
    frame_index: int
    category: str
    centroid: tuple[float, float]  # continuous (row, col)
    area_px: int
    area_m2: float
    mean_color: tuple[float, float, float]
    bbox: tuple[int, int, int, int]  # row_min, col_min, row_max, col_max (inclusive)
    rectangularity: float
    circularity: float
    pixels: np.ndarray = field(repr=False)  # (n, 2) int rows/cols
    mask: str = ""  # the mask the component came from, before reclassification
    touches_border: bool = False

    @property
    def aspect(self) -> float:
        r0, c0, r1, c1 = self.bbox
        return (c1 - c0 + 1) / (r1 - r0 + 1)

    def to_record(self) -> dict:
        return {
            "frame": self.frame_index,
            "category": self.category,
            "mask": self.mask,
            "centroid_px": [round(self.centroid[0], 6), round(self.centroid[1], 6)],
            "area_px": self.area_px,
            "area_m2": round(self.area_m2, 6),
            "mean_rgb": [round(c, 4) for c in self.mean_color],
            "bbox": list(self.bbox),
            "rectangularity": round(self.rectangularity, 6),
            "circularity": round(self.circularity, 6),
            "touches_border": self.touches_border,
            "pixels": self.pixels.tolist(),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "DetectedObject":
        return cls(
            frame_index=int(rec["frame"]),
            category=rec["category"],
            centroid=tuple(rec["centroid_px"]),
            area_px=int(rec["area_px"]),
            area_m2=float(rec["area_m2"]),
            mean_color=tuple(rec["mean_rgb"]),
            bbox=tuple(rec["bbox"]),
            rectangularity=float(rec["rectangularity"]),
            circularity=float(rec["circularity"]),
            pixels=np.asarray(rec.get("pixels", []), dtype=int).reshape(-1, 2),
            mask=rec.get("mask", ""),
            touches_border=bool(rec.get("touches_border", False)),
        )


# --------------------------------------------------------------------------

def to_hsv(frame: np.ndarray) -> np.ndarray:
    """Hexcone RGB -> HSV; hue in degrees [0, 360), saturation and value in [0, 1]."""
    rgb = frame.astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    delta = maxc - minc
    safe = np.where(delta > 0, delta, 1.0)
    hue = np.select(
        [delta == 0, maxc == r, maxc == g],
        [0.0, ((g - b) / safe) % 6.0, (b - r) / safe + 2.0],
        (r - g) / safe + 4.0,
    ) * 60.0
    hue = hue % 360.0
    sat = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    return np.stack([hue, sat, maxc], axis=-1)


def _hue_mask(hue: np.ndarray, band) -> np.ndarray:
    m = np.zeros(hue.shape, dtype=bool)
    for lo, hi in pal.split_hue(*band):
        m |= (hue >= lo) & (hue <= hi)
    return m


def mask_lights(hsv: np.ndarray, cfg: DetectorConfig = DetectorConfig()) -> dict[str, np.ndarray]:
    hue, sat, val = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    bright = (sat >= cfg.light_min_saturation) & (val >= cfg.light_min_value)
    return {color: bright & _hue_mask(hue, band) for color, band in cfg.light_bands.items()}


def mask_vehicles(hsv: np.ndarray, cfg: DetectorConfig = DetectorConfig()) -> tuple[np.ndarray, np.ndarray]:
    hue, sat, val = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    ego = val <= cfg.ego_max_value
    reserved_hue = np.zeros(hue.shape, dtype=bool)
    for band in cfg.light_bands.values():
        reserved_hue |= _hue_mask(hue, band)
    agents = (sat >= cfg.agent_min_saturation) & (val >= cfg.agent_min_value) & ~reserved_hue
    return ego, agents


def inpaint_lights(frame: np.ndarray, light_masks) -> np.ndarray:
    """Replace each light pixel by its nearest non-light pixel.

    Distance is Euclidean in pixel indices; ties go to the smaller row, then
    the smaller column.
    """
    if isinstance(light_masks, dict):
        masks = list(light_masks.values())
    elif isinstance(light_masks, np.ndarray) and light_masks.ndim == 2:
        masks = [light_masks]
    else:
        masks = list(light_masks)
    light = np.zeros(frame.shape[:2], dtype=bool)
    for m in masks:
        if m.shape != light.shape:
            raise ValueError(f"mask shape {m.shape} does not match frame {light.shape}")
        light |= m
    out = frame.copy()
    if not light.any():
        return out
    if light.all():
        raise AllPixelsMasked("every pixel is a light; nothing to inpaint from")

    dist = ndi.distance_transform_edt(light)
    labels, n = ndi.label(light, structure=_EIGHT)
    rows, cols = light.shape
    for k, sl in enumerate(ndi.find_objects(labels), start=1):
        comp = labels[sl] == k
        lr, lc = np.nonzero(comp)
        lr = lr + sl[0].start
        lc = lc + sl[1].start
        reach = int(math.ceil(dist[lr, lc].max())) + 1
        r0, r1 = max(sl[0].start - reach, 0), min(sl[0].stop + reach, rows)
        c0, c1 = max(sl[1].start - reach, 0), min(sl[1].stop + reach, cols)
        nr, nc = np.nonzero(~light[r0:r1, c0:c1])  # row-major order
        nr = nr + r0
        nc = nc + c0
        d2 = (lr[:, None] - nr[None, :]) ** 2 + (lc[:, None] - nc[None, :]) ** 2
        pick = np.argmin(d2, axis=1)
        out[lr, lc] = frame[nr[pick], nc[pick]]
    return out


def morphological_open(mask: np.ndarray, size: int = 3, iterations: int = 1) -> np.ndarray:
    """Erosion then dilation with a size x size square."""
    if not mask.any():
        return mask.copy()
    st = np.ones((size, size), dtype=bool)
    return ndi.binary_opening(mask, structure=st, iterations=iterations)


def extract_components(mask: np.ndarray, min_px: int = 1) -> list[np.ndarray]:
    """8-connected components as (n, 2) row/col arrays, ordered by their first pixel in raster order."""
    if not mask.any():
        return []
    labels, n = ndi.label(mask, structure=_EIGHT)
    comps = []
    for k, sl in enumerate(ndi.find_objects(labels), start=1):
        rr, cc = np.nonzero(labels[sl] == k)
        if len(rr) < min_px:
            continue
        comps.append(np.stack([rr + sl[0].start, cc + sl[1].start], axis=1))
    comps.sort(key=lambda p: (int(p[0, 0]), int(p[0, 1])))
    return comps


def contour_perimeter(pixels: np.ndarray) -> float:
    """Length of the iso-0.5 contour around a pixel set (marching squares)."""
    r0, c0 = pixels.min(axis=0)
    r1, c1 = pixels.max(axis=0)
    grid = np.zeros((r1 - r0 + 3, c1 - c0 + 3))
    grid[pixels[:, 0] - r0 + 1, pixels[:, 1] - c0 + 1] = 1.0
    total = 0.0
    for c in find_contours(grid, 0.5):
        total += float(np.hypot(*np.diff(c, axis=0).T).sum())
    return total


def component_features(pixels: np.ndarray, frame: np.ndarray, scales: tuple[float, float],
                       frame_index: int = 0, mask: str = "") -> DetectedObject:
    """Geometry and color features of one component (category left unset)."""
    n = len(pixels)
    rr, cc = pixels[:, 0], pixels[:, 1]
    r0, c0 = int(rr.min()), int(cc.min())
    r1, c1 = int(rr.max()), int(cc.max())
    bbox_area = (r1 - r0 + 1) * (c1 - c0 + 1)
    perim = contour_perimeter(pixels)
    mean = frame[rr, cc].astype(np.float64).mean(axis=0)
    rows, cols = frame.shape[:2]
    return DetectedObject(
        frame_index=frame_index,
        category="",
        centroid=(float(rr.mean()) + 0.5, float(cc.mean()) + 0.5),
        area_px=n,
        area_m2=n / (scales[0] * scales[1]),
        mean_color=tuple(float(x) for x in mean),
        bbox=(r0, c0, r1, c1),
        rectangularity=n / bbox_area,
        circularity=4.0 * math.pi * n / perim ** 2 if perim > 0 else 1.0,
        pixels=pixels,
        mask=mask,
        touches_border=r0 == 0 or c0 == 0 or r1 == rows - 1 or c1 == cols - 1,
    )


def classify(obj: DetectedObject, source: str, cfg: DetectorConfig = DetectorConfig()) -> DetectedObject:
    """Keep the mask's category when the area fits its size range, otherwise ``unknown``."""
    lo, hi = cfg.area_bounds(source)
    obj.mask = source
    obj.category = source if lo <= obj.area_m2 <= hi else "unknown"
    return obj


def detect_frame(frame: np.ndarray, cfg: DetectorConfig = DetectorConfig(),
                 scales: tuple[float, float] = (4.8, 5.4), frame_index: int = 0,
                 hsv: np.ndarray | None = None) -> list[DetectedObject]:
    hsv = to_hsv(frame) if hsv is None else hsv
    lights = mask_lights(hsv, cfg)
    lit = np.zeros(frame.shape[:2], dtype=bool)
    for m in lights.values():
        lit |= m
    if lit.any():
        painted = inpaint_lights(frame, lights)
        hsv = hsv.copy()
        hsv[lit] = to_hsv(painted[lit])
    else:
        painted = frame
    ego, agents = mask_vehicles(hsv, cfg)

    found = []
    sources = [(f"light_{c}", m, frame) for c, m in lights.items()]
    sources += [("ego", ego, painted), ("agent", agents, painted)]
    for name, m, color_src in sources:
        opened = morphological_open(m, cfg.opening_size, cfg.opening_iterations)
        for px in extract_components(opened, cfg.min_component_px):
            obj = component_features(px, color_src, scales, frame_index)
            found.append(classify(obj, name, cfg))
    return found


def detect_video(frames, cfg: DetectorConfig = DetectorConfig(),
                 scales: tuple[float, float] = (4.8, 5.4)) -> list[list[DetectedObject]]:
    frames = np.asarray(frames)
    if len(frames) == 0:
        return []
    hsv = to_hsv(frames)
    return [detect_frame(f, cfg, scales, i, hsv[i]) for i, f in enumerate(frames)]
