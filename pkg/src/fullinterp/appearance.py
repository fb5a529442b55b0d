"""Local appearance: 8-bin gradient-orientation histogram plus mean intensity.

Stands in for learned texture features.  Anything producing an
:class:`AppearanceDescriptor` can replace it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyRegion, InvalidArgument
from .geometry import ContourPrim, ImagePatch, SquareRegionPrim, resample_by_arclength

N_BINS = 8
CONTOUR_FRACTIONS = (0.0, 0.25, 0.5, 0.75, 1.0)
CONTOUR_WINDOW = 5


@dataclass(frozen=True)
class AppearanceDescriptor:
    bins: tuple  # 8 floats, L1-normalised or all zero
    mean_intensity: float

    def as_array(self) -> np.ndarray:
        return np.array([*self.bins, self.mean_intensity])

    @classmethod
    def from_array(cls, values) -> "AppearanceDescriptor":
        values = [float(v) for v in values]
        return cls(tuple(values[:N_BINS]), values[N_BINS])


def _normalise(hist: np.ndarray) -> np.ndarray:
    total = hist.sum()
    if total > 0:
        return hist / total
    return np.zeros(N_BINS)


def _histogram(pixels: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Magnitude-weighted orientation histogram over the given pixel indices.

    ``rows``/``cols`` may fall outside the image; they are clamped, as are
    their difference neighbours.
    """
    h, w = pixels.shape
    r = np.clip(rows, 0, h - 1)
    c = np.clip(cols, 0, w - 1)
    gx = 0.5 * (pixels[r, np.clip(cols + 1, 0, w - 1)] - pixels[r, np.clip(cols - 1, 0, w - 1)])
    gy = 0.5 * (pixels[np.clip(rows + 1, 0, h - 1), c] - pixels[np.clip(rows - 1, 0, h - 1), c])
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), math.pi)
    idx = np.floor(theta / (math.pi / N_BINS)).astype(np.int64) % N_BINS
    return np.bincount(idx.ravel(), weights=mag.ravel(), minlength=N_BINS)


def descriptor_at(img: ImagePatch, center, window: int) -> AppearanceDescriptor:
    if window < 3 or window % 2 == 0:
        raise InvalidArgument(f"window must be odd and >= 3, got {window}")
    cx = int(math.floor(center[0] + 0.5))
    cy = int(math.floor(center[1] + 0.5))
    half = window // 2
    rows, cols = np.mgrid[cy - half : cy + half + 1, cx - half : cx + half + 1]
    pixels = img.pixels
    hist = _histogram(pixels, rows, cols)
    vals = pixels[np.clip(rows, 0, img.height - 1), np.clip(cols, 0, img.width - 1)]
    return AppearanceDescriptor(tuple(_normalise(hist).tolist()), float(vals.mean()))


def descriptor_along_contour(img: ImagePatch, c: ContourPrim) -> AppearanceDescriptor:
    """Average of five window-5 descriptors at arc-length quarters."""
    pts = resample_by_arclength(c, len(CONTOUR_FRACTIONS))
    descs = [descriptor_at(img, p, CONTOUR_WINDOW) for p in pts]
    bins = np.mean([d.bins for d in descs], axis=0)
    mean = float(np.mean([d.mean_intensity for d in descs]))
    return AppearanceDescriptor(tuple(_normalise(bins).tolist()), mean)


def region_pixels(r: SquareRegionPrim, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices of in-image pixels whose centres lie in ``r``."""
    half = r.half
    cols = np.arange(width)
    rows = np.arange(height)
    cols = cols[np.abs(cols - r.center_x) <= half]
    rows = rows[np.abs(rows - r.center_y) <= half]
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return rr.ravel(), cc.ravel()


def descriptor_in_region(img: ImagePatch, r: SquareRegionPrim) -> AppearanceDescriptor:
    rows, cols = region_pixels(r, img.width, img.height)
    if rows.size == 0:
        raise EmptyRegion(
            f"region centred ({r.center_x}, {r.center_y}) side {r.side} covers no pixel centres"
        )
    hist = _histogram(img.pixels, rows, cols)
    mean = float(img.pixels[rows, cols].mean())
    return AppearanceDescriptor(tuple(_normalise(hist).tolist()), mean)


def descriptor_distance(a: AppearanceDescriptor, b: AppearanceDescriptor) -> float:
    """Chi-squared distance over bins plus absolute mean-intensity difference."""
    x = np.asarray(a.bins)
    y = np.asarray(b.bins)
    chi2 = float(np.sum((x - y) ** 2 / (x + y + 1e-9)))
    return chi2 + abs(a.mean_intensity - b.mean_intensity)
