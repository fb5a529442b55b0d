"""Separable Gaussian smoothing with clamp-to-edge borders."""
from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import correlate1d

DOG_SIGMAS = (1.0, 2.0)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalised kernel truncated at radius ``ceil(3 sigma)``."""
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(pixels: np.ndarray, sigma: float) -> np.ndarray:
    k = gaussian_kernel(sigma)
    out = correlate1d(pixels, k, axis=0, mode="nearest")
    return correlate1d(out, k, axis=1, mode="nearest")


def difference_of_gaussians(pixels: np.ndarray) -> np.ndarray:
    """Centre-surround response: blur(sigma=1) - blur(sigma=2)."""
    s1, s2 = DOG_SIGMAS
    return gaussian_blur(pixels, s1) - gaussian_blur(pixels, s2)


def central_gradients(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences ``(gx, gy)`` with edge replication."""
    p = np.pad(pixels, 1, mode="edge")
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    return gx, gy


def bilinear(field: np.ndarray, x: float, y: float) -> float:
    """Sample ``field`` at subpixel ``(x, y)``, clamping to the border."""
    h, w = field.shape
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    x0 = int(math.floor(x))
    y0 = int(math.floor(y))
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = field[y0, x0] * (1 - fx) + field[y0, x1] * fx
    bot = field[y1, x0] * (1 - fx) + field[y1, x1] * fx
    return float(top * (1 - fy) + bot * fy)
