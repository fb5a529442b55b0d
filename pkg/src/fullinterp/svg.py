"""SVG overlays of configurations on their patch.

The patch is embedded as a grayscale PNG scaled up with nearest-neighbour
sampling; primitives are drawn on top in patch-frame coordinates mapped to
pixel centres.  Output bytes depend only on the inputs.
"""
from __future__ import annotations

import base64
import struct
import zlib
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .geometry import ContourPrim, ImagePatch, PointPrim, SquareRegionPrim

SCALE = 8
POINT_RADIUS = 3.0  # in output pixels
_PALETTE = ("#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4", "#f032e6", "#bfef45",
            "#fabed4", "#469990", "#dcbeff", "#9a6324")


def _chunk(tag: bytes, data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)


def encode_png_gray(pixels: np.ndarray) -> bytes:
    """8-bit grayscale PNG of a ``(h, w)`` uint8 array."""
    h, w = pixels.shape
    raw = b"".join(b"\x00" + pixels[r].tobytes() for r in range(h))  # filter type 0 per row
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)
    return b"\x89PNG\r\n\x1a\n" + _chunk(b"IHDR", ihdr) + _chunk(b"IDAT", zlib.compress(raw, 9)) + _chunk(b"IEND", b"")


def _fmt(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".")


def _xy(x: float, y: float) -> tuple[str, str]:
    # patch coordinates address pixel centres
    return _fmt((x + 0.5) * SCALE), _fmt((y + 0.5) * SCALE)


def _element(name: str, prim, color: str) -> list:
    label = escape(name)
    if isinstance(prim, PointPrim):
        cx, cy = _xy(prim.x, prim.y)
        return [
            f'<circle cx="{cx}" cy="{cy}" r="{_fmt(POINT_RADIUS)}" fill="none" stroke="{color}" stroke-width="2"/>',
            f'<text x="{cx}" y="{cy}" dx="5" dy="-5" fill="{color}">{label}</text>',
        ]
    if isinstance(prim, SquareRegionPrim):
        x, y = _xy(prim.center_x - prim.half, prim.center_y - prim.half)
        side = _fmt(prim.side * SCALE)
        return [
            f'<rect x="{x}" y="{y}" width="{side}" height="{side}" fill="none" stroke="{color}" stroke-width="2"/>',
            f'<text x="{x}" y="{y}" dx="2" dy="12" fill="{color}">{label}</text>',
        ]
    if isinstance(prim, ContourPrim):
        pts = " ".join(",".join(_xy(x, y)) for x, y in prim.path)
        x0, y0 = _xy(*prim.vertices[0])
        return [
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>',
            f'<text x="{x0}" y="{y0}" dx="3" dy="-3" fill="{color}">{label}</text>',
        ]
    raise TypeError(f"not a primitive: {prim!r}")


def overlay_svg(img: ImagePatch, configuration: dict | None = None) -> bytes:
    """SVG document bytes for ``img`` with ``configuration`` (part -> primitive) drawn on it."""
    configuration = dict(configuration or {})
    up = np.floor(img.pixels * 255.0 + 0.5).astype(np.uint8)
    up = np.repeat(np.repeat(up, SCALE, axis=0), SCALE, axis=1)
    png = base64.b64encode(encode_png_gray(up)).decode("ascii")
    W, H = img.width * SCALE, img.height * SCALE
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" '
        f'width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="monospace" font-size="11">',
        f'<image x="0" y="0" width="{W}" height="{H}" style="image-rendering:pixelated" '
        f'xlink:href="data:image/png;base64,{png}"/>',
    ]
    for i, (name, prim) in enumerate(configuration.items()):
        color = _PALETTE[i % len(_PALETTE)]
        lines.append(f"<g id={quoteattr('part-' + name)}>")
        lines.extend(_element(name, prim, color))
        lines.append("</g>")
    lines.append("</svg>")
    return ("\n".join(lines) + "\n").encode("utf-8")


def render_overlay(img: ImagePatch, result, path) -> None:
    """Write the overlay for an interpretation result, annotation or plain dict to ``path``."""
    if result is None:
        cfg = {}
    elif isinstance(result, dict):
        cfg = result
    else:
        cfg = getattr(result, "configuration", None)
        if cfg is None:
            cfg = getattr(result, "parts", {})
    data = overlay_svg(img, cfg)
    with open(path, "wb") as fh:
        fh.write(data)
