"""Synthetic microscope frames and binary PGM (P5) interchange."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass

import numpy as np

from .testbed import TestbedGeometry, TestbedState


@dataclass(frozen=True, eq=False)
class Frame:
    pixels: np.ndarray  # (height, width) uint8, row-major
    frame_index: int = 0
    timestamp: int = 0

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValueError("pixels must be a 2-D array")
        if px.dtype != np.uint8:
            if px.size and (px.min() < 0 or px.max() > 255):
                raise ValueError("intensities must lie in [0, 255]")
            px = px.astype(np.uint8)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            self.frame_index == other.frame_index
            and self.timestamp == other.timestamp
            and self.pixels.shape == other.pixels.shape
            and np.array_equal(self.pixels, other.pixels)
        )

    __hash__ = None


@dataclass(frozen=True)
class RenderParams:
    bead_intensity: int = 10
    background_intensity: int = 170
    electrode_intensity: int = 240
    noise_sigma: float = 30.0
    bead_render_radius_px: float = 6.0

    def __post_init__(self):
        for name in ("bead_intensity", "background_intensity", "electrode_intensity"):
            v = getattr(self, name)
            if not 0 <= v <= 255:
                raise ValueError(f"{name} must be in [0, 255], got {v}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.bead_render_radius_px < 1:
            raise ValueError("bead_render_radius_px must be >= 1")


# 2x2 supersampling offsets within a pixel
_SUB = np.array([0.25, 0.75])


def _band_coverage(width: int, intervals_px) -> np.ndarray:
    cols = np.arange(width, dtype=float)
    cov = np.zeros(width)
    for a, b in intervals_px:
        cov += np.clip(np.minimum(cols + 1, b) - np.maximum(cols, a), 0.0, 1.0)
    return np.clip(cov, 0.0, 1.0)


def render_background(geometry: TestbedGeometry, params: RenderParams) -> np.ndarray:
    """Background plus electrode bands as a float image."""
    w, h = geometry.width_px, geometry.height_px
    s = geometry.pixel_scale
    cov = _band_coverage(w, [(a / s, b / s) for a, b in geometry.finger_intervals()])
    row = params.background_intensity + cov * (params.electrode_intensity - params.background_intensity)
    return np.repeat(row[None, :], h, axis=0)


def _paint_disk(canvas: np.ndarray, cx: float, cy: float, r: float, value: float) -> None:
    h, w = canvas.shape
    x0, x1 = max(int(np.floor(cx - r)), 0), min(int(np.ceil(cx + r)) + 1, w)
    y0, y1 = max(int(np.floor(cy - r)), 0), min(int(np.ceil(cy + r)) + 1, h)
    if x0 >= x1 or y0 >= y1:
        return
    xs = (np.arange(x0, x1)[:, None] + _SUB[None, :]).ravel()
    ys = (np.arange(y0, y1)[:, None] + _SUB[None, :]).ravel()
    inside = ((xs[None, :] - cx) ** 2 + (ys[:, None] - cy) ** 2) <= r * r
    cov = inside.reshape(y1 - y0, 2, x1 - x0, 2).mean(axis=(1, 3))
    patch = canvas[y0:y1, x0:x1]
    patch += cov * (value - patch)


def render(state: TestbedState, geometry: TestbedGeometry, params: RenderParams, seed: int) -> Frame:
    canvas = render_background(geometry, params)
    s = geometry.pixel_scale
    r = params.bead_render_radius_px
    for x, y in state.positions:
        _paint_disk(canvas, x / s, y / s, r, params.bead_intensity)
    if params.noise_sigma > 0:
        rng = np.random.default_rng([seed, state.frame_index])
        canvas += rng.normal(0.0, params.noise_sigma, size=canvas.shape)
    pixels = np.clip(np.rint(canvas), 0, 255).astype(np.uint8)
    return Frame(pixels, frame_index=state.frame_index, timestamp=state.frame_index)


def frame_filename(index: int) -> str:
    return f"frame_{index:06}.pgm"


class PGMError(ValueError):
    pass


class PGMHeaderError(PGMError):
    pass


class PGMTruncatedError(PGMError):
    pass


class PGMMaxvalError(PGMError):
    pass


def write_pgm(frame: Frame, path) -> None:
    header = f"P5\n# frame_index={frame.frame_index} timestamp={frame.timestamp}\n{frame.width} {frame.height}\n255\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(frame.pixels).tobytes())


_META = re.compile(rb"frame_index=(-?\d+)(?:\s+timestamp=(-?\d+))?")


def parse_pgm(data: bytes) -> Frame:
    pos = 0
    tokens = []
    meta = {}
    n = len(data)
    while len(tokens) < 4:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise PGMHeaderError("unexpected end of header")
        if data[pos : pos + 1] == b"#":
            end = data.find(b"\n", pos)
            end = n if end < 0 else end
            m = _META.search(data[pos:end])
            if m:
                meta["frame_index"] = int(m.group(1))
                meta["timestamp"] = int(m.group(2)) if m.group(2) is not None else int(m.group(1))
            pos = end
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    if pos >= n or not data[pos : pos + 1].isspace():
        raise PGMHeaderError("missing whitespace after maxval")
    pos += 1

    if tokens[0] != b"P5":
        raise PGMHeaderError(f"unsupported magic {tokens[0]!r}, expected b'P5'")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise PGMHeaderError(f"non-integer header field: {exc}") from None
    if width <= 0 or height <= 0:
        raise PGMHeaderError(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise PGMMaxvalError(f"maxval must be 255, got {maxval}")
    need = width * height
    payload = data[pos : pos + need]
    if len(payload) < need:
        raise PGMTruncatedError(f"expected {need} payload bytes, got {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()
    return Frame(pixels, frame_index=meta.get("frame_index", 0), timestamp=meta.get("timestamp", 0))


def read_pgm(path) -> Frame:
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())


def write_corpus(frames, directory) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for frame in frames:
        p = os.path.join(directory, frame_filename(frame.frame_index))
        write_pgm(frame, p)
        paths.append(p)
    return paths
