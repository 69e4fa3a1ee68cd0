"""Phenomenological simulator of beads drifting over an interdigitated electrode.

Positions are in micrometres. The electrode fingers run vertically (along y);
a gap is centred in the field of view and finger/gap bands repeat outward.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

# +1: frequencies below the crossover attract beads to the electrode edges.
# Flip to -1 for the opposite polarity convention.
POLARITY = 1.0


@dataclass(frozen=True)
class TestbedGeometry:
    finger_width: float = 70.0
    gap_width: float = 70.0
    finger_count: int = 12
    fov_width: float = 320.0
    fov_height: float = 240.0
    pixel_scale: float = 0.5  # um per pixel

    __test__ = False

    def __post_init__(self):
        for name in ("finger_width", "gap_width", "fov_width", "fov_height", "pixel_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.finger_count < 2:
            raise ValueError(f"finger_count must be >= 2, got {self.finger_count}")
        if self.gap_width > self.fov_width:
            raise ValueError("field of view must contain at least one full gap")

    @property
    def width_px(self) -> int:
        return int(round(self.fov_width / self.pixel_scale))

    @property
    def height_px(self) -> int:
        return int(round(self.fov_height / self.pixel_scale))

    @property
    def period(self) -> float:
        return self.finger_width + self.gap_width

    @property
    def gap_center(self) -> float:
        return self.fov_width / 2.0

    @property
    def watched_gap(self) -> tuple[float, float]:
        """Inner edges (um) of the two electrodes bounding the centred gap."""
        half = self.gap_width / 2.0
        return self.gap_center - half, self.gap_center + half

    def edges(self, margin: float | None = None) -> np.ndarray:
        """Sorted electrode edge positions covering the field of view plus a margin."""
        if margin is None:
            margin = self.period
        left, _ = self.watched_gap
        lo, hi = -margin, self.fov_width + margin
        n_back = int(np.ceil((left - lo) / self.period)) + 1
        n_fwd = int(np.ceil((hi - left) / self.period)) + 1
        starts = left + self.period * np.arange(-n_back, n_fwd)
        edges = np.concatenate([starts, starts + self.gap_width])
        edges.sort()
        return edges[(edges >= lo) & (edges <= hi)]

    def finger_intervals(self) -> list[tuple[float, float]]:
        """Electrode finger extents (um) that intersect the field of view."""
        left, right = self.watched_gap
        out = []
        k_lo = int(np.floor((0 - right) / self.period)) - 1
        k_hi = int(np.ceil((self.fov_width - right) / self.period)) + 1
        for k in range(k_lo, k_hi + 1):
            a = right + k * self.period
            b = a + self.finger_width
            if b > 0 and a < self.fov_width:
                out.append((a, b))
        return out


@dataclass(frozen=True)
class Bead:
    x: float
    y: float
    radius: float = 1.5


@dataclass(frozen=True)
class DriftModel:
    crossover_freq: float = 500e3
    max_speed: float = 0.15  # um/frame
    diffusion_sigma: float = 0.03  # um/frame, per axis
    rng_seed: int = 0

    def __post_init__(self):
        if not self.crossover_freq > 0:
            raise ValueError("crossover_freq must be > 0")
        if self.max_speed < 0:
            raise ValueError("max_speed must be >= 0")
        if self.diffusion_sigma < 0:
            raise ValueError("diffusion_sigma must be >= 0")


@dataclass(frozen=True)
class TestbedState:
    positions: np.ndarray  # (n, 2) um
    radii: np.ndarray  # (n,) um
    frame_index: int = 0
    applied_frequency: float = 1e3
    applied_voltage: float = 1.0
    field_on: bool = True

    __test__ = False

    def __post_init__(self):
        if not self.applied_frequency > 0:
            raise ValueError("applied_frequency must be > 0")

    def __len__(self):
        return len(self.positions)

    @property
    def beads(self) -> list[Bead]:
        return [Bead(float(x), float(y), float(r)) for (x, y), r in zip(self.positions, self.radii)]

    def with_signal(self, frequency=None, voltage=None, field_on=None) -> "TestbedState":
        changes = {}
        if frequency is not None:
            changes["applied_frequency"] = float(frequency)
        if voltage is not None:
            changes["applied_voltage"] = float(voltage)
        if field_on is not None:
            changes["field_on"] = bool(field_on)
        return replace(self, **changes)


def seed_beads(geometry: TestbedGeometry, count: int, seed: int, radius: float = 1.5) -> TestbedState:
    if count < 0:
        raise ValueError("count must be >= 0")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(0.0, geometry.fov_width, count)
    ys = rng.uniform(0.0, geometry.fov_height, count)
    return TestbedState(
        positions=np.column_stack([xs, ys]).reshape(count, 2),
        radii=np.full(count, float(radius)),
    )


def drift_velocity(f: float, model: DriftModel) -> float:
    """Signed drift speed in um/frame; positive means toward the nearest edge."""
    if not f > 0:
        raise ValueError(f"frequency must be > 0, got {f}")
    fc2 = model.crossover_freq**2
    f2 = float(f) ** 2
    return POLARITY * model.max_speed * (fc2 - f2) / (fc2 + f2)


def _segments(x: np.ndarray, edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    idx = np.clip(np.searchsorted(edges, x, side="right"), 1, len(edges) - 1)
    return edges[idx - 1], edges[idx]


def distance_to_nearest_edge(x: np.ndarray, geometry: TestbedGeometry) -> np.ndarray:
    edges = geometry.edges()
    a, b = _segments(np.asarray(x, dtype=float), edges)
    return np.minimum(np.abs(x - a), np.abs(b - x))


def step(state: TestbedState, model: DriftModel, geometry: TestbedGeometry) -> TestbedState:
    """Advance one frame. Noise is keyed on (rng_seed, frame_index), so this is pure."""
    pos = state.positions.copy()
    n = len(pos)
    if n:
        v = drift_velocity(state.applied_frequency, model) if state.field_on else 0.0
        if v != 0.0:
            x = pos[:, 0]
            a, b = _segments(x, geometry.edges())
            mid = 0.5 * (a + b)
            # unit direction toward the nearest edge of the enclosing segment
            toward = np.where(x < mid, -1.0, 1.0)
            if v > 0:
                # clamp where the bead body touches the edge
                room = np.minimum(x - a, b - x) - state.radii
                dx = toward * np.minimum(v, np.maximum(room, 0.0))
            else:
                room = np.abs(mid - x)  # clamp at the segment midline
                dx = -toward * np.minimum(-v, room)
            pos[:, 0] = x + dx
        if model.diffusion_sigma > 0:
            rng = np.random.default_rng([model.rng_seed, state.frame_index])
            pos += rng.normal(0.0, model.diffusion_sigma, size=pos.shape)
        np.clip(pos[:, 0], 0.0, geometry.fov_width, out=pos[:, 0])
        np.clip(pos[:, 1], 0.0, geometry.fov_height, out=pos[:, 1])
    return replace(state, positions=pos, frame_index=state.frame_index + 1)


def mean_abs_distance_from_centerline(state: TestbedState, geometry: TestbedGeometry) -> float:
    """Ground-truth counterpart of the image feature, for beads inside the watched gap."""
    left, right = geometry.watched_gap
    x = state.positions[:, 0]
    inside = (x >= left) & (x <= right)
    if not inside.any():
        return float("nan")
    return float(np.mean(np.abs(x[inside] - geometry.gap_center)))


SNAPSHOT_HEADER = ("frame_index", "bead_id", "x_um", "y_um")


def write_snapshots(path, states: Iterable[TestbedState]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SNAPSHOT_HEADER)
        for s in states:
            for i, (x, y) in enumerate(s.positions):
                w.writerow([s.frame_index, i, repr(float(x)), repr(float(y))])
