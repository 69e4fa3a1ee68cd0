"""Bead detection by the Hough gradient method, and electrode-edge localisation.

Pixel coordinates are continuous raster coordinates: pixel column ``j`` spans
``[j, j + 1)``, so its centre sits at ``j + 0.5``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.signal import find_peaks

from .render import Frame


@dataclass(frozen=True)
class HcdParams:
    param_1: float = 400.0  # Canny high threshold on Sobel magnitude
    param_2: float = 95.0  # centre votes (3x3 neighbourhood sum)
    min_radius: int = 4
    max_radius: int = 9
    min_center_distance: float | None = None  # defaults to 1.5 * min_radius

    def __post_init__(self):
        if self.min_center_distance is None:
            object.__setattr__(self, "min_center_distance", 1.5 * self.min_radius)
        if not self.param_1 > 0:
            raise ValueError("param_1 must be > 0")
        if not self.param_2 > 0:
            raise ValueError("param_2 must be > 0")
        if not 0 < self.min_radius <= self.max_radius:
            raise ValueError("need 0 < min_radius <= max_radius")
        if not self.min_center_distance > 0:
            raise ValueError("min_center_distance must be > 0")


@dataclass(frozen=True)
class Particle:
    x: float
    y: float
    radius: float
    vote_score: int

    @property
    def center(self) -> tuple[float, float]:
        return self.x, self.y


@dataclass(frozen=True)
class ParticleSet:
    particles: tuple[Particle, ...] = ()
    frame_index: int = 0

    def __len__(self):
        return len(self.particles)

    def __iter__(self):
        return iter(self.particles)

    @property
    def xs(self) -> np.ndarray:
        return np.array([p.x for p in self.particles], dtype=float)

    @property
    def centers(self) -> np.ndarray:
        return np.array([(p.x, p.y) for p in self.particles], dtype=float).reshape(-1, 2)


@dataclass(frozen=True)
class ObservationWindow:
    left_edge_x: float
    right_edge_x: float
    reference_x: float = field(init=False)

    def __post_init__(self):
        if not self.left_edge_x < self.right_edge_x:
            raise ValueError("left_edge_x must be < right_edge_x")
        object.__setattr__(self, "reference_x", 0.5 * (self.left_edge_x + self.right_edge_x))


class ObservationWindowError(RuntimeError):
    """Raised when the frame does not show two electrode edges around a gap."""


def sobel_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    img = np.asarray(img, dtype=np.float32)
    gx = ndimage.sobel(img, axis=1, mode="nearest")
    gy = ndimage.sobel(img, axis=0, mode="nearest")
    return gx, gy


_TAN22 = np.tan(np.deg2rad(22.5))
_TAN67 = np.tan(np.deg2rad(67.5))


def canny_edges(img: np.ndarray, high: float, low: float | None = None):
    """Canny-style edge map on unblurred Sobel gradients.

    Returns ``(edges, gx, gy)``; ``low`` defaults to ``high / 2``.
    """
    if low is None:
        low = high / 2.0
    gx, gy = sobel_gradients(img)
    mag = np.hypot(gx, gy)
    h, w = mag.shape
    # non-maximum suppression, evaluated only where the weak threshold passes
    padded = np.zeros((h + 2, w + 2), dtype=mag.dtype)
    padded[1:-1, 1:-1] = mag
    flat = padded.ravel()
    rr, cc = np.nonzero(mag >= low)
    idx = (rr + 1) * (w + 2) + (cc + 1)
    ax, ay = gx[rr, cc], gy[rr, cc]
    aax, aay = np.abs(ax), np.abs(ay)
    step = np.where(
        aay <= _TAN22 * aax,
        1,  # gradient along x: compare left/right
        np.where(aay >= _TAN67 * aax, w + 2, np.where(ax * ay > 0, w + 3, w + 1)),
    )
    c = flat[idx]
    keep = (c >= flat[idx + step]) & (c > flat[idx - step])
    rr, cc = rr[keep], cc[keep]
    weak = np.zeros((h, w), dtype=bool)
    weak[rr, cc] = True
    strong = np.zeros((h, w), dtype=bool)
    s_ok = mag[rr, cc] >= high
    strong[rr[s_ok], cc[s_ok]] = True
    labels, nlab = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    if nlab == 0:
        return weak, gx, gy
    has_strong = np.zeros(nlab + 1, dtype=bool)
    has_strong[labels[strong]] = True
    has_strong[0] = False
    return has_strong[labels], gx, gy


def hough_accumulator(edges, gx, gy, min_radius: int, max_radius: int) -> np.ndarray:
    """2-D centre accumulator: each edge pixel votes along its gradient line."""
    h, w = edges.shape
    ys, xs = np.nonzero(edges)
    acc = np.zeros(h * w, dtype=np.int32)
    if len(xs) == 0:
        return acc.reshape(h, w)
    gxe, gye = gx[ys, xs], gy[ys, xs]
    norm = np.hypot(gxe, gye)
    ux, uy = gxe / norm, gye / norm
    radii = np.arange(min_radius, max_radius + 1, dtype=np.float64)
    offs = np.concatenate([radii, -radii])
    cx = np.rint(xs[None, :] + offs[:, None] * ux[None, :]).astype(np.int64)
    cy = np.rint(ys[None, :] + offs[:, None] * uy[None, :]).astype(np.int64)
    ok = (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
    acc += np.bincount((cy[ok] * w + cx[ok]), minlength=h * w).astype(np.int32)
    return acc.reshape(h, w)


def _estimate_radius(ex, ey, cx, cy, min_r, max_r):
    """Mode of edge-pixel distances in [min_r, max_r], refined by a local mean."""
    d = np.hypot(ex - cx, ey - cy)
    d = d[(d >= min_r - 0.5) & (d < max_r + 0.5)]
    if d.size == 0:
        return None
    bins = np.rint(d).astype(int)
    counts = np.bincount(bins - min_r, minlength=max_r - min_r + 1)
    mode = min_r + int(np.argmax(counts))
    near = d[np.abs(d - mode) <= 1.0]
    return float(np.clip(near.mean(), min_r, max_r))


def detect_circles(frame: Frame, params: HcdParams | None = None) -> ParticleSet:
    params = params or HcdParams()
    img = frame.pixels
    h, w = img.shape
    edges, gx, gy = canny_edges(img, params.param_1)
    acc = hough_accumulator(edges, gx, gy, params.min_radius, params.max_radius)
    # plateau-tolerant score: votes landing within one cell of the centre
    score = ndimage.correlate(acc, np.ones((3, 3), dtype=acc.dtype), mode="constant")
    peaks = (score >= params.param_2) & (score == ndimage.maximum_filter(score, size=3, mode="constant"))
    py, px = np.nonzero(peaks)
    if len(px) == 0:
        return ParticleSet((), frame.frame_index)
    votes = score[py, px]

    # vote-weighted sub-pixel centre from the raw accumulator
    accp = np.pad(acc, 1).astype(np.float64)
    dy, dx = np.mgrid[-1:2, -1:2]
    tot = np.zeros(len(px))
    sx = np.zeros(len(px))
    sy = np.zeros(len(px))
    for oy, ox in zip(dy.ravel(), dx.ravel()):
        v = accp[py + 1 + oy, px + 1 + ox]
        tot += v
        sx += v * ox
        sy += v * oy
    fx = px + 0.5 + sx / tot
    fy = py + 0.5 + sy / tot

    order = np.lexsort((fy, fx, -votes))
    min_d = float(params.min_center_distance)
    cell = min_d
    grid: dict[tuple[int, int], list[tuple[float, float]]] = {}
    accepted = []
    for i in order:
        x, y = fx[i], fy[i]
        gxi, gyi = int(x // cell), int(y // cell)
        clash = False
        for ix in (gxi - 1, gxi, gxi + 1):
            for iy in (gyi - 1, gyi, gyi + 1):
                for qx, qy in grid.get((ix, iy), ()):
                    if (qx - x) ** 2 + (qy - y) ** 2 < min_d * min_d:
                        clash = True
                        break
                if clash:
                    break
            if clash:
                break
        if clash:
            continue
        grid.setdefault((gxi, gyi), []).append((x, y))
        accepted.append(i)

    ey, ex = np.nonzero(edges)
    ex = ex + 0.5
    ey = ey + 0.5
    particles = []
    for i in accepted:
        x, y = fx[i], fy[i]
        sel = (np.abs(ex - x) <= params.max_radius + 1) & (np.abs(ey - y) <= params.max_radius + 1)
        r = _estimate_radius(ex[sel], ey[sel], x, y, params.min_radius, params.max_radius)
        if r is None:
            continue
        x = float(np.clip(x, 0.0, w))
        y = float(np.clip(y, 0.0, h))
        particles.append(Particle(x, y, r, int(votes[i])))
    return ParticleSet(tuple(particles), frame.frame_index)


def detect_circles_in_columns(frame: Frame, params: HcdParams, x_min: float, x_max: float) -> ParticleSet:
    """Run detection on a column band only; centres are reported in full-frame coordinates."""
    c0 = max(int(np.floor(x_min)), 0)
    c1 = min(int(np.ceil(x_max)), frame.width)
    if c1 - c0 < 3:
        return ParticleSet((), frame.frame_index)
    crop = Frame(frame.pixels[:, c0:c1], frame.frame_index, frame.timestamp)
    found = detect_circles(crop, params)
    shifted = tuple(Particle(p.x + c0, p.y, p.radius, p.vote_score) for p in found)
    return ParticleSet(shifted, frame.frame_index)


def column_profile(frame: Frame) -> np.ndarray:
    return frame.pixels.mean(axis=0)


def detect_observation_window(
    frame: Frame, min_contrast: float = 10.0, gap_is_dark: bool = True
) -> ObservationWindow:
    """Locate the inner electrode edges bounding the gap nearest the frame midline.

    Edges are the strongest steps of the column-mean profile; each is placed
    at the gradient-weighted centroid of its step, in raster coordinates.
    """
    prof = column_profile(frame)
    g = np.diff(prof)  # g[i] is the step at boundary x = i + 1
    if g.size == 0:
        raise ObservationWindowError("frame too narrow")
    a = np.abs(g)
    peak = a.max()
    if peak < min_contrast:
        raise ObservationWindowError("no strong vertical transitions found")
    idx, _ = find_peaks(np.concatenate([[0.0], a, [0.0]]), height=max(min_contrast, 0.3 * peak), distance=3)
    idx = idx - 1
    transitions = []
    for i in idx:
        sign = np.sign(g[i])
        lo, hi = max(i - 2, 0), min(i + 3, g.size)
        seg = np.arange(lo, hi)
        wts = np.where(np.sign(g[seg]) == sign, a[seg], 0.0)
        transitions.append((float(np.sum((seg + 1) * wts) / np.sum(wts)), sign))
    if len(transitions) < 2:
        raise ObservationWindowError(f"need two vertical transitions, found {len(transitions)}")

    first, second = (-1.0, 1.0) if gap_is_dark else (1.0, -1.0)
    pairs = [
        (t0, t1)
        for (t0, s0), (t1, s1) in zip(transitions, transitions[1:])
        if s0 == first and s1 == second
    ]
    if not pairs:
        raise ObservationWindowError("no electrode pair bounds a gap")
    mid = frame.width / 2.0

    def badness(p):
        inside = p[0] <= mid <= p[1]
        return (not inside, abs(0.5 * (p[0] + p[1]) - mid))

    left, right = min(pairs, key=badness)
    return ObservationWindow(left, right)


def filter_to_window(particles: ParticleSet, window: ObservationWindow) -> ParticleSet:
    kept = tuple(p for p in particles if window.left_edge_x <= p.x <= window.right_edge_x)
    return ParticleSet(kept, particles.frame_index)


def match_detections(detected: np.ndarray, truth: np.ndarray, tol: float) -> int:
    """Greedy one-to-one matching by distance; returns the number of matches."""
    return len(match_pairs(detected, truth, tol))


def match_pairs(detected: np.ndarray, truth: np.ndarray, tol: float) -> list[tuple[int, int]]:
    """Greedy one-to-one (detection, truth) pairs, closest first, within ``tol``."""
    detected = np.asarray(detected, dtype=float).reshape(-1, 2)
    truth = np.asarray(truth, dtype=float).reshape(-1, 2)
    if len(detected) == 0 or len(truth) == 0:
        return []
    d = np.hypot(detected[:, None, 0] - truth[None, :, 0], detected[:, None, 1] - truth[None, :, 1])
    ii, jj = np.nonzero(d <= tol)
    order = np.argsort(d[ii, jj], kind="stable")
    used_d, used_t = set(), set()
    pairs = []
    for k in order:
        i, j = int(ii[k]), int(jj[k])
        if i in used_d or j in used_t:
            continue
        used_d.add(i)
        used_t.add(j)
        pairs.append((i, j))
    return pairs
