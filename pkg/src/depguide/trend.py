"""Gap feature, watching window and linear trend classification."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .vision import ParticleSet


class Label(str, enum.Enum):
    NO_DEP = "NO_DEP"
    POSITIVE_DEP = "POSITIVE_DEP"
    NEGATIVE_DEP = "NEGATIVE_DEP"
    # only used for experiment steps that never produced a fit
    UNDETERMINED = "UNDETERMINED"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class FeatureSample:
    value: float
    frame_index: int
    is_imputed: bool = False

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError(f"feature value must be >= 0, got {self.value}")


@dataclass(frozen=True)
class AnalysisConfig:
    k: int = 30
    smoothing_length: int = 5
    delta: float = 0.08
    imputation: str = "carry_forward"

    def __post_init__(self):
        if self.k < 3:
            raise ValueError("k must be >= 3")
        L = self.smoothing_length
        if L < 1 or L % 2 == 0 or L > self.k:
            raise ValueError("smoothing_length must be odd with 1 <= L <= k")
        if not self.delta > 0:
            raise ValueError("delta must be > 0")
        if self.imputation != "carry_forward":
            raise ValueError(f"unknown imputation policy {self.imputation!r}")


@dataclass(frozen=True)
class TrendResult:
    slope: float
    intercept: float
    label: Label
    n_points: int


class InsufficientDataError(ValueError):
    pass


class WatchWindow:
    """FIFO of the last ``k`` feature samples."""

    def __init__(self, k: int):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self._samples: deque[FeatureSample] = deque(maxlen=k)
        self._last_real: FeatureSample | None = None

    def push(self, sample: FeatureSample) -> None:
        if self._samples and sample.frame_index <= self._samples[-1].frame_index:
            raise ValueError("frame_index must be strictly increasing")
        self._samples.append(sample)
        if not sample.is_imputed:
            self._last_real = sample

    @property
    def last_real(self) -> FeatureSample | None:
        """Most recent non-imputed sample ever pushed, even if already evicted."""
        return self._last_real

    @property
    def samples(self) -> list[FeatureSample]:
        return list(self._samples)

    def values(self) -> np.ndarray:
        return np.array([s.value for s in self._samples], dtype=float)

    def __len__(self):
        return len(self._samples)

    def __iter__(self):
        return iter(self._samples)


def extract_feature(particles: ParticleSet, r: float) -> FeatureSample | None:
    """Mean absolute x-distance of the particles to the reference line; None if empty."""
    if r < 0:
        raise ValueError("reference line must be >= 0")
    if len(particles) == 0:
        return None
    return FeatureSample(float(np.mean(np.abs(particles.xs - r))), particles.frame_index)


def impute_missing(window: WatchWindow, frame_index: int) -> FeatureSample | None:
    """Carry the last real value forward, or None when nothing real has been seen."""
    last = window.last_real
    if last is None:
        return None
    return FeatureSample(last.value, frame_index, is_imputed=True)


def smooth(values: Sequence[float], L: int) -> np.ndarray:
    """Centred moving average; the window shrinks symmetrically at the ends."""
    y = np.asarray(values, dtype=float)
    n = y.size
    if L < 1 or L % 2 == 0:
        raise ValueError(f"smoothing length must be a positive odd integer, got {L}")
    if L > n:
        raise ValueError(f"smoothing length {L} exceeds sequence length {n}")
    half = L // 2
    csum = np.concatenate([[0.0], np.cumsum(y)])
    i = np.arange(n)
    reach = np.minimum(np.minimum(i, n - 1 - i), half)
    return (csum[i + reach + 1] - csum[i - reach]) / (2 * reach + 1)


def least_squares_line(y: Sequence[float]) -> tuple[float, float]:
    """Slope and intercept of the least-squares line through (ordinal, y)."""
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < 2:
        raise InsufficientDataError(f"need at least 2 points, got {n}")
    x = np.arange(n, dtype=float)
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    b = float(np.dot(dx, y - ym) / np.dot(dx, dx))
    return b, float(ym - b * xm)


def classify(b: float, delta: float) -> Label:
    if not delta > 0:
        raise ValueError("delta must be > 0")
    if abs(b) <= delta:
        return Label.NO_DEP
    return Label.POSITIVE_DEP if b > 0 else Label.NEGATIVE_DEP


def effective_smoothing(L: int, n: int) -> int:
    """Largest odd length <= min(L, n); lets a part-filled window be fitted."""
    L = min(L, n)
    return L if L % 2 else L - 1


def fit_values(values: Sequence[float], config: AnalysisConfig) -> TrendResult:
    y = np.asarray(values, dtype=float)
    if y.size < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {y.size}")
    ys = smooth(y, effective_smoothing(config.smoothing_length, y.size))
    b, c = least_squares_line(ys)
    return TrendResult(b, c, classify(b, config.delta), int(y.size))


def fit_trend(window: WatchWindow | Iterable[FeatureSample], config: AnalysisConfig) -> TrendResult:
    values = [s.value for s in window]
    return fit_values(values, config)
