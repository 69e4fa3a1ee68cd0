"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numpy as np

from .render import Frame


def check_frames(X) -> list[Frame]:
    """Accept a Frame, a sequence of Frames, or a (n, h, w) uint8 stack."""
    if isinstance(X, Frame):
        return [X]
    if isinstance(X, np.ndarray):
        if X.ndim == 2:
            X = X[None]
        if X.ndim != 3:
            raise ValueError(f"expected a (n_frames, height, width) array, got shape {X.shape}")
        return [Frame(np.asarray(img), frame_index=i, timestamp=i) for i, img in enumerate(X)]
    frames = list(X)
    if not frames:
        raise ValueError("need at least one frame")
    for f in frames:
        if not isinstance(f, Frame):
            raise TypeError(f"expected Frame, got {type(f).__name__}")
    return frames


def check_windows(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D array of windows, got shape {X.shape}")
    if X.shape[1] < 2:
        raise ValueError("each window needs at least 2 samples")
    if not np.all(np.isfinite(X)):
        raise ValueError("windows must not contain NaN or inf; impute missing values first")
    return X
