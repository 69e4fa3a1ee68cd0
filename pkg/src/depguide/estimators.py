"""scikit-learn style wrappers so the detector and trend classifier compose with pipelines."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_frames, check_windows
from .trend import AnalysisConfig, Label, classify, fit_values
from .vision import (
    HcdParams,
    ObservationWindow,
    ParticleSet,
    detect_circles,
    detect_circles_in_columns,
    detect_observation_window,
    filter_to_window,
)


class ParticleFeatureExtractor(TransformerMixin, BaseEstimator):
    """Frames -> mean absolute distance of detected beads to the gap midline.

    ``fit`` locates the observation window on the first frame and freezes it.
    ``transform`` returns one value per frame, NaN where nothing was detected.

    Parameters
    ----------
    param_1, param_2, min_radius, max_radius, min_center_distance
        Hough detector tunables, see :class:`~depguide.vision.HcdParams`.
    window : ObservationWindow, optional
        Use this window instead of detecting one during ``fit``.
    roi_margin : float, optional
        If set, detection only runs on the columns within this many pixels of
        the observation window; only the in-window set is then meaningful.
    """

    def __init__(
        self,
        param_1=400.0,
        param_2=95.0,
        min_radius=4,
        max_radius=9,
        min_center_distance=None,
        window=None,
        roi_margin=None,
    ):
        self.param_1 = param_1
        self.param_2 = param_2
        self.min_radius = min_radius
        self.max_radius = max_radius
        self.min_center_distance = min_center_distance
        self.window = window
        self.roi_margin = roi_margin

    @property
    def hcd_params(self) -> HcdParams:
        return HcdParams(
            param_1=self.param_1,
            param_2=self.param_2,
            min_radius=self.min_radius,
            max_radius=self.max_radius,
            min_center_distance=self.min_center_distance,
        )

    def fit(self, X, y=None):
        frames = check_frames(X)
        self.hcd_params_ = self.hcd_params
        if self.window is not None:
            if not isinstance(self.window, ObservationWindow):
                raise TypeError("window must be an ObservationWindow")
            self.window_ = self.window
        else:
            self.window_ = detect_observation_window(frames[0])
        self.reference_x_ = self.window_.reference_x
        return self

    def detect(self, frame) -> tuple[ParticleSet, ParticleSet]:
        """All detections and the subset inside the observation window."""
        check_is_fitted(self, "window_")
        if self.roi_margin is None:
            found = detect_circles(frame, self.hcd_params_)
        else:
            found = detect_circles_in_columns(
                frame,
                self.hcd_params_,
                self.window_.left_edge_x - self.roi_margin,
                self.window_.right_edge_x + self.roi_margin,
            )
        return found, filter_to_window(found, self.window_)

    def transform(self, X):
        check_is_fitted(self, "window_")
        frames = check_frames(X)
        out = np.full(len(frames), np.nan)
        for i, frame in enumerate(frames):
            _, inside = self.detect(frame)
            if len(inside):
                out[i] = float(np.mean(np.abs(inside.xs - self.reference_x_)))
        return out


class TrendClassifier(ClassifierMixin, BaseEstimator):
    """Labels windows of feature values by the slope of their smoothed least-squares line.

    Each row of ``X`` is one watching window, oldest sample first. Nothing is
    learnt from data; ``fit`` only validates and records the label set.
    """

    def __init__(self, smoothing_length=5, delta=0.08):
        self.smoothing_length = smoothing_length
        self.delta = delta

    def _config(self, n):
        return AnalysisConfig(k=max(n, 3, self.smoothing_length), smoothing_length=self.smoothing_length, delta=self.delta)

    def fit(self, X, y=None):
        X = check_windows(X)
        self._config(X.shape[1])
        self.classes_ = np.array([l.value for l in (Label.NEGATIVE_DEP, Label.NO_DEP, Label.POSITIVE_DEP)])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        """Fitted slope b for every window."""
        check_is_fitted(self, "classes_")
        X = check_windows(X)
        cfg = self._config(X.shape[1])
        return np.array([fit_values(row, cfg).slope for row in X])

    def predict(self, X):
        return np.array([classify(b, self.delta).value for b in self.decision_function(X)])
