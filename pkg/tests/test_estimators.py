import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import FunctionTransformer

from depguide.estimators import ParticleFeatureExtractor, TrendClassifier
from depguide.render import RenderParams, render
from depguide.testbed import TestbedGeometry, TestbedState, seed_beads
from depguide.trend import AnalysisConfig, Label, fit_values
from depguide.vision import ObservationWindow

GEO = TestbedGeometry()
CLEAN = RenderParams(noise_sigma=0.0)


def bead_frame(xs_um, index=0):
    pos = np.array([[x, 120.0 + 20 * i] for i, x in enumerate(xs_um)]).reshape(-1, 2)
    s = TestbedState(positions=pos, radii=np.full(len(pos), 1.5), frame_index=index)
    return render(s, GEO, CLEAN, seed=0)


def test_get_params_and_clone():
    ext = ParticleFeatureExtractor(param_2=50, roi_margin=10.0)
    assert ext.get_params()["param_2"] == 50
    c = clone(ext)
    assert c.get_params() == ext.get_params() and c is not ext
    clf = TrendClassifier(delta=0.2).set_params(smoothing_length=3)
    assert clone(clf).get_params() == {"delta": 0.2, "smoothing_length": 3}


def test_extractor_feature_and_nan():
    ext = ParticleFeatureExtractor().fit([bead_frame([])])
    assert abs(ext.reference_x_ - 320) <= 2
    # beads 10 um either side of the midline sit 20 px from the reference
    feats = ext.transform([bead_frame([150.0, 170.0]), bead_frame([])])
    assert abs(feats[0] - 20) <= 2
    assert np.isnan(feats[1])


def test_extractor_accepts_array_stack_and_fixed_window():
    f = bead_frame([155.0])
    w = ObservationWindow(250.0, 390.0)
    ext = ParticleFeatureExtractor(window=w).fit(f.pixels[None])
    assert ext.window_ is w
    assert ext.transform(np.stack([f.pixels, f.pixels])).shape == (2,)


def test_roi_detection_agrees_inside_window():
    geo_frame = render(seed_beads(GEO, 100, 2), GEO, RenderParams(), seed=2)
    full = ParticleFeatureExtractor().fit([geo_frame])
    roi = ParticleFeatureExtractor(roi_margin=24.0).fit([geo_frame])
    a, b = full.detect(geo_frame)[1], roi.detect(geo_frame)[1]
    assert len(a) == len(b) > 0
    # the crop offset is added back, so only the last float digits may differ
    assert np.allclose([(p.x, p.y, p.radius, p.vote_score) for p in a], [(p.x, p.y, p.radius, p.vote_score) for p in b])


def test_extractor_input_checks():
    with pytest.raises(NotFittedError):
        ParticleFeatureExtractor().transform([bead_frame([])])
    with pytest.raises(TypeError):
        ParticleFeatureExtractor().fit(["not a frame"])
    with pytest.raises(ValueError):
        ParticleFeatureExtractor().fit([])
    with pytest.raises(ValueError):
        ParticleFeatureExtractor().fit(np.zeros(5, np.uint8))
    with pytest.raises(TypeError):
        ParticleFeatureExtractor(window=(1, 2)).fit([bead_frame([])])


def test_classifier_predicts_by_slope():
    t = np.arange(30, dtype=float)
    X = np.stack([50 + 0.5 * t, 50 - 0.5 * t, np.full(30, 50.0)])
    clf = TrendClassifier().fit(X)
    assert clf.predict(X).tolist() == ["POSITIVE_DEP", "NEGATIVE_DEP", "NO_DEP"]
    assert list(clf.classes_) == ["NEGATIVE_DEP", "NO_DEP", "POSITIVE_DEP"]
    assert clf.n_features_in_ == 30


def test_decision_function_matches_fit_values():
    rng = np.random.default_rng(1)
    X = rng.uniform(0, 100, (6, 12))
    clf = TrendClassifier(smoothing_length=3).fit(X)
    want = [fit_values(row, AnalysisConfig(k=12, smoothing_length=3)).slope for row in X]
    assert np.allclose(clf.decision_function(X), want, rtol=0, atol=1e-12)


def test_classifier_input_checks():
    with pytest.raises(NotFittedError):
        TrendClassifier().predict([[1.0, 2.0, 3.0]])
    clf = TrendClassifier().fit([[1.0, 2.0, 3.0]])
    with pytest.raises(ValueError):
        clf.predict([[1.0, np.nan, 3.0]])
    with pytest.raises(ValueError):
        clf.predict([[1.0]])
    with pytest.raises(ValueError):
        TrendClassifier(smoothing_length=4).fit([[1.0, 2.0, 3.0, 4.0]])


def test_pipeline_composition():
    t = np.arange(10, dtype=float)
    windows = np.stack([10 + t, 10 - 0.5 * t])
    pipe = make_pipeline(FunctionTransformer(lambda X: X * 2.0), TrendClassifier(delta=0.5))
    assert pipe.fit(windows).predict(windows).tolist() == [Label.POSITIVE_DEP.value, Label.NEGATIVE_DEP.value]
