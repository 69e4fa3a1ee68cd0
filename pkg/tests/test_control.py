import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from depguide.control import (
    BandEntry,
    CommandRecord,
    CrossoverPreconditionError,
    FeedbackController,
    FrequencyBandMap,
    Mode,
    SamplingConfig,
    bisection_probe_bound,
    find_crossover,
    measure_response,
)
from depguide.render import Frame
from depguide.siggen import CommandKind
from depguide.trend import AnalysisConfig, Label
from depguide.vision import Particle, ParticleSet

REF = 50.0
ANALYSIS = AnalysisConfig(k=5, smoothing_length=1, delta=0.1)
SAMPLING = SamplingConfig(sampling_rate=1, settle_timeout=8, min_step_ticks=10)


def frame(t):
    return Frame(np.zeros((2, 2), np.uint8), frame_index=t, timestamp=t)


class Scripted:
    """Feature source: ``fn(t, frequency)`` gives X_t, None for an empty frame, or raises."""

    def __init__(self, fn):
        self.fn = fn
        self.frequency = None

    def __call__(self, f):
        x = self.fn(f.frame_index, self.frequency)
        if x is None:
            return ParticleSet((), f.frame_index), REF
        return ParticleSet((Particle(REF + x, 1.0, 5.0, 10),), f.frame_index), REF


def sign_rule(fc=1e5):
    return lambda f: Label.POSITIVE_DEP if f < fc else Label.NEGATIVE_DEP


def drive(ctrl, src, n, m=1):
    """Run the controller for n frames, feeding the commanded frequency back to the source."""
    out = []
    for t in range(n):
        cmd, rec = ctrl.tick(frame(t))
        if cmd is not None:
            src.frequency = cmd.frequency
        out.append((t, cmd, rec))
        if ctrl.finished:
            break
    return out


def ramp_source(speed=1.0, fc=1e5):
    """X rises when f < fc and falls otherwise, with a persistent state."""
    state = {"x": 20.0, "t": -1}

    def fn(t, f):
        if f is not None and t != state["t"]:
            state["x"] += speed if f < fc else -speed
        state["t"] = t
        return state["x"]

    return Scripted(fn)


def test_first_tick_issues_the_first_command():
    src = ramp_source()
    ctrl = FeedbackController(src, [1e3, 1e6], ANALYSIS, SAMPLING, sign_rule())
    cmd, rec = ctrl.tick(frame(0))
    assert cmd.kind is CommandKind.SET_FREQUENCY and cmd.frequency == 1e3
    assert ctrl.state.mode is Mode.SETTLE and rec.command_issued
    assert ctrl.state.cycles_completed == 1


def test_off_grid_frames_are_ignored():
    src = ramp_source()
    ctrl = FeedbackController(src, [1e3], ANALYSIS, SamplingConfig(sampling_rate=3, settle_timeout=8), sign_rule())
    ctrl.tick(frame(0))
    before = (ctrl.state.mode, len(ctrl.log), len(ctrl.window))
    assert ctrl.tick(frame(1)) == (None, None)
    assert ctrl.tick(frame(2)) == (None, None)
    assert (ctrl.state.mode, len(ctrl.log), len(ctrl.window)) == before


def test_schedule_runs_to_completion():
    src = ramp_source()
    sched = [1e3, 2e3, 4e6, 2e6]
    ctrl = FeedbackController(src, sched, ANALYSIS, SAMPLING, sign_rule())
    drive(ctrl, src, 500)
    assert ctrl.finished
    assert ctrl.state.cycles_completed == len(sched)
    assert [s.label for s in ctrl.steps] == [Label.POSITIVE_DEP] * 2 + [Label.NEGATIVE_DEP] * 2
    assert all(s.settled for s in ctrl.steps)


def test_no_command_while_settling():
    src = ramp_source()
    ctrl = FeedbackController(src, [1e3, 4e6, 2e3, 2e6], ANALYSIS, SAMPLING, sign_rule())
    mode_before = Mode.MONITOR
    for t, cmd, rec in drive(ctrl, src, 500):
        if cmd is not None:
            assert mode_before is Mode.MONITOR
        if rec is not None:
            mode_before = rec.mode


def test_settle_timeout_leaves_responses_undefined():
    flat = Scripted(lambda t, f: 20.0)
    ctrl = FeedbackController(flat, [1e3], ANALYSIS, SAMPLING, sign_rule())
    recs = [rec for _, _, rec in drive(ctrl, flat, 50)]
    step = ctrl.steps[0]
    assert not step.settled
    assert step.response.particle_response is None and step.response.system_response is None
    # back in MONITOR exactly when the timeout fires
    assert recs[SAMPLING.settle_timeout].mode is Mode.MONITOR
    assert step.label is Label.NO_DEP


def test_pipeline_errors_count_as_missing():
    def fn(t, f):
        if t in (3, 4):
            raise RuntimeError("camera hiccup")
        return 20.0 + t

    src = Scripted(fn)
    ctrl = FeedbackController(src, [1e3], ANALYSIS, SAMPLING, sign_rule())
    recs = [rec for _, _, rec in drive(ctrl, src, 30)]
    assert ctrl.pipeline_failures == 2
    assert recs[3].pipeline_error and recs[3].is_imputed and recs[3].x_raw == recs[2].x_raw
    assert len(recs) > 5


def test_empty_frames_before_any_detection_skip_the_fit():
    src = Scripted(lambda t, f: None if t < 3 else 10.0 + t)
    ctrl = FeedbackController(src, [1e3], ANALYSIS, SAMPLING, sign_rule())
    recs = [rec for _, _, rec in drive(ctrl, src, 6)]
    assert all(r.x_raw is None and r.slope is None for r in recs[:3])
    assert recs[4].slope is not None


def test_all_missing_step_is_undetermined():
    src = Scripted(lambda t, f: None)
    ctrl = FeedbackController(src, [1e3], ANALYSIS, SAMPLING, sign_rule())
    drive(ctrl, src, 50)
    assert ctrl.steps[0].label is Label.UNDETERMINED and ctrl.steps[0].mean_b is None


@pytest.mark.parametrize("m", [1, 2, 3])
def test_instant_flip_particle_response_is_one_sampled_tick(m):
    src = ramp_source()
    sampling = SamplingConfig(sampling_rate=m, settle_timeout=8, min_step_ticks=10)
    ctrl = FeedbackController(src, [1e3, 4e6], ANALYSIS, sampling, sign_rule())
    drive(ctrl, src, 400)
    for s in ctrl.steps:
        assert s.response.particle_response == m
        assert s.response.system_response >= s.response.particle_response


def test_measure_response_matches_online_tracking():
    src = ramp_source(speed=0.3)
    ctrl = FeedbackController(src, [1e3, 4e6, 2e3], ANALYSIS, SAMPLING, sign_rule())
    drive(ctrl, src, 400)
    cmds = ctrl.command_records()
    for i, (s, c) in enumerate(zip(ctrl.steps, cmds)):
        nxt = cmds[i + 1].frame_index if i + 1 < len(cmds) else None
        assert measure_response(ctrl.log, c, ANALYSIS, SAMPLING, nxt) == s.response


def test_measure_response_undefined_when_regime_never_shows():
    flat = Scripted(lambda t, f: 20.0)
    ctrl = FeedbackController(flat, [1e3], ANALYSIS, SAMPLING, sign_rule())
    drive(ctrl, flat, 40)
    r = measure_response(ctrl.log, CommandRecord(0, 1e3, Label.POSITIVE_DEP), ANALYSIS, SAMPLING)
    assert r.particle_response is None and r.system_response is None


def test_expected_bands_override_rule():
    sampling = SamplingConfig(settle_timeout=8, expected_bands=((0.0, 5e3, Label.NO_DEP),))
    ctrl = FeedbackController(ramp_source(), [1e3], ANALYSIS, sampling, sign_rule())
    assert ctrl.expected(1e3) is Label.NO_DEP
    assert ctrl.expected(1e4) is Label.POSITIVE_DEP


def test_controller_validation():
    with pytest.raises(ValueError):
        FeedbackController(ramp_source(), [1e3], AnalysisConfig(k=10), SamplingConfig(settle_timeout=10))
    with pytest.raises(ValueError):
        FeedbackController(ramp_source(), [], ANALYSIS, SAMPLING)
    with pytest.raises(ValueError):
        SamplingConfig(sampling_rate=0)


# -- band map ---------------------------------------------------------------


def test_band_map_ranges():
    bm = FrequencyBandMap(
        [
            BandEntry(4e6, Label.NEGATIVE_DEP, -0.3),
            BandEntry(1e4, Label.POSITIVE_DEP, 0.3),
            BandEntry(2e4, Label.POSITIVE_DEP, 0.2),
            BandEntry(5e5, Label.NO_DEP, 0.0),
            BandEntry(2e6, Label.NEGATIVE_DEP, -0.2),
        ]
    )
    assert [e.frequency for e in bm.entries] == [1e4, 2e4, 5e5, 2e6, 4e6]
    assert bm.attract_range == [(1e4, 2e4)]
    assert bm.neutral_range == [(5e5, 5e5)]
    assert bm.repel_range == [(2e6, 4e6)]
    with pytest.raises(ValueError):
        bm.add(BandEntry(1e4, Label.NO_DEP, 0.0))


@given(st.lists(st.floats(1.0, 1e8), min_size=1, max_size=20, unique=True), st.floats(1e3, 1e7))
def test_band_consistency_under_monotone_law(freqs, fc):
    rule = sign_rule(fc)
    bm = FrequencyBandMap(BandEntry(f, rule(f), None) for f in freqs)
    pos = [e.frequency for e in bm.entries if e.label is Label.POSITIVE_DEP]
    neg = [e.frequency for e in bm.entries if e.label is Label.NEGATIVE_DEP]
    if pos and neg:
        assert max(pos) < min(neg)
    assert len(bm.attract_range) <= 1 and len(bm.repel_range) <= 1


# -- crossover ----------------------------------------------------------------


def ideal_probe(fc, dead=0.0):
    calls = []

    def probe(f):
        calls.append(f)
        b = math.log(fc / f)
        if abs(b) <= dead:
            return Label.NO_DEP, b
        return (Label.POSITIVE_DEP if b > 0 else Label.NEGATIVE_DEP), b

    return probe, calls


@given(st.floats(40e3, 1e6), st.floats(1.05, 3.0), st.floats(0.0, 0.5))
def test_bisection_converges(fc, tol, dead):
    probe, calls = ideal_probe(fc, dead)
    r = find_crossover(20e3, 2e6, tol, probe)
    assert r.bracket[1] / r.bracket[0] <= tol
    assert 1 / tol <= r.estimate / fc <= tol
    assert len(calls) <= bisection_probe_bound(20e3, 2e6, tol) + 2
    assert len(calls) <= math.ceil(math.log(100) / math.log(tol))
    assert [p.frequency for p in r.probes] == calls


def test_crossover_example_bound():
    probe, calls = ideal_probe(5e5)
    r = find_crossover(20e3, 2e6, 1.2, probe)
    assert 5e5 / 1.2 <= r.estimate <= 5e5 * 1.2
    assert len(calls) <= 25


def test_bracket_within_tolerance_returns_midpoint():
    probe, calls = ideal_probe(5e5)
    r = find_crossover(20e3, 2e6, 100.0, probe)
    assert r.estimate == pytest.approx(math.sqrt(20e3 * 2e6))
    assert len(calls) == 1


def test_same_label_bracket_is_rejected():
    probe, _ = ideal_probe(5e6)
    with pytest.raises(CrossoverPreconditionError):
        find_crossover(20e3, 2e6, 1.2, probe)


def test_no_dep_probe_without_slope_is_returned():
    def probe(f):
        if f in (20e3, 2e6):
            return (Label.POSITIVE_DEP if f < 1e5 else Label.NEGATIVE_DEP), 1.0
        return Label.NO_DEP, 0.0

    r = find_crossover(20e3, 2e6, 1.2, probe)
    assert r.estimate == pytest.approx(2e5)
    assert len(r.probes) == 3


def test_crossover_argument_checks():
    probe, _ = ideal_probe(5e5)
    with pytest.raises(ValueError):
        find_crossover(2e6, 20e3, 1.2, probe)
    with pytest.raises(ValueError):
        find_crossover(20e3, 2e6, 1.0, probe)
