import math
from dataclasses import replace

import numpy as np
import pytest

from depguide.control import SamplingConfig
from depguide.render import RenderParams
from depguide.system import (
    LOG_HEADER,
    Testbench,
    fmt,
    log_text,
    probe_frequency,
    run_schedule,
    summary_lines,
    visible_mask,
    write_log,
)
from depguide.testbed import DriftModel, TestbedGeometry
from depguide.trend import AnalysisConfig, Label

# a small bench so the full loop runs in about a second
SMALL = Testbench(
    geometry=TestbedGeometry(fov_width=120, fov_height=90, gap_width=40, finger_width=40),
    drift=DriftModel(max_speed=0.4, diffusion_sigma=0.0),
    n_beads=25,
    analysis=AnalysisConfig(k=8, smoothing_length=3, delta=0.05),
    sampling=SamplingConfig(settle_timeout=16, min_step_ticks=12),
)


@pytest.fixture(scope="module")
def two_steps():
    return run_schedule([10e3, 4e6], SMALL)


def test_labels_follow_the_drift_sign(two_steps):
    assert two_steps.labels == [Label.POSITIVE_DEP, Label.NEGATIVE_DEP]
    assert two_steps.cycles_completed == 2
    assert [e.label for e in two_steps.band_map.entries] == [Label.POSITIVE_DEP, Label.NEGATIVE_DEP]


def test_transcript_is_the_wire_bytes(two_steps):
    assert two_steps.transcript == [b"OUTP ON\n", b"FREQ 10000\n", b"FREQ 4000000\n"]


def test_log_rows_cover_every_frame(two_steps):
    idx = [r.tick.frame_index for r in two_steps.log]
    assert idx == list(range(two_steps.frames_processed))
    assert sum(r.tick.command_issued for r in two_steps.log) == 2
    for r in two_steps.log:
        assert 0 <= r.recall <= 1 and 0 <= r.precision <= 1


def test_log_text_is_deterministic(two_steps):
    again = run_schedule([10e3, 4e6], SMALL)
    assert log_text(again.log) == log_text(two_steps.log)


def test_write_log_matches_log_text(two_steps, tmp_path):
    p = tmp_path / "log.csv"
    write_log(two_steps.log, p)
    text = p.read_text()
    assert text == log_text(two_steps.log)
    assert text.splitlines()[0] == ",".join(LOG_HEADER)


def test_static_beads_at_crossover_give_no_dep():
    bench = replace(SMALL, render=RenderParams(noise_sigma=0.0))
    r = run_schedule([500e3], bench)
    assert r.labels == [Label.NO_DEP]
    assert abs(r.steps[0].mean_b) < 1e-9


def test_frame_budget_truncates():
    r = run_schedule([10e3, 4e6], SMALL, max_frames=5)
    assert r.frames_processed == 5 and len(r.log) == 5
    assert r.cycles_completed == 1


def test_zero_frames():
    r = run_schedule([10e3], SMALL, max_frames=0)
    assert r.frames_processed == 0 and r.steps == [] and r.log == []


@pytest.mark.parametrize("sched", [[], [1e4, 1e4]])
def test_bad_schedules(sched):
    with pytest.raises(ValueError):
        run_schedule(sched, SMALL)


def test_frame_sink_sees_every_frame():
    seen = []
    run_schedule([10e3], SMALL, max_frames=7, frame_sink=lambda f, s: seen.append((f.frame_index, s.frame_index)))
    assert seen == [(i, i) for i in range(7)]


def test_unscored_run_leaves_detector_columns_blank():
    r = run_schedule([10e3], SMALL, max_frames=4, score_detector=False)
    assert all(x.n_detected is None and math.isnan(x.recall) for x in r.log)
    rows = log_text(r.log).splitlines()[1:]
    assert all(row.endswith(",,,") for row in rows)


def test_probe_frequency_returns_sign():
    label, b = probe_frequency(10e3, SMALL, probe_ticks=12)
    assert label is Label.POSITIVE_DEP and b > 0


def test_regime_and_expected_label():
    bench = Testbench()
    assert bench.regime(10e3) is Label.POSITIVE_DEP
    assert bench.regime(4e6) is Label.NEGATIVE_DEP
    assert bench.regime(500e3) is Label.NO_DEP
    # expected_label applies the dead band to the px/frame speed
    assert bench.expected_label(499e3) is Label.NO_DEP


def test_visible_mask_excludes_border_beads():
    truth = np.array([[3.0, 100.0], [320.0, 240.0], [637.0, 10.0]])
    assert visible_mask(truth, Testbench()).tolist() == [False, True, False]


def test_summary_lines(two_steps):
    lines = summary_lines(two_steps)
    assert lines[0] == "cycles_completed = 2"
    assert "step.1.label = POSITIVE_DEP" in lines
    assert "step.2.frequency_hz = 4000000.0" in lines
    assert any(l.startswith("detector.mean_recall = ") for l in lines)


def test_fmt():
    assert fmt(None) == "" and fmt(float("nan")) == ""
    assert fmt(True) == "1" and fmt(0.1) == "0.1"
    assert fmt(np.float64(2.5)) == "2.5" and fmt(7) == "7"
