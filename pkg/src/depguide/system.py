"""The simulated closed loop: testbed -> camera -> analysis -> controller -> generator."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import siggen
from .config import DEFAULT_SCHEDULE
from .control import (
    CrossoverResult,
    FeedbackController,
    FrequencyBandMap,
    BandEntry,
    SamplingConfig,
    StepResult,
    TickRecord,
    find_crossover,
)
from .estimators import ParticleFeatureExtractor
from .render import Frame, RenderParams, render
from .testbed import DriftModel, TestbedGeometry, TestbedState, drift_velocity, seed_beads, step
from .trend import AnalysisConfig, Label, classify
from .vision import HcdParams, match_pairs

# wide enough that beads straddling a window edge are still seen whole
ROI_MARGIN_PX = 24.0
PROBE_TICKS = 120


@dataclass(frozen=True)
class Testbench:
    geometry: TestbedGeometry = field(default_factory=TestbedGeometry)
    drift: DriftModel = field(default_factory=DriftModel)
    render: RenderParams = field(default_factory=RenderParams)
    hcd: HcdParams = field(default_factory=HcdParams)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    n_beads: int = 100
    seed: int = 0
    match_tolerance_px: float = 3.0

    __test__ = False

    def initial_state(self) -> TestbedState:
        return seed_beads(self.geometry, self.n_beads, self.seed)

    def drift_model(self) -> DriftModel:
        # the noise stream follows the run seed
        return DriftModel(
            crossover_freq=self.drift.crossover_freq,
            max_speed=self.drift.max_speed,
            diffusion_sigma=self.drift.diffusion_sigma,
            rng_seed=self.seed,
        )

    def expected_label(self, f: float) -> Label:
        """Regime the simulator's drift law should produce, in feature units (px/frame)."""
        v_px = drift_velocity(f, self.drift) / self.geometry.pixel_scale
        return classify(v_px, self.analysis.delta)

    def regime(self, f: float) -> Label:
        """Sign of the simulated drift alone, with no dead band."""
        v = drift_velocity(f, self.drift)
        if v == 0:
            return Label.NO_DEP
        return Label.POSITIVE_DEP if v > 0 else Label.NEGATIVE_DEP

    def camera(self, state: TestbedState) -> Frame:
        return render(state, self.geometry, self.render, self.seed)


@dataclass
class RunRecord:
    tick: TickRecord
    n_visible: int
    n_detected: int | None
    recall: float
    precision: float


@dataclass
class ScheduleResult:
    steps: list[StepResult]
    band_map: FrequencyBandMap
    log: list[RunRecord]
    cycles_completed: int
    frames_processed: int
    pipeline_failures: int
    transcript: list[bytes]

    @property
    def labels(self) -> list[Label]:
        return [s.label for s in self.steps]


def run_schedule(
    frequencies: Sequence[float],
    bench: Testbench,
    max_frames: int | None = None,
    frame_sink: Callable[[Frame, TestbedState], None] | None = None,
    state: TestbedState | None = None,
    score_detector: bool = True,
) -> ScheduleResult:
    """Apply each frequency in turn through the full simulated loop.

    With ``score_detector`` off, detection is restricted to the columns around
    the observation window (much faster) and recall/precision are left blank.
    """
    if len(frequencies) == 0:
        raise ValueError("frequency schedule must not be empty")
    if len(set(frequencies)) != len(frequencies):
        raise ValueError("frequency schedule must not repeat a frequency")
    if max_frames is None:
        s = bench.sampling
        per_step = max(s.settle_timeout, s.min_step_ticks, bench.analysis.k) + s.min_step_ticks
        max_frames = (len(frequencies) * per_step + 1) * s.sampling_rate

    state = state if state is not None else bench.initial_state()
    model = bench.drift_model()
    generator = siggen.SimulatedGenerator()
    records: list[RunRecord] = []
    if max_frames <= 0:
        return ScheduleResult([], FrequencyBandMap(), records, 0, 0, 0, [])

    first = bench.camera(state)
    roi = None if score_detector else ROI_MARGIN_PX
    extractor = ParticleFeatureExtractor(**_hcd_kwargs(bench.hcd), roi_margin=roi).fit([first])
    last_found = {}

    def observe(frame):
        found, inside = extractor.detect(frame)
        last_found["set"] = found
        return inside, extractor.reference_x_

    controller = FeedbackController(
        observe,
        list(frequencies),
        analysis=bench.analysis,
        sampling=bench.sampling,
        expected_label=bench.expected_label,
        initial_frequency=generator.state.frequency,
        initial_voltage=generator.state.voltage,
    )
    generator.send(siggen.SignalCommand(siggen.CommandKind.OUTPUT_ON))

    frames = 0
    frame = first
    while frames < max_frames and not controller.finished:
        if frame_sink is not None:
            frame_sink(frame, state)
        last_found.clear()
        command, tick = controller.tick(frame)
        frames += 1
        if command is not None:
            generator.write(siggen.serialize(command))
        if tick is not None:
            found = last_found.get("set") if score_detector else None
            records.append(_score(tick, found, state, bench))
        g = generator.state
        state = step(state.with_signal(g.frequency, g.voltage, g.output_enabled), model, bench.geometry)
        frame = bench.camera(state)
    if not controller.finished:
        controller.finish()

    band = FrequencyBandMap(BandEntry(s.frequency, s.label, s.mean_b) for s in controller.steps)
    return ScheduleResult(
        steps=controller.steps,
        band_map=band,
        log=records,
        cycles_completed=controller.state.cycles_completed,
        frames_processed=frames,
        pipeline_failures=controller.pipeline_failures,
        transcript=list(generator.transcript),
    )


def _hcd_kwargs(h: HcdParams) -> dict:
    return dict(
        param_1=h.param_1,
        param_2=h.param_2,
        min_radius=h.min_radius,
        max_radius=h.max_radius,
        min_center_distance=h.min_center_distance,
    )


def visible_mask(truth_px: np.ndarray, bench: Testbench) -> np.ndarray:
    """Beads whose rendered disk lies wholly inside the frame."""
    r = bench.render.bead_render_radius_px
    g = bench.geometry
    x, y = truth_px[:, 0], truth_px[:, 1]
    return (x >= r) & (x <= g.width_px - r) & (y >= r) & (y <= g.height_px - r)


def _score(tick: TickRecord, found, state: TestbedState, bench: Testbench) -> RunRecord:
    truth = state.positions / bench.geometry.pixel_scale
    visible = visible_mask(truth, bench)
    n = int(visible.sum())
    if found is None:
        return RunRecord(tick, n, None, float("nan"), float("nan"))
    # a hit on a bead cut by the frame border still counts for precision
    pairs = match_pairs(found.centers, truth, bench.match_tolerance_px)
    hits_visible = sum(1 for _, j in pairs if visible[j])
    recall = hits_visible / n if n else float("nan")
    precision = len(pairs) / len(found) if len(found) else float("nan")
    return RunRecord(tick, n, len(found), recall, precision)


def probe_frequency(f: float, bench: Testbench, probe_ticks: int | None = None) -> tuple[Label, float | None]:
    """One single-step run from a freshly seeded testbed.

    ``probe_ticks`` overrides how long the step is watched; near the crossover
    the drift is weak and a longer look buys back the sign.
    """
    if probe_ticks is not None:
        bench = replace(bench, sampling=replace(bench.sampling, min_step_ticks=probe_ticks))
    result = run_schedule([f], bench, score_detector=False)
    s = result.steps[0] if result.steps else None
    if s is None:
        return Label.UNDETERMINED, None
    return s.label, s.mean_b


def search_crossover(
    bench: Testbench,
    f_low: float,
    f_high: float,
    tolerance_ratio: float = 1.2,
    max_probes: int | None = None,
    probe_ticks: int | None = PROBE_TICKS,
) -> CrossoverResult:
    return find_crossover(
        f_low, f_high, tolerance_ratio, lambda f: probe_frequency(f, bench, probe_ticks), max_probes
    )


# -- log output ---------------------------------------------------------------

LOG_HEADER = (
    "frame_index",
    "X_raw",
    "X_smoothed",
    "is_imputed",
    "b",
    "label",
    "mode",
    "current_frequency_hz",
    "command_issued",
    "n_in_window",
    "n_visible",
    "n_detected",
    "recall",
    "precision",
)


def fmt(value) -> str:
    """Shortest round-trip text for floats; empty for missing values."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(float(value))
    if isinstance(value, np.floating):
        return fmt(float(value))
    return str(value)


def log_rows(records: Sequence[RunRecord]):
    for r in records:
        t = r.tick
        yield [
            fmt(t.frame_index),
            fmt(t.x_raw),
            fmt(t.x_smoothed),
            fmt(t.is_imputed),
            fmt(t.slope),
            "" if t.label is None else t.label.value,
            t.mode.value,
            fmt(float(t.frequency)),
            fmt(t.command_issued),
            fmt(t.n_particles),
            fmt(r.n_visible),
            fmt(r.n_detected),
            fmt(r.recall),
            fmt(r.precision),
        ]


def write_log(records: Sequence[RunRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_HEADER)
        w.writerows(log_rows(records))


def log_text(records: Sequence[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_HEADER)
    w.writerows(log_rows(records))
    return buf.getvalue()


def summary_lines(result: ScheduleResult) -> list[str]:
    lines = [f"cycles_completed = {result.cycles_completed}", f"frames_processed = {result.frames_processed}"]
    for i, s in enumerate(result.steps, 1):
        r = s.response
        lines += [
            f"step.{i}.frequency_hz = {fmt(float(s.frequency))}",
            f"step.{i}.label = {s.label.value}",
            f"step.{i}.expected = {s.expected.value}",
            f"step.{i}.mean_b = {fmt(s.mean_b)}",
            f"step.{i}.particle_response = {fmt(r.particle_response)}",
            f"step.{i}.system_response = {fmt(r.system_response)}",
        ]
    recalls = [r.recall for r in result.log if not math.isnan(r.recall)]
    precs = [r.precision for r in result.log if not math.isnan(r.precision)]
    if recalls:
        lines.append(f"detector.mean_recall = {fmt(float(np.mean(recalls)))}")
    if precs:
        lines.append(f"detector.mean_precision = {fmt(float(np.mean(precs)))}")
    return lines
