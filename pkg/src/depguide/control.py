"""Closed-loop controller: sampling, SETTLE handling, response timing, band map, crossover search."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .render import Frame
from .siggen import SignalCommand
from .trend import (
    AnalysisConfig,
    FeatureSample,
    Label,
    TrendResult,
    WatchWindow,
    classify,
    extract_feature,
    fit_trend,
    impute_missing,
    smooth,
    effective_smoothing,
)


class Mode(str, enum.Enum):
    MONITOR = "MONITOR"
    SETTLE = "SETTLE"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class SamplingConfig:
    sampling_rate: int = 1  # analyse every m-th frame
    settle_timeout: int = 90  # sampled ticks
    min_step_ticks: int = 60  # sampled ticks a step is observed before the next command
    # optional (f_low, f_high, label) bands; frequencies outside fall back to the caller's rule
    expected_bands: tuple[tuple[float, float, Label], ...] = ()

    def __post_init__(self):
        if self.sampling_rate < 1:
            raise ValueError("sampling_rate must be >= 1")
        if self.settle_timeout < 1:
            raise ValueError("settle_timeout must be >= 1")
        if self.min_step_ticks < 1:
            raise ValueError("min_step_ticks must be >= 1")

    def expected_from_bands(self, f: float) -> Label | None:
        for lo, hi, label in self.expected_bands:
            if lo <= f < hi:
                return Label(label)
        return None


@dataclass
class ControllerState:
    mode: Mode = Mode.MONITOR
    current_frequency: float = 1e3
    current_voltage: float = 1.0
    settle_entered_at: int | None = None
    last_command: SignalCommand | None = None
    cycles_completed: int = 0


@dataclass(frozen=True)
class ResponseTimes:
    particle_response: int | None = None
    system_response: int | None = None


@dataclass(frozen=True)
class TickRecord:
    frame_index: int
    x_raw: float | None
    x_smoothed: float | None
    is_imputed: bool
    slope: float | None
    label: Label | None
    mode: Mode
    frequency: float
    command_issued: bool
    n_particles: int
    pipeline_error: bool = False


@dataclass(frozen=True)
class CommandRecord:
    frame_index: int
    frequency: float
    expected: Label


@dataclass
class StepResult:
    frequency: float
    command_frame: int
    expected: Label
    label: Label = Label.UNDETERMINED
    mean_b: float | None = None
    n_fits: int = 0
    response: ResponseTimes = field(default_factory=ResponseTimes)
    settled: bool = False
    ticks: int = 0


# -- response detection -----------------------------------------------------


def _expected_sign(label: Label) -> int:
    return {Label.POSITIVE_DEP: 1, Label.NEGATIVE_DEP: -1}.get(label, 0)


def raw_trend_matches(frames: Sequence[int], values: Sequence[float], expected: Label, delta: float) -> bool:
    """Does the unsmoothed trend since the command already show the expected regime?"""
    if len(values) < 2:
        return False
    x = np.asarray(frames, dtype=float)
    y = np.asarray(values, dtype=float)
    dx = x - x.mean()
    b = float(np.dot(dx, y - y.mean()) / np.dot(dx, dx))
    sign = _expected_sign(expected)
    if sign == 0:
        return abs(b) <= delta
    return np.sign(b) == sign


def measure_response(
    log: Sequence[TickRecord],
    command: CommandRecord,
    analysis: AnalysisConfig,
    sampling: SamplingConfig,
    next_command_frame: int | None = None,
) -> ResponseTimes:
    """Particle and system response (in frames) to ``command``, read back from a run log.

    The raw trend is fitted on real samples from the command tick onward. The
    system response is the first classification matching the expected regime
    at or after the particle response. Both are undefined past the settle
    timeout or the next command; a regime the analysis never confirms leaves
    both undefined, matching the controller's timeout rule.
    """
    t0 = command.frame_index
    horizon = t0 + sampling.settle_timeout * sampling.sampling_rate
    if next_command_frame is not None:
        horizon = min(horizon, next_command_frame)
    frames, values = [], []
    particle = system = None
    for rec in log:
        if rec.frame_index < t0:
            continue
        if rec.frame_index > horizon:
            break
        if rec.x_raw is not None and not rec.is_imputed:
            frames.append(rec.frame_index)
            values.append(rec.x_raw)
        if rec.frame_index == t0:
            continue
        if particle is None and raw_trend_matches(frames, values, command.expected, analysis.delta):
            particle = rec.frame_index - t0
        if particle is not None and rec.label is command.expected:
            system = rec.frame_index - t0
            break
    if system is None:
        return ResponseTimes(None, None)
    return ResponseTimes(particle, system)


# -- controller -------------------------------------------------------------


class FeedbackController:
    """Single-owner control loop over a frame stream.

    ``extractor`` maps a frame to ``(particles_in_window, reference_x)`` or
    raises; ``expected_label`` gives the regime a frequency should produce.
    """

    def __init__(
        self,
        extractor: Callable[[Frame], tuple],
        schedule: Sequence[float],
        analysis: AnalysisConfig | None = None,
        sampling: SamplingConfig | None = None,
        expected_label: Callable[[float], Label] | None = None,
        initial_frequency: float = 1e3,
        initial_voltage: float = 1.0,
    ):
        self.analysis = analysis or AnalysisConfig()
        self.sampling = sampling or SamplingConfig()
        if self.sampling.settle_timeout <= self.analysis.k:
            raise ValueError("settle_timeout must exceed the window length k")
        if len(schedule) == 0:
            raise ValueError("schedule must not be empty")
        self.extractor = extractor
        self._pending = list(schedule)
        self._expected_rule = expected_label
        self.state = ControllerState(current_frequency=initial_frequency, current_voltage=initial_voltage)
        self.window = WatchWindow(self.analysis.k)
        self.steps: list[StepResult] = []
        self.log: list[TickRecord] = []
        self.finished = False
        self.pipeline_failures = 0
        self._step: StepResult | None = None
        self._step_bs: list[float] = []
        self._raw_frames: list[int] = []
        self._raw_values: list[float] = []

    def expected(self, f: float) -> Label:
        label = self.sampling.expected_from_bands(f)
        if label is None and self._expected_rule is not None:
            label = self._expected_rule(f)
        return label if label is not None else Label.UNDETERMINED

    # one sampled tick -------------------------------------------------------

    def tick(self, frame: Frame) -> tuple[SignalCommand | None, TickRecord | None]:
        if self.finished or frame.frame_index % self.sampling.sampling_rate:
            return None, None
        t = frame.frame_index
        sample, n_particles, failed = self._observe(frame)
        if sample is not None:
            self.window.push(sample)
        trend = fit_trend(self.window, self.analysis) if len(self.window) >= 2 else None

        step = self._step
        if step is not None:
            step.ticks += 1
            if sample is not None and not sample.is_imputed:
                self._raw_frames.append(t)
                self._raw_values.append(sample.value)
            if trend is not None and step.ticks >= self.analysis.k:
                self._step_bs.append(trend.slope)

        st = self.state
        if st.mode is Mode.SETTLE and step is not None:
            self._update_response(step, t, trend)
            if step.response.system_response is not None:
                step.settled = True
                st.mode = Mode.MONITOR
            elif step.ticks >= self.sampling.settle_timeout:
                step.response = ResponseTimes(None, None)
                st.mode = Mode.MONITOR

        command = None
        if st.mode is Mode.MONITOR:
            due = step is None or step.ticks >= max(self.sampling.min_step_ticks, self.analysis.k)
            if due:
                if step is not None:
                    self._close_step()
                command = self._next_command(t)

        record = TickRecord(
            frame_index=t,
            x_raw=None if sample is None else sample.value,
            x_smoothed=self._smoothed_tail(),
            is_imputed=bool(sample is not None and sample.is_imputed),
            slope=None if trend is None else trend.slope,
            label=None if trend is None else trend.label,
            mode=st.mode,
            frequency=st.current_frequency,
            command_issued=command is not None,
            n_particles=n_particles,
            pipeline_error=failed,
        )
        self.log.append(record)
        return command, record

    def finish(self) -> None:
        """Close the running step, e.g. when the frame budget runs out."""
        if self._step is not None:
            self._close_step()
        self.finished = True

    # internals --------------------------------------------------------------

    def _observe(self, frame: Frame):
        try:
            particles, ref = self.extractor(frame)
            sample = extract_feature(particles, ref)
            n = len(particles)
            failed = False
        except Exception:
            self.pipeline_failures += 1
            sample, n, failed = None, 0, True
        if sample is None:
            sample = impute_missing(self.window, frame.frame_index)
        return sample, n, failed

    def _smoothed_tail(self) -> float | None:
        n = len(self.window)
        if n == 0:
            return None
        vals = self.window.values()
        return float(smooth(vals, effective_smoothing(self.analysis.smoothing_length, n))[-1])

    def _update_response(self, step: StepResult, t: int, trend: TrendResult | None) -> None:
        particle, system = step.response.particle_response, step.response.system_response
        if particle is None and raw_trend_matches(
            self._raw_frames, self._raw_values, step.expected, self.analysis.delta
        ):
            particle = t - step.command_frame
        if particle is not None and system is None and trend is not None and trend.label is step.expected:
            system = t - step.command_frame
        step.response = ResponseTimes(particle, system)

    def _close_step(self) -> None:
        step = self._step
        if self._step_bs:
            step.mean_b = float(np.mean(self._step_bs))
            step.n_fits = len(self._step_bs)
            step.label = classify(step.mean_b, self.analysis.delta)
        self.steps.append(step)
        self._step = None

    def _next_command(self, t: int) -> SignalCommand | None:
        if not self._pending:
            self.finished = True
            return None
        f = float(self._pending.pop(0))
        command = SignalCommand.set_frequency(f)
        st = self.state
        st.current_frequency = f
        st.last_command = command
        st.mode = Mode.SETTLE
        st.settle_entered_at = t
        st.cycles_completed += 1
        self._step = StepResult(frequency=f, command_frame=t, expected=self.expected(f))
        self._step_bs = []
        # the raw post-command trend is anchored on the sample taken at the command tick
        self._raw_frames, self._raw_values = [], []
        tail = self.window.samples[-1] if len(self.window) else None
        if tail is not None and tail.frame_index == t and not tail.is_imputed:
            self._raw_frames.append(t)
            self._raw_values.append(tail.value)
        return command

    def command_records(self) -> list[CommandRecord]:
        return [CommandRecord(s.command_frame, s.frequency, s.expected) for s in self.steps]


# -- frequency bands ----------------------------------------------------------


@dataclass(frozen=True)
class BandEntry:
    frequency: float
    label: Label
    mean_b: float | None


class FrequencyBandMap:
    def __init__(self, entries: Sequence[BandEntry] = ()):
        self._entries: dict[float, BandEntry] = {}
        for e in entries:
            self.add(e)

    def add(self, entry: BandEntry) -> None:
        if entry.frequency in self._entries:
            raise ValueError(f"frequency {entry.frequency} already probed")
        self._entries[entry.frequency] = entry

    @property
    def entries(self) -> list[BandEntry]:
        return sorted(self._entries.values(), key=lambda e: e.frequency)

    def runs(self) -> list[tuple[Label, float, float]]:
        """Maximal runs of equally labelled, frequency-adjacent entries."""
        out: list[list] = []
        for e in self.entries:
            if out and out[-1][0] is e.label:
                out[-1][2] = e.frequency
            else:
                out.append([e.label, e.frequency, e.frequency])
        return [tuple(r) for r in out]

    def _ranges(self, label: Label) -> list[tuple[float, float]]:
        return [(lo, hi) for lab, lo, hi in self.runs() if lab is label]

    @property
    def attract_range(self):
        return self._ranges(Label.POSITIVE_DEP)

    @property
    def repel_range(self):
        return self._ranges(Label.NEGATIVE_DEP)

    @property
    def neutral_range(self):
        return self._ranges(Label.NO_DEP)

    def __len__(self):
        return len(self._entries)


# -- crossover search ---------------------------------------------------------


class CrossoverPreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class Probe:
    frequency: float
    label: Label
    mean_b: float | None


@dataclass
class CrossoverResult:
    estimate: float
    bracket: tuple[float, float]
    probes: list[Probe]


def bisection_probe_bound(f_low: float, f_high: float, tolerance_ratio: float) -> int:
    """Midpoint probes needed to shrink the log-bracket below ``tolerance_ratio``."""
    spans = math.log(f_high / f_low) / math.log(tolerance_ratio)
    return max(0, math.ceil(math.log2(spans) - 1e-12)) if spans > 1 else 0


def find_crossover(
    f_low: float,
    f_high: float,
    tolerance_ratio: float,
    probe: Callable[[float], tuple[Label, float | None]],
    max_probes: int | None = None,
) -> CrossoverResult:
    """Log-frequency bisection for the frequency where the drift label flips.

    ``probe(f)`` returns ``(label, mean_b)`` from a settled run at ``f``.
    """
    if not 0 < f_low < f_high:
        raise ValueError("need 0 < f_low < f_high")
    if not tolerance_ratio > 1:
        raise ValueError("tolerance_ratio must be > 1")
    if max_probes is None:
        max_probes = bisection_probe_bound(f_low, f_high, tolerance_ratio) + 2
    probes: list[Probe] = []

    def run(f):
        label, b = probe(f)
        probes.append(Probe(f, label, b))
        return label, b

    lo, hi = f_low, f_high
    if hi / lo <= tolerance_ratio:
        mid = math.sqrt(lo * hi)
        run(mid)
        return CrossoverResult(mid, (lo, hi), probes)

    lab_lo, _ = run(lo)
    lab_hi, _ = run(hi)
    polar = {Label.POSITIVE_DEP, Label.NEGATIVE_DEP}
    if lab_lo not in polar or lab_hi not in polar or lab_lo is lab_hi:
        raise CrossoverPreconditionError(
            f"bracket endpoints must carry opposite DEP labels, got {lab_lo} at {lo:g} Hz and {lab_hi} at {hi:g} Hz"
        )
    while hi / lo > tolerance_ratio and len(probes) < max_probes:
        mid = math.sqrt(lo * hi)
        label, b = run(mid)
        if label is Label.NO_DEP or label is Label.UNDETERMINED:
            if not b:  # no slope information at all: the probe sits on the crossover
                return CrossoverResult(mid, (lo, hi), probes)
            label = Label.POSITIVE_DEP if b > 0 else Label.NEGATIVE_DEP
        if label is lab_lo:
            lo = mid
        else:
            hi = mid
    return CrossoverResult(math.sqrt(lo * hi), (lo, hi), probes)
