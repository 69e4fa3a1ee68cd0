"""Closed-loop dielectrophoresis frequency survey on a simulated microelectrode bench."""

from .config import RunConfig, load_config
from .control import FeedbackController, FrequencyBandMap, find_crossover
from .estimators import ParticleFeatureExtractor, TrendClassifier
from .render import Frame, RenderParams, read_pgm, render, write_pgm
from .siggen import SignalCommand, SimulatedGenerator, parse, serialize
from .system import Testbench, run_schedule, search_crossover
from .testbed import DriftModel, TestbedGeometry, TestbedState, drift_velocity, seed_beads, step
from .trend import AnalysisConfig, Label, classify, fit_trend, least_squares_line
from .vision import HcdParams, detect_circles, detect_observation_window

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig",
    "DriftModel",
    "FeedbackController",
    "Frame",
    "FrequencyBandMap",
    "HcdParams",
    "Label",
    "ParticleFeatureExtractor",
    "RenderParams",
    "RunConfig",
    "SignalCommand",
    "SimulatedGenerator",
    "TestbedGeometry",
    "TestbedState",
    "Testbench",
    "TrendClassifier",
    "classify",
    "detect_circles",
    "detect_observation_window",
    "drift_velocity",
    "find_crossover",
    "fit_trend",
    "least_squares_line",
    "load_config",
    "parse",
    "read_pgm",
    "render",
    "run_schedule",
    "search_crossover",
    "seed_beads",
    "serialize",
    "step",
    "write_pgm",
]
