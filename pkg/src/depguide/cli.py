"""Command-line entry point: reproduce, crossover, detect, render-corpus.

Exit codes: 0 success, 1 expectation mismatch, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import config as cfgmod
from .control import CrossoverPreconditionError
from .render import PGMError, frame_filename, read_pgm, write_pgm
from .system import (
    fmt,
    run_schedule,
    search_crossover,
    summary_lines,
    write_log,
)
from .testbed import SNAPSHOT_HEADER
from .vision import HcdParams, detect_circles

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_CONFIG = 2
EXIT_IO = 3

DETECTIONS_HEADER = ("frame_index", "particle_id", "x_px", "y_px", "radius_px", "vote_score")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with one section per module")
    p.add_argument("--seed", help="shorthand for --run.seed")
    p.add_argument("--frames", help="frame budget, shorthand for --run.frames")
    p.add_argument("--out-dir", help="output directory, shorthand for --run.out_dir")
    p.add_argument("--emit-frames", action="store_true", default=None, help="also write frames/*.pgm")
    group = p.add_argument_group("per-field overrides")
    for path in cfgmod.field_paths():
        group.add_argument(f"--{path}", dest=path, metavar="VALUE")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depguide", description="Closed-loop DEP frequency survey on a simulated bench.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reproduce", help="run the four-frequency schedule end to end")
    _add_common(p)

    p = sub.add_parser("crossover", help="bisect for the attraction/repulsion crossover")
    _add_common(p)

    p = sub.add_parser("detect", help="run the circle detector over PGM files")
    _add_common(p)
    p.add_argument("inputs", nargs="*", help="PGM files or directories of them")
    p.add_argument("--output", help="CSV path (default: <out-dir>/detections.csv)")

    p = sub.add_parser("render-corpus", help="simulate the schedule and export frames plus ground truth")
    _add_common(p)
    return parser


def _overrides(args) -> dict[str, str]:
    out = {}
    for path in cfgmod.field_paths():
        v = getattr(args, path, None)
        if v is not None:
            out[path] = v
    if args.seed is not None:
        out["run.seed"] = args.seed
    if args.frames is not None:
        out["run.frames"] = args.frames
    if args.out_dir is not None:
        out["run.out_dir"] = args.out_dir
    if args.emit_frames:
        out["run.emit_frames"] = "true"
    return out


def _err(*lines: str) -> None:
    for line in lines:
        print(line, file=sys.stderr)


# -- subcommands --------------------------------------------------------------


def cmd_reproduce(cfg: cfgmod.RunConfig) -> int:
    bench = cfg.testbench()
    out = cfg.run.out_dir
    frames_dir = os.path.join(out, "frames")
    os.makedirs(out, exist_ok=True)
    if cfg.run.emit_frames:
        os.makedirs(frames_dir, exist_ok=True)

    def sink(frame, state):
        write_pgm(frame, os.path.join(frames_dir, frame_filename(frame.frame_index)))

    result = run_schedule(
        cfg.schedule.frequencies,
        bench,
        max_frames=cfg.run.frames,
        frame_sink=sink if cfg.run.emit_frames else None,
    )
    write_log(result.log, os.path.join(out, "analysis_log.csv"))

    failures = []
    if cfg.run.frames != 0:
        for i, f in enumerate(cfg.schedule.frequencies, 1):
            want = bench.regime(f).value
            got = result.steps[i - 1].label.value if i <= len(result.steps) else "INCOMPLETE"
            if got != want:
                failures.append(f"mismatch.step.{i} = frequency_hz={fmt(float(f))} expected={want} got={got}")
    lines = summary_lines(result)
    lines.append(f"status = {'mismatch' if failures else 'ok'}")
    lines += failures
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    if failures:
        _err("status = mismatch", *failures)
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_crossover(cfg: cfgmod.RunConfig) -> int:
    c = cfg.crossover
    try:
        result = search_crossover(
            cfg.testbench(), c.f_low, c.f_high, c.tolerance_ratio, c.max_probes, probe_ticks=c.probe_ticks
        )
    except CrossoverPreconditionError as exc:
        _err("status = precondition_failed", f"reason = {exc}")
        return EXIT_MISMATCH
    print("probe,frequency_hz,label,mean_b")
    for i, p in enumerate(result.probes, 1):
        print(f"{i},{fmt(float(p.frequency))},{p.label.value},{fmt(p.mean_b)}")
    lo, hi = result.bracket
    lines = [
        f"crossover.estimate_hz = {fmt(float(result.estimate))}",
        f"crossover.bracket_hz = {fmt(float(lo))} {fmt(float(hi))}",
        f"crossover.probes = {len(result.probes)}",
        f"sim.crossover_hz = {fmt(float(cfg.drift.crossover_freq))}",
    ]
    for i, p in enumerate(result.probes, 1):
        lines.append(f"probe.{i} = {fmt(float(p.frequency))} {p.label.value} {fmt(p.mean_b)}")
    print("\n".join(lines[:4]))
    os.makedirs(cfg.run.out_dir, exist_ok=True)
    with open(os.path.join(cfg.run.out_dir, "summary.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return EXIT_OK


def _collect_inputs(inputs) -> list[str]:
    paths = []
    for item in inputs:
        if os.path.isdir(item):
            names = sorted(n for n in os.listdir(item) if n.lower().endswith((".pgm", ".pnm")))
            paths += [os.path.join(item, n) for n in names]
        else:
            paths.append(item)
    return paths


def cmd_detect(cfg: cfgmod.RunConfig, inputs, output=None) -> int:
    params: HcdParams = cfg.hcd
    output = output or os.path.join(cfg.run.out_dir, "detections.csv")
    os.makedirs(os.path.dirname(output) or ".", exist_ok=True)
    bad = []
    with open(output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DETECTIONS_HEADER)
        for path in _collect_inputs(inputs):
            try:
                frame = read_pgm(path)
            except (OSError, PGMError) as exc:
                bad.append(f"unreadable = {path}: {exc}")
                continue
            for i, p in enumerate(detect_circles(frame, params)):
                w.writerow([frame.frame_index, i, fmt(p.x), fmt(p.y), fmt(p.radius), p.vote_score])
    if bad:
        _err(f"status = partial ({len(bad)} file(s) skipped)", *bad)
        return EXIT_IO
    return EXIT_OK


def cmd_render_corpus(cfg: cfgmod.RunConfig) -> int:
    out = cfg.run.out_dir
    frames_dir = os.path.join(out, "frames")
    os.makedirs(frames_dir, exist_ok=True)
    with open(os.path.join(out, "ground_truth.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SNAPSHOT_HEADER)

        def sink(frame, state):
            write_pgm(frame, os.path.join(frames_dir, frame_filename(frame.frame_index)))
            for i, (x, y) in enumerate(state.positions):
                w.writerow([state.frame_index, i, fmt(float(x)), fmt(float(y))])

        result = run_schedule(
            cfg.schedule.frequencies, cfg.testbench(), max_frames=cfg.run.frames, frame_sink=sink, score_detector=False
        )
    print(f"frames_written = {result.frames_processed}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = cfgmod.load_config(args.config, _overrides(args))
    except cfgmod.ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except OSError as exc:
        _err(f"cannot read config: {exc}")
        return EXIT_CONFIG
    try:
        if args.command == "reproduce":
            return cmd_reproduce(cfg)
        if args.command == "crossover":
            return cmd_crossover(cfg)
        if args.command == "detect":
            return cmd_detect(cfg, args.inputs, args.output)
        return cmd_render_corpus(cfg)
    except OSError as exc:
        _err(f"i/o error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
