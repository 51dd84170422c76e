"""``mufc``: check, run and trace stream programs, and reproduce the benchmark table.

Exit codes: 0 success, 1 rejected program / violated property / benchmark
mismatch, 2 usage, I/O, parse, type or runtime error, 3 degenerate weights.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, TextIO

from . import CORPUS
from .ast_parser import ParseError, ScopeError, parse
from .core_types import CoreTypeError, typecheck_core
from .dynamic_checker import CSV_COLUMNS, TraceRecorder
from .interpreter import (
    DegenerateWeights,
    InferConfig,
    default_input,
    input_from_json,
    output_json,
    run_program,
)
from .static_analysis import AnalysisError, analyze_program

OK, REJECTED, ERROR, DEGENERATE = 0, 1, 2, 3


@dataclass
class RunConfig:
    particles: int = 100
    steps: int | None = None
    seed: int = 0
    input: str | None = None
    up_budget: int = 10
    format: str = "json"
    particle_index: int = 0
    m_bound: int = 8
    k_bound: int = 8

    def __post_init__(self):
        if self.particles < 1:
            raise ValueError("--particles must be at least 1")
        if self.steps is not None and self.steps < 0:
            raise ValueError("--steps must be non-negative")
        if self.up_budget < 1:
            raise ValueError("--up-budget must be at least 1")


@dataclass(frozen=True)
class BenchmarkEntry:
    name: str
    file: str
    mc: bool
    up: bool
    actual_mc: bool
    actual_up: bool

    @property
    def bounded(self) -> bool:
        return self.mc and self.up

    @property
    def actual_bounded(self) -> bool:
        return self.actual_mc and self.actual_up


BENCHMARKS = [
    BenchmarkEntry("Kalman", "kalman.muf", True, True, True, True),
    BenchmarkEntry("Kalman Hold-First", "kalman_hold_first.muf", True, False, True, False),
    BenchmarkEntry("Gaussian Random Walk", "gaussian_random_walk.muf", False, True, False, True),
    BenchmarkEntry("Robot", "robot.muf", True, True, True, True),
    BenchmarkEntry("Coin", "coin.muf", True, True, True, True),
    BenchmarkEntry("Gaussian-Gaussian", "gaussian_gaussian.muf", True, True, True, True),
    BenchmarkEntry("Outlier", "outlier.muf", False, True, False, True),
    BenchmarkEntry("MTT", "mtt.muf", False, True, False, True),
    BenchmarkEntry("SLAM", "slam.muf", False, True, True, True),
]


class CliError(Exception):
    def __init__(self, msg: str, code: int = ERROR):
        super().__init__(msg)
        self.code = code


def _mark(b: bool) -> str:
    return "yes" if b else "no"


# ---------------------------------------------------------------------------
# Loading


def load(path: str | Path):
    try:
        src = Path(path).read_text()
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror or e}")
    try:
        prog = parse(src)
        typed = typecheck_core(prog)
    except (ParseError, ScopeError, CoreTypeError) as e:
        raise CliError(f"{path}: {e}")
    return prog, typed


def read_inputs(source: str | None, ty: Any, steps: int | None) -> list:
    """Step inputs from a JSONL file or an inline JSON array.

    Without ``--input`` every step gets a zero-like value; ``steps``
    defaults to 10 then. With inputs, ``steps`` defaults to their count and
    may not exceed it.
    """
    if source is None:
        n = 10 if steps is None else steps
        return [default_input(ty)] * n
    raw = _raw_inputs(source)
    if steps is not None:
        if steps > len(raw):
            raise CliError(f"--steps {steps} but the input has only {len(raw)} entries")
        raw = raw[:steps]
    try:
        return [input_from_json(x, ty) for x in raw]
    except ValueError as e:
        raise CliError(f"bad input: {e}")


def _raw_inputs(source: str) -> list:
    if source.lstrip().startswith("["):
        try:
            vals = json.loads(source)
        except json.JSONDecodeError as e:
            raise CliError(f"bad inline input: {e}")
        return list(vals)
    try:
        lines = Path(source).read_text().splitlines()
    except OSError as e:
        raise CliError(f"cannot read {source}: {e.strerror or e}")
    out = []
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise CliError(f"{source}:{i}: {e}")
    return out


# ---------------------------------------------------------------------------
# Commands


def cmd_check(file: str, cfg: RunConfig, out: TextIO) -> int:
    prog, typed = load(file)
    try:
        rep = analyze_program(prog, typed, cfg.up_budget)
    except AnalysisError as e:
        raise CliError(f"{file}: {e}")
    if cfg.format == "csv":
        w = csv.writer(out, lineterminator="\n")
        cols = ["site", "mc", "up", "bounded", "up_longest_path", "iterations_used", "mc_unconsumed"]
        w.writerow(cols)
        for s in rep.sites:
            js = s.to_json()
            js["mc_unconsumed"] = " ".join(js["mc_unconsumed"])
            w.writerow([js[c] for c in cols])
    else:
        json.dump(rep.to_json(), out, indent=2)
        out.write("\n")
    return OK if rep.accepted else REJECTED


def _execute(file: str, cfg: RunConfig, observer=None, record: bool = False) -> list:
    prog, typed = load(file)
    inputs = read_inputs(cfg.input, typed.main_sig().input, cfg.steps)
    icfg = InferConfig(particles=cfg.particles, seed=cfg.seed, record_trace=record)
    try:
        return run_program(prog, inputs, icfg, typed, observer)
    except DegenerateWeights as e:
        raise CliError(f"{file}: {e}", DEGENERATE)
    except IndexError as e:
        raise CliError(str(e))
    except (RuntimeError, ValueError, TypeError, ZeroDivisionError) as e:
        raise CliError(f"{file}: runtime error: {e}")


def cmd_run(file: str, cfg: RunConfig, out: TextIO) -> int:
    for o in _execute(file, cfg):
        out.write(json.dumps(output_json(o)) + "\n")
    return OK


def cmd_trace(file: str, cfg: RunConfig, out: TextIO, err: TextIO) -> int:
    rec = TraceRecorder(cfg.particle_index)
    _execute(file, cfg, rec, record=True)
    if cfg.format == "json":
        for m in rec.metrics:
            out.write(json.dumps(asdict(m)) + "\n")
    else:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for m in rec.metrics:
            w.writerow(m.row())
    hl = rec.high_level(cfg.m_bound, cfg.m_bound)
    ll = rec.low_level(cfg.k_bound)
    for label, v in (("high-level", hl), ("low-level", ll)):
        status = "holds" if v.holds else f"violated at step {v.step}: {v.reason}"
        err.write(f"# {label} bounded memory up to step {v.horizon}: {status}\n")
    return OK if hl.holds and ll.holds else REJECTED


def cmd_bench(corpus: str | Path, cfg: RunConfig, out: TextIO) -> int:
    corpus = Path(corpus)
    if not corpus.is_dir():
        raise CliError(f"corpus directory {corpus} not found")
    rows, bad = [], []
    for b in BENCHMARKS:
        prog, typed = load(corpus / b.file)
        try:
            (s,) = analyze_program(prog, typed, cfg.up_budget).sites
        except AnalysisError as e:
            raise CliError(f"{b.file}: {e}")
        match = (s.mc, s.up) == (b.mc, b.up)
        if not match:
            bad.append(b.name)
        rows.append({
            "benchmark": b.name,
            "mc": s.mc, "mc_expected": b.mc, "mc_actual": b.actual_mc,
            "up": s.up, "up_expected": b.up, "up_actual": b.actual_up,
            "bounded": s.bounded, "bounded_actual": b.actual_bounded,
            "iterations_used": s.iterations_used, "match": match,
        })
    if cfg.format == "json":
        json.dump({"rows": rows, "mismatches": bad}, out, indent=2)
        out.write("\n")
    elif cfg.format == "csv":
        w = csv.DictWriter(out, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    else:
        out.write(_table(rows))
        out.write(f"mismatches: {', '.join(bad)}\n" if bad else "all rows match\n")
    return OK if not bad else REJECTED


def _table(rows: list[dict]) -> str:
    head = ["benchmark", "mc", "(actual)", "up", "(actual)", "bounded", "(actual)", "iters", "match"]
    body = [[r["benchmark"], _mark(r["mc"]), _mark(r["mc_actual"]), _mark(r["up"]),
             _mark(r["up_actual"]), _mark(r["bounded"]), _mark(r["bounded_actual"]),
             str(r["iterations_used"]), _mark(r["match"])] for r in rows]
    widths = [max(len(x) for x in col) for col in zip(head, *body)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    return "\n".join(fmt.format(*r) for r in [head, *body]) + "\n"


# ---------------------------------------------------------------------------
# Entry point


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mufc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, fmt_choices, fmt_default):
        p.add_argument("--up-budget", type=int, default=10,
                       help="iterations allowed for the unseparated-paths check")
        p.add_argument("--format", choices=fmt_choices, default=fmt_default)

    def execution(p):
        p.add_argument("file")
        p.add_argument("--particles", type=int, default=100)
        p.add_argument("--steps", type=int)
        p.add_argument("--seed", type=int, help="defaults to $MUFC_SEED, then 0")
        p.add_argument("--input", help="JSONL file (one step input per line) or an inline JSON array")

    p = sub.add_parser("check", help="run the bounded-memory analysis")
    p.add_argument("file")
    common(p, ["json", "csv"], "json")

    p = sub.add_parser("run", help="run a program and print one JSON output per step")
    execution(p)
    common(p, ["json"], "json")

    p = sub.add_parser("trace", help="run with instrumentation and print per-step memory metrics")
    execution(p)
    common(p, ["csv", "json"], "csv")
    p.add_argument("--particle-index", type=int, default=0)
    p.add_argument("--m-bound", type=int, default=8,
                   help="bound used for the consumption and path checks in the summary")
    p.add_argument("--k-bound", type=int, default=8,
                   help="reachable nodes allowed per state variable in the summary")

    p = sub.add_parser("bench", help="reproduce the benchmark table")
    p.add_argument("--corpus", default=str(CORPUS))
    common(p, ["table", "json", "csv"], "table")
    return ap


def _seed(arg: int | None) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("MUFC_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise CliError(f"MUFC_SEED must be an integer, got {env!r}")


def main(argv: list[str] | None = None, out: TextIO | None = None, err: TextIO | None = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        return OK if e.code == 0 else ERROR
    try:
        kw: dict[str, Any] = {"up_budget": args.up_budget, "format": args.format}
        if args.cmd in ("run", "trace"):
            kw.update(particles=args.particles, steps=args.steps, seed=_seed(args.seed),
                      input=args.input)
        if args.cmd == "trace":
            kw.update(particle_index=args.particle_index, m_bound=args.m_bound,
                      k_bound=args.k_bound)
        try:
            cfg = RunConfig(**kw)
        except ValueError as e:
            raise CliError(str(e))
        if args.cmd == "check":
            return cmd_check(args.file, cfg, out)
        if args.cmd == "run":
            return cmd_run(args.file, cfg, out)
        if args.cmd == "trace":
            return cmd_trace(args.file, cfg, out, err)
        return cmd_bench(args.corpus, cfg, out)
    except CliError as e:
        err.write(f"mufc: {e}\n")
        return e.code


if __name__ == "__main__":
    sys.exit(main())
